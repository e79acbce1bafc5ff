//! Luminance handling, adaptive embedding strength, additive embedding, and
//! fidelity measurement.

use ndarray::Array2;

use crate::codec::SymmetricWatermark;
use crate::error::{Error, Result};
use crate::filters;

/// Full-range BT.601 RGB → YCbCr. Inputs and outputs are in [0, 255].
pub fn rgb_to_luma(
    r: &Array2<f64>,
    g: &Array2<f64>,
    b: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let dim = r.dim();
    let mut y = Array2::zeros(dim);
    let mut cb = Array2::zeros(dim);
    let mut cr = Array2::zeros(dim);
    for ((i, j), yv) in y.indexed_iter_mut() {
        let (rv, gv, bv) = (r[[i, j]], g[[i, j]], b[[i, j]]);
        *yv = 0.299 * rv + 0.587 * gv + 0.114 * bv;
        cb[[i, j]] = 128.0 - 0.168736 * rv - 0.331264 * gv + 0.5 * bv;
        cr[[i, j]] = 128.0 + 0.5 * rv - 0.418688 * gv - 0.081312 * bv;
    }
    (y, cb, cr)
}

/// Inverse of [`rgb_to_luma`].
pub fn luma_to_rgb(
    y: &Array2<f64>,
    cb: &Array2<f64>,
    cr: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let dim = y.dim();
    let mut r = Array2::zeros(dim);
    let mut g = Array2::zeros(dim);
    let mut b = Array2::zeros(dim);
    for ((i, j), rv) in r.indexed_iter_mut() {
        let yv = y[[i, j]];
        let cbv = cb[[i, j]] - 128.0;
        let crv = cr[[i, j]] - 128.0;
        *rv = yv + 1.402 * crv;
        g[[i, j]] = yv - 0.344136 * cbv - 0.714136 * crv;
        b[[i, j]] = yv + 1.772 * cbv;
    }
    (r, g, b)
}

/// Piecewise strength law: the binary log of the local variance, floored at
/// the global strength `alpha`.
pub fn strength_from_variance(variance: f64, alpha: f64) -> f64 {
    let lg = variance.max(0.0).log2();
    if lg.is_nan() {
        alpha
    } else {
        lg.max(alpha)
    }
}

/// Per-pixel embedding strength from the local variance over an odd window.
pub fn strength_field(luma: &Array2<f64>, alpha: f64, window: usize) -> Result<Array2<f64>> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "strength window must be odd and >= 3, got {window}"
        )));
    }
    let (_, var) = filters::box_mean_var(luma, window);
    Ok(var.mapv(|v| strength_from_variance(v, alpha)))
}

/// Additive embedding: `out = luma + strength ∘ watermark`, clamped to
/// [0, 255].
pub fn embed(
    luma: &Array2<f64>,
    watermark: &SymmetricWatermark,
    strength: &Array2<f64>,
) -> Result<Array2<f64>> {
    if luma.dim() != watermark.dim() || luma.dim() != strength.dim() {
        return Err(Error::DimensionMismatch(format!(
            "luma {:?}, watermark {:?}, strength {:?}",
            luma.dim(),
            watermark.dim(),
            strength.dim()
        )));
    }
    let mut out = luma.clone();
    for ((i, j), v) in out.indexed_iter_mut() {
        *v = (*v + strength[[i, j]] * watermark.data()[[i, j]]).clamp(0.0, 255.0);
    }
    Ok(out)
}

/// Peak signal-to-noise ratio in dB for 8-bit data; +inf for identical inputs.
pub fn psnr(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let mse = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (255.0 * 255.0 / mse).log10())
    }
}
