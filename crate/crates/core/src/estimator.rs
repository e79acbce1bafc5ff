//! Watermark prediction from an attacked image.
//!
//! The estimate is the mean-removed residual scaled by the ratio of the
//! expected watermark power to the local image power. The watermark power is
//! the squared embedding strength, itself re-derived from the attacked image
//! with the same strength law the embedder used.

use ndarray::Array2;

use crate::embedder;
use crate::filters;

/// Flat-region guard for the local-variance divisor (squared luminance units).
const VARIANCE_FLOOR: f64 = 1.0;

/// Box-filter local mean with edge replication.
pub fn local_mean(src: &Array2<f64>, window: usize) -> Array2<f64> {
    filters::box_mean(src, window)
}

/// Box-filter local variance with edge replication.
pub fn local_variance(src: &Array2<f64>, window: usize) -> Array2<f64> {
    filters::box_mean_var(src, window).1
}

/// The predicted watermark field.
#[derive(Clone, Debug)]
pub struct EstimatedWatermark {
    data: Array2<f64>,
    window: usize,
}

impl EstimatedWatermark {
    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn window(&self) -> usize {
        self.window
    }
}

/// Minimum-MSE watermark estimate: `(J − μ) · σ²_w / σ²_j`, with the local
/// variance floored to keep flat regions finite. The same window is used for
/// the mean, the variance, and the strength so the three fields stay
/// consistent.
pub fn estimate_watermark(
    attacked_luma: &Array2<f64>,
    alpha: f64,
    window: usize,
) -> crate::Result<EstimatedWatermark> {
    let (mean, var) = filters::box_mean_var(attacked_luma, window);
    let strength = embedder::strength_field(attacked_luma, alpha, window)?;
    let mut data = Array2::zeros(attacked_luma.dim());
    for ((i, j), out) in data.indexed_iter_mut() {
        let gain = strength[[i, j]] * strength[[i, j]] / var[[i, j]].max(VARIANCE_FLOOR);
        *out = (attacked_luma[[i, j]] - mean[[i, j]]) * gain;
    }
    Ok(EstimatedWatermark { data, window })
}
