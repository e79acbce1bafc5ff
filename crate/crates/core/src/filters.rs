//! Sliding-window statistics and interpolation shared by several stages.

use ndarray::Array2;

/// Box-filter mean and variance over a `window`×`window` neighborhood with
/// edge replication. Computed with summed-area tables, so the cost is
/// independent of the window size.
pub fn box_mean_var(src: &Array2<f64>, window: usize) -> (Array2<f64>, Array2<f64>) {
    assert!(window >= 3 && window % 2 == 1, "window must be odd and >= 3");
    let (h, w) = src.dim();
    let r = window / 2;
    let (ph, pw) = (h + 2 * r, w + 2 * r);

    // Replicated padding, then integral images of value and value^2.
    let mut sum = vec![0.0f64; (ph + 1) * (pw + 1)];
    let mut sq = vec![0.0f64; (ph + 1) * (pw + 1)];
    let stride = pw + 1;
    for i in 0..ph {
        let si = i.saturating_sub(r).min(h - 1);
        for j in 0..pw {
            let sj = j.saturating_sub(r).min(w - 1);
            let v = src[[si, sj]];
            sum[(i + 1) * stride + j + 1] =
                v + sum[i * stride + j + 1] + sum[(i + 1) * stride + j] - sum[i * stride + j];
            sq[(i + 1) * stride + j + 1] =
                v * v + sq[i * stride + j + 1] + sq[(i + 1) * stride + j] - sq[i * stride + j];
        }
    }

    let area = (window * window) as f64;
    let rect = |tbl: &[f64], i: usize, j: usize| {
        tbl[(i + window) * stride + j + window] + tbl[i * stride + j]
            - tbl[i * stride + j + window]
            - tbl[(i + window) * stride + j]
    };

    let mut mean = Array2::zeros((h, w));
    let mut var = Array2::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let m = rect(&sum, i, j) / area;
            let v = (rect(&sq, i, j) / area - m * m).max(0.0);
            mean[[i, j]] = m;
            var[[i, j]] = v;
        }
    }
    (mean, var)
}

/// Box-filter mean only.
pub fn box_mean(src: &Array2<f64>, window: usize) -> Array2<f64> {
    box_mean_var(src, window).0
}

/// Bilinear sample at (row, col) in pixel-center coordinates.
/// Returns `None` when the sample point falls outside the source support.
pub fn bilinear(src: &Array2<f64>, y: f64, x: f64) -> Option<f64> {
    let (h, w) = src.dim();
    if y < -0.5 || x < -0.5 || y > h as f64 - 0.5 || x > w as f64 - 0.5 {
        return None;
    }
    // Clamp to the center grid so border samples replicate the edge pixel.
    let yc = y.clamp(0.0, (h - 1) as f64);
    let xc = x.clamp(0.0, (w - 1) as f64);
    let y0 = yc.floor() as usize;
    let x0 = xc.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = yc - y0 as f64;
    let fx = xc - x0 as f64;
    Some(
        src[[y0, x0]] * (1.0 - fy) * (1.0 - fx)
            + src[[y0, x1]] * (1.0 - fy) * fx
            + src[[y1, x0]] * fy * (1.0 - fx)
            + src[[y1, x1]] * fy * fx,
    )
}
