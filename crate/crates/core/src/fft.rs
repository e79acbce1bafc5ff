//! Row-column 2-D FFT on top of `rustfft`.

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{FftDirection, FftPlanner};

/// In-place 2-D FFT. The inverse direction includes the 1/(rows·cols)
/// normalization so that `fft2d(fft2d(x, Fwd), Inv) == x`.
pub fn fft2d(data: &mut Array2<Complex<f64>>, direction: FftDirection) {
    let (rows, cols) = data.dim();
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft(cols, direction);
    let col_fft = planner.plan_fft(rows, direction);

    let buf = data.as_slice_mut().expect("fft2d needs standard layout");
    for row in buf.chunks_exact_mut(cols) {
        row_fft.process(row);
    }

    let mut transposed = transpose(buf, rows, cols);
    for col in transposed.chunks_exact_mut(rows) {
        col_fft.process(col);
    }
    let back = transpose(&transposed, cols, rows);
    buf.copy_from_slice(&back);

    if direction == FftDirection::Inverse {
        let scale = 1.0 / (rows * cols) as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
}

fn transpose(src: &[Complex<f64>], rows: usize, cols: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); src.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

/// Lift a real matrix into the complex plane.
pub fn to_complex(src: &Array2<f64>) -> Array2<Complex<f64>> {
    src.mapv(|v| Complex::new(v, 0.0))
}
