//! Keyed generation of the bipolar chip and mask matrices.
//!
//! All generation is driven by a ChaCha20 stream keyed with a 256-bit seed.
//! The encoder and decoder only share the key; every matrix is regenerated on
//! demand, bit for bit identical across platforms. Distinct material (chip
//! pattern vs. mask) comes from distinct stream ids on the same seed, never
//! from seed arithmetic.

use ndarray::Array2;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// Stream id of the chip-pattern stream.
pub const STREAM_R: u8 = 0;
/// Stream id of the mask stream.
pub const STREAM_K: u8 = 1;

/// A 256-bit secret seed plus a stream-id domain separator.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct KeyMaterial {
    seed: [u8; 32],
    stream_id: u8,
}

impl KeyMaterial {
    pub fn new(seed: [u8; 32], stream_id: u8) -> Self {
        Self { seed, stream_id }
    }

    /// Parse a key from 64 hex characters.
    pub fn from_hex(hex: &str, stream_id: u8) -> Result<Self> {
        let hex = hex.trim();
        if hex.len() != 64 {
            return Err(Error::InvalidParameter(format!(
                "key must be 64 hex characters, got {}",
                hex.len()
            )));
        }
        let mut seed = [0u8; 32];
        for (i, byte) in seed.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
                .map_err(|_| Error::InvalidParameter("key is not valid hex".into()))?;
        }
        Ok(Self { seed, stream_id })
    }

    pub fn seed(&self) -> &[u8; 32] {
        &self.seed
    }

    /// Same seed, different stream id.
    pub fn with_stream(&self, stream_id: u8) -> Self {
        Self {
            seed: self.seed,
            stream_id,
        }
    }

    fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::from_seed(self.seed);
        rng.set_stream(self.stream_id as u64);
        rng
    }
}

impl std::fmt::Debug for KeyMaterial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // Never print the seed.
        write!(f, "KeyMaterial(stream {})", self.stream_id)
    }
}

/// A matrix whose entries are exactly −1 or +1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BipolarMatrix {
    data: Array2<i8>,
}

impl BipolarMatrix {
    pub fn from_data(data: Array2<i8>) -> Self {
        debug_assert!(data.iter().all(|&v| v == 1 || v == -1));
        Self { data }
    }

    pub fn data(&self) -> &Array2<i8> {
        &self.data
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }
}

/// A chip matrix: a 2× nearest-neighbor upsampled bipolar matrix, so every
/// aligned 2×2 block is constant and the energy sits in the lower half of the
/// spectrum.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpreadMatrix {
    data: Array2<i8>,
}

impl SpreadMatrix {
    pub fn data(&self) -> &Array2<i8> {
        &self.data
    }

    /// Chip side length.
    pub fn side(&self) -> usize {
        self.data.dim().0
    }
}

fn keyed_bipolar(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Array2<i8> {
    let count = rows * cols;
    let mut bytes = vec![0u8; count.div_ceil(8)];
    rng.fill_bytes(&mut bytes);
    // One stream bit per entry, row-major, MSB first.
    let mut data = Array2::zeros((rows, cols));
    for (idx, v) in data.iter_mut().enumerate() {
        let bit = (bytes[idx / 8] >> (7 - idx % 8)) & 1;
        *v = if bit == 1 { 1 } else { -1 };
    }
    data
}

/// Generate a `side`×`side` bipolar matrix from the keyed stream.
pub fn gen_bipolar(key: &KeyMaterial, side: usize) -> BipolarMatrix {
    gen_bipolar_rect(key, side, side)
}

/// Rectangular variant of [`gen_bipolar`].
pub fn gen_bipolar_rect(key: &KeyMaterial, rows: usize, cols: usize) -> BipolarMatrix {
    let mut rng = key.rng();
    BipolarMatrix {
        data: keyed_bipolar(&mut rng, rows, cols),
    }
}

/// 2× nearest-neighbor upsampling: `out(i, j) = in(i/2, j/2)`.
pub fn upsample2x(m: &BipolarMatrix) -> SpreadMatrix {
    SpreadMatrix {
        data: upsample2x_raw(&m.data),
    }
}

fn upsample2x_raw(src: &Array2<i8>) -> Array2<i8> {
    let (rows, cols) = src.dim();
    Array2::from_shape_fn((rows * 2, cols * 2), |(i, j)| src[[i / 2, j / 2]])
}

/// Generate the chip matrix for one message bit: a bipolar matrix of side
/// `spread_side / 2` drawn from the chip stream and doubly upsampled.
///
/// A constant base matrix would make the orientation statistic degenerate
/// (every block normalizes to zero), so such draws are skipped and the stream
/// is advanced until a non-constant base appears.
pub fn spread_matrix(key: &KeyMaterial, spread_side: usize) -> Result<SpreadMatrix> {
    if spread_side < 2 || spread_side % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "spread side must be even and >= 2, got {spread_side}"
        )));
    }
    let base = spread_side / 2;
    let mut rng = key.with_stream(STREAM_R).rng();
    loop {
        let r = keyed_bipolar(&mut rng, base, base);
        let first = r[[0, 0]];
        if r.iter().any(|&v| v != first) {
            return Ok(SpreadMatrix {
                data: upsample2x_raw(&r),
            });
        }
    }
}

/// Generate the `unit_height`×`unit_width` mask matrix from the mask stream:
/// drawn at half resolution, then doubly upsampled.
pub fn gen_mask(
    key: &KeyMaterial,
    unit_height: usize,
    unit_width: usize,
    spread_side: usize,
) -> Result<BipolarMatrix> {
    if unit_height == 0
        || unit_width == 0
        || unit_height % spread_side != 0
        || unit_width % spread_side != 0
    {
        return Err(Error::DimensionMismatch(format!(
            "mask dimensions {unit_height}x{unit_width} must be multiples of the chip side {spread_side}"
        )));
    }
    let mut rng = key.with_stream(STREAM_K).rng();
    let half = keyed_bipolar(&mut rng, unit_height / 2, unit_width / 2);
    Ok(BipolarMatrix {
        data: upsample2x_raw(&half),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft;
    use rustfft::FftDirection;

    fn seed(tag: u64) -> [u8; 32] {
        let mut s = [0u8; 32];
        s[..8].copy_from_slice(&tag.to_le_bytes());
        s[31] = 0x5a;
        s
    }

    #[test]
    fn generation_is_deterministic() {
        let key = KeyMaterial::new(seed(0), STREAM_R);
        let a = gen_bipolar(&key, 2);
        let b = gen_bipolar(&key, 2);
        assert_eq!(a, b);
        let c = gen_mask(&key, 32, 32, 4).unwrap();
        let d = gen_mask(&key, 32, 32, 4).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn entries_are_bipolar() {
        let key = KeyMaterial::new(seed(7), STREAM_R);
        let m = gen_bipolar(&key, 33);
        assert!(m.data().iter().all(|&v| v == 1 || v == -1));
        let k = gen_mask(&key, 32, 64, 4).unwrap();
        assert!(k.data().iter().all(|&v| v == 1 || v == -1));
    }

    #[test]
    fn different_seeds_differ_in_roughly_half_the_entries() {
        for pair in 0..100u64 {
            let a = gen_bipolar(&KeyMaterial::new(seed(2 * pair), STREAM_R), 64);
            let b = gen_bipolar(&KeyMaterial::new(seed(2 * pair + 1), STREAM_R), 64);
            let diff = a
                .data()
                .iter()
                .zip(b.data().iter())
                .filter(|(x, y)| x != y)
                .count();
            let frac = diff as f64 / (64.0 * 64.0);
            assert!((0.4..=0.6).contains(&frac), "pair {pair}: {frac}");
        }
    }

    #[test]
    fn sign_balance_holds_for_almost_all_seeds() {
        let mut violations = 0;
        for tag in 0..200u64 {
            let m = gen_bipolar(&KeyMaterial::new(seed(tag), STREAM_R), 64);
            let plus = m.data().iter().filter(|&&v| v == 1).count() as f64 / (64.0 * 64.0);
            if !(0.4..=0.6).contains(&plus) {
                violations += 1;
            }
        }
        assert!(violations <= 2, "{violations} of 200 seeds out of balance");
    }

    #[test]
    fn upsample_single_cell_and_checkerboard() {
        let one = BipolarMatrix::from_data(Array2::from_elem((1, 1), 1));
        let up = upsample2x(&one);
        assert_eq!(up.side(), 2);
        assert!(up.data().iter().all(|&v| v == 1));

        let base = BipolarMatrix::from_data(
            Array2::from_shape_vec((2, 2), vec![1, -1, -1, 1]).unwrap(),
        );
        let up = upsample2x(&base);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(up.data()[[i, j]], base.data()[[i / 2, j / 2]]);
            }
        }
    }

    #[test]
    fn upsample_block_law() {
        let key = KeyMaterial::new(seed(3), STREAM_R);
        let up = upsample2x(&gen_bipolar(&key, 16));
        let d = up.data();
        for i in 0..16 {
            for j in 0..16 {
                let v = d[[2 * i, 2 * j]];
                assert_eq!(d[[2 * i + 1, 2 * j]], v);
                assert_eq!(d[[2 * i, 2 * j + 1]], v);
                assert_eq!(d[[2 * i + 1, 2 * j + 1]], v);
            }
        }
    }

    #[test]
    fn spread_matrix_side_doubles_base() {
        let key = KeyMaterial::new(seed(1), STREAM_R);
        let r = spread_matrix(&key, 4).unwrap();
        assert_eq!(r.side(), 4);
        // Never constant: the degenerate-draw guard must hold for any key.
        for tag in 0..64 {
            let r = spread_matrix(&KeyMaterial::new(seed(tag), STREAM_R), 4).unwrap();
            let first = r.data()[[0, 0]];
            assert!(r.data().iter().any(|&v| v != first));
        }
    }

    /// Fraction of spectral power strictly below half-Nyquist per axis.
    fn low_band_fraction(m: &Array2<i8>) -> f64 {
        let (h, w) = m.dim();
        let real = m.mapv(|v| v as f64);
        let mut buf = fft::to_complex(&real);
        fft::fft2d(&mut buf, FftDirection::Forward);
        let mut total = 0.0;
        let mut low = 0.0;
        for i in 0..h {
            for j in 0..w {
                let fy = if i <= h / 2 { i as f64 } else { (h - i) as f64 } / h as f64;
                let fx = if j <= w / 2 { j as f64 } else { (w - j) as f64 } / w as f64;
                let p = buf[[i, j]].norm_sqr();
                total += p;
                if fy < 0.25 && fx < 0.25 {
                    low += p;
                }
            }
        }
        low / total
    }

    #[test]
    fn upsampled_spectrum_concentrates_in_the_low_band() {
        let key = KeyMaterial::new(seed(11), STREAM_R);
        let raw = gen_bipolar(&key, 64);
        let up = upsample2x(&gen_bipolar(&key, 32));
        let raw_frac = low_band_fraction(raw.data());
        let up_frac = low_band_fraction(up.data());
        assert!(raw_frac < 0.35, "flat spectrum expected, got {raw_frac}");
        assert!(up_frac > 0.5, "low-band concentration expected, got {up_frac}");
        assert!(up_frac > 1.5 * raw_frac);
    }

    #[test]
    fn mask_is_self_inverse_and_streams_are_uncorrelated() {
        let key = KeyMaterial::new(seed(21), STREAM_K);
        let k = gen_mask(&key, 32, 32, 4).unwrap();
        assert!(k.data().iter().all(|&v| v * v == 1));

        let mut worst: f64 = 0.0;
        let mut mean_abs = 0.0;
        for tag in 0..100u64 {
            let base = KeyMaterial::new(seed(tag), STREAM_R);
            let a = gen_bipolar_rect(&base, 32, 32);
            let b = gen_bipolar_rect(&base.with_stream(STREAM_K), 32, 32);
            let corr = a
                .data()
                .iter()
                .zip(b.data().iter())
                .map(|(&x, &y)| (x as f64) * (y as f64))
                .sum::<f64>()
                / (32.0 * 32.0);
            worst = worst.max(corr.abs());
            mean_abs += corr.abs() / 100.0;
        }
        assert!(mean_abs < 0.1, "mean |corr| = {mean_abs}");
        assert!(worst < 0.2, "worst |corr| = {worst}");
    }

    #[test]
    fn mask_rejects_bad_dimensions() {
        let key = KeyMaterial::new(seed(2), STREAM_K);
        assert!(gen_mask(&key, 30, 32, 4).is_err());
        assert!(gen_mask(&key, 32, 0, 4).is_err());
    }

    #[test]
    fn key_parses_from_hex() {
        let hex = "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f";
        let key = KeyMaterial::from_hex(hex, STREAM_R).unwrap();
        assert_eq!(key.seed()[1], 1);
        assert_eq!(key.seed()[31], 0x1f);
        assert!(KeyMaterial::from_hex("abc", STREAM_R).is_err());
        assert!(KeyMaterial::from_hex(&"zz".repeat(32), STREAM_R).is_err());
    }
}
