//! Message ↔ watermark-unit coding: reshaping, spreading, masking, the
//! flip-tiling rule, and the dihedral state group of a unit.
//!
//! A unit carries the whole message once. Adjacent tiles are mirror images
//! (horizontal neighbor = horizontal flip, vertical neighbor = vertical flip),
//! which turns every tile corner into a point-symmetry center of the full
//! watermark. Mirroring is pure: no boundary sample is duplicated, so the
//! symmetry centers sit at half-pixel positions between pixels.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::keys::{BipolarMatrix, SpreadMatrix};

/// Message bits reshaped into a rows×cols grid, zero-padded at the tail.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageGrid {
    bits: Array2<u8>,
    len: usize,
}

impl MessageGrid {
    pub fn bits(&self) -> &Array2<u8> {
        &self.bits
    }

    /// Number of meaningful bits; grid cells past this index are padding.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The first `len` bits in row-major order.
    pub fn payload(&self) -> Vec<u8> {
        self.bits.iter().copied().take(self.len).collect()
    }
}

/// Reshape a bit sequence into a rows×cols grid, row-major, tail zero-padded.
pub fn encode_message(bits: &[u8], rows: usize, cols: usize) -> Result<MessageGrid> {
    if bits.len() > rows * cols {
        return Err(Error::MessageTooLong {
            len: bits.len(),
            rows,
            cols,
        });
    }
    if let Some(&bad) = bits.iter().find(|&&b| b > 1) {
        return Err(Error::InvalidParameter(format!(
            "message bits must be 0 or 1, got {bad}"
        )));
    }
    let mut grid = Array2::zeros((rows, cols));
    for (idx, &b) in bits.iter().enumerate() {
        grid[[idx / cols, idx % cols]] = b;
    }
    Ok(MessageGrid {
        bits: grid,
        len: bits.len(),
    })
}

/// One watermark tile as a real-valued field.
#[derive(Clone, Debug, PartialEq)]
pub struct WatermarkUnit {
    data: Array2<f64>,
}

impl WatermarkUnit {
    pub fn from_data(data: Array2<f64>) -> Self {
        Self { data }
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }
}

/// Spread-spectrum encode: grid cell (i, j) becomes the chip block
/// `(2·bit − 1) · R`, so bit 1 maps to +R and bit 0 to −R.
pub fn spread(msg: &MessageGrid, chips: &SpreadMatrix) -> WatermarkUnit {
    let (p, q) = msg.bits().dim();
    let side = chips.side();
    let data = Array2::from_shape_fn((p * side, q * side), |(i, j)| {
        let sign = (2 * msg.bits()[[i / side, j / side]] as i32 - 1) as f64;
        sign * chips.data()[[i % side, j % side]] as f64
    });
    WatermarkUnit { data }
}

/// Element-wise mask. Since the mask is bipolar, masking twice restores
/// the original unit.
pub fn mask_unit(unit: &WatermarkUnit, mask: &BipolarMatrix) -> Result<WatermarkUnit> {
    if unit.dim() != mask.dim() {
        return Err(Error::DimensionMismatch(format!(
            "unit {:?} vs mask {:?}",
            unit.dim(),
            mask.dim()
        )));
    }
    let data = Array2::from_shape_fn(unit.dim(), |(i, j)| {
        unit.data()[[i, j]] * mask.data()[[i, j]] as f64
    });
    Ok(WatermarkUnit { data })
}

/// One of the eight orientations a detected unit can be in: the four flip
/// combinations, and the same four composed with a 90° clockwise rotation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DihedralState {
    Identity,
    FlipH,
    FlipV,
    FlipBoth,
    Rot90,
    Rot90FlipH,
    Rot90FlipV,
    Rot90FlipBoth,
}

impl DihedralState {
    /// All eight states, in label order 1..=8.
    pub const ALL: [DihedralState; 8] = [
        DihedralState::Identity,
        DihedralState::FlipH,
        DihedralState::FlipV,
        DihedralState::FlipBoth,
        DihedralState::Rot90,
        DihedralState::Rot90FlipH,
        DihedralState::Rot90FlipV,
        DihedralState::Rot90FlipBoth,
    ];

    /// The four non-rotated states, valid for non-square units.
    pub const FLIPS: [DihedralState; 4] = [
        DihedralState::Identity,
        DihedralState::FlipH,
        DihedralState::FlipV,
        DihedralState::FlipBoth,
    ];

    /// 1-based label.
    pub fn label(self) -> u8 {
        Self::ALL.iter().position(|&s| s == self).unwrap() as u8 + 1
    }

    /// Flip state implied by the tile parities of the flipping rule: an odd
    /// column index flips horizontally, an odd row index flips vertically.
    pub fn from_parity(row_odd: bool, col_odd: bool) -> Self {
        match (row_odd, col_odd) {
            (false, false) => DihedralState::Identity,
            (false, true) => DihedralState::FlipH,
            (true, false) => DihedralState::FlipV,
            (true, true) => DihedralState::FlipBoth,
        }
    }

    /// Whether the state contains the 90° rotation (swaps the unit axes).
    pub fn is_rotated(self) -> bool {
        self.label() > 4
    }

    /// Signed-permutation action on centered (row, col) coordinates.
    fn matrix(self) -> [[i8; 2]; 2] {
        match self {
            DihedralState::Identity => [[1, 0], [0, 1]],
            DihedralState::FlipH => [[1, 0], [0, -1]],
            DihedralState::FlipV => [[-1, 0], [0, 1]],
            DihedralState::FlipBoth => [[-1, 0], [0, -1]],
            DihedralState::Rot90 => [[0, 1], [-1, 0]],
            DihedralState::Rot90FlipH => [[0, -1], [-1, 0]],
            DihedralState::Rot90FlipV => [[0, 1], [1, 0]],
            DihedralState::Rot90FlipBoth => [[0, -1], [1, 0]],
        }
    }

    fn from_matrix(m: [[i8; 2]; 2]) -> Self {
        *Self::ALL
            .iter()
            .find(|s| s.matrix() == m)
            .expect("every signed permutation is a dihedral state")
    }

    /// Group composition: the state equivalent to applying `self` first and
    /// `next` afterwards.
    pub fn then(self, next: DihedralState) -> DihedralState {
        let a = self.matrix();
        let b = next.matrix();
        let mut out = [[0i8; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = b[i][0] * a[0][j] + b[i][1] * a[1][j];
            }
        }
        Self::from_matrix(out)
    }

    /// Group inverse (the transpose of the signed permutation).
    pub fn inverse(self) -> DihedralState {
        let m = self.matrix();
        Self::from_matrix([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }
}

impl std::fmt::Display for DihedralState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "state {}", self.label())
    }
}

fn flip_h(data: &Array2<f64>) -> Array2<f64> {
    let (r, c) = data.dim();
    Array2::from_shape_fn((r, c), |(i, j)| data[[i, c - 1 - j]])
}

fn flip_v(data: &Array2<f64>) -> Array2<f64> {
    let (r, c) = data.dim();
    Array2::from_shape_fn((r, c), |(i, j)| data[[r - 1 - i, j]])
}

fn rot90cw(data: &Array2<f64>) -> Array2<f64> {
    let (r, c) = data.dim();
    Array2::from_shape_fn((c, r), |(i, j)| data[[r - 1 - j, i]])
}

/// Apply a dihedral state to a unit. Rotated states change the unit shape
/// unless it is square.
pub fn apply_state(unit: &WatermarkUnit, state: DihedralState) -> WatermarkUnit {
    let flipped = match state {
        DihedralState::Identity | DihedralState::Rot90 => unit.data().clone(),
        DihedralState::FlipH | DihedralState::Rot90FlipH => flip_h(unit.data()),
        DihedralState::FlipV | DihedralState::Rot90FlipV => flip_v(unit.data()),
        DihedralState::FlipBoth | DihedralState::Rot90FlipBoth => flip_v(&flip_h(unit.data())),
    };
    let data = if state.is_rotated() {
        rot90cw(&flipped)
    } else {
        flipped
    };
    WatermarkUnit { data }
}

/// Undo a dihedral state: `apply_inverse_state(apply_state(u, s), s) == u`.
pub fn apply_inverse_state(unit: &WatermarkUnit, state: DihedralState) -> WatermarkUnit {
    apply_state(unit, state.inverse())
}

/// A full-image watermark built by flip-tiling a masked unit. Every interior
/// tile-corner lattice point (at a half-pixel position) is a point-symmetry
/// center.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricWatermark {
    data: Array2<f64>,
    unit_height: usize,
    unit_width: usize,
}

impl SymmetricWatermark {
    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn unit_dim(&self) -> (usize, usize) {
        (self.unit_height, self.unit_width)
    }
}

/// Tile a masked unit over an `height`×`width` canvas following the flipping
/// rule, cropping the last partial tiles. The construction fixes each tile
/// directly from its index parities, so any flipping order yields the same
/// watermark.
pub fn flip_tile(unit: &WatermarkUnit, height: usize, width: usize) -> SymmetricWatermark {
    let (m, n) = unit.dim();
    let variants = [
        unit.data().clone(),
        flip_h(unit.data()),
        flip_v(unit.data()),
        flip_v(&flip_h(unit.data())),
    ];
    let data = Array2::from_shape_fn((height, width), |(y, x)| {
        let idx = ((y / m) % 2) * 2 + (x / n) % 2;
        variants[idx][[y % m, x % n]]
    });
    SymmetricWatermark {
        data,
        unit_height: m,
        unit_width: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keys::{gen_mask, spread_matrix, KeyMaterial, STREAM_K, STREAM_R};

    fn seed(tag: u64) -> [u8; 32] {
        let mut s = [0u8; 32];
        s[..8].copy_from_slice(&tag.to_le_bytes());
        s[30] = 0xc3;
        s
    }

    fn demo_unit(tag: u64) -> (WatermarkUnit, SpreadMatrix, BipolarMatrix) {
        let key = KeyMaterial::new(seed(tag), STREAM_R);
        let chips = spread_matrix(&key, 4).unwrap();
        let mask = gen_mask(&key.with_stream(STREAM_K), 32, 32, 4).unwrap();
        let bits: Vec<u8> = (0..64).map(|i| ((i * 7 + tag as usize) % 3 == 0) as u8).collect();
        let msg = encode_message(&bits, 8, 8).unwrap();
        let unit = mask_unit(&spread(&msg, &chips), &mask).unwrap();
        (unit, chips, mask)
    }

    #[test]
    fn message_reshape_and_padding() {
        let bits: Vec<u8> = (0..64).map(|i| (i % 2) as u8).collect();
        let msg = encode_message(&bits, 8, 8).unwrap();
        assert_eq!(msg.bits().dim(), (8, 8));
        assert_eq!(msg.len(), 64);
        assert_eq!(msg.payload(), bits);

        let zero = encode_message(&[0, 0, 0, 0], 2, 2).unwrap();
        assert!(zero.bits().iter().all(|&b| b == 0));

        let padded = encode_message(&[1, 1, 1], 2, 2).unwrap();
        assert_eq!(padded.bits()[[1, 1]], 0);
        assert_eq!(padded.len(), 3);
        assert_eq!(padded.payload(), vec![1, 1, 1]);

        assert!(matches!(
            encode_message(&[1; 5], 2, 2),
            Err(Error::MessageTooLong { .. })
        ));
        assert!(encode_message(&[2], 1, 1).is_err());
    }

    #[test]
    fn spread_maps_bits_to_signed_chips() {
        let key = KeyMaterial::new(seed(1), STREAM_R);
        let chips = spread_matrix(&key, 4).unwrap();

        let one = encode_message(&[1], 1, 1).unwrap();
        let unit = spread(&one, &chips);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(unit.data()[[i, j]], chips.data()[[i, j]] as f64);
            }
        }

        let zero = encode_message(&[0], 1, 1).unwrap();
        let unit = spread(&zero, &chips);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(unit.data()[[i, j]], -(chips.data()[[i, j]] as f64));
            }
        }
    }

    #[test]
    fn mask_is_an_involution() {
        let (unit, chips, mask) = demo_unit(2);
        let all_plus =
            BipolarMatrix::from_data(Array2::from_elem(unit.dim(), 1));
        assert_eq!(mask_unit(&unit, &all_plus).unwrap(), unit);

        let twice = mask_unit(&mask_unit(&unit, &mask).unwrap(), &mask).unwrap();
        assert_eq!(twice, unit);

        let small = BipolarMatrix::from_data(Array2::from_elem((4, 4), 1));
        assert!(mask_unit(&unit, &small).is_err());
        let _ = chips;
    }

    #[test]
    fn state_group_identity_and_involutions() {
        let (unit, _, _) = demo_unit(3);
        assert_eq!(apply_state(&unit, DihedralState::Identity), unit);
        let twice = apply_state(
            &apply_state(&unit, DihedralState::FlipH),
            DihedralState::FlipH,
        );
        assert_eq!(twice, unit);
    }

    #[test]
    fn rotation_has_order_four() {
        let (unit, _, _) = demo_unit(4);
        let mut cur = unit.clone();
        for _ in 0..4 {
            cur = apply_state(&cur, DihedralState::Rot90);
        }
        assert_eq!(cur, unit);
        assert_eq!(
            DihedralState::Rot90
                .then(DihedralState::Rot90)
                .then(DihedralState::Rot90)
                .then(DihedralState::Rot90),
            DihedralState::Identity
        );
    }

    #[test]
    fn composition_table_matches_matrix_transforms() {
        let (unit, _, _) = demo_unit(5);
        for &a in &DihedralState::ALL {
            for &b in &DihedralState::ALL {
                let stepwise = apply_state(&apply_state(&unit, a), b);
                let composed = apply_state(&unit, a.then(b));
                assert_eq!(stepwise, composed, "{a} then {b}");
            }
            let undone = apply_state(&apply_state(&unit, a), a.inverse());
            assert_eq!(undone, unit, "inverse of {a}");
        }
    }

    #[test]
    fn eight_distinct_elements_on_a_generic_unit() {
        let (unit, _, _) = demo_unit(6);
        let images: Vec<_> = DihedralState::ALL
            .iter()
            .map(|&s| apply_state(&unit, s))
            .collect();
        for i in 0..8 {
            for j in (i + 1)..8 {
                assert_ne!(images[i], images[j], "states {} and {}", i + 1, j + 1);
            }
        }
    }

    #[test]
    fn single_tile_is_the_unit_itself() {
        let (unit, _, _) = demo_unit(7);
        let (m, n) = unit.dim();
        let w = flip_tile(&unit, m, n);
        assert_eq!(w.data(), unit.data());
        assert_eq!(w.unit_dim(), (m, n));
    }

    #[test]
    fn two_by_two_tiling_uses_the_four_flip_states() {
        let (unit, _, _) = demo_unit(8);
        let (m, n) = unit.dim();
        let w = flip_tile(&unit, 2 * m, 2 * n);
        let expected = [
            (0, 0, DihedralState::Identity),
            (0, 1, DihedralState::FlipH),
            (1, 0, DihedralState::FlipV),
            (1, 1, DihedralState::FlipBoth),
        ];
        for (ty, tx, state) in expected {
            let tile = apply_state(&unit, state);
            for i in 0..m {
                for j in 0..n {
                    assert_eq!(
                        w.data()[[ty * m + i, tx * n + j]],
                        tile.data()[[i, j]],
                        "tile ({ty},{tx})"
                    );
                }
            }
        }
    }

    #[test]
    fn every_tile_of_a_four_by_four_tiling_matches_its_parity_state() {
        let (unit, _, _) = demo_unit(9);
        let (m, n) = unit.dim();
        let w = flip_tile(&unit, 4 * m, 4 * n);
        for ty in 0..4 {
            for tx in 0..4 {
                let state = DihedralState::from_parity(ty % 2 == 1, tx % 2 == 1);
                let tile = apply_state(&unit, state);
                for i in 0..m {
                    for j in 0..n {
                        assert_eq!(w.data()[[ty * m + i, tx * n + j]], tile.data()[[i, j]]);
                    }
                }
            }
        }
    }

    /// Point-symmetry score about the half-pixel center between rows
    /// (cy, cy+1) and cols (cx, cx+1): mean product over all mirrored sample
    /// pairs that stay inside the field.
    fn symmetry_score(data: &Array2<f64>, cy: usize, cx: usize) -> f64 {
        let (h, w) = data.dim();
        let mut num = 0.0;
        let mut den_a = 0.0;
        let mut den_b = 0.0;
        for t in 0..=cy.min(h - cy - 2) {
            for u in 0..=cx.min(w - cx - 2) {
                let a = data[[cy - t, cx - u]];
                let b = data[[cy + 1 + t, cx + 1 + u]];
                num += a * b;
                den_a += a * a;
                den_b += b * b;
            }
        }
        num / (den_a * den_b).sqrt().max(1e-12)
    }

    #[test]
    fn interior_corners_are_exact_point_symmetry_centers() {
        let (unit, _, _) = demo_unit(10);
        let (m, n) = unit.dim();
        let w = flip_tile(&unit, 4 * m, 4 * n);
        for a in 1..4 {
            for b in 1..4 {
                let score = symmetry_score(w.data(), a * m - 1, b * n - 1);
                assert!(
                    (score - 1.0).abs() < 1e-9,
                    "corner ({a},{b}) score {score}"
                );
            }
        }
    }

    #[test]
    fn non_corner_points_score_far_below_corners() {
        let (unit, _, _) = demo_unit(11);
        let (m, n) = unit.dim();
        let w = flip_tile(&unit, 4 * m, 4 * n);
        // Deterministic pseudo-random probe points away from the corner lattice.
        let mut acc = 0.0;
        let mut count = 0;
        for k in 0..50u64 {
            let cy = 16 + (k.wrapping_mul(2654435761) % (4 * m as u64 - 32)) as usize;
            let cx = 16 + (k.wrapping_mul(40503) % (4 * n as u64 - 32)) as usize;
            if (cy + 1) % m == 0 || (cx + 1) % n == 0 {
                continue;
            }
            acc += symmetry_score(w.data(), cy, cx).abs();
            count += 1;
        }
        let mean = acc / count as f64;
        assert!(mean < 1.0 / 3.0, "mean off-corner score {mean}");
    }

    #[test]
    fn masking_suppresses_weak_message_symmetry() {
        // A point-symmetric message combined with a reversal-symmetric chip
        // matrix makes the raw unit point-symmetric about its own center;
        // the mask must break that competing symmetry.
        let mut tested = 0;
        let mut tag = 0u64;
        let mut mean_after = 0.0;
        while tested < 20 && tag < 4000 {
            tag += 1;
            let key = KeyMaterial::new(seed(1000 + tag), STREAM_R);
            let chips = spread_matrix(&key, 4).unwrap();
            let d = chips.data();
            let side = chips.side();
            let rev_corr: i32 = d
                .indexed_iter()
                .map(|((i, j), &v)| v as i32 * d[[side - 1 - i, side - 1 - j]] as i32)
                .sum();
            if rev_corr.unsigned_abs() as usize != side * side {
                continue; // chips not reversal-symmetric: not a weak-message case
            }
            tested += 1;

            let msg = encode_message(&[1u8; 64], 8, 8).unwrap();
            let unit = spread(&msg, &chips);
            let (m, n) = unit.dim();
            let before = symmetry_score(unit.data(), m / 2 - 1, n / 2 - 1).abs();
            assert!(before > 0.9, "tag {tag}: raw unit score {before}");

            let mask = gen_mask(&key.with_stream(STREAM_K), m, n, 4).unwrap();
            let masked = mask_unit(&unit, &mask).unwrap();
            let after = symmetry_score(masked.data(), m / 2 - 1, n / 2 - 1).abs();
            // The doubly-upsampled mask leaves 128 independent sample pairs at
            // this size, so the per-key score has std ≈ 0.088; bound each key
            // at 4σ and the average at the noise floor.
            assert!(after < 0.35, "tag {tag}: masked unit score {after}");
            mean_after += after / 20.0;
        }
        assert_eq!(tested, 20, "not enough weak-key samples found");
        assert!(mean_after < 0.15, "mean masked score {mean_after}");
    }
}
