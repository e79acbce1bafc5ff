//! Orientation resolution and message decoding.
//!
//! A detected unit could be in any of eight orientations. De-masking a unit
//! that has been brought into its true orientation exposes the chip structure:
//! the per-block correlation statistic concentrates at ±chip-side instead of
//! following the standard normal it obeys for every wrong orientation. The
//! anchor orientation is chosen as the hypothesis whose pooled statistic is
//! farthest from N(0,1) in Kullback-Leibler divergence; each unit's own
//! orientation then follows from its lattice parities and the flipping rule.

use ndarray::Array2;

use crate::codec::{apply_inverse_state, mask_unit, DihedralState, WatermarkUnit};
use crate::error::{Error, Result};
use crate::keys::{BipolarMatrix, SpreadMatrix};
use crate::synchronizer::UnitQuad;

/// A rectified unit together with the lattice cell it came from.
pub type DetectedUnit = (UnitQuad, WatermarkUnit);

/// Per-hypothesis divergence values and the resolved anchor state.
#[derive(Clone, Debug)]
pub struct StateEvidence {
    /// KLD of the pooled statistic against N(0,1), one entry per hypothesis.
    pub kld: Vec<(DihedralState, f64)>,
    pub chosen: DihedralState,
    /// Usable blocks pooled under the chosen hypothesis.
    pub sample_count: usize,
}

/// Orientation of the unit at lattice cell (a, b) when the anchor cell is in
/// state `anchor`: the anchor state composed with the parity flips of the
/// flipping rule.
pub fn implied_state(anchor: DihedralState, lattice_index: (i64, i64)) -> DihedralState {
    let parity = DihedralState::from_parity(
        lattice_index.0.rem_euclid(2) == 1,
        lattice_index.1.rem_euclid(2) == 1,
    );
    anchor.then(parity)
}

/// Per-block correlation statistic of a unit under an assumed orientation.
///
/// The unit is brought back to the reference orientation, de-masked, and cut
/// into chip-sized blocks. Each block is normalized to zero mean and unit
/// variance (blocks with vanishing variance are skipped) and correlated with
/// the chip matrix: `y = Σ block∘R / side`. Under a wrong orientation the
/// de-masked block is independent of the chips and y follows N(0,1).
pub fn y_samples(
    unit: &WatermarkUnit,
    mask: &BipolarMatrix,
    chips: &SpreadMatrix,
    state: DihedralState,
) -> Vec<f64> {
    let restored = apply_inverse_state(unit, state);
    let Ok(demasked) = mask_unit(&restored, mask) else {
        return Vec::new();
    };
    let side = chips.side();
    let (m, n) = demasked.dim();
    let mut samples = Vec::with_capacity((m / side) * (n / side));
    let count = (side * side) as f64;
    for bi in 0..m / side {
        for bj in 0..n / side {
            let mut sum = 0.0;
            let mut sum2 = 0.0;
            for i in 0..side {
                for j in 0..side {
                    let v = demasked.data()[[bi * side + i, bj * side + j]];
                    sum += v;
                    sum2 += v * v;
                }
            }
            let mean = sum / count;
            let var = sum2 / count - mean * mean;
            if var < 1e-6 {
                continue;
            }
            let std = var.sqrt();
            let mut corr = 0.0;
            for i in 0..side {
                for j in 0..side {
                    let v = demasked.data()[[bi * side + i, bj * side + j]];
                    corr += (v - mean) / std * chips.data()[[i, j]] as f64;
                }
            }
            samples.push(corr / side as f64);
        }
    }
    samples
}

const KLD_BINS: usize = 25;
const KLD_RANGE: f64 = 6.0;
const KLD_SMOOTHING: f64 = 1e-6;
const KLD_MIN_SAMPLES: usize = 30;

fn erf(x: f64) -> f64 {
    // Abramowitz–Stegun 7.1.26, |error| < 1.5e-7.
    let sign = x.signum();
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// KL divergence of the empirical sample distribution from N(0,1), computed
/// over a fixed histogram (25 bins spanning [−6, 6], out-of-range samples
/// clamped into the edge bins, both distributions additively smoothed).
pub fn kld_to_normal(samples: &[f64]) -> Result<f64> {
    if samples.len() < KLD_MIN_SAMPLES {
        return Err(Error::NotEnoughSamples {
            needed: KLD_MIN_SAMPLES,
            got: samples.len(),
        });
    }
    let width = 2.0 * KLD_RANGE / KLD_BINS as f64;
    let mut counts = [0usize; KLD_BINS];
    for &s in samples {
        let idx = (((s + KLD_RANGE) / width).floor() as isize).clamp(0, KLD_BINS as isize - 1);
        counts[idx as usize] += 1;
    }
    let n = samples.len() as f64;
    let mut p = [0.0f64; KLD_BINS];
    let mut q = [0.0f64; KLD_BINS];
    let mut p_tot = 0.0;
    let mut q_tot = 0.0;
    for i in 0..KLD_BINS {
        let lo = -KLD_RANGE + i as f64 * width;
        p[i] = counts[i] as f64 / n + KLD_SMOOTHING;
        q[i] = normal_cdf(lo + width) - normal_cdf(lo) + KLD_SMOOTHING;
        p_tot += p[i];
        q_tot += q[i];
    }
    let mut kld = 0.0;
    for i in 0..KLD_BINS {
        let pi = p[i] / p_tot;
        let qi = q[i] / q_tot;
        kld += pi * (pi / qi).ln();
    }
    Ok(kld)
}

/// Resolve the anchor orientation of a set of detected units by testing every
/// candidate hypothesis against all units at once and keeping the one whose
/// pooled statistic deviates most from N(0,1). Rotated hypotheses are only
/// searched for square units.
pub fn determine_state(
    units: &[DetectedUnit],
    mask: &BipolarMatrix,
    chips: &SpreadMatrix,
) -> Result<StateEvidence> {
    if units.is_empty() {
        return Err(Error::SyncFailed("no units to test".into()));
    }
    let (m, n) = units[0].1.dim();
    let candidates: &[DihedralState] = if m == n {
        &DihedralState::ALL
    } else {
        &DihedralState::FLIPS
    };

    let mut kld = Vec::with_capacity(candidates.len());
    let mut best: Option<(DihedralState, f64, usize)> = None;
    for &anchor in candidates {
        let mut pooled = Vec::new();
        for (quad, unit) in units {
            let state = implied_state(anchor, quad.lattice_index);
            pooled.extend(y_samples(unit, mask, chips, state));
        }
        let d = kld_to_normal(&pooled)?;
        kld.push((anchor, d));
        if best.as_ref().map_or(true, |&(_, bd, _)| d > bd) {
            best = Some((anchor, d, pooled.len()));
        }
    }
    let (chosen, _, sample_count) = best.unwrap();
    Ok(StateEvidence {
        kld,
        chosen,
        sample_count,
    })
}

/// Fraction of the mean per-unit magnitude below which a unit is considered
/// empty (off-image or occluded) and excluded from accumulation.
const EMPTY_UNIT_FRACTION: f64 = 0.1;

/// Bring every unit back to the reference orientation, de-mask, and sum.
/// Summation follows lattice order so the result is reproducible.
pub fn accumulate(
    units: &[DetectedUnit],
    evidence: &StateEvidence,
    mask: &BipolarMatrix,
) -> Result<WatermarkUnit> {
    if units.is_empty() {
        return Err(Error::SyncFailed("no units to accumulate".into()));
    }
    let magnitudes: Vec<f64> = units
        .iter()
        .map(|(_, u)| u.data().iter().map(|v| v.abs()).sum::<f64>() / u.data().len() as f64)
        .collect();
    let global = magnitudes.iter().sum::<f64>() / magnitudes.len() as f64;

    let mut order: Vec<usize> = (0..units.len()).collect();
    order.sort_by_key(|&i| units[i].0.lattice_index);

    let mut acc: Option<Array2<f64>> = None;
    for idx in order {
        if magnitudes[idx] < EMPTY_UNIT_FRACTION * global {
            continue;
        }
        let (quad, unit) = &units[idx];
        let state = implied_state(evidence.chosen, quad.lattice_index);
        let restored = apply_inverse_state(unit, state);
        let demasked = mask_unit(&restored, mask)?;
        match &mut acc {
            None => acc = Some(demasked.data().clone()),
            Some(a) => *a += demasked.data(),
        }
    }
    acc.map(WatermarkUnit::from_data)
        .ok_or_else(|| Error::SyncFailed("all units were empty".into()))
}

/// Decoded message grid with the per-bit correlation values behind it.
#[derive(Clone, Debug)]
pub struct DecodedMessage {
    bits: Array2<u8>,
    correlations: Array2<f64>,
}

impl DecodedMessage {
    pub fn bits(&self) -> &Array2<u8> {
        &self.bits
    }

    pub fn correlations(&self) -> &Array2<f64> {
        &self.correlations
    }

    /// First `len` bits in row-major order.
    pub fn payload(&self, len: usize) -> Vec<u8> {
        self.bits.iter().copied().take(len).collect()
    }

    /// Bit error quantity against a reference message.
    pub fn beq(&self, reference: &[u8]) -> u32 {
        let got = self.payload(reference.len());
        reference
            .iter()
            .zip(got.iter().chain(std::iter::repeat(&2)))
            .filter(|(a, b)| a != b)
            .count() as u32
    }
}

/// Despread an accumulated unit: correlate each chip-sized block with the
/// chip matrix and take the sign, with zero decoding as bit 1.
pub fn despread(accumulated: &WatermarkUnit, chips: &SpreadMatrix) -> DecodedMessage {
    let side = chips.side();
    let (m, n) = accumulated.dim();
    let (p, q) = (m / side, n / side);
    let mut correlations = Array2::zeros((p, q));
    let mut bits = Array2::zeros((p, q));
    for bi in 0..p {
        for bj in 0..q {
            let mut rho = 0.0;
            for i in 0..side {
                for j in 0..side {
                    rho += accumulated.data()[[bi * side + i, bj * side + j]]
                        * chips.data()[[i, j]] as f64;
                }
            }
            correlations[[bi, bj]] = rho;
            bits[[bi, bj]] = u8::from(rho >= 0.0);
        }
    }
    DecodedMessage { bits, correlations }
}
