//! Watermark synchronization from the symmetry of the estimated watermark.
//!
//! The auto-convolution of the zero-padded estimate scores every half-pixel
//! position as a point-symmetry center; its peaks are the corners of the
//! watermark units. The peaks are normalized against the auto-convolution of
//! an all-ones field (so peaks near the border are comparable to central
//! ones), thresholded against local statistics, grown into an integer corner
//! lattice, and each complete lattice cell is rectified back to the nominal
//! unit rectangle with a four-point homography.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Mutex;

use ndarray::Array2;
use rustfft::FftDirection;

use crate::codec::WatermarkUnit;
use crate::error::{Error, Result};
use crate::fft;
use crate::filters;

/// The symmetry surface at half-pixel resolution: index (u, v) scores the
/// point (u/2, v/2) in image coordinates.
#[derive(Clone, Debug)]
pub struct SymmetryMap {
    data: Array2<f64>,
    normalized: bool,
}

impl SymmetryMap {
    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Even-index slice: the symmetry surface restricted to whole-pixel
    /// centers. Half-pixel corners fall between its samples, so this is only
    /// useful for side-by-side experiments, not for synchronization.
    pub fn even_slice(&self) -> Array2<f64> {
        let (h, w) = self.data.dim();
        Array2::from_shape_fn((h / 2, w / 2), |(i, j)| self.data[[2 * i, 2 * j]])
    }
}

/// Auto-convolution of `field` zero-padded to twice its size, computed through
/// the frequency domain: the inverse transform of the squared forward
/// transform. The result is kept at full 2H×2W resolution.
pub fn acnf(field: &Array2<f64>) -> SymmetryMap {
    let (h, w) = field.dim();
    let mut padded = Array2::zeros((2 * h, 2 * w));
    padded.slice_mut(ndarray::s![..h, ..w]).assign(field);
    let mut buf = fft::to_complex(&padded);
    fft::fft2d(&mut buf, FftDirection::Forward);
    for v in buf.iter_mut() {
        *v = *v * *v;
    }
    fft::fft2d(&mut buf, FftDirection::Inverse);
    SymmetryMap {
        data: buf.mapv(|c| c.re),
        normalized: false,
    }
}

// The all-ones auto-convolution only depends on the field size; extraction
// runs hit a handful of sizes over and over.
static ONES_ACNF_CACHE: Mutex<Vec<((usize, usize), std::sync::Arc<Array2<f64>>)>> =
    Mutex::new(Vec::new());

fn ones_acnf(h: usize, w: usize) -> std::sync::Arc<Array2<f64>> {
    let mut cache = ONES_ACNF_CACHE.lock().unwrap();
    if let Some((_, arr)) = cache.iter().find(|(dim, _)| *dim == (h, w)) {
        return arr.clone();
    }
    let ones = Array2::from_elem((h, w), 1.0);
    let arr = std::sync::Arc::new(acnf(&ones).data);
    if cache.len() >= 8 {
        cache.remove(0);
    }
    cache.push(((h, w), arr.clone()));
    arr
}

/// Normalize a raw symmetry map by the number of sample pairs contributing at
/// each index, so peaks have comparable height everywhere. Indices supported
/// by less than one sample pair are set to zero.
pub fn normalize(map: &SymmetryMap) -> SymmetryMap {
    let (h2, w2) = map.data.dim();
    let denom = ones_acnf(h2 / 2, w2 / 2);
    let mut data = Array2::zeros((h2, w2));
    for ((u, v), out) in data.indexed_iter_mut() {
        let d = denom[[u, v]];
        if d >= 0.5 {
            *out = map.data[[u, v]] / d;
        }
    }
    SymmetryMap {
        data,
        normalized: true,
    }
}

/// One retained symmetry peak, in image pixel coordinates (half-pixel grid).
#[derive(Clone, Copy, Debug)]
pub struct PeakPoint {
    pub y: f64,
    pub x: f64,
    pub score: f64,
}

/// Candidate unit-corner points extracted from the normalized map.
#[derive(Clone, Debug, Default)]
pub struct UnitsMap {
    pub points: Vec<PeakPoint>,
}

/// Keep at most this many peaks after suppression; synchronization only needs
/// the corner lattice plus some noise margin.
const MAX_PEAKS: usize = 1500;

/// Minimum per-axis overlap, in samples, for an index to be considered: a
/// pair set that is nearly one row or one column thick carries no evidence of
/// 2-D point symmetry. Any real corner has at least one full unit on each
/// side and clears this by a factor of four or more.
const MIN_AXIS_SUPPORT: usize = 16;

/// Samples contributing along one axis at map index `u` for a field of `n`
/// samples: the overlap length of [0, n) with its reflection about u/2.
fn axis_support(u: usize, n: usize) -> usize {
    if u > 2 * n - 2 {
        return 0;
    }
    let hi = u.min(n - 1);
    let lo = u.saturating_sub(n - 1);
    hi - lo + 1
}

/// Threshold the normalized map against its local statistics (`value >
/// mean + beta·std` over `window`), then suppress non-maxima within
/// `nms_radius` half-pixel indices, keeping the strongest of each cluster.
pub fn threshold(map: &SymmetryMap, beta: f64, window: usize, nms_radius: f64) -> UnitsMap {
    assert!(map.normalized, "threshold expects a normalized map");
    let (h2, w2) = map.data.dim();
    let (mean, var) = filters::box_mean_var(&map.data, window);
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for ((u, v), &value) in map.data.indexed_iter() {
        if axis_support(u, h2 / 2) < MIN_AXIS_SUPPORT
            || axis_support(v, w2 / 2) < MIN_AXIS_SUPPORT
        {
            continue;
        }
        let cut = mean[[u, v]] + beta * var[[u, v]].sqrt();
        if value > cut {
            candidates.push((value, u, v));
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    candidates.truncate(20_000);

    // Greedy NMS over a coarse bucket grid.
    let r2 = nms_radius * nms_radius;
    let cell = nms_radius.max(1.0).ceil() as usize;
    let mut kept: Vec<(f64, usize, usize)> = Vec::new();
    let mut buckets: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    'cand: for &(score, u, v) in &candidates {
        let (bu, bv) = (u / cell, v / cell);
        for nu in bu.saturating_sub(1)..=bu + 1 {
            for nv in bv.saturating_sub(1)..=bv + 1 {
                if let Some(ids) = buckets.get(&(nu, nv)) {
                    for &id in ids {
                        let (_, ku, kv) = kept[id];
                        let du = u as f64 - ku as f64;
                        let dv = v as f64 - kv as f64;
                        if du * du + dv * dv <= r2 {
                            continue 'cand;
                        }
                    }
                }
            }
        }
        buckets.entry((bu, bv)).or_default().push(kept.len());
        kept.push((score, u, v));
        if kept.len() >= MAX_PEAKS {
            break;
        }
    }

    UnitsMap {
        points: kept
            .into_iter()
            .map(|(score, u, v)| PeakPoint {
                y: u as f64 / 2.0,
                x: v as f64 / 2.0,
                score,
            })
            .collect(),
    }
}

/// Four corner points of one detected watermark unit, ordered by lattice role
/// — (a, b), (a, b+1), (a+1, b+1), (a+1, b) — together with the cell's integer
/// lattice index. Using the lattice role (rather than any image-space order)
/// keeps the corner correspondence identical across all cells of one image;
/// the global orientation ambiguity this leaves is resolved by the state
/// search.
#[derive(Clone, Debug)]
pub struct UnitQuad {
    /// [y, x] image coordinates of the corners.
    pub corners: [[f64; 2]; 4],
    pub lattice_index: (i64, i64),
}

impl UnitQuad {
    fn edge(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.corners[j][0] - self.corners[i][0],
            self.corners[j][1] - self.corners[i][1],
        )
    }

    /// Convexity, opposite-side balance, and interior-angle checks.
    pub fn is_well_formed(&self) -> bool {
        let edges = [self.edge(0, 1), self.edge(1, 2), self.edge(2, 3), self.edge(3, 0)];
        let len = |e: (f64, f64)| (e.0 * e.0 + e.1 * e.1).sqrt();
        let lens: Vec<f64> = edges.iter().map(|&e| len(e)).collect();
        if lens.iter().any(|&l| l < 1e-9) {
            return false;
        }
        let ratio_ok = |a: f64, b: f64| (0.5..=2.0).contains(&(a / b));
        if !ratio_ok(lens[0], lens[2]) || !ratio_ok(lens[1], lens[3]) {
            return false;
        }
        let mut sign = 0.0f64;
        for i in 0..4 {
            let e1 = edges[i];
            let e2 = edges[(i + 1) % 4];
            let cross = e1.0 * e2.1 - e1.1 * e2.0;
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
            // Interior angle between -e1 and e2.
            let dot = -(e1.0 * e2.0 + e1.1 * e2.1);
            let angle = (dot / (lens[i] * lens[(i + 1) % 4])).clamp(-1.0, 1.0).acos();
            let deg = angle.to_degrees();
            if !(45.0..=135.0).contains(&deg) {
                return false;
            }
        }
        true
    }
}

const LINK_BAND: (f64, f64) = (0.6, 1.4);
const PREDICT_TOL: f64 = 0.35;
const SPACING_SCALES: [f64; 3] = [0.5, 1.0, 2.0];
const SEED_TRIES: usize = 3;

struct BucketIndex {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
    points: Vec<(f64, f64)>,
}

impl BucketIndex {
    fn new(points: &[PeakPoint], cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let coords: Vec<(f64, f64)> = points.iter().map(|p| (p.y, p.x)).collect();
        for (id, &(y, x)) in coords.iter().enumerate() {
            buckets
                .entry(((y / cell).floor() as i64, (x / cell).floor() as i64))
                .or_default()
                .push(id);
        }
        Self {
            cell,
            buckets,
            points: coords,
        }
    }

    /// Nearest point to (y, x) within `radius`, optionally filtered.
    fn nearest(&self, y: f64, x: f64, radius: f64, skip: impl Fn(usize) -> bool) -> Option<usize> {
        let rings = (radius / self.cell).ceil() as i64;
        let (by, bx) = ((y / self.cell).floor() as i64, (x / self.cell).floor() as i64);
        let mut best: Option<(f64, usize)> = None;
        for dy in -rings..=rings {
            for dx in -rings..=rings {
                if let Some(ids) = self.buckets.get(&(by + dy, bx + dx)) {
                    for &id in ids {
                        if skip(id) {
                            continue;
                        }
                        let (py, px) = self.points[id];
                        let d2 = (py - y) * (py - y) + (px - x) * (px - x);
                        if d2 <= radius * radius && best.map_or(true, |(bd, _)| d2 < bd) {
                            best = Some((d2, id));
                        }
                    }
                }
            }
        }
        best.map(|(_, id)| id)
    }
}

#[derive(Clone, Copy)]
struct Basis {
    ea: (f64, f64),
    eb: (f64, f64),
}

struct Lattice {
    assignment: HashMap<usize, (i64, i64)>,
    conflicted: HashSet<usize>,
}

fn vec_len(v: (f64, f64)) -> f64 {
    (v.0 * v.0 + v.1 * v.1).sqrt()
}

/// Grow an integer lattice from `seed` with expected axis spacings
/// (`spacing_a`, `spacing_b`) in pixels.
fn grow_lattice(
    points: &[PeakPoint],
    index: &BucketIndex,
    seed: usize,
    spacing_a: f64,
    spacing_b: f64,
) -> Option<Lattice> {
    let pos = |id: usize| (points[id].y, points[id].x);
    let (sy, sx) = pos(seed);

    let lo = LINK_BAND.0 * spacing_a.min(spacing_b);
    let hi = LINK_BAND.1 * spacing_a.max(spacing_b);

    // First basis vector: the nearest point in the admissible ring.
    let n1 = index.nearest(sy, sx, hi, |id| {
        if id == seed {
            return true;
        }
        let (py, px) = pos(id);
        vec_len((py - sy, px - sx)) < lo
    })?;
    let e1 = (pos(n1).0 - sy, pos(n1).1 - sx);

    // Second basis vector: roughly perpendicular to the first.
    let n2 = index.nearest(sy, sx, hi, |id| {
        if id == seed || id == n1 {
            return true;
        }
        let (py, px) = pos(id);
        let v = (py - sy, px - sx);
        let l = vec_len(v);
        if l < lo {
            return true;
        }
        let cosang = (v.0 * e1.0 + v.1 * e1.1) / (l * vec_len(e1));
        !(-0.55..=0.55).contains(&cosang)
    })?;
    let e2 = (pos(n2).0 - sy, pos(n2).1 - sx);

    // Label the axes by spacing when the two differ; arbitrary for square
    // lattices, where the state search absorbs the choice.
    let (ea, eb) = if (vec_len(e1) - spacing_a).abs() + (vec_len(e2) - spacing_b).abs()
        <= (vec_len(e1) - spacing_b).abs() + (vec_len(e2) - spacing_a).abs()
    {
        (e1, e2)
    } else {
        (e2, e1)
    };

    let mut assignment: HashMap<usize, (i64, i64)> = HashMap::new();
    let mut basis: HashMap<usize, Basis> = HashMap::new();
    let mut conflicted: HashSet<usize> = HashSet::new();
    assignment.insert(seed, (0, 0));
    basis.insert(seed, Basis { ea, eb });
    let mut taken: HashMap<(i64, i64), usize> = HashMap::new();
    taken.insert((0, 0), seed);

    let mut queue = VecDeque::new();
    queue.push_back(seed);
    while let Some(cur) = queue.pop_front() {
        let (a, b) = assignment[&cur];
        let bas = basis[&cur];
        let (cy, cx) = pos(cur);
        let steps = [
            (bas.ea, (1i64, 0i64), true, 1.0),
            ((-bas.ea.0, -bas.ea.1), (-1, 0), true, -1.0),
            (bas.eb, (0, 1), false, 1.0),
            ((-bas.eb.0, -bas.eb.1), (0, -1), false, -1.0),
        ];
        for (dir, didx, along_a, sign) in steps {
            let target = (a + didx.0, b + didx.1);
            if taken.contains_key(&target) {
                continue;
            }
            let (ty, tx) = (cy + dir.0, cx + dir.1);
            let tol = PREDICT_TOL * vec_len(dir);
            let Some(found) = index.nearest(ty, tx, tol, |_| false) else {
                continue;
            };
            if let Some(&existing) = assignment.get(&found) {
                if existing != target {
                    conflicted.insert(found);
                }
                continue;
            }
            let (fy, fx) = pos(found);
            let actual = (sign * (fy - cy), sign * (fx - cx));
            let new_basis = if along_a {
                Basis {
                    ea: actual,
                    eb: bas.eb,
                }
            } else {
                Basis {
                    ea: bas.ea,
                    eb: actual,
                }
            };
            assignment.insert(found, target);
            basis.insert(found, new_basis);
            taken.insert(target, found);
            queue.push_back(found);
        }
    }

    Some(Lattice {
        assignment,
        conflicted,
    })
}

fn cells_of(lattice: &Lattice, points: &[PeakPoint]) -> Vec<UnitQuad> {
    let mut by_index: HashMap<(i64, i64), usize> = HashMap::new();
    for (&id, &idx) in &lattice.assignment {
        if !lattice.conflicted.contains(&id) {
            by_index.insert(idx, id);
        }
    }
    let mut quads = Vec::new();
    for (&(a, b), &tl) in &by_index {
        let (Some(&tr), Some(&br), Some(&bl)) = (
            by_index.get(&(a, b + 1)),
            by_index.get(&(a + 1, b + 1)),
            by_index.get(&(a + 1, b)),
        ) else {
            continue;
        };
        let corner = |id: usize| [points[id].y, points[id].x];
        let quad = UnitQuad {
            corners: [corner(tl), corner(tr), corner(br), corner(bl)],
            lattice_index: (a, b),
        };
        if quad.is_well_formed() {
            quads.push(quad);
        }
    }
    quads.sort_by_key(|q| q.lattice_index);
    quads
}

/// Assemble the thresholded peaks into complete unit cells by greedy lattice
/// growth. `expected` is the nominal unit size (rows, cols) in pixels; a
/// coarse spacing search over half/nominal/double handles scale changes beyond
/// the per-link tolerance.
pub fn build_quads(map: &UnitsMap, expected: (f64, f64)) -> Result<Vec<UnitQuad>> {
    if map.points.len() < 4 {
        return Err(Error::SyncFailed(format!(
            "only {} candidate corners",
            map.points.len()
        )));
    }

    let mut seeds: Vec<usize> = (0..map.points.len()).collect();
    seeds.sort_by(|&a, &b| map.points[b].score.total_cmp(&map.points[a].score));
    seeds.truncate(SEED_TRIES);

    let index = BucketIndex::new(&map.points, expected.0.max(expected.1));

    let mut best: Option<Vec<UnitQuad>> = None;
    for &scale_a in &SPACING_SCALES {
        for &scale_b in &SPACING_SCALES {
            for &seed in &seeds {
                let Some(lattice) = grow_lattice(
                    &map.points,
                    &index,
                    seed,
                    scale_a * expected.0,
                    scale_b * expected.1,
                ) else {
                    continue;
                };
                let quads = cells_of(&lattice, &map.points);
                if best.as_ref().map_or(true, |b| quads.len() > b.len()) {
                    best = Some(quads);
                }
            }
        }
    }

    match best {
        Some(quads) if !quads.is_empty() => Ok(quads),
        _ => Err(Error::SyncFailed("no complete unit cell found".into())),
    }
}

/// Solve the 4-point homography sending the canonical unit rectangle of size
/// (rows, cols) onto `quad`, then pull the unit back by bilinear sampling of
/// `source`. Out-of-support samples are zero.
pub fn rectify(
    source: &Array2<f64>,
    quad: &UnitQuad,
    size: (usize, usize),
) -> Result<WatermarkUnit> {
    let (m, n) = size;
    // Corner positions of the rectangle in unit-local pixel-center
    // coordinates; corners sit half a pixel outside the sample grid.
    let rect = [
        (-0.5, -0.5),
        (n as f64 - 0.5, -0.5),
        (n as f64 - 0.5, m as f64 - 0.5),
        (-0.5, m as f64 - 0.5),
    ];
    let dest: Vec<(f64, f64)> = quad
        .corners
        .iter()
        .map(|c| (c[1], c[0])) // (x, y)
        .collect();

    let h = solve_homography(&rect, &dest)?;
    let data = Array2::from_shape_fn((m, n), |(i, j)| {
        let (u, v) = (j as f64, i as f64);
        let w = h[6] * u + h[7] * v + 1.0;
        if w.abs() < 1e-12 {
            return 0.0;
        }
        let x = (h[0] * u + h[1] * v + h[2]) / w;
        let y = (h[3] * u + h[4] * v + h[5]) / w;
        filters::bilinear(source, y, x).unwrap_or(0.0)
    });
    Ok(WatermarkUnit::from_data(data))
}

/// Direct linear transform for 4 point pairs, normalized so h[8] = 1.
fn solve_homography(src: &[(f64, f64); 4], dst: &[(f64, f64)]) -> Result<[f64; 8]> {
    let mut a = [[0.0f64; 9]; 8];
    for k in 0..4 {
        let (u, v) = src[k];
        let (x, y) = dst[k];
        a[2 * k] = [u, v, 1.0, 0.0, 0.0, 0.0, -u * x, -v * x, x];
        a[2 * k + 1] = [0.0, 0.0, 0.0, u, v, 1.0, -u * y, -v * y, y];
    }
    // Gaussian elimination with partial pivoting on the augmented system.
    for col in 0..8 {
        let pivot = (col..8)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-9 {
            return Err(Error::DegenerateQuad);
        }
        a.swap(col, pivot);
        let p = a[col][col];
        for item in a[col].iter_mut() {
            *item /= p;
        }
        for row in 0..8 {
            if row != col {
                let f = a[row][col];
                for c in 0..9 {
                    a[row][c] -= f * a[col][c];
                }
            }
        }
    }
    let mut h = [0.0f64; 8];
    for (i, hv) in h.iter_mut().enumerate() {
        *hv = a[i][8];
    }
    Ok(h)
}
