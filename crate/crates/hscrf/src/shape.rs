//! Shape priors over detection boxes and the mask accuracy metrics used to
//! compare them.
//!
//! All masks here are cropped to a bounding box. Binary training masks live
//! at their native raster; averaging and clustering happen on a common 10x10
//! raster produced by area-mean resampling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

/// Raster side used for mask averaging and clustering.
pub const COMMON_RASTER: u32 = 10;

pub type ShapeResult<T> = Result<T, ShapeError>;

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("empty mask list")]
    EmptyInput,
    #[error("mask rasters differ: {0}x{1} vs {2}x{3}")]
    RasterMismatch(u32, u32, u32, u32),
    #[error("candidate {0} has an empty boundary")]
    EmptyBoundary(usize),
    #[error("cluster count must be positive")]
    ZeroClusters,
    #[error("cannot form {k} clusters from {n} masks")]
    TooFewMasks { k: usize, n: usize },
}

/// Binary mask cropped to a bounding box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), (width as usize) * (height as usize));
        Mask { width, height, data }
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        Mask {
            width,
            height,
            data: vec![value; (width as usize) * (height as usize)],
        }
    }

    pub fn cells(&self) -> usize {
        self.data.len()
    }

    pub fn at(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize]
    }

    pub fn complement(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|b| !b).collect(),
        }
    }

    pub fn fg_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Real-valued mask; cell values are foreground confidences in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl SoftMask {
    pub fn at(&self, x: u32, y: u32) -> f64 {
        self.data[(y * self.width + x) as usize]
    }

    /// Value at normalized coordinates `(u, v)` in [0, 1) of the mask's box.
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let x = ((u * self.width as f64) as u32).min(self.width - 1);
        let y = ((v * self.height as f64) as u32).min(self.height - 1);
        self.at(x, y)
    }
}

fn check_same_raster(a_w: u32, a_h: u32, b_w: u32, b_h: u32) -> ShapeResult<()> {
    if a_w != b_w || a_h != b_h {
        return Err(ShapeError::RasterMismatch(a_w, a_h, b_w, b_h));
    }
    Ok(())
}

/// Area-mean resampling of a binary mask onto a `tw` x `th` raster. Each
/// target cell holds the exact fractional foreground coverage under it.
pub fn to_common_raster(mask: &Mask, tw: u32, th: u32) -> SoftMask {
    let (sw, sh) = (mask.width as f64, mask.height as f64);
    let mut data = vec![0.0; (tw as usize) * (th as usize)];
    for ty in 0..th {
        let y_lo = ty as f64 * sh / th as f64;
        let y_hi = (ty + 1) as f64 * sh / th as f64;
        for tx in 0..tw {
            let x_lo = tx as f64 * sw / tw as f64;
            let x_hi = (tx + 1) as f64 * sw / tw as f64;
            let mut acc = 0.0;
            let mut area = 0.0;
            for sy in y_lo.floor() as u32..(y_hi.ceil() as u32).min(mask.height) {
                let oy = (y_hi.min((sy + 1) as f64) - y_lo.max(sy as f64)).max(0.0);
                for sx in x_lo.floor() as u32..(x_hi.ceil() as u32).min(mask.width) {
                    let ox = (x_hi.min((sx + 1) as f64) - x_lo.max(sx as f64)).max(0.0);
                    let w = ox * oy;
                    area += w;
                    if mask.at(sx, sy) {
                        acc += w;
                    }
                }
            }
            data[(ty * tw + tx) as usize] = if area > 0.0 { acc / area } else { 0.0 };
        }
    }
    SoftMask { width: tw, height: th, data }
}

pub fn binarize(soft: &SoftMask, threshold: f64) -> Mask {
    Mask {
        width: soft.width,
        height: soft.height,
        data: soft.data.iter().map(|&v| v >= threshold).collect(),
    }
}

/// Per-cell mean of binary masks that already share a raster.
pub fn average_component_mask(masks: &[Mask]) -> ShapeResult<SoftMask> {
    let first = masks.first().ok_or(ShapeError::EmptyInput)?;
    let mut data = vec![0.0; first.cells()];
    for m in masks {
        check_same_raster(first.width, first.height, m.width, m.height)?;
        for (d, &b) in data.iter_mut().zip(&m.data) {
            if b {
                *d += 1.0;
            }
        }
    }
    let n = masks.len() as f64;
    for d in &mut data {
        *d /= n;
    }
    Ok(SoftMask {
        width: first.width,
        height: first.height,
        data,
    })
}

/// Flattened common-raster feature vector used for clustering.
pub fn mask_to_vector(mask: &Mask) -> Vec<f64> {
    to_common_raster(mask, COMMON_RASTER, COMMON_RASTER).data
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct KmeansRun {
    assignment: Vec<usize>,
    centers: Vec<Vec<f64>>,
    sse: f64,
}

fn kmeans_once(vectors: &[Vec<f64>], k: usize, rng: &mut ChaCha12Rng) -> KmeansRun {
    let n = vectors.len();
    // k-means++ seeding.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(vectors[rng.gen_range(0..n)].clone());
    let mut d2: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut t = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if t < w {
                    pick = i;
                    break;
                }
                t -= w;
            }
            pick
        } else {
            // All remaining points coincide with a center; take the first one
            // not yet chosen so k distinct slots still get filled.
            (0..n)
                .find(|&i| !centers.iter().any(|c| c == &vectors[i]))
                .unwrap_or(0)
        };
        centers.push(vectors[idx].clone());
        let last = centers.last().unwrap().clone();
        for (i, v) in vectors.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(v, &last));
        }
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, v) in vectors.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = sq_dist(v, &centers[0]);
            for (c, center) in centers.iter().enumerate().skip(1) {
                let d = sq_dist(v, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        // Recompute centers; an empty cluster steals the point farthest from
        // its current center.
        let dim = vectors[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, v) in vectors.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, x) in sums[assignment[i]].iter_mut().zip(v) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(&vectors[a], &centers[assignment[a]]);
                        let db = sq_dist(&vectors[b], &centers[assignment[b]]);
                        da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                    })
                    .unwrap();
                assignment[far] = c;
                centers[c] = vectors[far].clone();
                changed = true;
                continue;
            }
            for (j, s) in sums[c].iter().enumerate() {
                centers[c][j] = s / counts[c] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    let sse = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| sq_dist(v, &centers[assignment[i]]))
        .sum();
    KmeansRun { assignment, centers, sse }
}

/// Cluster masks on the common raster and return one representative binary
/// mask per cluster: the input mask closest to each cluster center.
/// Deterministic for a fixed seed; runs several seeded restarts and keeps the
/// lowest within-cluster squared error.
pub fn cluster_masks(masks: &[Mask], k: usize, seed: u64) -> ShapeResult<Vec<Mask>> {
    if k == 0 {
        return Err(ShapeError::ZeroClusters);
    }
    if masks.len() < k {
        return Err(ShapeError::TooFewMasks { k, n: masks.len() });
    }
    let vectors: Vec<Vec<f64>> = masks.iter().map(mask_to_vector).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut best: Option<KmeansRun> = None;
    for _ in 0..8 {
        let run = kmeans_once(&vectors, k, &mut rng);
        if best.as_ref().map_or(true, |b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    let run = best.unwrap();
    let mut reps = Vec::with_capacity(k);
    for c in 0..k {
        let mut best_i = None;
        let mut best_d = f64::INFINITY;
        for (i, v) in vectors.iter().enumerate() {
            if run.assignment[i] != c {
                continue;
            }
            let d = sq_dist(v, &run.centers[c]);
            if d < best_d {
                best_d = d;
                best_i = Some(i);
            }
        }
        reps.push(masks[best_i.expect("no empty clusters after reassignment")].clone());
    }
    Ok(reps)
}

/// Within-cluster squared error, exposed so independent restarts can be
/// compared in tests.
pub fn clustering_sse(vectors: &[Vec<f64>], assignment: &[usize], centers: &[Vec<f64>]) -> f64 {
    vectors
        .iter()
        .zip(assignment)
        .map(|(v, &c)| sq_dist(v, &centers[c]))
        .sum()
}

const DT_FAR: f64 = 1e12;

// One-dimensional squared distance transform (lower envelope of parabolas).
// All inputs are finite (empty columns carry the DT_FAR sentinel), so the
// crossing point is always well defined.
fn dt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let crossing = |q: usize, p: usize| -> f64 {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64)
    };
    for q in 1..n {
        let mut s = crossing(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = crossing(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        d[q] = ((q as f64) - (p as f64)).powi(2) + f[p];
    }
}

/// Exact Euclidean distance transform: per-cell distance to the nearest
/// `true` cell. With no `true` cells at all every value is a very large
/// finite sentinel.
pub fn distance_transform(edges: &Mask) -> Vec<f64> {
    let (w, h) = (edges.width as usize, edges.height as usize);
    let mut grid: Vec<f64> = edges
        .data
        .iter()
        .map(|&e| if e { 0.0 } else { DT_FAR })
        .collect();
    let mut col = vec![0.0; h];
    let mut out_col = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = grid[y * w + x];
        }
        dt_1d(&col, &mut out_col);
        for y in 0..h {
            grid[y * w + x] = out_col[y];
        }
    }
    let mut row = vec![0.0; w];
    let mut out_row = vec![0.0; w];
    for y in 0..h {
        row.copy_from_slice(&grid[y * w..(y + 1) * w]);
        dt_1d(&row, &mut out_row);
        for x in 0..w {
            grid[y * w + x] = out_row[x].sqrt();
        }
    }
    grid
}

/// Inner boundary: foreground cells 4-adjacent to a background cell.
pub fn boundary_cells(mask: &Mask) -> Vec<usize> {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.at(x as u32, y as u32) {
                continue;
            }
            let neighbors = [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)];
            let touches_bg = neighbors.iter().any(|&(nx, ny)| {
                nx >= 0 && nx < w && ny >= 0 && ny < h && !mask.at(nx as u32, ny as u32)
            });
            if touches_bg {
                out.push((y * w + x) as usize);
            }
        }
    }
    out
}

/// Pick the candidate whose boundary lies closest to the edge map: the score
/// is the mean distance-transform value along the candidate's inner boundary,
/// the minimizer wins, ties break to the lowest index.
pub fn distance_transform_select(edges: &Mask, candidates: &[Mask]) -> ShapeResult<(usize, f64)> {
    if candidates.is_empty() {
        return Err(ShapeError::EmptyInput);
    }
    let dt = distance_transform(edges);
    let mut best: Option<(usize, f64)> = None;
    for (i, cand) in candidates.iter().enumerate() {
        check_same_raster(edges.width, edges.height, cand.width, cand.height)?;
        let boundary = boundary_cells(cand);
        if boundary.is_empty() {
            return Err(ShapeError::EmptyBoundary(i));
        }
        let score = boundary.iter().map(|&c| dt[c]).sum::<f64>() / boundary.len() as f64;
        if best.map_or(true, |(_, s)| score < s) {
            best = Some((i, score));
        }
    }
    Ok(best.unwrap())
}

/// 1 for segments that lie fully within the box (touching the inner edge is
/// inside), 0 otherwise.
pub fn naive_box_prior(
    bbox: &crate::data::BBox,
    grid: crate::data::GridDims,
    segment_cells: &[Vec<usize>],
) -> Vec<bool> {
    let w = grid.width;
    segment_cells
        .iter()
        .map(|cells| {
            !cells.is_empty()
                && cells.iter().all(|&c| {
                    let (x, y) = ((c as u32) % w, (c as u32) / w);
                    bbox.contains(x, y)
                })
        })
        .collect()
}

/// Project a mask onto segment-constant form: each segment turns fully on or
/// off by pixel majority (ties go to background). `segments` are cell-index
/// lists in the mask raster; cells outside every segment stay background.
pub fn snap_mask_to_segments(gt: &Mask, segments: &[Vec<usize>]) -> Mask {
    let mut data = vec![false; gt.cells()];
    for cells in segments {
        let fg = cells.iter().filter(|&&c| gt.data[c]).count();
        if 2 * fg > cells.len() {
            for &c in cells {
                data[c] = true;
            }
        }
    }
    Mask {
        width: gt.width,
        height: gt.height,
        data,
    }
}

/// Pixel accuracy normalized across foreground and background:
/// (TPR + TNR) / 2, so chance performance is 0.5. When the reference mask is
/// all-foreground or all-background only one rate is defined; it is returned
/// with the `degenerate` flag set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedAccuracy {
    pub value: f64,
    pub degenerate: bool,
}

pub fn normalized_mask_accuracy(pred: &Mask, gt: &Mask) -> ShapeResult<NormalizedAccuracy> {
    check_same_raster(pred.width, pred.height, gt.width, gt.height)?;
    let mut tp = 0u64;
    let mut tn = 0u64;
    let mut fg = 0u64;
    let mut bg = 0u64;
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        if g {
            fg += 1;
            if p {
                tp += 1;
            }
        } else {
            bg += 1;
            if !p {
                tn += 1;
            }
        }
    }
    let acc = match (fg, bg) {
        (0, 0) => NormalizedAccuracy { value: 1.0, degenerate: true },
        (0, _) => NormalizedAccuracy {
            value: tn as f64 / bg as f64,
            degenerate: true,
        },
        (_, 0) => NormalizedAccuracy {
            value: tp as f64 / fg as f64,
            degenerate: true,
        },
        _ => NormalizedAccuracy {
            value: (tp as f64 / fg as f64 + tn as f64 / bg as f64) / 2.0,
            degenerate: false,
        },
    };
    Ok(acc)
}

/// Plain (unnormalized) pixel accuracy over the box.
pub fn pixel_accuracy(pred: &Mask, gt: &Mask) -> ShapeResult<f64> {
    check_same_raster(pred.width, pred.height, gt.width, gt.height)?;
    if pred.cells() == 0 {
        return Ok(1.0);
    }
    let agree = pred.data.iter().zip(&gt.data).filter(|(p, g)| p == g).count();
    Ok(agree as f64 / pred.cells() as f64)
}

/// The candidate with the highest normalized accuracy against `gt`; ties
/// break to the lowest index.
pub fn oracle_best(candidates: &[Mask], gt: &Mask) -> ShapeResult<(usize, f64)> {
    if candidates.is_empty() {
        return Err(ShapeError::EmptyInput);
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, cand) in candidates.iter().enumerate() {
        let acc = normalized_mask_accuracy(cand, gt)?.value;
        if best.map_or(true, |(_, b)| acc > b) {
            best = Some((i, acc));
        }
    }
    Ok(best.unwrap())
}

/// Per-class training masks with their generating component ids.
#[derive(Debug, Clone, Default)]
pub struct ClassMasks {
    pub masks: Vec<Mask>,
    pub component_ids: Vec<usize>,
}

/// Training-mask library: all binary masks per class plus the per-class
/// detector component count, which also fixes the cluster count.
#[derive(Debug, Clone)]
pub struct MaskLibrary {
    pub per_class: Vec<ClassMasks>,
    pub components_per_class: Vec<usize>,
}

impl MaskLibrary {
    pub fn new(num_classes: usize, components_per_class: Vec<usize>) -> Self {
        MaskLibrary {
            per_class: vec![ClassMasks::default(); num_classes],
            components_per_class,
        }
    }

    pub fn add(&mut self, class_id: usize, component_id: usize, mask: Mask) {
        self.per_class[class_id].masks.push(mask);
        self.per_class[class_id].component_ids.push(component_id);
    }

    pub fn training_masks(&self, class_id: usize) -> &[Mask] {
        &self.per_class[class_id].masks
    }

    /// Soft average of one component's training masks on the common raster.
    pub fn component_average(&self, class_id: usize, component_id: usize) -> Option<SoftMask> {
        let entry = &self.per_class[class_id];
        let members: Vec<Mask> = entry
            .masks
            .iter()
            .zip(&entry.component_ids)
            .filter(|(_, &c)| c == component_id)
            .map(|(m, _)| binarize(&to_common_raster(m, COMMON_RASTER, COMMON_RASTER), 0.5))
            .collect();
        average_component_mask(&members).ok()
    }

    /// Soft averages for every component of a class, indexed by component id.
    pub fn component_averages(&self, class_id: usize) -> Vec<Option<SoftMask>> {
        (0..self.components_per_class.get(class_id).copied().unwrap_or(0))
            .map(|c| self.component_average(class_id, c))
            .collect()
    }

    /// Cluster representatives for a class; the cluster count equals the
    /// class's detector component count (capped by available masks).
    pub fn cluster_representatives(&self, class_id: usize, seed: u64) -> ShapeResult<Vec<Mask>> {
        let k = self.components_per_class[class_id].min(self.per_class[class_id].masks.len());
        if k == 0 {
            return Err(ShapeError::EmptyInput);
        }
        let common: Vec<Mask> = self.per_class[class_id]
            .masks
            .iter()
            .map(|m| binarize(&to_common_raster(m, COMMON_RASTER, COMMON_RASTER), 0.5))
            .collect();
        cluster_masks(&common, k, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from_rows(rows: &[&[u8]]) -> Mask {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        let data = rows.iter().flat_map(|r| r.iter().map(|&v| v != 0)).collect();
        Mask::new(w, h, data)
    }

    #[test]
    fn average_is_per_cell_mean() {
        let a = mask_from_rows(&[&[1, 0], &[1, 0]]);
        let b = mask_from_rows(&[&[1, 1], &[1, 1]]);
        let avg = average_component_mask(&[a, b]).unwrap();
        assert_eq!(avg.data, vec![1.0, 0.5, 1.0, 0.5]);
    }

    #[test]
    fn average_of_single_mask_is_itself() {
        let a = mask_from_rows(&[&[1, 0], &[0, 1]]);
        let avg = average_component_mask(&[a.clone()]).unwrap();
        let expect: Vec<f64> = a.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        assert_eq!(avg.data, expect);
    }

    #[test]
    fn average_matches_independent_recompute() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let masks: Vec<Mask> = (0..10)
            .map(|_| Mask::new(4, 3, (0..12).map(|_| rng.gen_bool(0.5)).collect()))
            .collect();
        let avg = average_component_mask(&masks).unwrap();
        for c in 0..12 {
            let mean = masks.iter().filter(|m| m.data[c]).count() as f64 / masks.len() as f64;
            assert!((avg.data[c] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_preserves_mean_coverage() {
        let m = mask_from_rows(&[&[1, 1, 0, 0], &[1, 1, 0, 0]]);
        let soft = to_common_raster(&m, 10, 10);
        let mean: f64 = soft.data.iter().sum::<f64>() / soft.data.len() as f64;
        assert!((mean - 0.5).abs() < 1e-9);
    }

    #[test]
    fn cluster_each_own_when_k_equals_n() {
        let masks = vec![
            mask_from_rows(&[&[1, 0], &[0, 0]]),
            mask_from_rows(&[&[0, 1], &[0, 0]]),
            mask_from_rows(&[&[0, 0], &[1, 1]]),
        ];
        let reps = cluster_masks(&masks, 3, 5).unwrap();
        let mut got: Vec<Vec<bool>> = reps.iter().map(|m| m.data.clone()).collect();
        let mut want: Vec<Vec<bool>> = masks.iter().map(|m| m.data.clone()).collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn cluster_of_identical_masks_returns_it() {
        let m = mask_from_rows(&[&[1, 1], &[0, 1]]);
        let reps = cluster_masks(&[m.clone(), m.clone()], 1, 9).unwrap();
        assert_eq!(reps, vec![m]);
    }

    #[test]
    fn clustering_close_to_many_random_restarts() {
        // Independent oracle: Lloyd from 1000 random center initializations.
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let masks: Vec<Mask> = (0..50)
            .map(|_| {
                let archetype = rng.gen_range(0..3u32);
                let mut data = vec![false; 36];
                for (i, d) in data.iter_mut().enumerate() {
                    let on = match archetype {
                        0 => i % 6 < 3,
                        1 => i / 6 < 3,
                        _ => (i % 6 + i / 6) % 2 == 0,
                    };
                    *d = on ^ rng.gen_bool(0.1);
                }
                Mask::new(6, 6, data)
            })
            .collect();
        let vectors: Vec<Vec<f64>> = masks.iter().map(mask_to_vector).collect();

        let mut best_oracle = f64::INFINITY;
        for _ in 0..1000 {
            let mut centers: Vec<Vec<f64>> = Vec::new();
            let mut guard = 0;
            while centers.len() < 3 && guard < 1000 {
                let c = vectors[rng.gen_range(0..vectors.len())].clone();
                if !centers.contains(&c) {
                    centers.push(c);
                }
                guard += 1;
            }
            let mut assignment = vec![0usize; vectors.len()];
            for _ in 0..100 {
                let mut changed = false;
                for (i, v) in vectors.iter().enumerate() {
                    let best = (0..3)
                        .min_by(|&a, &b| {
                            sq_dist(v, &centers[a])
                                .partial_cmp(&sq_dist(v, &centers[b]))
                                .unwrap()
                        })
                        .unwrap();
                    if assignment[i] != best {
                        assignment[i] = best;
                        changed = true;
                    }
                }
                for c in 0..3 {
                    let members: Vec<&Vec<f64>> = vectors
                        .iter()
                        .zip(&assignment)
                        .filter(|(_, &a)| a == c)
                        .map(|(v, _)| v)
                        .collect();
                    if members.is_empty() {
                        continue;
                    }
                    let mut mean = vec![0.0; vectors[0].len()];
                    for v in &members {
                        for (m, x) in mean.iter_mut().zip(v.iter()) {
                            *m += x;
                        }
                    }
                    for m in &mut mean {
                        *m /= members.len() as f64;
                    }
                    centers[c] = mean;
                }
                if !changed {
                    break;
                }
            }
            let sse = clustering_sse(&vectors, &assignment, &centers);
            best_oracle = best_oracle.min(sse);
        }

        // Our clustering, scored the same way: assign to nearest
        // representative, recompute means, measure SSE.
        let reps = cluster_masks(&masks, 3, 123).unwrap();
        let rep_vecs: Vec<Vec<f64>> = reps.iter().map(mask_to_vector).collect();
        let assignment: Vec<usize> = vectors
            .iter()
            .map(|v| {
                (0..3)
                    .min_by(|&a, &b| {
                        sq_dist(v, &rep_vecs[a])
                            .partial_cmp(&sq_dist(v, &rep_vecs[b]))
                            .unwrap()
                    })
                    .unwrap()
            })
            .collect();
        let mut centers = vec![vec![0.0; vectors[0].len()]; 3];
        let mut counts = vec![0usize; 3];
        for (v, &a) in vectors.iter().zip(&assignment) {
            counts[a] += 1;
            for (c, x) in centers[a].iter_mut().zip(v) {
                *c += x;
            }
        }
        for (c, n) in centers.iter_mut().zip(&counts) {
            for x in c.iter_mut() {
                *x /= (*n).max(1) as f64;
            }
        }
        let ours = clustering_sse(&vectors, &assignment, &centers);
        assert!(
            ours <= best_oracle * 1.05 + 1e-9,
            "ours {ours} vs oracle {best_oracle}"
        );
    }

    #[test]
    fn dt_zero_on_matching_boundary() {
        let cand = mask_from_rows(&[
            &[0, 0, 0, 0, 0],
            &[0, 1, 1, 1, 0],
            &[0, 1, 1, 1, 0],
            &[0, 0, 0, 0, 0],
        ]);
        let mut edge_data = vec![false; cand.cells()];
        for c in boundary_cells(&cand) {
            edge_data[c] = true;
        }
        let edges = Mask::new(cand.width, cand.height, edge_data);
        let far = mask_from_rows(&[
            &[1, 1, 0, 0, 0],
            &[1, 1, 0, 0, 0],
            &[0, 0, 0, 0, 0],
            &[0, 0, 0, 0, 0],
        ]);
        let (idx, score) = distance_transform_select(&edges, &[far, cand.clone()]).unwrap();
        assert_eq!(idx, 1);
        assert_eq!(score, 0.0);
    }

    #[test]
    fn dt_positive_when_shifted() {
        let edges = mask_from_rows(&[
            &[0, 0, 0, 0, 0, 0],
            &[0, 1, 1, 0, 0, 0],
            &[0, 1, 1, 0, 0, 0],
            &[0, 0, 0, 0, 0, 0],
        ]);
        let cand = mask_from_rows(&[
            &[0, 0, 0, 0, 0, 0],
            &[0, 0, 0, 1, 1, 0],
            &[0, 0, 0, 1, 1, 0],
            &[0, 0, 0, 0, 0, 0],
        ]);
        let (_, score) = distance_transform_select(&edges, &[cand]).unwrap();
        assert!(score > 0.0);
    }

    #[test]
    fn dt_matches_naive_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (w, h) = (rng.gen_range(3..12u32), rng.gen_range(3..12u32));
            let cells = (w * h) as usize;
            let edges = Mask::new(w, h, (0..cells).map(|_| rng.gen_bool(0.2)).collect());
            let dt = distance_transform(&edges);
            let sources: Vec<(i64, i64)> = (0..cells)
                .filter(|&c| edges.data[c])
                .map(|c| ((c as u32 % w) as i64, (c as u32 / w) as i64))
                .collect();
            for c in 0..cells {
                let (x, y) = ((c as u32 % w) as i64, (c as u32 / w) as i64);
                let naive = sources
                    .iter()
                    .map(|&(sx, sy)| (((x - sx).pow(2) + (y - sy).pow(2)) as f64).sqrt())
                    .fold(f64::INFINITY, f64::min);
                if naive.is_finite() {
                    assert!((dt[c] - naive).abs() < 1e-9, "cell {c}: {} vs {naive}", dt[c]);
                } else {
                    assert!(dt[c] > 1e5);
                }
            }
        }
    }

    #[test]
    fn dt_selection_matches_scan_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let (w, h) = (9u32, 7u32);
        let cells = (w * h) as usize;
        let edges = Mask::new(w, h, (0..cells).map(|_| rng.gen_bool(0.15)).collect());
        let candidates: Vec<Mask> = (0..20)
            .map(|_| {
                // Solid random rectangles: boundaries are never empty.
                let x0 = rng.gen_range(0..w - 2);
                let y0 = rng.gen_range(0..h - 2);
                let x1 = rng.gen_range(x0 + 1..w);
                let y1 = rng.gen_range(y0 + 1..h);
                let data = (0..cells)
                    .map(|c| {
                        let (x, y) = (c as u32 % w, c as u32 / w);
                        x >= x0 && x <= x1 && y >= y0 && y <= y1
                    })
                    .collect();
                Mask::new(w, h, data)
            })
            .collect();
        let (idx, score) = distance_transform_select(&edges, &candidates).unwrap();
        let sources: Vec<(i64, i64)> = (0..cells)
            .filter(|&c| edges.data[c])
            .map(|c| ((c as u32 % w) as i64, (c as u32 / w) as i64))
            .collect();
        let naive_score = |m: &Mask| {
            let b = boundary_cells(m);
            b.iter()
                .map(|&c| {
                    let (x, y) = ((c as u32 % w) as i64, (c as u32 / w) as i64);
                    sources
                        .iter()
                        .map(|&(sx, sy)| (((x - sx).pow(2) + (y - sy).pow(2)) as f64).sqrt())
                        .fold(f64::INFINITY, f64::min)
                })
                .sum::<f64>()
                / b.len() as f64
        };
        let mut best = (0usize, f64::INFINITY);
        for (i, cand) in candidates.iter().enumerate() {
            let s = naive_score(cand);
            if s < best.1 {
                best = (i, s);
            }
        }
        assert_eq!(idx, best.0);
        assert!((score - best.1).abs() < 1e-9);
    }

    #[test]
    fn naive_prior_inclusive_boundary() {
        use crate::data::{BBox, GridDims};
        let grid = GridDims { height: 4, width: 6 };
        let bbox = BBox { x0: 1, y0: 1, x1: 4, y1: 3 };
        // Segment a inside, b straddling, c exactly filling the box.
        let seg_a = vec![6 + 2];
        let seg_b = vec![6 + 3, 6 + 4];
        let seg_c: Vec<usize> = (1..3usize)
            .flat_map(|y| (1..4usize).map(move |x| y * 6 + x))
            .collect();
        let out = naive_box_prior(&bbox, grid, &[seg_a, seg_b, seg_c]);
        assert_eq!(out, vec![true, false, true]);
    }

    #[test]
    fn snap_majority_and_tie_rules() {
        let mut data = vec![false; 20];
        for d in data.iter_mut().take(10) {
            *d = true;
        }
        for d in data.iter_mut().skip(10).take(4) {
            *d = true;
        }
        let gt = Mask::new(20, 1, data);
        let seg0: Vec<usize> = (0..10).collect();
        let seg1: Vec<usize> = (10..20).collect();
        let snapped = snap_mask_to_segments(&gt, &[seg0.clone(), seg1.clone()]);
        assert!(seg0.iter().all(|&c| snapped.data[c]));
        assert!(seg1.iter().all(|&c| !snapped.data[c]));
        // Exact ties go to background.
        let tie_gt = Mask::new(4, 1, vec![true, true, false, false]);
        let snapped_tie = snap_mask_to_segments(&tie_gt, &[vec![0, 1, 2, 3]]);
        assert!(snapped_tie.data.iter().all(|&b| !b));
    }

    #[test]
    fn snap_is_majority_optimal() {
        // Enumerate every segment-constant prediction; snapping must win on
        // plain pixel accuracy.
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for _ in 0..50 {
            let (w, h) = (rng.gen_range(4..9u32), rng.gen_range(4..9u32));
            let cells = (w * h) as usize;
            let gt = Mask::new(w, h, (0..cells).map(|_| rng.gen_bool(0.5)).collect());
            let n_seg = rng.gen_range(1..=10usize);
            let mut segments: Vec<Vec<usize>> = vec![Vec::new(); n_seg];
            for c in 0..cells {
                segments[rng.gen_range(0..n_seg)].push(c);
            }
            segments.retain(|s| !s.is_empty());
            let snapped = snap_mask_to_segments(&gt, &segments);
            let snap_acc = pixel_accuracy(&snapped, &gt).unwrap();
            for combo in 0..(1u32 << segments.len()) {
                let mut data = vec![false; cells];
                for (s, seg) in segments.iter().enumerate() {
                    if combo & (1 << s) != 0 {
                        for &c in seg {
                            data[c] = true;
                        }
                    }
                }
                let acc = pixel_accuracy(&Mask::new(w, h, data), &gt).unwrap();
                assert!(snap_acc >= acc - 1e-12);
            }
        }
    }

    #[test]
    fn normalized_accuracy_trivial_cases() {
        let gt = Mask::new(4, 1, vec![true, true, false, false]);
        assert_eq!(normalized_mask_accuracy(&gt, &gt).unwrap().value, 1.0);
        assert_eq!(
            normalized_mask_accuracy(&gt.complement(), &gt).unwrap().value,
            0.0
        );
        let all_fg = Mask::filled(4, 1, true);
        assert_eq!(normalized_mask_accuracy(&all_fg, &gt).unwrap().value, 0.5);
    }

    #[test]
    fn normalized_accuracy_degenerate_flag() {
        let gt = Mask::filled(3, 1, true);
        let pred = Mask::new(3, 1, vec![true, false, true]);
        let acc = normalized_mask_accuracy(&pred, &gt).unwrap();
        assert!(acc.degenerate);
        assert!((acc.value - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn complement_accuracies_sum_to_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..200 {
            let cells = rng.gen_range(2..40usize);
            let gt = Mask::new(cells as u32, 1, (0..cells).map(|_| rng.gen_bool(0.5)).collect());
            if gt.fg_count() == 0 || gt.fg_count() == cells {
                continue;
            }
            let pred = Mask::new(cells as u32, 1, (0..cells).map(|_| rng.gen_bool(0.5)).collect());
            let a = normalized_mask_accuracy(&pred, &gt).unwrap().value;
            let b = normalized_mask_accuracy(&pred.complement(), &gt).unwrap().value;
            // Float round-off can leave the sum an ulp off exact 1.
            assert!((a + b - 1.0).abs() < 1e-12, "{a} + {b}");
        }
    }

    #[test]
    fn random_masks_score_half_on_average() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let gt = Mask::new(10, 10, (0..100).map(|i| i % 3 != 0).collect());
        let mut sum = 0.0;
        for _ in 0..1000 {
            let pred = Mask::new(10, 10, (0..100).map(|_| rng.gen_bool(0.5)).collect());
            sum += normalized_mask_accuracy(&pred, &gt).unwrap().value;
        }
        let mean = sum / 1000.0;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn oracle_best_picks_gt_and_never_hurts() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let gt = Mask::new(8, 8, (0..64).map(|_| rng.gen_bool(0.5)).collect());
        let mut candidates: Vec<Mask> = (0..10)
            .map(|_| Mask::new(8, 8, (0..64).map(|_| rng.gen_bool(0.5)).collect()))
            .collect();
        let (idx, acc) = oracle_best(&candidates, &gt).unwrap();
        let scan = candidates
            .iter()
            .map(|c| normalized_mask_accuracy(c, &gt).unwrap().value)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((acc - scan).abs() < 1e-12);
        let single = oracle_best(&candidates[idx..=idx], &gt).unwrap();
        assert_eq!(single.0, 0);
        // Adding gt itself can only help.
        candidates.push(gt.clone());
        let (best_idx, best_acc) = oracle_best(&candidates, &gt).unwrap();
        assert_eq!(best_idx, candidates.len() - 1);
        assert_eq!(best_acc, 1.0);
        assert!(best_acc >= acc);
    }
}
