//! Dataset model and its on-disk format.
//!
//! A dataset directory contains `labelspace.json`, `split.json` and one JSON
//! record per scene under `instances/`. Label grids, segment regions, masks
//! and edge maps are all stored as row-major run-length encodings
//! `[start, length, value]` so fixtures stay diff-able and no image decoding
//! is needed.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved label value for unlabeled pixels. Excluded from all accuracy
/// metrics.
pub const VOID: i32 = -1;

pub type DataResult<T> = Result<T, DataError>;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("instance {id}: {violation}")]
    Validation { id: String, violation: String },
    #[error("{0}")]
    Layout(String),
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> DataResult<T> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| DataError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> DataResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Row-major run-length encoding. Each run is `[start, length, value]` over
/// the flattened grid. Runs must be sorted by start and non-overlapping; cells
/// not covered by any run decode to [`VOID`] (for label grids) or to
/// "not in region" (for binary regions, where `value` is conventionally 1).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rle {
    pub runs: Vec<[i64; 3]>,
}

impl Rle {
    pub fn new(runs: Vec<[i64; 3]>) -> Self {
        Rle { runs }
    }

    /// Encode a full label grid. Produces maximal runs covering every cell,
    /// including VOID cells, so encoding is canonical.
    pub fn encode_labels(grid: &[i32]) -> Self {
        let mut runs = Vec::new();
        let mut i = 0usize;
        while i < grid.len() {
            let v = grid[i];
            let mut j = i + 1;
            while j < grid.len() && grid[j] == v {
                j += 1;
            }
            runs.push([i as i64, (j - i) as i64, v as i64]);
            i = j;
        }
        Rle { runs }
    }

    /// Encode a binary region from sorted cell indices. Stores maximal runs
    /// with value 1.
    pub fn encode_region(cells: &[usize]) -> Self {
        let mut runs = Vec::new();
        let mut i = 0usize;
        while i < cells.len() {
            let start = cells[i];
            let mut j = i + 1;
            while j < cells.len() && cells[j] == cells[j - 1] + 1 {
                j += 1;
            }
            runs.push([start as i64, (j - i) as i64, 1]);
            i = j;
        }
        Rle { runs }
    }

    /// Decode into a label grid of `cells` cells; uncovered cells are VOID.
    pub fn decode_labels(&self, cells: usize) -> Result<Vec<i32>, String> {
        let mut grid = vec![VOID; cells];
        let mut covered = vec![false; cells];
        for run in &self.runs {
            let [start, len, value] = *run;
            if start < 0 || len < 0 {
                return Err(format!("negative run field in {run:?}"));
            }
            let (start, len) = (start as usize, len as usize);
            if start + len > cells {
                return Err(format!("run {run:?} exceeds grid of {cells} cells"));
            }
            for c in start..start + len {
                if covered[c] {
                    return Err(format!("run {run:?} overlaps an earlier run at cell {c}"));
                }
                covered[c] = true;
                grid[c] = value as i32;
            }
        }
        Ok(grid)
    }

    /// Decode into the sorted list of covered cell indices.
    pub fn decode_cells(&self, cells: usize) -> Result<Vec<usize>, String> {
        let mut out = Vec::new();
        for run in &self.runs {
            let [start, len, _] = *run;
            if start < 0 || len < 0 {
                return Err(format!("negative run field in {run:?}"));
            }
            let (start, len) = (start as usize, len as usize);
            if start + len > cells {
                return Err(format!("run {run:?} exceeds grid of {cells} cells"));
            }
            out.extend(start..start + len);
        }
        out.sort_unstable();
        for w in out.windows(2) {
            if w[0] == w[1] {
                return Err(format!("cell {} covered twice", w[0]));
            }
        }
        Ok(out)
    }

    /// Number of cells covered by the runs.
    pub fn cell_count(&self) -> u64 {
        self.runs.iter().map(|r| r[1].max(0) as u64).sum()
    }
}

/// The semantic classes, scene types and detector coverage of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSpace {
    pub classes: Vec<String>,
    pub scene_types: Vec<String>,
    pub is_thing: Vec<bool>,
    pub detector_classes: Vec<String>,
}

impl LabelSpace {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn num_scene_types(&self) -> usize {
        self.scene_types.len()
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// Indices of classes that have a detector, in class order.
    pub fn detector_class_ids(&self) -> Vec<usize> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| self.detector_classes.iter().any(|d| d == *c))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_detector_class(&self, class_id: usize) -> bool {
        self.classes
            .get(class_id)
            .is_some_and(|c| self.detector_classes.iter().any(|d| d == c))
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.classes.len() < 2 {
            v.push(format!("need at least 2 classes, got {}", self.classes.len()));
        }
        if self.scene_types.is_empty() {
            v.push("need at least 1 scene type".into());
        }
        let mut seen = HashSet::new();
        for c in &self.classes {
            if !seen.insert(c.as_str()) {
                v.push(format!("duplicate class name {c:?}"));
            }
        }
        if self.is_thing.len() != self.classes.len() {
            v.push(format!(
                "is_thing has {} entries for {} classes",
                self.is_thing.len(),
                self.classes.len()
            ));
        }
        for d in &self.detector_classes {
            if !self.classes.iter().any(|c| c == d) {
                v.push(format!("detector class {d:?} is not a class"));
            }
        }
        v
    }
}

/// Axis-aligned pixel box, half-open: a pixel (x, y) is inside iff
/// `x0 <= x < x1` and `y0 <= y < y1`. A segment touching the inner edge of a
/// box still counts as inside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BBox {
    pub fn width(&self) -> u32 {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> u32 {
        self.y1.saturating_sub(self.y0)
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let ix0 = self.x0.max(other.x0);
        let iy0 = self.y0.max(other.y0);
        let ix1 = self.x1.min(other.x1);
        let iy1 = self.y1.min(other.y1);
        if ix0 >= ix1 || iy0 >= iy1 {
            return 0.0;
        }
        let inter = (ix1 - ix0) as f64 * (iy1 - iy0) as f64;
        let union = self.area() as f64 + other.area() as f64 - inter;
        inter / union
    }

    pub fn is_valid(&self) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1
    }
}

/// One region of the finer partition level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub pixel_set: Rle,
    pub area: u32,
    /// Majority class of the segment's pixels, or [`VOID`]. Ties between
    /// classes break to the lowest class index; VOID wins only when strictly
    /// more frequent than every class.
    pub gt_label: i32,
}

/// One region of the coarser partition level; its pixel set is the union of
/// its member segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperSegment {
    pub area: u32,
    pub gt_label: i32,
}

/// A candidate object detection to be accepted or rejected by the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionCandidate {
    pub class_id: usize,
    pub score: f64,
    pub bbox: BBox,
    /// Detector mixture component that produced the candidate; indexes the
    /// per-class shape prototypes.
    pub component_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtBox {
    pub class_id: usize,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDims {
    pub height: u32,
    pub width: u32,
}

impl GridDims {
    pub fn cells(&self) -> usize {
        self.height as usize * self.width as usize
    }
}

/// One scene: its two-level partition, detection candidates and ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneInstance {
    pub id: String,
    pub grid: GridDims,
    pub segments: Vec<Segment>,
    pub supersegments: Vec<SuperSegment>,
    /// seg_parent[i] is the super-segment index of segment i; total over
    /// segments.
    pub seg_parent: Vec<usize>,
    pub detections: Vec<DetectionCandidate>,
    pub gt_pixel_labels: Rle,
    pub gt_boxes: Vec<GtBox>,
    pub gt_scene: usize,
}

impl SceneInstance {
    pub fn num_cells(&self) -> usize {
        self.grid.cells()
    }

    pub fn decoded_gt_labels(&self) -> Result<Vec<i32>, String> {
        self.gt_pixel_labels.decode_labels(self.num_cells())
    }

    /// Sorted cell indices of segment `i`.
    pub fn segment_cells(&self, i: usize) -> Result<Vec<usize>, String> {
        self.segments[i].pixel_set.decode_cells(self.num_cells())
    }

    /// Class presence derived from ground-truth pixels: `true` at `k` iff some
    /// pixel carries label `k`.
    pub fn gt_presence(&self, num_classes: usize) -> Result<Vec<bool>, String> {
        let labels = self.decoded_gt_labels()?;
        let mut present = vec![false; num_classes];
        for &l in &labels {
            if l >= 0 && (l as usize) < num_classes {
                present[l as usize] = true;
            }
        }
        Ok(present)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFile {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub label_space: LabelSpace,
    pub train: Vec<SceneInstance>,
    pub test: Vec<SceneInstance>,
}

impl Dataset {
    pub fn all_instances(&self) -> impl Iterator<Item = &SceneInstance> {
        self.train.iter().chain(self.test.iter())
    }
}

/// Majority label of `cells` under `labels`. Ties between classes break to
/// the lowest class index; VOID wins only when strictly more frequent than
/// the best class.
pub fn majority_label(cells: &[usize], labels: &[i32]) -> i32 {
    let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
    for &c in cells {
        *counts.entry(labels[c]).or_insert(0) += 1;
    }
    let void_count = counts.get(&VOID).copied().unwrap_or(0);
    let best_class = counts
        .iter()
        .filter(|(&l, _)| l != VOID)
        .max_by(|(la, ca), (lb, cb)| ca.cmp(cb).then(lb.cmp(la)))
        .map(|(&l, &c)| (l, c));
    match best_class {
        Some((label, count)) if count >= void_count => label,
        _ => VOID,
    }
}

/// Check every instance invariant; returns human-readable violations (an
/// empty list means the instance is well-formed).
pub fn validate_instance(inst: &SceneInstance, ls: &LabelSpace) -> Vec<String> {
    let mut v = Vec::new();
    let cells = inst.num_cells();
    if cells == 0 {
        v.push("grid has zero cells".into());
        return v;
    }
    let c = ls.num_classes();

    let labels = match inst.decoded_gt_labels() {
        Ok(l) => l,
        Err(e) => {
            v.push(format!("gt_pixel_labels: {e}"));
            return v;
        }
    };
    for (i, &l) in labels.iter().enumerate() {
        if l != VOID && (l < 0 || l as usize >= c) {
            v.push(format!("pixel {i} has out-of-range label {l}"));
            break;
        }
    }

    // Segment pixel sets: nonempty, in bounds, pairwise disjoint.
    let mut owner: Vec<Option<usize>> = vec![None; cells];
    for (i, seg) in inst.segments.iter().enumerate() {
        let seg_cells = match seg.pixel_set.decode_cells(cells) {
            Ok(cs) => cs,
            Err(e) => {
                v.push(format!("segment {i}: {e}"));
                continue;
            }
        };
        if seg_cells.is_empty() {
            v.push(format!("segment {i} has an empty pixel set"));
            continue;
        }
        if seg_cells.len() as u32 != seg.area {
            v.push(format!(
                "segment {i} area {} != decoded pixel count {}",
                seg.area,
                seg_cells.len()
            ));
        }
        let mut overlap_reported = false;
        for &cell in &seg_cells {
            if let Some(other) = owner[cell] {
                if !overlap_reported {
                    let (y, x) = (cell / inst.grid.width as usize, cell % inst.grid.width as usize);
                    v.push(format!(
                        "segments {other} and {i} overlap at pixel ({y}, {x})"
                    ));
                    overlap_reported = true;
                }
            } else {
                owner[cell] = Some(i);
            }
        }
        let expect = majority_label(&seg_cells, &labels);
        if seg.gt_label != expect {
            v.push(format!(
                "segment {i} gt_label {} != majority label {expect}",
                seg.gt_label
            ));
        }
    }

    // Parent map total over segments, indices valid.
    for i in inst.seg_parent.len()..inst.segments.len() {
        v.push(format!("segment {i} has no parent"));
    }
    if inst.seg_parent.len() > inst.segments.len() {
        v.push(format!(
            "seg_parent has {} entries for {} segments",
            inst.seg_parent.len(),
            inst.segments.len()
        ));
    }
    for (i, &p) in inst.seg_parent.iter().take(inst.segments.len()).enumerate() {
        if p >= inst.supersegments.len() {
            v.push(format!("segment {i} parent {p} out of range"));
        }
    }

    // Super-segment area and label consistency with their member segments.
    for (j, ss) in inst.supersegments.iter().enumerate() {
        let mut member_cells: Vec<usize> = Vec::new();
        for (i, &p) in inst.seg_parent.iter().take(inst.segments.len()).enumerate() {
            if p == j {
                if let Ok(cs) = inst.segments[i].pixel_set.decode_cells(cells) {
                    member_cells.extend(cs);
                }
            }
        }
        if member_cells.is_empty() {
            v.push(format!("supersegment {j} has no member segments"));
            continue;
        }
        if member_cells.len() as u32 != ss.area {
            v.push(format!(
                "supersegment {j} area {} != member pixel count {}",
                ss.area,
                member_cells.len()
            ));
        }
        member_cells.sort_unstable();
        let expect = majority_label(&member_cells, &labels);
        if ss.gt_label != expect {
            v.push(format!(
                "supersegment {j} gt_label {} != majority label {expect}",
                ss.gt_label
            ));
        }
    }

    for (i, det) in inst.detections.iter().enumerate() {
        if !ls.is_detector_class(det.class_id) {
            v.push(format!(
                "detection {i} class {} is not a detector class",
                det.class_id
            ));
        }
        if !det.bbox.is_valid() {
            v.push(format!("detection {i} box is degenerate"));
        }
        if det.bbox.x1 > inst.grid.width || det.bbox.y1 > inst.grid.height {
            v.push(format!("detection {i} box exceeds grid bounds"));
        }
        if !det.score.is_finite() {
            v.push(format!("detection {i} score is not finite"));
        }
    }
    for (i, gt) in inst.gt_boxes.iter().enumerate() {
        if gt.class_id >= c {
            v.push(format!("gt box {i} class {} out of range", gt.class_id));
        }
        if !gt.bbox.is_valid()
            || gt.bbox.x1 > inst.grid.width
            || gt.bbox.y1 > inst.grid.height
        {
            v.push(format!("gt box {i} is degenerate or exceeds grid bounds"));
        }
    }
    if inst.gt_scene >= ls.num_scene_types() {
        v.push(format!("gt_scene {} out of range", inst.gt_scene));
    }
    v
}

/// Fraction of non-void pixels covered by segments of raw area >= `min_area`
/// (void pixels count toward a segment's raw area), plus the number of such
/// segments. With no non-void pixels at all the fraction is vacuously 1.
pub fn coverage_stats(inst: &SceneInstance, min_area: u32) -> (f64, usize) {
    let cells = inst.num_cells();
    let labels = inst.decoded_gt_labels().unwrap_or_else(|_| vec![VOID; cells]);
    let total_nonvoid = labels.iter().filter(|&&l| l != VOID).count();
    let mut covered_nonvoid = 0usize;
    let mut count = 0usize;
    for seg in &inst.segments {
        if seg.area < min_area {
            continue;
        }
        count += 1;
        if let Ok(cs) = seg.pixel_set.decode_cells(cells) {
            covered_nonvoid += cs.iter().filter(|&&c| labels[c] != VOID).count();
        }
    }
    let fraction = if total_nonvoid == 0 {
        1.0
    } else {
        covered_nonvoid as f64 / total_nonvoid as f64
    };
    (fraction, count)
}

/// Load and fully validate a dataset directory.
pub fn load_dataset(path: &Path) -> DataResult<Dataset> {
    let ls_path = path.join("labelspace.json");
    let label_space: LabelSpace = read_json(&ls_path)?;
    let ls_violations = label_space.validate();
    if let Some(violation) = ls_violations.into_iter().next() {
        return Err(DataError::Validation {
            id: "labelspace".into(),
            violation,
        });
    }

    let split: SplitFile = read_json(&path.join("split.json"))?;
    let mut seen: HashSet<&str> = HashSet::new();
    for id in split.train.iter().chain(split.test.iter()) {
        if !seen.insert(id.as_str()) {
            return Err(DataError::Layout(format!(
                "instance id {id:?} appears more than once in split.json"
            )));
        }
    }

    let load_split = |ids: &[String]| -> DataResult<Vec<SceneInstance>> {
        ids.iter()
            .map(|id| {
                let inst: SceneInstance = read_json(&path.join("instances").join(format!("{id}.json")))?;
                if inst.id != *id {
                    return Err(DataError::Validation {
                        id: id.clone(),
                        violation: format!("record id {:?} does not match file name", inst.id),
                    });
                }
                if let Some(violation) = validate_instance(&inst, &label_space).into_iter().next() {
                    return Err(DataError::Validation {
                        id: id.clone(),
                        violation,
                    });
                }
                Ok(inst)
            })
            .collect()
    };

    Ok(Dataset {
        train: load_split(&split.train)?,
        test: load_split(&split.test)?,
        label_space,
    })
}

/// Write a dataset directory in canonical form: pretty-printed JSON with
/// fixed field order, so saving the same dataset twice is byte-identical.
pub fn save_dataset(ds: &Dataset, path: &Path) -> DataResult<()> {
    let mkdir = |p: &Path| {
        fs::create_dir_all(p).map_err(|source| DataError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    mkdir(path)?;
    mkdir(&path.join("instances"))?;
    write_json(&path.join("labelspace.json"), &ds.label_space)?;
    let split = SplitFile {
        train: ds.train.iter().map(|i| i.id.clone()).collect(),
        test: ds.test.iter().map(|i| i.id.clone()).collect(),
    };
    write_json(&path.join("split.json"), &split)?;
    for inst in ds.all_instances() {
        write_json(&path.join("instances").join(format!("{}.json", inst.id)), inst)?;
    }
    Ok(())
}
