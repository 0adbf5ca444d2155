//! Potential tables from four sources: machine stores, human vote counts,
//! ground-truth annotations, or removed outright.
//!
//! A [`PotentialBundle`] holds every table needed to build one scene's factor
//! graph, each tagged with where it came from. Distribution-valued tables are
//! stored as probabilities; they are floored and logged at graph-build time.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    read_json, DataError, Dataset, DetectionCandidate, LabelSpace, Rle, SceneInstance, VOID,
};
use crate::shape::{Mask, MaskLibrary, SoftMask};

pub type PotResult<T> = Result<T, PotentialError>;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("{component} cannot be sourced from {requested:?}: {reason}")]
    InvalidSource {
        component: &'static str,
        requested: Source,
        reason: String,
    },
    #[error("{component} unresolvable for instance {id}: {reason}")]
    Unresolvable {
        component: &'static str,
        id: String,
        reason: String,
    },
    #[error("preference anchor {anchor} has no answers")]
    EmptyAnchor { anchor: usize },
    #[error("mutual information is not finite for pair ({0}, {1})")]
    NonFiniteMi(usize, usize),
    #[error("bad provider store: {0}")]
    BadStore(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Where a potential's table comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Machine,
    Human,
    Gt,
    Remove,
}

/// Per-component source assignment. Components absent from the model graph
/// structure (the segment/super-segment coupling and the two consistency
/// links) are not listed; only the swappable ones are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComponentSources {
    pub seg_unary: Source,
    pub supseg_unary: Source,
    pub pn: Source,
    pub class_unary: Source,
    pub class_tree: Source,
    pub detection: Source,
    pub shape: Source,
    pub scene_unary: Source,
    pub scene_class: Source,
}

impl Default for ComponentSources {
    fn default() -> Self {
        ComponentSources {
            seg_unary: Source::Machine,
            supseg_unary: Source::Machine,
            pn: Source::Machine,
            class_unary: Source::Machine,
            class_tree: Source::Machine,
            detection: Source::Machine,
            shape: Source::Machine,
            scene_unary: Source::Machine,
            scene_class: Source::Machine,
        }
    }
}

/// One class-class tree edge with its 2x2 presence joint
/// `[p00, p01, p10, p11]` (first index = presence of `a`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEdge {
    pub a: usize,
    pub b: usize,
    pub joint: [f64; 4],
}

/// Every potential table for one scene, tagged with provenance. `None` means
/// the component was removed, not zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialBundle {
    /// Per-segment class distribution, rows sum to 1.
    pub seg_unary: Option<Vec<Vec<f64>>>,
    pub supseg_unary: Option<Vec<Vec<f64>>>,
    /// Per-class presence probability P(z_k = 1).
    pub class_unary: Option<Vec<f64>>,
    pub class_tree: Option<Vec<TreeEdge>>,
    /// Effective detection candidates under the configured source (machine
    /// candidates, or annotation boxes for the human/gt sources).
    pub detections: Option<Vec<DetectionCandidate>>,
    /// Per-detection foreground confidence masks, aligned with `detections`.
    pub shape_masks: Option<Vec<SoftMask>>,
    /// Scene-type distribution, sums to 1.
    pub scene_unary: Option<Vec<f64>>,
    /// `scene_class[l][k]` = P(class k present | scene l).
    pub scene_class: Option<Vec<Vec<f64>>>,
    /// Segment/super-segment agreement coupling active?
    pub pn_active: bool,
    pub sources: ComponentSources,
}

impl PotentialBundle {
    /// Check the distribution-shaped invariants; returns violations.
    pub fn validate(&self, ls: &LabelSpace) -> Vec<String> {
        let mut v = Vec::new();
        let row_ok = |row: &[f64]| (row.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if let Some(rows) = &self.seg_unary {
            for (i, row) in rows.iter().enumerate() {
                if row.len() != ls.num_classes() || !row_ok(row) {
                    v.push(format!("seg_unary row {i} is not a distribution"));
                }
            }
        }
        if let Some(rows) = &self.supseg_unary {
            for (i, row) in rows.iter().enumerate() {
                if row.len() != ls.num_classes() || !row_ok(row) {
                    v.push(format!("supseg_unary row {i} is not a distribution"));
                }
            }
        }
        if let Some(p) = &self.class_unary {
            if p.len() != ls.num_classes() || p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                v.push("class_unary is not a probability vector".into());
            }
        }
        if let Some(row) = &self.scene_unary {
            if row.len() != ls.num_scene_types() || !row_ok(row) {
                v.push("scene_unary is not a distribution".into());
            }
        }
        if let Some(edges) = &self.class_tree {
            for e in edges {
                let s: f64 = e.joint.iter().sum();
                if (s - 1.0).abs() > 1e-9 || e.joint.iter().any(|&x| x < 0.0) {
                    v.push(format!("tree edge ({}, {}) joint is not a distribution", e.a, e.b));
                }
            }
        }
        if let (Some(d), Some(m)) = (&self.detections, &self.shape_masks) {
            if d.len() != m.len() {
                v.push("shape_masks not aligned with detections".into());
            }
        }
        v
    }
}

/// Which partition level (or the scene question) a vote record answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoteLevel {
    Segment,
    Supersegment,
    Scene,
}

/// Raw multi-select vote counts from subjects for one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoteRecord {
    pub instance: String,
    pub level: VoteLevel,
    pub index: usize,
    pub counts: Vec<u32>,
}

/// `votes.json`: the vote records plus the area threshold below which
/// segments were not shown to subjects (their unaries fall back to uniform).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoteStore {
    pub min_area: u32,
    pub records: Vec<VoteRecord>,
}

impl VoteStore {
    pub fn index(&self) -> BTreeMap<(&str, VoteLevel, usize), &[u32]> {
        self.records
            .iter()
            .map(|r| ((r.instance.as_str(), r.level, r.index), r.counts.as_slice()))
            .collect()
    }
}

/// `preferences.json`: pairwise preference counts between classes (per
/// anchor), class marginals, and scene-conditional class preference counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairPreferenceAnswers {
    /// P(z_i), in (0, 1].
    pub class_marginals: Vec<f64>,
    /// `class_pair_counts[i][j]` = times j was preferred as a companion of
    /// anchor i; diagonal unused.
    pub class_pair_counts: Vec<Vec<u64>>,
    /// `scene_class_counts[l][k]` = times class k was preferred for scene l.
    pub scene_class_counts: Vec<Vec<u64>>,
}

/// `machine_potentials/<id>.json`: classifier-style tables for one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineTables {
    pub seg_unary: Vec<Vec<f64>>,
    pub supseg_unary: Vec<Vec<f64>>,
    pub scene_unary: Vec<f64>,
}

/// On-disk record for one binary mask (`masks/<class>/<k>.json` and
/// `edges/<id>.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskRecord {
    pub width: u32,
    pub height: u32,
    pub rle: Rle,
    #[serde(default)]
    pub class_id: Option<usize>,
    #[serde(default)]
    pub component_id: Option<usize>,
}

impl MaskRecord {
    pub fn to_mask(&self) -> Result<Mask, String> {
        let cells = (self.width as usize) * (self.height as usize);
        let covered = self.rle.decode_cells(cells)?;
        let mut data = vec![false; cells];
        for c in covered {
            data[c] = true;
        }
        Ok(Mask::new(self.width, self.height, data))
    }

    pub fn from_mask(mask: &Mask, class_id: Option<usize>, component_id: Option<usize>) -> Self {
        let cells: Vec<usize> = mask
            .data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect();
        MaskRecord {
            width: mask.width,
            height: mask.height,
            rle: Rle::encode_region(&cells),
            class_id,
            component_id,
        }
    }
}

/// Vote counts to a class distribution: proportional to selections and
/// normalized to sum to 1; uniform for items below the area threshold or
/// with no selections at all.
pub fn human_unary_from_votes(counts: &[u32], area: u32, min_area: u32) -> Vec<f64> {
    let c = counts.len();
    let total: u64 = counts.iter().map(|&x| x as u64).sum();
    if area < min_area || total == 0 {
        return vec![1.0 / c as f64; c];
    }
    counts.iter().map(|&x| x as f64 / total as f64).collect()
}

/// Class occurrence and co-occurrence frequencies over the training split,
/// with additive smoothing `alpha` (0 disables smoothing). The joint's
/// diagonal carries the marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceStats {
    pub marginals: Vec<f64>,
    pub joint: Vec<Vec<f64>>,
}

pub fn cooccurrence_from_counts(ds: &Dataset, alpha: f64) -> PotResult<CooccurrenceStats> {
    let c = ds.label_space.num_classes();
    if ds.train.is_empty() {
        return Err(PotentialError::BadStore("empty training split".into()));
    }
    let mut count = vec![0u64; c];
    let mut pair = vec![vec![0u64; c]; c];
    for inst in &ds.train {
        let present = inst
            .gt_presence(c)
            .map_err(|e| PotentialError::BadStore(format!("instance {}: {e}", inst.id)))?;
        for i in 0..c {
            if !present[i] {
                continue;
            }
            count[i] += 1;
            for j in 0..c {
                if j != i && present[j] {
                    pair[i][j] += 1;
                }
            }
        }
    }
    let n = ds.train.len() as f64;
    let denom = n + 2.0 * alpha;
    let marginals: Vec<f64> = count.iter().map(|&x| (x as f64 + alpha) / denom).collect();
    let mut joint = vec![vec![0.0; c]; c];
    for i in 0..c {
        for j in 0..c {
            joint[i][j] = if i == j {
                marginals[i]
            } else {
                (pair[i][j] as f64 + alpha) / denom
            };
        }
    }
    Ok(CooccurrenceStats { marginals, joint })
}

/// Human preference answers to a symmetric class-class joint. Conditionals
/// come from the per-anchor preference shares, the joint multiplies in the
/// stored marginals, and the result is symmetrized by averaging with its
/// transpose. The diagonal carries the marginals.
pub fn cooccurrence_from_preferences(p: &PairPreferenceAnswers) -> PotResult<Vec<Vec<f64>>> {
    let c = p.class_marginals.len();
    if p.class_pair_counts.len() != c {
        return Err(PotentialError::BadStore(
            "class_pair_counts shape does not match marginals".into(),
        ));
    }
    for (i, &m) in p.class_marginals.iter().enumerate() {
        if !(m > 0.0 && m <= 1.0) {
            return Err(PotentialError::BadStore(format!(
                "marginal {i} = {m} outside (0, 1]"
            )));
        }
    }
    let mut directed = vec![vec![0.0; c]; c];
    for i in 0..c {
        let total: u64 = (0..c).filter(|&j| j != i).map(|j| p.class_pair_counts[i][j]).sum();
        if total == 0 {
            return Err(PotentialError::EmptyAnchor { anchor: i });
        }
        for j in 0..c {
            if j != i {
                directed[i][j] =
                    p.class_pair_counts[i][j] as f64 / total as f64 * p.class_marginals[i];
            }
        }
    }
    let mut joint = vec![vec![0.0; c]; c];
    for i in 0..c {
        joint[i][i] = p.class_marginals[i];
        for j in 0..c {
            if i != j {
                joint[i][j] = 0.5 * (directed[i][j] + directed[j][i]);
            }
        }
    }
    Ok(joint)
}

fn pair_presence_table(joint: &[Vec<f64>], i: usize, k: usize) -> [f64; 4] {
    let pi = joint[i][i].clamp(1e-9, 1.0 - 1e-9);
    let pk = joint[k][k].clamp(1e-9, 1.0 - 1e-9);
    let p11 = joint[i][k].clamp((pi + pk - 1.0).max(0.0), pi.min(pk));
    // [p00, p01, p10, p11], first index = presence of i.
    [1.0 - pi - pk + p11, pk - p11, pi - p11, p11]
}

fn pair_mutual_information(joint: &[Vec<f64>], i: usize, k: usize) -> PotResult<f64> {
    let t = pair_presence_table(joint, i, k);
    let pi = [t[2] + t[3], t[0] + t[1]]; // [present, absent] of i
    let pk = [t[1] + t[3], t[0] + t[2]];
    let mut mi = 0.0;
    for (idx, &p) in t.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let a = if idx & 2 != 0 { pi[0] } else { pi[1] };
        let b = if idx & 1 != 0 { pk[0] } else { pk[1] };
        mi += p * (p / (a * b)).ln();
    }
    if !mi.is_finite() {
        return Err(PotentialError::NonFiniteMi(i, k));
    }
    Ok(mi)
}

/// Maximum-mutual-information spanning tree over the presence variables.
/// The joint's diagonal must carry the marginals. Edges are returned with
/// `a < b`, sorted; ties in edge weight break to the lexicographically
/// earliest edge, so an all-independent joint yields the star at class 0.
pub fn chow_liu_tree(joint: &[Vec<f64>]) -> PotResult<Vec<(usize, usize)>> {
    let c = joint.len();
    assert!(c >= 2, "need at least two classes");
    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(c * (c - 1) / 2);
    for i in 0..c {
        for k in i + 1..c {
            edges.push((pair_mutual_information(joint, i, k)?, i, k));
        }
    }
    edges.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut parent: Vec<usize> = (0..c).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut out = Vec::with_capacity(c - 1);
    for (_, i, k) in edges {
        let (ri, rk) = (find(&mut parent, i), find(&mut parent, k));
        if ri != rk {
            parent[ri] = rk;
            out.push((i, k));
            if out.len() == c - 1 {
                break;
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Attach 2x2 presence joints to a set of tree edges.
pub fn tree_edge_tables(joint: &[Vec<f64>], edges: &[(usize, usize)]) -> Vec<TreeEdge> {
    edges
        .iter()
        .map(|&(a, b)| TreeEdge {
            a,
            b,
            joint: pair_presence_table(joint, a, b),
        })
        .collect()
}

/// Ground-truth potentials for one scene: one-hot tables from annotations,
/// annotation boxes as detection candidates with a saturated score, and
/// binary masks of the labeled object pixels.
#[derive(Debug, Clone)]
pub struct GtPotentials {
    pub seg_unary: Vec<Vec<f64>>,
    pub supseg_unary: Vec<Vec<f64>>,
    pub class_unary: Vec<f64>,
    pub scene_unary: Vec<f64>,
    pub detections: Vec<DetectionCandidate>,
    pub shape_masks: Vec<SoftMask>,
}

fn one_hot(label: i32, c: usize) -> Vec<f64> {
    // Unlabeled-majority regions fall back to uniform.
    if label == VOID || label < 0 || label as usize >= c {
        return vec![1.0 / c as f64; c];
    }
    let mut row = vec![0.0; c];
    row[label as usize] = 1.0;
    row
}

/// Binary foreground mask of `class_id` pixels inside `bbox`.
pub fn gt_box_mask(inst: &SceneInstance, labels: &[i32], bbox: &crate::data::BBox, class_id: usize) -> SoftMask {
    let (bw, bh) = (bbox.width(), bbox.height());
    let mut data = Vec::with_capacity((bw * bh) as usize);
    for y in bbox.y0..bbox.y1 {
        for x in bbox.x0..bbox.x1 {
            let cell = (y * inst.grid.width + x) as usize;
            data.push(if labels[cell] == class_id as i32 { 1.0 } else { 0.0 });
        }
    }
    SoftMask { width: bw, height: bh, data }
}

/// Pick a mixture component for an annotation box: the component of the
/// best-overlapping machine candidate of the same class, if any.
fn component_for_gt_box(inst: &SceneInstance, class_id: usize, bbox: &crate::data::BBox) -> usize {
    inst.detections
        .iter()
        .filter(|d| d.class_id == class_id)
        .map(|d| (d.bbox.iou(bbox), d.component_id))
        .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .filter(|&(iou, _)| iou > 0.0)
        .map(|(_, c)| c)
        .unwrap_or(0)
}

pub fn gt_potentials(inst: &SceneInstance, ls: &LabelSpace) -> PotResult<GtPotentials> {
    let c = ls.num_classes();
    let labels = inst
        .decoded_gt_labels()
        .map_err(|e| PotentialError::BadStore(format!("instance {}: {e}", inst.id)))?;
    let seg_unary = inst.segments.iter().map(|s| one_hot(s.gt_label, c)).collect();
    let supseg_unary = inst
        .supersegments
        .iter()
        .map(|s| one_hot(s.gt_label, c))
        .collect();
    let present = inst
        .gt_presence(c)
        .map_err(|e| PotentialError::BadStore(format!("instance {}: {e}", inst.id)))?;
    let class_unary = present.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect();
    let scene_unary = one_hot(inst.gt_scene as i32, ls.num_scene_types());
    let mut detections = Vec::with_capacity(inst.gt_boxes.len());
    let mut shape_masks = Vec::with_capacity(inst.gt_boxes.len());
    for gt_box in &inst.gt_boxes {
        detections.push(DetectionCandidate {
            class_id: gt_box.class_id,
            // Saturates the logistic detection score to 1.
            score: f64::INFINITY,
            bbox: gt_box.bbox,
            component_id: component_for_gt_box(inst, gt_box.class_id, &gt_box.bbox),
        });
        shape_masks.push(gt_box_mask(inst, &labels, &gt_box.bbox, gt_box.class_id));
    }
    Ok(GtPotentials {
        seg_unary,
        supseg_unary,
        class_unary,
        scene_unary,
        detections,
        shape_masks,
    })
}

/// Everything the configured sources may pull from, loaded once per dataset
/// directory. Optional stores stay `None` until a configuration needs them.
#[derive(Debug, Clone)]
pub struct ProviderStores {
    pub machine: BTreeMap<String, MachineTables>,
    pub votes: Option<VoteStore>,
    pub preferences: Option<PairPreferenceAnswers>,
    pub masks: Option<MaskLibrary>,
    pub edge_maps: BTreeMap<String, Mask>,
    /// Count-based class statistics from the training split (alpha = 1).
    pub machine_class_stats: CooccurrenceStats,
    /// P(class present | scene) from training counts, smoothed.
    pub machine_scene_class: Vec<Vec<f64>>,
    pub human_class_joint: Option<Vec<Vec<f64>>>,
    pub human_scene_class: Option<Vec<Vec<f64>>>,
}

impl ProviderStores {
    pub fn load(dir: &Path, ds: &Dataset) -> PotResult<ProviderStores> {
        let ls = &ds.label_space;
        let mut machine = BTreeMap::new();
        let mp_dir = dir.join("machine_potentials");
        if mp_dir.is_dir() {
            for inst in ds.all_instances() {
                let path = mp_dir.join(format!("{}.json", inst.id));
                if path.is_file() {
                    machine.insert(inst.id.clone(), read_json::<MachineTables>(&path)?);
                }
            }
        }

        let votes_path = dir.join("votes.json");
        let votes: Option<VoteStore> = if votes_path.is_file() {
            Some(read_json(&votes_path)?)
        } else {
            None
        };

        let pref_path = dir.join("preferences.json");
        let preferences: Option<PairPreferenceAnswers> = if pref_path.is_file() {
            Some(read_json(&pref_path)?)
        } else {
            None
        };

        let masks_dir = dir.join("masks");
        let masks = if masks_dir.is_dir() {
            let mut records: Vec<(usize, usize, Mask)> = Vec::new();
            let mut class_dirs: Vec<_> = fs::read_dir(&masks_dir)
                .map_err(|e| PotentialError::BadStore(format!("masks dir: {e}")))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir())
                .collect();
            class_dirs.sort();
            for class_dir in class_dirs {
                let mut files: Vec<_> = fs::read_dir(&class_dir)
                    .map_err(|e| PotentialError::BadStore(format!("masks dir: {e}")))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|e| e == "json"))
                    .collect();
                files.sort();
                for f in files {
                    let rec: MaskRecord = read_json(&f)?;
                    let class_id = rec.class_id.ok_or_else(|| {
                        PotentialError::BadStore(format!("{}: mask without class_id", f.display()))
                    })?;
                    let component_id = rec.component_id.unwrap_or(0);
                    let mask = rec
                        .to_mask()
                        .map_err(|e| PotentialError::BadStore(format!("{}: {e}", f.display())))?;
                    records.push((class_id, component_id, mask));
                }
            }
            let components_per_class: Vec<usize> = (0..ls.num_classes())
                .map(|k| {
                    records
                        .iter()
                        .filter(|(c, _, _)| *c == k)
                        .map(|(_, comp, _)| comp + 1)
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            let mut lib = MaskLibrary::new(ls.num_classes(), components_per_class);
            for (class_id, component_id, mask) in records {
                lib.add(class_id, component_id, mask);
            }
            Some(lib)
        } else {
            None
        };

        let mut edge_maps = BTreeMap::new();
        let edges_dir = dir.join("edges");
        if edges_dir.is_dir() {
            for inst in ds.all_instances() {
                let path = edges_dir.join(format!("{}.json", inst.id));
                if path.is_file() {
                    let rec: MaskRecord = read_json(&path)?;
                    let mask = rec
                        .to_mask()
                        .map_err(|e| PotentialError::BadStore(format!("{}: {e}", path.display())))?;
                    edge_maps.insert(inst.id.clone(), mask);
                }
            }
        }

        let machine_class_stats = cooccurrence_from_counts(ds, 1.0)?;
        let machine_scene_class = scene_class_from_counts(ds, 1.0)?;
        let human_class_joint = match &preferences {
            Some(p) => Some(cooccurrence_from_preferences(p)?),
            None => None,
        };
        let human_scene_class = preferences.as_ref().map(|p| {
            p.scene_class_counts
                .iter()
                .map(|row| {
                    let total: u64 = row.iter().sum();
                    row.iter()
                        .map(|&x| {
                            if total == 0 {
                                1.0 / row.len().max(1) as f64
                            } else {
                                x as f64 / total as f64
                            }
                        })
                        .collect()
                })
                .collect()
        });

        Ok(ProviderStores {
            machine,
            votes,
            preferences,
            masks,
            edge_maps,
            machine_class_stats,
            machine_scene_class,
            human_class_joint,
            human_scene_class,
        })
    }
}

/// P(class k present | scene l) from training counts with additive smoothing.
pub fn scene_class_from_counts(ds: &Dataset, alpha: f64) -> PotResult<Vec<Vec<f64>>> {
    let c = ds.label_space.num_classes();
    let cl = ds.label_space.num_scene_types();
    let mut scene_count = vec![0u64; cl];
    let mut scene_class_count = vec![vec![0u64; c]; cl];
    for inst in &ds.train {
        let present = inst
            .gt_presence(c)
            .map_err(|e| PotentialError::BadStore(format!("instance {}: {e}", inst.id)))?;
        scene_count[inst.gt_scene] += 1;
        for (k, &p) in present.iter().enumerate() {
            if p {
                scene_class_count[inst.gt_scene][k] += 1;
            }
        }
    }
    Ok((0..cl)
        .map(|l| {
            (0..c)
                .map(|k| {
                    (scene_class_count[l][k] as f64 + alpha)
                        / (scene_count[l] as f64 + 2.0 * alpha)
                })
                .collect()
        })
        .collect())
}

fn uniform(c: usize) -> Vec<f64> {
    vec![1.0 / c as f64; c]
}

/// Route every component to its configured source and produce the bundle for
/// one scene. Missing stores surface as errors naming the component; whether
/// a removal disconnects the graph is the harness's concern, not this one's.
pub fn assemble_bundle(
    inst: &SceneInstance,
    ls: &LabelSpace,
    sources: &ComponentSources,
    stores: &ProviderStores,
) -> PotResult<PotentialBundle> {
    let c = ls.num_classes();
    let gt = match needs_gt(sources) {
        true => Some(gt_potentials(inst, ls)?),
        false => None,
    };
    let machine_tables = stores.machine.get(&inst.id);
    let need_machine = |component: &'static str| -> PotResult<&MachineTables> {
        machine_tables.ok_or_else(|| PotentialError::Unresolvable {
            component,
            id: inst.id.clone(),
            reason: "no machine_potentials record".into(),
        })
    };
    let vote_index = stores.votes.as_ref().map(|v| (v.min_area, v.index()));
    let need_votes = |component: &'static str| {
        vote_index.as_ref().ok_or_else(|| PotentialError::Unresolvable {
            component,
            id: inst.id.clone(),
            reason: "no votes.json store".into(),
        })
    };

    let seg_unary = match sources.seg_unary {
        Source::Machine => {
            let t = need_machine("seg_unary")?;
            if t.seg_unary.len() != inst.segments.len() {
                return Err(PotentialError::Unresolvable {
                    component: "seg_unary",
                    id: inst.id.clone(),
                    reason: "machine table row count mismatch".into(),
                });
            }
            Some(t.seg_unary.clone())
        }
        Source::Human => {
            let (min_area, index) = need_votes("seg_unary")?;
            Some(
                inst.segments
                    .iter()
                    .enumerate()
                    .map(|(i, seg)| {
                        match index.get(&(inst.id.as_str(), VoteLevel::Segment, i)) {
                            Some(counts) => human_unary_from_votes(counts, seg.area, *min_area),
                            None => uniform(c),
                        }
                    })
                    .collect(),
            )
        }
        Source::Gt => Some(gt.as_ref().unwrap().seg_unary.clone()),
        Source::Remove => None,
    };

    let supseg_unary = match sources.supseg_unary {
        Source::Machine => {
            let t = need_machine("supseg_unary")?;
            if t.supseg_unary.len() != inst.supersegments.len() {
                return Err(PotentialError::Unresolvable {
                    component: "supseg_unary",
                    id: inst.id.clone(),
                    reason: "machine table row count mismatch".into(),
                });
            }
            Some(t.supseg_unary.clone())
        }
        Source::Human => {
            let (min_area, index) = need_votes("supseg_unary")?;
            Some(
                inst.supersegments
                    .iter()
                    .enumerate()
                    .map(|(j, ss)| {
                        match index.get(&(inst.id.as_str(), VoteLevel::Supersegment, j)) {
                            Some(counts) => human_unary_from_votes(counts, ss.area, *min_area),
                            None => uniform(c),
                        }
                    })
                    .collect(),
            )
        }
        Source::Gt => Some(gt.as_ref().unwrap().supseg_unary.clone()),
        Source::Remove => None,
    };

    let pn_active = match sources.pn {
        Source::Machine => true,
        Source::Remove => false,
        s @ (Source::Human | Source::Gt) => {
            return Err(PotentialError::InvalidSource {
                component: "pn",
                requested: s,
                reason: "the agreement coupling is structural; only machine/remove apply".into(),
            })
        }
    };

    let class_unary = match sources.class_unary {
        Source::Machine => Some(stores.machine_class_stats.marginals.clone()),
        Source::Human => {
            let p = stores.preferences.as_ref().ok_or_else(|| PotentialError::Unresolvable {
                component: "class_unary",
                id: inst.id.clone(),
                reason: "no preferences.json store".into(),
            })?;
            Some(p.class_marginals.clone())
        }
        Source::Gt => Some(gt.as_ref().unwrap().class_unary.clone()),
        Source::Remove => None,
    };

    let class_tree = match sources.class_tree {
        Source::Machine => {
            let joint = &stores.machine_class_stats.joint;
            let edges = chow_liu_tree(joint)?;
            Some(tree_edge_tables(joint, &edges))
        }
        Source::Human => {
            let joint = stores.human_class_joint.as_ref().ok_or_else(|| {
                PotentialError::Unresolvable {
                    component: "class_tree",
                    id: inst.id.clone(),
                    reason: "no preferences.json store".into(),
                }
            })?;
            let edges = chow_liu_tree(joint)?;
            Some(tree_edge_tables(joint, &edges))
        }
        Source::Gt => {
            return Err(PotentialError::InvalidSource {
                component: "class_tree",
                requested: Source::Gt,
                reason: "ground truth is not meaningful for pairwise potentials".into(),
            })
        }
        Source::Remove => None,
    };

    let detections = match sources.detection {
        Source::Machine => Some(inst.detections.clone()),
        // Subjects recognize annotation boxes near-perfectly, so the human
        // source reuses them as candidates with a saturated score.
        Source::Human | Source::Gt => Some(gt.as_ref().unwrap().detections.clone()),
        Source::Remove => None,
    };

    let shape_masks = match (&detections, sources.shape) {
        (None, _) | (_, Source::Remove) => None,
        (Some(dets), Source::Machine) => {
            let lib = stores.masks.as_ref().ok_or_else(|| PotentialError::Unresolvable {
                component: "shape",
                id: inst.id.clone(),
                reason: "no masks store".into(),
            })?;
            Some(
                dets.iter()
                    .map(|d| {
                        lib.component_average(d.class_id, d.component_id)
                            .or_else(|| {
                                // No mask for that component: average the
                                // whole class instead.
                                crate::shape::average_component_mask(
                                    &lib.training_masks(d.class_id)
                                        .iter()
                                        .map(|m| {
                                            crate::shape::binarize(
                                                &crate::shape::to_common_raster(
                                                    m,
                                                    crate::shape::COMMON_RASTER,
                                                    crate::shape::COMMON_RASTER,
                                                ),
                                                0.5,
                                            )
                                        })
                                        .collect::<Vec<_>>(),
                                )
                                .ok()
                            })
                            .unwrap_or(SoftMask {
                                width: 1,
                                height: 1,
                                data: vec![0.5],
                            })
                    })
                    .collect(),
            )
        }
        (Some(dets), Source::Gt) => {
            let labels = inst
                .decoded_gt_labels()
                .map_err(|e| PotentialError::BadStore(format!("instance {}: {e}", inst.id)))?;
            Some(
                dets.iter()
                    .map(|d| gt_box_mask(inst, &labels, &d.bbox, d.class_id))
                    .collect(),
            )
        }
        (Some(_), Source::Human) => {
            return Err(PotentialError::InvalidSource {
                component: "shape",
                requested: Source::Human,
                reason: "no human shape store exists in this artifact".into(),
            })
        }
    };

    let scene_unary = match sources.scene_unary {
        Source::Machine => Some(need_machine("scene_unary")?.scene_unary.clone()),
        Source::Human => {
            let (_, index) = need_votes("scene_unary")?;
            let row = match index.get(&(inst.id.as_str(), VoteLevel::Scene, 0)) {
                Some(counts) => human_unary_from_votes(counts, u32::MAX, 0),
                None => uniform(ls.num_scene_types()),
            };
            Some(row)
        }
        Source::Gt => Some(gt.as_ref().unwrap().scene_unary.clone()),
        Source::Remove => None,
    };

    let scene_class = match sources.scene_class {
        Source::Machine => Some(stores.machine_scene_class.clone()),
        Source::Human => {
            let t = stores.human_scene_class.as_ref().ok_or_else(|| {
                PotentialError::Unresolvable {
                    component: "scene_class",
                    id: inst.id.clone(),
                    reason: "no preferences.json store".into(),
                }
            })?;
            Some(t.clone())
        }
        Source::Gt => {
            return Err(PotentialError::InvalidSource {
                component: "scene_class",
                requested: Source::Gt,
                reason: "ground truth is not meaningful for pairwise potentials".into(),
            })
        }
        Source::Remove => None,
    };

    Ok(PotentialBundle {
        seg_unary,
        supseg_unary,
        class_unary,
        class_tree,
        detections,
        shape_masks,
        scene_unary,
        scene_class,
        pn_active,
        sources: *sources,
    })
}

fn needs_gt(sources: &ComponentSources) -> bool {
    [
        sources.seg_unary,
        sources.supseg_unary,
        sources.class_unary,
        sources.scene_unary,
        sources.shape,
    ]
    .contains(&Source::Gt)
        || matches!(sources.detection, Source::Gt | Source::Human)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BBox, GridDims, GtBox, Segment, SuperSegment};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn votes_normalize_to_distribution() {
        assert_eq!(
            human_unary_from_votes(&[3, 1, 0], 600, 500),
            vec![0.75, 0.25, 0.0]
        );
    }

    #[test]
    fn small_segment_votes_are_uniform() {
        let row = human_unary_from_votes(&[9, 0, 1], 400, 500);
        assert_eq!(row, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn zero_votes_are_uniform() {
        let row = human_unary_from_votes(&[0, 0, 0], 900, 500);
        assert_eq!(row, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn vote_distribution_is_scale_invariant() {
        let a = human_unary_from_votes(&[2, 6, 2], 900, 500);
        let b = human_unary_from_votes(&[6, 18, 6], 900, 500);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    fn presence_instance(id: &str, labels: &[i32], scene: usize) -> SceneInstance {
        let w = labels.len() as u32;
        SceneInstance {
            id: id.into(),
            grid: GridDims { height: 1, width: w },
            segments: vec![Segment {
                pixel_set: Rle::encode_region(&(0..labels.len()).collect::<Vec<_>>()),
                area: w,
                gt_label: crate::data::majority_label(
                    &(0..labels.len()).collect::<Vec<_>>(),
                    labels,
                ),
            }],
            supersegments: vec![SuperSegment {
                area: w,
                gt_label: crate::data::majority_label(
                    &(0..labels.len()).collect::<Vec<_>>(),
                    labels,
                ),
            }],
            seg_parent: vec![0],
            detections: vec![],
            gt_pixel_labels: Rle::encode_labels(labels),
            gt_boxes: vec![],
            gt_scene: scene,
        }
    }

    fn three_class_space() -> LabelSpace {
        LabelSpace {
            classes: vec!["a".into(), "b".into(), "c".into()],
            scene_types: vec!["s0".into()],
            is_thing: vec![false, false, false],
            detector_classes: vec![],
        }
    }

    #[test]
    fn cooccurrence_counts_unsmoothed() {
        // Two scenes: {a, b} and {a, c}.
        let ds = Dataset {
            label_space: three_class_space(),
            train: vec![
                presence_instance("i0", &[0, 1], 0),
                presence_instance("i1", &[0, 2], 0),
            ],
            test: vec![],
        };
        let stats = cooccurrence_from_counts(&ds, 0.0).unwrap();
        assert_eq!(stats.marginals[0], 1.0);
        assert_eq!(stats.joint[0][1], 0.5);
        assert_eq!(stats.joint[1][0], 0.5);
        assert_eq!(stats.joint[1][2], 0.0);
    }

    #[test]
    fn cooccurrence_single_image_pairs_are_one() {
        let ds = Dataset {
            label_space: three_class_space(),
            train: vec![presence_instance("i0", &[0, 1, 2], 0)],
            test: vec![],
        };
        let stats = cooccurrence_from_counts(&ds, 0.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(stats.joint[i][j], 1.0);
            }
        }
    }

    #[test]
    fn cooccurrence_matches_recount_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let classes = 5usize;
        let ls = LabelSpace {
            classes: (0..classes).map(|i| format!("c{i}")).collect(),
            scene_types: vec!["s".into()],
            is_thing: vec![false; classes],
            detector_classes: vec![],
        };
        let mut presences: Vec<Vec<bool>> = Vec::new();
        let train: Vec<SceneInstance> = (0..50)
            .map(|i| {
                let labels: Vec<i32> = (0..8).map(|_| rng.gen_range(0..classes) as i32).collect();
                let mut p = vec![false; classes];
                for &l in &labels {
                    p[l as usize] = true;
                }
                presences.push(p);
                presence_instance(&format!("i{i}"), &labels, 0)
            })
            .collect();
        let ds = Dataset { label_space: ls, train, test: vec![] };
        let stats = cooccurrence_from_counts(&ds, 1.0).unwrap();
        // Independent recount.
        let n = presences.len() as f64;
        for i in 0..classes {
            let ci = presences.iter().filter(|p| p[i]).count() as f64;
            assert!((stats.marginals[i] - (ci + 1.0) / (n + 2.0)).abs() < 1e-12);
            for j in 0..classes {
                if i == j {
                    continue;
                }
                let cij = presences.iter().filter(|p| p[i] && p[j]).count() as f64;
                assert!((stats.joint[i][j] - (cij + 1.0) / (n + 2.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cooccurrence_permutation_equivariant() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let classes = 4usize;
        let make = |perm: &[usize], rng: &mut ChaCha12Rng| {
            let mut rows = Vec::new();
            for i in 0..30 {
                let labels: Vec<i32> = (0..6)
                    .map(|_| perm[rng.gen_range(0..classes)] as i32)
                    .collect();
                rows.push(labels);
                let _ = i;
            }
            rows
        };
        let identity: Vec<usize> = (0..classes).collect();
        let rows = make(&identity, &mut rng);
        let perm = vec![2usize, 0, 3, 1];
        let ls = |_n: usize| LabelSpace {
            classes: (0..classes).map(|i| format!("c{i}")).collect(),
            scene_types: vec!["s".into()],
            is_thing: vec![false; classes],
            detector_classes: vec![],
        };
        let ds_a = Dataset {
            label_space: ls(classes),
            train: rows
                .iter()
                .enumerate()
                .map(|(i, r)| presence_instance(&format!("i{i}"), r, 0))
                .collect(),
            test: vec![],
        };
        let permuted: Vec<Vec<i32>> = rows
            .iter()
            .map(|r| r.iter().map(|&l| perm[l as usize] as i32).collect())
            .collect();
        let ds_b = Dataset {
            label_space: ls(classes),
            train: permuted
                .iter()
                .enumerate()
                .map(|(i, r)| presence_instance(&format!("i{i}"), r, 0))
                .collect(),
            test: vec![],
        };
        let sa = cooccurrence_from_counts(&ds_a, 1.0).unwrap();
        let sb = cooccurrence_from_counts(&ds_b, 1.0).unwrap();
        for i in 0..classes {
            assert!((sa.marginals[i] - sb.marginals[perm[i]]).abs() < 1e-12);
            for j in 0..classes {
                assert!((sa.joint[i][j] - sb.joint[perm[i]][perm[j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn preferences_ratio_rule() {
        let p = PairPreferenceAnswers {
            class_marginals: vec![0.5, 0.4, 0.3],
            class_pair_counts: vec![vec![0, 8, 2], vec![5, 0, 5], vec![9, 1, 0]],
            scene_class_counts: vec![],
        };
        let joint = cooccurrence_from_preferences(&p).unwrap();
        // P(1|0) = 0.8, P(2|0) = 0.2.
        let d01 = 0.8 * 0.5;
        let d10 = 0.5 * 0.4;
        assert!((joint[0][1] - 0.5 * (d01 + d10)).abs() < 1e-12);
        assert!((joint[0][1] - joint[1][0]).abs() < 1e-15);
        assert_eq!(joint[0][0], 0.5);
    }

    #[test]
    fn preferences_zero_anchor_is_error() {
        let p = PairPreferenceAnswers {
            class_marginals: vec![0.5, 0.5],
            class_pair_counts: vec![vec![0, 0], vec![3, 0]],
            scene_class_counts: vec![],
        };
        assert!(matches!(
            cooccurrence_from_preferences(&p),
            Err(PotentialError::EmptyAnchor { anchor: 0 })
        ));
    }

    #[test]
    fn preferences_joint_symmetric_rows_conditional() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let c = 6usize;
        let counts: Vec<Vec<u64>> = (0..c)
            .map(|i| {
                (0..c)
                    .map(|j| if i == j { 0 } else { rng.gen_range(1..50u64) })
                    .collect()
            })
            .collect();
        let p = PairPreferenceAnswers {
            class_marginals: (0..c).map(|_| rng.gen_range(0.05..0.95)).collect(),
            class_pair_counts: counts.clone(),
            scene_class_counts: vec![],
        };
        let joint = cooccurrence_from_preferences(&p).unwrap();
        for i in 0..c {
            let total: u64 = counts[i].iter().sum();
            let cond_sum: f64 = (0..c)
                .filter(|&j| j != i)
                .map(|j| counts[i][j] as f64 / total as f64)
                .sum();
            assert!((cond_sum - 1.0).abs() < 1e-12);
            for j in 0..c {
                assert!((joint[i][j] - joint[j][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn chow_liu_two_classes() {
        let joint = vec![vec![0.5, 0.3], vec![0.3, 0.6]];
        assert_eq!(chow_liu_tree(&joint).unwrap(), vec![(0, 1)]);
    }

    #[test]
    fn chow_liu_independent_gives_star_at_zero() {
        // Independent: J[i][j] = P(i) P(j), all MI exactly 0.
        let p = [0.5, 0.5, 0.5, 0.5];
        let c = p.len();
        let mut joint = vec![vec![0.0; c]; c];
        for i in 0..c {
            for j in 0..c {
                joint[i][j] = if i == j { p[i] } else { p[i] * p[j] };
            }
        }
        assert_eq!(
            chow_liu_tree(&joint).unwrap(),
            vec![(0, 1), (0, 2), (0, 3)]
        );
    }

    /// Decode a Pruefer sequence into a labeled tree's edge set.
    fn pruefer_decode(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
        let mut degree = vec![1usize; n];
        for &s in seq {
            degree[s] += 1;
        }
        let mut edges = Vec::with_capacity(n - 1);
        let mut seq = seq.to_vec();
        for _ in 0..n - 1 {
            if seq.is_empty() {
                break;
            }
            let leaf = (0..n).find(|&v| degree[v] == 1).unwrap();
            let other = seq.remove(0);
            edges.push((leaf.min(other), leaf.max(other)));
            degree[leaf] -= 1;
            degree[other] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
        edges.push((rest[0].min(rest[1]), rest[0].max(rest[1])));
        edges.sort_unstable();
        edges
    }

    #[test]
    fn chow_liu_matches_spanning_tree_enumeration() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let c = 5usize;
        for _ in 0..40 {
            // Random positive joint with consistent marginals.
            let marginals: Vec<f64> = (0..c).map(|_| rng.gen_range(0.2..0.8)).collect();
            let mut joint = vec![vec![0.0; c]; c];
            for i in 0..c {
                joint[i][i] = marginals[i];
                for k in i + 1..c {
                    let lo = (marginals[i] + marginals[k] - 1.0).max(0.0) + 1e-6;
                    let hi = marginals[i].min(marginals[k]) - 1e-6;
                    let v = rng.gen_range(lo..hi);
                    joint[i][k] = v;
                    joint[k][i] = v;
                }
            }
            let got = chow_liu_tree(&joint).unwrap();
            // Enumerate all 125 labeled spanning trees via Pruefer sequences.
            let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
            for code in 0..c.pow((c - 2) as u32) {
                let seq = [(code / c / c) % c, (code / c) % c, code % c];
                let edges = pruefer_decode(&seq, c);
                let total: f64 = edges
                    .iter()
                    .map(|&(i, k)| pair_mutual_information(&joint, i, k).unwrap())
                    .sum();
                let better = match &best {
                    None => true,
                    Some((bt, be)) => total > bt + 1e-15 || ((total - bt).abs() <= 1e-15 && edges < *be),
                };
                if better {
                    best = Some((total, edges));
                }
            }
            assert_eq!(got, best.unwrap().1);
        }
    }

    #[test]
    fn chow_liu_tree_is_spanning() {
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        for &c in &[2usize, 4, 8, 13] {
            let marginals: Vec<f64> = (0..c).map(|_| rng.gen_range(0.2..0.8)).collect();
            let mut joint = vec![vec![0.0; c]; c];
            for i in 0..c {
                joint[i][i] = marginals[i];
                for k in i + 1..c {
                    let lo = (marginals[i] + marginals[k] - 1.0).max(0.0) + 1e-6;
                    let hi = marginals[i].min(marginals[k]) - 1e-6;
                    let v = rng.gen_range(lo..hi);
                    joint[i][k] = v;
                    joint[k][i] = v;
                }
            }
            let edges = chow_liu_tree(&joint).unwrap();
            assert_eq!(edges.len(), c - 1);
            // Union-find connectivity check.
            let mut parent: Vec<usize> = (0..c).collect();
            fn find(p: &mut Vec<usize>, mut x: usize) -> usize {
                while p[x] != x {
                    p[x] = p[p[x]];
                    x = p[x];
                }
                x
            }
            for &(a, b) in &edges {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                assert_ne!(ra, rb, "cycle in tree");
                parent[ra] = rb;
            }
        }
    }

    #[test]
    fn gt_one_hot_and_void_fallback() {
        let mut ls = three_class_space();
        ls.classes.push("d".into());
        ls.is_thing.push(false);
        let labels = vec![2, 2, 2, VOID];
        let mut inst = presence_instance("g", &labels, 0);
        inst.segments[0].gt_label = 2;
        inst.supersegments[0].gt_label = 2;
        let gt = gt_potentials(&inst, &ls).unwrap();
        assert_eq!(gt.seg_unary[0], vec![0.0, 0.0, 1.0, 0.0]);
        // All-void segment falls back to uniform.
        let void_labels = vec![VOID, VOID];
        let mut void_inst = presence_instance("v", &void_labels, 0);
        void_inst.segments[0].gt_label = VOID;
        void_inst.supersegments[0].gt_label = VOID;
        let gt_void = gt_potentials(&void_inst, &ls).unwrap();
        assert_eq!(gt_void.seg_unary[0], vec![0.25; 4]);
    }

    #[test]
    fn gt_detections_saturate_scores() {
        let ls = LabelSpace {
            classes: vec!["bg".into(), "obj".into()],
            scene_types: vec!["s".into()],
            is_thing: vec![false, true],
            detector_classes: vec!["obj".into()],
        };
        let labels = vec![0, 1, 1, 0];
        let mut inst = presence_instance("d", &labels, 0);
        inst.segments[0].gt_label = 0;
        inst.supersegments[0].gt_label = 0;
        inst.gt_boxes = vec![GtBox {
            class_id: 1,
            bbox: BBox { x0: 1, y0: 0, x1: 3, y1: 1 },
        }];
        let gt = gt_potentials(&inst, &ls).unwrap();
        assert_eq!(gt.detections.len(), 1);
        assert!(gt.detections[0].score.is_infinite());
        assert_eq!(gt.shape_masks[0].data, vec![1.0, 1.0]);
    }
}
