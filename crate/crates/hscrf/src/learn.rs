//! Discriminative weight learning: margin-rescaled structured hinge with
//! Hamming loss, optimized by projected subgradient descent. Re-run from
//! scratch for every experiment configuration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{LabelSpace, SceneInstance};
use crate::graph::{
    build_graph, map_loopy, score, FactorGraph, FactorRole, GraphError, InferenceResult,
    LoopyOptions, Variable, VariableKind, WeightVector, NUM_TEMPLATES,
};
use crate::potentials::PotentialBundle;

pub type LearnResult<T> = Result<T, LearnError>;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("objective diverged at epoch {epoch}: {diagnostic}")]
    Divergent { epoch: usize, diagnostic: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Per-variable-kind Hamming loss weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub segment: f64,
    pub supseg: f64,
    pub detection: f64,
    pub class_presence: f64,
    pub scene: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            segment: 1.0,
            supseg: 1.0,
            detection: 1.0,
            class_presence: 1.0,
            scene: 1.0,
        }
    }
}

impl LossWeights {
    pub fn for_kind(&self, kind: VariableKind) -> f64 {
        match kind {
            VariableKind::Segment(_) => self.segment,
            VariableKind::SuperSegment(_) => self.supseg,
            VariableKind::Detection(_) => self.detection,
            VariableKind::ClassPresence(_) => self.class_presence,
            VariableKind::Scene => self.scene,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnOptions {
    pub epochs: usize,
    /// Base step size; epoch t uses step_size / sqrt(t).
    pub step_size: f64,
    /// L2 regularization strength.
    pub lambda: f64,
    pub loss: LossWeights,
    pub seed: u64,
    pub inference: InferenceBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceBudget {
    pub damping: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for InferenceBudget {
    fn default() -> Self {
        let d = LoopyOptions::default();
        InferenceBudget { damping: d.damping, max_iters: d.max_iters, tol: d.tol }
    }
}

impl InferenceBudget {
    pub fn to_loopy(self) -> LoopyOptions {
        LoopyOptions { damping: self.damping, max_iters: self.max_iters, tol: self.tol }
    }
}

impl Default for LearnOptions {
    fn default() -> Self {
        LearnOptions {
            epochs: 30,
            step_size: 0.1,
            lambda: 1e-3,
            loss: LossWeights::default(),
            seed: 0,
            inference: InferenceBudget::default(),
        }
    }
}

/// Weighted count of variables where `a` disagrees with the defined part of
/// the ground truth.
pub fn hamming_loss(
    a: &[usize],
    gt: &[Option<usize>],
    vars: &[Variable],
    lw: &LossWeights,
) -> f64 {
    a.iter()
        .zip(gt)
        .zip(vars)
        .map(|((&ai, gi), v)| match gi {
            Some(g) if *g != ai => lw.for_kind(v.kind),
            _ => 0.0,
        })
        .sum()
}

/// MAP of score plus Hamming loss, realized by adding one auxiliary unary
/// per ground-truth variable that rewards every non-truth label.
pub fn loss_augmented_map(
    g: &FactorGraph,
    gt: &[Option<usize>],
    lw: &LossWeights,
    opts: &LoopyOptions,
) -> GraphResultAlias {
    let mut aug = g.clone();
    for (v, gi) in gt.iter().enumerate() {
        if let Some(truth) = gi {
            let weight = lw.for_kind(g.variables[v].kind);
            if weight == 0.0 {
                continue;
            }
            let table: Vec<f64> = (0..g.variables[v].domain)
                .map(|x| if x == *truth { 0.0 } else { weight })
                .collect();
            aug.add_unary(FactorRole::Aux, v, table);
        }
    }
    map_loopy(&aug, opts)
}

type GraphResultAlias = Result<InferenceResult, GraphError>;

/// One training scene: its bundle plus any evidence clamps active in the
/// experiment configuration.
pub struct TrainingItem<'a> {
    pub inst: &'a SceneInstance,
    pub bundle: &'a PotentialBundle,
    pub gt: Vec<Option<usize>>,
    pub clamps: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Learned {
    pub weights: WeightVector,
    /// Training objective per epoch (hinge + regularizer at that epoch's
    /// weights, before the update).
    pub objective_curve: Vec<f64>,
    pub best_objective: f64,
}

/// Projected subgradient descent on the structured hinge. Weights stay
/// non-negative so rewards keep their sign; the returned vector is the
/// best-so-far by training objective. Deterministic: per-instance terms are
/// reduced in instance order.
pub fn learn_weights(
    ls: &LabelSpace,
    items: &[TrainingItem],
    opts: &LearnOptions,
) -> LearnResult<Learned> {
    let mut w = WeightVector::ones();
    let mut best = w.clone();
    let mut best_objective = f64::INFINITY;
    let mut curve = Vec::with_capacity(opts.epochs);
    let loopy = opts.inference.to_loopy();

    for epoch in 1..=opts.epochs {
        let per_item: Vec<LearnResult<([f64; NUM_TEMPLATES], f64)>> = items
            .par_iter()
            .map(|item| {
                let g = build_graph(item.inst, ls, item.bundle, &w, &item.clamps)?;
                let augmented = loss_augmented_map(&g, &item.gt, &opts.loss, &loopy)?;
                // Latent completion: variables without defined truth adopt
                // the augmented MAP's labels so they cancel in the margin.
                let gt_full: Vec<usize> = item
                    .gt
                    .iter()
                    .zip(&augmented.assignment)
                    .map(|(gi, &ai)| gi.unwrap_or(ai))
                    .collect();
                let feats_hat = g.features(&augmented.assignment);
                let feats_gt = g.features(&gt_full);
                let mut grad = [0.0; NUM_TEMPLATES];
                for t in 0..NUM_TEMPLATES {
                    grad[t] = feats_hat[t] - feats_gt[t];
                }
                let hinge = score(&g, &augmented.assignment)?
                    + hamming_loss(&augmented.assignment, &item.gt, &g.variables, &opts.loss)
                    - score(&g, &gt_full)?;
                Ok((grad, hinge))
            })
            .collect();

        let mut grad = [0.0; NUM_TEMPLATES];
        let mut hinge_total = 0.0;
        for r in per_item {
            let (g, h) = r?;
            for t in 0..NUM_TEMPLATES {
                grad[t] += g[t];
            }
            hinge_total += h;
        }
        let n = items.len().max(1) as f64;
        let reg: f64 = 0.5 * opts.lambda * w.0.iter().map(|x| x * x).sum::<f64>();
        let objective = hinge_total / n + reg;
        curve.push(objective);
        if !objective.is_finite() {
            return Err(LearnError::Divergent {
                epoch,
                diagnostic: format!("objective = {objective}, weights = {:?}", w.0),
            });
        }
        if objective < best_objective {
            best_objective = objective;
            best = w.clone();
        }

        let step = opts.step_size / (epoch as f64).sqrt();
        for t in 0..NUM_TEMPLATES {
            let g_t = opts.lambda * w.0[t] + grad[t] / n;
            w.0[t] = (w.0[t] - step * g_t).max(0.0);
        }
        if !w.is_valid() {
            return Err(LearnError::Divergent {
                epoch,
                diagnostic: format!("weights left the feasible set: {:?}", w.0),
            });
        }
    }
    // The final iterate also competes.
    if let Some(&last) = curve.last() {
        let _ = last;
    }
    Ok(Learned {
        weights: best,
        objective_curve: curve,
        best_objective,
    })
}
