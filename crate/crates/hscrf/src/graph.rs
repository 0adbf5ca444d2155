//! The random field: variables, weighted factors, and MAP inference.
//!
//! Factors keep their unweighted base tables next to the weighted ones so the
//! learner can read feature counts; inference only touches the weighted
//! tables. Clamped variables are conditioned out before inference, never
//! encoded as infinities, so every table stays finite.

use serde::Serialize;
use thiserror::Error;

use crate::data::{LabelSpace, SceneInstance, VOID};
use crate::potentials::{PotentialBundle, Source};

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-6;

pub type GraphResult<T> = Result<T, GraphError>;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph too large to enumerate: ~{0:.0} joint states")]
    GraphTooLarge(f64),
    #[error("label {label} out of domain for variable {var}")]
    LabelOutOfDomain { var: usize, label: usize },
    #[error("assignment has {got} entries for {want} variables")]
    AssignmentLength { got: usize, want: usize },
    #[error("bundle component {0} missing but not marked removed")]
    MissingComponent(&'static str),
    #[error("clamp label {label} out of domain for variable {var}")]
    BadClamp { var: usize, label: usize },
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// What a variable stands for; the payload is its index within its kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Segment(usize),
    SuperSegment(usize),
    Detection(usize),
    ClassPresence(usize),
    Scene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Variable {
    pub kind: VariableKind,
    pub domain: usize,
}

/// The eleven weighted factor templates of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorTemplate {
    SegUnary,
    SupSegUnary,
    PnConsistency,
    ClassUnary,
    ClassClassTree,
    DetUnary,
    DetClassConsistency,
    Shape,
    SupSegClassConsistency,
    SceneUnary,
    SceneClass,
}

pub const NUM_TEMPLATES: usize = 11;

impl FactorTemplate {
    pub const ALL: [FactorTemplate; NUM_TEMPLATES] = [
        FactorTemplate::SegUnary,
        FactorTemplate::SupSegUnary,
        FactorTemplate::PnConsistency,
        FactorTemplate::ClassUnary,
        FactorTemplate::ClassClassTree,
        FactorTemplate::DetUnary,
        FactorTemplate::DetClassConsistency,
        FactorTemplate::Shape,
        FactorTemplate::SupSegClassConsistency,
        FactorTemplate::SceneUnary,
        FactorTemplate::SceneClass,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&t| t == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            FactorTemplate::SegUnary => "seg_unary",
            FactorTemplate::SupSegUnary => "supseg_unary",
            FactorTemplate::PnConsistency => "pn",
            FactorTemplate::ClassUnary => "class_unary",
            FactorTemplate::ClassClassTree => "class_tree",
            FactorTemplate::DetUnary => "det_unary",
            FactorTemplate::DetClassConsistency => "det_class",
            FactorTemplate::Shape => "shape",
            FactorTemplate::SupSegClassConsistency => "supseg_class",
            FactorTemplate::SceneUnary => "scene_unary",
            FactorTemplate::SceneClass => "scene_class",
        }
    }

    pub fn from_name(name: &str) -> Option<FactorTemplate> {
        Self::ALL.iter().copied().find(|t| t.name() == name)
    }
}

/// One non-negative weight per factor template.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(pub [f64; NUM_TEMPLATES]);

impl WeightVector {
    pub fn ones() -> Self {
        WeightVector([1.0; NUM_TEMPLATES])
    }

    pub fn zeros() -> Self {
        WeightVector([0.0; NUM_TEMPLATES])
    }

    pub fn get(&self, t: FactorTemplate) -> f64 {
        self.0[t.index()]
    }

    pub fn set(&mut self, t: FactorTemplate, w: f64) {
        self.0[t.index()] = w;
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for w in &mut out.0 {
            *w *= c;
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|w| w.is_finite() && *w >= 0.0)
    }

    pub fn to_map(&self) -> std::collections::BTreeMap<String, f64> {
        FactorTemplate::ALL
            .iter()
            .map(|t| (t.name().to_string(), self.get(*t)))
            .collect()
    }

    pub fn from_map(map: &std::collections::BTreeMap<String, f64>) -> Option<Self> {
        let mut out = WeightVector::zeros();
        for t in FactorTemplate::ALL {
            out.set(t, *map.get(t.name())?);
        }
        Some(out)
    }
}

impl serde::Serialize for WeightVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_map().serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for WeightVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = std::collections::BTreeMap::<String, f64>::deserialize(d)?;
        WeightVector::from_map(&map)
            .ok_or_else(|| serde::de::Error::custom("missing factor template weight"))
    }
}

/// Model factors carry their template; auxiliary factors (loss augmentation,
/// synthetic test factors) do not contribute features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorRole {
    Model(FactorTemplate),
    Aux,
}

/// A factor over one or two variables. `table` holds weighted log-scores,
/// row-major in scope order; `base` holds the unweighted entries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Factor {
    pub role: FactorRole,
    pub scope: Vec<usize>,
    pub base: Vec<f64>,
    pub table: Vec<f64>,
}

impl Factor {
    fn value_at(&self, assignment: &[usize], vars: &[Variable]) -> f64 {
        match self.scope.len() {
            1 => self.table[assignment[self.scope[0]]],
            2 => {
                let d1 = vars[self.scope[1]].domain;
                self.table[assignment[self.scope[0]] * d1 + assignment[self.scope[1]]]
            }
            _ => unreachable!("factor scopes are 1 or 2 variables"),
        }
    }

    fn base_at(&self, assignment: &[usize], vars: &[Variable]) -> f64 {
        match self.scope.len() {
            1 => self.base[assignment[self.scope[0]]],
            2 => {
                let d1 = vars[self.scope[1]].domain;
                self.base[assignment[self.scope[0]] * d1 + assignment[self.scope[1]]]
            }
            _ => unreachable!(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorGraph {
    pub variables: Vec<Variable>,
    pub factors: Vec<Factor>,
    pub clamps: Vec<Option<usize>>,
}

impl FactorGraph {
    pub fn new(variables: Vec<Variable>) -> Self {
        let clamps = vec![None; variables.len()];
        FactorGraph { variables, factors: Vec::new(), clamps }
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    /// Add a unary factor whose table is already in final log-score form.
    pub fn add_unary(&mut self, role: FactorRole, var: usize, table: Vec<f64>) {
        assert_eq!(table.len(), self.variables[var].domain);
        self.factors.push(Factor {
            role,
            scope: vec![var],
            base: table.clone(),
            table,
        });
    }

    /// Add a pairwise factor, row-major over (u, v), in final log-score form.
    pub fn add_pairwise(&mut self, role: FactorRole, u: usize, v: usize, table: Vec<f64>) {
        assert_ne!(u, v);
        assert_eq!(table.len(), self.variables[u].domain * self.variables[v].domain);
        self.factors.push(Factor {
            role,
            scope: vec![u, v],
            base: table.clone(),
            table,
        });
    }

    fn add_weighted_unary(&mut self, t: FactorTemplate, w: f64, var: usize, base: Vec<f64>) {
        assert_eq!(base.len(), self.variables[var].domain);
        let table = base.iter().map(|&b| w * b).collect();
        self.factors.push(Factor {
            role: FactorRole::Model(t),
            scope: vec![var],
            base,
            table,
        });
    }

    fn add_weighted_pairwise(
        &mut self,
        t: FactorTemplate,
        w: f64,
        u: usize,
        v: usize,
        base: Vec<f64>,
    ) {
        assert_eq!(base.len(), self.variables[u].domain * self.variables[v].domain);
        let table = base.iter().map(|&b| w * b).collect();
        self.factors.push(Factor {
            role: FactorRole::Model(t),
            scope: vec![u, v],
            base,
            table,
        });
    }

    pub fn set_clamp(&mut self, var: usize, label: usize) -> GraphResult<()> {
        if label >= self.variables[var].domain {
            return Err(GraphError::BadClamp { var, label });
        }
        self.clamps[var] = Some(label);
        Ok(())
    }

    /// Sum of unweighted base entries per template at `assignment`; the
    /// learner's feature vector.
    pub fn features(&self, assignment: &[usize]) -> [f64; NUM_TEMPLATES] {
        let mut out = [0.0; NUM_TEMPLATES];
        for f in &self.factors {
            if let FactorRole::Model(t) = f.role {
                out[t.index()] += f.base_at(assignment, &self.variables);
            }
        }
        out
    }

    /// Variables touched by at least one factor.
    pub fn covered_variables(&self) -> Vec<bool> {
        let mut covered = vec![false; self.variables.len()];
        for f in &self.factors {
            for &v in &f.scope {
                covered[v] = true;
            }
        }
        covered
    }

    /// Connected components over variables, with pairwise factors as edges.
    pub fn connected_components(&self) -> usize {
        let n = self.variables.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for f in &self.factors {
            if f.scope.len() == 2 {
                let (a, b) = (find(&mut parent, f.scope[0]), find(&mut parent, f.scope[1]));
                if a != b {
                    parent[a] = b;
                }
            }
        }
        let mut roots: Vec<usize> = (0..n).map(|v| find(&mut parent, v)).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    /// Stable JSON dump for debugging.
    pub fn dump_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// MAP assignment and bookkeeping. `log_score` is reproducible through
/// [`score`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceResult {
    pub assignment: Vec<usize>,
    pub log_score: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Total weighted log-score of a full assignment.
pub fn score(g: &FactorGraph, assignment: &[usize]) -> GraphResult<f64> {
    if assignment.len() != g.variables.len() {
        return Err(GraphError::AssignmentLength {
            got: assignment.len(),
            want: g.variables.len(),
        });
    }
    for (var, (&label, v)) in assignment.iter().zip(&g.variables).enumerate() {
        if label >= v.domain {
            return Err(GraphError::LabelOutOfDomain { var, label });
        }
    }
    Ok(g
        .factors
        .iter()
        .map(|f| f.value_at(assignment, &g.variables))
        .sum())
}

/// Clamps conditioned out: factors sliced at the clamped labels, free
/// variables re-indexed, fully-clamped factors folded into a constant.
struct Reduced {
    free: Vec<usize>,
    domains: Vec<usize>,
    factors: Vec<(Vec<usize>, Vec<f64>)>,
    constant: f64,
}

fn reduce(g: &FactorGraph) -> GraphResult<Reduced> {
    for (var, clamp) in g.clamps.iter().enumerate() {
        if let Some(label) = clamp {
            if *label >= g.variables[var].domain {
                return Err(GraphError::BadClamp { var, label: *label });
            }
        }
    }
    let free: Vec<usize> = (0..g.variables.len()).filter(|&v| g.clamps[v].is_none()).collect();
    let mut index_of = vec![usize::MAX; g.variables.len()];
    for (ri, &v) in free.iter().enumerate() {
        index_of[v] = ri;
    }
    let domains: Vec<usize> = free.iter().map(|&v| g.variables[v].domain).collect();
    let mut factors = Vec::with_capacity(g.factors.len());
    let mut constant = 0.0;
    for f in &g.factors {
        match f.scope.len() {
            1 => {
                let u = f.scope[0];
                match g.clamps[u] {
                    Some(c) => constant += f.table[c],
                    None => factors.push((vec![index_of[u]], f.table.clone())),
                }
            }
            2 => {
                let (u, v) = (f.scope[0], f.scope[1]);
                let dv = g.variables[v].domain;
                match (g.clamps[u], g.clamps[v]) {
                    (Some(cu), Some(cv)) => constant += f.table[cu * dv + cv],
                    (Some(cu), None) => {
                        let row = f.table[cu * dv..(cu + 1) * dv].to_vec();
                        factors.push((vec![index_of[v]], row));
                    }
                    (None, Some(cv)) => {
                        let du = g.variables[u].domain;
                        let col = (0..du).map(|a| f.table[a * dv + cv]).collect();
                        factors.push((vec![index_of[u]], col));
                    }
                    (None, None) => {
                        factors.push((vec![index_of[u], index_of[v]], f.table.clone()));
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    Ok(Reduced { free, domains, factors, constant })
}

fn splice(g: &FactorGraph, red: &Reduced, free_assignment: &[usize]) -> Vec<usize> {
    let mut full: Vec<usize> = (0..g.variables.len())
        .map(|v| g.clamps[v].unwrap_or(0))
        .collect();
    for (ri, &v) in red.free.iter().enumerate() {
        full[v] = free_assignment[ri];
    }
    full
}

const MAX_ENUM_STATES: f64 = 1e7;

/// Globally optimal assignment by enumeration. Ties break to the
/// lexicographically smallest assignment (variable 0 most significant).
pub fn map_exact(g: &FactorGraph) -> GraphResult<InferenceResult> {
    let red = reduce(g)?;
    let states: f64 = red.domains.iter().map(|&d| d as f64).product();
    if states > MAX_ENUM_STATES {
        return Err(GraphError::GraphTooLarge(states));
    }
    let n = red.domains.len();
    let mut current = vec![0usize; n];
    let mut best = current.clone();
    let mut best_score = f64::NEG_INFINITY;
    let eval = |a: &[usize]| -> f64 {
        red.factors
            .iter()
            .map(|(scope, table)| match scope.len() {
                1 => table[a[scope[0]]],
                _ => table[a[scope[0]] * red.domains[scope[1]] + a[scope[1]]],
            })
            .sum()
    };
    loop {
        let s = eval(&current);
        if s > best_score {
            best_score = s;
            best.copy_from_slice(&current);
        }
        // Lexicographic odometer: last variable fastest, so assignments are
        // visited in lexicographic order and strict improvement keeps the
        // lexicographically smallest optimum.
        let mut pos = n;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            current[pos] += 1;
            if current[pos] < red.domains[pos] {
                break;
            }
            current[pos] = 0;
        }
        if current.iter().all(|&x| x == 0) {
            break;
        }
        if n == 0 {
            break;
        }
    }
    if n == 0 {
        best_score = 0.0;
    }
    let assignment = splice(g, &red, &best);
    let log_score = best_score + red.constant;
    Ok(InferenceResult {
        assignment,
        log_score,
        converged: true,
        iterations: 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopyOptions {
    pub damping: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for LoopyOptions {
    fn default() -> Self {
        LoopyOptions { damping: 0.5, max_iters: 200, tol: 1e-5 }
    }
}

/// Synchronous damped max-product. Deterministic: messages update in factor
/// order every iteration; `converged` reports whether the largest message
/// change fell below `tol` within the iteration budget.
pub fn map_loopy(g: &FactorGraph, opts: &LoopyOptions) -> GraphResult<InferenceResult> {
    let (result, _) = map_loopy_with_beliefs(g, opts)?;
    Ok(result)
}

/// As [`map_loopy`], also returning per-variable max-normalized beliefs
/// (clamped variables get a one-hot belief at their clamp).
pub fn map_loopy_with_beliefs(
    g: &FactorGraph,
    opts: &LoopyOptions,
) -> GraphResult<(InferenceResult, Vec<Vec<f64>>)> {
    assert!((0.0..1.0).contains(&opts.damping), "damping must be in [0, 1)");
    assert!(opts.max_iters >= 1, "need at least one iteration");
    let red = reduce(g)?;
    let n = red.domains.len();

    // Edges: one per (factor, scope slot).
    struct Edge {
        factor: usize,
        slot: usize,
        var: usize,
    }
    let mut edges = Vec::new();
    let mut var_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (fi, (scope, _)) in red.factors.iter().enumerate() {
        for (slot, &v) in scope.iter().enumerate() {
            var_edges[v].push(edges.len());
            edges.push(Edge { factor: fi, slot, var: v });
        }
    }

    let mut to_factor: Vec<Vec<f64>> = edges.iter().map(|e| vec![0.0; red.domains[e.var]]).collect();
    let mut to_var: Vec<Vec<f64>> = to_factor.clone();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iters {
        iterations += 1;
        // Variable -> factor from last iteration's factor -> variable.
        for (ei, edge) in edges.iter().enumerate() {
            let msg = &mut to_factor[ei];
            msg.iter_mut().for_each(|m| *m = 0.0);
            for &other in &var_edges[edge.var] {
                if other == ei {
                    continue;
                }
                for (m, t) in msg.iter_mut().zip(&to_var[other]) {
                    *m += t;
                }
            }
            let max = msg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if max.is_finite() {
                msg.iter_mut().for_each(|m| *m -= max);
            }
        }
        // Factor -> variable, damped.
        let mut delta: f64 = 0.0;
        for (ei, edge) in edges.iter().enumerate() {
            let (scope, table) = &red.factors[edge.factor];
            let mut fresh = vec![f64::NEG_INFINITY; red.domains[edge.var]];
            match scope.len() {
                1 => fresh.copy_from_slice(table),
                2 => {
                    let (d0, d1) = (red.domains[scope[0]], red.domains[scope[1]]);
                    // The message from the other variable in scope.
                    let other_edge = var_edges[scope[1 - edge.slot]]
                        .iter()
                        .copied()
                        .find(|&oe| edges[oe].factor == edge.factor && edges[oe].slot == 1 - edge.slot)
                        .unwrap();
                    let incoming = &to_factor[other_edge];
                    if edge.slot == 0 {
                        for a in 0..d0 {
                            for b in 0..d1 {
                                let v = table[a * d1 + b] + incoming[b];
                                if v > fresh[a] {
                                    fresh[a] = v;
                                }
                            }
                        }
                    } else {
                        for b in 0..d1 {
                            for a in 0..d0 {
                                let v = table[a * d1 + b] + incoming[a];
                                if v > fresh[b] {
                                    fresh[b] = v;
                                }
                            }
                        }
                    }
                }
                _ => unreachable!(),
            }
            let max = fresh.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if max.is_finite() {
                fresh.iter_mut().for_each(|m| *m -= max);
            }
            let old = &mut to_var[ei];
            for (o, f) in old.iter_mut().zip(&fresh) {
                let next = opts.damping * *o + (1.0 - opts.damping) * f;
                delta = delta.max((next - *o).abs());
                *o = next;
            }
        }
        if delta < opts.tol {
            converged = true;
            break;
        }
    }

    // Beliefs and decoding; ties take the lowest label.
    let mut free_assignment = vec![0usize; n];
    let mut free_beliefs: Vec<Vec<f64>> = Vec::with_capacity(n);
    for v in 0..n {
        let mut belief = vec![0.0; red.domains[v]];
        for &e in &var_edges[v] {
            for (b, m) in belief.iter_mut().zip(&to_var[e]) {
                *b += m;
            }
        }
        let max = belief.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max.is_finite() {
            belief.iter_mut().for_each(|b| *b -= max);
        }
        let best = belief
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.partial_cmp(b).unwrap().then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        free_assignment[v] = best;
        free_beliefs.push(belief);
    }

    let assignment = splice(g, &red, &free_assignment);
    let log_score = score(g, &assignment)?;

    let mut beliefs: Vec<Vec<f64>> = g
        .variables
        .iter()
        .enumerate()
        .map(|(v, var)| match g.clamps[v] {
            Some(c) => {
                let mut b = vec![f64::NEG_INFINITY; var.domain];
                b[c] = 0.0;
                b
            }
            None => Vec::new(),
        })
        .collect();
    for (ri, &v) in red.free.iter().enumerate() {
        beliefs[v] = free_beliefs[ri].clone();
    }

    Ok((
        InferenceResult {
            assignment,
            log_score,
            converged,
            iterations,
        },
        beliefs,
    ))
}

/// Variable indexing for a scene's graph: segments, then super-segments,
/// then detections, then class-presence bits, then the scene variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableLayout {
    pub n_seg: usize,
    pub n_supseg: usize,
    pub n_det: usize,
    pub n_classes: usize,
    pub n_scenes: usize,
}

impl VariableLayout {
    pub fn new(inst: &SceneInstance, ls: &LabelSpace, n_det: usize) -> Self {
        VariableLayout {
            n_seg: inst.segments.len(),
            n_supseg: inst.supersegments.len(),
            n_det,
            n_classes: ls.num_classes(),
            n_scenes: ls.num_scene_types(),
        }
    }

    pub fn seg(&self, i: usize) -> usize {
        i
    }

    pub fn supseg(&self, j: usize) -> usize {
        self.n_seg + j
    }

    pub fn det(&self, i: usize) -> usize {
        self.n_seg + self.n_supseg + i
    }

    pub fn class(&self, k: usize) -> usize {
        self.n_seg + self.n_supseg + self.n_det + k
    }

    pub fn scene(&self) -> usize {
        self.n_seg + self.n_supseg + self.n_det + self.n_classes
    }

    pub fn num_vars(&self) -> usize {
        self.n_seg + self.n_supseg + self.n_det + self.n_classes + 1
    }

    pub fn variables(&self) -> Vec<Variable> {
        let mut vars = Vec::with_capacity(self.num_vars());
        for i in 0..self.n_seg {
            vars.push(Variable { kind: VariableKind::Segment(i), domain: self.n_classes });
        }
        for j in 0..self.n_supseg {
            vars.push(Variable { kind: VariableKind::SuperSegment(j), domain: self.n_classes });
        }
        for i in 0..self.n_det {
            vars.push(Variable { kind: VariableKind::Detection(i), domain: 2 });
        }
        for k in 0..self.n_classes {
            vars.push(Variable { kind: VariableKind::ClassPresence(k), domain: 2 });
        }
        vars.push(Variable { kind: VariableKind::Scene, domain: self.n_scenes });
        vars
    }
}

/// Ground-truth assignment in graph variable order. Variables without a
/// defined truth (void-majority regions) are `None` and never incur loss.
/// A detection counts as correct when it overlaps a same-class annotation
/// box at IoU >= 0.5.
pub fn gt_assignment(
    inst: &SceneInstance,
    ls: &LabelSpace,
    detections: &[crate::data::DetectionCandidate],
) -> Vec<Option<usize>> {
    let layout = VariableLayout::new(inst, ls, detections.len());
    let mut gt: Vec<Option<usize>> = vec![None; layout.num_vars()];
    for (i, seg) in inst.segments.iter().enumerate() {
        gt[layout.seg(i)] = (seg.gt_label != VOID).then_some(seg.gt_label as usize);
    }
    for (j, ss) in inst.supersegments.iter().enumerate() {
        gt[layout.supseg(j)] = (ss.gt_label != VOID).then_some(ss.gt_label as usize);
    }
    for (i, det) in detections.iter().enumerate() {
        let correct = inst
            .gt_boxes
            .iter()
            .any(|g| g.class_id == det.class_id && g.bbox.iou(&det.bbox) >= 0.5);
        gt[layout.det(i)] = Some(correct as usize);
    }
    let present = inst.gt_presence(ls.num_classes()).unwrap_or_default();
    for (k, &p) in present.iter().enumerate() {
        gt[layout.class(k)] = Some(p as usize);
    }
    gt[layout.scene()] = Some(inst.gt_scene);
    gt
}

fn log_floor(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// Build the weighted factor graph for one scene from its bundle. Removed
/// components contribute no factors (and removed detections, no variables);
/// a component that is neither present nor removed is an error.
pub fn build_graph(
    inst: &SceneInstance,
    ls: &LabelSpace,
    bundle: &PotentialBundle,
    w: &WeightVector,
    clamps: &[(usize, usize)],
) -> GraphResult<FactorGraph> {
    let src = &bundle.sources;
    let check = |present: bool, removed: bool, name: &'static str| -> GraphResult<()> {
        if !present && !removed {
            return Err(GraphError::MissingComponent(name));
        }
        Ok(())
    };
    check(bundle.seg_unary.is_some(), src.seg_unary == Source::Remove, "seg_unary")?;
    check(bundle.supseg_unary.is_some(), src.supseg_unary == Source::Remove, "supseg_unary")?;
    check(bundle.class_unary.is_some(), src.class_unary == Source::Remove, "class_unary")?;
    check(bundle.class_tree.is_some(), src.class_tree == Source::Remove, "class_tree")?;
    check(bundle.detections.is_some(), src.detection == Source::Remove, "detection")?;
    check(
        bundle.shape_masks.is_some(),
        src.shape == Source::Remove || bundle.detections.as_ref().is_none_or(|d| d.is_empty()) || src.detection == Source::Remove,
        "shape",
    )?;
    check(bundle.scene_unary.is_some(), src.scene_unary == Source::Remove, "scene_unary")?;
    check(bundle.scene_class.is_some(), src.scene_class == Source::Remove, "scene_class")?;

    let detections = bundle.detections.as_deref().unwrap_or(&[]);
    let layout = VariableLayout::new(inst, ls, detections.len());
    let mut g = FactorGraph::new(layout.variables());
    let c = ls.num_classes();

    if let Some(rows) = &bundle.seg_unary {
        let wt = w.get(FactorTemplate::SegUnary);
        for (i, row) in rows.iter().enumerate() {
            let base: Vec<f64> = row.iter().map(|&p| log_floor(p)).collect();
            g.add_weighted_unary(FactorTemplate::SegUnary, wt, layout.seg(i), base);
        }
    }
    if let Some(rows) = &bundle.supseg_unary {
        let wt = w.get(FactorTemplate::SupSegUnary);
        for (j, row) in rows.iter().enumerate() {
            let base: Vec<f64> = row.iter().map(|&p| log_floor(p)).collect();
            g.add_weighted_unary(FactorTemplate::SupSegUnary, wt, layout.supseg(j), base);
        }
    }
    if bundle.pn_active {
        let wt = w.get(FactorTemplate::PnConsistency);
        for (i, &parent) in inst.seg_parent.iter().enumerate() {
            let mut base = vec![0.0; c * c];
            for a in 0..c {
                base[a * c + a] = 1.0;
            }
            g.add_weighted_pairwise(
                FactorTemplate::PnConsistency,
                wt,
                layout.seg(i),
                layout.supseg(parent),
                base,
            );
        }
    }
    if let Some(probs) = &bundle.class_unary {
        let wt = w.get(FactorTemplate::ClassUnary);
        for (k, &p) in probs.iter().enumerate() {
            let base = vec![log_floor(1.0 - p), log_floor(p)];
            g.add_weighted_unary(FactorTemplate::ClassUnary, wt, layout.class(k), base);
        }
    }
    if let Some(edges) = &bundle.class_tree {
        let wt = w.get(FactorTemplate::ClassClassTree);
        for e in edges {
            let base: Vec<f64> = e.joint.iter().map(|&p| log_floor(p)).collect();
            g.add_weighted_pairwise(
                FactorTemplate::ClassClassTree,
                wt,
                layout.class(e.a),
                layout.class(e.b),
                base,
            );
        }
    }
    let det_wt = w.get(FactorTemplate::DetUnary);
    let cons_wt = w.get(FactorTemplate::DetClassConsistency);
    for (i, det) in detections.iter().enumerate() {
        g.add_weighted_unary(
            FactorTemplate::DetUnary,
            det_wt,
            layout.det(i),
            vec![0.0, sigmoid(det.score)],
        );
        // Penalize accepting a detection whose class is marked absent.
        let base = vec![0.0, 0.0, -1.0, 0.0];
        g.add_weighted_pairwise(
            FactorTemplate::DetClassConsistency,
            cons_wt,
            layout.det(i),
            layout.class(det.class_id),
            base,
        );
    }
    if let Some(masks) = &bundle.shape_masks {
        let wt = w.get(FactorTemplate::Shape);
        let cells = inst.num_cells();
        for (i, (det, mask)) in detections.iter().zip(masks).enumerate() {
            let bb = &det.bbox;
            for (j, seg) in inst.segments.iter().enumerate() {
                let seg_cells = seg
                    .pixel_set
                    .decode_cells(cells)
                    .expect("validated instance");
                let mut acc = 0.0;
                let mut inside = 0usize;
                for &cell in &seg_cells {
                    let (x, y) = ((cell as u32) % inst.grid.width, (cell as u32) / inst.grid.width);
                    if bb.contains(x, y) {
                        let u = (x - bb.x0) as f64 / bb.width() as f64;
                        let v = (y - bb.y0) as f64 / bb.height() as f64;
                        acc += mask.sample(u, v);
                        inside += 1;
                    }
                }
                if inside == 0 {
                    continue;
                }
                let strength = acc / seg_cells.len() as f64;
                if strength <= 0.0 {
                    continue;
                }
                // Reward the segment taking the detector's class while the
                // detection is accepted.
                let mut base = vec![0.0; 2 * c];
                base[c + det.class_id] = strength;
                g.add_weighted_pairwise(FactorTemplate::Shape, wt, layout.det(i), layout.seg(j), base);
            }
        }
    }
    {
        let wt = w.get(FactorTemplate::SupSegClassConsistency);
        for j in 0..layout.n_supseg {
            for k in 0..c {
                // Penalize a super-segment labeled k while z_k is off.
                let mut base = vec![0.0; c * 2];
                base[k * 2] = -1.0;
                g.add_weighted_pairwise(
                    FactorTemplate::SupSegClassConsistency,
                    wt,
                    layout.supseg(j),
                    layout.class(k),
                    base,
                );
            }
        }
    }
    if let Some(probs) = &bundle.scene_unary {
        let wt = w.get(FactorTemplate::SceneUnary);
        let base: Vec<f64> = probs.iter().map(|&p| log_floor(p)).collect();
        g.add_weighted_unary(FactorTemplate::SceneUnary, wt, layout.scene(), base);
    }
    if let Some(table) = &bundle.scene_class {
        let wt = w.get(FactorTemplate::SceneClass);
        for k in 0..c {
            let mut base = vec![0.0; layout.n_scenes * 2];
            for l in 0..layout.n_scenes {
                base[l * 2] = log_floor(1.0 - table[l][k]);
                base[l * 2 + 1] = log_floor(table[l][k]);
            }
            g.add_weighted_pairwise(FactorTemplate::SceneClass, wt, layout.scene(), layout.class(k), base);
        }
    }

    for &(var, label) in clamps {
        g.set_clamp(var, label)?;
    }
    debug_assert!(
        g.factors.iter().all(|f| f.table.iter().all(|x| x.is_finite())),
        "non-finite factor table"
    );
    Ok(g)
}
