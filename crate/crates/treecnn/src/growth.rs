//! Growth policy: pure decision logic placing new classes under a node.
//!
//! Probe images of each new class are shown to the node's classifier; the
//! per-child outputs are averaged over images and pushed through a column
//! softmax to get a likelihood matrix. Classes are then placed greedily, most
//! confident first: a clear favorite child absorbs the class, two close
//! favorites trigger a merge, and a class with no affinity becomes a new leaf.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::tensor::Tensor;
use crate::tree::{ChildSummary, ClassLabel, NodeId};

/// Raw classifier outputs for the probe set: `output(k, m, i)` is child
/// neuron `k` on image `i` of new class `m`.
#[derive(Debug, Clone)]
pub struct SampleOutputs {
    /// Tensor of shape `[K, M, I]`.
    pub outputs: Tensor,
    /// Class label per column, length `M`.
    pub classes: Vec<ClassLabel>,
}

impl SampleOutputs {
    pub fn new(outputs: Tensor, classes: Vec<ClassLabel>) -> Result<Self> {
        let shape = outputs.shape();
        if shape.len() != 3 || shape.iter().any(|&e| e == 0) {
            return Err(Error::ShapeMismatch {
                layer: "sample outputs".into(),
                expected: "[K, M, I] with positive extents".into(),
                got: format!("{shape:?}"),
            });
        }
        if classes.len() != shape[1] {
            return Err(Error::ShapeMismatch {
                layer: "sample outputs".into(),
                expected: format!("{} class labels", shape[1]),
                got: format!("{}", classes.len()),
            });
        }
        if !outputs.is_finite() {
            return Err(Error::NonFinite("probe outputs".into()));
        }
        Ok(SampleOutputs { outputs, classes })
    }

    pub fn children(&self) -> usize {
        self.outputs.shape()[0]
    }

    pub fn new_classes(&self) -> usize {
        self.outputs.shape()[1]
    }

    pub fn images_per_class(&self) -> usize {
        self.outputs.shape()[2]
    }
}

/// Column-major view of a `K x M` matrix of f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut m = Matrix::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, &v) in row.iter().enumerate() {
                *m.at_mut(i, j) = v;
            }
        }
        m
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn at_mut(&mut self, row: usize, col: usize) -> &mut f64 {
        &mut self.data[row * self.cols + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.at(r, col)).collect()
    }
}

/// Averaged outputs and their column-softmax likelihoods, with full branches
/// masked out.
#[derive(Debug, Clone)]
pub struct LikelihoodMatrix {
    /// Per-column class labels, length `M`.
    pub classes: Vec<ClassLabel>,
    /// `K x M` mean output per (child, class).
    pub averaged: Matrix,
    /// `K x M` column softmax over unmasked rows; masked rows are exactly 0.
    pub likelihood: Matrix,
    /// Rows excluded from the softmax (branches at capacity).
    pub full_mask: Vec<bool>,
}

/// Mean over probe images: `averaged(k, m) = mean_i outputs(k, m, i)`.
/// Accumulated in f64.
pub fn average_outputs(outputs: &SampleOutputs) -> Matrix {
    let (k, m, i) = (
        outputs.children(),
        outputs.new_classes(),
        outputs.images_per_class(),
    );
    let data = outputs.outputs.data();
    let mut averaged = Matrix::zeros(k, m);
    for row in 0..k {
        for col in 0..m {
            let base = (row * m + col) * i;
            let mut sum = 0.0f64;
            for &v in &data[base..base + i] {
                sum += v as f64;
            }
            *averaged.at_mut(row, col) = sum / i as f64;
        }
    }
    averaged
}

/// Column-wise softmax over unmasked rows; masked rows contribute exactly 0.
/// Fails if every row is masked — the caller must then place classes as new
/// leaves of the node being grown.
pub fn compute_likelihood(averaged: &Matrix, full_mask: &[bool]) -> Result<Matrix> {
    assert_eq!(full_mask.len(), averaged.rows, "mask length mismatch");
    if full_mask.iter().all(|&m| m) {
        return Err(Error::AllBranchesFull);
    }
    let mut likelihood = Matrix::zeros(averaged.rows, averaged.cols);
    for col in 0..averaged.cols {
        let mut max = f64::NEG_INFINITY;
        for row in 0..averaged.rows {
            if !full_mask[row] {
                max = max.max(averaged.at(row, col));
            }
        }
        let mut sum = 0.0f64;
        for row in 0..averaged.rows {
            if !full_mask[row] {
                let e = (averaged.at(row, col) - max).exp();
                *likelihood.at_mut(row, col) = e;
                sum += e;
            }
        }
        for row in 0..averaged.rows {
            if !full_mask[row] {
                *likelihood.at_mut(row, col) /= sum;
            }
        }
    }
    Ok(likelihood)
}

/// Build the likelihood matrix for one probe: average, mask, softmax.
pub fn likelihood_from_outputs(
    outputs: &SampleOutputs,
    full_mask: Vec<bool>,
) -> Result<LikelihoodMatrix> {
    let averaged = average_outputs(outputs);
    let likelihood = compute_likelihood(&averaged, &full_mask)?;
    Ok(LikelihoodMatrix {
        classes: outputs.classes.clone(),
        averaged,
        likelihood,
        full_mask,
    })
}

/// One entry of the ordered list S: a new class with its top-3 likelihood
/// values (descending) and the corresponding child nodes. With fewer than 3
/// candidate children the tail values are 0 with no node.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub label: ClassLabel,
    pub values: [f64; 3],
    pub nodes: [Option<NodeId>; 3],
}

/// Per class: the top-3 unmasked likelihoods, descending; the list itself is
/// sorted by strongest affinity (`values[0]`) descending, ties broken toward
/// the smaller class label.
pub fn build_candidates(
    likelihood: &Matrix,
    classes: &[ClassLabel],
    children: &[ChildSummary],
    full_mask: &[bool],
) -> Vec<Candidate> {
    let mut list: Vec<Candidate> = (0..likelihood.cols)
        .map(|col| {
            let mut scored: Vec<(f64, usize)> = (0..likelihood.rows)
                .filter(|&row| !full_mask[row])
                .map(|row| (likelihood.at(row, col), row))
                .collect();
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let mut values = [0.0f64; 3];
            let mut nodes = [None; 3];
            for (slot, &(value, row)) in scored.iter().take(3).enumerate() {
                values[slot] = value;
                nodes[slot] = Some(children[row].id);
            }
            Candidate {
                label: classes[col],
                values,
                nodes,
            }
        })
        .collect();
    list.sort_by(|a, b| {
        b.values[0]
            .partial_cmp(&a.values[0])
            .unwrap()
            .then(a.label.cmp(&b.label))
    });
    list
}

/// True iff merging `absorb` into `keep` is allowed: the absorbed node must
/// be a leaf and the keeper must have room for the absorbed class plus the
/// new class (a leaf keeper occupies one slot).
pub fn check_for_merge(keep: &ChildSummary, absorb: &ChildSummary, max_children: usize) -> bool {
    absorb.is_leaf && keep.effective_children() < max_children - 1
}

/// Thresholds and limits steering the growth decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthConfig {
    /// Margin of the top likelihood over the runner-up that marks a clear
    /// favorite child.
    pub alpha: f64,
    /// Margin of the runner-up over third place that marks two close
    /// favorites worth merging.
    pub beta: f64,
    pub max_children: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl GrowthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config("alpha and beta must be in [0, 1]".into()));
        }
        if self.max_children < 2 {
            return Err(Error::Config("max_children must be at least 2".into()));
        }
        if self.max_depth < 1 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// One placement decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum PlacementAction {
    /// Add the class under an existing child.
    AddToChild { class: ClassLabel, node: NodeId },
    /// Merge `absorb` (a leaf) into `keep`, then add the class under `keep`.
    MergeThenAdd {
        class: ClassLabel,
        keep: NodeId,
        absorb: NodeId,
    },
    /// Append the class as a brand-new leaf child of the node being grown.
    NewLeaf { class: ClassLabel },
}

impl PlacementAction {
    pub fn class(&self) -> ClassLabel {
        match *self {
            PlacementAction::AddToChild { class, .. }
            | PlacementAction::MergeThenAdd { class, .. }
            | PlacementAction::NewLeaf { class } => class,
        }
    }
}

impl std::fmt::Display for PlacementAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            PlacementAction::AddToChild { class, node } => {
                write!(f, "add-to-child class={class} node={node}")
            }
            PlacementAction::MergeThenAdd {
                class,
                keep,
                absorb,
            } => {
                write!(f, "merge-then-add class={class} keep={keep} absorb={absorb}")
            }
            PlacementAction::NewLeaf { class } => write!(f, "new-leaf class={class}"),
        }
    }
}

/// Ordered plan placing each new class exactly once; replaying it on the
/// input topology yields the output topology.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub actions: Vec<PlacementAction>,
    /// Unusual events worth an audit trail (e.g. forced new-leaf fallbacks).
    pub notes: Vec<String>,
}

impl PlacementPlan {
    /// Structured text log of the plan, one line per action.
    pub fn to_log(&self) -> String {
        let mut out = String::from("placement-plan v1\n");
        for action in &self.actions {
            out.push_str(&action.to_string());
            out.push('\n');
        }
        for note in &self.notes {
            out.push_str("note ");
            out.push_str(note);
            out.push('\n');
        }
        out
    }
}

/// Internal working state of one child row while the plan is built.
#[derive(Debug, Clone)]
struct RowState {
    summary: ChildSummary,
    masked: bool,
}

impl std::ops::Deref for RowState {
    type Target = ChildSummary;
    fn deref(&self) -> &ChildSummary {
        &self.summary
    }
}

/// Decide where every new class goes under the node being grown.
///
/// Children correspond to the rows of `likelihood` in order. Classes are
/// processed greedily in order of strongest affinity; after each placement
/// the placed column is dropped, newly full children are masked, and the
/// candidate list is rebuilt. The function is total: when every child is
/// full or merged away, remaining classes become new leaves.
pub fn grow(
    children: &[ChildSummary],
    likelihood: &LikelihoodMatrix,
    config: &GrowthConfig,
) -> Result<PlacementPlan> {
    config.validate()?;
    if children.len() != likelihood.averaged.rows {
        return Err(Error::ShapeMismatch {
            layer: "grow".into(),
            expected: format!("{} likelihood rows", children.len()),
            got: format!("{}", likelihood.averaged.rows),
        });
    }
    let mut rng = substream(config.seed, "merge-tiebreak");
    let mut plan = PlacementPlan::default();

    let mut rows: Vec<RowState> = children
        .iter()
        .zip(&likelihood.full_mask)
        .map(|(&summary, &masked)| RowState { summary, masked })
        .collect();
    // Live columns: (class, averaged outputs per original row index).
    let mut columns: Vec<(ClassLabel, Vec<f64>)> = likelihood
        .classes
        .iter()
        .enumerate()
        .map(|(col, &class)| (class, likelihood.averaged.column(col)))
        .collect();

    while !columns.is_empty() {
        let mask: Vec<bool> = rows.iter().map(|r| r.masked).collect();
        if mask.iter().all(|&m| m) {
            // Nothing left to join or merge: the node grows horizontally,
            // remaining classes in label order.
            let mut remaining: Vec<ClassLabel> = columns.iter().map(|&(c, _)| c).collect();
            remaining.sort_unstable();
            plan.notes
                .push("all children full; remaining classes added as new leaves".into());
            for class in remaining {
                plan.actions.push(PlacementAction::NewLeaf { class });
            }
            break;
        }

        let averaged = Matrix::from_rows(
            &rows
                .iter()
                .enumerate()
                .map(|(row, _)| columns.iter().map(|(_, col)| col[row]).collect())
                .collect::<Vec<_>>(),
        );
        let likelihood_now = compute_likelihood(&averaged, &mask)?;
        let classes_now: Vec<ClassLabel> = columns.iter().map(|&(c, _)| c).collect();
        let summaries: Vec<ChildSummary> = rows.iter().map(|r| r.summary).collect();
        let candidates = build_candidates(&likelihood_now, &classes_now, &summaries, &mask);

        let first = candidates.first().expect("columns is non-empty");
        let action = decide_placement(first, &rows, config, &mut rng, &mut plan.notes);
        apply_to_rows(&mut rows, &action);

        // Drop the placed class's column and re-mask newly full children.
        let placed = action.class();
        plan.actions.push(action);
        columns.retain(|&(class, _)| class != placed);
        for row in rows.iter_mut() {
            if !row.masked && row.summary.effective_children() >= config.max_children {
                row.masked = true;
            }
        }
    }
    Ok(plan)
}

/// The three-way decision for the strongest candidate, per thresholds alpha
/// and beta.
fn decide_placement(
    candidate: &Candidate,
    rows: &[RowState],
    config: &GrowthConfig,
    rng: &mut impl rand::Rng,
    notes: &mut Vec<String>,
) -> PlacementAction {
    let class = candidate.label;
    let [v1, v2, v3] = candidate.values;

    if v1 - v2 > config.alpha {
        // A clear favorite child.
        return PlacementAction::AddToChild {
            class,
            node: candidate.nodes[0].expect("v1 comes from an unmasked row"),
        };
    }
    if v2 - v3 > config.beta {
        // Two close favorites. Merge direction: the lower-likelihood node is
        // absorbed into the higher; equal values pick a side at random.
        let n1 = candidate.nodes[0].expect("v1 row exists");
        let n2 = candidate.nodes[1].expect("v2 > beta >= 0 comes from a real row");
        let (keep_id, absorb_id) = if v1 > v2 || rng.random::<bool>() {
            (n1, n2)
        } else {
            (n2, n1)
        };
        let keep = row_of(rows, keep_id);
        let absorb = row_of(rows, absorb_id);
        if check_for_merge(keep, absorb, config.max_children) {
            return PlacementAction::MergeThenAdd {
                class,
                keep: keep_id,
                absorb: absorb_id,
            };
        }
        // Merge not possible: fall back to the smaller of the two nodes.
        let s1 = row_of(rows, n1);
        let s2 = row_of(rows, n2);
        let smaller = if s2.effective_children() < s1.effective_children() {
            s2
        } else {
            s1
        };
        if smaller.is_leaf || smaller.effective_children() < config.max_children {
            return PlacementAction::AddToChild {
                class,
                node: smaller.summary.id,
            };
        }
        // Unreachable with genuine softmax values (a full node cannot score
        // v2 > beta), but kept total: fall through to a new leaf.
        notes.push(format!(
            "class {class}: smaller candidate {} is full; forced new leaf",
            smaller.summary.id
        ));
        return PlacementAction::NewLeaf { class };
    }
    // No affinity strong enough either way.
    PlacementAction::NewLeaf { class }
}

fn row_of<'a>(rows: &'a [RowState], id: NodeId) -> &'a RowState {
    rows.iter()
        .find(|r| r.summary.id == id)
        .expect("candidate node comes from the row set")
}

/// Mirror a placement on the child summaries (capacity bookkeeping only).
fn apply_to_rows(rows: &mut [RowState], action: &PlacementAction) {
    match *action {
        PlacementAction::AddToChild { node, .. } => {
            let row = rows.iter_mut().find(|r| r.summary.id == node).unwrap();
            let occupied = row.summary.effective_children();
            row.summary.is_leaf = false;
            row.summary.child_count = occupied + 1;
        }
        PlacementAction::MergeThenAdd { keep, absorb, .. } => {
            let row = rows.iter_mut().find(|r| r.summary.id == keep).unwrap();
            let occupied = row.summary.effective_children();
            row.summary.is_leaf = false;
            // One slot for the absorbed class, one for the new class.
            row.summary.child_count = occupied + 2;
            let absorbed = rows.iter_mut().find(|r| r.summary.id == absorb).unwrap();
            absorbed.masked = true;
        }
        PlacementAction::NewLeaf { .. } => {}
    }
}
