//! Auditors: learners that map an audit sample and a residual target to a
//! bounded hypothesis witnessing a correlation with the residual.
//!
//! Four auditor kinds are provided: ridge regression, greedy regression
//! trees, a smoothed loss-derivative learner, and exhaustive search over a
//! declared collection of indicator sets.

mod gradient;
mod ridge;
mod sets;
mod tree;

pub use gradient::{fit_gradient_auditor, gradient_targets};
pub use ridge::fit_ridge;
pub use sets::fit_set_collection;
pub use tree::fit_tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

/// Comparison operator of a one-column set description.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetOp {
    Eq,
    Le,
    Gt,
}

/// A subset of the input space decidable from a single feature column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetDescription {
    pub column: usize,
    pub op: SetOp,
    pub value: f64,
}

impl SetDescription {
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        let v = *x
            .get(self.column)
            .ok_or_else(|| Error::invalid(format!("set column {} out of range", self.column)))?;
        Ok(match self.op {
            SetOp::Eq => v == self.value,
            SetOp::Le => v <= self.value,
            SetOp::Gt => v > self.value,
        })
    }
}

/// Decision tree node; splits send `x[feature] <= threshold` to the left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        leaf: f64,
    },
}

impl TreeNode {
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        match self {
            TreeNode::Leaf { leaf } => Ok(*leaf),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let v = *x.get(*feature).ok_or_else(|| {
                    Error::invalid(format!("tree feature {feature} out of range"))
                })?;
                if v <= *threshold {
                    left.evaluate(x)
                } else {
                    right.evaluate(x)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }
}

/// An auditor-produced real-valued function on feature vectors. Evaluation
/// output is clipped to `[-bound, bound]`; set indicators take values in
/// `{-1, 0, 1}` and zero is the constant zero function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hypothesis {
    Zero,
    Linear {
        w: Vec<f64>,
        b: f64,
        bound: f64,
    },
    Tree {
        root: TreeNode,
        bound: f64,
    },
    Set {
        #[serde(flatten)]
        set: SetDescription,
        negated: bool,
    },
}

impl Hypothesis {
    pub fn is_zero(&self) -> bool {
        matches!(self, Hypothesis::Zero)
    }
}

/// Kind-dispatched hypothesis evaluation, clipped to the output bound.
pub fn evaluate_hypothesis(h: &Hypothesis, x: &[f64]) -> Result<f64> {
    match h {
        Hypothesis::Zero => Ok(0.0),
        Hypothesis::Linear { w, b, bound } => {
            if w.len() != x.len() {
                return Err(Error::invalid(format!(
                    "linear hypothesis expects {} features, got {}",
                    w.len(),
                    x.len()
                )));
            }
            Ok((dot(w, x) + b).clamp(-bound, *bound))
        }
        Hypothesis::Tree { root, bound } => Ok(root.evaluate(x)?.clamp(-bound, *bound)),
        Hypothesis::Set { set, negated } => {
            let inside = set.contains(x)?;
            let v = if inside { 1.0 } else { 0.0 };
            Ok(if *negated { -v } else { v })
        }
    }
}

/// Which learner the auditor runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditorKind {
    Ridge,
    Tree,
    Gradient,
    /// Exhaustive correlation search over a declared set collection
    /// (each set and its negation).
    Sets(Vec<SetDescription>),
}

/// Auditor configuration. `output_bound` caps hypothesis values and
/// `norm_budget` is the mean-square norm budget of the gradient auditor's
/// hypothesis class relative to the current loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditorConfig {
    pub kind: AuditorKind,
    pub ridge_lambda: f64,
    pub fit_intercept: bool,
    pub tree_max_depth: usize,
    pub smoothing_threshold: f64,
    pub norm_budget: f64,
    pub output_bound: f64,
    pub alpha: f64,
    pub seed: u64,
}

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1.0;
pub const DEFAULT_TREE_DEPTH: usize = 5;
pub const DEFAULT_SMOOTHING_THRESHOLD: f64 = 10.0;
pub const DEFAULT_NORM_BUDGET: f64 = 8.0;

impl AuditorConfig {
    /// Ridge auditor fitting the raw residual, outputs bounded by 1.
    pub fn ridge(alpha: f64) -> AuditorConfig {
        AuditorConfig {
            kind: AuditorKind::Ridge,
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
            fit_intercept: true,
            tree_max_depth: DEFAULT_TREE_DEPTH,
            smoothing_threshold: DEFAULT_SMOOTHING_THRESHOLD,
            norm_budget: DEFAULT_NORM_BUDGET,
            output_bound: 1.0,
            alpha,
            seed: 0,
        }
    }

    /// Depth-bounded regression-tree auditor fitting the raw residual.
    pub fn tree(alpha: f64) -> AuditorConfig {
        AuditorConfig {
            kind: AuditorKind::Tree,
            ..AuditorConfig::ridge(alpha)
        }
    }

    /// Smoothed loss-derivative auditor; output bound is twice the
    /// smoothing threshold, the largest value a smoothed target can take.
    pub fn gradient(alpha: f64) -> AuditorConfig {
        AuditorConfig {
            kind: AuditorKind::Gradient,
            output_bound: 2.0 * DEFAULT_SMOOTHING_THRESHOLD,
            ..AuditorConfig::ridge(alpha)
        }
    }

    /// Exhaustive auditor over the given collection of indicator sets.
    pub fn sets(alpha: f64, sets: Vec<SetDescription>) -> AuditorConfig {
        AuditorConfig {
            kind: AuditorKind::Sets(sets),
            ..AuditorConfig::ridge(alpha)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge_lambda >= 0.0) {
            return Err(Error::invalid("ridge_lambda must be >= 0"));
        }
        if self.tree_max_depth < 1 {
            return Err(Error::invalid("tree_max_depth must be >= 1"));
        }
        if !(self.smoothing_threshold > 0.0) {
            return Err(Error::invalid("smoothing_threshold must be > 0"));
        }
        if !(self.norm_budget > 0.0) {
            return Err(Error::invalid("norm_budget must be > 0"));
        }
        if !(self.output_bound > 0.0) {
            return Err(Error::invalid("output_bound must be > 0"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::invalid("alpha must be > 0"));
        }
        Ok(())
    }

    /// Fits a hypothesis to the sample. `scores` and `labels` are aligned
    /// with `sample.rows` and are only consulted by the gradient auditor.
    pub fn fit(&self, sample: &AuditSample, scores: &[f64], labels: &[f64]) -> Result<Hypothesis> {
        self.validate()?;
        match &self.kind {
            AuditorKind::Ridge => fit_ridge(sample, self),
            AuditorKind::Tree => fit_tree(sample, self),
            AuditorKind::Gradient => fit_gradient_auditor(sample, scores, labels, self),
            AuditorKind::Sets(sets) => Ok(fit_set_collection(sample, sets)?.0),
        }
    }
}

/// A fitting problem: feature rows, a per-row real target, and a restriction
/// mask. Rows outside the mask contribute target zero at full weight, which
/// is exactly the restriction of the target function to the masked set.
pub struct AuditSample<'a> {
    pub features: &'a Matrix,
    /// Indices into `features` participating in the fit.
    pub rows: &'a [usize],
    /// Target values aligned with `rows`.
    pub target: &'a [f64],
    /// Restriction mask aligned with `rows`.
    pub mask: &'a [bool],
}

impl<'a> AuditSample<'a> {
    pub fn new(
        features: &'a Matrix,
        rows: &'a [usize],
        target: &'a [f64],
        mask: &'a [bool],
    ) -> Result<AuditSample<'a>> {
        let s = AuditSample {
            features,
            rows,
            target,
            mask,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::invalid("audit sample has no rows"));
        }
        if self.target.len() != self.rows.len() || self.mask.len() != self.rows.len() {
            return Err(Error::invalid(
                "audit sample target/mask not aligned with rows",
            ));
        }
        if !self.mask.iter().any(|&m| m) {
            return Err(Error::invalid("audit sample mask selects no rows"));
        }
        if self.target.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("audit sample target contains non-finite value"));
        }
        Ok(())
    }

    /// Target with masked-out rows zeroed.
    pub fn restricted_target(&self) -> Vec<f64> {
        self.target
            .iter()
            .zip(self.mask)
            .map(|(&t, &m)| if m { t } else { 0.0 })
            .collect()
    }

    pub fn feature_row(&self, j: usize) -> &[f64] {
        self.features.row(self.rows[j])
    }
}
