//! Predictors and the boosted model: log-odds composition of auditor
//! hypotheses on top of an arbitrary base scorer, with score clamping.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audit::{evaluate_hypothesis, Hypothesis};
use crate::error::{Error, Result};
use crate::linalg::{dot, logit, sigmoid, Matrix};

pub const DEFAULT_CLAMP_EPS: f64 = 1e-4;
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Clamps a probability into `[eps, 1 - eps]`. Keeps cross-entropy and
/// log-odds finite.
pub fn clamp(p: f64, eps: f64) -> f64 {
    p.max(eps).min(1.0 - eps)
}

/// Which slice of the input space an update applies to. `Neg` and `Pos` are
/// fixed by the base predictor: `Neg = {x : f0(x) <= 1/2}`, `Pos = the rest`,
/// computed on the clamped base score and never from a later model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionId {
    All,
    Neg,
    Pos,
}

impl PartitionId {
    /// Side of the partition a clamped base score falls on (never `All`).
    /// Ties at exactly 1/2 go to `Neg`.
    pub fn of_score(p: f64) -> PartitionId {
        if p <= 0.5 {
            PartitionId::Neg
        } else {
            PartitionId::Pos
        }
    }

    pub fn contains(self, side: PartitionId) -> bool {
        self == PartitionId::All || self == side
    }

    pub fn label(self) -> &'static str {
        match self {
            PartitionId::All => "all",
            PartitionId::Neg => "neg",
            PartitionId::Pos => "pos",
        }
    }
}

/// One boosting step: subtract `step_size * hypothesis(x)` from the log-odds
/// of every x in the partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Update {
    pub partition: PartitionId,
    #[serde(rename = "eta")]
    pub step_size: f64,
    pub hypothesis: Hypothesis,
}

impl Update {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid("update step_size must be finite and positive"));
        }
        Ok(())
    }
}

/// Any source of scores in [0, 1], one per example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Predictor {
    /// Row-aligned scores; only evaluable on a matrix with matching row count.
    Scores { scores: Vec<f64> },
    /// Logistic-linear model: `sigmoid(w . x + b)`.
    Linear { weights: Vec<f64>, intercept: f64 },
    /// Two-hidden-layer tanh network with a sigmoid output.
    Mlp2 {
        w1: Vec<Vec<f64>>,
        b1: Vec<f64>,
        w2: Vec<Vec<f64>>,
        b2: Vec<f64>,
        w3: Vec<f64>,
        b3: f64,
    },
    Boosted { model: Box<BoostedModel> },
}

impl Predictor {
    /// Raw (unclamped) score on a single feature vector. Scores-file
    /// predictors cannot be evaluated this way.
    pub fn score_features(&self, x: &[f64]) -> Result<f64> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        match self {
            Predictor::Scores { .. } => Err(Error::invalid(
                "scores-file predictor requires row-aligned evaluation",
            )),
            Predictor::Linear { weights, intercept } => {
                if weights.len() != x.len() {
                    return Err(Error::invalid(format!(
                        "linear predictor expects {} features, got {}",
                        weights.len(),
                        x.len()
                    )));
                }
                Ok(sigmoid(dot(weights, x) + intercept))
            }
            Predictor::Mlp2 {
                w1,
                b1,
                w2,
                b2,
                w3,
                b3,
            } => {
                let d = w1.first().map_or(0, |r| r.len());
                if d != x.len() {
                    return Err(Error::invalid(format!(
                        "mlp predictor expects {d} features, got {}",
                        x.len()
                    )));
                }
                let h1: Vec<f64> = w1
                    .iter()
                    .zip(b1)
                    .map(|(row, b)| (dot(row, x) + b).tanh())
                    .collect();
                let h2: Vec<f64> = w2
                    .iter()
                    .zip(b2)
                    .map(|(row, b)| (dot(row, &h1) + b).tanh())
                    .collect();
                Ok(sigmoid(dot(w3, &h2) + b3))
            }
            Predictor::Boosted { model } => model.score(x),
        }
    }

    /// Raw scores for every row of the matrix. A scores-file predictor only
    /// accepts the matrix it is aligned with (row counts must match).
    pub fn scores_for(&self, features: &Matrix) -> Result<Vec<f64>> {
        match self {
            Predictor::Scores { scores } => {
                if scores.len() != features.n_rows() {
                    return Err(Error::invalid(format!(
                        "scores file has {} rows but dataset has {}",
                        scores.len(),
                        features.n_rows()
                    )));
                }
                Ok(scores.clone())
            }
            _ => (0..features.n_rows())
                .map(|i| self.score_features(features.row(i)))
                .collect(),
        }
    }
}

/// A base predictor plus an ordered list of partitioned log-odds updates.
/// Scores stay in `[clamp_eps, 1 - clamp_eps]`; with an empty update list
/// the model reproduces the clamped base scores exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub version: u32,
    pub clamp_eps: f64,
    pub base: Predictor,
    pub updates: Vec<Update>,
}

impl BoostedModel {
    pub fn new(base: Predictor, clamp_eps: f64) -> Result<BoostedModel> {
        if !(clamp_eps > 0.0 && clamp_eps < 0.5) {
            return Err(Error::invalid("clamp_eps must lie in (0, 1/2)"));
        }
        Ok(BoostedModel {
            version: MODEL_FORMAT_VERSION,
            clamp_eps,
            base,
            updates: Vec::new(),
        })
    }

    /// Returns a copy with the update appended; the receiver is unchanged.
    pub fn append_update(&self, update: Update) -> Result<BoostedModel> {
        update.validate()?;
        let mut next = self.clone();
        next.updates.push(update);
        Ok(next)
    }

    pub fn push_update(&mut self, update: Update) -> Result<()> {
        update.validate()?;
        self.updates.push(update);
        Ok(())
    }

    /// Scores one feature vector: clamp the base score, fix the partition
    /// side from it, accumulate `-eta * h(x)` in log-odds for every update
    /// whose partition contains x, and clamp the result. Equivalent to the
    /// odds-space rule `q <- exp(-eta * h(x)) * q`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let p0 = clamp(self.base.score_features(x)?, self.clamp_eps);
        let side = PartitionId::of_score(p0);
        let mut z = logit(p0);
        for u in &self.updates {
            if u.partition.contains(side) {
                z -= u.step_size * evaluate_hypothesis(&u.hypothesis, x)?;
            }
        }
        Ok(clamp(sigmoid(z), self.clamp_eps))
    }

    /// Row-aligned scoring; the only path that works over a scores-file base.
    /// Composes per example in update order, identical to `score`.
    pub fn scores_for(&self, features: &Matrix) -> Result<Vec<f64>> {
        let base = self.base.scores_for(features)?;
        let mut out = Vec::with_capacity(base.len());
        for (i, &raw) in base.iter().enumerate() {
            let p0 = clamp(raw, self.clamp_eps);
            let side = PartitionId::of_score(p0);
            let mut z = logit(p0);
            for u in &self.updates {
                if u.partition.contains(side) {
                    z -= u.step_size * evaluate_hypothesis(&u.hypothesis, features.row(i))?;
                }
            }
            out.push(clamp(sigmoid(z), self.clamp_eps));
        }
        Ok(out)
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<BoostedModel> {
        let model: BoostedModel = serde_json::from_slice(bytes)?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(Error::format(
                "1:1",
                format!("unsupported model version {}", model.version),
            ));
        }
        if !(model.clamp_eps > 0.0 && model.clamp_eps < 0.5) {
            return Err(Error::format("1:1", "clamp_eps out of range"));
        }
        for u in &model.updates {
            u.validate()
                .map_err(|e| Error::format("1:1", e.to_string()))?;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<BoostedModel> {
        let bytes = std::fs::read(path)?;
        BoostedModel::from_json_bytes(&bytes)
    }
}

/// Loads a predictor from JSON; accepts either a bare predictor object or a
/// whole boosted-model file.
pub fn load_predictor(path: &Path) -> Result<Predictor> {
    let bytes = std::fs::read(path)?;
    if let Ok(p) = serde_json::from_slice::<Predictor>(&bytes) {
        return Ok(p);
    }
    let model = BoostedModel::from_json_bytes(&bytes)?;
    Ok(Predictor::Boosted {
        model: Box::new(model),
    })
}

pub fn save_predictor(p: &Predictor, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(p)?)?;
    Ok(())
}

/// Reads a scores file: CSV with a `score` header and one decimal float per
/// dataset row.
pub fn read_scores_csv(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "score" => {}
        Some((_, header)) => {
            return Err(Error::format("1:1", format!("expected header 'score', got '{header}'")))
        }
        None => return Err(Error::format("1:1", "empty scores file")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let v: f64 = line.trim().parse().map_err(|_| {
            Error::format(format!("{}:1", i + 1), format!("unparseable score '{line}'"))
        })?;
        if !v.is_finite() {
            return Err(Error::format(format!("{}:1", i + 1), "non-finite score"));
        }
        out.push(v);
    }
    Ok(out)
}

pub fn write_scores_csv(scores: &[f64], path: &Path) -> Result<()> {
    let mut text = String::from("score\n");
    for s in scores {
        text.push_str(&format!("{s}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}
