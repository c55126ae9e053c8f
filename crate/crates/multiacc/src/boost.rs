//! Iterative post-processing: audit the current scores on the whole batch
//! and on the two base-score partitions, take the largest restricted
//! residual correlation, and apply a partitioned log-odds update until no
//! auditor finds correlation above alpha.

use serde::{Deserialize, Serialize};

use crate::audit::{evaluate_hypothesis, AuditSample, AuditorConfig, Hypothesis};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{logit, sigmoid, Matrix};
use crate::model::{clamp, BoostedModel, PartitionId, Predictor, Update, DEFAULT_CLAMP_EPS};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BatchStrategy {
    /// Every round audits the full audit set.
    SingleBatch,
    /// A seeded permutation split into k folds used round-robin.
    FreshFolds { k: usize },
}

/// Round-robin access to audit batches.
#[derive(Clone, Debug)]
pub struct Batches {
    folds: Vec<Vec<usize>>,
}

impl Batches {
    pub fn batch(&self, t: usize) -> &[usize] {
        &self.folds[t % self.folds.len()]
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }
}

/// Builds the batch sequence for n rows under the given strategy.
pub fn make_batches(n: usize, strategy: &BatchStrategy, seed: u64) -> Result<Batches> {
    if n == 0 {
        return Err(Error::invalid("cannot batch an empty audit set"));
    }
    match strategy {
        BatchStrategy::SingleBatch => Ok(Batches {
            folds: vec![(0..n).collect()],
        }),
        BatchStrategy::FreshFolds { k } => {
            let k = *k;
            if k < 1 {
                return Err(Error::invalid("fold count must be >= 1"));
            }
            if k > n {
                return Err(Error::invalid(format!("fold count {k} exceeds rows {n}")));
            }
            let mut perm: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            perm.shuffle(&mut rng);
            let base = n / k;
            let extra = n % k;
            let mut folds = Vec::with_capacity(k);
            let mut start = 0;
            for f in 0..k {
                let len = base + usize::from(f < extra);
                folds.push(perm[start..start + len].to_vec());
                start += len;
            }
            Ok(Batches { folds })
        }
    }
}

/// Empirical correlation `(1/n) * sum_i h(x_i) * (f_i - y_i) * m_i` with n
/// the full batch size.
pub fn correlation(
    h: &Hypothesis,
    features: &Matrix,
    rows: &[usize],
    scores: &[f64],
    labels: &[f64],
    mask: &[bool],
) -> Result<f64> {
    let n = rows.len() as f64;
    let mut acc = 0.0;
    for (j, &i) in rows.iter().enumerate() {
        if mask[j] {
            acc += evaluate_hypothesis(h, features.row(i))? * (scores[j] - labels[j]);
        }
    }
    Ok(acc / n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    /// Termination accuracy: stop when no audited correlation exceeds it.
    pub alpha: f64,
    /// Log-odds step size. Defaults to alpha / 4, the largest step the
    /// per-round loss-descent argument supports for residual auditors.
    pub eta: f64,
    pub max_iterations: usize,
    pub batch_strategy: BatchStrategy,
    pub auditor: AuditorConfig,
    pub clamp_eps: f64,
    pub seed: u64,
    /// Compare-only variant: rank partitions by the unrestricted residual
    /// correlation instead of restricting to the audited partition.
    pub unrestricted_argmax: bool,
}

impl BoostConfig {
    pub fn new(alpha: f64, auditor: AuditorConfig) -> BoostConfig {
        BoostConfig {
            alpha,
            eta: alpha / 4.0,
            max_iterations: 100,
            batch_strategy: BatchStrategy::FreshFolds { k: 5 },
            auditor,
            clamp_eps: DEFAULT_CLAMP_EPS,
            seed: 0,
            unrestricted_argmax: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::invalid("alpha must be > 0"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta must be finite and > 0"));
        }
        if self.max_iterations < 1 {
            return Err(Error::invalid("max_iterations must be >= 1"));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::invalid("clamp_eps must lie in (0, 1/2)"));
        }
        self.auditor.validate()
    }
}

/// One applied update. Cross-entropy fields are restricted to the updated
/// partition and normalized by the batch size, the same measure as the
/// correlation, so the per-round descent inequality can be checked directly
/// from the record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub partition: PartitionId,
    pub correlation: f64,
    pub xent_before: f64,
    pub xent_after: f64,
    pub mean_h_sq: f64,
    pub hypothesis: Hypothesis,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    MaxIterations,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoostTrace {
    pub rounds: Vec<RoundRecord>,
    pub reason: StopReason,
    /// Batch index of the terminating audit (equals the number of applied
    /// updates) when the run converged.
    pub final_batch: Option<usize>,
    pub final_max_correlation: Option<f64>,
}

impl BoostTrace {
    pub fn iterations(&self) -> usize {
        self.rounds.len()
    }

    /// JSON-lines rendering, one record per applied update.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.rounds {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// A fitted candidate from auditing one partition.
#[derive(Clone, Debug)]
pub struct PartitionAudit {
    pub partition: PartitionId,
    pub hypothesis: Hypothesis,
    pub correlation: f64,
    /// Hypothesis values on the batch rows.
    pub values: Vec<f64>,
    /// Batch-row membership of the partition.
    pub mask: Vec<bool>,
}

/// Audits the batch on all three partitions; partitions with no batch rows
/// are skipped. Candidates come back in the fixed order All, Neg, Pos.
pub fn audit_partitions(
    features: &Matrix,
    rows: &[usize],
    sides: &[PartitionId],
    scores: &[f64],
    labels: &[f64],
    auditor: &AuditorConfig,
    unrestricted_argmax: bool,
) -> Result<Vec<PartitionAudit>> {
    let residual: Vec<f64> = scores.iter().zip(labels).map(|(f, y)| f - y).collect();
    let mut out = Vec::with_capacity(3);
    for part in [PartitionId::All, PartitionId::Neg, PartitionId::Pos] {
        let mask: Vec<bool> = rows.iter().map(|&i| part.contains(sides[i])).collect();
        if !mask.iter().any(|&m| m) {
            continue;
        }
        let sample = AuditSample::new(features, rows, &residual, &mask)?;
        let hypothesis = auditor.fit(&sample, scores, labels)?;
        let values = rows
            .iter()
            .map(|&i| evaluate_hypothesis(&hypothesis, features.row(i)))
            .collect::<Result<Vec<f64>>>()?;
        let n = rows.len() as f64;
        let corr = values
            .iter()
            .zip(&residual)
            .zip(&mask)
            .filter(|(_, &m)| m || unrestricted_argmax)
            .map(|((h, r), _)| h * r)
            .sum::<f64>()
            / n;
        out.push(PartitionAudit {
            partition: part,
            hypothesis,
            correlation: corr,
            values,
            mask,
        });
    }
    if out.is_empty() {
        return Err(Error::invalid("all partitions are empty"));
    }
    Ok(out)
}

/// Strict-max selection in the fixed All > Neg > Pos tie-break order.
pub fn select_candidate(candidates: &[PartitionAudit]) -> &PartitionAudit {
    let mut best = &candidates[0];
    for c in &candidates[1..] {
        if c.correlation > best.correlation {
            best = c;
        }
    }
    best
}

/// Runs the post-processing loop and returns the boosted model with its
/// per-round trace.
///
/// Per iteration t: draw batch D_t, fit one hypothesis per partition on the
/// partition-restricted residual, select the largest correlation (ties
/// prefer All, then Neg), stop when it is at most alpha, otherwise apply the
/// update to every audit row in the chosen partition. The partition of a row
/// is fixed by the clamped base score for the whole run.
pub fn run_boost(
    base: &Predictor,
    audit_data: &Dataset,
    config: &BoostConfig,
) -> Result<(BoostedModel, BoostTrace)> {
    config.validate()?;
    audit_data.validate()?;
    let n = audit_data.n();
    if n == 0 {
        return Err(Error::invalid("audit data is empty"));
    }
    let features = &audit_data.features;
    let labels = &audit_data.labels;
    let eps = config.clamp_eps;

    let raw = base.scores_for(features)?;
    let sides: Vec<PartitionId> = raw
        .iter()
        .map(|&p| PartitionId::of_score(clamp(p, eps)))
        .collect();
    let mut z: Vec<f64> = raw.iter().map(|&p| logit(clamp(p, eps))).collect();

    let batches = make_batches(n, &config.batch_strategy, config.seed)?;
    let mut model = BoostedModel::new(base.clone(), eps)?;
    let mut rounds = Vec::new();
    let mut reason = StopReason::MaxIterations;
    let mut final_batch = None;
    let mut final_max_correlation = None;

    for t in 0..config.max_iterations {
        let rows = batches.batch(t);
        let f: Vec<f64> = rows.iter().map(|&i| clamp(sigmoid(z[i]), eps)).collect();
        let y: Vec<f64> = rows.iter().map(|&i| labels[i]).collect();

        let candidates = audit_partitions(
            features,
            rows,
            &sides,
            &f,
            &y,
            &config.auditor,
            config.unrestricted_argmax,
        )?;
        let best = select_candidate(&candidates);

        if best.correlation <= config.alpha {
            reason = StopReason::Converged;
            final_batch = Some(t);
            final_max_correlation = Some(best.correlation);
            break;
        }

        let nb = rows.len() as f64;
        let xent_before = masked_xent_sum(&f, &y, &best.mask) / nb;
        let mean_h_sq = best
            .values
            .iter()
            .zip(&best.mask)
            .filter(|(_, &m)| m)
            .map(|(h, _)| h * h)
            .sum::<f64>()
            / nb;

        // The update applies to every audit row in the partition, not just
        // the current batch.
        let update = Update {
            partition: best.partition,
            step_size: config.eta,
            hypothesis: best.hypothesis.clone(),
        };
        for i in 0..n {
            if best.partition.contains(sides[i]) {
                z[i] -= config.eta * evaluate_hypothesis(&best.hypothesis, features.row(i))?;
            }
        }
        let f_after: Vec<f64> = rows.iter().map(|&i| clamp(sigmoid(z[i]), eps)).collect();
        let xent_after = masked_xent_sum(&f_after, &y, &best.mask) / nb;

        rounds.push(RoundRecord {
            t,
            partition: best.partition,
            correlation: best.correlation,
            xent_before,
            xent_after,
            mean_h_sq,
            hypothesis: update.hypothesis.clone(),
        });
        model.push_update(update)?;
    }

    Ok((
        model,
        BoostTrace {
            rounds,
            reason,
            final_batch,
            final_max_correlation,
        },
    ))
}

fn masked_xent_sum(scores: &[f64], labels: &[f64], mask: &[bool]) -> f64 {
    scores
        .iter()
        .zip(labels)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((&f, &y), _)| -y * f.ln() - (1.0 - y) * (1.0 - f).ln())
        .sum()
}
