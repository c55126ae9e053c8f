//! Exhaustive correlation search over a declared collection of sets.

use crate::error::{Error, Result};

use super::{AuditSample, Hypothesis, SetDescription};

/// Evaluates the empirical correlation of the restricted target with the
/// indicator of every set in the collection and with its negation, and
/// returns the maximizer together with its correlation. Correlations are
/// normalized by the full sample size. Ties keep the earliest candidate
/// (collection order, indicator before negation).
pub fn fit_set_collection(
    sample: &AuditSample,
    sets: &[SetDescription],
) -> Result<(Hypothesis, f64)> {
    sample.validate()?;
    if sets.is_empty() {
        return Err(Error::invalid("set collection is empty"));
    }
    let n = sample.n() as f64;
    let target = sample.restricted_target();

    let mut best: Option<(f64, usize, bool)> = None;
    for (k, set) in sets.iter().enumerate() {
        let mut corr = 0.0;
        for j in 0..sample.n() {
            if set.contains(sample.feature_row(j))? {
                corr += target[j];
            }
        }
        corr /= n;
        for negated in [false, true] {
            let signed = if negated { -corr } else { corr };
            if best.map_or(true, |(b, _, _)| signed > b) {
                best = Some((signed, k, negated));
            }
        }
    }
    let (corr, k, negated) = best.expect("collection is non-empty");
    Ok((
        Hypothesis::Set {
            set: sets[k].clone(),
            negated,
        },
        corr,
    ))
}
