//! Evaluation quantities: subgroup classification error, cross-entropy,
//! residual-correlation bias, exhaustive certificates over a finite test
//! class, and checkers for the error-bound and do-no-harm guarantees.

use serde::{Deserialize, Serialize};

use crate::audit::{evaluate_hypothesis, Hypothesis};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::clamp;

/// A named subpopulation: the conjunction of equality conditions over
/// evaluation-only group columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub conditions: Vec<GroupCondition>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupCondition {
    pub column: String,
    pub value: String,
}

impl GroupSpec {
    pub fn equals(name: impl Into<String>, column: impl Into<String>, value: impl Into<String>) -> GroupSpec {
        GroupSpec {
            name: name.into(),
            conditions: vec![GroupCondition {
                column: column.into(),
                value: value.into(),
            }],
        }
    }

    pub fn conjunction(name: impl Into<String>, conds: Vec<(String, String)>) -> GroupSpec {
        GroupSpec {
            name: name.into(),
            conditions: conds
                .into_iter()
                .map(|(column, value)| GroupCondition { column, value })
                .collect(),
        }
    }

    /// Per-row membership mask over the dataset's group columns.
    pub fn mask(&self, dataset: &Dataset) -> Result<Vec<bool>> {
        let mut mask = vec![true; dataset.n()];
        for cond in &self.conditions {
            let col = dataset.group_column(&cond.column).ok_or_else(|| {
                Error::invalid(format!("unknown group column '{}'", cond.column))
            })?;
            for (m, v) in mask.iter_mut().zip(&col.values) {
                *m = *m && (*v == cond.value);
            }
        }
        Ok(mask)
    }
}

fn masked_count(mask: &[bool]) -> usize {
    mask.iter().filter(|&&m| m).count()
}

/// Fraction of masked rows where the rounded score disagrees with the label.
/// Rounding: score > 1/2 means 1, otherwise 0 (a score of exactly 1/2 rounds
/// to 0, consistent with the partition convention).
pub fn classification_error(scores: &[f64], labels: &[f64], mask: &[bool]) -> Result<f64> {
    let m = masked_count(mask);
    if m == 0 {
        return Err(Error::EmptyGroup("classification_error".into()));
    }
    let mut wrong = 0usize;
    for i in 0..scores.len() {
        if mask[i] {
            let pred = if scores[i] > 0.5 { 1.0 } else { 0.0 };
            wrong += usize::from(pred != labels[i]);
        }
    }
    Ok(wrong as f64 / m as f64)
}

/// Masked mean of `-y ln f - (1-y) ln(1-f)`; scores are clamped into
/// `[eps, 1-eps]` first so the mean is always finite.
pub fn cross_entropy(scores: &[f64], labels: &[f64], mask: &[bool], eps: f64) -> Result<f64> {
    let m = masked_count(mask);
    if m == 0 {
        return Err(Error::EmptyGroup("cross_entropy".into()));
    }
    let mut acc = 0.0;
    for i in 0..scores.len() {
        if mask[i] {
            let f = clamp(scores[i], eps);
            acc += -labels[i] * f.ln() - (1.0 - labels[i]) * (1.0 - f).ln();
        }
    }
    Ok(acc / m as f64)
}

/// A statistical test: a per-row value vector in [-1, 1] (or [-B, B] when
/// built from a bounded hypothesis) with a human-readable description used
/// for deterministic tie-breaking.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Test {
    pub description: String,
    pub values: Vec<f64>,
}

impl Test {
    pub fn from_hypothesis(
        description: impl Into<String>,
        h: &Hypothesis,
        dataset: &Dataset,
    ) -> Result<Test> {
        let values = (0..dataset.n())
            .map(|i| evaluate_hypothesis(h, dataset.features.row(i)))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Test {
            description: description.into(),
            values,
        })
    }

    /// Indicator of a group mask, optionally negated.
    pub fn group_indicator(name: &str, mask: &[bool], negated: bool) -> Test {
        let sign = if negated { -1.0 } else { 1.0 };
        Test {
            description: format!("{}chi[{name}]", if negated { "-" } else { "" }),
            values: mask.iter().map(|&m| if m { sign } else { 0.0 }).collect(),
        }
    }

    pub fn constant(c: f64, n: usize) -> Test {
        Test {
            description: format!("const[{c}]"),
            values: vec![c; n],
        }
    }

    /// The signed label signature of a group: `1 - 2y` inside, 0 outside.
    pub fn label_signature(name: &str, labels: &[f64], mask: &[bool]) -> Test {
        Test {
            description: format!("yhat[{name}]"),
            values: labels
                .iter()
                .zip(mask)
                .map(|(&y, &m)| if m { 1.0 - 2.0 * y } else { 0.0 })
                .collect(),
        }
    }

    pub fn negated(&self) -> Test {
        Test {
            description: format!("-({})", self.description),
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}

/// Mean residual correlation `(1/n) * sum c(x_i) * (f_i - y_i)`.
pub fn bias(scores: &[f64], labels: &[f64], test: &Test) -> f64 {
    let n = scores.len() as f64;
    let mut acc = 0.0;
    for i in 0..scores.len() {
        acc += test.values[i] * (scores[i] - labels[i]);
    }
    acc / n
}

/// Result of exhaustively evaluating a finite test class.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub alpha: f64,
    pub passed: bool,
    pub max_bias: f64,
    pub worst_test: String,
    pub n_tests: usize,
}

/// Computes the bias of every test, exhaustively, and certifies whether the
/// maximum stays at or below `alpha`. Ties on the maximum resolve to the
/// lexicographically smallest test description.
pub fn certify_multiaccuracy(
    scores: &[f64],
    labels: &[f64],
    test_class: &[Test],
    alpha: f64,
) -> Result<Certificate> {
    if test_class.is_empty() {
        return Err(Error::invalid("empty test class"));
    }
    let mut max_bias = f64::NEG_INFINITY;
    let mut worst = "";
    for t in test_class {
        let b = bias(scores, labels, t);
        if b > max_bias || (b == max_bias && t.description.as_str() < worst) {
            max_bias = b;
            worst = &t.description;
        }
    }
    Ok(Certificate {
        alpha,
        passed: max_bias <= alpha,
        max_bias,
        worst_test: worst.to_string(),
        n_tests: test_class.len(),
    })
}

/// Error-bound check: with gamma the group mass and tau the best L1 distance
/// from the class to the group's signed label signature, a certificate at
/// alpha forces the group error under `2 (alpha + tau) / gamma`. A violation
/// on an exact finite instance signals an implementation bug.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorBoundReport {
    pub gamma: f64,
    pub tau: f64,
    pub tau_test: String,
    pub group_error: f64,
    pub bound: f64,
    pub certified: bool,
    pub holds: bool,
}

pub fn check_prop1_bound(
    scores: &[f64],
    labels: &[f64],
    group_mask: &[bool],
    test_class: &[Test],
    alpha: f64,
) -> Result<ErrorBoundReport> {
    let n = scores.len();
    let m = masked_count(group_mask);
    if m == 0 {
        return Err(Error::EmptyGroup("check_prop1_bound".into()));
    }
    let gamma = m as f64 / n as f64;
    let yhat = Test::label_signature("S", labels, group_mask);

    // tau: exhaustive minimization of E|c - yhat_S| over the class.
    let mut tau = f64::INFINITY;
    let mut tau_test = "";
    for t in test_class {
        let dist: f64 = t
            .values
            .iter()
            .zip(&yhat.values)
            .map(|(c, y)| (c - y).abs())
            .sum::<f64>()
            / n as f64;
        if dist < tau || (dist == tau && t.description.as_str() < tau_test) {
            tau = dist;
            tau_test = &t.description;
        }
    }

    let cert = certify_multiaccuracy(scores, labels, test_class, alpha)?;
    let group_error = classification_error(scores, labels, group_mask)?;
    let bound = 2.0 * (alpha + tau) / gamma;
    Ok(ErrorBoundReport {
        gamma,
        tau,
        tau_test: tau_test.to_string(),
        group_error,
        bound,
        certified: cert.passed,
        holds: group_error <= bound + 1e-9,
    })
}

/// Do-no-harm check: post-processed group error against
/// `3 * er_S(f0) + 4 * beta`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DoNoHarmReport {
    pub base_group_error: f64,
    pub boosted_group_error: f64,
    pub beta: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn check_do_no_harm(
    base_scores: &[f64],
    boosted_scores: &[f64],
    labels: &[f64],
    group_mask: &[bool],
    beta: f64,
) -> Result<DoNoHarmReport> {
    let base_group_error = classification_error(base_scores, labels, group_mask)?;
    let boosted_group_error = classification_error(boosted_scores, labels, group_mask)?;
    let bound = 3.0 * base_group_error + 4.0 * beta;
    Ok(DoNoHarmReport {
        base_group_error,
        boosted_group_error,
        beta,
        bound,
        holds: boosted_group_error <= bound + 1e-12,
    })
}

/// Per-group statistics of one scored model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: String,
    pub mass: f64,
    pub error: f64,
    pub mean_bias: f64,
    pub cross_entropy: f64,
}

/// Full report for a set of named models over declared groups, mirroring the
/// error-table layout plus a certificate block per model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_names: Vec<String>,
    pub groups: Vec<String>,
    /// `rows[g][m]` = stats of model m on group g; group 0 is "All".
    pub rows: Vec<Vec<GroupStats>>,
    pub certificates: Vec<Certificate>,
}

pub fn build_report(
    dataset: &Dataset,
    models: &[(String, Vec<f64>)],
    groups: &[GroupSpec],
    alpha: f64,
    clamp_eps: f64,
) -> Result<EvalReport> {
    let n = dataset.n();
    let labels = &dataset.labels;
    let mut group_masks: Vec<(String, Vec<bool>)> = vec![("All".into(), vec![true; n])];
    for g in groups {
        group_masks.push((g.name.clone(), g.mask(dataset)?));
    }

    // Certificate class: the indicator and negation of every declared group.
    let mut test_class = Vec::new();
    for (name, mask) in &group_masks {
        test_class.push(Test::group_indicator(name, mask, false));
        test_class.push(Test::group_indicator(name, mask, true));
    }

    let mut rows = Vec::with_capacity(group_masks.len());
    for (gname, mask) in &group_masks {
        let mut row = Vec::with_capacity(models.len());
        for (mname, scores) in models {
            if scores.len() != n {
                return Err(Error::invalid(format!(
                    "scores for model '{mname}' not aligned with dataset"
                )));
            }
            let m = masked_count(mask);
            if m == 0 {
                return Err(Error::EmptyGroup(gname.clone()));
            }
            let indicator = Test::group_indicator(gname, mask, false);
            // Mean residual over the group is the indicator bias scaled by
            // the inverse group mass.
            let mean_bias = bias(scores, labels, &indicator) * n as f64 / m as f64;
            row.push(GroupStats {
                group: gname.clone(),
                mass: m as f64 / n as f64,
                error: classification_error(scores, labels, mask)?,
                mean_bias,
                cross_entropy: cross_entropy(scores, labels, mask, clamp_eps)?,
            });
        }
        rows.push(row);
    }

    let certificates = models
        .iter()
        .map(|(_, scores)| certify_multiaccuracy(scores, labels, &test_class, alpha))
        .collect::<Result<Vec<_>>>()?;

    Ok(EvalReport {
        model_names: models.iter().map(|(n, _)| n.clone()).collect(),
        groups: group_masks.into_iter().map(|(n, _)| n).collect(),
        rows,
        certificates,
    })
}

impl EvalReport {
    /// Fixed-width table with mass and error percentages at one decimal.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<10}{:>8}", "group", "mass%"));
        for m in &self.model_names {
            out.push_str(&format!("{:>10}", format!("{m}%")));
        }
        out.push('\n');
        for (g, row) in self.groups.iter().zip(&self.rows) {
            out.push_str(&format!("{:<10}{:>8.1}", g, row[0].mass * 100.0));
            for stats in row {
                out.push_str(&format!("{:>10.1}", stats.error * 100.0));
            }
            out.push('\n');
        }
        for (m, c) in self.model_names.iter().zip(&self.certificates) {
            out.push_str(&format!(
                "certificate[{m}]: {} (max bias {:.4} vs alpha {:.4}, worst test {})\n",
                if c.passed { "pass" } else { "FAIL" },
                c.max_bias,
                c.alpha,
                c.worst_test
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GroupColumn;
    use crate::linalg::Matrix;

    #[test]
    fn error_counts_and_threshold_convention() {
        // (0.6, 0.4) against labels (0, 0): one wrong -> 0.5.
        let e = classification_error(&[0.6, 0.4], &[0.0, 0.0], &[true, true]).unwrap();
        assert_eq!(e, 0.5);
        // 0.5 exactly rounds to 0, so against all-ones labels the error is 1.
        let e = classification_error(&[0.5, 0.5], &[1.0, 1.0], &[true, true]).unwrap();
        assert_eq!(e, 1.0);
        // perfect scores
        let e = classification_error(&[0.9, 0.1], &[1.0, 0.0], &[true, true]).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn empty_mask_is_error() {
        assert!(matches!(
            classification_error(&[0.5], &[1.0], &[false]),
            Err(Error::EmptyGroup(_))
        ));
    }

    #[test]
    fn cross_entropy_closed_forms() {
        // f = 0.5 everywhere: ln 2.
        let x = cross_entropy(&[0.5, 0.5], &[0.0, 1.0], &[true, true], 1e-4).unwrap();
        assert!((x - std::f64::consts::LN_2).abs() < 1e-12);
        // f = 0.25, y = 1: -ln 0.25.
        let x = cross_entropy(&[0.25], &[1.0], &[true], 1e-4).unwrap();
        assert!((x - (4.0f64).ln()).abs() < 1e-12);
        assert!((x - 1.3863).abs() < 1e-4);
        // f = y clamps to 1 - eps: about eps.
        let x = cross_entropy(&[1.0, 0.0], &[1.0, 0.0], &[true, true], 1e-4).unwrap();
        assert!((x + (1.0 - 1e-4f64).ln()).abs() < 1e-15);
        assert!(x < 2e-4);
    }

    #[test]
    fn bias_hand_sums() {
        // c = chi_S with residual +0.2 on half the rows: 0.1.
        let t = Test {
            description: "chi".into(),
            values: vec![1.0, 1.0, 0.0, 0.0],
        };
        let b = bias(&[0.7, 0.7, 0.5, 0.5], &[0.5, 0.5, 0.5, 0.5], &t);
        assert!((b - 0.1).abs() < 1e-15);
        // c ≡ 1 against balanced scores: 0.
        let one = Test::constant(1.0, 2);
        let b = bias(&[0.8, 0.2], &[1.0, 0.0], &one);
        assert!(b.abs() < 1e-15);
        // orthogonal by construction: c = (1, -1), constant residual.
        let t = Test {
            description: "alt".into(),
            values: vec![1.0, -1.0],
        };
        let b = bias(&[0.8, 0.8], &[0.5, 0.5], &t);
        assert!(b.abs() < 1e-15);
    }

    #[test]
    fn bias_is_antisymmetric() {
        let t = Test {
            description: "t".into(),
            values: vec![0.3, -0.7, 1.0],
        };
        let scores = [0.2, 0.9, 0.6];
        let labels = [0.0, 1.0, 1.0];
        let b1 = bias(&scores, &labels, &t);
        let b2 = bias(&scores, &labels, &t.negated());
        assert_eq!(b1, -b2);
    }

    #[test]
    fn certificate_eight_point_instance() {
        // Residual +0.5 concentrated on a declared group of mass 1/4:
        // exhaustive enumeration gives max bias 2*0.5/8 = 0.125.
        let labels = vec![0.0; 8];
        let scores: Vec<f64> = (0..8).map(|i| if i < 2 { 0.5 } else { 0.0 }).collect();
        let mask: Vec<bool> = (0..8).map(|i| i < 2).collect();
        let class = vec![
            Test::group_indicator("S", &mask, false),
            Test::group_indicator("S", &mask, true),
        ];
        let cert = certify_multiaccuracy(&scores, &labels, &class, 0.1).unwrap();
        assert!((cert.max_bias - 0.125).abs() < 1e-15);
        assert!(!cert.passed);
        let cert = certify_multiaccuracy(&scores, &labels, &class, 0.15).unwrap();
        assert!(cert.passed);
    }

    #[test]
    fn certificate_constant_tests() {
        // class = {+1, -1} against mean residual 0.02.
        let scores = vec![0.52, 0.52];
        let labels = vec![0.5, 0.5];
        let class = vec![Test::constant(1.0, 2), Test::constant(-1.0, 2)];
        let cert = certify_multiaccuracy(&scores, &labels, &class, 0.5).unwrap();
        assert!((cert.max_bias - 0.02).abs() < 1e-12);
    }

    #[test]
    fn perfect_scores_pass_any_class() {
        let scores = vec![1.0, 0.0, 1.0];
        let labels = vec![1.0, 0.0, 1.0];
        let class = vec![Test::constant(1.0, 3), Test::constant(-1.0, 3)];
        let cert = certify_multiaccuracy(&scores, &labels, &class, 1e-6).unwrap();
        assert!(cert.passed);
        assert!(cert.max_bias.abs() < 1e-15);
    }

    #[test]
    fn prop1_bound_on_constructed_instance() {
        // gamma = 1, class = {yhat}, alpha covers the bias exactly: the
        // group error must be at most 2 * alpha / gamma.
        let labels = vec![1.0, 0.0, 1.0, 0.0];
        let scores = vec![0.9, 0.2, 0.4, 0.1]; // one mistake on row 2
        let mask = vec![true; 4];
        let class = vec![Test::label_signature("S", &labels, &mask)];
        let b = bias(&scores, &labels, &class[0]);
        let report = check_prop1_bound(&scores, &labels, &mask, &class, b.max(0.0)).unwrap();
        assert!(report.certified);
        assert_eq!(report.tau, 0.0);
        assert!(report.holds);
        assert!(report.group_error <= report.bound + 1e-9);
    }

    #[test]
    fn do_no_harm_identity_always_passes() {
        let scores = vec![0.9, 0.2, 0.6];
        let labels = vec![1.0, 1.0, 0.0];
        let mask = vec![true, true, false];
        let r = check_do_no_harm(&scores, &scores, &labels, &mask, 0.05).unwrap();
        assert!(r.holds);
        assert_eq!(r.base_group_error, r.boosted_group_error);
        // er_S(f0) = 0.1, beta = 0.05: bound 0.5 by direct arithmetic.
        let r2 = DoNoHarmReport {
            base_group_error: 0.1,
            boosted_group_error: 0.0,
            beta: 0.05,
            bound: 3.0 * 0.1 + 4.0 * 0.05,
            holds: true,
        };
        assert!((r2.bound - 0.5).abs() < 1e-15);
    }

    fn report_dataset() -> Dataset {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        Dataset::new(
            Matrix::from_rows(rows).unwrap(),
            vec![0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            vec!["x0".into()],
            vec![GroupColumn {
                name: "g".into(),
                values: ["a", "a", "a", "b", "b", "b", "b", "b"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            }],
            "test",
        )
        .unwrap()
    }

    #[test]
    fn overall_error_is_mass_weighted_combination() {
        let ds = report_dataset();
        let scores = vec![0.1, 0.9, 0.8, 0.3, 0.2, 0.9, 0.4, 0.6];
        let ga = GroupSpec::equals("a", "g", "a");
        let gb = GroupSpec::equals("b", "g", "b");
        let ma = ga.mask(&ds).unwrap();
        let mb = gb.mask(&ds).unwrap();
        let all = vec![true; 8];
        let e_all = classification_error(&scores, &ds.labels, &all).unwrap();
        let e_a = classification_error(&scores, &ds.labels, &ma).unwrap();
        let e_b = classification_error(&scores, &ds.labels, &mb).unwrap();
        let wa = 3.0 / 8.0;
        let wb = 5.0 / 8.0;
        assert!((e_all - (wa * e_a + wb * e_b)).abs() < 1e-12);
    }

    #[test]
    fn report_has_identical_columns_for_identical_models() {
        let ds = report_dataset();
        let scores = vec![0.1, 0.9, 0.8, 0.3, 0.2, 0.9, 0.4, 0.6];
        let groups = vec![GroupSpec::equals("a", "g", "a"), GroupSpec::equals("b", "g", "b")];
        let rpt = build_report(
            &ds,
            &[("m1".into(), scores.clone()), ("m2".into(), scores)],
            &groups,
            0.1,
            1e-4,
        )
        .unwrap();
        for row in &rpt.rows {
            assert_eq!(row[0].error, row[1].error);
            assert_eq!(row[0].mean_bias, row[1].mean_bias);
        }
        // Mass row matches the dataset composition.
        assert_eq!(rpt.rows[0][0].mass, 1.0);
        assert!((rpt.rows[1][0].mass - 3.0 / 8.0).abs() < 1e-15);
        let table = rpt.render_table();
        assert!(table.contains("group"));
    }
}
