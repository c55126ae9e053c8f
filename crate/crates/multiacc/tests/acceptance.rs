//! Acceptance suite. One test per criterion; each prints a PASS line with
//! the measured quantities when it succeeds (run with `-- --nocapture` to
//! see them on passing runs).

use multiacc::audit::{AuditorConfig, SetDescription, SetOp};
use multiacc::baselines::{loss_and_grad, train_f0, NetShape, TrainConfig};
use multiacc::boost::{
    audit_partitions, make_batches, run_boost, select_candidate, BatchStrategy, BoostConfig,
    BoostTrace, StopReason,
};
use multiacc::data::{generate_adversarial, generate_semisynth, split, Dataset, GroupColumn, Schema, SynthSpec};
use multiacc::linalg::Matrix;
use multiacc::metrics::{
    check_do_no_harm, check_prop1_bound, classification_error, cross_entropy, GroupSpec, Test,
};
use multiacc::model::{clamp, BoostedModel, PartitionId, Predictor, Update};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pass(criterion: &str, detail: String) {
    println!("criterion {criterion}: PASS ({detail})");
}

fn dataset(rows: Vec<Vec<f64>>, labels: Vec<f64>) -> Dataset {
    let d = rows.first().map_or(0, |r| r.len());
    Dataset::new(
        Matrix::from_rows(rows).unwrap(),
        labels,
        (0..d).map(|j| format!("x{j}")).collect(),
        Vec::<GroupColumn>::new(),
        "acceptance",
    )
    .unwrap()
}

/// Noisy-threshold labels over the first two features, scores loosely
/// tracking the labels.
fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Dataset, Vec<f64>) {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect())
        .collect();
    let labels: Vec<f64> = rows
        .iter()
        .map(|r| {
            let s = r[0] + 0.8 * r[1] + 0.5 * (rng.gen::<f64>() - 0.5);
            if s > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let scores: Vec<f64> = labels
        .iter()
        .map(|&y| {
            let noise = rng.gen::<f64>() * 0.5 - 0.25;
            (0.2 + 0.6 * y + noise).clamp(0.02, 0.98)
        })
        .collect();
    (dataset(rows, labels), scores)
}

/// Every recorded round must satisfy the per-update descent inequality
/// `xent_before - xent_after >= eta * corr - eta^2 * mean(h^2) - 1e-9`.
fn assert_descent(trace: &BoostTrace, eta: f64, context: &str) -> usize {
    for r in &trace.rounds {
        let lhs = r.xent_before - r.xent_after;
        let rhs = eta * r.correlation - eta * eta * r.mean_h_sq;
        assert!(
            lhs >= rhs - 1e-9,
            "{context} round {}: descent {lhs} < {rhs}",
            r.t
        );
    }
    trace.rounds.len()
}

// ---------------------------------------------------------------------
// Criterion 1: whenever a run reports convergence, re-running the same
// auditor on the final batch yields max correlation <= alpha exactly.
// ---------------------------------------------------------------------
#[test]
fn criterion_1_termination_certificate() {
    let started = std::time::Instant::now();
    let mut converged = 0;
    for inst in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + inst);
        let (ds, scores) = random_instance(&mut rng, 500, 5);
        let alpha = 0.1;
        let auditor = match inst % 3 {
            0 => AuditorConfig::ridge(alpha),
            1 => {
                let mut a = AuditorConfig::tree(alpha);
                a.tree_max_depth = 3;
                a
            }
            _ => {
                let mut a = AuditorConfig::ridge(alpha);
                a.ridge_lambda = 0.0;
                a
            }
        };
        let mut config = BoostConfig::new(alpha, auditor);
        config.max_iterations = 60;
        config.batch_strategy = match inst % 4 {
            1 => BatchStrategy::FreshFolds { k: 5 },
            2 => BatchStrategy::FreshFolds { k: 2 },
            _ => BatchStrategy::SingleBatch,
        };
        config.seed = inst;
        let base = Predictor::Scores { scores };
        let (model, trace) = run_boost(&base, &ds, &config).unwrap();
        if trace.reason != StopReason::Converged {
            continue;
        }
        converged += 1;

        // Re-audit the returned model on the final batch, from scratch.
        let batches = make_batches(ds.n(), &config.batch_strategy, config.seed).unwrap();
        let rows = batches.batch(trace.final_batch.unwrap());
        let raw = base.scores_for(&ds.features).unwrap();
        let sides: Vec<PartitionId> = raw
            .iter()
            .map(|&p| PartitionId::of_score(clamp(p, config.clamp_eps)))
            .collect();
        let rescored = model.scores_for(&ds.features).unwrap();
        let f: Vec<f64> = rows.iter().map(|&i| rescored[i]).collect();
        let y: Vec<f64> = rows.iter().map(|&i| ds.labels[i]).collect();
        let candidates =
            audit_partitions(&ds.features, rows, &sides, &f, &y, &config.auditor, false).unwrap();
        let best = select_candidate(&candidates);
        assert!(
            best.correlation <= alpha,
            "instance {inst}: re-audited correlation {} > alpha",
            best.correlation
        );
        assert_eq!(
            best.correlation.to_bits(),
            trace.final_max_correlation.unwrap().to_bits(),
            "instance {inst}: re-audit does not reproduce the recorded correlation"
        );
    }
    let elapsed = started.elapsed();
    assert!(converged >= 40, "only {converged}/50 runs converged");
    assert!(elapsed.as_secs() < 30, "battery took {elapsed:?}");
    pass("1 (termination certificate)", format!("{converged}/50 converged, re-audit exact, {elapsed:?}"));
}

// ---------------------------------------------------------------------
// Criterion 2: with a 16-set auditor and eta = alpha/4, the iteration
// count never exceeds ceil(16 * xent(f0) / alpha^2).
// ---------------------------------------------------------------------
fn budget_instance(rng: &mut ChaCha8Rng) -> (Dataset, Vec<f64>, Vec<SetDescription>) {
    let n = 400;
    let d = 4;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
        .collect();
    let labels: Vec<f64> = rows
        .iter()
        .map(|r| {
            let flip = rng.gen::<f64>() < 0.1;
            let v = r[0] + 0.5 * r[1] > 0.0;
            if v != flip {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 0.6 + 0.2).collect();
    let sets: Vec<SetDescription> = (0..d)
        .flat_map(|col| {
            [-0.6, -0.2, 0.2, 0.6].into_iter().map(move |q| SetDescription {
                column: col,
                op: SetOp::Gt,
                value: q,
            })
        })
        .collect();
    (dataset(rows, labels), scores, sets)
}

#[test]
fn criterion_2_iteration_budget() {
    let mut max_ratio: f64 = 0.0;
    let mut traces = Vec::new();
    for (b, &alpha) in [0.05, 0.1].iter().enumerate() {
        for inst in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(2_000 + 100 * b as u64 + inst);
            let (ds, scores, sets) = budget_instance(&mut rng);
            assert_eq!(sets.len(), 16);
            let xent0 = cross_entropy(&scores, &ds.labels, &vec![true; ds.n()], 1e-4).unwrap();
            let budget = (16.0 * xent0 / (alpha * alpha)).ceil() as usize;
            let mut config = BoostConfig::new(alpha, AuditorConfig::sets(alpha, sets));
            config.eta = alpha / 4.0;
            config.max_iterations = budget + 5;
            config.batch_strategy = BatchStrategy::SingleBatch;
            let base = Predictor::Scores { scores };
            let (_, trace) = run_boost(&base, &ds, &config).unwrap();
            assert_eq!(
                trace.reason,
                StopReason::Converged,
                "alpha {alpha} instance {inst} did not converge within the budget"
            );
            assert!(
                trace.iterations() <= budget,
                "alpha {alpha} instance {inst}: {} iterations > budget {budget}",
                trace.iterations()
            );
            max_ratio = max_ratio.max(trace.iterations() as f64 / budget as f64);
            traces.push((trace, alpha / 4.0));
        }
    }
    // The same runs also feed criterion 3's inequality check.
    let rounds: usize = traces
        .iter()
        .map(|(t, eta)| assert_descent(t, *eta, "criterion 2 trace"))
        .sum();
    pass(
        "2 (iteration budget)",
        format!("20/20 within ceil(16*xent0/alpha^2); worst usage {:.1}%; {rounds} rounds descent-checked", 100.0 * max_ratio),
    );
}

// ---------------------------------------------------------------------
// Criterion 3: recorded rounds satisfy the descent inequality.
// ---------------------------------------------------------------------
#[test]
fn criterion_3_loss_descent() {
    let mut total_rounds = 0;
    for inst in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3_000 + inst);
        let (ds, scores) = random_instance(&mut rng, 300, 4);
        let alpha = 0.04;
        let auditor = match inst % 3 {
            0 => AuditorConfig::ridge(alpha),
            1 => AuditorConfig::tree(alpha),
            _ => {
                let sets = vec![
                    SetDescription { column: 0, op: SetOp::Gt, value: 0.0 },
                    SetDescription { column: 1, op: SetOp::Le, value: 0.5 },
                    SetDescription { column: 2, op: SetOp::Gt, value: -0.5 },
                ];
                AuditorConfig::sets(alpha, sets)
            }
        };
        let mut config = BoostConfig::new(alpha, auditor);
        config.eta = alpha / 4.0;
        config.max_iterations = 80;
        config.batch_strategy = if inst % 2 == 0 {
            BatchStrategy::SingleBatch
        } else {
            BatchStrategy::FreshFolds { k: 4 }
        };
        config.seed = inst;
        let base = Predictor::Scores { scores };
        let (_, trace) = run_boost(&base, &ds, &config).unwrap();
        total_rounds += assert_descent(&trace, config.eta, &format!("instance {inst}"));
    }
    assert!(total_rounds > 100, "battery too small: {total_rounds} rounds");
    pass("3 (loss descent)", format!("{total_rounds} recorded rounds satisfy the inequality"));
}

// ---------------------------------------------------------------------
// Criterion 4: do-no-harm on every converged run that audits the group
// indicator and its negation with alpha <= beta * gamma.
// ---------------------------------------------------------------------
#[test]
fn criterion_4_do_no_harm() {
    let mut worst_margin = f64::INFINITY;
    for inst in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4_000 + inst);
        let n = 300;
        let d = 4;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let gamma_target = 0.25 + rng.gen::<f64>() * 0.25;
        let group_set = SetDescription {
            column: 0,
            op: SetOp::Gt,
            value: 1.0 - 2.0 * gamma_target,
        };
        let labels: Vec<f64> = rows.iter().map(|r| f64::from(r[1] > 0.0)).collect();
        let scores: Vec<f64> = labels
            .iter()
            .map(|&y| {
                let noise = rng.gen::<f64>() * 0.8 - 0.4;
                (0.15 + 0.7 * y + noise).clamp(0.01, 0.99)
            })
            .collect();
        let ds = dataset(rows, labels);
        let mask: Vec<bool> = (0..n)
            .map(|i| group_set.contains(ds.features.row(i)).unwrap())
            .collect();
        let gamma = mask.iter().filter(|&&m| m).count() as f64 / n as f64;
        let beta = if inst % 2 == 0 { 0.1 } else { 0.2 };
        let alpha = beta * gamma;

        let mut sets = vec![group_set];
        for _ in 0..7 {
            sets.push(SetDescription {
                column: rng.gen_range(0..d),
                op: if rng.gen() { SetOp::Gt } else { SetOp::Le },
                value: rng.gen::<f64>() * 1.6 - 0.8,
            });
        }
        let xent0 = cross_entropy(&scores, &ds.labels, &vec![true; n], 1e-4).unwrap();
        let mut config = BoostConfig::new(alpha, AuditorConfig::sets(alpha, sets));
        config.eta = alpha / 4.0;
        config.max_iterations = (16.0 * xent0 / (alpha * alpha)).ceil() as usize + 5;
        config.batch_strategy = BatchStrategy::SingleBatch;
        let base = Predictor::Scores { scores: scores.clone() };
        let (model, trace) = run_boost(&base, &ds, &config).unwrap();
        assert_eq!(trace.reason, StopReason::Converged, "instance {inst}");

        let boosted = model.scores_for(&ds.features).unwrap();
        let report = check_do_no_harm(&scores, &boosted, &ds.labels, &mask, beta).unwrap();
        assert!(
            report.holds,
            "instance {inst}: group error {} above bound {}",
            report.boosted_group_error, report.bound
        );
        worst_margin = worst_margin.min(report.bound - report.boosted_group_error);
    }
    pass("4 (do-no-harm)", format!("100/100 runs hold; tightest margin {worst_margin:.3}"));
}

// ---------------------------------------------------------------------
// Criterion 5: certified alpha implies the group-error bound on exact
// finite instances whose class contains the group's label signature.
// ---------------------------------------------------------------------
#[test]
fn criterion_5_error_bound() {
    let mut tightest = f64::INFINITY;
    for inst in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5_000 + inst);
        let n = 1_000;
        let (ds, scores) = random_instance(&mut rng, n, 3);
        let gamma_target = 0.1 + rng.gen::<f64>() * 0.5;
        let mask: Vec<bool> = (0..n)
            .map(|i| ds.features.get(i, 2) > 2.0 - 4.0 * gamma_target)
            .collect();
        if !mask.iter().any(|&m| m) {
            continue;
        }
        let other_mask: Vec<bool> = (0..n).map(|i| ds.features.get(i, 0) > 0.0).collect();
        let class = vec![
            Test::label_signature("S", &ds.labels, &mask),
            Test::group_indicator("S", &mask, false),
            Test::group_indicator("S", &mask, true),
            Test::group_indicator("T", &other_mask, false),
            Test::constant(1.0, n),
            Test::constant(-1.0, n),
        ];
        // Certify at exactly the worst bias over the class.
        let alpha = class
            .iter()
            .map(|t| multiacc::metrics::bias(&scores, &ds.labels, t))
            .fold(f64::NEG_INFINITY, f64::max)
            .max(1e-12);
        let report = check_prop1_bound(&scores, &ds.labels, &mask, &class, alpha).unwrap();
        assert!(report.certified, "instance {inst} must certify at its own max bias");
        assert_eq!(report.tau, 0.0, "label signature in class means tau = 0");
        assert!(
            report.group_error <= report.bound + 1e-9,
            "instance {inst}: er_S {} > bound {}",
            report.group_error,
            report.bound
        );
        tightest = tightest.min(report.bound - report.group_error);
    }
    pass("5 (certified error bound)", format!("100/100 instances hold; tightest margin {tightest:.3}"));
}

// ---------------------------------------------------------------------
// Criterion 6: halving alpha adds at most 2 L ln2 + 5 iterations on a
// linearly-realizable-derivative instance with the gradient auditor.
// ---------------------------------------------------------------------
#[test]
fn criterion_6_linear_convergence_scaling() {
    // Derivative targets g(x) = x exactly, by inverting the derivative
    // formula: f = 1 - y - 1/g with y = 1 on the negative branch.
    let n = 400;
    let half = n / 2;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut scores = Vec::new();
    for i in 0..half {
        let x = 1.25 + 0.75 * (i as f64 + 0.5) / half as f64;
        rows.push(vec![x]);
        labels.push(0.0);
        scores.push(1.0 - 1.0 / x);
    }
    for i in 0..half {
        let x = -2.0 + 0.75 * (i as f64 + 0.5) / half as f64;
        rows.push(vec![x]);
        labels.push(1.0);
        scores.push(-1.0 / x);
    }
    let ds = dataset(rows, labels);
    let base = Predictor::Scores { scores };

    let norm_budget = 8.0;
    let slack = 2.0 * norm_budget * std::f64::consts::LN_2 + 5.0;
    let mut iterations = Vec::new();
    for alpha in [0.2, 0.1, 0.05, 0.025] {
        let mut auditor = AuditorConfig::gradient(alpha);
        auditor.ridge_lambda = 0.0;
        auditor.norm_budget = norm_budget;
        let mut config = BoostConfig::new(alpha, auditor);
        config.eta = 1.0 / (2.0 * norm_budget);
        config.max_iterations = 2_000;
        config.batch_strategy = BatchStrategy::SingleBatch;
        let (_, trace) = run_boost(&base, &ds, &config).unwrap();
        assert_eq!(trace.reason, StopReason::Converged, "alpha {alpha}");
        iterations.push((alpha, trace.iterations()));
    }
    for w in iterations.windows(2) {
        let diff = w[1].1 as f64 - w[0].1 as f64;
        assert!(
            diff <= slack,
            "halving alpha {} -> {} added {diff} iterations > {slack:.2}",
            w[0].0,
            w[1].0
        );
    }
    pass(
        "6 (linear-convergence scaling)",
        format!("iterations {:?}, per-halving budget {slack:.2}", iterations),
    );
}

// ---------------------------------------------------------------------
// Criterion 7: planted bias is detected at round 0 and post-processing
// repairs the hidden group without hurting the rest.
// ---------------------------------------------------------------------
#[test]
fn criterion_7_adversarial_detection() {
    let fx = generate_adversarial(4_000, 6, 0.1, 1.0, 21).unwrap();
    let ds = &fx.dataset;
    let labels = &ds.labels;
    let base_scores = fx.predictor.scores_for(&ds.features).unwrap();
    let hidden = ds.group_column("hidden").unwrap();
    let mask: Vec<bool> = hidden.values.iter().map(|v| v == "in").collect();
    let all = vec![true; ds.n()];

    let er_group_before = classification_error(&base_scores, labels, &mask).unwrap();
    let er_all_before = classification_error(&base_scores, labels, &all).unwrap();
    assert_eq!(er_group_before, 1.0);

    let mut sets = vec![fx.group_set.clone()];
    for (col, value) in [(1usize, 0.3), (2, -0.4), (3, 0.0), (4, 0.8), (5, -0.9)] {
        sets.push(SetDescription { column: col, op: SetOp::Gt, value });
    }
    let alpha = 0.02;
    let mut config = BoostConfig::new(alpha, AuditorConfig::sets(alpha, sets));
    config.eta = 1.0;
    config.max_iterations = 60;
    config.batch_strategy = BatchStrategy::SingleBatch;
    let (model, trace) = run_boost(&fx.predictor, ds, &config).unwrap();

    let detected = trace.rounds.first().expect("bias must trigger an update").correlation;
    assert!(detected >= 0.04, "round-0 detection {detected} < 0.04");
    assert_eq!(trace.reason, StopReason::Converged);

    let boosted = model.scores_for(&ds.features).unwrap();
    let er_group_after = classification_error(&boosted, labels, &mask).unwrap();
    let er_all_after = classification_error(&boosted, labels, &all).unwrap();
    assert!(
        er_group_after <= 0.5 * er_group_before,
        "group error {er_group_after} not halved from {er_group_before}"
    );
    assert!(
        er_all_after <= er_all_before + 0.01 + 1e-12,
        "overall error grew from {er_all_before} to {er_all_after}"
    );
    pass(
        "7 (adversarial detection)",
        format!(
            "detected {detected:.4} at round 0; group error {er_group_before:.3} -> {er_group_after:.3}, overall {er_all_before:.3} -> {er_all_after:.3}"
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 8: directional replication of the subgroup-polynomial
// experiment. The pinned protocol instance must show the base model
// worst on OF, a >= 15% relative OF improvement after tree boosting,
// and no overall degradation, within five minutes.
// ---------------------------------------------------------------------
#[test]
fn criterion_8_semisynthetic_direction() {
    let started = std::time::Instant::now();
    let seed = 11;
    let spec = SynthSpec { seed, ..SynthSpec::default() };
    let ds = generate_semisynth(&spec).unwrap();
    let (train, audit, test) = split(&ds, (0.8, 0.1, 0.1), seed).unwrap();

    let mut train_cfg = TrainConfig::mlp2();
    train_cfg.learning_rate = 1.0;
    train_cfg.epochs = 400;
    train_cfg.seed = seed;
    let f0 = train_f0(&train, &train_cfg).unwrap();

    let alpha = 5e-4;
    let mut auditor = AuditorConfig::tree(alpha);
    auditor.tree_max_depth = 5;
    let mut config = BoostConfig::new(alpha, auditor);
    config.eta = 1.0;
    config.max_iterations = 200;
    config.batch_strategy = BatchStrategy::SingleBatch;
    config.seed = seed;
    let (ma, trace) = run_boost(&f0, &audit, &config).unwrap();

    let f0_scores = f0.scores_for(&test.features).unwrap();
    let ma_scores = ma.scores_for(&test.features).unwrap();
    let all = vec![true; test.n()];
    let f0_overall = classification_error(&f0_scores, &test.labels, &all).unwrap();
    let ma_overall = classification_error(&ma_scores, &test.labels, &all).unwrap();

    // All marginal and pairwise groups; OF must be f0's worst.
    let mut groups: Vec<GroupSpec> = vec![
        GroupSpec::equals("F", "gender", "F"),
        GroupSpec::equals("M", "gender", "M"),
        GroupSpec::equals("O", "age", "O"),
        GroupSpec::equals("Y", "age", "Y"),
    ];
    for (name, g, a) in [("OF", "F", "O"), ("OM", "M", "O"), ("YF", "F", "Y"), ("YM", "M", "Y")] {
        groups.push(GroupSpec::conjunction(
            name,
            vec![("gender".into(), g.into()), ("age".into(), a.into())],
        ));
    }
    let mut f0_of = f64::NAN;
    let mut ma_of = f64::NAN;
    let mut worst_name = String::new();
    let mut worst_err = f64::NEG_INFINITY;
    for g in &groups {
        let mask = g.mask(&test).unwrap();
        let e = classification_error(&f0_scores, &test.labels, &mask).unwrap();
        if e > worst_err {
            worst_err = e;
            worst_name = g.name.clone();
        }
        if g.name == "OF" {
            f0_of = e;
            ma_of = classification_error(&ma_scores, &test.labels, &mask).unwrap();
        }
    }

    assert_eq!(worst_name, "OF", "base model's worst group is {worst_name}, not OF");
    assert!(
        ma_of <= 0.85 * f0_of,
        "OF error {ma_of:.3} not reduced by 15% from {f0_of:.3}"
    );
    assert!(
        ma_overall <= f0_overall + 1e-12,
        "overall error grew: {f0_overall:.3} -> {ma_overall:.3}"
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 300, "protocol took {elapsed:?}");
    pass(
        "8 (semi-synthetic direction)",
        format!(
            "f0 OF {f0_of:.3} worst -> MA OF {ma_of:.3} ({:.1}% rel.), overall {f0_overall:.3} -> {ma_overall:.3}, {} rounds, {elapsed:?}",
            100.0 * (f0_of - ma_of) / f0_of,
            trace.iterations()
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 9: directional replication on the income dataset, only when
// the user supplies it (MULTIACC_ADULT_CSV, optional
// MULTIACC_ADULT_SCHEMA). Expects group columns `group:sex` in {F, M}
// and `group:race` in {B, W}.
// ---------------------------------------------------------------------
#[test]
fn criterion_9_adult_direction() {
    let Ok(csv_path) = std::env::var("MULTIACC_ADULT_CSV") else {
        println!("criterion 9 (adult direction): SKIP (MULTIACC_ADULT_CSV not set)");
        return;
    };
    let schema = match std::env::var("MULTIACC_ADULT_SCHEMA") {
        Ok(p) => Schema::load(std::path::Path::new(&p)).unwrap(),
        Err(_) => Schema::default(),
    };
    let ds = multiacc::data::load_csv(std::path::Path::new(&csv_path), &schema).unwrap();
    let (train, audit, test) = split(&ds, (0.60, 0.067, 0.333), 29).unwrap();

    let mut cfg = TrainConfig::mlp2();
    cfg.learning_rate = 0.5;
    cfg.epochs = 400;
    cfg.seed = 29;
    let f0 = train_f0(&train, &cfg).unwrap();

    let alpha = 1e-3;
    let mut config = BoostConfig::new(alpha, AuditorConfig::tree(alpha));
    config.eta = 1.0;
    config.max_iterations = 60;
    config.batch_strategy = BatchStrategy::SingleBatch;
    config.seed = 29;
    let (ma, trace) = run_boost(&f0, &audit, &config).unwrap();
    assert!(
        trace.iterations() <= 60,
        "did not converge within 60 iterations at eta = 1"
    );

    let f0_scores = f0.scores_for(&test.features).unwrap();
    let ma_scores = ma.scores_for(&test.features).unwrap();
    let all = vec![true; test.n()];
    let f0_overall = classification_error(&f0_scores, &test.labels, &all).unwrap();
    let ma_overall = classification_error(&ma_scores, &test.labels, &all).unwrap();
    assert!(ma_overall < f0_overall, "MA {ma_overall} >= f0 {f0_overall}");
    for (name, col, val) in [
        ("F", "sex", "F"),
        ("M", "sex", "M"),
        ("B", "race", "B"),
        ("W", "race", "W"),
    ] {
        let mask = GroupSpec::equals(name, col, val).mask(&test).unwrap();
        let e0 = classification_error(&f0_scores, &test.labels, &mask).unwrap();
        let e1 = classification_error(&ma_scores, &test.labels, &mask).unwrap();
        assert!(e1 <= e0, "group {name}: MA {e1} > f0 {e0}");
    }
    pass(
        "9 (adult direction)",
        format!("overall {f0_overall:.3} -> {ma_overall:.3} in {} rounds", trace.iterations()),
    );
}

// ---------------------------------------------------------------------
// Criterion 10: trainer gradients match central finite differences to
// 1e-5 relative on 20 random instances, and model serialization
// round-trips bitwise.
// ---------------------------------------------------------------------
#[test]
fn criterion_10_numerical_hygiene() {
    let mut worst_rel: f64 = 0.0;
    for inst in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + inst);
        let d = rng.gen_range(2..5);
        let n = rng.gen_range(10..25);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let labels: Vec<f64> = (0..n).map(|_| f64::from(rng.gen::<bool>())).collect();
        let features = Matrix::from_rows(rows).unwrap();
        let l2 = if inst % 2 == 0 { 0.0 } else { 0.03 };
        let shape = if inst < 10 {
            NetShape::logistic(d)
        } else {
            NetShape::mlp(d, (4, 3))
        };
        let theta: Vec<f64> = (0..shape.n_params())
            .map(|_| rng.gen::<f64>() * 0.6 - 0.3)
            .collect();
        let (_, grad) = loss_and_grad(&shape, &theta, &features, &labels, l2, 1e-4);
        let h = 1e-6;
        for k in 0..theta.len() {
            let mut tp = theta.clone();
            tp[k] += h;
            let (lp, _) = loss_and_grad(&shape, &tp, &features, &labels, l2, 1e-4);
            let mut tm = theta.clone();
            tm[k] -= h;
            let (lm, _) = loss_and_grad(&shape, &tm, &features, &labels, l2, 1e-4);
            let fd = (lp - lm) / (2.0 * h);
            let rel = (grad[k] - fd).abs() / (1.0 + grad[k].abs().max(fd.abs()));
            assert!(rel <= 1e-5, "instance {inst} param {k}: analytic {} vs fd {fd}", grad[k]);
            worst_rel = worst_rel.max(rel);
        }
    }

    // Bitwise serialization round-trip over every hypothesis kind.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let rows: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..3).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
        .collect();
    let features = Matrix::from_rows(rows).unwrap();
    let base = Predictor::Linear {
        weights: vec![0.371, -0.82, 0.0441],
        intercept: 0.0137,
    };
    let mut model = BoostedModel::new(base, 1e-4).unwrap();
    let tree_sample_rows: Vec<usize> = (0..10).collect();
    let target: Vec<f64> = (0..10).map(|_| rng.gen::<f64>() - 0.5).collect();
    let mask = vec![true; 10];
    let sample =
        multiacc::audit::AuditSample::new(&features, &tree_sample_rows, &target, &mask).unwrap();
    let tree = multiacc::audit::fit_tree(&sample, &AuditorConfig::tree(0.05)).unwrap();
    for (partition, hypothesis) in [
        (PartitionId::All, multiacc::audit::Hypothesis::Linear { w: vec![0.2, -0.1, 0.7], b: 0.003, bound: 1.0 }),
        (PartitionId::Neg, tree),
        (PartitionId::Pos, multiacc::audit::Hypothesis::Set {
            set: SetDescription { column: 1, op: SetOp::Le, value: 0.25 },
            negated: true,
        }),
        (PartitionId::All, multiacc::audit::Hypothesis::Zero),
    ] {
        model.push_update(Update { partition, step_size: 0.37, hypothesis }).unwrap();
    }
    let bytes = model.to_json_bytes().unwrap();
    let back = BoostedModel::from_json_bytes(&bytes).unwrap();
    let s1 = model.scores_for(&features).unwrap();
    let s2 = back.scores_for(&features).unwrap();
    for (a, b) in s1.iter().zip(&s2) {
        assert_eq!(a.to_bits(), b.to_bits(), "round-trip changed a score bit pattern");
    }
    assert_eq!(bytes, back.to_json_bytes().unwrap(), "re-serialization not byte-identical");
    pass(
        "10 (numerical hygiene)",
        format!("20/20 gradient checks (worst rel {worst_rel:.2e}); serialization bitwise"),
    );
}
