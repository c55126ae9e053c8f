//! Synthetic dataset generators: the subgroup-polynomial labeling task and a
//! planted-bias fixture for auditing detection tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audit::{SetDescription, SetOp};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::Predictor;

use super::{Dataset, GroupColumn};

/// One subgroup of the synthetic task: its gender/age annotation, the order
/// of its label polynomial, and its share of the population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthGroup {
    pub name: String,
    pub gender: String,
    pub age: String,
    pub order: usize,
    pub proportion: f64,
}

/// Specification of the subgroup-polynomial generator. Features are i.i.d.
/// standard normal. Gender and age are assigned by thresholding noisy
/// latents built from the two dedicated feature columns after the
/// polynomial support (`latent = feature + gate_noise * hidden`), at
/// empirical quantiles matching the group mix. Subgroup membership is thus
/// correlated with the features but not exactly recoverable from them, the
/// way sensitive attributes relate to observed covariates; the group
/// annotations themselves stay evaluation-only. Per group, a polynomial
/// over the first `poly_support` features with seeded normal coefficients
/// (variance-normalized per degree) labels each row by thresholding at the
/// group's empirical median.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub poly_support: usize,
    /// Hidden-noise scale of the group-assignment latents.
    pub gate_noise: f64,
    pub groups: Vec<SynthGroup>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> SynthSpec {
        SynthSpec {
            n: 40_000,
            d: 60,
            poly_support: 10,
            gate_noise: 0.0,
            groups: vec![
                group("OF", "F", "O", 1, 0.150),
                group("OM", "M", "O", 4, 0.197),
                group("YF", "F", "Y", 2, 0.246),
                group("YM", "M", "Y", 6, 0.407),
            ],
            seed: 0,
        }
    }
}

fn group(name: &str, gender: &str, age: &str, order: usize, proportion: f64) -> SynthGroup {
    SynthGroup {
        name: name.into(),
        gender: gender.into(),
        age: age.into(),
        order,
        proportion,
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::invalid("n must be at least 4"));
        }
        if self.groups.is_empty() {
            return Err(Error::invalid("at least one group required"));
        }
        if self.groups.iter().any(|g| g.order < 1) {
            return Err(Error::invalid("polynomial orders must be >= 1"));
        }
        let total: f64 = self.groups.iter().map(|g| g.proportion).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "group proportions must sum to 1, got {total}"
            )));
        }
        if self.d < self.poly_support + 2 {
            return Err(Error::invalid(
                "d must leave room for the polynomial support plus two group-assignment features",
            ));
        }
        if !(self.gate_noise >= 0.0) {
            return Err(Error::invalid("gate_noise must be >= 0"));
        }
        Ok(())
    }
}

pub fn generate_semisynth(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, d) = (spec.n, spec.d);
    let normal = StandardNormal;
    let mut flat = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        let v: f64 = normal.sample(&mut rng);
        flat.push(v);
    }
    let features = Matrix::from_flat(n, d, flat)?;

    // Assignment latents, drawn right after the features so the stream
    // layout is fixed. Gender thresholds the magnitude of its column, a
    // band structure a depth-limited tree discovers in two splits but a
    // small network learns slowly; age thresholds its column directly.
    let gcol = spec.poly_support;
    let acol = spec.poly_support + 1;
    let gender_latent: Vec<f64> = (0..n)
        .map(|i| {
            let noise: f64 = normal.sample(&mut rng);
            (features.get(i, gcol) + spec.gate_noise * noise).abs()
        })
        .collect();
    let age_latent: Vec<f64> = (0..n)
        .map(|i| {
            let noise: f64 = normal.sample(&mut rng);
            features.get(i, acol) + spec.gate_noise * noise
        })
        .collect();

    // Assign gender by the quantile of its latent, then age within each
    // gender, so the realized group counts match the mix exactly up to
    // rounding.
    let genders: Vec<&str> = {
        let female_mass: f64 = spec
            .groups
            .iter()
            .filter(|g| g.gender == "F")
            .map(|g| g.proportion)
            .sum();
        let n_female = (female_mass * n as f64).round() as usize;
        let order = rank_desc(&gender_latent);
        let mut v = vec!["M"; n];
        for &i in order.iter().take(n_female) {
            v[i] = "F";
        }
        v
    };
    let ages: Vec<&str> = {
        let mut v = vec!["Y"; n];
        for gender in ["F", "M"] {
            let members: Vec<usize> = (0..n).filter(|&i| genders[i] == gender).collect();
            let old_mass: f64 = spec
                .groups
                .iter()
                .filter(|g| g.gender == gender && g.age == "O")
                .map(|g| g.proportion)
                .sum();
            let n_old = (old_mass * n as f64).round() as usize;
            let mut by_val = members.clone();
            by_val.sort_unstable_by(|&a, &b| {
                age_latent[b]
                    .partial_cmp(&age_latent[a])
                    .expect("latents are finite")
            });
            for &i in by_val.iter().take(n_old.min(by_val.len())) {
                v[i] = "O";
            }
        }
        v
    };

    // Group index per row; rows whose (gender, age) pair is not declared can
    // only arise from a degenerate spec and are rejected.
    let mut group_of = vec![usize::MAX; n];
    for i in 0..n {
        let k = spec
            .groups
            .iter()
            .position(|g| g.gender == genders[i] && g.age == ages[i])
            .ok_or_else(|| Error::invalid("group mix does not cover every gender/age pair"))?;
        group_of[i] = k;
    }

    // Per-group polynomial labels, thresholded at the group median. Each
    // group's polynomial lives on its own small window of the support
    // features (overlapping windows, so groups interfere).
    let mut labels = vec![0.0; n];
    for (k, g) in spec.groups.iter().enumerate() {
        let window: Vec<usize> = (0..GROUP_WINDOW)
            .map(|j| (2 * k + j) % spec.poly_support)
            .collect();
        // Coefficients c[degree][window feature], seeded normal, drawn in a
        // fixed order so regeneration is byte-identical. Each degree is
        // scaled to unit contribution variance (E[x^{2k}] = (2k-1)!! for
        // standard normal x) and then tapered geometrically, so higher
        // orders add progressively sharper boundary shape without letting
        // the top degree drown out the rest.
        let coeffs: Vec<Vec<f64>> = (1..=g.order)
            .map(|deg| {
                let scale =
                    DEGREE_TAPER.powi(deg as i32 - 1) / double_factorial(2 * deg - 1).sqrt();
                (0..window.len())
                    .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng))
                    .collect()
            })
            .collect();
        let members: Vec<usize> = (0..n).filter(|&i| group_of[i] == k).collect();
        if members.is_empty() {
            continue;
        }
        let values: Vec<f64> = members
            .iter()
            .map(|&i| {
                let x = features.row(i);
                let mut v = 0.0;
                for (deg, row) in coeffs.iter().enumerate() {
                    for (w, c) in row.iter().enumerate() {
                        v += c * x[window[w]].powi(deg as i32 + 1);
                    }
                }
                v
            })
            .collect();
        let mut sorted = values.clone();
        sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
        let median = sorted[(sorted.len() - 1) / 2];
        for (&i, &v) in members.iter().zip(&values) {
            labels[i] = if v > median { 1.0 } else { 0.0 };
        }
    }

    Dataset::new(
        features,
        labels,
        (0..d).map(|j| format!("x{j}")).collect(),
        vec![
            GroupColumn {
                name: "gender".into(),
                values: genders.iter().map(|s| s.to_string()).collect(),
            },
            GroupColumn {
                name: "age".into(),
                values: ages.iter().map(|s| s.to_string()).collect(),
            },
        ],
        format!("semisynth seed {}", spec.seed),
    )
}

/// Geometric decay of per-degree label-polynomial variance.
const DEGREE_TAPER: f64 = 1.0 / 3.0;

/// Number of support features each group's polynomial touches.
const GROUP_WINDOW: usize = 3;

fn double_factorial(k: usize) -> f64 {
    let mut acc = 1.0;
    let mut v = k;
    while v > 1 {
        acc *= v as f64;
        v -= 2;
    }
    acc
}

fn rank_desc(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        values[b].partial_cmp(&values[a]).expect("values are finite")
    });
    order
}

/// A planted-bias fixture: a dataset with a hidden group decidable from
/// feature 0, and a scores-file predictor that is accurate everywhere except
/// that inside the group a `flip_rate` share of scores (balanced across
/// labels, rounded toward label 0) is inverted.
#[derive(Clone, Debug)]
pub struct AdversarialFixture {
    pub dataset: Dataset,
    pub predictor: Predictor,
    /// Feature-space description of the hidden group, usable as an auditor
    /// set or a declared test.
    pub group_set: SetDescription,
}

pub fn generate_adversarial(
    n: usize,
    d: usize,
    target_group_mass: f64,
    flip_rate: f64,
    seed: u64,
) -> Result<AdversarialFixture> {
    if !(target_group_mass > 0.0 && target_group_mass < 1.0) {
        return Err(Error::invalid("target_group_mass must lie in (0, 1)"));
    }
    if !(0.0..=1.0).contains(&flip_rate) {
        return Err(Error::invalid("flip_rate must lie in [0, 1]"));
    }
    if n < 10 || d < 2 {
        return Err(Error::invalid("need n >= 10 and d >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut flat = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        let v: f64 = normal.sample(&mut rng);
        flat.push(v);
    }
    let features = Matrix::from_flat(n, d, flat)?;

    // Hidden group: the top rows by feature 0; threshold at the midpoint
    // between the boundary values.
    let k = ((target_group_mass * n as f64).round() as usize).clamp(1, n - 1);
    let col0: Vec<f64> = (0..n).map(|i| features.get(i, 0)).collect();
    let order = rank_desc(&col0);
    let threshold =
        0.5 * (features.get(order[k - 1], 0) + features.get(order[k], 0));
    let mut in_group = vec![false; n];
    for &i in order.iter().take(k) {
        in_group[i] = true;
    }

    // Labels threshold feature 1 at the within-side median, so both sides of
    // the hidden group boundary are label-balanced exactly. Balance inside
    // the group is what makes the flipped-residual mass per base partition
    // meet flip_rate * mass / 2.
    let mut labels = vec![0.0; n];
    for inside in [true, false] {
        let members: Vec<usize> = (0..n).filter(|&i| in_group[i] == inside).collect();
        let mut vals: Vec<f64> = members.iter().map(|&i| features.get(i, 1)).collect();
        vals.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
        let median = vals[(vals.len() - 1) / 2];
        for &i in &members {
            labels[i] = if features.get(i, 1) > median { 1.0 } else { 0.0 };
        }
    }
    let mut scores: Vec<f64> = labels.clone();

    // Flip a balanced selection inside the group, label-0 rows first so the
    // flipped residual mass never undershoots flip_rate * mass / 2 on either
    // side of the base partition.
    let zeros: Vec<usize> = order[..k]
        .iter()
        .copied()
        .filter(|&i| labels[i] == 0.0)
        .collect();
    let ones: Vec<usize> = order[..k]
        .iter()
        .copied()
        .filter(|&i| labels[i] == 1.0)
        .collect();
    let n_flip = (flip_rate * k as f64).round() as usize;
    let want_zero = n_flip.div_ceil(2).min(zeros.len());
    let mut flips: Vec<usize> = zeros[..want_zero].to_vec();
    let from_ones = (n_flip - want_zero).min(ones.len());
    flips.extend_from_slice(&ones[..from_ones]);
    if flips.len() < n_flip {
        // spill back to remaining zeros if the ones side ran short
        let extra = (n_flip - flips.len()).min(zeros.len() - want_zero);
        flips.extend_from_slice(&zeros[want_zero..want_zero + extra]);
    }
    for &i in &flips {
        scores[i] = 1.0 - labels[i];
    }

    let dataset = Dataset::new(
        features,
        labels,
        (0..d).map(|j| format!("x{j}")).collect(),
        vec![GroupColumn {
            name: "hidden".into(),
            values: in_group
                .iter()
                .map(|&m| if m { "in".to_string() } else { "out".to_string() })
                .collect(),
        }],
        format!("adversarial seed {seed} mass {target_group_mass} flip {flip_rate}"),
    )?;
    Ok(AdversarialFixture {
        dataset,
        predictor: Predictor::Scores { scores },
        group_set: SetDescription {
            column: 0,
            op: SetOp::Gt,
            value: threshold,
        },
    })
}
