//! Trainers for the initial model and the comparison baselines: continue
//! training on the audit set (RT) and per-subgroup models (SS).
//!
//! Both trainers run full-batch gradient descent on the clamped
//! cross-entropy, deterministically from a seed. Where a score saturates the
//! clamp the per-row loss is constant, so its gradient contribution is zero;
//! the analytic gradient implements exactly that and therefore matches
//! central finite differences of the loss.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, sigmoid, Matrix};
use crate::metrics::GroupSpec;
use crate::model::{clamp, Predictor, DEFAULT_CLAMP_EPS};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Mlp2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub hidden: (usize, usize),
    pub clamp_eps: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn logistic() -> TrainConfig {
        TrainConfig {
            kind: ModelKind::Logistic,
            learning_rate: 0.5,
            epochs: 200,
            l2: 0.0,
            hidden: (32, 16),
            clamp_eps: DEFAULT_CLAMP_EPS,
            seed: 0,
        }
    }

    pub fn mlp2() -> TrainConfig {
        TrainConfig {
            kind: ModelKind::Mlp2,
            learning_rate: 0.5,
            epochs: 200,
            l2: 0.0,
            hidden: (32, 16),
            clamp_eps: DEFAULT_CLAMP_EPS,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        if self.hidden.0 < 1 || self.hidden.1 < 1 {
            return Err(Error::invalid("hidden widths must be >= 1"));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::invalid("clamp_eps must lie in (0, 1/2)"));
        }
        Ok(())
    }
}

/// Network shape for the flat parameter vector. Logistic models use
/// `h1 = h2 = 0` and the vector is `[w (d), b]`; the MLP layout is
/// `[w1 (h1*d), b1 (h1), w2 (h2*h1), b2 (h2), w3 (h2), b3]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetShape {
    pub d: usize,
    pub h1: usize,
    pub h2: usize,
}

impl NetShape {
    pub fn logistic(d: usize) -> NetShape {
        NetShape { d, h1: 0, h2: 0 }
    }

    pub fn mlp(d: usize, hidden: (usize, usize)) -> NetShape {
        NetShape {
            d,
            h1: hidden.0,
            h2: hidden.1,
        }
    }

    pub fn is_logistic(&self) -> bool {
        self.h1 == 0
    }

    pub fn n_params(&self) -> usize {
        if self.is_logistic() {
            self.d + 1
        } else {
            self.h1 * self.d + self.h1 + self.h2 * self.h1 + self.h2 + self.h2 + 1
        }
    }

    fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = vec![0.0; self.n_params()];
        // Small seeded weights, zero biases. Keeps initial scores interior
        // so the clamp never saturates at the start of training.
        let scale = 0.1;
        if self.is_logistic() {
            for w in theta[..self.d].iter_mut() {
                *w = scale * normal(&mut rng);
            }
        } else {
            let (o1, o2, o3) = self.offsets();
            for w in theta[..self.h1 * self.d].iter_mut() {
                *w = scale * normal(&mut rng);
            }
            for w in theta[o1 + self.h1..o1 + self.h1 + self.h2 * self.h1].iter_mut() {
                *w = scale * normal(&mut rng);
            }
            let _ = o2;
            for w in theta[o3..o3 + self.h2].iter_mut() {
                *w = scale * normal(&mut rng);
            }
        }
        theta
    }

    /// Offsets of (b1, b2-block start, w3) in the flat vector.
    fn offsets(&self) -> (usize, usize, usize) {
        let o1 = self.h1 * self.d; // b1 starts here
        let o2 = o1 + self.h1 + self.h2 * self.h1; // b2 starts here
        let o3 = o2 + self.h2; // w3 starts here
        (o1, o2, o3)
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller from two uniforms; deterministic given the rng stream.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Raw score of the flat-parameter network on one row.
pub fn net_score(shape: &NetShape, theta: &[f64], x: &[f64]) -> f64 {
    if shape.is_logistic() {
        sigmoid(dot(&theta[..shape.d], x) + theta[shape.d])
    } else {
        let (o1, o2, o3) = shape.offsets();
        let mut h1 = vec![0.0; shape.h1];
        for (i, h) in h1.iter_mut().enumerate() {
            *h = (dot(&theta[i * shape.d..(i + 1) * shape.d], x) + theta[o1 + i]).tanh();
        }
        let w2_start = o1 + shape.h1;
        let mut h2 = vec![0.0; shape.h2];
        for (i, h) in h2.iter_mut().enumerate() {
            *h = (dot(&theta[w2_start + i * shape.h1..w2_start + (i + 1) * shape.h1], &h1)
                + theta[o2 + i])
                .tanh();
        }
        sigmoid(dot(&theta[o3..o3 + shape.h2], &h2) + theta[o3 + shape.h2])
    }
}

/// Mean clamped cross-entropy plus `l2 * ||weights||^2` (biases are not
/// penalized), with its analytic gradient.
pub fn loss_and_grad(
    shape: &NetShape,
    theta: &[f64],
    features: &Matrix,
    labels: &[f64],
    l2: f64,
    eps: f64,
) -> (f64, Vec<f64>) {
    let n = features.n_rows();
    let nf = n as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; theta.len()];

    if shape.is_logistic() {
        for i in 0..n {
            let x = features.row(i);
            let p = sigmoid(dot(&theta[..shape.d], x) + theta[shape.d]);
            let y = labels[i];
            let pc = clamp(p, eps);
            loss += -y * pc.ln() - (1.0 - y) * (1.0 - pc).ln();
            // Saturated rows contribute a constant to the loss.
            if p > eps && p < 1.0 - eps {
                let dz = (p - y) / nf;
                for (g, &xv) in grad[..shape.d].iter_mut().zip(x) {
                    *g += dz * xv;
                }
                grad[shape.d] += dz;
            }
        }
        loss /= nf;
        for k in 0..shape.d {
            loss += l2 * theta[k] * theta[k];
            grad[k] += 2.0 * l2 * theta[k];
        }
        return (loss, grad);
    }

    let (o1, o2, o3) = shape.offsets();
    let w2_start = o1 + shape.h1;
    let mut h1 = vec![0.0; shape.h1];
    let mut h2 = vec![0.0; shape.h2];
    let mut dz2 = vec![0.0; shape.h2];
    for i in 0..n {
        let x = features.row(i);
        for (j, h) in h1.iter_mut().enumerate() {
            *h = (dot(&theta[j * shape.d..(j + 1) * shape.d], x) + theta[o1 + j]).tanh();
        }
        for (j, h) in h2.iter_mut().enumerate() {
            *h = (dot(&theta[w2_start + j * shape.h1..w2_start + (j + 1) * shape.h1], &h1)
                + theta[o2 + j])
                .tanh();
        }
        let p = sigmoid(dot(&theta[o3..o3 + shape.h2], &h2) + theta[o3 + shape.h2]);
        let y = labels[i];
        let pc = clamp(p, eps);
        loss += -y * pc.ln() - (1.0 - y) * (1.0 - pc).ln();
        if p <= eps || p >= 1.0 - eps {
            continue;
        }
        let dz3 = (p - y) / nf;
        for j in 0..shape.h2 {
            grad[o3 + j] += dz3 * h2[j];
            dz2[j] = dz3 * theta[o3 + j] * (1.0 - h2[j] * h2[j]);
        }
        grad[o3 + shape.h2] += dz3;
        for j in 0..shape.h2 {
            let row = w2_start + j * shape.h1;
            for k in 0..shape.h1 {
                grad[row + k] += dz2[j] * h1[k];
            }
            grad[o2 + j] += dz2[j];
        }
        for k in 0..shape.h1 {
            let mut dh1 = 0.0;
            for j in 0..shape.h2 {
                dh1 += dz2[j] * theta[w2_start + j * shape.h1 + k];
            }
            let dz1 = dh1 * (1.0 - h1[k] * h1[k]);
            let row = k * shape.d;
            for (g, &xv) in grad[row..row + shape.d].iter_mut().zip(x) {
                *g += dz1 * xv;
            }
            grad[o1 + k] += dz1;
        }
    }
    loss /= nf;
    // Weight blocks: w1, w2, w3; biases b1, b2, b3 are skipped.
    let weight_ranges = [(0, o1), (w2_start, o2), (o3, o3 + shape.h2)];
    for (lo, hi) in weight_ranges {
        for k in lo..hi {
            loss += l2 * theta[k] * theta[k];
            grad[k] += 2.0 * l2 * theta[k];
        }
    }
    (loss, grad)
}

fn descend(
    shape: &NetShape,
    theta: &mut Vec<f64>,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<()> {
    for epoch in 0..cfg.epochs {
        let (loss, grad) = loss_and_grad(shape, theta, &data.features, &data.labels, cfg.l2, cfg.clamp_eps);
        if !loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("loss is {loss}"),
            });
        }
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= cfg.learning_rate * g;
        }
    }
    Ok(())
}

fn to_predictor(shape: &NetShape, theta: &[f64]) -> Predictor {
    if shape.is_logistic() {
        Predictor::Linear {
            weights: theta[..shape.d].to_vec(),
            intercept: theta[shape.d],
        }
    } else {
        let (o1, o2, o3) = shape.offsets();
        let w2_start = o1 + shape.h1;
        Predictor::Mlp2 {
            w1: (0..shape.h1)
                .map(|i| theta[i * shape.d..(i + 1) * shape.d].to_vec())
                .collect(),
            b1: theta[o1..o1 + shape.h1].to_vec(),
            w2: (0..shape.h2)
                .map(|i| theta[w2_start + i * shape.h1..w2_start + (i + 1) * shape.h1].to_vec())
                .collect(),
            b2: theta[o2..o2 + shape.h2].to_vec(),
            w3: theta[o3..o3 + shape.h2].to_vec(),
            b3: theta[o3 + shape.h2],
        }
    }
}

fn from_predictor(p: &Predictor) -> Result<(NetShape, Vec<f64>)> {
    match p {
        Predictor::Linear { weights, intercept } => {
            let mut theta = weights.clone();
            theta.push(*intercept);
            Ok((NetShape::logistic(weights.len()), theta))
        }
        Predictor::Mlp2 {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
        } => {
            let h1 = w1.len();
            let h2 = w2.len();
            let d = w1.first().map_or(0, |r| r.len());
            let shape = NetShape::mlp(d, (h1, h2));
            let mut theta = Vec::with_capacity(shape.n_params());
            for row in w1 {
                theta.extend_from_slice(row);
            }
            theta.extend_from_slice(b1);
            for row in w2 {
                theta.extend_from_slice(row);
            }
            theta.extend_from_slice(b2);
            theta.extend_from_slice(w3);
            theta.push(*b3);
            if theta.len() != shape.n_params() {
                return Err(Error::invalid("inconsistent mlp parameter shapes"));
            }
            Ok((shape, theta))
        }
        _ => Err(Error::UnsupportedBaseline(
            "predictor has no trainable parameters".into(),
        )),
    }
}

/// Trains the initial model from scratch.
pub fn train_f0(train: &Dataset, cfg: &TrainConfig) -> Result<Predictor> {
    cfg.validate()?;
    train.validate()?;
    if train.n() == 0 {
        return Err(Error::invalid("training set is empty"));
    }
    let shape = match cfg.kind {
        ModelKind::Logistic => NetShape::logistic(train.d()),
        ModelKind::Mlp2 => NetShape::mlp(train.d(), cfg.hidden),
    };
    let mut theta = shape.init(cfg.seed);
    descend(&shape, &mut theta, train, cfg)?;
    Ok(to_predictor(&shape, &theta))
}

/// RT baseline: warm-start from the initial model's parameters and continue
/// training on the audit set. With zero epochs this is the identity.
pub fn retrain_baseline(f0: &Predictor, audit: &Dataset, cfg: &TrainConfig) -> Result<Predictor> {
    cfg.validate()?;
    audit.validate()?;
    let (shape, mut theta) = from_predictor(f0)?;
    if shape.d != audit.d() {
        return Err(Error::invalid(format!(
            "model expects {} features but audit data has {}",
            shape.d,
            audit.d()
        )));
    }
    descend(&shape, &mut theta, audit, cfg)?;
    Ok(to_predictor(&shape, &theta))
}

/// SS baseline: one model per subgroup, trained on that subgroup's audit
/// rows. Prediction dispatches on group membership, which means the grouped
/// predictor needs the sensitive group columns at inference time.
#[derive(Clone, Debug)]
pub struct GroupedPredictor {
    pub parts: Vec<(GroupSpec, Predictor)>,
}

impl GroupedPredictor {
    /// Scores every row by its group's model. Rows must belong to exactly
    /// one declared group.
    pub fn scores_for(&self, data: &Dataset) -> Result<Vec<f64>> {
        let mut out = vec![f64::NAN; data.n()];
        for (spec, model) in &self.parts {
            let mask = spec.mask(data)?;
            for i in 0..data.n() {
                if mask[i] {
                    if !out[i].is_nan() {
                        return Err(Error::invalid(format!(
                            "row {i} matched by more than one subgroup"
                        )));
                    }
                    out[i] = model.score_features(data.features.row(i))?;
                }
            }
        }
        if let Some(i) = out.iter().position(|v| v.is_nan()) {
            return Err(Error::invalid(format!("row {i} matched by no subgroup")));
        }
        Ok(out)
    }
}

pub fn subgroup_specific_baseline(
    audit: &Dataset,
    groups: &[GroupSpec],
    cfg: &TrainConfig,
) -> Result<GroupedPredictor> {
    cfg.validate()?;
    audit.validate()?;
    if groups.is_empty() {
        return Err(Error::invalid("no subgroups declared"));
    }
    // The groups must partition the audit rows.
    let masks: Vec<Vec<bool>> = groups
        .iter()
        .map(|g| g.mask(audit))
        .collect::<Result<Vec<_>>>()?;
    for i in 0..audit.n() {
        let hits = masks.iter().filter(|m| m[i]).count();
        if hits != 1 {
            return Err(Error::invalid(format!(
                "row {i} belongs to {hits} subgroups; groups must partition the rows"
            )));
        }
    }
    let mut parts = Vec::with_capacity(groups.len());
    for (k, (g, mask)) in groups.iter().zip(&masks).enumerate() {
        let rows: Vec<usize> = (0..audit.n()).filter(|&i| mask[i]).collect();
        if rows.is_empty() {
            return Err(Error::EmptyGroup(g.name.clone()));
        }
        let sub = audit.subset(&rows);
        let mut sub_cfg = cfg.clone();
        sub_cfg.seed = cfg.seed.wrapping_add(k as u64 + 1);
        parts.push((g.clone(), train_f0(&sub, &sub_cfg)?));
    }
    Ok(GroupedPredictor { parts })
}
