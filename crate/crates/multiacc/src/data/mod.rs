//! Dataset model, CSV ingestion, deterministic splits, and synthetic
//! generators.

mod csv_io;
mod synth;

pub use csv_io::{load_csv, write_csv};
pub use synth::{generate_adversarial, generate_semisynth, AdversarialFixture, SynthGroup, SynthSpec};

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A categorical per-row annotation used only for evaluation, never exposed
/// to trainers or auditors as a feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupColumn {
    pub name: String,
    pub values: Vec<String>,
}

/// Feature matrix with binary labels and evaluation-only group columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<f64>,
    pub feature_names: Vec<String>,
    pub groups: Vec<GroupColumn>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Vec<f64>,
        feature_names: Vec<String>,
        groups: Vec<GroupColumn>,
        provenance: impl Into<String>,
    ) -> Result<Dataset> {
        let ds = Dataset {
            features,
            labels,
            feature_names,
            groups,
            provenance: provenance.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.features.n_rows()
    }

    pub fn d(&self) -> usize {
        self.features.n_cols()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.features.is_finite() {
            return Err(Error::invalid("features contain NaN or Inf"));
        }
        if self.labels.len() != self.n() {
            return Err(Error::invalid("labels not aligned with features"));
        }
        if self.labels.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        if self.feature_names.len() != self.d() {
            return Err(Error::invalid("feature names not aligned with columns"));
        }
        for g in &self.groups {
            if g.values.len() != self.n() {
                return Err(Error::invalid(format!(
                    "group column '{}' not aligned with rows",
                    g.name
                )));
            }
        }
        Ok(())
    }

    pub fn group_column(&self, name: &str) -> Option<&GroupColumn> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// New dataset holding the given rows, in order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            groups: self
                .groups
                .iter()
                .map(|g| GroupColumn {
                    name: g.name.clone(),
                    values: rows.iter().map(|&i| g.values[i].clone()).collect(),
                })
                .collect(),
            provenance: self.provenance.clone(),
        }
    }
}

/// Seeded permutation split into train/audit/test parts. Parts are disjoint;
/// fractions must be positive and sum to at most 1.
pub fn split(
    dataset: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let (ft, fa, fe) = fractions;
    if !(ft > 0.0 && fa > 0.0 && fe > 0.0) {
        return Err(Error::invalid("split fractions must be positive"));
    }
    if ft + fa + fe > 1.0 + 1e-9 {
        return Err(Error::invalid("split fractions sum to more than 1"));
    }
    let n = dataset.n();
    let n_train = (ft * n as f64).round() as usize;
    let n_audit = (fa * n as f64).round() as usize;
    let n_test = if (ft + fa + fe - 1.0).abs() < 1e-9 {
        n.saturating_sub(n_train + n_audit)
    } else {
        (fe * n as f64).round() as usize
    };
    if n_train == 0 || n_audit == 0 || n_test == 0 || n_train + n_audit + n_test > n {
        return Err(Error::invalid(format!(
            "split sizes ({n_train}, {n_audit}, {n_test}) invalid for n = {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    let train = dataset.subset(&perm[..n_train]);
    let audit = dataset.subset(&perm[n_train..n_train + n_audit]);
    let test = dataset.subset(&perm[n_train + n_audit..n_train + n_audit + n_test]);
    Ok((train, audit, test))
}

/// CSV schema: the label column name, the prefix marking group columns, and
/// the one-hot category map for string-valued columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub label_column: String,
    pub group_prefix: String,
    #[serde(default)]
    pub one_hot: BTreeMap<String, Vec<String>>,
}

impl Default for Schema {
    fn default() -> Schema {
        Schema {
            label_column: "label".to_string(),
            group_prefix: "group:".to_string(),
            one_hot: BTreeMap::new(),
        }
    }
}

impl Schema {
    pub fn load(path: &Path) -> Result<Schema> {
        let bytes = std::fs::read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}
