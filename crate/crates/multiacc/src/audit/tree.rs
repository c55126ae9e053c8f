//! Greedy variance-reduction regression tree auditor.

use crate::error::Result;

use super::{AuditSample, AuditorConfig, Hypothesis, TreeNode};

const MIN_GAIN: f64 = 1e-12;

/// Fits a regression tree to the restricted target by greedy variance
/// reduction. Leaf values are target means. Deterministic: candidate splits
/// are scanned feature index ascending, thresholds ascending, and a later
/// candidate replaces the incumbent only on strictly larger gain, so ties
/// resolve to the lowest feature index, then the lowest threshold.
pub fn fit_tree(sample: &AuditSample, cfg: &AuditorConfig) -> Result<Hypothesis> {
    sample.validate()?;
    let target = sample.restricted_target();
    let mut idx: Vec<usize> = (0..sample.n()).collect();
    let root = build(sample, &target, &mut idx, cfg.tree_max_depth);
    Ok(Hypothesis::Tree {
        root,
        bound: cfg.output_bound,
    })
}

fn build(sample: &AuditSample, target: &[f64], idx: &mut [usize], depth_left: usize) -> TreeNode {
    let m = idx.len();
    let sum: f64 = idx.iter().map(|&j| target[j]).sum();
    let mean = sum / m as f64;
    let sse: f64 = idx.iter().map(|&j| (target[j] - mean).powi(2)).sum();
    if depth_left == 0 || m < 2 || sse <= MIN_GAIN {
        return TreeNode::Leaf { leaf: mean };
    }

    let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
    let mut order: Vec<usize> = Vec::with_capacity(m);
    for f in 0..sample.features.n_cols() {
        order.clear();
        order.extend_from_slice(idx);
        order.sort_unstable_by(|&a, &b| {
            sample.feature_row(a)[f]
                .partial_cmp(&sample.feature_row(b)[f])
                .expect("features are finite")
        });
        // parent score sum^2/m is constant, so maximize the children score.
        let mut left_sum = 0.0;
        let mut left_n = 0usize;
        for w in 0..m - 1 {
            left_sum += target[order[w]];
            left_n += 1;
            let lo = sample.feature_row(order[w])[f];
            let hi = sample.feature_row(order[w + 1])[f];
            if hi <= lo {
                continue; // no boundary between equal values
            }
            let right_sum = sum - left_sum;
            let right_n = m - left_n;
            let score = left_sum * left_sum / left_n as f64
                + right_sum * right_sum / right_n as f64
                - sum * sum / m as f64;
            if score > best.map_or(MIN_GAIN, |(g, _, _)| g) {
                best = Some((score, f, 0.5 * (lo + hi)));
            }
        }
    }

    match best {
        None => TreeNode::Leaf { leaf: mean },
        Some((_, feature, threshold)) => {
            let split_at = partition_in_place(sample, idx, feature, threshold);
            let (left_idx, right_idx) = idx.split_at_mut(split_at);
            let left = build(sample, target, left_idx, depth_left - 1);
            let right = build(sample, target, right_idx, depth_left - 1);
            TreeNode::Split {
                feature,
                threshold,
                left: Box::new(left),
                right: Box::new(right),
            }
        }
    }
}

/// Stable partition: rows with `x[feature] <= threshold` first.
fn partition_in_place(
    sample: &AuditSample,
    idx: &mut [usize],
    feature: usize,
    threshold: f64,
) -> usize {
    let mut left: Vec<usize> = Vec::with_capacity(idx.len());
    let mut right: Vec<usize> = Vec::with_capacity(idx.len());
    for &j in idx.iter() {
        if sample.feature_row(j)[feature] <= threshold {
            left.push(j);
        } else {
            right.push(j);
        }
    }
    let split = left.len();
    idx[..split].copy_from_slice(&left);
    idx[split..].copy_from_slice(&right);
    split
}
