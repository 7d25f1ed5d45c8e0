//! Concept activation vectors.
//!
//! A CAV is the unit normal of a linear probe separating the activations of
//! concept-positive examples from concept-negative ones at a fixed layer,
//! oriented toward the positives. The probe's held-out accuracy is kept with
//! the vector because the direction is only meaningful when the concept is
//! linearly separable at that layer.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::stage_rng;
use crate::tensor_net::Network;

pub const DEFAULT_GATE_THRESHOLD: f64 = 0.85;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cav {
    pub layer: usize,
    /// Unit vector in the raw activation space of `layer`.
    pub direction: Vec<f64>,
    pub probe_accuracy: f64,
    /// Probe offset in raw space, scaled like `direction`: the probe's
    /// decision score is `direction . a + bias`.
    pub bias: f64,
}

/// Per-feature scaling applied before the probe is fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scaling {
    /// Center, then divide by the pooled within-class standard deviation.
    WithinClass,
    /// Center, then divide by the overall standard deviation.
    Overall,
    /// Center, then divide every feature by one common scale (the root mean
    /// feature variance). Preserves the geometry of the activation space.
    Isotropic,
    /// Center only.
    None,
}

/// L2-regularized logistic regression settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub scaling: Scaling,
    pub l2: f64,
    pub holdout_fraction: f64,
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            scaling: Scaling::Isotropic,
            l2: 1e-3,
            holdout_fraction: 0.3,
            gradient_tolerance: 1e-6,
            max_iterations: 10_000,
        }
    }
}

/// One flattened activation row per signal at trace entry `layer`.
pub fn collect_activations<S: AsRef<[f64]> + Sync>(
    net: &Network,
    signals: &[S],
    layer: usize,
) -> Result<Vec<Vec<f64>>> {
    signals
        .par_iter()
        .map(|s| net.activation(s.as_ref(), layer))
        .collect()
}

struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    /// Per-feature mean over all rows and a scale chosen by `scaling`.
    /// Rows `..n_pos` are positives. Constant features keep scale 1.
    fn fit(rows: &[&[f64]], n_pos: usize, scaling: Scaling) -> Self {
        let d = rows[0].len();
        let n = rows.len() as f64;
        let centroid = |part: &[&[f64]]| -> Vec<f64> {
            let mut m = vec![0.0; d];
            for r in part {
                for (mi, v) in m.iter_mut().zip(*r) {
                    *mi += v;
                }
            }
            m.iter_mut().for_each(|mi| *mi /= part.len() as f64);
            m
        };
        let mean = centroid(rows);
        if scaling == Scaling::None {
            return Self {
                mean,
                scale: vec![1.0; d],
            };
        }
        let (pos, neg) = rows.split_at(n_pos);
        let groups = match scaling {
            Scaling::WithinClass => vec![(pos, centroid(pos)), (neg, centroid(neg))],
            _ => vec![(rows, mean.clone())],
        };
        let mut var = vec![0.0; d];
        for (part, m) in groups {
            for r in part {
                for ((s, v), mi) in var.iter_mut().zip(*r).zip(&m) {
                    *s += (v - mi) * (v - mi);
                }
            }
        }
        if scaling == Scaling::Isotropic {
            let rms = (var.iter().sum::<f64>() / (n * d as f64)).sqrt();
            let mag = (mean.iter().map(|m| m * m).sum::<f64>() / d as f64).sqrt();
            let common = if rms > 1e-12 * (1.0 + mag) && rms.is_finite() { rms } else { 1.0 };
            return Self {
                mean,
                scale: vec![common; d],
            };
        }
        let scale = var
            .into_iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 * (1.0 + m.abs()) && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest eigenvalue of `[Z 1]^T [Z 1] / n` by power iteration.
fn gram_spectral_radius(z: &[Vec<f64>]) -> f64 {
    let d = z[0].len() + 1;
    let n = z.len() as f64;
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut next = vec![0.0; d];
        for row in z {
            let s = dot(row, &v[..d - 1]) + v[d - 1];
            for (o, x) in next.iter_mut().zip(row) {
                *o += s * x;
            }
            next[d - 1] += s;
        }
        next.iter_mut().for_each(|x| *x /= n);
        let norm = dot(&next, &next).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let converged = (norm - lambda).abs() <= 1e-9 * norm;
        lambda = norm;
        v = next.into_iter().map(|x| x / norm).collect();
        if converged {
            break;
        }
    }
    lambda
}

/// Full-batch gradient descent on the mean logistic loss plus
/// `l2 / 2 * |w|^2` (the intercept is not penalized).
fn fit_logistic(z: &[Vec<f64>], y: &[f64], cfg: &ProbeConfig) -> (Vec<f64>, f64) {
    let d = z[0].len();
    let n = z.len() as f64;
    let lipschitz = 0.25 * gram_spectral_radius(z) * 1.05 + cfg.l2;
    let step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut gw = vec![0.0; d];
    for _ in 0..cfg.max_iterations {
        gw.iter_mut().zip(&w).for_each(|(g, wi)| *g = cfg.l2 * wi);
        let mut gb = 0.0;
        for (row, &yi) in z.iter().zip(y) {
            let r = (sigmoid(dot(row, &w) + b) - yi) / n;
            for (g, x) in gw.iter_mut().zip(row) {
                *g += r * x;
            }
            gb += r;
        }
        let norm = (dot(&gw, &gw) + gb * gb).sqrt();
        if norm < cfg.gradient_tolerance {
            break;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= step * g;
        }
        b -= step * gb;
    }
    (w, b)
}

/// Fits the concept probe on a seeded 70/30 split of each side and returns
/// the CAV for `layer` with its held-out accuracy.
pub fn train_probe(
    pos: &[Vec<f64>],
    neg: &[Vec<f64>],
    layer: usize,
    seed: u64,
    cfg: &ProbeConfig,
) -> Result<Cav> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::domain("probe needs positive and negative examples"));
    }
    let d = pos[0].len();
    if d == 0 || pos.iter().chain(neg).any(|r| r.len() != d) {
        return Err(Error::domain("activation rows must share a non-zero width"));
    }
    if !(0.0..1.0).contains(&cfg.holdout_fraction) {
        return Err(Error::config("holdout fraction must lie in [0, 1)"));
    }

    // The permutation depends only on the side's size, so swapping the two
    // sides swaps their partitions.
    let partition = |rows: &[Vec<f64>]| {
        let mut idx: Vec<usize> = (0..rows.len()).collect();
        idx.shuffle(&mut stage_rng(seed, "probe-holdout", rows.len() as u64));
        let held = ((rows.len() as f64 * cfg.holdout_fraction).round() as usize).min(rows.len() - 1);
        let (h, t) = idx.split_at(held);
        (t.to_vec(), h.to_vec())
    };
    let (pos_train, pos_held) = partition(pos);
    let (neg_train, neg_held) = partition(neg);

    let train_rows: Vec<&[f64]> = pos_train
        .iter()
        .map(|&i| pos[i].as_slice())
        .chain(neg_train.iter().map(|&i| neg[i].as_slice()))
        .collect();
    let labels: Vec<f64> = std::iter::repeat_n(1.0, pos_train.len())
        .chain(std::iter::repeat_n(0.0, neg_train.len()))
        .collect();
    let standardizer = Standardizer::fit(&train_rows, pos_train.len(), cfg.scaling);
    let z: Vec<Vec<f64>> = train_rows.iter().map(|r| standardizer.apply(r)).collect();
    let (w, b) = fit_logistic(&z, &labels, cfg);

    // score(a) = w . (a - mean) / scale + b = raw . a + raw_bias
    let raw: Vec<f64> = w.iter().zip(&standardizer.scale).map(|(wi, s)| wi / s).collect();
    let raw_bias = b - dot(&raw, &standardizer.mean);
    let norm = dot(&raw, &raw).sqrt();
    let (direction, bias) = if norm > 0.0 && norm.is_finite() {
        (raw.iter().map(|v| v / norm).collect(), raw_bias / norm)
    } else {
        (fallback_direction(&train_rows, pos_train.len(), d), 0.0)
    };

    let held: Vec<(&[f64], bool)> = pos_held
        .iter()
        .map(|&i| (pos[i].as_slice(), true))
        .chain(neg_held.iter().map(|&i| (neg[i].as_slice(), false)))
        .collect();
    let eval: Vec<(&[f64], bool)> = if held.is_empty() {
        train_rows.iter().zip(&labels).map(|(r, y)| (*r, *y == 1.0)).collect()
    } else {
        held
    };
    let correct = eval
        .iter()
        .filter(|(row, is_pos)| {
            let score = dot(&w, &standardizer.apply(row)) + b;
            (score > 0.0) == *is_pos
        })
        .count();

    Ok(Cav {
        layer,
        direction,
        probe_accuracy: correct as f64 / eval.len() as f64,
        bias,
    })
}

/// Direction used when the probe weights vanish (no usable feature
/// variance): the centroid difference, or the normalized all-ones vector.
fn fallback_direction(rows: &[&[f64]], n_pos: usize, d: usize) -> Vec<f64> {
    let mut diff = vec![0.0; d];
    let n_neg = rows.len() - n_pos;
    for (i, r) in rows.iter().enumerate() {
        let w = if i < n_pos { 1.0 / n_pos as f64 } else { -1.0 / n_neg as f64 };
        for (o, v) in diff.iter_mut().zip(*r) {
            *o += w * v;
        }
    }
    let norm = dot(&diff, &diff).sqrt();
    if norm > 0.0 && norm.is_finite() {
        diff.into_iter().map(|v| v / norm).collect()
    } else {
        vec![1.0 / (d as f64).sqrt(); d]
    }
}

/// Whether the concept is separable enough at the probe's layer for TCAV
/// scores built on this CAV to be trusted.
pub fn separability_gate(cav: &Cav, threshold: f64) -> bool {
    cav.probe_accuracy >= threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use rand_distr::{Distribution, Normal};

    fn gaussian(center: f64, sd: f64, n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        let normal = Normal::new(0.0, sd).unwrap();
        (0..n)
            .map(|_| {
                (0..d)
                    .map(|j| normal.sample(&mut rng) + if j == 0 { center } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
    }

    #[test]
    fn separated_gaussians() {
        let pos = gaussian(3.0, 0.1f64.sqrt(), 200, 10, 1);
        let neg = gaussian(-3.0, 0.1f64.sqrt(), 200, 10, 2);
        let cav = train_probe(&pos, &neg, 0, 3, &ProbeConfig::default()).unwrap();
        assert!(cav.probe_accuracy >= 0.99);
        assert!(cav.direction[0] >= 0.99, "direction {:?}", cav.direction);
        assert!((dot(&cav.direction, &cav.direction) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orientation_toward_positive_centroid() {
        let pos = gaussian(1.0, 0.5, 80, 4, 5);
        let neg = gaussian(-0.5, 0.5, 80, 4, 6);
        let cav = train_probe(&pos, &neg, 2, 0, &ProbeConfig::default()).unwrap();
        let centroid = |rows: &[Vec<f64>]| -> Vec<f64> {
            (0..4).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64).collect()
        };
        let diff: Vec<f64> = centroid(&pos).iter().zip(centroid(&neg)).map(|(a, b)| a - b).collect();
        assert!(dot(&cav.direction, &diff) > 0.0);
        assert_eq!(cav.layer, 2);
    }

    #[test]
    fn swapped_labels_negate_direction() {
        let pos = gaussian(1.0, 1.0, 100, 5, 7);
        let neg = gaussian(-1.0, 1.0, 100, 5, 8);
        let a = train_probe(&pos, &neg, 0, 4, &ProbeConfig::default()).unwrap();
        let b = train_probe(&neg, &pos, 0, 4, &ProbeConfig::default()).unwrap();
        assert!(cosine(&a.direction, &b.direction) < -0.99);
    }

    #[test]
    fn scaling_activations_preserves_probe() {
        let pos = gaussian(0.7, 1.0, 100, 6, 9);
        let neg = gaussian(-0.7, 1.0, 100, 6, 10);
        let scale = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            rows.iter().map(|r| r.iter().map(|v| v * 250.0).collect()).collect()
        };
        let a = train_probe(&pos, &neg, 0, 1, &ProbeConfig::default()).unwrap();
        let b = train_probe(&scale(&pos), &scale(&neg), 0, 1, &ProbeConfig::default()).unwrap();
        assert_eq!(a.probe_accuracy, b.probe_accuracy);
        assert!(cosine(&a.direction, &b.direction) >= 0.99);
    }

    #[test]
    fn identical_data_is_chance_with_unit_direction() {
        let rows = vec![vec![1.0, 2.0, 3.0]; 40];
        let cav = train_probe(&rows, &rows, 0, 0, &ProbeConfig::default()).unwrap();
        assert!((cav.probe_accuracy - 0.5).abs() < 1e-12);
        assert!((dot(&cav.direction, &cav.direction) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_feature_is_harmless() {
        let mut pos = gaussian(2.0, 0.3, 50, 3, 11);
        let mut neg = gaussian(-2.0, 0.3, 50, 3, 12);
        for r in pos.iter_mut().chain(neg.iter_mut()) {
            r[2] = 5.0;
        }
        let cav = train_probe(&pos, &neg, 0, 0, &ProbeConfig::default()).unwrap();
        assert_eq!(cav.direction[2], 0.0);
        assert!(cav.probe_accuracy >= 0.99);
    }

    #[test]
    fn deterministic_given_seed() {
        let pos = gaussian(0.2, 1.0, 60, 4, 13);
        let neg = gaussian(-0.2, 1.0, 60, 4, 14);
        let a = train_probe(&pos, &neg, 0, 21, &ProbeConfig::default()).unwrap();
        let b = train_probe(&pos, &neg, 0, 21, &ProbeConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_shapes() {
        let cfg = ProbeConfig::default();
        assert!(train_probe(&[], &[vec![1.0]], 0, 0, &cfg).is_err());
        assert!(train_probe(&[vec![1.0]], &[vec![1.0, 2.0]], 0, 0, &cfg).is_err());
    }

    #[test]
    fn gate() {
        let cav = |acc| Cav {
            layer: 0,
            direction: vec![1.0],
            probe_accuracy: acc,
            bias: 0.0,
        };
        assert!(separability_gate(&cav(0.95), DEFAULT_GATE_THRESHOLD));
        assert!(!separability_gate(&cav(0.55), DEFAULT_GATE_THRESHOLD));
        assert!(separability_gate(&cav(0.0), 0.0));
    }
}
