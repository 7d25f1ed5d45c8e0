//! Dataset preparation and supervised training.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, stage_rng};
use crate::tensor_net::{argmax, cross_entropy, Network};
use crate::vibration_sim::{bpfi, bpfo, simulate_concept, BearingGeometry, ConceptSpec, Interval, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultType {
    Healthy,
    Inner,
    Outer,
}

impl FaultType {
    pub const ALL: [FaultType; 3] = [FaultType::Healthy, FaultType::Inner, FaultType::Outer];

    pub fn label(self) -> usize {
        match self {
            FaultType::Healthy => 0,
            FaultType::Inner => 1,
            FaultType::Outer => 2,
        }
    }

    pub fn from_label(label: usize) -> Option<FaultType> {
        Self::ALL.get(label).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FaultType::Healthy => "healthy",
            FaultType::Inner => "inner",
            FaultType::Outer => "outer",
        }
    }
}

impl fmt::Display for FaultType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FaultType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::config(format!("unknown fault label {s:?}; valid labels: healthy, inner, outer")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMeta {
    pub rotation_speed_rpm: f64,
    pub fault_type: FaultType,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub samples: Vec<f64>,
    pub label: usize,
    pub meta: SegmentMeta,
}

/// Labeled, equal-length signal segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub segment_length: usize,
    pub sample_rate: f64,
    pub segments: Vec<Segment>,
}

impl Dataset {
    pub fn new(segment_length: usize, sample_rate: f64, segments: Vec<Segment>) -> Result<Self> {
        if segment_length == 0 {
            return Err(Error::domain("segment length must be positive"));
        }
        for (i, s) in segments.iter().enumerate() {
            if s.samples.len() != segment_length {
                return Err(Error::domain(format!(
                    "segment {i} has {} samples, expected {segment_length}",
                    s.samples.len()
                )));
            }
            if s.label != s.meta.fault_type.label() {
                return Err(Error::domain(format!("segment {i} label disagrees with its fault type")));
            }
        }
        Ok(Self {
            segment_length,
            sample_rate,
            segments,
        })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            segment_length: self.segment_length,
            sample_rate: self.sample_rate,
            segments: indices.iter().map(|&i| self.segments[i].clone()).collect(),
        }
    }

    pub fn class_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for s in &self.segments {
            if s.label < num_classes {
                counts[s.label] += 1;
            }
        }
        counts
    }
}

/// Non-overlapping windows of length `d`; the trailing remainder is dropped.
pub fn segment(signal: &Signal, d: usize) -> Result<Vec<Vec<f64>>> {
    if d == 0 {
        return Err(Error::domain("segment length must be at least 1"));
    }
    Ok(signal.samples.chunks_exact(d).map(<[f64]>::to_vec).collect())
}

/// Affine min-max map onto `[-1, 1]`. Constant input maps to zeros.
pub fn normalize(segment: &[f64]) -> Vec<f64> {
    let (min, max) = segment
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = max - min;
    if !(range > 0.0) {
        return vec![0.0; segment.len()];
    }
    if min == -1.0 && max == 1.0 {
        return segment.to_vec();
    }
    segment
        .iter()
        .map(|&v| {
            if v == max {
                1.0
            } else {
                2.0 * ((v - min) / range) - 1.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded 60/20/20 partition of `n` items. Validation and test sizes are
/// `floor(n / 5)`; the remainder goes to training.
pub fn split_indices(n: usize, seed: u64) -> Result<SplitIndices> {
    if n < 5 {
        return Err(Error::config(format!("need at least 5 segments to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let holdout = n / 5;
    let val = order[..holdout].to_vec();
    let test = order[holdout..2 * holdout].to_vec();
    let train = order[2 * holdout..].to_vec();
    Ok(SplitIndices { train, val, test })
}

pub fn split(dataset: &Dataset, seed: u64) -> Result<SplitIndices> {
    split_indices(dataset.len(), seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain mini-batch gradient descent with a fixed step.
    Sgd,
    Adam {
        #[serde(default = "adam_beta1")]
        beta1: f64,
        #[serde(default = "adam_beta2")]
        beta2: f64,
        #[serde(default = "adam_eps")]
        eps: f64,
    },
}

fn adam_beta1() -> f64 {
    0.9
}
fn adam_beta2() -> f64 {
    0.999
}
fn adam_eps() -> f64 {
    1e-8
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: adam_beta1(),
            beta2: adam_beta2(),
            eps: adam_eps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.05,
            optimizer: Optimizer::Sgd,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be >= 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be finite and non-negative"));
        }
        Ok(())
    }
}

struct OptimizerState {
    kind: Optimizer,
    learning_rate: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    fn new(kind: Optimizer, learning_rate: f64, params: usize) -> Self {
        let moments = if matches!(kind, Optimizer::Adam { .. }) { params } else { 0 };
        Self {
            kind,
            learning_rate,
            step: 0,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
        }
    }

    fn apply(&mut self, net: &mut Network, gradient: &[f64]) {
        let lr = self.learning_rate;
        if lr == 0.0 {
            return;
        }
        match self.kind {
            Optimizer::Sgd => net.update_params(gradient, &mut |_, p, g| {
                for (w, d) in p.iter_mut().zip(g) {
                    *w -= lr * d;
                }
            }),
            Optimizer::Adam { beta1, beta2, eps } => {
                self.step += 1;
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                let (m, v) = (&mut self.m, &mut self.v);
                net.update_params(gradient, &mut |offset, p, g| {
                    for (j, (w, d)) in p.iter_mut().zip(g).enumerate() {
                        let k = offset + j;
                        m[k] = beta1 * m[k] + (1.0 - beta1) * d;
                        v[k] = beta2 * v[k] + (1.0 - beta2) * d * d;
                        *w -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
                    }
                });
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss.
    pub best: Network,
    /// Index into `history` of the selected epoch.
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Mean loss and accuracy over `indices`, reduced in index order.
pub fn loss_and_accuracy(net: &Network, data: &Dataset, indices: &[usize]) -> Result<(f64, f64)> {
    if indices.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let per_example: Vec<(f64, bool)> = indices
        .par_iter()
        .map(|&i| {
            let s = &data.segments[i];
            net.logits(&s.samples)
                .map(|z| (cross_entropy(&z, s.label), argmax(&z) == s.label))
        })
        .collect::<Result<_>>()?;
    let n = indices.len() as f64;
    let loss = per_example.iter().map(|p| p.0).sum::<f64>() / n;
    let correct = per_example.iter().filter(|p| p.1).count() as f64;
    Ok((loss, correct / n))
}

/// Mini-batch training on `splits.train`; returns the checkpoint with the
/// lowest validation loss (earliest on ties) and the per-epoch history.
pub fn train(net: &Network, data: &Dataset, splits: &SplitIndices, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if splits.train.is_empty() {
        return Err(Error::config("training split is empty"));
    }
    let num_classes = net.num_classes();
    if let Some(s) = data.segments.iter().find(|s| s.label >= num_classes) {
        return Err(Error::domain(format!("label {} out of range for {num_classes} classes", s.label)));
    }

    let mut net = net.clone();
    let mut optimizer = OptimizerState::new(cfg.optimizer, cfg.learning_rate, net.param_count());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Network)> = None;
    let mut order = splits.train.clone();

    for epoch in 0..cfg.epochs {
        order.copy_from_slice(&splits.train);
        order.shuffle(&mut stage_rng(cfg.seed, "train-shuffle", epoch as u64));
        for batch in order.chunks(cfg.batch_size) {
            let inputs: Vec<&[f64]> = batch.iter().map(|&i| data.segments[i].samples.as_slice()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| data.segments[i].label).collect();
            let lg = net.grad_loss_wrt_params(&inputs, &labels)?;
            if !lg.loss.is_finite() || lg.gradient.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch, loss: lg.loss });
            }
            optimizer.apply(&mut net, &lg.gradient);
        }

        let (train_loss, train_acc) = loss_and_accuracy(&net, data, &splits.train)?;
        if !train_loss.is_finite() {
            return Err(Error::Divergence { epoch, loss: train_loss });
        }
        let (val_loss, val_acc) = if splits.val.is_empty() {
            (train_loss, train_acc)
        } else {
            loss_and_accuracy(&net, data, &splits.val)?
        };
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch, loss: val_loss });
        }
        log::info!(
            "epoch {epoch}: train loss {train_loss:.4} acc {train_acc:.3}, val loss {val_loss:.4} acc {val_acc:.3}"
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            train_acc,
            val_acc,
        });
        if best.as_ref().is_none_or(|(_, loss, _)| val_loss < *loss) {
            best = Some((epoch, val_loss, net.clone()));
        }
    }

    let (best_epoch, _, best) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best,
        best_epoch,
        history,
    })
}

/// `counts[i][j]`: examples of true class `i` predicted as `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if counts.iter().any(|r| r.len() != n) {
            return Err(Error::domain("confusion matrix must be square"));
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.correct() as f64 / t as f64,
        }
    }

    pub fn row_total(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    /// Fraction of class `class` predicted correctly; `None` if the class is absent.
    pub fn recall(&self, class: usize) -> Option<f64> {
        match self.row_total(class) {
            0 => None,
            t => Some(self.counts[class][class] as f64 / t as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion_matrix: ConfusionMatrix,
}

pub fn evaluate(net: &Network, data: &Dataset, indices: &[usize]) -> Result<Evaluation> {
    let c = net.num_classes();
    let predictions: Vec<(usize, usize)> = indices
        .par_iter()
        .map(|&i| {
            let s = data
                .segments
                .get(i)
                .ok_or_else(|| Error::domain(format!("index {i} out of range")))?;
            Ok((s.label, argmax(&net.logits(&s.samples)?)))
        })
        .collect::<Result<_>>()?;
    let mut cm = ConfusionMatrix::new(c);
    for (truth, pred) in predictions {
        if truth >= c {
            return Err(Error::domain(format!("label {truth} out of range for {c} classes")));
        }
        cm.counts[truth][pred] += 1;
    }
    Ok(Evaluation {
        accuracy: cm.accuracy(),
        confusion_matrix: cm,
    })
}

/// One class of a synthetic task.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub fault_type: FaultType,
    pub rotation_speed_rpm: f64,
    pub concept: ConceptSpec,
    pub count: usize,
}

fn check_class_specs(classes: &[ClassSpec]) -> Result<()> {
    let first = classes.first().ok_or_else(|| Error::config("synthetic task needs classes"))?;
    for c in classes {
        c.concept.validate()?;
        if c.concept.length != first.concept.length || c.concept.sample_rate != first.concept.sample_rate {
            return Err(Error::config("all classes must share length and sample rate"));
        }
        match c.fault_type {
            FaultType::Healthy => {
                if c.concept.a_range != Interval::point(0.0) {
                    return Err(Error::config("healthy class must be pure noise (amplitude 0)"));
                }
            }
            _ => {
                if c.concept.target_f_char.is_none() {
                    return Err(Error::config(format!("{} class needs a fixed f_char", c.fault_type)));
                }
            }
        }
    }
    for (i, a) in classes.iter().enumerate() {
        for b in &classes[i + 1..] {
            if a.fault_type == FaultType::Healthy
                || b.fault_type == FaultType::Healthy
                || a.fault_type == b.fault_type
                || a.rotation_speed_rpm != b.rotation_speed_rpm
            {
                continue;
            }
            let (fa, fb) = (a.concept.target_f_char.unwrap(), b.concept.target_f_char.unwrap());
            let band = a.concept.exclusion_band.max(b.concept.exclusion_band);
            if (fa - fb).abs() <= band * fa.max(fb) {
                return Err(Error::config(format!(
                    "{} ({fa:.3} Hz) and {} ({fb:.3} Hz) at {} rpm overlap within the exclusion band",
                    a.fault_type, b.fault_type, a.rotation_speed_rpm
                )));
            }
        }
    }
    Ok(())
}

/// Simulates and normalizes `count` segments per class.
pub fn make_synthetic_task(classes: &[ClassSpec], seed: u64) -> Result<Dataset> {
    check_class_specs(classes)?;
    let length = classes[0].concept.length;
    let sample_rate = classes[0].concept.sample_rate;
    let mut segments = Vec::new();
    for (ci, class) in classes.iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, "synthetic-class", ci as u64));
        let spec = &class.concept;
        for i in 0..class.count {
            let f_char = spec
                .target_f_char
                .unwrap_or_else(|| spec.f_char_interval.sample(&mut rng));
            let params = spec.draw_params(f_char, &mut rng);
            let noise_seed = rand::RngCore::next_u64(&mut rng);
            let signal = simulate_concept(&params, length, sample_rate, noise_seed)?;
            segments.push(Segment {
                samples: normalize(&signal.samples),
                label: class.fault_type.label(),
                meta: SegmentMeta {
                    rotation_speed_rpm: class.rotation_speed_rpm,
                    fault_type: class.fault_type,
                    source: format!("synthetic/{}/{}/{i}", class.fault_type, class.rotation_speed_rpm),
                },
            });
        }
    }
    Dataset::new(length, sample_rate, segments)
}

/// Healthy/inner/outer classes for each rotation speed: inner and outer
/// faults modulate at BPFI and BPFO of `geometry`, the healthy class is
/// noise only. `concept_for` builds the sampling ranges for a target
/// frequency.
pub fn bearing_task_classes(
    geometry: &BearingGeometry,
    rotation_speeds_rpm: &[f64],
    per_class: usize,
    concept_for: impl Fn(f64) -> ConceptSpec,
) -> Result<Vec<ClassSpec>> {
    let mut classes = Vec::new();
    for &rpm in rotation_speeds_rpm {
        let f_r = rpm / 60.0;
        let outer = bpfo(geometry, f_r)?;
        let inner = bpfi(geometry, f_r)?;
        let mut healthy = concept_for(outer).random_counterpart();
        healthy.a_range = Interval::point(0.0);
        classes.push(ClassSpec {
            fault_type: FaultType::Healthy,
            rotation_speed_rpm: rpm,
            concept: healthy,
            count: per_class,
        });
        classes.push(ClassSpec {
            fault_type: FaultType::Inner,
            rotation_speed_rpm: rpm,
            concept: concept_for(inner),
            count: per_class,
        });
        classes.push(ClassSpec {
            fault_type: FaultType::Outer,
            rotation_speed_rpm: rpm,
            concept: concept_for(outer),
            count: per_class,
        });
    }
    Ok(classes)
}
