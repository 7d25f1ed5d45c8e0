//! Concept sensitivities and TCAV scores.
//!
//! The sensitivity of class `c` to a concept at layer `l` is the directional
//! derivative of logit `c` along the CAV. The TCAV score of an evaluation
//! set is the fraction of its signals with strictly positive sensitivity.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cav::{collect_activations, separability_gate, train_probe, Cav, ProbeConfig, DEFAULT_GATE_THRESHOLD};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, stage_rng};
use crate::stats::{mean, sample_std, welch_t_test, WelchTest};
use crate::tensor_net::Network;
use crate::training::{normalize, Dataset, FaultType};
use crate::vibration_sim::{sample_concept_set, ConceptSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSet {
    pub signals: Vec<Vec<f64>>,
    pub class_under_test: usize,
    pub fault_type: FaultType,
    pub rotation_speed_rpm: f64,
}

impl EvaluationSet {
    pub fn name(&self) -> String {
        format!("{}@{}rpm", self.fault_type, self.rotation_speed_rpm)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_cav(net: &Network, cav: &Cav) -> Result<()> {
    let shape = net
        .activation_shape(cav.layer)
        .ok_or_else(|| Error::domain(format!("CAV layer {} out of range for depth {}", cav.layer, net.depth())))?;
    if shape.size() != cav.direction.len() {
        return Err(Error::domain(format!(
            "CAV has {} components, layer {} has {} activations",
            cav.direction.len(),
            cav.layer,
            shape.size()
        )));
    }
    Ok(())
}

/// Directional derivative of logit `class` along `cav.direction` at `x`.
pub fn concept_sensitivity(net: &Network, cav: &Cav, x: &[f64], class: usize) -> Result<f64> {
    check_cav(net, cav)?;
    let g = net.grad_logit_wrt_activation(x, cav.layer, class)?;
    Ok(dot(&g, &cav.direction))
}

fn logit_gradients(net: &Network, signals: &[Vec<f64>], layer: usize, class: usize) -> Result<Vec<Vec<f64>>> {
    signals
        .par_iter()
        .map(|x| net.grad_logit_wrt_activation(x, layer, class))
        .collect()
}

fn score_from_gradients(gradients: &[Vec<f64>], direction: &[f64]) -> f64 {
    let positive = gradients.iter().filter(|g| dot(g, direction) > 0.0).count();
    positive as f64 / gradients.len() as f64
}

/// Fraction of `set` whose sensitivity to `cav` for `class` is strictly positive.
pub fn tcav_score(net: &Network, cav: &Cav, set: &EvaluationSet, class: usize) -> Result<f64> {
    if set.signals.is_empty() {
        return Err(Error::domain("evaluation set is empty"));
    }
    check_cav(net, cav)?;
    let grads = logit_gradients(net, &set.signals, cav.layer, class)?;
    Ok(score_from_gradients(&grads, &cav.direction))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TcavConfig {
    pub repetitions: usize,
    pub examples_per_side: usize,
    pub gate_threshold: f64,
    /// Trace index of the probed layer; `None` selects the input of the
    /// output layer.
    pub layer: Option<usize>,
    pub probe: ProbeConfig,
}

impl Default for TcavConfig {
    fn default() -> Self {
        Self {
            repetitions: 10,
            examples_per_side: 200,
            gate_threshold: DEFAULT_GATE_THRESHOLD,
            layer: None,
            probe: ProbeConfig::default(),
        }
    }
}

impl TcavConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 2 {
            return Err(Error::config("tcav needs at least 2 repetitions for the significance test"));
        }
        if self.examples_per_side < 2 {
            return Err(Error::config("tcav needs at least 2 examples per side"));
        }
        if !(0.0..=1.0).contains(&self.gate_threshold) {
            return Err(Error::config("gate threshold must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub score: f64,
    pub probe_accuracy: f64,
    pub gate_passed: bool,
    pub concept_seed: u64,
    pub probe_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcavReport {
    pub evaluation_set: String,
    pub class_under_test: usize,
    pub fault_type: FaultType,
    pub rotation_speed_rpm: f64,
    pub target_f_char: Option<f64>,
    pub layer: usize,
    pub examples_per_side: usize,
    pub evaluation_size: usize,
    pub gate_threshold: f64,
    pub scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub probe_accuracies: Vec<f64>,
    pub repetitions: Vec<Repetition>,
    pub random_scores: Vec<f64>,
    pub random_probe_accuracies: Vec<f64>,
    pub random_repetitions: Vec<Repetition>,
    /// False as soon as any concept repetition fails the separability gate.
    pub reliable: bool,
    pub status: String,
    pub significance: Option<WelchTest>,
    /// Concept CAVs in repetition order; stored separately from the JSON report.
    #[serde(skip)]
    pub cavs: Vec<Cav>,
}

pub const STATUS_OK: &str = "OK";
pub const STATUS_UNRELIABLE: &str = "UNRELIABLE";

impl TcavReport {
    pub fn p_value(&self) -> Option<f64> {
        self.significance.map(|s| s.p_value)
    }

    pub fn gate_failures(&self) -> usize {
        self.repetitions.iter().filter(|r| !r.gate_passed).count()
    }
}

/// Concept examples pass through the same min-max normalization as the
/// training segments before reaching the network.
fn concept_activations(net: &Network, spec: &ConceptSpec, count: usize, seed: u64, layer: usize) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let set = sample_concept_set(spec, count, seed)?;
    let prep = |signals: &[crate::vibration_sim::Signal]| -> Vec<Vec<f64>> {
        signals.iter().map(|s| normalize(&s.samples)).collect()
    };
    let pos = collect_activations(net, &prep(&set.positives), layer)?;
    let neg = collect_activations(net, &prep(&set.negatives), layer)?;
    Ok((pos, neg))
}

struct RunParts<'a> {
    net: &'a Network,
    gradients: &'a [Vec<f64>],
    layer: usize,
    cfg: &'a TcavConfig,
    base_seed: u64,
}

impl RunParts<'_> {
    fn repetitions(&self, spec: &ConceptSpec, stage: &str) -> Result<Vec<(Repetition, Cav)>> {
        let probe_stage = format!("{stage}-probe");
        (0..self.cfg.repetitions)
            .into_par_iter()
            .map(|r| {
                let concept_seed = derive_seed(self.base_seed, stage, r as u64);
                let probe_seed = derive_seed(self.base_seed, &probe_stage, r as u64);
                let (pos, neg) = concept_activations(self.net, spec, self.cfg.examples_per_side, concept_seed, self.layer)?;
                let cav = train_probe(&pos, &neg, self.layer, probe_seed, &self.cfg.probe)?;
                let rep = Repetition {
                    score: score_from_gradients(self.gradients, &cav.direction),
                    probe_accuracy: cav.probe_accuracy,
                    gate_passed: separability_gate(&cav, self.cfg.gate_threshold),
                    concept_seed,
                    probe_seed,
                };
                Ok((rep, cav))
            })
            .collect()
    }
}

/// Full repeated TCAV protocol for one concept and one evaluation set,
/// including the random-concept baseline and the Welch test between them.
pub fn tcav_experiment(
    net: &Network,
    spec: &ConceptSpec,
    set: &EvaluationSet,
    class: usize,
    cfg: &TcavConfig,
    base_seed: u64,
) -> Result<TcavReport> {
    cfg.validate()?;
    spec.validate()?;
    if set.signals.is_empty() {
        return Err(Error::domain("evaluation set is empty"));
    }
    if spec.length != net.input_size() {
        return Err(Error::domain(format!(
            "concept length {} does not match network input size {}",
            spec.length,
            net.input_size()
        )));
    }
    let layer = cfg.layer.unwrap_or_else(|| net.penultimate_layer());
    if layer >= net.depth() {
        return Err(Error::domain(format!("layer {layer} has no downstream layers")));
    }
    let gradients = logit_gradients(net, &set.signals, layer, class)?;
    let parts = RunParts {
        net,
        gradients: &gradients,
        layer,
        cfg,
        base_seed,
    };
    let (concept, cavs): (Vec<_>, Vec<_>) = parts.repetitions(spec, "tcav-concept")?.into_iter().unzip();
    let random: Vec<Repetition> = parts
        .repetitions(&spec.random_counterpart(), "tcav-random")?
        .into_iter()
        .map(|(r, _)| r)
        .collect();

    let scores: Vec<f64> = concept.iter().map(|r| r.score).collect();
    let random_scores: Vec<f64> = random.iter().map(|r| r.score).collect();
    let reliable = concept.iter().all(|r| r.gate_passed);
    Ok(TcavReport {
        evaluation_set: set.name(),
        class_under_test: class,
        fault_type: set.fault_type,
        rotation_speed_rpm: set.rotation_speed_rpm,
        target_f_char: spec.target_f_char,
        layer,
        examples_per_side: cfg.examples_per_side,
        evaluation_size: set.signals.len(),
        gate_threshold: cfg.gate_threshold,
        mean: mean(&scores),
        std: sample_std(&scores),
        significance: welch_t_test(&scores, &random_scores),
        probe_accuracies: concept.iter().map(|r| r.probe_accuracy).collect(),
        random_probe_accuracies: random.iter().map(|r| r.probe_accuracy).collect(),
        scores,
        random_scores,
        repetitions: concept,
        random_repetitions: random,
        reliable,
        status: if reliable { STATUS_OK } else { STATUS_UNRELIABLE }.to_string(),
        cavs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSets {
    pub sets: Vec<EvaluationSet>,
    pub warnings: Vec<String>,
}

/// One evaluation set per (fault type, rotation speed) stratum present in
/// `dataset`, each holding up to `per_set` segments drawn without replacement.
pub fn build_evaluation_sets(dataset: &Dataset, per_set: usize, seed: u64) -> Result<EvaluationSets> {
    let mut strata: Vec<(FaultType, f64)> = Vec::new();
    for s in &dataset.segments {
        let key = (s.meta.fault_type, s.meta.rotation_speed_rpm);
        if !strata.contains(&key) {
            strata.push(key);
        }
    }
    strata.sort_by(|a, b| a.0.label().cmp(&b.0.label()).then(a.1.total_cmp(&b.1)));
    build_evaluation_sets_for(dataset, &strata, per_set, seed)
}

/// Like [`build_evaluation_sets`] for an explicit list of strata. Strata
/// without segments are omitted with a warning.
pub fn build_evaluation_sets_for(
    dataset: &Dataset,
    strata: &[(FaultType, f64)],
    per_set: usize,
    seed: u64,
) -> Result<EvaluationSets> {
    if per_set == 0 {
        return Err(Error::config("evaluation sets need at least one signal"));
    }
    let mut sets = Vec::new();
    let mut warnings = Vec::new();
    for (si, &(fault, rpm)) in strata.iter().enumerate() {
        let mut members: Vec<usize> = dataset
            .segments
            .iter()
            .enumerate()
            .filter(|(_, s)| s.meta.fault_type == fault && s.meta.rotation_speed_rpm == rpm)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            let w = format!("no segments for {fault} at {rpm} rpm; evaluation set omitted");
            log::warn!("{w}");
            warnings.push(w);
            continue;
        }
        if members.len() < per_set {
            let w = format!(
                "only {} segments for {fault} at {rpm} rpm (requested {per_set}); using all",
                members.len()
            );
            log::warn!("{w}");
            warnings.push(w);
        }
        members.shuffle(&mut stage_rng(seed, "evaluation-set", si as u64));
        members.truncate(per_set);
        sets.push(EvaluationSet {
            signals: members.iter().map(|&i| dataset.segments[i].samples.clone()).collect(),
            class_under_test: fault.label(),
            fault_type: fault,
            rotation_speed_rpm: rpm,
        });
    }
    Ok(EvaluationSets { sets, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use crate::tensor_net::{Architecture, LayerSpec, Preset};
    use crate::training::{Segment, SegmentMeta};
    use proptest::prelude::*;
    use rand::Rng;

    fn small_net(seed: u64) -> Network {
        Network::new(Preset::ResCnn.architecture(128, 2, 3), seed).unwrap()
    }

    fn random_inputs(n: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    fn eval_set(signals: Vec<Vec<f64>>) -> EvaluationSet {
        EvaluationSet {
            signals,
            class_under_test: 1,
            fault_type: FaultType::Inner,
            rotation_speed_rpm: 1797.0,
        }
    }

    fn cav_for(net: &Network, direction: Vec<f64>) -> Cav {
        Cav {
            layer: net.penultimate_layer(),
            direction,
            probe_accuracy: 1.0,
            bias: 0.0,
        }
    }

    #[test]
    fn sensitivity_parallel_orthogonal_and_negated() {
        let net = small_net(1);
        let x = &random_inputs(1, 128, 2)[0];
        let layer = 3;
        let g = net.grad_logit_wrt_activation(x, layer, 0).unwrap();
        let norm = dot(&g, &g).sqrt();
        assert!(norm > 0.0);
        let unit: Vec<f64> = g.iter().map(|v| v / norm).collect();
        let cav = |d: Vec<f64>| Cav {
            layer,
            direction: d,
            probe_accuracy: 1.0,
            bias: 0.0,
        };
        let s = concept_sensitivity(&net, &cav(unit.clone()), x, 0).unwrap();
        assert!((s - norm).abs() < 1e-12 * norm.max(1.0));

        let mut ortho = vec![0.0; g.len()];
        ortho[0] = g[1];
        ortho[1] = -g[0];
        let on = dot(&ortho, &ortho).sqrt();
        ortho.iter_mut().for_each(|v| *v /= on);
        assert!(concept_sensitivity(&net, &cav(ortho), x, 0).unwrap().abs() < 1e-12);

        let neg: Vec<f64> = unit.iter().map(|v| -v).collect();
        assert_eq!(concept_sensitivity(&net, &cav(neg), x, 0).unwrap(), -s);
    }

    #[test]
    fn score_matches_recount() {
        let net = small_net(4);
        let xs = random_inputs(25, 128, 5);
        let layer = 2;
        let d = net.activation_shape(layer).unwrap().size();
        let mut rng = rng_from_seed(6);
        let dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = dot(&dir, &dir).sqrt();
        let cav = Cav {
            layer,
            direction: dir.iter().map(|v| v / n).collect(),
            probe_accuracy: 1.0,
            bias: 0.0,
        };
        let score = tcav_score(&net, &cav, &eval_set(xs.clone()), 1).unwrap();
        let recount = xs
            .iter()
            .filter(|x| concept_sensitivity(&net, &cav, x, 1).unwrap() > 0.0)
            .count();
        assert_eq!(score, recount as f64 / 25.0);
    }

    #[test]
    fn counting_example() {
        let grads = vec![vec![1.0], vec![2.0], vec![0.5], vec![-1.0]];
        assert_eq!(score_from_gradients(&grads, &[1.0]), 0.75);
        assert_eq!(score_from_gradients(&[vec![0.0]], &[1.0]), 0.0);
    }

    fn constant_net() -> Network {
        let mut net = small_net(7);
        let zeros = vec![0.0; net.param_count()];
        net.set_params(&zeros).unwrap();
        net
    }

    #[test]
    fn constant_logit_network_scores_zero() {
        let net = constant_net();
        let d = net.activation_shape(net.penultimate_layer()).unwrap().size();
        let cav = cav_for(&net, vec![1.0 / (d as f64).sqrt(); d]);
        let set = eval_set(random_inputs(10, 128, 8));
        assert_eq!(tcav_score(&net, &cav, &set, 0).unwrap(), 0.0);
    }

    #[test]
    fn aligned_direction_scores_one() {
        // At the input of the output layer the logit gradient is a weight row.
        let net = small_net(9);
        let layer = net.penultimate_layer();
        let xs = random_inputs(12, 128, 10);
        let g = net.grad_logit_wrt_activation(&xs[0], layer, 2).unwrap();
        let n = dot(&g, &g).sqrt();
        let cav = cav_for(&net, g.iter().map(|v| v / n).collect());
        assert_eq!(tcav_score(&net, &cav, &eval_set(xs), 2).unwrap(), 1.0);
    }

    #[test]
    fn rejects_mismatched_cav() {
        let net = small_net(1);
        let cav = cav_for(&net, vec![1.0; 3]);
        assert!(tcav_score(&net, &cav, &eval_set(random_inputs(2, 128, 1)), 0).is_err());
        assert!(tcav_score(&net, &cav_for(&net, vec![1.0; 4]), &eval_set(vec![]), 0).is_err());
    }

    #[test]
    fn logit_offset_leaves_scores_unchanged() {
        let net = small_net(11);
        let mut shifted = net.clone();
        let mut params = shifted.params();
        // The output bias for class 1 is the second-to-last parameter of a 3-class head.
        let n = params.len();
        params[n - 2] += 17.5;
        shifted.set_params(&params).unwrap();
        let xs = random_inputs(15, 128, 12);
        let layer = 4;
        let d = net.activation_shape(layer).unwrap().size();
        let dir: Vec<f64> = random_inputs(1, d, 13)[0].clone();
        let norm = dot(&dir, &dir).sqrt();
        let cav = Cav {
            layer,
            direction: dir.iter().map(|v| v / norm).collect(),
            probe_accuracy: 1.0,
            bias: 0.0,
        };
        for x in &xs {
            let a = concept_sensitivity(&net, &cav, x, 1).unwrap();
            let b = concept_sensitivity(&shifted, &cav, x, 1).unwrap();
            assert_eq!(a, b);
        }
        assert_ne!(net.logits(&xs[0]).unwrap()[1], shifted.logits(&xs[0]).unwrap()[1]);
    }

    fn quick_cfg() -> TcavConfig {
        TcavConfig {
            repetitions: 4,
            examples_per_side: 20,
            ..TcavConfig::default()
        }
    }

    #[test]
    fn ignoring_input_gives_zero_scores() {
        let net = constant_net();
        let spec = ConceptSpec::for_target(500.0, 12_000.0, 128);
        let rep = tcav_experiment(&net, &spec, &eval_set(random_inputs(5, 128, 1)), 1, &quick_cfg(), 3).unwrap();
        assert_eq!(rep.scores, vec![0.0; 4]);
        assert_eq!(rep.std, 0.0);
        assert_eq!(rep.random_scores, vec![0.0; 4]);
        assert_eq!(rep.p_value(), Some(1.0));
    }

    #[test]
    fn experiment_is_reproducible_and_shaped() {
        let net = small_net(2);
        let spec = ConceptSpec::for_target(500.0, 12_000.0, 128);
        let set = eval_set(random_inputs(6, 128, 2));
        let a = tcav_experiment(&net, &spec, &set, 1, &quick_cfg(), 5).unwrap();
        let b = tcav_experiment(&net, &spec, &set, 1, &quick_cfg(), 5).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.scores.len(), 4);
        assert_eq!(a.layer, net.penultimate_layer());
        assert!((0.0..=1.0).contains(&a.mean));
        assert_eq!(a.reliable, a.repetitions.iter().all(|r| r.gate_passed));
        assert_eq!(a.status == STATUS_UNRELIABLE, !a.reliable);
    }

    #[test]
    fn gate_failure_marks_report_unreliable() {
        let net = small_net(2);
        let spec = ConceptSpec::for_target(500.0, 12_000.0, 128);
        let cfg = TcavConfig {
            gate_threshold: 1.0,
            probe: ProbeConfig {
                max_iterations: 0,
                ..ProbeConfig::default()
            },
            ..quick_cfg()
        };
        let rep = tcav_experiment(&net, &spec, &eval_set(random_inputs(3, 128, 2)), 1, &cfg, 1).unwrap();
        assert!(!rep.reliable);
        assert_eq!(rep.status, STATUS_UNRELIABLE);
        assert_eq!(rep.scores.len(), 4);
    }

    #[test]
    fn rejects_length_mismatch() {
        let net = small_net(2);
        let spec = ConceptSpec::for_target(500.0, 12_000.0, 64);
        assert!(tcav_experiment(&net, &spec, &eval_set(random_inputs(3, 128, 2)), 1, &quick_cfg(), 1).is_err());
    }

    fn strata_dataset(counts: &[(FaultType, f64, usize)]) -> Dataset {
        let mut segments = Vec::new();
        for &(fault, rpm, n) in counts {
            for i in 0..n {
                segments.push(Segment {
                    samples: vec![i as f64, rpm],
                    label: fault.label(),
                    meta: SegmentMeta {
                        rotation_speed_rpm: rpm,
                        fault_type: fault,
                        source: format!("{fault}-{i}"),
                    },
                });
            }
        }
        Dataset::new(2, 1000.0, segments).unwrap()
    }

    #[test]
    fn evaluation_sets_per_stratum() {
        let data = strata_dataset(&[
            (FaultType::Inner, 1797.0, 120),
            (FaultType::Outer, 1797.0, 130),
            (FaultType::Inner, 1730.0, 110),
            (FaultType::Outer, 1730.0, 100),
        ]);
        let built = build_evaluation_sets(&data, 100, 1).unwrap();
        assert_eq!(built.sets.len(), 4);
        assert!(built.sets.iter().all(|s| s.signals.len() == 100));
        assert!(built.warnings.is_empty());
        for s in &built.sets {
            assert!(s.signals.iter().all(|x| x[1] == s.rotation_speed_rpm));
            let mut ids: Vec<u64> = s.signals.iter().map(|x| x[0] as u64).collect();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), 100);
        }
        assert_eq!(built, build_evaluation_sets(&data, 100, 1).unwrap());
    }

    #[test]
    fn small_and_empty_strata_warn() {
        let data = strata_dataset(&[(FaultType::Outer, 1797.0, 40)]);
        let built = build_evaluation_sets_for(
            &data,
            &[(FaultType::Outer, 1797.0), (FaultType::Inner, 1797.0)],
            100,
            0,
        )
        .unwrap();
        assert_eq!(built.sets.len(), 1);
        assert_eq!(built.sets[0].signals.len(), 40);
        assert_eq!(built.warnings.len(), 2);
    }

    #[test]
    fn dense_identity_layer_zero() {
        let arch = Architecture {
            input_length: 3,
            input_channels: 1,
            num_classes: 3,
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { units: 3 }],
        };
        let net = Network::new(arch, 0).unwrap();
        let xs = vec![vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.0]];
        assert_eq!(collect_activations(&net, &xs, 0).unwrap(), xs);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn score_invariant_under_positive_scaling(scale in 1e-3f64..1e3, seed in 0u64..1000) {
            let net = small_net(seed);
            let xs = random_inputs(8, 128, seed + 1);
            let layer = 3;
            let d = net.activation_shape(layer).unwrap().size();
            let dir = random_inputs(1, d, seed + 2).remove(0);
            let set = eval_set(xs);
            let unit = Cav { layer, direction: dir.clone(), probe_accuracy: 1.0, bias: 0.0 };
            let scaled = Cav { direction: dir.iter().map(|v| v * scale).collect(), ..unit.clone() };
            let a = tcav_score(&net, &unit, &set, 0).unwrap();
            let b = tcav_score(&net, &scaled, &set, 0).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
