//! Declarative experiment configuration.
//!
//! A run is fully described by one JSON document. Individual keys can be
//! overridden with dotted paths (`train.epochs=10`), and every artifact
//! records the hash of the effective configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cav::ProbeConfig;
use crate::error::{Error, Result};
use crate::io::{read_json, sha256_hex};
use crate::tcav::TcavConfig;
use crate::tensor_net::{Architecture, LayerSpec, Preset};
use crate::training::{bearing_task_classes, ClassSpec, TrainConfig};
use crate::vibration_sim::{BearingGeometry, ConceptSpec, Interval};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_NAME: &str = "vibcav";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Sampling ranges for concept examples, relative to the target frequency
/// where that is natural.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConceptConfig {
    /// Negative frequencies are drawn from this multiple of the target.
    pub f_char_factor: Interval,
    pub exclusion_band: f64,
    /// Absolute resonance range in Hz; `None` means `[fs/8, fs/4]`.
    pub f_res_range: Option<Interval>,
    pub a_range: Interval,
    /// Decay time in impulse periods of the target.
    pub tau_periods: Interval,
    pub sigma_range: Interval,
    /// Offset in impulse periods of the target.
    pub t0_periods: Interval,
}

impl Default for ConceptConfig {
    fn default() -> Self {
        Self {
            f_char_factor: Interval(0.5, 1.5),
            exclusion_band: 0.05,
            f_res_range: None,
            a_range: Interval(0.5, 2.0),
            tau_periods: Interval(2.0, 10.0),
            sigma_range: Interval(0.0, 0.2),
            t0_periods: Interval(0.0, 1.0),
        }
    }
}

impl ConceptConfig {
    pub fn spec_for(&self, target: f64, sample_rate: f64, length: usize) -> ConceptSpec {
        let period = 1.0 / target;
        let scale = |iv: Interval, by: f64| Interval(iv.0 * by, iv.1 * by);
        ConceptSpec {
            target_f_char: Some(target),
            f_char_interval: scale(self.f_char_factor, target),
            exclusion_band: self.exclusion_band,
            f_res_range: self
                .f_res_range
                .unwrap_or(Interval(sample_rate / 8.0, sample_rate / 4.0)),
            a_range: self.a_range,
            tau_range: scale(self.tau_periods, period),
            sigma_range: self.sigma_range,
            t0_range: scale(self.t0_periods, period),
            sample_rate,
            length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Healthy, inner and outer classes simulated per rotation speed.
    Synthetic {
        #[serde(default = "default_per_class")]
        per_class: usize,
        /// Fixed noise level of the training signals.
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    /// A dataset bundle written by `ingest`.
    Ingested { path: PathBuf },
}

fn default_per_class() -> usize {
    300
}
fn default_sigma() -> f64 {
    0.1
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Synthetic {
            per_class: default_per_class(),
            sigma: default_sigma(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub preset: Preset,
    pub width: usize,
    /// Explicit layer stack; takes precedence over the preset.
    pub layers: Option<Vec<LayerSpec>>,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            preset: Preset::ResCnn,
            width: 16,
            layers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcavSection {
    pub repetitions: usize,
    pub examples_per_side: usize,
    pub per_set: usize,
    pub gate_threshold: f64,
    pub layer: Option<usize>,
    pub probe: ProbeConfig,
}

impl Default for TcavSection {
    fn default() -> Self {
        let t = TcavConfig::default();
        Self {
            repetitions: t.repetitions,
            examples_per_side: t.examples_per_side,
            per_set: 100,
            gate_threshold: t.gate_threshold,
            layer: t.layer,
            probe: t.probe,
        }
    }
}

impl TcavSection {
    pub fn tcav_config(&self) -> TcavConfig {
        TcavConfig {
            repetitions: self.repetitions,
            examples_per_side: self.examples_per_side,
            gate_threshold: self.gate_threshold,
            layer: self.layer,
            probe: self.probe,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Concept examples per side written for each fault frequency.
    pub concept_examples_per_side: usize,
    pub write_dataset: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            concept_examples_per_side: 200,
            write_dataset: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Base seed of every random stage. Required; there is no clock default.
    pub seed: Option<u64>,
    pub geometry: BearingGeometry,
    pub rotation_speeds_rpm: Vec<f64>,
    pub sample_rate: f64,
    pub segment_length: usize,
    pub concept: ConceptConfig,
    pub dataset: DatasetConfig,
    pub architecture: ArchitectureConfig,
    pub train: TrainConfig,
    pub tcav: TcavSection,
    pub simulate: SimulateSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: None,
            geometry: BearingGeometry::cwru_drive_end(),
            rotation_speeds_rpm: vec![1797.0],
            sample_rate: 12_000.0,
            segment_length: 2048,
            concept: ConceptConfig::default(),
            dataset: DatasetConfig::default(),
            architecture: ArchitectureConfig::default(),
            train: TrainConfig {
                learning_rate: 1e-3,
                optimizer: crate::training::Optimizer::adam(),
                ..TrainConfig::default()
            },
            tcav: TcavSection::default(),
            simulate: SimulateSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let value: Value = read_json(path)?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        serde_json::from_value(value).map_err(|e| Error::config(e.to_string()))
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Applies `key=value` overrides. Keys are dotted paths into the JSON
    /// form of the configuration; values are parsed as JSON and fall back
    /// to plain strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut value = self.to_value();
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::config(format!("override {o:?} is not KEY=VALUE")))?;
            let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut value, key, parsed)?;
        }
        Self::from_value(value)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::config("no seed: set \"seed\" in the config or pass --seed"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Version(format!(
                "config schema {} (supported: {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.seed()?;
        self.geometry.validate()?;
        if self.rotation_speeds_rpm.is_empty() || self.rotation_speeds_rpm.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::config("rotation speeds must be a non-empty list of positive rpm"));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::config("sample rate must be positive"));
        }
        if self.segment_length == 0 {
            return Err(Error::config("segment length must be positive"));
        }
        if self.architecture.width == 0 {
            return Err(Error::config("architecture width must be positive"));
        }
        self.train.validate()?;
        self.tcav.tcav_config().validate()?;
        if self.tcav.per_set == 0 {
            return Err(Error::config("tcav.per_set must be positive"));
        }
        if let DatasetConfig::Synthetic { per_class, sigma } = &self.dataset {
            if *per_class == 0 {
                return Err(Error::config("dataset.per_class must be positive"));
            }
            if !(*sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::config("dataset.sigma must be >= 0"));
            }
        }
        for rpm in &self.rotation_speeds_rpm {
            for (_, f) in self.fault_frequencies(*rpm)? {
                self.concept_spec(f).validate()?;
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical (key-sorted, compact) JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(&self.to_value()).expect("config serializes"))
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            tool: TOOL_NAME.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            schema_version: SCHEMA_VERSION,
            config_hash: self.hash(),
        }
    }

    pub fn concept_spec(&self, target: f64) -> ConceptSpec {
        self.concept.spec_for(target, self.sample_rate, self.segment_length)
    }

    /// Inner (BPFI) and outer (BPFO) fault frequencies at `rpm`.
    pub fn fault_frequencies(&self, rpm: f64) -> Result<[(crate::training::FaultType, f64); 2]> {
        use crate::training::FaultType;
        let f_r = rpm / 60.0;
        Ok([
            (FaultType::Inner, crate::vibration_sim::bpfi(&self.geometry, f_r)?),
            (FaultType::Outer, crate::vibration_sim::bpfo(&self.geometry, f_r)?),
        ])
    }

    /// Class specifications of the synthetic task.
    pub fn synthetic_classes(&self) -> Result<Vec<ClassSpec>> {
        let (per_class, sigma) = match &self.dataset {
            DatasetConfig::Synthetic { per_class, sigma } => (*per_class, *sigma),
            DatasetConfig::Ingested { .. } => return Err(Error::config("dataset source is not synthetic")),
        };
        bearing_task_classes(&self.geometry, &self.rotation_speeds_rpm, per_class, |f| {
            let mut spec = self.concept_spec(f);
            spec.sigma_range = Interval::point(sigma);
            spec
        })
    }

    pub fn network_architecture(&self, num_classes: usize) -> Architecture {
        let layers = self
            .architecture
            .layers
            .clone()
            .unwrap_or_else(|| self.architecture.preset.layers(self.architecture.width, num_classes));
        Architecture {
            input_length: self.segment_length,
            input_channels: 1,
            num_classes,
            layers,
        }
    }
}

fn set_path(root: &mut Value, key: &str, new: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        let map = node
            .as_object_mut()
            .ok_or_else(|| Error::config(format!("override {key:?}: {} is not an object", parts[..i].join("."))))?;
        if !map.contains_key(*part) {
            let mut valid: Vec<&String> = map.keys().collect();
            valid.sort();
            return Err(Error::config(format!("unknown config key {key:?}; valid keys here: {valid:?}")));
        }
        if last {
            map.insert(part.to_string(), new);
            return Ok(());
        }
        node = map.get_mut(*part).unwrap();
    }
    Ok(())
}

/// Identification block embedded in every JSON artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    pub schema_version: u32,
    pub config_hash: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::FaultType;

    fn seeded() -> ExperimentConfig {
        ExperimentConfig {
            seed: Some(7),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn default_is_valid_once_seeded() {
        assert!(matches!(ExperimentConfig::default().validate(), Err(Error::Config(_))));
        seeded().validate().unwrap();
    }

    #[test]
    fn json_round_trip_and_partial_documents() {
        let c = seeded();
        assert_eq!(ExperimentConfig::from_value(c.to_value()).unwrap(), c);
        let partial = serde_json::json!({"seed": 3, "train": {"epochs": 2}});
        let p = ExperimentConfig::from_value(partial).unwrap();
        assert_eq!(p.seed, Some(3));
        assert_eq!(p.train.epochs, 2);
        assert_eq!(p.segment_length, 2048);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_value(serde_json::json!({"sed": 1})).is_err());
        let err = seeded().with_overrides(&["train.epoch=3"]).unwrap_err();
        assert!(err.to_string().contains("epochs"), "{err}");
    }

    #[test]
    fn dotted_overrides() {
        let c = seeded()
            .with_overrides(&[
                "train.epochs=3",
                "architecture.preset=plain-cnn",
                "rotation_speeds_rpm=[1797,1730]",
                "dataset.per_class=10",
                "tcav.probe.l2=0.01",
            ])
            .unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.architecture.preset, Preset::PlainCnn);
        assert_eq!(c.rotation_speeds_rpm, vec![1797.0, 1730.0]);
        assert_eq!(c.tcav.probe.l2, 0.01);
        assert!(matches!(c.dataset, DatasetConfig::Synthetic { per_class: 10, .. }));
        assert!(seeded().with_overrides(&["noequals"]).is_err());
        assert!(seeded().with_overrides(&["train.epochs.x=1"]).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = seeded();
        assert_eq!(a.hash(), seeded().hash());
        assert_eq!(a.hash().len(), 64);
        assert_ne!(a.hash(), a.with_overrides(&["seed=8"]).unwrap().hash());
        let p = a.provenance();
        assert_eq!(p.tool_version, TOOL_VERSION);
        assert_eq!(p.config_hash, a.hash());
    }

    #[test]
    fn schema_version_is_checked() {
        let c = seeded().with_overrides(&["schema_version=2"]).unwrap();
        assert!(matches!(c.validate(), Err(Error::Version(_))));
    }

    #[test]
    fn concept_spec_follows_target() {
        let c = seeded();
        let s = c.concept_spec(100.0);
        assert_eq!(s.f_char_interval, Interval(50.0, 150.0));
        assert_eq!(s.f_res_range, Interval(1500.0, 3000.0));
        assert!((s.tau_range.0 - 0.02).abs() < 1e-15 && (s.tau_range.1 - 0.1).abs() < 1e-15);
        assert_eq!(s.t0_range, Interval(0.0, 0.01));
        assert_eq!(s, ConceptSpec::for_target(100.0, 12_000.0, 2048));
    }

    #[test]
    fn synthetic_classes_use_fault_frequencies() {
        let c = seeded();
        let classes = c.synthetic_classes().unwrap();
        assert_eq!(classes.len(), 3);
        let [(_, inner), (_, outer)] = c.fault_frequencies(1797.0).unwrap();
        assert_eq!(classes[1].fault_type, FaultType::Inner);
        assert_eq!(classes[1].concept.target_f_char, Some(inner));
        assert_eq!(classes[2].concept.target_f_char, Some(outer));
        assert_eq!(classes[2].concept.sigma_range, Interval::point(0.1));
    }

    #[test]
    fn explicit_layers_take_precedence() {
        let c = seeded()
            .with_overrides(&[r#"architecture.layers=[{"kind":"flatten"},{"kind":"dense","units":3}]"#])
            .unwrap();
        let arch = c.network_architecture(3);
        assert_eq!(arch.layers.len(), 2);
        assert_eq!(c.network_architecture(3).input_length, 2048);
    }
}
