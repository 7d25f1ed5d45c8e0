//! The batch stages behind the command-line subcommands: simulate, ingest,
//! train, tcav and report. Each stage reads an [`ExperimentConfig`], writes
//! its artifacts atomically under an output directory and embeds the
//! configuration hash in every JSON file it produces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{DatasetConfig, ExperimentConfig, Provenance, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::io::{self, read_json, sha256_hex, write_atomic, write_json};
use crate::seed::derive_seed;
use crate::tcav::{build_evaluation_sets, tcav_experiment, TcavReport};
use crate::tensor_net::{Architecture, Network};
use crate::training::{
    evaluate, make_synthetic_task, normalize, segment, split, train, ConfusionMatrix, Dataset, EpochRecord, FaultType,
    Segment, SegmentMeta, SplitIndices, TrainConfig,
};
use crate::vibration_sim::{sample_concept_set, ConceptParams};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_FILE: &str = "dataset.vds";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const ARCHITECTURE_FILE: &str = "architecture.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TCAV_REPORTS_FILE: &str = "tcav_reports.json";
pub const TCAV_SCORES_FILE: &str = "tcav_scores.csv";
pub const PROBE_ACCURACY_FILE: &str = "probe_accuracy.csv";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const NOTHING_TO_REPORT: &str = "nothing to report";

/// What a stage wrote, and whether any TCAV report failed its gate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageOutcome {
    pub files: Vec<PathBuf>,
    pub gate_failures: usize,
    pub message: String,
}

/// Seeds of the individual stages, all derived from the base seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub base: u64,
    pub dataset: u64,
    pub split: u64,
    pub init: u64,
    pub train: u64,
    pub evaluation_sets: u64,
}

impl StageSeeds {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let base = cfg.seed()?;
        Ok(Self {
            base,
            dataset: derive_seed(base, "dataset", 0),
            split: derive_seed(base, "split", 0),
            init: derive_seed(base, "init", 0),
            train: derive_seed(base, "train", cfg.train.seed),
            evaluation_sets: derive_seed(base, "evaluation-sets", 0),
        })
    }

    pub fn tcav(&self, set_index: usize) -> u64 {
        derive_seed(self.base, "tcav", set_index as u64)
    }

    pub fn concept(&self, index: usize) -> u64 {
        derive_seed(self.base, "simulate-concept", index as u64)
    }
}

fn write_config(cfg: &ExperimentConfig, out: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = out.join("config.json");
    write_json(&path, &json!({"provenance": cfg.provenance(), "config": cfg}))?;
    files.push(path);
    Ok(())
}

/// The dataset named by the configuration: simulated from the seed, or read
/// from an ingested bundle.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let data = match &cfg.dataset {
        DatasetConfig::Synthetic { .. } => make_synthetic_task(&cfg.synthetic_classes()?, StageSeeds::new(cfg)?.dataset)?,
        DatasetConfig::Ingested { path } => io::read_dataset(path)?,
    };
    if data.segment_length != cfg.segment_length {
        return Err(Error::config(format!(
            "dataset segments have {} samples, config expects {}",
            data.segment_length, cfg.segment_length
        )));
    }
    Ok(data)
}

#[derive(Debug, Clone, Serialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<ConceptParams>,
}

/// Writes the synthetic dataset and one concept set per fault frequency and
/// rotation speed, plus a manifest with parameters and checksums.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<StageOutcome> {
    cfg.validate()?;
    let seeds = StageSeeds::new(cfg)?;
    let mut files = Vec::new();
    write_config(cfg, out, &mut files)?;
    let mut entries = Vec::new();

    let mut dataset_info = Value::Null;
    if cfg.simulate.write_dataset {
        if let DatasetConfig::Synthetic { .. } = cfg.dataset {
            let data = load_dataset(cfg)?;
            let path = out.join(DATASET_FILE);
            let sha = io::write_dataset(&path, &data)?;
            dataset_info = json!({"path": DATASET_FILE, "sha256": sha, "segments": data.len(), "seed": seeds.dataset});
            files.push(path);
        }
    }

    let per_side = cfg.simulate.concept_examples_per_side;
    let mut concepts = Vec::new();
    let mut index = 0;
    for &rpm in &cfg.rotation_speeds_rpm {
        for (fault, f_char) in cfg.fault_frequencies(rpm)? {
            let spec = cfg.concept_spec(f_char);
            let seed = seeds.concept(index);
            index += 1;
            let set = sample_concept_set(&spec, per_side, seed)?;
            let dir_name = format!("concepts/{fault}-{rpm}rpm");
            let sides = [
                ("pos", &set.positives, &set.positive_params),
                ("neg", &set.negatives, &set.negative_params),
            ];
            for (side, signals, params) in sides {
                for (i, (signal, p)) in signals.iter().zip(params.iter()).enumerate() {
                    let rel = format!("{dir_name}/{side}-{i:04}.sig");
                    let bytes = io::signal_to_binary(signal)?;
                    let path = out.join(&rel);
                    write_atomic(&path, &bytes)?;
                    entries.push(ManifestEntry {
                        path: rel,
                        sha256: sha256_hex(&bytes),
                        kind: if side == "pos" { "concept-positive" } else { "concept-negative" },
                        params: Some(*p),
                    });
                    files.push(path);
                }
            }
            concepts.push(json!({
                "fault_type": fault,
                "rotation_speed_rpm": rpm,
                "target_f_char": f_char,
                "seed": seed,
                "examples_per_side": per_side,
                "spec": spec,
                "directory": dir_name,
            }));
        }
    }

    let manifest = json!({
        "provenance": cfg.provenance(),
        "seed": seeds.base,
        "dataset": dataset_info,
        "concepts": concepts,
        "files": entries,
    });
    let path = out.join(MANIFEST_FILE);
    write_json(&path, &manifest)?;
    files.push(path);
    Ok(StageOutcome {
        message: format!("wrote {} signal files", entries.len()),
        files,
        gate_failures: 0,
    })
}

/// Label map entry for one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelEntry {
    pub label: String,
    pub rotation_speed_rpm: f64,
}

fn signal_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| Error::io(input, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    Ok(files)
}

/// Segments, normalizes and labels raw recordings into a dataset bundle.
/// `label_map` maps file names to their fault label and rotation speed.
pub fn cmd_ingest(
    cfg: &ExperimentConfig,
    inputs: &[PathBuf],
    label_map: &Path,
    output: &Path,
) -> Result<StageOutcome> {
    let labels: BTreeMap<String, LabelEntry> = read_json(label_map)?;
    let d = cfg.segment_length;
    let mut segments = Vec::new();
    let mut sources = Vec::new();
    for path in signal_files(inputs)? {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let entry = labels.get(&name).ok_or_else(|| {
            let keys: Vec<&String> = labels.keys().collect();
            Error::config(format!("{name} has no entry in {}; valid keys: {keys:?}", label_map.display()))
        })?;
        let fault: FaultType = entry.label.parse()?;
        let signal = io::read_signal(&path, cfg.sample_rate)?;
        if signal.sample_rate != cfg.sample_rate {
            return Err(Error::config(format!(
                "{} is sampled at {} Hz, config expects {} Hz",
                path.display(),
                signal.sample_rate,
                cfg.sample_rate
            )));
        }
        let windows = segment(&signal, d)?;
        if windows.is_empty() {
            log::warn!("{} is shorter than one segment; skipped", path.display());
        }
        sources.push(json!({"file": name, "segments": windows.len(), "label": fault, "rotation_speed_rpm": entry.rotation_speed_rpm}));
        for (i, w) in windows.iter().enumerate() {
            segments.push(Segment {
                samples: normalize(w),
                label: fault.label(),
                meta: SegmentMeta {
                    rotation_speed_rpm: entry.rotation_speed_rpm,
                    fault_type: fault,
                    source: format!("{name}#{i}"),
                },
            });
        }
    }
    let data = Dataset::new(d, cfg.sample_rate, segments)?;
    let sha = io::write_dataset(output, &data)?;
    let manifest_path = output.with_extension("manifest.json");
    write_json(
        &manifest_path,
        &json!({
            "provenance": cfg.provenance(),
            "dataset": output.file_name().map(|n| n.to_string_lossy().into_owned()),
            "sha256": sha,
            "segment_length": d,
            "segments": data.len(),
            "sources": sources,
        }),
    )?;
    Ok(StageOutcome {
        message: format!("wrote {} segments", data.len()),
        files: vec![output.to_path_buf(), manifest_path],
        gate_failures: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub provenance: Provenance,
    pub seeds: StageSeeds,
    pub train_config: TrainConfig,
    pub dataset_sha256: String,
    pub split_sizes: [usize; 3],
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub test_accuracy: f64,
    pub confusion_matrix: ConfusionMatrix,
    pub class_names: Vec<String>,
    pub recall: Vec<Option<f64>>,
    pub parameter_count: usize,
}

fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,train_acc,val_acc\n");
    for h in history {
        let _ = writeln!(out, "{},{},{},{},{}", h.epoch, h.train_loss, h.val_loss, h.train_acc, h.val_acc);
    }
    out
}

fn dataset_and_split(cfg: &ExperimentConfig) -> Result<(Dataset, SplitIndices, String)> {
    let seeds = StageSeeds::new(cfg)?;
    let data = load_dataset(cfg)?;
    let sha = sha256_hex(&io::dataset_to_bytes(&data)?);
    let splits = split(&data, seeds.split)?;
    Ok((data, splits, sha))
}

/// Trains the configured network and writes the best checkpoint, the
/// history and a summary with test metrics.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<StageOutcome> {
    cfg.validate()?;
    let seeds = StageSeeds::new(cfg)?;
    let mut files = Vec::new();
    write_config(cfg, out, &mut files)?;
    let (data, splits, dataset_sha) = dataset_and_split(cfg)?;
    let num_classes = FaultType::ALL.len();
    let net = Network::new(cfg.network_architecture(num_classes), seeds.init)?;
    let train_cfg = TrainConfig {
        seed: seeds.train,
        ..cfg.train.clone()
    };
    let outcome = train(&net, &data, &splits, &train_cfg)?;
    let eval = evaluate(&outcome.best, &data, &splits.test)?;

    let ckpt = out.join(CHECKPOINT_FILE);
    write_atomic(&ckpt, &outcome.best.to_checkpoint_bytes())?;
    let arch = out.join(ARCHITECTURE_FILE);
    write_json(&arch, &json!({"provenance": cfg.provenance(), "architecture": outcome.best.architecture()}))?;
    let hist = out.join(HISTORY_FILE);
    write_atomic(&hist, history_csv(&outcome.history).as_bytes())?;

    let summary = TrainSummary {
        provenance: cfg.provenance(),
        seeds,
        train_config: train_cfg,
        dataset_sha256: dataset_sha,
        split_sizes: [splits.train.len(), splits.val.len(), splits.test.len()],
        best_epoch: outcome.best_epoch,
        best_val_loss: outcome.history[outcome.best_epoch].val_loss,
        test_accuracy: eval.accuracy,
        recall: (0..num_classes).map(|c| eval.confusion_matrix.recall(c)).collect(),
        confusion_matrix: eval.confusion_matrix,
        class_names: FaultType::ALL.iter().map(|f| f.name().to_string()).collect(),
        parameter_count: outcome.best.param_count(),
    };
    let sum = out.join(SUMMARY_FILE);
    write_json(&sum, &summary)?;
    files.extend([ckpt, arch, hist, sum]);
    Ok(StageOutcome {
        message: format!("best epoch {}, test accuracy {:.4}", summary.best_epoch, summary.test_accuracy),
        files,
        gate_failures: 0,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    Network::from_checkpoint_bytes(&io::read_bytes(path)?, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcavOutput {
    pub provenance: Provenance,
    pub seed: u64,
    pub checkpoint_sha256: String,
    pub warnings: Vec<String>,
    pub reports: Vec<TcavReport>,
}

/// Runs the TCAV protocol on every faulty (fault type, speed) evaluation set
/// drawn from the test split, with the matching fault frequency as concept.
pub fn cmd_tcav(cfg: &ExperimentConfig, checkpoint: &Path, out: &Path) -> Result<StageOutcome> {
    cfg.validate()?;
    let seeds = StageSeeds::new(cfg)?;
    let ckpt_bytes = io::read_bytes(checkpoint)?;
    let net = Network::from_checkpoint_bytes(&ckpt_bytes, checkpoint)?;
    check_network(&net, cfg)?;
    let mut files = Vec::new();
    write_config(cfg, out, &mut files)?;

    let (data, splits, _) = dataset_and_split(cfg)?;
    let test = data.subset(&splits.test);
    let built = build_evaluation_sets(&test, cfg.tcav.per_set, seeds.evaluation_sets)?;
    let mut warnings = built.warnings;
    let tcav_cfg = cfg.tcav.tcav_config();

    let mut reports = Vec::new();
    for (i, set) in built.sets.iter().enumerate() {
        let target = cfg
            .fault_frequencies(set.rotation_speed_rpm)?
            .into_iter()
            .find(|(f, _)| *f == set.fault_type)
            .map(|(_, f)| f);
        let Some(target) = target else {
            log::info!("{}: no fault frequency, skipped", set.name());
            continue;
        };
        if set.class_under_test >= net.num_classes() {
            let w = format!("{}: class {} not in the network output", set.name(), set.class_under_test);
            log::warn!("{w}");
            warnings.push(w);
            continue;
        }
        let spec = cfg.concept_spec(target);
        let report = tcav_experiment(&net, &spec, set, set.class_under_test, &tcav_cfg, seeds.tcav(i))?;
        log::info!(
            "{}: mean {:.3} std {:.3} p {:?} {}",
            report.evaluation_set,
            report.mean,
            report.std,
            report.p_value(),
            report.status
        );
        reports.push(report);
    }

    let cav_dir = out.join("cavs");
    for report in &reports {
        for (r, cav) in report.cavs.iter().enumerate() {
            let stem = format!("{}-rep{r:02}", report.evaluation_set.replace('@', "-"));
            files.push(io::write_cav(&cav_dir, &stem, cav, &cfg.provenance())?);
        }
    }
    let scores = out.join(TCAV_SCORES_FILE);
    write_atomic(&scores, scores_csv(&reports).as_bytes())?;
    let probes = out.join(PROBE_ACCURACY_FILE);
    write_atomic(&probes, probe_csv(&reports).as_bytes())?;
    let gate_failures = reports.iter().filter(|r| !r.reliable).count();
    let output = TcavOutput {
        provenance: cfg.provenance(),
        seed: seeds.base,
        checkpoint_sha256: sha256_hex(&ckpt_bytes),
        warnings,
        reports,
    };
    let path = out.join(TCAV_REPORTS_FILE);
    write_json(&path, &output)?;
    files.extend([scores, probes, path]);
    Ok(StageOutcome {
        message: format!(
            "{} reports, {gate_failures} UNRELIABLE",
            output.reports.len()
        ),
        files,
        gate_failures,
    })
}

fn check_network(net: &Network, cfg: &ExperimentConfig) -> Result<()> {
    let arch: &Architecture = net.architecture();
    if arch.input_length != cfg.segment_length || arch.input_channels != 1 {
        return Err(Error::config(format!(
            "checkpoint expects {}x{} inputs, config segments have {} samples",
            arch.input_channels, arch.input_length, cfg.segment_length
        )));
    }
    Ok(())
}

fn scores_csv(reports: &[TcavReport]) -> String {
    let mut out = String::from(
        "evaluation_set,fault_type,rotation_speed_rpm,class,layer,repetition,score,probe_accuracy,gate_passed,random_score,random_probe_accuracy,status\n",
    );
    for r in reports {
        for (i, (c, b)) in r.repetitions.iter().zip(&r.random_repetitions).enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{i},{},{},{},{},{},{}",
                r.evaluation_set,
                r.fault_type,
                r.rotation_speed_rpm,
                r.class_under_test,
                r.layer,
                c.score,
                c.probe_accuracy,
                c.gate_passed,
                b.score,
                b.probe_accuracy,
                r.status
            );
        }
    }
    out
}

fn probe_csv(reports: &[TcavReport]) -> String {
    let mut out = String::from("evaluation_set,layer,repetition,probe_accuracy,gate_threshold,gate_passed\n");
    for r in reports {
        for (i, c) in r.repetitions.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{i},{},{},{}",
                r.evaluation_set, r.layer, c.probe_accuracy, r.gate_threshold, c.gate_passed
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub run: String,
    pub config_hash: String,
    pub tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tcav: Option<Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub tool_version: String,
    pub schema_version: u32,
    /// Hash over the configuration hashes of the included runs.
    pub config_hash: String,
    pub status: String,
    pub runs: Vec<RunEntry>,
}

fn read_provenance(path: &Path, value: &Value) -> Result<Provenance> {
    let p = value
        .get("provenance")
        .ok_or_else(|| Error::parse(path, 0, "missing provenance block"))?;
    serde_json::from_value(p.clone()).map_err(|e| Error::parse(path, 0, e.to_string()))
}

fn run_entry(dir: &Path, name: String) -> Result<Option<RunEntry>> {
    let summary = dir.join(SUMMARY_FILE);
    let tcav = dir.join(TCAV_REPORTS_FILE);
    if !summary.is_file() && !tcav.is_file() {
        return Ok(None);
    }
    let mut provenance: Option<Provenance> = None;
    let mut check = |path: &Path, value: &Value| -> Result<()> {
        let p = read_provenance(path, value)?;
        if p.schema_version != SCHEMA_VERSION {
            return Err(Error::Version(format!(
                "{} has schema version {} (supported: {SCHEMA_VERSION})",
                path.display(),
                p.schema_version
            )));
        }
        if provenance.is_none() {
            provenance = Some(p);
        }
        Ok(())
    };
    let mut entry_train = None;
    let mut entry_tcav = None;
    if summary.is_file() {
        let v: Value = read_json(&summary)?;
        check(&summary, &v)?;
        entry_train = Some(json!({
            "best_epoch": v["best_epoch"],
            "test_accuracy": v["test_accuracy"],
            "recall": v["recall"],
        }));
    }
    if tcav.is_file() {
        let v: Value = read_json(&tcav)?;
        check(&tcav, &v)?;
        let reports = v["reports"].as_array().cloned().unwrap_or_default();
        entry_tcav = Some(
            reports
                .iter()
                .map(|r| {
                    json!({
                        "evaluation_set": r["evaluation_set"],
                        "mean": r["mean"],
                        "std": r["std"],
                        "random_mean": r["random_scores"].as_array().map(|s| {
                            s.iter().filter_map(Value::as_f64).sum::<f64>() / s.len().max(1) as f64
                        }),
                        "p_value": r["significance"]["p_value"],
                        "status": r["status"],
                    })
                })
                .collect(),
        );
    }
    let p = provenance.expect("at least one artifact was read");
    Ok(Some(RunEntry {
        run: name,
        config_hash: p.config_hash,
        tool_version: p.tool_version,
        train: entry_train,
        tcav: entry_tcav,
    }))
}

/// Consolidates `run_dir` (if it is a run itself) and its immediate
/// subdirectories into `report.json` and `report.txt`.
pub fn cmd_report(run_dir: &Path) -> Result<StageOutcome> {
    if !run_dir.is_dir() {
        return Err(Error::io(run_dir, std::io::Error::new(std::io::ErrorKind::NotFound, "run directory not found")));
    }
    let mut runs = Vec::new();
    if let Some(e) = run_entry(run_dir, ".".to_string())? {
        runs.push(e);
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(run_dir)
        .map_err(|e| Error::io(run_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for dir in subdirs {
        let name = dir.file_name().unwrap().to_string_lossy().into_owned();
        if let Some(e) = run_entry(&dir, name)? {
            runs.push(e);
        }
    }
    let status = if runs.is_empty() { NOTHING_TO_REPORT.to_string() } else { format!("{} runs", runs.len()) };
    let joined: String = runs.iter().map(|r| r.config_hash.as_str()).collect::<Vec<_>>().join(",");
    let report = Report {
        tool: crate::config::TOOL_NAME.to_string(),
        tool_version: crate::config::TOOL_VERSION.to_string(),
        schema_version: SCHEMA_VERSION,
        config_hash: sha256_hex(joined.as_bytes()),
        status: status.clone(),
        runs,
    };
    let json_path = run_dir.join(REPORT_FILE);
    write_json(&json_path, &report)?;
    let text_path = run_dir.join(REPORT_TEXT_FILE);
    write_atomic(&text_path, report_text(&report).as_bytes())?;
    Ok(StageOutcome {
        files: vec![json_path, text_path],
        gate_failures: 0,
        message: status,
    })
}

fn report_text(report: &Report) -> String {
    let mut out = format!("{} {}: {}\n", report.tool, report.tool_version, report.status);
    for run in &report.runs {
        let _ = writeln!(out, "\nrun {} (config {})", run.run, &run.config_hash[..12.min(run.config_hash.len())]);
        if let Some(t) = &run.train {
            let _ = writeln!(out, "  best epoch {}, test accuracy {}", t["best_epoch"], t["test_accuracy"]);
        }
        for r in run.tcav.iter().flatten() {
            let _ = writeln!(
                out,
                "  {}: TCAV {} +- {} (random {}), p = {} [{}]",
                r["evaluation_set"].as_str().unwrap_or("?"),
                fmt_num(&r["mean"]),
                fmt_num(&r["std"]),
                fmt_num(&r["random_mean"]),
                fmt_num(&r["p_value"]),
                r["status"].as_str().unwrap_or("?"),
            );
        }
    }
    out
}

fn fmt_num(v: &Value) -> String {
    v.as_f64().map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"))
}
