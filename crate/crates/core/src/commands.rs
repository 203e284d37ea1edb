//! Subcommand implementations behind the `alignrag` binary.
//!
//! Every command reads a [`Config`], writes into its output directory and
//! reports failures as a [`CommandError`] carrying the process exit code.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, BackendRegistry};
use crate::cda::{CdaMode, CdaRunner};
use crate::config::Config;
use crate::corpus_builder::{build_hierarchy, CorpusError, CorpusManifest, LabeledInstance};
use crate::critique_synthesis::{
    cft_rows, cpo_rows, SynthesisMode, SynthesisSummary, SynthesizedInstance, Synthesizer,
};
use crate::domain::{BenchmarkInstance, ControlToken, RefinementTrajectory, StopReason};
use crate::evaluation::report::{build_report, read_curve_csv, render_curves_svg, write_bundle};
use crate::io::{file_sha256, load_instances, read_jsonl, write_json, write_jsonl, write_text};
use crate::retrieval::{attach_lexical, attach_run, load_corpus, load_retrieval_run};

#[derive(Debug, Error)]
pub enum CommandError {
    /// Bad configuration, missing inputs or invalid arguments.
    #[error("{0}")]
    Config(String),
    /// Inputs cannot satisfy the requested sample.
    #[error("{0}")]
    Shortfall(String),
    /// Model calls failed for every instance.
    #[error("{0}")]
    Backend(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 1,
            CommandError::Shortfall(_) => 2,
            CommandError::Backend(_) => 3,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CommandError {
    CommandError::Config(e.to_string())
}

impl From<BackendError> for CommandError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::AuthMissing(_) | BackendError::Config(_) | BackendError::UnknownBackend(_) => {
                CommandError::Config(e.to_string())
            }
            other => CommandError::Backend(other.to_string()),
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

pub fn load_config(path: &Path, o: &Overrides) -> Result<Config, CommandError> {
    let mut cfg = Config::load(path).map_err(config_err)?;
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = o.jobs {
        cfg.jobs = jobs.max(1);
    }
    if let Some(out) = &o.out_dir {
        cfg.data.out_dir = std::env::current_dir().map_err(config_err)?.join(out);
    }
    Ok(cfg)
}

fn registry(cfg: &Config) -> Result<BackendRegistry, CommandError> {
    Ok(BackendRegistry::from_specs(&cfg.backends, &cfg.base_dir)?)
}

/// Loads instances and attaches documents from the configured run file or,
/// failing that, from BM25 over the configured corpus.
pub fn load_with_documents(cfg: &Config, path: &Path) -> Result<Vec<BenchmarkInstance>, CommandError> {
    let mut instances = load_instances(&cfg.resolve(path)).map_err(config_err)?;
    let Some(corpus_path) = &cfg.data.corpus else {
        return Ok(instances);
    };
    let corpus = load_corpus(&cfg.resolve(corpus_path)).map_err(config_err)?;
    match &cfg.data.run {
        Some(run_path) => {
            let (run, warnings) = load_retrieval_run(&cfg.resolve(run_path)).map_err(config_err)?;
            for w in warnings {
                warn!("{w:?}");
            }
            attach_run(&mut instances, &run, &corpus, cfg.data.top_k).map_err(config_err)?;
        }
        None => attach_lexical(&mut instances, &corpus, cfg.data.top_k).map_err(config_err)?,
    }
    Ok(instances)
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf, CommandError> {
    p.as_ref().ok_or_else(|| CommandError::Config(format!("config is missing `{key}`")))
}

pub fn corpus_path(cfg: &Config) -> PathBuf {
    cfg.out_dir().join("corpus.jsonl")
}

/// Builds the labeled corpus and its manifest.
pub fn build_corpus(cfg: &Config) -> Result<CorpusManifest, CommandError> {
    let instances_path = required(&cfg.data.instances, "data.instances")?;
    let instances = load_with_documents(cfg, instances_path)?;
    let build = cfg.build_config();

    let mut input_hashes = BTreeMap::new();
    for (key, p) in [
        ("instances", Some(instances_path)),
        ("corpus", cfg.data.corpus.as_ref()),
        ("run", cfg.data.run.as_ref()),
    ] {
        if let Some(p) = p {
            input_hashes.insert(key.to_string(), file_sha256(&cfg.resolve(p)).map_err(config_err)?);
        }
    }
    let mut manifest = CorpusManifest {
        seed: build.seed,
        quotas: build.quotas,
        completeness_rule: build.completeness_rule,
        h1_context_size: build.h1_context_size,
        shortfalls: Vec::new(),
        input_hashes,
        counts: BTreeMap::new(),
        output_hash: None,
    };
    let out_dir = cfg.out_dir();
    let built = match build_hierarchy(&instances, &build, cfg.jobs) {
        Ok(b) => b,
        Err(CorpusError::QuotaShortfall(shortfalls)) => {
            manifest.shortfalls = shortfalls.clone();
            write_json(&out_dir.join("corpus_manifest.json"), &manifest).map_err(config_err)?;
            return Err(CommandError::Shortfall(CorpusError::QuotaShortfall(shortfalls).to_string()));
        }
        Err(e) => return Err(config_err(e)),
    };
    for row in &built.instances {
        if let Err(msg) = row.verify(build.completeness_rule) {
            return Err(CommandError::Config(format!("label self-check failed: {msg}")));
        }
    }
    let out = corpus_path(cfg);
    write_jsonl(&out, &built.instances).map_err(config_err)?;
    manifest.counts = built.counts;
    manifest.output_hash = Some(file_sha256(&out).map_err(config_err)?);
    write_json(&out_dir.join("corpus_manifest.json"), &manifest).map_err(config_err)?;
    info!("wrote {} labeled instances to {}", built.instances.len(), out.display());
    Ok(manifest)
}

/// Default fine-tuning settings handed to the external trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerDefaults {
    pub learning_rate: f64,
    pub epochs: u32,
    pub per_device_batch_size: u32,
    pub optimizer: String,
    pub lora_rank: u32,
    pub lora_alpha: u32,
    pub cutoff_len: u32,
    pub warmup_ratio: f64,
    pub bf16: bool,
    /// Preference sharpness for pairwise training; not fixed by the recipe.
    pub preference_beta: f64,
}

impl Default for TrainerDefaults {
    fn default() -> Self {
        TrainerDefaults {
            learning_rate: 1e-5,
            epochs: 2,
            per_device_batch_size: 16,
            optimizer: "adamw".into(),
            lora_rank: 16,
            lora_alpha: 64,
            cutoff_len: 6144,
            warmup_ratio: 0.1,
            bf16: true,
            preference_beta: 0.1,
        }
    }
}

fn write_datasets(
    dir: &Path,
    instances: &[SynthesizedInstance],
    auto_labels: bool,
) -> Result<SynthesisSummary, CommandError> {
    let cft = cft_rows(instances, auto_labels).map_err(config_err)?;
    let (cpo, dropped) = cpo_rows(instances).map_err(config_err)?;
    write_jsonl(&dir.join("cft.jsonl"), &cft).map_err(config_err)?;
    write_jsonl(&dir.join("cpo.jsonl"), &cpo).map_err(config_err)?;
    if dropped > 0 {
        warn!("dropped {dropped} preference pairs with identical critiques");
    }
    let good = instances.iter().filter(|s| s.record.control_token == ControlToken::Good).count();
    Ok(SynthesisSummary {
        instances: instances.len(),
        succeeded: instances.len(),
        failed: 0,
        cft_rows: cft.len(),
        cpo_rows: cpo.len(),
        cpo_dropped_identical: dropped,
        good_labels: good,
        bad_labels: instances.len() - good,
    })
}

pub fn synth_dir(cfg: &Config) -> PathBuf {
    cfg.out_dir().join("synth")
}

/// Runs critique synthesis over the labeled corpus and writes records,
/// prompt transcript and both training files.
pub fn synth_critiques(
    cfg: &Config,
    mode: Option<SynthesisMode>,
    auto_labels: bool,
) -> Result<SynthesisSummary, CommandError> {
    let mut scfg = cfg
        .synth
        .clone()
        .ok_or_else(|| CommandError::Config("config has no [synth] section".into()))?;
    if let Some(m) = mode {
        scfg.mode = m;
    }
    scfg.auto_labels |= auto_labels;
    let reg = registry(cfg)?;
    let synth = Synthesizer::from_registry(scfg.clone(), &reg).map_err(|e| match e {
        crate::critique_synthesis::SynthesisError::Backend(b) => CommandError::from(b),
        other => config_err(other),
    })?;

    let corpus_file = corpus_path(cfg);
    let corpus: Vec<LabeledInstance> = read_jsonl(&corpus_file).map_err(config_err)?;
    if corpus.is_empty() {
        return Err(CommandError::Config(format!("{} is empty", corpus_file.display())));
    }
    let run = synth.run(&corpus, cfg.jobs);
    let dir = synth_dir(cfg);
    write_jsonl(&dir.join("records.jsonl"), &run.instances).map_err(config_err)?;
    write_jsonl(&dir.join("failures.jsonl"), &run.failed).map_err(config_err)?;
    write_jsonl(&dir.join("prompts.jsonl"), &run.transcript()).map_err(config_err)?;
    if run.instances.is_empty() {
        return Err(CommandError::Backend(format!(
            "all {} instances failed; first: {}",
            run.failed.len(),
            run.failed.first().map(|f| f.error.as_str()).unwrap_or("")
        )));
    }
    let mut summary = write_datasets(&dir, &run.instances, scfg.auto_labels)?;
    summary.instances = corpus.len();
    summary.failed = run.failed.len();
    write_json(&dir.join("summary.json"), &summary).map_err(config_err)?;
    Ok(summary)
}

/// Re-exports training files from stored synthesis records, plus the
/// trainer defaults.
pub fn export_train(cfg: &Config, auto_labels: Option<bool>) -> Result<SynthesisSummary, CommandError> {
    let records: Vec<SynthesizedInstance> =
        read_jsonl(&synth_dir(cfg).join("records.jsonl")).map_err(config_err)?;
    let auto = auto_labels.unwrap_or_else(|| cfg.synth.as_ref().is_some_and(|s| s.auto_labels));
    let dir = cfg.out_dir().join("train");
    let summary = write_datasets(&dir, &records, auto)?;
    write_json(&dir.join("train_config.json"), &TrainerDefaults::default()).map_err(config_err)?;
    Ok(summary)
}

pub fn cda_dir(cfg: &Config) -> PathBuf {
    cfg.out_dir().join("cda")
}

fn eval_instances(cfg: &Config) -> Result<Vec<BenchmarkInstance>, CommandError> {
    let path = cfg
        .data
        .eval_instances
        .as_ref()
        .or(cfg.data.instances.as_ref())
        .ok_or_else(|| CommandError::Config("config is missing `data.eval_instances`".into()))?;
    load_with_documents(cfg, path)
}

/// Runs the refinement loop over the evaluation instances, then writes the
/// report bundle.
pub fn run_cda(cfg: &Config, mode: Option<CdaMode>) -> Result<crate::cda::BatchSummary, CommandError> {
    let mut ccfg = cfg
        .cda
        .clone()
        .ok_or_else(|| CommandError::Config("config has no [cda] section".into()))?;
    if let Some(m) = mode {
        ccfg.mode = m;
    }
    let reg = registry(cfg)?;
    let runner = CdaRunner::from_registry(ccfg.clone(), &reg).map_err(config_err)?;
    let instances = eval_instances(cfg)?;
    let dir = cda_dir(cfg);
    std::fs::create_dir_all(&dir).map_err(config_err)?;
    let checkpoint = dir.join(format!("checkpoint-{}.jsonl", ccfg.mode.to_string().replace(':', "-")));
    let out = runner.run_batch(&instances, cfg.jobs, Some(&checkpoint)).map_err(config_err)?;

    write_jsonl(&dir.join("trajectories.jsonl"), &out.trajectories).map_err(config_err)?;
    write_json(&dir.join("summary.json"), &out.summary).map_err(config_err)?;
    if ccfg.record_prompts {
        write_jsonl(&dir.join("prompts.jsonl"), &out.transcript).map_err(config_err)?;
    }
    if out.trajectories.iter().all(|t| t.stop_reason == StopReason::BackendError) {
        return Err(CommandError::Backend(format!(
            "all {} runs failed; first: {}",
            out.trajectories.len(),
            out.trajectories[0].error.as_deref().unwrap_or("")
        )));
    }
    evaluate_with(cfg, &instances, &out.trajectories)?;
    let _ = std::fs::remove_file(&checkpoint);
    Ok(out.summary)
}

pub fn report_dir(cfg: &Config) -> PathBuf {
    cfg.out_dir().join("report")
}

fn evaluate_with(
    cfg: &Config,
    instances: &[BenchmarkInstance],
    trajectories: &[RefinementTrajectory],
) -> Result<(), CommandError> {
    let bundle = build_report(instances, trajectories, &cfg.evaluate).map_err(config_err)?;
    write_bundle(&report_dir(cfg), &bundle).map_err(config_err)
}

/// Scores stored trajectories and writes the report bundle.
pub fn evaluate(cfg: &Config, trajectories: Option<&Path>) -> Result<(), CommandError> {
    let path = trajectories.map_or_else(|| cda_dir(cfg).join("trajectories.jsonl"), Path::to_path_buf);
    let trajs: Vec<RefinementTrajectory> = read_jsonl(&path).map_err(config_err)?;
    let instances = eval_instances(cfg)?;
    evaluate_with(cfg, &instances, &trajs)
}

/// Renders `iteration_curve.csv` as an SVG line chart.
pub fn plot(input: &Path, output: &Path) -> Result<(), CommandError> {
    let points = read_curve_csv(input).map_err(config_err)?;
    if points.is_empty() {
        return Err(CommandError::Config(format!("{} has no rows", input.display())));
    }
    write_text(output, &render_curves_svg(&points)).map_err(config_err)
}
