//! Critique-driven refinement at inference time.
//!
//! The generator writes an initial rationale from the question and its
//! documents. Each round, the critic reviews the current rationale and the
//! generator rewrites it from the rationale plus critique. A fixed budget
//! runs exactly `T` rounds; the auto mode lets the critic end the loop by
//! leading its output with `[Good]`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{Backend, BackendError, BackendRegistry};
use crate::domain::{BenchmarkInstance, CallCounts, RefinementTrajectory, StopReason};
use crate::exec::parallel_map;
use crate::prompts::{
    compose_refinement_input, render, PromptError, PromptInput, PromptKind, TranscriptEntry,
};

#[derive(Debug, Error)]
pub enum CdaError {
    #[error("invalid refinement mode `{0}` (expected fixed:T or auto:T with T >= 1)")]
    Mode(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no instances to run")]
    Empty,
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CdaMode {
    /// Exactly `T` critique and refinement rounds.
    Fixed(usize),
    /// Up to `max_T` rounds, ending early when the critic says `[Good]`.
    Auto(usize),
}

impl CdaMode {
    pub fn budget(&self) -> usize {
        match *self {
            CdaMode::Fixed(t) | CdaMode::Auto(t) => t,
        }
    }
}

impl fmt::Display for CdaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CdaMode::Fixed(t) => write!(f, "fixed:{t}"),
            CdaMode::Auto(t) => write!(f, "auto:{t}"),
        }
    }
}

impl FromStr for CdaMode {
    type Err = CdaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CdaError::Mode(s.to_string());
        let (kind, n) = s.split_once(':').ok_or_else(bad)?;
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        match kind.trim() {
            "fixed" => Ok(CdaMode::Fixed(n)),
            "auto" if n >= 1 => Ok(CdaMode::Auto(n)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for CdaMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CdaMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdaConfig {
    pub generator: String,
    pub critic: String,
    pub mode: CdaMode,
    #[serde(default)]
    pub record_prompts: bool,
    /// Pass the gold answer into the initial rationale prompt. Off for
    /// evaluation runs.
    #[serde(default)]
    pub answer_hint: bool,
}

/// Leading control token of a critic output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Good,
    Bad,
    /// No token; treated like `Bad` with the whole text as critique.
    Missing,
}

/// Splits a critic output into its verdict and critique body. The token must
/// lead the trimmed output and match case-sensitively.
pub fn parse_verdict(output: &str) -> (Verdict, &str) {
    let trimmed = output.trim();
    if let Some(rest) = trimmed.strip_prefix("[Good]") {
        (Verdict::Good, rest.trim_start())
    } else if let Some(rest) = trimmed.strip_prefix("[Bad]") {
        (Verdict::Bad, rest.trim_start())
    } else {
        (Verdict::Missing, output)
    }
}

pub struct CdaRunner {
    pub cfg: CdaConfig,
    generator: Arc<dyn Backend>,
    critic: Arc<dyn Backend>,
}

/// A trajectory plus the prompts sent while producing it.
#[derive(Debug, Clone, PartialEq)]
pub struct CdaOutcome {
    pub trajectory: RefinementTrajectory,
    pub transcript: Vec<TranscriptEntry>,
}

impl CdaRunner {
    pub fn new(cfg: CdaConfig, generator: Arc<dyn Backend>, critic: Arc<dyn Backend>) -> Self {
        CdaRunner { cfg, generator, critic }
    }

    pub fn from_registry(cfg: CdaConfig, reg: &BackendRegistry) -> Result<Self, CdaError> {
        let generator = reg.get(&cfg.generator)?;
        let critic = reg.get(&cfg.critic)?;
        Ok(CdaRunner::new(cfg, generator, critic))
    }

    fn initial_prompt(&self, inst: &BenchmarkInstance) -> Result<String, PromptError> {
        let mut input = PromptInput::new(&inst.documents).slot("question", &inst.question);
        if self.cfg.answer_hint {
            input = input.slot("answer", inst.answer_display());
        }
        Ok(render(PromptKind::CdaRationale, &input)?.text)
    }

    fn critique_prompt(&self, inst: &BenchmarkInstance, current: &str) -> Result<String, PromptError> {
        let input = PromptInput::new(&inst.documents)
            .slot("question", &inst.question)
            .slot("weak_rationale", current);
        Ok(render(PromptKind::CdaCritique, &input)?.text)
    }

    /// Runs the refinement loop for one instance. Backend failures end the
    /// run with the states produced so far.
    pub fn run(&self, inst: &BenchmarkInstance) -> CdaOutcome {
        let mut traj = RefinementTrajectory {
            instance_id: inst.id.clone(),
            states: Vec::new(),
            critiques: Vec::new(),
            stop_reason: StopReason::FixedBudgetExhausted,
            calls: CallCounts::default(),
            mode: self.cfg.mode.to_string(),
            halting_critique: None,
            error: None,
        };
        let mut transcript = Vec::new();
        let result = self.drive(inst, &mut traj, &mut transcript);
        if let Err(e) = result {
            traj.stop_reason = StopReason::BackendError;
            traj.error = Some(e);
        }
        if !self.cfg.record_prompts {
            transcript.clear();
        }
        CdaOutcome { trajectory: traj, transcript }
    }

    fn drive(
        &self,
        inst: &BenchmarkInstance,
        traj: &mut RefinementTrajectory,
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Result<(), String> {
        let mut log = |stage: String, kind: PromptKind, prompt: &str| {
            if self.cfg.record_prompts {
                transcript.push(TranscriptEntry {
                    instance_id: inst.id.clone(),
                    stage,
                    kind,
                    prompt: prompt.to_string(),
                });
            }
        };

        let prompt = self.initial_prompt(inst).map_err(|e| e.to_string())?;
        log("generate:0".into(), PromptKind::CdaRationale, &prompt);
        traj.calls.generator += 1;
        let y0 = self.generator.complete(&prompt).map_err(|e| format!("generator: {e}"))?;
        traj.states.push(y0.text);

        let auto = matches!(self.cfg.mode, CdaMode::Auto(_));
        for t in 0..self.cfg.mode.budget() {
            let current = traj.states.last().expect("initial state exists").clone();
            let prompt = self.critique_prompt(inst, &current).map_err(|e| e.to_string())?;
            log(format!("critique:{t}"), PromptKind::CdaCritique, &prompt);
            traj.calls.critic += 1;
            let output = self.critic.complete(&prompt).map_err(|e| format!("critic: {e}"))?.text;

            let (verdict, body) = parse_verdict(&output);
            if auto && verdict == Verdict::Good {
                traj.stop_reason = StopReason::CriticSaidGood;
                traj.halting_critique = Some(body.to_string());
                return Ok(());
            }
            let critique = if body.is_empty() { output.as_str() } else { body };

            let prompt = compose_refinement_input(&current, critique, &inst.question, &inst.documents)
                .map_err(|e| e.to_string())?;
            log(format!("refine:{}", t + 1), PromptKind::CdaRefine, &prompt);
            traj.calls.generator += 1;
            let next = self.generator.complete(&prompt).map_err(|e| format!("generator: {e}"))?;
            traj.critiques.push(critique.to_string());
            traj.states.push(next.text);
        }
        traj.stop_reason = StopReason::FixedBudgetExhausted;
        Ok(())
    }

    /// Runs every instance on up to `jobs` workers, in input order.
    ///
    /// With a checkpoint path, each finished trajectory is appended to that
    /// file as soon as it completes, and trajectories already present are
    /// reused instead of recomputed. A torn final line is discarded.
    pub fn run_batch(
        &self,
        instances: &[BenchmarkInstance],
        jobs: usize,
        checkpoint: Option<&Path>,
    ) -> Result<BatchOutput, CdaError> {
        if instances.is_empty() {
            return Err(CdaError::Empty);
        }
        let mut done: BTreeMap<String, RefinementTrajectory> = match checkpoint {
            Some(path) => load_checkpoint(path, &self.cfg.mode)?,
            None => BTreeMap::new(),
        };
        let wanted: HashSet<&str> = instances.iter().map(|i| i.id.as_str()).collect();
        done.retain(|id, _| wanted.contains(id.as_str()));
        if !done.is_empty() {
            info!("resuming: {} of {} trajectories already done", done.len(), instances.len());
        }

        let writer = match checkpoint {
            Some(path) => Some(Mutex::new(
                OpenOptions::new().create(true).append(true).open(path).map_err(|e| {
                    CdaError::Checkpoint { path: path.display().to_string(), message: e.to_string() }
                })?,
            )),
            None => None,
        };

        let todo: Vec<&BenchmarkInstance> =
            instances.iter().filter(|i| !done.contains_key(&i.id)).collect();
        let fresh = parallel_map(&todo, jobs, |_, inst| {
            let outcome = self.run(inst);
            if let Some(w) = &writer {
                let mut line = serde_json::to_vec(&outcome.trajectory).expect("trajectory serializes");
                line.push(b'\n');
                let mut file = w.lock().expect("checkpoint writer poisoned");
                if let Err(e) = file.write_all(&line).and_then(|_| file.flush()) {
                    warn!("checkpoint write failed: {e}");
                }
            }
            outcome
        });

        let mut transcript = Vec::new();
        for outcome in fresh {
            transcript.extend(outcome.transcript);
            done.insert(outcome.trajectory.instance_id.clone(), outcome.trajectory);
        }
        let trajectories: Vec<RefinementTrajectory> = instances
            .iter()
            .map(|i| done.remove(&i.id).expect("every instance has a trajectory"))
            .collect();
        let summary = BatchSummary::from_trajectories(&trajectories);
        Ok(BatchOutput { trajectories, summary, transcript })
    }
}

fn load_checkpoint(
    path: &Path,
    mode: &CdaMode,
) -> Result<BTreeMap<String, RefinementTrajectory>, CdaError> {
    let err = |message: String| CdaError::Checkpoint { path: path.display().to_string(), message };
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
        Err(e) => return Err(err(e.to_string())),
    };
    let mut done = BTreeMap::new();
    let mut valid_len = 0;
    for line in text.split_inclusive('\n') {
        if !line.ends_with('\n') {
            warn!("{}: dropping torn final line", path.display());
            break;
        }
        let traj: RefinementTrajectory = serde_json::from_str(line.trim_end())
            .map_err(|e| err(format!("line {}: {e}", done.len() + 1)))?;
        if traj.mode != mode.to_string() {
            return Err(err(format!("recorded mode {} differs from {mode}", traj.mode)));
        }
        valid_len += line.len();
        done.insert(traj.instance_id.clone(), traj);
    }
    if valid_len < text.len() {
        let file = OpenOptions::new().write(true).open(path).map_err(|e| err(e.to_string()))?;
        file.set_len(valid_len as u64).map_err(|e| err(e.to_string()))?;
    }
    Ok(done)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub trajectories: Vec<RefinementTrajectory>,
    pub summary: BatchSummary,
    pub transcript: Vec<TranscriptEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub instances: usize,
    pub total_refinements: usize,
    pub mean_refinements: f64,
    pub generator_calls: u64,
    pub critic_calls: u64,
    pub failures: usize,
    pub stop_reasons: BTreeMap<String, usize>,
}

impl BatchSummary {
    pub fn from_trajectories(trajectories: &[RefinementTrajectory]) -> Self {
        let mut s = BatchSummary { instances: trajectories.len(), ..Default::default() };
        for t in trajectories {
            s.total_refinements += t.refinements();
            s.generator_calls += u64::from(t.calls.generator);
            s.critic_calls += u64::from(t.calls.critic);
            if t.stop_reason == StopReason::BackendError {
                s.failures += 1;
            }
            let key = serde_json::to_value(t.stop_reason)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            *s.stop_reasons.entry(key).or_default() += 1;
        }
        if !trajectories.is_empty() {
            s.mean_refinements = s.total_refinements as f64 / trajectories.len() as f64;
        }
        s
    }
}
