//! Contrastive critique synthesis and critic-training dataset emission.
//!
//! For each labeled instance a weak model and a strong model both write a
//! rationale for the gold answer. A critic model then critiques the weak
//! rationale, either with the strong rationale in view (contrastive) or
//! without it (vanilla). The critique is paired with the strong rationale to
//! form the fine-tuning target, and optionally with a weaker critic's output
//! to form a preference pair.

use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{Backend, BackendError, BackendRegistry};
use crate::corpus_builder::LabeledInstance;
use crate::domain::{
    BenchmarkInstance, ControlToken, Document, CorrectnessBasis, CritiqueRecord, DomainError,
    GranularityVector, PreferencePair, ResponsePair,
};
use crate::evaluation::metrics::accuracy;
use crate::exec::parallel_map;
use crate::prompts::{
    render, render_cft_target, render_critique_only_target, PromptError, PromptInput, PromptKind,
    RenderedPrompt, TranscriptEntry,
};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("invalid synthesis config: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("row {row}: {message}")]
    Schema { row: usize, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisMode {
    /// The critic sees both the weak and the strong rationale.
    #[default]
    Contrastive,
    /// The critic sees the weak rationale only.
    Vanilla,
}

impl std::str::FromStr for SynthesisMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "contrastive" => Ok(SynthesisMode::Contrastive),
            "vanilla" => Ok(SynthesisMode::Vanilla),
            other => Err(format!("unknown synthesis mode `{other}` (expected contrastive|vanilla)")),
        }
    }
}

/// Backend ids and switches for one synthesis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    pub weak_backend: String,
    #[serde(default)]
    pub strong_backend: Option<String>,
    pub critic_backend: String,
    #[serde(default)]
    pub mode: SynthesisMode,
    #[serde(default)]
    pub auto_labels: bool,
    /// Critic whose outputs become the rejected side of preference pairs.
    /// Preference data is only produced when this is set.
    #[serde(default)]
    pub weak_critic_backend: Option<String>,
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<(), SynthesisError> {
        if self.mode == SynthesisMode::Contrastive && self.strong_backend.is_none() {
            return Err(SynthesisError::Config(
                "contrastive mode needs a strong backend".into(),
            ));
        }
        Ok(())
    }
}

/// Resolved backends for a synthesis run.
#[derive(Clone)]
pub struct Synthesizer {
    pub cfg: SynthesisConfig,
    weak: Arc<dyn Backend>,
    strong: Option<Arc<dyn Backend>>,
    critic: Arc<dyn Backend>,
    weak_critic: Option<Arc<dyn Backend>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    WeakRationale,
    StrongRationale,
    Critique,
    PreferenceChosen,
    PreferenceRejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedInstance {
    pub instance_id: String,
    pub stage: Stage,
    pub error: String,
}

/// Everything produced for one instance. Persisted one per line so the
/// training files can be re-exported without calling any model again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesizedInstance {
    pub record: CritiqueRecord,
    pub granularity: GranularityVector,
    pub tier: String,
    pub raw_critique: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preference: Option<PreferencePair>,
    #[serde(skip)]
    pub transcript: Vec<TranscriptEntry>,
}

fn call(
    backend: &dyn Backend,
    prompt: &RenderedPrompt,
    stage: Stage,
) -> Result<String, (Stage, String)> {
    backend.complete(&prompt.text).map(|r| r.text).map_err(|e| (stage, e.to_string()))
}

impl Synthesizer {
    pub fn new(
        cfg: SynthesisConfig,
        weak: Arc<dyn Backend>,
        strong: Option<Arc<dyn Backend>>,
        critic: Arc<dyn Backend>,
        weak_critic: Option<Arc<dyn Backend>>,
    ) -> Result<Self, SynthesisError> {
        cfg.validate()?;
        Ok(Synthesizer { cfg, weak, strong, critic, weak_critic })
    }

    pub fn from_registry(cfg: SynthesisConfig, reg: &BackendRegistry) -> Result<Self, SynthesisError> {
        let weak = reg.get(&cfg.weak_backend)?;
        let strong = cfg.strong_backend.as_deref().map(|id| reg.get(id)).transpose()?;
        let critic = reg.get(&cfg.critic_backend)?;
        let weak_critic = cfg.weak_critic_backend.as_deref().map(|id| reg.get(id)).transpose()?;
        Synthesizer::new(cfg, weak, strong, critic, weak_critic)
    }

    fn rationale_prompt(&self, inst: &BenchmarkInstance) -> Result<RenderedPrompt, PromptError> {
        let input = PromptInput::new(&inst.documents)
            .slot("question", &inst.question)
            .slot("answer", inst.answer_display())
            .benchmark(&inst.benchmark);
        let prompt = render(PromptKind::RationaleSynthesis, &input)?;
        for w in &prompt.warnings {
            warn!("{}: {w:?}", inst.id);
        }
        Ok(prompt)
    }

    /// Weak and strong rationales for the gold answer. Without a strong
    /// backend the expert side is left empty.
    pub fn generate_pair(
        &self,
        inst: &BenchmarkInstance,
    ) -> Result<(String, Option<String>), (Stage, String)> {
        let prompt = self.rationale_prompt(inst).map_err(|e| (Stage::WeakRationale, e.to_string()))?;
        let y_unexp = call(self.weak.as_ref(), &prompt, Stage::WeakRationale)?;
        let y_exp = match &self.strong {
            Some(strong) => Some(call(strong.as_ref(), &prompt, Stage::StrongRationale)?),
            None => None,
        };
        Ok((y_unexp, y_exp))
    }

    /// Critique prompt for the configured mode.
    pub fn critique_prompt(
        &self,
        inst: &BenchmarkInstance,
        y_unexp: &str,
        y_exp: Option<&str>,
    ) -> Result<(PromptKind, RenderedPrompt), PromptError> {
        let input = PromptInput::new(&inst.documents)
            .slot("question", &inst.question)
            .slot("weak_rationale", y_unexp);
        match self.cfg.mode {
            SynthesisMode::Contrastive => {
                let gold = y_exp.ok_or_else(|| PromptError::MissingSlot("gold_rationale".into()))?;
                let input = input.slot("gold_rationale", gold);
                Ok((PromptKind::CritiqueSynthesis, render(PromptKind::CritiqueSynthesis, &input)?))
            }
            SynthesisMode::Vanilla => {
                Ok((PromptKind::CdaCritique, render(PromptKind::CdaCritique, &input)?))
            }
        }
    }

    /// Runs every stage for one instance. Any failure discards the whole
    /// instance.
    pub fn synthesize(&self, labeled: &LabeledInstance) -> Result<SynthesizedInstance, FailedInstance> {
        let inst = &labeled.instance;
        let fail = |(stage, error): (Stage, String)| FailedInstance {
            instance_id: inst.id.clone(),
            stage,
            error,
        };
        let mut transcript = Vec::new();
        let mut log = |stage: &str, kind: PromptKind, prompt: &RenderedPrompt| {
            transcript.push(TranscriptEntry {
                instance_id: inst.id.clone(),
                stage: stage.to_string(),
                kind,
                prompt: prompt.text.clone(),
            })
        };

        let rationale = self
            .rationale_prompt(inst)
            .map_err(|e| fail((Stage::WeakRationale, e.to_string())))?;
        log("rationale", PromptKind::RationaleSynthesis, &rationale);
        let (y_unexp, y_exp) = self.generate_pair(inst).map_err(fail)?;
        match (&y_exp, &self.strong) {
            (Some(y_exp), Some(strong)) => {
                ResponsePair::new(y_exp.clone(), y_unexp.clone(), strong.id(), self.weak.id())
                    .map_err(|e| fail((Stage::StrongRationale, e.to_string())))?;
            }
            _ if y_unexp.is_empty() => {
                return Err(fail((Stage::WeakRationale, DomainError::EmptyResponse.to_string())))
            }
            _ => {}
        }

        let (kind, prompt) = self
            .critique_prompt(inst, &y_unexp, y_exp.as_deref())
            .map_err(|e| fail((Stage::Critique, e.to_string())))?;
        log("critique", kind, &prompt);
        let raw_critique = call(self.critic.as_ref(), &prompt, Stage::Critique).map_err(fail)?;
        let critique = augment_critique(&raw_critique, y_exp.as_deref())
            .map_err(|e| fail((Stage::Critique, e.to_string())))?;

        let record = CritiqueRecord {
            instance_id: inst.id.clone(),
            question: inst.question.clone(),
            documents: inst.documents.clone(),
            y_unexp: y_unexp.clone(),
            critique,
            y_exp,
            control_token: label_control_token(&y_unexp, &inst.gold_answers),
            correctness_basis: CorrectnessBasis::GoldMatch,
        };
        record.validate().map_err(|e| fail((Stage::Critique, e.to_string())))?;

        let preference = match &self.weak_critic {
            None => None,
            Some(weak_critic) => {
                let prompt = cpo_prompt(&inst.question, &inst.documents, &y_unexp)
                    .map_err(|e| fail((Stage::PreferenceChosen, e.to_string())))?;
                log("preference", PromptKind::CpoPrompt, &prompt);
                let chosen = call(self.critic.as_ref(), &prompt, Stage::PreferenceChosen).map_err(fail)?;
                let rejected =
                    call(weak_critic.as_ref(), &prompt, Stage::PreferenceRejected).map_err(fail)?;
                Some(PreferencePair {
                    instance_id: inst.id.clone(),
                    question: inst.question.clone(),
                    documents: inst.documents.clone(),
                    y_unexp,
                    critique_rejected: rejected,
                    critique_chosen: chosen,
                })
            }
        };

        Ok(SynthesizedInstance {
            record,
            granularity: labeled.granularity,
            tier: labeled.tier.to_string(),
            raw_critique,
            preference,
            transcript,
        })
    }

    /// Synthesizes every instance on up to `jobs` workers. Results are sorted
    /// by instance id.
    pub fn run(&self, corpus: &[LabeledInstance], jobs: usize) -> SynthesisRun {
        let mut ok = Vec::new();
        let mut failed = Vec::new();
        for outcome in parallel_map(corpus, jobs, |_, l| self.synthesize(l)) {
            match outcome {
                Ok(s) => ok.push(s),
                Err(f) => {
                    warn!("{} failed at {:?}: {}", f.instance_id, f.stage, f.error);
                    failed.push(f);
                }
            }
        }
        ok.sort_by(|a, b| a.record.instance_id.cmp(&b.record.instance_id));
        failed.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
        SynthesisRun { instances: ok, failed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisRun {
    pub instances: Vec<SynthesizedInstance>,
    pub failed: Vec<FailedInstance>,
}

impl SynthesisRun {
    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.instances.iter().flat_map(|s| s.transcript.iter().cloned()).collect()
    }
}

/// Turns a raw critique into the fine-tuning target: the critique followed
/// by the expert rationale, or the critique alone when no expert exists.
pub fn augment_critique(raw_critique: &str, y_exp: Option<&str>) -> Result<String, PromptError> {
    match y_exp {
        Some(gold) => render_cft_target(raw_critique, gold),
        None => render_critique_only_target(raw_critique),
    }
}

/// `[Good]` exactly when the response passes the accuracy rule.
pub fn label_control_token(y_unexp: &str, gold_answers: &[String]) -> ControlToken {
    if accuracy(y_unexp, gold_answers) {
        ControlToken::Good
    } else {
        ControlToken::Bad
    }
}

fn cpo_prompt(question: &str, documents: &[Document], y_unexp: &str) -> Result<RenderedPrompt, PromptError> {
    let input = PromptInput::new(documents)
        .slot("question", question)
        .slot("weak_rationale", y_unexp);
    render(PromptKind::CpoPrompt, &input)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowMeta {
    pub instance_id: String,
    pub granularity: GranularityVector,
    pub tier: String,
}

/// One critique fine-tuning example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CftRow {
    pub input: String,
    pub target: String,
    pub meta: RowMeta,
}

/// One preference example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpoRow {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub meta: RowMeta,
}

fn meta(s: &SynthesizedInstance) -> RowMeta {
    RowMeta {
        instance_id: s.record.instance_id.clone(),
        granularity: s.granularity,
        tier: s.tier.clone(),
    }
}

/// Checks a fine-tuning row against the schema the trainer relies on.
pub fn validate_cft_row(row: &CftRow, auto_labels: bool) -> Result<(), String> {
    if row.input.is_empty() {
        return Err("empty input".into());
    }
    if row.meta.instance_id.is_empty() {
        return Err("empty instance_id".into());
    }
    let prefixed = row.target.starts_with("[Good] ") || row.target.starts_with("[Bad] ");
    if auto_labels && !prefixed {
        return Err("target lacks a control token".into());
    }
    if !auto_labels && prefixed {
        return Err("target carries a control token without auto labels".into());
    }
    let body = row.target.split_once("] ").filter(|_| prefixed).map_or(row.target.as_str(), |(_, b)| b);
    if body.is_empty() {
        return Err("empty target".into());
    }
    Ok(())
}

/// Fine-tuning rows in instance-id order; the first invalid row aborts.
pub fn cft_rows(run: &[SynthesizedInstance], auto_labels: bool) -> Result<Vec<CftRow>, SynthesisError> {
    let mut sorted: Vec<&SynthesizedInstance> = run.iter().collect();
    sorted.sort_by(|a, b| a.record.instance_id.cmp(&b.record.instance_id));
    sorted
        .into_iter()
        .enumerate()
        .map(|(row, s)| {
            let input = render(
                PromptKind::CftAugmented,
                &PromptInput::new(&s.record.documents)
                    .slot("question", &s.record.question)
                    .slot("weak_rationale", &s.record.y_unexp),
            )
            .map_err(|e| SynthesisError::Schema { row, message: e.to_string() })?
            .text;
            let target = if auto_labels {
                format!("{} {}", s.record.control_token.marker(), s.record.critique)
            } else {
                s.record.critique.clone()
            };
            let cft = CftRow { input, target, meta: meta(s) };
            validate_cft_row(&cft, auto_labels).map_err(|message| SynthesisError::Schema { row, message })?;
            Ok(cft)
        })
        .collect()
}

/// Preference rows in instance-id order, with the number of pairs dropped
/// because both critics produced the same bytes.
pub fn cpo_rows(run: &[SynthesizedInstance]) -> Result<(Vec<CpoRow>, usize), SynthesisError> {
    let mut sorted: Vec<&SynthesizedInstance> = run.iter().collect();
    sorted.sort_by(|a, b| a.record.instance_id.cmp(&b.record.instance_id));
    let mut rows = Vec::new();
    let mut dropped = 0;
    for s in sorted {
        let Some(pair) = &s.preference else { continue };
        if pair.validate().is_err() {
            dropped += 1;
            continue;
        }
        let prompt = cpo_prompt(&pair.question, &pair.documents, &pair.y_unexp)?.text;
        rows.push(CpoRow {
            prompt,
            chosen: pair.critique_chosen.clone(),
            rejected: pair.critique_rejected.clone(),
            meta: meta(s),
        });
    }
    Ok((rows, dropped))
}

/// Totals for a synthesis run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisSummary {
    pub instances: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub cft_rows: usize,
    pub cpo_rows: usize,
    pub cpo_dropped_identical: usize,
    pub good_labels: usize,
    pub bad_labels: usize,
}
