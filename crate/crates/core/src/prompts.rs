//! Prompt templates for rationale generation, critique synthesis, critic
//! training and the refinement loop.
//!
//! Templates are plain-text assets under `templates/` with `{slot}` markers.
//! Rendering is a single left-to-right pass, so braces inside slot values are
//! never re-expanded. Documents render as
//! `Document [k] (Title: ...): contents`, one block per document, blocks
//! separated by a blank line. Output always uses LF line endings.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Benchmark, Document};

/// Bumped whenever any template text changes.
pub const TEMPLATE_VERSION: &str = "1";

const RATIONALE_SYNTHESIS: &str = include_str!("../templates/rationale_synthesis.txt");
const CRITIQUE_SYNTHESIS: &str = include_str!("../templates/critique_synthesis.txt");
const WEAK_RATIONALE_CRITIQUE: &str = include_str!("../templates/weak_rationale_critique.txt");
const CDA_RATIONALE: &str = include_str!("../templates/cda_rationale.txt");
const CDA_REFINE: &str = include_str!("../templates/cda_refine.txt");
const CFT_TARGET: &str = include_str!("../templates/cft_target.txt");
const TASK_INSTRUCTIONS: &str = include_str!("../templates/task_instructions.tsv");

const TASK_INSTRUCTION_TEMPLATE: &str = "{task_instruction}";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("missing slot `{0}`")]
    MissingSlot(String),
    #[error("unexpected slot `{0}`")]
    UnknownSlot(String),
    #[error("no task instruction for benchmark {0}")]
    UnknownBenchmark(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RenderWarning {
    /// The benchmark has no task instruction; an empty one was used.
    UnknownBenchmark(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    /// Rationale generation for critique synthesis, with gold answer.
    RationaleSynthesis,
    /// Per-benchmark instruction appended to rationale synthesis.
    TaskInstruction,
    /// Critique generation contrasting a weak and a gold rationale.
    CritiqueSynthesis,
    /// Input side of the augmented critique used for critique fine-tuning.
    CftAugmented,
    /// Prompt shared by the chosen and rejected critiques of a preference pair.
    CpoPrompt,
    /// Initial rationale in the refinement loop.
    CdaRationale,
    /// Critique of the current rationale in the refinement loop.
    CdaCritique,
    /// Refinement of the current rationale given a critique.
    CdaRefine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SlotSource {
    Caller,
    /// Filled from the document list.
    Documents,
    /// Filled from the task-instruction table.
    Benchmark,
}

/// A `{name}` placeholder. Optional slots drop themselves together with the
/// `lead` text right before them when no value is supplied.
#[derive(Debug, Clone, Copy)]
pub struct SlotSpec {
    pub name: &'static str,
    source: SlotSource,
    optional_lead: Option<&'static str>,
}

impl SlotSpec {
    const fn caller(name: &'static str) -> Self {
        SlotSpec { name, source: SlotSource::Caller, optional_lead: None }
    }

    const fn optional(name: &'static str, lead: &'static str) -> Self {
        SlotSpec { name, source: SlotSource::Caller, optional_lead: Some(lead) }
    }

    pub fn is_caller_supplied(&self) -> bool {
        self.source == SlotSource::Caller
    }

    pub fn is_optional(&self) -> bool {
        self.optional_lead.is_some()
    }
}

const DOCS: SlotSpec = SlotSpec { name: "documents", source: SlotSource::Documents, optional_lead: None };
const TASK: SlotSpec = SlotSpec {
    name: "task_instruction",
    source: SlotSource::Benchmark,
    optional_lead: Some("\n\n"),
};

impl PromptKind {
    pub const ALL: [PromptKind; 8] = [
        PromptKind::RationaleSynthesis,
        PromptKind::TaskInstruction,
        PromptKind::CritiqueSynthesis,
        PromptKind::CftAugmented,
        PromptKind::CpoPrompt,
        PromptKind::CdaRationale,
        PromptKind::CdaCritique,
        PromptKind::CdaRefine,
    ];

    pub fn template(&self) -> &'static str {
        match self {
            PromptKind::RationaleSynthesis => RATIONALE_SYNTHESIS,
            PromptKind::TaskInstruction => TASK_INSTRUCTION_TEMPLATE,
            PromptKind::CritiqueSynthesis => CRITIQUE_SYNTHESIS,
            PromptKind::CftAugmented | PromptKind::CpoPrompt | PromptKind::CdaCritique => {
                WEAK_RATIONALE_CRITIQUE
            }
            PromptKind::CdaRationale => CDA_RATIONALE,
            PromptKind::CdaRefine => CDA_REFINE,
        }
    }

    /// Every placeholder of the template, caller-supplied or internal.
    pub fn slots(&self) -> &'static [SlotSpec] {
        const RATIONALE: [SlotSpec; 4] =
            [SlotSpec::caller("question"), DOCS, SlotSpec::caller("answer"), TASK];
        const TASK_ONLY: [SlotSpec; 1] = [TASK];
        const CONTRAST: [SlotSpec; 4] = [
            SlotSpec::caller("question"),
            DOCS,
            SlotSpec::caller("weak_rationale"),
            SlotSpec::caller("gold_rationale"),
        ];
        const CRITIQUE: [SlotSpec; 3] =
            [SlotSpec::caller("question"), DOCS, SlotSpec::caller("weak_rationale")];
        const CDA_RAT: [SlotSpec; 3] =
            [SlotSpec::caller("question"), DOCS, SlotSpec::optional("answer", ": ")];
        const REFINE: [SlotSpec; 4] = [
            SlotSpec::caller("question"),
            DOCS,
            SlotSpec::caller("weak_rationale"),
            SlotSpec::caller("critique"),
        ];
        match self {
            PromptKind::RationaleSynthesis => &RATIONALE,
            PromptKind::TaskInstruction => &TASK_ONLY,
            PromptKind::CritiqueSynthesis => &CONTRAST,
            PromptKind::CftAugmented | PromptKind::CpoPrompt | PromptKind::CdaCritique => &CRITIQUE,
            PromptKind::CdaRationale => &CDA_RAT,
            PromptKind::CdaRefine => &REFINE,
        }
    }

    fn needs_benchmark(&self) -> bool {
        self.slots().iter().any(|s| s.source == SlotSource::Benchmark)
    }

    pub fn caption(&self) -> &'static str {
        match self {
            PromptKind::RationaleSynthesis => "Rationale generation prompt template for critique synthesis",
            PromptKind::TaskInstruction => "Task-specific instruction used in rationale generation prompt",
            PromptKind::CritiqueSynthesis => "Critique generation prompt template for critique synthesis",
            PromptKind::CftAugmented => {
                "Augmented critique generation prompt template for critique fine-tuning"
            }
            PromptKind::CpoPrompt => {
                "Critique generation prompt template for critique preference optimization"
            }
            PromptKind::CdaRationale => "Rationale generation prompt template for critique-driven alignment",
            PromptKind::CdaCritique => "Critique generation prompt template for critique-driven alignment",
            PromptKind::CdaRefine => "Refinement generation prompt template for critique-driven alignment",
        }
    }

    pub fn file_stem(&self) -> &'static str {
        match self {
            PromptKind::RationaleSynthesis => "rationale_synthesis",
            PromptKind::TaskInstruction => "task_instruction",
            PromptKind::CritiqueSynthesis => "critique_synthesis",
            PromptKind::CftAugmented => "cft_augmented",
            PromptKind::CpoPrompt => "cpo_prompt",
            PromptKind::CdaRationale => "cda_rationale",
            PromptKind::CdaCritique => "cda_critique",
            PromptKind::CdaRefine => "cda_refine",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_stem())
    }
}

/// Task-specific instruction for a benchmark, if one is defined.
pub fn task_instruction(benchmark: &Benchmark) -> Result<&'static str, PromptError> {
    TASK_INSTRUCTIONS
        .lines()
        .filter_map(|line| line.split_once('\t'))
        .find(|(name, _)| *name == benchmark.name())
        .map(|(_, text)| text)
        .ok_or_else(|| PromptError::UnknownBenchmark(benchmark.name().to_string()))
}

/// Slot values and documents for one render call.
#[derive(Debug, Clone, Default)]
pub struct PromptInput<'a> {
    pub slots: BTreeMap<&'static str, String>,
    pub documents: &'a [Document],
    pub benchmark: Option<&'a Benchmark>,
}

impl<'a> PromptInput<'a> {
    pub fn new(documents: &'a [Document]) -> Self {
        PromptInput { slots: BTreeMap::new(), documents, benchmark: None }
    }

    pub fn slot(mut self, name: &'static str, value: impl Into<String>) -> Self {
        self.slots.insert(name, value.into());
        self
    }

    pub fn benchmark(mut self, benchmark: &'a Benchmark) -> Self {
        self.benchmark = Some(benchmark);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    pub warnings: Vec<RenderWarning>,
}

/// One rendered prompt as sent to a backend, for audit logs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub instance_id: String,
    pub stage: String,
    pub kind: PromptKind,
    pub prompt: String,
}

pub fn render_documents(documents: &[Document]) -> String {
    documents
        .iter()
        .enumerate()
        .map(|(i, d)| format!("Document [{}] (Title: {}): {}", i + 1, d.title, d.contents))
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn render(kind: PromptKind, input: &PromptInput<'_>) -> Result<RenderedPrompt, PromptError> {
    let specs = kind.slots();
    for name in input.slots.keys() {
        if !specs.iter().any(|s| s.is_caller_supplied() && s.name == *name) {
            return Err(PromptError::UnknownSlot(name.to_string()));
        }
    }

    let mut warnings = Vec::new();
    let instruction = if kind.needs_benchmark() {
        let benchmark = input
            .benchmark
            .ok_or_else(|| PromptError::MissingSlot("benchmark".into()))?;
        match task_instruction(benchmark) {
            Ok(text) => Some(text),
            Err(_) => {
                warnings.push(RenderWarning::UnknownBenchmark(benchmark.name().to_string()));
                None
            }
        }
    } else {
        None
    };

    let template = kind.template();
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let Some(len) = rest[open + 1..].find('}') else { break };
        let name = &rest[open + 1..open + 1 + len];
        let Some(spec) = specs.iter().find(|s| s.name == name) else {
            out.push_str(&rest[..open + 1]);
            rest = &rest[open + 1..];
            continue;
        };
        out.push_str(&rest[..open]);
        rest = &rest[open + len + 2..];

        let value: Option<String> = match spec.source {
            SlotSource::Documents => {
                if input.documents.is_empty() {
                    rest = rest.trim_start_matches('\n');
                    continue;
                }
                Some(render_documents(input.documents))
            }
            SlotSource::Benchmark => instruction.map(str::to_string),
            SlotSource::Caller => input.slots.get(name).filter(|v| !v.is_empty()).cloned(),
        };
        match (value, spec.optional_lead) {
            (Some(v), _) => out.push_str(&v),
            (None, Some(lead)) => {
                if out.ends_with(lead) {
                    out.truncate(out.len() - lead.len());
                }
            }
            (None, None) => return Err(PromptError::MissingSlot(name.to_string())),
        }
    }
    out.push_str(rest);

    Ok(RenderedPrompt { text: out.replace("\r\n", "\n"), warnings })
}

/// Realizes `y_t ⊕ Δy_t`: the refinement prompt embedding the current
/// rationale and its critique.
pub fn compose_refinement_input(
    current: &str,
    critique: &str,
    question: &str,
    documents: &[Document],
) -> Result<String, PromptError> {
    if critique.is_empty() {
        return Err(PromptError::MissingSlot("critique".into()));
    }
    let input = PromptInput::new(documents)
        .slot("question", question)
        .slot("weak_rationale", current)
        .slot("critique", critique);
    Ok(render(PromptKind::CdaRefine, &input)?.text)
}

/// Training target for critique fine-tuning: the critique followed by the
/// expert rationale as the improvement reference.
pub fn render_cft_target(critique: &str, gold_rationale: &str) -> Result<String, PromptError> {
    if critique.is_empty() {
        return Err(PromptError::MissingSlot("critique".into()));
    }
    if gold_rationale.is_empty() {
        return Err(PromptError::MissingSlot("gold_rationale".into()));
    }
    Ok(CFT_TARGET
        .replacen("{critique}", critique, 1)
        .replacen("{gold_rationale}", gold_rationale, 1)
        .replace("\r\n", "\n"))
}

/// Critique-only target used when no expert rationale exists.
pub fn render_critique_only_target(critique: &str) -> Result<String, PromptError> {
    if critique.is_empty() {
        return Err(PromptError::MissingSlot("critique".into()));
    }
    let first_line = CFT_TARGET.lines().next().unwrap_or_default();
    Ok(first_line.replacen("{critique}", critique, 1).replace("\r\n", "\n"))
}
