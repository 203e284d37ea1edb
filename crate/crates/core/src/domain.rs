//! Value types shared by every pipeline stage.
//!
//! Nothing in here performs I/O or talks to a model. Types that carry
//! invariants validate them on construction and again on deserialization,
//! so a value that exists is a value that is well-formed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("instance {0}: gold_answers must be non-empty")]
    NoGoldAnswers(String),
    #[error("instance {0}: gold answer alias is blank")]
    BlankAlias(String),
    #[error("document contents must be non-empty (title: {0:?})")]
    EmptyDocument(String),
    #[error("instance {0}: document {1} is sampled from the instance itself")]
    SelfSourcedDocument(String, usize),
    #[error("granularity ({r},{h},{m}) violates m => h => r")]
    InvalidGranularity { r: u8, h: u8, m: u8 },
    #[error("completeness can only be set for helpful (H3/H4) tiers")]
    CompletenessOnUnhelpfulTier,
    #[error("support count {0} outside 1..=5")]
    SupportCountOutOfRange(u8),
    #[error("response pair texts must be non-empty")]
    EmptyResponse,
    #[error("critique must be non-empty")]
    EmptyCritique,
    #[error("chosen and rejected critiques are identical")]
    IdenticalCritiques,
}

/// QA benchmark an instance belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Benchmark {
    PopQa,
    TriviaQa,
    Nq,
    TwoWikiMultiHopQa,
    Asqa,
    HotpotQa,
    Squad,
    Custom(String),
}

impl Benchmark {
    /// Benchmarks used for critic training and in-domain evaluation.
    pub const IN_DOMAIN: [Benchmark; 5] = [
        Benchmark::PopQa,
        Benchmark::TriviaQa,
        Benchmark::Nq,
        Benchmark::TwoWikiMultiHopQa,
        Benchmark::Asqa,
    ];

    /// Held-out benchmarks used only for out-of-domain evaluation.
    pub const OUT_OF_DOMAIN: [Benchmark; 2] = [Benchmark::HotpotQa, Benchmark::Squad];

    pub fn name(&self) -> &str {
        match self {
            Benchmark::PopQa => "PopQA",
            Benchmark::TriviaQa => "TriviaQA",
            Benchmark::Nq => "NQ",
            Benchmark::TwoWikiMultiHopQa => "2WikiMultiHopQA",
            Benchmark::Asqa => "ASQA",
            Benchmark::HotpotQa => "HotpotQA",
            Benchmark::Squad => "SQuAD",
            Benchmark::Custom(name) => name,
        }
    }

    /// ASQA is scored with short-answer coverage; everything else with accuracy.
    pub fn uses_str_em(&self) -> bool {
        matches!(self, Benchmark::Asqa)
    }
}

impl From<String> for Benchmark {
    fn from(s: String) -> Self {
        match s.to_ascii_lowercase().as_str() {
            "popqa" => Benchmark::PopQa,
            "triviaqa" => Benchmark::TriviaQa,
            "nq" | "naturalquestions" | "natural questions" => Benchmark::Nq,
            "2wikimultihopqa" | "2wiki" | "multihopqa" => Benchmark::TwoWikiMultiHopQa,
            "asqa" => Benchmark::Asqa,
            "hotpotqa" => Benchmark::HotpotQa,
            "squad" => Benchmark::Squad,
            _ => Benchmark::Custom(s),
        }
    }
}

impl From<Benchmark> for String {
    fn from(b: Benchmark) -> Self {
        b.name().to_string()
    }
}

impl FromStr for Benchmark {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Benchmark::from(s.to_string()))
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub title: String,
    pub contents: String,
    /// Set when the document was borrowed from another query's retrieval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_query_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_score: Option<f64>,
}

impl Document {
    pub fn new(title: impl Into<String>, contents: impl Into<String>) -> Result<Self, DomainError> {
        let doc = Document {
            title: title.into(),
            contents: contents.into(),
            source_query_id: None,
            retrieval_score: None,
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.retrieval_score = Some(score);
        self
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.contents.is_empty() {
            return Err(DomainError::EmptyDocument(self.title.clone()));
        }
        Ok(())
    }
}

/// A query, its gold answers and the retrieved documents in rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance")]
pub struct BenchmarkInstance {
    pub id: String,
    pub benchmark: Benchmark,
    pub question: String,
    pub gold_answers: Vec<String>,
    /// Short-answer sets for multi-answer questions (ASQA str-em). Each inner
    /// list holds the aliases of one required sub-answer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_sets: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub documents: Vec<Document>,
}

#[derive(Deserialize)]
struct RawInstance {
    id: String,
    benchmark: Benchmark,
    question: String,
    gold_answers: Vec<String>,
    #[serde(default)]
    answer_sets: Option<Vec<Vec<String>>>,
    #[serde(default)]
    documents: Vec<Document>,
}

impl TryFrom<RawInstance> for BenchmarkInstance {
    type Error = DomainError;

    fn try_from(raw: RawInstance) -> Result<Self, Self::Error> {
        let inst = BenchmarkInstance {
            id: raw.id,
            benchmark: raw.benchmark,
            question: raw.question,
            gold_answers: raw.gold_answers,
            answer_sets: raw.answer_sets,
            documents: raw.documents,
        };
        inst.validate()?;
        Ok(inst)
    }
}

impl BenchmarkInstance {
    pub fn new(
        id: impl Into<String>,
        benchmark: Benchmark,
        question: impl Into<String>,
        gold_answers: Vec<String>,
        documents: Vec<Document>,
    ) -> Result<Self, DomainError> {
        let inst = BenchmarkInstance {
            id: id.into(),
            benchmark,
            question: question.into(),
            gold_answers,
            answer_sets: None,
            documents,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn with_answer_sets(mut self, sets: Vec<Vec<String>>) -> Result<Self, DomainError> {
        self.answer_sets = Some(sets);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.gold_answers.is_empty() {
            return Err(DomainError::NoGoldAnswers(self.id.clone()));
        }
        let sets = self.answer_sets.iter().flatten();
        for alias in self.gold_answers.iter().chain(sets.flatten()) {
            if alias.trim().is_empty() {
                return Err(DomainError::BlankAlias(self.id.clone()));
            }
        }
        if let Some(sets) = &self.answer_sets {
            if sets.is_empty() || sets.iter().any(|s| s.is_empty()) {
                return Err(DomainError::NoGoldAnswers(self.id.clone()));
            }
        }
        for (i, doc) in self.documents.iter().enumerate() {
            doc.validate()?;
            if doc.source_query_id.as_deref() == Some(self.id.as_str()) {
                return Err(DomainError::SelfSourcedDocument(self.id.clone(), i));
            }
        }
        Ok(())
    }

    /// The sub-answers a single document must cover to count as complete.
    ///
    /// With explicit answer sets each set is one requirement; otherwise every
    /// gold alias is its own requirement.
    pub fn answer_groups(&self) -> Vec<Vec<String>> {
        match &self.answer_sets {
            Some(sets) => sets.clone(),
            None => self.gold_answers.iter().map(|a| vec![a.clone()]).collect(),
        }
    }

    /// Short-answer sets for str-em scoring. Without explicit sets each alias
    /// is treated as a separate short answer.
    pub fn short_answer_sets(&self) -> Vec<Vec<String>> {
        self.answer_groups()
    }

    /// Gold answer text substituted into rationale prompts.
    pub fn answer_display(&self) -> String {
        self.gold_answers.join(", ")
    }
}

/// Relevance, helpfulness and completeness labels for a document set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawGranularity", into = "RawGranularity")]
pub struct GranularityVector {
    relevance: bool,
    helpfulness: bool,
    completeness: bool,
}

#[derive(Serialize, Deserialize)]
struct RawGranularity {
    r: u8,
    h: u8,
    m: u8,
}

impl TryFrom<RawGranularity> for GranularityVector {
    type Error = DomainError;

    fn try_from(raw: RawGranularity) -> Result<Self, Self::Error> {
        let bad = || DomainError::InvalidGranularity { r: raw.r, h: raw.h, m: raw.m };
        let bit = |v: u8| match v {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(bad()),
        };
        GranularityVector::new(bit(raw.r)?, bit(raw.h)?, bit(raw.m)?)
    }
}

impl From<GranularityVector> for RawGranularity {
    fn from(g: GranularityVector) -> Self {
        RawGranularity {
            r: g.relevance as u8,
            h: g.helpfulness as u8,
            m: g.completeness as u8,
        }
    }
}

impl GranularityVector {
    pub const IRRELEVANT: GranularityVector = GranularityVector {
        relevance: false,
        helpfulness: false,
        completeness: false,
    };

    pub fn new(relevance: bool, helpfulness: bool, completeness: bool) -> Result<Self, DomainError> {
        if (completeness && !helpfulness) || (helpfulness && !relevance) {
            return Err(DomainError::InvalidGranularity {
                r: relevance as u8,
                h: helpfulness as u8,
                m: completeness as u8,
            });
        }
        Ok(GranularityVector { relevance, helpfulness, completeness })
    }

    pub fn relevance(&self) -> bool {
        self.relevance
    }

    pub fn helpfulness(&self) -> bool {
        self.helpfulness
    }

    pub fn completeness(&self) -> bool {
        self.completeness
    }

    pub fn bits(&self) -> (u8, u8, u8) {
        (self.relevance as u8, self.helpfulness as u8, self.completeness as u8)
    }
}

impl fmt::Display for GranularityVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (r, h, m) = self.bits();
        write!(f, "({r},{h},{m})")
    }
}

/// Tier of the contextual granularity hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HierarchyTier {
    /// Context borrowed from unrelated queries.
    Irrelevant,
    /// Top-K context without any answer span.
    RelevantUnhelpful,
    /// Top-K context where `support_count` documents each contain an answer span.
    Helpful { support_count: u8 },
}

impl HierarchyTier {
    pub fn helpful(support_count: u8) -> Result<Self, DomainError> {
        if !(1..=5).contains(&support_count) {
            return Err(DomainError::SupportCountOutOfRange(support_count));
        }
        Ok(HierarchyTier::Helpful { support_count })
    }

    pub fn label(&self) -> &'static str {
        match self {
            HierarchyTier::Irrelevant => "H1",
            HierarchyTier::RelevantUnhelpful => "H2",
            HierarchyTier::Helpful { .. } => "H34",
        }
    }

    pub fn support_count(&self) -> u8 {
        match self {
            HierarchyTier::Helpful { support_count } => *support_count,
            _ => 0,
        }
    }
}

impl fmt::Display for HierarchyTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HierarchyTier::Helpful { support_count } => write!(f, "H34[{support_count}]"),
            other => f.write_str(other.label()),
        }
    }
}

/// Granularity labels mandated by a hierarchy tier.
pub fn granularity_from_tier(
    tier: HierarchyTier,
    completeness: bool,
) -> Result<GranularityVector, DomainError> {
    match tier {
        HierarchyTier::Irrelevant | HierarchyTier::RelevantUnhelpful if completeness => {
            Err(DomainError::CompletenessOnUnhelpfulTier)
        }
        HierarchyTier::Irrelevant => Ok(GranularityVector::IRRELEVANT),
        HierarchyTier::RelevantUnhelpful => GranularityVector::new(true, false, false),
        HierarchyTier::Helpful { support_count } => {
            if !(1..=5).contains(&support_count) {
                return Err(DomainError::SupportCountOutOfRange(support_count));
            }
            GranularityVector::new(true, true, completeness)
        }
    }
}

/// Expert and unexpert responses to the same (question, documents) input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponsePair {
    pub y_exp: String,
    pub y_unexp: String,
    pub expert_model: String,
    pub weak_model: String,
}

impl ResponsePair {
    pub fn new(
        y_exp: String,
        y_unexp: String,
        expert_model: impl Into<String>,
        weak_model: impl Into<String>,
    ) -> Result<Self, DomainError> {
        if y_exp.is_empty() || y_unexp.is_empty() {
            return Err(DomainError::EmptyResponse);
        }
        Ok(ResponsePair {
            y_exp,
            y_unexp,
            expert_model: expert_model.into(),
            weak_model: weak_model.into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControlToken {
    Good,
    Bad,
}

impl ControlToken {
    pub fn marker(&self) -> &'static str {
        match self {
            ControlToken::Good => "[Good]",
            ControlToken::Bad => "[Bad]",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectnessBasis {
    GoldMatch,
    Manual,
}

/// One critique-fine-tuning example before formatting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritiqueRecord {
    pub instance_id: String,
    pub question: String,
    pub documents: Vec<Document>,
    pub y_unexp: String,
    /// Augmented critique text.
    pub critique: String,
    /// Absent only for vanilla synthesis without a strong generator.
    pub y_exp: Option<String>,
    pub control_token: ControlToken,
    pub correctness_basis: CorrectnessBasis,
}

impl CritiqueRecord {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.critique.is_empty() {
            return Err(DomainError::EmptyCritique);
        }
        if self.y_unexp.is_empty() || self.y_exp.as_deref() == Some("") {
            return Err(DomainError::EmptyResponse);
        }
        Ok(())
    }
}

/// A weak-critic / strong-critic pair over the same unexpert response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub instance_id: String,
    pub question: String,
    pub documents: Vec<Document>,
    pub y_unexp: String,
    pub critique_rejected: String,
    pub critique_chosen: String,
}

impl PreferencePair {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.critique_chosen == self.critique_rejected {
            return Err(DomainError::IdenticalCritiques);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    FixedBudgetExhausted,
    CriticSaidGood,
    BackendError,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub generator: u32,
    pub critic: u32,
}

/// Every state visited by one refinement run, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrajectory {
    pub instance_id: String,
    pub states: Vec<String>,
    pub critiques: Vec<String>,
    pub stop_reason: StopReason,
    pub calls: CallCounts,
    /// `fixed:T` or `auto:T`.
    pub mode: String,
    /// Critic output that halted an auto run; not part of `critiques`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halting_critique: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RefinementTrajectory {
    pub fn refinements(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn final_state(&self) -> Option<&str> {
        self.states.last().map(String::as_str)
    }

    /// State after `iteration` refinement steps; halted runs hold their last state.
    pub fn state_at(&self, iteration: usize) -> Option<&str> {
        let idx = iteration.min(self.states.len().checked_sub(1)?);
        self.states.get(idx).map(String::as_str)
    }

    pub fn is_well_formed(&self) -> bool {
        !self.states.is_empty() && self.critiques.len() + 1 == self.states.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tier_granularity_mapping() {
        assert_eq!(
            granularity_from_tier(HierarchyTier::Irrelevant, false).unwrap().bits(),
            (0, 0, 0)
        );
        assert_eq!(
            granularity_from_tier(HierarchyTier::RelevantUnhelpful, false).unwrap().bits(),
            (1, 0, 0)
        );
        let h34 = HierarchyTier::helpful(3).unwrap();
        assert_eq!(granularity_from_tier(h34, true).unwrap().bits(), (1, 1, 1));
        assert_eq!(granularity_from_tier(h34, false).unwrap().bits(), (1, 1, 0));
    }

    #[test]
    fn completeness_rejected_for_unhelpful_tiers() {
        for tier in [HierarchyTier::Irrelevant, HierarchyTier::RelevantUnhelpful] {
            assert_eq!(
                granularity_from_tier(tier, true),
                Err(DomainError::CompletenessOnUnhelpfulTier)
            );
        }
        assert!(HierarchyTier::helpful(0).is_err());
        assert!(HierarchyTier::helpful(6).is_err());
    }

    #[test]
    fn exactly_four_constructible_vectors() {
        let mut ok = Vec::new();
        for bits in 0u8..8 {
            let (r, h, m) = (bits & 4 != 0, bits & 2 != 0, bits & 1 != 0);
            if let Ok(g) = GranularityVector::new(r, h, m) {
                assert!(!g.completeness() || g.helpfulness());
                assert!(!g.helpfulness() || g.relevance());
                ok.push(g.bits());
            }
        }
        ok.sort();
        assert_eq!(ok, vec![(0, 0, 0), (1, 0, 0), (1, 1, 0), (1, 1, 1)]);
    }

    #[test]
    fn granularity_serde_rejects_invalid() {
        let g: GranularityVector = serde_json::from_str(r#"{"r":1,"h":1,"m":0}"#).unwrap();
        assert_eq!(g.bits(), (1, 1, 0));
        assert!(serde_json::from_str::<GranularityVector>(r#"{"r":0,"h":1,"m":0}"#).is_err());
        assert!(serde_json::from_str::<GranularityVector>(r#"{"r":2,"h":0,"m":0}"#).is_err());
    }

    #[test]
    fn instance_invariants() {
        let doc = Document::new("T", "body").unwrap();
        assert!(BenchmarkInstance::new("q1", Benchmark::Nq, "Q", vec![], vec![]).is_err());
        assert!(BenchmarkInstance::new("q1", Benchmark::Nq, "Q", vec!["  ".into()], vec![]).is_err());
        assert!(Document::new("T", "").is_err());

        let mut foreign = doc.clone();
        foreign.source_query_id = Some("q1".into());
        assert_eq!(
            BenchmarkInstance::new("q1", Benchmark::Nq, "Q", vec!["a".into()], vec![foreign]),
            Err(DomainError::SelfSourcedDocument("q1".into(), 0))
        );

        let json = r#"{"id":"x","benchmark":"PopQA","question":"Q","gold_answers":[]}"#;
        assert!(serde_json::from_str::<BenchmarkInstance>(json).is_err());
    }

    #[test]
    fn texts_are_kept_verbatim() {
        let inst = BenchmarkInstance::new(
            "q",
            Benchmark::Asqa,
            "  padded question ",
            vec![" Alias ".into()],
            vec![Document::new(" T ", " contents\r\n").unwrap()],
        )
        .unwrap();
        let back: BenchmarkInstance =
            serde_json::from_str(&serde_json::to_string(&inst).unwrap()).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back.question, "  padded question ");
        assert_eq!(back.documents[0].contents, " contents\r\n");
    }

    #[test]
    fn benchmark_names_round_trip() {
        for b in Benchmark::IN_DOMAIN.iter().chain(Benchmark::OUT_OF_DOMAIN.iter()) {
            assert_eq!(&Benchmark::from(b.name().to_string()), b);
        }
        assert_eq!(Benchmark::from("Natural Questions".to_string()), Benchmark::Nq);
        assert_eq!(
            Benchmark::from("BioASQ".to_string()),
            Benchmark::Custom("BioASQ".into())
        );
    }

    #[test]
    fn trajectory_state_lookup_holds_last_state() {
        let t = RefinementTrajectory {
            instance_id: "q".into(),
            states: vec!["a".into(), "b".into()],
            critiques: vec!["c".into()],
            stop_reason: StopReason::CriticSaidGood,
            calls: CallCounts { generator: 2, critic: 2 },
            mode: "auto:5".into(),
            halting_critique: Some("[Good]".into()),
            error: None,
        };
        assert!(t.is_well_formed());
        assert_eq!(t.state_at(0), Some("a"));
        assert_eq!(t.state_at(4), Some("b"));
        assert_eq!(t.refinements(), 1);
    }
}
