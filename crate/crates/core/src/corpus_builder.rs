//! Critique-supervision corpus construction.
//!
//! Every benchmark pool is split into the four-tier contextual granularity
//! hierarchy:
//!
//! | tier | context                                  | (r, h, m) |
//! |------|------------------------------------------|-----------|
//! | H1   | documents retrieved for other questions  | (0, 0, 0) |
//! | H2   | own top-K, no answer span                | (1, 0, 0) |
//! | H3/4 | own top-K, answer spans in 1..=5 docs    | (1, 1, m) |
//!
//! Helpful instances are bucketed by support count (how many documents
//! individually contain an answer span). Completeness is recorded as a label
//! and is not a quota key.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{
    granularity_from_tier, Benchmark, BenchmarkInstance, Document, DomainError, GranularityVector,
    HierarchyTier,
};
use crate::evaluation::metrics::{normalize_alias, normalize_text};
use crate::exec::parallel_map;
use crate::retrieval::{UnrelatedPool, DEFAULT_TOP_K};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletenessRule {
    /// Some single document covers every required sub-answer.
    #[default]
    SingleDoc,
    /// The documents together cover every required sub-answer.
    Union,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HelpfulnessLabel {
    pub helpful: bool,
    pub per_doc_hits: Vec<bool>,
}

fn normalized_contents(documents: &[Document]) -> Vec<String> {
    documents.iter().map(|d| normalize_text(&d.contents)).collect()
}

fn normalized_aliases(aliases: &[String]) -> Vec<String> {
    aliases.iter().map(|a| normalize_alias(a)).filter(|a| !a.is_empty()).collect()
}

fn contains_normalized(text: &str, aliases: &[String]) -> bool {
    aliases.iter().any(|a| text.contains(a.as_str()))
}

fn hits_of(texts: &[String], aliases: &[String]) -> HelpfulnessLabel {
    let per_doc_hits: Vec<bool> = texts.iter().map(|t| contains_normalized(t, aliases)).collect();
    HelpfulnessLabel { helpful: per_doc_hits.iter().any(|&h| h), per_doc_hits }
}

fn complete_of(texts: &[String], groups: &[Vec<String>], rule: CompletenessRule) -> bool {
    if groups.is_empty() || texts.is_empty() {
        return false;
    }
    match rule {
        CompletenessRule::SingleDoc => texts.iter().any(|t| groups.iter().all(|g| contains_normalized(t, g))),
        CompletenessRule::Union => groups.iter().all(|g| texts.iter().any(|t| contains_normalized(t, g))),
    }
}

/// Marks each document that contains any gold alias (normalized substring).
pub fn label_helpfulness(documents: &[Document], gold_answers: &[String]) -> HelpfulnessLabel {
    hits_of(&normalized_contents(documents), &normalized_aliases(gold_answers))
}

/// Number of documents that individually contain an answer span.
pub fn support_count(per_doc_hits: &[bool]) -> usize {
    per_doc_hits.iter().filter(|&&h| h).count()
}

/// Whether the documents cover every answer group under `rule`.
pub fn label_completeness(
    documents: &[Document],
    answer_groups: &[Vec<String>],
    rule: CompletenessRule,
) -> bool {
    let groups: Vec<Vec<String>> = answer_groups.iter().map(|g| normalized_aliases(g)).collect();
    complete_of(&normalized_contents(documents), &groups, rule)
}

/// Labels recomputed from an instance's own documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextLabels {
    pub helpful: bool,
    pub support_count: usize,
    pub complete: bool,
}

pub fn label_context(instance: &BenchmarkInstance, rule: CompletenessRule) -> ContextLabels {
    let texts = normalized_contents(&instance.documents);
    let h = hits_of(&texts, &normalized_aliases(&instance.gold_answers));
    let complete = h.helpful && {
        let groups: Vec<Vec<String>> = instance.answer_groups().iter().map(|g| normalized_aliases(g)).collect();
        complete_of(&texts, &groups, rule)
    };
    ContextLabels { helpful: h.helpful, support_count: support_count(&h.per_doc_hits), complete }
}

/// Per-benchmark sample sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quotas {
    pub h1: usize,
    pub h2: usize,
    /// Indexed by support count 1..=5.
    pub h34: [usize; 5],
}

impl Default for Quotas {
    fn default() -> Self {
        Quotas { h1: 200, h2: 400, h34: [400, 400, 200, 200, 200] }
    }
}

impl Quotas {
    pub fn total(&self) -> usize {
        self.h1 + self.h2 + self.h34.iter().sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub seed: u64,
    #[serde(default)]
    pub quotas: Quotas,
    #[serde(default)]
    pub completeness_rule: CompletenessRule,
    /// Documents per H1 context.
    #[serde(default = "default_h1_size")]
    pub h1_context_size: usize,
    /// Resamples per H1 candidate before it is skipped for containing an answer.
    #[serde(default = "default_h1_attempts")]
    pub h1_max_attempts: usize,
}

fn default_h1_size() -> usize {
    DEFAULT_TOP_K
}
fn default_h1_attempts() -> usize {
    8
}

impl BuildConfig {
    pub fn new(seed: u64) -> Self {
        BuildConfig {
            seed,
            quotas: Quotas::default(),
            completeness_rule: CompletenessRule::default(),
            h1_context_size: default_h1_size(),
            h1_max_attempts: default_h1_attempts(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub benchmark: String,
    pub tier: String,
    pub available: usize,
    pub requested: usize,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("quota shortfall in {} tier(s): {}", .0.len(), describe(.0))]
    QuotaShortfall(Vec<Shortfall>),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

fn describe(shortfalls: &[Shortfall]) -> String {
    shortfalls
        .iter()
        .map(|s| format!("{}/{} has {} of {}", s.benchmark, s.tier, s.available, s.requested))
        .collect::<Vec<_>>()
        .join("; ")
}

/// One row of the labeled corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLabeled", into = "RawLabeled")]
pub struct LabeledInstance {
    pub instance: BenchmarkInstance,
    pub tier: HierarchyTier,
    pub granularity: GranularityVector,
}

#[derive(Serialize, Deserialize)]
struct RawLabeled {
    id: String,
    benchmark: Benchmark,
    tier: String,
    granularity: GranularityVector,
    support_count: u8,
    question: String,
    gold_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer_sets: Option<Vec<Vec<String>>>,
    documents: Vec<Document>,
}

impl TryFrom<RawLabeled> for LabeledInstance {
    type Error = DomainError;

    fn try_from(raw: RawLabeled) -> Result<Self, Self::Error> {
        let tier = match raw.tier.as_str() {
            "H1" => HierarchyTier::Irrelevant,
            "H2" => HierarchyTier::RelevantUnhelpful,
            _ => HierarchyTier::helpful(raw.support_count)?,
        };
        let mut instance = BenchmarkInstance::new(
            raw.id,
            raw.benchmark,
            raw.question,
            raw.gold_answers,
            raw.documents,
        )?;
        if let Some(sets) = raw.answer_sets {
            instance = instance.with_answer_sets(sets)?;
        }
        let expected = granularity_from_tier(tier, raw.granularity.completeness())?;
        if expected != raw.granularity {
            let (r, h, m) = raw.granularity.bits();
            return Err(DomainError::InvalidGranularity { r, h, m });
        }
        Ok(LabeledInstance { instance, tier, granularity: raw.granularity })
    }
}

impl From<LabeledInstance> for RawLabeled {
    fn from(l: LabeledInstance) -> Self {
        let i = l.instance;
        RawLabeled {
            id: i.id,
            benchmark: i.benchmark,
            tier: l.tier.label().to_string(),
            granularity: l.granularity,
            support_count: l.tier.support_count(),
            question: i.question,
            gold_answers: i.gold_answers,
            answer_sets: i.answer_sets,
            documents: i.documents,
        }
    }
}

impl LabeledInstance {
    /// Recomputes labels from the stored documents and reports any mismatch.
    pub fn verify(&self, rule: CompletenessRule) -> Result<(), String> {
        let labels = label_context(&self.instance, rule);
        let id = &self.instance.id;
        match self.tier {
            HierarchyTier::Irrelevant => {
                if labels.helpful || self.granularity != GranularityVector::IRRELEVANT {
                    return Err(format!("{id}: H1 context contains an answer span"));
                }
                if self.instance.documents.iter().any(|d| {
                    d.source_query_id.is_none() || d.source_query_id.as_deref() == Some(id.as_str())
                }) {
                    return Err(format!("{id}: H1 document without a foreign source query"));
                }
            }
            HierarchyTier::RelevantUnhelpful => {
                if labels.helpful || self.granularity.bits() != (1, 0, 0) {
                    return Err(format!("{id}: H2 context is helpful"));
                }
            }
            HierarchyTier::Helpful { support_count } => {
                if labels.support_count != support_count as usize {
                    return Err(format!(
                        "{id}: support count {} != bucket {support_count}",
                        labels.support_count
                    ));
                }
                if self.granularity.bits() != (1, 1, labels.complete as u8) {
                    return Err(format!("{id}: granularity {} disagrees with relabel", self.granularity));
                }
            }
        }
        Ok(())
    }
}

/// Tier counts for one benchmark.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierCounts {
    pub h1: usize,
    pub h2: usize,
    pub h34: [usize; 5],
    pub complete: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltCorpus {
    pub instances: Vec<LabeledInstance>,
    pub counts: BTreeMap<String, TierCounts>,
}

/// Written next to the corpus file for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub quotas: Quotas,
    pub completeness_rule: CompletenessRule,
    pub h1_context_size: usize,
    pub shortfalls: Vec<Shortfall>,
    pub input_hashes: BTreeMap<String, String>,
    #[serde(default)]
    pub counts: BTreeMap<String, TierCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_hash: Option<String>,
}

fn benchmark_seed(seed: u64, benchmark: &Benchmark) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(benchmark.name().as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

struct BenchmarkOutcome {
    rows: Vec<LabeledInstance>,
    counts: TierCounts,
    shortfalls: Vec<Shortfall>,
}

fn build_benchmark(
    benchmark: &Benchmark,
    pool: &[BenchmarkInstance],
    cfg: &BuildConfig,
) -> Result<BenchmarkOutcome, DomainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(benchmark_seed(cfg.seed, benchmark));
    let rule = cfg.completeness_rule;
    let name = benchmark.name().to_string();

    let mut unhelpful = Vec::new();
    let mut buckets: [Vec<usize>; 5] = Default::default();
    let mut labels = Vec::with_capacity(pool.len());
    for (i, inst) in pool.iter().enumerate() {
        let l = label_context(inst, rule);
        if !inst.documents.is_empty() {
            if !l.helpful {
                unhelpful.push(i);
            } else if (1..=5).contains(&l.support_count) {
                buckets[l.support_count - 1].push(i);
            }
        }
        labels.push(l);
    }

    let mut shortfalls = Vec::new();
    let mut take = |mut candidates: Vec<usize>, quota: usize, tier: &str, rng: &mut ChaCha8Rng| {
        candidates.shuffle(rng);
        if candidates.len() < quota {
            shortfalls.push(Shortfall {
                benchmark: name.clone(),
                tier: tier.to_string(),
                available: candidates.len(),
                requested: quota,
            });
        }
        candidates.truncate(quota);
        candidates
    };

    let mut used: HashSet<usize> = HashSet::new();
    let mut helpful_rows: Vec<(usize, HierarchyTier)> = Vec::new();
    for (b, bucket) in buckets.into_iter().enumerate() {
        let tier = HierarchyTier::helpful(b as u8 + 1)?;
        let chosen = take(bucket, cfg.quotas.h34[b], &format!("H34[{}]", b + 1), &mut rng);
        used.extend(&chosen);
        helpful_rows.extend(chosen.into_iter().map(|i| (i, tier)));
    }
    let h2 = take(unhelpful, cfg.quotas.h2, "H2", &mut rng);
    used.extend(&h2);

    let unrelated = UnrelatedPool::new(pool);
    let mut candidates: Vec<usize> = (0..pool.len()).filter(|i| !used.contains(i)).collect();
    candidates.shuffle(&mut rng);
    let mut h1_rows: Vec<LabeledInstance> = Vec::with_capacity(cfg.quotas.h1);
    for i in candidates {
        if h1_rows.len() == cfg.quotas.h1 {
            break;
        }
        let inst = &pool[i];
        for _ in 0..cfg.h1_max_attempts.max(1) {
            let Ok(docs) = unrelated.sample_documents(&inst.id, cfg.h1_context_size, &mut rng) else { break };
            if label_helpfulness(&docs, &inst.gold_answers).helpful {
                continue;
            }
            let mut instance = inst.clone();
            instance.documents = docs;
            h1_rows.push(LabeledInstance {
                instance,
                tier: HierarchyTier::Irrelevant,
                granularity: GranularityVector::IRRELEVANT,
            });
            break;
        }
    }
    if h1_rows.len() < cfg.quotas.h1 {
        shortfalls.push(Shortfall {
            benchmark: name.clone(),
            tier: "H1".into(),
            available: h1_rows.len(),
            requested: cfg.quotas.h1,
        });
    }

    let mut counts = TierCounts { h1: h1_rows.len(), h2: h2.len(), h34: [0; 5], complete: 0 };
    let mut rows = h1_rows;
    rows.sort_by(|a, b| a.instance.id.cmp(&b.instance.id));

    let mut h2_rows: Vec<LabeledInstance> = h2
        .into_iter()
        .map(|i| {
            Ok(LabeledInstance {
                instance: pool[i].clone(),
                tier: HierarchyTier::RelevantUnhelpful,
                granularity: granularity_from_tier(HierarchyTier::RelevantUnhelpful, false)?,
            })
        })
        .collect::<Result<_, DomainError>>()?;
    h2_rows.sort_by(|a, b| a.instance.id.cmp(&b.instance.id));
    rows.extend(h2_rows);

    let mut h34_rows: Vec<LabeledInstance> = helpful_rows
        .into_iter()
        .map(|(i, tier)| {
            let complete = labels[i].complete;
            counts.h34[tier.support_count() as usize - 1] += 1;
            counts.complete += complete as usize;
            Ok(LabeledInstance {
                instance: pool[i].clone(),
                tier,
                granularity: granularity_from_tier(tier, complete)?,
            })
        })
        .collect::<Result<_, DomainError>>()?;
    h34_rows.sort_by(|a, b| (a.tier, &a.instance.id).cmp(&(b.tier, &b.instance.id)));
    rows.extend(h34_rows);

    Ok(BenchmarkOutcome { rows, counts, shortfalls })
}

/// Samples the granularity hierarchy from each benchmark's pool.
///
/// Deterministic in `cfg.seed`; benchmarks are processed on up to `jobs`
/// threads and assembled in benchmark-name order. Any tier that cannot be
/// filled fails the whole build with every shortfall listed.
pub fn build_hierarchy(
    instances: &[BenchmarkInstance],
    cfg: &BuildConfig,
    jobs: usize,
) -> Result<BuiltCorpus, CorpusError> {
    let mut groups: BTreeMap<String, (Benchmark, Vec<BenchmarkInstance>)> = BTreeMap::new();
    for inst in instances {
        groups
            .entry(inst.benchmark.name().to_string())
            .or_insert_with(|| (inst.benchmark.clone(), Vec::new()))
            .1
            .push(inst.clone());
    }
    let groups: Vec<_> = groups
        .into_values()
        .map(|(b, mut pool)| {
            pool.sort_by(|x, y| x.id.cmp(&y.id));
            (b, pool)
        })
        .collect();

    let outcomes = parallel_map(&groups, jobs, |_, (b, pool)| build_benchmark(b, pool, cfg));

    let mut built = BuiltCorpus { instances: Vec::new(), counts: BTreeMap::new() };
    let mut shortfalls = Vec::new();
    for ((benchmark, _), outcome) in groups.iter().zip(outcomes) {
        let outcome = outcome?;
        shortfalls.extend(outcome.shortfalls);
        built.counts.insert(benchmark.name().to_string(), outcome.counts);
        built.instances.extend(outcome.rows);
    }
    if !shortfalls.is_empty() {
        return Err(CorpusError::QuotaShortfall(shortfalls));
    }
    Ok(built)
}
