//! Deterministic toy data for demos, tests and the acceptance suite.
//!
//! Answers are fixed-width codes (`nq00042`) so no answer is a substring of
//! another, and filler text is drawn from a vocabulary that never contains
//! one. That makes every label predictable from construction alone.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backends::{RuleMatch, ScriptedRule};
use crate::domain::{Benchmark, BenchmarkInstance, Document};

const VOCAB: [&str; 32] = [
    "river", "stone", "valley", "market", "harbor", "lantern", "meadow", "archive", "bridge", "orchard",
    "council", "festival", "glacier", "library", "monastery", "island", "quarry", "railway", "summit",
    "temple", "village", "canyon", "delta", "forest", "garden", "highland", "journal", "kingdom",
    "lagoon", "mill", "northern", "plateau",
];

/// Answer code for instance `i` of `benchmark`.
pub fn answer_code(benchmark: &Benchmark, i: usize) -> String {
    let prefix: String = benchmark
        .name()
        .chars()
        .filter(char::is_ascii_alphabetic)
        .take(3)
        .collect::<String>()
        .to_lowercase();
    format!("{prefix}{i:05}")
}

fn filler(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..words).map(|_| *VOCAB.choose(rng).expect("non-empty")).collect::<Vec<_>>().join(" ")
}

/// Shape of an engineered pool for one benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolShape {
    /// Instances whose context has exactly `k + 1` answer-bearing documents.
    pub per_support: [usize; 5],
    /// Instances with no answer in context.
    pub unhelpful: usize,
    pub docs_per_instance: usize,
    /// Every n-th helpful instance needs two answers; half of those get a
    /// document holding both.
    pub two_part_every: usize,
}

impl PoolShape {
    /// 3,000 instances with room to spare in every tier of the default quotas.
    pub const DEFAULT_3000: PoolShape = PoolShape {
        per_support: [600, 600, 300, 300, 300],
        unhelpful: 900,
        docs_per_instance: 5,
        two_part_every: 4,
    };

    pub fn total(&self) -> usize {
        self.per_support.iter().sum::<usize>() + self.unhelpful
    }
}

/// Builds a pool with exactly the requested support-count distribution.
pub fn engineered_pool(benchmark: Benchmark, shape: &PoolShape, seed: u64) -> Vec<BenchmarkInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut supports: Vec<usize> = shape
        .per_support
        .iter()
        .enumerate()
        .flat_map(|(k, &n)| std::iter::repeat(k + 1).take(n))
        .chain(std::iter::repeat(0).take(shape.unhelpful))
        .collect();
    supports.shuffle(&mut rng);
    let k = shape.docs_per_instance.max(5);

    supports
        .into_iter()
        .enumerate()
        .map(|(i, support)| {
            let code = answer_code(&benchmark, i);
            let two_part = support > 0 && shape.two_part_every > 0 && i % shape.two_part_every == 0;
            let second = format!("{code}b");
            let mut answer_docs: HashSet<usize> = HashSet::new();
            while answer_docs.len() < support {
                answer_docs.insert(rng.gen_range(0..k));
            }
            let joint_doc = two_part && i % (2 * shape.two_part_every) == 0;
            let documents = (0..k)
                .map(|j| {
                    let mut text = filler(&mut rng, 12);
                    if answer_docs.contains(&j) {
                        text = format!("{text} the code is {code} {}", filler(&mut rng, 4));
                        if two_part && joint_doc {
                            text = format!("{text} and also {second}");
                        }
                    }
                    Document::new(format!("Doc {i}-{j}"), text).expect("non-empty text")
                })
                .collect();
            let question = format!("What is the code of item {i} in {}?", benchmark.name());
            let inst = if two_part {
                BenchmarkInstance::new(
                    format!("{}-{i:05}", benchmark.name()),
                    benchmark.clone(),
                    question,
                    vec![code.clone(), second.clone()],
                    documents,
                )
                .and_then(|x| x.with_answer_sets(vec![vec![code], vec![second]]))
            } else {
                BenchmarkInstance::new(
                    format!("{}-{i:05}", benchmark.name()),
                    benchmark.clone(),
                    question,
                    vec![code],
                    documents,
                )
            };
            inst.expect("engineered instance is valid")
        })
        .collect()
}

/// A refinement scenario where the critic reveals the answer for the first
/// `injected` instances and gives useless feedback for the rest.
#[derive(Debug, Clone)]
pub struct InjectionFixture {
    pub instances: Vec<BenchmarkInstance>,
    pub generator_rules: Vec<ScriptedRule>,
    pub critic_rules: Vec<ScriptedRule>,
    pub injected: usize,
}

pub fn injection_fixture(n: usize, injected: usize) -> InjectionFixture {
    let benchmark = Benchmark::Nq;
    let mut generator_rules = Vec::new();
    let mut critic_rules = Vec::new();
    let instances: Vec<BenchmarkInstance> = (0..n)
        .map(|i| {
            let code = answer_code(&benchmark, i);
            let question = format!("Which code belongs to record {i:03}?");
            if i < injected {
                critic_rules.push(ScriptedRule::new(
                    RuleMatch::ContainsSubstring(format!("question: {question}")),
                    format!("[Bad] The documents point to {code}."),
                ));
                generator_rules.push(ScriptedRule::new(
                    RuleMatch::ContainsSubstring(format!("Here is the given critique: The documents point to {code}.")),
                    format!("Following the critique, the answer is {code}."),
                ));
            }
            let docs = vec![
                Document::new(format!("Record {i:03}"), format!("record {i:03} lists the code {code}")).unwrap(),
                Document::new("Registry", "codes are assigned in order").unwrap(),
            ];
            BenchmarkInstance::new(format!("rec-{i:03}"), benchmark.clone(), question, vec![code], docs).unwrap()
        })
        .collect();
    critic_rules.push(ScriptedRule::new(RuleMatch::Always, "[Bad] Look at the documents again."));
    generator_rules.push(ScriptedRule::new(RuleMatch::Always, "I cannot tell which code it is."));
    InjectionFixture { instances, generator_rules, critic_rules, injected }
}
