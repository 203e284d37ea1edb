//! Fixtures shared by integration tests and the acceptance runner.
#![allow(dead_code)]

use std::path::PathBuf;

use alignrag::domain::{Benchmark, Document};
use alignrag::prompts::{self, render, PromptInput, PromptKind};

pub const QUESTION: &str = "Who wrote Hamlet?";
pub const ANSWER: &str = "William Shakespeare";
pub const WEAK: &str = "The play was written by Christopher Marlowe";
pub const GOLD: &str = "Document [1] says Hamlet was written by William Shakespeare, so the answer is William Shakespeare";
pub const CRITIQUE: &str = "The rationale ignores Document [1], which names William Shakespeare as the author";

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn golden_docs() -> Vec<Document> {
    vec![
        Document::new("Hamlet", "Hamlet is a tragedy written by William Shakespeare around 1600.").unwrap(),
        Document::new("Globe Theatre", "The Globe Theatre in London staged many plays.").unwrap(),
    ]
}

/// Renders one prompt kind against the two-document fixture.
pub fn render_golden(kind: PromptKind, docs: &[Document]) -> String {
    let bench = Benchmark::TriviaQa;
    let input = PromptInput::new(docs).benchmark(&bench);
    let input = match kind {
        PromptKind::RationaleSynthesis => input.slot("question", QUESTION).slot("answer", ANSWER),
        PromptKind::TaskInstruction => input,
        PromptKind::CritiqueSynthesis => {
            input.slot("question", QUESTION).slot("weak_rationale", WEAK).slot("gold_rationale", GOLD)
        }
        PromptKind::CftAugmented | PromptKind::CpoPrompt | PromptKind::CdaCritique => {
            input.slot("question", QUESTION).slot("weak_rationale", WEAK)
        }
        PromptKind::CdaRationale => input.slot("question", QUESTION).slot("answer", ANSWER),
        PromptKind::CdaRefine => input.slot("question", QUESTION).slot("weak_rationale", WEAK).slot("critique", CRITIQUE),
    };
    render(kind, &input).unwrap().text
}

/// Every (golden file stem, rendered text) pair.
pub fn golden_renders() -> Vec<(String, String)> {
    let docs = golden_docs();
    let mut out: Vec<(String, String)> =
        PromptKind::ALL.iter().map(|k| (k.file_stem().to_string(), render_golden(*k, &docs))).collect();
    let no_answer = render(PromptKind::CdaRationale, &PromptInput::new(&docs).slot("question", QUESTION)).unwrap().text;
    out.push(("cda_rationale_no_answer".into(), no_answer));
    out.push(("cft_target".into(), prompts::render_cft_target(CRITIQUE, GOLD).unwrap()));
    out
}

pub fn read_golden(stem: &str) -> String {
    std::fs::read_to_string(golden_dir().join(format!("{stem}.txt"))).unwrap()
}

use std::sync::Arc;

use alignrag::backends::{Backend, BackendError, FnBackend};
use alignrag::critique_synthesis::{SynthesisConfig, SynthesisMode, Synthesizer};

/// Gold answer embedded in a rationale-synthesis prompt.
pub fn answer_in_prompt(prompt: &str) -> &str {
    let start = prompt.find("lead to the answer: ").expect("rationale prompt") + "lead to the answer: ".len();
    let end = prompt[start..].find(".\n").map_or(prompt.len(), |e| start + e);
    &prompt[start..end]
}

fn backend(id: &str, f: impl Fn(&str) -> Result<String, BackendError> + Send + Sync + 'static) -> Arc<dyn Backend> {
    Arc::new(FnBackend::new(id, f))
}

/// Synthesizer over closures: the weak model answers correctly exactly when
/// the gold code ends in an even digit; the strong model always does.
pub fn toy_synthesizer(mode: SynthesisMode, with_preferences: bool) -> Synthesizer {
    let weak = backend("weak", |p| {
        let code = answer_in_prompt(p);
        let even = code.chars().last().and_then(|c| c.to_digit(10)).is_some_and(|d| d % 2 == 0);
        Ok(if even { format!("Document [1] gives {code}.") } else { "The documents do not say.".to_string() })
    });
    let strong = backend("strong", |p| Ok(format!("The first document states the code {}.", answer_in_prompt(p))));
    let critic = backend("critic", |_| Ok("The weak rationale skips the document that states the code".to_string()));
    let weak_critic = backend("weak-critic", |_| Ok("The rationale looks fine".to_string()));
    let cfg = SynthesisConfig {
        weak_backend: "weak".into(),
        strong_backend: (mode == SynthesisMode::Contrastive).then(|| "strong".into()),
        critic_backend: "critic".into(),
        mode,
        auto_labels: true,
        weak_critic_backend: with_preferences.then(|| "weak-critic".into()),
    };
    let strong = (mode == SynthesisMode::Contrastive).then_some(strong);
    Synthesizer::new(cfg, weak, strong, critic, with_preferences.then_some(weak_critic)).unwrap()
}

use alignrag::cda::{CdaConfig, CdaMode, CdaRunner};

/// Draft number in a critique or refinement prompt, from its
/// "weak rationale: draft N." line.
fn draft_in_prompt(prompt: &str) -> Option<usize> {
    let start = prompt.find("weak rationale: draft ")? + "weak rationale: draft ".len();
    let end = prompt[start..].find('.')? + start;
    prompt[start..end].parse().ok()
}

/// Stateless loop fixture: the generator emits `draft 0`, `draft 1`, ... and
/// the critic approves the first draft numbered `good_at` or higher.
pub fn draft_runner(mode: CdaMode, good_at: Option<usize>) -> CdaRunner {
    let generator = backend("gen", |p| {
        Ok(match draft_in_prompt(p) {
            Some(n) => format!("draft {}", n + 1),
            None => "draft 0".to_string(),
        })
    });
    let critic = backend("critic", move |p| {
        let n = draft_in_prompt(p).expect("critique prompt names a draft");
        Ok(match good_at {
            Some(k) if n >= k => "[Good] The rationale is sound.".to_string(),
            _ => format!("[Bad] Draft {n} misses the key document."),
        })
    });
    let cfg = CdaConfig { generator: "gen".into(), critic: "critic".into(), mode, record_prompts: true, answer_hint: false };
    CdaRunner::new(cfg, generator, critic)
}

pub fn plain_instance(id: &str) -> alignrag::domain::BenchmarkInstance {
    alignrag::domain::BenchmarkInstance::new(id, Benchmark::Nq, QUESTION, vec![ANSWER.to_string()], golden_docs()).unwrap()
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One randomized matching case: a prediction and answer sets.
#[derive(Debug, Clone)]
pub struct MetricFixture {
    pub prediction: String,
    pub sets: Vec<Vec<String>>,
}

const ALPHABET: &[char] = &['a', 'b', 'A', 'B', 'é', ' ', ' ', '\t', '\n', ',', '.', '!', '-', '1'];

fn random_text(rng: &mut ChaCha8Rng, max_len: usize) -> String {
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
}

/// Short strings over a tiny alphabet so matches, near-misses, case and
/// whitespace variants all occur often.
pub fn metric_fixtures(n: usize, seed: u64) -> Vec<MetricFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let prediction = random_text(&mut rng, 24);
            let sets = (0..rng.gen_range(1..=4))
                .map(|_| (0..rng.gen_range(1..=3)).map(|_| random_text(&mut rng, 5)).collect())
                .collect();
            MetricFixture { prediction, sets }
        })
        .collect()
}

/// Reference matcher written without the library's helpers: lowercase every
/// char, map whitespace runs to one space, trim; strip non-alphanumeric
/// chars from both alias ends; then slide the alias over the prediction.
pub mod oracle {
    fn canonical(s: &str) -> Vec<char> {
        let mut out: Vec<char> = Vec::new();
        let mut pending_space = false;
        for c in s.chars() {
            if c.is_whitespace() {
                pending_space = !out.is_empty();
            } else {
                if pending_space {
                    out.push(' ');
                    pending_space = false;
                }
                out.extend(c.to_lowercase());
            }
        }
        out
    }

    fn canonical_alias(s: &str) -> Vec<char> {
        let mut v = canonical(s);
        while v.first().is_some_and(|c| !c.is_alphanumeric()) {
            v.remove(0);
        }
        while v.last().is_some_and(|c| !c.is_alphanumeric()) {
            v.pop();
        }
        v
    }

    fn occurs(hay: &[char], needle: &[char]) -> bool {
        if needle.is_empty() || needle.len() > hay.len() {
            return false;
        }
        (0..=hay.len() - needle.len()).any(|i| (0..needle.len()).all(|j| hay[i + j] == needle[j]))
    }

    pub fn accuracy(prediction: &str, aliases: &[String]) -> bool {
        let hay = canonical(prediction);
        aliases.iter().any(|a| occurs(&hay, &canonical_alias(a)))
    }

    pub fn str_em(prediction: &str, sets: &[Vec<String>]) -> f64 {
        if sets.is_empty() {
            return 0.0;
        }
        sets.iter().filter(|s| accuracy(prediction, s)).count() as f64 / sets.len() as f64
    }
}

/// A published results row: five in-domain scores, their average, two
/// out-of-domain scores, their average and the drop, as printed.
pub struct PublishedRow {
    pub label: &'static str,
    pub in_domain: [&'static str; 5],
    pub id_avg: &'static str,
    pub out_of_domain: [&'static str; 2],
    pub ood_avg: &'static str,
    pub drop: &'static str,
}

const fn row(
    label: &'static str,
    in_domain: [&'static str; 5],
    id_avg: &'static str,
    out_of_domain: [&'static str; 2],
    ood_avg: &'static str,
    drop: &'static str,
) -> PublishedRow {
    PublishedRow { label, in_domain, id_avg, out_of_domain, ood_avg, drop }
}

pub const PUBLISHED_DROP_ROWS: [PublishedRow; 9] = [
    row("qwen2.5-7b/vanilla", ["63.7", "73.2", "60.2", "44.7", "42.8"], "56.9", ["18.5", "9.0"], "13.8", "43.1"),
    row("qwen2.5-7b/self-refine", ["65.5", "74.4", "61.6", "45.0", "45.2"], "58.3", ["21.3", "14.6"], "18.0", "40.3"),
    row("qwen2.5-7b/critic", ["68.4", "77.8", "65.9", "49.5", "48.9"], "62.1", ["33.7", "26.1"], "29.9", "32.2"),
    row("qwen2.5-14b/vanilla", ["65.3", "77.0", "63.6", "44.8", "45.2"], "59.2", ["23.3", "12.6"], "18.0", "41.2"),
    row("qwen2.5-14b/self-refine", ["67.0", "78.0", "65.1", "46.1", "47.3"], "60.7", ["24.4", "16.0"], "20.2", "40.5"),
    row("qwen2.5-14b/critic", ["68.4", "79.5", "67.7", "49.8", "48.6"], "62.8", ["34.8", "26.6"], "30.7", "32.1"),
    row("llama3.1-8b/vanilla", ["65.0", "73.4", "62.0", "43.0", "45.2"], "57.7", ["17.1", "6.1"], "11.6", "46.1"),
    row("llama3.1-8b/self-refine", ["66.1", "74.1", "61.4", "42.8", "44.7"], "57.8", ["18.8", "8.7"], "13.8", "44.0"),
    row("llama3.1-8b/critic", ["66.5", "77.0", "65.3", "47.0", "47.1"], "60.6", ["32.2", "22.8"], "27.5", "33.1"),
];

/// Recomputes a row; returns `(id_avg, ood_avg, drop)` as printed strings.
pub fn recompute(row: &PublishedRow) -> (String, String, String) {
    use alignrag::evaluation::report::{domain_drop, Tenths};
    let parse = |v: &[&str]| v.iter().map(|s| s.parse::<Tenths>().unwrap()).collect::<Vec<_>>();
    let d = domain_drop(&parse(&row.in_domain), &parse(&row.out_of_domain)).unwrap();
    (d.id_avg.to_string(), d.ood_avg.to_string(), d.drop.to_string())
}

/// Runs the answer-injection scenario through the refinement loop.
pub fn injection_run(n: usize, injected: usize, mode: CdaMode) -> (Vec<alignrag::domain::BenchmarkInstance>, alignrag::cda::BatchOutput) {
    use alignrag::backends::ScriptedBackend;
    let fx = alignrag::synthetic::injection_fixture(n, injected);
    let generator: Arc<dyn Backend> = Arc::new(ScriptedBackend::new("gen", fx.generator_rules));
    let critic: Arc<dyn Backend> = Arc::new(ScriptedBackend::new("critic", fx.critic_rules));
    let cfg = CdaConfig { generator: "gen".into(), critic: "critic".into(), mode, record_prompts: false, answer_hint: false };
    let out = CdaRunner::new(cfg, generator, critic).run_batch(&fx.instances, 4, None).unwrap();
    (fx.instances, out)
}
