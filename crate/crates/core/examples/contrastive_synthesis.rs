//! Contrastive critique synthesis with closure backends, then the critic
//! training rows built from it.

use std::sync::Arc;

use alignrag::backends::{Backend, FnBackend};
use alignrag::corpus_builder::{build_hierarchy, BuildConfig, Quotas};
use alignrag::critique_synthesis::{cft_rows, cpo_rows, SynthesisConfig, SynthesisMode, Synthesizer};
use alignrag::domain::Benchmark;
use alignrag::synthetic::{engineered_pool, PoolShape};

fn gold_answer(prompt: &str) -> String {
    let start = prompt.find("lead to the answer: ").map_or(0, |i| i + "lead to the answer: ".len());
    prompt[start..].split(".\n").next().unwrap_or_default().to_string()
}

fn main() -> anyhow::Result<()> {
    let shape = PoolShape { per_support: [20, 20, 10, 10, 10], unhelpful: 30, ..PoolShape::DEFAULT_3000 };
    let pool = engineered_pool(Benchmark::Nq, &shape, 3);
    let cfg = BuildConfig { quotas: Quotas { h1: 2, h2: 2, h34: [2, 2, 1, 1, 1] }, ..BuildConfig::new(3) };
    let corpus = build_hierarchy(&pool, &cfg, 1)?.instances;

    // The weak model hedges on every other instance.
    let weak: Arc<dyn Backend> = Arc::new(FnBackend::new("weak-7b", |p: &str| {
        let code = gold_answer(p);
        Ok(if code.ends_with(['0', '2', '4', '6', '8']) {
            format!("Document [2] suggests {code}")
        } else {
            "None of the documents mention it".to_string()
        })
    }));
    let strong: Arc<dyn Backend> = Arc::new(FnBackend::new("strong-72b", |p: &str| {
        Ok(format!("The answer-bearing document states the code {} explicitly", gold_answer(p)))
    }));
    let critic: Arc<dyn Backend> = Arc::new(FnBackend::new("critic", |p: &str| {
        Ok(if p.contains("None of the documents") {
            "The weak rationale dismisses documents that contain the code".to_string()
        } else {
            "The weak rationale is right but cites the wrong document".to_string()
        })
    }));
    let weak_critic: Arc<dyn Backend> = Arc::new(FnBackend::new("weak-critic", |_: &str| Ok("Looks fine".to_string())));

    let scfg = SynthesisConfig {
        weak_backend: "weak-7b".into(),
        strong_backend: Some("strong-72b".into()),
        critic_backend: "critic".into(),
        mode: SynthesisMode::Contrastive,
        auto_labels: true,
        weak_critic_backend: Some("weak-critic".into()),
    };
    let synth = Synthesizer::new(scfg, weak, Some(strong), critic, Some(weak_critic))?;
    let run = synth.run(&corpus, 2);
    println!("{} synthesized, {} failed", run.instances.len(), run.failed.len());

    let rows = cft_rows(&run.instances, true)?;
    for row in rows.iter().take(3) {
        println!("--- {} [{}]\n{}", row.meta.instance_id, row.meta.tier, row.target);
    }
    let (pairs, dropped) = cpo_rows(&run.instances)?;
    println!("{} CFT rows, {} preference rows, {dropped} dropped", rows.len(), pairs.len());
    println!("{}", serde_json::to_string(&pairs[0])?);
    Ok(())
}
