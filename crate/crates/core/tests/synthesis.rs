mod support;

use alignrag::corpus_builder::{build_hierarchy, BuildConfig, LabeledInstance, Quotas};
use alignrag::critique_synthesis::{cft_rows, cpo_rows, validate_cft_row, CftRow, CpoRow, Stage, SynthesisMode};
use alignrag::domain::{Benchmark, ControlToken};
use alignrag::evaluation::metrics::accuracy;
use alignrag::io::{parse_jsonl, to_jsonl};
use alignrag::synthetic::{engineered_pool, PoolShape};
use support::toy_synthesizer;

fn corpus(per_tier: usize) -> Vec<LabeledInstance> {
    let shape = PoolShape { per_support: [60, 60, 30, 30, 30], unhelpful: 90, ..PoolShape::DEFAULT_3000 };
    let pool = engineered_pool(Benchmark::Nq, &shape, 4);
    let cfg = BuildConfig { quotas: Quotas { h1: per_tier, h2: per_tier, h34: [per_tier; 5] }, ..BuildConfig::new(4) };
    build_hierarchy(&pool, &cfg, 1).unwrap().instances
}

#[test]
fn contrastive_records_and_rows() {
    let corpus = corpus(10);
    let run = toy_synthesizer(SynthesisMode::Contrastive, true).run(&corpus, 4);
    assert!(run.failed.is_empty());
    assert_eq!(run.instances.len(), 70);

    for s in &run.instances {
        let gold = &corpus.iter().find(|l| l.instance.id == s.record.instance_id).unwrap().instance.gold_answers;
        let expected = if accuracy(&s.record.y_unexp, gold) { ControlToken::Good } else { ControlToken::Bad };
        assert_eq!(s.record.control_token, expected);
        let y_exp = s.record.y_exp.as_deref().unwrap();
        assert!(s.record.critique.ends_with(&format!("The better rationale should be: {y_exp}.")));
        let stages: Vec<&str> = s.transcript.iter().map(|t| t.stage.as_str()).collect();
        assert_eq!(stages, ["rationale", "critique", "preference"]);
        assert!(s.transcript[1].prompt.contains("Here is the given gold rationale"));
    }

    let rows = cft_rows(&run.instances, true).unwrap();
    assert_eq!(rows.len(), 70);
    for (row, s) in rows.iter().zip(&run.instances) {
        validate_cft_row(row, true).unwrap();
        assert!(row.target.starts_with(s.record.control_token.marker()));
        assert!(!row.input.contains("gold rationale"));
    }
    let (cpo, dropped) = cpo_rows(&run.instances).unwrap();
    assert_eq!((cpo.len(), dropped), (70, 0));
    assert!(cpo.iter().all(|r| r.chosen != r.rejected && r.chosen.starts_with("The weak rationale skips")));
}

#[test]
fn training_rows_have_the_exported_schema() {
    let run = toy_synthesizer(SynthesisMode::Contrastive, true).run(&corpus(2), 2);
    let rows = cft_rows(&run.instances, false).unwrap();
    let v: serde_json::Value = serde_json::to_value(&rows[0]).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["input", "meta", "target"]);
    let meta = v["meta"].as_object().unwrap();
    assert_eq!(meta.keys().map(String::as_str).collect::<Vec<_>>(), ["granularity", "instance_id", "tier"]);
    assert_eq!(meta["granularity"].as_object().unwrap().len(), 3);

    let bytes = to_jsonl(&rows).unwrap();
    let back: Vec<CftRow> = parse_jsonl(std::str::from_utf8(&bytes).unwrap(), "cft").unwrap();
    assert_eq!(back, rows);

    let (cpo, _) = cpo_rows(&run.instances).unwrap();
    let v = serde_json::to_value(&cpo[0]).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["chosen", "meta", "prompt", "rejected"]);
    let bytes = to_jsonl(&cpo).unwrap();
    let back: Vec<CpoRow> = parse_jsonl(std::str::from_utf8(&bytes).unwrap(), "cpo").unwrap();
    assert_eq!(back, cpo);
}

#[test]
fn vanilla_mode_never_shows_a_gold_rationale() {
    let run = toy_synthesizer(SynthesisMode::Vanilla, false).run(&corpus(3), 2);
    assert!(run.failed.is_empty());
    for entry in run.transcript() {
        assert!(!entry.prompt.contains("gold rationale"), "{}", entry.stage);
    }
    for s in &run.instances {
        assert!(s.record.y_exp.is_none());
        assert!(s.preference.is_none());
        assert!(!s.record.critique.contains("The better rationale should be"));
    }
    assert!(cpo_rows(&run.instances).unwrap().0.is_empty());
}

#[test]
fn run_is_deterministic_across_worker_counts() {
    let corpus = corpus(5);
    let synth = toy_synthesizer(SynthesisMode::Contrastive, true);
    let a = cft_rows(&synth.run(&corpus, 1).instances, true).unwrap();
    let b = cft_rows(&synth.run(&corpus, 8).instances, true).unwrap();
    assert_eq!(to_jsonl(&a).unwrap(), to_jsonl(&b).unwrap());
}

#[test]
fn failing_critic_isolates_the_instance() {
    use std::sync::Arc;

    use alignrag::backends::{BackendError, FnBackend};
    use alignrag::critique_synthesis::{SynthesisConfig, Synthesizer};

    let corpus = corpus(2);
    let victim = corpus[3].instance.question.clone();
    let ok = |text: &'static str| Arc::new(FnBackend::new(text, move |_: &str| Ok(text.to_string())));
    let critic = Arc::new(FnBackend::new("critic", move |p: &str| {
        if p.contains(&victim) {
            Err(BackendError::HttpStatus(500))
        } else {
            Ok("Needs the code".to_string())
        }
    }));
    let cfg = SynthesisConfig {
        weak_backend: "weak".into(),
        strong_backend: Some("strong".into()),
        critic_backend: "critic".into(),
        mode: SynthesisMode::Contrastive,
        auto_labels: false,
        weak_critic_backend: None,
    };
    let synth = Synthesizer::new(cfg, ok("weak answer"), Some(ok("strong answer")), critic, None).unwrap();
    let run = synth.run(&corpus, 3);
    assert_eq!(run.instances.len(), corpus.len() - 1);
    assert_eq!(run.failed.len(), 1);
    assert_eq!(run.failed[0].instance_id, corpus[3].instance.id);
    assert_eq!(run.failed[0].stage, Stage::Critique);
}

#[test]
fn identical_preference_pairs_are_dropped() {
    let mut run = toy_synthesizer(SynthesisMode::Contrastive, true).run(&corpus(1), 1).instances;
    let pair = run[0].preference.as_mut().unwrap();
    pair.critique_rejected = pair.critique_chosen.clone();
    let (rows, dropped) = cpo_rows(&run).unwrap();
    assert_eq!((rows.len(), dropped), (run.len() - 1, 1));
}
