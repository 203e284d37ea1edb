mod support;

use std::sync::Arc;

use alignrag::backends::{Backend, BackendError, FnBackend};
use alignrag::cda::{CdaConfig, CdaMode, CdaRunner};
use alignrag::domain::{RefinementTrajectory, StopReason};
use alignrag::io::read_jsonl;
use proptest::prelude::*;
use support::{draft_runner, plain_instance};

proptest! {
    #[test]
    fn fixed_budget_call_accounting(t in 0usize..8, good_at in proptest::option::of(0usize..8)) {
        let out = draft_runner(CdaMode::Fixed(t), good_at).run(&plain_instance("q"));
        let traj = out.trajectory;
        prop_assert_eq!(traj.calls.generator as usize, t + 1);
        prop_assert_eq!(traj.calls.critic as usize, t);
        prop_assert_eq!(traj.refinements(), t);
        prop_assert_eq!(traj.stop_reason, StopReason::FixedBudgetExhausted);
        prop_assert!(traj.is_well_formed());
        let last = format!("draft {t}");
        prop_assert_eq!(traj.final_state(), Some(last.as_str()));
    }

    #[test]
    fn auto_mode_contract(max_t in 1usize..8, good_at in proptest::option::of(0usize..10)) {
        let traj = draft_runner(CdaMode::Auto(max_t), good_at).run(&plain_instance("q")).trajectory;
        let halted = traj.stop_reason == StopReason::CriticSaidGood;
        prop_assert_eq!(traj.calls.critic as usize, traj.refinements() + halted as usize);
        prop_assert_eq!(traj.calls.generator as usize, traj.refinements() + 1);
        prop_assert!(traj.refinements() <= max_t);
        match good_at {
            Some(k) if k < max_t => {
                prop_assert!(halted);
                prop_assert_eq!(traj.refinements(), k);
                prop_assert!(traj.halting_critique.is_some());
            }
            _ => {
                prop_assert!(!halted);
                prop_assert_eq!(traj.refinements(), max_t);
                prop_assert_eq!(traj.stop_reason, StopReason::FixedBudgetExhausted);
            }
        }
        prop_assert!(traj.is_well_formed());
    }
}

#[test]
fn control_tokens_never_reach_the_refinement_prompt() {
    let out = draft_runner(CdaMode::Fixed(2), None).run(&plain_instance("q"));
    let stages: Vec<&str> = out.transcript.iter().map(|e| e.stage.as_str()).collect();
    assert_eq!(stages, ["generate:0", "critique:0", "refine:1", "critique:1", "refine:2"]);
    for e in out.transcript.iter().filter(|e| e.stage.starts_with("refine")) {
        assert!(!e.prompt.contains("[Bad]"));
        assert!(e.prompt.contains("Here is the given critique: Draft"));
    }
    assert_eq!(out.trajectory.critiques[0], "Draft 0 misses the key document.");
}

#[test]
fn initial_prompt_withholds_the_answer_by_default() {
    let out = draft_runner(CdaMode::Fixed(0), None).run(&plain_instance("q"));
    assert!(out.transcript[0].prompt.ends_with("explain how the contents lead to the answer."));
    assert!(!out.transcript[0].prompt.contains("lead to the answer: "));
}

fn failing_critic_runner(fail_from: usize) -> CdaRunner {
    let generator: Arc<dyn Backend> = Arc::new(FnBackend::new("gen", |p: &str| {
        Ok(if p.contains("critique:") { "next".into() } else { "first".into() })
    }));
    let calls = std::sync::atomic::AtomicUsize::new(0);
    let critic: Arc<dyn Backend> = Arc::new(FnBackend::new("critic", move |_: &str| {
        if calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) >= fail_from {
            Err(BackendError::Timeout)
        } else {
            Ok("[Bad] try again".into())
        }
    }));
    let cfg = CdaConfig {
        generator: "gen".into(),
        critic: "critic".into(),
        mode: CdaMode::Fixed(3),
        record_prompts: false,
        answer_hint: false,
    };
    CdaRunner::new(cfg, generator, critic)
}

#[test]
fn backend_error_keeps_partial_trajectory() {
    let traj = failing_critic_runner(1).run(&plain_instance("q")).trajectory;
    assert_eq!(traj.stop_reason, StopReason::BackendError);
    assert_eq!(traj.refinements(), 1);
    assert!(traj.error.as_deref().unwrap().contains("critic"));
    assert!(traj.is_well_formed());
}

#[test]
fn batch_is_ordered_and_jobs_invariant() {
    let instances: Vec<_> = (0..20).map(|i| plain_instance(&format!("q{i:02}"))).collect();
    let runner = draft_runner(CdaMode::Auto(3), Some(2));
    let a = runner.run_batch(&instances, 1, None).unwrap();
    let b = runner.run_batch(&instances, 6, None).unwrap();
    assert_eq!(a.trajectories, b.trajectories);
    assert_eq!(a.trajectories.iter().map(|t| t.instance_id.clone()).collect::<Vec<_>>(),
        instances.iter().map(|i| i.id.clone()).collect::<Vec<_>>());
    assert_eq!(a.summary.total_refinements, 40);
    assert_eq!(a.summary.critic_calls, 60);
}

#[test]
fn checkpoint_resume_skips_finished_work() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("ckpt.jsonl");
    let instances: Vec<_> = (0..6).map(|i| plain_instance(&format!("q{i}"))).collect();
    let runner = draft_runner(CdaMode::Fixed(2), None);
    runner.run_batch(&instances[..4], 2, Some(&ckpt)).unwrap();
    let saved: Vec<RefinementTrajectory> = read_jsonl(&ckpt).unwrap();
    assert_eq!(saved.len(), 4);

    // Torn tail from an interrupted write.
    let mut text = std::fs::read_to_string(&ckpt).unwrap();
    text.push_str("{\"instance_id\":\"q4\",\"sta");
    std::fs::write(&ckpt, text).unwrap();

    let full = runner.run_batch(&instances, 2, Some(&ckpt)).unwrap();
    let fresh = runner.run_batch(&instances, 2, None).unwrap();
    assert_eq!(full.trajectories, fresh.trajectories);
    assert_eq!(full.transcript.len(), 2 * 5, "only the two unfinished instances ran");
    let saved: Vec<RefinementTrajectory> = read_jsonl(&ckpt).unwrap();
    assert_eq!(saved.len(), 6);

    let other = draft_runner(CdaMode::Fixed(3), None);
    assert!(other.run_batch(&instances, 1, Some(&ckpt)).is_err());
}
