//! Same scripted scenario under fixed and auto-stopping refinement budgets.
//! The critic accepts a rationale once it names the answer, so auto mode
//! halts early on the instances where the critique helped.

use std::sync::Arc;

use alignrag::backends::{Backend, RuleMatch, ScriptedBackend, ScriptedRule};
use alignrag::cda::{CdaConfig, CdaMode, CdaRunner};
use alignrag::synthetic::injection_fixture;

fn main() -> anyhow::Result<()> {
    let fx = injection_fixture(12, 6);
    let mut critic_rules = vec![ScriptedRule::new(
        RuleMatch::ContainsSubstring("Following the critique".into()),
        "[Good] The rationale cites the record that lists the code.",
    )];
    critic_rules.extend(fx.critic_rules.iter().cloned());
    let generator: Arc<dyn Backend> = Arc::new(ScriptedBackend::new("gen", fx.generator_rules.clone()));
    let critic: Arc<dyn Backend> = Arc::new(ScriptedBackend::new("critic", critic_rules));

    for mode in [CdaMode::Fixed(1), CdaMode::Fixed(3), CdaMode::Auto(3)] {
        let cfg = CdaConfig {
            generator: "gen".into(),
            critic: "critic".into(),
            mode,
            record_prompts: false,
            answer_hint: false,
        };
        let out = CdaRunner::new(cfg, generator.clone(), critic.clone()).run_batch(&fx.instances, 2, None)?;
        let s = &out.summary;
        println!(
            "{mode:>8}: {} generator + {} critic calls, mean refinements {:.2}, stops {:?}",
            s.generator_calls, s.critic_calls, s.mean_refinements, s.stop_reasons
        );
    }

    let cfg = CdaConfig {
        generator: "gen".into(),
        critic: "critic".into(),
        mode: CdaMode::Fixed(1),
        record_prompts: true,
        answer_hint: false,
    };
    let outcome = CdaRunner::new(cfg, generator, critic).run(&fx.instances[0]);
    for (i, state) in outcome.trajectory.states.iter().enumerate() {
        println!("y_{i}: {state}");
    }
    println!("critique: {}", outcome.trajectory.critiques[0]);
    Ok(())
}
