//! Scores refinement trajectories and writes the report bundle, then
//! recomputes an in-domain/out-of-domain drop from printed table cells.

use std::sync::Arc;

use alignrag::backends::{Backend, ScriptedBackend};
use alignrag::cda::{CdaConfig, CdaMode, CdaRunner};
use alignrag::evaluation::report::{build_report, domain_drop, write_bundle, ReportConfig, Tenths};
use alignrag::synthetic::injection_fixture;

fn main() -> anyhow::Result<()> {
    let fx = injection_fixture(30, 15);
    let generator: Arc<dyn Backend> = Arc::new(ScriptedBackend::new("gen", fx.generator_rules));
    let critic: Arc<dyn Backend> = Arc::new(ScriptedBackend::new("critic", fx.critic_rules));
    let cfg = CdaConfig { generator: "gen".into(), critic: "critic".into(), mode: CdaMode::Fixed(2), record_prompts: false, answer_hint: false };
    let out = CdaRunner::new(cfg, generator, critic).run_batch(&fx.instances, 4, None)?;

    let report = build_report(&fx.instances, &out.trajectories, &ReportConfig { diagnostics: true, ..Default::default() })?;
    for row in &report.metrics {
        println!("{:<4} {:<8} n={:<3} {} -> {}", row.benchmark, row.metric, row.instances, row.initial, row.final_score);
    }
    for p in &report.curve {
        println!("  iteration {} {}: {}", p.iteration, p.benchmark, p.score);
    }
    let dir = std::env::temp_dir().join("alignrag-report-example");
    write_bundle(&dir, &report)?;
    println!("bundle written to {}", dir.display());

    let cells = |v: &[&str]| v.iter().map(|s| s.parse::<Tenths>()).collect::<Result<Vec<_>, _>>();
    let d = domain_drop(&cells(&["68.4", "77.8", "65.9", "49.5", "48.9"])?, &cells(&["33.7", "26.1"])?).expect("non-empty");
    println!("in-domain {} | out-of-domain {} | drop {}", d.id_avg, d.ood_avg, d.drop);
    Ok(())
}
