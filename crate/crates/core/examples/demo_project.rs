//! Writes a self-contained CLI project backed by scripted models.
//!
//!     cargo run --example demo_project -- /tmp/demo
//!     cargo run --bin alignrag -- build-corpus -c /tmp/demo/run.toml
//!
//! Swap the `scripted` backends for `http_chat` ones to run against served
//! models.

use std::fs;
use std::path::PathBuf;

use alignrag::backends::{RuleMatch, ScriptedRule};
use alignrag::domain::Benchmark;
use alignrag::io::write_jsonl;
use alignrag::synthetic::{engineered_pool, injection_fixture, PoolShape};

const CONFIG: &str = r#"seed = 7
jobs = 2

[[backends]]
id = "gen"
kind = "scripted"
rules = "rules/gen.jsonl"

[[backends]]
id = "strong"
kind = "scripted"
rules = "rules/strong.jsonl"

[[backends]]
id = "critic"
kind = "scripted"
rules = "rules/critic.jsonl"

[[backends]]
id = "weak-critic"
kind = "scripted"
rules = "rules/weak_critic.jsonl"

[data]
instances = "data/pool.jsonl"
eval_instances = "data/eval.jsonl"

[corpus]
quotas = { h1 = 4, h2 = 6, h34 = [6, 6, 3, 3, 3] }

[synth]
weak_backend = "gen"
strong_backend = "strong"
critic_backend = "critic"
weak_critic_backend = "weak-critic"

[cda]
generator = "gen"
critic = "critic"
mode = "auto:3"
"#;

fn main() -> anyhow::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "alignrag-demo".into()));
    let shape = PoolShape { per_support: [12, 12, 6, 6, 6], unhelpful: 18, ..PoolShape::DEFAULT_3000 };
    write_jsonl(&root.join("data/pool.jsonl"), &engineered_pool(Benchmark::Nq, &shape, 2))?;

    let fx = injection_fixture(30, 15);
    let mut critic = vec![ScriptedRule::new(
        RuleMatch::ContainsSubstring("Following the critique".into()),
        "[Good] The rationale cites the record that lists the code.",
    )];
    critic.extend(fx.critic_rules);
    write_jsonl(&root.join("data/eval.jsonl"), &fx.instances)?;
    write_jsonl(&root.join("rules/gen.jsonl"), &fx.generator_rules)?;
    write_jsonl(&root.join("rules/critic.jsonl"), &critic)?;
    write_jsonl(
        &root.join("rules/strong.jsonl"),
        &[ScriptedRule::new(RuleMatch::Always, "Document [1] states the code directly")],
    )?;
    write_jsonl(&root.join("rules/weak_critic.jsonl"), &[ScriptedRule::new(RuleMatch::Always, "Looks fine")])?;
    fs::write(root.join("run.toml"), CONFIG)?;
    println!("{}", root.join("run.toml").display());
    Ok(())
}
