//! Samples the granularity hierarchy from a synthetic pool and prints the
//! tier counts.

use alignrag::corpus_builder::{build_hierarchy, BuildConfig, CompletenessRule};
use alignrag::domain::Benchmark;
use alignrag::io::{sha256_hex, to_jsonl};
use alignrag::synthetic::{engineered_pool, PoolShape};

fn main() -> anyhow::Result<()> {
    let pool = engineered_pool(Benchmark::TriviaQa, &PoolShape::DEFAULT_3000, 1);
    let cfg = BuildConfig::new(42);
    let built = build_hierarchy(&pool, &cfg, 2)?;

    for (benchmark, counts) in &built.counts {
        println!("{benchmark}: H1 {} | H2 {} | H34 by support {:?} | complete {}", counts.h1, counts.h2, counts.h34, counts.complete);
    }
    let first_h34 = built.instances.iter().find(|l| l.tier.label() == "H34").expect("H34 rows");
    println!("example row {} tier {} granularity {}", first_h34.instance.id, first_h34.tier, first_h34.granularity);

    let violations = built.instances.iter().filter(|l| l.verify(CompletenessRule::SingleDoc).is_err()).count();
    println!("{} rows, {violations} relabel violations", built.instances.len());
    println!("sha256 {}", sha256_hex(&to_jsonl(&built.instances)?));
    Ok(())
}
