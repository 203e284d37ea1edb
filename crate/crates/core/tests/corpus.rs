use std::collections::{BTreeMap, HashSet};

use alignrag::corpus_builder::{build_hierarchy, BuildConfig, CompletenessRule, CorpusError, LabeledInstance, Quotas};
use alignrag::domain::{Benchmark, HierarchyTier};
use alignrag::io::{parse_jsonl, sha256_hex, to_jsonl};
use alignrag::synthetic::{engineered_pool, PoolShape};

fn pool(benchmarks: &[Benchmark]) -> Vec<alignrag::domain::BenchmarkInstance> {
    benchmarks
        .iter()
        .enumerate()
        .flat_map(|(i, b)| engineered_pool(b.clone(), &PoolShape::DEFAULT_3000, 100 + i as u64))
        .collect()
}

/// Documents mentioning any gold alias, by plain lowercase substring search.
fn answer_docs(l: &LabeledInstance) -> usize {
    l.instance
        .documents
        .iter()
        .filter(|d| {
            let text = format!("{} {}", d.title, d.contents).to_lowercase();
            l.instance.gold_answers.iter().any(|a| text.contains(&a.to_lowercase()))
        })
        .count()
}

#[test]
fn default_quotas_fill_exactly_and_relabel_cleanly() {
    let benches = [Benchmark::PopQa, Benchmark::Nq];
    let built = build_hierarchy(&pool(&benches), &BuildConfig::new(17), 2).unwrap();
    assert_eq!(built.instances.len(), 4000);

    let mut per: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for l in &built.instances {
        *per.entry(l.instance.benchmark.name().to_string()).or_default().entry(l.tier.to_string()).or_default() += 1;
        l.verify(CompletenessRule::SingleDoc).unwrap();
        let expected = match l.tier {
            HierarchyTier::Irrelevant | HierarchyTier::RelevantUnhelpful => 0,
            HierarchyTier::Helpful { support_count } => support_count as usize,
        };
        assert_eq!(answer_docs(l), expected, "{}", l.instance.id);
    }
    let want: BTreeMap<String, usize> = [
        ("H1", 200),
        ("H2", 400),
        ("H34[1]", 400),
        ("H34[2]", 400),
        ("H34[3]", 200),
        ("H34[4]", 200),
        ("H34[5]", 200),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    for b in &benches {
        assert_eq!(per[b.name()], want, "{}", b.name());
        assert_eq!(built.counts[b.name()].h34, [400, 400, 200, 200, 200]);
    }
}

#[test]
fn no_instance_is_used_twice() {
    let built = build_hierarchy(&pool(&[Benchmark::TriviaQa]), &BuildConfig::new(3), 1).unwrap();
    let ids: HashSet<&str> = built.instances.iter().map(|l| l.instance.id.as_str()).collect();
    assert_eq!(ids.len(), built.instances.len());
}

#[test]
fn same_seed_same_bytes_regardless_of_jobs() {
    let input = pool(&[Benchmark::PopQa, Benchmark::Asqa]);
    let a = build_hierarchy(&input, &BuildConfig::new(5), 1).unwrap();
    let b = build_hierarchy(&input, &BuildConfig::new(5), 4).unwrap();
    let c = build_hierarchy(&input, &BuildConfig::new(6), 4).unwrap();
    let hash = |x: &[LabeledInstance]| sha256_hex(&to_jsonl(x).unwrap());
    assert_eq!(hash(&a.instances), hash(&b.instances));
    assert_ne!(hash(&a.instances), hash(&c.instances));
}

#[test]
fn input_order_does_not_matter() {
    let mut input = pool(&[Benchmark::Nq]);
    let a = build_hierarchy(&input, &BuildConfig::new(9), 2).unwrap();
    input.reverse();
    let b = build_hierarchy(&input, &BuildConfig::new(9), 2).unwrap();
    assert_eq!(a, b);
}

#[test]
fn labeled_rows_roundtrip_through_jsonl() {
    let built = build_hierarchy(&pool(&[Benchmark::Nq]), &BuildConfig::new(1), 1).unwrap();
    let bytes = to_jsonl(&built.instances).unwrap();
    let back: Vec<LabeledInstance> = parse_jsonl(std::str::from_utf8(&bytes).unwrap(), "mem").unwrap();
    assert_eq!(back, built.instances);
}

#[test]
fn shortfalls_name_every_short_tier() {
    let shape = PoolShape { per_support: [600, 600, 300, 300, 100], unhelpful: 900, ..PoolShape::DEFAULT_3000 };
    let input = engineered_pool(Benchmark::PopQa, &shape, 1);
    let cfg = BuildConfig { quotas: Quotas { h2: 1000, ..Quotas::default() }, ..BuildConfig::new(1) };
    match build_hierarchy(&input, &cfg, 1) {
        Err(CorpusError::QuotaShortfall(s)) => {
            let tiers: Vec<(&str, usize, usize)> = s.iter().map(|x| (x.tier.as_str(), x.available, x.requested)).collect();
            assert!(tiers.contains(&("H2", 900, 1000)), "{tiers:?}");
            assert!(tiers.iter().any(|t| t.0.contains('5') && t.1 == 100 && t.2 == 200), "{tiers:?}");
        }
        other => panic!("expected shortfall, got {other:?}"),
    }
}

#[test]
fn tamper_is_caught_by_verify() {
    let built = build_hierarchy(&pool(&[Benchmark::Nq]), &BuildConfig::new(2), 1).unwrap();
    let mut l = built.instances.iter().find(|l| l.tier == HierarchyTier::RelevantUnhelpful).unwrap().clone();
    let code = l.instance.gold_answers[0].clone();
    l.instance.documents[0].contents.push_str(&format!(" {code}"));
    assert!(l.verify(CompletenessRule::SingleDoc).is_err());
}
