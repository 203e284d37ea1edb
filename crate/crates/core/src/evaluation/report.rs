//! Report bundle: per-benchmark scores, iteration curves, retrieval-quality
//! split, in-domain vs out-of-domain drop and auto-mode statistics.
//!
//! Every percentage is held as an integer number of tenths and rounded half
//! up, so averages of already-rounded table cells come out exactly as they
//! would in a hand-computed results table.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{accuracy_scoped, normalize_text, str_em_scoped, AnswerScope};
use crate::cda::CdaMode;
use crate::corpus_builder::label_helpfulness;
use crate::domain::{Benchmark, BenchmarkInstance, RefinementTrajectory};
use crate::io::{write_json, IoError};

pub const ALL: &str = "ALL";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("trajectory/instance ids do not match: {0}")]
    IdMismatch(String),
    #[error("trajectories mix refinement modes: {0}")]
    ModeMismatch(String),
    #[error("cannot parse refinement mode `{0}`")]
    BadMode(String),
    #[error("bad score `{0}`")]
    BadScore(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// A percentage in tenths of a point: `Tenths(621)` is 62.1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tenths(pub i64);

fn div_round_half_up(num: i64, den: i64) -> i64 {
    assert!(den > 0, "division by a non-positive count");
    (2 * num + den).div_euclid(2 * den)
}

impl Tenths {
    /// Percentage of `num / den`, rounded half up to one decimal.
    pub fn from_ratio(num: u64, den: u64) -> Tenths {
        Tenths(div_round_half_up(1000 * num as i64, den as i64))
    }

    /// Mean of per-instance scores in `[0, 1]`, as a percentage.
    pub fn from_scores(scores: &[f64]) -> Tenths {
        if scores.is_empty() {
            return Tenths(0);
        }
        let mean_permille = scores.iter().sum::<f64>() * 1000.0 / scores.len() as f64;
        // Guard against sums like 0.1 + 0.2 landing just under a half.
        Tenths((mean_permille + 0.5 + 1e-9).floor() as i64)
    }

    /// Average of already-rounded cells, rounded half up.
    pub fn mean(values: &[Tenths]) -> Option<Tenths> {
        if values.is_empty() {
            return None;
        }
        let sum: i64 = values.iter().map(|t| t.0).sum();
        Some(Tenths(div_round_half_up(sum, values.len() as i64)))
    }

    pub fn as_f64(&self) -> f64 {
        self.0 as f64 / 10.0
    }
}

impl std::ops::Sub for Tenths {
    type Output = Tenths;
    fn sub(self, rhs: Tenths) -> Tenths {
        Tenths(self.0 - rhs.0)
    }
}

impl fmt::Display for Tenths {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        write!(f, "{sign}{}.{}", self.0.abs() / 10, self.0.abs() % 10)
    }
}

impl FromStr for Tenths {
    type Err = ReportError;

    /// Accepts at most one decimal place, as printed in result tables.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ReportError::BadScore(s.to_string());
        let t = s.trim();
        let (neg, t) = t.strip_prefix('-').map_or((false, t), |r| (true, r));
        let (int, frac) = t.split_once('.').unwrap_or((t, "0"));
        if int.is_empty() || frac.len() != 1 {
            return Err(bad());
        }
        let int: i64 = int.parse().map_err(|_| bad())?;
        let frac: i64 = frac.parse().map_err(|_| bad())?;
        let v = int * 10 + frac;
        Ok(Tenths(if neg { -v } else { v }))
    }
}

impl Serialize for Tenths {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Tenths {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Ok(Tenths((v * 10.0).round() as i64))
    }
}

/// In-domain average, out-of-domain average and their difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainDrop {
    pub id_avg: Tenths,
    pub ood_avg: Tenths,
    pub drop: Tenths,
}

/// Averages each side of a results row and subtracts the rounded averages.
pub fn domain_drop(in_domain: &[Tenths], out_of_domain: &[Tenths]) -> Option<DomainDrop> {
    let id_avg = Tenths::mean(in_domain)?;
    let ood_avg = Tenths::mean(out_of_domain)?;
    Some(DomainDrop { id_avg, ood_avg, drop: id_avg - ood_avg })
}

/// Score of one generation: short-answer coverage for ASQA, accuracy
/// otherwise.
pub fn instance_score(inst: &BenchmarkInstance, prediction: &str, scope: AnswerScope) -> f64 {
    if inst.benchmark.uses_str_em() {
        str_em_scoped(prediction, &inst.short_answer_sets(), scope)
    } else if accuracy_scoped(prediction, &inst.gold_answers, scope) {
        1.0
    } else {
        0.0
    }
}

fn metric_name(b: &Benchmark) -> &'static str {
    if b.uses_str_em() {
        "str_em"
    } else {
        "accuracy"
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnswerabilitySplit {
    /// Instances whose documents contain a gold answer.
    pub informative: BTreeSet<String>,
    pub noisy: BTreeSet<String>,
}

pub fn split_by_answerability(instances: &[BenchmarkInstance]) -> AnswerabilitySplit {
    let mut split = AnswerabilitySplit::default();
    for inst in instances {
        let side = if label_helpfulness(&inst.documents, &inst.gold_answers).helpful {
            &mut split.informative
        } else {
            &mut split.noisy
        };
        side.insert(inst.id.clone());
    }
    split
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportConfig {
    #[serde(default)]
    pub scope: AnswerScope,
    #[serde(default)]
    pub diagnostics: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub benchmark: String,
    pub metric: String,
    pub instances: usize,
    pub initial: Tenths,
    #[serde(rename = "final")]
    pub final_score: Tenths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub benchmark: String,
    pub iteration: usize,
    pub score: Tenths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub split: String,
    pub benchmark: String,
    pub instances: usize,
    pub initial: Tenths,
    #[serde(rename = "final")]
    pub final_score: Tenths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub in_domain: BTreeMap<String, Tenths>,
    pub out_of_domain: BTreeMap<String, Tenths>,
    pub id_avg: Option<Tenths>,
    pub ood_avg: Option<Tenths>,
    pub drop: Option<Tenths>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoStats {
    pub mode: String,
    pub budget: usize,
    pub instances: usize,
    /// Refinements performed → number of instances.
    pub refinement_histogram: BTreeMap<usize, usize>,
    pub mean_refinements: f64,
    pub generator_calls: u64,
    pub critic_calls: u64,
    /// Calls a fixed run with the same budget would make.
    pub fixed_budget_calls: u64,
    /// Fraction of those calls not made.
    pub call_savings: f64,
    pub stop_reasons: BTreeMap<String, usize>,
}

/// Heuristic reasoning-failure phase for a wrong final answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePhase {
    Correct,
    /// No document carries an answer; not a reasoning failure.
    RetrievalFailure,
    /// Cites only documents without an answer span.
    RelevanceAssessment,
    /// Cites no document at all.
    QueryEvidenceMapping,
    /// Cites an answer-bearing document yet still misses the answer.
    EvidenceSynthesis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub instance_id: String,
    pub benchmark: String,
    pub phase: FailurePhase,
}

/// A document counts as cited when its `Document [k]` marker or its title
/// appears in the text.
pub fn diagnose(inst: &BenchmarkInstance, prediction: &str, correct: bool) -> FailurePhase {
    if correct {
        return FailurePhase::Correct;
    }
    let hits = label_helpfulness(&inst.documents, &inst.gold_answers);
    if !hits.helpful {
        return FailurePhase::RetrievalFailure;
    }
    let text = normalize_text(prediction);
    let cited: Vec<bool> = inst
        .documents
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let title = normalize_text(&d.title);
            text.contains(&format!("document [{}]", k + 1)) || (!title.is_empty() && text.contains(&title))
        })
        .collect();
    if cited.iter().zip(&hits.per_doc_hits).any(|(&c, &h)| c && h) {
        FailurePhase::EvidenceSynthesis
    } else if cited.iter().any(|&c| c) {
        FailurePhase::RelevanceAssessment
    } else {
        FailurePhase::QueryEvidenceMapping
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub metrics: Vec<MetricRow>,
    pub curve: Vec<CurvePoint>,
    pub split: Vec<SplitRow>,
    pub ood: OodReport,
    pub auto: AutoStats,
    pub diagnostics: Option<Vec<DiagnosticRow>>,
}

struct Scored<'a> {
    inst: &'a BenchmarkInstance,
    /// Score after each iteration, `0..=budget`.
    by_iteration: Vec<f64>,
}

/// Mean score at `iteration`, or at the last iteration when `None`.
fn mean_at(rows: &[&Scored<'_>], iteration: Option<usize>) -> Tenths {
    let scores: Vec<f64> = rows
        .iter()
        .map(|s| match iteration {
            Some(it) => s.by_iteration[it],
            None => *s.by_iteration.last().expect("at least iteration 0"),
        })
        .collect();
    Tenths::from_scores(&scores)
}

/// Scores trajectories against their instances and aggregates every table.
pub fn build_report(
    instances: &[BenchmarkInstance],
    trajectories: &[RefinementTrajectory],
    cfg: &ReportConfig,
) -> Result<ReportBundle, ReportError> {
    let by_id: HashMap<&str, &BenchmarkInstance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let traj_ids: BTreeSet<&str> = trajectories.iter().map(|t| t.instance_id.as_str()).collect();
    if traj_ids.len() != trajectories.len() {
        return Err(ReportError::IdMismatch("duplicate trajectory ids".into()));
    }
    if let Some(missing) = trajectories.iter().find(|t| !by_id.contains_key(t.instance_id.as_str())) {
        return Err(ReportError::IdMismatch(format!("no instance for trajectory {}", missing.instance_id)));
    }
    if let Some(extra) = instances.iter().find(|i| !traj_ids.contains(i.id.as_str())) {
        return Err(ReportError::IdMismatch(format!("no trajectory for instance {}", extra.id)));
    }

    let modes: BTreeSet<&str> = trajectories.iter().map(|t| t.mode.as_str()).collect();
    if modes.len() > 1 {
        return Err(ReportError::ModeMismatch(modes.into_iter().collect::<Vec<_>>().join(", ")));
    }
    let mode_str = modes.into_iter().next().unwrap_or("fixed:0").to_string();
    let mode: CdaMode = mode_str.parse().map_err(|_| ReportError::BadMode(mode_str.clone()))?;
    let budget = mode.budget();

    let mut scored: Vec<Scored> = trajectories
        .iter()
        .map(|t| {
            let inst = by_id[t.instance_id.as_str()];
            let by_iteration = (0..=budget)
                .map(|it| instance_score(inst, t.state_at(it).unwrap_or(""), cfg.scope))
                .collect();
            Scored { inst, by_iteration }
        })
        .collect();
    scored.sort_by(|a, b| a.inst.id.cmp(&b.inst.id));

    let mut groups: BTreeMap<String, Vec<&Scored>> = BTreeMap::new();
    for s in &scored {
        groups.entry(s.inst.benchmark.name().to_string()).or_default().push(s);
    }

    let mut metrics = Vec::new();
    let mut curve = Vec::new();
    for (name, rows) in &groups {
        let metric = metric_name(&rows[0].inst.benchmark);
        metrics.push(MetricRow {
            benchmark: name.clone(),
            metric: metric.into(),
            instances: rows.len(),
            initial: mean_at(rows, Some(0)),
            final_score: mean_at(rows, None),
        });
        for it in 0..=budget {
            curve.push(CurvePoint {
                benchmark: name.clone(),
                iteration: it,
                score: mean_at(rows, Some(it)),
            });
        }
    }
    let everyone: Vec<&Scored> = scored.iter().collect();
    metrics.push(MetricRow {
        benchmark: ALL.into(),
        metric: "mixed".into(),
        instances: scored.len(),
        initial: mean_at(&everyone, Some(0)),
        final_score: mean_at(&everyone, None),
    });
    for it in 0..=budget {
        curve.push(CurvePoint {
            benchmark: ALL.into(),
            iteration: it,
            score: mean_at(&everyone, Some(it)),
        });
    }

    let answerability = split_by_answerability(instances);
    let mut split = Vec::new();
    for (label, ids) in [("informative", &answerability.informative), ("noisy", &answerability.noisy)] {
        let mut per: BTreeMap<&str, Vec<&Scored>> = BTreeMap::new();
        for s in scored.iter().filter(|s| ids.contains(&s.inst.id)) {
            per.entry(s.inst.benchmark.name()).or_default().push(s);
            per.entry(ALL).or_default().push(s);
        }
        for (benchmark, rows) in per {
            split.push(SplitRow {
                split: label.into(),
                benchmark: benchmark.into(),
                instances: rows.len(),
                initial: mean_at(&rows, Some(0)),
                final_score: mean_at(&rows, None),
            });
        }
    }

    let mut ood = OodReport {
        in_domain: BTreeMap::new(),
        out_of_domain: BTreeMap::new(),
        id_avg: None,
        ood_avg: None,
        drop: None,
    };
    for (name, rows) in &groups {
        let b = &rows[0].inst.benchmark;
        let score = mean_at(rows, None);
        if Benchmark::IN_DOMAIN.contains(b) {
            ood.in_domain.insert(name.clone(), score);
        } else if Benchmark::OUT_OF_DOMAIN.contains(b) {
            ood.out_of_domain.insert(name.clone(), score);
        }
    }
    let id_vals: Vec<Tenths> = ood.in_domain.values().copied().collect();
    let ood_vals: Vec<Tenths> = ood.out_of_domain.values().copied().collect();
    ood.id_avg = Tenths::mean(&id_vals);
    ood.ood_avg = Tenths::mean(&ood_vals);
    ood.drop = domain_drop(&id_vals, &ood_vals).map(|d| d.drop);

    let auto = auto_stats(trajectories, &mode);

    let diagnostics = cfg.diagnostics.then(|| {
        let mut rows: Vec<DiagnosticRow> = trajectories
            .iter()
            .map(|t| {
                let inst = by_id[t.instance_id.as_str()];
                let prediction = t.final_state().unwrap_or("");
                let correct = instance_score(inst, prediction, cfg.scope) >= 1.0;
                DiagnosticRow {
                    instance_id: inst.id.clone(),
                    benchmark: inst.benchmark.name().into(),
                    phase: diagnose(inst, prediction, correct),
                }
            })
            .collect();
        rows.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
        rows
    });

    Ok(ReportBundle { metrics, curve, split, ood, auto, diagnostics })
}

fn auto_stats(trajectories: &[RefinementTrajectory], mode: &CdaMode) -> AutoStats {
    let summary = crate::cda::BatchSummary::from_trajectories(trajectories);
    let budget = mode.budget();
    let mut refinement_histogram = BTreeMap::new();
    for t in trajectories {
        *refinement_histogram.entry(t.refinements()).or_default() += 1;
    }
    let fixed_budget_calls = trajectories.len() as u64 * (2 * budget as u64 + 1);
    let made = summary.generator_calls + summary.critic_calls;
    let call_savings = if fixed_budget_calls == 0 {
        0.0
    } else {
        1.0 - made as f64 / fixed_budget_calls as f64
    };
    AutoStats {
        mode: mode.to_string(),
        budget,
        instances: trajectories.len(),
        refinement_histogram,
        mean_refinements: summary.mean_refinements,
        generator_calls: summary.generator_calls,
        critic_calls: summary.critic_calls,
        fixed_budget_calls,
        call_savings,
        stop_reasons: summary.stop_reasons,
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Serialize)]
struct CsvMetric<'a> {
    benchmark: &'a str,
    metric: &'a str,
    instances: usize,
    initial: String,
    #[serde(rename = "final")]
    final_score: String,
}

#[derive(Serialize, Deserialize)]
struct CsvCurve {
    benchmark: String,
    iteration: usize,
    score: String,
}

#[derive(Serialize)]
struct CsvSplit<'a> {
    split: &'a str,
    benchmark: &'a str,
    instances: usize,
    initial: String,
    #[serde(rename = "final")]
    final_score: String,
}

/// Writes the bundle files into `dir`.
pub fn write_bundle(dir: &Path, bundle: &ReportBundle) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir).map_err(|source| IoError::Fs { path: dir.display().to_string(), source })?;
    let metrics: Vec<_> = bundle
        .metrics
        .iter()
        .map(|m| CsvMetric {
            benchmark: &m.benchmark,
            metric: &m.metric,
            instances: m.instances,
            initial: m.initial.to_string(),
            final_score: m.final_score.to_string(),
        })
        .collect();
    write_csv(&dir.join("metrics.csv"), &metrics)?;
    let curve: Vec<_> = bundle
        .curve
        .iter()
        .map(|c| CsvCurve { benchmark: c.benchmark.clone(), iteration: c.iteration, score: c.score.to_string() })
        .collect();
    write_csv(&dir.join("iteration_curve.csv"), &curve)?;
    let split: Vec<_> = bundle
        .split
        .iter()
        .map(|s| CsvSplit {
            split: &s.split,
            benchmark: &s.benchmark,
            instances: s.instances,
            initial: s.initial.to_string(),
            final_score: s.final_score.to_string(),
        })
        .collect();
    write_csv(&dir.join("answerability_split.csv"), &split)?;
    write_json(&dir.join("ood_drop.json"), &bundle.ood)?;
    write_json(&dir.join("auto_stats.json"), &bundle.auto)?;
    if let Some(diag) = &bundle.diagnostics {
        write_csv(&dir.join("diagnostics.csv"), diag)?;
    }
    Ok(())
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurvePoint>, ReportError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<CsvCurve>()
        .map(|row| {
            let row = row?;
            Ok(CurvePoint { score: row.score.parse()?, benchmark: row.benchmark, iteration: row.iteration })
        })
        .collect()
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Line chart of score against refinement iteration, one line per benchmark.
pub fn render_curves_svg(points: &[CurvePoint]) -> String {
    let (w, h) = (640.0_f64, 400.0_f64);
    let (left, right, top, bottom) = (60.0, 150.0, 20.0, 50.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let max_iter = points.iter().map(|p| p.iteration).max().unwrap_or(0).max(1) as f64;
    let x = |it: usize| left + plot_w * it as f64 / max_iter;
    let y = |score: Tenths| top + plot_h * (1.0 - score.as_f64() / 100.0);

    let mut series: BTreeMap<&str, Vec<&CurvePoint>> = BTreeMap::new();
    for p in points {
        series.entry(&p.benchmark).or_default().push(p);
    }

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    svg += &format!("<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n");
    for pct in (0..=100).step_by(20) {
        let yy = y(Tenths(pct * 10));
        svg += &format!(
            "<line x1=\"{left}\" y1=\"{yy:.1}\" x2=\"{:.1}\" y2=\"{yy:.1}\" stroke=\"#ddd\"/>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{pct}</text>\n",
            left + plot_w,
            left - 6.0,
            yy + 4.0
        );
    }
    for it in 0..=max_iter as usize {
        svg += &format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{it}</text>\n",
            x(it),
            top + plot_h + 18.0
        );
    }
    svg += &format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">iteration</text>\n",
        left + plot_w / 2.0,
        h - 10.0
    );
    svg += &format!(
        "<text transform=\"translate(16 {:.1}) rotate(-90)\" text-anchor=\"middle\">score</text>\n",
        top + plot_h / 2.0
    );
    for (i, (name, mut pts)) in series.into_iter().enumerate() {
        pts.sort_by_key(|p| p.iteration);
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|p| format!("{:.1},{:.1}", x(p.iteration), y(p.score))).collect();
        svg += &format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            path.join(" ")
        );
        for p in &pts {
            svg += &format!(
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>\n",
                x(p.iteration),
                y(p.score)
            );
        }
        let ly = top + 14.0 + 18.0 * i as f64;
        svg += &format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            left + plot_w + 12.0,
            left + plot_w + 32.0,
            left + plot_w + 38.0,
            ly + 4.0,
            escape_xml(name)
        );
    }
    svg += "</svg>\n";
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CallCounts, Document, StopReason};

    fn t(s: &str) -> Tenths {
        s.parse().unwrap()
    }

    #[test]
    fn tenths_parse_and_display() {
        assert_eq!(t("62.1"), Tenths(621));
        assert_eq!(t("9.0"), Tenths(90));
        assert_eq!(t("100"), Tenths(1000));
        assert_eq!(Tenths(-5).to_string(), "-0.5");
        assert!("1.25".parse::<Tenths>().is_err());
        assert!("abc".parse::<Tenths>().is_err());
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(Tenths::mean(&[t("18.5"), t("9.0")]), Some(t("13.8")));
        assert_eq!(Tenths::from_ratio(1, 8), t("12.5"));
        assert_eq!(Tenths::from_ratio(1, 3), t("33.3"));
        assert_eq!(Tenths::from_ratio(2, 3), t("66.7"));
        assert_eq!(Tenths::from_scores(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]), t("12.5"));
    }

    #[test]
    fn published_drop_example() {
        let id = [t("68.4"), t("77.8"), t("65.9"), t("49.5"), t("48.9")];
        let ood = [t("33.7"), t("26.1")];
        let d = domain_drop(&id, &ood).unwrap();
        assert_eq!((d.id_avg, d.ood_avg, d.drop), (t("62.1"), t("29.9"), t("32.2")));
    }

    fn inst(id: &str, b: Benchmark, doc: &str) -> BenchmarkInstance {
        BenchmarkInstance::new(id, b, "q", vec!["gold".into()], vec![Document::new("T", doc).unwrap()]).unwrap()
    }

    fn traj(id: &str, states: &[&str], mode: &str) -> RefinementTrajectory {
        RefinementTrajectory {
            instance_id: id.into(),
            states: states.iter().map(|s| s.to_string()).collect(),
            critiques: vec!["c".into(); states.len().saturating_sub(1)],
            stop_reason: StopReason::FixedBudgetExhausted,
            calls: CallCounts { generator: states.len() as u32, critic: states.len() as u32 - 1 },
            mode: mode.into(),
            halting_critique: None,
            error: None,
        }
    }

    #[test]
    fn all_correct_gives_hundred_everywhere() {
        let instances = vec![inst("a", Benchmark::Nq, "gold"), inst("b", Benchmark::HotpotQa, "x")];
        let trajs = vec![traj("a", &["gold", "gold"], "fixed:1"), traj("b", &["gold", "gold"], "fixed:1")];
        let r = build_report(&instances, &trajs, &ReportConfig::default()).unwrap();
        assert!(r.metrics.iter().all(|m| m.final_score == Tenths(1000) && m.initial == Tenths(1000)));
        assert!(r.curve.iter().all(|c| c.score == Tenths(1000)));
        assert_eq!(r.ood.drop, Some(Tenths(0)));
        assert_eq!(r.split.iter().find(|s| s.split == "noisy" && s.benchmark == ALL).unwrap().instances, 1);
    }

    #[test]
    fn curve_holds_halted_state_and_ids_must_match() {
        let instances = vec![inst("a", Benchmark::Nq, "x")];
        let trajs = vec![traj("a", &["gold"], "auto:3")];
        let r = build_report(&instances, &trajs, &ReportConfig::default()).unwrap();
        let all: Vec<_> = r.curve.iter().filter(|c| c.benchmark == ALL).map(|c| c.score).collect();
        assert_eq!(all, vec![Tenths(1000); 4]);
        assert_eq!(r.auto.fixed_budget_calls, 7);
        assert_eq!(r.auto.refinement_histogram[&0], 1);

        let err = build_report(&instances, &[traj("z", &["gold"], "auto:3")], &ReportConfig::default());
        assert!(matches!(err, Err(ReportError::IdMismatch(_))));
    }

    #[test]
    fn answerability_partition() {
        let instances = vec![inst("a", Benchmark::Nq, "the gold one"), inst("b", Benchmark::Nq, "nothing")];
        let s = split_by_answerability(&instances);
        assert_eq!(s.informative.len() + s.noisy.len(), 2);
        assert!(s.informative.contains("a") && s.noisy.contains("b"));
    }

    #[test]
    fn diagnosis_labels() {
        let i = BenchmarkInstance::new(
            "a",
            Benchmark::Nq,
            "q",
            vec!["gold".into()],
            vec![Document::new("Alpha", "gold here").unwrap(), Document::new("Beta", "other").unwrap()],
        )
        .unwrap();
        assert_eq!(diagnose(&i, "gold", true), FailurePhase::Correct);
        assert_eq!(diagnose(&i, "Per Alpha it is silver", false), FailurePhase::EvidenceSynthesis);
        assert_eq!(diagnose(&i, "Document [2] says silver", false), FailurePhase::RelevanceAssessment);
        assert_eq!(diagnose(&i, "silver", false), FailurePhase::QueryEvidenceMapping);
        let noisy = inst("n", Benchmark::Nq, "nothing");
        assert_eq!(diagnose(&noisy, "silver", false), FailurePhase::RetrievalFailure);
    }

    #[test]
    fn bundle_files_and_svg() {
        let dir = tempfile::tempdir().unwrap();
        let instances = vec![inst("a", Benchmark::Nq, "x")];
        let trajs = vec![traj("a", &["no", "gold"], "fixed:1")];
        let cfg = ReportConfig { diagnostics: true, ..Default::default() };
        let r = build_report(&instances, &trajs, &cfg).unwrap();
        write_bundle(dir.path(), &r).unwrap();
        for f in ["metrics.csv", "iteration_curve.csv", "answerability_split.csv", "ood_drop.json", "auto_stats.json", "diagnostics.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(metrics.starts_with("benchmark,metric,instances,initial,final\nNQ,accuracy,1,0.0,100.0\n"), "{metrics}");
        let curve = read_curve_csv(&dir.path().join("iteration_curve.csv")).unwrap();
        assert_eq!(curve, r.curve);
        let svg = render_curves_svg(&curve);
        assert!(svg.starts_with("<svg") && svg.contains("polyline") && svg.contains(">NQ<"));
    }
}
