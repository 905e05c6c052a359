//! Experiment runner, scoring, statistics and reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{complete, extract_colors, extract_coords, parse_reply, prompt_digest, Backend, ParsedAgentReply};
use crate::corpus::{Corpus, CorpusEntry};
use crate::grid::{Cell, Color, Grid, Position};
use crate::instruction::ObjectKind;
use crate::norms::{ClarificationOption, InstructionType, NormLabel};
use crate::planner::{KeyMultiset, Plan};
use crate::prompting::{build_prompt, Condition, PromptConfig, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub gold_label: NormLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_gem: Option<Position>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_plan: Option<Plan>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gold_options: Vec<ClarificationOption>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub task: f64,
    pub options_acc: Option<f64>,
    /// Characters in the response text.
    pub length: usize,
    pub option_count: Option<usize>,
    pub relevancy: Option<f64>,
    pub clarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub grid_id: String,
    pub instruction_id: String,
    pub condition: Condition,
    pub backend: String,
    pub prompt_digest: String,
    pub raw_reply: String,
    pub parsed: ParsedAgentReply,
    pub gold_label: NormLabel,
    pub scores: Scores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed: Option<String>,
}

impl RunRecord {
    fn key(&self) -> (&str, &str, Condition) {
        (&self.grid_id, &self.instruction_id, self.condition)
    }
}

/// Unit of task accuracy.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Atom {
    PickUp(Position),
    PassKeys(KeyMultiset),
    Unlock(Position),
}

pub fn gold_atoms(plan: &Plan) -> BTreeSet<Atom> {
    let mut atoms: BTreeSet<Atom> = plan.pickups().map(Atom::PickUp).collect();
    atoms.extend(plan.unlocks().map(Atom::Unlock));
    let passed = plan.passed();
    if !passed.is_empty() {
        atoms.insert(Atom::PassKeys(passed));
    }
    atoms
}

fn mentions_handover(text: &str) -> bool {
    text.split(|c: char| !c.is_alphabetic())
        .map(str::to_ascii_lowercase)
        .any(|w| {
            ["pass", "giv", "gave", "hand", "deliver", "bring", "brought"]
                .iter()
                .any(|stem| w.starts_with(stem))
                && w != "handle"
        })
}

/// Atoms implied by a prose reply: key coordinates are pickups, door
/// coordinates are unlocks unless the reply hands keys over, in which case
/// the picked colors form one PassKeys atom.
pub fn predicted_atoms(parsed: &ParsedAgentReply, g: &Grid) -> BTreeSet<Atom> {
    let handover = mentions_handover(&parsed.response_text);
    let mut atoms = BTreeSet::new();
    let mut picked = Vec::new();
    for &p in &parsed.coords {
        match g.get(p) {
            Some(Cell::Key(c)) => {
                if atoms.insert(Atom::PickUp(p)) {
                    picked.push(c);
                }
            }
            Some(Cell::Door(_)) if !handover => {
                atoms.insert(Atom::Unlock(p));
            }
            _ => {}
        }
    }
    if handover && !picked.is_empty() {
        atoms.insert(Atom::PassKeys(KeyMultiset::from_colors(picked)));
    }
    atoms
}

fn kind_of(word: &str) -> Option<ObjectKind> {
    match word {
        "key" | "keys" => Some(ObjectKind::Key),
        "door" | "doors" => Some(ObjectKind::Door),
        "gem" | "gems" => Some(ObjectKind::Gem),
        _ => None,
    }
}

/// Index of the gold option a presented fragment refers to, if any.
pub fn match_option(fragment: &str, gold: &[ClarificationOption]) -> Option<usize> {
    let singles = || gold.iter().enumerate().filter(|(_, o)| !o.combined);
    let combined = || gold.iter().position(|o| o.combined);
    let coords = extract_coords(fragment);
    if !coords.is_empty() {
        let covers = |o: &ClarificationOption| coords.iter().all(|c| o.positions().any(|p| p == *c));
        return singles()
            .find(|(_, o)| covers(o))
            .map(|(i, _)| i)
            .or_else(|| combined().filter(|&i| covers(&gold[i])));
    }
    let words: Vec<String> = fragment
        .split(|c: char| !c.is_alphabetic())
        .map(str::to_ascii_lowercase)
        .filter(|w| !w.is_empty())
        .collect();
    if words.iter().any(|w| w == "both" || w == "all") {
        return combined();
    }
    let mut colors = Vec::new();
    for word in extract_colors(fragment) {
        colors.push(Color::from_word(&word)?);
    }
    let kind = words.iter().find_map(|w| kind_of(w));
    if colors.is_empty() {
        let kind = kind?;
        return singles()
            .find(|(_, o)| o.objects.iter().any(|x| x.kind == kind))
            .map(|(i, _)| i);
    }
    let kind = kind.unwrap_or(ObjectKind::Key);
    singles()
        .find(|(_, o)| {
            colors
                .iter()
                .all(|&c| o.objects.iter().any(|x| x.kind == kind && x.color == Some(c)))
        })
        .map(|(i, _)| i)
}

/// Share of presented options that match a gold option.
pub fn score_options(parsed: &ParsedAgentReply, gold: &GoldAnnotation) -> Option<f64> {
    if gold.gold_label.expects_plan() || gold.gold_options.is_empty() {
        return None;
    }
    if parsed.options.is_empty() {
        return Some(0.0);
    }
    let hits = parsed
        .options
        .iter()
        .filter(|f| match_option(f, &gold.gold_options).is_some())
        .count();
    Some(hits as f64 / parsed.options.len() as f64)
}

/// Task accuracy: gold-plan atom coverage for clear and incomplete
/// instructions, gold-option coverage for the rest.
pub fn score_task(parsed: &ParsedAgentReply, gold: &GoldAnnotation, g: &Grid) -> f64 {
    if let Some(plan) = &gold.gold_plan {
        let want = gold_atoms(plan);
        let got = predicted_atoms(parsed, g);
        if want.is_empty() {
            let acted = got.iter().any(|a| !matches!(a, Atom::PassKeys(_)));
            return if acted { 0.0 } else { 1.0 };
        }
        return want.intersection(&got).count() as f64 / want.len() as f64;
    }
    if gold.gold_options.is_empty() {
        return 0.0;
    }
    let covered: BTreeSet<usize> = parsed
        .options
        .iter()
        .filter_map(|f| match_option(f, &gold.gold_options))
        .collect();
    covered.len() as f64 / gold.gold_options.len() as f64
}

pub fn score_reply(parsed: &ParsedAgentReply, gold: &GoldAnnotation, g: &Grid) -> Scores {
    let clarification = !gold.gold_label.expects_plan();
    Scores {
        task: score_task(parsed, gold, g),
        options_acc: score_options(parsed, gold),
        length: parsed.response_text.chars().count(),
        option_count: clarification.then_some(parsed.options.len()),
        relevancy: None,
        clarity: None,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub support: usize,
}

/// Per-class precision, recall and F1 from (gold, predicted) pairs. A missing
/// prediction counts against recall only. Classes that occur neither as gold
/// nor as prediction are absent.
pub fn per_class_prf(pairs: &[(NormLabel, Option<NormLabel>)]) -> BTreeMap<NormLabel, ClassMetrics> {
    let mut out: BTreeMap<NormLabel, ClassMetrics> = BTreeMap::new();
    for &(gold, pred) in pairs {
        out.entry(gold).or_default().support += 1;
        match pred {
            Some(p) if p == gold => out.entry(gold).or_default().tp += 1,
            Some(p) => {
                out.entry(gold).or_default().fn_ += 1;
                out.entry(p).or_default().fp += 1;
            }
            None => out.entry(gold).or_default().fn_ += 1,
        }
    }
    for m in out.values_mut() {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        m.precision = ratio(m.tp, m.tp + m.fp);
        m.recall = ratio(m.tp, m.tp + m.fn_);
        m.f1 = if m.precision + m.recall == 0.0 {
            0.0
        } else {
            2.0 * m.precision * m.recall / (m.precision + m.recall)
        };
    }
    out
}

/// (gold, predicted) pairs from scored with-norms records.
pub fn label_pairs(records: &[RunRecord]) -> Vec<(NormLabel, Option<NormLabel>)> {
    records
        .iter()
        .filter(|r| r.condition == Condition::WithNorms && r.failed.is_none())
        .map(|r| (r.gold_label, r.parsed.norm_label))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsResult {
    pub n: usize,
    pub t: f64,
    pub df: usize,
    /// Two-tailed.
    pub p: f64,
    pub d: f64,
    pub mean_diff: f64,
    pub sd_diff: f64,
    /// Every difference was zero.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("paired test needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("non-finite value in sample")]
    NonFinite,
}

/// Paired two-tailed t-test on `a - b` with the paired Cohen's d.
pub fn paired_stats(pairs: &[(f64, f64)]) -> Result<StatsResult, StatsError> {
    let n = pairs.len();
    if n < 2 {
        return Err(StatsError::TooFewPairs(n));
    }
    let diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    let df = n - 1;
    if diffs.iter().all(|&d| d == 0.0) {
        return Ok(StatsResult {
            n,
            t: 0.0,
            df,
            p: 1.0,
            d: 0.0,
            mean_diff: 0.0,
            sd_diff: 0.0,
            degenerate: true,
        });
    }
    let (t, d) = if sd == 0.0 {
        (f64::INFINITY.copysign(mean), f64::INFINITY.copysign(mean))
    } else {
        (mean / (sd / nf.sqrt()), mean / sd)
    };
    Ok(StatsResult {
        n,
        t,
        df,
        p: t_two_tailed(t, df as f64),
        d,
        mean_diff: mean,
        sd_diff: sd,
        degenerate: false,
    })
}

/// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
pub fn t_two_tailed(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    reg_inc_beta(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// Regularized incomplete beta I_x(a, b).
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub conditions: Vec<Condition>,
    pub max_tokens: u32,
    pub temperature: f32,
    /// Upper bound on concurrently evaluated records.
    pub parallelism: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            conditions: Condition::BOTH.to_vec(),
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
            parallelism: 1,
        }
    }
}

fn run_one(corpus: &Corpus, entry: &CorpusEntry, condition: Condition, cfg: &ExperimentConfig, backend: &Backend) -> RunRecord {
    let mut record = RunRecord {
        grid_id: entry.grid_id.clone(),
        instruction_id: entry.instruction_id.clone(),
        condition,
        backend: backend.name().to_string(),
        prompt_digest: String::new(),
        raw_reply: String::new(),
        parsed: ParsedAgentReply::default(),
        gold_label: entry.gold.gold_label,
        scores: Scores::default(),
        failed: None,
    };
    let Some(g) = corpus.grids.get(&entry.grid_id) else {
        record.failed = Some(format!("unknown grid {}", entry.grid_id));
        return record;
    };
    let prompt_cfg = PromptConfig {
        condition,
        max_tokens: cfg.max_tokens,
        temperature: cfg.temperature,
    };
    let prompt = match build_prompt(g, &entry.text, &prompt_cfg, corpus.exemplars(condition)) {
        Ok(p) => p,
        Err(e) => {
            record.failed = Some(e.to_string());
            return record;
        }
    };
    record.prompt_digest = prompt_digest(&prompt.full_text);
    let reply = match complete(backend, &prompt, &prompt_cfg) {
        Ok(r) => r,
        Err(e) => {
            record.failed = Some(e.to_string());
            record.scores = score_reply(&record.parsed, &entry.gold, g);
            return record;
        }
    };
    record.parsed = parse_reply(&reply, condition);
    record.raw_reply = reply;
    record.scores = score_reply(&record.parsed, &entry.gold, g);
    if matches!(backend, Backend::OracleBacked) {
        record.scores.relevancy = Some(1.0);
        record.scores.clarity = Some(1.0);
    }
    record
}

#[cfg(feature = "parallel")]
fn map_capped<T: Sync, R: Send>(items: &[T], cap: usize, f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    if cap <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(cap).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn map_capped<T: Sync, R: Send>(items: &[T], _cap: usize, f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}

/// One record per (instruction, condition), sorted by grid, instruction and
/// condition. Backend failures are recorded, not propagated.
pub fn run_experiment(corpus: &Corpus, cfg: &ExperimentConfig, backend: &Backend) -> Vec<RunRecord> {
    let jobs: Vec<(&CorpusEntry, Condition)> = corpus
        .entries
        .iter()
        .flat_map(|e| cfg.conditions.iter().map(move |&c| (e, c)))
        .collect();
    let mut records = map_capped(&jobs, cfg.parallelism.max(1), |&(entry, condition)| {
        run_one(corpus, entry, condition, cfg, backend)
    });
    records.sort_by(|a, b| a.key().cmp(&b.key()));
    records
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("cannot access {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{path} line {line}: {reason}")]
    Malformed { path: String, line: usize, reason: String },
}

pub fn save_records(path: &Path, records: &[RunRecord]) -> Result<(), RecordError> {
    let io = |e: std::io::Error| RecordError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(io)?;
    file.write_all(&out).map_err(io)
}

pub fn load_records(path: &Path) -> Result<Vec<RunRecord>, RecordError> {
    let text = fs::read_to_string(path).map_err(|e| RecordError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| RecordError::Malformed {
                path: path.display().to_string(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub grid_id: String,
    pub instruction_id: String,
    pub condition: Condition,
    #[serde(default)]
    pub relevancy: Option<f64>,
    #[serde(default)]
    pub clarity: Option<f64>,
}

#[derive(Debug, Error)]
pub enum RatingError {
    #[error("rating {value} for {instruction_id} ({condition}) is not a multiple of 0.25 in [0, 1]")]
    BadRatingValue {
        instruction_id: String,
        condition: Condition,
        value: f64,
    },
    #[error("bad ratings file {path}: {reason}")]
    BadRatingsFile { path: String, reason: String },
}

fn on_scale(v: f64) -> bool {
    (0.0..=1.0).contains(&v) && ((v * 4.0) - (v * 4.0).round()).abs() < 1e-9
}

pub fn load_ratings(path: &Path) -> Result<Vec<Rating>, RatingError> {
    let bad = |reason: String| RatingError::BadRatingsFile {
        path: path.display().to_string(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| bad(format!("line {}: {e}", i + 1))))
        .collect()
}

/// Attaches human ratings to matching records. Nothing is applied unless
/// every rating is on the 0.25-step scale. Returns the number of records rated.
pub fn ingest_ratings(records: &mut [RunRecord], ratings: &[Rating]) -> Result<usize, RatingError> {
    for r in ratings {
        for v in [r.relevancy, r.clarity].into_iter().flatten() {
            if !on_scale(v) {
                return Err(RatingError::BadRatingValue {
                    instruction_id: r.instruction_id.clone(),
                    condition: r.condition,
                    value: v,
                });
            }
        }
    }
    let mut applied = 0;
    for rec in records.iter_mut() {
        if let Some(r) = ratings.iter().find(|r| {
            r.grid_id == rec.grid_id && r.instruction_id == rec.instruction_id && r.condition == rec.condition
        }) {
            if r.relevancy.is_some() {
                rec.scores.relevancy = r.relevancy;
            }
            if r.clarity.is_some() {
                rec.scores.clarity = r.clarity;
            }
            applied += 1;
        }
    }
    Ok(applied)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionMetrics {
    pub condition: Condition,
    pub records: usize,
    pub failed: usize,
    pub task: Option<f64>,
    pub options_acc: Option<f64>,
    pub mean_length: Option<f64>,
    pub mean_options: Option<f64>,
    pub relevancy: Option<f64>,
    pub clarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedMetric {
    pub metric: String,
    pub stats: StatsResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub conditions: Vec<ConditionMetrics>,
    pub per_class: BTreeMap<NormLabel, ClassMetrics>,
    pub interpretation_accuracy: Option<f64>,
    pub paired: Vec<PairedMetric>,
    pub instruction_types: BTreeMap<InstructionType, usize>,
    /// Relevance and clarity were assigned by the oracle backend, not rated.
    pub ratings_by_construction: bool,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

type MetricFn = fn(&Scores) -> Option<f64>;

const METRICS: [(&str, MetricFn); 6] = [
    ("task", |s| Some(s.task)),
    ("options", |s| s.options_acc),
    ("length", |s| Some(s.length as f64)),
    ("mean_options", |s| s.option_count.map(|n| n as f64)),
    ("relevance", |s| s.relevancy),
    ("clarity", |s| s.clarity),
];

/// Metric pairs (with norms, without norms) aligned by instruction.
pub fn paired_metric(records: &[RunRecord], metric: fn(&Scores) -> Option<f64>) -> Vec<(f64, f64)> {
    let mut with: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    let mut without: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for r in records.iter().filter(|r| r.failed.is_none()) {
        if let Some(v) = metric(&r.scores) {
            let side = match r.condition {
                Condition::WithNorms => &mut with,
                Condition::WithoutNorms => &mut without,
            };
            side.insert((&r.grid_id, &r.instruction_id), v);
        }
    }
    with.iter()
        .filter_map(|(k, &a)| without.get(k).map(|&b| (a, b)))
        .collect()
}

pub fn summarize(records: &[RunRecord]) -> MetricsReport {
    let mut conditions = Vec::new();
    for condition in Condition::BOTH {
        let all: Vec<&RunRecord> = records.iter().filter(|r| r.condition == condition).collect();
        if all.is_empty() {
            continue;
        }
        let ok: Vec<&Scores> = all.iter().filter(|r| r.failed.is_none()).map(|r| &r.scores).collect();
        let avg = |f: MetricFn| mean(ok.iter().filter_map(|s| f(s)));
        conditions.push(ConditionMetrics {
            condition,
            records: all.len(),
            failed: all.len() - ok.len(),
            task: avg(METRICS[0].1),
            options_acc: avg(METRICS[1].1),
            mean_length: avg(METRICS[2].1),
            mean_options: avg(METRICS[3].1),
            relevancy: avg(METRICS[4].1),
            clarity: avg(METRICS[5].1),
        });
    }
    let pairs = label_pairs(records);
    let interpretation_accuracy = (!pairs.is_empty())
        .then(|| pairs.iter().filter(|(g, p)| Some(*g) == *p).count() as f64 / pairs.len() as f64);
    let paired = METRICS
        .iter()
        .filter_map(|&(name, f)| {
            paired_stats(&paired_metric(records, f)).ok().map(|stats| PairedMetric {
                metric: name.to_string(),
                stats,
            })
        })
        .collect();
    let mut seen = BTreeSet::new();
    let mut instruction_types = BTreeMap::new();
    for r in records {
        if seen.insert((&r.grid_id, &r.instruction_id)) {
            *instruction_types.entry(r.gold_label.instruction_type()).or_insert(0) += 1;
        }
    }
    MetricsReport {
        conditions,
        per_class: per_class_prf(&pairs),
        interpretation_accuracy,
        paired,
        instruction_types,
        ratings_by_construction: !records.is_empty() && records.iter().all(|r| r.backend == "oracle"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportDocument {
    pub text: String,
    pub csv: String,
    pub summary: MetricsReport,
}

fn class_name(label: NormLabel) -> &'static str {
    match label {
        NormLabel::RelationViolation => "Relation Violation",
        other => other.title(),
    }
}

fn type_name(t: InstructionType) -> &'static str {
    match t {
        InstructionType::Clear => "Clear",
        InstructionType::Incomplete => "Incomplete",
        InstructionType::Invalid => "Invalid",
        InstructionType::Irrelevant => "Irrelevant",
        InstructionType::Ambiguous => "Ambiguous",
    }
}

fn pct(v: Option<f64>) -> String {
    v.map(|v| format!("{:.2}%", v * 100.0)).unwrap_or_else(|| "n/a".into())
}

fn num(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into())
}

fn csv_num(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// Renders the condition table, the per-class block and the paired tests.
/// Output depends only on the records, so re-rendering persisted records
/// reproduces it byte for byte.
pub fn write_report(records: &[RunRecord]) -> ReportDocument {
    let s = summarize(records);
    let mut text = String::new();
    let mark = if s.ratings_by_construction { "*" } else { "" };
    let _ = writeln!(text, "Performance with and without norms");
    let _ = writeln!(
        text,
        "{:<15}{:>9}{:>10}{:>13}{:>14}{:>11}{:>10}",
        "Experiment", "Task", "Options", "Mean Length", "Mean Options", "Relevance", "Clarity"
    );
    for c in &s.conditions {
        let _ = writeln!(
            text,
            "{:<15}{:>9}{:>10}{:>13}{:>14}{:>11}{:>10}",
            c.condition.title(),
            pct(c.task),
            pct(c.options_acc),
            num(c.mean_length),
            num(c.mean_options),
            format!("{}{mark}", pct(c.relevancy)),
            format!("{}{mark}", pct(c.clarity)),
        );
    }
    if s.ratings_by_construction {
        let _ = writeln!(text, "* relevance and clarity are 1.0 by construction for the oracle backend");
    }
    let _ = writeln!(
        text,
        "Task accuracy for invalid, irrelevant and ambiguous instructions is the share of gold options offered."
    );
    for c in s.conditions.iter().filter(|c| c.failed > 0) {
        let _ = writeln!(text, "{}: {} of {} records failed", c.condition.title(), c.failed, c.records);
    }

    if let Some(acc) = s.interpretation_accuracy {
        let _ = writeln!(text);
        let _ = writeln!(text, "Instruction interpretation accuracy: {}", pct(Some(acc)));
        let _ = writeln!(
            text,
            "{:<20}{:>10}{:>8}{:>10}{:>9}",
            "Class", "Precision", "Recall", "F1 Score", "Support"
        );
        for (label, m) in &s.per_class {
            let _ = writeln!(
                text,
                "{:<20}{:>10.2}{:>8.2}{:>10.2}{:>9}",
                class_name(*label),
                m.precision,
                m.recall,
                m.f1,
                m.support
            );
        }
    }

    if !s.paired.is_empty() {
        let _ = writeln!(text);
        let _ = writeln!(text, "Paired comparison (with norms minus without norms)");
        let _ = writeln!(
            text,
            "{:<14}{:>5}{:>10}{:>5}{:>11}{:>9}",
            "Metric", "n", "t", "df", "p", "d"
        );
        for pm in &s.paired {
            let st = &pm.stats;
            let _ = writeln!(
                text,
                "{:<14}{:>5}{:>10.3}{:>5}{:>11.6}{:>9.3}",
                pm.metric, st.n, st.t, st.df, st.p, st.d
            );
        }
    }

    if !s.instruction_types.is_empty() {
        let counts: Vec<String> = InstructionType::ALL
            .iter()
            .filter_map(|t| s.instruction_types.get(t).map(|n| format!("{} {n}", type_name(*t))))
            .collect();
        let _ = writeln!(text);
        let _ = writeln!(text, "Instruction types: {}", counts.join(", "));
    }

    let mut csv = String::from(
        "experiment,records,failed,task,options,mean_length,mean_options,relevance,clarity\n",
    );
    for c in &s.conditions {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            c.condition.as_str(),
            c.records,
            c.failed,
            csv_num(c.task),
            csv_num(c.options_acc),
            csv_num(c.mean_length),
            csv_num(c.mean_options),
            csv_num(c.relevancy),
            csv_num(c.clarity)
        );
    }
    csv.push_str("\nclass,precision,recall,f1,support\n");
    for (label, m) in &s.per_class {
        let _ = writeln!(
            csv,
            "{},{:.6},{:.6},{:.6},{}",
            class_name(*label),
            m.precision,
            m.recall,
            m.f1,
            m.support
        );
    }
    ReportDocument { text, csv, summary: s }
}
