//! Bundled grids, gold-annotated instructions and few-shot exemplars.
//!
//! Layout of a corpus directory:
//! `grids/*.txt`, `instructions.jsonl`, `exemplars/with_norms.jsonl` and
//! `exemplars/without_norms.jsonl`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalharness::GoldAnnotation;
use crate::grid::{parse_grid, Grid, GridError, Position};
use crate::instruction::parse_instruction;
use crate::norms::{classify, infer_response, InstructionType, NormError, NormLabel};
use crate::planner::{analyze_gem, brute_force_required_keys, shortest_path, simulate, KeyMultiset};
use crate::prompting::{load_exemplars, Condition, Exemplar, PromptError, DEFAULT_EXEMPLAR_COUNT};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub instruction_id: String,
    pub grid_id: String,
    pub text: String,
    pub instruction_type: InstructionType,
    pub gold: GoldAnnotation,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("grid file {path}: {source}")]
    Grid { path: PathBuf, source: GridError },
    #[error("{path} line {line}: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("corpus invariant violated by {id}: {reason}")]
    CorpusInvariantViolation { id: String, reason: String },
    #[error(transparent)]
    Exemplars(#[from] PromptError),
}

fn violation(id: impl Into<String>, reason: impl Into<String>) -> CorpusError {
    CorpusError::CorpusInvariantViolation {
        id: id.into(),
        reason: reason.into(),
    }
}

/// Size and distribution constraints checked at load time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusExpectations {
    pub grids: Option<usize>,
    pub distribution: Option<BTreeMap<InstructionType, usize>>,
    pub exemplars_per_condition: Option<usize>,
}

impl CorpusExpectations {
    /// 25 grids, 55 instructions split 20/5/11/6/13, 14 exemplars each.
    pub fn standard() -> Self {
        CorpusExpectations {
            grids: Some(25),
            distribution: Some(BTreeMap::from([
                (InstructionType::Clear, 20),
                (InstructionType::Incomplete, 5),
                (InstructionType::Invalid, 11),
                (InstructionType::Irrelevant, 6),
                (InstructionType::Ambiguous, 13),
            ])),
            exemplars_per_condition: Some(DEFAULT_EXEMPLAR_COUNT),
        }
    }

    /// Only per-entry consistency checks.
    pub fn relaxed() -> Self {
        CorpusExpectations {
            grids: None,
            distribution: None,
            exemplars_per_condition: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub grids: BTreeMap<String, Grid>,
    pub entries: Vec<CorpusEntry>,
    pub with_norms: Vec<Exemplar>,
    pub without_norms: Vec<Exemplar>,
}

impl Corpus {
    pub fn exemplars(&self, condition: Condition) -> &[Exemplar] {
        match condition {
            Condition::WithNorms => &self.with_norms,
            Condition::WithoutNorms => &self.without_norms,
        }
    }

    pub fn entry(&self, instruction_id: &str) -> Option<&CorpusEntry> {
        self.entries.iter().find(|e| e.instruction_id == instruction_id)
    }

    pub fn type_counts(&self) -> BTreeMap<InstructionType, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.instruction_type).or_insert(0) += 1;
        }
        counts
    }
}

/// Directory of the corpus shipped with this crate.
pub fn bundled_corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join("corpus")
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn load_grids(dir: &Path) -> Result<BTreeMap<String, Grid>, CorpusError> {
    let io = |e: std::io::Error| CorpusError::Io {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    let mut grids = BTreeMap::new();
    for path in paths {
        let grid = parse_grid(&read(&path)?).map_err(|source| CorpusError::Grid {
            path: path.clone(),
            source,
        })?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let grid = if grid.id().is_empty() { grid.with_id(stem) } else { grid };
        if grids.contains_key(grid.id()) {
            return Err(violation(grid.id(), "duplicate grid id"));
        }
        grids.insert(grid.id().to_string(), grid);
    }
    Ok(grids)
}

pub fn load_entries(path: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    read(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CorpusError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Gold annotation derived from the oracle.
pub fn annotate(g: &Grid, text: &str) -> Result<GoldAnnotation, NormError> {
    let s = parse_instruction(text);
    let (label, _) = classify(g, &s)?;
    let r = infer_response(g, &s, label)?;
    Ok(GoldAnnotation {
        gold_label: label,
        gold_gem: r.inferred_gem,
        gold_plan: r.plan,
        gold_options: r.options,
    })
}

/// Checks one entry against its grid: type/label agreement, oracle
/// agreement, plan soundness and option existence.
pub fn check_entry(e: &CorpusEntry, g: &Grid) -> Result<(), CorpusError> {
    let id = e.instruction_id.as_str();
    let gold = &e.gold;
    if e.instruction_type.label() != gold.gold_label {
        return Err(violation(
            id,
            format!(
                "instruction type {:?} does not correspond to gold label {}",
                e.instruction_type, gold.gold_label
            ),
        ));
    }
    let (oracle, _) = classify(g, &parse_instruction(&e.text)).map_err(|err| violation(id, err.to_string()))?;
    if oracle != gold.gold_label {
        return Err(violation(
            id,
            format!("gold label {} disagrees with oracle label {}", gold.gold_label, oracle),
        ));
    }
    if gold.gold_label.expects_plan() {
        let (Some(plan), Some(gem)) = (&gold.gold_plan, gold.gold_gem) else {
            return Err(violation(id, "plan-type entry lacks a gold plan or gem"));
        };
        let end = simulate(g, plan).map_err(|v| violation(id, format!("gold plan fails: {v:?}")))?;
        let after = end.apply_to(g);
        if shortest_path(&after, g.human(), gem, &end.passed).is_none() {
            return Err(violation(id, format!("human cannot reach the gem at {gem} after the plan")));
        }
    } else {
        if gold.gold_plan.is_some() {
            return Err(violation(id, "clarification entry carries a plan"));
        }
        if gold.gold_options.is_empty() {
            return Err(violation(id, "clarification entry has no options"));
        }
    }
    if let Some(bad) = gold.gold_options.iter().find(|o| !o.exists_on(g)) {
        return Err(violation(id, format!("option {:?} references missing objects", bad.description)));
    }
    Ok(())
}

pub fn load_corpus(dir: &Path) -> Result<Corpus, CorpusError> {
    load_corpus_with(dir, &CorpusExpectations::standard())
}

pub fn load_corpus_with(dir: &Path, expect: &CorpusExpectations) -> Result<Corpus, CorpusError> {
    let grids = load_grids(&dir.join("grids"))?;
    let entries = load_entries(&dir.join("instructions.jsonl"))?;
    let known: HashSet<String> = grids.keys().cloned().collect();
    let ex_dir = dir.join("exemplars");
    let with_norms = load_exemplars(&ex_dir.join("with_norms.jsonl"), &known)?;
    let without_norms = load_exemplars(&ex_dir.join("without_norms.jsonl"), &known)?;
    if with_norms.iter().any(|e| e.norm.is_none()) {
        return Err(violation("exemplars/with_norms", "every exemplar needs a norm"));
    }
    if without_norms.iter().any(|e| e.norm.is_some()) {
        return Err(violation("exemplars/without_norms", "exemplars must not carry a norm"));
    }

    let mut seen = HashSet::new();
    for e in &entries {
        if !seen.insert(e.instruction_id.as_str()) {
            return Err(violation(&e.instruction_id, "duplicate instruction id"));
        }
        let g = grids
            .get(&e.grid_id)
            .ok_or_else(|| violation(&e.instruction_id, format!("unknown grid {}", e.grid_id)))?;
        check_entry(e, g)?;
    }

    let corpus = Corpus {
        grids,
        entries,
        with_norms,
        without_norms,
    };
    if let Some(n) = expect.grids {
        if corpus.grids.len() != n {
            return Err(violation("corpus", format!("expected {n} grids, found {}", corpus.grids.len())));
        }
    }
    if let Some(want) = &expect.distribution {
        let total: usize = want.values().sum();
        if corpus.entries.len() != total {
            return Err(violation(
                "corpus",
                format!("expected {total} instructions, found {}", corpus.entries.len()),
            ));
        }
        let got = corpus.type_counts();
        for (t, n) in want {
            let have = got.get(t).copied().unwrap_or(0);
            if have != *n {
                return Err(violation("corpus", format!("expected {n} {t:?} instructions, found {have}")));
            }
        }
    }
    if let Some(n) = expect.exemplars_per_condition {
        for c in Condition::BOTH {
            let have = corpus.exemplars(c).len();
            if have != n {
                return Err(violation(
                    format!("exemplars/{}", c.as_str()),
                    format!("expected {n} exemplars, found {have}"),
                ));
            }
        }
    }
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlannerMismatch {
    pub grid_id: String,
    pub gem: Position,
    pub planner: Option<KeyMultiset>,
    pub brute_force: Option<KeyMultiset>,
}

/// Compares the planner's minimal key requirement with exhaustive door-subset
/// search for every gem of every grid.
pub fn planner_mismatches(grids: &BTreeMap<String, Grid>) -> Vec<PlannerMismatch> {
    let jobs: Vec<(&Grid, Position)> = grids
        .values()
        .flat_map(|g| g.gems().into_iter().map(move |gem| (g, gem)))
        .collect();
    crate::par_map(&jobs, |&(g, gem)| {
        let a = analyze_gem(g, g.human(), gem);
        let planner = a.is_reachable().then_some(a.required_keys);
        let brute_force = brute_force_required_keys(g, g.human(), gem);
        (planner != brute_force).then(|| PlannerMismatch {
            grid_id: g.id().to_string(),
            gem,
            planner,
            brute_force,
        })
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Label the oracle assigns to an entry.
pub fn oracle_label(e: &CorpusEntry, g: &Grid) -> Result<NormLabel, NormError> {
    classify(g, &parse_instruction(&e.text)).map(|(l, _)| l)
}
