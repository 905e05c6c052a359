//! Deterministic norm-violation classifier and response generator.
//!
//! Checks run in a fixed order: relation, quality, goal inference, manner,
//! quantity. Clear and incomplete instructions yield an agent plan for the
//! inferred gem; invalid, irrelevant and ambiguous ones yield clarification
//! options that only reference objects present on the grid.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Cell, Color, Grid, Position};
use crate::instruction::{Action, Count, ObjectKind, SemanticInstruction};
use crate::planner::{
    agent_fetch_plan, agent_unlock_plan, analyze_gem, GemAnalysis, KeyMultiset, Plan,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormLabel {
    NoViolation,
    QuantityViolation,
    QualityViolation,
    RelationViolation,
    MannerViolation,
}

impl NormLabel {
    pub const ALL: [NormLabel; 5] = [
        NormLabel::NoViolation,
        NormLabel::QuantityViolation,
        NormLabel::QualityViolation,
        NormLabel::RelationViolation,
        NormLabel::MannerViolation,
    ];

    /// Name used in replies, e.g. "Quantity Violation".
    pub fn title(self) -> &'static str {
        match self {
            NormLabel::NoViolation => "No Violation",
            NormLabel::QuantityViolation => "Quantity Violation",
            NormLabel::QualityViolation => "Quality Violation",
            NormLabel::RelationViolation => "Relevance Violation",
            NormLabel::MannerViolation => "Manner Violation",
        }
    }

    pub fn instruction_type(self) -> InstructionType {
        match self {
            NormLabel::NoViolation => InstructionType::Clear,
            NormLabel::QuantityViolation => InstructionType::Incomplete,
            NormLabel::QualityViolation => InstructionType::Invalid,
            NormLabel::RelationViolation => InstructionType::Irrelevant,
            NormLabel::MannerViolation => InstructionType::Ambiguous,
        }
    }

    /// Clear and incomplete instructions are answered with a plan.
    pub fn expects_plan(self) -> bool {
        matches!(self, NormLabel::NoViolation | NormLabel::QuantityViolation)
    }
}

impl fmt::Display for NormLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionType {
    Clear,
    Incomplete,
    Invalid,
    Irrelevant,
    Ambiguous,
}

impl InstructionType {
    pub const ALL: [InstructionType; 5] = [
        InstructionType::Clear,
        InstructionType::Incomplete,
        InstructionType::Invalid,
        InstructionType::Irrelevant,
        InstructionType::Ambiguous,
    ];

    pub fn label(self) -> NormLabel {
        match self {
            InstructionType::Clear => NormLabel::NoViolation,
            InstructionType::Incomplete => NormLabel::QuantityViolation,
            InstructionType::Invalid => NormLabel::QualityViolation,
            InstructionType::Irrelevant => NormLabel::RelationViolation,
            InstructionType::Ambiguous => NormLabel::MannerViolation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormError {
    #[error("grid has no gem")]
    NoGemOnGrid,
}

/// Reference to grid objects made by a clarification option.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectRef {
    pub kind: ObjectKind,
    pub color: Option<Color>,
    pub positions: Vec<Position>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClarificationOption {
    pub description: String,
    pub objects: Vec<ObjectRef>,
    /// The "both"/"all" option combining every other option.
    #[serde(default)]
    pub combined: bool,
}

impl ClarificationOption {
    pub fn positions(&self) -> impl Iterator<Item = Position> + '_ {
        self.objects.iter().flat_map(|o| o.positions.iter().copied())
    }

    /// Every referenced position holds an object of the referenced kind and color.
    pub fn exists_on(&self, g: &Grid) -> bool {
        self.objects.iter().all(|o| {
            !o.positions.is_empty()
                && o.positions.iter().all(|&p| match (g.get(p), o.kind, o.color) {
                    (Some(Cell::Key(c)), ObjectKind::Key, Some(want)) => c == want,
                    (Some(Cell::Door(c)), ObjectKind::Door, Some(want)) => c == want,
                    (Some(Cell::Gem), ObjectKind::Gem, None) => true,
                    _ => false,
                })
        })
    }
}

/// Which rule decided the label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    OutOfDomain,
    NoSuchObject,
    TooFewObjects,
    NoRelevantGem,
    TiedGoals,
    MissingKeys,
    UnspecifiedCount,
    Sufficient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub rule: Rule,
    pub detail: String,
}

/// Key and door counts per color, used for the inventory sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inventory {
    pub keys: KeyMultiset,
    pub doors: KeyMultiset,
}

impl Inventory {
    pub fn of(g: &Grid) -> Self {
        let mut inv = Inventory::default();
        for c in Color::ALL {
            inv.keys.set(c, g.keys(c).len() as u32);
            inv.doors.set(c, g.doors(c).len() as u32);
        }
        inv
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleResponse {
    pub label: NormLabel,
    pub inferred_gem: Option<Position>,
    pub plan: Option<Plan>,
    pub options: Vec<ClarificationOption>,
    pub nl_text: String,
    pub rationale: String,
    pub evidence: Evidence,
    /// Set when a plan was expected but the agent cannot deliver it.
    pub blocked: Option<String>,
}

/// Intermediate result shared by [`classify`] and [`infer_response`].
#[derive(Debug, Clone)]
struct Assessment {
    label: NormLabel,
    evidence: Evidence,
    /// Candidate gems tied at the cheapest human cost.
    tied: Vec<GemAnalysis>,
}

fn named_color(s: &SemanticInstruction) -> Result<Option<Color>, String> {
    match &s.color {
        None => Ok(None),
        Some(word) => Color::from_word(word).map(Some).ok_or_else(|| word.clone()),
    }
}

fn object_phrase(color: Option<&str>, kind: ObjectKind) -> String {
    match color {
        Some(c) => format!("{c} {}", kind.noun()),
        None => kind.noun().to_string(),
    }
}

fn uses_color(a: &GemAnalysis, g: &Grid, color: Option<Color>) -> bool {
    a.blocking_doors.iter().any(|&d| match (g.cell(d), color) {
        (Cell::Door(c), Some(want)) => c == want,
        (Cell::Door(_), None) => true,
        _ => false,
    })
}

fn assess(g: &Grid, s: &SemanticInstruction) -> Result<Assessment, NormError> {
    let gems = g.gems();
    if gems.is_empty() {
        return Err(NormError::NoGemOnGrid);
    }
    let done = |label, rule, detail: String| Assessment {
        label,
        evidence: Evidence { rule, detail },
        tied: Vec::new(),
    };

    if s.action == Action::OutOfDomain {
        return Ok(done(
            NormLabel::RelationViolation,
            Rule::OutOfDomain,
            "the request is unrelated to collecting keys or unlocking doors".into(),
        ));
    }

    let phrase = object_phrase(s.color.as_deref(), s.object_kind);
    let color = match named_color(s) {
        Ok(c) => c,
        Err(word) => {
            return Ok(done(
                NormLabel::QualityViolation,
                Rule::NoSuchObject,
                format!("there is no {word} {} on the grid", s.object_kind.noun()),
            ))
        }
    };
    let instances = match (s.object_kind, color) {
        (ObjectKind::Key, Some(c)) => g.keys(c).len(),
        (ObjectKind::Door, Some(c)) => g.doors(c).len(),
        (ObjectKind::Key, None) => Color::ALL.iter().map(|&c| g.keys(c).len()).sum(),
        (ObjectKind::Door, None) => g.all_doors().len(),
        // gems carry no color
        (ObjectKind::Gem, Some(_)) => 0,
        (ObjectKind::Gem, None) => gems.len(),
        (ObjectKind::None, _) => 0,
    };
    if instances == 0 {
        return Ok(done(
            NormLabel::QualityViolation,
            Rule::NoSuchObject,
            format!("there is no {phrase} on the grid"),
        ));
    }
    if let Count::Specified(n) = s.count {
        if n as usize > instances {
            return Ok(done(
                NormLabel::QualityViolation,
                Rule::TooFewObjects,
                format!(
                    "the instruction asks for {} but the grid has only {}",
                    number_word(n),
                    number_word(instances as u32)
                ),
            ));
        }
    }

    let mut candidates: Vec<GemAnalysis> = gems
        .iter()
        .map(|&gem| analyze_gem(g, g.human(), gem))
        .filter(|a| a.is_reachable())
        .filter(|a| match s.object_kind {
            ObjectKind::Gem => true,
            _ => uses_color(a, g, color),
        })
        .collect();
    if candidates.is_empty() {
        return Ok(done(
            NormLabel::RelationViolation,
            Rule::NoRelevantGem,
            format!("no reachable gem requires the {phrase}"),
        ));
    }
    candidates.sort_by_key(|a| (a.human_cost, a.gem));
    let best = candidates[0].human_cost;
    let tied: Vec<GemAnalysis> = candidates
        .into_iter()
        .take_while(|a| a.human_cost == best)
        .collect();

    if tied.len() >= 2 {
        let at: Vec<String> = tied.iter().map(|a| a.gem.to_string()).collect();
        return Ok(Assessment {
            label: NormLabel::MannerViolation,
            evidence: Evidence {
                rule: Rule::TiedGoals,
                detail: format!(
                    "the gems at {} are equally close to the human, so it is unclear which one is wanted",
                    join_or(&at, "and")
                ),
            },
            tied,
        });
    }

    let goal = &tied[0];
    let required = goal.required_keys;
    let implied = match s.count {
        Count::Specified(n) => Some(n),
        Count::Singular => Some(1),
        Count::Plural => None,
    };
    let (label, rule, detail) = match (s.object_kind, color) {
        (ObjectKind::Key | ObjectKind::Door, Some(c)) => {
            let omitted: Vec<Color> = required.colors().filter(|&o| o != c).collect();
            if !omitted.is_empty() {
                let names: Vec<String> = omitted.iter().map(|o| format!("{o} key")).collect();
                (
                    NormLabel::QuantityViolation,
                    Rule::MissingKeys,
                    format!(
                        "reaching the gem at {} also needs the {}, which the instruction does not mention",
                        goal.gem,
                        join_or(&names, "and")
                    ),
                )
            } else if implied.is_some_and(|n| n < required.get(c)) {
                (
                    NormLabel::QuantityViolation,
                    Rule::MissingKeys,
                    format!(
                        "reaching the gem at {} needs {} {c} keys but the instruction asks for {}",
                        goal.gem,
                        number_word(required.get(c)),
                        number_word(implied.unwrap_or(0))
                    ),
                )
            } else if implied.is_none() && required.get(c) > 1 {
                (
                    NormLabel::QuantityViolation,
                    Rule::UnspecifiedCount,
                    format!(
                        "reaching the gem at {} needs {} {c} keys but the instruction does not say how many",
                        goal.gem,
                        number_word(required.get(c))
                    ),
                )
            } else {
                (
                    NormLabel::NoViolation,
                    Rule::Sufficient,
                    format!(
                        "the instruction names exactly what the gem at {} requires",
                        goal.gem
                    ),
                )
            }
        }
        _ if !required.is_empty() => (
            NormLabel::QuantityViolation,
            Rule::MissingKeys,
            format!(
                "reaching the gem at {} needs {} but the instruction does not say which keys",
                goal.gem,
                keys_phrase(&required)
            ),
        ),
        _ => (
            NormLabel::NoViolation,
            Rule::Sufficient,
            format!("the gem at {} needs no keys", goal.gem),
        ),
    };
    Ok(Assessment {
        label,
        evidence: Evidence { rule, detail },
        tied,
    })
}

/// Assigns exactly one norm label to an instruction on a grid.
pub fn classify(g: &Grid, s: &SemanticInstruction) -> Result<(NormLabel, Evidence), NormError> {
    assess(g, s).map(|a| (a.label, a.evidence))
}

/// Builds the plan or clarification options for `label`.
///
/// `label` is normally the output of [`classify`]; passing a different label
/// produces the response that label calls for on this grid.
pub fn infer_response(
    g: &Grid,
    s: &SemanticInstruction,
    label: NormLabel,
) -> Result<OracleResponse, NormError> {
    let mut a = assess(g, s)?;
    if a.label != label {
        a.evidence.detail = format!("{} (overridden to {label})", a.evidence.detail);
    }
    let inventory = Inventory::of(g);
    let mut response = OracleResponse {
        label,
        inferred_gem: None,
        plan: None,
        options: Vec::new(),
        nl_text: String::new(),
        rationale: rationale(label, &a.evidence),
        evidence: a.evidence.clone(),
        blocked: None,
    };

    match label {
        NormLabel::NoViolation | NormLabel::QuantityViolation => {
            let Some(goal) = a.tied.first() else {
                response.options = color_options(g);
                response.nl_text = render_text(&response, g, &inventory, None, s);
                return Ok(response);
            };
            response.inferred_gem = Some(goal.gem);
            let plan = if s.action == Action::Unlock {
                agent_unlock_plan(g, &goal.blocking_doors)
                    .or_else(|_| agent_fetch_plan(g, &goal.required_keys))
            } else {
                agent_fetch_plan(g, &goal.required_keys)
            };
            match plan {
                Ok(plan) => response.plan = Some(plan),
                Err(e) => response.blocked = Some(e.to_string()),
            }
            let goal = goal.clone();
            response.nl_text = render_text(&response, g, &inventory, Some(&goal), s);
        }
        NormLabel::QualityViolation | NormLabel::RelationViolation => {
            response.options = color_options(g);
            response.nl_text = render_text(&response, g, &inventory, None, s);
        }
        NormLabel::MannerViolation => {
            if a.tied.len() < 2 {
                a.tied = vec![];
                response.options = color_options(g);
            } else {
                response.options = goal_options(g, &a.tied);
            }
            response.nl_text = render_text(&response, g, &inventory, None, s);
        }
    }
    Ok(response)
}

/// One option per key color on the grid plus a combined option; falls back
/// to per-gem options when fewer than two key colors exist.
fn color_options(g: &Grid) -> Vec<ClarificationOption> {
    let options: Vec<ClarificationOption> = Color::ALL
        .into_iter()
        .filter_map(|c| {
            let keys = g.keys(c);
            (!keys.is_empty()).then(|| ClarificationOption {
                description: format!(
                    "the {c} {}",
                    if keys.len() > 1 { "keys" } else { "key" }
                ),
                objects: vec![ObjectRef {
                    kind: ObjectKind::Key,
                    color: Some(c),
                    positions: keys,
                }],
                combined: false,
            })
        })
        .collect();
    if options.len() < 2 {
        let reachable: Vec<GemAnalysis> = g
            .gems()
            .into_iter()
            .map(|gem| analyze_gem(g, g.human(), gem))
            .filter(|a| a.is_reachable())
            .collect();
        if reachable.len() >= 2 {
            return goal_options(g, &reachable);
        }
    }
    with_combined(options)
}

fn gem_option(g: &Grid, a: &GemAnalysis, pickups: &[Position]) -> ClarificationOption {
    let mut objects = Vec::new();
    for c in a.required_keys.colors() {
        let positions: Vec<Position> = pickups
            .iter()
            .copied()
            .filter(|&p| g.cell(p) == Cell::Key(c))
            .collect();
        if !positions.is_empty() {
            objects.push(ObjectRef {
                kind: ObjectKind::Key,
                color: Some(c),
                positions,
            });
        }
    }
    objects.push(ObjectRef {
        kind: ObjectKind::Gem,
        color: None,
        positions: vec![a.gem],
    });
    let description = if pickups.is_empty() {
        format!("help you reach the gem at {}", a.gem)
    } else {
        let keys: Vec<String> = pickups
            .iter()
            .map(|&p| match g.cell(p) {
                Cell::Key(c) => format!("the {c} key at {p}"),
                _ => unreachable!(),
            })
            .collect();
        format!("collect {} for the gem at {}", keys.join(" and "), a.gem)
    };
    ClarificationOption {
        description,
        objects,
        combined: false,
    }
}

/// One option per tied gem. Later options prefer keys that earlier options
/// did not claim, so the combined option stays feasible when keys allow.
fn goal_options(g: &Grid, tied: &[GemAnalysis]) -> Vec<ClarificationOption> {
    let mut claimed: Vec<Position> = Vec::new();
    let mut options = Vec::new();
    for a in tied {
        let rest = g.with_cells(claimed.iter().map(|&p| (p, Cell::Empty)));
        let pickups: Vec<Position> = agent_fetch_plan(&rest, &a.required_keys)
            .or_else(|_| agent_fetch_plan(g, &a.required_keys))
            .map(|p| p.pickups().collect())
            .unwrap_or_default();
        claimed.extend(&pickups);
        options.push(gem_option(g, a, &pickups));
    }
    with_combined(options)
}

fn with_combined(mut options: Vec<ClarificationOption>) -> Vec<ClarificationOption> {
    if options.len() >= 2 {
        let objects = options.iter().flat_map(|o| o.objects.clone()).collect();
        options.push(ClarificationOption {
            description: if options.len() == 2 {
                "both".into()
            } else {
                "all of them".into()
            },
            objects,
            combined: true,
        });
    }
    options
}

fn rationale(label: NormLabel, e: &Evidence) -> String {
    let tail = match label {
        NormLabel::NoViolation => "so the instruction is clear and does not violate any norms",
        NormLabel::QuantityViolation => "which results in a Quantity Violation",
        NormLabel::QualityViolation => "making this an invalid instruction",
        NormLabel::RelationViolation => "making it an irrelevant instruction",
        NormLabel::MannerViolation => "making this instruction ambiguous",
    };
    format!("Based on the instruction and the grid, {}, {tail}.", e.detail)
}

pub(crate) fn number_word(n: u32) -> String {
    const WORDS: [&str; 11] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    ];
    WORDS
        .get(n as usize)
        .map(|w| w.to_string())
        .unwrap_or_else(|| n.to_string())
}

/// "a", "a and b", "a, b, and c".
fn join_or(items: &[String], conj: &str) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} {conj} {b}"),
        [rest @ .., last] => format!("{}, {conj} {last}", rest.join(", ")),
    }
}

fn counted(n: u32, what: &str) -> String {
    format!("{} {what}{}", number_word(n), if n == 1 { "" } else { "s" })
}

fn keys_phrase(m: &KeyMultiset) -> String {
    let parts: Vec<String> = m
        .colors()
        .map(|c| counted(m.get(c), &format!("{c} key")))
        .collect();
    join_or(&parts, "and")
}

fn inventory_sentence(inv: &Inventory) -> String {
    let mut parts = Vec::new();
    for c in Color::ALL {
        if inv.keys.get(c) > 0 {
            parts.push(counted(inv.keys.get(c), &format!("{c} key")));
        }
    }
    for c in Color::ALL {
        if inv.doors.get(c) > 0 {
            parts.push(counted(inv.doors.get(c), &format!("{c} door")));
        }
    }
    if parts.is_empty() {
        return "There are no keys or doors on the grid.".into();
    }
    let verb = if parts.len() == 1 && parts[0].starts_with("one ") {
        "is"
    } else {
        "are"
    };
    format!("There {verb} {} on the grid.", join_or(&parts, "and"))
}

fn door_list(g: &Grid, doors: &[Position]) -> String {
    let parts: Vec<String> = doors
        .iter()
        .map(|&d| match g.cell(d) {
            Cell::Door(c) => format!("the {c} door at {d}"),
            _ => format!("the door at {d}"),
        })
        .collect();
    join_or(&parts, "and")
}

/// "Do you want me to collect the red key, the yellow key, or both?" for key
/// options; per-gem options already start with a verb.
fn options_question(options: &[ClarificationOption], lead: &str) -> String {
    let parts: Vec<String> = options.iter().map(|o| o.description.clone()).collect();
    let verb = if options.first().is_some_and(|o| o.description.starts_with("the ")) {
        " collect"
    } else {
        ""
    };
    format!("{lead}{verb} {}?", join_or(&parts, "or"))
}

fn render_text(
    r: &OracleResponse,
    g: &Grid,
    inv: &Inventory,
    goal: Option<&GemAnalysis>,
    s: &SemanticInstruction,
) -> String {
    let mut sentences: Vec<String> = Vec::new();
    match r.label {
        NormLabel::NoViolation | NormLabel::QuantityViolation => {
            let Some(goal) = goal else {
                sentences.push("I could not find a gem this instruction leads to.".into());
                sentences.push(options_question(&r.options, "Do you want me to"));
                return sentences.join(" ");
            };
            if r.label == NormLabel::QuantityViolation {
                sentences.push(inventory_sentence(inv));
                if goal.blocking_doors.is_empty() {
                    sentences.push(format!(
                        "The gem at {} can be reached without unlocking any doors.",
                        goal.gem
                    ));
                } else {
                    sentences.push(format!(
                        "To collect the gem at {}, {} need{} to be unlocked.",
                        goal.gem,
                        door_list(g, &goal.blocking_doors),
                        if goal.blocking_doors.len() == 1 { "s" } else { "" }
                    ));
                }
            }
            if let Some(reason) = &r.blocked {
                sentences.push(format!(
                    "I cannot deliver the keys because {reason}. How would you like me to proceed?"
                ));
                return sentences.join(" ");
            }
            let plan = r.plan.as_ref().expect("plan present when not blocked");
            sentences.push(plan_sentence(r.label, g, plan, goal));
        }
        NormLabel::QualityViolation => {
            let subject = object_phrase(s.color.as_deref(), s.object_kind);
            let lead = match r.evidence.rule {
                Rule::TooFewObjects => format!(
                    "There are not enough {}s on the grid.",
                    subject
                ),
                _ if s.object_kind == ObjectKind::Gem && s.color.is_some() => {
                    format!("There is no {subject} on the grid; the gems have no color.")
                }
                _ => format!("There is no {subject} on the grid."),
            };
            sentences.push(lead);
            sentences.push(options_question(&r.options, "Do you want me to"));
        }
        NormLabel::RelationViolation => {
            if r.evidence.rule == Rule::NoRelevantGem {
                let subject = object_phrase(s.color.as_deref(), s.object_kind);
                sentences.push(format!(
                    "None of the reachable gems needs the {subject}, so this instruction does not help you reach a gem."
                ));
            } else {
                sentences.push(
                    "This instruction is not relevant to the grid, which contains doors, keys, and gems."
                        .into(),
                );
            }
            sentences.push(options_question(&r.options, "Would you like me to"));
        }
        NormLabel::MannerViolation => {
            sentences.push(inventory_sentence(inv));
            sentences.push("It is unclear which gem you want to collect.".into());
            sentences.push(options_question(&r.options, "Do you want me to"));
        }
    }
    sentences.join(" ")
}

fn plan_sentence(label: NormLabel, g: &Grid, plan: &Plan, goal: &GemAnalysis) -> String {
    let pickups: Vec<String> = plan
        .pickups()
        .map(|p| match g.cell(p) {
            Cell::Key(c) => format!("the {c} key at {p}"),
            _ => format!("the key at {p}"),
        })
        .collect();
    let unlocks: Vec<Position> = plan.unlocks().collect();
    let lead = if label == NormLabel::NoViolation {
        "Sure, I will"
    } else {
        "I will"
    };
    if pickups.is_empty() {
        return format!(
            "The gem at {} is already reachable, so no keys are needed.",
            goal.gem
        );
    }
    if !unlocks.is_empty() {
        return format!(
            "{lead} collect {} and unlock {} so you can reach the gem at {}.",
            join_or(&pickups, "and"),
            door_list(g, &unlocks),
            goal.gem
        );
    }
    let pronoun = if pickups.len() == 1 { "it" } else { "them" };
    format!(
        "{lead} collect {} and pass {pronoun} to you so you can unlock {} and reach the gem at {}.",
        join_or(&pickups, "and"),
        door_list(g, &goal.blocking_doors),
        goal.gem
    )
}

/// Natural-language response text.
pub fn render_nl(r: &OracleResponse) -> String {
    r.nl_text.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::parse_grid;
    use crate::instruction::parse_instruction;
    use crate::planner::{simulate, shortest_path, AgentAction};

    const APPENDIX: &str = "r...mWWg
y.WW.WW.
WWWW.WW.
.R....h.
.W.WWWW.
.W.WWWWY
YW.WWWW.
gWgWWWWg";

    fn p(r: usize, c: usize) -> Position {
        Position::new(r, c)
    }

    fn label_of(grid: &str, text: &str) -> NormLabel {
        let g = parse_grid(grid).unwrap();
        classify(&g, &parse_instruction(text)).unwrap().0
    }

    #[test]
    fn appendix_labels() {
        assert_eq!(label_of(APPENDIX, "Pick up the red key."), NormLabel::QuantityViolation);
        assert_eq!(label_of(APPENDIX, "Can you get the green key?"), NormLabel::QualityViolation);
        assert_eq!(label_of(APPENDIX, "Can you dance?"), NormLabel::RelationViolation);
        assert_eq!(label_of(APPENDIX, ""), NormLabel::RelationViolation);
    }

    #[test]
    fn single_red_door_is_clear() {
        let grid = "m.r..
WWWWR
h...g";
        // human reaches the gem directly; give the gem a door instead
        let gated = "m.r...
.WWWWW
h...Rg";
        assert_eq!(label_of(gated, "Can you get the red key?"), NormLabel::NoViolation);
        // no gem needs red in the first grid
        assert_eq!(label_of(grid, "Can you get the red key?"), NormLabel::RelationViolation);
    }

    #[test]
    fn tied_gems_are_ambiguous() {
        let grid = "y..m..y
WWW.WWW
gY.h.Yg";
        assert_eq!(label_of(grid, "Pick up the yellow key."), NormLabel::MannerViolation);
    }

    #[test]
    fn ambiguity_injection_flips_clear_to_manner() {
        let one = "y..m...
WWW.WWW
gY.h...";
        let two = "y..m...
WWW.WWW
gY.h.Yg";
        assert_eq!(label_of(one, "Pick up the yellow key."), NormLabel::NoViolation);
        assert_eq!(label_of(two, "Pick up the yellow key."), NormLabel::MannerViolation);
    }

    #[test]
    fn counts_drive_quantity() {
        let grid = "mrr...
.WWWWW
h.RRg.";
        assert_eq!(label_of(grid, "Get the red key"), NormLabel::QuantityViolation);
        assert_eq!(label_of(grid, "Get the red keys"), NormLabel::QuantityViolation);
        assert_eq!(label_of(grid, "Get two red keys"), NormLabel::NoViolation);
        assert_eq!(label_of(grid, "Get three red keys"), NormLabel::QualityViolation);
        assert_eq!(label_of(grid, "Get me the gem"), NormLabel::QuantityViolation);
        assert_eq!(label_of(grid, "Unlock the blue door"), NormLabel::QualityViolation);
    }

    #[test]
    fn gemless_grid_errors() {
        let g = parse_grid("m.h").unwrap();
        assert_eq!(
            classify(&g, &parse_instruction("Pick up the red key")),
            Err(NormError::NoGemOnGrid)
        );
    }

    #[test]
    fn quantity_response_on_appendix() {
        let g = parse_grid(APPENDIX).unwrap();
        let s = parse_instruction("Pick up the red key.");
        let (label, _) = classify(&g, &s).unwrap();
        let r = infer_response(&g, &s, label).unwrap();
        assert_eq!(r.inferred_gem, Some(p(7, 0)));
        let plan = r.plan.as_ref().unwrap();
        assert_eq!(plan.pickups().collect::<Vec<_>>(), vec![p(0, 0), p(1, 0)]);
        assert!(matches!(plan.actions.last(), Some(AgentAction::PassKeys(_))));
        assert!(r.options.is_empty());
        let text = render_nl(&r);
        assert!(text.contains("(0, 0)") && text.contains("(1, 0)"), "{text}");
        assert!(text.starts_with("There are one red key, one yellow key, one red door, and two yellow doors on the grid."));

        // plan soundness: the human reaches the gem with the passed keys
        let end = simulate(&g, plan).unwrap();
        assert!(shortest_path(&g, g.human(), p(7, 0), &end.passed).is_some());
    }

    #[test]
    fn quality_response_lists_three_options() {
        let g = parse_grid(APPENDIX).unwrap();
        let s = parse_instruction("Can you get the green key?");
        let r = infer_response(&g, &s, NormLabel::QualityViolation).unwrap();
        let descs: Vec<_> = r.options.iter().map(|o| o.description.as_str()).collect();
        assert_eq!(descs, vec!["the red key", "the yellow key", "both"]);
        assert!(r.plan.is_none());
        assert!(r.options.iter().all(|o| o.exists_on(&g)));
        let text = render_nl(&r);
        assert!(text.ends_with("Do you want me to collect the red key, the yellow key, or both?"));
    }

    #[test]
    fn clear_response_is_one_plan_sentence() {
        let g = parse_grid("m.r...\n.WWWWW\nh...Rg").unwrap();
        let s = parse_instruction("Can you get the red key?");
        let r = infer_response(&g, &s, NormLabel::NoViolation).unwrap();
        assert!(r.options.is_empty());
        let text = render_nl(&r);
        assert!(text.starts_with("Sure, I will collect the red key at (0, 2)"), "{text}");
        assert_eq!(text.matches('.').count(), 1, "{text}");
    }

    #[test]
    fn unlock_instruction_opens_doors() {
        let g = parse_grid("m.r...\n.WWWWW\nh...Rg").unwrap();
        let s = parse_instruction("Unlock the red door");
        let r = infer_response(&g, &s, classify(&g, &s).unwrap().0).unwrap();
        assert_eq!(r.label, NormLabel::NoViolation);
        let plan = r.plan.unwrap();
        assert_eq!(plan.unlocks().collect::<Vec<_>>(), vec![p(2, 4)]);
        assert!(!r.nl_text.contains("pass"));
    }

    #[test]
    fn manner_options_reference_each_goal() {
        let g = parse_grid("y..m..y\nWWW.WWW\ngY.h.Yg").unwrap();
        let s = parse_instruction("Pick up the yellow key.");
        let r = infer_response(&g, &s, NormLabel::MannerViolation).unwrap();
        assert_eq!(r.options.len(), 3);
        assert!(r.options[2].combined);
        assert!(r.options.iter().all(|o| o.exists_on(&g)));
        let gems: Vec<Position> = r.options[..2]
            .iter()
            .flat_map(|o| o.objects.iter().filter(|x| x.kind == ObjectKind::Gem))
            .flat_map(|x| x.positions.clone())
            .collect();
        assert_eq!(gems, vec![p(2, 0), p(2, 6)]);
    }

    #[test]
    fn table_one_is_a_bijection() {
        for label in NormLabel::ALL {
            assert_eq!(label.instruction_type().label(), label);
        }
        for t in InstructionType::ALL {
            assert_eq!(t.label().instruction_type(), t);
        }
    }
}
