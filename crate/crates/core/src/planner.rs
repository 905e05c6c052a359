//! Reachability, minimal key requirements and agent plans.
//!
//! Movement is 4-connected. Walls always block; a door blocks until it is
//! opened, and opening a door consumes one key of its color. Doors stay open
//! once opened. The human is static; only the agent executes plans.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Cell, Color, Grid, Position};

/// Count of keys per color.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "BTreeMap<Color, u32>", into = "BTreeMap<Color, u32>")]
pub struct KeyMultiset([u32; 3]);

impl KeyMultiset {
    pub fn new() -> Self {
        KeyMultiset::default()
    }

    pub fn of(pairs: &[(Color, u32)]) -> Self {
        let mut m = KeyMultiset::default();
        for &(c, n) in pairs {
            m.0[c.index()] += n;
        }
        m
    }

    pub fn from_colors(colors: impl IntoIterator<Item = Color>) -> Self {
        let mut m = KeyMultiset::default();
        for c in colors {
            m.add(c, 1);
        }
        m
    }

    pub fn get(&self, c: Color) -> u32 {
        self.0[c.index()]
    }

    pub fn set(&mut self, c: Color, n: u32) {
        self.0[c.index()] = n;
    }

    pub fn add(&mut self, c: Color, n: u32) {
        self.0[c.index()] += n;
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// Colors with a non-zero count, in color order.
    pub fn colors(&self) -> impl Iterator<Item = Color> + '_ {
        Color::ALL.into_iter().filter(|&c| self.get(c) > 0)
    }

    /// Expands into one entry per key, in color order.
    pub fn to_colors(&self) -> Vec<Color> {
        Color::ALL
            .into_iter()
            .flat_map(|c| std::iter::repeat_n(c, self.get(c) as usize))
            .collect()
    }

    pub fn contains(&self, other: &KeyMultiset) -> bool {
        Color::ALL.into_iter().all(|c| self.get(c) >= other.get(c))
    }
}

impl From<BTreeMap<Color, u32>> for KeyMultiset {
    fn from(map: BTreeMap<Color, u32>) -> Self {
        let mut m = KeyMultiset::default();
        for (c, n) in map {
            m.set(c, n);
        }
        m
    }
}

impl From<KeyMultiset> for BTreeMap<Color, u32> {
    fn from(m: KeyMultiset) -> Self {
        m.colors().map(|c| (c, m.get(c))).collect()
    }
}

impl fmt::Display for KeyMultiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, c) in self.colors().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}: {}", self.get(c))?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentAction {
    /// Cells visited, starting with the agent's current cell.
    MoveAlong(Vec<Position>),
    PickUp(Position),
    PassKeys(Vec<Color>),
    Unlock(Position),
}

impl AgentAction {
    pub fn steps(&self) -> usize {
        match self {
            AgentAction::MoveAlong(path) => path.len().saturating_sub(1),
            _ => 0,
        }
    }
}

impl fmt::Display for AgentAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentAction::MoveAlong(path) => match (path.first(), path.last()) {
                (Some(a), Some(b)) => write!(f, "MoveAlong {a} -> {b} ({} steps)", self.steps()),
                _ => f.write_str("MoveAlong []"),
            },
            AgentAction::PickUp(p) => write!(f, "PickUp {p}"),
            AgentAction::PassKeys(colors) => {
                let names: Vec<_> = colors.iter().map(|c| c.name()).collect();
                write!(f, "PassKeys [{}]", names.join(", "))
            }
            AgentAction::Unlock(p) => write!(f, "Unlock {p}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub actions: Vec<AgentAction>,
    pub total_steps: usize,
}

impl Plan {
    pub fn new(actions: Vec<AgentAction>) -> Self {
        let total_steps = actions.iter().map(AgentAction::steps).sum();
        Plan {
            actions,
            total_steps,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn pickups(&self) -> impl Iterator<Item = Position> + '_ {
        self.actions.iter().filter_map(|a| match a {
            AgentAction::PickUp(p) => Some(*p),
            _ => None,
        })
    }

    pub fn unlocks(&self) -> impl Iterator<Item = Position> + '_ {
        self.actions.iter().filter_map(|a| match a {
            AgentAction::Unlock(p) => Some(*p),
            _ => None,
        })
    }

    pub fn passed(&self) -> KeyMultiset {
        KeyMultiset::from_colors(self.actions.iter().flat_map(|a| match a {
            AgentAction::PassKeys(colors) => colors.clone(),
            _ => Vec::new(),
        }))
    }
}

/// A walk through the grid; `cells` includes the start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridPath {
    pub cells: Vec<Position>,
    /// Doors opened along the walk, in traversal order.
    pub opened: Vec<Position>,
}

impl GridPath {
    pub fn steps(&self) -> usize {
        self.cells.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemAnalysis {
    pub gem: Position,
    pub required_keys: KeyMultiset,
    /// Doors the actor must open, in the order they are crossed.
    pub blocking_doors: Vec<Position>,
    /// Steps along the cheapest route; `None` when unreachable with the keys on the grid.
    pub human_cost: Option<usize>,
}

impl GemAnalysis {
    pub fn is_reachable(&self) -> bool {
        self.human_cost.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("grid has too few {0} keys")]
    InsufficientKeys(Color),
    #[error("agent cannot reach a {0} key")]
    UnreachableKey(Color),
    #[error("agent cannot reach a cell next to the human")]
    CannotReachHuman,
    #[error("agent cannot reach the door at {0}")]
    CannotReachDoor(Position),
}

/// Index of every door on the grid, used for opened-door bitmasks.
struct DoorIndex {
    doors: Vec<Position>,
    by_pos: HashMap<Position, usize>,
}

impl DoorIndex {
    fn new(g: &Grid) -> Self {
        let doors = g.all_doors();
        assert!(doors.len() <= 64, "at most 64 doors are supported");
        let by_pos = doors.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        DoorIndex { doors, by_pos }
    }

    fn opened_colors(&self, g: &Grid, mask: u64) -> KeyMultiset {
        KeyMultiset::from_colors(
            self.doors
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .filter_map(|(_, &p)| match g.cell(p) {
                    Cell::Door(c) => Some(c),
                    _ => None,
                }),
        )
    }
}

type State = (Position, u64);
type Winner = ((u32, usize), KeyMultiset, Vec<Position>, State);

/// Next state when stepping onto `next`, or `None` when blocked.
fn step(
    g: &Grid,
    index: &DoorIndex,
    budget: &KeyMultiset,
    mask: u64,
    next: Position,
) -> Option<u64> {
    match g.cell(next) {
        Cell::Wall => None,
        Cell::Door(color) => {
            let bit = 1u64 << index.by_pos[&next];
            if mask & bit != 0 {
                Some(mask)
            } else if index.opened_colors(g, mask).get(color) < budget.get(color) {
                Some(mask | bit)
            } else {
                None
            }
        }
        _ => Some(mask),
    }
}

fn rebuild(
    parents: &HashMap<State, State>,
    start: State,
    end: State,
    index: &DoorIndex,
) -> GridPath {
    let mut states = vec![end];
    let mut cur = end;
    while cur != start {
        cur = parents[&cur];
        states.push(cur);
    }
    states.reverse();
    let mut opened = Vec::new();
    for pair in states.windows(2) {
        let newly = pair[1].1 & !pair[0].1;
        if newly != 0 {
            opened.push(index.doors[newly.trailing_zeros() as usize]);
        }
    }
    GridPath {
        cells: states.into_iter().map(|(p, _)| p).collect(),
        opened,
    }
}

/// Fewest-step route from `from` to `to` where each distinct locked door
/// crossed consumes one key of its color from `openable`. Ties break on the
/// neighbor order up, down, left, right.
pub fn shortest_path(
    g: &Grid,
    from: Position,
    to: Position,
    openable: &KeyMultiset,
) -> Option<GridPath> {
    if !g.in_bounds(from) || !g.in_bounds(to) {
        return None;
    }
    let index = DoorIndex::new(g);
    let start = (from, 0u64);
    let mut parents: HashMap<State, State> = HashMap::new();
    let mut queue = VecDeque::from([start]);
    parents.insert(start, start);
    while let Some(state @ (pos, mask)) = queue.pop_front() {
        if pos == to {
            return Some(rebuild(&parents, start, state, &index));
        }
        for next in g.neighbors(pos) {
            if let Some(next_mask) = step(g, &index, openable, mask, next) {
                let next_state = (next, next_mask);
                if let std::collections::hash_map::Entry::Vacant(e) = parents.entry(next_state) {
                    e.insert(state);
                    queue.push_back(next_state);
                }
            }
        }
    }
    None
}

/// Minimal keys for `actor` to reach `gem`: fewest keys first, then fewest
/// steps, then the smallest key multiset and door list. Key use is capped by
/// the keys present on the grid.
pub fn analyze_gem(g: &Grid, actor: Position, gem: Position) -> GemAnalysis {
    let index = DoorIndex::new(g);
    let budget = KeyMultiset::from_colors(
        Color::ALL
            .into_iter()
            .flat_map(|c| std::iter::repeat_n(c, g.key_count(c))),
    );
    let start = (actor, 0u64);
    let mut best: HashMap<State, (u32, usize)> = HashMap::from([(start, (0, 0))]);
    let mut parents: HashMap<State, State> = HashMap::from([(start, start)]);
    let mut heap = BinaryHeap::from([Reverse((0u32, 0usize, actor, 0u64))]);
    let mut winner: Option<Winner> = None;

    while let Some(Reverse((keys, steps, pos, mask))) = heap.pop() {
        if best.get(&(pos, mask)) != Some(&(keys, steps)) {
            continue;
        }
        if let Some((cost, ..)) = &winner {
            if (keys, steps) > *cost {
                break;
            }
        }
        if pos == gem {
            let path = rebuild(&parents, start, (pos, mask), &index);
            let used = index.opened_colors(g, mask);
            let mut sorted = path.opened.clone();
            sorted.sort();
            let better = match &winner {
                None => true,
                Some((_, m, d, _)) => {
                    let mut prev = d.clone();
                    prev.sort();
                    (used, sorted) < (*m, prev)
                }
            };
            if better {
                winner = Some(((keys, steps), used, path.opened, (pos, mask)));
            }
            continue;
        }
        for next in g.neighbors(pos) {
            let Some(next_mask) = step(g, &index, &budget, mask, next) else {
                continue;
            };
            let cost = (keys + (next_mask != mask) as u32, steps + 1);
            let key = (next, next_mask);
            if best.get(&key).is_none_or(|&b| cost < b) {
                best.insert(key, cost);
                parents.insert(key, (pos, mask));
                heap.push(Reverse((cost.0, cost.1, next, next_mask)));
            }
        }
    }

    match winner {
        Some(((_, steps), required_keys, blocking_doors, _)) => GemAnalysis {
            gem,
            required_keys,
            blocking_doors,
            human_cost: Some(steps),
        },
        None => GemAnalysis {
            gem,
            required_keys: KeyMultiset::new(),
            blocking_doors: Vec::new(),
            human_cost: None,
        },
    }
}

/// Plain BFS treating every cell accepted by `passable` as floor.
pub(crate) fn bfs_path(
    g: &Grid,
    from: Position,
    to: Position,
    passable: impl Fn(Position) -> bool,
) -> Option<Vec<Position>> {
    let dist = bfs_tree(g, from, &passable);
    let mut cur = to;
    dist.get(&to)?;
    let mut cells = vec![to];
    while cur != from {
        cur = dist[&cur].1;
        cells.push(cur);
    }
    cells.reverse();
    Some(cells)
}

/// BFS distances and parents from `from`.
fn bfs_tree(
    g: &Grid,
    from: Position,
    passable: &impl Fn(Position) -> bool,
) -> HashMap<Position, (usize, Position)> {
    let mut seen = HashMap::from([(from, (0usize, from))]);
    let mut queue = VecDeque::from([from]);
    while let Some(pos) = queue.pop_front() {
        let d = seen[&pos].0;
        for next in g.neighbors(pos) {
            if passable(next) && !seen.contains_key(&next) {
                seen.insert(next, (d + 1, pos));
                queue.push_back(next);
            }
        }
    }
    seen
}

/// Reference search for [`analyze_gem`]: tries every door subset in
/// ascending size with an ordinary BFS where exactly that subset is open.
pub fn brute_force_required_keys(g: &Grid, actor: Position, gem: Position) -> Option<KeyMultiset> {
    let doors = g.all_doors();
    let colors: Vec<Color> = doors
        .iter()
        .map(|&p| match g.cell(p) {
            Cell::Door(c) => c,
            _ => unreachable!(),
        })
        .collect();
    let available = KeyMultiset::from_colors(
        Color::ALL
            .into_iter()
            .flat_map(|c| std::iter::repeat_n(c, g.key_count(c))),
    );
    for size in 0..=doors.len() {
        let mut found: Option<(usize, KeyMultiset)> = None;
        for subset in subsets_of_size(doors.len(), size) {
            let keys = KeyMultiset::from_colors(subset.iter().map(|&i| colors[i]));
            if !available.contains(&keys) {
                continue;
            }
            let open: Vec<Position> = subset.iter().map(|&i| doors[i]).collect();
            let passable = |p: Position| match g.cell(p) {
                Cell::Wall => false,
                Cell::Door(_) => open.contains(&p),
                _ => true,
            };
            if let Some(path) = bfs_path(g, actor, gem, passable) {
                let candidate = (path.len() - 1, keys);
                if found.is_none_or(|f| candidate < f) {
                    found = Some(candidate);
                }
            }
        }
        if let Some((_, keys)) = found {
            return Some(keys);
        }
    }
    None
}

fn subsets_of_size(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Floor test for agent movement given the doors already opened.
fn agent_passable<'a>(g: &'a Grid, opened: &'a [Position]) -> impl Fn(Position) -> bool + 'a {
    move |p| match g.cell(p) {
        Cell::Wall => false,
        Cell::Door(_) => opened.contains(&p),
        _ => true,
    }
}

/// Moves to the nearest (then row-major first) reachable target, returning
/// the walk and the target.
fn walk_to_nearest(
    g: &Grid,
    from: Position,
    targets: &[Position],
    opened: &[Position],
) -> Option<(Vec<Position>, Position)> {
    let passable = agent_passable(g, opened);
    let tree = bfs_tree(g, from, &passable);
    let target = targets
        .iter()
        .filter_map(|t| tree.get(t).map(|&(d, _)| (d, *t)))
        .min()?
        .1;
    let mut cells = vec![target];
    let mut cur = target;
    while cur != from {
        cur = tree[&cur].1;
        cells.push(cur);
    }
    cells.reverse();
    Some((cells, target))
}

fn push_move(actions: &mut Vec<AgentAction>, cells: Vec<Position>) {
    if cells.len() > 1 {
        actions.push(AgentAction::MoveAlong(cells));
    }
}

/// Greedy nearest-first pickups of `needed`. Returns the actions, the agent's
/// final position and the colors picked in order.
fn collect_keys(
    g: &Grid,
    needed: &KeyMultiset,
) -> Result<(Vec<AgentAction>, Position, Vec<Color>), PlanError> {
    for c in needed.colors() {
        if (g.key_count(c) as u32) < needed.get(c) {
            return Err(PlanError::InsufficientKeys(c));
        }
    }
    let mut remaining = *needed;
    let mut actions = Vec::new();
    let mut current = g.agent();
    let mut picked: Vec<Position> = Vec::new();
    let mut colors = Vec::new();
    while !remaining.is_empty() {
        let targets: Vec<Position> = remaining
            .colors()
            .flat_map(|c| g.keys(c))
            .filter(|p| !picked.contains(p))
            .collect();
        let Some((cells, key)) = walk_to_nearest(g, current, &targets, &[]) else {
            let color = remaining.colors().next().expect("non-empty");
            return Err(PlanError::UnreachableKey(color));
        };
        let Cell::Key(color) = g.cell(key) else {
            unreachable!("targets are key cells")
        };
        push_move(&mut actions, cells);
        actions.push(AgentAction::PickUp(key));
        picked.push(key);
        colors.push(color);
        remaining.set(color, remaining.get(color) - 1);
        current = key;
    }
    Ok((actions, current, colors))
}

/// Collects `needed` nearest-first, walks next to the human and hands the keys over.
pub fn agent_fetch_plan(g: &Grid, needed: &KeyMultiset) -> Result<Plan, PlanError> {
    let (mut actions, current, colors) = collect_keys(g, needed)?;
    if colors.is_empty() {
        return Ok(Plan::default());
    }
    let human = g.human();
    let spots: Vec<Position> = g
        .neighbors(human)
        .filter(|&p| g.cell(p).is_floor())
        .collect();
    let (cells, _) =
        walk_to_nearest(g, current, &spots, &[]).ok_or(PlanError::CannotReachHuman)?;
    push_move(&mut actions, cells);
    actions.push(AgentAction::PassKeys(colors));
    Ok(Plan::new(actions))
}

/// Collects keys for `doors` nearest-first, then opens the doors in the given order.
pub fn agent_unlock_plan(g: &Grid, doors: &[Position]) -> Result<Plan, PlanError> {
    let needed = KeyMultiset::from_colors(doors.iter().filter_map(|&p| match g.cell(p) {
        Cell::Door(c) => Some(c),
        _ => None,
    }));
    let (mut actions, mut current, _) = collect_keys(g, &needed)?;
    let mut opened: Vec<Position> = Vec::new();
    for &door in doors {
        let spots: Vec<Position> = g
            .neighbors(door)
            .filter(|&p| agent_passable(g, &opened)(p))
            .collect();
        let (cells, spot) = walk_to_nearest(g, current, &spots, &opened)
            .ok_or(PlanError::CannotReachDoor(door))?;
        push_move(&mut actions, cells);
        actions.push(AgentAction::Unlock(door));
        opened.push(door);
        current = spot;
    }
    Ok(Plan::new(actions))
}

/// World state after executing a plan prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimState {
    pub agent: Position,
    pub held: KeyMultiset,
    pub passed: KeyMultiset,
    pub opened: Vec<Position>,
    pub picked: Vec<Position>,
    pub steps: usize,
}

impl SimState {
    pub fn initial(g: &Grid) -> Self {
        SimState {
            agent: g.agent(),
            ..SimState::default()
        }
    }

    /// The grid as it looks after the plan: agent moved, keys taken, doors open.
    pub fn apply_to(&self, g: &Grid) -> Grid {
        let mut changes: Vec<(Position, Cell)> = self
            .picked
            .iter()
            .chain(&self.opened)
            .map(|&p| (p, Cell::Empty))
            .collect();
        if self.agent != g.agent() {
            changes.push((g.agent(), Cell::Empty));
            changes.push((self.agent, Cell::Agent));
        }
        g.with_cells(changes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    OutOfBounds(Position),
    MoveStartMismatch { expected: Position, found: Position },
    NotAdjacent(Position, Position),
    Blocked(Position),
    NotAtKey(Position),
    NotAKey(Position),
    KeyAlreadyTaken(Position),
    NotNextToHuman,
    KeyNotHeld(Color),
    NotADoor(Position),
    DoorAlreadyOpen(Position),
    NotNextToDoor(Position),
    StepCountMismatch { declared: usize, actual: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("action {index} invalid: {kind:?}")]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
}

/// Executes `plan` from the grid's initial state, stopping at the first invalid action.
pub fn simulate(g: &Grid, plan: &Plan) -> Result<SimState, Violation> {
    let mut s = SimState::initial(g);
    for (index, action) in plan.actions.iter().enumerate() {
        let fail = |kind| Violation { index, kind };
        match action {
            AgentAction::MoveAlong(cells) => {
                let Some(&first) = cells.first() else {
                    continue;
                };
                if first != s.agent {
                    return Err(fail(ViolationKind::MoveStartMismatch {
                        expected: s.agent,
                        found: first,
                    }));
                }
                for pair in cells.windows(2) {
                    let next = pair[1];
                    if !g.in_bounds(next) {
                        return Err(fail(ViolationKind::OutOfBounds(next)));
                    }
                    if !pair[0].is_adjacent(next) {
                        return Err(fail(ViolationKind::NotAdjacent(pair[0], next)));
                    }
                    let open = match g.cell(next) {
                        Cell::Wall => false,
                        Cell::Door(_) => s.opened.contains(&next),
                        _ => true,
                    };
                    if !open {
                        return Err(fail(ViolationKind::Blocked(next)));
                    }
                    s.agent = next;
                    s.steps += 1;
                }
            }
            AgentAction::PickUp(p) => {
                if !g.in_bounds(*p) {
                    return Err(fail(ViolationKind::OutOfBounds(*p)));
                }
                if s.agent != *p {
                    return Err(fail(ViolationKind::NotAtKey(*p)));
                }
                let Cell::Key(color) = g.cell(*p) else {
                    return Err(fail(ViolationKind::NotAKey(*p)));
                };
                if s.picked.contains(p) {
                    return Err(fail(ViolationKind::KeyAlreadyTaken(*p)));
                }
                s.picked.push(*p);
                s.held.add(color, 1);
            }
            AgentAction::PassKeys(colors) => {
                if !s.agent.is_adjacent(g.human()) {
                    return Err(fail(ViolationKind::NotNextToHuman));
                }
                for &c in colors {
                    if s.held.get(c) == 0 {
                        return Err(fail(ViolationKind::KeyNotHeld(c)));
                    }
                    s.held.set(c, s.held.get(c) - 1);
                    s.passed.add(c, 1);
                }
            }
            AgentAction::Unlock(p) => {
                if !g.in_bounds(*p) {
                    return Err(fail(ViolationKind::OutOfBounds(*p)));
                }
                let Cell::Door(color) = g.cell(*p) else {
                    return Err(fail(ViolationKind::NotADoor(*p)));
                };
                if s.opened.contains(p) {
                    return Err(fail(ViolationKind::DoorAlreadyOpen(*p)));
                }
                if !s.agent.is_adjacent(*p) {
                    return Err(fail(ViolationKind::NotNextToDoor(*p)));
                }
                if s.held.get(color) == 0 {
                    return Err(fail(ViolationKind::KeyNotHeld(color)));
                }
                s.held.set(color, s.held.get(color) - 1);
                s.opened.push(*p);
            }
        }
    }
    if s.steps != plan.total_steps {
        return Err(Violation {
            index: plan.actions.len(),
            kind: ViolationKind::StepCountMismatch {
                declared: plan.total_steps,
                actual: s.steps,
            },
        });
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::parse_grid;

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

    fn appendix() -> Grid {
        parse_grid(APPENDIX).unwrap()
    }

    #[test]
    fn path_to_top_right_gem() {
        let g = appendix();
        let path = shortest_path(&g, p(3, 6), p(0, 7), &KeyMultiset::new()).unwrap();
        assert_eq!(path.cells, vec![p(3, 6), p(3, 7), p(2, 7), p(1, 7), p(0, 7)]);
        assert_eq!(path.cells.len(), 5);
        assert_eq!(path.steps(), 4);
        assert!(path.opened.is_empty());
    }

    #[test]
    fn path_to_self_is_empty() {
        let g = appendix();
        let path = shortest_path(&g, p(3, 6), p(3, 6), &KeyMultiset::new()).unwrap();
        assert_eq!(path.steps(), 0);
    }

    #[test]
    fn yellow_door_blocks_without_keys() {
        let g = appendix();
        assert!(shortest_path(&g, p(3, 6), p(7, 0), &KeyMultiset::new()).is_none());
        let keys = KeyMultiset::of(&[(Color::Red, 1), (Color::Yellow, 1)]);
        let path = shortest_path(&g, p(3, 6), p(7, 0), &keys).unwrap();
        assert_eq!(path.opened, vec![p(3, 1), p(6, 0)]);
    }

    #[test]
    fn analyze_appendix_gems() {
        let g = appendix();
        let a = analyze_gem(&g, g.human(), p(7, 0));
        assert_eq!(
            a.required_keys,
            KeyMultiset::of(&[(Color::Red, 1), (Color::Yellow, 1)])
        );
        assert_eq!(a.blocking_doors, vec![p(3, 1), p(6, 0)]);
        assert_eq!(a.human_cost, Some(10));

        let b = analyze_gem(&g, g.human(), p(7, 2));
        assert!(b.required_keys.is_empty());
        assert_eq!(b.human_cost, Some(8));

        let c = analyze_gem(&g, g.human(), p(7, 7));
        assert_eq!(c.required_keys, KeyMultiset::of(&[(Color::Yellow, 1)]));
    }

    #[test]
    fn adjacent_gem_costs_one() {
        let g = parse_grid("m.hg").unwrap();
        let a = analyze_gem(&g, g.human(), p(0, 3));
        assert!(a.required_keys.is_empty());
        assert_eq!(a.human_cost, Some(1));
    }

    #[test]
    fn unreachable_without_enough_keys() {
        // two red doors in series, one red key
        let g = parse_grid("mrhRRg").unwrap();
        let a = analyze_gem(&g, g.human(), p(0, 5));
        assert_eq!(a.human_cost, None);
        assert_eq!(brute_force_required_keys(&g, g.human(), p(0, 5)), None);
    }

    #[test]
    fn fewer_keys_beat_fewer_steps() {
        // short route through a red door, long route door-free
        let g = parse_grid(
            "m.r...
h.R.g.
......",
        )
        .unwrap();
        let a = analyze_gem(&g, g.human(), p(1, 4));
        assert!(a.required_keys.is_empty());
        assert_eq!(a.human_cost, Some(6));
    }

    #[test]
    fn appendix_fetch_plan() {
        let g = appendix();
        let needed = KeyMultiset::of(&[(Color::Red, 1), (Color::Yellow, 1)]);
        let plan = agent_fetch_plan(&g, &needed).unwrap();
        let pickups: Vec<_> = plan.pickups().collect();
        assert_eq!(pickups, vec![p(0, 0), p(1, 0)]);
        assert!(matches!(
            plan.actions.last(),
            Some(AgentAction::PassKeys(c)) if c == &vec![Color::Red, Color::Yellow]
        ));
        let end = simulate(&g, &plan).unwrap();
        assert_eq!(end.passed, needed);
        assert_eq!(end.agent, p(3, 5));
        assert_eq!(plan.total_steps, 4 + 1 + 9);
    }

    #[test]
    fn empty_needs_give_empty_plan() {
        let g = appendix();
        let plan = agent_fetch_plan(&g, &KeyMultiset::new()).unwrap();
        assert!(plan.is_empty());
        assert_eq!(simulate(&g, &plan).unwrap(), SimState::initial(&g));
    }

    #[test]
    fn fetch_plan_errors() {
        let g = appendix();
        assert_eq!(
            agent_fetch_plan(&g, &KeyMultiset::of(&[(Color::Blue, 1)])),
            Err(PlanError::InsufficientKeys(Color::Blue))
        );
        // human sealed behind a door
        let sealed = parse_grid("mr.WWW\n...Rh.\n...WWg").unwrap();
        assert_eq!(
            agent_fetch_plan(&sealed, &KeyMultiset::of(&[(Color::Red, 1)])),
            Err(PlanError::CannotReachHuman)
        );
        let walled = parse_grid("m.Wr\n.hWg").unwrap();
        assert_eq!(
            agent_fetch_plan(&walled, &KeyMultiset::of(&[(Color::Red, 1)])),
            Err(PlanError::UnreachableKey(Color::Red))
        );
    }

    #[test]
    fn unlock_plan_opens_doors_in_order() {
        let g = appendix();
        let plan = agent_unlock_plan(&g, &[p(3, 1), p(6, 0)]).unwrap();
        let unlocks: Vec<_> = plan.unlocks().collect();
        assert_eq!(unlocks, vec![p(3, 1), p(6, 0)]);
        let end = simulate(&g, &plan).unwrap();
        assert_eq!(end.opened, vec![p(3, 1), p(6, 0)]);
        assert!(end.held.is_empty());
    }

    #[test]
    fn simulate_reports_first_violation() {
        let g = appendix();
        let plan = Plan::new(vec![
            AgentAction::MoveAlong(vec![p(0, 4), p(1, 4), p(2, 4), p(3, 4), p(3, 3), p(3, 2)]),
            AgentAction::Unlock(p(3, 1)),
        ]);
        let err = simulate(&g, &plan).unwrap_err();
        assert_eq!(err.index, 1);
        assert_eq!(err.kind, ViolationKind::KeyNotHeld(Color::Red));

        let through_wall = Plan::new(vec![AgentAction::MoveAlong(vec![p(0, 4), p(0, 5)])]);
        assert_eq!(
            simulate(&g, &through_wall).unwrap_err().kind,
            ViolationKind::Blocked(p(0, 5))
        );

        let mut bad_steps = Plan::new(vec![AgentAction::MoveAlong(vec![p(0, 4), p(0, 3)])]);
        bad_steps.total_steps = 3;
        assert!(matches!(
            simulate(&g, &bad_steps).unwrap_err().kind,
            ViolationKind::StepCountMismatch { declared: 3, actual: 1 }
        ));
    }

    #[test]
    fn apply_to_updates_grid() {
        let g = appendix();
        let plan = agent_fetch_plan(&g, &KeyMultiset::of(&[(Color::Red, 1)])).unwrap();
        let end = simulate(&g, &plan).unwrap();
        let next = end.apply_to(&g);
        assert_eq!(next.cell(p(0, 0)), Cell::Empty);
        assert_eq!(next.cell(p(0, 4)), Cell::Empty);
        assert_eq!(next.agent(), end.agent);
        assert_eq!(next.cell(end.agent), Cell::Agent);
    }

    #[test]
    fn key_multiset_serde_skips_zero_counts() {
        let m = KeyMultiset::of(&[(Color::Red, 2)]);
        assert_eq!(serde_json::to_string(&m).unwrap(), r#"{"red":2}"#);
        assert_eq!(m.to_string(), "{red: 2}");
    }
}
