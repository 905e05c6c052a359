//! Doors-Keys-Gems grid model: parsing, rendering and the textual object listing.
//!
//! Character codes: `r`/`y`/`b` keys, `R`/`Y`/`B` doors, `g` gem, `W` wall,
//! `.` empty, `m` the agent and `h` the human. Grid files may start with a
//! `# id: <name>` comment line.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("unknown character {ch:?} at {pos}")]
    UnknownCharacter { pos: Position, ch: char },
    #[error("row {row} has {found} cells, expected {expected}")]
    NonRectangular {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("grid has no rows")]
    Empty,
    #[error("grid has no human ('h')")]
    MissingHuman,
    #[error("grid has no agent ('m')")]
    MissingAgent,
    #[error("grid has a second human at {0}")]
    DuplicateHuman(Position),
    #[error("grid has a second agent at {0}")]
    DuplicateAgent(Position),
    #[error("grid has no gem")]
    MissingGem,
    #[error("malformed matrix row {0}")]
    MalformedMatrixRow(usize),
}

/// Colors an on-grid key or door can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Yellow,
    Blue,
}

impl Color {
    pub const ALL: [Color; 3] = [Color::Red, Color::Yellow, Color::Blue];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Yellow => "yellow",
            Color::Blue => "blue",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Color::Red => "Red",
            Color::Yellow => "Yellow",
            Color::Blue => "Blue",
        }
    }

    /// Maps a free-form color word onto a supported grid color.
    pub fn from_word(word: &str) -> Option<Color> {
        match word.to_ascii_lowercase().as_str() {
            "red" => Some(Color::Red),
            "yellow" => Some(Color::Yellow),
            "blue" => Some(Color::Blue),
            _ => None,
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Zero-indexed (row, column) coordinate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Position {
    pub row: usize,
    pub col: usize,
}

impl Position {
    pub const fn new(row: usize, col: usize) -> Self {
        Position { row, col }
    }

    pub fn manhattan(self, other: Position) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }

    pub fn is_adjacent(self, other: Position) -> bool {
        self.manhattan(other) == 1
    }
}

impl From<[usize; 2]> for Position {
    fn from([row, col]: [usize; 2]) -> Self {
        Position { row, col }
    }
}

impl From<Position> for [usize; 2] {
    fn from(p: Position) -> Self {
        [p.row, p.col]
    }
}

impl From<(usize, usize)> for Position {
    fn from((row, col): (usize, usize)) -> Self {
        Position { row, col }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Wall,
    Empty,
    Key(Color),
    Door(Color),
    Gem,
    Human,
    Agent,
}

impl Cell {
    pub fn to_char(self) -> char {
        match self {
            Cell::Wall => 'W',
            Cell::Empty => '.',
            Cell::Key(Color::Red) => 'r',
            Cell::Key(Color::Yellow) => 'y',
            Cell::Key(Color::Blue) => 'b',
            Cell::Door(Color::Red) => 'R',
            Cell::Door(Color::Yellow) => 'Y',
            Cell::Door(Color::Blue) => 'B',
            Cell::Gem => 'g',
            Cell::Human => 'h',
            Cell::Agent => 'm',
        }
    }

    pub fn from_char(c: char) -> Option<Cell> {
        Some(match c {
            'W' => Cell::Wall,
            '.' => Cell::Empty,
            'r' => Cell::Key(Color::Red),
            'y' => Cell::Key(Color::Yellow),
            'b' => Cell::Key(Color::Blue),
            'R' => Cell::Door(Color::Red),
            'Y' => Cell::Door(Color::Yellow),
            'B' => Cell::Door(Color::Blue),
            'g' => Cell::Gem,
            'h' => Cell::Human,
            'm' => Cell::Agent,
            _ => return None,
        })
    }

    /// Walls and (locked) doors block movement; everything else is floor.
    pub fn is_floor(self) -> bool {
        !matches!(self, Cell::Wall | Cell::Door(_))
    }
}

/// Immutable rectangular grid with exactly one human and one agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    id: String,
    height: usize,
    width: usize,
    cells: Vec<Cell>,
    human: Position,
    agent: Position,
}

impl Grid {
    /// Builds a grid from rows, enforcing rectangularity and the human/agent
    /// uniqueness invariants. Gem presence is checked by [`Grid::validate`].
    pub fn from_rows(id: impl Into<String>, rows: Vec<Vec<Cell>>) -> Result<Grid, GridError> {
        let (height, width, cells) = flatten(rows)?;
        let mut human = None;
        let mut agent = None;
        for (i, cell) in cells.iter().enumerate() {
            let pos = Position::new(i / width, i % width);
            match cell {
                Cell::Human if human.is_some() => return Err(GridError::DuplicateHuman(pos)),
                Cell::Human => human = Some(pos),
                Cell::Agent if agent.is_some() => return Err(GridError::DuplicateAgent(pos)),
                Cell::Agent => agent = Some(pos),
                _ => {}
            }
        }
        Ok(Grid {
            id: id.into(),
            height,
            width,
            cells,
            human: human.ok_or(GridError::MissingHuman)?,
            agent: agent.ok_or(GridError::MissingAgent)?,
        })
    }

    /// Test-builder constructor that skips the human/agent invariants. A
    /// missing human or agent is reported at (0, 0).
    pub fn from_rows_unchecked(
        id: impl Into<String>,
        rows: Vec<Vec<Cell>>,
    ) -> Result<Grid, GridError> {
        let (height, width, cells) = flatten(rows)?;
        let find = |target: Cell| {
            cells
                .iter()
                .position(|c| *c == target)
                .map(|i| Position::new(i / width, i % width))
                .unwrap_or(Position::new(0, 0))
        };
        let human = find(Cell::Human);
        let agent = find(Cell::Agent);
        Ok(Grid {
            id: id.into(),
            height,
            width,
            cells,
            human,
            agent,
        })
    }

    /// Checks invariants that parsing leaves to the caller (currently: a gem exists).
    pub fn validate(&self) -> Result<(), GridError> {
        if self.cells.contains(&Cell::Gem) {
            Ok(())
        } else {
            Err(GridError::MissingGem)
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Grid {
        self.id = id.into();
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn human(&self) -> Position {
        self.human
    }

    pub fn agent(&self) -> Position {
        self.agent
    }

    pub fn in_bounds(&self, p: Position) -> bool {
        p.row < self.height && p.col < self.width
    }

    pub fn get(&self, p: Position) -> Option<Cell> {
        self.in_bounds(p).then(|| self.cells[p.row * self.width + p.col])
    }

    /// Cell at `p`; panics when out of bounds.
    pub fn cell(&self, p: Position) -> Cell {
        self.get(p)
            .unwrap_or_else(|| panic!("{p} outside {}x{} grid", self.height, self.width))
    }

    /// 4-neighbours in the fixed order up, down, left, right.
    pub fn neighbors(&self, p: Position) -> impl Iterator<Item = Position> + '_ {
        let up = p.row.checked_sub(1).map(|r| Position::new(r, p.col));
        let down = (p.row + 1 < self.height).then(|| Position::new(p.row + 1, p.col));
        let left = p.col.checked_sub(1).map(|c| Position::new(p.row, c));
        let right = (p.col + 1 < self.width).then(|| Position::new(p.row, p.col + 1));
        [up, down, left, right].into_iter().flatten()
    }

    pub fn positions(&self) -> impl Iterator<Item = Position> + '_ {
        (0..self.height).flat_map(move |r| (0..self.width).map(move |c| Position::new(r, c)))
    }

    /// Row-major positions of every cell equal to `kind`.
    pub fn locate(&self, kind: Cell) -> Vec<Position> {
        self.positions().filter(|&p| self.cell(p) == kind).collect()
    }

    pub fn gems(&self) -> Vec<Position> {
        self.locate(Cell::Gem)
    }

    pub fn keys(&self, color: Color) -> Vec<Position> {
        self.locate(Cell::Key(color))
    }

    pub fn doors(&self, color: Color) -> Vec<Position> {
        self.locate(Cell::Door(color))
    }

    /// All door positions, row-major, regardless of color.
    pub fn all_doors(&self) -> Vec<Position> {
        self.positions()
            .filter(|&p| matches!(self.cell(p), Cell::Door(_)))
            .collect()
    }

    pub fn key_count(&self, color: Color) -> usize {
        self.cells.iter().filter(|&&c| c == Cell::Key(color)).count()
    }

    /// Copy of this grid with the given cells replaced.
    pub fn with_cells(&self, changes: impl IntoIterator<Item = (Position, Cell)>) -> Grid {
        let mut next = self.clone();
        for (p, cell) in changes {
            let idx = p.row * next.width + p.col;
            next.cells[idx] = cell;
            match cell {
                Cell::Agent => next.agent = p,
                Cell::Human => next.human = p,
                _ => {}
            }
        }
        next
    }

    /// Copy with the listed doors replaced by empty floor.
    pub fn with_opened_doors(&self, doors: &[Position]) -> Grid {
        self.with_cells(
            doors
                .iter()
                .filter(|&&p| matches!(self.get(p), Some(Cell::Door(_))))
                .map(|&p| (p, Cell::Empty)),
        )
    }

    /// Rows as numpy would print a character array, e.g. `[['r' '.' 'm']]`.
    pub fn render_matrix(&self) -> String {
        let mut out = String::new();
        for r in 0..self.height {
            out.push_str(if r == 0 { "[[" } else { " [" });
            for c in 0..self.width {
                if c > 0 {
                    out.push(' ');
                }
                out.push('\'');
                out.push(self.cell(Position::new(r, c)).to_char());
                out.push('\'');
            }
            out.push(']');
            if r + 1 == self.height {
                out.push(']');
            } else {
                out.push('\n');
            }
        }
        out
    }
}

fn flatten(rows: Vec<Vec<Cell>>) -> Result<(usize, usize, Vec<Cell>), GridError> {
    let height = rows.len();
    let width = rows.first().map(Vec::len).ok_or(GridError::Empty)?;
    if width == 0 {
        return Err(GridError::Empty);
    }
    let mut cells = Vec::with_capacity(height * width);
    for (row, cols) in rows.into_iter().enumerate() {
        if cols.len() != width {
            return Err(GridError::NonRectangular {
                row,
                expected: width,
                found: cols.len(),
            });
        }
        cells.extend(cols);
    }
    Ok((height, width, cells))
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_grid(self))
    }
}

impl FromStr for Grid {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_grid(s)
    }
}

/// Parses a grid document. Accepts plain character rows (whitespace inside a
/// row is ignored) or the bracketed matrix form produced by
/// [`Grid::render_matrix`].
pub fn parse_grid(text: &str) -> Result<Grid, GridError> {
    let mut id = String::new();
    let mut lines = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if let Some(value) = rest.trim().strip_prefix("id:") {
                id = value.trim().to_string();
            }
            continue;
        }
        lines.push(trimmed);
    }
    if lines.is_empty() {
        return Err(GridError::Empty);
    }
    let matrix = lines[0].starts_with('[');
    let mut rows = Vec::with_capacity(lines.len());
    for (r, line) in lines.iter().enumerate() {
        let chars: Vec<char> = if matrix {
            matrix_row_chars(line).ok_or(GridError::MalformedMatrixRow(r))?
        } else {
            line.chars().filter(|c| !c.is_whitespace()).collect()
        };
        let row = chars
            .into_iter()
            .enumerate()
            .map(|(c, ch)| {
                Cell::from_char(ch).ok_or(GridError::UnknownCharacter {
                    pos: Position::new(r, c),
                    ch,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Grid::from_rows(id, rows)
}

fn matrix_row_chars(line: &str) -> Option<Vec<char>> {
    let body = line.trim().trim_start_matches('[').trim_end_matches(']');
    let mut out = Vec::new();
    let mut chars = body.chars().filter(|c| !c.is_whitespace());
    while let Some(open) = chars.next() {
        let ch = chars.next()?;
        let close = chars.next()?;
        if open != '\'' || close != '\'' {
            return None;
        }
        out.push(ch);
    }
    Some(out)
}

/// Plain character-matrix form, one row per line, no trailing newline.
pub fn render_grid(g: &Grid) -> String {
    let mut out = String::with_capacity(g.height * (g.width + 1));
    for r in 0..g.height {
        if r > 0 {
            out.push('\n');
        }
        for c in 0..g.width {
            out.push(g.cell(Position::new(r, c)).to_char());
        }
    }
    out
}

/// Grid file form: optional `# id:` line followed by the character matrix.
pub fn render_grid_file(g: &Grid) -> String {
    if g.id.is_empty() {
        format!("{}\n", render_grid(g))
    } else {
        format!("# id: {}\n{}\n", g.id, render_grid(g))
    }
}

fn join_positions(ps: &[Position]) -> String {
    ps.iter()
        .map(Position::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// Object listing with coordinates and totals, one line per present kind in
/// the order agent, human, keys by color, doors by color, gems, walls, empty.
pub fn describe_grid(g: &Grid) -> String {
    let mut lines = vec![
        format!("My position (Labeled as 'm'): {}", g.agent),
        format!("Human (Labeled as 'h'): {}", g.human),
    ];
    let mut counted = |label: String, cell: Cell| {
        let found = g.locate(cell);
        if !found.is_empty() {
            let plural = found.len() > 1;
            let noun = if plural {
                format!("{label}s")
            } else {
                label
            };
            lines.push(format!(
                "{noun} (Labeled as '{}'): {} --> Total {noun}: {}",
                cell.to_char(),
                join_positions(&found),
                found.len()
            ));
        }
    };
    for color in Color::ALL {
        counted(format!("{} key", color.title()), Cell::Key(color));
    }
    for color in Color::ALL {
        counted(format!("{} door", color.title()), Cell::Door(color));
    }
    counted("Gem".to_string(), Cell::Gem);
    counted("Wall".to_string(), Cell::Wall);
    counted("Empty space".to_string(), Cell::Empty);
    lines.join("\n")
}
