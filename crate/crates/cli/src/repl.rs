use std::io::{self, BufRead, Write};

use dkg_norms::agent::{complete, Backend};
use dkg_norms::grid::{render_grid, Grid};
use dkg_norms::instruction::parse_instruction;
use dkg_norms::norms::{classify, infer_response};
use dkg_norms::planner::{simulate, KeyMultiset, Plan};
use dkg_norms::prompting::{build_prompt, Condition, Exemplar, PromptConfig};

const HELP: &str = "Type an instruction, or :apply, :show, :reset, :help, :quit";

pub struct Session {
    original: Grid,
    grid: Grid,
    backend: Backend,
    condition: Condition,
    exemplars: Vec<Exemplar>,
    last_plan: Option<Plan>,
    passed: KeyMultiset,
}

impl Session {
    pub fn new(grid: Grid, backend: Backend, condition: Condition, exemplars: Vec<Exemplar>) -> Self {
        Session {
            original: grid.clone(),
            grid,
            backend,
            condition,
            exemplars,
            last_plan: None,
            passed: KeyMultiset::new(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn passed(&self) -> &KeyMultiset {
        &self.passed
    }

    fn respond(&mut self, text: &str, out: &mut impl Write) -> io::Result<()> {
        let s = parse_instruction(text);
        let (label, _) = match classify(&self.grid, &s) {
            Ok(r) => r,
            Err(e) => return writeln!(out, "error: {e}"),
        };
        let r = match infer_response(&self.grid, &s, label) {
            Ok(r) => r,
            Err(e) => return writeln!(out, "error: {e}"),
        };
        if matches!(self.backend, Backend::OracleBacked) {
            writeln!(out, "Norm: {}. {}", label.title(), r.rationale)?;
            writeln!(out, "Response: {}", r.nl_text)?;
        } else {
            let cfg = PromptConfig::new(self.condition);
            let reply = build_prompt(&self.grid, text, &cfg, &self.exemplars)
                .map_err(|e| e.to_string())
                .and_then(|p| complete(&self.backend, &p, &cfg).map_err(|e| e.to_string()));
            match reply {
                Ok(reply) => writeln!(out, "{}", reply.trim_end())?,
                Err(e) => writeln!(out, "backend error: {e}")?,
            }
            writeln!(out, "(oracle: {})", label.title())?;
        }
        if let Some(plan) = &r.plan {
            writeln!(out, "Plan ({} steps):", plan.total_steps)?;
            for action in &plan.actions {
                writeln!(out, "  {action}")?;
            }
            writeln!(out, "Use :apply to execute it.")?;
        }
        self.last_plan = r.plan;
        Ok(())
    }

    fn apply(&mut self, out: &mut impl Write) -> io::Result<()> {
        let Some(plan) = self.last_plan.take() else {
            return writeln!(out, "No plan to apply.");
        };
        match simulate(&self.grid, &plan) {
            Ok(end) => {
                self.grid = end.apply_to(&self.grid);
                for c in end.passed.to_colors() {
                    self.passed.add(c, 1);
                }
                writeln!(out, "{}", render_grid(&self.grid))?;
                writeln!(out, "Keys passed to the human: {}", self.passed)
            }
            Err(v) => writeln!(out, "Plan cannot be applied: {v:?}"),
        }
    }
}

/// Reads commands and instructions line by line until `:quit` or end of input.
pub fn run_repl(input: impl BufRead, out: &mut impl Write, session: &mut Session) -> io::Result<()> {
    writeln!(out, "{}", render_grid(&session.grid))?;
    writeln!(out, "{HELP}")?;
    for line in input.lines() {
        let line = line?;
        let cmd = line.trim();
        match cmd {
            "" => continue,
            ":quit" | "quit" | ":q" | "exit" => break,
            ":help" => writeln!(out, "{HELP}")?,
            ":show" => writeln!(out, "{}", render_grid(&session.grid))?,
            ":reset" => {
                session.grid = session.original.clone();
                session.passed = KeyMultiset::new();
                session.last_plan = None;
                writeln!(out, "{}", render_grid(&session.grid))?;
            }
            ":apply" => session.apply(out)?,
            text => session.respond(text, out)?,
        }
    }
    Ok(())
}
