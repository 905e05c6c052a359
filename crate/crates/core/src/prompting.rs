//! Four-component prompt assembly for the with-norms and without-norms conditions.
//!
//! Component texts live in template files (`data/templates/<condition>/`):
//! `1_general_cot.txt`, `2_norms.txt` (with-norms only),
//! `3_response_generation.txt` and `4_few_shot.txt`. Placeholders are
//! `{{grid_matrix}}`, `{{grid_description}}`, `{{instruction}}` and
//! `{{exemplars}}`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{describe_grid, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    WithNorms,
    WithoutNorms,
}

impl Condition {
    pub const BOTH: [Condition; 2] = [Condition::WithNorms, Condition::WithoutNorms];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::WithNorms => "with_norms",
            Condition::WithoutNorms => "without_norms",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Condition::WithNorms => "Norms",
            Condition::WithoutNorms => "Without Norms",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "with_norms" | "with" | "norms" => Ok(Condition::WithNorms),
            "without_norms" | "without" => Ok(Condition::WithoutNorms),
            other => Err(format!("unknown condition {other:?}")),
        }
    }
}

pub const DEFAULT_MAX_TOKENS: u32 = 512;
pub const DEFAULT_TEMPERATURE: f32 = 0.2;
pub const DEFAULT_EXEMPLAR_COUNT: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub condition: Condition,
    pub max_tokens: u32,
    pub temperature: f32,
}

impl PromptConfig {
    pub fn new(condition: Condition) -> Self {
        PromptConfig {
            condition,
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

/// One few-shot demonstration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub grid_id: String,
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<String>,
    pub response: String,
}

impl Exemplar {
    fn render(&self) -> String {
        match &self.norm {
            Some(norm) => format!(
                "Instruction: {}\nNorm: {}\nResponse: {}",
                self.instruction, norm, self.response
            ),
            None => format!("Instruction: {}\nResponse: {}", self.instruction, self.response),
        }
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("exemplar {index} does not match the {condition} condition")]
    ExemplarConditionMismatch { index: usize, condition: Condition },
    #[error("bad exemplar file {path}: {reason}")]
    BadExemplarFile { path: PathBuf, reason: String },
    #[error("cannot read template {path}: {source}")]
    Template {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    GeneralCot,
    Norms,
    ResponseRequest,
    Exemplars,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptComponent {
    pub kind: ComponentKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptDocument {
    pub condition: Condition,
    pub components: Vec<PromptComponent>,
    pub full_text: String,
    /// Inputs the prompt was built from, kept for offline backends.
    pub grid: Grid,
    pub instruction: String,
}

impl PromptDocument {
    pub fn component(&self, kind: ComponentKind) -> Option<&str> {
        self.components
            .iter()
            .find(|c| c.kind == kind)
            .map(|c| c.text.as_str())
    }

    /// Grid matrix embedded in the general component.
    pub fn grid_block(&self) -> Option<&str> {
        let text = self.component(ComponentKind::GeneralCot)?;
        let start = text.find("[[")?;
        let end = text[start..].find("]]")? + start + 2;
        Some(&text[start..end])
    }
}

/// Template texts for one condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub condition: Condition,
    pub general_cot: String,
    pub norms: Option<String>,
    pub response_request: String,
    pub exemplars: String,
}

const FILES: [&str; 4] = [
    "1_general_cot.txt",
    "2_norms.txt",
    "3_response_generation.txt",
    "4_few_shot.txt",
];

impl Templates {
    pub fn bundled(condition: Condition) -> Templates {
        match condition {
            Condition::WithNorms => Templates {
                condition,
                general_cot: include_str!("../data/templates/with_norms/1_general_cot.txt").into(),
                norms: Some(include_str!("../data/templates/with_norms/2_norms.txt").into()),
                response_request: include_str!(
                    "../data/templates/with_norms/3_response_generation.txt"
                )
                .into(),
                exemplars: include_str!("../data/templates/with_norms/4_few_shot.txt").into(),
            },
            Condition::WithoutNorms => Templates {
                condition,
                general_cot: include_str!("../data/templates/without_norms/1_general_cot.txt")
                    .into(),
                norms: None,
                response_request: include_str!(
                    "../data/templates/without_norms/3_response_generation.txt"
                )
                .into(),
                exemplars: include_str!("../data/templates/without_norms/4_few_shot.txt").into(),
            },
        }
    }

    /// Reads `<dir>/<condition>/` component files.
    pub fn load(dir: &Path, condition: Condition) -> Result<Templates, PromptError> {
        let base = dir.join(condition.as_str());
        let read = |name: &str| {
            let path = base.join(name);
            fs::read_to_string(&path).map_err(|source| PromptError::Template { path, source })
        };
        Ok(Templates {
            condition,
            general_cot: read(FILES[0])?,
            norms: match condition {
                Condition::WithNorms => Some(read(FILES[1])?),
                Condition::WithoutNorms => None,
            },
            response_request: read(FILES[2])?,
            exemplars: read(FILES[3])?,
        })
    }
}

fn fill(template: &str, key: &str, value: &str) -> String {
    template.replace(&format!("{{{{{key}}}}}"), value)
}

/// Assembles the prompt from bundled templates.
pub fn build_prompt(
    g: &Grid,
    instruction: &str,
    cfg: &PromptConfig,
    exemplars: &[Exemplar],
) -> Result<PromptDocument, PromptError> {
    build_prompt_with(&Templates::bundled(cfg.condition), g, instruction, exemplars)
}

pub fn build_prompt_with(
    templates: &Templates,
    g: &Grid,
    instruction: &str,
    exemplars: &[Exemplar],
) -> Result<PromptDocument, PromptError> {
    let condition = templates.condition;
    for (index, ex) in exemplars.iter().enumerate() {
        if ex.norm.is_some() != (condition == Condition::WithNorms) {
            return Err(PromptError::ExemplarConditionMismatch { index, condition });
        }
    }
    let general = fill(
        &fill(&templates.general_cot, "grid_matrix", &g.render_matrix()),
        "grid_description",
        &describe_grid(g),
    );
    let mut components = vec![PromptComponent {
        kind: ComponentKind::GeneralCot,
        text: general.trim_end().to_string(),
    }];
    if let Some(norms) = &templates.norms {
        components.push(PromptComponent {
            kind: ComponentKind::Norms,
            text: norms.trim_end().to_string(),
        });
    }
    components.push(PromptComponent {
        kind: ComponentKind::ResponseRequest,
        text: fill(&templates.response_request, "instruction", instruction)
            .trim_end()
            .to_string(),
    });
    let shots: Vec<String> = exemplars.iter().map(Exemplar::render).collect();
    components.push(PromptComponent {
        kind: ComponentKind::Exemplars,
        text: fill(&templates.exemplars, "exemplars", &shots.join("\n"))
            .trim_end()
            .to_string(),
    });
    let full_text = components
        .iter()
        .map(|c| c.text.as_str())
        .collect::<Vec<_>>()
        .join("\n\n");
    Ok(PromptDocument {
        condition,
        components,
        full_text,
        grid: g.clone(),
        instruction: instruction.to_string(),
    })
}

/// Reads a JSON-lines exemplar file, checking that it is non-empty, that all
/// records agree on whether they carry a norm, and that every grid id is known.
pub fn load_exemplars(path: &Path, known_grids: &HashSet<String>) -> Result<Vec<Exemplar>, PromptError> {
    let bad = |reason: String| PromptError::BadExemplarFile {
        path: path.to_path_buf(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: Exemplar =
            serde_json::from_str(line).map_err(|e| bad(format!("line {}: {e}", i + 1)))?;
        if !known_grids.contains(&ex.grid_id) {
            return Err(bad(format!("line {}: unknown grid id {:?}", i + 1, ex.grid_id)));
        }
        if ex.response.trim().is_empty() {
            return Err(bad(format!("line {}: empty response", i + 1)));
        }
        out.push(ex);
    }
    let Some(first) = out.first() else {
        return Err(bad("no exemplars".into()));
    };
    let with_norm = first.norm.is_some();
    if let Some(i) = out.iter().position(|e| e.norm.is_some() != with_norm) {
        return Err(bad(format!("exemplar {i} mixes norm and no-norm records")));
    }
    Ok(out)
}
