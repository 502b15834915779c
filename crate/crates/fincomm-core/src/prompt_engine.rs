//! Versioned five-part prompt templates with placeholder bindings.
//!
//! A template file carries a `placeholders:` header and five sections
//! (`## role`, `## context`, `## task`, `## rules`, `## output_examples`).
//! Placeholders use `{name}` syntax; literal braces are escaped as `{{` and
//! `}}`. Prompt text is configuration, not code: templates live one per file
//! with an integer version suffix (`<id>.v<version>.txt`) and the latest
//! version loads by default.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unknown template: {0}")]
    UnknownTemplate(String),
    #[error("malformed template {id}: {reason}")]
    MalformedTemplate { id: String, reason: String },
    #[error("missing binding for placeholder {0:?}")]
    MissingBinding(String),
    #[error("binding for undeclared placeholder {0:?}")]
    ExtraBinding(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The five prompt parts, in render order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TemplateParts {
    pub role: String,
    pub context: String,
    pub task: String,
    pub rules: String,
    pub output_examples: String,
}

impl TemplateParts {
    pub fn named(&self) -> [(&'static str, &str); 5] {
        [
            ("role", &self.role),
            ("context", &self.context),
            ("task", &self.task),
            ("rules", &self.rules),
            ("output_examples", &self.output_examples),
        ]
    }
}

/// A parsed prompt template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub version: u32,
    pub parts: TemplateParts,
    pub placeholders: BTreeSet<String>,
}

/// Placeholder values; keys must exactly match the template's placeholder
/// set at render time.
pub type Binding = BTreeMap<String, String>;

/// Lint findings on a template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateIssue {
    EmptyPart(String),
    UndeclaredPlaceholder(String),
    UnusedPlaceholder(String),
}

impl fmt::Display for TemplateIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemplateIssue::EmptyPart(p) => write!(f, "empty part: {p}"),
            TemplateIssue::UndeclaredPlaceholder(p) => write!(f, "undeclared placeholder: {p}"),
            TemplateIssue::UnusedPlaceholder(p) => write!(f, "unused placeholder: {p}"),
        }
    }
}

const SECTION_NAMES: [&str; 5] = ["role", "context", "task", "rules", "output_examples"];

/// Load a template by id. With `version: None` the highest version in the
/// directory wins.
pub fn load_template(
    dir: &Path,
    id: &str,
    version: Option<u32>,
) -> Result<PromptTemplate, TemplateError> {
    let mut candidates: Vec<(u32, std::path::PathBuf)> = Vec::new();
    if dir.is_dir() {
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            let Some(v) = parse_template_filename(name, id) else {
                continue;
            };
            candidates.push((v, entry.path()));
        }
    }
    let chosen = match version {
        Some(v) => candidates.into_iter().find(|(cv, _)| *cv == v),
        None => candidates.into_iter().max_by_key(|(cv, _)| *cv),
    };
    let Some((v, path)) = chosen else {
        return Err(TemplateError::UnknownTemplate(id.to_string()));
    };
    let text = std::fs::read_to_string(path)?;
    parse_template(id, v, &text)
}

/// `<id>.v<version>.txt` → version.
fn parse_template_filename(name: &str, id: &str) -> Option<u32> {
    let rest = name.strip_prefix(id)?.strip_prefix(".v")?;
    rest.strip_suffix(".txt")?.parse().ok()
}

/// Parse template text. Leading `# ` comment lines (before the
/// `placeholders:` header) are ignored; they carry provenance notes such as
/// whether a prompt is a reconstruction.
pub fn parse_template(id: &str, version: u32, text: &str) -> Result<PromptTemplate, TemplateError> {
    let malformed = |reason: String| TemplateError::MalformedTemplate {
        id: id.to_string(),
        reason,
    };

    let mut lines = text.lines().peekable();
    let mut placeholders: Option<BTreeSet<String>> = None;
    while let Some(line) = lines.peek() {
        let trimmed = line.trim();
        if trimmed.is_empty() || (trimmed.starts_with("# ") && !trimmed.starts_with("## ")) || *trimmed == *"#" {
            lines.next();
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("placeholders:") {
            placeholders = Some(
                rest.split([',', ' '])
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect(),
            );
            lines.next();
        }
        break;
    }
    let placeholders = placeholders.ok_or_else(|| malformed("missing placeholders: header".into()))?;

    let mut sections: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for line in lines {
        if let Some(name) = line.trim().strip_prefix("## ") {
            let name = name.trim().to_string();
            if !SECTION_NAMES.contains(&name.as_str()) {
                return Err(malformed(format!("unknown section: {name}")));
            }
            if sections.contains_key(&name) {
                return Err(malformed(format!("duplicate section: {name}")));
            }
            sections.insert(name.clone(), Vec::new());
            current = Some(name);
        } else if let Some(name) = &current {
            sections.get_mut(name).expect("section exists").push(line);
        } else if !line.trim().is_empty() {
            return Err(malformed(format!("content before first section: {line:?}")));
        }
    }
    for name in SECTION_NAMES {
        if !sections.contains_key(name) {
            return Err(malformed(format!("missing section: {name}")));
        }
    }
    let joined = |name: &str| -> String {
        let body = sections[name].join("\n");
        body.trim_matches('\n').trim_end().to_string()
    };
    let parts = TemplateParts {
        role: joined("role"),
        context: joined("context"),
        task: joined("task"),
        rules: joined("rules"),
        output_examples: joined("output_examples"),
    };

    // Placeholder closure: declared set must exactly equal the set used.
    let mut used = BTreeSet::new();
    for (part_name, body) in parts.named() {
        let found = scan_placeholders(body)
            .map_err(|reason| malformed(format!("{reason} in part {part_name}")))?;
        used.extend(found);
    }
    if let Some(missing) = used.difference(&placeholders).next() {
        return Err(malformed(format!("undeclared placeholder: {missing}")));
    }
    if let Some(unused) = placeholders.difference(&used).next() {
        return Err(malformed(format!("declared but unused placeholder: {unused}")));
    }

    Ok(PromptTemplate {
        id: id.to_string(),
        version,
        parts,
        placeholders,
    })
}

fn is_placeholder_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Collect `{name}` placeholders, honoring `{{`/`}}` escapes. Errors on
/// stray or unterminated braces.
fn scan_placeholders(text: &str) -> Result<BTreeSet<String>, String> {
    let mut out = BTreeSet::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' => {
                if chars.peek() == Some(&'{') {
                    chars.next();
                    continue;
                }
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(c) if is_placeholder_char(c) => name.push(c),
                        Some(c) => return Err(format!("invalid character {c:?} in placeholder")),
                        None => return Err("unterminated placeholder".into()),
                    }
                }
                if name.is_empty() {
                    return Err("empty placeholder".into());
                }
                out.insert(name);
            }
            '}' => {
                if chars.peek() == Some(&'}') {
                    chars.next();
                } else {
                    return Err("stray '}'".into());
                }
            }
            _ => {}
        }
    }
    Ok(out)
}

fn render_text(text: &str, binding: &Binding) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' => {
                if chars.peek() == Some(&'{') {
                    chars.next();
                    out.push('{');
                    continue;
                }
                let mut name = String::new();
                for c in chars.by_ref() {
                    if c == '}' {
                        break;
                    }
                    name.push(c);
                }
                // Load-time validation guarantees the binding has the key.
                out.push_str(binding.get(&name).map(String::as_str).unwrap_or(""));
            }
            '}' => {
                if chars.peek() == Some(&'}') {
                    chars.next();
                }
                out.push('}');
            }
            _ => out.push(c),
        }
    }
    out
}

fn check_binding(template: &PromptTemplate, binding: &Binding) -> Result<(), TemplateError> {
    for key in template.placeholders.iter() {
        if !binding.contains_key(key) {
            return Err(TemplateError::MissingBinding(key.clone()));
        }
    }
    for key in binding.keys() {
        if !template.placeholders.contains(key) {
            return Err(TemplateError::ExtraBinding(key.clone()));
        }
    }
    Ok(())
}

/// The five parts rendered individually, for callers that split prompts into
/// system and user messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedParts {
    pub role: String,
    pub context: String,
    pub task: String,
    pub rules: String,
    pub output_examples: String,
}

impl RenderedParts {
    /// Everything except the role part, joined by blank lines.
    pub fn body(&self) -> String {
        [&self.context, &self.task, &self.rules, &self.output_examples]
            .iter()
            .filter(|p| !p.is_empty())
            .map(|p| p.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

/// Render each part with the binding applied.
pub fn render_parts(
    template: &PromptTemplate,
    binding: &Binding,
) -> Result<RenderedParts, TemplateError> {
    check_binding(template, binding)?;
    Ok(RenderedParts {
        role: render_text(&template.parts.role, binding),
        context: render_text(&template.parts.context, binding),
        task: render_text(&template.parts.task, binding),
        rules: render_text(&template.parts.rules, binding),
        output_examples: render_text(&template.parts.output_examples, binding),
    })
}

/// Render the whole template: the five parts concatenated in order, joined
/// by blank lines, with all placeholders substituted.
pub fn render(template: &PromptTemplate, binding: &Binding) -> Result<String, TemplateError> {
    let parts = render_parts(template, binding)?;
    let all = [
        parts.role,
        parts.context,
        parts.task,
        parts.rules,
        parts.output_examples,
    ];
    Ok(all
        .iter()
        .filter(|p| !p.is_empty())
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join("\n\n"))
}

/// Report empty parts, undeclared placeholders, and declared-but-unused
/// placeholders. An empty list means the template is clean.
pub fn lint_template(template: &PromptTemplate) -> Vec<TemplateIssue> {
    let mut issues = Vec::new();
    let mut used = BTreeSet::new();
    for (name, body) in template.parts.named() {
        if body.trim().is_empty() {
            issues.push(TemplateIssue::EmptyPart(name.to_string()));
        }
        if let Ok(found) = scan_placeholders(body) {
            used.extend(found);
        }
    }
    for p in used.difference(&template.placeholders) {
        issues.push(TemplateIssue::UndeclaredPlaceholder(p.clone()));
    }
    for p in template.placeholders.difference(&used) {
        issues.push(TemplateIssue::UnusedPlaceholder(p.clone()));
    }
    issues
}

/// The template ids every workflow ships with.
pub const SHIPPED_TEMPLATE_IDS: [&str; 7] = [
    "cycle1_step1",
    "cycle1_step2",
    "cycle1_step3",
    "cycle1_step4",
    "cycle2_singleshot",
    "refined_analyst",
    "refined_writer",
];
