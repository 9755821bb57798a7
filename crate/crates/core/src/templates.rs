//! Prompt templates for every language-model call.
//!
//! Templates are plain text files with `{name}` placeholders; `{{` and `}}`
//! render as literal braces. The built-in set is compiled in, and a directory
//! of `<name>.txt` files can override any of them. Each template's
//! placeholder set is checked when the set is loaded, so a typo fails fast
//! instead of producing a silently broken prompt.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("template {template}: unbalanced brace at byte {offset}")]
    Syntax { template: String, offset: usize },
    #[error("template {template}: expected placeholders {expected:?}, found {found:?}")]
    Placeholders { template: String, expected: Vec<String>, found: Vec<String> },
    #[error("template {template}: no value for placeholder {name}")]
    MissingValue { template: String, name: String },
    #[error("reading template {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateName {
    Entity,
    Attribute,
    Relation,
    QaSummarize,
    Merge,
    AicqBase,
    AicqBaseFollowup,
    AicqBelief,
    HsaQuestion,
    SimulatedUser,
    StartingPrompt,
}

impl TemplateName {
    pub const ALL: [TemplateName; 11] = [
        TemplateName::Entity,
        TemplateName::Attribute,
        TemplateName::Relation,
        TemplateName::QaSummarize,
        TemplateName::Merge,
        TemplateName::AicqBase,
        TemplateName::AicqBaseFollowup,
        TemplateName::AicqBelief,
        TemplateName::HsaQuestion,
        TemplateName::SimulatedUser,
        TemplateName::StartingPrompt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::Entity => "entity",
            TemplateName::Attribute => "attribute",
            TemplateName::Relation => "relation",
            TemplateName::QaSummarize => "qa_summarize",
            TemplateName::Merge => "merge",
            TemplateName::AicqBase => "aicq_base",
            TemplateName::AicqBaseFollowup => "aicq_base_followup",
            TemplateName::AicqBelief => "aicq_belief",
            TemplateName::HsaQuestion => "hsa_question",
            TemplateName::SimulatedUser => "simulated_user",
            TemplateName::StartingPrompt => "starting_prompt",
        }
    }

    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateName::Entity => &["user_prompt"],
            TemplateName::Attribute => &["user_prompt", "entity", "existing_entities"],
            TemplateName::Relation => &["user_prompt", "entity_names"],
            TemplateName::QaSummarize => &["question", "answer"],
            TemplateName::Merge => &["prompt", "additional_info"],
            TemplateName::AicqBase => &["original_prompt"],
            TemplateName::AicqBaseFollowup => &["chat_history"],
            TemplateName::AicqBelief => &["user_prompt", "belief", "conversation"],
            TemplateName::HsaQuestion => &["entity", "attribute", "candidates", "entity_type"],
            TemplateName::SimulatedUser => &["ground_truth_prompt", "belief", "conversation", "question"],
            TemplateName::StartingPrompt => &["caption"],
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            TemplateName::Entity => include_str!("../templates/entity.txt"),
            TemplateName::Attribute => include_str!("../templates/attribute.txt"),
            TemplateName::Relation => include_str!("../templates/relation.txt"),
            TemplateName::QaSummarize => include_str!("../templates/qa_summarize.txt"),
            TemplateName::Merge => include_str!("../templates/merge.txt"),
            TemplateName::AicqBase => include_str!("../templates/aicq_base.txt"),
            TemplateName::AicqBaseFollowup => include_str!("../templates/aicq_base_followup.txt"),
            TemplateName::AicqBelief => include_str!("../templates/aicq_belief.txt"),
            TemplateName::HsaQuestion => include_str!("../templates/hsa_question.txt"),
            TemplateName::SimulatedUser => include_str!("../templates/simulated_user.txt"),
            TemplateName::StartingPrompt => include_str!("../templates/starting_prompt.txt"),
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq)]
struct Template {
    pieces: Vec<Piece>,
}

impl Template {
    fn compile(name: &str, text: &str) -> Result<Self, TemplateError> {
        let syntax = |offset| TemplateError::Syntax { template: name.to_string(), offset };
        let mut pieces = Vec::new();
        let mut text_buf = String::new();
        let bytes = text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'{' if bytes.get(i + 1) == Some(&b'{') => {
                    text_buf.push('{');
                    i += 2;
                }
                b'}' if bytes.get(i + 1) == Some(&b'}') => {
                    text_buf.push('}');
                    i += 2;
                }
                b'{' => {
                    let end = text[i + 1..].find('}').ok_or_else(|| syntax(i))? + i + 1;
                    let slot = &text[i + 1..end];
                    if slot.is_empty() || !slot.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_') {
                        return Err(syntax(i));
                    }
                    if !text_buf.is_empty() {
                        pieces.push(Piece::Text(std::mem::take(&mut text_buf)));
                    }
                    pieces.push(Piece::Slot(slot.to_string()));
                    i = end + 1;
                }
                b'}' => return Err(syntax(i)),
                _ => {
                    let ch = text[i..].chars().next().expect("index is on a char boundary");
                    text_buf.push(ch);
                    i += ch.len_utf8();
                }
            }
        }
        if !text_buf.is_empty() {
            pieces.push(Piece::Text(text_buf));
        }
        Ok(Self { pieces })
    }

    fn slots(&self) -> BTreeSet<&str> {
        self.pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.as_str()),
                Piece::Text(_) => None,
            })
            .collect()
    }
}

/// A complete, validated set of templates.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateName, Template>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let mut templates = BTreeMap::new();
        for name in TemplateName::ALL {
            let t = checked(name, name.builtin()).expect("built-in templates are valid");
            templates.insert(name, t);
        }
        Self { templates }
    }

    /// Built-in set with every `<name>.txt` found in `dir` taking precedence.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        if !dir.is_dir() {
            return Err(TemplateError::Io { path: dir.display().to_string(), message: "not a directory".into() });
        }
        let mut set = Self::builtin();
        for name in TemplateName::ALL {
            let path = dir.join(format!("{}.txt", name.as_str()));
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path)
                .map_err(|e| TemplateError::Io { path: path.display().to_string(), message: e.to_string() })?;
            set.templates.insert(name, checked(name, &text)?);
        }
        Ok(set)
    }

    /// Replaces one template from source text.
    pub fn with_template(mut self, name: TemplateName, text: &str) -> Result<Self, TemplateError> {
        self.templates.insert(name, checked(name, text)?);
        Ok(self)
    }

    pub fn render(&self, name: TemplateName, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let template = &self.templates[&name];
        let mut out = String::new();
        for piece in &template.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(slot) => {
                    let value = values.iter().find(|(k, _)| k == slot).map(|(_, v)| *v).ok_or_else(|| {
                        TemplateError::MissingValue { template: name.to_string(), name: slot.clone() }
                    })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

fn checked(name: TemplateName, text: &str) -> Result<Template, TemplateError> {
    let t = Template::compile(name.as_str(), text)?;
    let found: BTreeSet<&str> = t.slots();
    let expected: BTreeSet<&str> = name.placeholders().iter().copied().collect();
    if found != expected {
        return Err(TemplateError::Placeholders {
            template: name.to_string(),
            expected: expected.into_iter().map(String::from).collect(),
            found: found.into_iter().map(String::from).collect(),
        });
    }
    Ok(t)
}
