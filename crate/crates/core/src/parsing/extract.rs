//! Pulls a JSON document out of free-form model output.
//!
//! This is the only repair layer: it strips code fences and surrounding
//! prose, fixes comma slips between elements and parses. It never guesses
//! at missing fields or values.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ParseError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawParseResult {
    pub source_text: String,
    pub extracted_document: Value,
    pub repair_notes: Vec<String>,
}

/// Finds the outermost bracketed document in `text` and parses it.
pub fn extract_document(text: &str) -> Result<RawParseResult, ParseError> {
    let mut notes = Vec::new();
    let body = match fenced(text) {
        Some(inner) => {
            notes.push("removed code fence".to_string());
            inner
        }
        None => text,
    };
    let mut last_error = None;
    let mut resume = 0;
    for (start, _) in body.match_indices(['[', '{']) {
        if start < resume {
            continue;
        }
        // An unclosed bracket means the document was cut off; inner fragments are not the answer.
        let Some(end) = balanced_end(body, start) else {
            last_error = Some("document is truncated".to_string());
            break;
        };
        resume = end;
        let (repaired, comma_notes) = repair_commas(&body[start..end]);
        match serde_json::from_str::<Value>(&repaired) {
            Ok(doc) => {
                if !body[..start].trim().is_empty() || !body[end..].trim().is_empty() {
                    notes.push("removed text around the document".to_string());
                }
                notes.extend(comma_notes);
                return Ok(RawParseResult { source_text: text.to_string(), extracted_document: doc, repair_notes: notes });
            }
            Err(e) => last_error = Some(e.to_string()),
        }
    }
    Err(ParseError::NoDocumentFound(
        last_error.map_or_else(|| "no bracketed document in output".to_string(), |e| format!("malformed document: {e}")),
    ))
}

/// Contents of the first fenced block, if any. An unclosed fence runs to the end.
fn fenced(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let after = &text[open + 3..];
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    Some(body.find("```").map_or(body, |close| &body[..close]))
}

/// Byte index just past the bracket matching the one at `start`.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let mut stack = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '[' => stack.push(']'),
            '{' => stack.push('}'),
            ']' | '}' => {
                if stack.pop() != Some(c) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(start + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Drops trailing commas and inserts missing ones between adjacent elements.
fn repair_commas(doc: &str) -> (String, Vec<String>) {
    let chars: Vec<char> = doc.chars().collect();
    let next_significant = |from: usize| chars[from..].iter().copied().find(|c| !c.is_whitespace());
    let mut out = String::with_capacity(doc.len());
    let (mut trailing, mut missing) = (0, 0);
    let mut in_string = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            out.push(c);
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                out.push(c);
            }
            ',' if matches!(next_significant(i + 1), Some(']' | '}')) => trailing += 1,
            '}' | ']' => {
                out.push(c);
                if matches!(next_significant(i + 1), Some('{' | '[')) {
                    out.push(',');
                    missing += 1;
                }
            }
            _ => out.push(c),
        }
    }
    let mut notes = Vec::new();
    if trailing > 0 {
        notes.push(format!("removed {trailing} trailing comma(s)"));
    }
    if missing > 0 {
        notes.push(format!("inserted {missing} missing comma(s) between elements"));
    }
    (out, notes)
}
