//! Maps free-text answers onto the options a question offered.

use crate::belief_graph::name_key;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnswerMatch {
    /// One of the offered choices, in its offered spelling.
    Choice(String),
    /// A value outside the offered choices.
    Other(String),
    /// The user does not know or has no preference.
    Unknown,
}

const UNKNOWN_PHRASES: [&str; 6] = ["unknown", "not sure", "don't know", "do not know", "no preference", "unsure"];
const NEGATIVE_WORDS: [&str; 6] = ["not", "isn't", "absent", "none", "without", "nothing"];
const POSITIVE_WORDS: [&str; 5] = ["sure", "required", "include", "definitely", "present"];

/// Byte offset of `needle` in `hay` as a whole phrase (word boundaries on both sides).
pub(crate) fn find_phrase(hay: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    let boundary = |c: Option<char>| c.is_none_or(|c| !c.is_alphanumeric());
    let mut from = 0;
    while let Some(pos) = hay[from..].find(needle) {
        let start = from + pos;
        let end = start + needle.len();
        if boundary(hay[..start].chars().next_back()) && boundary(hay[end..].chars().next()) {
            return Some(start);
        }
        from = start + hay[start..].chars().next().map_or(1, char::len_utf8);
    }
    None
}

fn letter_choice(answer: &str) -> Option<usize> {
    let mut chars = answer.chars();
    let letter = chars.next().filter(char::is_ascii_lowercase)?;
    match chars.next() {
        None => {}
        Some('.' | ')') if chars.next().is_none_or(char::is_whitespace) => {}
        _ => return None,
    }
    Some((letter as u8 - b'a') as usize)
}

/// Matches an answer against `choices`: exact label, then option letter,
/// then the longest choice mentioned in the answer (earliest on equal length).
pub fn match_answer(answer: &str, choices: &[String]) -> AnswerMatch {
    let key = name_key(answer);
    let key = key.trim_end_matches(['.', '!']).trim();
    if let Some(c) = choices.iter().find(|c| name_key(c) == key) {
        return AnswerMatch::Choice(c.clone());
    }
    if UNKNOWN_PHRASES.iter().any(|p| find_phrase(key, p).is_some()) {
        return AnswerMatch::Unknown;
    }
    if let Some(i) = letter_choice(key) {
        return choices.get(i).map_or(AnswerMatch::Unknown, |c| AnswerMatch::Choice(c.clone()));
    }
    let best = choices
        .iter()
        .filter_map(|c| find_phrase(key, &name_key(c)).map(|pos| (c, name_key(c).len(), pos)))
        .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)));
    match best {
        Some((c, _, _)) => AnswerMatch::Choice(c.clone()),
        None if key.is_empty() => AnswerMatch::Unknown,
        None => AnswerMatch::Other(answer.trim().trim_end_matches(['.', '!']).trim().to_string()),
    }
}

/// Reads a yes/no answer; `None` when it is neither.
pub fn parse_yes_no(answer: &str) -> Option<bool> {
    match match_answer(answer, &["yes".to_string(), "no".to_string()]) {
        AnswerMatch::Choice(c) => Some(c == "yes"),
        AnswerMatch::Unknown => None,
        AnswerMatch::Other(text) => {
            let key = name_key(&text);
            if NEGATIVE_WORDS.iter().any(|w| find_phrase(&key, w).is_some()) || key.contains("n't") {
                Some(false)
            } else if POSITIVE_WORDS.iter().any(|w| find_phrase(&key, w).is_some()) {
                Some(true)
            } else {
                None
            }
        }
    }
}
