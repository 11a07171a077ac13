use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::sop::levenshtein;
use crate::task::{QualifiedLabel, TaskDefinition, UserProfile};

/// One spoken line, written `Label|utterance`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LabeledUtterance {
    pub label: QualifiedLabel,
    pub text: String,
}

impl fmt::Display for LabeledUtterance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.label, self.text)
    }
}

impl From<LabeledUtterance> for String {
    fn from(u: LabeledUtterance) -> String {
        u.to_string()
    }
}

impl TryFrom<String> for LabeledUtterance {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        let (label, text) = s.split_once('|').ok_or_else(|| format!("`{s}` has no `|`"))?;
        Ok(LabeledUtterance {
            label: label.trim().parse().map_err(|e| format!("{e}"))?,
            text: text.trim().to_string(),
        })
    }
}

/// Why a written script was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "snake_case")]
pub enum ScriptViolation {
    Parse { detail: String },
    /// Label sequence differs from the scene at `position`.
    Sequence { position: usize, expected: Option<QualifiedLabel>, found: Option<String> },
    EmptyUtterance { position: usize },
}

impl fmt::Display for ScriptViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptViolation::Parse { detail } => write!(f, "parse: {detail}"),
            ScriptViolation::Sequence { position, expected, found } => {
                let e = expected.as_ref().map_or("end of script".to_string(), |l| l.to_string());
                let g = found.as_deref().unwrap_or("end of script");
                write!(f, "sequence: expected {e} at line {position}, found {g}")
            }
            ScriptViolation::EmptyUtterance { position } => write!(f, "empty utterance at line {position}"),
        }
    }
}

/// A parsed script plus the character edits its cleanup made.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedScript {
    pub lines: Vec<LabeledUtterance>,
    pub repair_distance: usize,
}

fn raw_entries(text: &str, value: Option<&Value>) -> Result<Vec<String>, ScriptViolation> {
    if let Some(v) = value {
        let items = v.as_array().ok_or_else(|| ScriptViolation::Parse {
            detail: "expected a JSON array".into(),
        })?;
        return items
            .iter()
            .map(|i| {
                i.as_str().map(str::to_string).ok_or_else(|| ScriptViolation::Parse {
                    detail: format!("non-string entry {i}"),
                })
            })
            .collect();
    }
    // plain-text fallback: one `Label|utterance` per line
    let lines: Vec<String> = text.lines().filter(|l| l.contains('|')).map(str::to_string).collect();
    if lines.is_empty() {
        return Err(ScriptViolation::Parse {
            detail: "no `Label|utterance` entries".into(),
        });
    }
    Ok(lines)
}

/// Checks a written script against the expected label sequence. `value` is
/// the extracted JSON array when there was one.
pub fn parse_script(
    text: &str,
    value: Option<&Value>,
    expected: &[QualifiedLabel],
    task: &TaskDefinition,
) -> Result<ParsedScript, ScriptViolation> {
    let entries = raw_entries(text, value)?;
    let mut lines = Vec::with_capacity(entries.len());
    let mut repair_distance = 0;
    for (i, raw) in entries.iter().enumerate() {
        let (label_raw, utt_raw) = raw.split_once('|').unwrap_or((raw.as_str(), ""));
        let want = expected.get(i);
        let label = task.normalize_action(label_raw).or_else(|| task.normalize_state(label_raw));
        let label = match (label, want) {
            (Some(l), Some(w)) if &l == w => l,
            // a bare name shared by both sides resolves to the expected side
            (_, Some(w)) if label_raw.trim().trim_matches('"') == w.name() => w.clone(),
            _ => {
                return Err(ScriptViolation::Sequence {
                    position: i,
                    expected: want.cloned(),
                    found: Some(label_raw.trim().to_string()),
                })
            }
        };
        let text = utt_raw
            .trim()
            .trim_matches(|c| matches!(c, '"' | '“' | '”'))
            .trim()
            .to_string();
        if text.is_empty() {
            return Err(ScriptViolation::EmptyUtterance { position: i });
        }
        let line = LabeledUtterance { label, text };
        let raw_chars: Vec<char> = raw.chars().collect();
        let clean_chars: Vec<char> = line.to_string().chars().collect();
        repair_distance += levenshtein(&raw_chars, &clean_chars);
        lines.push(line);
    }
    if lines.len() < expected.len() {
        return Err(ScriptViolation::Sequence {
            position: lines.len(),
            expected: Some(expected[lines.len()].clone()),
            found: None,
        });
    }
    Ok(ParsedScript { lines, repair_distance })
}

fn words(name: &str) -> String {
    let mut out = String::new();
    for (i, c) in name.chars().enumerate() {
        if c.is_uppercase() && i > 0 {
            out.push(' ');
            out.extend(c.to_lowercase());
        } else if c == '-' {
            out.push(' ');
        } else {
            out.push(c);
        }
    }
    out
}

/// Template writer: each line echoes its label in words, e.g.
/// `Agent.VerifyIdentity|(Verify identity, Mr. Li.)`.
pub fn fallback_script(labels: &[QualifiedLabel], profile: &UserProfile) -> Vec<LabeledUtterance> {
    let addressee = match (profile.get("Title"), profile.get("Name")) {
        (Some(t), Some(n)) if !t.is_empty() => format!(", {t} {n}"),
        (_, Some(n)) if !n.is_empty() => format!(", {n}"),
        _ => String::new(),
    };
    labels
        .iter()
        .map(|l| {
            let text = if l.is_agent() {
                format!("({}{addressee}.)", words(l.name()))
            } else {
                format!("({}.)", words(l.name()))
            };
            LabeledUtterance { label: l.clone(), text }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::card_task;

    fn l(s: &str) -> QualifiedLabel {
        s.parse().unwrap()
    }

    #[test]
    fn round_trips_through_pipe_form() {
        let u: LabeledUtterance = serde_json::from_str("\"Agent.Greeting|Hello there.\"").unwrap();
        assert_eq!(u.label, l("Agent.Greeting"));
        assert_eq!(serde_json::to_string(&u).unwrap(), "\"Agent.Greeting|Hello there.\"");
        assert!(serde_json::from_str::<LabeledUtterance>("\"no pipe\"").is_err());
    }

    #[test]
    fn parse_checks_sequence() {
        let task = card_task();
        let want = vec![l("Agent.Greeting"), l("User.Greeting")];
        let v = serde_json::json!(["Agent.Greeting|Hello, this is the card centre.", "Greeting| \"Hi.\""]);
        let p = parse_script("", Some(&v), &want, &task).unwrap();
        assert_eq!(p.lines[1], LabeledUtterance { label: l("User.Greeting"), text: "Hi.".into() });
        // "Greeting" -> "User.Greeting" and the quote/space cleanup
        assert!(p.repair_distance > 0);

        let swapped = serde_json::json!(["User.Greeting|Hi.", "Agent.Greeting|Hello."]);
        assert!(matches!(
            parse_script("", Some(&swapped), &want, &task),
            Err(ScriptViolation::Sequence { position: 0, .. })
        ));
        let short = serde_json::json!(["Agent.Greeting|Hello."]);
        assert!(matches!(
            parse_script("", Some(&short), &want, &task),
            Err(ScriptViolation::Sequence { position: 1, found: None, .. })
        ));
        let empty = serde_json::json!(["Agent.Greeting|Hello.", "User.Greeting|  "]);
        assert_eq!(
            parse_script("", Some(&empty), &want, &task),
            Err(ScriptViolation::EmptyUtterance { position: 1 })
        );
        let text = "Agent.Greeting|Hello.\nUser.Greeting|Hi.\n";
        assert_eq!(parse_script(text, None, &want, &task).unwrap().repair_distance, 0);
    }

    #[test]
    fn fallback_echoes_labels() {
        let task = card_task();
        let s = fallback_script(&[l("Agent.VerifyIdentity"), l("User.IsThemselves")], &task.user_profile);
        assert_eq!(s[0].text, "(Verify identity, Zhang San.)");
        assert_eq!(s[1].text, "(Is themselves.)");
    }
}
