use serde_json::Value;

use super::LlmError;

/// Pulls the first JSON value out of model output: a ```json fenced block if
/// present, else the first balanced `{...}` or `[...]`. Invalid JSON gets a
/// limited repair pass (line comments, single-quoted strings, trailing
/// commas); each repair is reported in the returned log.
pub fn extract_json_block(text: &str) -> Result<(Value, Vec<String>), LlmError> {
    let candidate = fenced_json(text)
        .map(str::to_string)
        .or_else(|| balanced_span(text).map(str::to_string))
        .ok_or(LlmError::NoJsonFound)?;
    if let Ok(v) = serde_json::from_str(&candidate) {
        return Ok((v, Vec::new()));
    }
    let mut log = Vec::new();
    let repaired = strip_line_comments(&candidate, &mut log);
    let repaired = single_to_double_quotes(&repaired, &mut log);
    let repaired = drop_trailing_commas(&repaired, &mut log);
    for entry in &log {
        log::warn!("repaired model JSON: {entry}");
    }
    serde_json::from_str(&repaired)
        .map(|v| (v, log))
        .map_err(|e| LlmError::UnparseableJson(e.to_string()))
}

fn fenced_json(text: &str) -> Option<&str> {
    let lower = text.to_ascii_lowercase();
    let start = lower.find("```json")? + "```json".len();
    let rest = &text[start..];
    let end = rest.find("```").unwrap_or(rest.len());
    let body = rest[..end].trim();
    (!body.is_empty()).then_some(body)
}

/// First top-level `{...}`/`[...]` span, respecting quoted strings.
fn balanced_span(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut from = 0;
    while let Some(off) = text[from..].find(['{', '[']) {
        let start = from + off;
        let mut stack: Vec<u8> = Vec::new();
        let mut quote: Option<u8> = None;
        let mut escaped = false;
        for (i, &b) in bytes.iter().enumerate().skip(start) {
            if let Some(q) = quote {
                if escaped {
                    escaped = false;
                } else if b == b'\\' {
                    escaped = true;
                } else if b == q {
                    quote = None;
                }
                continue;
            }
            match b {
                b'"' | b'\'' => quote = Some(b),
                b'{' => stack.push(b'}'),
                b'[' => stack.push(b']'),
                b'}' | b']' => {
                    if stack.pop() != Some(b) {
                        break;
                    }
                    if stack.is_empty() {
                        return Some(&text[start..=i]);
                    }
                }
                _ => {}
            }
        }
        from = start + 1;
    }
    None
}

/// Walks `s` outside double-quoted strings, calling `f` on each char.
fn scan_outside_strings(s: &str, mut f: impl FnMut(usize, char, &mut String) -> bool) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if in_str {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        if c == '"' {
            in_str = true;
            out.push(c);
            continue;
        }
        if !f(i, c, &mut out) {
            out.push(c);
        }
    }
    out
}

fn strip_line_comments(s: &str, log: &mut Vec<String>) -> String {
    let mut skipping = false;
    let bytes = s.as_bytes();
    scan_outside_strings(s, |i, c, _| {
        if skipping {
            if c == '\n' {
                skipping = false;
                return false;
            }
            return true;
        }
        if c == '/' && bytes.get(i + 1) == Some(&b'/') {
            skipping = true;
            log.push(format!("removed line comment at byte {i}"));
            return true;
        }
        false
    })
}

fn single_to_double_quotes(s: &str, log: &mut Vec<String>) -> String {
    let mut out = String::with_capacity(s.len());
    // quote char of the string being copied, if any
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        match quote {
            Some(q) => {
                if escaped {
                    escaped = false;
                    out.push(c);
                } else if c == '\\' {
                    escaped = true;
                    out.push(c);
                } else if c == q {
                    quote = None;
                    out.push('"');
                } else if c == '"' {
                    out.push_str("\\\"");
                } else {
                    out.push(c);
                }
            }
            None => {
                if c == '\'' {
                    quote = Some('\'');
                    log.push(format!("converted single-quoted string at byte {i}"));
                    out.push('"');
                } else {
                    if c == '"' {
                        quote = Some('"');
                    }
                    out.push(c);
                }
            }
        }
    }
    out
}

fn drop_trailing_commas(s: &str, log: &mut Vec<String>) -> String {
    let bytes = s.as_bytes();
    scan_outside_strings(s, |i, c, _| {
        if c != ',' {
            return false;
        }
        let next = bytes[i + 1..].iter().find(|b| !b.is_ascii_whitespace());
        if matches!(next, Some(b'}') | Some(b']')) {
            log.push(format!("removed trailing comma at byte {i}"));
            return true;
        }
        false
    })
}

/// Value after the last `<label>:` (case-insensitive), up to end of line.
pub fn parse_labeled_line(text: &str, label: &str) -> Result<String, LlmError> {
    find_label(text, label).ok_or_else(|| LlmError::LabelNotFound(label.to_string()))
}

/// Like [`parse_labeled_line`] but accepts several spellings of the label;
/// the occurrence latest in the text wins.
pub fn parse_labeled_line_any(text: &str, labels: &[&str]) -> Result<String, LlmError> {
    labels
        .iter()
        .filter_map(|l| find_label_at(text, l))
        .max_by_key(|(pos, _)| *pos)
        .map(|(_, v)| v)
        .ok_or_else(|| LlmError::LabelNotFound(labels.first().copied().unwrap_or_default().to_string()))
}

fn find_label(text: &str, label: &str) -> Option<String> {
    find_label_at(text, label).map(|(_, v)| v)
}

fn find_label_at(text: &str, label: &str) -> Option<(usize, String)> {
    let needle = label.trim().trim_end_matches(':').to_ascii_lowercase();
    if needle.is_empty() {
        return None;
    }
    // Lowercasing ASCII keeps byte offsets aligned; other scripts are left as is.
    let hay = text.to_ascii_lowercase();
    let mut best = None;
    let mut from = 0;
    while let Some(off) = hay[from..].find(&needle) {
        let at = from + off;
        let after = at + needle.len();
        let rest = &text[after..];
        let trimmed = rest.trim_start_matches([' ', '\t', '*']);
        if let Some(value) = trimmed.strip_prefix(':').or_else(|| trimmed.strip_prefix('：')) {
            let line = value.split('\n').next().unwrap_or_default();
            let v = line.trim().trim_matches('*').trim();
            best = Some((at, v.to_string()));
        }
        from = at + needle.len().max(1);
    }
    best
}

/// Reads a binary judge verdict after "Therefore, the answer is". Anything
/// but a lone 0 or 1 is an abstention.
pub fn parse_verdict(text: &str) -> Option<bool> {
    let v = parse_labeled_line(text, "Therefore, the answer is").ok()?;
    let token = v
        .split_whitespace()
        .next()?
        .trim_matches(|c: char| !c.is_ascii_alphanumeric());
    match token {
        "1" => Some(true),
        "0" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn fenced_block_wins() {
        let text = "Here you go {\"x\":1}\n```json\n{\"Agent.Start\": [\"Agent.VerifyIdentity\"]}\n```\n";
        let (v, log) = extract_json_block(text).unwrap();
        assert_eq!(v, json!({"Agent.Start": ["Agent.VerifyIdentity"]}));
        assert!(log.is_empty());
    }

    #[test]
    fn bare_object_in_prose() {
        let (v, _) = extract_json_block("The list is: {\"a\": [\"}\"]} and more").unwrap();
        assert_eq!(v, json!({"a": ["}"]}));
        let (v, _) = extract_json_block("values [1, [2, 3]] end").unwrap();
        assert_eq!(v, json!([1, [2, 3]]));
    }

    #[test]
    fn no_json() {
        assert_eq!(extract_json_block("hello"), Err(LlmError::NoJsonFound));
        assert_eq!(extract_json_block("open { never closed"), Err(LlmError::NoJsonFound));
    }

    #[test]
    fn trailing_commas_repaired() {
        let (v, log) = extract_json_block(r#"{"a":[1,2,],}"#).unwrap();
        assert_eq!(v, json!({"a": [1, 2]}));
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn comments_and_single_quotes() {
        let text = "{\n  'a': ['x', \"it's\"], // note\n  \"b\": 'say \"hi\"'\n}";
        let (v, log) = extract_json_block(text).unwrap();
        assert_eq!(v, json!({"a": ["x", "it's"], "b": "say \"hi\""}));
        assert_eq!(log.len(), 4);
    }

    #[test]
    fn unrepairable() {
        assert!(matches!(
            extract_json_block("{\"a\": nope}"),
            Err(LlmError::UnparseableJson(_))
        ));
    }

    #[test]
    fn idempotent_on_own_output() {
        let (v, _) = extract_json_block(r#"{'k': [1,2,],}"#).unwrap();
        let (again, log) = extract_json_block(&v.to_string()).unwrap();
        assert_eq!(v, again);
        assert!(log.is_empty());
    }

    #[test]
    fn labeled_lines() {
        let gen = "Analysis: the user wants time to think.\nTherefore, the best agent action is: AttemptPersuasion\n";
        assert_eq!(parse_labeled_line(gen, "the best agent action is").unwrap(), "AttemptPersuasion");
        assert_eq!(parse_labeled_line("blah\nTherefore, the answer is: 1", "Therefore, the answer is").unwrap(), "1");
        assert_eq!(
            parse_labeled_line("no labels here", "User State"),
            Err(LlmError::LabelNotFound("User State".into()))
        );
        // last occurrence wins, label is case-insensitive
        let t = "User State: A\nuser state: B\n";
        assert_eq!(parse_labeled_line(t, "User State").unwrap(), "B");
        assert_eq!(parse_labeled_line("**Agent Action:** Greeting", "Agent Action").unwrap(), "Greeting");
        // a longer label sharing the prefix does not match
        assert!(parse_labeled_line("Agent Actions: [a, b]", "Agent Action").is_err());
    }

    #[test]
    fn alias_labels_pick_latest() {
        let t = "User State: Greeting\nAgent Action: VerifyIdentity\nAgent's reply: Sir, may I ask...\n";
        let v = parse_labeled_line_any(t, &["Agent Response", "Agent's reply"]).unwrap();
        assert_eq!(v, "Sir, may I ask...");
    }

    #[test]
    fn verdicts() {
        assert_eq!(parse_verdict("reasoning\nTherefore, the answer is: 1"), Some(true));
        assert_eq!(parse_verdict("Therefore, the answer is: 0."), Some(false));
        assert_eq!(parse_verdict("Therefore, the answer is: yes"), None);
        assert_eq!(parse_verdict("Therefore, the answer is: 10"), None);
        assert_eq!(parse_verdict("no verdict"), None);
    }
}
