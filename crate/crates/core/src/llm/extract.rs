//! Pulling Java source out of a chat response.

use regex::Regex;
use std::sync::OnceLock;

use crate::java::{Lexer, TokenKind};

/// Info string of a fence line (three or more backticks), if it is one.
fn fence(line: &str) -> Option<&str> {
    let t = line.trim_start();
    let ticks = t.len() - t.trim_start_matches('`').len();
    (ticks >= 3).then(|| t[ticks..].trim())
}

fn accepted_info(info: &str) -> bool {
    let lang = info.split_whitespace().next().unwrap_or("");
    lang.is_empty() || lang.eq_ignore_ascii_case("java")
}

fn first_fenced(response: &str) -> Option<String> {
    let lines: Vec<&str> = response.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let Some(open) = fence(lines[i]) else {
            i += 1;
            continue;
        };
        // any later fence line ends the block, so no fence leaks into the code
        let end = (i + 1..lines.len()).find(|&j| fence(lines[j]).is_some()).unwrap_or(lines.len());
        if accepted_info(open) {
            let body = lines[i + 1..end].join("\n");
            if !body.trim().is_empty() {
                return Some(body);
            }
        }
        // a bare fence closed this block; anything else may open the next
        i = if fence(lines.get(end).copied().unwrap_or("")).is_some_and(str::is_empty) {
            end + 1
        } else {
            end
        };
    }
    None
}

fn start_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*(?:package\s+[\w.]+\s*;|import\s|(?:@\w+(?:\([^)]*\))?\s+)*(?:(?:public|protected|private|abstract|final|static)\s+)*(?:class|interface|enum|record)\s+\w+)")
            .expect("valid regex")
    })
}

/// End offset (exclusive) of the first balanced `{ ... }` group after
/// `from`, using the Java tokenizer so braces in strings and comments are
/// ignored.
fn balanced_end(text: &str, from: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut opened = false;
    for tok in Lexer::starting_at(text, from) {
        let Ok(tok) = tok else { return None };
        if tok.kind != TokenKind::Punct {
            continue;
        }
        match tok.text(text) {
            "{" => {
                depth += 1;
                opened = true;
            }
            "}" => {
                depth = depth.checked_sub(1)?;
                if opened && depth == 0 {
                    return Some(tok.end);
                }
            }
            _ => {}
        }
    }
    None
}

fn longest_declaration(response: &str) -> Option<String> {
    let mut best: Option<(usize, usize)> = None;
    let mut offset = 0;
    for line in response.split_inclusive('\n') {
        if start_line().is_match(line) && !line.trim_start().starts_with("```") {
            let start = offset + (line.len() - line.trim_start().len());
            if let Some(end) = balanced_end(response, start) {
                if response[start..end].lines().any(|l| fence(l).is_some()) {
                    offset += line.len();
                    continue;
                }
                if best.is_none_or(|(s, e)| end - start > e - s) {
                    best = Some((start, end));
                }
            }
        }
        offset += line.len();
    }
    best.map(|(s, e)| response[s..e].to_string())
}

/// Source code in `response`: the first fenced block tagged `java` or
/// untagged, else the longest region that starts at a package, import or
/// type declaration line and ends where its braces balance.
pub fn extract_code(response: &str) -> Option<String> {
    first_fenced(response).or_else(|| longest_declaration(response))
}
