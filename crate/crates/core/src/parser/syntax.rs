//! Lexical helpers shared by both dialects.

use super::escape::{split_quoted, EscapeError};

/// `name(args) rest` split at the parenthesis matching the opening one.
#[derive(Debug)]
pub(crate) struct CallSyntax<'a> {
    pub name: &'a str,
    pub args: &'a str,
    pub rest: &'a str,
}

pub(crate) fn is_call_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Splits `text` (starting at the call name) into name, argument text and
/// the remainder after the closing parenthesis.
pub(crate) fn split_call(text: &str) -> Result<CallSyntax<'_>, String> {
    let open = text.find('(').ok_or("no argument list")?;
    let name = &text[..open];
    if !is_call_name(name) {
        return Err(format!("`{name}` is not a call name"));
    }
    let close = matching_paren(text, open)?;
    Ok(CallSyntax {
        name,
        args: &text[open + 1..close],
        rest: &text[close + 1..],
    })
}

fn matching_paren(text: &str, open: usize) -> Result<usize, String> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut i = open;
    while i < bytes.len() {
        match bytes[i] {
            b'"' => {
                let (_, rest) = split_quoted(&text[i..]).map_err(|e| e.to_string())?;
                i = text.len() - rest.len();
                continue;
            }
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => {
                depth = depth.checked_sub(1).ok_or("unbalanced brackets")?;
                if depth == 0 {
                    if bytes[i] != b')' {
                        return Err("mismatched closing bracket".into());
                    }
                    return Ok(i);
                }
            }
            _ => {}
        }
        i += 1;
    }
    Err("unterminated argument list".into())
}

/// Splits an argument list on top-level commas.
pub(crate) fn split_args(args: &str) -> Result<Vec<&str>, EscapeError> {
    let mut out = Vec::new();
    let bytes = args.as_bytes();
    let mut depth = 0i32;
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'"' => {
                let (_, rest) = split_quoted(&args[i..])?;
                i = args.len() - rest.len();
                continue;
            }
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            b',' if depth == 0 => {
                out.push(args[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
        i += 1;
    }
    let last = args[start..].trim();
    if !last.is_empty() || !out.is_empty() {
        out.push(last);
    }
    Ok(out)
}

/// Parses a decimal or `0x` hex integer. Hex values wider than `i64` wrap,
/// matching how tracers print negative values as unsigned words.
pub(crate) fn parse_int(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        return u64::from_str_radix(hex, 16).ok().map(|v| v as i64);
    }
    s.parse().ok()
}

/// Strips a strace `-y` decoration: `3</path/to/file>` → `3`.
pub(crate) fn strip_decoration(s: &str) -> &str {
    match s.find('<') {
        Some(i) if s.ends_with('>') => &s[..i],
        _ => s,
    }
}

/// Reads a quoted string argument as lossy UTF-8.
pub(crate) fn quoted_string(arg: &str) -> Result<String, String> {
    let buf = super::escape::parse_quoted(arg).map_err(|e| e.to_string())?;
    Ok(String::from_utf8_lossy(&buf.bytes).into_owned())
}

/// Parses a `["a", "b", ...]` string array. A trailing `...` (elided
/// elements) is dropped.
pub(crate) fn string_array(arg: &str) -> Result<Vec<String>, String> {
    let inner = arg
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| format!("expected array, got `{arg}`"))?;
    let items = split_args(inner).map_err(|e| e.to_string())?;
    items
        .into_iter()
        .filter(|i| *i != "..." && !i.is_empty())
        .map(quoted_string)
        .collect()
}
