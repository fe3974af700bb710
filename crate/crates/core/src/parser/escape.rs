//! C-style string escapes as printed by strace.

use thiserror::Error;

use crate::model::Buffer;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EscapeError {
    #[error("dangling backslash at end of buffer")]
    Dangling,
    #[error("invalid escape `\\{0}`")]
    Invalid(char),
    #[error("`\\x` without hex digits")]
    EmptyHex,
    #[error("octal escape out of byte range")]
    OctalRange,
    #[error("unterminated string literal")]
    Unterminated,
}

/// Decodes the body of a quoted trace buffer (without the quotes).
///
/// Non-ASCII characters that appear literally are kept as their UTF-8 bytes.
pub fn decode_escaped_buffer(body: &str) -> Result<Vec<u8>, EscapeError> {
    let bytes = body.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b != b'\\' {
            out.push(b);
            i += 1;
            continue;
        }
        let Some(&next) = bytes.get(i + 1) else {
            return Err(EscapeError::Dangling);
        };
        i += 2;
        match next {
            b'n' => out.push(b'\n'),
            b't' => out.push(b'\t'),
            b'r' => out.push(b'\r'),
            b'v' => out.push(0x0b),
            b'f' => out.push(0x0c),
            b'a' => out.push(0x07),
            b'b' => out.push(0x08),
            b'e' => out.push(0x1b),
            b'\\' | b'"' | b'\'' | b'?' => out.push(next),
            b'x' => {
                let start = i;
                while i < bytes.len() && i - start < 2 && bytes[i].is_ascii_hexdigit() {
                    i += 1;
                }
                if i == start {
                    return Err(EscapeError::EmptyHex);
                }
                let v = u8::from_str_radix(&body[start..i], 16).expect("hex digits");
                out.push(v);
            }
            b'0'..=b'7' => {
                let mut v: u32 = u32::from(next - b'0');
                let mut digits = 1;
                while digits < 3 && i < bytes.len() && (b'0'..=b'7').contains(&bytes[i]) {
                    v = v * 8 + u32::from(bytes[i] - b'0');
                    i += 1;
                    digits += 1;
                }
                out.push(u8::try_from(v).map_err(|_| EscapeError::OctalRange)?);
            }
            other => {
                let c = body[i - 1..].chars().next().unwrap_or(other as char);
                return Err(EscapeError::Invalid(c));
            }
        }
    }
    Ok(out)
}

/// Escapes bytes the way strace prints them: printable ASCII verbatim,
/// common control characters by name, everything else as short octal.
pub fn escape_c(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len());
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'"' => out.push_str("\\\""),
            b'\\' => out.push_str("\\\\"),
            b'\t' => out.push_str("\\t"),
            b'\n' => out.push_str("\\n"),
            0x0b => out.push_str("\\v"),
            0x0c => out.push_str("\\f"),
            b'\r' => out.push_str("\\r"),
            0x20..=0x7e => out.push(b as char),
            _ => {
                let next_is_octal = bytes.get(i + 1).is_some_and(|n| (b'0'..=b'7').contains(n));
                if next_is_octal {
                    out.push_str(&format!("\\{b:03o}"));
                } else {
                    out.push_str(&format!("\\{b:o}"));
                }
            }
        }
    }
    out
}

/// Splits a leading quoted literal off `text`, returning the literal's body
/// and the remainder. Honors backslash escapes.
pub(crate) fn split_quoted(text: &str) -> Result<(&str, &str), EscapeError> {
    debug_assert!(text.starts_with('"'));
    let bytes = text.as_bytes();
    let mut i = 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'"' => return Ok((&text[1..i], &text[i + 1..])),
            _ => i += 1,
        }
    }
    Err(EscapeError::Unterminated)
}

/// Decodes a full quoted argument such as `"abc"...`, recording the
/// trailing truncation marker.
pub fn parse_quoted(arg: &str) -> Result<Buffer, EscapeError> {
    let arg = arg.trim();
    if !arg.starts_with('"') {
        return Err(EscapeError::Unterminated);
    }
    let (body, rest) = split_quoted(arg)?;
    let bytes = decode_escaped_buffer(body)?;
    Ok(Buffer {
        bytes,
        truncated: rest.trim_start().starts_with("..."),
    })
}
