//! Whitespace-separated token spelling shared by the text stream and the
//! grammar interchange format.
//!
//! Byte mode: one byte per token; printable ASCII is written as itself except
//! `#`, `|` and `\`, which take a backslash, everything else is `\xNN`.
//! Token mode: the token itself, with a leading backslash when it starts
//! with `\` or would read as a separator or a nonterminal (`#`, `|`, `N12`).

pub(crate) fn looks_like_nonterminal(s: &str) -> bool {
    s.len() > 1 && s.starts_with('N') && s[1..].bytes().all(|b| b.is_ascii_digit())
}

pub(crate) fn escape_byte(b: u8) -> String {
    match b {
        b'#' | b'|' | b'\\' => format!("\\{}", b as char),
        b'!'..=b'~' => (b as char).to_string(),
        _ => format!("\\x{b:02X}"),
    }
}

pub(crate) fn escape_token(t: &str) -> String {
    if t == "#" || t == "|" || t.starts_with('\\') || looks_like_nonterminal(t) {
        format!("\\{t}")
    } else {
        t.to_string()
    }
}

pub(crate) fn unescape_byte(tok: &str) -> Result<u8, String> {
    let b = tok.as_bytes();
    match b {
        [c] if *c != b'\\' => Ok(*c),
        [b'\\', c @ (b'#' | b'|' | b'\\')] => Ok(*c),
        [b'\\', b'x', ..] if b.len() == 4 => u8::from_str_radix(&tok[2..], 16).map_err(|_| format!("bad byte escape `{tok}`")),
        _ => Err(format!("`{tok}` is not a single byte")),
    }
}

pub(crate) fn unescape_token(tok: &str) -> Result<String, String> {
    match tok.strip_prefix('\\').unwrap_or(tok) {
        "" => Err("`\\` alone is not a token".into()),
        t => Ok(t.to_string()),
    }
}

/// What a raw (unescaped) token denotes.
#[derive(Debug, PartialEq, Eq)]
pub(crate) enum Lexeme {
    RuleSep,
    ChoiceSep,
    NonTerminal(u32),
    Terminal(String),
}

pub(crate) fn lex(tok: &str) -> Lexeme {
    match tok {
        "#" => Lexeme::RuleSep,
        "|" => Lexeme::ChoiceSep,
        t if looks_like_nonterminal(t) => match t[1..].parse() {
            Ok(n) => Lexeme::NonTerminal(n),
            Err(_) => Lexeme::Terminal(t.to_string()),
        },
        t => Lexeme::Terminal(t.to_string()),
    }
}
