//! Parsing of model replies: bullet lists and strict JSON.

/// Outcome of reading a bullet-list reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BulletReply {
    Items(Vec<String>),
    /// The reply is well-formed but lists nothing (a bare header or the
    /// "nothing found" sentinel).
    Empty,
    Unparseable,
}

fn bullet_body(line: &str) -> Option<&str> {
    for marker in ["- ", "* ", "• ", "– "] {
        if let Some(rest) = line.strip_prefix(marker) {
            return Some(rest);
        }
    }
    if matches!(line, "-" | "*" | "•") {
        return Some("");
    }
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return Some(r);
        }
    }
    None
}

/// Reads bullet lines (`-`, `*`, `•`, or `1.` / `1)` numbering). A reply
/// without bullets is `Empty` if it carries `header` (e.g. `Facts:`) or
/// `sentinel` (e.g. `No verifiable claim`), otherwise `Unparseable`.
pub fn parse_bullets(reply: &str, header: &str, sentinel: Option<&str>) -> BulletReply {
    let items: Vec<String> = reply
        .lines()
        .filter_map(|l| bullet_body(l.trim()))
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if !items.is_empty() {
        return BulletReply::Items(items);
    }
    let has_header = reply.lines().any(|l| l.trim().eq_ignore_ascii_case(header));
    let has_sentinel = sentinel.is_some_and(|s| reply.to_lowercase().contains(&s.to_lowercase()));
    if has_header || has_sentinel {
        BulletReply::Empty
    } else {
        BulletReply::Unparseable
    }
}

/// The JSON payload of a reply that is nothing but JSON, optionally inside a
/// single fenced code block. Returns `None` when other text surrounds it.
pub fn strict_json(reply: &str) -> Option<&str> {
    let t = reply.trim();
    let body = match t.strip_prefix("```") {
        Some(rest) => {
            let rest = rest.strip_prefix("json").unwrap_or(rest);
            let rest = rest.strip_prefix('\n').or_else(|| rest.strip_prefix("\r\n"))?;
            rest.trim_end().strip_suffix("```")?.trim()
        }
        None => t,
    };
    let first = body.chars().next()?;
    let last = body.chars().last()?;
    let balanced = matches!((first, last), ('{', '}') | ('[', ']'));
    balanced.then_some(body)
}
