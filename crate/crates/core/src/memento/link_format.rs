//! Link-format (`application/link-format`) reader and writer.
//!
//! A body is a comma-separated list of link values:
//!
//! ```text
//! <http://archive.example/2009/http://a/>; rel="memento"; datetime="Thu, 01 Jan 2009 00:00:00 GMT",
//! <http://a/>; rel="original"
//! ```
//!
//! Quoted parameter values may contain commas, semicolons and `\"` escapes.

use std::fmt;

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("link-format error at byte {offset}: {message}")]
pub struct LinkFormatError {
    pub offset: usize,
    pub message: String,
}

fn err(offset: usize, message: impl Into<String>) -> LinkFormatError {
    LinkFormatError {
        offset,
        message: message.into(),
    }
}

/// One link value: a target and its parameters in source order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinkEntry {
    pub target: String,
    /// Parameter names are lowercased. Valueless parameters map to "".
    pub attrs: Vec<(String, String)>,
}

impl LinkEntry {
    pub fn new(target: impl Into<String>) -> Self {
        LinkEntry {
            target: target.into(),
            attrs: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: &str) -> Self {
        self.attrs.push((key.to_ascii_lowercase(), value.to_string()));
        self
    }

    /// First value of parameter `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(key))
            .map(|(_, v)| v.as_str())
    }

    /// Whitespace-separated `rel` tokens, lowercased.
    pub fn rels(&self) -> Vec<String> {
        self.get("rel")
            .map(|r| r.split_whitespace().map(str::to_ascii_lowercase).collect())
            .unwrap_or_default()
    }

    pub fn has_rel(&self, token: &str) -> bool {
        self.rels().iter().any(|r| r == token)
    }
}

impl fmt::Display for LinkEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.target)?;
        for (k, v) in &self.attrs {
            write!(f, "; {k}=\"")?;
            for c in v.chars() {
                if c == '"' || c == '\\' {
                    f.write_str("\\")?;
                }
                write!(f, "{c}")?;
            }
            f.write_str("\"")?;
        }
        Ok(())
    }
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        while self.peek().is_some_and(&pred) {
            self.bump();
        }
        &self.src[start..self.pos]
    }

    fn quoted(&mut self) -> Result<String, LinkFormatError> {
        let open = self.pos;
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                Some('"') => return Ok(out),
                Some('\\') => match self.bump() {
                    Some(c) => out.push(c),
                    None => return Err(err(open, "unterminated quoted string")),
                },
                Some(c) => out.push(c),
                None => return Err(err(open, "unterminated quoted string")),
            }
        }
    }

    fn entry(&mut self) -> Result<LinkEntry, LinkFormatError> {
        let open = self.pos;
        if self.bump() != Some('<') {
            return Err(err(open, "expected '<'"));
        }
        let target = self.take_while(|c| c != '>' && c != '<');
        if self.peek() != Some('>') {
            return Err(err(open, "unbalanced '<' in link target"));
        }
        self.bump();
        let mut entry = LinkEntry::new(target.trim());
        loop {
            self.skip_ws();
            match self.peek() {
                Some(';') => {
                    self.bump();
                    self.skip_ws();
                }
                Some(',') | None => return Ok(entry),
                Some(c) => return Err(err(self.pos, format!("unexpected {c:?} after link value"))),
            }
            let key_at = self.pos;
            let key = self.take_while(|c| !c.is_whitespace() && !matches!(c, '=' | ';' | ',' | '"' | '<' | '>'));
            if key.is_empty() {
                // tolerate stray ";" before "," or end of input
                if matches!(self.peek(), Some(',') | Some(';') | None) {
                    continue;
                }
                return Err(err(key_at, "expected parameter name"));
            }
            let key = key.to_ascii_lowercase();
            self.skip_ws();
            let value = if self.peek() == Some('=') {
                self.bump();
                self.skip_ws();
                match self.peek() {
                    Some('"') => self.quoted()?,
                    _ => self
                        .take_while(|c| !c.is_whitespace() && !matches!(c, ';' | ',' | '"' | '<' | '>'))
                        .to_string(),
                }
            } else {
                String::new()
            };
            entry.attrs.push((key, value));
        }
    }
}

/// Parses a link-format body into entries, preserving their order.
pub fn parse_link_format(body: &str) -> Result<Vec<LinkEntry>, LinkFormatError> {
    let mut cur = Cursor { src: body, pos: 0 };
    let mut entries = Vec::new();
    loop {
        cur.skip_ws();
        match cur.peek() {
            None => return Ok(entries),
            Some(',') => {
                cur.bump();
                continue;
            }
            Some('<') => entries.push(cur.entry()?),
            Some('>') => return Err(err(cur.pos, "unbalanced '>'")),
            Some(c) => return Err(err(cur.pos, format!("unexpected {c:?}, expected '<'"))),
        }
    }
}

/// Writes entries as a link-format body, one entry per line.
pub fn serialize_link_format(entries: &[LinkEntry]) -> String {
    entries
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_entry() {
        let e = parse_link_format(r#"<http://a/>; rel="memento"; datetime="Thu, 01 Jan 2009 00:00:00 GMT""#).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].target, "http://a/");
        assert!(e[0].has_rel("memento"));
        assert_eq!(e[0].get("datetime"), Some("Thu, 01 Jan 2009 00:00:00 GMT"));
    }

    #[test]
    fn empty_body() {
        assert!(parse_link_format("").unwrap().is_empty());
        assert!(parse_link_format(" \n\t").unwrap().is_empty());
    }

    #[test]
    fn quoted_commas_and_semicolons() {
        let body = "<http://a/1>; rel=\"memento\"; title=\"Hello, world; again\",\n<http://a/2>; rel=memento";
        let e = parse_link_format(body).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].get("title"), Some("Hello, world; again"));
        assert_eq!(e[1].target, "http://a/2");
        assert_eq!(e[1].get("rel"), Some("memento"));
    }

    #[test]
    fn escapes_and_bare_params() {
        let e = parse_link_format(r#"<x>; title="say \"hi\" \\ ok"; anchor; REL="first memento";"#).unwrap();
        assert_eq!(e[0].get("title"), Some(r#"say "hi" \ ok"#));
        assert_eq!(e[0].get("anchor"), Some(""));
        assert_eq!(e[0].rels(), ["first", "memento"]);
    }

    #[test]
    fn errors_carry_offsets() {
        let e = parse_link_format("<http://a/; rel=\"x\"").unwrap_err();
        assert_eq!(e.offset, 0);
        let e = parse_link_format("<http://a/>; title=\"open").unwrap_err();
        assert_eq!(e.offset, 19);
        assert!(e.message.contains("unterminated"));
        let e = parse_link_format("<a>, junk").unwrap_err();
        assert_eq!(e.offset, 5);
        let e = parse_link_format("<a> x").unwrap_err();
        assert_eq!(e.offset, 4);
    }

    #[test]
    fn writer_roundtrip() {
        let entries = vec![
            LinkEntry::new("http://a/").with("rel", "original"),
            LinkEntry::new("http://w/1").with("rel", "memento").with("title", "a, \"b\"; c\\"),
        ];
        let text = serialize_link_format(&entries);
        assert_eq!(parse_link_format(&text).unwrap(), entries);
    }
}
