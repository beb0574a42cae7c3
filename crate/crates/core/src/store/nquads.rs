//! Line-oriented N-Triples / N-Quads reader and writer.

use std::io::{self, Write};

use super::{Quad, Term};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("{message}")]
pub struct LineError {
    pub message: String,
}

fn err<T>(message: impl Into<String>) -> Result<T, LineError> {
    Err(LineError {
        message: message.into(),
    })
}

/// Parses one statement line. Returns `Ok(None)` for blank and comment lines.
///
/// Statements without a graph term are placed in `default_graph`.
pub fn parse_line(line: &str, default_graph: &str) -> Result<Option<Quad>, LineError> {
    let mut cursor = Cursor {
        chars: line.char_indices().peekable(),
        src: line,
    };
    cursor.skip_ws();
    if cursor.peek().is_none() || cursor.peek() == Some('#') {
        return Ok(None);
    }
    let subject = match cursor.term()? {
        t @ (Term::Iri(_) | Term::Blank(_)) => t,
        _ => return err("subject must be an IRI or blank node"),
    };
    cursor.skip_ws();
    let predicate = match cursor.term()? {
        Term::Iri(iri) => iri,
        _ => return err("predicate must be an IRI"),
    };
    cursor.skip_ws();
    let object = cursor.term()?;
    cursor.skip_ws();
    let graph = if cursor.peek() == Some('<') {
        match cursor.term()? {
            Term::Iri(iri) => iri,
            _ => unreachable!(),
        }
    } else if cursor.peek() == Some('_') {
        return err("blank node graph labels are not supported");
    } else {
        default_graph.to_string()
    };
    cursor.skip_ws();
    if cursor.next() != Some('.') {
        return err("expected '.' at end of statement");
    }
    cursor.skip_ws();
    match cursor.peek() {
        None | Some('#') => Ok(Some(Quad {
            subject,
            predicate,
            object,
            graph,
        })),
        Some(c) => err(format!("unexpected trailing character {c:?}")),
    }
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|(_, c)| *c)
    }

    fn next(&mut self) -> Option<char> {
        self.chars.next().map(|(_, c)| c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t' | '\r')) {
            self.next();
        }
    }

    fn term(&mut self) -> Result<Term, LineError> {
        match self.peek() {
            Some('<') => self.iri().map(Term::Iri),
            Some('_') => {
                self.next();
                if self.next() != Some(':') {
                    return err("expected ':' after '_' in blank node");
                }
                let label = self.blank_label();
                if label.is_empty() {
                    return err("empty blank node label");
                }
                Ok(Term::Blank(label))
            }
            Some('"') => self.literal(),
            Some(c) => err(format!("unexpected character {c:?}")),
            None => err("unexpected end of line"),
        }
    }

    fn blank_label(&mut self) -> String {
        let mut out = String::new();
        while let Some(c) = self.peek() {
            let inner = |c: char| c.is_alphanumeric() || c == '_' || c == '-';
            let keep = inner(c) || (c == '.' && !out.is_empty() && self.rest_after_current().starts_with(inner));
            if !keep {
                break;
            }
            out.push(c);
            self.next();
        }
        out
    }

    fn rest_after_current(&mut self) -> &str {
        match self.chars.peek() {
            Some((i, c)) => &self.src[i + c.len_utf8()..],
            None => "",
        }
    }

    fn iri(&mut self) -> Result<String, LineError> {
        self.next();
        let mut iri = String::new();
        loop {
            match self.next() {
                Some('>') => break,
                Some(c) if c.is_whitespace() || c == '<' || c == '"' => {
                    return err(format!("invalid character {c:?} in IRI"))
                }
                Some('\\') => iri.push(self.unicode_escape()?),
                Some(c) => iri.push(c),
                None => return err("unterminated IRI"),
            }
        }
        if !iri.contains(':') {
            return err(format!("IRI <{iri}> is not absolute"));
        }
        Ok(iri)
    }

    fn unicode_escape(&mut self) -> Result<char, LineError> {
        let width = match self.next() {
            Some('u') => 4,
            Some('U') => 8,
            _ => return err("invalid escape in IRI"),
        };
        self.hex(width)
    }

    fn hex(&mut self, width: usize) -> Result<char, LineError> {
        let digits: String = (0..width).filter_map(|_| self.next()).collect();
        u32::from_str_radix(&digits, 16)
            .ok()
            .filter(|_| digits.len() == width)
            .and_then(char::from_u32)
            .map_or_else(|| err(format!("invalid unicode escape {digits:?}")), Ok)
    }

    fn literal(&mut self) -> Result<Term, LineError> {
        self.next();
        let mut lexical = String::new();
        loop {
            match self.next() {
                Some('"') => break,
                Some('\\') => lexical.push(match self.next() {
                    Some('t') => '\t',
                    Some('b') => '\u{8}',
                    Some('n') => '\n',
                    Some('r') => '\r',
                    Some('f') => '\u{c}',
                    Some('"') => '"',
                    Some('\'') => '\'',
                    Some('\\') => '\\',
                    Some('u') => self.hex(4)?,
                    Some('U') => self.hex(8)?,
                    other => return err(format!("invalid escape {other:?} in literal")),
                }),
                Some(c) => lexical.push(c),
                None => return err("unterminated literal"),
            }
        }
        match self.peek() {
            Some('@') => {
                self.next();
                let lang: String = {
                    let mut s = String::new();
                    while let Some(c) = self.peek() {
                        if c.is_ascii_alphanumeric() || c == '-' {
                            s.push(c);
                            self.next();
                        } else {
                            break;
                        }
                    }
                    s
                };
                if lang.is_empty() {
                    return err("empty language tag");
                }
                Ok(Term::lang_literal(lexical, lang))
            }
            Some('^') => {
                self.next();
                if self.next() != Some('^') || self.peek() != Some('<') {
                    return err("expected ^^<datatype>");
                }
                Ok(Term::typed(lexical, self.iri()?))
            }
            _ => Ok(Term::literal(lexical)),
        }
    }
}

/// Writes one N-Quads statement per line.
pub fn write_quads<'a, W: Write>(mut out: W, quads: impl IntoIterator<Item = &'a Quad>) -> io::Result<usize> {
    let mut n = 0;
    for q in quads {
        writeln!(out, "{}", q)?;
        n += 1;
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_quad_and_triple() {
        let q = parse_line("<urn:a> <urn:p> \"x y\" <urn:g> .", "urn:d")
            .unwrap()
            .unwrap();
        assert_eq!(q.graph, "urn:g");
        assert_eq!(q.object, Term::literal("x y"));
        let t = parse_line("_:b1 <urn:p> <urn:o>.", "urn:d").unwrap().unwrap();
        assert_eq!(t.graph, "urn:d");
        assert_eq!(t.subject, Term::blank("b1"));
    }

    #[test]
    fn typed_lang_and_escapes() {
        let q = parse_line(r#"<urn:a> <urn:p> "a\"bé"@en ."#, "urn:d").unwrap().unwrap();
        assert_eq!(q.object, Term::lang_literal("a\"bé", "en"));
        let q = parse_line(
            "<urn:a> <urn:p> \"1\"^^<http://www.w3.org/2001/XMLSchema#integer> .",
            "urn:d",
        )
        .unwrap()
        .unwrap();
        assert_eq!(q.object, Term::integer(1));
    }

    #[test]
    fn comments_and_blanks() {
        assert_eq!(parse_line("   ", "urn:d").unwrap(), None);
        assert_eq!(parse_line("# hi", "urn:d").unwrap(), None);
        assert!(parse_line("<urn:a> <urn:p> <urn:o> . # trailing", "urn:d")
            .unwrap()
            .is_some());
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "<urn:a> <urn:p> <urn:o>",
            "<urn:a> \"lit\" <urn:o> .",
            "\"s\" <urn:p> <urn:o> .",
            "<urn:a> <urn:p> \"open .",
            "<relative> <urn:p> <urn:o> .",
            "<urn:a> <urn:p> <urn:o> . junk",
        ] {
            assert!(parse_line(bad, "urn:d").is_err(), "{bad}");
        }
    }

    #[test]
    fn display_round_trips() {
        let q = Quad {
            subject: Term::iri("urn:s"),
            predicate: "urn:p".into(),
            object: Term::literal("tab\there \"quoted\""),
            graph: "urn:g".into(),
        };
        let back = parse_line(&q.to_string(), "urn:d").unwrap().unwrap();
        assert_eq!(back, q);
    }
}
