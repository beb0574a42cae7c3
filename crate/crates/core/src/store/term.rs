use std::fmt;

use serde::{Deserialize, Serialize};

use crate::vocab::{XSD_BOOLEAN, XSD_INTEGER, XSD_STRING};

/// An RDF term.
///
/// Literal lexical forms are kept byte-exact. A datatype of `xsd:string` is
/// folded into "no datatype" so that `"x"` and `"x"^^xsd:string` compare equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "TermJson", try_from = "TermJson")]
pub enum Term {
    Iri(String),
    Literal {
        lexical: String,
        datatype: Option<String>,
        lang: Option<String>,
    },
    Blank(String),
}

impl Term {
    pub fn iri(iri: impl Into<String>) -> Self {
        Term::Iri(iri.into())
    }

    pub fn literal(lexical: impl Into<String>) -> Self {
        Term::Literal {
            lexical: lexical.into(),
            datatype: None,
            lang: None,
        }
    }

    pub fn typed(lexical: impl Into<String>, datatype: impl Into<String>) -> Self {
        let datatype = datatype.into();
        Term::Literal {
            lexical: lexical.into(),
            datatype: (datatype != XSD_STRING).then_some(datatype),
            lang: None,
        }
    }

    pub fn lang_literal(lexical: impl Into<String>, lang: impl Into<String>) -> Self {
        Term::Literal {
            lexical: lexical.into(),
            datatype: None,
            lang: Some(lang.into()),
        }
    }

    pub fn boolean(value: bool) -> Self {
        Term::typed(value.to_string(), XSD_BOOLEAN)
    }

    pub fn integer(value: i64) -> Self {
        Term::typed(value.to_string(), XSD_INTEGER)
    }

    pub fn blank(label: impl Into<String>) -> Self {
        Term::Blank(label.into())
    }

    pub fn is_iri(&self) -> bool {
        matches!(self, Term::Iri(_))
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Term::Literal { .. })
    }

    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Term::Iri(iri) => Some(iri),
            _ => None,
        }
    }

    /// IRI text, literal lexical form, or blank node label.
    pub fn string_value(&self) -> &str {
        match self {
            Term::Iri(s) | Term::Blank(s) => s,
            Term::Literal { lexical, .. } => lexical,
        }
    }
}

/// N-Triples rendering.
impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(iri) => write!(f, "<{iri}>"),
            Term::Blank(label) => write!(f, "_:{label}"),
            Term::Literal {
                lexical,
                datatype,
                lang,
            } => {
                f.write_str("\"")?;
                for c in lexical.chars() {
                    match c {
                        '\\' => f.write_str("\\\\")?,
                        '"' => f.write_str("\\\"")?,
                        '\n' => f.write_str("\\n")?,
                        '\r' => f.write_str("\\r")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")?;
                if let Some(lang) = lang {
                    write!(f, "@{lang}")
                } else if let Some(dt) = datatype {
                    write!(f, "^^<{dt}>")
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// JSON cell shape used by result tables: `{"type": ..., "value": ...}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TermJson {
    #[serde(rename = "type")]
    pub kind: String,
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datatype: Option<String>,
    #[serde(default, rename = "xml:lang", skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
}

impl From<Term> for TermJson {
    fn from(term: Term) -> Self {
        match term {
            Term::Iri(value) => TermJson {
                kind: "uri".into(),
                value,
                datatype: None,
                lang: None,
            },
            Term::Blank(value) => TermJson {
                kind: "bnode".into(),
                value,
                datatype: None,
                lang: None,
            },
            Term::Literal {
                lexical,
                datatype,
                lang,
            } => TermJson {
                kind: "literal".into(),
                value: lexical,
                datatype,
                lang,
            },
        }
    }
}

impl TryFrom<TermJson> for Term {
    type Error = String;

    fn try_from(json: TermJson) -> Result<Self, Self::Error> {
        match json.kind.as_str() {
            "uri" => Ok(Term::Iri(json.value)),
            "bnode" => Ok(Term::Blank(json.value)),
            "literal" => Ok(match (json.lang, json.datatype) {
                (Some(lang), _) => Term::lang_literal(json.value, lang),
                (None, Some(dt)) => Term::typed(json.value, dt),
                (None, None) => Term::literal(json.value),
            }),
            other => Err(format!("unknown term type {other:?}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xsd_string_folds_to_plain() {
        assert_eq!(Term::typed("x", XSD_STRING), Term::literal("x"));
    }

    #[test]
    fn ntriples_escaping() {
        let t = Term::literal("a \"b\"\n\\");
        assert_eq!(t.to_string(), r#""a \"b\"\n\\""#);
        assert_eq!(
            Term::boolean(true).to_string(),
            "\"true\"^^<http://www.w3.org/2001/XMLSchema#boolean>"
        );
    }

    #[test]
    fn json_shape() {
        let json = serde_json::to_value(Term::iri("urn:x")).unwrap();
        assert_eq!(json, serde_json::json!({"type": "uri", "value": "urn:x"}));
        let back: Term = serde_json::from_value(json).unwrap();
        assert_eq!(back, Term::iri("urn:x"));
    }
}
