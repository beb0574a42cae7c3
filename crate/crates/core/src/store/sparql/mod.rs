//! SPARQL subset: SELECT/ASK over basic graph patterns, optionally scoped by
//! `GRAPH`, with `FILTER` equality, `CONTAINS` and `REGEX`, plus `DISTINCT`,
//! `LIMIT` and `PREFIX`.

pub(crate) mod eval;
mod parser;

use serde::{Deserialize, Serialize};

use super::Term;

pub use parser::parse;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("SPARQL syntax error at {position}: {message}")]
    SparqlSyntax { position: usize, message: String },
    #[error("unsupported SPARQL feature: {0}")]
    UnsupportedFeature(String),
    #[error("unknown graph <{0}>")]
    UnknownGraph(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryForm {
    Select { projection: Projection, distinct: bool },
    Ask,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    All,
    Vars(Vec<String>),
}

/// A constant term or a variable name (without `?`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TermPattern {
    Var(String),
    Const(Term),
}

impl TermPattern {
    pub fn var(&self) -> Option<&str> {
        match self {
            TermPattern::Var(v) => Some(v),
            TermPattern::Const(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriplePattern {
    pub subject: TermPattern,
    pub predicate: TermPattern,
    pub object: TermPattern,
}

impl TriplePattern {
    pub fn vars(&self) -> impl Iterator<Item = &str> {
        [&self.subject, &self.predicate, &self.object]
            .into_iter()
            .filter_map(TermPattern::var)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphScope {
    /// Union of all named graphs.
    Default,
    Named(String),
    Var(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupPattern {
    pub scope: GraphScope,
    pub triples: Vec<TriplePattern>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Filter {
    Eq(TermPattern, TermPattern),
    StrContains(TermPattern, TermPattern),
    Regex {
        target: TermPattern,
        pattern: String,
        flags: String,
    },
}

impl Filter {
    pub fn vars(&self) -> Vec<&str> {
        match self {
            Filter::Eq(a, b) | Filter::StrContains(a, b) => [a, b].into_iter().filter_map(TermPattern::var).collect(),
            Filter::Regex { target, .. } => target.var().into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryAst {
    pub form: QueryForm,
    pub patterns: Vec<GroupPattern>,
    pub filters: Vec<Filter>,
    pub limit: Option<usize>,
}

impl QueryAst {
    /// Variables in order of first appearance in the patterns.
    pub fn pattern_vars(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |v: &str| {
            if !out.iter().any(|o| o == v) {
                out.push(v.to_string());
            }
        };
        for group in &self.patterns {
            if let GraphScope::Var(v) = &group.scope {
                push(v);
            }
            for t in &group.triples {
                t.vars().for_each(&mut push);
            }
        }
        out
    }

    /// Output columns: the projection, or every pattern variable for `*` and ASK.
    pub fn columns(&self) -> Vec<String> {
        match &self.form {
            QueryForm::Select {
                projection: Projection::Vars(vars),
                ..
            } => vars.clone(),
            _ => self.pattern_vars(),
        }
    }

    pub fn is_ask(&self) -> bool {
        matches!(self.form, QueryForm::Ask)
    }
}

/// Query result. SELECT fills `columns`/`rows`; ASK sets `boolean`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<Term>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boolean: Option<bool>,
}

impl ResultTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Cell value by column name, as its string value.
    pub fn get(&self, row: usize, column: &str) -> Option<&str> {
        let idx = self.column(column)?;
        self.rows.get(row)?.get(idx)?.as_ref().map(Term::string_value)
    }
}
