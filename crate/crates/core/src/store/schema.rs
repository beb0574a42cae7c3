//! Schema snapshot and the existence checks used to validate generated queries.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::sparql::{GraphScope, QueryAst, TermPattern};
use super::{Inner, Term};

/// Graphs, predicates per graph, and the subject/object terms of each graph
/// at the time of the snapshot.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SchemaSummary {
    pub graphs: BTreeSet<String>,
    pub predicates_by_graph: BTreeMap<String, BTreeSet<String>>,
    #[serde(skip)]
    terms_by_graph: BTreeMap<String, HashSet<Term>>,
}

impl SchemaSummary {
    pub(crate) fn from_inner(inner: &Inner) -> Self {
        let mut summary = SchemaSummary::default();
        for (g, idx) in &inner.graphs {
            let name = inner.term(*g).string_value().to_string();
            let preds = summary.predicates_by_graph.entry(name.clone()).or_default();
            let terms = summary.terms_by_graph.entry(name.clone()).or_default();
            for [s, p, o] in idx.spo.iter().copied() {
                preds.insert(inner.term(p).string_value().to_string());
                terms.insert(inner.term(s).clone());
                terms.insert(inner.term(o).clone());
            }
            summary.graphs.insert(name);
        }
        summary
    }

    /// True when `term` occurs as subject or object in `graph`, or in any
    /// graph when `graph` is `None`.
    pub fn term_exists(&self, term: &Term, graph: Option<&str>) -> bool {
        match graph {
            Some(g) => self.terms_by_graph.get(g).is_some_and(|t| t.contains(term)),
            None => self.terms_by_graph.values().any(|t| t.contains(term)),
        }
    }

    pub fn predicate_exists(&self, predicate: &str, graph: Option<&str>) -> bool {
        match graph {
            Some(g) => self.predicates_by_graph.get(g).is_some_and(|p| p.contains(predicate)),
            None => self.predicates_by_graph.values().any(|p| p.contains(predicate)),
        }
    }

    /// Checks every constant graph, predicate and IRI (and, optionally,
    /// literal) against the snapshot. Variables are always accepted.
    pub fn validate(&self, ast: &QueryAst, options: ValidateOptions) -> ValidationReport {
        let mut issues = Vec::new();
        let mut push = |issue: ValidationIssue| {
            if !issues.contains(&issue) {
                issues.push(issue);
            }
        };
        for group in &ast.patterns {
            let graph = match &group.scope {
                GraphScope::Named(g) if !self.graphs.contains(g) => {
                    push(ValidationIssue::UnknownGraph { graph: g.clone() });
                    continue;
                }
                GraphScope::Named(g) => Some(g.as_str()),
                GraphScope::Default | GraphScope::Var(_) => None,
            };
            for t in &group.triples {
                if let TermPattern::Const(p) = &t.predicate {
                    if !self.predicate_exists(p.string_value(), graph) {
                        push(ValidationIssue::UnknownPredicate {
                            predicate: p.string_value().to_string(),
                            graph: graph.map(str::to_string),
                        });
                    }
                }
                for term in [&t.subject, &t.object] {
                    let TermPattern::Const(term) = term else { continue };
                    let checked = term.is_iri() || (options.check_literals && term.is_literal());
                    if checked && !self.term_exists(term, graph) {
                        push(ValidationIssue::UnknownTerm {
                            term: term.to_string(),
                            graph: graph.map(str::to_string),
                        });
                    }
                }
            }
        }
        ValidationReport { issues }
    }

    /// Graph listing for prompts: one line per graph with its predicates.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for g in &self.graphs {
            out.push_str(&format!("- <{g}>\n"));
            if let Some(preds) = self.predicates_by_graph.get(g) {
                for p in preds {
                    out.push_str(&format!("    predicate <{p}>\n"));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidateOptions {
    /// Also require literal constants to exist in the scoped graph.
    pub check_literals: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ValidationIssue {
    UnknownGraph { graph: String },
    UnknownPredicate { predicate: String, graph: Option<String> },
    UnknownTerm { term: String, graph: Option<String> },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scope = |g: &Option<String>| match g {
            Some(g) => format!("graph <{g}>"),
            None => "any graph".to_string(),
        };
        match self {
            ValidationIssue::UnknownGraph { graph } => write!(f, "graph <{graph}> does not exist"),
            ValidationIssue::UnknownPredicate { predicate, graph } => {
                write!(f, "predicate <{predicate}> does not occur in {}", scope(graph))
            }
            ValidationIssue::UnknownTerm { term, graph } => write!(f, "term {term} does not occur in {}", scope(graph)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}
