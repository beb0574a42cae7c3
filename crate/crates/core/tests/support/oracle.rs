//! Brute-force reference evaluator for randomized SPARQL checks.
//!
//! Enumerates every assignment of the query's variables over the terms that
//! occur in the store or the query, keeps those satisfying all patterns and
//! filters, and projects. Shares nothing with the store's join engine.
#![allow(dead_code, clippy::type_complexity)]

use std::collections::HashSet;

use ontorag_core::store::Term;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[derive(Clone, Debug)]
pub enum Pos {
    Var(&'static str),
    Const(Term),
}

#[derive(Clone, Debug)]
pub enum Scope {
    Default,
    Named(String),
    Var(&'static str),
}

#[derive(Clone, Debug)]
pub enum Cond {
    Eq(&'static str, Term),
    Contains(&'static str, String),
    Regex(&'static str, String),
}

#[derive(Clone, Debug)]
pub struct RandomQuery {
    pub groups: Vec<(Scope, Vec<[Pos; 3]>)>,
    pub conds: Vec<Cond>,
    pub projection: Option<Vec<&'static str>>,
    pub distinct: bool,
    pub limit: Option<usize>,
    pub ask: bool,
}

pub type Quad4 = (Term, Term, Term, Term);

const VARS: [&str; 3] = ["a", "b", "c"];

pub fn random_store(rng: &mut StdRng) -> Vec<Quad4> {
    let n = rng.random_range(0..=200);
    (0..n)
        .map(|_| {
            (
                Term::iri(format!("urn:s{}", rng.random_range(0..6))),
                Term::iri(format!("urn:p{}", rng.random_range(0..4))),
                random_object(rng),
                Term::iri(format!("urn:g{}", rng.random_range(0..3))),
            )
        })
        .collect()
}

fn random_object(rng: &mut StdRng) -> Term {
    match rng.random_range(0..4) {
        0 | 1 => Term::iri(format!("urn:s{}", rng.random_range(0..6))),
        2 => Term::literal(["a", "b", "ab", "Ba"][rng.random_range(0..4)]),
        _ => Term::integer(rng.random_range(0..2)),
    }
}

fn random_pos(rng: &mut StdRng, slot: usize) -> Pos {
    if rng.random_bool(0.55) {
        return Pos::Var(VARS[rng.random_range(0..VARS.len())]);
    }
    match slot {
        0 => Pos::Const(Term::iri(format!("urn:s{}", rng.random_range(0..7)))),
        1 => Pos::Const(Term::iri(format!("urn:p{}", rng.random_range(0..5)))),
        _ => Pos::Const(random_object(rng)),
    }
}

pub fn random_query(rng: &mut StdRng) -> RandomQuery {
    let n_patterns = rng.random_range(1..=3);
    let mut groups: Vec<(Scope, Vec<[Pos; 3]>)> = Vec::new();
    for _ in 0..n_patterns {
        let triple = [random_pos(rng, 0), random_pos(rng, 1), random_pos(rng, 2)];
        let scope = match rng.random_range(0..4) {
            0 | 1 => Scope::Default,
            2 => Scope::Named(format!("urn:g{}", rng.random_range(0..3))),
            _ => Scope::Var("g"),
        };
        groups.push((scope, vec![triple]));
    }
    let mut used: Vec<&'static str> = Vec::new();
    for (scope, triples) in &groups {
        if let Scope::Var(v) = scope {
            used.push(v);
        }
        for t in triples {
            for p in t {
                if let Pos::Var(v) = p {
                    used.push(v);
                }
            }
        }
    }
    used.sort();
    used.dedup();
    let mut conds = Vec::new();
    if !used.is_empty() && rng.random_bool(0.4) {
        let v = used[rng.random_range(0..used.len())];
        conds.push(match rng.random_range(0..3) {
            0 => Cond::Eq(v, random_object(rng)),
            1 => Cond::Contains(v, ["a", "s1", "b"][rng.random_range(0..3)].to_string()),
            _ => Cond::Regex(v, ["^a", "s[0-2]$", "b"][rng.random_range(0..3)].to_string()),
        });
    }
    let projection = if used.is_empty() || rng.random_bool(0.3) {
        None
    } else {
        let k = rng.random_range(1..=used.len());
        let mut p = used.clone();
        p.truncate(k);
        Some(p)
    };
    RandomQuery {
        groups,
        conds,
        projection,
        distinct: rng.random_bool(0.4),
        limit: rng.random_bool(0.3).then(|| rng.random_range(1..5)),
        ask: rng.random_bool(0.15),
    }
}

pub fn seeded(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

impl RandomQuery {
    pub fn vars(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for (scope, triples) in &self.groups {
            if let Scope::Var(v) = scope {
                if !out.contains(v) {
                    out.push(v);
                }
            }
            for t in triples {
                for p in t {
                    if let Pos::Var(v) = p {
                        if !out.contains(v) {
                            out.push(v);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn to_sparql(&self) -> String {
        let pos = |p: &Pos| match p {
            Pos::Var(v) => format!("?{v}"),
            Pos::Const(t) => t.to_string(),
        };
        let mut body = String::new();
        for (scope, triples) in &self.groups {
            let inner: String = triples
                .iter()
                .map(|t| format!("{} {} {} .", pos(&t[0]), pos(&t[1]), pos(&t[2])))
                .collect::<Vec<_>>()
                .join(" ");
            match scope {
                Scope::Default => body.push_str(&format!("{inner} ")),
                Scope::Named(g) => body.push_str(&format!("GRAPH <{g}> {{ {inner} }} ")),
                Scope::Var(v) => body.push_str(&format!("GRAPH ?{v} {{ {inner} }} ")),
            }
        }
        for c in &self.conds {
            body.push_str(&match c {
                Cond::Eq(v, t) => format!("FILTER(?{v} = {t}) "),
                Cond::Contains(v, s) => format!("FILTER(CONTAINS(STR(?{v}), \"{s}\")) "),
                Cond::Regex(v, r) => format!("FILTER REGEX(?{v}, \"{r}\", \"i\") "),
            });
        }
        if self.ask {
            return format!("ASK {{ {body}}}");
        }
        let head = match &self.projection {
            None => "*".to_string(),
            Some(p) => p.iter().map(|v| format!("?{v}")).collect::<Vec<_>>().join(" "),
        };
        let distinct = if self.distinct { "DISTINCT " } else { "" };
        let limit = self.limit.map(|k| format!(" LIMIT {k}")).unwrap_or_default();
        format!("SELECT {distinct}{head} WHERE {{ {body}}}{limit}")
    }

    /// Drops GRAPH groups naming a fixed graph, then prunes filters and
    /// projected variables that no longer occur in any pattern.
    pub fn without_named_graphs(&mut self) {
        self.groups.retain(|(s, _)| !matches!(s, Scope::Named(_)));
        let vars = self.vars();
        self.conds.retain(|c| match c {
            Cond::Eq(v, _) | Cond::Contains(v, _) | Cond::Regex(v, _) => vars.contains(v),
        });
        if let Some(p) = &mut self.projection {
            p.retain(|v| vars.contains(v));
            if p.is_empty() {
                self.projection = None;
            }
        }
    }

    pub fn columns(&self) -> Vec<&'static str> {
        self.projection.clone().unwrap_or_else(|| self.vars())
    }
}

fn string_value(t: &Term) -> &str {
    match t {
        Term::Iri(s) | Term::Blank(s) => s,
        Term::Literal { lexical, .. } => lexical,
    }
}

/// Every projected row of the query without DISTINCT or LIMIT applied.
pub fn brute_force(quads: &[Quad4], q: &RandomQuery) -> Vec<Vec<Term>> {
    let mut universe: Vec<Term> = Vec::new();
    let mut intern = |t: &Term| -> usize {
        match universe.iter().position(|u| u == t) {
            Some(i) => i,
            None => {
                universe.push(t.clone());
                universe.len() - 1
            }
        }
    };
    let facts: HashSet<[usize; 4]> = quads
        .iter()
        .map(|(s, p, o, g)| [intern(s), intern(p), intern(o), intern(g)])
        .collect();
    let vars = q.vars();
    let var_index = |name: &str| vars.iter().position(|v| *v == name).unwrap();
    // Each position is either a variable index or an interned constant.
    let pos = |p: &Pos, intern: &mut dyn FnMut(&Term) -> usize| match p {
        Pos::Var(v) => Err(var_index(v)),
        Pos::Const(t) => Ok(intern(t)),
    };
    let mut compiled: Vec<(Option<Result<usize, usize>>, [Result<usize, usize>; 3])> = Vec::new();
    for (scope, triples) in &q.groups {
        let scope = match scope {
            Scope::Default => None,
            Scope::Named(g) => Some(Ok(intern(&Term::iri(g.clone())))),
            Scope::Var(v) => Some(Err(var_index(v))),
        };
        for t in triples {
            compiled.push((
                scope,
                [
                    pos(&t[0], &mut intern),
                    pos(&t[1], &mut intern),
                    pos(&t[2], &mut intern),
                ],
            ));
        }
    }
    let graphs: HashSet<usize> = facts.iter().map(|f| f[3]).collect();
    let conds: Vec<(usize, Box<dyn Fn(&Term) -> bool>)> = q
        .conds
        .iter()
        .map(|c| -> (usize, Box<dyn Fn(&Term) -> bool>) {
            match c {
                Cond::Eq(v, t) => {
                    let t = t.clone();
                    (var_index(v), Box::new(move |x| *x == t))
                }
                Cond::Contains(v, s) => {
                    let s = s.clone();
                    (var_index(v), Box::new(move |x| string_value(x).contains(s.as_str())))
                }
                Cond::Regex(v, r) => {
                    let re = regex::RegexBuilder::new(r).case_insensitive(true).build().unwrap();
                    (var_index(v), Box::new(move |x| re.is_match(string_value(x))))
                }
            }
        })
        .collect();
    let columns: Vec<usize> = q.columns().iter().map(|c| var_index(c)).collect();

    let mut rows = Vec::new();
    if !vars.is_empty() && universe.is_empty() {
        return rows;
    }
    let mut assignment = vec![0usize; vars.len()];
    loop {
        let get = |p: Result<usize, usize>| match p {
            Ok(c) => c,
            Err(v) => assignment[v],
        };
        let patterns_hold = compiled.iter().all(|(scope, [s, p, o])| {
            let (s, p, o) = (get(*s), get(*p), get(*o));
            match scope {
                None => graphs.iter().any(|g| facts.contains(&[s, p, o, *g])),
                Some(g) => facts.contains(&[s, p, o, get(*g)]),
            }
        });
        if patterns_hold && conds.iter().all(|(v, f)| f(&universe[assignment[*v]])) {
            rows.push(columns.iter().map(|c| universe[assignment[*c]].clone()).collect());
        }
        let mut i = 0;
        loop {
            if i == assignment.len() {
                return rows;
            }
            assignment[i] += 1;
            if assignment[i] < universe.len() {
                break;
            }
            assignment[i] = 0;
            i += 1;
        }
    }
}
