//! Backtracking evaluation of basic graph patterns over the interned store.

use std::collections::{BTreeSet, HashMap, HashSet};

use regex::Regex;

use super::{Filter, GraphScope, QueryAst, QueryError, QueryForm, ResultTable, TermPattern};
use crate::store::{Id, Inner, Term, Triple};

#[derive(Clone, Copy)]
enum Slot {
    Var(usize),
    /// `None` when the constant does not occur in the store.
    Const(Option<Id>),
}

#[derive(Clone, Copy)]
enum Scope {
    Any,
    Graph(Id),
    Var(usize),
}

struct Pattern {
    scope: Scope,
    triple: Option<[Slot; 3]>,
}

enum Operand {
    Var(usize),
    Const(Term),
}

enum Check {
    Eq(Operand, Operand),
    Contains(Operand, Operand),
    Regex(Operand, Regex),
}

struct CompiledFilter {
    vars: Vec<usize>,
    check: Check,
}

struct Plan<'a> {
    inner: &'a Inner,
    patterns: Vec<Pattern>,
    filters: Vec<CompiledFilter>,
}

pub(crate) fn execute(inner: &Inner, ast: &QueryAst) -> Result<ResultTable, QueryError> {
    let vars = ast.pattern_vars();
    let index: HashMap<&str, usize> = vars.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
    let slot = |t: &TermPattern| match t {
        TermPattern::Var(v) => Slot::Var(index[v.as_str()]),
        TermPattern::Const(term) => Slot::Const(inner.id_of(term)),
    };

    let mut patterns = Vec::new();
    for group in &ast.patterns {
        let scope = match &group.scope {
            GraphScope::Default => Scope::Any,
            GraphScope::Var(v) => Scope::Var(index[v.as_str()]),
            GraphScope::Named(g) => match inner.id_of(&Term::iri(g.clone())) {
                Some(id) if inner.graphs.contains_key(&id) => Scope::Graph(id),
                _ => return Err(QueryError::UnknownGraph(g.clone())),
            },
        };
        if group.triples.is_empty() {
            patterns.push(Pattern { scope, triple: None });
        }
        for t in &group.triples {
            patterns.push(Pattern {
                scope,
                triple: Some([slot(&t.subject), slot(&t.predicate), slot(&t.object)]),
            });
        }
    }

    let operand = |t: &TermPattern| match t {
        TermPattern::Var(v) => Operand::Var(index[v.as_str()]),
        TermPattern::Const(term) => Operand::Const(term.clone()),
    };
    let mut filters = Vec::new();
    for f in &ast.filters {
        let vars = f.vars().into_iter().map(|v| index[v]).collect();
        let check = match f {
            Filter::Eq(a, b) => Check::Eq(operand(a), operand(b)),
            Filter::StrContains(a, b) => Check::Contains(operand(a), operand(b)),
            Filter::Regex { target, pattern, flags } => {
                let re = if flags.is_empty() {
                    Regex::new(pattern)
                } else {
                    Regex::new(&format!("(?{flags}){pattern}"))
                }
                .map_err(|e| QueryError::SparqlSyntax {
                    position: 0,
                    message: format!("invalid regex: {e}"),
                })?;
                Check::Regex(operand(target), re)
            }
        };
        filters.push(CompiledFilter { vars, check });
    }

    let plan = Plan {
        inner,
        patterns,
        filters,
    };
    let columns = ast.columns();
    let projection: Vec<usize> = columns.iter().map(|c| index[c.as_str()]).collect();

    if ast.is_ask() {
        let mut found = false;
        plan.solve(&mut |_| {
            found = true;
            false
        });
        return Ok(ResultTable {
            columns: Vec::new(),
            rows: Vec::new(),
            boolean: Some(found),
        });
    }

    let distinct = matches!(ast.form, QueryForm::Select { distinct: true, .. });
    let mut seen: HashSet<Vec<Option<Id>>> = HashSet::new();
    let mut rows: Vec<Vec<Option<Id>>> = Vec::new();
    plan.solve(&mut |bindings| {
        let row: Vec<Option<Id>> = projection.iter().map(|i| bindings[*i]).collect();
        if !distinct || seen.insert(row.clone()) {
            rows.push(row);
        }
        ast.limit.is_none_or(|k| rows.len() < k)
    });

    Ok(ResultTable {
        columns,
        rows: rows
            .into_iter()
            .map(|r| r.into_iter().map(|c| c.map(|id| inner.term(id).clone())).collect())
            .collect(),
        boolean: None,
    })
}

impl Plan<'_> {
    fn var_count(&self) -> usize {
        let mut n = 0;
        for p in &self.patterns {
            if let Scope::Var(v) = p.scope {
                n = n.max(v + 1);
            }
            for s in p.triple.iter().flatten() {
                if let Slot::Var(v) = s {
                    n = n.max(v + 1);
                }
            }
        }
        n
    }

    /// Calls `emit` once per solution; stops when it returns `false`.
    fn solve(&self, emit: &mut dyn FnMut(&[Option<Id>]) -> bool) {
        if self.patterns.iter().any(|p| {
            p.triple
                .is_some_and(|t| t.iter().any(|s| matches!(s, Slot::Const(None))))
        }) {
            return;
        }
        let mut bindings = vec![None; self.var_count()];
        let mut remaining: Vec<usize> = (0..self.patterns.len()).collect();
        if !self.filters_hold(&bindings) {
            return;
        }
        self.step(&mut remaining, &mut bindings, emit);
    }

    fn bound(&self, slot: Slot, bindings: &[Option<Id>]) -> Option<Id> {
        match slot {
            Slot::Const(id) => id,
            Slot::Var(v) => bindings[v],
        }
    }

    fn score(&self, p: &Pattern, bindings: &[Option<Id>]) -> usize {
        let scope = match p.scope {
            Scope::Graph(_) => 1,
            Scope::Var(v) => bindings[v].is_some() as usize,
            Scope::Any => 0,
        };
        let slots = p
            .triple
            .iter()
            .flatten()
            .filter(|s| self.bound(**s, bindings).is_some())
            .count();
        slots * 2 + scope
    }

    fn step(
        &self,
        remaining: &mut Vec<usize>,
        bindings: &mut Vec<Option<Id>>,
        emit: &mut dyn FnMut(&[Option<Id>]) -> bool,
    ) -> bool {
        let Some(pick) =
            (0..remaining.len()).max_by_key(|i| (self.score(&self.patterns[remaining[*i]], bindings), usize::MAX - i))
        else {
            return emit(bindings);
        };
        let idx = remaining.swap_remove(pick);
        let keep_going = self.expand(&self.patterns[idx], remaining, bindings, emit);
        remaining.push(idx);
        let last = remaining.len() - 1;
        remaining.swap(pick, last);
        keep_going
    }

    fn expand(
        &self,
        pattern: &Pattern,
        remaining: &mut Vec<usize>,
        bindings: &mut Vec<Option<Id>>,
        emit: &mut dyn FnMut(&[Option<Id>]) -> bool,
    ) -> bool {
        let graphs: Vec<(Option<usize>, Id)> = match pattern.scope {
            Scope::Graph(g) => vec![(None, g)],
            Scope::Var(v) => match bindings[v] {
                Some(g) => vec![(None, g)],
                None => self.inner.graphs.keys().map(|g| (Some(v), *g)).collect(),
            },
            Scope::Any => Vec::new(),
        };

        let Some(slots) = pattern.triple else {
            // GRAPH scope without triples: the graph must exist.
            for (bind, g) in graphs {
                if !self.inner.graphs.contains_key(&g) {
                    continue;
                }
                let mut assigned = Vec::new();
                if let Some(v) = bind {
                    bindings[v] = Some(g);
                    assigned.push(v);
                }
                let ok = !self.filters_hold(bindings) || self.step(remaining, bindings, emit);
                for v in assigned {
                    bindings[v] = None;
                }
                if !ok {
                    return false;
                }
            }
            return true;
        };
        let [s, p, o] = slots.map(|slot| self.bound(slot, bindings));

        let candidates: Vec<(Option<(usize, Id)>, Triple)> = match pattern.scope {
            Scope::Any => {
                let mut set = BTreeSet::new();
                for idx in self.inner.graphs.values() {
                    set.extend(idx.matching(s, p, o));
                }
                set.into_iter().map(|t| (None, t)).collect()
            }
            _ => graphs
                .into_iter()
                .filter_map(|(bind, g)| self.inner.graphs.get(&g).map(|idx| (bind, g, idx)))
                .flat_map(|(bind, g, idx)| idx.matching(s, p, o).map(move |t| (bind.map(|v| (v, g)), t)))
                .collect(),
        };

        for (graph_bind, triple) in candidates {
            let mut assigned: Vec<usize> = Vec::new();
            let mut consistent = true;
            let pairs = graph_bind
                .into_iter()
                .chain(slots.iter().zip(triple).filter_map(|(slot, id)| match slot {
                    Slot::Var(v) => Some((*v, id)),
                    Slot::Const(_) => None,
                }));
            for (v, id) in pairs {
                match bindings[v] {
                    Some(existing) if existing != id => {
                        consistent = false;
                        break;
                    }
                    Some(_) => {}
                    None => {
                        bindings[v] = Some(id);
                        assigned.push(v);
                    }
                }
            }
            let mut go_on = true;
            if consistent && self.filters_hold(bindings) {
                go_on = self.step(remaining, bindings, emit);
            }
            for v in assigned {
                bindings[v] = None;
            }
            if !go_on {
                return false;
            }
        }
        true
    }

    fn filters_hold(&self, bindings: &[Option<Id>]) -> bool {
        self.filters
            .iter()
            .filter(|f| f.vars.iter().all(|v| bindings[*v].is_some()))
            .all(|f| self.check(&f.check, bindings))
    }

    fn value<'b>(&'b self, op: &'b Operand, bindings: &[Option<Id>]) -> &'b Term {
        match op {
            Operand::Var(v) => self.inner.term(bindings[*v].expect("filter variable bound")),
            Operand::Const(t) => t,
        }
    }

    fn check(&self, check: &Check, bindings: &[Option<Id>]) -> bool {
        match check {
            Check::Eq(a, b) => self.value(a, bindings) == self.value(b, bindings),
            Check::Contains(a, b) => self
                .value(a, bindings)
                .string_value()
                .contains(self.value(b, bindings).string_value()),
            Check::Regex(a, re) => re.is_match(self.value(a, bindings).string_value()),
        }
    }
}
