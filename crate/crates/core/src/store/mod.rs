//! In-memory RDF quad store with named graphs and a SPARQL SELECT/ASK subset.
//!
//! Terms are interned to `u32` ids; each graph keeps three sorted
//! permutations (spo, pos, osp) so any triple pattern is answered by a
//! prefix range scan. A [`Store`] is a cheap clonable handle; readers share
//! an `RwLock` and queries run against a consistent snapshot.

mod nquads;
mod schema;
pub mod sparql;
mod term;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock, RwLockReadGuard};

pub use schema::{SchemaSummary, ValidateOptions, ValidationIssue, ValidationReport};
pub use sparql::{QueryAst, QueryError, ResultTable};
pub use term::{Term, TermJson};

/// Graph that receives N-Triples statements when no default is given.
pub const DEFAULT_GRAPH: &str = "urn:ontorag:graph:default";

/// An RDF statement in a named graph.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quad {
    pub subject: Term,
    pub predicate: String,
    pub object: Term,
    pub graph: String,
}

impl Quad {
    pub fn new(subject: Term, predicate: impl Into<String>, object: Term, graph: impl Into<String>) -> Self {
        Quad {
            subject,
            predicate: predicate.into(),
            object,
            graph: graph.into(),
        }
    }
}

impl fmt::Display for Quad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} <{}> {} <{}> .",
            self.subject, self.predicate, self.object, self.graph
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("RDF syntax error at line {line}: {message}")]
    RdfSyntax { line: usize, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl StoreError {
    fn io(path: &Path, source: io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub(crate) type Id = u32;
pub(crate) type Triple = [Id; 3];

#[derive(Default)]
pub(crate) struct GraphIndex {
    pub(crate) spo: BTreeSet<Triple>,
    pub(crate) pos: BTreeSet<Triple>,
    pub(crate) osp: BTreeSet<Triple>,
}

impl GraphIndex {
    fn insert(&mut self, [s, p, o]: Triple) -> bool {
        if !self.spo.insert([s, p, o]) {
            return false;
        }
        self.pos.insert([p, o, s]);
        self.osp.insert([o, s, p]);
        true
    }

    /// All triples matching the given positions, as `[s, p, o]`.
    pub(crate) fn matching(
        &self,
        s: Option<Id>,
        p: Option<Id>,
        o: Option<Id>,
    ) -> Box<dyn Iterator<Item = Triple> + '_> {
        fn range(set: &BTreeSet<Triple>, a: Option<Id>, b: Option<Id>) -> impl Iterator<Item = Triple> + '_ {
            let (lo, hi) = match (a, b) {
                (Some(a), Some(b)) => ([a, b, 0], [a, b, Id::MAX]),
                (Some(a), None) => ([a, 0, 0], [a, Id::MAX, Id::MAX]),
                _ => ([0, 0, 0], [Id::MAX, Id::MAX, Id::MAX]),
            };
            set.range(lo..=hi).copied()
        }
        match (s, p, o) {
            (Some(s), Some(p), Some(o)) => Box::new(self.spo.get(&[s, p, o]).copied().into_iter()),
            (Some(_), _, None) => Box::new(range(&self.spo, s, p)),
            (Some(s), None, Some(o)) => Box::new(range(&self.osp, Some(o), Some(s)).map(|[o, s, p]| [s, p, o])),
            (None, Some(_), _) => Box::new(range(&self.pos, p, o).map(|[p, o, s]| [s, p, o])),
            (None, None, Some(_)) => Box::new(range(&self.osp, o, None).map(|[o, s, p]| [s, p, o])),
            (None, None, None) => Box::new(self.spo.iter().copied()),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.spo.len()
    }
}

#[derive(Default)]
pub(crate) struct Inner {
    pub(crate) terms: Vec<Term>,
    pub(crate) ids: HashMap<Term, Id>,
    pub(crate) graphs: BTreeMap<Id, GraphIndex>,
}

impl Inner {
    fn intern(&mut self, term: &Term) -> Id {
        if let Some(id) = self.ids.get(term) {
            return *id;
        }
        let id = self.terms.len() as Id;
        self.terms.push(term.clone());
        self.ids.insert(term.clone(), id);
        id
    }

    pub(crate) fn id_of(&self, term: &Term) -> Option<Id> {
        self.ids.get(term).copied()
    }

    pub(crate) fn term(&self, id: Id) -> &Term {
        &self.terms[id as usize]
    }

    fn insert(&mut self, quad: &Quad) -> bool {
        let g = self.intern(&Term::Iri(quad.graph.clone()));
        let s = self.intern(&quad.subject);
        let p = self.intern(&Term::Iri(quad.predicate.clone()));
        let o = self.intern(&quad.object);
        self.graphs.entry(g).or_default().insert([s, p, o])
    }

    fn to_quad(&self, g: Id, [s, p, o]: Triple) -> Quad {
        Quad {
            subject: self.term(s).clone(),
            predicate: self.term(p).string_value().to_string(),
            object: self.term(o).clone(),
            graph: self.term(g).string_value().to_string(),
        }
    }
}

/// Shared handle to a quad store.
#[derive(Clone, Default)]
pub struct Store {
    inner: Arc<RwLock<Inner>>,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store").field("len", &self.len()).finish()
    }
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn read(&self) -> RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|e| e.into_inner())
    }

    /// Inserts quads with set semantics; returns how many were new.
    pub fn insert_quads<'a>(&self, quads: impl IntoIterator<Item = &'a Quad>) -> usize {
        let mut inner = self.inner.write().unwrap_or_else(|e| e.into_inner());
        quads.into_iter().filter(|q| inner.insert(q)).count()
    }

    pub fn insert(&self, quad: &Quad) -> bool {
        self.insert_quads(std::iter::once(quad)) == 1
    }

    pub fn len(&self) -> usize {
        self.read().graphs.values().map(GraphIndex::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, quad: &Quad) -> bool {
        let inner = self.read();
        let ids = (
            inner.id_of(&Term::Iri(quad.graph.clone())),
            inner.id_of(&quad.subject),
            inner.id_of(&Term::Iri(quad.predicate.clone())),
            inner.id_of(&quad.object),
        );
        match ids {
            (Some(g), Some(s), Some(p), Some(o)) => {
                inner.graphs.get(&g).is_some_and(|idx| idx.spo.contains(&[s, p, o]))
            }
            _ => false,
        }
    }

    /// Names of all graphs holding at least one quad.
    pub fn graphs(&self) -> Vec<String> {
        let inner = self.read();
        inner
            .graphs
            .keys()
            .map(|g| inner.term(*g).string_value().to_string())
            .collect()
    }

    /// Quads matching a pattern; `None` positions are wildcards.
    pub fn quads_matching(
        &self,
        subject: Option<&Term>,
        predicate: Option<&str>,
        object: Option<&Term>,
        graph: Option<&str>,
    ) -> Vec<Quad> {
        let inner = self.read();
        let lookup = |t: Option<Term>| -> Result<Option<Id>, ()> {
            match t {
                None => Ok(None),
                Some(t) => inner.id_of(&t).map(Some).ok_or(()),
            }
        };
        let (Ok(s), Ok(p), Ok(o), Ok(g)) = (
            lookup(subject.cloned()),
            lookup(predicate.map(Term::iri)),
            lookup(object.cloned()),
            lookup(graph.map(Term::iri)),
        ) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for (gid, idx) in &inner.graphs {
            if g.is_some_and(|g| g != *gid) {
                continue;
            }
            out.extend(idx.matching(s, p, o).map(|t| inner.to_quad(*gid, t)));
        }
        out
    }

    /// Every quad, sorted.
    pub fn quads(&self) -> Vec<Quad> {
        let mut all = self.quads_matching(None, None, None, None);
        all.sort();
        all
    }

    /// Loads an N-Triples/N-Quads file. Triples land in `default_graph`
    /// (or [`DEFAULT_GRAPH`]). Nothing is inserted when any line is malformed.
    pub fn load_nquads(&self, path: impl AsRef<Path>, default_graph: Option<&str>) -> Result<usize, StoreError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
        self.load_nquads_str(&text, default_graph)
    }

    pub fn load_nquads_str(&self, text: &str, default_graph: Option<&str>) -> Result<usize, StoreError> {
        let default_graph = default_graph.unwrap_or(DEFAULT_GRAPH);
        let mut quads = Vec::new();
        for (i, line) in text.lines().enumerate() {
            match nquads::parse_line(line, default_graph) {
                Ok(Some(q)) => quads.push(q),
                Ok(None) => {}
                Err(e) => {
                    return Err(StoreError::RdfSyntax {
                        line: i + 1,
                        message: e.message,
                    })
                }
            }
        }
        Ok(self.insert_quads(&quads))
    }

    /// Writes all quads as sorted N-Quads.
    pub fn write_nquads<W: Write>(&self, out: W) -> io::Result<usize> {
        nquads::write_quads(out, &self.quads())
    }

    /// Atomically replaces `path` with the store contents.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<usize, StoreError> {
        let path = path.as_ref();
        write_atomically(path, |w| self.write_nquads(w))
    }

    /// Opens a store persisted with [`Store::save`]; a missing file is an empty store.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let store = Store::new();
        let path = path.as_ref();
        if path.exists() {
            store.load_nquads(path, None)?;
        }
        Ok(store)
    }

    /// Parses and runs a query.
    pub fn query(&self, text: &str) -> Result<ResultTable, QueryError> {
        self.execute(&sparql::parse(text)?)
    }

    pub fn execute(&self, ast: &QueryAst) -> Result<ResultTable, QueryError> {
        sparql::eval::execute(&self.read(), ast)
    }

    /// Snapshot of graphs, predicates and terms for query validation.
    pub fn introspect(&self) -> SchemaSummary {
        SchemaSummary::from_inner(&self.read())
    }
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomically<T>(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<T>,
) -> Result<T, StoreError> {
    let tmp = path.with_extension("tmp");
    let run = || -> io::Result<T> {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        let out = write(&mut w)?;
        w.flush()?;
        w.get_ref().sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(out)
    };
    run().map_err(|e| StoreError::io(path, e))
}

/// Convenience for writing a quad list as N-Quads.
pub fn export_quads(path: &Path, quads: &[Quad]) -> Result<usize, StoreError> {
    write_atomically(path, |w| nquads::write_quads(w, quads))
}
