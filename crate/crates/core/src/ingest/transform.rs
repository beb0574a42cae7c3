use std::collections::HashSet;

use super::{CodeRecord, GemEntry};
use crate::store::{Quad, Term};
use crate::vocab;

/// Quads for a batch of code records: type, code, label and scheme
/// membership for each record, plus a broader link to the longest proper
/// prefix (at least three characters) that is itself in the batch.
pub fn records_to_quads(records: &[CodeRecord], graph: &str) -> Vec<Quad> {
    let present: HashSet<(&str, &str)> = records
        .iter()
        .map(|r| (r.scheme_id.as_str(), r.code.as_str()))
        .collect();
    let mut out = Vec::with_capacity(records.len() * 5);
    for r in records {
        let subject = Term::iri(vocab::concept(&r.scheme_id, &r.code));
        let mut push = |p: &str, o: Term| out.push(Quad::new(subject.clone(), p, o, graph));
        push(vocab::P_TYPE, Term::iri(vocab::CLASS_CONCEPT));
        push(vocab::P_CODE, Term::literal(r.code.clone()));
        push(vocab::P_LABEL, Term::literal(r.label.clone()));
        push(vocab::P_IN_SCHEME, Term::iri(vocab::scheme(&r.scheme_id)));
        let parent = (3..r.code.len())
            .rev()
            .filter(|n| r.code.is_char_boundary(*n))
            .map(|n| &r.code[..n])
            .find(|p| present.contains(&(r.scheme_id.as_str(), *p)));
        if let Some(parent) = parent {
            push(vocab::P_BROADER, Term::iri(vocab::concept(&r.scheme_id, parent)));
        }
    }
    out
}

/// Seven quads per crosswalk entry, all on one mapping node whose IRI is
/// derived from source, target and flag string.
pub fn entries_to_quads(entries: &[GemEntry], source_scheme: &str, target_scheme: &str, graph: &str) -> Vec<Quad> {
    let mut out = Vec::with_capacity(entries.len() * 7);
    for e in entries {
        let node = Term::iri(vocab::mapping_node(
            source_scheme,
            target_scheme,
            &e.source_code,
            &e.target_code,
            &e.flags(),
        ));
        let mut push = |p: &str, o: Term| out.push(Quad::new(node.clone(), p, o, graph));
        push(
            vocab::P_MAP_SOURCE,
            Term::iri(vocab::concept(source_scheme, &e.source_code)),
        );
        push(
            vocab::P_MAP_TARGET,
            Term::iri(vocab::concept(target_scheme, &e.target_code)),
        );
        push(vocab::P_APPROXIMATE, Term::boolean(e.approximate));
        push(vocab::P_NO_MAP, Term::boolean(e.no_map));
        push(vocab::P_COMBINATION, Term::boolean(e.combination));
        push(vocab::P_SCENARIO, Term::integer(e.scenario.into()));
        push(vocab::P_CHOICE_LIST, Term::integer(e.choice_list.into()));
    }
    out
}
