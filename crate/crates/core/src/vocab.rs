//! Fixed IRI vocabulary for concepts, mappings and graphs.

pub const PREFIX: &str = "urn:ontorag:";

pub const P_TYPE: &str = "urn:ontorag:p:type";
pub const P_CODE: &str = "urn:ontorag:p:code";
pub const P_LABEL: &str = "urn:ontorag:p:label";
pub const P_IN_SCHEME: &str = "urn:ontorag:p:inScheme";
pub const P_BROADER: &str = "urn:ontorag:p:broader";
pub const P_MAP_SOURCE: &str = "urn:ontorag:p:mapSource";
pub const P_MAP_TARGET: &str = "urn:ontorag:p:mapTarget";
pub const P_APPROXIMATE: &str = "urn:ontorag:p:approximate";
pub const P_NO_MAP: &str = "urn:ontorag:p:noMap";
pub const P_COMBINATION: &str = "urn:ontorag:p:combination";
pub const P_SCENARIO: &str = "urn:ontorag:p:scenario";
pub const P_CHOICE_LIST: &str = "urn:ontorag:p:choiceList";

pub const CLASS_CONCEPT: &str = "urn:ontorag:class:Concept";

pub const XSD_BOOLEAN: &str = "http://www.w3.org/2001/XMLSchema#boolean";
pub const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";
pub const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

/// Graph holding the concepts of one code scheme.
pub fn scheme_graph(scheme: &str) -> String {
    format!("urn:ontorag:graph:{scheme}")
}

/// Graph holding crosswalk entries from `src` to `dst`.
pub fn mapping_graph(src: &str, dst: &str) -> String {
    format!("urn:ontorag:graph:map:{src}-{dst}")
}

/// Graph that receives exported, expert-accepted mappings.
pub fn refined_graph(src: &str, dst: &str) -> String {
    format!("urn:ontorag:graph:refined:{src}-{dst}")
}

pub fn concept(scheme: &str, dotless_code: &str) -> String {
    format!("urn:ontorag:concept:{scheme}:{dotless_code}")
}

pub fn scheme(scheme: &str) -> String {
    format!("urn:ontorag:scheme:{scheme}")
}

pub fn mapping_node(src: &str, dst: &str, source: &str, target: &str, flags: &str) -> String {
    format!("urn:ontorag:mapping:{src}-{dst}:{source}-{target}-{flags}")
}

/// Splits a concept IRI into `(scheme, code)`.
pub fn parse_concept(iri: &str) -> Option<(&str, &str)> {
    iri.strip_prefix("urn:ontorag:concept:")?.split_once(':')
}

/// Splits a mapping graph IRI into `(source scheme, target scheme)`.
pub fn parse_mapping_graph(iri: &str) -> Option<(&str, &str)> {
    iri.strip_prefix("urn:ontorag:graph:map:")?.split_once('-')
}
