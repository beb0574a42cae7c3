use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    entries_to_quads, parse_gem_with, parse_icd10_xml, parse_icd9_table_as, records_to_quads, CodeRecord, ElementMap,
    GemEntry, GemOptions, IngestError,
};
use crate::store::{Quad, Store, Term};
use crate::vocab;

/// List of source files to load, read from JSON.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceManifest {
    #[serde(default)]
    pub entries: Vec<ManifestEntry>,
    /// Directory that relative entry paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ManifestEntry {
    Icd9Table {
        path: PathBuf,
        #[serde(default = "default_icd9")]
        scheme_id: String,
        #[serde(default)]
        graph_name: Option<String>,
    },
    Icd10Xml {
        path: PathBuf,
        #[serde(default = "default_icd10")]
        scheme_id: String,
        #[serde(default)]
        graph_name: Option<String>,
        #[serde(default)]
        element_map: ElementMap,
    },
    GemText {
        path: PathBuf,
        source_scheme: String,
        target_scheme: String,
        #[serde(default)]
        graph_name: Option<String>,
        #[serde(default)]
        placeholders: Option<Vec<String>>,
    },
}

fn default_icd9() -> String {
    "icd9cm".into()
}

fn default_icd10() -> String {
    "icd10cm".into()
}

impl ManifestEntry {
    pub fn path(&self) -> &Path {
        match self {
            ManifestEntry::Icd9Table { path, .. }
            | ManifestEntry::Icd10Xml { path, .. }
            | ManifestEntry::GemText { path, .. } => path,
        }
    }

    /// The explicit graph name, or the vocabulary default for the entry.
    pub fn graph(&self) -> String {
        match self {
            ManifestEntry::Icd9Table {
                scheme_id, graph_name, ..
            }
            | ManifestEntry::Icd10Xml {
                scheme_id, graph_name, ..
            } => graph_name.clone().unwrap_or_else(|| vocab::scheme_graph(scheme_id)),
            ManifestEntry::GemText {
                source_scheme,
                target_scheme,
                graph_name,
                ..
            } => graph_name
                .clone()
                .unwrap_or_else(|| vocab::mapping_graph(source_scheme, target_scheme)),
        }
    }
}

impl SourceManifest {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let mut manifest: SourceManifest =
            serde_json::from_str(text).map_err(|e| IngestError::Manifest(e.to_string()))?;
        manifest.base_dir = base_dir.into();
        manifest.check()?;
        Ok(manifest)
    }

    /// Reads a manifest file; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    fn check(&self) -> Result<(), IngestError> {
        let mut names = HashSet::new();
        for e in &self.entries {
            let g = e.graph();
            if !names.insert(g.clone()) {
                return Err(IngestError::Manifest(format!("graph {g} is used by two entries")));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointRole {
    Source,
    Target,
}

/// A mapping endpoint with no concept in its scheme.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DanglingRef {
    pub code: String,
    pub role: EndpointRole,
    pub scheme: String,
    /// The mapping graph the reference came from.
    pub graph: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records_parsed: usize,
    pub quads_emitted: usize,
    pub dangling_refs: Vec<DanglingRef>,
    pub warnings: Vec<String>,
}

struct Parsed {
    graph: String,
    quads: Vec<Quad>,
    records: usize,
    mappings: Option<(String, String, Vec<GemEntry>)>,
}

/// Parses every manifest entry, loads the quads into `store`, then checks
/// that every mapping endpoint resolves to a concept. Nothing is loaded if
/// any file fails to parse.
pub fn ingest(manifest: &SourceManifest, store: &Store) -> Result<IngestReport, IngestError> {
    manifest.check()?;
    let mut report = IngestReport::default();
    let mut parsed = Vec::new();
    // (scheme, code) -> label across the whole batch
    let mut batch: HashMap<(String, String), String> = HashMap::new();

    for entry in &manifest.entries {
        let path = manifest.resolve(entry.path());
        let text = fs::read_to_string(&path).map_err(|source| IngestError::Io {
            path: path.clone(),
            source,
        })?;
        let in_file = |source: IngestError| IngestError::InFile {
            path: path.clone(),
            source: Box::new(source),
        };
        let graph = entry.graph();
        let item = match entry {
            ManifestEntry::Icd9Table { scheme_id, .. } | ManifestEntry::Icd10Xml { scheme_id, .. } => {
                let mut records = match entry {
                    ManifestEntry::Icd10Xml { element_map, .. } => parse_icd10_xml(&text, element_map),
                    _ => parse_icd9_table_as(&text, scheme_id),
                }
                .map_err(in_file)?;
                for r in &mut records {
                    r.scheme_id = scheme_id.clone();
                }
                let records = dedupe_across_files(records, &mut batch, &mut report.warnings).map_err(in_file)?;
                Parsed {
                    quads: records_to_quads(&records, &graph),
                    records: records.len(),
                    graph,
                    mappings: None,
                }
            }
            ManifestEntry::GemText {
                source_scheme,
                target_scheme,
                placeholders,
                ..
            } => {
                let options = placeholders
                    .clone()
                    .map(|placeholders| GemOptions { placeholders })
                    .unwrap_or_default();
                let entries = parse_gem_with(&text, &options).map_err(in_file)?;
                Parsed {
                    quads: entries_to_quads(&entries, source_scheme, target_scheme, &graph),
                    records: entries.len(),
                    graph,
                    mappings: Some((source_scheme.clone(), target_scheme.clone(), entries)),
                }
            }
        };
        log::info!("parsed {} records from {}", item.records, path.display());
        parsed.push(item);
    }

    for item in &parsed {
        store.insert_quads(&item.quads);
        report.records_parsed += item.records;
        report.quads_emitted += item.quads.len();
    }

    let concept = Term::iri(vocab::CLASS_CONCEPT);
    let exists = |scheme: &str, code: &str| {
        !store
            .quads_matching(
                Some(&Term::iri(vocab::concept(scheme, code))),
                Some(vocab::P_TYPE),
                Some(&concept),
                None,
            )
            .is_empty()
    };
    for item in &parsed {
        let Some((src, dst, entries)) = &item.mappings else {
            continue;
        };
        let mut seen = HashSet::new();
        for e in entries {
            let mut endpoints = vec![(e.source_code.as_str(), EndpointRole::Source, src)];
            if !e.no_map {
                endpoints.push((e.target_code.as_str(), EndpointRole::Target, dst));
            }
            for (code, role, scheme) in endpoints {
                if !exists(scheme, code) && seen.insert((code.to_string(), role)) {
                    report.dangling_refs.push(DanglingRef {
                        code: code.to_string(),
                        role,
                        scheme: scheme.clone(),
                        graph: item.graph.clone(),
                    });
                }
            }
        }
    }
    Ok(report)
}

fn dedupe_across_files(
    records: Vec<CodeRecord>,
    batch: &mut HashMap<(String, String), String>,
    warnings: &mut Vec<String>,
) -> Result<Vec<CodeRecord>, IngestError> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let key = (r.scheme_id.clone(), r.code.clone());
        match batch.get(&key) {
            Some(label) if *label == r.label => {
                warnings.push(format!("{}:{} listed in more than one file", r.scheme_id, r.code));
            }
            Some(_) => return Err(IngestError::DuplicateCode(r.code)),
            None => {
                batch.insert(key, r.label.clone());
                out.push(r);
            }
        }
    }
    Ok(out)
}
