//! Extract and transform: ICD-9-CM tables, ICD-10-CM XML and GEM crosswalks
//! into quads under the fixed vocabulary, plus the manifest-driven loader.

mod gem;
mod icd10;
mod icd9;
mod manifest;
mod transform;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use gem::{parse_gem, parse_gem_with, GemOptions, DEFAULT_PLACEHOLDERS};
pub use icd10::{parse_icd10_xml, ElementMap};
pub use icd9::{parse_icd9_table, parse_icd9_table_as};
pub use manifest::{ingest, DanglingRef, EndpointRole, IngestReport, ManifestEntry, SourceManifest};
pub use transform::{entries_to_quads, records_to_quads};

/// One code of an ontology with its description.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeRecord {
    pub scheme_id: String,
    /// Dotless, uppercase.
    pub code: String,
    pub display_code: String,
    pub label: String,
}

/// One crosswalk row with its five decoded flags.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GemEntry {
    pub source_code: String,
    pub target_code: String,
    pub approximate: bool,
    pub no_map: bool,
    pub combination: bool,
    pub scenario: u8,
    pub choice_list: u8,
}

impl GemEntry {
    /// The five-digit flag field in file order.
    pub fn flags(&self) -> String {
        format!(
            "{}{}{}{}{}",
            self.approximate as u8, self.no_map as u8, self.combination as u8, self.scenario, self.choice_list
        )
    }

    /// Serializes back to a GEM text line.
    pub fn to_line(&self) -> String {
        format!("{} {} {}", self.source_code, self.target_code, self.flags())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("malformed line {0}")]
    MalformedLine(usize),
    #[error("malformed flags on line {0}: expected five digits")]
    MalformedFlags(usize),
    #[error("line {line}: {message}")]
    InvalidEntry { line: usize, message: String },
    #[error("code {0} appears twice with different labels")]
    DuplicateCode(String),
    #[error("XML syntax error at {position}: {message}")]
    XmlSyntax { position: String, message: String },
    #[error("missing <{element}> at {position}")]
    MissingElement { element: String, position: String },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<IngestError>,
    },
}

/// Adds a record unless its code is already present. Identical repeats are
/// dropped and reported as `true`; a conflicting label is an error.
pub(crate) fn push_unique(
    out: &mut Vec<CodeRecord>,
    seen: &mut std::collections::HashMap<String, usize>,
    record: CodeRecord,
) -> Result<bool, IngestError> {
    match seen.get(&record.code) {
        Some(&i) if out[i].label == record.label => Ok(true),
        Some(_) => Err(IngestError::DuplicateCode(record.code)),
        None => {
            seen.insert(record.code.clone(), out.len());
            out.push(record);
            Ok(false)
        }
    }
}
