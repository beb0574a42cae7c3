use std::collections::HashMap;

use super::{push_unique, CodeRecord, IngestError};
use crate::codes;

/// Parses a two-column `CODE<whitespace>LABEL` table into `icd9cm` records.
pub fn parse_icd9_table(text: &str) -> Result<Vec<CodeRecord>, IngestError> {
    parse_icd9_table_as(text, "icd9cm")
}

/// Same as [`parse_icd9_table`] with an explicit scheme id.
pub fn parse_icd9_table_as(text: &str, scheme_id: &str) -> Result<Vec<CodeRecord>, IngestError> {
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let line_no = i + 1;
        let (raw_code, label) = line
            .split_once(char::is_whitespace)
            .ok_or(IngestError::MalformedLine(line_no))?;
        let label = label.trim();
        let code = codes::normalize(raw_code);
        if label.is_empty() || code.is_empty() {
            return Err(IngestError::MalformedLine(line_no));
        }
        let record = CodeRecord {
            scheme_id: scheme_id.to_string(),
            display_code: codes::icd9_display(&code),
            code,
            label: label.to_string(),
        };
        push_unique(&mut out, &mut seen, record)?;
    }
    Ok(out)
}
