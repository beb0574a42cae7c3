use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{push_unique, CodeRecord, IngestError};
use crate::codes;

/// Element names used to find codes in an ICD-10-CM XML release.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElementMap {
    /// Element wrapping one code entry.
    pub entry: String,
    /// Child of `entry` carrying the code.
    pub code: String,
    /// Child of `entry` carrying the description.
    pub label: String,
}

impl Default for ElementMap {
    fn default() -> Self {
        ElementMap {
            entry: "diag".into(),
            code: "name".into(),
            label: "desc".into(),
        }
    }
}

/// Walks the document depth-first and emits one `icd10cm` record per entry
/// element, pairing its code child with its sibling description.
pub fn parse_icd10_xml(xml: &str, element_map: &ElementMap) -> Result<Vec<CodeRecord>, IngestError> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| IngestError::XmlSyntax {
        position: e.pos().to_string(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for node in doc.descendants().filter(|n| n.has_tag_name(element_map.entry.as_str())) {
        let child_text = |name: &str| {
            node.children()
                .find(|c| c.has_tag_name(name))
                .map(|c| c.text().unwrap_or("").trim().to_string())
        };
        let position = doc.text_pos_at(node.range().start).to_string();
        let missing = |element: &str| IngestError::MissingElement {
            element: element.to_string(),
            position: position.clone(),
        };
        let code = child_text(&element_map.code).map(|c| codes::normalize(&c));
        let label = child_text(&element_map.label);
        let (code, label) = match (code, label) {
            (Some(c), Some(l)) if !c.is_empty() && !l.is_empty() => (c, l),
            (Some(c), _) if !c.is_empty() => return Err(missing(&element_map.label)),
            _ => return Err(missing(&element_map.code)),
        };
        let record = CodeRecord {
            scheme_id: "icd10cm".into(),
            display_code: codes::icd10_display(&code),
            code,
            label,
        };
        push_unique(&mut out, &mut seen, record)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(xml: &str) -> Result<Vec<CodeRecord>, IngestError> {
        parse_icd10_xml(xml, &ElementMap::default())
    }

    #[test]
    fn single_entry() {
        let recs = parse("<diag><name>N17.9</name><desc>Acute kidney failure, unspecified</desc></diag>").unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].code, "N179");
        assert_eq!(recs[0].display_code, "N17.9");
        assert_eq!(recs[0].label, "Acute kidney failure, unspecified");
    }

    #[test]
    fn nested_entries_depth_first() {
        let xml =
            "<chapter><name>14</name><desc>Genitourinary</desc><section id=\"N17-N19\"><desc>Kidney failure</desc>\
            <diag><name>N17</name><desc>Acute kidney failure</desc>\
              <diag><name>N17.0</name><desc>Acute kidney failure with tubular necrosis</desc></diag>\
              <diag><name>N17.9</name><desc>Acute kidney failure, unspecified</desc></diag>\
            </diag></section></chapter>";
        let codes: Vec<String> = parse(xml).unwrap().into_iter().map(|r| r.code).collect();
        assert_eq!(codes, ["N17", "N170", "N179"]);
    }

    #[test]
    fn empty_root() {
        assert!(parse("<root/>").unwrap().is_empty());
    }

    #[test]
    fn missing_parts() {
        assert!(matches!(
            parse("<diag><name>N17.9</name></diag>"),
            Err(IngestError::MissingElement { element, .. }) if element == "desc"
        ));
        assert!(matches!(
            parse("<diag><desc>Something</desc></diag>"),
            Err(IngestError::MissingElement { element, .. }) if element == "name"
        ));
    }

    #[test]
    fn syntax_error_has_position() {
        match parse("<diag><name>N17.9</diag>") {
            Err(IngestError::XmlSyntax { position, .. }) => assert!(position.contains(':')),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn custom_element_names() {
        let map = ElementMap {
            entry: "code".into(),
            code: "id".into(),
            label: "title".into(),
        };
        let recs = parse_icd10_xml(
            "<x><code><id>I10</id><title>Essential (primary) hypertension</title></code></x>",
            &map,
        )
        .unwrap();
        assert_eq!(recs[0].code, "I10");
    }
}
