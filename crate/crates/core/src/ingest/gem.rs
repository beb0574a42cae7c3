use super::{GemEntry, IngestError};
use crate::codes;

pub const DEFAULT_PLACEHOLDERS: [&str; 2] = ["NoDx", "NoPx"];

/// Parser settings for GEM files.
#[derive(Clone, Debug)]
pub struct GemOptions {
    /// Target values allowed (and required) on no-map rows. Kept verbatim.
    pub placeholders: Vec<String>,
}

impl Default for GemOptions {
    fn default() -> Self {
        GemOptions {
            placeholders: DEFAULT_PLACEHOLDERS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

pub fn parse_gem(text: &str) -> Result<Vec<GemEntry>, IngestError> {
    parse_gem_with(text, &GemOptions::default())
}

/// Parses `SOURCE TARGET FLAGS` lines. FLAGS is five digits: approximate,
/// no-map, combination, scenario, choice list.
pub fn parse_gem_with(text: &str, options: &GemOptions) -> Result<Vec<GemEntry>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 3 {
            return Err(IngestError::MalformedLine(line_no));
        }
        let flags = fields[2].as_bytes();
        if flags.len() != 5 || !flags.iter().all(u8::is_ascii_digit) {
            return Err(IngestError::MalformedFlags(line_no));
        }
        let digit = |k: usize| flags[k] - b'0';
        let boolean = |k: usize| match digit(k) {
            0 => Ok(false),
            1 => Ok(true),
            d => Err(IngestError::InvalidEntry {
                line: line_no,
                message: format!("flag {} must be 0 or 1, got {d}", k + 1),
            }),
        };
        let invalid = |message: &str| IngestError::InvalidEntry {
            line: line_no,
            message: message.to_string(),
        };
        let no_map = boolean(1)?;
        let placeholder = options.placeholders.iter().find(|p| p.as_str() == fields[1]);
        let target_code = match (no_map, placeholder) {
            (true, Some(p)) => p.clone(),
            (true, None) => return Err(invalid("no-map row must target a placeholder")),
            (false, Some(_)) => return Err(invalid("placeholder target on a mapped row")),
            (false, None) => codes::normalize(fields[1]),
        };
        let entry = GemEntry {
            source_code: codes::normalize(fields[0]),
            target_code,
            approximate: boolean(0)?,
            no_map,
            combination: boolean(2)?,
            scenario: digit(3),
            choice_list: digit(4),
        };
        if entry.source_code.is_empty() {
            return Err(IngestError::MalformedLine(line_no));
        }
        if !entry.combination && (entry.scenario != 0 || entry.choice_list != 0) {
            return Err(invalid(
                "scenario and choice list must be 0 without the combination flag",
            ));
        }
        out.push(entry);
    }
    Ok(out)
}
