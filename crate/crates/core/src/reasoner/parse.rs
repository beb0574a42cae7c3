//! Extracting a mapping level letter from free-text replies.

use std::sync::LazyLock;

use regex::Regex;

use super::MappingLevel;

static MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:mapping\s+level|level|answer)\s*(?:is|=|:|-)?\s*\(?\**([abc])\b").unwrap());
static UPPER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([ABC])\b").unwrap());
static LOWER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([abc])\b").unwrap());

/// Finds the level in a reply. Tries, in order: an explicit "level X" or
/// "answer: X" marker, a standalone uppercase A/B/C, a standalone
/// lowercase a/b/c. Within the first tier that matches, takes the first
/// occurrence, or the last when `last` is set (reason-first replies).
pub fn parse_level(text: &str, last: bool) -> Option<MappingLevel> {
    for re in [&*MARKER, &*UPPER, &*LOWER] {
        let mut found = re.captures_iter(text).map(|c| c.get(1).unwrap().as_str());
        let hit = if last { found.last() } else { found.next() };
        if let Some(letter) = hit {
            return letter.parse().ok();
        }
    }
    None
}
