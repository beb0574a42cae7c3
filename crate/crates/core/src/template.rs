//! `{name}` placeholder substitution for prompt templates.

/// Replaces `{name}` placeholders in a single pass; substituted values are
/// never rescanned, and unknown `{...}` spans are left untouched.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let name = &after[..close];
            values.iter().find(|(k, _)| *k == name).map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::render;

    #[test]
    fn substitutes_once() {
        let out = render("a {x} b {y} {unknown} { ?s ?p ?o }", &[("x", "{y}"), ("y", "Y")]);
        assert_eq!(out, "a {y} b Y {unknown} { ?s ?p ?o }");
    }
}
