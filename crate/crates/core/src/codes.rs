//! Code normalization and display forms for ICD-9-CM and ICD-10-CM.

/// Strips dots and whitespace and uppercases.
///
/// Idempotent: `normalize(normalize(c)) == normalize(c)`.
pub fn normalize(code: &str) -> String {
    code.chars()
        .filter(|c| *c != '.' && !c.is_whitespace())
        .flat_map(char::to_uppercase)
        .collect()
}

/// Dotted ICD-9-CM diagnosis form. E-codes take the dot after the fourth
/// character, everything else after the third.
pub fn icd9_display(code: &str) -> String {
    let code = normalize(code);
    let split = if code.starts_with('E') { 4 } else { 3 };
    insert_dot(&code, split)
}

/// Dotted ICD-10-CM form: dot after the third character.
pub fn icd10_display(code: &str) -> String {
    insert_dot(&normalize(code), 3)
}

fn insert_dot(code: &str, at: usize) -> String {
    if code.chars().count() > at {
        let (head, tail) = code.split_at(code.char_indices().nth(at).map(|(i, _)| i).unwrap());
        format!("{head}.{tail}")
    } else {
        code.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn display_forms() {
        assert_eq!(icd9_display("5849"), "584.9");
        assert_eq!(icd9_display("586"), "586");
        assert_eq!(icd9_display("25000"), "250.00");
        assert_eq!(icd9_display("E8889"), "E888.9");
        assert_eq!(icd9_display("E888"), "E888");
        assert_eq!(icd9_display("V5811"), "V58.11");
        assert_eq!(icd10_display("N179"), "N17.9");
        assert_eq!(icd10_display("W19XXXA"), "W19.XXXA");
        assert_eq!(icd10_display("I10"), "I10");
    }

    #[test]
    fn normalize_strips_and_uppercases() {
        assert_eq!(normalize(" n17.9 "), "N179");
        assert_eq!(normalize("584.9"), "5849");
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(code in "[a-zA-Z0-9. ]{0,10}") {
            let once = normalize(&code);
            prop_assert_eq!(normalize(&once), once.clone());
            prop_assert!(!once.contains('.'));
        }

        #[test]
        fn display_differs_only_by_dot(code in "[A-Z0-9]{1,7}") {
            prop_assert_eq!(normalize(&icd10_display(&code)), code.clone());
            prop_assert_eq!(normalize(&icd9_display(&code)), code);
        }
    }
}
