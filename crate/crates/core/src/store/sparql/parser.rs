use std::collections::HashMap;

use super::{
    Filter, GraphScope, GroupPattern, Projection, QueryAst, QueryError, QueryForm, TermPattern, TriplePattern,
};
use crate::store::Term;
use crate::vocab::{RDF_TYPE, XSD_BOOLEAN, XSD_INTEGER};

const XSD_DECIMAL: &str = "http://www.w3.org/2001/XMLSchema#decimal";

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Iri(String),
    PName(String, String),
    Var(String),
    Str(String),
    LangTag(String),
    Caret2,
    Number(String),
    Word(String),
    Blank(String),
    Punct(&'static str),
}

fn syntax<T>(position: usize, message: impl Into<String>) -> Result<T, QueryError> {
    Err(QueryError::SparqlSyntax {
        position,
        message: message.into(),
    })
}

fn unsupported<T>(name: impl Into<String>) -> Result<T, QueryError> {
    Err(QueryError::UnsupportedFeature(name.into()))
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, QueryError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    let word_char = |c: char| c.is_alphanumeric() || c == '_' || c == '-';
    while i < bytes.len() {
        let c = src[i..].chars().next().unwrap();
        let start = i;
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if c == '#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        match c {
            '<' => {
                let rest = &src[i + 1..];
                let end =
                    rest.find(|c: char| c == '>' || c.is_whitespace() || c == '<' || c == '"' || c == '{' || c == '}');
                match end {
                    Some(e) if rest[e..].starts_with('>') => {
                        toks.push((Tok::Iri(rest[..e].to_string()), start));
                        i += e + 2;
                    }
                    _ => {
                        let op = if rest.starts_with('=') { "<=" } else { "<" };
                        toks.push((Tok::Punct(op), start));
                        i += op.len();
                    }
                }
            }
            '?' | '$' => {
                let name: String = src[i + 1..]
                    .chars()
                    .take_while(|c| c.is_alphanumeric() || *c == '_')
                    .collect();
                if name.is_empty() {
                    return syntax(start, "empty variable name");
                }
                i += 1 + name.len();
                toks.push((Tok::Var(name), start));
            }
            '"' | '\'' => {
                let (s, len) = read_string(&src[i..], start)?;
                toks.push((Tok::Str(s), start));
                i += len;
            }
            '@' => {
                let tag: String = src[i + 1..]
                    .chars()
                    .take_while(|c| c.is_ascii_alphanumeric() || *c == '-')
                    .collect();
                if tag.is_empty() {
                    return syntax(start, "empty language tag");
                }
                i += 1 + tag.len();
                toks.push((Tok::LangTag(tag), start));
            }
            '^' if src[i..].starts_with("^^") => {
                toks.push((Tok::Caret2, start));
                i += 2;
            }
            '_' if src[i..].starts_with("_:") => {
                let label: String = src[i + 2..].chars().take_while(|c| word_char(*c)).collect();
                i += 2 + label.len();
                toks.push((Tok::Blank(label), start));
            }
            c if c.is_ascii_digit() => {
                let num: String = src[i..]
                    .chars()
                    .take_while(|c| c.is_ascii_digit() || *c == '.')
                    .collect();
                let num = num.trim_end_matches('.').to_string();
                i += num.len();
                toks.push((Tok::Number(num), start));
            }
            c if c.is_alphabetic() || c == ':' => {
                let prefix: String = src[i..].chars().take_while(|c| word_char(*c) || *c == '.').collect();
                let prefix = prefix.trim_end_matches('.').to_string();
                let after = i + prefix.len();
                if src[after..].starts_with(':') {
                    let local: String = src[after + 1..]
                        .chars()
                        .take_while(|c| word_char(*c) || *c == '.' || *c == ':' || *c == '%')
                        .collect();
                    let local = local.trim_end_matches('.').to_string();
                    i = after + 1 + local.len();
                    toks.push((Tok::PName(prefix, local), start));
                } else if prefix.is_empty() {
                    return syntax(start, format!("unexpected character {c:?}"));
                } else {
                    i = after;
                    toks.push((Tok::Word(prefix), start));
                }
            }
            _ => {
                const PUNCT: [&str; 18] = [
                    "&&", "||", "!=", ">=", "{", "}", "(", ")", ".", ";", ",", "*", "=", "!", ">", "/", "|", "^",
                ];
                match PUNCT.iter().find(|p| src[i..].starts_with(**p)) {
                    Some(p) => {
                        toks.push((Tok::Punct(p), start));
                        i += p.len();
                    }
                    None => match c {
                        '+' | '-' => {
                            toks.push((Tok::Punct(if c == '+' { "+" } else { "-" }), start));
                            i += 1;
                        }
                        _ => return syntax(start, format!("unexpected character {c:?}")),
                    },
                }
            }
        }
    }
    Ok(toks)
}

fn read_string(src: &str, pos: usize) -> Result<(String, usize), QueryError> {
    let quote = src.chars().next().unwrap();
    let long: String = std::iter::repeat_n(quote, 3).collect();
    let (delim, mut i) = if src.starts_with(&long) {
        (long.as_str(), 3)
    } else {
        (&src[..1], 1)
    };
    let mut out = String::new();
    loop {
        let rest = &src[i..];
        if rest.starts_with(delim) {
            return Ok((out, i + delim.len()));
        }
        let Some(c) = rest.chars().next() else {
            return syntax(pos, "unterminated string");
        };
        if c == '\n' && delim.len() == 1 {
            return syntax(pos, "newline in string literal");
        }
        i += c.len_utf8();
        if c == '\\' {
            let Some(e) = src[i..].chars().next() else {
                return syntax(pos, "unterminated escape");
            };
            i += e.len_utf8();
            out.push(match e {
                't' => '\t',
                'n' => '\n',
                'r' => '\r',
                'b' => '\u{8}',
                'f' => '\u{c}',
                '"' => '"',
                '\'' => '\'',
                '\\' => '\\',
                other => return syntax(pos, format!("invalid escape \\{other}")),
            });
        } else {
            out.push(c);
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    i: usize,
    end: usize,
    prefixes: HashMap<String, String>,
    var_pos: HashMap<String, usize>,
}

/// Parses query text into a [`QueryAst`].
pub fn parse(text: &str) -> Result<QueryAst, QueryError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        i: 0,
        end: text.len(),
        prefixes: HashMap::new(),
        var_pos: HashMap::new(),
    };
    p.query()
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.i).map_or(self.end, |(_, p)| *p)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.i).map(|(t, _)| t.clone());
        self.i += 1;
        t
    }

    fn is_word(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_word(&mut self, kw: &str) -> bool {
        let hit = self.is_word(kw);
        if hit {
            self.i += 1;
        }
        hit
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Tok::Punct(q)) if *q == p)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        let hit = self.is_punct(p);
        if hit {
            self.i += 1;
        }
        hit
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), QueryError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            let found = self.describe();
            syntax(self.pos(), format!("expected '{p}', found {found}"))
        }
    }

    fn describe(&self) -> String {
        match self.peek() {
            None => "end of query".into(),
            Some(t) => format!("{t:?}"),
        }
    }

    fn note_var(&mut self, name: &str, pos: usize) {
        self.var_pos.entry(name.to_string()).or_insert(pos);
    }

    fn query(&mut self) -> Result<QueryAst, QueryError> {
        loop {
            if self.eat_word("PREFIX") {
                let pos = self.pos();
                let Some(Tok::PName(prefix, local)) = self.bump() else {
                    return syntax(pos, "expected prefix name after PREFIX");
                };
                if !local.is_empty() {
                    return syntax(pos, "prefix declaration must end with ':'");
                }
                let pos = self.pos();
                let Some(Tok::Iri(iri)) = self.bump() else {
                    return syntax(pos, "expected IRI in PREFIX declaration");
                };
                self.prefixes.insert(prefix, iri);
            } else if self.is_word("BASE") {
                return unsupported("BASE");
            } else {
                break;
            }
        }

        let form = if self.eat_word("SELECT") {
            let distinct = self.eat_word("DISTINCT");
            if self.is_word("REDUCED") {
                return unsupported("REDUCED");
            }
            let projection = if self.eat_punct("*") {
                Projection::All
            } else {
                let mut vars = Vec::new();
                loop {
                    match self.peek() {
                        Some(Tok::Var(v)) => {
                            let v = v.clone();
                            if !vars.contains(&v) {
                                vars.push(v);
                            }
                            self.i += 1;
                        }
                        Some(Tok::Punct("(")) => return unsupported("projection expression"),
                        _ => break,
                    }
                }
                if vars.is_empty() {
                    return syntax(self.pos(), "SELECT needs '*' or at least one variable");
                }
                Projection::Vars(vars)
            };
            QueryForm::Select { projection, distinct }
        } else if self.eat_word("ASK") {
            QueryForm::Ask
        } else {
            for kw in [
                "CONSTRUCT",
                "DESCRIBE",
                "INSERT",
                "DELETE",
                "LOAD",
                "CLEAR",
                "DROP",
                "CREATE",
            ] {
                if self.is_word(kw) {
                    return unsupported(kw);
                }
            }
            let found = self.describe();
            return syntax(self.pos(), format!("expected SELECT or ASK, found {found}"));
        };

        if self.is_word("FROM") {
            return unsupported("FROM");
        }
        self.eat_word("WHERE");
        let mut patterns = Vec::new();
        let mut filters = Vec::new();
        self.group(&mut patterns, &mut filters, true)?;

        let mut limit = None;
        loop {
            for kw in ["ORDER", "GROUP", "HAVING", "OFFSET", "VALUES"] {
                if self.is_word(kw) {
                    return unsupported(kw);
                }
            }
            if self.eat_word("LIMIT") {
                let pos = self.pos();
                match self.bump() {
                    Some(Tok::Number(n)) if !n.contains('.') => {
                        let n: usize = n.parse().map_err(|_| QueryError::SparqlSyntax {
                            position: pos,
                            message: "LIMIT out of range".into(),
                        })?;
                        if n == 0 {
                            return syntax(pos, "LIMIT must be positive");
                        }
                        limit = Some(n);
                    }
                    _ => return syntax(pos, "expected integer after LIMIT"),
                }
            } else {
                break;
            }
        }
        if self.peek().is_some() {
            let found = self.describe();
            return syntax(self.pos(), format!("unexpected trailing {found}"));
        }

        let ast = QueryAst {
            form,
            patterns,
            filters,
            limit,
        };
        self.check_scoping(&ast)?;
        Ok(ast)
    }

    fn check_scoping(&self, ast: &QueryAst) -> Result<(), QueryError> {
        let bound = ast.pattern_vars();
        let mut needed: Vec<&str> = Vec::new();
        if let QueryForm::Select {
            projection: Projection::Vars(vars),
            ..
        } = &ast.form
        {
            needed.extend(vars.iter().map(String::as_str));
        }
        for f in &ast.filters {
            needed.extend(f.vars());
        }
        for v in needed {
            if !bound.iter().any(|b| b == v) {
                let pos = self.var_pos.get(v).copied().unwrap_or(0);
                return syntax(pos, format!("variable ?{v} does not occur in any triple pattern"));
            }
        }
        Ok(())
    }

    /// Parses `{ ... }`. Only the top-level group may contain `GRAPH` blocks.
    fn group(
        &mut self,
        patterns: &mut Vec<GroupPattern>,
        filters: &mut Vec<Filter>,
        top: bool,
    ) -> Result<(), QueryError> {
        self.expect_punct("{")?;
        let mut current: Vec<TriplePattern> = Vec::new();
        loop {
            if self.eat_punct("}") {
                break;
            }
            if self.eat_punct(".") {
                continue;
            }
            for kw in ["OPTIONAL", "UNION", "MINUS", "BIND", "VALUES", "SERVICE", "SELECT"] {
                if self.is_word(kw) {
                    return unsupported(kw);
                }
            }
            if self.eat_word("FILTER") {
                self.filter(filters)?;
                continue;
            }
            if self.is_word("GRAPH") {
                if !top {
                    return unsupported("nested GRAPH");
                }
                self.i += 1;
                let pos = self.pos();
                let scope = match self.bump() {
                    Some(Tok::Var(v)) => {
                        self.note_var(&v, pos);
                        GraphScope::Var(v)
                    }
                    Some(Tok::Iri(iri)) => GraphScope::Named(iri),
                    Some(Tok::PName(p, l)) => GraphScope::Named(self.expand(&p, &l, pos)?),
                    _ => return syntax(pos, "expected IRI or variable after GRAPH"),
                };
                if !current.is_empty() {
                    patterns.push(GroupPattern {
                        scope: GraphScope::Default,
                        triples: std::mem::take(&mut current),
                    });
                }
                let mut inner = Vec::new();
                self.group(&mut inner, filters, false)?;
                let triples = inner.pop().map(|g| g.triples).unwrap_or_default();
                patterns.push(GroupPattern { scope, triples });
                continue;
            }
            if self.is_punct("{") {
                return unsupported("nested group pattern");
            }
            if self.peek().is_none() {
                return syntax(self.pos(), "unexpected end of query inside group");
            }
            self.triples_same_subject(&mut current)?;
            let keyword_follows = [
                "FILTER", "GRAPH", "OPTIONAL", "UNION", "MINUS", "BIND", "VALUES", "SERVICE",
            ]
            .iter()
            .any(|kw| self.is_word(kw));
            if !self.eat_punct(".") && !self.is_punct("}") && !keyword_follows && !self.is_punct("{") {
                let found = self.describe();
                return syntax(self.pos(), format!("expected '.' or '}}', found {found}"));
            }
        }
        if !top || !current.is_empty() {
            patterns.push(GroupPattern {
                scope: GraphScope::Default,
                triples: current,
            });
        }
        Ok(())
    }

    fn triples_same_subject(&mut self, out: &mut Vec<TriplePattern>) -> Result<(), QueryError> {
        let subject = self.term_or_var(false)?;
        if let TermPattern::Const(Term::Literal { .. }) = subject {
            return syntax(self.pos(), "literal in subject position");
        }
        loop {
            let predicate = self.predicate()?;
            loop {
                let object = self.term_or_var(true)?;
                out.push(TriplePattern {
                    subject: subject.clone(),
                    predicate: predicate.clone(),
                    object,
                });
                if !self.eat_punct(",") {
                    break;
                }
            }
            if !self.eat_punct(";") {
                break;
            }
            while self.eat_punct(";") {}
            if self.is_punct(".") || self.is_punct("}") {
                break;
            }
        }
        Ok(())
    }

    fn predicate(&mut self) -> Result<TermPattern, QueryError> {
        let pos = self.pos();
        let p = if self.eat_word("a") {
            TermPattern::Const(Term::iri(RDF_TYPE))
        } else {
            match self.term_or_var(false)? {
                t @ (TermPattern::Var(_) | TermPattern::Const(Term::Iri(_))) => t,
                _ => return syntax(pos, "predicate must be an IRI or variable"),
            }
        };
        for path in ["/", "|", "^", "*", "+"] {
            if self.is_punct(path) {
                return unsupported("property path");
            }
        }
        Ok(p)
    }

    fn expand(&self, prefix: &str, local: &str, pos: usize) -> Result<String, QueryError> {
        match self.prefixes.get(prefix) {
            Some(ns) => Ok(format!("{ns}{local}")),
            None => syntax(pos, format!("undeclared prefix '{prefix}:'")),
        }
    }

    fn iri_like(&mut self) -> Result<Option<String>, QueryError> {
        let pos = self.pos();
        match self.peek().cloned() {
            Some(Tok::Iri(iri)) => {
                self.i += 1;
                Ok(Some(iri))
            }
            Some(Tok::PName(p, l)) => {
                self.i += 1;
                self.expand(&p, &l, pos).map(Some)
            }
            _ => Ok(None),
        }
    }

    fn term_or_var(&mut self, allow_literal: bool) -> Result<TermPattern, QueryError> {
        let pos = self.pos();
        if let Some(iri) = self.iri_like()? {
            return Ok(TermPattern::Const(Term::Iri(iri)));
        }
        match self.bump() {
            Some(Tok::Var(v)) => {
                self.note_var(&v, pos);
                Ok(TermPattern::Var(v))
            }
            Some(Tok::Blank(_)) => unsupported("blank node in query pattern"),
            Some(Tok::Str(s)) if allow_literal => Ok(TermPattern::Const(self.literal_suffix(s)?)),
            Some(Tok::Number(n)) if allow_literal => Ok(TermPattern::Const(number(&n))),
            Some(Tok::Word(w)) if allow_literal && (w == "true" || w == "false") => {
                Ok(TermPattern::Const(Term::typed(w, XSD_BOOLEAN)))
            }
            Some(t) => syntax(pos, format!("unexpected {t:?}")),
            None => syntax(pos, "unexpected end of query"),
        }
    }

    fn literal_suffix(&mut self, lexical: String) -> Result<Term, QueryError> {
        match self.peek().cloned() {
            Some(Tok::LangTag(tag)) => {
                self.i += 1;
                Ok(Term::lang_literal(lexical, tag))
            }
            Some(Tok::Caret2) => {
                self.i += 1;
                let pos = self.pos();
                match self.iri_like()? {
                    Some(dt) => Ok(Term::typed(lexical, dt)),
                    None => syntax(pos, "expected datatype IRI after ^^"),
                }
            }
            _ => Ok(Term::literal(lexical)),
        }
    }

    fn filter(&mut self, filters: &mut Vec<Filter>) -> Result<(), QueryError> {
        if self.eat_punct("(") {
            self.conjunction(filters)?;
            self.expect_punct(")")
        } else {
            self.call(filters)
        }
    }

    fn conjunction(&mut self, filters: &mut Vec<Filter>) -> Result<(), QueryError> {
        loop {
            self.atom(filters)?;
            if self.is_punct("||") {
                return unsupported("||");
            }
            if !self.eat_punct("&&") {
                return Ok(());
            }
        }
    }

    fn atom(&mut self, filters: &mut Vec<Filter>) -> Result<(), QueryError> {
        if self.eat_punct("(") {
            self.conjunction(filters)?;
            return self.expect_punct(")");
        }
        if self.is_punct("!") {
            return unsupported("!");
        }
        if matches!(self.peek(), Some(Tok::Word(w)) if !(w == "true" || w == "false")) {
            return self.call(filters);
        }
        let left = self.operand()?;
        for op in ["!=", "<", "<=", ">", ">="] {
            if self.is_punct(op) {
                return unsupported(op);
            }
        }
        self.expect_punct("=")?;
        let right = self.operand()?;
        filters.push(Filter::Eq(left, right));
        Ok(())
    }

    fn operand(&mut self) -> Result<TermPattern, QueryError> {
        if self.eat_word("STR") {
            self.expect_punct("(")?;
            let inner = self.operand()?;
            self.expect_punct(")")?;
            return Ok(match inner {
                TermPattern::Const(t) if !t.is_literal() => TermPattern::Const(Term::literal(t.string_value())),
                other => other,
            });
        }
        if let Some(Tok::Word(w)) = self.peek() {
            if !(w == "true" || w == "false") {
                return unsupported(w.to_uppercase());
            }
        }
        self.term_or_var(true)
    }

    fn call(&mut self, filters: &mut Vec<Filter>) -> Result<(), QueryError> {
        let pos = self.pos();
        let name = match self.bump() {
            Some(Tok::Word(w)) => w.to_uppercase(),
            _ => return syntax(pos, "expected filter expression"),
        };
        match name.as_str() {
            "CONTAINS" => {
                self.expect_punct("(")?;
                let a = self.operand()?;
                self.expect_punct(",")?;
                let b = self.operand()?;
                self.expect_punct(")")?;
                filters.push(Filter::StrContains(a, b));
                Ok(())
            }
            "REGEX" => {
                self.expect_punct("(")?;
                let target = self.operand()?;
                self.expect_punct(",")?;
                let pattern = self.string_arg()?;
                let flags = if self.eat_punct(",") {
                    self.string_arg()?
                } else {
                    String::new()
                };
                self.expect_punct(")")?;
                if let Some(bad) = flags.chars().find(|c| !"ismx".contains(*c)) {
                    return syntax(pos, format!("unsupported regex flag {bad:?}"));
                }
                if let Err(e) = regex::Regex::new(&pattern) {
                    return syntax(pos, format!("invalid regex: {e}"));
                }
                filters.push(Filter::Regex { target, pattern, flags });
                Ok(())
            }
            other => unsupported(other),
        }
    }

    fn string_arg(&mut self) -> Result<String, QueryError> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Str(s)) => Ok(s),
            _ => syntax(pos, "expected string literal"),
        }
    }
}

fn number(n: &str) -> Term {
    if n.contains('.') {
        Term::typed(n, XSD_DECIMAL)
    } else {
        Term::typed(n, XSD_INTEGER)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_lookup_parses() {
        let ast = parse(
            "SELECT ?l WHERE { GRAPH <urn:ontorag:graph:icd9cm> { ?c <urn:ontorag:p:code> \"5849\" . ?c <urn:ontorag:p:label> ?l } }",
        )
        .unwrap();
        assert_eq!(ast.patterns.len(), 1);
        assert_eq!(
            ast.patterns[0].scope,
            GraphScope::Named("urn:ontorag:graph:icd9cm".into())
        );
        assert_eq!(ast.patterns[0].triples.len(), 2);
        assert_eq!(ast.columns(), vec!["l"]);
    }

    #[test]
    fn truncated_query_is_syntax_error() {
        assert!(matches!(
            parse("SELECT ?x WHERE { ?x"),
            Err(QueryError::SparqlSyntax { .. })
        ));
    }

    #[test]
    fn construct_is_unsupported() {
        assert_eq!(
            parse("CONSTRUCT { ?s ?p ?o } WHERE { ?s ?p ?o }"),
            Err(QueryError::UnsupportedFeature("CONSTRUCT".into()))
        );
    }

    #[test]
    fn unsupported_constructs() {
        for (q, name) in [
            ("SELECT * WHERE { ?s ?p ?o OPTIONAL { ?s ?q ?r } }", "OPTIONAL"),
            (
                "SELECT * WHERE { { ?s ?p ?o } UNION { ?s ?q ?o } }",
                "nested group pattern",
            ),
            ("SELECT * WHERE { ?s <urn:a>/<urn:b> ?o }", "property path"),
            ("SELECT * WHERE { ?s ?p ?o } ORDER BY ?s", "ORDER"),
            ("SELECT * WHERE { ?s ?p ?o FILTER(?o != 1) }", "!="),
            ("SELECT * WHERE { ?s ?p ?o FILTER(LCASE(?o) = \"x\") }", "LCASE"),
            ("DESCRIBE <urn:x>", "DESCRIBE"),
        ] {
            assert_eq!(parse(q), Err(QueryError::UnsupportedFeature(name.into())), "{q}");
        }
    }

    #[test]
    fn prefixes_abbreviations_and_filters() {
        let ast = parse(
            "PREFIX p: <urn:ontorag:p:>\n\
             SELECT DISTINCT ?c ?l WHERE {\n\
               ?c p:code \"5849\" ; p:label ?l , ?l2 .\n\
               FILTER(CONTAINS(STR(?l), \"kidney\") && REGEX(?l2, \"^acute\", \"i\"))\n\
               FILTER (?c = <urn:x>)\n\
             } LIMIT 5",
        )
        .unwrap();
        let triples = &ast.patterns[0].triples;
        assert_eq!(triples.len(), 3);
        assert_eq!(
            triples[1].predicate,
            TermPattern::Const(Term::iri("urn:ontorag:p:label"))
        );
        assert_eq!(ast.filters.len(), 3);
        assert_eq!(ast.limit, Some(5));
        assert!(matches!(ast.form, QueryForm::Select { distinct: true, .. }));
    }

    #[test]
    fn literal_forms() {
        let ast = parse("ASK { ?s ?p 3 . ?s ?p true . ?s ?p \"x\"@en . ?s ?p \"y\"^^<urn:dt> . ?s a ?t }").unwrap();
        let objs: Vec<_> = ast.patterns[0].triples.iter().map(|t| t.object.clone()).collect();
        assert_eq!(objs[0], TermPattern::Const(Term::integer(3)));
        assert_eq!(objs[1], TermPattern::Const(Term::boolean(true)));
        assert_eq!(objs[2], TermPattern::Const(Term::lang_literal("x", "en")));
        assert_eq!(objs[3], TermPattern::Const(Term::typed("y", "urn:dt")));
        assert_eq!(
            ast.patterns[0].triples[4].predicate,
            TermPattern::Const(Term::iri(RDF_TYPE))
        );
    }

    #[test]
    fn scoping_errors() {
        assert!(matches!(
            parse("SELECT ?z WHERE { ?s ?p ?o }"),
            Err(QueryError::SparqlSyntax { .. })
        ));
        assert!(matches!(
            parse("SELECT ?s WHERE { ?s ?p ?o FILTER(?z = 1) }"),
            Err(QueryError::SparqlSyntax { .. })
        ));
        assert!(matches!(
            parse("SELECT ?s WHERE { ?s x:p ?o }"),
            Err(QueryError::SparqlSyntax { .. })
        ));
        assert!(matches!(
            parse("SELECT * WHERE { ?s ?p ?o } LIMIT 0"),
            Err(QueryError::SparqlSyntax { .. })
        ));
    }

    #[test]
    fn graph_variable_and_mixed_scopes() {
        let ast = parse("SELECT ?g ?s WHERE { ?s ?p ?o . GRAPH ?g { ?s ?p2 ?o2 } ?o ?p3 ?x }").unwrap();
        assert_eq!(ast.patterns.len(), 3);
        assert_eq!(ast.patterns[1].scope, GraphScope::Var("g".into()));
        assert_eq!(ast.pattern_vars(), vec!["s", "p", "o", "g", "p2", "o2", "p3", "x"]);
    }

    #[test]
    fn comments_and_keyword_case() {
        let ast = parse("# find things\nselect * where { ?s ?p ?o } # trailing\nlimit 1").unwrap();
        assert_eq!(ast.limit, Some(1));
    }
}
