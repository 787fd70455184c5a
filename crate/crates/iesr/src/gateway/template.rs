//! Prompt templates with `{slot}` placeholders. `{{` and `}}` escape literal
//! braces. Required slots are derived from the body at registration, so a
//! template can never render with a marker left in.

use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("unknown template: {0}")]
    UnknownTemplate(String),
    #[error("template {template}: missing slot {slot}")]
    MissingSlot { template: String, slot: String },
    #[error("template {template}: unterminated slot marker")]
    Unterminated { template: String },
    #[error("template {template}: empty slot name")]
    EmptySlot { template: String },
}

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub id: String,
    pub body: String,
    pub required_slots: BTreeSet<String>,
}

impl PromptTemplate {
    pub fn new(id: &str, body: &str) -> Result<PromptTemplate, TemplateError> {
        let required_slots = scan_slots(id, body)?;
        Ok(PromptTemplate { id: id.to_string(), body: body.to_string(), required_slots })
    }

    pub fn render(&self, slots: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        for name in &self.required_slots {
            if !slots.contains_key(name) {
                return Err(TemplateError::MissingSlot {
                    template: self.id.clone(),
                    slot: name.clone(),
                });
            }
        }
        let mut out = String::with_capacity(self.body.len());
        let mut chars = self.body.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '{' if chars.peek() == Some(&'{') => {
                    chars.next();
                    out.push('{');
                }
                '}' if chars.peek() == Some(&'}') => {
                    chars.next();
                    out.push('}');
                }
                '{' => {
                    let mut name = String::new();
                    for c in chars.by_ref() {
                        if c == '}' {
                            break;
                        }
                        name.push(c);
                    }
                    // scan_slots already validated the body, so the slot is bound
                    out.push_str(&slots[&name]);
                }
                c => out.push(c),
            }
        }
        Ok(out)
    }
}

fn scan_slots(id: &str, body: &str) -> Result<BTreeSet<String>, TemplateError> {
    let mut slots = BTreeSet::new();
    let mut chars = body.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
            }
            '{' => {
                let mut name = String::new();
                let mut closed = false;
                for c in chars.by_ref() {
                    if c == '}' {
                        closed = true;
                        break;
                    }
                    name.push(c);
                }
                if !closed {
                    return Err(TemplateError::Unterminated { template: id.to_string() });
                }
                if name.is_empty() {
                    return Err(TemplateError::EmptySlot { template: id.to_string() });
                }
                slots.insert(name);
            }
            _ => {}
        }
    }
    Ok(slots)
}

#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, PromptTemplate>,
}

impl TemplateRegistry {
    pub fn empty() -> TemplateRegistry {
        TemplateRegistry { templates: BTreeMap::new() }
    }

    pub fn insert(&mut self, template: PromptTemplate) {
        self.templates.insert(template.id.clone(), template);
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, TemplateError> {
        self.templates.get(id).ok_or_else(|| TemplateError::UnknownTemplate(id.to_string()))
    }

    pub fn render(
        &self,
        id: &str,
        slots: &BTreeMap<String, String>,
    ) -> Result<String, TemplateError> {
        self.get(id)?.render(slots)
    }

    /// The built-in template set, one per pipeline role.
    pub fn builtin() -> TemplateRegistry {
        let mut reg = TemplateRegistry::empty();
        for (id, body) in BUILTIN_TEMPLATES {
            reg.insert(PromptTemplate::new(id, body).expect("builtin template must parse"));
        }
        reg
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}

pub const TPL_UNDERSTANDING: &str = "information-understanding";
pub const TPL_EQUATION: &str = "equation-explain";
pub const TPL_SCHEMA_SELECTION: &str = "schema-selection";
pub const TPL_IDENTIFY_COLUMN: &str = "identify-column";
pub const TPL_ENTITY_EXTRACTION: &str = "entity-extraction";
pub const TPL_SQL_GENERATION: &str = "sql-generation";
pub const TPL_SQL_REVISION: &str = "sql-revision";
pub const TPL_DISCRIMINATOR: &str = "discriminator-completion";

const BUILTIN_TEMPLATES: &[(&str, &str)] = &[
    (
        TPL_UNDERSTANDING,
        "You are an information extraction assistant for text-to-SQL.\n\
         Read the question and the database schema, then emit one block per line\n\
         using exactly these labels:\n\
         INTENT: <one-line goal>\n\
         RATIONALE: <why the listed evidence answers the question>\n\
         ENTITIES: <semicolon-separated surface forms, optional =table.column binding>\n\
         RELATIONS: <semicolon-separated entries: subject | predicate | object [| unit=u] [| formula=f]>\n\
         NUMBERS: <semicolon-separated numeric literals with their source phrase in parentheses>\n\
         UNITS: <semicolon-separated unit symbols with :dimension tag when known>\n\
         PATTERNS: <semicolon-separated table.column hints>\n\
         Keep every plausible hypothesis; do not prune.\n\n\
         Schema:\n{schema}\n\nQuestion: {question}\n",
    ),
    (
        TPL_EQUATION,
        "Explain the quantitative relationships needed to answer the question.\n\
         List each governing equation or derivation step on its own line.\n\n\
         Question: {question}\n\
         Extracted analysis:\n{state}\n",
    ),
    (
        TPL_SCHEMA_SELECTION,
        "Choose the tables needed to answer the question.\n\
         Reply with a single line of the form\n\
         TABLES: name1, name2, ...\n\n\
         Schema:\n{schema}\n\n\
         Question: {question}\n\
         Analysis so far:\n{context}\n",
    ),
    (
        TPL_IDENTIFY_COLUMN,
        "Identify the columns relevant to the question, restricted to the chosen\n\
         tables. Reply with a single line of the form\n\
         COLUMNS: table.column, table.column, ...\n\n\
         Schema:\n{schema}\n\n\
         Question: {question}\n\
         Chosen tables: {tables}\n",
    ),
    (
        TPL_ENTITY_EXTRACTION,
        "List the literal values and entities the SQL will need to filter on,\n\
         one per line as value -> table.column.\n\n\
         Schema:\n{schema}\n\n\
         Question: {question}\n",
    ),
    (
        TPL_SQL_GENERATION,
        "Write one SQLite query answering the question. Use only the given\n\
         schema. Reply with the query in a fenced block:\n\
         ```sql\n\
         SELECT ...\n\
         ```\n\n\
         Schema:\n{schema}\n\n\
         Question: {question}\n\
         Reasoning so far:\n{context}\n",
    ),
    (
        TPL_SQL_REVISION,
        "The query below may be wrong. Revise it so it answers the question on\n\
         the given schema. Reply with the full revised query in a fenced block:\n\
         ```sql\n\
         SELECT ...\n\
         ```\n\n\
         Schema:\n{schema}\n\n\
         Question: {question}\n\
         Current query:\n{sql}\n\
         Reasoning so far:\n{context}\n",
    ),
    (
        TPL_DISCRIMINATOR,
        "You are verifying another model's reasoning. The steps below are the\n\
         beginning of a solution; the remaining steps were removed. Complete\n\
         the reasoning yourself and finish with the final query in a fenced\n\
         block:\n\
         ```sql\n\
         SELECT ...\n\
         ```\n\n\
         Schema:\n{schema}\n\n\
         Question: {question}\n\
         Partial reasoning:\n{prefix}\n",
    ),
];

#[cfg(test)]
mod tests {
    use super::*;

    fn slots(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn renders_by_substitution() {
        let t = PromptTemplate::new("t", "x={q}").unwrap();
        assert_eq!(t.render(&slots(&[("q", "hi")])).unwrap(), "x=hi");
    }

    #[test]
    fn missing_slot_names_the_slot() {
        let t = PromptTemplate::new("t", "x={q} y={r}").unwrap();
        let err = t.render(&slots(&[("q", "hi")])).unwrap_err();
        assert_eq!(
            err,
            TemplateError::MissingSlot { template: "t".into(), slot: "r".into() }
        );
    }

    #[test]
    fn rendering_is_deterministic() {
        let t = PromptTemplate::new("t", "a={x} b={y}").unwrap();
        let s = slots(&[("x", "1"), ("y", "2")]);
        assert_eq!(t.render(&s).unwrap(), t.render(&s).unwrap());
    }

    #[test]
    fn braces_escape() {
        let t = PromptTemplate::new("t", "json {{\"k\": {v}}}").unwrap();
        assert_eq!(t.render(&slots(&[("v", "3")])).unwrap(), "json {\"k\": 3}");
        assert_eq!(t.required_slots.len(), 1);
    }

    #[test]
    fn unterminated_marker_rejected() {
        assert!(matches!(
            PromptTemplate::new("t", "x={q"),
            Err(TemplateError::Unterminated { .. })
        ));
    }

    #[test]
    fn builtin_set_is_complete_and_renderable() {
        let reg = TemplateRegistry::builtin();
        let ids: Vec<&str> = reg.ids().collect();
        for id in [
            TPL_UNDERSTANDING,
            TPL_EQUATION,
            TPL_SCHEMA_SELECTION,
            TPL_IDENTIFY_COLUMN,
            TPL_ENTITY_EXTRACTION,
            TPL_SQL_GENERATION,
            TPL_SQL_REVISION,
            TPL_DISCRIMINATOR,
        ] {
            assert!(ids.contains(&id), "missing builtin {id}");
            let t = reg.get(id).unwrap();
            let bound: BTreeMap<String, String> =
                t.required_slots.iter().map(|s| (s.clone(), "x".to_string())).collect();
            let rendered = t.render(&bound).unwrap();
            assert!(!rendered.contains('{') || rendered.contains("{\""));
        }
        assert_eq!(ids.len(), 8);
    }

    #[test]
    fn unknown_template_errors() {
        let reg = TemplateRegistry::builtin();
        assert_eq!(
            reg.render("nope", &BTreeMap::new()).unwrap_err(),
            TemplateError::UnknownTemplate("nope".into())
        );
    }
}
