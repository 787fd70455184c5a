//! The latent semantic state extracted from a question and the parser for
//! the extractor's labeled-block response format.
//!
//! Block grammar (one label per line, order free, all optional):
//!
//! ```text
//! INTENT: <text>
//! RATIONALE: <text>
//! ENTITIES: surface[=table.column]; surface; ...
//! RELATIONS: subject | predicate | object [| unit=u] [| formula=f]; ...
//! NUMBERS: 20 (over 20 km); 0.5 (in 0.5 h); ...
//! UNITS: km:length; h:time; usd; ...
//! PATTERNS: table.column; table.column; ...
//! ```
//!
//! Parsing is recall oriented: malformed fields are dropped with a warning,
//! never fatally. A response with no labels at all yields an empty state.

use crate::model::DatabaseSchema;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub surface: String,
    /// Optional `table.column` the extractor bound the surface form to.
    pub binding: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumberLiteral {
    pub value: f64,
    pub span: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitMention {
    pub symbol: String,
    pub dimension: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationHypothesis {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub implied_unit: Option<String>,
    pub implied_formula: Option<String>,
}

impl RelationHypothesis {
    /// Reflexive relations must say so: a `(reflexive)` suffix on the
    /// predicate permits subject = object.
    pub fn is_reflexive_marked(&self) -> bool {
        self.predicate.trim_end().ends_with("(reflexive)")
    }

    /// The text the lexical matcher tokenizes.
    pub fn text(&self) -> String {
        let mut s = format!("{} {} {}", self.subject, self.predicate, self.object);
        if let Some(f) = &self.implied_formula {
            s.push(' ');
            s.push_str(f);
        }
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SemanticState {
    pub intent: String,
    pub rationale: String,
    pub entities: Vec<Entity>,
    pub relations: Vec<RelationHypothesis>,
    pub numbers: Vec<NumberLiteral>,
    pub units: Vec<UnitMention>,
    pub patterns: Vec<String>,
    /// Parser warnings; hypotheses are dropped, never errors raised.
    pub warnings: Vec<String>,
    /// Set when extraction fell back to an empty state.
    pub fallback: bool,
}

impl SemanticState {
    pub fn is_empty(&self) -> bool {
        self.intent.is_empty()
            && self.entities.is_empty()
            && self.relations.is_empty()
            && self.numbers.is_empty()
            && self.units.is_empty()
            && self.patterns.is_empty()
    }

    fn has_entity(&self, surface: &str) -> bool {
        self.entities.iter().any(|e| e.surface.eq_ignore_ascii_case(surface))
    }
}

fn split_items(raw: &str) -> impl Iterator<Item = &str> {
    raw.split(';').map(str::trim).filter(|s| !s.is_empty())
}

fn schema_mentions(schema: &DatabaseSchema, name: &str) -> bool {
    let name = name.trim();
    if let Some((t, c)) = name.split_once('.') {
        return schema.table(t).map(|t| t.column(c).is_some()).unwrap_or(false);
    }
    schema.table(name).is_some()
        || schema.tables.iter().any(|t| t.column(name).is_some())
}

/// Parses the extractor's labeled block into a state. Fenced code markers
/// and prose outside labeled lines are ignored.
pub fn parse_semantic_state(response: &str, schema: &DatabaseSchema) -> SemanticState {
    let mut state = SemanticState::default();
    let mut saw_label = false;

    for line in response.lines() {
        let line = line.trim().trim_start_matches('`').trim();
        let Some((label, rest)) = line.split_once(':') else { continue };
        let rest = rest.trim();
        match label.trim().to_ascii_uppercase().as_str() {
            "INTENT" => {
                state.intent = rest.to_string();
                saw_label = true;
            }
            "RATIONALE" => {
                state.rationale = rest.to_string();
                saw_label = true;
            }
            "ENTITIES" => {
                saw_label = true;
                for item in split_items(rest) {
                    let (surface, binding) = match item.split_once('=') {
                        Some((s, b)) => (s.trim(), Some(b.trim().to_string())),
                        None => (item, None),
                    };
                    if surface.is_empty() {
                        state.warnings.push("dropped entity with empty surface".into());
                        continue;
                    }
                    state.entities.push(Entity { surface: surface.to_string(), binding });
                }
            }
            "RELATIONS" => {
                saw_label = true;
                for item in split_items(rest) {
                    match parse_relation(item) {
                        Some(rel) => {
                            if rel.subject.eq_ignore_ascii_case(&rel.object)
                                && !rel.is_reflexive_marked()
                            {
                                state.warnings.push(format!(
                                    "dropped relation with subject = object: {item}"
                                ));
                                continue;
                            }
                            state.relations.push(rel);
                        }
                        None => state
                            .warnings
                            .push(format!("dropped malformed relation: {item}")),
                    }
                }
            }
            "NUMBERS" => {
                saw_label = true;
                for item in split_items(rest) {
                    match parse_number(item) {
                        Some(n) => state.numbers.push(n),
                        None => state
                            .warnings
                            .push(format!("dropped malformed number: {item}")),
                    }
                }
            }
            "UNITS" => {
                saw_label = true;
                for item in split_items(rest) {
                    let (symbol, dimension) = match item.split_once(':') {
                        Some((s, d)) => (s.trim(), Some(d.trim().to_string())),
                        None => (item, None),
                    };
                    if symbol.is_empty() {
                        state.warnings.push("dropped unit with empty symbol".into());
                        continue;
                    }
                    state.units.push(UnitMention { symbol: symbol.to_string(), dimension });
                }
            }
            "PATTERNS" => {
                saw_label = true;
                for item in split_items(rest) {
                    state.patterns.push(item.to_string());
                }
            }
            _ => {}
        }
    }

    if !saw_label {
        state.fallback = true;
        state.warnings.push("extractor response had no labeled block".into());
        return state;
    }

    // Relations must reference known entities or schema names. Unknown
    // endpoints are adopted as inferred entities so the hypothesis survives.
    let relations = state.relations.clone();
    for rel in &relations {
        for endpoint in [&rel.subject, &rel.object] {
            if endpoint_known(&state, schema, endpoint) {
                continue;
            }
            state
                .warnings
                .push(format!("adopted relation endpoint as inferred entity: {endpoint}"));
            state.entities.push(Entity { surface: endpoint.clone(), binding: None });
        }
    }

    state
}

/// An endpoint is known when it is a literal, a declared entity, a schema
/// name, or a compound whose every word is one of those.
fn endpoint_known(state: &SemanticState, schema: &DatabaseSchema, endpoint: &str) -> bool {
    if endpoint.parse::<f64>().is_ok()
        || state.has_entity(endpoint)
        || schema_mentions(schema, endpoint)
    {
        return true;
    }
    let words: Vec<&str> = endpoint
        .split(|c: char| c.is_whitespace() || "+-*/^()".contains(c))
        .filter(|w| !w.is_empty())
        .collect();
    words.len() > 1
        && words.iter().all(|w| {
            w.parse::<f64>().is_ok() || state.has_entity(w) || schema_mentions(schema, w)
        })
}

fn parse_relation(item: &str) -> Option<RelationHypothesis> {
    let fields: Vec<&str> = item.split('|').map(str::trim).collect();
    if fields.len() < 3 || fields[..3].iter().any(|f| f.is_empty()) {
        return None;
    }
    let mut rel = RelationHypothesis {
        subject: fields[0].to_string(),
        predicate: fields[1].to_string(),
        object: fields[2].to_string(),
        implied_unit: None,
        implied_formula: None,
    };
    for extra in &fields[3..] {
        if let Some(u) = extra.strip_prefix("unit=") {
            rel.implied_unit = Some(u.trim().to_string());
        } else if let Some(f) = extra.strip_prefix("formula=") {
            rel.implied_formula = Some(f.trim().to_string());
        } else {
            return None;
        }
    }
    Some(rel)
}

fn parse_number(item: &str) -> Option<NumberLiteral> {
    let (num, span) = match item.split_once('(') {
        Some((n, s)) => (n.trim(), s.trim_end_matches(')').trim().to_string()),
        None => (item.trim(), String::new()),
    };
    num.parse::<f64>().ok().map(|value| NumberLiteral { value, span })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ColumnDef, TableDef, ValueType};

    fn schema() -> DatabaseSchema {
        DatabaseSchema {
            db_id: "toy".into(),
            tables: vec![TableDef {
                name: "trips".into(),
                columns: vec![
                    ColumnDef {
                        name: "distance_km".into(),
                        vtype: ValueType::Real,
                        description: String::new(),
                        examples: vec![],
                        primary_key: false,
                        unit: Some("km".into()),
                    },
                    ColumnDef {
                        name: "duration_h".into(),
                        vtype: ValueType::Real,
                        description: String::new(),
                        examples: vec![],
                        primary_key: false,
                        unit: Some("h".into()),
                    },
                ],
            }],
            foreign_keys: vec![],
        }
    }

    #[test]
    fn well_formed_block_parses_every_field() {
        let response = "\
INTENT: average speed per trip
RATIONALE: speed is distance over duration
ENTITIES: speed; distance=trips.distance_km; duration=trips.duration_h
RELATIONS: speed | equals | distance / duration | unit=km/h | formula=speed = distance / time
NUMBERS: 20 (over 20 km); 0.5 (in 0.5 h)
UNITS: km:length; h:time
PATTERNS: trips.distance_km; trips.duration_h
";
        let state = parse_semantic_state(response, &schema());
        assert!(!state.fallback);
        assert_eq!(state.intent, "average speed per trip");
        assert_eq!(state.entities.len(), 3);
        assert_eq!(state.entities[1].binding.as_deref(), Some("trips.distance_km"));
        assert_eq!(state.relations.len(), 1);
        let rel = &state.relations[0];
        assert_eq!(rel.implied_unit.as_deref(), Some("km/h"));
        assert_eq!(rel.implied_formula.as_deref(), Some("speed = distance / time"));
        assert_eq!(state.numbers.len(), 2);
        assert_eq!(state.numbers[0].value, 20.0);
        assert_eq!(state.numbers[1].value, 0.5);
        assert_eq!(state.numbers[1].span, "in 0.5 h");
        assert_eq!(state.units[0].dimension.as_deref(), Some("length"));
        assert_eq!(state.patterns.len(), 2);
        assert!(state.warnings.is_empty());
    }

    #[test]
    fn prose_without_labels_falls_back_empty() {
        let state = parse_semantic_state("I think the answer involves trips.", &schema());
        assert!(state.fallback);
        assert!(state.is_empty());
        assert!(!state.warnings.is_empty());
    }

    #[test]
    fn malformed_items_drop_with_warnings() {
        let response = "\
RELATIONS: onlytwofields | x; speed | equals | speed
NUMBERS: not-a-number (foo)
";
        let state = parse_semantic_state(response, &schema());
        assert!(!state.fallback);
        assert!(state.relations.is_empty());
        assert!(state.numbers.is_empty());
        assert_eq!(state.warnings.len(), 3);
    }

    #[test]
    fn reflexive_marked_relation_survives() {
        let response = "RELATIONS: node | links to (reflexive) | node";
        let state = parse_semantic_state(response, &schema());
        assert_eq!(state.relations.len(), 1);
    }

    #[test]
    fn unknown_endpoints_are_adopted_as_entities() {
        let response = "ENTITIES: speed\nRELATIONS: speed | uses | voltage";
        let state = parse_semantic_state(response, &schema());
        assert_eq!(state.relations.len(), 1);
        assert!(state.has_entity("voltage"));
        assert!(state.warnings.iter().any(|w| w.contains("voltage")));
    }

    #[test]
    fn schema_names_count_as_known_endpoints() {
        let response = "RELATIONS: distance_km | divided by | duration_h";
        let state = parse_semantic_state(response, &schema());
        assert_eq!(state.relations.len(), 1);
        assert!(state.entities.is_empty());
    }
}
