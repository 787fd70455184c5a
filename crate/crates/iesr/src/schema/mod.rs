//! Stage 1b: schema serialization and compression.
//!
//! Two recall channels pick elements: minhash LSH over names/descriptions
//! probed with question terms, and semantic ranking of every element against
//! the validated question context. Their union is closed under primary keys
//! and foreign-key endpoints of kept tables, and an element exactly matching
//! an extracted pattern is never dropped.

mod lsh;
mod mschema;
mod rank;

pub use lsh::{
    build_lsh_index, element_text, lsh_candidates, schema_elements, shingle_jaccard, shingles,
    LshIndex, DEFAULT_BANDS, DEFAULT_NGRAM, DEFAULT_ROWS,
};
pub use mschema::{render_m_schema, RenderError};
pub use rank::{
    semantic_rank, HttpEmbeddingProvider, RankedElement, Ranking, SimilarityProvider,
    TfCosineProvider,
};

use crate::model::DatabaseSchema;
use crate::understand::SemanticState;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaLinkConfig {
    pub ngram: usize,
    pub bands: usize,
    pub rows: usize,
    pub seed: u64,
    pub top_k_tables: usize,
    pub top_k_columns_per_table: usize,
}

impl Default for SchemaLinkConfig {
    fn default() -> Self {
        SchemaLinkConfig {
            ngram: DEFAULT_NGRAM,
            bands: DEFAULT_BANDS,
            rows: DEFAULT_ROWS,
            seed: 0,
            top_k_tables: 6,
            top_k_columns_per_table: 8,
        }
    }
}

impl SchemaLinkConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.ngram == 0 || self.bands == 0 || self.rows == 0 {
            return Err("ngram, bands, and rows must be positive".into());
        }
        if self.top_k_tables == 0 || self.top_k_columns_per_table == 0 {
            return Err("top_k budgets must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressionResult {
    /// Kept tables in schema order.
    pub kept_tables: Vec<String>,
    /// Kept columns per table, in schema order.
    pub kept_columns: BTreeMap<String, Vec<String>>,
    /// Kept elements / total elements, in (0, 1].
    pub ratio: f64,
    /// All elements with semantic scores, descending.
    pub salience: Vec<RankedElement>,
    pub lsh_hits: BTreeSet<String>,
    pub fallback_diagnostic: Option<String>,
}

impl CompressionResult {
    pub fn has_table(&self, name: &str) -> bool {
        self.kept_tables.iter().any(|t| t.eq_ignore_ascii_case(name))
    }

    pub fn has_column(&self, table: &str, column: &str) -> bool {
        self.kept_columns
            .iter()
            .find(|(t, _)| t.eq_ignore_ascii_case(table))
            .map(|(_, cols)| cols.iter().any(|c| c.eq_ignore_ascii_case(column)))
            .unwrap_or(false)
    }

    pub fn kept_element_count(&self) -> usize {
        self.kept_tables.len() + self.kept_columns.values().map(Vec::len).sum::<usize>()
    }

    /// Test helper: a selection from explicit (table, columns) parts.
    pub fn from_parts(schema: &DatabaseSchema, parts: &[(&str, &[&str])]) -> CompressionResult {
        let kept_tables: Vec<String> = parts.iter().map(|(t, _)| t.to_string()).collect();
        let kept_columns = parts
            .iter()
            .map(|(t, cols)| (t.to_string(), cols.iter().map(|c| c.to_string()).collect()))
            .collect();
        let mut result = CompressionResult {
            kept_tables,
            kept_columns,
            ratio: 0.0,
            salience: vec![],
            lsh_hits: BTreeSet::new(),
            fallback_diagnostic: None,
        };
        result.ratio = result.kept_element_count() as f64 / schema.element_count().max(1) as f64;
        result
    }

    pub fn validate_against(&self, schema: &DatabaseSchema) -> Result<(), RenderError> {
        for t in &self.kept_tables {
            if schema.table(t).is_none() {
                return Err(RenderError::UnknownTable(t.clone()));
            }
        }
        for (t, cols) in &self.kept_columns {
            let Some(table) = schema.table(t) else {
                return Err(RenderError::UnknownTable(t.clone()));
            };
            for c in cols {
                if table.column(c).is_none() {
                    return Err(RenderError::UnknownColumn(t.clone(), c.clone()));
                }
            }
        }
        Ok(())
    }

    /// Structural closure check: kept columns live in kept tables, primary
    /// keys of kept tables are kept, and foreign keys between kept tables
    /// keep both endpoint columns.
    pub fn check_closure(&self, schema: &DatabaseSchema) -> Result<(), String> {
        for t in self.kept_columns.keys() {
            if !self.has_table(t) {
                return Err(format!("columns kept for unkept table {t}"));
            }
        }
        for t in &self.kept_tables {
            let Some(table) = schema.table(t) else {
                return Err(format!("kept table {t} not in schema"));
            };
            for col in table.columns.iter().filter(|c| c.primary_key) {
                if !self.has_column(t, &col.name) {
                    return Err(format!("primary key {t}.{} dropped", col.name));
                }
            }
        }
        for fk in &schema.foreign_keys {
            if self.has_table(&fk.from_table) && self.has_table(&fk.to_table) {
                if !self.has_column(&fk.from_table, &fk.from_column) {
                    return Err(format!(
                        "fk endpoint {}.{} dropped",
                        fk.from_table, fk.from_column
                    ));
                }
                if !self.has_column(&fk.to_table, &fk.to_column) {
                    return Err(format!("fk endpoint {}.{} dropped", fk.to_table, fk.to_column));
                }
            }
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(format!("ratio out of (0,1]: {}", self.ratio));
        }
        Ok(())
    }
}

/// Question-side inputs to compression.
pub struct LinkContext<'a> {
    pub question: &'a str,
    pub state: &'a SemanticState,
}

/// Probe terms: question words, entity surfaces, and extracted patterns.
fn probes(ctx: &LinkContext) -> Vec<String> {
    let mut set = BTreeSet::new();
    for word in ctx.question.split(|c: char| !c.is_alphanumeric()) {
        if word.len() >= 3 {
            set.insert(word.to_lowercase());
        }
    }
    for e in &ctx.state.entities {
        set.insert(e.surface.to_lowercase());
        if let Some(b) = &e.binding {
            set.insert(b.to_lowercase());
        }
    }
    for p in &ctx.state.patterns {
        set.insert(p.to_lowercase());
    }
    set.into_iter().collect()
}

/// The query text the semantic ranker scores elements against.
fn query_text(ctx: &LinkContext) -> String {
    let mut parts: Vec<String> = vec![ctx.question.to_string()];
    if !ctx.state.intent.is_empty() {
        parts.push(ctx.state.intent.clone());
    }
    for e in &ctx.state.entities {
        parts.push(e.surface.clone());
    }
    for r in &ctx.state.relations {
        parts.push(r.text());
    }
    parts.extend(ctx.state.patterns.iter().cloned());
    parts.join(" ")
}

/// Pattern strings (and explicit entity bindings, which are patterns in all
/// but name) that must survive compression via exact string match.
fn exact_matches(schema: &DatabaseSchema, ctx: &LinkContext) -> BTreeSet<String> {
    let mut wanted: BTreeSet<String> = ctx.state.patterns.iter().map(|p| p.to_lowercase()).collect();
    for e in &ctx.state.entities {
        if let Some(b) = &e.binding {
            wanted.insert(b.to_lowercase());
        }
    }
    let mut hits = BTreeSet::new();
    for table in &schema.tables {
        if wanted.contains(&table.name.to_lowercase()) {
            hits.insert(table.name.clone());
        }
        for col in &table.columns {
            let qualified = format!("{}.{}", table.name, col.name).to_lowercase();
            if wanted.contains(&qualified) || wanted.contains(&col.name.to_lowercase()) {
                hits.insert(format!("{}.{}", table.name, col.name));
            }
        }
    }
    hits
}

fn table_of(key: &str) -> &str {
    key.split_once('.').map(|(t, _)| t).unwrap_or(key)
}

/// Compresses the schema to high-salience tables and columns.
pub fn compress_schema(
    schema: &DatabaseSchema,
    ctx: &LinkContext,
    config: &SchemaLinkConfig,
    provider: &dyn SimilarityProvider,
) -> CompressionResult {
    let elements = schema_elements(schema);
    let index = build_lsh_index(schema, config.ngram, config.bands, config.rows, config.seed);
    let lsh_hits = lsh_candidates(&index, &probes(ctx));
    let ranking = semantic_rank(&elements, &query_text(ctx), provider);
    let score: BTreeMap<&str, f64> =
        ranking.ranked.iter().map(|r| (r.key.as_str(), r.score)).collect();
    let exact = exact_matches(schema, ctx);

    // Tables ranked by their own salience or their best column's.
    let table_score = |t: &crate::model::TableDef| -> f64 {
        let own = score.get(t.name.as_str()).copied().unwrap_or(0.0);
        t.columns
            .iter()
            .map(|c| {
                score
                    .get(format!("{}.{}", t.name, c.name).as_str())
                    .copied()
                    .unwrap_or(0.0)
            })
            .fold(own, f64::max)
    };
    let mut table_order: Vec<usize> = (0..schema.tables.len()).collect();
    table_order.sort_by(|&i, &j| {
        table_score(&schema.tables[j])
            .total_cmp(&table_score(&schema.tables[i]))
            .then(i.cmp(&j))
    });

    let mut keep_tables: BTreeSet<String> = table_order
        .iter()
        .take(config.top_k_tables)
        .map(|&i| schema.tables[i].name.clone())
        .collect();
    for key in lsh_hits.iter().chain(exact.iter()) {
        keep_tables.insert(table_of(key).to_string());
    }

    let kept_tables: Vec<String> = schema
        .tables
        .iter()
        .map(|t| t.name.clone())
        .filter(|t| keep_tables.contains(t))
        .collect();

    let mut kept_columns: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for table in &schema.tables {
        if !keep_tables.contains(&table.name) {
            continue;
        }
        let mut keep: BTreeSet<String> = BTreeSet::new();

        let mut order: Vec<usize> = (0..table.columns.len()).collect();
        order.sort_by(|&i, &j| {
            let key_i = format!("{}.{}", table.name, table.columns[i].name);
            let key_j = format!("{}.{}", table.name, table.columns[j].name);
            let si = score.get(key_i.as_str()).copied().unwrap_or(0.0);
            let sj = score.get(key_j.as_str()).copied().unwrap_or(0.0);
            sj.total_cmp(&si).then(i.cmp(&j))
        });
        for &i in order.iter().take(config.top_k_columns_per_table) {
            keep.insert(table.columns[i].name.clone());
        }

        for col in &table.columns {
            let key = format!("{}.{}", table.name, col.name);
            if col.primary_key || lsh_hits.contains(&key) || exact.contains(&key) {
                keep.insert(col.name.clone());
            }
        }
        for fk in &schema.foreign_keys {
            if keep_tables.contains(&fk.from_table) && keep_tables.contains(&fk.to_table) {
                if fk.from_table == table.name {
                    keep.insert(fk.from_column.clone());
                }
                if fk.to_table == table.name {
                    keep.insert(fk.to_column.clone());
                }
            }
        }

        let ordered: Vec<String> = table
            .columns
            .iter()
            .map(|c| c.name.clone())
            .filter(|c| keep.contains(c))
            .collect();
        kept_columns.insert(table.name.clone(), ordered);
    }

    let mut result = CompressionResult {
        kept_tables,
        kept_columns,
        ratio: 0.0,
        salience: ranking.ranked,
        lsh_hits,
        fallback_diagnostic: ranking.fallback_diagnostic,
    };
    result.ratio = result.kept_element_count() as f64 / schema.element_count().max(1) as f64;
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ColumnDef, ForeignKey, TableDef, ValueType};
    use proptest::prelude::*;

    fn column(name: &str, pk: bool) -> ColumnDef {
        ColumnDef {
            name: name.into(),
            vtype: ValueType::Text,
            description: String::new(),
            examples: vec![],
            primary_key: pk,
            unit: None,
        }
    }

    fn table(name: &str, cols: &[(&str, bool)]) -> TableDef {
        TableDef { name: name.into(), columns: cols.iter().map(|(c, pk)| column(c, *pk)).collect() }
    }

    fn wide_schema() -> DatabaseSchema {
        // 8 tables, the first three are "gold" for the velocity question
        let mut tables = vec![
            table("probes", &[("id", true), ("name", false), ("launch_year", false)]),
            table(
                "readings",
                &[("id", true), ("probe_id", false), ("velocity", false), ("duration", false)],
            ),
            table("missions", &[("id", true), ("title", false), ("agency", false)]),
        ];
        for i in 0..5 {
            tables.push(table(
                &format!("archive_{i}"),
                &[("id", true), ("blob_a", false), ("blob_b", false), ("blob_c", false)],
            ));
        }
        DatabaseSchema {
            db_id: "space".into(),
            tables,
            foreign_keys: vec![ForeignKey {
                from_table: "readings".into(),
                from_column: "probe_id".into(),
                to_table: "probes".into(),
                to_column: "id".into(),
            }],
        }
    }

    fn ctx_for<'a>(question: &'a str, state: &'a SemanticState) -> LinkContext<'a> {
        LinkContext { question, state }
    }

    #[test]
    fn small_schema_saturates_to_ratio_one() {
        let schema = DatabaseSchema {
            db_id: "mini".into(),
            tables: vec![table("t", &[("id", true), ("v", false)])],
            foreign_keys: vec![],
        };
        let state = SemanticState::default();
        let result = compress_schema(
            &schema,
            &ctx_for("anything", &state),
            &SchemaLinkConfig::default(),
            &TfCosineProvider,
        );
        assert_eq!(result.ratio, 1.0);
        result.check_closure(&schema).unwrap();
    }

    #[test]
    fn question_term_keeps_matching_column() {
        let schema = wide_schema();
        let state = SemanticState::default();
        let result = compress_schema(
            &schema,
            &ctx_for("average velocity of each probe", &state),
            &SchemaLinkConfig { top_k_tables: 2, top_k_columns_per_table: 2, ..Default::default() },
            &TfCosineProvider,
        );
        assert!(result.has_column("readings", "velocity"));
        result.check_closure(&schema).unwrap();
    }

    #[test]
    fn exact_pattern_is_never_dropped() {
        let schema = wide_schema();
        let state = SemanticState {
            patterns: vec!["archive_3.blob_b".into()],
            ..SemanticState::default()
        };
        // tiny budgets so nothing else would keep archive_3
        let config =
            SchemaLinkConfig { top_k_tables: 1, top_k_columns_per_table: 1, ..Default::default() };
        let result = compress_schema(
            &schema,
            &ctx_for("placeholder question with zero overlap", &state),
            &config,
            &TfCosineProvider,
        );
        assert!(result.has_column("archive_3", "blob_b"));
        result.check_closure(&schema).unwrap();
    }

    #[test]
    fn fk_closure_keeps_endpoint_columns() {
        let schema = wide_schema();
        let state = SemanticState::default();
        let result = compress_schema(
            &schema,
            &ctx_for("probe readings velocity duration", &state),
            &SchemaLinkConfig { top_k_tables: 3, top_k_columns_per_table: 1, ..Default::default() },
            &TfCosineProvider,
        );
        if result.has_table("readings") && result.has_table("probes") {
            assert!(result.has_column("readings", "probe_id"));
            assert!(result.has_column("probes", "id"));
        }
        result.check_closure(&schema).unwrap();
    }

    #[test]
    fn deterministic_for_fixed_inputs() {
        let schema = wide_schema();
        let state = SemanticState {
            entities: vec![crate::understand::Entity { surface: "velocity".into(), binding: None }],
            ..SemanticState::default()
        };
        let config = SchemaLinkConfig::default();
        let a = compress_schema(&schema, &ctx_for("q", &state), &config, &TfCosineProvider);
        let b = compress_schema(&schema, &ctx_for("q", &state), &config, &TfCosineProvider);
        assert_eq!(a.kept_tables, b.kept_tables);
        assert_eq!(a.kept_columns, b.kept_columns);
        assert_eq!(a.ratio, b.ratio);
    }

    proptest! {
        /// Larger budgets keep supersets.
        #[test]
        fn monotone_in_top_k(k1 in 1usize..4, dk in 0usize..4, kc in 1usize..4, dkc in 0usize..4) {
            let schema = wide_schema();
            let state = SemanticState::default();
            let ctx = ctx_for("velocity of probes during missions", &state);
            let small = compress_schema(
                &schema, &ctx,
                &SchemaLinkConfig { top_k_tables: k1, top_k_columns_per_table: kc, ..Default::default() },
                &TfCosineProvider,
            );
            let large = compress_schema(
                &schema, &ctx,
                &SchemaLinkConfig {
                    top_k_tables: k1 + dk,
                    top_k_columns_per_table: kc + dkc,
                    ..Default::default()
                },
                &TfCosineProvider,
            );
            for t in &small.kept_tables {
                prop_assert!(large.has_table(t), "table {t} lost when budget grew");
            }
            for (t, cols) in &small.kept_columns {
                for c in cols {
                    prop_assert!(large.has_column(t, c), "column {t}.{c} lost when budget grew");
                }
            }
        }
    }
}
