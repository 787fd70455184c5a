//! Dataset loading and schema introspection.
//!
//! Datasets are JSON arrays of records. Field names follow the common
//! benchmark shapes: the gold SQL may appear under `query`, `SQL`, or
//! `gold_sql`, the identifier under `id` or `question_id`. Databases live at
//! `db_root/<db_id>/<db_id>.sqlite`, optionally annotated by a sidecar
//! `<db_id>.json` carrying column descriptions and units that the database
//! file itself cannot store.

use super::{
    ColumnDef, DatabaseSchema, Difficulty, EvalCase, ForeignKey, Question, TableDef, ValueType,
};
use crate::exec::{execute, DbHandle, DbRegistry};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

const GOLD_VALIDATION_TIMEOUT_MS: u64 = 10_000;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset {path} is not a JSON array: {message}")]
    Parse { path: String, message: String },
}

/// Per-record problem; the record is excluded but loading continues.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordError {
    pub index: usize,
    pub message: String,
}

/// Case whose gold SQL failed on its database. The case stays in the list;
/// downstream consumers decide whether to skip it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvalidGold {
    pub question_id: String,
    pub db_id: String,
    pub error: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct LoadReport {
    pub total_records: usize,
    pub loaded: usize,
    pub errors: Vec<RecordError>,
    pub invalid_gold: Vec<InvalidGold>,
    /// Distinct database files opened during validation.
    pub databases_opened: usize,
}

fn get_str<'a>(record: &'a Value, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| record.get(*k).and_then(Value::as_str))
}

fn get_id(record: &Value, index: usize) -> String {
    if let Some(s) = get_str(record, &["id", "question_id"]) {
        return s.to_string();
    }
    if let Some(n) = record.get("question_id").and_then(Value::as_i64) {
        return n.to_string();
    }
    format!("q{index}")
}

/// Loads a dataset and validates every gold query against its database.
pub fn load_dataset(
    path: &Path,
    db_root: &Path,
) -> Result<(Vec<EvalCase>, LoadReport), DatasetError> {
    let registry = DbRegistry::new(db_root);
    load_dataset_with(path, &registry)
}

/// Same as [`load_dataset`] but with a caller-supplied registry, so database
/// handle reuse can be observed.
pub fn load_dataset_with(
    path: &Path,
    registry: &DbRegistry,
) -> Result<(Vec<EvalCase>, LoadReport), DatasetError> {
    let raw = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let records: Vec<Value> =
        serde_json::from_str(&raw).map_err(|e| DatasetError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;

    let mut report = LoadReport { total_records: records.len(), ..LoadReport::default() };
    let mut cases = Vec::new();

    for (index, record) in records.iter().enumerate() {
        let fail = |message: String, report: &mut LoadReport| {
            report.errors.push(RecordError { index, message });
        };

        let Some(text) = get_str(record, &["question"]) else {
            fail("missing key: question".into(), &mut report);
            continue;
        };
        if text.trim().is_empty() {
            fail("empty question text".into(), &mut report);
            continue;
        }
        let Some(db_id) = get_str(record, &["db_id"]) else {
            fail("missing key: db_id".into(), &mut report);
            continue;
        };
        let Some(gold_sql) = get_str(record, &["query", "SQL", "gold_sql"]) else {
            fail("missing gold SQL (expected one of: query, SQL, gold_sql)".into(), &mut report);
            continue;
        };
        if !registry.exists(db_id) {
            fail(
                format!("unknown db_id {db_id}: no file at {}", registry.path_for(db_id).display()),
                &mut report,
            );
            continue;
        }

        let question = Question {
            id: get_id(record, index),
            text: text.to_string(),
            db_id: db_id.to_string(),
            difficulty: get_str(record, &["difficulty"])
                .map(Difficulty::parse)
                .unwrap_or(Difficulty::Unknown),
            reasoning_type: get_str(record, &["reasoning_type"]).map(str::to_string),
        };

        let mut tags = BTreeMap::new();
        if let Some(evidence) = get_str(record, &["evidence"]) {
            if !evidence.is_empty() {
                tags.insert("evidence".to_string(), evidence.to_string());
            }
        }

        match registry.shared(db_id) {
            Ok(db) => {
                let outcome = execute(
                    gold_sql,
                    &db,
                    GOLD_VALIDATION_TIMEOUT_MS,
                    &super::ComparePolicy::default(),
                );
                if let Err(failure) = &outcome.result {
                    report.invalid_gold.push(InvalidGold {
                        question_id: question.id.clone(),
                        db_id: db_id.to_string(),
                        error: format!("{:?}: {}", failure.kind, failure.message),
                    });
                }
            }
            Err(e) => {
                fail(format!("cannot open database {db_id}: {e}"), &mut report);
                continue;
            }
        }

        cases.push(EvalCase { question, gold_sql: gold_sql.to_string(), tags });
    }

    report.loaded = cases.len();
    report.databases_opened = registry.opened_count();
    Ok((cases, report))
}

/// Optional schema annotations stored next to the database file as
/// `<db_id>.json`. Unknown tables or columns in the sidecar are ignored.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct SchemaSidecar {
    #[serde(default)]
    pub tables: BTreeMap<String, TableSidecar>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct TableSidecar {
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub columns: BTreeMap<String, ColumnSidecar>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct ColumnSidecar {
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub unit: Option<String>,
}

impl SchemaSidecar {
    pub fn load(path: &Path) -> Option<SchemaSidecar> {
        let raw = std::fs::read_to_string(path).ok()?;
        serde_json::from_str(&raw).ok()
    }

    fn column(&self, table: &str, column: &str) -> Option<&ColumnSidecar> {
        self.tables
            .iter()
            .find(|(t, _)| t.eq_ignore_ascii_case(table))
            .and_then(|(_, t)| {
                t.columns.iter().find(|(c, _)| c.eq_ignore_ascii_case(column)).map(|(_, c)| c)
            })
    }
}

/// Reads tables, columns, keys, and example values out of a live database.
///
/// Example values are the first three distinct non-null values per column in
/// storage order. Sidecar annotations fill in descriptions and units.
pub fn introspect_schema(
    db: &DbHandle,
    db_id: &str,
    sidecar: Option<&SchemaSidecar>,
) -> Result<DatabaseSchema, rusqlite::Error> {
    let conn = db.connection();

    let mut table_names: Vec<String> = {
        let mut stmt = conn.prepare(
            "SELECT name FROM sqlite_master WHERE type = 'table' \
             AND name NOT LIKE 'sqlite_%' ORDER BY rowid",
        )?;
        let rows = stmt.query_map([], |row| row.get::<_, String>(0))?;
        rows.collect::<Result<_, _>>()?
    };
    table_names.dedup();

    let mut tables = Vec::new();
    let mut foreign_keys = Vec::new();

    for tname in &table_names {
        let mut columns = Vec::new();
        {
            let mut stmt = conn.prepare(&format!("PRAGMA table_info({})", quote_ident(tname)))?;
            let rows = stmt.query_map([], |row| {
                let name: String = row.get("name")?;
                let decl: String = row.get::<_, Option<String>>("type")?.unwrap_or_default();
                let pk: i64 = row.get("pk")?;
                Ok((name, decl, pk > 0))
            })?;
            for row in rows {
                let (name, decl, primary_key) = row?;
                let side = sidecar.and_then(|s| s.column(tname, &name));
                columns.push(ColumnDef {
                    examples: column_examples(db, tname, &name)?,
                    description: side.map(|s| s.description.clone()).unwrap_or_default(),
                    unit: side.and_then(|s| s.unit.clone()),
                    vtype: ValueType::from_declared(&decl),
                    name,
                    primary_key,
                });
            }
        }

        {
            let mut stmt =
                conn.prepare(&format!("PRAGMA foreign_key_list({})", quote_ident(tname)))?;
            let rows = stmt.query_map([], |row| {
                let target: String = row.get("table")?;
                let from: String = row.get("from")?;
                let to: Option<String> = row.get("to")?;
                Ok((target, from, to))
            })?;
            for row in rows {
                let (to_table, from_column, to) = row?;
                foreign_keys.push(ForeignKey {
                    from_table: tname.clone(),
                    from_column,
                    to_table,
                    // A null target column means "the referenced primary key";
                    // resolved after all tables are read.
                    to_column: to.unwrap_or_default(),
                });
            }
        }

        tables.push(TableDef { name: tname.clone(), columns });
    }

    for fk in &mut foreign_keys {
        if fk.to_column.is_empty() {
            let pk = tables
                .iter()
                .find(|t| t.name.eq_ignore_ascii_case(&fk.to_table))
                .and_then(|t| t.columns.iter().find(|c| c.primary_key));
            if let Some(pk) = pk {
                fk.to_column = pk.name.clone();
            }
        }
    }
    foreign_keys.retain(|fk| !fk.to_column.is_empty());

    Ok(DatabaseSchema { db_id: db_id.to_string(), tables, foreign_keys })
}

fn column_examples(
    db: &DbHandle,
    table: &str,
    column: &str,
) -> Result<Vec<Value>, rusqlite::Error> {
    let sql = format!(
        "SELECT {col} FROM {tbl} WHERE {col} IS NOT NULL",
        col = quote_ident(column),
        tbl = quote_ident(table),
    );
    let conn = db.connection();
    let mut stmt = conn.prepare(&sql)?;
    let mut rows = stmt.query([])?;
    let mut seen = Vec::new();
    while let Some(row) = rows.next()? {
        let v = match row.get_ref(0)? {
            rusqlite::types::ValueRef::Null => Value::Null,
            rusqlite::types::ValueRef::Integer(i) => Value::from(i),
            rusqlite::types::ValueRef::Real(f) => Value::from(f),
            rusqlite::types::ValueRef::Text(t) => Value::from(String::from_utf8_lossy(t).into_owned()),
            rusqlite::types::ValueRef::Blob(b) => Value::from(hex::encode(b)),
        };
        if !seen.contains(&v) {
            seen.push(v);
            if seen.len() == 3 {
                break;
            }
        }
    }
    Ok(seen)
}

fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}
