//! Annotated text serialization of a schema, optionally restricted to a
//! compression selection. The grammar is small and deterministic:
//!
//! ```text
//! DB: lab
//! Table: readings
//!   - id: integer, primary key
//!   - velocity: real, unit: m/s, description: measured speed, examples: [2.5, 9.0]
//! Foreign keys:
//!   - readings.sensor_id -> sensors.id
//! ```

use super::CompressionResult;
use crate::model::{ColumnDef, DatabaseSchema};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("selection references unknown table {0}")]
    UnknownTable(String),
    #[error("selection references unknown column {0}.{1}")]
    UnknownColumn(String, String),
}

fn fmt_example(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => format!("'{s}'"),
        other => other.to_string(),
    }
}

fn render_column(out: &mut String, col: &ColumnDef) {
    let _ = write!(out, "  - {}: {}", col.name, type_label(col));
    if col.primary_key {
        out.push_str(", primary key");
    }
    if let Some(unit) = &col.unit {
        let _ = write!(out, ", unit: {unit}");
    }
    if !col.description.is_empty() {
        let _ = write!(out, ", description: {}", col.description);
    }
    if !col.examples.is_empty() {
        let examples: Vec<String> = col.examples.iter().map(fmt_example).collect();
        let _ = write!(out, ", examples: [{}]", examples.join(", "));
    }
    out.push('\n');
}

fn type_label(col: &ColumnDef) -> &'static str {
    use crate::model::ValueType::*;
    match col.vtype {
        Integer => "integer",
        Real => "real",
        Text => "text",
        Boolean => "boolean",
        Datetime => "datetime",
    }
}

/// Renders the schema, or the selected part of it, in schema order.
pub fn render_m_schema(
    schema: &DatabaseSchema,
    selection: Option<&CompressionResult>,
) -> Result<String, RenderError> {
    if let Some(sel) = selection {
        sel.validate_against(schema)?;
    }
    let keep_table = |name: &str| selection.map(|s| s.has_table(name)).unwrap_or(true);
    let keep_column =
        |table: &str, col: &str| selection.map(|s| s.has_column(table, col)).unwrap_or(true);

    let mut out = String::new();
    let _ = writeln!(out, "DB: {}", schema.db_id);
    for table in &schema.tables {
        if !keep_table(&table.name) {
            continue;
        }
        let _ = writeln!(out, "Table: {}", table.name);
        for col in &table.columns {
            if keep_column(&table.name, &col.name) {
                render_column(&mut out, col);
            }
        }
    }
    let fks: Vec<&crate::model::ForeignKey> = schema
        .foreign_keys
        .iter()
        .filter(|fk| {
            keep_table(&fk.from_table)
                && keep_table(&fk.to_table)
                && keep_column(&fk.from_table, &fk.from_column)
                && keep_column(&fk.to_table, &fk.to_column)
        })
        .collect();
    if !fks.is_empty() {
        out.push_str("Foreign keys:\n");
        for fk in fks {
            let _ = writeln!(
                out,
                "  - {}.{} -> {}.{}",
                fk.from_table, fk.from_column, fk.to_table, fk.to_column
            );
        }
    }
    Ok(out)
}
