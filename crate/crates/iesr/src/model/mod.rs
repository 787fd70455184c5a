//! Shared domain types: questions, schemas, eval cases, and the normalized
//! cell values every result comparison in the pipeline is built on.

mod dataset;

pub use dataset::{
    introspect_schema, load_dataset, DatasetError, InvalidGold, LoadReport, RecordError,
    SchemaSidecar,
};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Declared column value types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Integer,
    Real,
    Text,
    Boolean,
    Datetime,
}

impl ValueType {
    /// Maps a SQLite declared type to our five-type system.
    pub fn from_declared(decl: &str) -> ValueType {
        let d = decl.to_ascii_uppercase();
        if d.contains("INT") {
            ValueType::Integer
        } else if d.contains("BOOL") {
            ValueType::Boolean
        } else if d.contains("DATE") || d.contains("TIME") {
            ValueType::Datetime
        } else if d.contains("REAL")
            || d.contains("FLOA")
            || d.contains("DOUB")
            || d.contains("NUMERIC")
            || d.contains("DECIMAL")
        {
            ValueType::Real
        } else {
            ValueType::Text
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    #[serde(rename = "type")]
    pub vtype: ValueType,
    #[serde(default)]
    pub description: String,
    /// Up to three example values, in storage order.
    #[serde(default)]
    pub examples: Vec<serde_json::Value>,
    #[serde(default)]
    pub primary_key: bool,
    #[serde(default)]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
}

impl TableDef {
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }
}

/// A foreign-key edge `from_table.from_column -> to_table.to_column`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub from_table: String,
    pub from_column: String,
    pub to_table: String,
    pub to_column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseSchema {
    pub db_id: String,
    pub tables: Vec<TableDef>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKey>,
}

impl DatabaseSchema {
    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    /// Total schema element count (tables + columns), the denominator of the
    /// compression reduction ratio.
    pub fn element_count(&self) -> usize {
        self.tables.len() + self.tables.iter().map(|t| t.columns.len()).sum::<usize>()
    }

    /// Checks structural invariants: unique table names, unique column names
    /// per table, and existing foreign-key endpoints.
    pub fn validate(&self) -> Result<(), String> {
        let mut seen = std::collections::HashSet::new();
        for t in &self.tables {
            if !seen.insert(t.name.to_ascii_lowercase()) {
                return Err(format!("duplicate table name: {}", t.name));
            }
            let mut cols = std::collections::HashSet::new();
            for c in &t.columns {
                if !cols.insert(c.name.to_ascii_lowercase()) {
                    return Err(format!("duplicate column {} in table {}", c.name, t.name));
                }
            }
        }
        for fk in &self.foreign_keys {
            let from = self
                .table(&fk.from_table)
                .ok_or_else(|| format!("fk source table missing: {}", fk.from_table))?;
            if from.column(&fk.from_column).is_none() {
                return Err(format!("fk source column missing: {}.{}", fk.from_table, fk.from_column));
            }
            let to = self
                .table(&fk.to_table)
                .ok_or_else(|| format!("fk target table missing: {}", fk.to_table))?;
            if to.column(&fk.to_column).is_none() {
                return Err(format!("fk target column missing: {}.{}", fk.to_table, fk.to_column));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    Unknown,
}

impl Difficulty {
    /// Accepts both Spider-style and BIRD-style difficulty labels.
    pub fn parse(raw: &str) -> Difficulty {
        match raw.to_ascii_lowercase().as_str() {
            "easy" | "simple" => Difficulty::Easy,
            "medium" | "moderate" => Difficulty::Medium,
            "hard" | "challenging" | "extra" => Difficulty::Hard,
            _ => Difficulty::Unknown,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
            Difficulty::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub db_id: String,
    #[serde(default = "default_difficulty")]
    pub difficulty: Difficulty,
    /// Free reasoning tag, e.g. "physical", "mathematical", "commonsense".
    #[serde(default)]
    pub reasoning_type: Option<String>,
}

fn default_difficulty() -> Difficulty {
    Difficulty::Unknown
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub question: Question,
    pub gold_sql: String,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

/// A raw database cell, before normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellValue {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Blob(Vec<u8>),
}

/// Equality policy for result comparison.
///
/// `order_sensitive` only controls row order; rows themselves are always
/// compared cell-by-cell under multiset semantics when insensitive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComparePolicy {
    pub float_tol: f64,
    pub case_insensitive: bool,
    pub order_sensitive: bool,
    /// When set, a float within `float_tol` of an integer normalizes to that
    /// integer so cross-type comparisons succeed.
    pub int_float_equal: bool,
}

impl Default for ComparePolicy {
    fn default() -> Self {
        ComparePolicy {
            float_tol: 1e-6,
            case_insensitive: true,
            order_sensitive: false,
            int_float_equal: true,
        }
    }
}

impl ComparePolicy {
    pub fn with_order_sensitive(mut self, sensitive: bool) -> Self {
        self.order_sensitive = sensitive;
        self
    }
}

/// A cell value after normalization. Construction goes through
/// [`normalize_cell`]; the invariants (no NaN, no negative zero, snapped
/// floats, canonical text) make `Eq`/`Hash`/`Ord` well behaved so result rows
/// can be sorted and hashed for clustering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum NormalizedValue {
    Null,
    Int(i64),
    Float(f64),
    Str(String),
}

impl PartialEq for NormalizedValue {
    fn eq(&self, other: &Self) -> bool {
        use NormalizedValue::*;
        match (self, other) {
            (Null, Null) => true,
            (Int(a), Int(b)) => a == b,
            (Float(a), Float(b)) => a.to_bits() == b.to_bits(),
            (Str(a), Str(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for NormalizedValue {}

impl std::hash::Hash for NormalizedValue {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        use NormalizedValue::*;
        match self {
            Null => 0u8.hash(state),
            Int(v) => {
                1u8.hash(state);
                v.hash(state);
            }
            Float(v) => {
                2u8.hash(state);
                v.to_bits().hash(state);
            }
            Str(s) => {
                3u8.hash(state);
                s.hash(state);
            }
        }
    }
}

impl PartialOrd for NormalizedValue {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for NormalizedValue {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        use NormalizedValue::*;
        fn rank(v: &NormalizedValue) -> u8 {
            match v {
                Null => 0,
                Int(_) => 1,
                Float(_) => 2,
                Str(_) => 3,
            }
        }
        match (self, other) {
            (Null, Null) => Ordering::Equal,
            (Int(a), Int(b)) => a.cmp(b),
            (Float(a), Float(b)) => a.total_cmp(b),
            (Str(a), Str(b)) => a.cmp(b),
            (a, b) => rank(a).cmp(&rank(b)),
        }
    }
}

impl fmt::Display for NormalizedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormalizedValue::Null => write!(f, "NULL"),
            NormalizedValue::Int(v) => write!(f, "{v}"),
            NormalizedValue::Float(v) => write!(f, "{v}"),
            NormalizedValue::Str(s) => write!(f, "{s}"),
        }
    }
}

/// Normalizes a raw cell under the policy. Total: never fails.
///
/// Floats are snapped to the `float_tol` grid so that equality stays
/// transitive (pairwise tolerance comparison is not an equivalence relation;
/// grid rounding is). Non-finite floats normalize to `Null`, matching how
/// SQLite itself surfaces NaN. Blobs normalize to a hex string.
pub fn normalize_cell(raw: &CellValue, policy: &ComparePolicy) -> NormalizedValue {
    match raw {
        CellValue::Null => NormalizedValue::Null,
        CellValue::Integer(i) => NormalizedValue::Int(*i),
        CellValue::Real(x) => normalize_float(*x, policy),
        CellValue::Text(s) => NormalizedValue::Str(canonical_text(s, policy)),
        CellValue::Blob(b) => NormalizedValue::Str(format!("0x{}", hex::encode(b))),
    }
}

/// Re-normalizes an already normalized value; idempotent by construction.
pub fn normalize_value(v: &NormalizedValue, policy: &ComparePolicy) -> NormalizedValue {
    match v {
        NormalizedValue::Null => NormalizedValue::Null,
        NormalizedValue::Int(i) => NormalizedValue::Int(*i),
        NormalizedValue::Float(x) => normalize_float(*x, policy),
        NormalizedValue::Str(s) => NormalizedValue::Str(canonical_text(s, policy)),
    }
}

fn normalize_float(x: f64, policy: &ComparePolicy) -> NormalizedValue {
    if !x.is_finite() {
        return NormalizedValue::Null;
    }
    let tol = policy.float_tol.max(0.0);
    let nearest = x.round();
    if policy.int_float_equal
        && (x - nearest).abs() <= tol
        && nearest >= i64::MIN as f64
        && nearest <= i64::MAX as f64
    {
        return NormalizedValue::Int(nearest as i64);
    }
    let snapped = if tol > 0.0 {
        let g = x / tol;
        // beyond 2^53 the grid index is no longer representable; keep x as-is
        if g.abs() < 9.0e15 {
            (g).round() * tol
        } else {
            x
        }
    } else {
        x
    };
    // canonicalize -0.0 so bit equality holds
    let snapped = if snapped == 0.0 { 0.0 } else { snapped };
    NormalizedValue::Float(snapped)
}

fn canonical_text(s: &str, policy: &ComparePolicy) -> String {
    let t = s.trim();
    if policy.case_insensitive {
        t.to_lowercase()
    } else {
        t.to_string()
    }
}
