//! Sandboxed SQL execution against file-backed SQLite databases.
//!
//! Connections are opened read-only and every statement is additionally
//! checked with `sqlite3_stmt_readonly`, so mutating statements surface as
//! runtime errors instead of touching the file. A watchdog thread interrupts
//! queries that exceed the wall-clock timeout.

mod compare;
mod metric;

pub use compare::{has_multiple_statements, order_sensitive, results_equal, ResultTable};
pub use metric::{compute_ex, CaseVerdict, ExReport, InvalidGoldCase, ScoredPair};

use crate::model::{normalize_cell, CellValue, ComparePolicy, NormalizedValue};
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Error)]
pub enum DbError {
    #[error("database file not found: {0}")]
    NotFound(PathBuf),
    #[error("failed to open {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: rusqlite::Error,
    },
}

/// A read-only connection to one database file.
pub struct DbHandle {
    conn: Connection,
    path: PathBuf,
}

impl DbHandle {
    pub fn open(path: &Path) -> Result<DbHandle, DbError> {
        if !path.exists() {
            return Err(DbError::NotFound(path.to_path_buf()));
        }
        let conn = Connection::open_with_flags(
            path,
            OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX,
        )
        .map_err(|source| DbError::Open { path: path.to_path_buf(), source })?;
        // second line of defense behind the read-only open flag
        let _ = conn.pragma_update(None, "query_only", true);
        Ok(DbHandle { conn, path: path.to_path_buf() })
    }

    /// In-memory database, used by tests and the toy-suite builder.
    pub fn open_in_memory() -> Result<DbHandle, DbError> {
        let conn = Connection::open_in_memory()
            .map_err(|source| DbError::Open { path: PathBuf::from(":memory:"), source })?;
        Ok(DbHandle { conn, path: PathBuf::from(":memory:") })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub(crate) fn connection(&self) -> &Connection {
        &self.conn
    }
}

/// Why a query produced no rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecErrorKind {
    Syntax,
    Runtime,
    Timeout,
}

/// Result of executing one query: rows or a classified error, plus elapsed
/// wall-clock time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecOutcome {
    pub result: Result<ResultTable, ExecFailure>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecFailure {
    pub kind: ExecErrorKind,
    pub message: String,
}

impl ExecOutcome {
    pub fn rows(&self) -> Option<&ResultTable> {
        self.result.as_ref().ok()
    }

    pub fn is_ok(&self) -> bool {
        self.result.is_ok()
    }
}

fn classify_prepare_error(err: &rusqlite::Error) -> ExecErrorKind {
    let msg = err.to_string().to_ascii_lowercase();
    if msg.contains("syntax error")
        || msg.contains("incomplete input")
        || msg.contains("unrecognized token")
    {
        ExecErrorKind::Syntax
    } else {
        ExecErrorKind::Runtime
    }
}

/// Executes a single read-only SQL statement with a wall-clock timeout.
///
/// Rows are normalized cell-by-cell under `policy`. Mutating statements and
/// multi-statement strings are rejected as runtime errors.
pub fn execute(sql: &str, db: &DbHandle, timeout_ms: u64, policy: &ComparePolicy) -> ExecOutcome {
    let start = Instant::now();
    let fail = |kind, message: String| ExecOutcome {
        result: Err(ExecFailure { kind, message }),
        elapsed_ms: start.elapsed().as_millis() as u64,
    };

    if sql.trim().is_empty() {
        return fail(ExecErrorKind::Syntax, "empty statement".into());
    }

    if compare::has_multiple_statements(sql) {
        return fail(ExecErrorKind::Runtime, "multiple statements are not allowed".into());
    }

    let conn = &db.conn;
    let stmt = match conn.prepare(sql) {
        Ok(s) => s,
        Err(e) => return fail(classify_prepare_error(&e), e.to_string()),
    };
    if !stmt.readonly() {
        return fail(ExecErrorKind::Runtime, "mutating statements are not allowed".into());
    }

    let interrupt = conn.get_interrupt_handle();
    let done = Arc::new(AtomicBool::new(false));
    let fired = Arc::new(AtomicBool::new(false));
    let watchdog = {
        let done = done.clone();
        let fired = fired.clone();
        let limit = Duration::from_millis(timeout_ms);
        std::thread::spawn(move || {
            let begun = Instant::now();
            while begun.elapsed() < limit {
                if done.load(Ordering::Relaxed) {
                    return;
                }
                std::thread::sleep(Duration::from_millis(2));
            }
            if !done.load(Ordering::Relaxed) {
                fired.store(true, Ordering::Relaxed);
                interrupt.interrupt();
            }
        })
    };

    let mut stmt = stmt;
    let ncols = stmt.column_count();
    let run = (|| -> rusqlite::Result<Vec<Vec<NormalizedValue>>> {
        let mut out = Vec::new();
        let mut rows = stmt.query([])?;
        while let Some(row) = rows.next()? {
            let mut cells = Vec::with_capacity(ncols);
            for i in 0..ncols {
                let raw = match row.get_ref(i)? {
                    rusqlite::types::ValueRef::Null => CellValue::Null,
                    rusqlite::types::ValueRef::Integer(v) => CellValue::Integer(v),
                    rusqlite::types::ValueRef::Real(v) => CellValue::Real(v),
                    rusqlite::types::ValueRef::Text(t) => {
                        CellValue::Text(String::from_utf8_lossy(t).into_owned())
                    }
                    rusqlite::types::ValueRef::Blob(b) => CellValue::Blob(b.to_vec()),
                };
                cells.push(normalize_cell(&raw, policy));
            }
            out.push(cells);
        }
        Ok(out)
    })();

    done.store(true, Ordering::Relaxed);
    let _ = watchdog.join();

    match run {
        Ok(rows) => ExecOutcome {
            result: Ok(ResultTable { rows, columns: ncols }),
            elapsed_ms: start.elapsed().as_millis() as u64,
        },
        Err(e) => {
            let timed_out = fired.load(Ordering::Relaxed)
                || matches!(
                    &e,
                    rusqlite::Error::SqliteFailure(f, _)
                        if f.code == rusqlite::ErrorCode::OperationInterrupted
                );
            if timed_out {
                fail(ExecErrorKind::Timeout, format!("query exceeded {timeout_ms} ms"))
            } else {
                fail(ExecErrorKind::Runtime, e.to_string())
            }
        }
    }
}

/// Resolves `db_root/<db_id>/<db_id>.sqlite` paths and opens handles,
/// counting opens so callers can verify handle deduplication.
pub struct DbRegistry {
    root: PathBuf,
    opened: AtomicUsize,
    shared: std::sync::Mutex<HashMap<String, Arc<DbHandle>>>,
}

impl DbRegistry {
    pub fn new(root: &Path) -> DbRegistry {
        DbRegistry {
            root: root.to_path_buf(),
            opened: AtomicUsize::new(0),
            shared: std::sync::Mutex::new(HashMap::new()),
        }
    }

    pub fn path_for(&self, db_id: &str) -> PathBuf {
        self.root.join(db_id).join(format!("{db_id}.sqlite"))
    }

    pub fn exists(&self, db_id: &str) -> bool {
        self.path_for(db_id).exists()
    }

    /// Opens a fresh handle (one connection per worker).
    pub fn open(&self, db_id: &str) -> Result<DbHandle, DbError> {
        let h = DbHandle::open(&self.path_for(db_id))?;
        self.opened.fetch_add(1, Ordering::Relaxed);
        Ok(h)
    }

    /// Returns a handle shared within this registry, opening at most one
    /// connection per database. Intended for single-threaded phases such as
    /// load-time gold validation.
    pub fn shared(&self, db_id: &str) -> Result<Arc<DbHandle>, DbError> {
        let mut map = self.shared.lock().unwrap();
        if let Some(h) = map.get(db_id) {
            return Ok(h.clone());
        }
        let h = Arc::new(DbHandle::open(&self.path_for(db_id))?);
        self.opened.fetch_add(1, Ordering::Relaxed);
        map.insert(db_id.to_string(), h.clone());
        Ok(h)
    }

    pub fn opened_count(&self) -> usize {
        self.opened.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mem_db() -> DbHandle {
        let db = DbHandle::open_in_memory().unwrap();
        db.connection()
            .execute_batch(
                "CREATE TABLE t(a INTEGER, b TEXT);
                 INSERT INTO t VALUES (1, 'x'), (2, 'y');",
            )
            .unwrap();
        db
    }

    #[test]
    fn constant_select() {
        let db = DbHandle::open_in_memory().unwrap();
        let out = execute("SELECT 1", &db, 1000, &ComparePolicy::default());
        let rows = out.rows().unwrap();
        assert_eq!(rows.rows, vec![vec![NormalizedValue::Int(1)]]);
        assert_eq!(rows.columns, 1);
    }

    #[test]
    fn syntax_error_classified() {
        let db = mem_db();
        let out = execute("SELEC 1", &db, 1000, &ComparePolicy::default());
        assert_eq!(out.result.unwrap_err().kind, ExecErrorKind::Syntax);
    }

    #[test]
    fn mutating_statement_rejected() {
        let db = mem_db();
        let out = execute("DROP TABLE t", &db, 1000, &ComparePolicy::default());
        let err = out.result.unwrap_err();
        assert_eq!(err.kind, ExecErrorKind::Runtime);
        // table still present
        let again = execute("SELECT COUNT(*) FROM t", &db, 1000, &ComparePolicy::default());
        assert!(again.is_ok());
    }

    #[test]
    fn multiple_statements_rejected() {
        let db = mem_db();
        let out = execute("SELECT 1; SELECT 2", &db, 1000, &ComparePolicy::default());
        assert_eq!(out.result.unwrap_err().kind, ExecErrorKind::Runtime);
    }

    #[test]
    fn timeout_interrupts_long_query() {
        let db = DbHandle::open_in_memory().unwrap();
        // recursive CTE that would run for a very long time
        let sql = "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x+1 FROM c) \
                   SELECT COUNT(*) FROM c";
        let out = execute(sql, &db, 50, &ComparePolicy::default());
        assert_eq!(out.result.unwrap_err().kind, ExecErrorKind::Timeout);
    }

    #[test]
    fn empty_statement_is_syntax_error() {
        let db = mem_db();
        let out = execute("   ", &db, 1000, &ComparePolicy::default());
        assert_eq!(out.result.unwrap_err().kind, ExecErrorKind::Syntax);
    }
}
