//! Normalized result tables and the equality policy behind both the
//! execution-agreement reward and the EX metric.

use crate::model::{ComparePolicy, NormalizedValue};
use serde::{Deserialize, Serialize};

/// Rows of normalized cells. Rectangular: every row has `columns` cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<Vec<NormalizedValue>>,
    pub columns: usize,
}

impl ResultTable {
    pub fn new(rows: Vec<Vec<NormalizedValue>>, columns: usize) -> ResultTable {
        debug_assert!(rows.iter().all(|r| r.len() == columns));
        ResultTable { rows, columns }
    }

    /// Canonical form under multiset row semantics: rows sorted
    /// lexicographically. Tables equal under the order-insensitive policy
    /// share a canonical form, which is what result clustering hashes.
    pub fn canonical(&self) -> ResultTable {
        let mut rows = self.rows.clone();
        rows.sort();
        ResultTable { rows, columns: self.columns }
    }
}

/// Compares two result tables under the policy.
///
/// Arity must match. Under `order_sensitive` rows are compared as lists,
/// otherwise as multisets. Cells are already normalized, so plain equality
/// is all that is needed here.
pub fn results_equal(a: &ResultTable, b: &ResultTable, policy: &ComparePolicy) -> bool {
    if a.columns != b.columns || a.rows.len() != b.rows.len() {
        return false;
    }
    if policy.order_sensitive {
        a.rows == b.rows
    } else {
        a.canonical().rows == b.canonical().rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok<'a> {
    Word(&'a str),
    LParen,
    RParen,
    Semicolon,
    Other,
}

/// Minimal SQL lexer: yields words, parens, and semicolons while skipping
/// string literals, quoted identifiers, and comments. Never fails; malformed
/// input simply produces fewer tokens.
fn scan_tokens(sql: &str) -> Vec<Tok<'_>> {
    let bytes = sql.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            '\'' | '"' | '`' => {
                let quote = bytes[i];
                i += 1;
                while i < bytes.len() {
                    if bytes[i] == quote {
                        // doubled quote is an escaped quote inside the literal
                        if i + 1 < bytes.len() && bytes[i + 1] == quote {
                            i += 2;
                            continue;
                        }
                        i += 1;
                        break;
                    }
                    i += 1;
                }
            }
            '[' => {
                // bracket-quoted identifier
                while i < bytes.len() && bytes[i] != b']' {
                    i += 1;
                }
                i += 1;
            }
            '-' if i + 1 < bytes.len() && bytes[i + 1] == b'-' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            '/' if i + 1 < bytes.len() && bytes[i + 1] == b'*' => {
                i += 2;
                while i + 1 < bytes.len() && !(bytes[i] == b'*' && bytes[i + 1] == b'/') {
                    i += 1;
                }
                i = (i + 2).min(bytes.len());
            }
            '(' => {
                toks.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                toks.push(Tok::RParen);
                i += 1;
            }
            ';' => {
                toks.push(Tok::Semicolon);
                i += 1;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                toks.push(Tok::Word(&sql[start..i]));
            }
            c if c.is_whitespace() => i += 1,
            _ => {
                toks.push(Tok::Other);
                i += 1;
            }
        }
    }
    toks
}

/// True iff the outermost SELECT carries an ORDER BY clause. ORDER BY inside
/// parenthesized subqueries or CTE bodies is ignored: only depth-0 matters.
pub fn order_sensitive(sql: &str) -> bool {
    let toks = scan_tokens(sql);
    let mut depth: i32 = 0;
    let mut i = 0;
    while i < toks.len() {
        match toks[i] {
            Tok::LParen => depth += 1,
            Tok::RParen => depth = (depth - 1).max(0),
            Tok::Word(w) if depth == 0 && w.eq_ignore_ascii_case("order") => {
                if let Some(Tok::Word(next)) = toks.get(i + 1) {
                    if next.eq_ignore_ascii_case("by") {
                        return true;
                    }
                }
            }
            _ => {}
        }
        i += 1;
    }
    false
}

/// True when the string contains a second statement after a top-level `;`.
pub fn has_multiple_statements(sql: &str) -> bool {
    let toks = scan_tokens(sql);
    let mut seen_semicolon = false;
    for t in toks {
        match t {
            Tok::Semicolon => seen_semicolon = true,
            _ if seen_semicolon => return true,
            _ => {}
        }
    }
    false
}
