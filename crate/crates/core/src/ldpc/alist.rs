//! MacKay alist text format.

use std::fmt::Write;

use super::LdpcCode;
use crate::error::Error;
use crate::Result;

pub(super) fn write(code: &LdpcCode) -> String {
    let cols = code.var_cols();
    let rows = code.check_rows();
    let max_col = cols.iter().map(Vec::len).max().unwrap_or(0);
    let max_row = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut s = String::new();
    let join = |v: &mut dyn Iterator<Item = usize>| v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    writeln!(s, "{} {}", cols.len(), rows.len()).unwrap();
    writeln!(s, "{max_col} {max_row}").unwrap();
    writeln!(s, "{}", join(&mut cols.iter().map(Vec::len))).unwrap();
    writeln!(s, "{}", join(&mut rows.iter().map(Vec::len))).unwrap();
    for c in cols {
        let mut idx: Vec<usize> = c.iter().map(|x| x + 1).collect();
        idx.sort_unstable();
        idx.resize(max_col, 0);
        writeln!(s, "{}", join(&mut idx.into_iter())).unwrap();
    }
    for r in rows {
        let mut idx: Vec<usize> = r.iter().map(|x| x + 1).collect();
        idx.sort_unstable();
        idx.resize(max_row, 0);
        writeln!(s, "{}", join(&mut idx.into_iter())).unwrap();
    }
    s
}

pub(super) fn read(text: &str) -> Result<LdpcCode> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut numbers = |expected: Option<usize>| -> Result<(usize, Vec<usize>)> {
        let (ln, l) = lines.next().ok_or(Error::Alist { line: 0, msg: "unexpected end of file".into() })?;
        let v = l
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| Error::Alist { line: ln, msg: format!("{t:?}: {e}") }))
            .collect::<Result<Vec<_>>>()?;
        if let Some(n) = expected {
            if v.len() < n {
                return Err(Error::Alist { line: ln, msg: format!("expected {n} numbers, found {}", v.len()) });
            }
        }
        Ok((ln, v))
    };
    let (_, head) = numbers(Some(2))?;
    let (n, m) = (head[0], head[1]);
    numbers(Some(2))?;
    let (_, col_w) = numbers(Some(n))?;
    let (_, row_w) = numbers(Some(m))?;
    // Column lists are redundant with row lists; read them only to skip.
    for &w in col_w.iter().take(n) {
        numbers(Some(w))?;
    }
    let mut rows = Vec::with_capacity(m);
    for &w in row_w.iter().take(m) {
        let (ln, idx) = numbers(Some(w))?;
        let row = idx
            .into_iter()
            .filter(|&x| x != 0)
            .map(|x| if x > n { Err(Error::Alist { line: ln, msg: format!("index {x} > n = {n}") }) } else { Ok(x - 1) })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != w {
            return Err(Error::Alist { line: ln, msg: format!("row weight {} but {w} declared", row.len()) });
        }
        rows.push(row);
    }
    LdpcCode::from_check_rows(n, rows)
}
