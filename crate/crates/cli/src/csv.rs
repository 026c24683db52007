//! Plot-ready CSV tables.
//!
//! Line one is `# units: ...`, line two the column names, then one row per
//! record. Floats use Rust's shortest round-trip scientific form, so parsing a
//! cell gives back the exact f64. NaN is written as `NA`.

use std::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell<'a> {
    Float(f64),
    Int(u64),
    Text(&'a str),
}

impl From<f64> for Cell<'_> {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u64> for Cell<'_> {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell<'_> {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl<'a> From<&'a str> for Cell<'a> {
    fn from(v: &'a str) -> Self {
        Cell::Text(v)
    }
}

pub const NA: &str = "NA";

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        NA.to_string()
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    columns: Vec<String>,
    units: Vec<String>,
    body: String,
    rows: usize,
}

impl Table {
    /// `columns` pairs each header with its unit.
    pub fn new(columns: &[(&str, &str)]) -> Self {
        Table {
            columns: columns.iter().map(|(c, _)| c.to_string()).collect(),
            units: columns.iter().map(|(c, u)| format!("{c}={u}")).collect(),
            body: String::new(),
            rows: 0,
        }
    }

    pub fn push(&mut self, row: &[Cell<'_>]) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width does not match header"
        );
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                self.body.push(',');
            }
            match cell {
                Cell::Float(v) => self.body.push_str(&format_float(*v)),
                Cell::Int(v) => write!(self.body, "{v}").unwrap(),
                Cell::Text(s) => self.body.push_str(s),
            }
        }
        self.body.push('\n');
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn render(&self) -> String {
        format!(
            "# units: {}\n{}\n{}",
            self.units.join(", "),
            self.columns.join(","),
            self.body
        )
    }
}

/// Parses a table written by [`Table::render`] into its header and float
/// rows (`NA` becomes NaN, non-numeric cells are an error).
pub fn parse(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l.starts_with("# units:") => {}
        other => return Err(format!("missing units line, got {other:?}")),
    }
    let header: Vec<String> = lines
        .next()
        .ok_or("missing header")?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|c| {
                if c == NA {
                    Ok(f64::NAN)
                } else {
                    c.parse::<f64>()
                }
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("row {}: {e}", i + 1))?;
        if row.len() != header.len() {
            return Err(format!(
                "row {} has {} cells, header {}",
                i + 1,
                row.len(),
                header.len()
            ));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_round_trip() {
        let mut t = Table::new(&[("t", "s"), ("var_x", "cm^2"), ("n", "1")]);
        let v = 1.0545887e-27_f64 / 3.0;
        t.push(&[0.5.into(), v.into(), 7usize.into()]);
        t.push(&[1.0.into(), f64::NAN.into(), 8usize.into()]);
        let text = t.render();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# units: t=s, var_x=cm^2, n=1"));
        assert_eq!(lines.next(), Some("t,var_x,n"));
        assert_eq!(lines.nth(1), Some("1e0,NA,8"));
        let (h, rows) = parse(&text).unwrap();
        assert_eq!(h, ["t", "var_x", "n"]);
        assert_eq!(rows[0][1], v);
        assert!(rows[1][1].is_nan());
    }

    #[test]
    #[should_panic]
    fn row_width_checked() {
        Table::new(&[("a", "1")]).push(&[1.0.into(), 2.0.into()]);
    }
}
