//! CSV tables with a fixed column order.
//!
//! Fields never contain commas, quotes or newlines: numbers are formatted
//! here, lists are joined with `;`, and free text is sanitized.

use std::collections::HashMap;

pub const SCHEMA_VERSION: u32 = 1;

/// Columns that hold wall-clock measurements and vary between reruns.
pub const TIMING_COLUMNS: &[&str] = &["wall_ms"];

/// Marker for a threshold that was never reached within the budget cap.
pub const NOT_REACHED: &str = "not_reached";

/// 17 significant digits, which round-trips every `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn fmt_list_f64(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";")
}

pub fn fmt_list_usize(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

pub fn sanitize(text: &str) -> String {
    text.chars()
        .map(|c| match c {
            ',' => ';',
            '"' => '\'',
            '\n' | '\r' => ' ',
            c => c,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Table {
    columns: Vec<&'static str>,
    index: HashMap<&'static str, usize>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        let index = columns.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        Self {
            columns,
            index,
            rows: Vec::new(),
        }
    }

    pub fn columns(&self) -> &[&'static str] {
        &self.columns
    }

    pub fn row(&self) -> Row<'_> {
        Row {
            index: &self.index,
            cells: vec![String::new(); self.columns.len()],
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// A row under construction; unset cells stay empty.
pub struct Row<'a> {
    index: &'a HashMap<&'static str, usize>,
    cells: Vec<String>,
}

impl Row<'_> {
    /// # Panics
    /// On a column name the table does not have.
    pub fn set(&mut self, column: &str, value: impl Into<String>) -> &mut Self {
        let i = *self
            .index
            .get(column)
            .unwrap_or_else(|| panic!("unknown column `{column}`"));
        self.cells[i] = value.into();
        self
    }

    pub fn f64(&mut self, column: &str, v: f64) -> &mut Self {
        self.set(column, fmt_f64(v))
    }

    pub fn finish(&mut self) -> Vec<String> {
        std::mem::take(&mut self.cells)
    }
}

/// A parsed CSV: header plus rows, for tests and downstream tools.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCsv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ParsedCsv {
    pub fn parse(text: &str) -> Self {
        let mut lines = text.lines();
        let header = lines
            .next()
            .map(|l| l.split(',').map(str::to_string).collect())
            .unwrap_or_default();
        let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
        Self { header, rows }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn get<'a>(&'a self, row: &'a [String], name: &str) -> Option<&'a str> {
        self.column(name).map(|i| row[i].as_str())
    }

    /// The same table with timing columns removed.
    pub fn without_timing(&self) -> Self {
        let keep: Vec<usize> = (0..self.header.len())
            .filter(|&i| !TIMING_COLUMNS.contains(&self.header[i].as_str()))
            .collect();
        let pick = |r: &Vec<String>| keep.iter().map(|&i| r[i].clone()).collect();
        Self {
            header: pick(&self.header),
            rows: self.rows.iter().map(pick).collect(),
        }
    }
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -123456.789, 2f64.sqrt()] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn stats() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn table_layout() {
        let mut t = Table::new(vec!["a", "wall_ms", "b"]);
        let mut r = t.row();
        r.set("b", "x").f64("a", 0.5).set("wall_ms", "12");
        let row = r.finish();
        t.push(row);
        let csv = t.to_csv();
        assert!(csv.starts_with("a,wall_ms,b\n"));
        let p = ParsedCsv::parse(&csv).without_timing();
        assert_eq!(p.header, vec!["a", "b"]);
        assert_eq!(p.rows[0][1], "x");
        assert_eq!(sanitize("a,b\nc"), "a;b c");
    }
}
