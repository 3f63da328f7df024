use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::ser::{Serialize, SerializeMap, SerializeSeq, Serializer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Str(String),
    Num(f64),
    Int(u64),
    Bool(bool),
    Empty,
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Str(s) => s.clone(),
            Cell::Num(x) => x.to_string(),
            Cell::Int(n) => n.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Str(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Str(s)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as u64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Cell::Str(v) => s.serialize_str(v),
            Cell::Num(x) if x.is_finite() => s.serialize_f64(*x),
            Cell::Int(n) => s.serialize_u64(*n),
            Cell::Bool(b) => s.serialize_bool(*b),
            Cell::Num(_) | Cell::Empty => s.serialize_none(),
        }
    }
}

/// Rows with a fixed header, written as CSV or as a JSON array of objects
/// whose keys keep header order.
#[derive(Clone, Debug)]
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

struct JsonRow<'a>(&'a [&'static str], &'a [Cell]);

impl Serialize for JsonRow<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0.iter().zip(self.1) {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl Serialize for Table {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.rows.len()))?;
        for row in &self.rows {
            seq.serialize_element(&JsonRow(&self.header, row))?;
        }
        seq.end()
    }
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width does not match header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// Writes `<dir>/<stem>.<csv|json>` and returns the file name.
    pub fn write(&self, dir: &Path, stem: &str, format: Format) -> Result<String> {
        let name = format!("{stem}.{}", format.extension());
        let path: PathBuf = dir.join(&name);
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
                w.write_record(&self.header)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::text))?;
                }
                w.flush()?;
            }
            Format::Json => {
                let mut text = serde_json::to_string_pretty(self)?;
                text.push('\n');
                std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Ok(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_keeps_header_order_and_nulls() {
        let mut t = Table::new(&["step", "current_score", "triggered"]);
        t.push(vec![0usize.into(), Cell::Empty, false.into()]);
        t.push(vec![1usize.into(), 0.25.into(), true.into()]);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(
            json,
            r#"[{"step":0,"current_score":null,"triggered":false},{"step":1,"current_score":0.25,"triggered":true}]"#
        );
    }

    #[test]
    fn csv_leaves_missing_cells_blank() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(&["id", "score"]);
        t.push(vec!["a,b".into(), Cell::Empty]);
        t.push(vec!["c".into(), 0.5.into()]);
        let name = t.write(dir.path(), "scores", Format::Csv).unwrap();
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text, "id,score\n\"a,b\",\nc,0.5\n");
    }
}
