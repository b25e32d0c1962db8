//! Result envelope and its CSV/JSON export.
//!
//! `result.json` carries the payload and is reproducible bit for bit; `meta.json`
//! carries the version, the effective configuration and the wall time. In CSV mode
//! every table also goes to `<name>.csv` and is left out of `result.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::config::{Format, RunConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Long form `(row, col, value)` of a grid.
    pub fn heatmap(grid: &nalgebra::DMatrix<f64>) -> Self {
        let mut t = Self::new(["row", "col", "value"]);
        for i in 0..grid.nrows() {
            for j in 0..grid.ncols() {
                t.push(vec![i as f64, j as f64, grid[(i, j)]]);
            }
        }
        t
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .with_context(|| format!("creating {}", path.display()))?;
        w.write_record(&self.columns)?;
        for row in &self.rows {
            // `{}` on f64 is the shortest decimal that parses back to the same bits.
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
        let columns = r.headers()?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .with_context(|| format!("{}: bad number in data row {}", path.display(), line + 1))?;
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }
}

/// Everything a command produced that should be reproducible.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Payload {
    /// Headline numbers, also echoed to stdout.
    pub scalars: BTreeMap<String, Value>,
    /// Histories kept in `result.json` in every format.
    pub series: BTreeMap<String, Vec<f64>>,
    pub tables: BTreeMap<String, Table>,
}

impl Payload {
    pub fn scalar(&mut self, key: &str, value: impl Serialize) {
        self.scalars.insert(key.to_owned(), serde_json::to_value(value).expect("plain value"));
    }

    pub fn series(&mut self, key: &str, values: Vec<f64>) {
        self.series.insert(key.to_owned(), values);
    }

    pub fn table(&mut self, key: &str, table: Table) {
        self.tables.insert(key.to_owned(), table);
    }

    fn json(&self, with_tables: bool) -> Value {
        let mut root = serde_json::Map::new();
        root.insert("scalars".into(), Value::Object(self.scalars.clone().into_iter().collect()));
        root.insert("series".into(), serde_json::to_value(&self.series).expect("finite lists"));
        if with_tables {
            root.insert("tables".into(), serde_json::to_value(&self.tables).expect("tables"));
        }
        Value::Object(root)
    }

    pub fn summary(&self) -> String {
        self.scalars.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    version: &'static str,
    command: &'a str,
    config: &'a RunConfig,
    wall_time_s: f64,
    files: Vec<String>,
}

/// Writes the envelope into `dir` and returns the files written.
pub fn export(payload: &Payload, dir: &Path, format: Format, command: &str, config: &RunConfig, wall_time_s: f64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let mut files = Vec::new();
    if format == Format::Csv {
        for (name, table) in &payload.tables {
            let path = dir.join(format!("{name}.csv"));
            table.write_csv(&path)?;
            files.push(path);
        }
    }
    let result = dir.join("result.json");
    write_json(&result, &payload.json(format == Format::Json))?;
    files.push(result);

    let meta = Meta {
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        wall_time_s,
        files: files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect(),
    };
    let meta_path = dir.join("meta.json");
    write_json(&meta_path, &serde_json::to_value(&meta)?)?;
    files.push(meta_path);
    Ok(files)
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn csv_floats_round_trip(rows in proptest::collection::vec(proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 3), 1..20)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("t.csv");
            let mut t = Table::new(["a", "b", "c"]);
            for r in &rows {
                t.push(r.clone());
            }
            t.write_csv(&path).unwrap();
            let back = Table::read_csv(&path).unwrap();
            prop_assert_eq!(&back.columns, &t.columns);
            for (x, y) in back.rows.iter().flatten().zip(t.rows.iter().flatten()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut t = Table::new(["t_start", "u_1"]);
        t.push(vec![0.0, 0.1]);
        t.push(vec![0.5, -2.5e-12]);
        t.write_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "t_start,u_1\n0,0.1\n0.5,-0.0000000000025\n");
    }

    #[test]
    fn heatmap_is_long_form() {
        let grid = nalgebra::DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let t = Table::heatmap(&grid);
        assert_eq!(t.columns, ["row", "col", "value"]);
        assert_eq!(t.rows[4], vec![1.0, 1.0, 5.0]);
    }

    #[test]
    fn json_keys_are_sorted() {
        let mut p = Payload::default();
        p.scalar("zeta", 1);
        p.scalar("alpha", 2.5);
        let text = serde_json::to_string(&p.json(true)).unwrap();
        assert!(text.find("alpha").unwrap() < text.find("zeta").unwrap());
        assert!(text.find("scalars").unwrap() < text.find("series").unwrap());
    }
}
