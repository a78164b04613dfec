//! Tabular output shared by all subcommands: fixed column sets, explicit
//! nulls, CSV and JSON emission with lossless-enough float formatting.

use std::io::Write;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Str(String),
    U64(u64),
    F64(f64),
    Bool(bool),
    Null,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Str(s) => s.clone(),
            Cell::U64(v) => v.to_string(),
            Cell::F64(v) => fmt_sig12(*v),
            Cell::Bool(b) => b.to_string(),
            Cell::Null => "null".to_string(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Str(s) => serde_json::Value::String(s.clone()),
            Cell::U64(v) => serde_json::json!(v),
            Cell::F64(v) => serde_json::json!(v),
            Cell::Bool(b) => serde_json::Value::Bool(*b),
            Cell::Null => serde_json::Value::Null,
        }
    }
}

/// 12 significant digits, scientific notation.
pub fn fmt_sig12(v: f64) -> String {
    format!("{v:.11e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

pub struct Table {
    /// Lines written as leading `#` comments in CSV output.
    pub comments: Vec<String>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Table {
            comments: Vec::new(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, format: OutputFormat, out: &mut dyn Write) -> std::io::Result<()> {
        match format {
            OutputFormat::Csv => {
                for comment in &self.comments {
                    writeln!(out, "# {comment}")?;
                }
                writeln!(out, "{}", self.columns.join(","))?;
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                    writeln!(out, "{}", cells.join(","))?;
                }
            }
            OutputFormat::Json => {
                let rows: Vec<serde_json::Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        self.columns
                            .iter()
                            .zip(row)
                            .map(|(&c, cell)| (c.to_string(), cell.json()))
                            .collect::<serde_json::Map<_, _>>()
                            .into()
                    })
                    .collect();
                serde_json::to_writer_pretty(&mut *out, &rows)?;
                writeln!(out)?;
            }
        }
        Ok(())
    }
}
