use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A long-format numeric table. Integers are stored as exact floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub study: String,
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(study: &str, name: &str, columns: &[&str]) -> Self {
        Self {
            study: study.into(),
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| invalid(format!("table {} has no column {name}", self.name)))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Rows where every `(column, value)` pair matches exactly.
    pub fn select(&self, filters: &[(&str, f64)]) -> Result<Vec<&Vec<f64>>> {
        let idx = filters
            .iter()
            .map(|(c, v)| Ok((self.column_index(c)?, *v)))
            .collect::<Result<Vec<_>>>()?;
        Ok(self
            .rows
            .iter()
            .filter(|r| idx.iter().all(|&(i, v)| r[i] == v))
            .collect())
    }

    /// Sorted distinct values of a column.
    pub fn distinct(&self, name: &str) -> Result<Vec<f64>> {
        let mut v = self.column(name)?;
        v.sort_by(f64::total_cmp);
        v.dedup();
        Ok(v)
    }

    pub fn find<'a>(tables: &'a [Table], name: &str) -> Result<&'a Table> {
        tables
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| invalid(format!("missing table {name}")))
    }

    /// CSV text with a leading `study` column. Floats use the shortest
    /// representation that round-trips.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["study".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![self.study.clone()];
            rec.extend(row.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn from_csv(name: &str, text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        if header.first().map(String::as_str) != Some("study") {
            return Err(invalid(format!("{name}: first column must be `study`")));
        }
        let mut study = String::new();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            study = rec[0].to_string();
            rows.push(
                rec.iter()
                    .skip(1)
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|e| invalid(format!("{name}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(Self {
            study,
            name: name.into(),
            columns: header[1..].to_vec(),
            rows,
        })
    }
}

/// A named pass/fail check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub study: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Contract {
    pub fn new(study: &str, name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            study: study.into(),
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutput {
    pub raw: Vec<Table>,
    pub derived: Vec<Table>,
    pub contracts: Vec<Contract>,
}

impl StudyOutput {
    pub fn passed(&self) -> bool {
        self.contracts.iter().all(|c| c.passed)
    }

    pub fn contract(&self, name: &str) -> Option<&Contract> {
        self.contracts.iter().find(|c| c.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.raw
            .iter()
            .chain(&self.derived)
            .find(|t| t.name == name)
    }
}
