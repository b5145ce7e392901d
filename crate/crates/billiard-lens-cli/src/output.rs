//! Reports and tabular artifacts.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::{CliError, Result};

/// A CSV artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push<I, S>(&mut self, row: I)
    where
        I: IntoIterator<Item = S>,
        S: ToString,
    {
        self.rows.push(row.into_iter().map(|c| c.to_string()).collect());
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| CliError::Library(e.into());
        w.write_record(&self.header).map_err(fail)?;
        for r in &self.rows {
            w.write_record(r).map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Library(billiard_lens::Error::Io(e.into_error())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Result of one command: report body, CSV tables and violated numeric contracts.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub body: Map<String, Value>,
    pub tables: Vec<Table>,
    pub violations: Vec<String>,
}

impl Outcome {
    pub fn new<T: Serialize>(body: &T) -> Self {
        let body = match serde_json::to_value(body).expect("report bodies serialize") {
            Value::Object(m) => m,
            other => {
                let mut m = Map::new();
                m.insert("result".into(), other);
                m
            }
        };
        Self { body, tables: Vec::new(), violations: Vec::new() }
    }

    pub fn with_table(mut self, t: Table) -> Self {
        self.tables.push(t);
        self
    }

    /// Records a violated contract when `ok` is false.
    pub fn require(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.violations.push(what.into());
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.violations.is_empty() {
            crate::EXIT_OK
        } else {
            crate::EXIT_NUMERIC
        }
    }

    /// The JSON report: body fields plus command, seed, status and violations.
    pub fn report(&self, command: &str, seed: u64) -> String {
        let mut m = self.body.clone();
        m.insert("command".into(), Value::from(command));
        m.insert("seed".into(), Value::from(seed));
        let status = if self.violations.is_empty() { "ok" } else { "numeric-contract" };
        m.insert("status".into(), Value::from(status));
        m.insert("violations".into(), Value::from(self.violations.clone()));
        let mut s = serde_json::to_string_pretty(&Value::Object(m)).expect("reports serialize");
        s.push('\n');
        s
    }

    /// Writes `<command>.json` and one CSV per table into `dir`.
    pub fn write(&self, dir: &Path, command: &str, seed: u64) -> Result<()> {
        let wrap = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CliError::Write { path, source }
        };
        fs::create_dir_all(dir).map_err(wrap(dir))?;
        let report = dir.join(format!("{command}.json"));
        fs::write(&report, self.report(command, seed)).map_err(wrap(&report))?;
        for t in &self.tables {
            let path = dir.join(format!("{}.csv", t.name));
            fs::write(&path, t.to_csv()?).map_err(wrap(&path))?;
        }
        Ok(())
    }
}
