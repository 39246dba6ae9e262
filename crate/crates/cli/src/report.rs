use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde_json::{json, Value};

use privopt::json::to_pretty;

/// Output of a `verify` run. Everything but the optional wall-clock field is
/// a function of the command line.
pub struct RunReport {
    command: Vec<String>,
    seed: Option<u64>,
    trials: Vec<Value>,
    passed: usize,
    started: Instant,
    timing: bool,
}

impl RunReport {
    pub fn new(command: &[String], seed: Option<u64>, timing: bool) -> Self {
        RunReport { command: command.to_vec(), seed, trials: Vec::new(), passed: 0, started: Instant::now(), timing }
    }

    /// Adds a trial record, tagging it with its index and verdict.
    pub fn push(&mut self, mut record: Value, passed: bool) {
        if let Value::Object(obj) = &mut record {
            obj.insert("trial".into(), json!(self.trials.len()));
            obj.insert("passed".into(), json!(passed));
        }
        self.passed += passed as usize;
        self.trials.push(record);
    }

    pub fn total(&self) -> usize {
        self.trials.len()
    }

    pub fn passed(&self) -> usize {
        self.passed
    }

    pub fn all_passed(&self) -> bool {
        self.passed == self.trials.len()
    }

    pub fn to_value(&self) -> Value {
        let mut v = json!({
            "command": self.command,
            "seed": self.seed,
            "summary": {
                "trials": self.total(),
                "passed": self.passed,
                "failed": self.total() - self.passed,
            },
            "trials": self.trials,
        });
        if self.timing {
            v["wall_clock_seconds"] = json!(self.started.elapsed().as_secs_f64());
        }
        v
    }

    pub fn write(&self, path: Option<&Path>) -> Result<()> {
        match path {
            Some(p) => write_text(p, &to_pretty(&self.to_value())),
            None => Ok(()),
        }
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes `header` and `rows` as CSV.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}
