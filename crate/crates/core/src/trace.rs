//! Per-step records shared by all engines, with CSV and JSON export.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Certified,
    Uncertified,
    BoundedOnly,
    Diverged,
    Inconsistent,
    Failed,
}

impl Status {
    pub fn is_certified(self) -> bool {
        self == Status::Certified
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub n: usize,
    pub s_n: Option<f64>,
    pub r_norm: Option<f64>,
    pub delta_norm: Option<f64>,
    pub u_norm: Option<f64>,
    pub b_n: Option<f64>,
    pub sigma_n: Option<f64>,
    pub a_n: Option<f64>,
    pub ratio: Option<f64>,
    pub log_r: Option<f64>,
    pub log_b: Option<f64>,
    pub checks_passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl StepRecord {
    pub fn new(n: usize) -> Self {
        StepRecord { n, checks_passed: true, ..Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub engine: String,
    pub status: Status,
    pub steps: Vec<StepRecord>,
    pub notes: Vec<String>,
}

pub const CSV_HEADER: [&str; 8] = ["n", "s_n", "|r_n|", "|delta_n|", "|u_n|", "b_n", "sigma_n", "checks_passed"];

fn fmt_opt(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{v:.16e}"),
        None => String::new(),
    }
}

impl IterationTrace {
    pub fn new(engine: &str) -> Self {
        IterationTrace { engine: engine.to_string(), status: Status::Uncertified, steps: Vec::new(), notes: Vec::new() }
    }

    pub fn push(&mut self, rec: StepRecord) {
        self.steps.push(rec);
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        self.notes.push(msg.into());
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.steps.last()
    }

    pub fn all_checks_passed(&self) -> bool {
        self.steps.iter().all(|s| s.checks_passed)
    }

    pub fn first_failure(&self) -> Option<usize> {
        self.steps.iter().find(|s| !s.checks_passed).map(|s| s.n)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(CSV_HEADER)?;
        for s in &self.steps {
            wr.write_record([
                s.n.to_string(),
                fmt_opt(s.s_n),
                fmt_opt(s.r_norm),
                fmt_opt(s.delta_norm),
                fmt_opt(s.u_norm),
                fmt_opt(s.b_n),
                fmt_opt(s.sigma_n),
                s.checks_passed.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_fixed_columns() {
        let mut t = IterationTrace::new("x");
        let mut r = StepRecord::new(0);
        r.s_n = Some(1.0);
        r.r_norm = Some(0.1);
        t.push(r);
        let csv = t.to_csv_string().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "n,s_n,|r_n|,|delta_n|,|u_n|,b_n,sigma_n,checks_passed");
        assert_eq!(lines.next().unwrap(), "0,1.0000000000000000e0,1.0000000000000001e-1,,,,,true");
    }

    #[test]
    fn json_roundtrip() {
        let mut t = IterationTrace::new("x");
        t.push(StepRecord::new(3));
        t.status = Status::Certified;
        let back = IterationTrace::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
    }
}
