//! Comparison rows and table writers.

use std::fmt::Write as _;

use serde::Serialize;

use crate::solver::{SolveReport, Status};

/// Bound comparison for one instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub id: String,
    pub oracle_value: Option<f64>,
    pub tp_bound: f64,
    pub qp_bound: f64,
    pub tp_status: Status,
    pub qp_status: Status,
    pub ratio: Option<f64>,
    /// Both bounds are consistent with the best feasible point found.
    pub sound: bool,
    pub error: Option<String>,
}

/// `(tp - qp) / (oracle - qp)` when both bounds are finite and the denominator is not tiny.
pub fn ratio(oracle: f64, tp: f64, qp: f64) -> Option<f64> {
    let den = oracle - qp;
    (tp.is_finite() && qp.is_finite() && oracle.is_finite() && den.abs() > 1e-9).then(|| (tp - qp) / den)
}

pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "-".into()
    } else if v.is_infinite() {
        "Unbounded".into()
    } else {
        let s = format!("{v:.4}");
        if s == "-0.0000" { "0.0000".into() } else { s }
    }
}

pub fn fmt_bound(r: &SolveReport) -> String {
    match r.status {
        Status::Optimal => fmt_num(r.primal_value),
        Status::Unbounded => "Unbounded".into(),
        Status::Infeasible => "Infeasible".into(),
        _ => "ERR".into(),
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), fmt_num)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Summary lines printed after the table.
    pub notes: Vec<String>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Table { headers: headers.iter().map(|h| h.to_string()).collect(), ..Default::default() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| {} |", self.headers.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(self.headers.len()));
        for r in &self.rows {
            let _ = writeln!(out, "| {} |", r.join(" | "));
        }
        for n in &self.notes {
            let _ = writeln!(out, "\n{n}");
        }
        out
    }

    pub fn csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        let mut out = String::from_utf8(w.into_inner().expect("flush")).expect("utf8");
        for n in &self.notes {
            let _ = writeln!(out, "# {n}");
        }
        out
    }
}

pub fn comparison_table(rows: &[ComparisonRow]) -> Table {
    let mut t = Table::new(&["instance", "oracle", "TP-DNN", "QP-DNN", "ratio", "sound"]);
    for r in rows {
        if let Some(e) = &r.error {
            t.push(vec![r.id.clone(), "ERR".into(), "ERR".into(), "ERR".into(), "-".into(), e.clone()]);
            continue;
        }
        let bound = |v: f64, s: Status| match s {
            Status::Optimal => fmt_num(v),
            Status::Unbounded => "Unbounded".into(),
            Status::Infeasible => "Infeasible".into(),
            _ => "ERR".into(),
        };
        t.push(vec![
            r.id.clone(),
            fmt_opt(r.oracle_value),
            bound(r.tp_bound, r.tp_status),
            bound(r.qp_bound, r.qp_status),
            fmt_opt(r.ratio),
            if r.sound { "yes" } else { "NO" }.into(),
        ]);
    }
    let defined: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let mean = if defined.is_empty() { None } else { Some(defined.iter().sum::<f64>() / defined.len() as f64) };
    let unb = |f: fn(&ComparisonRow) -> Status| rows.iter().filter(|r| f(r) == Status::Unbounded).count();
    let tp_ge = rows
        .iter()
        .filter(|r| r.tp_status == Status::Optimal && (r.qp_status == Status::Unbounded || r.tp_bound >= r.qp_bound - 1e-6))
        .count();
    t.notes.push(format!("mean ratio {} over {} defined rows", fmt_opt(mean), defined.len()));
    t.notes.push(format!("unbounded TP-DNN {} QP-DNN {}", unb(|r| r.tp_status), unb(|r| r.qp_status)));
    t.notes.push(format!("TP-DNN >= QP-DNN on {} of {} rows", tp_ge, rows.len()));
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_cases() {
        assert_eq!(ratio(-1.0, -2.0, -3.0), Some(0.5));
        assert_eq!(ratio(-1.0, -2.0, f64::NEG_INFINITY), None);
        assert_eq!(ratio(-1.0, -1.0, -1.0), None);
        assert_eq!(ratio(-1.0, -3.0, -3.0), Some(0.0));
    }

    #[test]
    fn csv_and_markdown_agree() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![fmt_num(-0.25), fmt_num(f64::NEG_INFINITY)]);
        assert!(t.markdown().contains("| -0.2500 | Unbounded |"));
        assert!(t.csv().contains("-0.2500,Unbounded"));
        assert_eq!(fmt_num(-1e-9), "0.0000");
    }
}
