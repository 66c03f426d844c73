use std::fmt::Write as _;
use std::path::Path;

use entseg::evaluator::{ApReport, PqReport};
use entseg::loss::LossCheck;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const TOOL: &str = "entseg";

/// A machine-readable command result. `config_hash` is the SHA-256 of the
/// compact, key-sorted JSON form of `config`.
#[derive(Debug, Serialize)]
pub struct Report<C, R> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: C,
    pub config_hash: String,
    pub result: R,
}

impl<C: Serialize, R: Serialize> Report<C, R> {
    pub fn new(command: &'static str, config: C, result: R) -> CliResult<Self> {
        Ok(Self {
            tool: TOOL,
            version: entseg::VERSION,
            command,
            config_hash: config_hash(&config)?,
            config,
            result,
        })
    }

    pub fn to_json(&self) -> CliResult<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| {
            CliError::Core(entseg::Error::Io {
                path: path.to_owned(),
                source: e,
            })
        })
    }
}

pub fn config_hash<C: Serialize>(config: &C) -> CliResult<String> {
    // Value objects keep keys sorted
    let text = serde_json::to_value(config)?.to_string();
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |x| format!("{x:.4}"))
}

pub fn ap_table(title: &str, r: &ApReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{title}");
    for (name, v) in [
        ("AP", r.ap),
        ("AP50", r.ap50),
        ("AP75", r.ap75),
        ("AP_S", r.ap_s),
        ("AP_M", r.ap_m),
        ("AP_L", r.ap_l),
    ] {
        let _ = writeln!(s, "  {name:<10}{}", cell(v));
    }
    for t in &r.per_threshold {
        let _ = writeln!(s, "  IoU {:<6}{}", format!("{:.2}", t.iou), cell(t.ap));
    }
    s
}

pub fn pq_table(r: &PqReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "panoptic quality");
    let _ = writeln!(
        s,
        "  {:<10}{:>8}{:>8}{:>8}{:>6}{:>6}{:>6}",
        "category", "PQ", "SQ", "RQ", "TP", "FP", "FN"
    );
    let _ = writeln!(
        s,
        "  {:<10}{:>8.4}{:>8.4}{:>8.4}{:>6}{:>6}{:>6}",
        "all", r.pq, r.sq, r.rq, r.tp, r.fp, r.fn_
    );
    for (cat, c) in &r.per_category {
        let _ = writeln!(
            s,
            "  {:<10}{:>8.4}{:>8.4}{:>8.4}{:>6}{:>6}{:>6}",
            cat, c.pq, c.sq, c.rq, c.tp, c.fp, c.fn_
        );
    }
    s
}

pub fn check_table(checks: &[LossCheck]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "  {:<22}{:>9}{:>14}{:>12}  result",
        "check", "fixtures", "worst", "tolerance"
    );
    for c in checks {
        let _ = writeln!(
            s,
            "  {:<22}{:>9}{:>14.3e}{:>12.1e}  {}",
            c.name,
            c.fixtures,
            c.worst,
            c.tolerance,
            if c.passed { "PASS" } else { "FAIL" }
        );
    }
    s
}
