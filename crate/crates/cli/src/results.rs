//! Per-frame result rows and their CSV form.

use std::path::Path;

use anyhow::{Context, Result};
use groundpose::estimator::{ParamVector, StageRecord};
use serde::{Deserialize, Serialize};

pub const HEADER: [&str; 13] = [
    "frame",
    "stage",
    "theta_p_deg",
    "phi_p_deg",
    "theta_c_deg",
    "phi_c_deg",
    "tx_mm",
    "tz_mm",
    "psi_deg",
    "dist_mm",
    "rms",
    "inliers",
    "quality",
];

/// Rounds to nine significant digits.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.8e}").parse().expect("formatted float parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub frame: usize,
    pub stage: String,
    pub theta_p_deg: f64,
    pub phi_p_deg: f64,
    pub theta_c_deg: f64,
    pub phi_c_deg: f64,
    pub tx_mm: f64,
    pub tz_mm: f64,
    pub psi_deg: f64,
    pub dist_mm: f64,
    pub rms: f64,
    pub inliers: usize,
    pub quality: String,
}

impl ResultRow {
    /// Row with every value already rounded to what the CSV will hold.
    pub fn new(
        frame: usize,
        stage: &str,
        p: &ParamVector,
        rms: f64,
        inliers: usize,
        quality: &str,
    ) -> Self {
        Self {
            frame,
            stage: stage.to_string(),
            theta_p_deg: round_sig(p.pitch_prev.to_degrees()),
            phi_p_deg: round_sig(p.roll_prev.to_degrees()),
            theta_c_deg: round_sig(p.pitch_cur.to_degrees()),
            phi_c_deg: round_sig(p.roll_cur.to_degrees()),
            tx_mm: round_sig(p.tx),
            tz_mm: round_sig(p.tz),
            psi_deg: round_sig(p.yaw.to_degrees()),
            dist_mm: round_sig(p.travel()),
            rms: round_sig(rms),
            inliers,
            quality: quality.to_string(),
        }
    }

    pub fn from_stage(frame: usize, record: &StageRecord, quality: &str) -> Self {
        Self::new(
            frame,
            &record.stage.to_string(),
            &record.params,
            record.rms,
            record.inlier_count,
            quality,
        )
    }

    /// Placeholder for a pair that produced no estimate.
    pub fn failed(frame: usize) -> Self {
        Self {
            frame,
            stage: "initial".into(),
            theta_p_deg: f64::NAN,
            phi_p_deg: f64::NAN,
            theta_c_deg: f64::NAN,
            phi_c_deg: f64::NAN,
            tx_mm: f64::NAN,
            tz_mm: f64::NAN,
            psi_deg: f64::NAN,
            dist_mm: f64::NAN,
            rms: f64::NAN,
            inliers: 0,
            quality: "failed".into(),
        }
    }

    fn record(&self) -> Vec<String> {
        let f = |v: f64| format!("{}", round_sig(v));
        vec![
            self.frame.to_string(),
            self.stage.clone(),
            f(self.theta_p_deg),
            f(self.phi_p_deg),
            f(self.theta_c_deg),
            f(self.phi_c_deg),
            f(self.tx_mm),
            f(self.tz_mm),
            f(self.psi_deg),
            f(self.dist_mm),
            f(self.rms),
            self.inliers.to_string(),
            self.quality.clone(),
        ]
    }
}

pub fn to_csv(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.into_inner().context("flushing CSV")
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    std::fs::write(path, to_csv(rows)?).with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        anyhow::bail!(
            "{} has an unexpected header: {}",
            path.display(),
            header.join(",")
        );
    }
    r.deserialize()
        .collect::<std::result::Result<Vec<ResultRow>, _>>()
        .with_context(|| format!("malformed row in {}", path.display()))
}
