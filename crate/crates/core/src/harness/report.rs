//! Convergence reports, slope fits and atomic CSV/JSON persistence.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::models::AssumptionCertificate;

/// Errors within this factor of the floor estimate are left out of the fit.
pub const FLOOR_MARGIN: f64 = 10.0;
/// Absolute floor for unit-norm data in double precision.
pub const ROUNDING_FLOOR: f64 = 1e-12;

pub const CSV_HEADER: &str = "experiment,kappa,error_L2,error_H2k,slope_running,floor_estimate,wall_ms";

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub experiment: String,
    pub kappa: f64,
    pub error_l2: f64,
    pub error_h2k: f64,
    pub slope_running: Option<f64>,
    pub floor_estimate: f64,
    pub at_floor: bool,
    pub wall_ms: f64,
}

/// One evaluated κ before assembly.
#[derive(Clone, Copy, Debug)]
pub struct Sample {
    pub kappa: f64,
    pub l2: f64,
    pub h2k: f64,
    pub floor: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares line through `(ln κ, ln e)`.
pub fn fit_loglog(kappas: &[f64], errors: &[f64]) -> Option<SlopeFit> {
    if kappas.len() < 2 || kappas.len() != errors.len() || errors.iter().any(|e| !(*e > 0.0)) {
        return None;
    }
    let x: Vec<f64> = kappas.iter().map(|k| k.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some(SlopeFit {
        slope,
        intercept,
        r_squared,
        points: x.len(),
    })
}

/// Slope between consecutive rows.
pub fn running_slopes(kappas: &[f64], errors: &[f64]) -> Vec<Option<f64>> {
    (0..kappas.len())
        .map(|i| {
            if i == 0 || !(errors[i] > 0.0 && errors[i - 1] > 0.0) {
                return None;
            }
            Some((errors[i] / errors[i - 1]).ln() / (kappas[i] / kappas[i - 1]).ln())
        })
        .collect()
}

/// Acceptance band attached to a report or check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Band {
    SlopeWithin { lo: f64, hi: f64 },
    SlopeBelow { hi: f64 },
    AllBelow { bound: f64 },
    ValueBelow { bound: f64 },
    ValueWithin { lo: f64, hi: f64 },
}

impl Band {
    pub fn admits(&self, value: f64) -> bool {
        match *self {
            Band::SlopeWithin { lo, hi } | Band::ValueWithin { lo, hi } => (lo..=hi).contains(&value),
            Band::SlopeBelow { hi } => value < hi,
            Band::AllBelow { bound } | Band::ValueBelow { bound } => value < bound,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Fitted,
    InsufficientRange,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub experiment: String,
    /// What the rate measures.
    pub claim: String,
    pub kappas: Vec<f64>,
    pub errors: Vec<f64>,
    pub rows: Vec<SweepRow>,
    pub fit: Option<SlopeFit>,
    pub status: FitStatus,
    pub band: Band,
    pub band_met: bool,
    pub wall_ms: f64,
    pub config_hash: String,
}

impl ConvergenceReport {
    /// Assembles rows, fits above-floor points and evaluates the band.
    pub fn assemble(
        experiment: &str,
        claim: &str,
        samples: &[Sample],
        band: Band,
        config_hash: &str,
    ) -> Self {
        let kappas: Vec<f64> = samples.iter().map(|s| s.kappa).collect();
        let errors: Vec<f64> = samples.iter().map(|s| s.l2).collect();
        let slopes = running_slopes(&kappas, &errors);
        let rows: Vec<SweepRow> = samples
            .iter()
            .zip(slopes)
            .map(|(s, slope_running)| SweepRow {
                experiment: experiment.into(),
                kappa: s.kappa,
                error_l2: s.l2,
                error_h2k: s.h2k,
                slope_running,
                floor_estimate: s.floor,
                at_floor: s.l2 <= FLOOR_MARGIN * s.floor,
                wall_ms: s.wall_ms,
            })
            .collect();
        let (fk, fe): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| !r.at_floor)
            .map(|r| (r.kappa, r.error_l2))
            .unzip();
        let fit = if fk.len() >= crate::harness::config::MIN_SWEEP_POINTS {
            fit_loglog(&fk, &fe)
        } else {
            None
        };
        let status = if fit.is_some() {
            FitStatus::Fitted
        } else {
            FitStatus::InsufficientRange
        };
        let band_met = match band {
            Band::AllBelow { bound } => errors.iter().all(|e| *e < bound),
            _ => fit.is_some_and(|f| band.admits(f.slope)),
        };
        ConvergenceReport {
            experiment: experiment.into(),
            claim: claim.into(),
            kappas,
            errors,
            wall_ms: rows.iter().map(|r| r.wall_ms).sum(),
            rows,
            fit,
            status,
            band,
            band_met,
            config_hash: config_hash.into(),
        }
    }
}

/// Scalar check with its band; `acceptance` marks checks that gate the exit code.
#[derive(Clone, Debug, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub band: Band,
    pub passed: bool,
    pub acceptance: bool,
    pub detail: serde_json::Value,
}

impl CheckRecord {
    pub fn new(name: &str, value: f64, band: Band, acceptance: bool, detail: serde_json::Value) -> Self {
        CheckRecord {
            name: name.into(),
            value,
            band,
            passed: band.admits(value),
            acceptance,
            detail,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Environment {
    pub package: &'static str,
    pub version: &'static str,
    pub os: &'static str,
    pub arch: &'static str,
    pub threads: usize,
    pub unix_time: u64,
}

impl Environment {
    pub fn capture() -> Self {
        Environment {
            package: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            threads: rayon::current_num_threads(),
            unix_time: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }
}

/// Everything written to the JSON file of one run.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub experiment: String,
    pub environment: Environment,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub certificate: AssumptionCertificate,
    pub reports: Vec<ConvergenceReport>,
    pub checks: Vec<CheckRecord>,
    pub all_bands_met: bool,
}

impl RunReport {
    pub fn bands_met(reports: &[ConvergenceReport], checks: &[CheckRecord]) -> bool {
        reports.iter().all(|r| r.band_met) && checks.iter().filter(|c| c.acceptance).all(|c| c.passed)
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:e}"))
}

/// CSV text; wall time is left blank unless requested so that reruns are byte-identical.
pub fn render_csv(rows: &[SweepRow], wall_clock: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{},{:e},{}",
            r.experiment,
            r.kappa,
            r.error_l2,
            r.error_h2k,
            cell(r.slope_running),
            r.floor_estimate,
            cell(wall_clock.then_some(r.wall_ms)),
        )
        .expect("writing to a string");
    }
    out
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source: std::io::Error| LabError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}
