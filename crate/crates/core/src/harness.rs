//! Experiment orchestration and result files.
//!
//! Units: CVA, UCVA, DVA, exposures and collateral are per unit notional;
//! spreads and SVA are in basis points per year; annuities are in years.
//! Every number is written with 12 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::exposure::{CaseReport, ForwardPoint, ProfileBucket};
use crate::stats::Estimate;

/// Environment variable that sets the number of worker threads.
pub const WORKERS_ENV: &str = "CDSCVA_WORKERS";

const BPS: f64 = 1e4;

/// Rounds to 12 significant digits.
pub fn sig12(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.11e}").parse().unwrap_or(x)
    } else {
        x
    }
}

fn num(x: f64) -> Value {
    json!(sig12(x))
}

fn cell(x: f64) -> String {
    format!("{x:.11e}")
}

fn opt_cells(e: Option<Estimate>) -> [String; 2] {
    match e {
        Some(e) => [cell(e.mean), cell(e.se)],
        None => [String::new(), String::new()],
    }
}

/// Runs `f` on a pool sized by `CDSCVA_WORKERS`, or rayon's default.
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Argument(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Argument(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn spread_json(config: &RunConfig, contract_spread: f64, r: &CaseReport) -> Value {
    let s = &r.spread;
    let e = &r.exposure;
    json!({
        "seed": config.seed,
        "paths": e.paths,
        "units": {
            "spreads": "bps per year",
            "values": "per unit notional",
            "annuities": "years",
        },
        "contract_spread_bps": num(contract_spread * BPS),
        "kappa0_bps": num(s.kappa0 * BPS),
        "kappa0_c_bps": num(s.kappa0_c * BPS),
        "kappa0_c_direct_bps": num(s.kappa0_c_direct * BPS),
        "kappa0_c_direct_bps_se": num(s.kappa0_c_direct_se * BPS),
        "route_gap_bps": num(s.route_gap * BPS),
        "route_gap_bps_se": num(s.route_gap_se * BPS),
        "sva0_bps": num(s.sva0 * BPS),
        "sva0_bps_se": num(s.sva0_se * BPS),
        "rdv01_years": num(s.rdv01),
        "rdv01_c_years": num(s.rdv01_c.mean),
        "rdv01_c_years_se": num(s.rdv01_c.se),
        "pl_c": num(s.pl_c.mean),
        "pl_c_se": num(s.pl_c.se),
        "cva0": num(e.cva0.mean),
        "cva0_se": num(e.cva0.se),
        "ucva0": num(e.ucva0.mean),
        "ucva0_se": num(e.ucva0.se),
        "dva0": num(e.dva0.mean),
        "dva0_se": num(e.dva0.se),
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<PathBuf> {
    fs::write(path, contents)?;
    Ok(path.to_path_buf())
}

/// Clean and risky spreads, SVA and the CVA decomposition for the configured
/// margin agreement.
pub fn price_report(config: &RunConfig) -> Result<Value> {
    let engine = config.engine()?;
    let report =
        with_workers(|| engine.case_reports(std::slice::from_ref(&config.agreement()), config.simulation.paths))??
            .remove(0);
    Ok(spread_json(config, engine.model().contract.spread, &report))
}

/// [`price_report`], also written to `price.json`.
pub fn run_price(config: &RunConfig) -> Result<Value> {
    let out = price_report(config)?;
    ensure_dir(&config.output.dir)?;
    write_file(
        &config.output.dir.join("price.json"),
        &(serde_json::to_string_pretty(&out).expect("json") + "\n"),
    )?;
    Ok(out)
}

pub const CASE_TABLE_HEADER: &str =
    "case,gamma_cpty,gamma_inv,cva0,cva0_se,ucva0,ucva0_se,dva0,dva0_se,sva0_bps,sva0_bps_se,rdv01_c_years";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseRow {
    pub label: String,
    pub report: CaseReport,
}

/// One row per case, all on the same paths.
pub fn case_rows(config: &RunConfig) -> Result<Vec<CaseRow>> {
    let engine = config.engine()?;
    let agreements = config.cases.agreements(&config.agreement());
    let reports = with_workers(|| engine.case_reports(&agreements, config.simulation.paths))??;
    Ok(config
        .cases
        .0
        .iter()
        .zip(reports)
        .map(|(c, report)| CaseRow {
            label: c.label.clone(),
            report,
        })
        .collect())
}

/// [`case_rows`], also written to `case_table.csv`.
pub fn run_case_table(config: &RunConfig) -> Result<Vec<CaseRow>> {
    let rows = case_rows(config)?;
    let mut csv = String::from(CASE_TABLE_HEADER);
    csv.push('\n');
    for (case, row) in config.cases.0.iter().zip(&rows) {
        let e = &row.report.exposure;
        let s = &row.report.spread;
        let fields = [
            case.label.clone(),
            case.gamma_cpty.to_string(),
            case.gamma_inv.to_string(),
            cell(e.cva0.mean),
            cell(e.cva0.se),
            cell(e.ucva0.mean),
            cell(e.ucva0.se),
            cell(e.dva0.mean),
            cell(e.dva0.se),
            cell(s.sva0 * BPS),
            cell(s.sva0_se * BPS),
            cell(s.rdv01_c.mean),
        ];
        writeln!(csv, "{}", fields.join(",")).expect("string write");
    }
    ensure_dir(&config.output.dir)?;
    write_file(&config.output.dir.join("case_table.csv"), &csv)?;
    Ok(rows)
}

pub const PROFILE_HEADER: &str = "time,epe,epe_se,ene,ene_se,mean_collateral,mean_collateral_se";
pub const FORWARD_HEADER: &str = "time,mean_cva,se";

pub fn profile_csv(buckets: &[ProfileBucket]) -> String {
    let mut csv = String::from(PROFILE_HEADER);
    csv.push('\n');
    for b in buckets {
        let [epe, epe_se] = opt_cells(b.epe);
        let [ene, ene_se] = opt_cells(b.ene);
        let [col, col_se] = opt_cells(b.collateral);
        writeln!(csv, "{},{epe},{epe_se},{ene},{ene_se},{col},{col_se}", cell(b.end)).expect("string write");
    }
    csv
}

pub fn forward_csv(points: &[ForwardPoint]) -> String {
    let mut csv = String::from(FORWARD_HEADER);
    csv.push('\n');
    for p in points {
        writeln!(csv, "{},{},{}", cell(p.time), cell(p.mean.mean), cell(p.mean.se)).expect("string write");
    }
    csv
}

/// The agreements to run, labelled by case; the configured agreement has an
/// empty label.
fn selection(config: &RunConfig, all_cases: bool) -> Vec<(String, crate::margin::MarginAgreement)> {
    if all_cases {
        config
            .cases
            .0
            .iter()
            .zip(config.cases.agreements(&config.agreement()))
            .map(|(c, a)| (c.label.clone(), a))
            .collect()
    } else {
        vec![(String::new(), config.agreement())]
    }
}

fn file_name(stem: &str, label: &str) -> String {
    if label.is_empty() {
        format!("{stem}.csv")
    } else {
        format!("{stem}_{label}.csv")
    }
}

/// Mean forward CVA curve per selected agreement.
pub fn forward_curves(config: &RunConfig, all_cases: bool) -> Result<Vec<(String, Vec<ForwardPoint>)>> {
    let engine = config.engine()?;
    let (labels, agreements): (Vec<_>, Vec<_>) = selection(config, all_cases).into_iter().unzip();
    let times = config.observation_times(&engine);
    let sim = &config.simulation;
    let curves = with_workers(|| engine.forward_cva_cases(&agreements, sim.outer_paths, sim.inner_paths, &times))??;
    Ok(labels.into_iter().zip(curves).collect())
}

/// EPE/ENE/collateral buckets per selected agreement.
pub fn profile_tables(config: &RunConfig, all_cases: bool) -> Result<Vec<(String, Vec<ProfileBucket>)>> {
    let engine = config.engine()?;
    let (labels, agreements): (Vec<_>, Vec<_>) = selection(config, all_cases).into_iter().unzip();
    let sim = &config.simulation;
    let profiles = with_workers(|| engine.profiles(&agreements, sim.paths, sim.bucket_width))??;
    Ok(labels.into_iter().zip(profiles).collect())
}

/// Forward CVA files; returns the written paths.
pub fn run_forward_cva(config: &RunConfig, all_cases: bool) -> Result<Vec<PathBuf>> {
    let curves = forward_curves(config, all_cases)?;
    ensure_dir(&config.output.dir)?;
    curves
        .iter()
        .map(|(label, points)| {
            write_file(
                &config.output.dir.join(file_name("forward_cva", label)),
                &forward_csv(points),
            )
        })
        .collect()
}

/// EPE/ENE/collateral profiles plus the forward CVA curves.
pub fn run_profiles(config: &RunConfig, all_cases: bool) -> Result<Vec<PathBuf>> {
    let tables = profile_tables(config, all_cases)?;
    ensure_dir(&config.output.dir)?;
    let mut written = tables
        .iter()
        .map(|(label, buckets)| {
            write_file(
                &config.output.dir.join(file_name("profiles", label)),
                &profile_csv(buckets),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    written.extend(run_forward_cva(config, all_cases)?);
    Ok(written)
}

/// Machine-readable diagnostic for a failed run.
pub fn error_json(err: &Error) -> Value {
    let (path, message) = match err {
        Error::Config { path, message } => (Some(path.clone()), message.clone()),
        other => (None, other.to_string()),
    };
    json!({ "error": { "kind": err.kind(), "path": path, "message": message } })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(sig12(0.1234567890123456), 0.123456789012);
        assert_eq!(cell(0.0), "0.00000000000e0");
        assert!(sig12(f64::NAN).is_nan());
    }

    #[test]
    fn empty_buckets_are_blank() {
        let b = ProfileBucket {
            start: 0.0,
            end: 0.5,
            epe: None,
            ene: Some(Estimate {
                mean: 1.0,
                se: 0.5,
                count: 2,
            }),
            collateral: None,
        };
        let csv = profile_csv(&[b]);
        let row = csv.lines().nth(1).unwrap();
        assert_eq!(row, "5.00000000000e-1,,,1.00000000000e0,5.00000000000e-1,,");
    }

    #[test]
    fn config_errors_carry_their_path() {
        let v = error_json(&Error::config("margin.mta", "must be >= 0"));
        assert_eq!(v["error"]["kind"], "config");
        assert_eq!(v["error"]["path"], "margin.mta");
    }
}
