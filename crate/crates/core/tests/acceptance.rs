//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report prints in order and the
//! process exits non-zero if any criterion fails.

use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use cds_cva::cds::{upfront_convert, ContractSpec, UpfrontDirection};
use cds_cva::config::{CaseTable, Overrides, RunConfig};
use cds_cva::copula::{sample_first_default, DefaultGroup, FirstDefault, HazardInverter, ShockStructure};
use cds_cva::copula::{survival, SurvivalKind};
use cds_cva::exposure::{closeout_cashflow, pfe_sample, CaseReport};
use cds_cva::factors::{simulate_factors, CirParams, FactorRegime, TimeGrid};
use cds_cva::margin::MarginAgreement;
use cds_cva::rng::{substream, Purpose};
use cds_cva::stats::Estimate;
use cds_cva::{Engine, ModelSpec};
use rand::Rng;

type Outcome = Result<String, String>;

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn load(name: &str, overrides: &Overrides) -> RunConfig {
    RunConfig::from_path(&config_path(name), overrides).expect("shipped config loads")
}

fn constant(x: f64) -> CirParams {
    CirParams {
        zeta: 0.0,
        mu: 0.0,
        sigma: 0.0,
        x0: x,
    }
}

fn check(ok: bool, what: impl Into<String>, failures: &mut Vec<String>) {
    if !ok {
        failures.push(what.into());
    }
}

fn verdict(summary: String, failures: Vec<String>) -> Outcome {
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; {}", failures.join("; ")))
    }
}

fn within(e: &Estimate, value: f64) -> bool {
    (e.mean - value).abs() <= 3.0 * e.se
}

fn identities() -> Outcome {
    let mut failures = Vec::new();
    let config = load("paper.toml", &Overrides::default());
    let engine = config.engine().map_err(|e| e.to_string())?;
    let agreements = config.cases.agreements(&config.agreement());
    let mut worst = 0.0f64;
    let all = engine.path_samples(&agreements, 10_000).map_err(|e| e.to_string())?;
    for (case, samples) in config.cases.0.iter().zip(&all) {
        for s in samples {
            check(
                s.ucva == 0.0 || s.dva == 0.0,
                format!("case {} path with both UCVA and DVA", case.label),
                &mut failures,
            );
            worst = worst.max(((s.ucva - s.dva) - s.xi).abs());
        }
    }
    check(
        worst <= 1e-15,
        format!("pathwise CVA - (UCVA - DVA) up to {worst:e}"),
        &mut failures,
    );

    let spec = engine.model().contract;
    for g in DefaultGroup::ALL {
        for (s, c) in [
            (0.03, 0.0),
            (0.03, 0.05),
            (-0.02, 0.0),
            (-0.02, -0.05),
            (0.0, 0.7),
            (0.01, -0.3),
        ] {
            let s = if g.hits_reference() { 0.0 } else { s };
            let leg = closeout_cashflow(g, s, spec.lgd, c, &spec);
            let fd = FirstDefault {
                time: 1.0,
                group: Some(g),
            };
            check(
                leg.xi == leg.hat - leg.bar,
                format!("{g:?}: xi != hat - bar"),
                &mut failures,
            );
            check(
                (leg.xi - pfe_sample(&fd, s, spec.lgd, c, &spec)).abs() <= 1e-16,
                format!("{g:?}: xi != PFE"),
                &mut failures,
            );
        }
    }

    let fixed = 0.01;
    let up = upfront_convert(
        UpfrontDirection::SpreadToUpfront,
        engine.kappa0(),
        fixed,
        engine.rdv01(),
    )
    .unwrap();
    let back = upfront_convert(UpfrontDirection::UpfrontToSpread, up, fixed, engine.rdv01()).unwrap();
    let round_trip = (back - engine.kappa0()).abs();
    check(
        round_trip <= 2.0 * f64::EPSILON * engine.kappa0(),
        format!("upfront round trip off by {round_trip:e}"),
        &mut failures,
    );

    let reports = engine.case_reports(&agreements, 10_000).map_err(|e| e.to_string())?;
    for (case, r) in config.cases.0.iter().zip(&reports) {
        let e = &r.exposure;
        check(
            e.cva0.mean == e.ucva0.mean - e.dva0.mean,
            format!("case {}: CVA != UCVA - DVA", case.label),
            &mut failures,
        );
        let s = &r.spread;
        let lhs = s.sva0 * s.rdv01_c.mean;
        check(
            (lhs - s.cva_tilde.mean).abs() <= 1e-12 * s.cva_tilde.mean.abs().max(1e-12),
            format!("case {}: SVA * RDV01c = {lhs:e} vs {:e}", case.label, s.cva_tilde.mean),
            &mut failures,
        );
    }
    verdict(
        format!("max pathwise residual {worst:.1e}, upfront residual {round_trip:.1e}"),
        failures,
    )
}

fn degenerate() -> Outcome {
    let mut failures = Vec::new();
    let mut config = load("paper.toml", &Overrides::default());
    config.contract.recovery_cpty = 1.0;
    config.contract.recovery_inv = 1.0;
    let engine = config.engine().map_err(|e| e.to_string())?;
    let agreements = config.cases.agreements(&config.agreement());
    let all = engine.path_samples(&agreements, 10_000).map_err(|e| e.to_string())?;
    for (case, samples) in config.cases.0.iter().zip(&all) {
        let nonzero = samples
            .iter()
            .filter(|s| s.ucva != 0.0 || s.dva != 0.0 || s.xi != 0.0)
            .count();
        check(
            nonzero == 0,
            format!("case {}: {nonzero} nonzero paths at full recovery", case.label),
            &mut failures,
        );
    }
    let reports = engine.case_reports(&agreements, 10_000).map_err(|e| e.to_string())?;
    for (case, r) in config.cases.0.iter().zip(&reports) {
        let zero = [
            r.exposure.cva0.mean,
            r.exposure.ucva0.mean,
            r.exposure.dva0.mean,
            r.spread.sva0,
        ];
        check(
            zero.iter().all(|&v| v == 0.0),
            format!("case {}: {zero:?}", case.label),
            &mut failures,
        );
    }

    let high = FactorRegime::High.params();
    let model = ModelSpec {
        contract: engine.model().contract,
        factors: [high, constant(0.0), constant(0.0)],
        shocks: ShockStructure::new([0.01, 0.0, 0.0], [0.0; 4]).unwrap(),
        grid_step: 1.0 / 250.0,
        quadrature_step: 1.0 / 12.0,
        seed: 3,
    };
    let only_ref = Engine::new(model).map_err(|e| e.to_string())?;
    let samples = only_ref
        .path_samples(&[MarginAgreement::uncollateralized()], 10_000)
        .map_err(|e| e.to_string())?
        .remove(0);
    let defaults = samples.iter().filter(|s| s.first.occurred()).count();
    let stray = samples
        .iter()
        .filter(|s| s.first.occurred() && s.first.group != Some(DefaultGroup::Reference))
        .count();
    let exposed = samples
        .iter()
        .filter(|s| s.xi != 0.0 || s.ucva != 0.0 || s.dva != 0.0)
        .count();
    check(defaults > 0, "no reference defaults simulated", &mut failures);
    check(
        stray == 0 && exposed == 0,
        format!("{stray} non-reference defaults, {exposed} exposed paths"),
        &mut failures,
    );
    verdict(
        format!("{defaults} reference-only defaults, all exposures zero"),
        failures,
    )
}

fn constant_hazard() -> Outcome {
    let mut failures = Vec::new();
    let x = [0.03, 0.04, 0.02];
    let shocks = ShockStructure::new([0.02, 0.02, 0.01], [0.0, 0.005, 0.0, 0.003]).unwrap();
    let l = cds_cva::copula::group_intensities(&shocks, x).unwrap().as_array();
    let total: f64 = l.iter().sum();
    let lambda1 = l[0] + l[4] + l[5] + l[6];
    let (lgd, r2, r3, maturity) = (0.6, 0.4, 0.3, 5.0);
    let mut summary = Vec::new();
    for spread in [0.02, 0.045] {
        let contract = ContractSpec {
            maturity,
            spread,
            lgd,
            recovery_cpty: r2,
            recovery_inv: r3,
            rate: 0.0,
        };
        let engine = Engine::new(ModelSpec {
            contract,
            factors: x.map(constant),
            shocks,
            grid_step: 1.0 / 250.0,
            quadrature_step: 1.0 / 12.0,
            seed: 17,
        })
        .map_err(|e| e.to_string())?;
        let kappa_err = (engine.kappa0() - lgd * lambda1).abs();
        check(
            kappa_err <= 1e-8,
            format!("fair spread off by {kappa_err:e}"),
            &mut failures,
        );

        // Clean price of the remaining life with a flat hazard and zero rate.
        let clean = |t: f64| (lgd * lambda1 - spread) * (1.0 - (-lambda1 * (maturity - t)).exp()) / lambda1;
        let n = 200_000;
        let h = maturity / n as f64;
        let density = |u: f64| {
            let s = clean(u);
            (-total * u).exp()
                * ((l[1] + l[3]) * (1.0 - r2) * s.max(0.0) - (l[2] + l[3]) * (1.0 - r3) * (-s).max(0.0)
                    + (l[4] + l[6]) * (1.0 - r2) * lgd)
        };
        let oracle =
            h * (0.5 * density(0.0) + (1..n).map(|j| density(j as f64 * h)).sum::<f64>() + 0.5 * density(maturity));
        let cva = engine
            .cva0_mc(&MarginAgreement::uncollateralized(), 10_000)
            .map_err(|e| e.to_string())?
            .cva0;
        check(
            within(&cva, oracle),
            format!("spread {spread}: CVA {cva:?} vs oracle {oracle:e}"),
            &mut failures,
        );
        summary.push(format!(
            "spread {spread}: CVA {:.4e} +/- {:.1e} vs {oracle:.4e}",
            cva.mean, cva.se
        ));
    }
    verdict(summary.join(", "), failures)
}

fn survival_forms() -> Outcome {
    let mut failures = Vec::new();
    let shocks = ShockStructure::new([0.01, 0.04, 0.01], [0.0, 0.005, 0.0, 0.005]).unwrap();
    let horizons = [1.0, 3.0, 5.0];
    let n = 20_000u64;
    let grid = TimeGrid::new(0.0, 5.0, 1.0 / 250.0).unwrap();
    let mut worst = 0.0f64;
    for regime in FactorRegime::ALL {
        let params = [regime.params(); 3];
        // Per path: survival indicators at each horizon for names 1..3 and the first default.
        let mut alive = vec![[[0.0; 3]; 4]; n as usize];
        for i in 0..n {
            let path = simulate_factors(&params, &grid, 41, i).unwrap();
            let mut rng = substream(41, Purpose::Default, i);
            let u: (f64, f64) = (1.0 - rng.random::<f64>(), 1.0 - rng.random::<f64>());
            let ftd = sample_first_default(&path, &shocks, 5.0, u).unwrap();
            for (name, row) in alive[i as usize].iter_mut().take(3).enumerate() {
                let mut marginal = substream(41, Purpose::ReferenceDefault, i * 3 + name as u64);
                let mut inv = HazardInverter::new(1.0 - marginal.random::<f64>());
                let mut tau = f64::INFINITY;
                for k in 0..grid.steps() {
                    let t = grid.time(k);
                    if let Some(hit) = inv.step(t, grid.time(k + 1) - t, shocks.a[name] + path.value(name, k)) {
                        tau = hit;
                        break;
                    }
                }
                for (slot, &h) in row.iter_mut().zip(&horizons) {
                    *slot = f64::from(u8::from(tau > h));
                }
            }
            for (j, &h) in horizons.iter().enumerate() {
                alive[i as usize][3][j] = f64::from(u8::from(ftd.time > h));
            }
        }
        for (j, &h) in horizons.iter().enumerate() {
            for kind in 0..4 {
                let which = if kind < 3 {
                    SurvivalKind::Marginal(kind + 1)
                } else {
                    SurvivalKind::FirstToDefault
                };
                let exact = survival(&shocks, &params, which, 0.0, h, params.map(|p| p.x0)).unwrap();
                let samples: Vec<f64> = alive.iter().map(|a| a[kind][j]).collect();
                let est = Estimate::from_samples(&samples);
                worst = worst.max((est.mean - exact).abs() / est.se);
                check(
                    within(&est, exact),
                    format!("{regime:?} {which:?} h={h}: {est:?} vs {exact}"),
                    &mut failures,
                );
            }
        }
    }
    verdict(format!("36 comparisons, largest deviation {worst:.2} SE"), failures)
}

fn case_table_run() -> Result<(RunConfig, Vec<CaseReport>, Duration), String> {
    let config = load("paper.toml", &Overrides::default());
    let start = Instant::now();
    let engine = config.engine().map_err(|e| e.to_string())?;
    let agreements = config.cases.agreements(&config.agreement());
    let reports = engine
        .case_reports(&agreements, config.simulation.paths)
        .map_err(|e| e.to_string())?;
    Ok((config, reports, start.elapsed()))
}

fn monotone(config: &RunConfig, reports: &[CaseReport]) -> Outcome {
    let mut failures = Vec::new();
    let cva: Vec<f64> = reports.iter().map(|r| r.exposure.cva0.mean).collect();
    for (k, w) in cva.windows(2).enumerate() {
        let (a, b) = (&config.cases.0[k].label, &config.cases.0[k + 1].label);
        check(
            w[1] <= w[0],
            format!("CVA0 {b} = {:e} exceeds {a} = {:e}", w[1], w[0]),
            &mut failures,
        );
    }
    let f = *cva.last().unwrap();
    check(f <= 1e-6, format!("case F CVA0 = {f:e} > 1e-6"), &mut failures);
    let listing: Vec<String> = config
        .cases
        .0
        .iter()
        .zip(&cva)
        .map(|(c, v)| format!("{} {v:.3e}", c.label))
        .collect();
    verdict(format!("CVA0 {}", listing.join(", ")), failures)
}

fn ratios(config: &RunConfig, reports: &[CaseReport]) -> Outcome {
    let mut failures = Vec::new();
    let first = &reports[0].spread;
    let base = reports[0].exposure.cva0.mean / first.sva0;
    let mut listing = Vec::new();
    for (case, r) in config.cases.0.iter().zip(reports).take(5) {
        let ratio = r.exposure.cva0.mean / r.spread.sva0;
        let tol = 3.0 * (2.0f64).sqrt() * r.spread.rdv01_c.se;
        check(
            (ratio - base).abs() <= tol,
            format!("case {}: ratio {ratio} vs {base}", case.label),
            &mut failures,
        );
        listing.push(format!("{} {ratio:.4}", case.label));
    }
    let mut gaps = Vec::new();
    for (case, r) in config.cases.0.iter().zip(reports) {
        let s = &r.spread;
        check(
            s.route_gap.abs() <= 3.0 * s.route_gap_se,
            format!(
                "case {}: route gap {:e} with SE {:e}",
                case.label, s.route_gap, s.route_gap_se
            ),
            &mut failures,
        );
        gaps.push(format!("{} {:.2}", case.label, s.route_gap / s.route_gap_se));
    }
    verdict(
        format!(
            "CVA0/SVA0 years: {}; route gap in SE: {}",
            listing.join(", "),
            gaps.join(", ")
        ),
        failures,
    )
}

fn flatness() -> Outcome {
    let mut failures = Vec::new();
    let config = load("paper.toml", &Overrides::default());
    let engine = config.engine().map_err(|e| e.to_string())?;
    let mut listing = Vec::new();
    for (case, a) in config.cases.0.iter().zip(config.cases.agreements(&config.agreement())) {
        let f = engine.flatness(&a, 10_000).map_err(|e| e.to_string())?;
        if listing.is_empty() {
            check(within(&f.clean, 0.0), format!("clean {:?}", f.clean), &mut failures);
            listing.push(format!("clean {:.2}", f.clean.mean / f.clean.se));
        }
        // The risky spread carries its own calibration error.
        let se = f.risky.se.hypot(f.kappa0_c_se * engine.rdv01());
        check(
            f.risky.mean.abs() <= 3.0 * se,
            format!("case {}: risky mean {:e}, SE {se:e}", case.label, f.risky.mean),
            &mut failures,
        );
        listing.push(format!("{} {:.2}", case.label, f.risky.mean / se));
    }
    verdict(format!("mean cash flow in SE: {}", listing.join(", ")), failures)
}

fn forward_shape() -> Outcome {
    let mut failures = Vec::new();
    let overrides = Overrides {
        outer_paths: Some(600),
        inner_paths: Some(200),
        ..Overrides::default()
    };
    let config = load("quick.toml", &overrides);
    let config = RunConfig {
        cases: CaseTable::paper(),
        ..config
    };
    let engine = config.engine().map_err(|e| e.to_string())?;
    let agreements = config.cases.agreements(&config.agreement());
    let times = config.observation_times(&engine);
    let sim = &config.simulation;
    let curves = engine
        .forward_cva_cases(&agreements, sim.outer_paths, sim.inner_paths, &times)
        .map_err(|e| e.to_string())?;
    let reports = engine.case_reports(&agreements, 20_000).map_err(|e| e.to_string())?;
    let maturity = config.contract.maturity;
    for ((case, curve), r) in config.cases.0.iter().zip(&curves).zip(&reports) {
        let last = curve.last().unwrap();
        check(
            last.time == maturity && last.mean.mean == 0.0,
            format!("case {}: {last:?} at maturity", case.label),
            &mut failures,
        );
        let first = &curve[0];
        let cva0 = r.exposure.cva0;
        let se = first.mean.se.hypot(cva0.se);
        check(
            first.time == 0.0 && (first.mean.mean - cva0.mean).abs() <= 3.0 * se,
            format!(
                "case {}: forward {:e} vs cva0 {:e} (SE {se:e})",
                case.label, first.mean.mean, cva0.mean
            ),
            &mut failures,
        );
    }
    for k in 1..curves.len() {
        for (p, q) in curves[k - 1].iter().zip(&curves[k]) {
            check(
                q.mean.mean <= p.mean.mean,
                format!(
                    "t={}: case {} {:e} above case {} {:e}",
                    p.time,
                    config.cases.0[k].label,
                    q.mean.mean,
                    config.cases.0[k - 1].label,
                    p.mean.mean
                ),
                &mut failures,
            );
        }
    }
    verdict(
        format!(
            "{} cases x {} dates, {}x{} nested paths",
            curves.len(),
            times.len(),
            sim.outer_paths,
            sim.inner_paths
        ),
        failures,
    )
}

fn determinism(case_table_time: Duration) -> Outcome {
    let mut failures = Vec::new();
    let bin = env!("CARGO_BIN_EXE_cds-cva");
    let config = config_path("paper.toml");
    let run = |workers: &str| -> Result<Vec<Vec<u8>>, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let out = dir.path().to_str().unwrap().to_owned();
        let mut files = Vec::new();
        for (sub, extra, file) in [
            ("case-table", vec!["--paths", "2000"], "case_table.csv"),
            ("price", vec!["--paths", "2000"], "price.json"),
            (
                "forward-cva",
                vec!["--outer-paths", "40", "--inner-paths", "20"],
                "forward_cva.csv",
            ),
        ] {
            let status = Command::new(bin)
                .args([
                    sub,
                    "--config",
                    config.to_str().unwrap(),
                    "--out-dir",
                    &out,
                    "--grid-step",
                    "0.02",
                ])
                .args(extra)
                .env("CDSCVA_WORKERS", workers)
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(String::from_utf8_lossy(&status.stderr).into_owned());
            }
            files.push(std::fs::read(dir.path().join(file)).map_err(|e| e.to_string())?);
        }
        Ok(files)
    };
    let one = run("1")?;
    let four = run("4")?;
    let again = run("1")?;
    check(one == four, "outputs differ between 1 and 4 workers", &mut failures);
    check(one == again, "outputs differ between identical runs", &mut failures);
    check(
        case_table_time < Duration::from_secs(600),
        format!("case table took {case_table_time:?}"),
        &mut failures,
    );
    verdict(
        format!(
            "byte-identical across 1/4 workers and replays; 10^4-path daily case table in {:.1}s on {} core(s)",
            case_table_time.as_secs_f64(),
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        ),
        failures,
    )
}

fn report(id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut outcome = f();
    let took = start.elapsed();
    if let Some(limit) = limit {
        if took > limit {
            outcome = Err(format!(
                "{}; took {took:?}, limit {limit:?}",
                outcome.unwrap_or_else(|e| e)
            ));
        }
    }
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {id} {tag} [{name}] ({:.1}s) {detail}", took.as_secs_f64());
    outcome.is_ok()
}

fn main() -> ExitCode {
    let minute = Duration::from_secs(60);
    let mut ok = true;
    ok &= report(1, "identities", Some(minute), identities);
    ok &= report(2, "degenerate contracts", Some(minute), degenerate);
    ok &= report(3, "constant-hazard oracle", Some(2 * minute), constant_hazard);
    ok &= report(4, "survival closed forms", Some(2 * minute), survival_forms);
    let table = case_table_run();
    let (table_time, table) = match table {
        Ok((config, reports, took)) => (took, Ok((config, reports))),
        Err(e) => (Duration::MAX, Err(e)),
    };
    ok &= report(5, "collateral monotonicity", Some(5 * minute), || {
        let (config, reports) = table.as_ref().map_err(Clone::clone)?;
        monotone(config, reports).map(|d| format!("{d}; table {:.1}s", table_time.as_secs_f64()))
    });
    ok &= report(6, "ratio consistency", None, || {
        let (config, reports) = table.as_ref().map_err(Clone::clone)?;
        ratios(config, reports)
    });
    ok &= report(7, "martingale flatness", None, flatness);
    ok &= report(8, "forward CVA shape", None, forward_shape);
    ok &= report(9, "determinism and performance", None, || determinism(table_time));
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
