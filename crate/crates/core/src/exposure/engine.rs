//! Path-wise Monte Carlo engine.
//!
//! A path scenario (factor values up to the first default, the default time
//! and group, and lazily computed clean prices) is drawn once and then
//! evaluated against any number of margin agreements, so case comparisons
//! use common random numbers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::closeout::{closeout_cashflow, pfe_sample, risky_payment, uncollateralized_mtm};
use crate::cds::{fair_spread, risky_annuity, CleanCurve, CleanPricer, ContractSpec, PriceSlice};
use crate::copula::{intensities_unchecked, DefaultGroup, FirstDefault, HazardInverter, ShockStructure};
use crate::error::{Error, Result};
use crate::factors::{CirParams, FactorStepper, TimeGrid, FACTORS};
use crate::margin::{effective_collateral, CallDate, MarginAgreement, MarginState};
use crate::rng::{mix64, nested_stream, substream, Purpose};
use crate::stats::{compensated_sum, Estimate};

/// Everything that defines a simulation apart from the margin agreement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    pub contract: ContractSpec,
    pub factors: [CirParams; FACTORS],
    pub shocks: ShockStructure,
    pub grid_step: f64,
    pub quadrature_step: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Engine {
    model: ModelSpec,
    grid: TimeGrid,
    pricer: CleanPricer,
    kappa0: f64,
    rdv01: f64,
}

/// CVA decomposition at time zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExposureReport {
    pub paths: usize,
    pub seed: u64,
    pub cva0: Estimate,
    pub ucva0: Estimate,
    pub dva0: Estimate,
}

/// Clean and counterparty-risky spreads. All spreads are decimals per year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpreadReport {
    pub kappa0: f64,
    /// `kappa0 - CVA~ / RDV01^c`.
    pub kappa0_c: f64,
    pub sva0: f64,
    pub sva0_se: f64,
    pub rdv01: f64,
    pub rdv01_c: Estimate,
    pub pl_c: Estimate,
    pub cva_tilde: Estimate,
    /// `PL^c / RDV01^c` estimated directly.
    pub kappa0_c_direct: f64,
    pub kappa0_c_direct_se: f64,
    /// `kappa0_c_direct - kappa0_c` and its standard error.
    pub route_gap: f64,
    pub route_gap_se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaseReport {
    pub exposure: ExposureReport,
    pub spread: SpreadReport,
}

/// One time bucket `(start, end]` of the exposure profiles. Buckets with no
/// qualifying default carry `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileBucket {
    pub start: f64,
    pub end: f64,
    pub epe: Option<Estimate>,
    pub ene: Option<Estimate>,
    /// Mean collateral at `end` over paths with no default by `end`.
    pub collateral: Option<Estimate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForwardPoint {
    pub time: f64,
    /// Mean over all outer paths, counting defaulted paths as zero.
    pub mean: Estimate,
    pub alive: usize,
    /// Mean over outer paths still alive at `time`.
    pub alive_mean: Option<Estimate>,
}

/// Mean discounted cash flow of the clean and risky contracts at their fair
/// spreads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlatnessReport {
    pub kappa0: f64,
    pub clean: Estimate,
    pub kappa0_c: f64,
    /// Standard error of `kappa0_c` from its own calibration run.
    pub kappa0_c_se: f64,
    pub risky: Estimate,
}

/// Discounted CVA components of a single outer path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub first: FirstDefault,
    pub ucva: f64,
    pub dva: f64,
    /// Discounted `hat - bar` of the close-out.
    pub xi: f64,
}

/// Per-path inputs shared by every margin agreement.
struct Scenario {
    first: usize,
    start: f64,
    default: FirstDefault,
    default_node: usize,
    xs: Vec<[f64; FACTORS]>,
    prices: Vec<f64>,
    s_tau: Option<f64>,
}

impl Scenario {
    fn x(&self, node: usize) -> [f64; FACTORS] {
        self.xs[node - self.first]
    }

    fn price_node(&mut self, pricer: &CleanPricer, node: usize) -> f64 {
        let i = node - self.first;
        if self.prices[i].is_nan() {
            self.prices[i] = pricer.price_at_node(node, self.xs[i][0]);
        }
        self.prices[i]
    }

    /// Clean price at the default time; zero once the reference defaulted.
    fn s_tau(&mut self, pricer: &CleanPricer) -> f64 {
        if let Some(s) = self.s_tau {
            return s;
        }
        let s = match self.default.group {
            Some(g) if !g.hits_reference() => pricer.price_at(self.default.time, self.x(self.default_node)[0]),
            _ => 0.0,
        };
        self.s_tau = Some(s);
        s
    }
}

struct Plan<'a> {
    agreement: &'a MarginAgreement,
    calls: Vec<CallDate>,
    slices: Vec<Option<PriceSlice>>,
}

impl Plan<'_> {
    fn first_call_from(&self, t: f64) -> usize {
        self.calls.partition_point(|c| c.time < t)
    }
}

/// Result of one scenario under one agreement. Amounts are discounted to
/// the scenario start except `mtm`.
struct Outcome {
    ucva: f64,
    dva: f64,
    xi: f64,
    risky: f64,
    risky_terms: f64,
    mtm: f64,
    margin: MarginState,
}

/// Uniform on `(0, 1]`.
fn unit(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

impl Engine {
    pub fn new(model: ModelSpec) -> Result<Self> {
        model.contract.validate()?;
        for p in &model.factors {
            p.validate()?;
        }
        model.shocks.validate()?;
        if !(model.grid_step > 0.0) {
            return Err(Error::config(
                "simulation.grid_step",
                format!("must be > 0, got {}", model.grid_step),
            ));
        }
        if !(model.quadrature_step > 0.0) {
            return Err(Error::config(
                "simulation.quadrature_step",
                format!("must be > 0, got {}", model.quadrature_step),
            ));
        }
        let spec = &model.contract;
        let grid = TimeGrid::new(0.0, spec.maturity, model.grid_step)?;
        let a1 = model.shocks.a[0];
        let pricer = CleanPricer::new(&model.factors[0], a1, spec, &grid, model.quadrature_step)?;
        let curve = CleanCurve::affine(
            &model.factors[0],
            a1,
            0.0,
            model.factors[0].x0,
            spec,
            model.quadrature_step,
        )?;
        let kappa0 = fair_spread(&curve, spec)?;
        let rdv01 = risky_annuity(&curve, spec);
        Ok(Engine {
            model,
            grid,
            pricer,
            kappa0,
            rdv01,
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn pricer(&self) -> &CleanPricer {
        &self.pricer
    }

    /// Clean fair spread at time zero.
    pub fn kappa0(&self) -> f64 {
        self.kappa0
    }

    /// Clean risky annuity at time zero.
    pub fn rdv01(&self) -> f64 {
        self.rdv01
    }

    pub fn with_spread(&self, spread: f64) -> Result<Engine> {
        if spread == self.model.contract.spread {
            return Ok(self.clone());
        }
        Engine::new(ModelSpec {
            contract: self.model.contract.with_spread(spread),
            ..self.model.clone()
        })
    }

    pub fn with_seed(&self, seed: u64) -> Engine {
        let mut e = self.clone();
        e.model.seed = seed;
        e
    }

    fn spec(&self) -> &ContractSpec {
        &self.model.contract
    }

    /// Value of a unit premium stream on `[from, to]`.
    fn annuity(&self, from: f64, to: f64) -> f64 {
        let len = (to - from).max(0.0);
        let r = self.spec().rate;
        if r == 0.0 {
            len
        } else {
            -(-r * len).exp_m1() / r
        }
    }

    /// The two uniforms that drive the first default of outer path `index`.
    pub fn default_uniforms(&self, index: u64) -> (f64, f64) {
        let mut rng = substream(self.model.seed, Purpose::Default, index);
        (unit(&mut rng), unit(&mut rng))
    }

    /// First default of outer path `index`.
    pub fn first_default(&self, index: u64) -> Result<FirstDefault> {
        Ok(self.outer_scenario(index)?.default)
    }

    fn outer_scenario(&self, index: u64) -> Result<Scenario> {
        let mut rng = substream(self.model.seed, Purpose::Factors, index);
        let u = self.default_uniforms(index);
        self.scenario(0, self.model.factors.map(|p| p.x0), u, &mut rng)
    }

    /// Steps the factors from node `first` until the first default or maturity.
    fn scenario(&self, first: usize, start: [f64; FACTORS], u: (f64, f64), rng: &mut ChaCha8Rng) -> Result<Scenario> {
        let grid = &self.grid;
        let steps = grid.steps();
        let mut stepper = FactorStepper::new(&self.model.factors, start);
        let mut xs = Vec::with_capacity(steps + 1 - first);
        xs.push(stepper.current());
        let mut inverter = HazardInverter::new(u.0);
        let mut default = FirstDefault::NONE;
        let mut default_node = steps;
        for k in first..steps {
            let t = grid.time(k);
            let dt = grid.time(k + 1) - t;
            let l = intensities_unchecked(&self.model.shocks, xs[k - first]);
            if let Some(tau) = inverter.step(t, dt, l.total()) {
                default = FirstDefault {
                    time: tau,
                    group: l.pick(u.1),
                };
                default_node = k;
                break;
            }
            xs.push(stepper.advance(dt, rng)?);
        }
        let n = xs.len();
        Ok(Scenario {
            first,
            start: grid.time(first),
            default,
            default_node,
            xs,
            prices: vec![f64::NAN; n],
            s_tau: None,
        })
    }

    fn plan<'a>(&self, agreement: &'a MarginAgreement) -> Result<Plan<'a>> {
        agreement.validate()?;
        let calls = agreement.calls.resolve(&self.grid)?;
        let slices = calls
            .iter()
            .map(|c| (!c.on_grid).then(|| self.pricer.slice(c.time)))
            .collect();
        Ok(Plan {
            agreement,
            calls,
            slices,
        })
    }

    fn evaluate(&self, sc: &mut Scenario, plan: &Plan<'_>, mut state: MarginState) -> Result<Outcome> {
        let agreement = plan.agreement;
        let tau = sc.default.time;
        for i in plan.first_call_from(sc.start)..plan.calls.len() {
            let call = plan.calls[i];
            if call.time >= tau {
                break;
            }
            let s = match &plan.slices[i] {
                Some(slice) => slice.price(sc.x(call.node)[0]),
                None => sc.price_node(&self.pricer, call.node),
            };
            state.apply_call(agreement, call.time, s)?;
        }
        let spec = self.spec();
        let end = tau.min(spec.maturity);
        let annuity = self.annuity(sc.start, end);
        let Some(group) = sc.default.group else {
            return Ok(Outcome {
                ucva: 0.0,
                dva: 0.0,
                xi: 0.0,
                risky: -spec.spread * annuity,
                risky_terms: -spec.spread * annuity,
                mtm: 0.0,
                margin: state,
            });
        };
        state.freeze(tau);
        let c = effective_collateral(state.closeout_collateral(tau, agreement.mpor), agreement)?;
        let s = sc.s_tau(&self.pricer);
        let lgd = spec.lgd;
        let leg = closeout_cashflow(group, s, lgd, c, spec);
        let pfe = pfe_sample(&sc.default, s, lgd, c, spec);
        let disc = spec.discount(sc.start, tau);
        let premium = spec.spread * annuity;
        Ok(Outcome {
            ucva: disc * pfe.max(0.0),
            dva: disc * (-pfe).max(0.0),
            xi: disc * leg.xi,
            risky: disc * leg.bar - premium,
            risky_terms: disc * risky_payment(group, s, lgd, c, spec) - premium,
            mtm: uncollateralized_mtm(group, s, lgd, c),
            margin: state,
        })
    }

    fn par_outer<T: Send>(&self, paths: usize, f: impl Fn(u64, &mut Scenario) -> Result<T> + Sync) -> Result<Vec<T>> {
        if paths == 0 {
            return Err(Error::Argument("path count must be >= 1".into()));
        }
        (0..paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut sc = self.outer_scenario(i)?;
                f(i, &mut sc)
            })
            .collect()
    }

    /// CVA, UCVA and DVA at time zero for one agreement.
    pub fn cva0_mc(&self, agreement: &MarginAgreement, paths: usize) -> Result<ExposureReport> {
        Ok(self.case_reports(std::slice::from_ref(agreement), paths)?[0].exposure)
    }

    /// Counterparty-risky spread and SVA for one agreement.
    pub fn risky_spread_and_sva(&self, agreement: &MarginAgreement, paths: usize) -> Result<SpreadReport> {
        Ok(self.case_reports(std::slice::from_ref(agreement), paths)?[0].spread)
    }

    /// Per-path CVA components, one vector per agreement, on shared paths.
    pub fn path_samples(&self, agreements: &[MarginAgreement], paths: usize) -> Result<Vec<Vec<PathSample>>> {
        let plans = agreements.iter().map(|a| self.plan(a)).collect::<Result<Vec<_>>>()?;
        let rows = self.par_outer(paths, |_, sc| {
            plans
                .iter()
                .map(|plan| {
                    let o = self.evaluate(sc, plan, MarginState::new())?;
                    Ok(PathSample {
                        first: sc.default,
                        ucva: o.ucva,
                        dva: o.dva,
                        xi: o.xi,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        Ok((0..plans.len()).map(|k| rows.iter().map(|r| r[k]).collect()).collect())
    }

    /// CVA and spread reports for several agreements on shared paths.
    pub fn case_reports(&self, agreements: &[MarginAgreement], paths: usize) -> Result<Vec<CaseReport>> {
        let plans = agreements.iter().map(|a| self.plan(a)).collect::<Result<Vec<_>>>()?;
        let rows = self.par_outer(paths, |_, sc| {
            let annuity = self.annuity(0.0, sc.default.time.min(self.spec().maturity));
            let per_case = plans
                .iter()
                .map(|plan| {
                    let o = self.evaluate(sc, plan, MarginState::new())?;
                    Ok([o.ucva, o.dva, o.risky + self.spec().spread * annuity])
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((annuity, per_case))
        })?;
        let annuity: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let rdv01_c = Estimate::from_samples(&annuity);
        let seed = self.model.seed;
        Ok((0..plans.len())
            .map(|k| {
                let column = |j: usize| -> Vec<f64> { rows.iter().map(|r| r.1[k][j]).collect() };
                let ucva = column(0);
                let dva = column(1);
                let payoff = column(2);
                let ucva0 = Estimate::from_samples(&ucva);
                let dva0 = Estimate::from_samples(&dva);
                let diff: Vec<f64> = ucva.iter().zip(&dva).map(|(u, d)| u - d).collect();
                let mut cva0 = Estimate::from_samples(&diff);
                cva0.mean = ucva0.mean - dva0.mean;
                let exposure = ExposureReport {
                    paths,
                    seed,
                    cva0,
                    ucva0,
                    dva0,
                };
                let spread = self.spread_from(&annuity, rdv01_c, &diff, cva0, &payoff);
                CaseReport { exposure, spread }
            })
            .collect())
    }

    fn spread_from(
        &self,
        annuity: &[f64],
        rdv01_c: Estimate,
        cva: &[f64],
        cva_tilde: Estimate,
        payoff: &[f64],
    ) -> SpreadReport {
        let a = rdv01_c.mean;
        // Delta-method standard error of a ratio of sample means.
        let ratio_se = |num: &[f64], ratio: f64| -> f64 {
            let z: Vec<f64> = num.iter().zip(annuity).map(|(x, w)| (x - ratio * w) / a).collect();
            Estimate::from_samples(&z).se
        };
        let sva0 = cva_tilde.mean / a;
        let pl_c = Estimate::from_samples(payoff);
        let direct = pl_c.mean / a;
        let gap: Vec<f64> = (0..annuity.len())
            .map(|i| (payoff[i] - self.kappa0 * annuity[i] + cva[i]) / a)
            .collect();
        let gap_est = Estimate::from_samples(&gap);
        SpreadReport {
            kappa0: self.kappa0,
            kappa0_c: self.kappa0 - sva0,
            sva0,
            sva0_se: ratio_se(cva, sva0),
            rdv01: self.rdv01,
            rdv01_c,
            pl_c,
            cva_tilde,
            kappa0_c_direct: direct,
            kappa0_c_direct_se: ratio_se(payoff, direct),
            route_gap: direct - (self.kappa0 - sva0),
            route_gap_se: gap_est.se,
        }
    }

    /// EPE, ENE and mean collateral on buckets of width `bucket_width`.
    pub fn epe_ene_curves(
        &self,
        agreement: &MarginAgreement,
        paths: usize,
        bucket_width: f64,
    ) -> Result<Vec<ProfileBucket>> {
        Ok(self
            .profiles(std::slice::from_ref(agreement), paths, bucket_width)?
            .remove(0))
    }

    pub fn profiles(
        &self,
        agreements: &[MarginAgreement],
        paths: usize,
        bucket_width: f64,
    ) -> Result<Vec<Vec<ProfileBucket>>> {
        if !(bucket_width > 0.0) {
            return Err(Error::Argument(format!("bucket width must be > 0, got {bucket_width}")));
        }
        let spec = *self.spec();
        let maturity = spec.maturity;
        let buckets = ((maturity / bucket_width) - 1e-9).ceil().max(1.0) as usize;
        let edge = |b: usize| {
            if b + 1 == buckets {
                maturity
            } else {
                (b + 1) as f64 * bucket_width
            }
        };
        let plans = agreements.iter().map(|a| self.plan(a)).collect::<Result<Vec<_>>>()?;
        // Per path and agreement: (bucket, epe, ene, collateral at edges).
        type Row = (Option<(usize, Option<f64>, Option<f64>)>, Vec<f64>);
        let rows: Vec<Vec<Row>> = self.par_outer(paths, |_, sc| {
            plans
                .iter()
                .map(|plan| {
                    let o = self.evaluate(sc, plan, MarginState::new())?;
                    let tau = sc.default.time;
                    let hit = sc.default.group.map(|g| {
                        let b = ((tau / bucket_width).ceil() as usize)
                            .saturating_sub(1)
                            .min(buckets - 1);
                        let epe = g
                            .hits_counterparty()
                            .then(|| (1.0 - spec.recovery_cpty) * o.mtm.max(0.0));
                        let ene = g.hits_investor().then(|| (1.0 - spec.recovery_inv) * (-o.mtm).max(0.0));
                        (b, epe, ene)
                    });
                    let collateral = (0..buckets)
                        .map(&edge)
                        .take_while(|&e| e < tau)
                        .map(|e| o.margin.collateral_at(e))
                        .collect();
                    Ok((hit, collateral))
                })
                .collect()
        })?;
        Ok((0..plans.len())
            .map(|k| {
                let mut epe = vec![Vec::new(); buckets];
                let mut ene = vec![Vec::new(); buckets];
                let mut col = vec![Vec::new(); buckets];
                for row in &rows {
                    let (hit, collateral) = &row[k];
                    if let Some((b, p, n)) = hit {
                        if let Some(p) = p {
                            epe[*b].push(*p);
                        }
                        if let Some(n) = n {
                            ene[*b].push(*n);
                        }
                    }
                    for (b, c) in collateral.iter().enumerate() {
                        col[b].push(*c);
                    }
                }
                let est = |v: &Vec<f64>| (!v.is_empty()).then(|| Estimate::from_samples(v));
                (0..buckets)
                    .map(|b| ProfileBucket {
                        start: b as f64 * bucket_width,
                        end: edge(b),
                        epe: est(&epe[b]),
                        ene: est(&ene[b]),
                        collateral: est(&col[b]),
                    })
                    .collect()
            })
            .collect())
    }

    /// Mean forward CVA path for one agreement by nested simulation.
    pub fn forward_cva(
        &self,
        agreement: &MarginAgreement,
        outer: usize,
        inner: usize,
        observation_times: &[f64],
    ) -> Result<Vec<ForwardPoint>> {
        Ok(self
            .forward_cva_cases(std::slice::from_ref(agreement), outer, inner, observation_times)?
            .remove(0))
    }

    /// Forward CVA for several agreements; inner paths are shared.
    pub fn forward_cva_cases(
        &self,
        agreements: &[MarginAgreement],
        outer: usize,
        inner: usize,
        observation_times: &[f64],
    ) -> Result<Vec<Vec<ForwardPoint>>> {
        if outer == 0 || inner == 0 || observation_times.is_empty() {
            return Err(Error::Argument(
                "forward CVA needs at least one outer path, inner path and observation time".into(),
            ));
        }
        if nested_stream(outer as u64 - 1, observation_times.len() as u64 - 1, inner as u64 - 1).is_none() {
            return Err(Error::Argument(format!(
                "nested simulation too large: {outer} outer, {} observations, {inner} inner",
                observation_times.len()
            )));
        }
        let nodes = observation_times
            .iter()
            .map(|&t| {
                self.grid
                    .node_at(t)
                    .ok_or_else(|| Error::Argument(format!("observation time {t} is not a grid node")))
            })
            .collect::<Result<Vec<_>>>()?;
        let plans = agreements.iter().map(|a| self.plan(a)).collect::<Result<Vec<_>>>()?;
        let steps = self.grid.steps();
        let seed = self.model.seed;
        // rows[path][obs][case] = Some(cva) if alive at the observation.
        let rows: Vec<Vec<Vec<Option<f64>>>> = self.par_outer(outer, |o, sc| {
            let states = plans
                .iter()
                .map(|plan| Ok(self.evaluate(sc, plan, MarginState::new())?.margin))
                .collect::<Result<Vec<_>>>()?;
            let tau = sc.default.time;
            nodes
                .iter()
                .enumerate()
                .map(|(j, &node)| {
                    let t = self.grid.time(node);
                    if tau <= t {
                        return Ok(vec![None; plans.len()]);
                    }
                    if node == steps {
                        return Ok(vec![Some(0.0); plans.len()]);
                    }
                    let x = sc.x(node);
                    let restarts: Vec<MarginState> = states
                        .iter()
                        .zip(&plans)
                        .map(|(s, p)| s.restart_from(t, p.agreement.mpor))
                        .collect();
                    let mut sums = vec![Vec::with_capacity(inner); plans.len()];
                    for i in 0..inner {
                        let key = nested_stream(o, j as u64, i as u64).expect("bounds checked");
                        let mut rng = substream(seed, Purpose::Inner, key);
                        let u = (unit(&mut rng), unit(&mut rng));
                        let mut isc = self.scenario(node, x, u, &mut rng)?;
                        for (k, plan) in plans.iter().enumerate() {
                            let out = self.evaluate(&mut isc, plan, restarts[k].clone())?;
                            sums[k].push(out.ucva - out.dva);
                        }
                    }
                    Ok(sums
                        .iter()
                        .map(|v| Some(compensated_sum(v.iter().copied()) / inner as f64))
                        .collect())
                })
                .collect()
        })?;
        Ok((0..plans.len())
            .map(|k| {
                nodes
                    .iter()
                    .enumerate()
                    .map(|(j, &node)| {
                        let all: Vec<f64> = rows.iter().map(|r| r[j][k].unwrap_or(0.0)).collect();
                        let alive: Vec<f64> = rows.iter().filter_map(|r| r[j][k]).collect();
                        ForwardPoint {
                            time: self.grid.time(node),
                            mean: Estimate::from_samples(&all),
                            alive: alive.len(),
                            alive_mean: (!alive.is_empty()).then(|| Estimate::from_samples(&alive)),
                        }
                    })
                    .collect()
            })
            .collect())
    }

    /// Mean discounted cash flow of the clean contract at `kappa0` and of the
    /// risky contract at `kappa0_c`. The risky spread is estimated on an
    /// independent seed so the check is not satisfied by construction.
    pub fn flatness(&self, agreement: &MarginAgreement, paths: usize) -> Result<FlatnessReport> {
        let fair = self.with_spread(self.kappa0)?;
        let spec = *fair.spec();
        let a1 = fair.model.shocks.a[0];
        if paths == 0 {
            return Err(Error::Argument("path count must be >= 1".into()));
        }
        let clean = (0..paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(fair.model.seed, Purpose::Factors, i);
                let u = unit(&mut substream(fair.model.seed, Purpose::ReferenceDefault, i));
                let tau1 = fair.reference_default(a1, u, &mut rng)?;
                let end = tau1.min(spec.maturity);
                let protection = if tau1 <= spec.maturity {
                    spec.discount(0.0, tau1) * spec.lgd
                } else {
                    0.0
                };
                Ok(protection - fair.kappa0 * fair.annuity(0.0, end))
            })
            .collect::<Result<Vec<f64>>>()?;
        let calibration = fair.with_seed(mix64(fair.model.seed ^ 0x00c0_ffee));
        let calibrated = calibration.risky_spread_and_sva(agreement, paths)?;
        let kappa0_c = calibrated.kappa0_c;
        let plan = fair.plan(agreement)?;
        let risky = fair.par_outer(paths, |_, sc| {
            let o = fair.evaluate(sc, &plan, MarginState::new())?;
            // Replace the contract premium by kappa0_c.
            let annuity = fair.annuity(0.0, sc.default.time.min(spec.maturity));
            Ok(o.risky_terms + (spec.spread - kappa0_c) * annuity)
        })?;
        Ok(FlatnessReport {
            kappa0: fair.kappa0,
            clean: Estimate::from_samples(&clean),
            kappa0_c,
            kappa0_c_se: calibrated.sva0_se,
            risky: Estimate::from_samples(&risky),
        })
    }

    /// Default time of the reference name alone, from its marginal intensity.
    fn reference_default(&self, a1: f64, u: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
        let mut stepper = FactorStepper::new(&self.model.factors, self.model.factors.map(|p| p.x0));
        let mut inverter = HazardInverter::new(u);
        for k in 0..self.grid.steps() {
            let t = self.grid.time(k);
            let dt = self.grid.time(k + 1) - t;
            if let Some(tau) = inverter.step(t, dt, a1 + stepper.current()[0]) {
                return Ok(tau);
            }
            stepper.advance(dt, rng)?;
        }
        Ok(f64::INFINITY)
    }
}

/// Group counts of the first defaults over `paths` outer paths.
pub fn group_counts(engine: &Engine, paths: usize) -> Result<[usize; 8]> {
    let defaults = engine.par_outer(paths, |_, sc| {
        Ok(sc.default.group.map(DefaultGroup::index).unwrap_or(0))
    })?;
    let mut counts = [0usize; 8];
    for g in defaults {
        counts[g] += 1;
    }
    Ok(counts)
}
