//! Counterparty-risk-free CDS valuation.
//!
//! The reference survival curve `P(t, u)` comes from the affine transform of
//! the first factor, so the pre-default clean price is a deterministic
//! function of `(t, X^1_t)`. The premium leg is paid continuously.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::{CirParams, TimeGrid};

/// Default quadrature step for the premium leg (monthly).
pub const DEFAULT_QUADRATURE_STEP: f64 = 1.0 / 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractSpec {
    /// Maturity `T` in years.
    pub maturity: f64,
    /// Running spread `kappa` (decimal, per year).
    pub spread: f64,
    /// Loss given default of the reference entity, per unit notional.
    pub lgd: f64,
    /// Counterparty recovery `R2`.
    pub recovery_cpty: f64,
    /// Investor recovery `R3`.
    pub recovery_inv: f64,
    /// Deterministic short rate.
    pub rate: f64,
}

impl ContractSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.maturity.is_finite() && self.maturity > 0.0) {
            return Err(Error::config(
                "contract.maturity",
                format!("must be > 0, got {}", self.maturity),
            ));
        }
        for (path, v) in [
            ("contract.lgd", self.lgd),
            ("contract.recovery_cpty", self.recovery_cpty),
            ("contract.recovery_inv", self.recovery_inv),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(path, format!("must lie in [0, 1], got {v}")));
            }
        }
        if !self.spread.is_finite() {
            return Err(Error::config("contract.spread", "must be finite"));
        }
        if !self.rate.is_finite() {
            return Err(Error::config("contract.rate", "must be finite"));
        }
        Ok(())
    }

    pub fn with_spread(self, spread: f64) -> Self {
        ContractSpec { spread, ..self }
    }

    /// Discount factor `B_from / B_to`.
    pub fn discount(&self, from: f64, to: f64) -> f64 {
        (-self.rate * (to - from)).exp()
    }
}

/// Composite Simpson nodes and weights on `[a, b]` with spacing `<= max_step`.
fn simpson(a: f64, b: f64, max_step: f64) -> (Vec<f64>, Vec<f64>) {
    if b <= a {
        return (vec![a], vec![0.0]);
    }
    let mut n = ((b - a) / max_step - 1e-9).ceil().max(2.0) as usize;
    n += n % 2;
    let h = (b - a) / n as f64;
    let nodes = (0..=n).map(|j| if j == n { b } else { a + j as f64 * h }).collect();
    let weights = (0..=n)
        .map(|j| {
            let w = if j == 0 || j == n {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect();
    (nodes, weights)
}

/// Survival curve of the reference name seen from time `t`, tabulated on a
/// quadrature grid over `[t, T]`.
#[derive(Debug, Clone)]
pub struct CleanCurve {
    t: f64,
    x: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    survival: Vec<f64>,
    discount: Vec<f64>,
}

impl CleanCurve {
    /// Curve implied by `q^1 = a1 + X^1` with `X^1_t = x`.
    pub fn affine(params: &CirParams, a1: f64, t: f64, x: f64, spec: &ContractSpec, max_step: f64) -> Result<Self> {
        if x < 0.0 || a1 < 0.0 {
            return Err(Error::Argument(format!("need x >= 0 and a1 >= 0, got x={x}, a1={a1}")));
        }
        let mut curve = Self::from_survival(t, spec, max_step, |u| {
            let (ln_a, b) = params.riccati(u - t);
            (ln_a - b * x - a1 * (u - t)).exp()
        })?;
        curve.x = x;
        Ok(curve)
    }

    /// Curve from an arbitrary survival function `u -> P(t, u)`.
    pub fn from_survival(t: f64, spec: &ContractSpec, max_step: f64, p: impl Fn(f64) -> f64) -> Result<Self> {
        if !(max_step > 0.0) {
            return Err(Error::Argument(format!("quadrature step must be > 0, got {max_step}")));
        }
        if !(0.0..=spec.maturity).contains(&t) {
            return Err(Error::Argument(format!(
                "evaluation time {t} outside [0, {}]",
                spec.maturity
            )));
        }
        let (nodes, weights) = simpson(t, spec.maturity, max_step);
        let survival: Vec<f64> = nodes.iter().map(|&u| if u == t { 1.0 } else { p(u) }).collect();
        let discount = nodes.iter().map(|&u| spec.discount(t, u)).collect();
        Ok(CleanCurve {
            t,
            x: f64::NAN,
            nodes,
            weights,
            survival,
            discount,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Factor value the curve was built from (NaN for non-affine curves).
    pub fn factor(&self) -> f64 {
        self.x
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn survival(&self) -> &[f64] {
        &self.survival
    }

    fn annuity(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.survival)
            .zip(&self.discount)
            .map(|((w, p), d)| w * p * d)
            .sum()
    }
}

/// `RDV01_t = int_t^T D(t,u) P(t,u) du`.
pub fn risky_annuity(curve: &CleanCurve, _spec: &ContractSpec) -> f64 {
    curve.annuity()
}

/// `PL_t = lgd * int_t^T D(t,u) (-dP(t,u))`, integrated by parts:
/// `lgd * (1 - D(t,T) P(t,T) - r * RDV01_t)`.
pub fn protection_leg(curve: &CleanCurve, spec: &ContractSpec) -> f64 {
    let last = curve.nodes.len() - 1;
    let terminal = curve.discount[last] * curve.survival[last];
    spec.lgd * (1.0 - terminal - spec.rate * curve.annuity())
}

/// Spread that zeroes the clean pre-default price.
pub fn fair_spread(curve: &CleanCurve, spec: &ContractSpec) -> Result<f64> {
    let annuity = risky_annuity(curve, spec);
    if !(annuity > 0.0) {
        return Err(Error::Pricing(format!(
            "risky annuity is {annuity}; fair spread undefined"
        )));
    }
    Ok(protection_leg(curve, spec) / annuity)
}

/// Pre-default ex-dividend clean price `PL_t - kappa * RDV01_t`.
pub fn clean_price(curve: &CleanCurve, spec: &ContractSpec) -> f64 {
    protection_leg(curve, spec) - spec.spread * risky_annuity(curve, spec)
}

/// Direction of an upfront conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpfrontDirection {
    /// Running spread `kappa0` to upfront payment.
    SpreadToUpfront,
    /// Upfront payment to running spread `kappa0`.
    UpfrontToSpread,
}

/// `UP = (kappa0 - fixed) * dv01` and its inverse.
pub fn upfront_convert(direction: UpfrontDirection, value: f64, fixed_spread: f64, dv01: f64) -> Result<f64> {
    if !(dv01 > 0.0) {
        return Err(Error::Argument(format!("dv01 must be > 0, got {dv01}")));
    }
    Ok(match direction {
        UpfrontDirection::SpreadToUpfront => (value - fixed_spread) * dv01,
        UpfrontDirection::UpfrontToSpread => value / dv01 + fixed_spread,
    })
}

/// Fast pathwise clean pricer on a simulation grid.
///
/// For every grid node the Simpson offsets and Riccati coefficients of the
/// remaining life are tabulated once, so pricing at a node costs one
/// exponential per quadrature point.
#[derive(Debug, Clone)]
pub struct CleanPricer {
    params: CirParams,
    a1: f64,
    spec: ContractSpec,
    quad_step: f64,
    grid: TimeGrid,
    tables: Vec<NodeTable>,
}

#[derive(Debug, Clone)]
struct NodeTable {
    /// `w_j D(tau_j) A(tau_j) e^{-a1 tau_j}`
    coef: Vec<f64>,
    b: Vec<f64>,
    terminal_coef: f64,
    terminal_b: f64,
}

impl NodeTable {
    fn build(params: &CirParams, a1: f64, spec: &ContractSpec, t: f64, quad_step: f64) -> Self {
        let (nodes, weights) = simpson(t, spec.maturity, quad_step);
        let mut coef = Vec::with_capacity(nodes.len());
        let mut b = Vec::with_capacity(nodes.len());
        for (&u, &w) in nodes.iter().zip(&weights) {
            let tau = u - t;
            let (ln_a, bj) = params.riccati(tau);
            coef.push(w * (ln_a - (a1 + spec.rate) * tau).exp());
            b.push(bj);
        }
        let tau = spec.maturity - t;
        let (ln_a, terminal_b) = params.riccati(tau);
        NodeTable {
            coef,
            b,
            terminal_coef: (ln_a - (a1 + spec.rate) * tau).exp(),
            terminal_b,
        }
    }

    fn price(&self, spec: &ContractSpec, x: f64) -> f64 {
        let annuity: f64 = self.coef.iter().zip(&self.b).map(|(c, b)| c * (-b * x).exp()).sum();
        let terminal = self.terminal_coef * (-self.terminal_b * x).exp();
        spec.lgd * (1.0 - terminal) - (spec.spread + spec.lgd * spec.rate) * annuity
    }
}

impl CleanPricer {
    pub fn new(params: &CirParams, a1: f64, spec: &ContractSpec, grid: &TimeGrid, quad_step: f64) -> Result<Self> {
        params.validate()?;
        spec.validate()?;
        if !(quad_step > 0.0) {
            return Err(Error::Argument(format!("quadrature step must be > 0, got {quad_step}")));
        }
        let tables = grid
            .times()
            .map(|t| NodeTable::build(params, a1, spec, t.min(spec.maturity), quad_step))
            .collect();
        Ok(CleanPricer {
            params: *params,
            a1,
            spec: *spec,
            quad_step,
            grid: *grid,
            tables,
        })
    }

    pub fn spec(&self) -> &ContractSpec {
        &self.spec
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Clean price at grid node `node` with `X^1 = x`.
    pub fn price_at_node(&self, node: usize, x: f64) -> f64 {
        self.tables[node].price(&self.spec, x)
    }

    /// Clean price at an arbitrary time `t` in `[0, T]`.
    pub fn price_at(&self, t: f64, x: f64) -> f64 {
        if let Some(k) = self.grid.node_at(t) {
            return self.price_at_node(k, x);
        }
        if t >= self.spec.maturity {
            return 0.0;
        }
        NodeTable::build(&self.params, self.a1, &self.spec, t, self.quad_step).price(&self.spec, x)
    }

    /// Tabulated pricer for one off-grid time.
    pub fn slice(&self, t: f64) -> PriceSlice {
        let t = t.min(self.spec.maturity);
        PriceSlice {
            time: t,
            spec: self.spec,
            table: NodeTable::build(&self.params, self.a1, &self.spec, t, self.quad_step),
        }
    }
}

/// Clean price as a function of `X^1` at one fixed time.
#[derive(Debug, Clone)]
pub struct PriceSlice {
    time: f64,
    spec: ContractSpec,
    table: NodeTable,
}

impl PriceSlice {
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn price(&self, x: f64) -> f64 {
        self.table.price(&self.spec, x)
    }
}
