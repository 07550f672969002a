//! CIR intensity factors: simulation, exact moments and the exponential-affine
//! transform used for closed-form survival probabilities.
//!
//! Each factor follows
//!
//! ```text
//! dX = zeta (mu - X) dt + sigma sqrt(X) dW
//! ```
//!
//! and is discretized with full-truncation Euler: the auxiliary state may go
//! negative, but drift and diffusion only ever see `max(x, 0)` and the
//! reported value is clamped at zero.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};

/// Number of factors driving the three names.
pub const FACTORS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CirParams {
    /// Mean-reversion speed (1/year).
    pub zeta: f64,
    /// Long-run level (1/year).
    pub mu: f64,
    pub sigma: f64,
    /// Initial value (1/year).
    pub x0: f64,
}

impl CirParams {
    pub fn new(zeta: f64, mu: f64, sigma: f64, x0: f64) -> Result<Self> {
        let p = CirParams { zeta, mu, sigma, x0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("zeta", self.zeta),
            ("mu", self.mu),
            ("sigma", self.sigma),
            ("x0", self.x0),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Coefficients `(ln A, B)` such that
    /// `E[exp(-int_0^tau X ds) | X_0 = x] = A(tau) exp(-B(tau) x)`.
    pub fn riccati(&self, tau: f64) -> (f64, f64) {
        let CirParams { zeta, mu, sigma, .. } = *self;
        if tau <= 0.0 {
            return (0.0, 0.0);
        }
        if sigma == 0.0 {
            let b = if zeta > 0.0 {
                -(-zeta * tau).exp_m1() / zeta
            } else {
                tau
            };
            return (-mu * (tau - b), b);
        }
        let s2 = sigma * sigma;
        let gamma = (zeta * zeta + 2.0 * s2).sqrt();
        let decay = (-gamma * tau).exp();
        // (gamma + zeta) + (gamma - zeta) e^{-gamma tau}, with gamma - zeta
        // rewritten as 2 sigma^2 / (gamma + zeta) to avoid cancellation.
        let gz = gamma + zeta;
        let denom = gz + 2.0 * s2 / gz * decay;
        let b = -2.0 * (-gamma * tau).exp_m1() / denom;
        let ln_a = if zeta * mu == 0.0 {
            0.0
        } else {
            let k = s2 * (-(-gamma * tau).exp_m1()) / (gamma * gz);
            (2.0 * zeta * mu / s2) * (-s2 * tau / gz - (-k).ln_1p())
        };
        (ln_a, b)
    }
}

/// Parameter presets for low, medium and high credit risk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorRegime {
    Low,
    Medium,
    High,
}

impl FactorRegime {
    pub fn params(self) -> CirParams {
        let (zeta, mu, sigma, x0) = match self {
            FactorRegime::Low => (0.9, 0.001, 0.01, 0.001),
            FactorRegime::Medium => (0.8, 0.02, 0.1, 0.02),
            FactorRegime::High => (0.5, 0.05, 0.2, 0.05),
        };
        CirParams { zeta, mu, sigma, x0 }
    }

    pub const ALL: [FactorRegime; 3] = [FactorRegime::Low, FactorRegime::Medium, FactorRegime::High];
}

/// Uniform time grid `start = t_0 < t_1 < ... < t_n = end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    start: f64,
    end: f64,
    steps: usize,
}

impl TimeGrid {
    /// Grid on `[start, end]` whose step is the largest value `<= max_step`
    /// that divides the interval evenly.
    pub fn new(start: f64, end: f64, max_step: f64) -> Result<Self> {
        if !(max_step.is_finite() && max_step > 0.0) {
            return Err(Error::Argument(format!("grid step must be > 0, got {max_step}")));
        }
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(Error::Argument(format!("grid needs start < end, got [{start}, {end}]")));
        }
        let steps = (((end - start) / max_step) - 1e-9).ceil().max(1.0) as usize;
        Ok(TimeGrid { start, end, steps })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&self) -> f64 {
        (self.end - self.start) / self.steps as f64
    }

    pub fn time(&self, node: usize) -> f64 {
        if node >= self.steps {
            self.end
        } else {
            self.start + node as f64 * self.step()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.time(k))
    }

    /// Index `k < steps` with `t_k <= t < t_{k+1}`; clamped to the grid.
    pub fn left_node(&self, t: f64) -> usize {
        if t <= self.start {
            return 0;
        }
        let mut k = (((t - self.start) / self.step()).floor() as usize).min(self.steps - 1);
        while k > 0 && self.time(k) > t {
            k -= 1;
        }
        while k + 1 < self.steps && self.time(k + 1) <= t {
            k += 1;
        }
        k
    }

    /// Node index whose time equals `t` up to a tiny tolerance.
    pub fn node_at(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * self.step();
        let k = self.left_node(t + tol);
        [k, k + 1]
            .into_iter()
            .find(|&j| j <= self.steps && (self.time(j) - t).abs() <= tol)
    }
}

/// A joint path of the three factors on (a tail of) a grid.
///
/// Values are stored from node `first` through the last simulated node.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPath {
    grid: TimeGrid,
    first: usize,
    values: [Vec<f64>; FACTORS],
}

impl FactorPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn first_node(&self) -> usize {
        self.first
    }

    /// Last node with a stored value.
    pub fn last_node(&self) -> usize {
        self.first + self.values[0].len() - 1
    }

    pub fn value(&self, factor: usize, node: usize) -> f64 {
        self.values[factor][node - self.first]
    }

    pub fn at(&self, node: usize) -> [f64; FACTORS] {
        std::array::from_fn(|i| self.value(i, node))
    }

    pub fn series(&self, factor: usize) -> &[f64] {
        &self.values[factor]
    }
}

/// Incremental full-truncation Euler stepper for the three factors.
///
/// Draws three standard normals per step, factor order 1, 2, 3, so a path
/// cut short at any node is a prefix of the full path from the same stream.
pub struct FactorStepper<'a> {
    params: &'a [CirParams; FACTORS],
    state: [f64; FACTORS],
}

impl<'a> FactorStepper<'a> {
    pub fn new(params: &'a [CirParams; FACTORS], start: [f64; FACTORS]) -> Self {
        FactorStepper { params, state: start }
    }

    pub fn current(&self) -> [f64; FACTORS] {
        self.state.map(|x| x.max(0.0))
    }

    pub fn advance(&mut self, dt: f64, rng: &mut ChaCha8Rng) -> Result<[f64; FACTORS]> {
        let sqrt_dt = dt.sqrt();
        for (x, p) in self.state.iter_mut().zip(self.params) {
            let z: f64 = rng.sample(StandardNormal);
            if !z.is_finite() {
                return Err(Error::Simulation(format!("non-finite normal draw {z}")));
            }
            let pos = x.max(0.0);
            let next = *x + p.zeta * (p.mu - pos) * dt + p.sigma * pos.sqrt() * sqrt_dt * z;
            if !next.is_finite() {
                return Err(Error::Simulation(format!("non-finite factor value {next}")));
            }
            *x = next;
        }
        Ok(self.current())
    }
}

/// Simulates one joint path on `grid` starting from the `x0` of each factor.
/// The path is a deterministic function of `(seed, path_index)`.
pub fn simulate_factors(
    params: &[CirParams; FACTORS],
    grid: &TimeGrid,
    seed: u64,
    path_index: u64,
) -> Result<FactorPath> {
    let mut rng = substream(seed, Purpose::Factors, path_index);
    simulate_from(params, grid, 0, params.map(|p| p.x0), grid.steps(), &mut rng)
}

/// Simulates nodes `first..=last` starting from `start` at node `first`.
pub fn simulate_from(
    params: &[CirParams; FACTORS],
    grid: &TimeGrid,
    first: usize,
    start: [f64; FACTORS],
    last: usize,
    rng: &mut ChaCha8Rng,
) -> Result<FactorPath> {
    for p in params {
        p.validate()?;
    }
    if first > last || last > grid.steps() {
        return Err(Error::Argument(format!(
            "node range {first}..={last} outside grid with {} steps",
            grid.steps()
        )));
    }
    let len = last - first + 1;
    let mut values: [Vec<f64>; FACTORS] = std::array::from_fn(|_| Vec::with_capacity(len));
    let mut stepper = FactorStepper::new(params, start);
    for (v, x) in values.iter_mut().zip(stepper.current()) {
        v.push(x);
    }
    for k in first..last {
        let dt = grid.time(k + 1) - grid.time(k);
        let x = stepper.advance(dt, rng)?;
        for (v, xi) in values.iter_mut().zip(x) {
            v.push(xi);
        }
    }
    Ok(FactorPath {
        grid: *grid,
        first,
        values,
    })
}

/// Exact mean and variance of `X_t` given `X_0 = x0`.
pub fn cir_moments(params: &CirParams, t: f64) -> (f64, f64) {
    let CirParams { zeta, mu, sigma, x0 } = *params;
    if t <= 0.0 {
        return (x0, 0.0);
    }
    let s2 = sigma * sigma;
    if zeta == 0.0 {
        return (x0, s2 * x0 * t);
    }
    let e = (-zeta * t).exp();
    let mean = mu + (x0 - mu) * e;
    let var = x0 * s2 / zeta * (e - e * e) + mu * s2 / (2.0 * zeta) * (1.0 - e) * (1.0 - e);
    (mean, var)
}

/// `E[exp(-int_t^horizon (shift + X_s) ds) | X_t = x]`.
pub fn affine_transform(params: &CirParams, shift: f64, t: f64, horizon: f64, x: f64) -> Result<f64> {
    if horizon < t {
        return Err(Error::Argument(format!("horizon {horizon} precedes t {t}")));
    }
    if x < 0.0 || shift < 0.0 {
        return Err(Error::Argument(format!(
            "factor value and shift must be >= 0, got x={x}, shift={shift}"
        )));
    }
    let tau = horizon - t;
    let (ln_a, b) = params.riccati(tau);
    Ok((ln_a - b * x - shift * tau).exp())
}
