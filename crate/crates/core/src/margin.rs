//! Bilateral margin account.
//!
//! Collateral is cash, starts at zero and only moves on scheduled call
//! dates. On a call date `t_i` before the first party default `tau_hat`:
//!
//! ```text
//! dC = (S - G_cpty - C) 1{S - G_cpty - C >  MTA}
//!    + (S - G_inv  - C) 1{S - G_inv  - C < -MTA}
//! ```
//!
//! and `C` is constant on `(t_i, t_{i+1}]`. Once `tau_hat` occurs the
//! account is frozen. A positive balance is collateral held by the investor.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::factors::TimeGrid;

/// A threshold amount, possibly infinite.
///
/// `Unbounded` means `+inf` for the counterparty and `-inf` for the investor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Finite(f64),
    Unbounded,
}

impl Threshold {
    pub const UNBOUNDED_TOKEN: &'static str = "unbounded";
}

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Threshold::Finite(v) => write!(f, "{v}"),
            Threshold::Unbounded => f.write_str(Threshold::UNBOUNDED_TOKEN),
        }
    }
}

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Threshold::Finite(v) => s.serialize_f64(*v),
            Threshold::Unbounded => s.serialize_str(Threshold::UNBOUNDED_TOKEN),
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct Visitor;
        impl serde::de::Visitor<'_> for Visitor {
            type Value = Threshold;

            fn expecting(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, "a finite number or the string \"{}\"", Threshold::UNBOUNDED_TOKEN)
            }

            fn visit_f64<E: serde::de::Error>(self, v: f64) -> std::result::Result<Threshold, E> {
                if v.is_finite() {
                    Ok(Threshold::Finite(v))
                } else {
                    Err(E::custom(format!(
                        "non-finite threshold; use \"{}\" instead",
                        Threshold::UNBOUNDED_TOKEN
                    )))
                }
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<Threshold, E> {
                Ok(Threshold::Finite(v as f64))
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<Threshold, E> {
                Ok(Threshold::Finite(v as f64))
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<Threshold, E> {
                if v == Threshold::UNBOUNDED_TOKEN {
                    Ok(Threshold::Unbounded)
                } else {
                    Err(E::invalid_value(serde::de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(Visitor)
    }
}

/// When margin calls happen.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallSchedule {
    /// Every interior node of the simulation grid.
    #[default]
    Grid,
    /// Every `period` years, strictly inside `(0, T)`.
    Periodic(f64),
    /// Explicit call times, strictly increasing, inside `(0, T)`.
    Times(Vec<f64>),
}

/// A resolved call date and the grid node at or before it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CallDate {
    pub time: f64,
    pub node: usize,
    /// True when `time` is exactly a grid node.
    pub on_grid: bool,
}

impl CallSchedule {
    pub fn resolve(&self, grid: &TimeGrid) -> Result<Vec<CallDate>> {
        let end = grid.end();
        let times: Vec<f64> = match self {
            CallSchedule::Grid => {
                return Ok((1..grid.steps())
                    .map(|k| CallDate {
                        time: grid.time(k),
                        node: k,
                        on_grid: true,
                    })
                    .collect())
            }
            CallSchedule::Periodic(period) => {
                if !(*period > 0.0) {
                    return Err(Error::config(
                        "margin.calls.periodic",
                        format!("period must be > 0, got {period}"),
                    ));
                }
                (1..)
                    .map(|i| grid.start() + i as f64 * period)
                    .take_while(|&t| t < end - 1e-12)
                    .collect()
            }
            CallSchedule::Times(ts) => {
                for (i, w) in ts.windows(2).enumerate() {
                    if !(w[1] > w[0]) {
                        return Err(Error::config(
                            format!("margin.calls.times[{}]", i + 1),
                            "call times must be strictly increasing",
                        ));
                    }
                }
                if let Some(bad) = ts.iter().position(|&t| !(t > grid.start() && t < end)) {
                    return Err(Error::config(
                        format!("margin.calls.times[{bad}]"),
                        format!("call time must lie in (0, {end})"),
                    ));
                }
                ts.clone()
            }
        };
        Ok(times
            .into_iter()
            .map(|time| match grid.node_at(time) {
                Some(node) => CallDate {
                    time: grid.time(node),
                    node,
                    on_grid: true,
                },
                None => CallDate {
                    time,
                    node: grid.left_node(time),
                    on_grid: false,
                },
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginAgreement {
    pub gamma_cpty: Threshold,
    pub gamma_inv: Threshold,
    pub mta: f64,
    pub calls: CallSchedule,
    /// Margin period of risk in years.
    pub mpor: f64,
    pub haircut: f64,
}

impl MarginAgreement {
    /// No collateral is ever exchanged.
    pub fn uncollateralized() -> Self {
        MarginAgreement {
            gamma_cpty: Threshold::Unbounded,
            gamma_inv: Threshold::Unbounded,
            mta: 0.0,
            calls: CallSchedule::Grid,
            mpor: 0.0,
            haircut: 0.0,
        }
    }

    /// Zero thresholds and MTA with calls on every grid node.
    pub fn full() -> Self {
        MarginAgreement {
            gamma_cpty: Threshold::Finite(0.0),
            gamma_inv: Threshold::Finite(0.0),
            ..Self::uncollateralized()
        }
    }

    pub fn with_thresholds(self, gamma_cpty: Threshold, gamma_inv: Threshold) -> Self {
        MarginAgreement {
            gamma_cpty,
            gamma_inv,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Threshold::Finite(g) = self.gamma_cpty {
            if g < 0.0 {
                return Err(Error::config("margin.gamma_cpty", format!("must be >= 0, got {g}")));
            }
        }
        if let Threshold::Finite(g) = self.gamma_inv {
            if g > 0.0 {
                return Err(Error::config("margin.gamma_inv", format!("must be <= 0, got {g}")));
            }
        }
        if !(self.mta.is_finite() && self.mta >= 0.0) {
            return Err(Error::config("margin.mta", format!("must be >= 0, got {}", self.mta)));
        }
        if !(self.mpor.is_finite() && self.mpor >= 0.0) {
            return Err(Error::config("margin.mpor", format!("must be >= 0, got {}", self.mpor)));
        }
        if !(self.haircut >= 0.0 && self.haircut < 1.0) {
            return Err(Error::config(
                "margin.haircut",
                format!("must lie in [0, 1), got {}", self.haircut),
            ));
        }
        Ok(())
    }

    /// Balance after a call with exposure `s` against current balance `c`,
    /// or `None` when neither gate opens.
    pub fn target(&self, s: f64, c: f64) -> Option<f64> {
        if let Threshold::Finite(g) = self.gamma_cpty {
            if s - g - c > self.mta {
                return Some(s - g);
            }
        }
        if let Threshold::Finite(g) = self.gamma_inv {
            if s - g - c < -self.mta {
                return Some(s - g);
            }
        }
        None
    }

    /// Collateral increment for exposure `s` against current balance `c`.
    pub fn increment(&self, s: f64, c: f64) -> f64 {
        self.target(s, c).map_or(0.0, |next| next - c)
    }
}

/// Margin account of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginState {
    collateral: f64,
    last_call: Option<f64>,
    frozen_at: Option<f64>,
    /// `(call time, balance after the call)` for every call that moved C.
    history: Vec<(f64, f64)>,
}

impl Default for MarginState {
    fn default() -> Self {
        Self::new()
    }
}

impl MarginState {
    pub fn new() -> Self {
        MarginState {
            collateral: 0.0,
            last_call: None,
            frozen_at: None,
            history: Vec::new(),
        }
    }

    /// Current balance (after the latest processed call).
    pub fn collateral(&self) -> f64 {
        self.collateral
    }

    pub fn last_call(&self) -> Option<f64> {
        self.last_call
    }

    pub fn frozen_at(&self) -> Option<f64> {
        self.frozen_at
    }

    pub fn history(&self) -> &[(f64, f64)] {
        &self.history
    }

    /// Applies the call at `t` with clean exposure `s`; returns the increment.
    pub fn apply_call(&mut self, agreement: &MarginAgreement, t: f64, s: f64) -> Result<f64> {
        if let Some(frozen) = self.frozen_at {
            return Err(Error::State(format!(
                "margin call at {t} after account froze at {frozen}"
            )));
        }
        if let Some(prev) = self.last_call {
            if t <= prev {
                return Err(Error::State(format!(
                    "margin call at {t} does not follow previous call at {prev}"
                )));
            }
        }
        self.last_call = Some(t);
        match agreement.target(s, self.collateral) {
            Some(next) => {
                let delta = next - self.collateral;
                self.collateral = next;
                self.history.push((t, next));
                Ok(delta)
            }
            None => Ok(0.0),
        }
    }

    /// Freezes the account at the first party default `tau_hat`.
    pub fn freeze(&mut self, tau_hat: f64) {
        if self.frozen_at.is_none() {
            self.frozen_at = Some(tau_hat);
        }
    }

    /// Balance from the last call strictly before `t` (left-continuous).
    pub fn balance_before(&self, t: f64) -> f64 {
        let idx = self.history.partition_point(|&(s, _)| s < t);
        if idx == 0 {
            0.0
        } else {
            self.history[idx - 1].1
        }
    }

    /// Collateral in force at `t`; after a freeze the value at `tau_hat`.
    pub fn collateral_at(&self, t: f64) -> f64 {
        match self.frozen_at {
            Some(f) if t > f => self.balance_before(f),
            _ => self.balance_before(t),
        }
    }

    /// Collateral available at a close-out at `tau`: the balance from the
    /// last call that settled before `tau - mpor`.
    pub fn closeout_collateral(&self, tau: f64, mpor: f64) -> f64 {
        self.balance_before(tau - mpor)
    }

    /// Copy suitable for restarting a simulation at `t`: keeps only the
    /// history needed for close-outs after `t` with the given lookback.
    pub fn restart_from(&self, t: f64, mpor: f64) -> MarginState {
        let keep_from = self.history.partition_point(|&(s, _)| s < t - mpor).saturating_sub(1);
        MarginState {
            collateral: self.balance_before(t),
            last_call: self.last_call.filter(|&c| c < t),
            frozen_at: None,
            history: self.history[keep_from..]
                .iter()
                .copied()
                .filter(|&(s, _)| s < t)
                .collect(),
        }
    }
}

/// One margin call, returning the updated state.
pub fn margin_update(state: &MarginState, agreement: &MarginAgreement, t: f64, s: f64) -> Result<MarginState> {
    let mut next = state.clone();
    next.apply_call(agreement, t, s)?;
    Ok(next)
}

/// Collateral in force at `t` given the first party default `tau_hat`.
pub fn collateral_at(state: &MarginState, t: f64, tau_hat: f64) -> f64 {
    if t > tau_hat {
        state.balance_before(tau_hat)
    } else {
        state.balance_before(t)
    }
}

/// Credit support usable at close-out: `(1 - h) * c`.
pub fn effective_collateral(c: f64, agreement: &MarginAgreement) -> Result<f64> {
    if !(agreement.haircut >= 0.0 && agreement.haircut < 1.0) {
        return Err(Error::config(
            "margin.haircut",
            format!("must lie in [0, 1), got {}", agreement.haircut),
        ));
    }
    Ok((1.0 - agreement.haircut) * c)
}
