//! Common-shock default model for the reference name (1), the counterparty
//! (2) and the investor (3).
//!
//! Seven group intensities drive the first default: three idiosyncratic
//! groups and four joint-default groups. The marginal intensity of each name
//! is `q_i = a_i + X^i`; the joint groups carry constant intensities
//! `c4..c7` that are carved out of the idiosyncratic ones so the marginals
//! stay affine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::{affine_transform, CirParams, FactorPath, FACTORS};

/// Which names default together at the first default time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DefaultGroup {
    /// Reference entity alone.
    Reference = 1,
    /// Counterparty alone.
    Counterparty = 2,
    /// Investor alone.
    Investor = 3,
    /// Counterparty and investor together.
    CounterpartyInvestor = 4,
    /// Reference entity and counterparty together.
    ReferenceCounterparty = 5,
    /// Reference entity and investor together.
    ReferenceInvestor = 6,
    /// All three names together.
    All = 7,
}

impl DefaultGroup {
    pub const ALL: [DefaultGroup; 7] = [
        DefaultGroup::Reference,
        DefaultGroup::Counterparty,
        DefaultGroup::Investor,
        DefaultGroup::CounterpartyInvestor,
        DefaultGroup::ReferenceCounterparty,
        DefaultGroup::ReferenceInvestor,
        DefaultGroup::All,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        DefaultGroup::ALL.get(i.wrapping_sub(1)).copied()
    }

    pub fn hits_reference(self) -> bool {
        matches!(
            self,
            DefaultGroup::Reference
                | DefaultGroup::ReferenceCounterparty
                | DefaultGroup::ReferenceInvestor
                | DefaultGroup::All
        )
    }

    pub fn hits_counterparty(self) -> bool {
        matches!(
            self,
            DefaultGroup::Counterparty
                | DefaultGroup::CounterpartyInvestor
                | DefaultGroup::ReferenceCounterparty
                | DefaultGroup::All
        )
    }

    pub fn hits_investor(self) -> bool {
        matches!(
            self,
            DefaultGroup::Investor
                | DefaultGroup::CounterpartyInvestor
                | DefaultGroup::ReferenceInvestor
                | DefaultGroup::All
        )
    }

    /// Group of the first default given the three default times
    /// (`f64::INFINITY` for "never"). `None` when nobody defaults.
    pub fn classify(t1: f64, t2: f64, t3: f64) -> Option<Self> {
        let first = t1.min(t2).min(t3);
        if !first.is_finite() {
            return None;
        }
        let hit = (t1 == first, t2 == first, t3 == first);
        Some(match hit {
            (true, false, false) => DefaultGroup::Reference,
            (false, true, false) => DefaultGroup::Counterparty,
            (false, false, true) => DefaultGroup::Investor,
            (false, true, true) => DefaultGroup::CounterpartyInvestor,
            (true, true, false) => DefaultGroup::ReferenceCounterparty,
            (true, false, true) => DefaultGroup::ReferenceInvestor,
            (true, true, true) => DefaultGroup::All,
            (false, false, false) => unreachable!("the minimum is attained"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ShockStructure {
    /// Constant parts of the marginal intensities `q_i = a_i + X^i`.
    pub a: [f64; 3],
    /// Joint-default intensities `[c4, c5, c6, c7]`: counterparty+investor,
    /// reference+counterparty, reference+investor, all three.
    pub c: [f64; 4],
}

impl ShockStructure {
    pub fn new(a: [f64; 3], c: [f64; 4]) -> Result<Self> {
        let s = ShockStructure { a, c };
        s.validate()?;
        Ok(s)
    }

    /// Common-shock intensity of a joint group (4..=7).
    fn joint(&self, group: usize) -> f64 {
        self.c[group - 4]
    }

    /// Sum of the joint intensities that involve name `i` (1-based).
    pub fn joint_share(&self, name: usize) -> f64 {
        let [c4, c5, c6, c7] = self.c;
        match name {
            1 => c5 + c6 + c7,
            2 => c4 + c5 + c7,
            3 => c4 + c6 + c7,
            _ => panic!("name index {name} out of range"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.a.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::config(
                    format!("a[{i}]"),
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        for (i, v) in self.c.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::config(
                    format!("c[{i}]"),
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        for name in 1..=3 {
            let need = self.joint_share(name);
            if self.a[name - 1] < need {
                return Err(Error::config(
                    format!("a[{}]", name - 1),
                    format!("must be >= {need} (sum of joint intensities involving name {name}) to keep l{name} >= 0"),
                ));
            }
        }
        Ok(())
    }

    /// Constant part of the total intensity `l = sum_i l^i`.
    pub fn total_constant(&self) -> f64 {
        let [c4, c5, c6, c7] = self.c;
        self.a.iter().sum::<f64>() - c4 - c5 - c6 - 2.0 * c7
    }
}

/// Intensities `l^1..l^7` of the seven groups at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupIntensities {
    l: [f64; 7],
    total: f64,
}

impl GroupIntensities {
    pub fn get(&self, group: DefaultGroup) -> f64 {
        self.l[group.index() - 1]
    }

    pub fn as_array(&self) -> [f64; 7] {
        self.l
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Marginal intensity `q_i` of name `i` (1-based) by summing its groups.
    pub fn marginal(&self, name: usize) -> f64 {
        DefaultGroup::ALL
            .iter()
            .filter(|g| match name {
                1 => g.hits_reference(),
                2 => g.hits_counterparty(),
                3 => g.hits_investor(),
                _ => false,
            })
            .map(|&g| self.get(g))
            .sum()
    }

    /// Categorical draw of a group with probabilities `l^i / l` from `u` in (0,1).
    pub fn pick(&self, u: f64) -> Option<DefaultGroup> {
        if self.total <= 0.0 {
            return None;
        }
        let target = u * self.total;
        let mut acc = 0.0;
        let mut last = None;
        for g in DefaultGroup::ALL {
            let li = self.get(g);
            if li <= 0.0 {
                continue;
            }
            acc += li;
            last = Some(g);
            if target < acc {
                return Some(g);
            }
        }
        last
    }
}

/// Group intensities at factor values `x`.
pub fn group_intensities(shocks: &ShockStructure, x: [f64; FACTORS]) -> Result<GroupIntensities> {
    shocks.validate()?;
    if x.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Argument(format!("factor values must be >= 0, got {x:?}")));
    }
    Ok(intensities_unchecked(shocks, x))
}

/// Hot-path variant for already validated inputs.
pub(crate) fn intensities_unchecked(shocks: &ShockStructure, x: [f64; FACTORS]) -> GroupIntensities {
    let mut l = [0.0; 7];
    for name in 1..=3 {
        // Clamp round-off when a_i equals the joint share exactly.
        l[name - 1] = (shocks.a[name - 1] + x[name - 1] - shocks.joint_share(name)).max(0.0);
    }
    for g in 4..=7 {
        l[g - 1] = shocks.joint(g);
    }
    let total = l.iter().sum();
    GroupIntensities { l, total }
}

/// First default time and group. `group` is `None` iff no default occurs on
/// or before the horizon, in which case `time` is infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstDefault {
    pub time: f64,
    pub group: Option<DefaultGroup>,
}

impl FirstDefault {
    pub const NONE: FirstDefault = FirstDefault {
        time: f64::INFINITY,
        group: None,
    };

    pub fn occurred(&self) -> bool {
        self.group.is_some()
    }
}

/// Integrated-hazard inversion with intensities held at their left-node value.
///
/// Shared by the full-path sampler and the incremental engine so both give
/// bit-identical default times for the same inputs.
#[derive(Debug, Clone, Copy)]
pub struct HazardInverter {
    target: f64,
    accumulated: f64,
}

impl HazardInverter {
    /// `u` is the uniform that fixes the exponential threshold `-ln u`.
    pub fn new(u: f64) -> Self {
        HazardInverter {
            target: -u.ln(),
            accumulated: 0.0,
        }
    }

    pub fn accumulated(&self) -> f64 {
        self.accumulated
    }

    /// Integrates intensity `l` over `[t, t + dt)`. Returns the crossing time
    /// if the threshold is reached inside the interval.
    pub fn step(&mut self, t: f64, dt: f64, l: f64) -> Option<f64> {
        let next = self.accumulated + l * dt;
        if l > 0.0 && next >= self.target {
            let tau = t + (self.target - self.accumulated) / l;
            return Some(tau.min(t + dt));
        }
        self.accumulated = next;
        None
    }
}

/// Samples the first default on `path` up to `horizon` from two uniforms.
pub fn sample_first_default(
    path: &FactorPath,
    shocks: &ShockStructure,
    horizon: f64,
    uniforms: (f64, f64),
) -> Result<FirstDefault> {
    let grid = path.grid();
    if horizon > grid.time(path.last_node()) + 1e-12 {
        return Err(Error::Argument(format!(
            "horizon {horizon} beyond simulated path end {}",
            grid.time(path.last_node())
        )));
    }
    let mut inverter = HazardInverter::new(uniforms.0);
    for k in path.first_node()..path.last_node() {
        let t = grid.time(k);
        if t >= horizon {
            break;
        }
        let dt = grid.time(k + 1).min(horizon) - t;
        let l = intensities_unchecked(shocks, path.at(k));
        if let Some(tau) = inverter.step(t, dt, l.total()) {
            return Ok(FirstDefault {
                time: tau,
                group: l.pick(uniforms.1),
            });
        }
    }
    Ok(FirstDefault::NONE)
}

/// Which survival probability to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurvivalKind {
    /// `P(tau_i > horizon | X_t = x)` for name `i` in 1..=3.
    Marginal(usize),
    /// `P(tau > horizon | X_t = x)` for the first default of all names.
    FirstToDefault,
}

/// Closed-form survival probability from the factor transforms.
pub fn survival(
    shocks: &ShockStructure,
    params: &[CirParams; FACTORS],
    kind: SurvivalKind,
    t: f64,
    horizon: f64,
    x: [f64; FACTORS],
) -> Result<f64> {
    shocks.validate()?;
    match kind {
        SurvivalKind::Marginal(name) if (1..=3).contains(&name) => {
            let i = name - 1;
            affine_transform(&params[i], shocks.a[i], t, horizon, x[i])
        }
        SurvivalKind::Marginal(name) => Err(Error::Argument(format!("name index {name} not in 1..=3"))),
        SurvivalKind::FirstToDefault => {
            let mut p = affine_transform(&params[0], shocks.total_constant(), t, horizon, x[0])?;
            for i in 1..FACTORS {
                p *= affine_transform(&params[i], 0.0, t, horizon, x[i])?;
            }
            Ok(p)
        }
    }
}
