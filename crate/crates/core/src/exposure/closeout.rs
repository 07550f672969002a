//! Close-out payments at the first default.
//!
//! For a first default in group `i` at `tau`, with `s = S_tau` the clean
//! price (zero once the reference has defaulted), `d = delta^1` and `c` the
//! effective collateral:
//!
//! * `bar` is what the risky contract pays at `tau`,
//! * `hat` is what the clean contract pays at `tau`,
//! * `xi = hat - bar` is the CVA payoff.

use serde::Serialize;

use crate::cds::ContractSpec;
use crate::copula::{DefaultGroup, FirstDefault};

#[inline]
fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// Negative part, so that `x = pos(x) - neg(x)`.
#[inline]
fn neg(x: f64) -> f64 {
    (-x).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CloseoutLeg {
    pub group: DefaultGroup,
    pub bar: f64,
    pub hat: f64,
    pub xi: f64,
}

/// Uncollateralized mark-to-market at `tau`: `S + 1{ref} delta^1 - C`.
pub fn uncollateralized_mtm(group: DefaultGroup, s: f64, lgd: f64, c: f64) -> f64 {
    if group.hits_reference() {
        s + lgd - c
    } else {
        s - c
    }
}

pub fn closeout_cashflow(group: DefaultGroup, s: f64, lgd: f64, c: f64, spec: &ContractSpec) -> CloseoutLeg {
    use DefaultGroup::*;
    let l2 = 1.0 - spec.recovery_cpty;
    let l3 = 1.0 - spec.recovery_inv;
    let m = s - c;
    let n = lgd - c;
    let bar = match group {
        Reference => lgd,
        Counterparty => s - l2 * pos(m),
        Investor => s + l3 * neg(m),
        CounterpartyInvestor => s - l2 * pos(m) + l3 * neg(m),
        ReferenceCounterparty => lgd - l2 * pos(n),
        ReferenceInvestor => lgd + l3 * neg(n),
        All => lgd - l2 * pos(n) + l3 * neg(n),
    };
    let hat = if group.hits_reference() { lgd } else { s };
    CloseoutLeg {
        group,
        bar,
        hat,
        xi: hat - bar,
    }
}

/// Signed potential future exposure at the first default.
///
/// Positive values are losses on counterparty default, negative values are
/// gains on own default. Zero when no default occurred.
pub fn pfe_sample(first: &FirstDefault, s: f64, lgd: f64, c: f64, spec: &ContractSpec) -> f64 {
    let Some(group) = first.group else {
        return 0.0;
    };
    let y = uncollateralized_mtm(group, s, lgd, c);
    let mut v = 0.0;
    if group.hits_counterparty() {
        v += (1.0 - spec.recovery_cpty) * pos(y);
    }
    if group.hits_investor() {
        v -= (1.0 - spec.recovery_inv) * neg(y);
    }
    v
}

/// The five close-out amounts of the risky dividend process, before netting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloseoutTerms {
    pub d: [f64; 5],
}

impl CloseoutTerms {
    pub fn new(group: DefaultGroup, s: f64, lgd: f64, c: f64, spec: &ContractSpec) -> Self {
        let m = uncollateralized_mtm(group, s, lgd, c);
        let (r2, r3) = (spec.recovery_cpty, spec.recovery_inv);
        CloseoutTerms {
            d: [lgd - c, r2 * pos(m) - neg(m), pos(m) - r3 * neg(m), -m, -(lgd - c)],
        }
    }

    /// Sum of the terms that fire for `group`, i.e. the jumps of
    /// `H^1`, `H^2`, `H^3`, `[H^2, H^3]` and `[H_hat, H^1]` at `tau`.
    pub fn fired(&self, group: DefaultGroup) -> f64 {
        let jumps = [
            group.hits_reference(),
            group.hits_counterparty(),
            group.hits_investor(),
            group.hits_counterparty() && group.hits_investor(),
            group.hits_reference() && (group.hits_counterparty() || group.hits_investor()),
        ];
        self.d.iter().zip(jumps).filter(|(_, j)| *j).map(|(d, _)| d).sum()
    }
}

/// Total risky cash flow at `tau` built term by term: collateral transfer
/// plus every close-out amount that fires. Equals `bar` of the same group.
pub fn risky_payment(group: DefaultGroup, s: f64, lgd: f64, c: f64, spec: &ContractSpec) -> f64 {
    c + CloseoutTerms::new(group, s, lgd, c, spec).fired(group)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(r2: f64, r3: f64) -> ContractSpec {
        ContractSpec {
            maturity: 5.0,
            spread: 0.02,
            lgd: 0.6,
            recovery_cpty: r2,
            recovery_inv: r3,
            rate: 0.0,
        }
    }

    #[test]
    fn counterparty_group_example() {
        let leg = closeout_cashflow(DefaultGroup::Counterparty, 0.02, 0.6, 0.005, &spec(0.4, 0.4));
        assert!((leg.bar - 0.011).abs() < 1e-15);
        assert!((leg.xi - 0.009).abs() < 1e-15);
        let fd = FirstDefault {
            time: 1.0,
            group: Some(DefaultGroup::Counterparty),
        };
        assert!((pfe_sample(&fd, 0.02, 0.6, 0.005, &spec(0.4, 0.4)) - 0.009).abs() < 1e-15);
    }

    #[test]
    fn joint_default_example() {
        let leg = closeout_cashflow(DefaultGroup::All, 0.0, 0.6, 0.0, &spec(0.4, 0.4));
        assert!((leg.bar - 0.24).abs() < 1e-15);
        assert!((leg.xi - 0.36).abs() < 1e-15);
    }

    #[test]
    fn full_recovery_has_no_adjustment() {
        for g in DefaultGroup::ALL {
            let leg = closeout_cashflow(g, -0.03, 0.6, 0.01, &spec(1.0, 1.0));
            assert_eq!(leg.bar, leg.hat);
            assert_eq!(leg.xi, 0.0);
        }
    }

    #[test]
    fn reference_alone_has_zero_exposure() {
        let fd = FirstDefault {
            time: 2.0,
            group: Some(DefaultGroup::Reference),
        };
        assert_eq!(pfe_sample(&fd, 0.05, 0.6, -0.2, &spec(0.4, 0.4)), 0.0);
        assert_eq!(pfe_sample(&FirstDefault::NONE, 0.05, 0.6, 0.0, &spec(0.4, 0.4)), 0.0);
        let leg = closeout_cashflow(DefaultGroup::Reference, 0.05, 0.6, -0.2, &spec(0.4, 0.4));
        assert_eq!(leg.xi, 0.0);
    }

    #[test]
    fn joint_party_default_positive_exposure() {
        let sp = spec(0.3, 0.7);
        let fd = FirstDefault {
            time: 2.0,
            group: Some(DefaultGroup::CounterpartyInvestor),
        };
        assert!((pfe_sample(&fd, 0.05, 0.6, 0.01, &sp) - 0.7 * 0.04).abs() < 1e-15);
        assert!((pfe_sample(&fd, -0.05, 0.6, 0.01, &sp) + 0.3 * 0.06).abs() < 1e-15);
    }

    #[test]
    fn term_by_term_route_matches_bar() {
        let sp = spec(0.35, 0.55);
        for g in DefaultGroup::ALL {
            for (s, c) in [(0.03, 0.01), (0.01, 0.03), (-0.02, 0.0), (0.0, 0.7), (0.0, -0.1)] {
                let s = if g.hits_reference() { 0.0 } else { s };
                let bar = closeout_cashflow(g, s, 0.6, c, &sp).bar;
                let route = risky_payment(g, s, 0.6, c, &sp);
                assert!((bar - route).abs() < 1e-15, "{g:?} s={s} c={c}: {bar} vs {route}");
            }
        }
    }

    #[test]
    fn xi_equals_pfe() {
        let sp = spec(0.4, 0.25);
        for g in DefaultGroup::ALL {
            for (s, c) in [(0.03, 0.01), (0.01, 0.03), (-0.02, 0.0), (0.0, 0.7)] {
                let s = if g.hits_reference() { 0.0 } else { s };
                let leg = closeout_cashflow(g, s, 0.6, c, &sp);
                let fd = FirstDefault {
                    time: 1.0,
                    group: Some(g),
                };
                assert!((leg.xi - pfe_sample(&fd, s, 0.6, c, &sp)).abs() < 1e-15);
            }
        }
    }
}
