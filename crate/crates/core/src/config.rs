//! Run configuration.
//!
//! A run is described by one TOML file. Every section is optional except the
//! top-level `seed`; missing values fall back to the paper's experiment setup
//! (high-risk factors for all three names, 40% recoveries, `r = 0`, `T = 5`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cds::{ContractSpec, DEFAULT_QUADRATURE_STEP};
use crate::copula::ShockStructure;
use crate::error::{Error, Result};
use crate::exposure::{Engine, ModelSpec};
use crate::factors::{CirParams, FactorRegime};
use crate::margin::{CallSchedule, MarginAgreement, Threshold};

/// Contract spread: a number or the clean fair spread at time zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpreadSpec {
    Fair,
    Value(f64),
}

impl SpreadSpec {
    const FAIR_TOKEN: &'static str = "fair";
}

impl Serialize for SpreadSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SpreadSpec::Fair => s.serialize_str(SpreadSpec::FAIR_TOKEN),
            SpreadSpec::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for SpreadSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct Visitor;
        impl serde::de::Visitor<'_> for Visitor {
            type Value = SpreadSpec;

            fn expecting(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(
                    f,
                    "a spread in decimal per year or the string \"{}\"",
                    SpreadSpec::FAIR_TOKEN
                )
            }

            fn visit_f64<E: serde::de::Error>(self, v: f64) -> std::result::Result<SpreadSpec, E> {
                Ok(SpreadSpec::Value(v))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<SpreadSpec, E> {
                Ok(SpreadSpec::Value(v as f64))
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<SpreadSpec, E> {
                Ok(SpreadSpec::Value(v as f64))
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<SpreadSpec, E> {
                if v == SpreadSpec::FAIR_TOKEN {
                    Ok(SpreadSpec::Fair)
                } else {
                    Err(E::invalid_value(serde::de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(Visitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractConfig {
    pub maturity: f64,
    pub spread: SpreadSpec,
    pub lgd: f64,
    pub recovery_cpty: f64,
    pub recovery_inv: f64,
    pub rate: f64,
}

impl Default for ContractConfig {
    fn default() -> Self {
        ContractConfig {
            maturity: 5.0,
            spread: SpreadSpec::Fair,
            lgd: 0.6,
            recovery_cpty: 0.4,
            recovery_inv: 0.4,
            rate: 0.0,
        }
    }
}

/// A preset regime name or explicit parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FactorSpec {
    Regime(FactorRegime),
    Params(CirParams),
}

impl FactorSpec {
    pub fn params(&self) -> CirParams {
        match self {
            FactorSpec::Regime(r) => r.params(),
            FactorSpec::Params(p) => *p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorsConfig {
    pub reference: FactorSpec,
    pub counterparty: FactorSpec,
    pub investor: FactorSpec,
}

impl Default for FactorsConfig {
    fn default() -> Self {
        let high = FactorSpec::Regime(FactorRegime::High);
        FactorsConfig {
            reference: high,
            counterparty: high,
            investor: high,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShockConfig {
    pub a: [f64; 3],
    pub c: [f64; 4],
}

impl Default for ShockConfig {
    /// The counterparty carries an extra constant hazard of 4%; no joint
    /// defaults.
    fn default() -> Self {
        ShockConfig {
            a: [0.0, 0.04, 0.0],
            c: [0.0; 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginConfig {
    pub gamma_cpty: Threshold,
    pub gamma_inv: Threshold,
    pub mta: f64,
    pub calls: CallSchedule,
    pub mpor: f64,
    pub haircut: f64,
}

impl Default for MarginConfig {
    fn default() -> Self {
        let a = MarginAgreement::uncollateralized();
        MarginConfig {
            gamma_cpty: a.gamma_cpty,
            gamma_inv: a.gamma_inv,
            mta: a.mta,
            calls: a.calls,
            mpor: a.mpor,
            haircut: a.haircut,
        }
    }
}

impl MarginConfig {
    pub fn agreement(&self) -> MarginAgreement {
        MarginAgreement {
            gamma_cpty: self.gamma_cpty,
            gamma_inv: self.gamma_inv,
            mta: self.mta,
            calls: self.calls.clone(),
            mpor: self.mpor,
            haircut: self.haircut,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub grid_step: f64,
    pub quadrature_step: f64,
    pub paths: usize,
    pub outer_paths: usize,
    pub inner_paths: usize,
    pub bucket_width: f64,
    pub observation_step: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            grid_step: 1.0 / 250.0,
            quadrature_step: DEFAULT_QUADRATURE_STEP,
            paths: 10_000,
            outer_paths: 2_000,
            inner_paths: 500,
            bucket_width: 1.0 / 12.0,
            observation_step: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub label: String,
    pub gamma_cpty: Threshold,
    pub gamma_inv: Threshold,
}

/// Threshold grid of a collateral experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CaseTable(pub Vec<Case>);

impl CaseTable {
    /// Cases A to F, from uncollateralized to fully collateralized.
    pub fn paper() -> Self {
        use Threshold::*;
        let rows = [
            ("A", Unbounded, Unbounded),
            ("B", Finite(1.5e-3), Finite(-0.4e-3)),
            ("C", Finite(1e-3), Finite(-0.2e-3)),
            ("D", Finite(0.5e-3), Finite(-0.1e-3)),
            ("E", Finite(0.25e-3), Finite(-0.05e-3)),
            ("F", Finite(0.0), Finite(0.0)),
        ];
        CaseTable(
            rows.into_iter()
                .map(|(label, gamma_cpty, gamma_inv)| Case {
                    label: label.into(),
                    gamma_cpty,
                    gamma_inv,
                })
                .collect(),
        )
    }

    /// One agreement per case, sharing every other term with `base`.
    pub fn agreements(&self, base: &MarginAgreement) -> Vec<MarginAgreement> {
        self.0
            .iter()
            .map(|c| base.clone().with_thresholds(c.gamma_cpty, c.gamma_inv))
            .collect()
    }
}

impl Default for CaseTable {
    fn default() -> Self {
        CaseTable::paper()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    contract: ContractConfig,
    factors: FactorsConfig,
    shocks: ShockConfig,
    margin: MarginConfig,
    simulation: SimulationConfig,
    output: OutputConfig,
    cases: Option<CaseTable>,
}

/// A validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub contract: ContractConfig,
    pub factors: FactorsConfig,
    pub shocks: ShockConfig,
    pub margin: MarginConfig,
    pub simulation: SimulationConfig,
    pub output: OutputConfig,
    pub cases: CaseTable,
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub grid_step: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub outer_paths: Option<usize>,
    pub inner_paths: Option<usize>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, overrides: &Overrides) -> Result<Self> {
        let de = toml::de::Deserializer::parse(text).map_err(|e| Error::config("", e.message().to_string()))?;
        let mut raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let message = e.into_inner().message().to_string();
            Error::config(if path == "." { String::new() } else { path }, message)
        })?;
        if let Some(seed) = overrides.seed {
            raw.seed = Some(seed);
        }
        let sim = &mut raw.simulation;
        if let Some(p) = overrides.paths {
            sim.paths = p;
        }
        if let Some(g) = overrides.grid_step {
            sim.grid_step = g;
        }
        if let Some(p) = overrides.outer_paths {
            sim.outer_paths = p;
        }
        if let Some(p) = overrides.inner_paths {
            sim.inner_paths = p;
        }
        if let Some(dir) = &overrides.out_dir {
            raw.output.dir = dir.clone();
        }
        let seed = raw.seed.ok_or_else(|| Error::config("seed", "a seed is required"))?;
        let config = RunConfig {
            seed,
            contract: raw.contract,
            factors: raw.factors,
            shocks: raw.shocks,
            margin: raw.margin,
            simulation: raw.simulation,
            output: raw.output,
            cases: raw.cases.unwrap_or_default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.contract_spec(0.0).validate()?;
        if let SpreadSpec::Value(v) = self.contract.spread {
            if !v.is_finite() {
                return Err(Error::config("contract.spread", "must be finite"));
            }
        }
        for (name, f) in [
            ("reference", &self.factors.reference),
            ("counterparty", &self.factors.counterparty),
            ("investor", &self.factors.investor),
        ] {
            f.params().validate().map_err(|e| match e {
                Error::Config { path, message } => Error::config(format!("factors.{name}.{path}"), message),
                other => other,
            })?;
        }
        ShockStructure::new(self.shocks.a, self.shocks.c).map_err(|e| match e {
            Error::Config { path, message } => Error::config(format!("shocks.{path}"), message),
            other => other,
        })?;
        self.margin.agreement().validate()?;
        let sim = &self.simulation;
        for (path, v) in [
            ("simulation.grid_step", sim.grid_step),
            ("simulation.quadrature_step", sim.quadrature_step),
            ("simulation.bucket_width", sim.bucket_width),
            ("simulation.observation_step", sim.observation_step),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(path, format!("must be > 0, got {v}")));
            }
        }
        for (path, v) in [
            ("simulation.paths", sim.paths),
            ("simulation.outer_paths", sim.outer_paths),
            ("simulation.inner_paths", sim.inner_paths),
        ] {
            if v == 0 {
                return Err(Error::config(path, "must be >= 1"));
            }
        }
        if self.cases.0.is_empty() {
            return Err(Error::config("cases", "at least one case is required"));
        }
        for (i, case) in self.cases.0.iter().enumerate() {
            let a = self.margin.agreement().with_thresholds(case.gamma_cpty, case.gamma_inv);
            a.validate().map_err(|e| match e {
                Error::Config { path, message } => {
                    Error::config(format!("cases[{i}].{}", path.trim_start_matches("margin.")), message)
                }
                other => other,
            })?;
        }
        Ok(())
    }

    fn contract_spec(&self, spread: f64) -> ContractSpec {
        let c = &self.contract;
        ContractSpec {
            maturity: c.maturity,
            spread,
            lgd: c.lgd,
            recovery_cpty: c.recovery_cpty,
            recovery_inv: c.recovery_inv,
            rate: c.rate,
        }
    }

    /// Model with the spread resolved.
    pub fn model(&self) -> Result<ModelSpec> {
        Ok(self.engine()?.model().clone())
    }

    pub fn engine(&self) -> Result<Engine> {
        let spread = match self.contract.spread {
            SpreadSpec::Value(v) => v,
            SpreadSpec::Fair => 0.0,
        };
        let engine = Engine::new(ModelSpec {
            contract: self.contract_spec(spread),
            factors: [
                self.factors.reference.params(),
                self.factors.counterparty.params(),
                self.factors.investor.params(),
            ],
            shocks: ShockStructure::new(self.shocks.a, self.shocks.c)?,
            grid_step: self.simulation.grid_step,
            quadrature_step: self.simulation.quadrature_step,
            seed: self.seed,
        })?;
        match self.contract.spread {
            SpreadSpec::Fair => engine.with_spread(engine.kappa0()),
            SpreadSpec::Value(_) => Ok(engine),
        }
    }

    pub fn agreement(&self) -> MarginAgreement {
        self.margin.agreement()
    }

    /// Observation times `0, h, 2h, ...` snapped to the grid, ending at `T`.
    pub fn observation_times(&self, engine: &Engine) -> Vec<f64> {
        let grid = engine.grid();
        let t_end = grid.end();
        let stride = ((self.simulation.observation_step / grid.step()).round() as usize).max(1);
        let mut nodes: Vec<usize> = (0..=grid.steps()).step_by(stride).collect();
        if nodes.last() != Some(&grid.steps()) {
            nodes.push(grid.steps());
        }
        debug_assert_eq!(grid.time(*nodes.last().unwrap()), t_end);
        nodes.into_iter().map(|k| grid.time(k)).collect()
    }
}
