use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Std,
    Shocks,
    Missing,
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "std" => Ok(ScenarioKind::Std),
            "shocks" => Ok(ScenarioKind::Shocks),
            "missing" => Ok(ScenarioKind::Missing),
            other => Err(format!("unknown scenario {other:?} (expected std, shocks or missing)")),
        }
    }
}

/// Weekly pattern of consumer demand for a final-tier product.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemandType {
    Uniform,
    Weekday,
    Weekend,
}

impl DemandType {
    pub const ALL: [DemandType; 3] = [DemandType::Uniform, DemandType::Weekday, DemandType::Weekend];

    /// Day-of-week multiplier at timestep `t`; days `t mod 7 < 5` are weekdays.
    pub fn multiplier(self, t: u32) -> f64 {
        let weekday = t % 7 < 5;
        match (self, weekday) {
            (DemandType::Uniform, _) => 1.0,
            (DemandType::Weekday, true) | (DemandType::Weekend, false) => 2.0,
            (DemandType::Weekday, false) | (DemandType::Weekend, true) => 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// Per-step, per-raw-product shock probability.
    pub p_shock: f64,
    /// Supply level right after a shock.
    pub supply_shock: f64,
    /// Multiplicative recovery per step, > 1.
    pub recovery: f64,
    /// Cap on recovered supply; `None` means 1000 x `supply_shock`.
    pub stable_supply: Option<f64>,
    /// Fraction of firms whose transactions are dropped (missing scenario).
    pub missing_frac: f64,
    /// Probability of ordering from the default supplier.
    pub p_default: f64,
    /// Demand pattern per final-tier product, in id order; sampled when absent.
    pub demand_types: Option<Vec<DemandType>>,
    pub initial_demand: f64,
    pub drift_sd: f64,
    pub steps: u32,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::preset(ScenarioKind::Std)
    }
}

impl Scenario {
    pub fn preset(kind: ScenarioKind) -> Self {
        Scenario {
            kind,
            p_shock: if kind == ScenarioKind::Shocks { 0.01 } else { 0.0 },
            supply_shock: 10_000.0,
            recovery: 1.25,
            stable_supply: None,
            missing_frac: if kind == ScenarioKind::Missing { 0.2 } else { 0.0 },
            p_default: 0.8,
            demand_types: None,
            initial_demand: 10.0,
            drift_sd: 0.1,
            steps: 200,
            seed: 0,
        }
    }

    pub fn stable_supply(&self) -> f64 {
        self.stable_supply.unwrap_or(1000.0 * self.supply_shock)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.p_shock) {
            return bad(format!("p_shock must lie in [0, 1] (got {})", self.p_shock));
        }
        if !(self.recovery > 1.0 && self.recovery.is_finite()) {
            return bad(format!("recovery rate must be > 1 (got {})", self.recovery));
        }
        if !(0.0..1.0).contains(&self.missing_frac) {
            return bad(format!("missing_frac must lie in [0, 1) (got {})", self.missing_frac));
        }
        if !(0.0..=1.0).contains(&self.p_default) {
            return bad(format!("p_default must lie in [0, 1] (got {})", self.p_default));
        }
        if !(self.supply_shock >= 0.0 && self.stable_supply() >= self.supply_shock) {
            return bad("need 0 <= supply_shock <= stable_supply".into());
        }
        if !(self.initial_demand >= 0.0 && self.drift_sd >= 0.0) {
            return bad("initial_demand and drift_sd must be non-negative".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weekly_multipliers() {
        assert_eq!(DemandType::Weekday.multiplier(1), 2.0);
        assert_eq!(DemandType::Weekday.multiplier(6), 0.5);
        assert_eq!(DemandType::Weekend.multiplier(1), 0.5);
        assert_eq!(DemandType::Weekend.multiplier(5), 2.0);
        assert!((0..14).all(|t| DemandType::Uniform.multiplier(t) == 1.0));
    }

    #[test]
    fn presets() {
        let s = Scenario::preset(ScenarioKind::Shocks);
        assert_eq!((s.p_shock, s.recovery, s.stable_supply()), (0.01, 1.25, 1.0e7));
        assert_eq!(Scenario::preset(ScenarioKind::Missing).missing_frac, 0.2);
        assert!(Scenario { recovery: 1.0, ..Default::default() }.validate().is_err());
        assert!(Scenario { missing_frac: 1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn scenario_toml_round_trip() {
        let s = Scenario {
            demand_types: Some(vec![DemandType::Weekday, DemandType::Uniform]),
            ..Scenario::preset(ScenarioKind::Shocks)
        };
        let text = toml::to_string(&s).unwrap();
        assert_eq!(toml::from_str::<Scenario>(&text).unwrap(), s);
    }
}
