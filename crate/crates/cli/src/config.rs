//! JSON run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use cvqkd_core::channel::{ChannelModel, DEFAULT_ATTENUATION_DB_PER_KM};
use cvqkd_core::protocol::{DetectorModel, ProtocolSpec};
use cvqkd_core::solver::SolverConfig;

use crate::CliError;

const DEFAULT_BETA_EC: f64 = 0.95;

/// QPSK protocol parameters. Angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Coherent-state amplitude; the four signals are alpha·{1, i, −1, −i}.
    pub alpha: f64,
    #[serde(default)]
    pub delta_a: f64,
    #[serde(default)]
    pub delta_p: f64,
    #[serde(default = "DetectorModel::ideal")]
    pub detector: DetectorModel,
    #[serde(default = "default_beta_ec")]
    pub beta_ec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub distance_km: f64,
    #[serde(default = "default_attenuation")]
    pub attenuation_db_per_km: f64,
    /// Excess noise referred to the channel input.
    pub xi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    DistanceKm,
    Xi,
    Alpha,
    DeltaA,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeVariable {
    Alpha,
    DeltaA,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub variable: OptimizeVariable,
    pub interval: [f64; 2],
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub protocol: ProtocolConfig,
    pub channel: ChannelConfig,
    #[serde(rename = "subspace_N")]
    pub subspace_n: usize,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Single,
    Sweep,
    Optimize,
}

fn default_beta_ec() -> f64 {
    DEFAULT_BETA_EC
}

fn default_attenuation() -> f64 {
    DEFAULT_ATTENUATION_DB_PER_KM
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn mode(&self) -> Mode {
        match (&self.sweep, &self.optimize) {
            (Some(_), _) => Mode::Sweep,
            (None, Some(_)) => Mode::Optimize,
            (None, None) => Mode::Single,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.sweep.is_some() && self.optimize.is_some() {
            return bad("at most one of \"sweep\" and \"optimize\" may be given".into());
        }
        if let Some(s) = &self.sweep {
            if s.grid.is_empty() {
                return bad("sweep.grid is empty".into());
            }
            if s.grid.iter().any(|v| !v.is_finite()) {
                return bad("sweep.grid has a non-finite entry".into());
            }
            if s.grid.windows(2).any(|w| w[1] <= w[0]) {
                return bad("sweep.grid must be strictly increasing".into());
            }
            for &v in &s.grid {
                self.point_sweep(s.variable, v).check()?;
            }
        }
        if let Some(o) = &self.optimize {
            let [lo, hi] = o.interval;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("optimize.interval must satisfy lo < hi, got [{lo}, {hi}]"));
            }
            if !(o.tol > 0.0 && o.tol.is_finite()) {
                return bad(format!("optimize.tol must be positive, got {}", o.tol));
            }
            self.point_optimize(o.variable, lo).check()?;
            self.point_optimize(o.variable, hi).check()?;
        }
        self.point().check()?;
        self.solver.validate().map_err(|e| CliError::Config(format!("solver: {e}")))
    }

    /// The base point, before any sweep or search variable is applied.
    pub fn point(&self) -> Point {
        Point { protocol: self.protocol.clone(), channel: self.channel.clone(), subspace_n: self.subspace_n }
    }

    pub fn point_sweep(&self, var: SweepVariable, value: f64) -> Point {
        let mut p = self.point();
        match var {
            SweepVariable::DistanceKm => p.channel.distance_km = value,
            SweepVariable::Xi => p.channel.xi = value,
            SweepVariable::Alpha => p.protocol.alpha = value,
            SweepVariable::DeltaA => p.protocol.delta_a = value,
        }
        p
    }

    pub fn point_optimize(&self, var: OptimizeVariable, value: f64) -> Point {
        let var = match var {
            OptimizeVariable::Alpha => SweepVariable::Alpha,
            OptimizeVariable::DeltaA => SweepVariable::DeltaA,
        };
        self.point_sweep(var, value)
    }
}

/// One fully specified evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub protocol: ProtocolConfig,
    pub channel: ChannelConfig,
    pub subspace_n: usize,
}

impl Point {
    pub fn spec(&self) -> cvqkd_core::Result<ProtocolSpec> {
        let p = &self.protocol;
        ProtocolSpec::qpsk(p.alpha, p.delta_a, p.delta_p, p.detector, p.beta_ec)
    }

    pub fn channel_model(&self) -> ChannelModel {
        ChannelModel {
            distance_km: self.channel.distance_km,
            attenuation_db_per_km: self.channel.attenuation_db_per_km,
            excess_noise: self.channel.xi,
        }
    }

    fn check(&self) -> Result<(), CliError> {
        let wrap = |e: cvqkd_core::Error| CliError::Config(e.to_string());
        if !(self.protocol.alpha > 0.0 && self.protocol.alpha.is_finite()) {
            return Err(CliError::Config(format!("protocol.alpha must be positive, got {}", self.protocol.alpha)));
        }
        self.spec().map_err(wrap)?;
        self.channel_model().validate().map_err(wrap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"protocol": {"alpha": 0.6}, "channel": {"distance_km": 0, "xi": 0}, "subspace_N": 10}"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.mode(), Mode::Single);
        assert_eq!(c.protocol.beta_ec, DEFAULT_BETA_EC);
        assert_eq!(c.protocol.detector, DetectorModel::ideal());
        assert_eq!(c.channel.attenuation_db_per_km, DEFAULT_ATTENUATION_DB_PER_KM);
        assert_eq!(c.solver, SolverConfig::default());
    }

    #[test]
    fn echo_round_trips() {
        let text = r#"{"protocol": {"alpha": 0.8, "delta_a": 0.3, "detector": {"kind": "trusted", "eta_d": 0.7, "nu_el": 0.01}},
            "channel": {"distance_km": 5, "xi": 0.01}, "subspace_N": 4,
            "solver": {"max_fw_iterations": 12},
            "sweep": {"variable": "distance_km", "grid": [0, 10, 20]}}"#;
        let c = RunConfig::from_json(text).unwrap();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(c.solver.max_fw_iterations, 12);
        assert_eq!(c.mode(), Mode::Sweep);
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            r#"{"protocol": {"alpha": 0.6}, "channel": {"distance_km": 0, "xi": 0}}"#,
            r#"{"protocol": {"alpha": 0.6, "colour": 1}, "channel": {"distance_km": 0, "xi": 0}, "subspace_N": 3}"#,
            r#"{"protocol": {"alpha": -1}, "channel": {"distance_km": 0, "xi": 0}, "subspace_N": 3}"#,
            r#"{"protocol": {"alpha": 0.6}, "channel": {"distance_km": 0, "xi": 0}, "subspace_N": 3, "sweep": {"variable": "xi", "grid": []}}"#,
            r#"{"protocol": {"alpha": 0.6}, "channel": {"distance_km": 0, "xi": 0}, "subspace_N": 3, "sweep": {"variable": "xi", "grid": [0.02, 0.01]}}"#,
            r#"{"protocol": {"alpha": 0.6}, "channel": {"distance_km": 0, "xi": 0}, "subspace_N": 3, "sweep": {"variable": "distance_km", "grid": [-5, 0]}}"#,
            r#"{"protocol": {"alpha": 0.6}, "channel": {"distance_km": 0, "xi": 0}, "subspace_N": 3,
                "sweep": {"variable": "xi", "grid": [0]}, "optimize": {"variable": "alpha", "interval": [0.5, 2], "tol": 0.1}}"#,
            r#"{"protocol": {"alpha": 0.6}, "channel": {"distance_km": 0, "xi": 0}, "subspace_N": 3, "optimize": {"variable": "alpha", "interval": [2, 0.5], "tol": 0.1}}"#,
            r#"{"protocol": {"alpha": 0.6}, "channel": {"distance_km": 0, "xi": 0}, "subspace_N": 3, "solver": {"conic_tol": 0}}"#,
        ];
        for text in cases {
            assert!(matches!(RunConfig::from_json(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn parse_errors_name_the_location() {
        let err = RunConfig::from_json("{\n  \"protocol\": {\"alpha\": 0.6},\n  \"channel\": 5\n}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
