//! Run configuration: strict JSON with per-experiment defaults.

use crate::afem::{AfemConfig, Experiment, GeomIndicatorKind, RefinementMode};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// JSON configuration of a run. Unset fields fall back to the
/// experiment's registry defaults; unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// "mu" or "lambda".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geom_indicator: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_outer: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub osc_m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub osc_m_face: Option<usize>,
    /// "adaptive" or "uniform".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uniform_levels: Option<usize>,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default = "default_true")]
    pub emit_csv: bool,
    #[serde(default)]
    pub emit_vtk: bool,
    #[serde(default)]
    pub emit_svg: bool,
    #[serde(default)]
    pub emit_matrix: bool,
    /// Seed for sampling-based checks.
    #[serde(default)]
    pub seed: u64,
    /// Record wall time in the CSV; disable for byte-identical output.
    #[serde(default = "default_true")]
    pub timings: bool,
}

fn default_true() -> bool {
    true
}

fn default_out_dir() -> String {
    "out".to_string()
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid configuration: {e}")))
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Resolve against the experiment registry defaults.
    pub fn resolve(&self) -> Result<(Experiment, AfemConfig)> {
        let experiment = Experiment::parse(&self.experiment)?;
        let mut config = experiment.default_config();
        if let Some(r) = self.r {
            config.r = r;
            let (m, mf) = AfemConfig::default_osc(r);
            config.osc_m = m;
            config.osc_m_face = mf;
        }
        if let Some(k) = self.k {
            config.k = k;
        }
        if let Some(kind) = &self.geom_indicator {
            config.geom_indicator = GeomIndicatorKind::parse(kind)?;
        }
        if let Some(theta) = self.theta {
            config.theta = theta;
        }
        if let Some(eps0) = self.eps0 {
            config.eps0 = eps0;
        }
        if let Some(rho) = self.rho {
            config.rho = rho;
        }
        if let Some(omega) = self.omega {
            config.omega = omega;
        }
        if let Some(final_eps) = self.final_eps {
            config.final_eps = final_eps;
        }
        if let Some(max_outer) = self.max_outer {
            config.max_outer = max_outer;
        }
        if let Some(tol) = self.solver_tol {
            config.solver_tol = tol;
        }
        if let Some(m) = self.osc_m {
            config.osc_m = m;
        }
        if let Some(mf) = self.osc_m_face {
            config.osc_m_face = mf;
        }
        if let Some(mode) = &self.mode {
            config.mode = match mode.as_str() {
                "adaptive" => RefinementMode::Adaptive,
                "uniform" => RefinementMode::Uniform,
                other => return Err(Error::Config(format!("unknown mode `{other}`"))),
            };
        }
        if let Some(levels) = self.uniform_levels {
            config.uniform_levels = levels;
        }
        config.validate()?;
        Ok((experiment, config))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment": "half_sphere"}"#).unwrap();
        let (exp, afem) = cfg.resolve().unwrap();
        assert_eq!(exp, Experiment::HalfSphere);
        assert_eq!(afem.r, 2);
        assert_eq!(afem.k, 1);
        assert_eq!(afem.eps0, 3.0);
        assert!((afem.final_eps - 3.0 / 256.0).abs() < 1e-15);

        let cfg = ExperimentConfig::from_json(
            r#"{"experiment": "half_sphere", "geom_indicator": "lambda", "theta": 0.6}"#,
        )
        .unwrap();
        let (_, afem) = cfg.resolve().unwrap();
        assert_eq!(afem.geom_indicator, GeomIndicatorKind::Lambda);
        assert!((afem.theta - 0.6).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_json(r#"{"experiment": "half_sphere", "bogus": 1}"#);
        assert!(err.is_err());
        let err = ExperimentConfig::from_json("not json");
        assert!(err.is_err());
    }

    #[test]
    fn lossless_roundtrip() {
        let cfg = ExperimentConfig::from_json(
            r#"{"experiment": "c2alpha_graph", "r": 3, "k": 2, "seed": 42, "timings": false}"#,
        )
        .unwrap();
        let text = cfg.to_json();
        let again = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(again.experiment, cfg.experiment);
        assert_eq!(again.r, cfg.r);
        assert_eq!(again.seed, cfg.seed);
        assert_eq!(again.timings, cfg.timings);
    }

    #[test]
    fn invalid_ranges_rejected() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment": "half_sphere", "theta": 1.5}"#).unwrap();
        assert!(cfg.resolve().is_err());
        let cfg = ExperimentConfig::from_json(r#"{"experiment": "half_sphere", "rho": 1.0}"#).unwrap();
        assert!(cfg.resolve().is_err());
    }
}
