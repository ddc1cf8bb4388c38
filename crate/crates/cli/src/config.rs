//! Merges the optional JSON config file with command-line flags.

use std::fs;
use std::path::Path;

use rcr_core::{CriterionKind, ModelParams};
use serde::Deserialize;

use crate::args::ModelArgs;
use crate::error::CliError;

/// Contents of a `--config` file. Every field is optional; flags override.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sigma1_sq: Option<f64>,
    pub sigma2_sq: Option<f64>,
    pub u: Option<f64>,
    pub v: Option<f64>,
    pub q: Option<f64>,
    pub rho: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub kind: Option<CriterionKind>,
    pub w: Option<f64>,
    pub tol: Option<f64>,
    pub n1: Option<usize>,
    pub theta0: Option<(f64, f64)>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub z: Option<f64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("invalid config {}: {e}", path.display())))
    }

    /// Applies the flags on top of the file values.
    pub fn merge(mut self, flags: &ModelArgs) -> Self {
        // The dispersion parametrization is replaced as a unit, so a file
        // giving (u, v) can be overridden by flags giving (q, rho).
        if flags.u.is_some() || flags.v.is_some() || flags.q.is_some() || flags.rho.is_some() {
            self.u = flags.u;
            self.v = flags.v;
            self.q = flags.q;
            self.rho = flags.rho;
        }
        self.sigma1_sq = flags.sigma1_sq.or(self.sigma1_sq);
        self.sigma2_sq = flags.sigma2_sq.or(self.sigma2_sq);
        self.k = flags.k.or(self.k);
        self.n = flags.n.or(self.n);
        self
    }

    pub fn from_flags(flags: &ModelArgs) -> Result<Self, CliError> {
        Ok(Self::load(flags.config.as_deref())?.merge(flags))
    }

    pub fn dispersions(&self) -> Result<(f64, f64), CliError> {
        match (self.u, self.v, self.q, self.rho) {
            (Some(u), Some(v), None, None) => Ok((u, v)),
            (None, None, Some(q), Some(rho)) => {
                if !(q.is_finite() && q > 0.0) {
                    return Err(CliError::Validation(format!(
                        "invalid q: must be finite and > 0, got {q}"
                    )));
                }
                if !(0.0..1.0).contains(&rho) {
                    return Err(CliError::Validation(format!(
                        "invalid rho: must lie in [0, 1), got {rho}"
                    )));
                }
                let u = rho / (1.0 - rho);
                Ok((u, u / q))
            }
            _ => Err(CliError::Validation(
                "invalid dispersions: give exactly one of (--u, --v) or (--q, --rho)".into(),
            )),
        }
    }

    pub fn required<T: Copy>(value: Option<T>, field: &str) -> Result<T, CliError> {
        value.ok_or_else(|| CliError::Validation(format!("invalid {field}: missing (flag or config)")))
    }

    /// Full model parameters; error variances default to 1.
    pub fn params(&self) -> Result<ModelParams, CliError> {
        let (u, v) = self.dispersions()?;
        Ok(ModelParams::new(
            self.sigma1_sq.unwrap_or(1.0),
            self.sigma2_sq.unwrap_or(1.0),
            u,
            v,
            Self::required(self.k, "K")?,
            Self::required(self.n, "N")?,
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = RunConfig {
            u: Some(1.0),
            v: Some(2.0),
            k: Some(3),
            n: Some(10),
            ..RunConfig::default()
        };
        let flags = ModelArgs {
            q: Some(1.0),
            rho: Some(0.5),
            n: Some(20),
            ..ModelArgs::default()
        };
        let merged = file.merge(&flags);
        assert_eq!(merged.dispersions().unwrap(), (1.0, 1.0));
        assert_eq!(merged.k, Some(3));
        assert_eq!(merged.n, Some(20));
    }

    #[test]
    fn both_parametrizations_rejected() {
        let c = RunConfig {
            u: Some(1.0),
            v: Some(1.0),
            q: Some(1.0),
            rho: Some(0.5),
            ..RunConfig::default()
        };
        assert!(c.dispersions().unwrap_err().to_string().contains("exactly one"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sigma": 1}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"K": 5, "N": 60, "kind": "pred-d"}"#).unwrap();
        assert_eq!(c.kind, Some(CriterionKind::PredictionD));
    }
}
