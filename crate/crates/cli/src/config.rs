//! JSON run configuration. Every key is optional; command-line flags take
//! precedence over file values.

use std::path::{Path, PathBuf};

use netcrf::{dgp_scenario, DgpParams, ModelSpec, Scenario};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,

    pub n_units: Option<usize>,
    pub radius: Option<f64>,
    pub scenario: Option<Scenario>,
    pub beta0: Option<f64>,
    pub beta_f: Option<f64>,
    pub beta_d: Option<f64>,
    pub beta_f2: Option<f64>,
    pub beta_tau: Option<f64>,
    pub beta_r: Option<f64>,
    pub beta_dtau: Option<f64>,
    pub beta_dr: Option<f64>,
    pub noise_sd: Option<f64>,
    pub p_treat: Option<f64>,
    pub write_network: Option<bool>,

    pub frame: Option<PathBuf>,
    pub nodes: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub specs: Option<Vec<ModelSpec>>,

    pub table: Option<String>,
    pub reps: Option<usize>,

    pub calibrate_mean_degree: Option<f64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Scenario coefficients with any `beta*`, `noise_sd` or `p_treat`
    /// keys applied on top.
    pub fn dgp_params(&self) -> DgpParams {
        let mut p = dgp_scenario(self.scenario.unwrap_or(Scenario::I));
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut p.beta0, self.beta0);
        set(&mut p.beta_f, self.beta_f);
        set(&mut p.beta_d, self.beta_d);
        set(&mut p.beta_f2, self.beta_f2);
        set(&mut p.beta_tau, self.beta_tau);
        set(&mut p.beta_r, self.beta_r);
        set(&mut p.beta_dtau, self.beta_dtau);
        set(&mut p.beta_dr, self.beta_dr);
        set(&mut p.noise_sd, self.noise_sd);
        set(&mut p.p_treat, self.p_treat);
        p
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    /// JSON form with unset keys left out.
    pub fn to_value(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.retain(|_, x| !x.is_null());
        }
        v
    }

    pub fn to_json_line(&self) -> String {
        self.to_value().to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_keys_override_scenario() {
        let cfg: RunConfig = serde_json::from_str(r#"{"scenario": "iii", "beta_r": 5.0, "noise_sd": 0}"#).unwrap();
        let p = cfg.dgp_params();
        assert_eq!(p.beta_r, 5.0);
        assert_eq!(p.beta_dr, 2.0);
        assert_eq!(p.noise_sd, 0.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sead": 1}"#).is_err());
    }

    #[test]
    fn specs_parse_from_strings() {
        let cfg: RunConfig = serde_json::from_str(r#"{"specs": ["tr", "crf2:J=3,t_order=2"]}"#).unwrap();
        assert_eq!(cfg.specs.unwrap()[1], ModelSpec::Crf2 { j: 3, t_order: 2 });
    }
}
