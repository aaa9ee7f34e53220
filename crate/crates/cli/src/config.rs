//! TOML run configuration. Every key is optional; unknown keys are errors.
//! Command-line flags override the file, which overrides the defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use skewfbm::fbm::{FbmSpec, Method};
use skewfbm::local_time::default_ladder;
use skewfbm::sde::dyadic_ladder;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    /// Cap on the number of per-path CSV files a command writes.
    pub max_path_files: usize,
    pub fbm: FbmSection,
    pub local_time: LocalTimeSection,
    pub sde: SdeSection,
    pub girsanov: GirsanovSection,
    pub verify: VerifySection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: 1,
            out: PathBuf::from("out"),
            max_path_files: 100,
            fbm: FbmSection::default(),
            local_time: LocalTimeSection::default(),
            sde: SdeSection::default(),
            girsanov: GirsanovSection::default(),
            verify: VerifySection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FbmSection {
    pub hurst: f64,
    pub dim: usize,
    pub horizon: f64,
    pub steps: usize,
    /// Number of Monte Carlo paths.
    pub paths: usize,
    /// `volterra`, `volterra-midpoint` or `cholesky`.
    pub method: String,
}

impl Default for FbmSection {
    fn default() -> Self {
        Self {
            hurst: 0.2,
            dim: 1,
            horizon: 1.0,
            steps: 512,
            paths: 1000,
            method: "volterra".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalTimeSection {
    pub ladder: Vec<f64>,
    /// Level `x`; the origin when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    /// Bandwidth of the self-similarity and moment studies.
    pub epsilon: f64,
    /// Time compared with 1 in the self-similarity test.
    pub t: f64,
    pub moment_orders: Vec<usize>,
}

impl Default for LocalTimeSection {
    fn default() -> Self {
        Self {
            ladder: default_ladder(),
            center: None,
            epsilon: 2f64.powi(-8),
            t: 0.5,
            moment_orders: vec![1, 2, 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdeSection {
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Bandwidth of the written solution paths and the Hoelder and
    /// compactness studies.
    pub epsilon: f64,
    pub ladder: Vec<f64>,
    pub holder_m: u32,
    pub beta: f64,
    /// Subgrid cells of the compactness diagnostic; must divide `fbm.steps`.
    pub subgrid: usize,
}

impl Default for SdeSection {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            x0: None,
            epsilon: 2f64.powi(-6),
            ladder: dyadic_ladder(6),
            holder_m: 2,
            beta: 0.1,
            subgrid: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GirsanovSection {
    pub epsilon: f64,
    /// Signed drift weight `a` in `u = a phi_eps(B - x) 1_d`.
    pub amplitude: f64,
    pub mu: f64,
    pub ladder: Vec<f64>,
    pub checkpoints: Vec<(f64, f64)>,
}

impl Default for GirsanovSection {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            amplitude: 1.0,
            mu: 0.5,
            ladder: default_ladder(),
            checkpoints: vec![
                (0.25, 0.25),
                (0.5, 0.5),
                (1.0, 1.0),
                (0.25, 0.75),
                (0.5, 1.0),
            ],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub only: Vec<String>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn fbm_spec(&self) -> Result<FbmSpec, CliError> {
        let f = &self.fbm;
        Ok(FbmSpec::new(f.hurst, f.dim, f.horizon, f.steps)?)
    }

    pub fn method(&self) -> Result<Method, CliError> {
        Ok(self.fbm.method.parse()?)
    }

    pub fn workers(&self) -> Result<usize, CliError> {
        if self.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        Ok(self.workers)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<Config>("sed = 3").is_err());
        assert!(toml::from_str::<Config>("[fbm]\nhurts = 0.2").is_err());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c: Config = toml::from_str("seed = 9\n[fbm]\nhurst = 0.1\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.fbm.hurst, 0.1);
        assert_eq!(c.fbm.steps, FbmSection::default().steps);
        assert_eq!(c.local_time.ladder.len(), 8);
    }

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<Config>(&text).unwrap(), c);
    }
}
