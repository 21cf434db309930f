//! Experiment configuration: one TOML/JSON file per experiment, with desk-
//! and paper-scale presets per mark model.

use crate::error::{Error, Result};
use crate::marks::MarkModel;
use crate::scattering::{uniform_angles, FilterBankParams};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// CI-sized runs: 2000 training patterns, 50 test patterns.
    Desk,
    /// Full-scale protocol: 10000 training patterns, 100 test patterns.
    Paper,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::config(format!("unknown preset `{other}` (expected desk or paper)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSection {
    pub mark: MarkModel,
    pub intensity: f64,
    pub side: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSection {
    pub a: f64,
    pub c: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterSection {
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankSection {
    pub j_min: usize,
    pub j_max: usize,
    pub n_angles: usize,
    pub omega: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSection {
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionSection {
    pub eps: f64,
    pub memory: usize,
    pub gradient_tolerance: f64,
    /// Iteration cap for reconstruction from exact moments.
    pub cap_exact: usize,
    /// Iteration cap for reconstruction from regressed moments.
    pub cap_estimated: usize,
    /// When set, caps are chosen from the candidate lists by the
    /// RMSE-versus-cap rule of thumb on the test set.
    pub tune_caps: bool,
    pub cap_candidates_exact: Vec<usize>,
    pub cap_candidates_estimated: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSection {
    pub enabled: bool,
    pub k: usize,
    pub max_train_points: usize,
    pub test_points: usize,
    pub min_train_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub response: ResponseSection,
    pub raster: RasterSection,
    pub bank: BankSection,
    pub regression: RegressionSection,
    pub reconstruction: ReconstructionSection,
    pub baseline: BaselineSection,
}

fn cap_candidates(max: usize) -> Vec<usize> {
    const LADDER: [usize; 25] = [
        1, 2, 3, 4, 5, 6, 8, 10, 12, 16, 20, 24, 32, 40, 48, 64, 80, 100, 128, 160, 200, 256,
        320, 400, 500,
    ];
    let mut caps: Vec<usize> = LADDER.iter().copied().filter(|c| *c <= max).collect();
    if caps.last() != Some(&max) {
        caps.push(max);
    }
    caps
}

impl ExperimentConfig {
    /// Per-model defaults at the requested scale. Intensities, iteration
    /// caps, and baseline neighborhoods follow the experimental protocol for
    /// each mark model.
    pub fn preset(mark: MarkModel, preset: Preset) -> Self {
        let (intensity, cap_exact, cap_estimated, k, baseline_enabled) = match mark {
            MarkModel::ShotNoise => (40.0, 30, 4, 15, true),
            MarkModel::NearestNeighbor => (40.0, 250, 8, 15, false),
            MarkModel::VoronoiArea => (30.0, 30, 6, 35, true),
            MarkModel::VoronoiInertia => (30.0, 150, 8, 15, true),
            MarkModel::VoronoiShotNoise => (30.0, 50, 5, 15, true),
        };
        let (n_train, n_test) = match preset {
            Preset::Desk => (2000, 50),
            Preset::Paper => (10_000, 100),
        };
        ExperimentConfig {
            experiment: ExperimentSection {
                mark,
                intensity,
                side: 1.0,
                n_train,
                n_test,
                seed: 17,
            },
            response: ResponseSection { a: 10.0, c: 0.6, beta: 3.0 },
            raster: RasterSection { n: 128 },
            bank: BankSection { j_min: 0, j_max: 7, n_angles: 8, omega: 5.5, sigma: 1.0 },
            regression: RegressionSection {
                lambda_grid: crate::regress::default_lambda_grid(),
                folds: 5,
            },
            reconstruction: ReconstructionSection {
                eps: 1e-12,
                memory: 10,
                gradient_tolerance: 1e-12,
                cap_exact,
                cap_estimated,
                tune_caps: true,
                cap_candidates_exact: cap_candidates(2 * cap_exact),
                cap_candidates_estimated: cap_candidates(48.max(2 * cap_estimated)),
            },
            baseline: BaselineSection {
                enabled: baseline_enabled,
                k,
                max_train_points: 20_000,
                test_points: 100,
                min_train_points: 200,
            },
        }
    }

    pub fn response_function(&self) -> crate::marks::ResponseFunction {
        crate::marks::ResponseFunction::TruncatedPowerLaw {
            a: self.response.a,
            c: self.response.c,
            beta: self.response.beta,
        }
    }

    pub fn bank_params(&self) -> FilterBankParams {
        FilterBankParams {
            n: self.raster.n,
            j_min: self.bank.j_min,
            j_max: self.bank.j_max,
            angles: uniform_angles(self.bank.n_angles),
            omega: self.bank.omega,
            sigma: self.bank.sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if !(e.intensity > 0.0) {
            return Err(Error::config(format!("intensity must be positive, got {}", e.intensity)));
        }
        if !(e.side > 0.0) {
            return Err(Error::config(format!("window side must be positive, got {}", e.side)));
        }
        if e.n_train == 0 || e.n_test == 0 {
            return Err(Error::config("n_train and n_test must be at least 1"));
        }
        self.response_function().validate().map_err(|err| Error::config(err.to_string()))?;
        self.bank_params().validate()?;
        if self.regression.folds < 2 {
            return Err(Error::config("cross-validation needs at least 2 folds"));
        }
        if self.regression.lambda_grid.is_empty() {
            return Err(Error::config("lambda grid must not be empty"));
        }
        let r = &self.reconstruction;
        if r.cap_exact < 1 || r.cap_estimated < 1 {
            return Err(Error::config("iteration caps must be at least 1"));
        }
        if !(r.eps > 0.0) {
            return Err(Error::config("modulus smoothing must be positive"));
        }
        if r.tune_caps && (r.cap_candidates_exact.is_empty() || r.cap_candidates_estimated.is_empty()) {
            return Err(Error::config("cap tuning needs nonempty candidate lists"));
        }
        if self.baseline.enabled && self.baseline.k < 2 {
            return Err(Error::config("baseline neighborhood must contain at least 2 points"));
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))
    }

    /// Load from a `.toml` or `.json` file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("");
        let cfg: ExperimentConfig = match ext {
            "json" => serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_follow_the_protocol() {
        for mark in MarkModel::ALL {
            for preset in [Preset::Desk, Preset::Paper] {
                let cfg = ExperimentConfig::preset(mark, preset);
                cfg.validate().unwrap();
            }
        }
        let sn = ExperimentConfig::preset(MarkModel::ShotNoise, Preset::Paper);
        assert_eq!(sn.experiment.n_train, 10_000);
        assert_eq!(sn.experiment.intensity, 40.0);
        assert_eq!(sn.reconstruction.cap_exact, 30);
        assert_eq!(sn.reconstruction.cap_estimated, 4);
        assert_eq!(sn.baseline.k, 15);

        let nn = ExperimentConfig::preset(MarkModel::NearestNeighbor, Preset::Paper);
        assert_eq!(nn.reconstruction.cap_exact, 250);
        assert_eq!(nn.reconstruction.cap_estimated, 8);
        assert!(!nn.baseline.enabled);

        let va = ExperimentConfig::preset(MarkModel::VoronoiArea, Preset::Paper);
        assert_eq!(va.experiment.intensity, 30.0);
        assert_eq!(va.reconstruction.cap_exact, 30);
        assert_eq!(va.reconstruction.cap_estimated, 6);
        assert_eq!(va.baseline.k, 35);

        let vi = ExperimentConfig::preset(MarkModel::VoronoiInertia, Preset::Paper);
        assert_eq!(vi.reconstruction.cap_exact, 150);
        assert_eq!(vi.reconstruction.cap_estimated, 8);
        assert_eq!(vi.baseline.k, 15);

        let vsn = ExperimentConfig::preset(MarkModel::VoronoiShotNoise, Preset::Paper);
        assert_eq!(vsn.reconstruction.cap_exact, 50);
        assert_eq!(vsn.reconstruction.cap_estimated, 5);
        assert_eq!(vsn.baseline.k, 15);

        let desk = ExperimentConfig::preset(MarkModel::ShotNoise, Preset::Desk);
        assert_eq!(desk.experiment.n_train, 2000);
        assert_eq!(desk.experiment.n_test, 50);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::preset(MarkModel::VoronoiArea, Preset::Desk);
        let text = cfg.to_toml_string().unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut cfg = ExperimentConfig::preset(MarkModel::ShotNoise, Preset::Desk);
        cfg.experiment.intensity = -1.0;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::preset(MarkModel::ShotNoise, Preset::Desk);
        cfg.raster.n = 100;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::preset(MarkModel::ShotNoise, Preset::Desk);
        cfg.bank.j_max = 9;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::preset(MarkModel::ShotNoise, Preset::Desk);
        cfg.reconstruction.cap_estimated = 0;
        assert!(cfg.validate().is_err());
    }
}
