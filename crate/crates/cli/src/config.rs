//! Run configuration: a single TOML document holding every tunable that the
//! estimators need. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use modebank::baseline::{DetectorConfig, DEFAULT_ZUPT_SIGMA};
use modebank::filterbank::DEFAULT_MAX_LEAVES;
use modebank::learning::LearnConfig;
use modebank::models::{
    same_height_initial_transition, varying_gait_initial_transition, MotionModel, SameHeightParams,
    TransitionMatrix, VaryingGaitParams,
};
use modebank::pipeline::InitialUncertainty;
use modebank::strapdown::NoiseConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::read_transition_file;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    #[default]
    VaryingGait,
    SameHeight,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelChoice,
    pub noise: NoiseConfig,
    pub varying_gait: VaryingGaitParams,
    pub same_height: SameHeightParams,
    /// TOML file with a `pi` key (for instance a learning report) that
    /// replaces the selected model's transition matrix. Relative paths are
    /// resolved against the directory of the configuration file.
    pub transition_file: Option<PathBuf>,
    pub max_leaves: usize,
    /// Number of leading samples averaged to level the initial attitude.
    pub align_window: usize,
    pub initial: InitialUncertainty,
    /// Stance detector of the reference system; its threshold can also be
    /// given on the command line.
    pub detector: Option<DetectorConfig>,
    /// Standard deviation of the reference system's zero-velocity update.
    pub zupt_sigma: f64,
    pub learn: LearnSection,
    pub output: OutputPaths,
    #[serde(skip)]
    base_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnSection {
    pub max_iter: usize,
    pub tol_loglik: f64,
    pub fd_step: f64,
    pub min_step: f64,
    /// Starting point; the model's standard initial guess when omitted.
    pub initial_transition: Option<Vec<Vec<f64>>>,
}

impl Default for LearnSection {
    fn default() -> Self {
        let d = LearnConfig::default();
        LearnSection {
            max_iter: d.max_iter,
            tol_loglik: d.tol_loglik,
            fd_step: d.fd_step,
            min_step: d.min_step,
            initial_transition: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub trajectory: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelChoice::default(),
            noise: NoiseConfig::default(),
            varying_gait: VaryingGaitParams::default(),
            same_height: SameHeightParams::default(),
            transition_file: None,
            max_leaves: DEFAULT_MAX_LEAVES,
            align_window: 100,
            initial: InitialUncertainty::default(),
            detector: None,
            zupt_sigma: DEFAULT_ZUPT_SIGMA,
            learn: LearnSection::default(),
            output: OutputPaths::default(),
            base_dir: PathBuf::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Configuration file if given, defaults otherwise.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_leaves == 0 {
            return Err(CliError::Config("max_leaves must be at least 1".into()));
        }
        if self.align_window == 0 {
            return Err(CliError::Config("align_window must be at least 1".into()));
        }
        if !(self.zupt_sigma > 0.0) {
            return Err(CliError::Config("zupt_sigma must be positive".into()));
        }
        self.noise.validate()?;
        if let Some(d) = &self.detector {
            d.validate()?;
        }
        Ok(())
    }

    pub fn model(&self) -> Result<MotionModel> {
        let file_rows = match &self.transition_file {
            Some(p) => Some(read_transition_file(&self.base_dir.join(p))?),
            None => None,
        };
        let model = match self.model {
            ModelChoice::VaryingGait => {
                let mut params = self.varying_gait.clone();
                if file_rows.is_some() {
                    params.transition = file_rows;
                }
                MotionModel::varying_gait(&params)?
            }
            ModelChoice::SameHeight => {
                let mut params = self.same_height.clone();
                if file_rows.is_some() {
                    params.transition = file_rows;
                }
                MotionModel::same_height(&params)?
            }
        };
        Ok(model)
    }

    pub fn learn_config(&self) -> LearnConfig {
        LearnConfig {
            max_iter: self.learn.max_iter,
            tol_loglik: self.learn.tol_loglik,
            max_leaves: Some(self.max_leaves),
            fd_step: self.learn.fd_step,
            min_step: self.learn.min_step,
        }
    }

    /// Starting transition matrix for learning, checked against the model's
    /// structure.
    pub fn initial_transition(&self, model: &MotionModel) -> Result<TransitionMatrix> {
        let rows = self.learn.initial_transition.clone().unwrap_or_else(|| match self.model {
            ModelChoice::VaryingGait => varying_gait_initial_transition(),
            ModelChoice::SameHeight => same_height_initial_transition(),
        });
        Ok(TransitionMatrix::new(&rows, &model.transition().structure_rows())?)
    }

    pub fn detector(&self, gamma: Option<f64>) -> Result<DetectorConfig> {
        let mut d = match (self.detector, gamma) {
            (Some(d), _) => d,
            (None, Some(g)) => DetectorConfig::with_gamma(g),
            (None, None) => {
                return Err(CliError::Config(
                    "the stance detector threshold is required (--gamma or [detector] gamma)".into(),
                ))
            }
        };
        if let Some(g) = gamma {
            d.gamma = g;
        }
        d.validate()?;
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("max_leafs = 3"), Err(CliError::Config(_))));
        assert!(matches!(
            RunConfig::from_toml("[noise]\nsigma_s = 0.1\nbogus = 1"),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg = RunConfig::from_toml(
            "model = \"same-height\"\nmax_leaves = 4\n[noise]\nsigma_w = 0.02\n[same_height]\nsigma_h = 0.05\n",
        )
        .unwrap();
        assert_eq!(cfg.model, ModelChoice::SameHeight);
        assert_eq!(cfg.max_leaves, 4);
        assert_eq!(cfg.noise.sigma_w, 0.02);
        assert_eq!(cfg.noise.sigma_s, NoiseConfig::default().sigma_s);
        let model = cfg.model().unwrap();
        assert!(model.has_height_ref());
        assert_eq!(cfg.learn_config().max_leaves, Some(4));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        assert!(RunConfig::from_toml("max_leaves = 0").is_err());
        let cfg = RunConfig::from_toml("[varying_gait]\ntransition = [[0.5, 0.5], [0.5, 0.5]]").unwrap();
        let err = cfg.model().unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn detector_threshold_is_required() {
        let cfg = RunConfig::default();
        assert!(cfg.detector(None).is_err());
        assert_eq!(cfg.detector(Some(1e4)).unwrap().gamma, 1e4);
        let cfg = RunConfig::from_toml("[detector]\ngamma = 5e4\nwindow = 3").unwrap();
        assert_eq!(cfg.detector(None).unwrap().window, 3);
        assert_eq!(cfg.detector(Some(1.0)).unwrap().gamma, 1.0);
    }

    #[test]
    fn initial_transition_must_match_the_structure() {
        let cfg = RunConfig::from_toml("[learn]\ninitial_transition = [[0.5, 0.3, 0.2], [0.5, 0.4, 0.3], [0.0, 0.3, 0.5]]")
            .unwrap();
        let model = cfg.model().unwrap();
        assert_eq!(cfg.initial_transition(&model).unwrap_err().exit_code(), 2);
        let model = RunConfig::default().model().unwrap();
        assert!(RunConfig::default().initial_transition(&model).is_ok());
    }
}
