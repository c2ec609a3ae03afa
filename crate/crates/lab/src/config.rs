//! Study configuration.
//!
//! Files are TOML: `key = value` lines under `[section]` headers. Relative
//! paths are resolved against the directory holding the file. Every key
//! can be overridden from the command line.

use std::path::{Path, PathBuf};

use pfconv_core::cox::{CoxModel, GammaProposal};
use pfconv_core::{ResampleScheme, TestFunction};
use serde::{Deserialize, Serialize};

use crate::proposal::ProposalChoice;
use crate::LabError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub c: f64,
    pub eta: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { c: 0.5, eta: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalSection {
    /// `gamma` or `bootstrap`.
    pub kind: String,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ProposalSection {
    fn default() -> Self {
        Self {
            kind: "gamma".into(),
            alpha: 1.5,
            beta: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub observations: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub particle_counts: Vec<usize>,
    pub replicates: usize,
    pub test_functions: Vec<String>,
    pub moments: Vec<u32>,
    pub resampler: String,
    pub master_seed: u64,
    /// Step at which the headline slopes are fitted.
    pub fit_step: usize,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            particle_counts: vec![128, 512, 2048, 8192],
            replicates: 200,
            test_functions: vec!["exp_neg".into()],
            moments: vec![2, 4],
            resampler: "multinomial".into(),
            master_seed: 1,
            fit_step: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub dx: f64,
    pub x_max: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self { dx: 0.005, x_max: 15.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// File stem: writes `<stem>.csv`, `<stem>.json`, `<stem>.svg`.
    pub stem: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
            stem: "convergence".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub proposal: ProposalSection,
    pub data: DataSection,
    pub study: StudySection,
    pub oracle: OracleSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, LabError> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    /// Parse a file and make its relative paths relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data.observations = resolve(base, &cfg.data.observations);
        cfg.output.dir = resolve(base, &cfg.output.dir);
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Check the invariants and build the typed plan.
    pub fn plan(&self) -> Result<StudyPlan, LabError> {
        let bad = |m: String| Err(LabError::Config(m));
        let s = &self.study;
        if s.particle_counts.is_empty() || s.particle_counts[0] < 2 {
            return bad("particle_counts must start at 2 or more".into());
        }
        if s.particle_counts.windows(2).any(|w| w[1] <= w[0]) {
            return bad("particle_counts must be strictly increasing".into());
        }
        if s.replicates < 2 {
            return bad(format!("replicates must be at least 2, got {}", s.replicates));
        }
        if s.test_functions.is_empty() {
            return bad("at least one test function is required".into());
        }
        if s.moments.is_empty() || s.moments.iter().any(|&p| p != 2 && p != 4) {
            return bad(format!("moments must be a subset of {{2, 4}}, got {:?}", s.moments));
        }
        if s.fit_step == 0 {
            return bad("fit_step counts from 1".into());
        }
        if !(self.oracle.dx > 0.0 && self.oracle.x_max > self.oracle.dx) {
            return bad(format!("invalid oracle grid dx={} x_max={}", self.oracle.dx, self.oracle.x_max));
        }
        let test_functions = s
            .test_functions
            .iter()
            .map(|n| n.parse::<TestFunction>())
            .collect::<Result<Vec<_>, _>>()?;
        let resampler: ResampleScheme = s.resampler.parse()?;
        let model = CoxModel::new(self.model.c, self.model.eta)?;
        let proposal = match self.proposal.kind.as_str() {
            "gamma" => ProposalChoice::Gamma(GammaProposal::new(self.proposal.alpha, self.proposal.beta)?),
            "bootstrap" => ProposalChoice::Bootstrap,
            other => return bad(format!("unknown proposal kind {other:?} (expected gamma or bootstrap)")),
        };
        let mut moments = s.moments.clone();
        moments.sort_unstable();
        moments.dedup();
        Ok(StudyPlan {
            model,
            proposal,
            particle_counts: s.particle_counts.clone(),
            replicates: s.replicates,
            test_functions,
            moments,
            resampler,
            master_seed: s.master_seed,
            fit_step: s.fit_step,
            dx: self.oracle.dx,
            x_max: self.oracle.x_max,
        })
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.as_os_str().is_empty() || p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// A validated study, apart from the observations.
#[derive(Debug, Clone)]
pub struct StudyPlan {
    pub model: CoxModel,
    pub proposal: ProposalChoice,
    pub particle_counts: Vec<usize>,
    pub replicates: usize,
    pub test_functions: Vec<TestFunction>,
    pub moments: Vec<u32>,
    pub resampler: ResampleScheme,
    pub master_seed: u64,
    pub fit_step: usize,
    pub dx: f64,
    pub x_max: f64,
}
