//! Experiment description, read from TOML.
//!
//! ```toml
//! models = [[25, 100, 100], [50, 100, 100]]
//! schedulers = ["static", "guided", "dynamic", "dynamic+tuned"]
//! shots = [1, 2]
//! repetitions = 5
//! threads = 4
//! seed = 7
//! output = "runs.csv"
//! warmup = true
//!
//! [model]          # true model: Gaussian sphere, start model: v_bg everywhere
//! dx = 10.0
//! v_bg = 2500.0
//! v_peak = 3500.0
//! center = [0.5, 0.5, 0.5]
//! radius_scale = 0.15
//!
//! [sim]
//! nt = 2458
//! dt = 0.001
//! f_peak = 10.0
//! boundary_width = 25
//! damping = 0.015
//!
//! [fwi]
//! n_fwi = 1
//! step0 = 0.02
//! mask_radius = 0
//! receiver_every = 4
//! bottom_receivers = false
//! # snapshots = 14     (default: ceil(log2 nt) + 2)
//!
//! [tuning]
//! min_chunk = 50
//! repeat_discard = 1
//! optimizers = 4
//! iterations = 40
//! t0_gen = 100.0
//! t0_ac = 0.9
//! ```
//!
//! Every key is optional; the values above are the defaults except for
//! `models`, `shots` and `output`. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use autochunk::csa::CsaConfig;
use autochunk::tuner::TuningPolicy;
use autochunk::wave::{SimConfig, DEFAULT_DAMPING};
use serde::Deserialize;

use crate::BenchError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub models: Vec<[usize; 3]>,
    pub schedulers: Vec<String>,
    pub shots: Vec<usize>,
    pub repetitions: usize,
    pub threads: usize,
    pub seed: u64,
    pub output: PathBuf,
    /// One discarded run per cell before the timed repetitions.
    pub warmup: bool,
    pub model: ModelSection,
    pub sim: SimSection,
    pub fwi: FwiSection,
    pub tuning: TuningSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            models: vec![[25, 100, 100]],
            schedulers: ["static", "guided", "dynamic", "dynamic+tuned"].map(String::from).to_vec(),
            shots: vec![1],
            repetitions: 5,
            threads: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            seed: 7,
            output: PathBuf::from("runs.csv"),
            warmup: true,
            model: ModelSection::default(),
            sim: SimSection::default(),
            fwi: FwiSection::default(),
            tuning: TuningSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub dx: f64,
    pub v_bg: f64,
    pub v_peak: f64,
    pub center: [f64; 3],
    pub radius_scale: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { dx: 10.0, v_bg: 2500.0, v_peak: 3500.0, center: [0.5; 3], radius_scale: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub nt: usize,
    pub dt: f64,
    pub f_peak: f64,
    pub boundary_width: usize,
    pub damping: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let s = SimConfig::default();
        Self { nt: s.nt, dt: s.dt, f_peak: s.f_peak, boundary_width: s.boundary_width, damping: DEFAULT_DAMPING }
    }
}

impl SimSection {
    pub fn to_sim(&self) -> SimConfig {
        SimConfig { nt: self.nt, dt: self.dt, f_peak: self.f_peak, boundary_width: self.boundary_width, damping: self.damping }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FwiSection {
    pub n_fwi: usize,
    pub step0: f64,
    pub mask_radius: usize,
    pub receiver_every: usize,
    pub bottom_receivers: bool,
    pub snapshots: Option<usize>,
}

impl Default for FwiSection {
    fn default() -> Self {
        Self { n_fwi: 1, step0: 0.02, mask_radius: 0, receiver_every: 4, bottom_receivers: false, snapshots: None }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningSection {
    pub min_chunk: usize,
    pub repeat_discard: usize,
    pub optimizers: usize,
    pub iterations: usize,
    pub t0_gen: f64,
    pub t0_ac: f64,
}

impl Default for TuningSection {
    fn default() -> Self {
        let p = TuningPolicy::default();
        Self {
            min_chunk: p.min_chunk,
            repeat_discard: p.repeat_discard,
            optimizers: p.csa.n_optimizers,
            iterations: p.csa.n_iterations,
            t0_gen: p.csa.t0_gen,
            t0_ac: p.csa.t0_ac,
        }
    }
}

impl TuningSection {
    pub fn policy(&self, seed: u64) -> TuningPolicy {
        TuningPolicy {
            enabled: true,
            csa: CsaConfig::with(self.optimizers, self.iterations, self.t0_gen, self.t0_ac, seed),
            min_chunk: self.min_chunk,
            repeat_discard: self.repeat_discard,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        if self.models.is_empty() || self.schedulers.is_empty() || self.shots.is_empty() {
            return bad("models, schedulers and shots must be non-empty".into());
        }
        if let Some(m) = self.models.iter().find(|m| m.contains(&0)) {
            return bad(format!("model dims {m:?} contain a zero"));
        }
        if self.shots.contains(&0) {
            return bad("shot counts must be at least 1".into());
        }
        for s in &self.schedulers {
            s.parse::<crate::SchedulerLabel>()?;
        }
        if self.fwi.n_fwi == 0 {
            return bad("fwi.n_fwi must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = ExperimentConfig::from_toml(
            "models = [[10, 20, 20]]\nshots = [1, 2]\noutput = \"x.csv\"\n[sim]\nnt = 100\n[tuning]\nt0_ac = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.models, vec![[10, 20, 20]]);
        assert_eq!(cfg.repetitions, 5);
        assert_eq!(cfg.sim.nt, 100);
        assert_eq!(cfg.sim.f_peak, 10.0);
        assert_eq!(cfg.tuning.policy(3).csa.t0_ac, 0.5);
        assert_eq!(cfg.tuning.policy(3).csa.n_iterations, 40);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(ExperimentConfig::from_toml("repetitions = 0").is_err());
        assert!(ExperimentConfig::from_toml("colour = 3").is_err());
        assert!(ExperimentConfig::from_toml("schedulers = [\"fastest\"]").is_err());
        assert!(ExperimentConfig::from_toml("models = [[0, 1, 1]]").is_err());
    }
}
