//! The run configuration file and its validation.

use std::fs;
use std::path::{Path, PathBuf};

use attnpipe_core::classify::{DEFAULT_RIDGE_SCALE, DEFAULT_TAU};
use attnpipe_core::eeg_features::{FbcspConfig, DEFAULT_M_PAIRS};
use attnpipe_core::eval::{PipelineConfig, PipelineSpec, SplitPolicy, DEFAULT_ALPHA, DEFAULT_RUNS, DEFAULT_TEST_FRAC, PSD_ALPHA};
use attnpipe_core::gaze_features::GazeFeatureConfig;
use attnpipe_core::signal::{default_bands, BandDefinition, PreprocessConfig, Preprocessor, DEFAULT_TRANSITION};
use attnpipe_core::simulate::SimConfig;
use attnpipe_core::stream::{DEFAULT_HOP, DEFAULT_PORT};
use serde::{Deserialize, Serialize};

use crate::Failure;

pub const SEED_ENV: &str = "ATTNPIPE_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    pub address: String,
    /// Seconds between online decisions.
    pub hop: f64,
    /// 1 replays in real time, 0 as fast as possible.
    pub speed_factor: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            address: format!("127.0.0.1:{DEFAULT_PORT}"),
            hop: DEFAULT_HOP,
            speed_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Recorded dataset to read; when absent, sessions are simulated from `sim`.
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Seeds the simulator and the split repetitions.
    pub seed: u64,
    pub jobs: usize,
    pub sim: SimConfig,
    pub preprocess: PreprocessConfig,
    pub bands: Vec<BandDefinition>,
    pub m_pairs: usize,
    /// Transition width of the filter-bank filters, Hz.
    pub transition: f64,
    pub ridge_scale: f64,
    /// Any of "eeg", "gaze", "fusion".
    pub pipelines: Vec<String>,
    pub tau: f64,
    /// Any of "trial_oblivious", "trial_sensitive", "chronological", "loso".
    pub policies: Vec<String>,
    pub test_frac: f64,
    pub n_runs: usize,
    pub alpha: f64,
    pub psd_alpha: f64,
    pub gaze: GazeFeatureConfig,
    pub stream: StreamConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            out_dir: PathBuf::from("runs"),
            seed: 0,
            jobs: 1,
            sim: SimConfig::default(),
            preprocess: PreprocessConfig::default(),
            bands: default_bands(),
            m_pairs: DEFAULT_M_PAIRS,
            transition: DEFAULT_TRANSITION,
            ridge_scale: DEFAULT_RIDGE_SCALE,
            pipelines: vec!["eeg".into(), "gaze".into(), "fusion".into()],
            tau: DEFAULT_TAU,
            policies: SplitPolicy::ALL.iter().map(|p| p.as_str().to_string()).collect(),
            test_frac: DEFAULT_TEST_FRAC,
            n_runs: DEFAULT_RUNS,
            alpha: DEFAULT_ALPHA,
            psd_alpha: PSD_ALPHA,
            gaze: GazeFeatureConfig::default(),
            stream: StreamConfig::default(),
        }
    }
}

/// A validated config with its string choices parsed.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub cfg: RunConfig,
    pub pipelines: Vec<PipelineSpec>,
    pub policies: Vec<SplitPolicy>,
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> Failure {
    Failure::config(format!("{field}: {msg}"))
}

fn unit_interval(field: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} outside (0, 1)")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, Failure> {
        serde_json::from_str(text).map_err(|e| Failure::config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Applies the seed override from the environment, if set.
    pub fn apply_env(&mut self) -> Result<(), Failure> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| invalid(SEED_ENV, format!("'{v}' is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            fbcsp: FbcspConfig {
                bands: self.bands.clone(),
                m_pairs: self.m_pairs,
                transition: self.transition,
            },
            ridge_scale: self.ridge_scale,
        }
    }

    /// Checks every field against what the pipeline stages accept and
    /// parses the pipeline and policy names.
    pub fn resolve(mut self) -> Result<Resolved, Failure> {
        self.sim.seed = self.seed;
        self.sim.validate().map_err(|e| match e {
            attnpipe_core::Error::InvalidConfig(m) => Failure::config(format!("sim.{m}")),
            other => other.into(),
        })?;
        if self.jobs == 0 {
            return Err(invalid("jobs", "must be at least 1"));
        }
        if self.n_runs == 0 {
            return Err(invalid("n_runs", "must be at least 1"));
        }
        unit_interval("test_frac", self.test_frac)?;
        unit_interval("alpha", self.alpha)?;
        unit_interval("psd_alpha", self.psd_alpha)?;
        if !(0.5..=1.0).contains(&self.tau) {
            return Err(invalid("tau", format!("{} outside [0.5, 1]", self.tau)));
        }
        if !(self.ridge_scale.is_finite() && self.ridge_scale >= 0.0) {
            return Err(invalid("ridge_scale", "must be a finite non-negative number"));
        }
        if !(self.transition.is_finite() && self.transition > 0.0) {
            return Err(invalid("transition", "must be positive"));
        }
        let n_channels = attnpipe_core::data_model::STANDARD_LABELS.len();
        if self.m_pairs == 0 || 2 * self.m_pairs > n_channels {
            return Err(invalid("m_pairs", format!("must be in [1, {}]", n_channels / 2)));
        }
        if self.bands.is_empty() {
            return Err(invalid("bands", "at least one band is required"));
        }
        for (i, b) in self.bands.iter().enumerate() {
            BandDefinition::new(b.name.clone(), b.lo, b.hi).map_err(|e| invalid(&format!("bands[{i}]"), e))?;
            if b.hi >= self.sim.fs / 2.0 {
                return Err(invalid(&format!("bands[{i}]"), "upper edge must lie below Nyquist"));
            }
        }
        let mut names: Vec<&str> = self.bands.iter().map(|b| b.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.bands.len() {
            return Err(invalid("bands", "band names must be unique"));
        }
        Preprocessor::new(&self.preprocess, self.sim.fs).map_err(|e| invalid("preprocess", e))?;
        if !(self.gaze.dispersion_threshold > 0.0 && self.gaze.min_duration > 0.0) {
            return Err(invalid("gaze", "thresholds must be positive"));
        }
        if !(0.0..=1.0).contains(&self.gaze.confidence_cutoff) {
            return Err(invalid("gaze.confidence_cutoff", "must be in [0, 1]"));
        }
        if !(self.stream.hop.is_finite() && self.stream.hop > 0.0) {
            return Err(invalid("stream.hop", "must be positive"));
        }
        if !(self.stream.speed_factor.is_finite() && self.stream.speed_factor >= 0.0) {
            return Err(invalid("stream.speed_factor", "must be finite and non-negative"));
        }
        if let Some(d) = &self.data_dir {
            if !d.is_dir() {
                return Err(invalid("data_dir", format!("{} is not a directory", d.display())));
            }
        }

        if self.pipelines.is_empty() {
            return Err(invalid("pipelines", "at least one pipeline is required"));
        }
        let pipelines = self
            .pipelines
            .iter()
            .map(|p| match p.as_str() {
                "eeg" | "gaze" | "fusion" => PipelineSpec::parse(p, self.tau).map_err(Failure::from),
                other => Err(invalid("pipelines", format!("unknown value '{other}'"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if self.policies.is_empty() {
            return Err(invalid("policies", "at least one policy is required"));
        }
        let policies = self
            .policies
            .iter()
            .map(|p| {
                p.parse::<SplitPolicy>()
                    .map_err(|_| invalid("policies", format!("unknown value '{p}'")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Resolved {
            cfg: self,
            pipelines,
            policies,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let r = RunConfig::default().resolve().unwrap();
        assert_eq!(r.pipelines.len(), 3);
        assert_eq!(r.policies, SplitPolicy::ALL.to_vec());
    }

    #[test]
    fn unknown_policy_names_the_field() {
        let cfg = RunConfig {
            policies: vec!["random".into()],
            ..RunConfig::default()
        };
        let err = cfg.resolve().unwrap_err();
        assert_eq!(err.kind, "ConfigInvalid");
        assert!(err.message.starts_with("policies:"), "{}", err.message);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_json(r#"{"n_run": 3}"#).unwrap_err();
        assert!(err.message.contains("n_run"));
    }

    #[test]
    fn nested_sim_errors_carry_the_path() {
        let mut cfg = RunConfig::default();
        cfg.sim.trials_per_condition = 1;
        let err = cfg.resolve().unwrap_err();
        assert!(err.message.starts_with("sim.trials_per_condition"), "{}", err.message);
    }

    #[test]
    fn json_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}
