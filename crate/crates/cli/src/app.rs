//! Argument parsing and command dispatch.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::PathBuf;

use attnpipe_core::data_model::{load_session, save_session};
use attnpipe_core::eval::PipelineSpec;
use attnpipe_core::simulate::{ground_truth, simulate_session, SimManifest};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{Resolved, RunConfig};
use crate::evaluate::{run_evaluation, write_evaluation};
use crate::psd::{run_psd, write_psd};
use crate::rundir::RunDir;
use crate::source::Source;
use crate::stream_cmd;
use crate::thresholds::{threshold_csv, threshold_table};
use crate::{CliResult, Failure};

#[derive(Debug, Parser)]
#[command(name = "attnpipe", version, about = "Real vs. virtual attention classification experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every command. Flags win over the config file, which
/// wins over the built-in defaults.
#[derive(Debug, Args, Default)]
pub struct Global {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Parent of the timestamped run directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Write results into exactly this directory.
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    /// Overrides the config seed and ATTNPIPE_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for participant-level parallelism.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Recorded dataset directory; sessions are simulated when absent.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Number of simulated participants.
    #[arg(long, global = true)]
    pub participants: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with planted effects.
    Simulate {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Evaluate pipelines under split policies.
    Evaluate {
        /// Comma-separated split policies.
        #[arg(long, value_delimiter = ',')]
        policy: Vec<String>,
        /// Comma-separated pipelines.
        #[arg(long, value_delimiter = ',')]
        pipeline: Vec<String>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Band-power group analysis of Real against Virtual.
    Psd {
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Replay one session as a frame stream to a single client.
    Serve {
        /// Recorded session directory.
        #[arg(long, conflicts_with = "participant")]
        session: Option<PathBuf>,
        /// Index of the simulated participant to replay.
        #[arg(long)]
        participant: Option<usize>,
        #[arg(long)]
        address: Option<String>,
        #[arg(long)]
        speed: Option<f64>,
    },
    /// Classify a live frame stream.
    Classify {
        /// Saved model bundle.
        #[arg(long, conflicts_with_all = ["train_session", "train_participant"])]
        model: Option<PathBuf>,
        /// Fit the model on this recorded session.
        #[arg(long, conflicts_with = "train_participant")]
        train_session: Option<PathBuf>,
        /// Fit the model on this simulated participant.
        #[arg(long)]
        train_participant: Option<usize>,
        #[arg(long)]
        pipeline: Option<String>,
        #[arg(long)]
        address: Option<String>,
        #[arg(long)]
        hop: Option<f64>,
    },
    /// Significance thresholds for the reference test sizes.
    ReproduceThresholds {
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Configuration helpers.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConfigAction {
    /// Print or write the default configuration.
    Init {
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Builds the run config: defaults, then the file, then the environment,
/// then flags.
pub fn build_config(g: &Global) -> CliResult<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(v) = g.seed {
        cfg.seed = v;
    }
    if let Some(v) = g.jobs {
        cfg.jobs = v;
    }
    if let Some(v) = &g.out {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = &g.data {
        cfg.data_dir = Some(v.clone());
    }
    if let Some(v) = g.participants {
        // keep the share of participants without eye tracking
        let share = cfg.sim.n_without_gaze as f64 / cfg.sim.n_participants.max(1) as f64;
        cfg.sim.n_participants = v;
        cfg.sim.n_without_gaze = ((share * v as f64).round() as usize).min(v);
    }
    Ok(cfg)
}

fn source_of(res: &Resolved) -> CliResult<Source> {
    match &res.cfg.data_dir {
        Some(d) => Source::recorded(d),
        None => Ok(Source::Simulated(res.cfg.sim.clone())),
    }
}

fn start(g: &Global, name: &str, cfg: RunConfig) -> CliResult<(Resolved, RunDir)> {
    let res = cfg.resolve()?;
    let dir = RunDir::create(&res.cfg.out_dir, name, g.run_dir.as_deref())?;
    dir.write_config(&res.cfg)?;
    Ok((res, dir))
}

/// Runs one command; returns the run directory when one was created.
pub fn run(cli: Cli) -> CliResult<Option<PathBuf>> {
    let g = &cli.global;
    let mut cfg = build_config(g)?;
    match cli.command {
        Command::Config {
            action: ConfigAction::Init { output },
        } => {
            let text = RunConfig::default().to_json();
            match output {
                Some(p) => std::fs::write(&p, text).map_err(|e| Failure::io(&p, e))?,
                None => print!("{text}"),
            }
            Ok(None)
        }
        Command::ReproduceThresholds { alpha } => {
            if let Some(a) = alpha {
                cfg.alpha = a;
            }
            let (res, dir) = start(g, "thresholds", cfg)?;
            let rows = threshold_table(res.cfg.alpha)?;
            let csv = threshold_csv(&rows);
            dir.write_text("thresholds.csv", &csv)?;
            dir.write_json("thresholds.json", &rows)?;
            print!("{csv}");
            Ok(Some(dir.path))
        }
        Command::Simulate { trials } => {
            if let Some(t) = trials {
                cfg.sim.trials_per_condition = t;
            }
            cfg.data_dir = None;
            let (res, dir) = start(g, "simulate", cfg)?;
            let sim = &res.cfg.sim;
            let data = dir.file("dataset");
            crate::with_pool(res.cfg.jobs, || {
                (0..sim.n_participants)
                    .into_par_iter()
                    .map(|i| {
                        let s = simulate_session(sim, i)?;
                        save_session(&s, data.join(&s.participant_id))?;
                        log::info!("wrote {}", s.participant_id);
                        Ok(())
                    })
                    .collect::<CliResult<Vec<()>>>()
            })??;
            let manifest = SimManifest {
                config: sim.clone(),
                participants: ground_truth(sim)?,
            };
            manifest.write(data.join("sim.json"))?;
            Ok(Some(dir.path))
        }
        Command::Evaluate {
            policy,
            pipeline,
            runs,
            tau,
        } => {
            if !policy.is_empty() {
                cfg.policies = policy;
            }
            if !pipeline.is_empty() {
                cfg.pipelines = pipeline;
            }
            if let Some(r) = runs {
                cfg.n_runs = r;
            }
            if let Some(t) = tau {
                cfg.tau = t;
            }
            let (res, dir) = start(g, "evaluate", cfg)?;
            let ev = run_evaluation(&res, &source_of(&res)?)?;
            write_evaluation(&dir, &res, &ev)?;
            Ok(Some(dir.path))
        }
        Command::Psd { alpha } => {
            if let Some(a) = alpha {
                cfg.psd_alpha = a;
            }
            let (res, dir) = start(g, "psd", cfg)?;
            let report = run_psd(&res, &source_of(&res)?)?;
            write_psd(&dir, &report)?;
            Ok(Some(dir.path))
        }
        Command::Serve {
            session,
            participant,
            address,
            speed,
        } => {
            if let Some(a) = address {
                cfg.stream.address = a;
            }
            if let Some(s) = speed {
                cfg.stream.speed_factor = s;
            }
            let (res, dir) = start(g, "serve", cfg)?;
            let s = match (session, participant) {
                (Some(p), _) => load_session(p)?,
                (None, i) => source_of(&res)?.load(i.unwrap_or(0))?,
            };
            let summary = stream_cmd::serve(&s, &res.cfg.stream.address, res.cfg.stream.speed_factor)?;
            dir.write_json("serve_summary.json", &summary)?;
            Ok(Some(dir.path))
        }
        Command::Classify {
            model,
            train_session,
            train_participant,
            pipeline,
            address,
            hop,
        } => {
            if let Some(a) = address {
                cfg.stream.address = a;
            }
            if let Some(h) = hop {
                cfg.stream.hop = h;
            }
            if let Some(p) = &pipeline {
                cfg.pipelines = vec![p.clone()];
            }
            let (res, dir) = start(g, "classify", cfg)?;
            let bundle = match model {
                Some(p) => stream_cmd::load_bundle(&p)?,
                None => {
                    let s = match train_session {
                        Some(p) => load_session(p)?,
                        None => source_of(&res)?.load(train_participant.unwrap_or(0))?,
                    };
                    let spec: PipelineSpec = res.pipelines[0];
                    let b = stream_cmd::train_bundle(&res, &s, spec)?;
                    dir.write_text("model.json", &b.to_json()?)?;
                    b
                }
            };
            let stdout = std::io::stdout();
            let (preds, summary) = stream_cmd::classify(&bundle, &res.cfg.stream.address, res.cfg.stream.hop, |p| {
                let mut out = stdout.lock();
                let _ = writeln!(out, "{}", serde_json::to_string(p).unwrap_or_default());
            })?;
            dir.write_text("predictions.csv", &stream_cmd::predictions_csv(&preds))?;
            let aligned: BTreeSet<(u32, usize)> = preds
                .iter()
                .filter_map(|p| p.position_index.map(|k| (p.trial_id, k)))
                .collect();
            log::info!("{} predictions, {} on offline window positions", preds.len(), aligned.len());
            dir.write_json("stream_summary.json", &summary)?;
            Ok(Some(dir.path))
        }
    }
}
