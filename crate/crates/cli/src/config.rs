use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, ValueEnum};
use mfg_core::games::{
    load_game, make_random, make_rps, make_sis, RandomMfgParams, RpsParams, SisParams,
};
use mfg_core::{Averaging, Concept, MfgModel64, SolverConfig64};
use serde::{Deserialize, Serialize};

use crate::error::{CliResult, Failure};

pub const OUTPUT_DIR_ENV: &str = "MFG_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Gfpi,
    Gfp,
    RhSeq,
    RhPar,
}

/// Experiment settings. Every field can come from a `--config` JSON file
/// with the same (snake_case) names; flags given on the command line win.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// JSON file with default values for any of these settings.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// sis, rps, random or file:<path>.
    #[arg(long)]
    pub game: Option<String>,
    /// Number of stages T (built-in games).
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Seed of the random game.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num_states: Option<usize>,
    #[arg(long)]
    pub num_actions: Option<usize>,
    /// Weight of the random game's log crowd-aversion term.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub mf_floor: Option<f64>,
    /// SIS healing probability.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// SIS infection rate.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub c_i: Option<f64>,
    #[arg(long)]
    pub c_q: Option<f64>,
    #[arg(long)]
    pub mu0_infected: Option<f64>,
    /// RPS payoff weights (a, b, c).
    #[arg(long)]
    pub rps_a: Option<f64>,
    #[arg(long)]
    pub rps_b: Option<f64>,
    #[arg(long)]
    pub rps_c: Option<f64>,

    #[arg(long, value_enum)]
    pub algorithm: Option<Algorithm>,
    /// ne, qpi_re, qstar_re or re.
    #[arg(long)]
    pub concept: Option<Concept>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Receding-horizon lookahead H.
    #[arg(long)]
    pub horizon_rh: Option<usize>,
    #[arg(long)]
    pub trace_every: Option<usize>,
    /// geometric (beta weights) or uniform (classical 1/k weights).
    #[arg(long)]
    pub averaging: Option<Averaging>,
    /// Defaults to $MFG_OUTPUT_DIR, then the current directory.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Exit with status 4 if a solve misses its tolerance.
    #[arg(long, action = ArgAction::SetTrue)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub require_convergence: bool,

    /// Temperatures for sweep-alpha (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Lookaheads for rh-compare (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<usize>>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl ExperimentConfig {
    /// Overlays the flags on the `--config` file (if any) and fills defaults.
    pub fn resolve(self) -> CliResult<Resolved> {
        let merged = match &self.config {
            Some(path) => overlay(read_config(path)?, &self)?,
            None => self,
        };
        Resolved::from_merged(merged)
    }
}

fn read_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::from(e).context(format!("reading {}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::config(format!("config file {}: {e}", path.display())))
}

fn overlay(file: ExperimentConfig, flags: &ExperimentConfig) -> CliResult<ExperimentConfig> {
    let mut base = serde_json::to_value(file).map_err(Failure::config)?;
    let top = serde_json::to_value(flags).map_err(Failure::config)?;
    if let (Some(base), Some(top)) = (base.as_object_mut(), top.as_object()) {
        for (key, value) in top {
            if !value.is_null() {
                base.insert(key.clone(), value.clone());
            }
        }
    }
    serde_json::from_value(base).map_err(Failure::config)
}

#[derive(Debug, Clone, PartialEq)]
pub enum GameSpec {
    Sis(SisParams),
    Rps(RpsParams),
    Random(RandomMfgParams),
    File(PathBuf),
}

/// Fully specified experiment; `echo` is the merged configuration with
/// defaults filled in, as recorded in result files.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub game: GameSpec,
    pub algorithm: Algorithm,
    pub solver: SolverConfig64,
    pub output_dir: PathBuf,
    pub require_convergence: bool,
    pub alphas: Vec<f64>,
    pub horizons: Vec<usize>,
    pub echo: ExperimentConfig,
}

impl Resolved {
    fn from_merged(mut c: ExperimentConfig) -> CliResult<Self> {
        let name = c.game.get_or_insert_with(|| "sis".into()).clone();
        let game = match name.as_str() {
            "sis" => {
                let d = SisParams::default();
                GameSpec::Sis(SisParams {
                    gamma: *c.gamma.get_or_insert(d.gamma),
                    kappa: *c.kappa.get_or_insert(d.kappa),
                    c_i: *c.c_i.get_or_insert(d.c_i),
                    c_q: *c.c_q.get_or_insert(d.c_q),
                    mu0_infected: *c.mu0_infected.get_or_insert(d.mu0_infected),
                    horizon: *c.horizon.get_or_insert(d.horizon),
                })
            }
            "rps" => {
                let d = RpsParams::default();
                GameSpec::Rps(RpsParams {
                    a: *c.rps_a.get_or_insert(d.a),
                    b: *c.rps_b.get_or_insert(d.b),
                    c: *c.rps_c.get_or_insert(d.c),
                    horizon: *c.horizon.get_or_insert(d.horizon),
                })
            }
            "random" => {
                let d = RandomMfgParams::default();
                GameSpec::Random(RandomMfgParams {
                    num_states: *c.num_states.get_or_insert(d.num_states),
                    num_actions: *c.num_actions.get_or_insert(d.num_actions),
                    horizon: *c.horizon.get_or_insert(d.horizon),
                    eta: *c.eta.get_or_insert(d.eta),
                    seed: *c.seed.get_or_insert(d.seed),
                    mf_floor: *c.mf_floor.get_or_insert(d.mf_floor),
                })
            }
            other => match other.strip_prefix("file:") {
                Some(path) if !path.is_empty() => GameSpec::File(PathBuf::from(path)),
                _ => {
                    return Err(Failure::config(format!(
                        "invalid `game` value `{other}` (expected sis, rps, random or file:<path>)"
                    )))
                }
            },
        };

        let algorithm = *c.algorithm.get_or_insert(Algorithm::Gfp);
        let concept = *c.concept.get_or_insert(Concept::Re);
        let alpha = *c.alpha.get_or_insert(1.0);
        let mut solver = SolverConfig64::new(concept, alpha)
            .with_beta(*c.beta.get_or_insert(0.95))
            .with_max_iterations(*c.iterations.get_or_insert(1000))
            .with_tolerance(*c.tolerance.get_or_insert(1e-6))
            .with_trace_every(*c.trace_every.get_or_insert(1))
            .with_averaging(*c.averaging.get_or_insert(Averaging::Geometric));
        solver.horizon_rh = c.horizon_rh;

        let output_dir = c
            .output_dir
            .get_or_insert_with(|| {
                std::env::var_os(OUTPUT_DIR_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("."))
            })
            .clone();
        let alphas = c
            .alphas
            .get_or_insert_with(|| vec![0.01, 0.1, 1.0, 10.0, 100.0])
            .clone();
        let horizons = c.horizons.get_or_insert_with(|| vec![1, 3, 5, 9]).clone();
        if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Failure::config(format!(
                "invalid `alphas` entry {a}: must be positive"
            )));
        }
        if horizons.contains(&0) {
            return Err(Failure::config(
                "invalid `horizons` entry 0: must be at least 1",
            ));
        }

        Ok(Self {
            game,
            algorithm,
            solver,
            output_dir,
            require_convergence: c.require_convergence,
            alphas,
            horizons,
            echo: c,
        })
    }

    pub fn build_model(&self) -> CliResult<MfgModel64> {
        let model = match &self.game {
            GameSpec::Sis(p) => make_sis(p)?,
            GameSpec::Rps(p) => make_rps(p)?,
            GameSpec::Random(p) => make_random(p)?,
            GameSpec::File(path) => load_game(path)
                .map_err(|e| Failure::from(e).context(format!("loading {}", path.display())))?,
        };
        Ok(model)
    }

    /// Model plus an upfront check of the solver settings against it.
    pub fn checked_model(&self) -> CliResult<MfgModel64> {
        let model = self.build_model()?;
        self.solver.validate(&model)?;
        Ok(model)
    }
}
