//! Command-line surface: flags override the config file, which overrides
//! built-in defaults.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, ExperimentConfig, SchemeVariant};

/// Exit status for malformed invocations.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for failures while running or writing results.
pub const EXIT_RUNTIME: i32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "neuron-agents",
    version,
    about = "Train networks of policy-gradient neuron agents on cart-pole"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every run of one configuration and write a results archive.
    Run {
        #[command(flatten)]
        flags: ConfigFlags,
        /// Directory the results archive is written to.
        #[arg(long)]
        out: PathBuf,
        /// Also write every per-neuron reward component to ledger-<run>.csv.
        #[arg(long)]
        dump_ledger: bool,
    },
    /// Print the fully resolved configuration.
    Config {
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Print the scheme × layers table for one or more archives.
    Table {
        #[arg(required = true)]
        archives: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigFlags {
    /// TOML config file; its values override the defaults.
    #[arg(long = "config")]
    pub config_file: Option<PathBuf>,
    /// Number of neuron populations.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Neurons per population.
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeVariant>,
    /// Episode budget per run.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Independent runs (seeds seed, seed+1, ...).
    #[arg(long)]
    pub runs: Option<usize>,
    /// Base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rolling-mean return that counts as solved.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Episodes in the rolling mean.
    #[arg(long)]
    pub window: Option<usize>,
    /// Hidden units inside each neuron's policy.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub discount: Option<f64>,
    /// Episode at which bio-then-all adds the task reward.
    #[arg(long)]
    pub switch_episode: Option<usize>,
}

impl ConfigFlags {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut config = match &self.config_file {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! apply {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag { config.$field = v; })*
            };
        }
        apply!(
            layers => num_layers,
            width => layer_width,
            scheme => scheme,
            episodes => max_episodes,
            runs => num_runs,
            seed => base_seed,
            threshold => solve_threshold,
            window => window,
            hidden => hidden_dim,
            step_size => step_size,
            discount => discount,
            switch_episode => switch_episode,
        );
        config.validate()?;
        Ok(config)
    }
}

pub fn parse_cli<I, T>(args: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(args)
}
