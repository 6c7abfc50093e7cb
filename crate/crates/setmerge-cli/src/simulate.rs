//! The `simulate` subcommands: thin wrappers around the simulation lab.

use clap::{Args, Subcommand};

use setmerge::simlab::{
    run_conformal_dependent, run_normal_mean, run_sensitivity, run_size_trend, Scenario,
    ScenarioConfig,
};

use crate::{write_output, CliResult};

/// Flags shared by every experiment.
#[derive(Args)]
pub struct CommonFlags {
    /// Scenario id (S1, S2, S3, S4).
    #[arg(long, default_value = "S1")]
    scenario: String,
    /// Replications per grid point.
    #[arg(long, default_value_t = 5000)]
    reps: usize,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated method names; empty means the experiment default.
    #[arg(long, default_value = "")]
    methods: String,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<String>,
}

impl CommonFlags {
    fn config(&self) -> CliResult<ScenarioConfig> {
        let mut config =
            ScenarioConfig::new(Scenario::parse(&self.scenario)?, self.reps, self.seed);
        config.methods = self
            .methods
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        Ok(config)
    }
}

#[derive(Subcommand)]
pub enum Experiment {
    /// Normal-mean testbed: coverage and size over the scenario grid.
    Normal(CommonFlags),
    /// Split-conformal testbed with dependent studies.
    Conformal(CommonFlags),
    /// Spread of the merged size under repeated synthetic draws.
    Sensitivity {
        #[command(flatten)]
        common: CommonFlags,
        /// Inner merge reruns per outer replication.
        #[arg(long, default_value_t = 2000)]
        inner: usize,
    },
    /// Inclusion of off-target candidates as the study count grows.
    Trend(CommonFlags),
}

pub fn cmd_simulate(experiment: Experiment) -> CliResult<()> {
    match experiment {
        Experiment::Normal(flags) => {
            let csv = run_normal_mean(&flags.config()?)?.to_csv();
            write_output(flags.out.as_deref(), &csv)
        }
        Experiment::Conformal(flags) => {
            let csv = run_conformal_dependent(&flags.config()?)?.to_csv();
            write_output(flags.out.as_deref(), &csv)
        }
        Experiment::Sensitivity { common, inner } => {
            let csv = run_sensitivity(&common.config()?, inner)?.to_csv();
            write_output(common.out.as_deref(), &csv)
        }
        Experiment::Trend(flags) => {
            let csv = run_size_trend(&flags.config()?)?.to_csv();
            write_output(flags.out.as_deref(), &csv)
        }
    }
}
