//! Desk-scale simulation lab: coverage and size of merged sets over
//! replications, for the normal-mean and split-conformal testbeds, plus
//! sensitivity and size-trend studies.
//!
//! Replications are independent jobs; each derives every random stream from
//! `(master seed, grid index, replication index)`, so results are identical
//! for any worker-pool size. Set `SETMERGE_THREADS` to cap the pool.

mod conformal;
mod normal;

pub use conformal::run_conformal_dependent;
pub use normal::{
    run_normal_mean, run_oracle_p_benchmark, run_sensitivity, run_size_trend,
    single_study_mean_size, SensitivityResult, SensitivityRow, TrendReport, TrendRow,
};

use rayon::prelude::*;

use crate::aggregate::{Aggregator, Validity};
use crate::merge::MergeConfig;
use crate::{Error, Result};

/// Which experiment family a grid sweeps over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Fixed number of studies; common study level = target level, sweeping
    /// the level over 0.01..=0.10.
    S1,
    /// Number of studies sweeps 2..=9 at level 0.05.
    S2,
    /// Fixed studies at staggered levels (0.01, 0.02, ...); the target
    /// level sweeps 0.01..=0.10.
    S3,
    /// Common study level sweeps 0.01..=0.10 at target level 0.10.
    S4,
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Ok(Scenario::S1),
            "S2" => Ok(Scenario::S2),
            "S3" => Ok(Scenario::S3),
            "S4" => Ok(Scenario::S4),
            other => Err(Error::validation(format!("unknown scenario {other}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::S1 => "S1",
            Scenario::S2 => "S2",
            Scenario::S3 => "S3",
            Scenario::S4 => "S4",
        }
    }
}

/// One point of a scenario sweep.
#[derive(Clone, Debug)]
pub struct GridPoint {
    /// The swept quantity (level or study count), used as the CSV x-value.
    pub value: f64,
    pub l: usize,
    pub alphas: Vec<f64>,
    pub target: f64,
}

/// Configuration of one experiment run.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub replications: usize,
    pub seed: u64,
    /// Method names to run; empty means the experiment's default set.
    pub methods: Vec<String>,
    /// Number of studies for scenarios with fixed L (default 5).
    pub l: usize,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, replications: usize, seed: u64) -> Self {
        ScenarioConfig { scenario, replications, seed, methods: Vec::new(), l: 5 }
    }

    pub fn grid_points(&self) -> Vec<GridPoint> {
        let tenths: Vec<f64> = (1..=10).map(|i| f64::from(i) / 100.0).collect();
        match self.scenario {
            Scenario::S1 => tenths
                .iter()
                .map(|&a| GridPoint { value: a, l: self.l, alphas: vec![a; self.l], target: a })
                .collect(),
            Scenario::S2 => (2..=9)
                .map(|l| GridPoint {
                    value: l as f64,
                    l,
                    alphas: vec![0.05; l],
                    target: 0.05,
                })
                .collect(),
            Scenario::S3 => {
                let alphas: Vec<f64> = (1..=self.l).map(|i| i as f64 / 100.0).collect();
                tenths
                    .iter()
                    .map(|&a| GridPoint {
                        value: a,
                        l: self.l,
                        alphas: alphas.clone(),
                        target: a,
                    })
                    .collect()
            }
            Scenario::S4 => tenths
                .iter()
                .map(|&a| GridPoint { value: a, l: self.l, alphas: vec![a; self.l], target: 0.1 })
                .collect(),
        }
    }
}

/// One (method, grid point) summary.
#[derive(Clone, Debug)]
pub struct ResultRow {
    pub scenario: String,
    pub grid_value: f64,
    pub method: String,
    pub coverage: f64,
    pub coverage_se: f64,
    pub size: f64,
    pub size_se: f64,
    pub reps: usize,
    /// Set when the method's guarantee is documented not to apply here
    /// (the e-mean at tau=1/2 with L*alpha_1 <= target/(1-tau)).
    pub flagged: bool,
}

/// A full experiment: tidy rows, one per (grid point, method).
#[derive(Clone, Debug, Default)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    /// Tidy CSV with the stable schema
    /// `scenario,grid_value,method,coverage,coverage_se,size,size_se,reps`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("scenario,grid_value,method,coverage,coverage_se,size,size_se,reps\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.scenario,
                r.grid_value,
                r.method,
                r.coverage,
                r.coverage_se,
                r.size,
                r.size_se,
                r.reps
            ));
        }
        out
    }
}

/// A merging method as named in experiment output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MethodSpec {
    pub name: &'static str,
    pub aggregator_id: &'static str,
    pub tau: f64,
}

/// Synthetic-statistic mergers available to the experiments.
pub const METHODS: &[MethodSpec] = &[
    MethodSpec { name: "SyP+Fisher", aggregator_id: "fisher", tau: 1.0 },
    MethodSpec { name: "SyP+CCT", aggregator_id: "cct", tau: 1.0 },
    MethodSpec { name: "SyP+Rueger", aggregator_id: "rueger", tau: 1.0 },
    MethodSpec { name: "SyE+AM", aggregator_id: "am-e", tau: 0.5 },
    MethodSpec { name: "SyE+U2", aggregator_id: "u2", tau: 1.0 },
];

pub fn method_by_name(name: &str) -> Result<MethodSpec> {
    METHODS
        .iter()
        .find(|m| m.name.eq_ignore_ascii_case(name))
        .copied()
        .ok_or_else(|| Error::UnknownId(format!("unknown method {name}")))
}

impl MethodSpec {
    /// Build a merge configuration; studies in these experiments are
    /// independent unless `independent` is false (conformal setting).
    pub fn config(&self, l: usize, target: f64, seed: u64, independent: bool) -> Result<MergeConfig> {
        let aggregator = Aggregator::from_id(self.aggregator_id, l)?;
        if aggregator.validity() == Validity::IndependentOnly && !independent {
            return Err(Error::validation(format!(
                "{} is valid only for independent studies",
                self.name
            )));
        }
        let mut config = MergeConfig::new(aggregator, target, seed)?.with_tau(self.tau)?;
        config.independent = independent;
        Ok(config)
    }

    /// Whether the method's documented undercoverage exception applies:
    /// the e-mean at this tau degenerates to the intersection of all study
    /// sets when `L * alpha_1 <= target / (1 - tau)`.
    pub fn exception_applies(&self, l: usize, alpha1: f64, target: f64) -> bool {
        self.aggregator_id == "am-e"
            && self.tau < 1.0
            && l as f64 * alpha1 <= target / (1.0 - self.tau)
    }
}

/// Resolve a method list, defaulting to `defaults` when empty.
pub(crate) fn resolve_methods(requested: &[String], defaults: &[&str]) -> Result<Vec<MethodSpec>> {
    if requested.is_empty() {
        defaults.iter().map(|n| method_by_name(n)).collect()
    } else {
        requested.iter().map(|n| method_by_name(n)).collect()
    }
}

/// Run `f` under the worker pool capped by `SETMERGE_THREADS` (if set).
pub(crate) fn with_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    let cap = std::env::var("SETMERGE_THREADS").ok().and_then(|s| s.parse::<usize>().ok());
    match cap {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("worker pool")
            .install(f),
        _ => f(),
    }
}

/// Parallel map over replication indices with deterministic output order.
pub(crate) fn par_map_reps<T, F>(reps: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    with_pool(|| (0..reps as u64).into_par_iter().map(f).collect())
}

/// Binomial mean and standard error of a hit count.
pub(crate) fn binomial_summary(hits: usize, n: usize) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}
