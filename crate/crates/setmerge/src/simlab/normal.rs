//! Normal-mean testbed: a fixed target value 0, study sets built from
//! three-sample z-intervals, independent across studies.

use crate::aggregate::fisher_combine;
use crate::merge::merge_continuous;
use crate::numerics::{std_normal_cdf, std_normal_quantile, stream_id, RngStream};
use crate::sets::{build_partition, CandidateSpace, Interval, Point, StudyInput, UncertaintySet};
use crate::simlab::{
    binomial_summary, par_map_reps, resolve_methods, ExperimentResult, ResultRow, Scenario,
    ScenarioConfig, GridPoint,
};
use crate::Result;

const TAG_DATA: u64 = 10;
const TAG_MERGE: u64 = 11;
const TAG_SENS: u64 = 12;

const SAMPLES_PER_STUDY: usize = 3;

/// Half-width of a study's two-sided interval at level `alpha`.
pub fn study_half_width(alpha: f64) -> Result<f64> {
    Ok(std_normal_quantile(1.0 - alpha / 2.0)? / (SAMPLES_PER_STUDY as f64).sqrt())
}

/// Exact mean size of one study's interval: both endpoints are a fixed
/// half-width from the sample mean.
pub fn single_study_mean_size(alpha: f64) -> Result<f64> {
    Ok(2.0 * study_half_width(alpha)?)
}

/// One replication's raw material: study means, sets, and candidate space.
struct Replication {
    xbars: Vec<f64>,
    studies: Vec<StudyInput>,
    space: CandidateSpace,
}

fn draw_replication(master: u64, grid: u64, rep: u64, alphas: &[f64]) -> Result<Replication> {
    let mut rng = RngStream::derive(master, &[TAG_DATA, grid, rep]);
    let mut xbars = Vec::with_capacity(alphas.len());
    let mut studies = Vec::with_capacity(alphas.len());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &alpha in alphas {
        let xbar =
            (0..SAMPLES_PER_STUDY).map(|_| rng.normal()).sum::<f64>() / SAMPLES_PER_STUDY as f64;
        let half = study_half_width(alpha)?;
        lo = lo.min(xbar - half);
        hi = hi.max(xbar + half);
        xbars.push(xbar);
        studies.push(StudyInput::new(
            UncertaintySet::Intervals(vec![Interval { lo: xbar - half, hi: xbar + half }]),
            alpha,
        )?);
    }
    Ok(Replication { xbars, studies, space: CandidateSpace::continuous(lo - 1.0, hi + 1.0)? })
}

/// Coverage and size of each configured merger plus the single-set
/// benchmarks, over the scenario's grid.
pub fn run_normal_mean(config: &ScenarioConfig) -> Result<ExperimentResult> {
    let methods = resolve_methods(
        &config.methods,
        &["SyP+Fisher", "SyP+CCT", "SyP+Rueger", "SyE+AM", "SyE+U2"],
    )?;
    let mut rows = Vec::new();
    for (gi, point) in config.grid_points().iter().enumerate() {
        let gi = gi as u64;
        // Per replication: one (coverage, size) pair per method, then the
        // max/min/mean single-set benchmarks.
        let per_rep: Vec<Result<Vec<(f64, f64)>>> = par_map_reps(config.replications, |rep| {
            let data = draw_replication(config.seed, gi, rep, &point.alphas)?;
            let merge_seed = stream_id(&[config.seed, TAG_MERGE, gi, rep]);
            let mut out = Vec::with_capacity(methods.len() + 3);
            for m in &methods {
                let cfg = m.config(point.l, point.target, merge_seed, true)?;
                let report = merge_continuous(&data.space, &data.studies, &cfg)?;
                out.push((
                    f64::from(report.merged.contains_point(0.0)),
                    report.merged.measure(),
                ));
            }
            out.extend(single_set_benchmarks(&data.studies));
            Ok(out)
        });
        let per_rep: Vec<Vec<(f64, f64)>> = per_rep.into_iter().collect::<Result<_>>()?;
        let names: Vec<String> = methods
            .iter()
            .map(|m| m.name.to_string())
            .chain(["Max Single".into(), "Min Single".into(), "Mean Single".into()])
            .collect();
        for (idx, name) in names.iter().enumerate() {
            let flagged = methods
                .get(idx)
                .is_some_and(|m| m.exception_applies(point.l, point.alphas[0], point.target));
            rows.push(summary_row(
                config.scenario,
                point.value,
                name,
                per_rep.iter().map(|r| r[idx]),
                config.replications,
                flagged,
            ));
        }
    }
    Ok(ExperimentResult { rows })
}

/// (coverage, size) of the largest set, the smallest set, and the
/// per-study averages.
fn single_set_benchmarks(studies: &[StudyInput]) -> Vec<(f64, f64)> {
    let sizes: Vec<f64> = studies.iter().map(|s| s.set.measure()).collect();
    let covers: Vec<f64> = studies.iter().map(|s| f64::from(s.set.contains_point(0.0))).collect();
    let (mut max_i, mut min_i) = (0usize, 0usize);
    for i in 1..studies.len() {
        if sizes[i] > sizes[max_i] {
            max_i = i;
        }
        if sizes[i] < sizes[min_i] {
            min_i = i;
        }
    }
    let n = studies.len() as f64;
    vec![
        (covers[max_i], sizes[max_i]),
        (covers[min_i], sizes[min_i]),
        (covers.iter().sum::<f64>() / n, sizes.iter().sum::<f64>() / n),
    ]
}

fn summary_row(
    scenario: Scenario,
    grid_value: f64,
    method: &str,
    outcomes: impl Iterator<Item = (f64, f64)>,
    reps: usize,
    flagged: bool,
) -> ResultRow {
    let pairs: Vec<(f64, f64)> = outcomes.collect();
    let n = pairs.len() as f64;
    let coverage = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let coverage_se = (coverage * (1.0 - coverage) / n).sqrt();
    let size = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let var = pairs.iter().map(|p| (p.1 - size).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    ResultRow {
        scenario: scenario.name().to_string(),
        grid_value,
        method: method.to_string(),
        coverage,
        coverage_se,
        size,
        size_se: (var / n).sqrt(),
        reps,
        flagged,
    }
}

/// Benchmark merger with the closed-form per-study p-value
/// `2 Phi(-sqrt(n) |y - xbar_l|)`, evaluated at each cell representative
/// and combined with Fisher's rule; shares the data streams of
/// [`run_normal_mean`], so results are directly comparable per seed.
pub fn run_oracle_p_benchmark(config: &ScenarioConfig) -> Result<ExperimentResult> {
    let mut rows = Vec::new();
    let sqrt_n = (SAMPLES_PER_STUDY as f64).sqrt();
    for (gi, point) in config.grid_points().iter().enumerate() {
        let gi = gi as u64;
        let per_rep: Vec<Result<(f64, f64)>> = par_map_reps(config.replications, |rep| {
            let data = draw_replication(config.seed, gi, rep, &point.alphas)?;
            let cells = build_partition(&data.space, &data.studies)?;
            let mut kept = Vec::new();
            for cell in &cells {
                let y = match cell.representative {
                    Point::Real(y) => y,
                    Point::Label(_) => unreachable!("continuous space"),
                };
                let p: Vec<f64> = data
                    .xbars
                    .iter()
                    .map(|&xbar| {
                        (2.0 * std_normal_cdf(-sqrt_n * (y - xbar).abs()))
                            .clamp(1e-300, 1.0 - 1e-16)
                    })
                    .collect();
                if fisher_combine(&p)? > point.target {
                    if let UncertaintySet::Intervals(v) = &cell.region {
                        kept.extend_from_slice(v);
                    }
                }
            }
            let merged = crate::sets::canonicalize(&kept);
            Ok((f64::from(merged.contains_point(0.0)), merged.measure()))
        });
        let per_rep: Vec<(f64, f64)> = per_rep.into_iter().collect::<Result<_>>()?;
        rows.push(summary_row(
            config.scenario,
            point.value,
            "OrP+Fisher",
            per_rep.into_iter(),
            config.replications,
            false,
        ));
    }
    Ok(ExperimentResult { rows })
}

/// One grid point of the sensitivity study: quantiles of the merged size
/// under repeated synthetic draws for the same study sets.
#[derive(Clone, Debug)]
pub struct SensitivityRow {
    pub scenario: String,
    pub grid_value: f64,
    pub min: f64,
    pub p2_5: f64,
    pub median: f64,
    pub p97_5: f64,
    pub max: f64,
    pub mean: f64,
    /// Mean size of a single study's set, for comparison.
    pub single_mean: f64,
    pub inner: usize,
    pub outer: usize,
}

#[derive(Clone, Debug, Default)]
pub struct SensitivityResult {
    pub rows: Vec<SensitivityRow>,
}

impl SensitivityResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "scenario,grid_value,min,p2.5,median,p97.5,max,mean,single_mean,inner,outer\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.scenario,
                r.grid_value,
                r.min,
                r.p2_5,
                r.median,
                r.p97_5,
                r.max,
                r.mean,
                r.single_mean,
                r.inner,
                r.outer
            ));
        }
        out
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// For fixed study sets, rerun the Fisher merge `inner` times with fresh
/// synthetic draws and summarize the spread of merged sizes; averaged over
/// `config.replications` outer draws of the study sets.
pub fn run_sensitivity(config: &ScenarioConfig, inner: usize) -> Result<SensitivityResult> {
    let method = crate::simlab::method_by_name("SyP+Fisher")?;
    let mut rows = Vec::new();
    for (gi, point) in config.grid_points().iter().enumerate() {
        let gi = gi as u64;
        // Per outer rep: (min, p2.5, median, p97.5, max, mean, single mean).
        let per_rep: Vec<Result<[f64; 7]>> = par_map_reps(config.replications, |rep| {
            let data = draw_replication(config.seed, gi, rep, &point.alphas)?;
            let mut sizes = Vec::with_capacity(inner);
            for j in 0..inner as u64 {
                let seed = stream_id(&[config.seed, TAG_SENS, gi, rep, j]);
                let cfg = method.config(point.l, point.target, seed, true)?;
                sizes.push(merge_continuous(&data.space, &data.studies, &cfg)?.merged.measure());
            }
            let mean = sizes.iter().sum::<f64>() / sizes.len() as f64;
            sizes.sort_by(|a, b| a.total_cmp(b));
            let single =
                data.studies.iter().map(|s| s.set.measure()).sum::<f64>() / point.l as f64;
            Ok([
                sizes[0],
                quantile(&sizes, 0.025),
                quantile(&sizes, 0.5),
                quantile(&sizes, 0.975),
                sizes[sizes.len() - 1],
                mean,
                single,
            ])
        });
        let per_rep: Vec<[f64; 7]> = per_rep.into_iter().collect::<Result<_>>()?;
        let n = per_rep.len() as f64;
        let avg = |i: usize| per_rep.iter().map(|r| r[i]).sum::<f64>() / n;
        rows.push(SensitivityRow {
            scenario: config.scenario.name().to_string(),
            grid_value: point.value,
            min: avg(0),
            p2_5: avg(1),
            median: avg(2),
            p97_5: avg(3),
            max: avg(4),
            mean: avg(5),
            single_mean: avg(6),
            inner,
            outer: config.replications,
        });
    }
    Ok(SensitivityResult { rows })
}

/// One (study count, probe) estimate in the size-trend study.
#[derive(Clone, Debug)]
pub struct TrendRow {
    pub l: usize,
    pub method: String,
    pub inclusion: f64,
    pub se: f64,
}

/// Inclusion probabilities of off-target candidates as the number of
/// studies grows: the p-merge should squeeze out any candidate whose
/// per-study miscoverage exceeds the study level, while the order-2
/// e-merge only does so above the larger threshold `alpha (tau/alpha')^(1/2)`
/// — a candidate below that threshold keeps a stable inclusion probability.
#[derive(Clone, Debug)]
pub struct TrendReport {
    pub rows: Vec<TrendRow>,
    /// Off-target candidate (one unit from the truth) and its per-study
    /// miscoverage.
    pub theta_off: f64,
    pub off_miscover: f64,
    /// Candidate with miscoverage below the order-2 e-merge threshold.
    pub theta_probe: f64,
    pub probe_miscover: f64,
    pub u2_threshold: f64,
    /// Least-squares slope of log inclusion vs. L for the p-merge at the
    /// off-target candidate.
    pub fisher_log_slope: f64,
}

impl TrendReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("scenario,grid_value,method,coverage,coverage_se,size,size_se,reps\n");
        for r in &self.rows {
            out.push_str(&format!(
                "TREND,{},{},{},{},0,0,0\n",
                r.l, r.method, r.inclusion, r.se
            ));
        }
        out
    }
}

/// Per-study miscoverage of a fixed candidate `theta` when the truth is 0.
fn candidate_miscover(theta: f64, alpha: f64) -> Result<f64> {
    let z = std_normal_quantile(1.0 - alpha / 2.0)?;
    let s = (SAMPLES_PER_STUDY as f64).sqrt();
    Ok(std_normal_cdf(s * theta - z) + std_normal_cdf(-s * theta - z))
}

fn solve_miscover(target: f64, alpha: f64) -> Result<f64> {
    // candidate_miscover is increasing in |theta| with minimum alpha at 0.
    let (mut lo, mut hi) = (0.0f64, 10.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if candidate_miscover(mid, alpha)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Estimate inclusion probabilities over L in 2..=9 at the study level
/// 0.05 (the L-sweep setting) for the p-merge and the order-2 e-merge.
pub fn run_size_trend(config: &ScenarioConfig) -> Result<TrendReport> {
    let alpha = 0.05;
    let theta_off = 1.0;
    let off_miscover = candidate_miscover(theta_off, alpha)?;
    let u2_threshold = alpha * (1.0 / alpha).sqrt();
    // A probe comfortably inside the e-merge's keep region but outside the
    // p-merge's: miscoverage 0.15 is between alpha and the threshold.
    let probe_miscover = 0.15;
    let theta_probe = solve_miscover(probe_miscover, alpha)?;

    let fisher = crate::simlab::method_by_name("SyP+Fisher")?;
    let u2 = crate::simlab::method_by_name("SyE+U2")?;
    let mut rows = Vec::new();
    let mut fisher_logs = Vec::new();
    for l in 2..=9usize {
        let gi = l as u64;
        let point =
            GridPoint { value: l as f64, l, alphas: vec![alpha; l], target: alpha };
        let per_rep: Vec<Result<[bool; 3]>> = par_map_reps(config.replications, |rep| {
            let data = draw_replication(config.seed, gi, rep, &point.alphas)?;
            let merge_seed = stream_id(&[config.seed, TAG_MERGE, gi, rep]);
            let f_cfg = fisher.config(l, point.target, merge_seed, true)?;
            let f_merged = merge_continuous(&data.space, &data.studies, &f_cfg)?.merged;
            let u_cfg = u2.config(l, point.target, merge_seed, true)?;
            let u_merged = merge_continuous(&data.space, &data.studies, &u_cfg)?.merged;
            Ok([
                f_merged.contains_point(theta_off),
                u_merged.contains_point(theta_off),
                u_merged.contains_point(theta_probe),
            ])
        });
        let per_rep: Vec<[bool; 3]> = per_rep.into_iter().collect::<Result<_>>()?;
        let n = per_rep.len();
        for (idx, name) in
            [(0, "SyP+Fisher@off"), (1, "SyE+U2@off"), (2, "SyE+U2@probe")]
        {
            let hits = per_rep.iter().filter(|r| r[idx]).count();
            let (p, se) = binomial_summary(hits, n);
            if idx == 0 {
                fisher_logs.push((l as f64, p.max(1.0 / n as f64).ln()));
            }
            rows.push(TrendRow { l, method: name.to_string(), inclusion: p, se });
        }
    }
    // Least-squares slope of log inclusion vs. L.
    let m = fisher_logs.len() as f64;
    let mean_x = fisher_logs.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = fisher_logs.iter().map(|p| p.1).sum::<f64>() / m;
    let num: f64 = fisher_logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let den: f64 = fisher_logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    Ok(TrendReport {
        rows,
        theta_off,
        off_miscover,
        theta_probe,
        probe_miscover,
        u2_threshold,
        fisher_log_slope: num / den,
    })
}
