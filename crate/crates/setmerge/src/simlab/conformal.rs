//! Split-conformal testbed with dependent studies: every study sees the
//! same labeled sample and split, differing only in the fitted regressor,
//! so their intervals are strongly dependent and only dependence-valid
//! mergers apply.

use nalgebra::{DMatrix, DVector};

use crate::merge::merge_continuous;
use crate::numerics::{stream_id, RngStream};
use crate::sets::{CandidateSpace, Interval, StudyInput, UncertaintySet};
use crate::simlab::{
    par_map_reps, resolve_methods, ExperimentResult, ResultRow, ScenarioConfig,
};
use crate::{Error, Result};

const TAG_DATA: u64 = 20;
const TAG_MERGE: u64 = 21;

const DIM: usize = 20;
const ACTIVE: usize = 10;
const N_TRAIN: usize = 100;
const N_CAL: usize = 100;
const RIDGE_LAMBDA: f64 = 1.0;
const KNN_K: usize = 5;

/// The regressor menu; one study per entry.
#[derive(Clone, Copy, Debug)]
enum Regressor {
    Ols,
    Ridge,
    Knn,
    ConstMean,
}

const REGRESSORS: [Regressor; 4] = [
    Regressor::Ols,
    Regressor::Ridge,
    Regressor::Knn,
    Regressor::ConstMean,
];

struct Sample {
    x_train: DMatrix<f64>,
    y_train: DVector<f64>,
    x_cal: DMatrix<f64>,
    y_cal: DVector<f64>,
    x_test: DVector<f64>,
    y_test: f64,
}

fn draw_sample(master: u64, grid: u64, rep: u64) -> Sample {
    let mut rng = RngStream::derive(master, &[TAG_DATA, grid, rep]);
    let mut beta = DVector::zeros(DIM);
    for i in 0..ACTIVE {
        beta[i] = 2.0 * rng.normal();
    }
    let mut draw_row = |x: &mut DMatrix<f64>, y: &mut DVector<f64>, i: usize| {
        for j in 0..DIM {
            x[(i, j)] = rng.normal();
        }
        y[i] = x.row(i).transpose().dot(&beta) + rng.normal();
    };
    let mut x_train = DMatrix::zeros(N_TRAIN, DIM);
    let mut y_train = DVector::zeros(N_TRAIN);
    for i in 0..N_TRAIN {
        draw_row(&mut x_train, &mut y_train, i);
    }
    let mut x_cal = DMatrix::zeros(N_CAL, DIM);
    let mut y_cal = DVector::zeros(N_CAL);
    for i in 0..N_CAL {
        draw_row(&mut x_cal, &mut y_cal, i);
    }
    let x_test = DVector::from_fn(DIM, |_, _| rng.normal());
    let y_test = x_test.dot(&beta) + rng.normal();
    Sample { x_train, y_train, x_cal, y_cal, x_test, y_test }
}

/// A fitted regressor's predictions on the calibration set and test point.
struct Fit {
    cal_pred: DVector<f64>,
    test_pred: f64,
}

fn fit_predict(reg: Regressor, sample: &Sample) -> Result<Fit> {
    match reg {
        Regressor::Ols | Regressor::Ridge => {
            let xt = sample.x_train.transpose();
            let mut gram = &xt * &sample.x_train;
            if matches!(reg, Regressor::Ridge) {
                for i in 0..DIM {
                    gram[(i, i)] += RIDGE_LAMBDA;
                }
            }
            let rhs: DVector<f64> = &xt * &sample.y_train;
            let coef: DVector<f64> = gram
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::validation("singular design matrix"))?;
            Ok(Fit {
                cal_pred: &sample.x_cal * &coef,
                test_pred: sample.x_test.dot(&coef),
            })
        }
        Regressor::Knn => {
            let predict = |x: &DVector<f64>| -> f64 {
                let mut dist: Vec<(f64, usize)> = (0..N_TRAIN)
                    .map(|i| ((sample.x_train.row(i).transpose() - x).norm_squared(), i))
                    .collect();
                dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                dist[..KNN_K].iter().map(|&(_, i)| sample.y_train[i]).sum::<f64>()
                    / KNN_K as f64
            };
            Ok(Fit {
                cal_pred: DVector::from_fn(N_CAL, |i, _| {
                    predict(&sample.x_cal.row(i).transpose())
                }),
                test_pred: predict(&sample.x_test),
            })
        }
        Regressor::ConstMean => {
            let mean = sample.y_train.mean();
            Ok(Fit { cal_pred: DVector::from_element(N_CAL, mean), test_pred: mean })
        }
    }
}

/// Split-conformal half-width: the ceil((1-alpha)(n_cal+1))-th smallest
/// absolute calibration residual.
fn conformal_half_width(fit: &Fit, y_cal: &DVector<f64>, alpha: f64) -> Result<f64> {
    let mut scores: Vec<f64> =
        (0..N_CAL).map(|i| (y_cal[i] - fit.cal_pred[i]).abs()).collect();
    scores.sort_by(|a, b| a.total_cmp(b));
    let rank = ((1.0 - alpha) * (N_CAL as f64 + 1.0)).ceil() as usize;
    if rank > N_CAL {
        return Err(Error::validation(format!(
            "alpha {alpha} too small for {N_CAL} calibration points"
        )));
    }
    Ok(scores[rank - 1])
}

/// Coverage and size of the dependence-valid mergers (plus single-set
/// benchmarks) over split-conformal studies that share one data split.
pub fn run_conformal_dependent(config: &ScenarioConfig) -> Result<ExperimentResult> {
    let methods = resolve_methods(&config.methods, &["SyP+CCT", "SyP+Rueger", "SyE+AM"])?;
    let l = REGRESSORS.len();
    let mut grid_config = config.clone();
    grid_config.l = l;
    let mut rows = Vec::new();
    for (gi, point) in grid_config.grid_points().iter().enumerate() {
        let gi = gi as u64;
        let per_rep: Vec<Result<Vec<(f64, f64)>>> = par_map_reps(config.replications, |rep| {
            let sample = draw_sample(config.seed, gi, rep);
            let mut studies = Vec::with_capacity(l);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for (reg, &alpha) in REGRESSORS.iter().zip(&point.alphas) {
                let fit = fit_predict(*reg, &sample)?;
                let half = conformal_half_width(&fit, &sample.y_cal, alpha)?;
                lo = lo.min(fit.test_pred - half);
                hi = hi.max(fit.test_pred + half);
                studies.push(StudyInput::new(
                    UncertaintySet::Intervals(vec![Interval {
                        lo: fit.test_pred - half,
                        hi: fit.test_pred + half,
                    }]),
                    alpha,
                )?);
            }
            let space = CandidateSpace::continuous(lo - 1.0, hi + 1.0)?;
            let merge_seed = stream_id(&[config.seed, TAG_MERGE, gi, rep]);
            let mut out = Vec::with_capacity(methods.len() + 3);
            for m in &methods {
                let cfg = m.config(l, point.target, merge_seed, false)?;
                let report = merge_continuous(&space, &studies, &cfg)?;
                out.push((
                    f64::from(report.merged.contains_point(sample.y_test)),
                    report.merged.measure(),
                ));
            }
            out.extend(benchmark_outcomes(&studies, sample.y_test));
            Ok(out)
        });
        let per_rep: Vec<Vec<(f64, f64)>> = per_rep.into_iter().collect::<Result<_>>()?;
        let names: Vec<String> = methods
            .iter()
            .map(|m| m.name.to_string())
            .chain(["Max Single".into(), "Min Single".into(), "Mean Single".into()])
            .collect();
        let n = per_rep.len() as f64;
        for (idx, name) in names.iter().enumerate() {
            let coverage = per_rep.iter().map(|r| r[idx].0).sum::<f64>() / n;
            let size = per_rep.iter().map(|r| r[idx].1).sum::<f64>() / n;
            let var = per_rep.iter().map(|r| (r[idx].1 - size).powi(2)).sum::<f64>()
                / (n - 1.0).max(1.0);
            let flagged = methods
                .get(idx)
                .is_some_and(|m| m.exception_applies(l, point.alphas[0], point.target));
            rows.push(ResultRow {
                scenario: config.scenario.name().to_string(),
                grid_value: point.value,
                method: name.clone(),
                coverage,
                coverage_se: (coverage * (1.0 - coverage) / n).sqrt(),
                size,
                size_se: (var / n).sqrt(),
                reps: config.replications,
                flagged,
            });
        }
    }
    Ok(ExperimentResult { rows })
}

fn benchmark_outcomes(studies: &[StudyInput], y_test: f64) -> Vec<(f64, f64)> {
    let sizes: Vec<f64> = studies.iter().map(|s| s.set.measure()).collect();
    let covers: Vec<f64> =
        studies.iter().map(|s| f64::from(s.set.contains_point(y_test))).collect();
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merge::majority_vote;
    use crate::simlab::Scenario;

    #[test]
    fn single_study_conformal_coverage() {
        // Split conformal covers at >= 1 - alpha by exchangeability, for
        // each regressor separately.
        let reps = 400usize;
        let alpha = 0.1;
        let mut hits = [0usize; 4];
        for rep in 0..reps as u64 {
            let sample = draw_sample(99, 0, rep);
            for (si, reg) in REGRESSORS.iter().enumerate() {
                let fit = fit_predict(*reg, &sample).unwrap();
                let half = conformal_half_width(&fit, &sample.y_cal, alpha).unwrap();
                if (sample.y_test - fit.test_pred).abs() <= half {
                    hits[si] += 1;
                }
            }
        }
        for (si, h) in hits.iter().enumerate() {
            let cov = *h as f64 / reps as f64;
            let se = (0.9f64 * 0.1 / reps as f64).sqrt();
            assert!(cov >= 0.9 - 4.0 * se, "regressor {si} coverage {cov}");
        }
    }

    #[test]
    fn am_merge_equals_majority_vote_per_replication() {
        let method = crate::simlab::method_by_name("SyE+AM").unwrap();
        for rep in 0..25u64 {
            let sample = draw_sample(7, 3, rep);
            let alpha = 0.05;
            let mut studies = Vec::new();
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for reg in REGRESSORS {
                let fit = fit_predict(reg, &sample).unwrap();
                let half = conformal_half_width(&fit, &sample.y_cal, alpha).unwrap();
                lo = lo.min(fit.test_pred - half);
                hi = hi.max(fit.test_pred + half);
                studies.push(
                    StudyInput::new(
                        UncertaintySet::Intervals(vec![Interval {
                            lo: fit.test_pred - half,
                            hi: fit.test_pred + half,
                        }]),
                        alpha,
                    )
                    .unwrap(),
                );
            }
            let space = CandidateSpace::continuous(lo - 1.0, hi + 1.0).unwrap();
            let cfg = method.config(4, alpha, 11 + rep, false).unwrap();
            let merged = merge_continuous(&space, &studies, &cfg).unwrap().merged;
            let vote = majority_vote(&space, &studies, 0.5).unwrap();
            assert_eq!(merged, vote, "rep {rep}");
        }
    }

    #[test]
    fn merged_size_between_extremes_on_average() {
        let mut config = ScenarioConfig::new(Scenario::S1, 300, 42);
        config.methods = vec!["SyP+Rueger".into(), "SyE+AM".into()];
        let result = run_conformal_dependent(&config).unwrap();
        for point in [0.05, 0.1] {
            let row = |m: &str| {
                result
                    .rows
                    .iter()
                    .find(|r| r.method == m && (r.grid_value - point).abs() < 1e-12)
                    .unwrap()
            };
            let (max_s, min_s) = (row("Max Single"), row("Min Single"));
            for m in ["SyP+Rueger", "SyE+AM"] {
                let r = row(m);
                assert!(
                    r.size <= max_s.size + 3.0 * (r.size_se + max_s.size_se),
                    "{m} size {} vs max {}",
                    r.size,
                    max_s.size
                );
                assert!(
                    r.size >= min_s.size - 3.0 * (r.size_se + min_s.size_se),
                    "{m} size {} vs min {}",
                    r.size,
                    min_s.size
                );
                let alpha_se = (point * (1.0 - point) / 300.0f64).sqrt();
                assert!(r.coverage >= 1.0 - point - 4.0 * alpha_se, "{m} coverage {}", r.coverage);
            }
        }
    }
}
