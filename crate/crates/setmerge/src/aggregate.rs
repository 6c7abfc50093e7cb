//! Aggregation rules for synthetic p-values and e-values.
//!
//! P-rules either have a closed form (Fisher, Lipták, CCT, Rüger, arithmetic
//! mean calibrator) or are evaluated generically: score-based combines use a
//! Monte Carlo null quantile, calibrator-based combines invert the rejection
//! region over the target level. E-rules are the U-statistic merges of order
//! `k`. Each rule carries a validity tag telling which dependence regime its
//! guarantee holds under.

use crate::numerics::{cauchy_cdf, chi2_cdf, std_normal_cdf, std_normal_quantile, RngStream};
use crate::{Error, Result};

/// Dependence regime under which a rule's guarantee holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Validity {
    IndependentOnly,
    ArbitraryDependence,
    /// Works well empirically but carries no guarantee for synthetic inputs.
    Heuristic,
}

/// Which kind of synthetic statistic a rule consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StatKind {
    PValue,
    EValue,
}

/// Registered score functions for the generic independent combine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreFn {
    /// S(t) = -2 log t (Fisher's score).
    Neg2Log,
    /// S(t) = -Phi^{-1}(t) (Stouffer/Lipták score).
    NegPhiInv,
}

impl ScoreFn {
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "neg2log" => Ok(ScoreFn::Neg2Log),
            "negphiinv" => Ok(ScoreFn::NegPhiInv),
            _ => Err(Error::UnknownId(format!("score function {id:?}"))),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ScoreFn::Neg2Log => -2.0 * t.ln(),
            ScoreFn::NegPhiInv => -std_normal_quantile(t).expect("t in (0,1)"),
        }
    }
}

/// Registered p-to-e calibrators for the dependent combine.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Calibrator {
    /// f(p) = 2 - 2p on (0,1), zero beyond, infinite at 0.
    Am,
    /// f(p) = (L/k) on (0, k/L), zero beyond, infinite at 0.
    RuegerStep { k: usize, l: usize },
}

impl Calibrator {
    pub fn from_id(id: &str, l: usize) -> Result<Self> {
        match id {
            "am" => Ok(Calibrator::Am),
            "rueger" => Ok(Calibrator::RuegerStep { k: 1, l }),
            _ => Err(Error::UnknownId(format!("calibrator {id:?}"))),
        }
    }

    pub fn eval(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return f64::INFINITY;
        }
        match self {
            Calibrator::Am => (2.0 - 2.0 * p).max(0.0),
            Calibrator::RuegerStep { k, l } => {
                let ratio = *l as f64 / *k as f64;
                if p < 1.0 / ratio {
                    ratio
                } else {
                    0.0
                }
            }
        }
    }

    /// Numerical check of the calibrator property `int_0^1 f <= 1`.
    ///
    /// Midpoint rule at two resolutions; the observed grid difference is
    /// added to the tolerance so step discontinuities are not flagged.
    pub fn validate_l1(&self) -> Result<()> {
        let integrate = |n: usize| -> f64 {
            (0..n).map(|i| self.eval((i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64
        };
        let n = 1usize << 19;
        let fine = integrate(n);
        // Midpoint-rule error: each jump of height up to sup f contributes
        // at most sup f / n; our calibrators have at most a few jumps.
        let sup = self.eval(0.5 / n as f64).min(1e12);
        if fine - 1.0 > 1e-6 + 4.0 * sup / n as f64 {
            return Err(Error::validation(format!(
                "L1 norm of calibrator on [0,1] is {fine:.9}, exceeds 1"
            )));
        }
        Ok(())
    }
}

/// A tagged aggregation rule.
#[derive(Clone, Debug)]
pub enum Rule {
    Fisher,
    Liptak { weights: Vec<f64> },
    Cct,
    Rueger { k: usize },
    GenericS { score: ScoreFn, draws: usize },
    AmCalibrator,
    GenericCalibrator { calibrator: Calibrator, weights: Vec<f64> },
    AmE,
    Uke { k: usize },
}

#[derive(Clone, Debug)]
pub struct Aggregator {
    pub rule: Rule,
}

/// Default Monte Carlo sample size for the generic score combine.
pub const DEFAULT_MC_DRAWS: usize = 100_000;

impl Aggregator {
    /// Look up a rule by its registry id. `l` is the number of studies
    /// (needed by weight defaults and the Rüger calibrator).
    pub fn from_id(id: &str, l: usize) -> Result<Self> {
        let rule = match id {
            "fisher" => Rule::Fisher,
            "liptak" => Rule::Liptak { weights: vec![1.0; l] },
            "cct" => Rule::Cct,
            "rueger" => Rule::Rueger { k: 1 },
            "am" => Rule::AmCalibrator,
            "neg2log" | "negphiinv" => Rule::GenericS {
                score: ScoreFn::from_id(id)?,
                draws: DEFAULT_MC_DRAWS,
            },
            "am-e" => Rule::AmE,
            "u2" => Rule::Uke { k: 2 },
            _ => return Err(Error::UnknownId(format!("aggregation method {id:?}"))),
        };
        Ok(Aggregator { rule })
    }

    pub fn validity(&self) -> Validity {
        match &self.rule {
            Rule::Fisher | Rule::Liptak { .. } | Rule::GenericS { .. } => Validity::IndependentOnly,
            Rule::Uke { k } if *k >= 2 => Validity::IndependentOnly,
            Rule::Cct => Validity::Heuristic,
            _ => Validity::ArbitraryDependence,
        }
    }

    pub fn stat_kind(&self) -> StatKind {
        match &self.rule {
            Rule::AmE | Rule::Uke { .. } => StatKind::EValue,
            _ => StatKind::PValue,
        }
    }

    /// Aggregate one vector of per-study statistics. `rng` is consumed only
    /// by the Monte Carlo score combine.
    pub fn combine(&self, stats: &[f64], rng: &mut RngStream) -> Result<f64> {
        match &self.rule {
            Rule::Fisher => fisher_combine(stats),
            Rule::Liptak { weights } => liptak_combine(stats, weights),
            Rule::Cct => cct_combine(stats),
            Rule::Rueger { k } => rueger_combine(stats, *k),
            Rule::GenericS { score, draws } => generic_s_combine(stats, *score, *draws, rng),
            Rule::AmCalibrator => am_calibrator_combine(stats),
            Rule::GenericCalibrator { calibrator, weights } => {
                generic_calibrator_combine(stats, *calibrator, weights)
            }
            Rule::AmE => e_merge_uk(stats, 1),
            Rule::Uke { k } => e_merge_uk(stats, *k),
        }
    }
}

fn check_open_unit(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::domain("cannot aggregate an empty p-value vector"));
    }
    for &x in p {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::domain(format!("p-values must lie in (0,1), got {x}")));
        }
    }
    Ok(())
}

/// Fisher's combination: 1 - F_{chi2, 2L}(-2 sum log p).
pub fn fisher_combine(p: &[f64]) -> Result<f64> {
    check_open_unit(p)?;
    let stat = -2.0 * p.iter().map(|x| x.ln()).sum::<f64>();
    Ok(1.0 - chi2_cdf(stat, 2 * p.len() as u32)?)
}

/// Lipták's weighted normal combination.
pub fn liptak_combine(p: &[f64], weights: &[f64]) -> Result<f64> {
    check_open_unit(p)?;
    if weights.len() != p.len() {
        return Err(Error::domain("weights length must match p-values"));
    }
    if weights.iter().any(|&w| w <= 0.0) {
        return Err(Error::domain("Lipták weights must be positive"));
    }
    let num: f64 = p
        .iter()
        .zip(weights)
        .map(|(&x, &w)| Ok(w * std_normal_quantile(x)?))
        .sum::<Result<f64>>()?;
    let denom = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    Ok(std_normal_cdf(num / denom))
}

/// Cauchy combination test. Heuristic: no guarantee for synthetic inputs.
pub fn cct_combine(p: &[f64]) -> Result<f64> {
    check_open_unit(p)?;
    let l = p.len() as f64;
    let stat = p
        .iter()
        .map(|&x| ((0.5 - x) * std::f64::consts::PI).tan())
        .sum::<f64>()
        / l;
    Ok(1.0 - cauchy_cdf(stat))
}

/// Rüger's combination: (L/k) times the k-th smallest p-value, capped at 1.
pub fn rueger_combine(p: &[f64], k: usize) -> Result<f64> {
    check_open_unit(p)?;
    if k == 0 || k > p.len() {
        return Err(Error::domain(format!("k must be in [1, {}], got {k}", p.len())));
    }
    let mut sorted = p.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((p.len() as f64 / k as f64 * sorted[k - 1]).min(1.0))
}

/// Arithmetic-mean calibrator combination: the smallest level `a` with
/// `mean_l max(0, 2 - 2 p_l / a) >= 1`, capped at 1.
///
/// The left side is continuous and nondecreasing in `a` and piecewise
/// rational between the sorted inputs, so the exact solution comes from a
/// prefix scan: with `j` smallest inputs active and prefix sum `s_j`, the
/// segment solution is `2 s_j / (2j - L)`, accepted when it does not pass
/// the next input. (The sum `2 mean(p)` is the familiar upper bound, exact
/// whenever no input gets clamped.)
pub fn am_calibrator_combine(p: &[f64]) -> Result<f64> {
    check_open_unit(p)?;
    let l = p.len();
    let mut sorted = p.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut prefix = 0.0f64;
    for (j, &x) in sorted.iter().enumerate() {
        let active = j + 1;
        prefix += x;
        if 2 * active > l {
            let a = 2.0 * prefix / (2 * active - l) as f64;
            let next = sorted.get(active).copied().unwrap_or(f64::INFINITY);
            if a <= next {
                return Ok(a.min(1.0));
            }
        }
    }
    Ok(1.0)
}

/// Generic score-based combine under independence.
///
/// Estimates P(sum S(U_l) >= sum S(p_l)) with `draws` Monte Carlo uniform
/// vectors, using the add-one estimator `(1 + #exceed) / (draws + 1)` so a
/// finite sample is never anti-conservative.
pub fn generic_s_combine(
    p: &[f64],
    score: ScoreFn,
    draws: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    check_open_unit(p)?;
    if draws < 10_000 {
        return Err(Error::domain("generic_s_combine requires at least 10^4 draws"));
    }
    let observed: f64 = p.iter().map(|&x| score.eval(x)).sum();
    let l = p.len();
    let mut exceed = 0usize;
    for _ in 0..draws {
        let total: f64 = (0..l).map(|_| score.eval(rng.unit_open())).sum();
        if total >= observed {
            exceed += 1;
        }
    }
    Ok((1 + exceed) as f64 / (draws + 1) as f64)
}

fn check_weights(weights: &[f64], l: usize) -> Result<()> {
    if weights.len() != l {
        return Err(Error::domain("weights length must match p-values"));
    }
    if weights.iter().any(|&w| w < 0.0) {
        return Err(Error::domain("calibrator weights must be nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("calibrator weights must sum to 1, got {total}")));
    }
    Ok(())
}

/// Generic calibrator combine under arbitrary dependence: the smallest
/// level `a` with `sum_l w_l f(p_l / a) >= 1`, or 1 if none exists.
///
/// Step calibrators are solved exactly at their jump points; continuous
/// calibrators by bisection (the left side is nondecreasing in `a`).
pub fn generic_calibrator_combine(
    p: &[f64],
    calibrator: Calibrator,
    weights: &[f64],
) -> Result<f64> {
    check_open_unit(p)?;
    check_weights(weights, p.len())?;
    calibrator.validate_l1()?;

    if let Calibrator::RuegerStep { k, l } = calibrator {
        // sum_l w_l f(p_l/a) jumps at a = p_l * L / k; pick the first jump
        // that pushes the weighted sum past 1.
        let ratio = l as f64 / k as f64;
        let mut jumps: Vec<(f64, f64)> =
            p.iter().zip(weights).map(|(&x, &w)| (x * ratio, w)).collect();
        jumps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut acc = 0.0;
        for (at, w) in jumps {
            acc += w * ratio;
            if acc >= 1.0 - 1e-12 {
                return Ok(at.min(1.0));
            }
        }
        return Ok(1.0);
    }

    let level_sum = |a: f64| -> f64 {
        p.iter().zip(weights).map(|(&x, &w)| w * calibrator.eval(x / a)).sum()
    };
    if level_sum(1.0 - 1e-12) < 1.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (1e-15, 1.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if level_sum(mid) >= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// U-statistic e-value merge of order `k`: the k-th elementary symmetric
/// polynomial of the e-values divided by C(L, k), via the O(L*k) recurrence.
pub fn e_merge_uk(e: &[f64], k: usize) -> Result<f64> {
    if e.is_empty() {
        return Err(Error::domain("cannot aggregate an empty e-value vector"));
    }
    if k == 0 || k > e.len() {
        return Err(Error::domain(format!("k must be in [1, {}], got {k}", e.len())));
    }
    for &x in e {
        if x.is_nan() || x < 0.0 {
            return Err(Error::domain(format!("e-values must be nonnegative, got {x}")));
        }
    }
    let l = e.len();
    // esp[j] = elementary symmetric polynomial of order j.
    let mut esp = vec![0.0f64; k + 1];
    esp[0] = 1.0;
    for &x in e {
        for j in (1..=k).rev() {
            esp[j] += esp[j - 1] * x;
        }
    }
    let mut binom = 1.0f64;
    for j in 0..k {
        binom = binom * (l - j) as f64 / (j + 1) as f64;
    }
    Ok(esp[k] / binom)
}

/// Calibrators with a closed-form asymptotic exclusion threshold.
#[derive(Clone, Copy, Debug)]
pub enum GammaCalibrator {
    Am,
    Rueger { k: usize, l: usize },
}

/// Asymptotic exclusion diagnostic for the dependent calibrator merge.
///
/// Candidates with `gamma_threshold(..) > 1` are excluded from the merged
/// set asymptotically in the number of studies. Diagnostic only.
pub fn gamma_threshold(
    y_miscover: f64,
    alpha: f64,
    alpha_prime: f64,
    calibrator: GammaCalibrator,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < alpha_prime && alpha_prime < 1.0) {
        return Err(Error::domain(format!(
            "need 0 < alpha < alpha_prime < 1, got {alpha}, {alpha_prime}"
        )));
    }
    if !(0.0..=1.0).contains(&y_miscover) {
        return Err(Error::domain(format!("miscoverage must be in [0,1], got {y_miscover}")));
    }
    let factor = match calibrator {
        GammaCalibrator::Am => {
            let om = 1.0 - alpha;
            let omp = 1.0 - alpha_prime;
            (om - omp * omp) / (alpha_prime * om)
        }
        GammaCalibrator::Rueger { k, l } => {
            if k == 0 || k > l {
                return Err(Error::domain("Rueger gamma requires 1 <= k <= L"));
            }
            let ratio = l as f64 / k as f64;
            if alpha / alpha_prime < 1.0 / ratio {
                (ratio - alpha_prime) / (1.0 - alpha)
            } else {
                alpha_prime / alpha
            }
        }
    };
    Ok(factor * (y_miscover - alpha) + alpha_prime)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fisher_examples() {
        let got = fisher_combine(&[0.5, 0.5]).unwrap();
        // 1 - F_{chi2,4}(2.7726) = exp(-x/2)(1 + x/2) at x = -4 ln 0.5.
        let x = -4.0 * 0.5f64.ln();
        let exact = (-x / 2.0).exp() * (1.0 + x / 2.0);
        assert!((got - exact).abs() < 1e-12);
        assert!((got - 0.5966).abs() < 1e-4);
        assert!(fisher_combine(&[1.0 - 1e-12; 3]).unwrap() > 1.0 - 1e-9);
        assert!(fisher_combine(&[0.01, 0.01, 0.01]).unwrap() < 1e-3);
        assert!(fisher_combine(&[0.5, 0.0]).is_err());
    }

    #[test]
    fn fisher_matches_mc_quantile() {
        // Cross-check the closed form against the MC route on a hard input.
        let p = [0.01, 0.01, 0.01];
        let closed = fisher_combine(&p).unwrap();
        let mut rng = RngStream::new(5, 1);
        let mc = generic_s_combine(&p, ScoreFn::Neg2Log, 1_000_000, &mut rng).unwrap();
        let se = (closed * (1.0 - closed) / 1e6).sqrt() + 2e-6;
        assert!((mc - closed).abs() < 4.0 * se, "closed {closed} mc {mc}");
    }

    #[test]
    fn liptak_examples() {
        assert!((liptak_combine(&[0.5, 0.5], &[1.0, 1.0]).unwrap() - 0.5).abs() < 1e-12);
        let got = liptak_combine(&[0.0228, 0.0228], &[1.0, 1.0]).unwrap();
        assert!((got - 0.00234).abs() < 5e-5, "got {got}");
        assert!((liptak_combine(&[0.3], &[1.0]).unwrap() - 0.3).abs() < 1e-10);
    }

    #[test]
    fn cct_examples() {
        assert!((cct_combine(&[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-12);
        assert!((cct_combine(&[0.25, 0.75]).unwrap() - 0.5).abs() < 1e-12);
        assert!((cct_combine(&[0.01, 0.5, 0.99]).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn rueger_examples() {
        assert!((rueger_combine(&[0.2, 0.5, 0.7], 1).unwrap() - 0.6).abs() < 1e-12);
        assert!((rueger_combine(&[0.2, 0.5, 0.7], 2).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(rueger_combine(&[0.9, 0.9], 1).unwrap(), 1.0);
        assert!(rueger_combine(&[0.5], 2).is_err());
    }

    #[test]
    fn am_examples() {
        assert_eq!(am_calibrator_combine(&[0.5, 0.5]).unwrap(), 1.0);
        assert!((am_calibrator_combine(&[0.25, 0.25]).unwrap() - 0.5).abs() < 1e-12);
        // With two inputs nothing clamps: the solution is 2 * mean.
        assert!((am_calibrator_combine(&[0.1, 0.2]).unwrap() - 0.3).abs() < 1e-12);
        // A large outlier is clamped away: the two small inputs alone push
        // the calibrator sum past 1 at a = 2(0.01 + 0.01) / (4 - 3).
        assert!((am_calibrator_combine(&[0.01, 0.01, 0.98]).unwrap() - 0.04).abs() < 1e-12);
        // Single input: 2 - 2(0.25/a) = 1 at a = 0.5.
        assert!((am_calibrator_combine(&[0.25]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn generic_s_reproduces_closed_forms() {
        let mut rng = RngStream::new(11, 0);
        for trial in 0..30u64 {
            let mut input_rng = RngStream::new(100 + trial, 0);
            let l = 2 + (trial % 3) as usize;
            let p: Vec<f64> = (0..l).map(|_| input_rng.unit_open()).collect();
            let fisher = fisher_combine(&p).unwrap();
            let mc = generic_s_combine(&p, ScoreFn::Neg2Log, 100_000, &mut rng).unwrap();
            let se = (fisher * (1.0 - fisher) / 1e5).sqrt().max(1e-5);
            assert!((mc - fisher).abs() < 5.0 * se, "fisher {fisher} mc {mc}");

            let liptak = liptak_combine(&p, &vec![1.0; l]).unwrap();
            let mc = generic_s_combine(&p, ScoreFn::NegPhiInv, 100_000, &mut rng).unwrap();
            let se = (liptak * (1.0 - liptak) / 1e5).sqrt().max(1e-5);
            assert!((mc - liptak).abs() < 5.0 * se, "liptak {liptak} mc {mc}");
        }
    }

    #[test]
    fn generic_calibrator_matches_am_closed_form() {
        // Single study: 2 - 2(0.25/a) = 1 solves to a = 0.5.
        let got = generic_calibrator_combine(&[0.25], Calibrator::Am, &[1.0]).unwrap();
        assert!((got - 0.5).abs() < 1e-8, "got {got}");
    }

    #[test]
    fn generic_calibrator_oracle_match() {
        let mut rng = RngStream::new(3, 9);
        for _ in 0..100 {
            let l = 2 + (rng.unit_open() * 4.0) as usize;
            let p: Vec<f64> = (0..l).map(|_| rng.unit_open()).collect();
            let w = vec![1.0 / l as f64; l];

            let am = generic_calibrator_combine(&p, Calibrator::Am, &w).unwrap();
            let closed = am_calibrator_combine(&p).unwrap();
            assert!((am - closed).abs() < 1e-8, "am {am} closed {closed}");

            let k = 1 + (rng.unit_open() * l as f64) as usize;
            let rg =
                generic_calibrator_combine(&p, Calibrator::RuegerStep { k, l }, &w).unwrap();
            let closed = rueger_combine(&p, k).unwrap();
            assert!((rg - closed).abs() < 1e-8, "rueger {rg} closed {closed}");
        }
    }

    #[test]
    fn calibrator_l1_validation() {
        assert!(Calibrator::Am.validate_l1().is_ok());
        assert!(Calibrator::RuegerStep { k: 1, l: 7 }.validate_l1().is_ok());
        assert!(Calibrator::RuegerStep { k: 3, l: 8 }.validate_l1().is_ok());
    }

    #[test]
    fn e_merge_examples() {
        let e = [0.0, 20.0, 20.0, 0.0, 20.0];
        assert!((e_merge_uk(&e, 1).unwrap() - 12.0).abs() < 1e-12);
        assert!((e_merge_uk(&e, 2).unwrap() - 120.0).abs() < 1e-12);
        assert!((e_merge_uk(&e, 5).unwrap() - 0.0).abs() < 1e-12);
        let prod: f64 = [2.0, 3.0, 4.0].iter().product();
        assert!((e_merge_uk(&[2.0, 3.0, 4.0], 3).unwrap() - prod).abs() < 1e-12);
        assert!(e_merge_uk(&[1.0], 2).is_err());
        assert!(e_merge_uk(&[-1.0], 1).is_err());
    }

    #[test]
    fn gamma_threshold_examples() {
        // Second factor vanishes at miscover = alpha.
        for cal in [GammaCalibrator::Am, GammaCalibrator::Rueger { k: 1, l: 5 }] {
            let g = gamma_threshold(0.05, 0.05, 0.2, cal).unwrap();
            assert!((g - 0.2).abs() < 1e-12);
        }
        // AM threshold boundary.
        let (alpha, ap) = (0.05, 0.2);
        let bound = (1.0 - alpha) * ((1.0 - ap) - (1.0 - ap) * (1.0 - ap))
            / ((1.0 - alpha) - (1.0 - ap) * (1.0 - ap))
            + alpha;
        let below = gamma_threshold(bound - 1e-6, alpha, ap, GammaCalibrator::Am).unwrap();
        let above = gamma_threshold(bound + 1e-6, alpha, ap, GammaCalibrator::Am).unwrap();
        assert!(below < 1.0 && above > 1.0);
        // Rueger with alpha/alpha' >= k/L: threshold is alpha/alpha'.
        let cal = GammaCalibrator::Rueger { k: 1, l: 2 };
        let (alpha, ap) = (0.12, 0.2);
        let thresh = alpha / ap;
        let below = gamma_threshold(thresh - 1e-6, alpha, ap, cal).unwrap();
        let above = gamma_threshold(thresh + 1e-6, alpha, ap, cal).unwrap();
        assert!(below < 1.0 && above > 1.0);
        // Rueger with alpha/alpha' < k/L: boundary from the other branch.
        let (alpha, ap) = (0.05, 0.2);
        let ck = ap / alpha - 2.0;
        let thresh = alpha * (1.0 - ap) / (ap - ck * alpha / (1.0 - alpha)) + alpha;
        let below = gamma_threshold(thresh - 1e-6, alpha, ap, cal).unwrap();
        let above = gamma_threshold(thresh + 1e-6, alpha, ap, cal).unwrap();
        assert!(below < 1.0 && above > 1.0);
        assert!(gamma_threshold(0.5, 0.2, 0.1, GammaCalibrator::Am).is_err());
    }

    #[test]
    fn registry_lookup() {
        for id in ["fisher", "liptak", "cct", "rueger", "am", "neg2log", "negphiinv", "am-e", "u2"]
        {
            assert!(Aggregator::from_id(id, 5).is_ok(), "{id}");
        }
        assert!(Aggregator::from_id("nope", 5).is_err());
        assert_eq!(Aggregator::from_id("fisher", 5).unwrap().validity(), Validity::IndependentOnly);
        assert_eq!(Aggregator::from_id("cct", 5).unwrap().validity(), Validity::Heuristic);
        assert_eq!(
            Aggregator::from_id("am-e", 5).unwrap().validity(),
            Validity::ArbitraryDependence
        );
        assert_eq!(
            Aggregator::from_id("u2", 5).unwrap().validity(),
            Validity::IndependentOnly
        );
        assert_eq!(Aggregator::from_id("u2", 5).unwrap().stat_kind(), StatKind::EValue);
    }

    fn brute_force_uk(e: &[f64], k: usize) -> f64 {
        let l = e.len();
        let mut total = 0.0;
        let mut count = 0usize;
        for mask in 0u32..(1 << l) {
            if mask.count_ones() as usize == k {
                total += e
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, &x)| x)
                    .product::<f64>();
                count += 1;
            }
        }
        total / count as f64
    }

    proptest! {
        #[test]
        fn p_combines_monotone_in_each_coordinate(
            p in prop::collection::vec(0.001..0.999f64, 2..6),
            idx in 0usize..6,
            bump in 0.0001..0.3f64,
        ) {
            let idx = idx % p.len();
            let mut hi = p.clone();
            hi[idx] = (hi[idx] + bump).min(0.9995);
            let w = vec![1.0; p.len()];
            prop_assert!(fisher_combine(&hi)? >= fisher_combine(&p)? - 1e-12);
            prop_assert!(liptak_combine(&hi, &w)? >= liptak_combine(&p, &w)? - 1e-12);
            prop_assert!(cct_combine(&hi)? >= cct_combine(&p)? - 1e-12);
            prop_assert!(rueger_combine(&hi, 1)? >= rueger_combine(&p, 1)? - 1e-12);
            prop_assert!(am_calibrator_combine(&hi)? >= am_calibrator_combine(&p)? - 1e-12);
        }

        #[test]
        fn equal_weight_rules_permutation_invariant(
            mut p in prop::collection::vec(0.001..0.999f64, 2..6),
            seed in 0u64..1000,
        ) {
            let w = vec![1.0; p.len()];
            let before = (
                fisher_combine(&p)?,
                liptak_combine(&p, &w)?,
                cct_combine(&p)?,
                rueger_combine(&p, 1)?,
                am_calibrator_combine(&p)?,
            );
            // Deterministic shuffle.
            let n = p.len();
            for i in (1..n).rev() {
                let j = (seed as usize).wrapping_mul(i + 7) % (i + 1);
                p.swap(i, j);
            }
            prop_assert!((fisher_combine(&p)? - before.0).abs() < 1e-12);
            prop_assert!((liptak_combine(&p, &w)? - before.1).abs() < 1e-12);
            prop_assert!((cct_combine(&p)? - before.2).abs() < 1e-12);
            prop_assert!((rueger_combine(&p, 1)? - before.3).abs() < 1e-12);
            prop_assert!((am_calibrator_combine(&p)? - before.4).abs() < 1e-12);
        }

        #[test]
        fn e_merge_matches_brute_force(
            e in prop::collection::vec(0.0..30.0f64, 1..12),
            k_raw in 1usize..12,
        ) {
            let k = 1 + k_raw % e.len();
            let fast = e_merge_uk(&e, k)?;
            let brute = brute_force_uk(&e, k);
            prop_assert!((fast - brute).abs() <= 1e-9 * brute.abs().max(1.0));
        }
    }
}
