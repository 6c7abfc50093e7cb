//! Synthetic p-values and e-values built from (set, level) pairs.
//!
//! A study that reports only its uncertainty set and control level still
//! carries testable information: a candidate outside the set behaves like a
//! small p-value, a candidate inside like a large one. `synth_p` draws the
//! corresponding randomized p-value, `synth_e` the deterministic e-value.

use crate::numerics::RngStream;
use crate::{Error, Result};

/// A randomized synthetic p-value for one study at one candidate/cell.
#[derive(Clone, Debug)]
pub struct SyntheticP {
    pub value: f64,
    pub study: usize,
}

/// A synthetic e-value; takes exactly the values 0 and `1/alpha`.
#[derive(Clone, Debug)]
pub struct SyntheticE {
    pub value: f64,
    pub study: usize,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must be in (0,1), got {alpha}")));
    }
    Ok(())
}

/// Draw a synthetic p-value: Unif(0, alpha) when the candidate is outside
/// the study's set, Unif(alpha, 1) when inside. Endpoints are excluded, so
/// the value never equals `alpha` and never hits 0 or 1.
pub fn synth_p(member: bool, alpha: f64, rng: &mut RngStream) -> Result<f64> {
    check_alpha(alpha)?;
    if member {
        rng.uniform(alpha, 1.0)
    } else {
        rng.uniform(0.0, alpha)
    }
}

/// The deterministic synthetic e-value: 0 inside the set, 1/alpha outside.
pub fn synth_e(member: bool, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(if member { 0.0 } else { 1.0 / alpha })
}

impl SyntheticP {
    pub fn draw(member: bool, alpha: f64, study: usize, rng: &mut RngStream) -> Result<Self> {
        Ok(SyntheticP { value: synth_p(member, alpha, rng)?, study })
    }
}

impl SyntheticE {
    pub fn new(member: bool, alpha: f64, study: usize) -> Result<Self> {
        Ok(SyntheticE { value: synth_e(member, alpha)?, study })
    }
}

/// The deviation of the synthetic p-value's CDF from uniformity,
/// `P(p(Y) <= t) = t + gap`, as a function of the set's true miscoverage
/// probability. Nonpositive everywhere; identically zero when the
/// miscoverage is exactly `alpha`.
pub fn theoretical_p_cdf_gap(t: f64, alpha: f64, miscover: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("t must be in [0,1], got {t}")));
    }
    if !(0.0..=alpha).contains(&miscover) {
        return Err(Error::domain(format!(
            "miscover must be in [0, alpha], got {miscover} with alpha {alpha}"
        )));
    }
    let shortfall = 1.0 - miscover / alpha;
    let kink = if t > alpha { t - alpha } else { 0.0 };
    Ok(shortfall * (kink - (t - t * alpha)) / (1.0 - alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    #[test]
    fn synth_p_ranges() {
        let mut rng = RngStream::new(1, 0);
        for _ in 0..200 {
            let out = synth_p(false, 0.05, &mut rng).unwrap();
            assert!(out > 0.0 && out < 0.05);
            let inside = synth_p(true, 0.05, &mut rng).unwrap();
            assert!(inside > 0.05 && inside < 1.0);
        }
        assert!(synth_p(true, 0.0, &mut rng).is_err());
        assert!(synth_p(true, 1.0, &mut rng).is_err());
    }

    #[test]
    fn synth_e_values() {
        assert_eq!(synth_e(true, 0.05).unwrap(), 0.0);
        assert_eq!(synth_e(false, 0.05).unwrap(), 20.0);
        assert_eq!(synth_e(false, 0.1).unwrap(), 10.0);
        assert!(synth_e(false, 0.0).is_err());
    }

    #[test]
    fn cdf_gap_examples() {
        // Exact-miscoverage case: no gap at any t.
        for t in [0.0, 0.3, 0.05, 1.0] {
            assert!(theoretical_p_cdf_gap(t, 0.05, 0.05).unwrap().abs() < 1e-15);
        }
        // Set that always covers (miscover = 0): gap at t = alpha is -alpha.
        let g = theoretical_p_cdf_gap(0.05, 0.05, 0.0).unwrap();
        assert!((g + 0.05).abs() < 1e-15);
        // CDF endpoint.
        assert!(theoretical_p_cdf_gap(1.0, 0.3, 0.1).unwrap().abs() < 1e-15);
        // Nonpositive everywhere.
        for i in 0..100 {
            let t = f64::from(i) / 99.0;
            assert!(theoretical_p_cdf_gap(t, 0.2, 0.07).unwrap() <= 1e-15);
        }
        assert!(theoretical_p_cdf_gap(0.5, 0.05, 0.1).is_err());
    }

    // Monte Carlo check of the CDF formula: the synthetic p-value of a set
    // with known miscoverage matches t + gap(t) within binomial error.
    #[test]
    fn monte_carlo_cdf_matches_formula() {
        let alpha = 0.1;
        let miscover = 0.04;
        let n = 100_000usize;
        let mut rng = RngStream::new(99, 5);
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            // Membership event with the stated miscoverage probability.
            let outside = rng.unit_open() < miscover;
            draws.push(synth_p(!outside, alpha, &mut rng).unwrap());
        }
        for i in 1..100 {
            let t = f64::from(i) / 100.0;
            let emp = draws.iter().filter(|&&p| p <= t).count() as f64 / n as f64;
            let expect = t + theoretical_p_cdf_gap(t, alpha, miscover).unwrap();
            let se = (expect * (1.0 - expect) / n as f64).sqrt().max(1e-6);
            assert!((emp - expect).abs() < 4.0 * se, "t={t} emp={emp} expect={expect}");
        }
    }

    #[test]
    fn e_value_mean_matches_miscoverage() {
        let alpha = 0.05;
        let miscover = 0.03;
        let n = 100_000usize;
        let mut rng = RngStream::new(7, 2);
        let mut sum = 0.0;
        for _ in 0..n {
            let outside = rng.unit_open() < miscover;
            sum += synth_e(!outside, alpha).unwrap();
        }
        let mean = sum / n as f64;
        let expect = miscover / alpha;
        // Bernoulli(miscover)/alpha has sd sqrt(miscover(1-miscover))/alpha.
        let se = (miscover * (1.0 - miscover)).sqrt() / alpha / (n as f64).sqrt();
        assert!((mean - expect).abs() < 3.0 * se);
        assert!(mean <= 1.0 + 3.0 * se);
    }
}
