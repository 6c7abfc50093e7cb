//! Special functions and seedable random streams.
//!
//! Everything here is deterministic: the distribution functions are pure,
//! and [`RngStream`] produces an identical draw sequence for an identical
//! `(seed, stream_id)` pair regardless of thread count.

// The rational-approximation coefficients below are quoted at full published
// precision on purpose.
#![allow(clippy::excessive_precision)]

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.506628274631000502415765284811;

// ---------------------------------------------------------------------------
// Error function (Cody's rational approximations, |rel err| < 1e-15)
// ---------------------------------------------------------------------------

const ERF_A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
const ERF_B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];
const ERF_C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
const ERF_D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];
const ERF_P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
const ERF_Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];

/// erfc(x) for x >= 0.46875.
fn erfc_tail(x: f64) -> f64 {
    debug_assert!(x >= 0.46875);
    if x <= 4.0 {
        let mut num = ERF_C[8] * x;
        let mut den = x;
        for i in 0..7 {
            num = (num + ERF_C[i]) * x;
            den = (den + ERF_D[i]) * x;
        }
        (-x * x).exp() * (num + ERF_C[7]) / (den + ERF_D[7])
    } else {
        let z = 1.0 / (x * x);
        let mut num = ERF_P[5] * z;
        let mut den = z;
        for i in 0..4 {
            num = (num + ERF_P[i]) * z;
            den = (den + ERF_Q[i]) * z;
        }
        let r = z * (num + ERF_P[4]) / (den + ERF_Q[4]);
        (-x * x).exp() * (1.0 / std::f64::consts::PI.sqrt() - r) / x
    }
}

/// Complementary error function.
fn erfc(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 0.46875 {
        let z = x * x;
        let mut num = ERF_A[4] * z;
        let mut den = z;
        for i in 0..3 {
            num = (num + ERF_A[i]) * z;
            den = (den + ERF_B[i]) * z;
        }
        1.0 - x * (num + ERF_A[3]) / (den + ERF_B[3])
    } else if x > 0.0 {
        if x > 26.6 {
            0.0
        } else {
            erfc_tail(x)
        }
    } else {
        2.0 - erfc(-x)
    }
}

// ---------------------------------------------------------------------------
// Distribution functions
// ---------------------------------------------------------------------------

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

// Acklam's rational approximation for the inverse normal CDF,
// refined below by a Halley step on the CDF.
const INV_A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const INV_B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const INV_C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const INV_D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

/// Standard normal quantile function.
///
/// Errors if `p` is not strictly inside (0, 1).
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("quantile requires p in (0,1), got {p}")));
    }
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((INV_C[0] * q + INV_C[1]) * q + INV_C[2]) * q + INV_C[3]) * q + INV_C[4]) * q
            + INV_C[5])
            / ((((INV_D[0] * q + INV_D[1]) * q + INV_D[2]) * q + INV_D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((INV_A[0] * r + INV_A[1]) * r + INV_A[2]) * r + INV_A[3]) * r + INV_A[4]) * r
            + INV_A[5])
            * q
            / (((((INV_B[0] * r + INV_B[1]) * r + INV_B[2]) * r + INV_B[3]) * r + INV_B[4]) * r
                + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((INV_C[0] * q + INV_C[1]) * q + INV_C[2]) * q + INV_C[3]) * q + INV_C[4]) * q
            + INV_C[5])
            / ((((INV_D[0] * q + INV_D[1]) * q + INV_D[2]) * q + INV_D[3]) * q + 1.0)
    };
    // Halley refinement against the high-accuracy CDF.
    let e = std_normal_cdf(x) - p;
    let u = e * SQRT_2PI * (0.5 * x * x).exp();
    Ok(x - u / (1.0 + x * u / 2.0))
}

/// Natural log of the gamma function (Lanczos).
fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let tmp = x + 5.5 - (x + 0.5) * (x + 5.5).ln();
    let mut ser = 1.000000000190015;
    for (j, &g) in G.iter().enumerate() {
        ser += g / (x + 1.0 + j as f64);
    }
    -tmp + (SQRT_2PI * ser / x).ln()
}

/// Regularized lower incomplete gamma P(a, x) via series (x < a + 1)
/// or continued fraction (otherwise).
fn gamma_p(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        // Series expansion.
        let mut ap = a;
        let mut sum = 1.0 / a;
        let mut del = sum;
        for _ in 0..500 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        sum * (-x + a * x.ln() - ln_gamma(a)).exp()
    } else {
        // Modified Lentz continued fraction for Q(a, x).
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let q = (-x + a * x.ln() - ln_gamma(a)).exp() * h;
        1.0 - q
    }
}

/// Chi-squared CDF with `dof` degrees of freedom.
pub fn chi2_cdf(x: f64, dof: u32) -> Result<f64> {
    if dof == 0 {
        return Err(Error::domain("chi2_cdf requires dof >= 1"));
    }
    if x < 0.0 {
        return Err(Error::domain(format!("chi2_cdf requires x >= 0, got {x}")));
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    Ok(gamma_p(f64::from(dof) / 2.0, x / 2.0))
}

/// Standard Cauchy CDF.
pub fn cauchy_cdf(x: f64) -> f64 {
    0.5 + x.atan() / std::f64::consts::PI
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

/// 64-bit finalizer from SplitMix64.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Hash a tuple of indices (replication, study, purpose, ...) into a
/// stream id, so substreams derived from the same master seed are
/// reproducible and pairwise decorrelated.
pub fn stream_id(parts: &[u64]) -> u64 {
    let mut h = 0x51_7c_c1_b7_27_22_0a_95u64;
    for &p in parts {
        h = mix64(h ^ mix64(p));
    }
    h
}

/// A seedable, splittable random stream.
///
/// Identical `(seed, stream_id)` pairs give identical sequences; distinct
/// stream ids key independent ChaCha instances.
pub struct RngStream {
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = mix64(seed) ^ stream_id;
        for chunk in key.chunks_mut(8) {
            state = mix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        RngStream {
            rng: ChaCha12Rng::from_seed(key),
        }
    }

    /// Substream keyed by `(master_seed, parts...)`.
    pub fn derive(seed: u64, parts: &[u64]) -> Self {
        RngStream::new(seed, stream_id(parts))
    }

    /// Uniform draw from the open unit interval (0, 1).
    pub fn unit_open(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// Uniform draw from the open interval (lo, hi); endpoints are rejected.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::domain(format!("uniform requires lo < hi, got [{lo}, {hi}]")));
        }
        loop {
            let v = lo + (hi - lo) * self.unit_open();
            if v > lo && v < hi {
                return Ok(v);
            }
        }
    }

    /// Standard normal draw via inverse-CDF transform.
    pub fn normal(&mut self) -> f64 {
        std_normal_quantile(self.unit_open()).expect("open-interval draw is in (0,1)")
    }
}
