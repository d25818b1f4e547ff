//! Elementary and special functions on top of `libm`.
//!
//! Everything here is deterministic across platforms because `libm` is a pure
//! software implementation; reports stay bit-stable between machines.

pub const LN_2: f64 = core::f64::consts::LN_2;
const SQRT_2: f64 = core::f64::consts::SQRT_2;

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}
#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}
#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}
#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}
#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}
#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}
#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Standard normal CDF, accurate in both tails.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    exp(-0.5 * z * z) / sqrt(2.0 * core::f64::consts::PI)
}

/// Inverse of the standard normal CDF (Acklam's rational approximation plus
/// one Halley step against `erfc`).
pub fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let plow = 0.02425;
    let x = if p < plow {
        let q = sqrt(-2.0 * ln(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - plow {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = sqrt(-2.0 * ln(1.0 - p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = std_normal_cdf(x) - p;
    let u = e * sqrt(2.0 * core::f64::consts::PI) * exp(0.5 * x * x);
    x - u / (1.0 + 0.5 * x * u)
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cont_frac(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 − P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cont_frac(a, x)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..100_000 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * exp(-x + a * ln(x) - ln_gamma(a))
}

fn gamma_cont_frac(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..100_000 {
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
    exp(-x + a * ln(x) - ln_gamma(a)) * h
}

/// Poisson PMF via log-space evaluation.
pub fn poisson_pmf(k: f64, rate: f64) -> f64 {
    if k < 0.0 {
        return 0.0;
    }
    if rate == 0.0 {
        return if k == 0.0 { 1.0 } else { 0.0 };
    }
    exp(k * ln(rate) - rate - ln_gamma(k + 1.0))
}

/// P(K ≤ k) for K ~ Poisson(rate), k a real threshold.
pub fn poisson_cdf(k: f64, rate: f64) -> f64 {
    let k = floor(k);
    if k < 0.0 {
        return 0.0;
    }
    if rate == 0.0 {
        return 1.0;
    }
    gamma_q(k + 1.0, rate)
}

/// P(K ≤ k) for K ~ Geometric(p) counting failures before the first success.
pub fn geometric_cdf(k: f64, p: f64) -> f64 {
    let k = floor(k);
    if k < 0.0 {
        return 0.0;
    }
    1.0 - powf(1.0 - p, k + 1.0)
}

pub fn geometric_pmf(k: f64, p: f64) -> f64 {
    if k < 0.0 {
        return 0.0;
    }
    p * powf(1.0 - p, k)
}

/// Smallest root of a monotone increasing `f` crossing `target` on `[lo, hi]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, DiscreteCDF, Gamma, Normal, Poisson};

    #[test]
    fn normal_cdf_matches_statrs() {
        let n = Normal::new(0.0, 1.0).unwrap();
        for i in -80..=80 {
            let z = i as f64 * 0.1;
            // statrs loses a few digits deep in the tail; Φ(-8) = 6.22096057427178e-16.
            let want = n.cdf(z);
            assert!((std_normal_cdf(z) - want).abs() <= 1e-9 * want.max(1e-300), "z={z} ours={} statrs={want}", std_normal_cdf(z));
        }
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let z = std_normal_quantile(p);
            assert!((std_normal_cdf(z) - p).abs() < 1e-14);
        }
        let z = std_normal_quantile(1e-5);
        assert!((z + 4.264890793922825).abs() < 1e-9);
    }

    #[test]
    fn incomplete_gamma_matches_statrs() {
        for &(a, x) in &[(0.5, 0.2), (5.0, 3.0), (5.0, 12.0), (100.0, 95.0), (100.0, 130.0)] {
            let g = Gamma::new(a, 1.0).unwrap();
            assert!((gamma_p(a, x) - g.cdf(x)).abs() < 1e-12, "a={a} x={x}");
        }
    }

    #[test]
    fn poisson_cdf_matches_statrs() {
        let p = Poisson::new(50.0).unwrap();
        for k in 0..120u64 {
            assert!((poisson_cdf(k as f64, 50.0) - p.cdf(k)).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn geometric_counts_failures() {
        assert_eq!(geometric_pmf(0.0, 0.5), 0.5);
        assert_eq!(geometric_cdf(1.0, 0.5), 0.75);
    }
}
