//! Normal distribution helpers, log-factorials and compensated summation.

use libm::{erfc, exp, lgamma, log, sqrt};

pub const SQRT_2: f64 = core::f64::consts::SQRT_2;
pub const SQRT_2PI: f64 = 2.506_628_274_631_000_7;
pub const LN_2: f64 = core::f64::consts::LN_2;

pub fn norm_pdf(x: f64) -> f64 {
    exp(-0.5 * x * x) / SQRT_2PI
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Inverse of the standard normal CDF, accurate in both tails.
pub fn norm_ppf(p: f64) -> f64 {
    if p.is_nan() || p <= 0.0 {
        return if p == 0.0 { f64::NEG_INFINITY } else { f64::NAN };
    }
    if p >= 1.0 {
        return if p == 1.0 { f64::INFINITY } else { f64::NAN };
    }
    if p > 0.5 {
        return -lower_ppf(1.0 - p);
    }
    lower_ppf(p)
}

/// Inverse survival function: x with P(Z > x) = t.
pub fn norm_isf(t: f64) -> f64 {
    -norm_ppf(t)
}

// Acklam's rational approximation refined by one Halley step on erfc.
fn lower_ppf(p: f64) -> f64 {
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
    let p = p.max(1e-300);
    let mut x = if p < 0.02425 {
        let q = sqrt(-2.0 * log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..2 {
        let e = norm_cdf(x) - p;
        let u = e * SQRT_2PI * exp(0.5 * x * x);
        if !u.is_finite() {
            break;
        }
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

pub fn ln_gamma(x: f64) -> f64 {
    lgamma(x)
}

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// ln((2k-1)!!), with (-1)!! = 1.
pub fn ln_double_factorial_odd(k: usize) -> f64 {
    let k = k as f64;
    lgamma(2.0 * k + 1.0) - k * LN_2 - lgamma(k + 1.0)
}

pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    lgamma(n as f64 + 1.0) - lgamma(k as f64 + 1.0) - lgamma((n - k) as f64 + 1.0)
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one cell of an experiment, order-independent across workers.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut s = mix64(seed);
    for &p in parts {
        s = mix64(s ^ mix64(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppf_round_trip() {
        for &p in &[1e-300, 1e-20, 1e-8, 0.001, 0.02425, 0.1, 0.5, 0.9, 0.999] {
            let x = norm_ppf(p);
            let back = if x < 0.0 { norm_cdf(x) } else { 1.0 - norm_sf(x) };
            assert!(((back - p) / p).abs() < 1e-12, "p={p} back={back}");
        }
        let x = norm_isf(1e-12);
        assert!((norm_sf(x) / 1e-12 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn double_factorial() {
        let want = [1.0, 1.0, 3.0, 15.0, 105.0, 945.0];
        for (k, w) in want.iter().enumerate() {
            assert!((exp(ln_double_factorial_odd(k)) - w).abs() < 1e-9 * w);
        }
    }

    #[test]
    fn compensated() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn seeds_differ() {
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_eq!(derive_seed(9, &[4]), derive_seed(9, &[4]));
    }
}
