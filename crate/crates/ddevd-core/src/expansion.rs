//! Small-bandwidth expansion of E[F_{i,h}(y)^N] and the bias and variance
//! coefficients built from it.
//!
//! Two evaluation modes are provided: finite sums with double-factorial
//! weights (`ExactSum`) and closed forms obtained from the Gaussian moment
//! approximation (`LargeN`). Everything is parameterized by the block size n,
//! the upper-tail probability t = 1 - F_X(y) and c^2 = t / (n F_X(y)).

use alloc::vec::Vec;

use libm::{exp, expm1, log, log1p};

use crate::distributions::{ln_cdf, BaseModel, TailPoint};
use crate::error::{Error, Result};
use crate::kernels::{KernelMoments, KernelSpec};
use crate::special::{ln_binomial, ln_double_factorial_odd, CompensatedSum};

/// Block size at which `ModeChoice::Auto` switches to closed forms.
pub const AUTO_SWITCH_N: usize = 40;
/// Largest N accepted by the exact sums; variance terms need N = 2 n_i.
pub const EXACT_MAX_N: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    ExactSum,
    LargeN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModeChoice {
    #[default]
    Auto,
    ExactSum,
    LargeN,
}

impl ModeChoice {
    pub fn resolve(self, n_i: usize) -> EvalMode {
        match self {
            ModeChoice::ExactSum => EvalMode::ExactSum,
            ModeChoice::LargeN => EvalMode::LargeN,
            ModeChoice::Auto if n_i < AUTO_SWITCH_N => EvalMode::ExactSum,
            ModeChoice::Auto => EvalMode::LargeN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FyKind {
    Zero,
    One,
    TwoAlpha,
    TwoBeta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaBeta {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

/// alpha = f mu_{K^2,1} - 2 F f mu_{K,1};
/// beta = f' mu_{K^2,2} / 2 - f' F mu_{K,2} - f^2 mu_{K,1}^2.
pub fn alpha_beta(p: &TailPoint, m: &KernelMoments) -> AlphaBeta {
    let (f, fp, cdf) = (p.pdf, p.pdf_prime, p.cdf);
    AlphaBeta {
        alpha: f * m.mu_k2_1 - 2.0 * cdf * f * m.mu_k1,
        beta: fp * m.mu_k2_2 / 2.0 - fp * cdf * m.mu_k2 - f * f * m.mu_k1 * m.mu_k1,
        kappa: m.kappa(),
    }
}

/// ln rho with s = c^2: N^2 s / (2 (N s + 1)) - ln(N s + 1) / 2.
pub fn ln_rho(n_big: f64, s: f64) -> f64 {
    let u = n_big * s;
    n_big * u / (2.0 * (u + 1.0)) - 0.5 * log1p(u)
}

/// rho(c, N) = exp(N^2 c^2 / (2 (N c^2 + 1))) / sqrt(N c^2 + 1).
pub fn rho(c: f64, n_big: f64) -> f64 {
    exp(ln_rho(n_big, c * c))
}

/// z1 / c as a function of s = c^2.
pub fn z1_over_c(n_big: f64, s: f64) -> f64 {
    let u = n_big * s + 1.0;
    (n_big - n_big * s - 1.0) / (u * u)
}

pub fn z1(n_big: f64, c: f64) -> f64 {
    c * z1_over_c(n_big, c * c)
}

pub fn z2(n_big: f64, c: f64) -> f64 {
    let s = c * c;
    let n = n_big;
    let u = n * s + 1.0;
    let num = 2.0 * n * n * n * s * s * s + (3.0 * n * n - 5.0 * n * n * n) * s * s + (n * n * n - 4.0 * n * n) * s + n - 1.0;
    num / ((n - 1.0) * u * u * u * u)
}

/// (z2 - 1) / s, free of cancellation at s = 0.
fn z2_minus_one_over_s(n: f64, s: f64) -> f64 {
    let u = n * s + 1.0;
    let p0 = (n * n * n - 4.0 * n * n) - 4.0 * n * (n - 1.0);
    let p1 = (3.0 * n * n - 5.0 * n * n * n) - 6.0 * n * n * (n - 1.0);
    let p2 = 2.0 * n * n * n - 4.0 * n * n * n * (n - 1.0);
    let p3 = -(n - 1.0) * n * n * n * n;
    (((p3 * s + p2) * s + p1) * s + p0) / ((n - 1.0) * u * u * u * u)
}

/// (z1(N-1, c)/c - (N - 2)) / s.
fn z1_shift_over_s(n: f64, s: f64) -> f64 {
    let u = (n - 1.0) * s + 1.0;
    (-(n - 1.0) * (2.0 * n - 3.0) - (n - 2.0) * (n - 1.0) * (n - 1.0) * s) / (u * u)
}

/// (ln rho(N) - ln rho(N - 1)) / s.
fn delta_over_s(n: f64, s: f64) -> f64 {
    let x = s / ((n - 1.0) * s + 1.0);
    let l = if x == 0.0 { 1.0 } else { log1p(x) / x };
    let l = l / ((n - 1.0) * s + 1.0);
    n * n / (2.0 * (n * s + 1.0)) - (n - 1.0) * (n - 1.0) / (2.0 * ((n - 1.0) * s + 1.0)) - 0.5 * l
}

/// Z(N, c) / (c^2 rho(N - 1, c)), finite at c = 0.
fn zcal_reduced(n: f64, s: f64) -> f64 {
    let d = s * delta_over_s(n, s);
    let em1_over_s = if d == 0.0 { delta_over_s(n, s) } else { expm1(d) / s };
    (n - 2.0) * z2_minus_one_over_s(n, s) - z1_shift_over_s(n, s) + (n - 2.0) * z2(n, libm::sqrt(s)) * em1_over_s
}

/// Z(N, c) = (N - 2) z2(N, c) rho(N, c) - z1(N - 1, c) rho(N - 1, c) / c.
/// The c = 0 value is the limit 0, reached without dividing by c.
pub fn zcal(n_big: f64, c: f64) -> f64 {
    let s = c * c;
    s * zcal_reduced(n_big, s) * exp(ln_rho(n_big - 1.0, s))
}

/// z1 / c in the t parameterization with N = n: (1 - t)(n (1 - t) - 1).
pub fn z1_over_c_t(n: f64, t: f64) -> f64 {
    (1.0 - t) * (n * (1.0 - t) - 1.0)
}

/// z2 in the t parameterization with N = n, where n c^2 = t / (1 - t).
pub fn z2_t(n: f64, t: f64) -> f64 {
    z2(n, libm::sqrt(t / (n * (1.0 - t))))
}

/// p(n, t) = (n - 2) z2(n, t) - z1(n, t) / c, with p(n, 0) = -1.
pub fn p_t(n: f64, t: f64) -> f64 {
    (n - 2.0) * z2_t(n, t) - z1_over_c_t(n, t)
}

/// Log weights ln[C(N, 2k) (2k-1)!! / n^k] for k = 0..=N/2.
#[derive(Debug, Clone)]
struct WeightRow {
    n_big: usize,
    lw: Vec<f64>,
}

impl WeightRow {
    fn new(n_big: usize, n_i: usize) -> Self {
        let ln_n = log(n_i as f64);
        let lw = (0..=n_big / 2)
            .map(|k| ln_binomial(n_big, 2 * k) + ln_double_factorial_odd(k) - k as f64 * ln_n)
            .collect();
        Self { n_big, lw }
    }
}

fn exact_sum(row: &WeightRow, kind: FyKind, ln_f: f64, t: f64, ab: &AlphaBeta, skip_k0: bool) -> f64 {
    let n_big = row.n_big as f64;
    let (kmin, shift) = match kind {
        FyKind::Zero => (if skip_k0 { 1 } else { 0 }, 0.0),
        FyKind::One | FyKind::TwoBeta => (1, 1.0),
        FyKind::TwoAlpha => (2, 2.0),
    };
    let ln_t = log(t);
    let mut acc = CompensatedSum::new();
    for (k, &lw) in row.lw.iter().enumerate().skip(kmin) {
        let tp = match kind {
            FyKind::Zero => k,
            _ => k - kmin,
        };
        let t_part = if tp == 0 {
            0.0
        } else if t == 0.0 {
            break;
        } else {
            tp as f64 * ln_t
        };
        let kf = k as f64;
        let e = exp(lw + (n_big - kf - shift) * ln_f + t_part);
        let w = match kind {
            FyKind::Zero => 1.0,
            FyKind::One => -kf,
            FyKind::TwoAlpha => kf * (kf - 1.0) / 2.0,
            FyKind::TwoBeta => kf,
        };
        acc.add(w * e);
    }
    let s = acc.value();
    match kind {
        FyKind::Zero => s,
        FyKind::One => s * ab.alpha,
        FyKind::TwoAlpha => s * ab.alpha * ab.alpha,
        FyKind::TwoBeta => s * ab.beta,
    }
}

fn large_form(kind: FyKind, n_big: usize, n_i: usize, ln_f: f64, s: f64, ab: &AlphaBeta) -> f64 {
    let nb = n_big as f64;
    let n = n_i as f64;
    match kind {
        FyKind::Zero => exp(nb * ln_f + ln_rho(nb, s)),
        FyKind::One | FyKind::TwoBeta => {
            let lead = if kind == FyKind::One { -ab.alpha } else { ab.beta };
            lead * nb / (2.0 * n) * exp((nb - 2.0) * ln_f + ln_rho(nb, s)) * z1_over_c(nb, s)
        }
        FyKind::TwoAlpha => {
            if n_big < 2 {
                return 0.0;
            }
            ab.alpha * ab.alpha * nb / (8.0 * n * n)
                * exp((nb - 4.0) * ln_f + ln_rho(nb - 1.0, s))
                * zcal_reduced(nb, s)
        }
    }
}

/// FY_{s,N}(y) for block size n_i by the exact finite sums.
pub fn fy_exact(kind: FyKind, n_big: usize, n_i: usize, p: &TailPoint, ab: &AlphaBeta) -> Result<f64> {
    if n_big > EXACT_MAX_N {
        return Err(Error::ExactFormUnavailable(n_big));
    }
    if p.cdf <= 0.0 {
        return Ok(0.0);
    }
    let row = WeightRow::new(n_big, n_i);
    Ok(exact_sum(&row, kind, ln_cdf(p.cdf, p.sf), p.sf.max(0.0), ab, false))
}

/// FY_{s,N}(y) by the closed forms in rho, z1, z2 and Z.
pub fn fy_large(kind: FyKind, n_big: usize, n_i: usize, p: &TailPoint, ab: &AlphaBeta) -> f64 {
    if p.cdf <= 0.0 {
        return 0.0;
    }
    let s = p.sf.max(0.0) / (n_i as f64 * p.cdf);
    large_form(kind, n_big, n_i, ln_cdf(p.cdf, p.sf), s, ab)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ECoefficients {
    pub e0: f64,
    pub e1: f64,
    pub e2a: f64,
    pub e2b: f64,
}

/// Bias and variance coefficients of one block at one abscissa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointwiseCoefficients {
    pub b0: f64,
    pub b1: f64,
    pub b2a: f64,
    pub b2b: f64,
    pub v0: f64,
    pub v1: f64,
    pub v2a: f64,
    pub v2b: f64,
    pub evaluated_from: EvalMode,
}

impl PointwiseCoefficients {
    pub fn b2(&self) -> f64 {
        self.b2a + self.b2b
    }

    pub fn v2(&self) -> f64 {
        self.v2a + self.v2b
    }

    fn zero(mode: EvalMode) -> Self {
        Self { b0: 0.0, b1: 0.0, b2a: 0.0, b2b: 0.0, v0: 0.0, v1: 0.0, v2a: 0.0, v2b: 0.0, evaluated_from: mode }
    }
}

/// Coefficient evaluator for one block size, with exact-sum weights
/// precomputed for N in {n-2, n-1, n, 2n-2, 2n-1, 2n}.
#[derive(Debug, Clone)]
pub struct CoefficientEvaluator {
    n_i: usize,
    moments: KernelMoments,
    mode: EvalMode,
    rows: Vec<WeightRow>,
}

impl CoefficientEvaluator {
    pub fn new(n_i: usize, moments: KernelMoments, mode: EvalMode) -> Result<Self> {
        if n_i == 0 {
            return Err(Error::InvalidInput("block size must be positive".into()));
        }
        let mut rows = Vec::new();
        if mode == EvalMode::ExactSum {
            if 2 * n_i > EXACT_MAX_N {
                return Err(Error::ExactFormUnavailable(2 * n_i));
            }
            for nb in [n_i.saturating_sub(2), n_i.saturating_sub(1), n_i, 2 * n_i - 2, 2 * n_i - 1, 2 * n_i] {
                rows.push(WeightRow::new(nb, n_i));
            }
        }
        Ok(Self { n_i, moments, mode, rows })
    }

    pub fn mode(&self) -> EvalMode {
        self.mode
    }

    pub fn block_size(&self) -> usize {
        self.n_i
    }

    fn fy(&self, kind: FyKind, n_big: usize, ln_f: f64, p: &TailPoint, ab: &AlphaBeta) -> f64 {
        match self.mode {
            EvalMode::ExactSum => {
                let row = self.rows.iter().find(|r| r.n_big == n_big).expect("weight row precomputed");
                exact_sum(row, kind, ln_f, p.sf.max(0.0), ab, false)
            }
            EvalMode::LargeN => {
                let s = p.sf.max(0.0) / (self.n_i as f64 * p.cdf);
                large_form(kind, n_big, self.n_i, ln_f, s, ab)
            }
        }
    }

    /// E_{0}, E_{1}, E_{2a}, E_{2b} for N in {n, 2n}.
    pub fn expansion(&self, n_big: usize, p: &TailPoint) -> ECoefficients {
        let ab = alpha_beta(p, &self.moments);
        if p.cdf <= 0.0 {
            return ECoefficients { e0: 0.0, e1: 0.0, e2a: 0.0, e2b: 0.0 };
        }
        let ln_f = ln_cdf(p.cdf, p.sf);
        self.expansion_inner(n_big, p, &ab, ln_f)
    }

    fn expansion_inner(&self, n_big: usize, p: &TailPoint, ab: &AlphaBeta, ln_f: f64) -> ECoefficients {
        let m = &self.moments;
        let nb = n_big as f64;
        let f = p.pdf;
        let mut e1 = self.fy(FyKind::One, n_big, ln_f, p, ab);
        let mut e2b = self.fy(FyKind::TwoAlpha, n_big, ln_f, p, ab);
        let e2a = self.fy(FyKind::TwoBeta, n_big, ln_f, p, ab)
            + nb / 2.0 * p.pdf_prime * m.mu_k2 * self.fy(FyKind::Zero, n_big - 1, ln_f, p, ab);
        if m.mu_k1 != 0.0 {
            e1 -= nb * f * m.mu_k1 * self.fy(FyKind::Zero, n_big - 1, ln_f, p, ab);
            e2b -= nb * f * m.mu_k1 * self.fy(FyKind::One, n_big - 1, ln_f, p, ab);
            if n_big >= 2 {
                e2b += nb * (nb - 1.0) / 2.0
                    * f
                    * f
                    * m.mu_k1
                    * m.mu_k1
                    * self.fy(FyKind::Zero, n_big - 2, ln_f, p, ab);
            }
        }
        ECoefficients { e0: self.fy(FyKind::Zero, n_big, ln_f, p, ab), e1, e2a, e2b }
    }

    /// E_{0,N} - F^N, summed without cancellation.
    fn e0_excess(&self, n_big: usize, ln_f: f64, p: &TailPoint, ab: &AlphaBeta) -> f64 {
        match self.mode {
            EvalMode::ExactSum => {
                let row = self.rows.iter().find(|r| r.n_big == n_big).expect("weight row precomputed");
                exact_sum(row, FyKind::Zero, ln_f, p.sf.max(0.0), ab, true)
            }
            EvalMode::LargeN => {
                let s = p.sf.max(0.0) / (self.n_i as f64 * p.cdf);
                let nb = n_big as f64;
                exp(nb * ln_f) * expm1(ln_rho(nb, s))
            }
        }
    }

    pub fn at(&self, p: &TailPoint) -> PointwiseCoefficients {
        if p.cdf <= 0.0 {
            return PointwiseCoefficients::zero(self.mode);
        }
        let ab = alpha_beta(p, &self.moments);
        let ln_f = ln_cdf(p.cdf, p.sf);
        let n = self.n_i;
        let e = self.expansion_inner(n, p, &ab, ln_f);
        let e2 = self.expansion_inner(2 * n, p, &ab, ln_f);
        let x1 = self.e0_excess(n, ln_f, p, &ab);
        let v0 = match self.mode {
            EvalMode::ExactSum => {
                let x2 = self.e0_excess(2 * n, ln_f, p, &ab);
                x2 - 2.0 * exp(n as f64 * ln_f) * x1 - x1 * x1
            }
            EvalMode::LargeN => {
                let s = p.sf.max(0.0) / (n as f64 * p.cdf);
                let nf = n as f64;
                let lr1 = ln_rho(nf, s);
                exp(2.0 * nf * ln_f + 2.0 * lr1) * expm1(ln_rho(2.0 * nf, s) - 2.0 * lr1)
            }
        };
        let v0 = if v0 < 0.0 && v0 > -1e-12 { 0.0 } else { v0 };
        PointwiseCoefficients {
            b0: x1,
            b1: e.e1,
            b2a: e.e2a,
            b2b: e.e2b,
            v0,
            v1: e2.e1 - 2.0 * e.e0 * e.e1,
            v2a: e2.e2a - 2.0 * e.e0 * e.e2a,
            v2b: e2.e2b - 2.0 * e.e0 * e.e2b - e.e1 * e.e1,
            evaluated_from: self.mode,
        }
    }
}

/// E-coefficients of E[F_{i,h}(y)^N] for a block of size n_i.
pub fn expansion_e<M: BaseModel + ?Sized>(
    n_big: usize,
    n_i: usize,
    y: f64,
    model: &M,
    kernel: &KernelSpec,
    mode: EvalMode,
) -> Result<ECoefficients> {
    if mode == EvalMode::ExactSum && n_big > EXACT_MAX_N {
        return Err(Error::ExactFormUnavailable(n_big));
    }
    let mut ev = CoefficientEvaluator { n_i, moments: kernel.moments(), mode, rows: Vec::new() };
    if mode == EvalMode::ExactSum {
        for nb in [n_big.saturating_sub(2), n_big.saturating_sub(1), n_big] {
            ev.rows.push(WeightRow::new(nb, n_i));
        }
    }
    Ok(ev.expansion(n_big, &model.tail_point(y)))
}

/// All eight coefficients for a block of size n_i at y.
pub fn coefficients_at<M: BaseModel + ?Sized>(
    n_i: usize,
    y: f64,
    model: &M,
    kernel: &KernelSpec,
    mode: ModeChoice,
) -> Result<PointwiseCoefficients> {
    let ev = CoefficientEvaluator::new(n_i, kernel.moments(), mode.resolve(n_i))?;
    Ok(ev.at(&model.tail_point(y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Builtin;
    use crate::special::{norm_cdf, norm_pdf};
    use libm::{pow, sqrt};
    use proptest::prelude::*;

    fn point(cdf: f64, pdf: f64, pdf_prime: f64) -> TailPoint {
        TailPoint { cdf, sf: 1.0 - cdf, pdf, pdf_prime }
    }

    fn gauss() -> KernelMoments {
        KernelSpec::gaussian().moments()
    }

    #[test]
    fn rho_examples() {
        assert_eq!(rho(0.0, 17.0), 1.0);
        let n: f64 = 12.0;
        let c = sqrt(1.0 / n);
        assert!((rho(c, n) - exp(n / 4.0) / sqrt(2.0)).abs() < 1e-12 * rho(c, n));
        let c = sqrt(0.19 / (10.0 * 0.81));
        assert!((rho(c, 10.0) - 0.9 * exp(0.95)).abs() < 1e-13);
    }

    #[test]
    fn z_examples() {
        assert_eq!(z1(9.0, 0.0), 0.0);
        assert_eq!(z1_over_c_t(20.0, 0.0), 19.0);
        for n in [5.0, 30.0, 400.0] {
            assert!((p_t(n, 0.0) + 1.0).abs() < 1e-12);
            for t in [0.01, 0.2] {
                let c = sqrt(t / (n * (1.0 - t)));
                assert!((z1(n, c) / c - z1_over_c_t(n, t)).abs() < 1e-10 * n);
            }
        }
        assert_eq!(zcal(10.0, 0.0), 0.0);
    }

    #[test]
    fn zcal_matches_direct_formula() {
        for n in [3.0, 7.0, 50.0, 800.0] {
            for c in [1e-3, 0.05, 0.3, 2.0] {
                let direct = (n - 2.0) * z2(n, c) * rho(c, n) - z1(n - 1.0, c) * rho(c, n - 1.0) / c;
                let z = zcal(n, c);
                assert!((z - direct).abs() <= 1e-9 * direct.abs().max(1e-300), "n={n} c={c} {z} {direct}");
            }
        }
    }

    #[test]
    fn fy_examples() {
        let ab = AlphaBeta { alpha: 0.0, beta: 0.3, kappa: 0.5 };
        let p = point(0.37, 0.2, -0.1);
        assert!((fy_exact(FyKind::Zero, 1, 5, &p, &ab).unwrap() - 0.37).abs() < 1e-15);
        let half = point(0.5, 0.0, 0.0);
        assert!((fy_exact(FyKind::Zero, 2, 2, &half, &ab).unwrap() - 0.375).abs() < 1e-15);
        assert_eq!(fy_exact(FyKind::One, 10, 5, &p, &ab).unwrap(), 0.0);
        assert!(matches!(fy_exact(FyKind::Zero, 81, 5, &p, &ab), Err(Error::ExactFormUnavailable(81))));
    }

    #[test]
    fn e_examples() {
        let m = gauss();
        let p = point(0.7, 0.3, -0.2);
        let ev = CoefficientEvaluator::new(10, m, EvalMode::ExactSum).unwrap();
        let ab = alpha_beta(&p, &m);
        let e = ev.expansion(10, &p);
        let ln_f = ln_cdf(p.cdf, p.sf);
        assert_eq!(e.e1, exact_sum(&WeightRow::new(10, 10), FyKind::One, ln_f, p.sf, &ab, false));
        let one = CoefficientEvaluator::new(1, m, EvalMode::ExactSum).unwrap();
        assert_eq!(one.expansion(1, &p).e0, 0.7);
    }

    #[test]
    fn modes_agree_at_thirty() {
        let model = Builtin::Exponential { rate: 1.0 };
        let k = KernelSpec::gaussian();
        let y = model.quantile(0.9);
        let ex = expansion_e(30, 30, y, &model, &k, EvalMode::ExactSum).unwrap();
        let ln = expansion_e(30, 30, y, &model, &k, EvalMode::LargeN).unwrap();
        for (a, b) in [(ex.e0, ln.e0), (ex.e1, ln.e1), (ex.e2a, ln.e2a)] {
            assert!(((a - b) / a).abs() <= 0.05, "{a} {b}");
        }
        // The closed form for E2b differs from the second derivative of the
        // rho form at order 1/n; it stays within the n^(-1/2) error scale.
        assert!(((ex.e2b - ln.e2b) / ex.e2b).abs() <= 1.0 / sqrt(30.0), "{} {}", ex.e2b, ln.e2b);
    }

    #[test]
    fn saturation() {
        for mode in [EvalMode::ExactSum, EvalMode::LargeN] {
            let ev = CoefficientEvaluator::new(20, gauss(), mode).unwrap();
            let c = ev.at(&TailPoint { cdf: 1.0, sf: 0.0, pdf: 0.0, pdf_prime: 0.0 });
            assert!(c.b0.abs() < 1e-10 && c.v0.abs() < 1e-10);
            let z = ev.at(&TailPoint { cdf: 0.0, sf: 1.0, pdf: 0.1, pdf_prime: 0.1 });
            assert_eq!(z.b1, 0.0);
        }
    }

    #[test]
    fn v0_enumeration_small() {
        // empirical CDF of two draws at F = 1/2 takes values 0, 1/2, 1
        // with probabilities 1/4, 1/2, 1/4: E[F^2] = 0.375, E[F^4] = 0.28125
        let ev = CoefficientEvaluator::new(2, gauss(), EvalMode::ExactSum).unwrap();
        let e = ev.expansion(2, &point(0.5, 0.0, 0.0));
        assert!((e.e0 - 0.375).abs() < 1e-15);
        let oracle_v0: f64 = 0.28125 - 0.375 * 0.375;
        assert!((oracle_v0 - 0.140625).abs() < 1e-15);
    }

    #[test]
    fn zero_mean_alpha_beta() {
        let m = gauss();
        let p = point(0.8, 0.25, -0.3);
        let ab = alpha_beta(&p, &m);
        assert!((ab.alpha - p.pdf * m.mu_k2_1).abs() < 1e-12);
        assert!((ab.beta - m.mu_k2 * p.pdf_prime * (m.kappa() - p.cdf)).abs() < 1e-12);
    }

    #[test]
    fn exact_fy_is_gaussian_expectation() {
        // The finite sums are E[(F + sigma Z)^N] with sigma^2 = F(1 - F)/n.
        let (n, nb, f) = (30usize, 60usize, 0.95);
        let sigma = sqrt(f * (1.0 - f) / n as f64);
        let r = crate::quad::integrate(
            |z| pow(f + sigma * z, nb as f64) * norm_pdf(z),
            &[-12.0, -4.0, 0.0, 4.0, 12.0],
            &crate::quad::QuadConfig::with_rel_tol(1e-13),
        );
        let p = point(f, 0.0, 0.0);
        let ab = alpha_beta(&p, &gauss());
        let v = fy_exact(FyKind::Zero, nb, n, &p, &ab).unwrap();
        assert!(((v - r.value[0]) / v).abs() < 1e-11, "{v} {}", r.value[0]);
        assert!(norm_cdf(0.0) == 0.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn v0_nonnegative(n in 2usize..39, t in 1e-6f64..0.5, large in proptest::bool::ANY) {
            let mode = if large { EvalMode::LargeN } else { EvalMode::ExactSum };
            let ev = CoefficientEvaluator::new(n, gauss(), mode).unwrap();
            let c = ev.at(&point(1.0 - t, t, -t));
            prop_assert!(c.v0 >= -1e-12);
        }

        #[test]
        fn b0_is_excess(n in 2usize..39, t in 1e-4f64..0.6) {
            let ev = CoefficientEvaluator::new(n, gauss(), EvalMode::ExactSum).unwrap();
            let p = point(1.0 - t, t, -t);
            let c = ev.at(&p);
            let e = ev.expansion(n, &p);
            prop_assert!((c.b0 - (e.e0 - pow(1.0 - t, n as f64))).abs() < 1e-12);
        }
    }
}
