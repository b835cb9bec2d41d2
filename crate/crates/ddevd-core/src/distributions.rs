//! Base distributions with tail metadata, the MEV target and synthetic data.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{atan, exp, expm1, log, log1p, pow, sqrt, tan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_isf, norm_pdf, norm_ppf, norm_sf, SQRT_2PI};

/// How tail integrals over the model are parameterized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailDomain {
    /// Integrate in t = 1 - F_X(y) with Jacobian 1/f_X, using `isf`.
    Probability,
    /// Integrate directly in y up to `upper`, where the model is saturated.
    Abscissa { upper: f64 },
}

/// Density values at one abscissa, with the upper-tail probability kept
/// separately so that 1 - F_X is never formed by cancellation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPoint {
    pub cdf: f64,
    pub sf: f64,
    pub pdf: f64,
    pub pdf_prime: f64,
}

/// An analytic base distribution, or a pilot estimate of one.
pub trait BaseModel: Send + Sync {
    fn name(&self) -> String;
    fn cdf(&self, y: f64) -> f64;
    fn sf(&self, y: f64) -> f64 {
        1.0 - self.cdf(y)
    }
    fn pdf(&self, y: f64) -> f64;
    fn pdf_prime(&self, y: f64) -> f64;
    fn quantile(&self, p: f64) -> f64;
    /// y with sf(y) = t.
    fn isf(&self, t: f64) -> f64 {
        self.quantile(1.0 - t)
    }
    fn support(&self) -> (f64, f64);
    /// Extreme value index, when known.
    fn gamma(&self) -> Option<f64>;
    /// D in f_X ~ D t^(gamma + 1) as t = 1 - F_X -> 0.
    fn tail_scale(&self) -> Option<f64>;
    /// Gumbel-class models whose tail constants use the exponential-like form.
    fn gumbel_approx(&self) -> bool {
        false
    }
    fn tail_domain(&self) -> TailDomain {
        TailDomain::Probability
    }
    fn tail_point(&self, y: f64) -> TailPoint {
        TailPoint { cdf: self.cdf(y), sf: self.sf(y), pdf: self.pdf(y), pdf_prime: self.pdf_prime(y) }
    }
    fn tail_point_at_sf(&self, t: f64) -> TailPoint {
        let y = self.isf(t);
        TailPoint { cdf: 1.0 - t, sf: t, pdf: self.pdf(y), pdf_prime: self.pdf_prime(y) }
    }
}

/// Built-in analytic models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Builtin {
    Normal { mu: f64, sigma: f64 },
    Exponential { rate: f64 },
    /// Pareto type I with shape `alpha` and minimum `scale`.
    Pareto { alpha: f64, scale: f64 },
    Cauchy { loc: f64, scale: f64 },
    Uniform { lo: f64, hi: f64 },
    Lognormal { mu: f64, sigma: f64 },
}

/// Model by name with positional parameters; missing parameters take the
/// standard values (normal 0 1, exponential 1, pareto 2 1, cauchy 0 1,
/// uniform 0 1, lognormal 0 1).
pub fn builtin_model(name: &str, params: &[f64]) -> Result<Builtin> {
    let p = |i: usize, d: f64| params.get(i).copied().unwrap_or(d);
    let model = match name {
        "normal" => Builtin::Normal { mu: p(0, 0.0), sigma: p(1, 1.0) },
        "exponential" => Builtin::Exponential { rate: p(0, 1.0) },
        "pareto" => Builtin::Pareto { alpha: p(0, 2.0), scale: p(1, 1.0) },
        "cauchy" => Builtin::Cauchy { loc: p(0, 0.0), scale: p(1, 1.0) },
        "uniform" => Builtin::Uniform { lo: p(0, 0.0), hi: p(1, 1.0) },
        "lognormal" => Builtin::Lognormal { mu: p(0, 0.0), sigma: p(1, 1.0) },
        other => {
            return Err(Error::Config(format!(
                "unknown model '{other}' (expected normal, exponential, pareto, cauchy, uniform or lognormal)"
            )))
        }
    };
    model.validate()?;
    Ok(model)
}

impl Builtin {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Builtin::Normal { sigma, .. } | Builtin::Lognormal { sigma, .. } => sigma > 0.0,
            Builtin::Exponential { rate } => rate > 0.0,
            Builtin::Pareto { alpha, scale } => alpha > 0.0 && scale > 0.0,
            Builtin::Cauchy { scale, .. } => scale > 0.0,
            Builtin::Uniform { lo, hi } => hi > lo,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid parameters for {self:?}")))
        }
    }
}

impl BaseModel for Builtin {
    fn name(&self) -> String {
        match *self {
            Builtin::Normal { mu, sigma } => format!("normal({mu}, {sigma})"),
            Builtin::Exponential { rate } => format!("exponential({rate})"),
            Builtin::Pareto { alpha, scale } => format!("pareto({alpha}, {scale})"),
            Builtin::Cauchy { loc, scale } => format!("cauchy({loc}, {scale})"),
            Builtin::Uniform { lo, hi } => format!("uniform({lo}, {hi})"),
            Builtin::Lognormal { mu, sigma } => format!("lognormal({mu}, {sigma})"),
        }
    }

    fn cdf(&self, y: f64) -> f64 {
        match *self {
            Builtin::Normal { mu, sigma } => norm_cdf((y - mu) / sigma),
            Builtin::Exponential { rate } => {
                if y <= 0.0 {
                    0.0
                } else {
                    -expm1(-rate * y)
                }
            }
            Builtin::Pareto { alpha, scale } => {
                if y <= scale {
                    0.0
                } else {
                    1.0 - pow(scale / y, alpha)
                }
            }
            Builtin::Cauchy { loc, scale } => 0.5 + atan((y - loc) / scale) / PI,
            Builtin::Uniform { lo, hi } => ((y - lo) / (hi - lo)).clamp(0.0, 1.0),
            Builtin::Lognormal { mu, sigma } => {
                if y <= 0.0 {
                    0.0
                } else {
                    norm_cdf((log(y) - mu) / sigma)
                }
            }
        }
    }

    fn sf(&self, y: f64) -> f64 {
        match *self {
            Builtin::Normal { mu, sigma } => norm_sf((y - mu) / sigma),
            Builtin::Exponential { rate } => {
                if y <= 0.0 {
                    1.0
                } else {
                    exp(-rate * y)
                }
            }
            Builtin::Pareto { alpha, scale } => {
                if y <= scale {
                    1.0
                } else {
                    pow(scale / y, alpha)
                }
            }
            Builtin::Cauchy { loc, scale } => {
                let z = (y - loc) / scale;
                if z > 1.0 {
                    atan(1.0 / z) / PI
                } else {
                    0.5 - atan(z) / PI
                }
            }
            Builtin::Uniform { lo, hi } => ((hi - y) / (hi - lo)).clamp(0.0, 1.0),
            Builtin::Lognormal { mu, sigma } => {
                if y <= 0.0 {
                    1.0
                } else {
                    norm_sf((log(y) - mu) / sigma)
                }
            }
        }
    }

    fn pdf(&self, y: f64) -> f64 {
        match *self {
            Builtin::Normal { mu, sigma } => norm_pdf((y - mu) / sigma) / sigma,
            Builtin::Exponential { rate } => {
                if y < 0.0 {
                    0.0
                } else {
                    rate * exp(-rate * y)
                }
            }
            Builtin::Pareto { alpha, scale } => {
                if y < scale {
                    0.0
                } else {
                    alpha / scale * pow(scale / y, alpha + 1.0)
                }
            }
            Builtin::Cauchy { loc, scale } => {
                let z = (y - loc) / scale;
                1.0 / (PI * scale * (1.0 + z * z))
            }
            Builtin::Uniform { lo, hi } => {
                if y < lo || y > hi {
                    0.0
                } else {
                    1.0 / (hi - lo)
                }
            }
            Builtin::Lognormal { mu, sigma } => {
                if y <= 0.0 {
                    0.0
                } else {
                    norm_pdf((log(y) - mu) / sigma) / (sigma * y)
                }
            }
        }
    }

    fn pdf_prime(&self, y: f64) -> f64 {
        match *self {
            Builtin::Normal { mu, sigma } => {
                let z = (y - mu) / sigma;
                -z * norm_pdf(z) / (sigma * sigma)
            }
            Builtin::Exponential { rate } => {
                if y < 0.0 {
                    0.0
                } else {
                    -rate * rate * exp(-rate * y)
                }
            }
            Builtin::Pareto { alpha, scale } => {
                if y < scale {
                    0.0
                } else {
                    -alpha * (alpha + 1.0) / (scale * scale) * pow(scale / y, alpha + 2.0)
                }
            }
            Builtin::Cauchy { loc, scale } => {
                let z = (y - loc) / scale;
                -2.0 * z / (PI * scale * scale * (1.0 + z * z) * (1.0 + z * z))
            }
            Builtin::Uniform { .. } => 0.0,
            Builtin::Lognormal { mu, sigma } => {
                if y <= 0.0 {
                    0.0
                } else {
                    let z = (log(y) - mu) / sigma;
                    -self.pdf(y) * (1.0 + z / sigma) / y
                }
            }
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        if p > 0.5 {
            return self.isf(1.0 - p);
        }
        match *self {
            Builtin::Normal { mu, sigma } => mu + sigma * norm_ppf(p),
            Builtin::Exponential { rate } => -log1p(-p) / rate,
            Builtin::Pareto { alpha, scale } => scale * pow(1.0 - p, -1.0 / alpha),
            Builtin::Cauchy { loc, scale } => loc + scale * tan(PI * (p - 0.5)),
            Builtin::Uniform { lo, hi } => lo + p * (hi - lo),
            Builtin::Lognormal { mu, sigma } => exp(mu + sigma * norm_ppf(p)),
        }
    }

    fn isf(&self, t: f64) -> f64 {
        match *self {
            Builtin::Normal { mu, sigma } => mu + sigma * norm_isf(t),
            Builtin::Exponential { rate } => -log(t) / rate,
            Builtin::Pareto { alpha, scale } => scale * pow(t, -1.0 / alpha),
            Builtin::Cauchy { loc, scale } => {
                if t < 0.5 {
                    loc + scale / tan(PI * t)
                } else {
                    loc + scale * tan(PI * (0.5 - t))
                }
            }
            Builtin::Uniform { lo, hi } => hi - t * (hi - lo),
            Builtin::Lognormal { mu, sigma } => exp(mu + sigma * norm_isf(t)),
        }
    }

    fn support(&self) -> (f64, f64) {
        match *self {
            Builtin::Normal { .. } | Builtin::Cauchy { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Builtin::Exponential { .. } | Builtin::Lognormal { .. } => (0.0, f64::INFINITY),
            Builtin::Pareto { scale, .. } => (scale, f64::INFINITY),
            Builtin::Uniform { lo, hi } => (lo, hi),
        }
    }

    fn gamma(&self) -> Option<f64> {
        Some(match *self {
            Builtin::Normal { .. } | Builtin::Exponential { .. } | Builtin::Lognormal { .. } => 0.0,
            Builtin::Pareto { alpha, .. } => 1.0 / alpha,
            Builtin::Cauchy { .. } => 1.0,
            Builtin::Uniform { .. } => -1.0,
        })
    }

    fn tail_scale(&self) -> Option<f64> {
        match *self {
            Builtin::Exponential { rate } => Some(rate),
            Builtin::Normal { sigma, .. } => Some(1.0 / (SQRT_2PI * sigma)),
            Builtin::Pareto { alpha, scale } => Some(alpha / scale),
            Builtin::Cauchy { scale, .. } => Some(PI / scale),
            Builtin::Uniform { lo, hi } => Some(1.0 / (hi - lo)),
            Builtin::Lognormal { .. } => tail_regression(self).map(|r| r.tail_scale),
        }
    }

    fn gumbel_approx(&self) -> bool {
        matches!(self, Builtin::Normal { .. } | Builtin::Exponential { .. } | Builtin::Lognormal { .. })
    }
}

/// Least-squares fit of log f_X against log t over F_X in [0.995, 0.99999].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    pub gamma: f64,
    pub tail_scale: f64,
}

pub fn tail_regression<M: BaseModel + ?Sized>(model: &M) -> Option<TailFit> {
    tail_regression_over(model, 1e-5, 5e-3)
}

/// The same regression over upper-tail probabilities in [t_lo, t_hi].
pub fn tail_regression_over<M: BaseModel + ?Sized>(model: &M, t_lo: f64, t_hi: f64) -> Option<TailFit> {
    let (lo, hi) = (log(t_lo), log(t_hi));
    let k = 16;
    let mut pts = Vec::with_capacity(k);
    for i in 0..k {
        let lt = lo + (hi - lo) * i as f64 / (k - 1) as f64;
        let f = model.pdf(model.isf(exp(lt)));
        if f > 0.0 && f.is_finite() {
            pts.push((lt, log(f)));
        }
    }
    let (slope, intercept) = least_squares(&pts)?;
    Some(TailFit { gamma: slope - 1.0, tail_scale: exp(intercept) })
}

/// Ordinary least squares y = slope x + intercept.
pub fn least_squares(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// m blocks of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockedSample {
    blocks: Vec<Vec<f64>>,
    seed: Option<u64>,
}

impl BlockedSample {
    pub fn new(blocks: Vec<Vec<f64>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidInput("a sample needs at least one block".to_string()));
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.is_empty() {
                return Err(Error::InvalidInput(format!("block {i} is empty")));
            }
            if let Some(x) = b.iter().find(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("block {i} holds non-finite value {x}")));
            }
        }
        Ok(Self { blocks, seed: None })
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }

    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn total(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn pooled(&self) -> Vec<f64> {
        self.blocks.iter().flatten().copied().collect()
    }

    pub fn range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &x in self.blocks.iter().flatten() {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        (lo, hi)
    }

    /// Applies `f` to every observation.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let blocks = self.blocks.iter().map(|b| b.iter().map(|&x| f(x)).collect()).collect();
        let mut s = Self::new(blocks)?;
        s.seed = self.seed;
        Ok(s)
    }

    /// FNV-1a digest of the block structure and values.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: u64| {
            for byte in v.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for b in &self.blocks {
            eat(b.len() as u64);
            for x in b {
                eat(x.to_bits());
            }
        }
        h
    }
}

/// (1/m) sum_i F_X(y)^{n_i}, with powers taken in log space.
pub fn mev_target_cdf<M: BaseModel + ?Sized>(model: &M, block_sizes: &[usize], y: f64) -> f64 {
    let ln_f = ln_cdf(model.cdf(y), model.sf(y));
    let m = block_sizes.len() as f64;
    block_sizes.iter().map(|&n| exp(n as f64 * ln_f)).sum::<f64>() / m
}

/// log F computed from whichever of F, 1 - F is more accurate.
pub(crate) fn ln_cdf(cdf: f64, sf: f64) -> f64 {
    if cdf <= 0.0 {
        f64::NEG_INFINITY
    } else if sf < 0.5 {
        log1p(-sf)
    } else {
        log(cdf)
    }
}

/// Inverse-transform sampling of one block per entry of `block_sizes`.
pub fn sample_blocks<M: BaseModel + ?Sized>(model: &M, block_sizes: &[usize], seed: u64) -> Result<BlockedSample> {
    if block_sizes.is_empty() || block_sizes.contains(&0) {
        return Err(Error::InvalidInput("block sizes must be positive and nonempty".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Vec::with_capacity(block_sizes.len());
    for &n in block_sizes {
        let mut b = Vec::with_capacity(n);
        while b.len() < n {
            let u: f64 = rng.gen();
            if u <= 0.0 || u >= 1.0 {
                continue;
            }
            let x = model.quantile(u);
            if x.is_finite() {
                b.push(x);
            }
        }
        blocks.push(b);
    }
    let mut s = BlockedSample::new(blocks)?;
    s.seed = Some(seed);
    Ok(s)
}

/// Standard normal deviate by the polar method.
pub fn normal_deviate<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = 2.0 * rng.gen::<f64>() - 1.0;
        let v: f64 = 2.0 * rng.gen::<f64>() - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * sqrt(-2.0 * log(s) / s);
        }
    }
}
