//! CDF kernels and their moments.
//!
//! A CDF kernel `K` is a distribution function; its derivative `k` is the
//! usual density kernel. Every expansion coefficient is parameterized by the
//! plain moments `mu_{K,p} = int u^p k(u) du` and the squared moments
//! `mu_{K^2,p} = int u^p d(K(u)^2)`, p = 1, 2.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use libm::pow;

use crate::error::{Error, Result};
use crate::quad::{integrate_vec, QuadConfig};
use crate::special::{norm_cdf, norm_pdf, norm_sf};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    Plain,
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMoments {
    pub mu_k1: f64,
    pub mu_k2: f64,
    pub mu_k2_1: f64,
    pub mu_k2_2: f64,
}

impl KernelMoments {
    /// `mu_{K^2,2} / (2 mu_{K,2})`.
    pub fn kappa(&self) -> f64 {
        self.mu_k2_2 / (2.0 * self.mu_k2)
    }

    pub fn get(&self, kind: MomentKind, p: u32) -> f64 {
        match (kind, p) {
            (MomentKind::Plain, 1) => self.mu_k1,
            (MomentKind::Plain, _) => self.mu_k2,
            (MomentKind::Squared, 1) => self.mu_k2_1,
            (MomentKind::Squared, _) => self.mu_k2_2,
        }
    }
}

/// A CDF kernel with its density and cached moments.
#[derive(Clone)]
pub struct KernelSpec {
    name: String,
    cdf: RealFn,
    sf: RealFn,
    density: RealFn,
    density_prime: Option<RealFn>,
    /// Half-width beyond which the kernel is treated as saturated.
    reach: f64,
    bounded: bool,
    moments: KernelMoments,
    gaussian: bool,
}

impl core::fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("KernelSpec")
            .field("name", &self.name)
            .field("reach", &self.reach)
            .field("moments", &self.moments)
            .finish()
    }
}

impl KernelSpec {
    pub fn gaussian() -> Self {
        Self::build(
            "gaussian",
            Arc::new(norm_cdf),
            Arc::new(norm_sf),
            Arc::new(norm_pdf),
            Some(Arc::new(|u: f64| -u * norm_pdf(u))),
            None,
        )
        .map(|k| Self { gaussian: true, ..k })
        .expect("gaussian kernel moments are finite")
    }

    pub fn epanechnikov() -> Self {
        fn cdf(u: f64) -> f64 {
            if u <= -1.0 {
                0.0
            } else if u >= 1.0 {
                1.0
            } else {
                0.5 + 0.75 * u - 0.25 * u * u * u
            }
        }
        Self::build(
            "epanechnikov",
            Arc::new(cdf),
            Arc::new(|u: f64| cdf(-u)),
            Arc::new(|u: f64| if u.abs() < 1.0 { 0.75 * (1.0 - u * u) } else { 0.0 }),
            Some(Arc::new(|u: f64| if u.abs() < 1.0 { -1.5 * u } else { 0.0 })),
            Some(1.0),
        )
        .expect("epanechnikov kernel moments are finite")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "gaussian" => Ok(Self::gaussian()),
            "epanechnikov" => Ok(Self::epanechnikov()),
            other => Err(Error::Config(alloc::format!(
                "unknown kernel '{other}' (expected gaussian or epanechnikov)"
            ))),
        }
    }

    /// User kernel. `support` is the half-width of a compact support, or
    /// `None` for unbounded kernels, which are truncated where the density
    /// drops below 1e-14.
    pub fn custom(
        name: &str,
        cdf: RealFn,
        density: RealFn,
        density_prime: Option<RealFn>,
        support: Option<f64>,
    ) -> Result<Self> {
        let c = cdf.clone();
        Self::build(name, cdf, Arc::new(move |u| 1.0 - c(u)), density, density_prime, support)
    }

    fn build(
        name: &str,
        cdf: RealFn,
        sf: RealFn,
        density: RealFn,
        density_prime: Option<RealFn>,
        support: Option<f64>,
    ) -> Result<Self> {
        let (reach, bounded) = match support {
            Some(s) => (s, true),
            None => (truncation_radius(&*density)?, false),
        };
        let moments = compute_moments(&*cdf, &*density, reach, bounded)?;
        Ok(Self { name: name.to_string(), cdf, sf, density, density_prime, reach, bounded, moments, gaussian: false })
    }

    /// The kernel dilated by `s`: cdf_s(u) = cdf(u / s).
    pub fn dilated(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidInput("dilation must be positive".to_string()));
        }
        let (c, sf, d) = (self.cdf.clone(), self.sf.clone(), self.density.clone());
        let dp = self.density_prime.clone().map(|g| -> RealFn { Arc::new(move |u: f64| g(u / s) / (s * s)) });
        Self::build(
            &alloc::format!("{}*{}", self.name, s),
            Arc::new(move |u| c(u / s)),
            Arc::new(move |u| sf(u / s)),
            Arc::new(move |u| d(u / s) / s),
            dp,
            if self.bounded { Some(self.reach * s) } else { None },
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn cdf(&self, u: f64) -> f64 {
        (self.cdf)(u)
    }

    /// 1 - cdf(u) without cancellation where the kernel provides it.
    pub fn sf(&self, u: f64) -> f64 {
        (self.sf)(u)
    }

    pub fn density(&self, u: f64) -> f64 {
        (self.density)(u)
    }

    pub fn density_prime(&self, u: f64) -> Option<f64> {
        self.density_prime.as_ref().map(|g| g(u))
    }

    /// (cdf, sf, density, density') at u; density' is 0 when unavailable.
    pub fn eval_all(&self, u: f64) -> (f64, f64, f64, f64) {
        if self.gaussian {
            let lower = 0.5 * libm::erfc(u.abs() * core::f64::consts::FRAC_1_SQRT_2);
            let d = norm_pdf(u);
            let (c, s) = if u < 0.0 { (lower, 1.0 - lower) } else { (1.0 - lower, lower) };
            return (c, s, d, -u * d);
        }
        (self.cdf(u), self.sf(u), self.density(u), self.density_prime(u).unwrap_or(0.0))
    }

    pub fn has_density_prime(&self) -> bool {
        self.density_prime.is_some()
    }

    /// Beyond |u| > reach the kernel is 0 or 1 to double precision.
    pub fn reach(&self) -> f64 {
        self.reach
    }

    pub fn moments(&self) -> KernelMoments {
        self.moments
    }

    pub fn is_zero_mean(&self) -> bool {
        self.moments.mu_k1.abs() < 1e-10
    }
}

/// Kernel moment lookup; moments are computed once at construction.
pub fn kernel_moment(kernel: &KernelSpec, kind: MomentKind, p: u32) -> Result<f64> {
    if p != 1 && p != 2 {
        return Err(Error::InvalidInput(alloc::format!("moment order {p} not in {{1, 2}}")));
    }
    Ok(kernel.moments.get(kind, p))
}

fn truncation_radius(density: &dyn Fn(f64) -> f64) -> Result<f64> {
    let mut r = 1.0;
    while density(r) >= 1e-14 || density(-r) >= 1e-14 {
        r *= 1.25;
        if r > 1e12 {
            return Err(Error::KernelMomentDivergence("density does not decay".to_string()));
        }
    }
    // The remaining tail must not carry visible second moment.
    if pow(r, 3.0) * (density(r) + density(-r)) > 1e-8 {
        return Err(Error::KernelMomentDivergence(alloc::format!(
            "second moment tail at |u| = {r:e} is not negligible"
        )));
    }
    Ok(r)
}

fn compute_moments(
    cdf: &dyn Fn(f64) -> f64,
    density: &dyn Fn(f64) -> f64,
    reach: f64,
    bounded: bool,
) -> Result<KernelMoments> {
    let cfg = QuadConfig { rel_tol: 1e-12, abs_tol: 1e-15, max_intervals: 2000 };
    let mut bp: Vec<f64> = Vec::new();
    let pieces = if bounded { 2 } else { 16 };
    for i in 0..=pieces {
        bp.push(-reach + 2.0 * reach * i as f64 / pieces as f64);
    }
    let r = integrate_vec(
        |u, out| {
            let k = density(u);
            let k2 = 2.0 * cdf(u) * k;
            out[0] = k;
            out[1] = u * k;
            out[2] = u * u * k;
            out[3] = u * k2;
            out[4] = u * u * k2;
        },
        5,
        &bp,
        &cfg,
    );
    if !r.converged || r.value.iter().any(|v| !v.is_finite()) {
        return Err(Error::KernelMomentDivergence("moment quadrature did not converge".to_string()));
    }
    if (r.value[0] - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidInput(alloc::format!(
            "kernel density integrates to {} instead of 1",
            r.value[0]
        )));
    }
    Ok(KernelMoments { mu_k1: r.value[1], mu_k2: r.value[2], mu_k2_1: r.value[3], mu_k2_2: r.value[4] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gaussian_moments() {
        let k = KernelSpec::gaussian();
        let m = k.moments();
        assert!(m.mu_k1.abs() < 1e-12);
        assert!((m.mu_k2 - 1.0).abs() < 1e-10);
        assert!((m.mu_k2_1 - 1.0 / libm::sqrt(core::f64::consts::PI)).abs() < 1e-10);
        assert!((m.mu_k2_2 - 1.0).abs() < 1e-8);
        assert!((m.kappa() - 0.5).abs() < 1e-8);
        assert_eq!(kernel_moment(&k, MomentKind::Plain, 2).unwrap(), m.mu_k2);
    }

    #[test]
    fn epanechnikov_moments() {
        let m = KernelSpec::epanechnikov().moments();
        assert!(m.mu_k1.abs() < 1e-14);
        assert!((m.mu_k2 - 0.2).abs() < 1e-12);
        assert!((m.mu_k2_1 - 9.0 / 35.0).abs() < 1e-12);
        assert!((m.mu_k2_2 - 0.2).abs() < 1e-12);
    }

    #[test]
    fn cdf_limits_and_monotone() {
        for k in [KernelSpec::gaussian(), KernelSpec::epanechnikov()] {
            let mut prev = 0.0;
            for i in -400..=400 {
                let c = k.cdf(i as f64 * 0.025);
                assert!(c >= prev);
                prev = c;
                assert!((k.sf(i as f64 * 0.025) + c - 1.0).abs() < 1e-15);
            }
            assert!(k.cdf(-50.0) == 0.0 && k.cdf(50.0) == 1.0);
        }
    }

    #[test]
    fn heavy_kernel_rejected() {
        let cauchy = KernelSpec::custom(
            "cauchy",
            Arc::new(|u| 0.5 + libm::atan(u) / core::f64::consts::PI),
            Arc::new(|u| 1.0 / (core::f64::consts::PI * (1.0 + u * u))),
            None,
            None,
        );
        assert!(matches!(cauchy, Err(Error::KernelMomentDivergence(_))));
    }

    #[test]
    fn bad_order() {
        assert!(kernel_moment(&KernelSpec::gaussian(), MomentKind::Plain, 3).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn dilation_scales_moments(s in 0.2f64..5.0) {
            for k in [KernelSpec::gaussian(), KernelSpec::epanechnikov()] {
                let d = k.dilated(s).unwrap().moments();
                let m = k.moments();
                prop_assert!((d.mu_k2 - s * s * m.mu_k2).abs() < 1e-8 * (1.0 + s * s));
                prop_assert!((d.mu_k2_1 - s * m.mu_k2_1).abs() < 1e-8 * (1.0 + s));
                prop_assert!((d.mu_k2_2 - s * s * m.mu_k2_2).abs() < 1e-8 * (1.0 + s * s));
                prop_assert!((d.mu_k1 - s * m.mu_k1).abs() < 1e-8);
            }
        }
    }
}
