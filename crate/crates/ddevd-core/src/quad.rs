//! Globally adaptive Gauss-Kronrod (10/21) quadrature for vector integrands.

use alloc::vec;
use alloc::vec::Vec;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-8, abs_tol: 1e-300, max_intervals: 4000 }
    }
}

impl QuadConfig {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self { rel_tol, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct QuadResult {
    pub value: Vec<f64>,
    pub error: Vec<f64>,
    /// Integral of |f| per component; tolerances are relative to it.
    pub magnitude: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
}

impl QuadResult {
    /// Component with the worst error-to-tolerance ratio.
    pub fn worst_component(&self, cfg: &QuadConfig) -> usize {
        let mut worst = 0;
        let mut ratio = -1.0;
        for j in 0..self.value.len() {
            let r = self.error[j] / tolerance(cfg, self.magnitude[j]);
            if r > ratio {
                ratio = r;
                worst = j;
            }
        }
        worst
    }
}

fn tolerance(cfg: &QuadConfig, magnitude: f64) -> f64 {
    (cfg.rel_tol * magnitude).max(cfg.abs_tol)
}

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
    magnitude: Vec<f64>,
}

fn gk21<F: FnMut(f64, &mut [f64])>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    let mut mag = vec![0.0; dim];
    f(center, buf);
    for j in 0..dim {
        kron[j] = WGK[10] * buf[j];
        mag[j] = WGK[10] * buf[j].abs();
    }
    for i in 0..10 {
        let dx = half * XGK[i];
        for x in [center - dx, center + dx] {
            f(x, buf);
            for j in 0..dim {
                kron[j] += WGK[i] * buf[j];
                mag[j] += WGK[i] * buf[j].abs();
                if i % 2 == 1 {
                    gauss[j] += WG[i / 2] * buf[j];
                }
            }
        }
    }
    let scale = half.abs();
    let mut error = vec![0.0; dim];
    for j in 0..dim {
        kron[j] *= half;
        gauss[j] *= half;
        mag[j] *= scale;
        error[j] = (kron[j] - gauss[j]).abs();
        if !kron[j].is_finite() {
            error[j] = f64::INFINITY;
        }
    }
    Panel { a, b, value: kron, error, magnitude: mag }
}

/// Integrates a `dim`-component function over consecutive panels given by
/// `breakpoints` (at least two, ascending), refining the panel with the
/// largest scaled error until every component meets its tolerance.
pub fn integrate_vec<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    dim: usize,
    breakpoints: &[f64],
    cfg: &QuadConfig,
) -> QuadResult {
    let mut buf = vec![0.0; dim];
    let mut panels: Vec<Panel> = Vec::new();
    for w in breakpoints.windows(2) {
        if w[1] > w[0] {
            panels.push(gk21(&mut f, w[0], w[1], dim, &mut buf));
        }
    }
    let mut evaluations = 21 * panels.len();
    loop {
        let mut value = vec![0.0; dim];
        let mut error = vec![0.0; dim];
        let mut magnitude = vec![0.0; dim];
        for p in &panels {
            for j in 0..dim {
                value[j] += p.value[j];
                error[j] += p.error[j];
                magnitude[j] += p.magnitude[j];
            }
        }
        let tol: Vec<f64> = magnitude.iter().map(|&m| tolerance(cfg, m)).collect();
        let done = (0..dim).all(|j| error[j] <= tol[j]);
        if done || panels.len() >= cfg.max_intervals || panels.is_empty() {
            return QuadResult { value, error, magnitude, evaluations, converged: done };
        }
        let mut worst = 0;
        let mut worst_score = -1.0;
        for (i, p) in panels.iter().enumerate() {
            let score = p.error.iter().zip(&tol).map(|(e, t)| e / t).fold(0.0f64, f64::max);
            if score > worst_score {
                worst_score = score;
                worst = i;
            }
        }
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            return QuadResult { value, error, magnitude, evaluations, converged: false };
        }
        panels.push(gk21(&mut f, p.a, mid, dim, &mut buf));
        panels.push(gk21(&mut f, mid, p.b, dim, &mut buf));
        evaluations += 42;
    }
}

/// Scalar convenience wrapper over [`integrate_vec`].
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, breakpoints: &[f64], cfg: &QuadConfig) -> QuadResult {
    integrate_vec(|x, out| out[0] = f(x), 1, breakpoints, cfg)
}

/// `count` breakpoints from `hi` down towards `lo > 0` in ratio `ratio`, then `0`.
/// Returned ascending, suited to integrands with structure at the origin.
pub fn geometric_breakpoints(hi: f64, lo: f64, ratio: f64) -> Vec<f64> {
    let mut pts = vec![hi];
    let mut x = hi;
    while x > lo {
        x /= ratio;
        pts.push(x);
    }
    pts.push(0.0);
    pts.reverse();
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use libm::{exp, sqrt};

    #[test]
    fn polynomials_exact() {
        let r = integrate(|x| x.powi(20) * 21.0, &[0.0, 1.0], &QuadConfig::default());
        assert!((r.value[0] - 1.0).abs() < 1e-14);
        assert!(r.evaluations == 21);
    }

    #[test]
    fn weights_sum() {
        let k: f64 = WGK[10] + 2.0 * WGK[..10].iter().sum::<f64>();
        let g: f64 = 2.0 * WG.iter().sum::<f64>();
        assert!((k - 2.0).abs() < 1e-15 && (g - 2.0).abs() < 1e-15);
    }

    #[test]
    fn singular_endpoint() {
        let bp = geometric_breakpoints(1.0, 1e-12, 4.0);
        let r = integrate(|x| 1.0 / sqrt(x), &bp, &QuadConfig::with_rel_tol(1e-10));
        assert!((r.value[0] - 2.0).abs() < 1e-5, "{}", r.value[0]);
    }

    #[test]
    fn vector_components_and_zero_integral() {
        let r = integrate_vec(
            |x, out| {
                out[0] = exp(-x * x);
                out[1] = x * exp(-x * x);
            },
            2,
            &[-9.0, 0.0, 9.0],
            &QuadConfig::with_rel_tol(1e-12),
        );
        assert!(r.converged);
        assert!((r.value[0] - sqrt(core::f64::consts::PI)).abs() < 1e-12);
        assert!(r.value[1].abs() < 1e-13);
    }
}
