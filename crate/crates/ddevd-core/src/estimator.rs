//! The kernel estimator of the block-maximum CDF and its density.

use alloc::string::ToString;
use alloc::vec::Vec;

use libm::{exp, log, log1p};

use crate::distributions::BlockedSample;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::transforms::TransformSpec;

/// One positive bandwidth per block.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthVector(Vec<f64>);

impl BandwidthVector {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::InvalidInput("empty bandwidth vector".to_string()));
        }
        if let Some((i, v)) = h.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::NegativeBandwidth { index: i, value: *v });
        }
        Ok(Self(h))
    }

    pub fn uniform(h: f64, m: usize) -> Result<Self> {
        Self::new(alloc::vec![h; m])
    }

    /// Collapses per-observation bandwidths to their block means. The flag is
    /// set when any block carried non-constant values.
    pub fn from_per_observation(h: &[Vec<f64>]) -> Result<(Self, bool)> {
        let mut warned = false;
        let mut out = Vec::with_capacity(h.len());
        for row in h {
            if row.is_empty() {
                return Err(Error::InvalidInput("empty bandwidth row".to_string()));
            }
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            warned |= row.iter().any(|&v| v != row[0]);
            out.push(mean);
        }
        Ok((Self::new(out)?, warned))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// (1/n_i) sum_j K((y - X_ij) / h_i), returned with its complement.
pub fn inner_block_cdf(block: &[f64], h: f64, kernel: &KernelSpec, y: f64) -> f64 {
    let (lo, _) = unsorted_sums(block, h, kernel, y);
    (lo / block.len() as f64).clamp(0.0, 1.0)
}

fn unsorted_sums(block: &[f64], h: f64, kernel: &KernelSpec, y: f64) -> (f64, f64) {
    let mut lo = 0.0;
    let mut hi = 0.0;
    for &x in block {
        let u = (y - x) / h;
        lo += kernel.cdf(u);
        hi += kernel.sf(u);
    }
    (lo, hi)
}

/// A block's observations sorted once so that evaluation only touches the
/// points within kernel reach of y.
#[derive(Debug, Clone)]
pub(crate) struct SortedBlock {
    pub xs: Vec<f64>,
    pub h: f64,
}

pub(crate) struct BlockSums {
    /// n F_{i,h}(y)
    pub cdf: f64,
    /// n (1 - F_{i,h}(y))
    pub sf: f64,
    /// sum_j k(u_j) / h
    pub pdf: f64,
    /// sum_j k'(u_j) / h^2
    pub pdf_prime: f64,
}

impl SortedBlock {
    pub fn new(block: &[f64], h: f64) -> Self {
        let mut xs = block.to_vec();
        xs.sort_by(|a, b| a.total_cmp(b));
        Self { xs, h }
    }

    pub fn sums(&self, kernel: &KernelSpec, y: f64) -> BlockSums {
        let r = kernel.reach() * self.h;
        let start = self.xs.partition_point(|&x| x < y - r);
        let end = self.xs.partition_point(|&x| x <= y + r);
        let mut s = BlockSums { cdf: start as f64, sf: (self.xs.len() - end) as f64, pdf: 0.0, pdf_prime: 0.0 };
        for &x in &self.xs[start..end] {
            let (c, sf, d, dp) = kernel.eval_all((y - x) / self.h);
            s.cdf += c;
            s.sf += sf;
            s.pdf += d;
            s.pdf_prime += dp;
        }
        s.pdf /= self.h;
        s.pdf_prime /= self.h * self.h;
        s
    }
}

/// ln of F from counts (n F, n (1 - F)) without cancellation near 1.
pub(crate) fn ln_fraction(lo: f64, hi: f64, n: f64) -> f64 {
    if lo <= 0.0 {
        return log(1e-300);
    }
    if hi < 0.5 * n {
        log1p(-(hi / n).min(1.0))
    } else {
        log((lo / n).max(1e-300))
    }
}

/// A fitted estimator: sample, kernel, bandwidths and optional scale tag.
#[derive(Debug, Clone)]
pub struct DdevdFit {
    sample: BlockedSample,
    kernel: KernelSpec,
    h: BandwidthVector,
    transform: Option<TransformSpec>,
    sorted: Vec<SortedBlock>,
}

impl DdevdFit {
    pub fn new(sample: BlockedSample, kernel: KernelSpec, h: BandwidthVector) -> Result<Self> {
        if h.len() != sample.m() {
            return Err(Error::InvalidInput(alloc::format!(
                "{} bandwidths for {} blocks",
                h.len(),
                sample.m()
            )));
        }
        let sorted = sample.blocks().iter().zip(h.as_slice()).map(|(b, &hi)| SortedBlock::new(b, hi)).collect();
        Ok(Self { sample, kernel, h, transform: None, sorted })
    }

    pub fn with_transform(mut self, t: TransformSpec) -> Self {
        self.transform = Some(t);
        self
    }

    pub fn sample(&self) -> &BlockedSample {
        &self.sample
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn bandwidths(&self) -> &BandwidthVector {
        &self.h
    }

    pub fn transform(&self) -> Option<&TransformSpec> {
        self.transform.as_ref()
    }

    pub fn eval(&self, y: f64) -> f64 {
        ddevd_eval(self, y)
    }
}

/// (1/m) sum_i F_{i,h}(y)^{n_i}.
pub fn ddevd_eval(fit: &DdevdFit, y: f64) -> f64 {
    let mut total = 0.0;
    for b in &fit.sorted {
        let n = b.xs.len() as f64;
        let s = b.sums(&fit.kernel, y);
        total += exp(n * ln_fraction(s.cdf, s.sf, n));
    }
    (total / fit.sorted.len() as f64).clamp(0.0, 1.0)
}

/// Derivative of [`ddevd_eval`] in y.
pub fn ddevd_density(fit: &DdevdFit, y: f64) -> f64 {
    let mut total = 0.0;
    for b in &fit.sorted {
        let n = b.xs.len() as f64;
        let s = b.sums(&fit.kernel, y);
        if s.pdf == 0.0 {
            continue;
        }
        total += exp((n - 1.0) * ln_fraction(s.cdf, s.sf, n)) * s.pdf;
    }
    total / fit.sorted.len() as f64
}

/// y with ddevd_eval(y) = p, by bracketing and bisection.
pub fn ddevd_quantile(fit: &DdevdFit, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(alloc::format!("probability {p} not in (0, 1)")));
    }
    let (lo0, hi0) = fit.sample.range();
    let pad = 10.0 * fit.h.max();
    let (mut lo, mut hi) = (lo0 - pad, hi0 + pad);
    let mut width = hi - lo;
    let mut doublings = 0;
    while ddevd_eval(fit, lo) > p {
        width *= 2.0;
        lo -= width;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::NonBracketable(p));
        }
    }
    while ddevd_eval(fit, hi) < p {
        width *= 2.0;
        hi += width;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::NonBracketable(p));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ddevd_eval(fit, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The h -> 0 limit: (1/m) sum_i (empirical block CDF)^{n_i}.
pub fn staircase_cdf(sample: &BlockedSample, y: f64) -> f64 {
    let mut total = 0.0;
    for b in sample.blocks() {
        let below = b.iter().filter(|&&x| x <= y).count() as f64;
        let n = b.len() as f64;
        total += exp(n * log((below / n).max(1e-300)));
    }
    total / sample.m() as f64
}

/// Staircase evaluator with sorted blocks for repeated use.
#[derive(Debug, Clone)]
pub struct Staircase {
    blocks: Vec<Vec<f64>>,
}

impl Staircase {
    pub fn new(sample: &BlockedSample) -> Self {
        let blocks = sample
            .blocks()
            .iter()
            .map(|b| {
                let mut v = b.clone();
                v.sort_by(|a, c| a.total_cmp(c));
                v
            })
            .collect();
        Self { blocks }
    }

    pub fn eval(&self, y: f64) -> f64 {
        let mut total = 0.0;
        for b in &self.blocks {
            let n = b.len();
            let below = b.partition_point(|&x| x <= y);
            if below == n {
                total += 1.0;
            } else if below > 0 {
                total += exp(n as f64 * log(below as f64 / n as f64));
            }
        }
        total / self.blocks.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{sample_blocks, Builtin};
    use crate::special::{norm_cdf, norm_pdf};
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn fit(blocks: Vec<Vec<f64>>, h: Vec<f64>) -> DdevdFit {
        DdevdFit::new(BlockedSample::new(blocks).unwrap(), KernelSpec::gaussian(), BandwidthVector::new(h).unwrap())
            .unwrap()
    }

    #[test]
    fn inner_examples() {
        let k = KernelSpec::gaussian();
        assert_eq!(inner_block_cdf(&[0.0], 1.0, &k, 0.0), 0.5);
        assert!((inner_block_cdf(&[1.0, 3.0], 1.0, &k, 1e6) - 1.0).abs() < 1e-15);
        assert!((inner_block_cdf(&[0.0, 2.0], 0.5, &k, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn eval_examples() {
        assert_eq!(ddevd_eval(&fit(vec![vec![0.0]], vec![1.0]), 0.0), 0.5);
        let one = fit(vec![vec![0.3, 1.2, 2.0]], vec![0.4]);
        let two = fit(vec![vec![0.3, 1.2, 2.0], vec![0.3, 1.2, 2.0]], vec![0.4, 0.4]);
        for y in [-1.0, 0.5, 1.7, 3.0] {
            assert!((ddevd_eval(&one, y) - ddevd_eval(&two, y)).abs() < 1e-15);
        }
        assert!((ddevd_eval(&fit(vec![vec![0.0, 1.0]], vec![0.1]), 10.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn windowed_matches_direct() {
        let s = sample_blocks(&Builtin::Normal { mu: 0.0, sigma: 1.0 }, &[40, 25], 5).unwrap();
        let f = DdevdFit::new(s.clone(), KernelSpec::gaussian(), BandwidthVector::new(vec![0.3, 0.2]).unwrap()).unwrap();
        for i in 0..50 {
            let y = -4.0 + 0.17 * i as f64;
            let direct = s
                .blocks()
                .iter()
                .zip([0.3, 0.2])
                .map(|(b, h)| libm::pow(inner_block_cdf(b, h, f.kernel(), y), b.len() as f64))
                .sum::<f64>()
                / 2.0;
            assert!((ddevd_eval(&f, y) - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn density_examples() {
        let f = fit(vec![vec![0.0]], vec![1.0]);
        assert!((ddevd_density(&f, 0.0) - norm_pdf(0.0)).abs() < 1e-15);
        let g = fit(vec![vec![0.0, 1.0, 1.5], vec![2.0, -0.5]], vec![0.3, 0.6]);
        assert!(ddevd_density(&g, -40.0) < 1e-12);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let y: f64 = rng.gen_range(-2.0..4.0);
            let e = 1e-5;
            let fd = (ddevd_eval(&g, y + e) - ddevd_eval(&g, y - e)) / (2.0 * e);
            assert!((fd - ddevd_density(&g, y)).abs() < 1e-6);
        }
    }

    #[test]
    fn quantile_examples() {
        let f = fit(vec![vec![0.0]], vec![1.0]);
        assert!(ddevd_quantile(&f, 0.5).unwrap().abs() < 1e-12);
        let g = fit(vec![vec![0.0, 1.0]], vec![0.2]);
        let q = ddevd_quantile(&g, 0.9).unwrap();
        // dense-grid inversion oracle
        let cdf = |y: f64| libm::pow(0.5 * (norm_cdf(y / 0.2) + norm_cdf((y - 1.0) / 0.2)), 2.0);
        let mut y = 0.0;
        while cdf(y) < 0.9 {
            y += 1e-7;
        }
        assert!((q - y).abs() < 1e-6);
        for ys in [-0.3, 0.4, 1.1] {
            let p = ddevd_eval(&g, ys);
            assert!((ddevd_quantile(&g, p).unwrap() - ys).abs() < 1e-6);
        }
        assert!(ddevd_quantile(&g, 1.0).is_err());
    }

    #[test]
    fn saturation_beyond_data() {
        let g = fit(vec![vec![0.0, 1.0, 5.0], vec![2.0, -0.5]], vec![0.3, 0.6]);
        assert!(ddevd_eval(&g, -0.5 - 12.0 * 0.6) < 1e-10);
        assert!(ddevd_eval(&g, 5.0 + 12.0 * 0.6) > 1.0 - 1e-10);
    }

    #[test]
    fn small_h_is_staircase() {
        let s = sample_blocks(&Builtin::Exponential { rate: 1.0 }, &[10, 6, 8], 9).unwrap();
        let f = DdevdFit::new(s.clone(), KernelSpec::gaussian(), BandwidthVector::uniform(1e-8, 3).unwrap()).unwrap();
        let st = Staircase::new(&s);
        for i in 0..200 {
            let y = 0.013 + 0.031 * i as f64;
            assert!((ddevd_eval(&f, y) - staircase_cdf(&s, y)).abs() < 1e-6);
            assert_eq!(st.eval(y), staircase_cdf(&s, y));
        }
    }

    #[test]
    fn per_observation_collapse() {
        let (h, warned) = BandwidthVector::from_per_observation(&[vec![1.0, 3.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(h.as_slice(), &[2.0, 2.0]);
        assert!(warned);
        assert!(BandwidthVector::new(vec![1.0, -1.0]).is_err());
    }

    proptest! {
        #[test]
        fn monotone(seed in 0u64..500, h in 0.01f64..2.0) {
            let s = sample_blocks(&Builtin::Cauchy { loc: 0.0, scale: 1.0 }, &[7, 3], seed).unwrap();
            let f = DdevdFit::new(s, KernelSpec::gaussian(), BandwidthVector::uniform(h, 2).unwrap()).unwrap();
            let mut prev = 0.0;
            for i in 0..400 {
                let v = ddevd_eval(&f, -20.0 + 0.1 * i as f64);
                prop_assert!(v >= prev && v <= 1.0);
                prev = v;
            }
        }
    }
}
