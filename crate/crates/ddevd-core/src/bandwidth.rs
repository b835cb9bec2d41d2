//! The order-two q-MISE model in the bandwidth vector and its minimizer.
//!
//! With B0 = sum_j b0_j, the model is
//! const0 + sum_i h_i c_i + sum_kl h_k h_l Q_kl where
//! c_i = int 2 B0 b1_i + V1_i, Q_kl = int b1_k b1_l + delta_kl (2 B0 b2_k + V2_k)
//! and const0 = int B0^2 + sum_j V0_j, all over [F_X^{-1}(q), upper endpoint).
//! These are m^2 times the q-MISE; `normalization` holds 1/m^2.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::distributions::{BaseModel, TailDomain, TailPoint};
use crate::error::{Error, Result};
use crate::estimator::BandwidthVector;
use crate::expansion::{CoefficientEvaluator, ModeChoice, PointwiseCoefficients};
use crate::kernels::KernelSpec;
use crate::quad::{geometric_breakpoints, integrate_vec, QuadConfig, QuadResult};

/// Smallest upper-tail probability reached by tail integrals.
pub const TAIL_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum QStructure {
    /// Q = a I + b E with E the all-ones matrix.
    Toeplitz { a: f64, b: f64 },
    /// Row-major m x m.
    Dense(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiseQuadratic {
    pub c: Vec<f64>,
    pub structure: QStructure,
    pub const0: f64,
    pub q: f64,
    /// 1/m^2: multiplies the model value to give the q-MISE.
    pub normalization: f64,
}

impl MiseQuadratic {
    pub fn m(&self) -> usize {
        self.c.len()
    }

    pub fn q_entry(&self, k: usize, l: usize) -> f64 {
        match &self.structure {
            QStructure::Toeplitz { a, b } => {
                if k == l {
                    a + b
                } else {
                    *b
                }
            }
            QStructure::Dense(q) => q[k * self.m() + l],
        }
    }

    pub fn dense_q(&self) -> DMatrix<f64> {
        let m = self.m();
        DMatrix::from_fn(m, m, |k, l| self.q_entry(k, l))
    }

    /// Toeplitz form built directly, mainly for tests and synthetic models.
    pub fn toeplitz(c: Vec<f64>, a: f64, b: f64, const0: f64) -> Self {
        let m = c.len() as f64;
        Self { c, structure: QStructure::Toeplitz { a, b }, const0, q: 0.0, normalization: 1.0 / (m * m) }
    }

    pub fn dense(c: Vec<f64>, q_matrix: Vec<f64>, const0: f64) -> Self {
        let m = c.len() as f64;
        Self { c, structure: QStructure::Dense(q_matrix), const0, q: 0.0, normalization: 1.0 / (m * m) }
    }

    /// q-MISE predicted by the model at h.
    pub fn mise(&self, h: &[f64]) -> f64 {
        self.normalization * quadratic_value(self, h)
    }
}

/// Options for tail integration.
#[derive(Debug, Clone, Copy)]
pub struct TailOptions {
    pub mode: ModeChoice,
    pub rel_tol: f64,
    pub max_intervals: usize,
    pub cutoff: f64,
}

impl Default for TailOptions {
    fn default() -> Self {
        Self { mode: ModeChoice::Auto, rel_tol: 1e-8, max_intervals: 4000, cutoff: TAIL_CUTOFF }
    }
}

/// Integrates `g(point, y, out)` over the q-tail of the model in the model's
/// natural variable, applying the Jacobian. Returns the raw result.
pub fn integrate_over_tail<M, G>(
    model: &M,
    q: f64,
    dim: usize,
    opts: &TailOptions,
    mut g: G,
) -> Result<QuadResult>
where
    M: BaseModel + ?Sized,
    G: FnMut(&TailPoint, f64, &mut [f64]),
{
    if !(0.0..1.0).contains(&q) {
        return Err(Error::InvalidInput(alloc::format!("q = {q} not in [0, 1)")));
    }
    let cfg = QuadConfig { rel_tol: opts.rel_tol, abs_tol: 1e-300, max_intervals: opts.max_intervals };
    let mut support_violation: Option<f64> = None;
    let result = match model.tail_domain() {
        TailDomain::Probability => {
            let t_hi = 1.0 - q;
            let mut bp = geometric_breakpoints(t_hi, opts.cutoff * t_hi.min(1.0), 2.0);
            bp[0] = opts.cutoff * t_hi.min(1.0) / 2.0;
            integrate_vec(
                |t, out| {
                    let p = model.tail_point_at_sf(t);
                    if !(p.pdf > 0.0) {
                        support_violation.get_or_insert(t);
                        out.fill(0.0);
                        return;
                    }
                    let y = model.isf(t);
                    g(&p, y, out);
                    let jac = 1.0 / p.pdf;
                    for v in out.iter_mut() {
                        *v *= jac;
                    }
                },
                dim,
                &bp,
                &cfg,
            )
        }
        TailDomain::Abscissa { upper } => {
            let lo = model.quantile(q);
            let mut bp = vec![lo];
            let mut t = 1.0 - q;
            loop {
                t *= 0.5;
                if t < opts.cutoff {
                    break;
                }
                let y = model.isf(t);
                if !(y.is_finite() && y < upper) {
                    break;
                }
                if y > *bp.last().unwrap() {
                    bp.push(y);
                }
            }
            bp.push(upper.max(lo));
            integrate_vec(
                |y, out| {
                    let p = model.tail_point(y);
                    g(&p, y, out);
                },
                dim,
                &bp,
                &cfg,
            )
        }
    };
    if let Some(t) = support_violation {
        return Err(Error::ModelSupport(alloc::format!(
            "f_X vanishes inside the q-tail at upper-tail probability {t:e}"
        )));
    }
    Ok(result)
}

struct SizeGroup {
    n: usize,
    count: usize,
    eval: CoefficientEvaluator,
}

fn size_groups(block_sizes: &[usize], kernel: &KernelSpec, mode: ModeChoice) -> Result<Vec<SizeGroup>> {
    let mut groups: Vec<SizeGroup> = Vec::new();
    for &n in block_sizes {
        if n < 2 {
            return Err(Error::InvalidInput(alloc::format!("block size {n}: bandwidth selection needs n_i > 1")));
        }
        if let Some(g) = groups.iter_mut().find(|g| g.n == n) {
            g.count += 1;
        } else {
            groups.push(SizeGroup { n, count: 1, eval: CoefficientEvaluator::new(n, kernel.moments(), mode.resolve(n))? });
        }
    }
    Ok(groups)
}

fn integration_error(names: &[String], r: &QuadResult, opts: &TailOptions) -> Error {
    let cfg = QuadConfig { rel_tol: opts.rel_tol, abs_tol: 1e-300, max_intervals: opts.max_intervals };
    let w = r.worst_component(&cfg);
    Error::Integration {
        coefficient: names[w].clone(),
        detail: alloc::format!(
            "value {:e}, error estimate {:e} after {} evaluations",
            r.value[w],
            r.error[w],
            r.evaluations
        ),
    }
}

/// Builds c, Q and const0 by quadrature over the q-tail.
pub fn assemble_mise_quadratic<M: BaseModel + ?Sized>(
    model: &M,
    block_sizes: &[usize],
    kernel: &KernelSpec,
    q: f64,
) -> Result<MiseQuadratic> {
    assemble_with(model, block_sizes, kernel, q, &TailOptions::default())
}

pub fn assemble_with<M: BaseModel + ?Sized>(
    model: &M,
    block_sizes: &[usize],
    kernel: &KernelSpec,
    q: f64,
    opts: &TailOptions,
) -> Result<MiseQuadratic> {
    if block_sizes.is_empty() {
        return Err(Error::InvalidInput("no blocks".to_string()));
    }
    let groups = size_groups(block_sizes, kernel, opts.mode)?;
    let u = groups.len();
    let pairs: Vec<(usize, usize)> = (0..u).flat_map(|i| (i..u).map(move |j| (i, j))).collect();
    let dim = 2 * u + pairs.len() + 1;
    let mut names = Vec::with_capacity(dim);
    for g in &groups {
        names.push(alloc::format!("c (n = {})", g.n));
    }
    for g in &groups {
        names.push(alloc::format!("Q diagonal (n = {})", g.n));
    }
    for &(i, j) in &pairs {
        names.push(alloc::format!("Q b1 product (n = {}, {})", groups[i].n, groups[j].n));
    }
    names.push("const0".to_string());
    let mut pw: Vec<PointwiseCoefficients> = Vec::with_capacity(u);
    let r = integrate_over_tail(model, q, dim, opts, |p, _y, out| {
        pw.clear();
        let mut b0 = 0.0;
        let mut v0 = 0.0;
        for g in &groups {
            let c = g.eval.at(p);
            b0 += g.count as f64 * c.b0;
            v0 += g.count as f64 * c.v0;
            pw.push(c);
        }
        for (i, c) in pw.iter().enumerate() {
            out[i] = 2.0 * b0 * c.b1 + c.v1;
            out[u + i] = 2.0 * b0 * c.b2() + c.v2();
        }
        for (k, &(i, j)) in pairs.iter().enumerate() {
            out[2 * u + k] = pw[i].b1 * pw[j].b1;
        }
        out[dim - 1] = b0 * b0 + v0;
    })?;
    if !r.converged || r.value.iter().any(|v| !v.is_finite()) {
        return Err(integration_error(&names, &r, opts));
    }
    let index: Vec<usize> = block_sizes.iter().map(|n| groups.iter().position(|g| g.n == *n).unwrap()).collect();
    let c: Vec<f64> = index.iter().map(|&i| r.value[i]).collect();
    let pair_value = |i: usize, j: usize| {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        r.value[2 * u + pairs.iter().position(|&p| p == (i, j)).unwrap()]
    };
    let structure = if u == 1 {
        QStructure::Toeplitz { a: r.value[u], b: pair_value(0, 0) }
    } else {
        let m = block_sizes.len();
        let mut qm = vec![0.0; m * m];
        for k in 0..m {
            for l in 0..m {
                let mut v = pair_value(index[k], index[l]);
                if k == l {
                    v += r.value[u + index[k]];
                }
                qm[k * m + l] = v;
            }
        }
        QStructure::Dense(qm)
    };
    let m = block_sizes.len() as f64;
    Ok(MiseQuadratic { c, structure, const0: r.value[dim - 1], q, normalization: 1.0 / (m * m) })
}

/// Eigenvalues of a I + b E: (a with multiplicity m - 1, a + m b once).
pub fn toeplitz_eigenvalues(a: f64, b: f64, m: usize) -> ((f64, usize), (f64, usize)) {
    ((a, m.saturating_sub(1)), (a + m as f64 * b, 1))
}

pub fn min_eigenvalue(mq: &MiseQuadratic) -> f64 {
    match &mq.structure {
        QStructure::Toeplitz { a, b } => {
            let ((s, ms), (l, _)) = toeplitz_eigenvalues(*a, *b, mq.m());
            if ms == 0 {
                l
            } else {
                s.min(l)
            }
        }
        QStructure::Dense(_) => {
            let e = mq.dense_q().symmetric_eigen();
            e.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
        }
    }
}

/// The stationary point -Q^{-1} c / 2 without sign checks.
pub fn stationary_point(mq: &MiseQuadratic) -> Result<Vec<f64>> {
    match &mq.structure {
        QStructure::Toeplitz { a, b } => {
            let m = mq.m() as f64;
            let lam = min_eigenvalue(mq);
            if !(lam > 0.0) {
                return Err(Error::UnstableOptimum { min_eig: lam });
            }
            let total: f64 = mq.c.iter().sum();
            let shift = b * total / (a + m * b);
            Ok(mq.c.iter().map(|ci| -0.5 * (ci - shift) / a).collect())
        }
        QStructure::Dense(_) => {
            let q = mq.dense_q();
            match q.clone().cholesky() {
                Some(ch) => {
                    let rhs = nalgebra::DVector::from_iterator(mq.m(), mq.c.iter().map(|v| -0.5 * v));
                    Ok(ch.solve(&rhs).iter().copied().collect())
                }
                None => Err(Error::UnstableOptimum { min_eig: min_eigenvalue(mq) }),
            }
        }
    }
}

/// h_opt = -Q^{-1} c / 2, required to be positive.
pub fn solve_h_opt(mq: &MiseQuadratic) -> Result<BandwidthVector> {
    let h = stationary_point(mq)?;
    if let Some((index, &value)) = h.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NegativeBandwidth { index, value });
    }
    BandwidthVector::new(h)
}

/// const0 + c.h + h.Q.h
pub fn quadratic_value(mq: &MiseQuadratic, h: &[f64]) -> f64 {
    let lin: f64 = mq.c.iter().zip(h).map(|(c, h)| c * h).sum();
    let quad = match &mq.structure {
        QStructure::Toeplitz { a, b } => {
            let s: f64 = h.iter().sum();
            a * h.iter().map(|v| v * v).sum::<f64>() + b * s * s
        }
        QStructure::Dense(q) => {
            let m = h.len();
            let mut acc = 0.0;
            for k in 0..m {
                for l in 0..m {
                    acc += h[k] * q[k * m + l] * h[l];
                }
            }
            acc
        }
    };
    mq.const0 + lin + quad
}

pub fn mise_quadratic_value(mq: &MiseQuadratic, h: &BandwidthVector) -> f64 {
    quadratic_value(mq, h.as_slice())
}

/// c + 2 Q h
pub fn gradient(mq: &MiseQuadratic, h: &[f64]) -> Vec<f64> {
    let m = h.len();
    (0..m).map(|k| mq.c[k] + 2.0 * (0..m).map(|l| mq.q_entry(k, l) * h[l]).sum::<f64>()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Builtin;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_and_two_by_two() {
        let mq = MiseQuadratic::dense(vec![-1.0, -3.0], vec![2.0, 0.0, 0.0, 2.0], 0.0);
        let h = solve_h_opt(&mq).unwrap();
        assert!((h.as_slice()[0] - 0.25).abs() < 1e-15 && (h.as_slice()[1] - 0.75).abs() < 1e-15);
        let t = MiseQuadratic::toeplitz(vec![-4.0, -4.0], 2.0, 1.0, 0.0);
        let h = solve_h_opt(&t).unwrap();
        assert!((h.as_slice()[0] - 0.5).abs() < 1e-15 && (h.as_slice()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn eigen_examples() {
        assert_eq!(toeplitz_eigenvalues(1.0, 0.0, 7), ((1.0, 6), (1.0, 1)));
        assert_eq!(toeplitz_eigenvalues(2.0, 1.0, 3), ((2.0, 2), (5.0, 1)));
        let mq = MiseQuadratic::toeplitz(vec![0.0; 50], 0.3, 0.07, 0.0);
        let e = mq.dense_q().symmetric_eigen();
        let mut ev: Vec<f64> = e.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        assert!((ev[0] - 0.3).abs() < 1e-10 && (ev[48] - 0.3).abs() < 1e-10);
        assert!((ev[49] - (0.3 + 50.0 * 0.07)).abs() < 1e-10);
    }

    #[test]
    fn unstable_and_negative() {
        let mq = MiseQuadratic::toeplitz(vec![-1.0; 4], -0.1, 1.0, 0.0);
        assert!(matches!(solve_h_opt(&mq), Err(Error::UnstableOptimum { .. })));
        let mq = MiseQuadratic::toeplitz(vec![1.0; 4], 1.0, 0.0, 0.0);
        assert!(matches!(solve_h_opt(&mq), Err(Error::NegativeBandwidth { .. })));
        let mq = MiseQuadratic::dense(vec![-1.0, -1.0], vec![1.0, 2.0, 2.0, 1.0], 0.0);
        assert!(matches!(solve_h_opt(&mq), Err(Error::UnstableOptimum { .. })));
    }

    #[test]
    fn value_examples() {
        let mq = MiseQuadratic::toeplitz(vec![-4.0, -3.0], 2.0, 0.5, 1.5);
        assert_eq!(quadratic_value(&mq, &[0.0, 0.0]), 1.5);
        let h = solve_h_opt(&mq).unwrap();
        let v = mise_quadratic_value(&mq, &h);
        let scaled = |s: f64| quadratic_value(&mq, &h.as_slice().iter().map(|x| x * s).collect::<Vec<_>>());
        assert!(v <= scaled(1.1) && v <= scaled(0.9));
        assert!(gradient(&mq, h.as_slice()).iter().all(|g| g.abs() < 1e-12));
    }

    fn random_spd(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let a: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut q = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                q[i * m + j] = (0..m).map(|k| a[i * m + k] * a[j * m + k]).sum::<f64>();
            }
            q[i * m + i] += 0.5;
        }
        q
    }

    #[test]
    fn toeplitz_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in [1usize, 2, 5, 30] {
            let c: Vec<f64> = (0..m).map(|_| -rng.gen_range(0.1..2.0)).collect();
            let t = MiseQuadratic::toeplitz(c.clone(), 0.7, 0.2, 0.0);
            let d = MiseQuadratic::dense(c, t.dense_q().as_slice().to_vec(), 0.0);
            let (ht, hd) = (stationary_point(&t).unwrap(), stationary_point(&d).unwrap());
            for (a, b) in ht.iter().zip(&hd) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn stationarity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for m in 1..=8 {
            let q = random_spd(m, &mut rng);
            let c: Vec<f64> = (0..m).map(|_| -rng.gen_range(0.1..2.0)).collect();
            let mq = MiseQuadratic::dense(c, q, 0.0);
            let h = stationary_point(&mq).unwrap();
            assert!(gradient(&mq, &h).iter().all(|g| g.abs() < 1e-9));
        }
    }

    #[test]
    fn exponential_assembly_is_spd() {
        let k = KernelSpec::gaussian();
        let mq = assemble_mise_quadratic(&Builtin::Exponential { rate: 1.0 }, &[50; 5], &k, 0.9).unwrap();
        assert!(matches!(mq.structure, QStructure::Toeplitz { .. }));
        assert!(min_eigenvalue(&mq) > 0.0);
        if let QStructure::Toeplitz { b, .. } = mq.structure {
            assert!(b >= 0.0);
        }
        let dense = mq.dense_q().symmetric_eigen();
        assert!(dense.eigenvalues.iter().all(|&e| e > 0.0));
        let h = solve_h_opt(&mq).unwrap();
        assert!(h.as_slice().iter().all(|&v| (v - h.as_slice()[0]).abs() < 1e-12));
    }

    #[test]
    fn unequal_sizes_dense_and_permutation() {
        let k = KernelSpec::gaussian();
        let model = Builtin::Exponential { rate: 1.0 };
        let a = assemble_mise_quadratic(&model, &[30, 60, 30, 45], &k, 0.9).unwrap();
        let b = assemble_mise_quadratic(&model, &[60, 45, 30, 30], &k, 0.9).unwrap();
        let ha = solve_h_opt(&a).unwrap();
        let hb = solve_h_opt(&b).unwrap();
        let (x, y) = (ha.as_slice(), hb.as_slice());
        assert!((x[1] - y[0]).abs() < 1e-12 && (x[3] - y[1]).abs() < 1e-12 && (x[0] - y[2]).abs() < 1e-12);
        for k in 0..4 {
            for l in 0..4 {
                assert!((a.q_entry(k, l) - a.q_entry(l, k)).abs() <= 1e-10 * a.q_entry(k, k).abs());
            }
        }
    }

    #[test]
    fn equal_sizes_give_equal_c() {
        let k = KernelSpec::gaussian();
        let mq = assemble_mise_quadratic(&Builtin::Pareto { alpha: 2.0, scale: 1.0 }, &[20; 6], &k, 0.9).unwrap();
        assert!(mq.c.iter().all(|&v| v == mq.c[0]));
        let d = mq.dense_q().symmetric_eigen();
        let mut ev: Vec<f64> = d.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        assert!((ev[0] - ev[4]).abs() < 1e-10 * ev[5].abs() && (ev[5] - ev[0]).abs() > 1e-6 * ev[5].abs());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn perturbations_do_not_improve(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = rng.gen_range(1..8);
            let q = random_spd(m, &mut rng);
            let c: Vec<f64> = (0..m).map(|_| -rng.gen_range(0.1..2.0)).collect();
            let mq = MiseQuadratic::dense(c, q, 0.3);
            let h = stationary_point(&mq).unwrap();
            let v = quadratic_value(&mq, &h);
            let norm = libm::sqrt(h.iter().map(|x| x * x).sum::<f64>());
            for _ in 0..100 {
                let d: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
                let dn = libm::sqrt(d.iter().map(|x| x * x).sum::<f64>());
                let s = rng.gen_range(0.0..0.5) * norm / dn;
                let hp: Vec<f64> = h.iter().zip(&d).map(|(a, b)| a + s * b).collect();
                prop_assert!(quadratic_value(&mq, &hp) >= v - 1e-12 * v.abs());
            }
        }
    }
}
