//! The Floquet-Bloch fiber operator on omega x T and its lowest eigenpairs.
//!
//! In the basis (finite differences on omega) x (plane waves e^{i ell x3}),
//! the quadratic form
//!
//! ```text
//! q[u; k] = int |grad_t u|^2 + |(beta d_phi + d3 + ik) u|^2
//! ```
//!
//! assembles exactly into block form. Writing G for d_phi, L for -Delta_t,
//! b_m for the Fourier coefficients of beta and (b2)_m for those of beta^2,
//! the block coupling longitudinal modes ell' -> ell (m = ell - ell') is
//!
//! ```text
//! A_{ell,ell'} = delta_m [ L + (ell+k)^2 ]
//!              + i b_m [ (ell'+k) G^T - (ell+k) G ]        (|m| <= M)
//!              + (b2)_m G^T G                              (|m| <= 2M)
//! ```
//!
//! The beta^2 convolution runs over all intermediate modes, so this is the
//! exact Galerkin matrix of the form on the truncated trial space: eigenvalues
//! decrease monotonically as ell_max grows (min-max), and Hermiticity holds
//! bitwise because paired entries are assembled from identical products.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::TransverseOperators;
use crate::linalg::{self, C64, HermitianOp, Preconditioner, SolverError};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error)]
pub enum FiberError {
    #[error("ell_max = {ell_max} is below the twist truncation order M = {required}")]
    TruncationTooSmall { ell_max: usize, required: usize },
    #[error("eigensolver failed: {0}")]
    Solver(#[from] SolverError),
    #[error("requested {requested} eigenpairs from a dimension-{dim} fiber")]
    CountTooLarge { requested: usize, dim: usize },
}

/// 2pi-periodic twist rate as a finite Fourier series. Only coefficients for
/// m >= 0 are stored; b_{-m} = conj(b_m), so the evaluated profile is real.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwistProfile {
    coeffs: Vec<C64>,
}

impl TwistProfile {
    /// `coeffs[m]` is the coefficient of e^{i m x3}, m = 0..=M. The m = 0
    /// coefficient must be real.
    pub fn new(coeffs: Vec<C64>) -> Result<Self, String> {
        if coeffs.is_empty() {
            return Err("twist profile needs at least the constant coefficient".into());
        }
        if coeffs[0].im != 0.0 {
            return Err(format!("constant twist coefficient must be real, got {}", coeffs[0]));
        }
        Ok(TwistProfile { coeffs })
    }

    pub fn constant(b0: f64) -> Self {
        TwistProfile { coeffs: vec![C64::new(b0, 0.0)] }
    }

    /// beta(x) = b0 + 2 amp cos(m x): a convenient non-constant profile.
    pub fn with_cosine(b0: f64, amp: f64, m: usize) -> Self {
        let mut coeffs = vec![C64::new(0.0, 0.0); m + 1];
        coeffs[0] = C64::new(b0, 0.0);
        coeffs[m] = C64::new(amp, 0.0);
        TwistProfile { coeffs }
    }

    /// Truncation order M.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, m: i64) -> C64 {
        let am = m.unsigned_abs() as usize;
        if am >= self.coeffs.len() {
            C64::new(0.0, 0.0)
        } else if m >= 0 {
            self.coeffs[am]
        } else {
            self.coeffs[am].conj()
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut v = self.coeffs[0].re;
        for (m, c) in self.coeffs.iter().enumerate().skip(1) {
            let phase = C64::from_polar(1.0, m as f64 * x);
            v += 2.0 * (c * phase).re;
        }
        v
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().skip(1).all(|c| c.norm() == 0.0)
    }

    pub fn sup_abs(&self) -> f64 {
        let n = 4096;
        (0..n)
            .map(|i| self.eval(2.0 * std::f64::consts::PI * i as f64 / n as f64).abs())
            .fold(0.0, f64::max)
    }

    /// Fourier coefficients of beta^2 for m = 0..=2M (negative by conjugation).
    pub fn squared_coeffs(&self) -> Vec<C64> {
        let m_max = self.order();
        let mut out = vec![C64::new(0.0, 0.0); 2 * m_max + 1];
        for (m, slot) in out.iter_mut().enumerate() {
            // (b^2)_m = sum_p b_p b_{m-p}
            let mut acc = C64::new(0.0, 0.0);
            for p in -(m_max as i64)..=(m_max as i64) {
                acc += self.coeff(p) * self.coeff(m as i64 - p);
            }
            *slot = acc;
        }
        out[0] = C64::new(out[0].re, 0.0);
        out
    }
}

fn beta2_coeff(beta2: &[C64], m: i64) -> C64 {
    let am = m.unsigned_abs() as usize;
    if am >= beta2.len() {
        C64::new(0.0, 0.0)
    } else if m >= 0 {
        beta2[am]
    } else {
        beta2[am].conj()
    }
}

/// Assembled fiber at quasimomentum k; block ell x transverse node, with
/// block index b = ell + ell_max.
pub struct FiberMatrix {
    pub k: f64,
    pub ell_max: usize,
    pub n_omega: usize,
    lap: CsrMatrix,
    g: CsrMatrix,
    gt: CsrMatrix,
    gtg: CsrMatrix,
    beta: TwistProfile,
    beta2: Vec<C64>,
}

/// Lowest eigenpairs in the block basis. Values ascend; vectors are
/// orthonormal and gauge-fixed (largest-magnitude entry real positive).
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<C64>>,
    pub residuals: Vec<f64>,
}

/// Dense-solve threshold on the fiber dimension; above it the shift-invert
/// Lanczos path is used.
pub const DENSE_THRESHOLD: usize = 3000;

pub fn assemble_fiber(
    ops: &TransverseOperators,
    beta: &TwistProfile,
    k: f64,
    ell_max: usize,
) -> Result<FiberMatrix, FiberError> {
    if ell_max < beta.order() {
        return Err(FiberError::TruncationTooSmall { ell_max, required: beta.order() });
    }
    let g = ops.dphi.clone();
    Ok(FiberMatrix {
        k,
        ell_max,
        n_omega: ops.n_nodes(),
        lap: ops.laplacian_t.clone(),
        gt: g.transpose(),
        gtg: g.gram(),
        g,
        beta: beta.clone(),
        beta2: beta.squared_coeffs(),
    })
}

impl FiberMatrix {
    pub fn n_blocks(&self) -> usize {
        2 * self.ell_max + 1
    }

    pub fn dim(&self) -> usize {
        self.n_omega * self.n_blocks()
    }

    fn ell_of_block(&self, b: usize) -> i64 {
        b as i64 - self.ell_max as i64
    }

    /// Dense Hermitian matrix; exact (bitwise) Hermiticity by construction.
    pub fn to_dense(&self) -> Array2<C64> {
        let n = self.n_omega;
        let dim = self.dim();
        let mut a = Array2::<C64>::zeros((dim, dim));
        let m_max = self.beta.order() as i64;
        let lap = self.lap.triplets();
        let g = self.g.triplets();
        let gtg = self.gtg.triplets();

        for bt in 0..self.n_blocks() {
            let ell_t = self.ell_of_block(bt);
            for bs in 0..self.n_blocks() {
                let ell_s = self.ell_of_block(bs);
                let m = ell_t - ell_s;
                let (ro, co) = (bt * n, bs * n);
                if m == 0 {
                    for &(r, c, v) in &lap {
                        a[(ro + r, co + c)] += C64::new(v, 0.0);
                    }
                    let t = ell_t as f64 + self.k;
                    for i in 0..n {
                        a[(ro + i, co + i)] += C64::new(t * t, 0.0);
                    }
                }
                if m.abs() <= m_max {
                    let bm = self.beta.coeff(m);
                    let wp = bm * C64::new(0.0, ell_s as f64 + self.k); // i b_m (ell'+k) G^T
                    let wm = bm * C64::new(0.0, -(ell_t as f64 + self.k)); // -i b_m (ell+k) G
                    for &(r, c, v) in &g {
                        // G^T entry at (c, r)
                        a[(ro + c, co + r)] += wp * v;
                        a[(ro + r, co + c)] += wm * v;
                    }
                }
                let b2 = beta2_coeff(&self.beta2, m);
                if b2.norm_sqr() != 0.0 {
                    for &(r, c, v) in &gtg {
                        a[(ro + r, co + c)] += b2 * v;
                    }
                }
            }
        }
        a
    }

    /// max |A - A^H| over all entries of the dense assembly.
    pub fn hermiticity_error(&self) -> f64 {
        let a = self.to_dense();
        let dim = a.nrows();
        let mut worst = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn dump_triplets(&self) -> String {
        let a = self.to_dense();
        let mut s = format!(
            "# twistgap fiber-matrix v1 k={:.16e} ell_max={} n_omega={}\n",
            self.k, self.ell_max, self.n_omega
        );
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let v = a[(i, j)];
                if v.norm_sqr() != 0.0 {
                    s.push_str(&format!("{} {} {:.16e} {:.16e}\n", i, j, v.re, v.im));
                }
            }
        }
        s
    }
}

impl HermitianOp for FiberMatrix {
    fn dim(&self) -> usize {
        self.n_omega * (2 * self.ell_max + 1)
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let n = self.n_omega;
        let nb = self.n_blocks();
        let m_max = self.beta.order() as i64;
        let m2_max = 2 * m_max;
        for v in y.iter_mut() {
            *v = C64::new(0.0, 0.0);
        }
        // per-source-block sparse applies, reused across targets
        let mut gx = vec![C64::new(0.0, 0.0); n * nb];
        let mut gtx = vec![C64::new(0.0, 0.0); n * nb];
        let mut ggx = vec![C64::new(0.0, 0.0); n * nb];
        for bs in 0..nb {
            let xs = &x[bs * n..(bs + 1) * n];
            self.g.apply_complex(xs, &mut gx[bs * n..(bs + 1) * n]);
            self.gt.apply_complex(xs, &mut gtx[bs * n..(bs + 1) * n]);
            self.gtg.apply_complex(xs, &mut ggx[bs * n..(bs + 1) * n]);
        }
        for bt in 0..nb {
            let ell_t = self.ell_of_block(bt);
            let t = ell_t as f64 + self.k;
            {
                let xs = &x[bt * n..(bt + 1) * n];
                let yt = &mut y[bt * n..(bt + 1) * n];
                self.lap.apply_complex_scaled(C64::new(1.0, 0.0), xs, yt);
                for (yi, xi) in yt.iter_mut().zip(xs) {
                    *yi += xi * (t * t);
                }
            }
            for m in -m2_max..=m2_max {
                let ell_s = ell_t - m;
                let bsi = ell_s + self.ell_max as i64;
                if bsi < 0 || bsi >= nb as i64 {
                    continue;
                }
                let bsi = bsi as usize;
                let s = ell_s as f64 + self.k;
                if m.abs() <= m_max {
                    let bm = self.beta.coeff(m);
                    if bm.norm_sqr() != 0.0 {
                        let wp = bm * C64::new(0.0, s);
                        let wm = bm * C64::new(0.0, -t);
                        let yt = &mut y[bt * n..(bt + 1) * n];
                        for i in 0..n {
                            yt[i] += wp * gtx[bsi * n + i] + wm * gx[bsi * n + i];
                        }
                    }
                }
                let b2 = beta2_coeff(&self.beta2, m);
                if b2.norm_sqr() != 0.0 {
                    let yt = &mut y[bt * n..(bt + 1) * n];
                    for i in 0..n {
                        yt[i] += b2 * ggx[bsi * n + i];
                    }
                }
            }
        }
    }
}

/// Eigendecomposition of the transverse Laplacian, shared across a k-sweep.
/// Feeds the block preconditioner of the iterative path.
pub struct TransverseEigen {
    pub vals: Vec<f64>,
    pub vecs: Array2<f64>,
}

impl TransverseEigen {
    pub fn new(ops: &TransverseOperators) -> Self {
        let (vals, vecs) = linalg::eigh_real(&ops.laplacian_t.to_dense());
        TransverseEigen { vals, vecs }
    }
}

/// Block-diagonal preconditioner (L + (ell+k)^2)^{-1}: spectrally equivalent
/// to the fiber uniformly in the discretization, so CG iteration counts stay
/// bounded as the grid refines.
struct FiberPrec<'a> {
    teig: &'a TransverseEigen,
    ell_max: usize,
    k: f64,
}

impl Preconditioner for FiberPrec<'_> {
    fn apply(&self, r: &[C64], z: &mut [C64]) {
        let n = self.teig.vals.len();
        let nb = 2 * self.ell_max + 1;
        let v = &self.teig.vecs;
        let mut packed = Array2::<f64>::zeros((n, 2));
        for b in 0..nb {
            let ell = b as i64 - self.ell_max as i64;
            let c = (ell as f64 + self.k).powi(2);
            let rb = &r[b * n..(b + 1) * n];
            for i in 0..n {
                packed[(i, 0)] = rb[i].re;
                packed[(i, 1)] = rb[i].im;
            }
            let mut proj = v.t().dot(&packed);
            for i in 0..n {
                let d = 1.0 / (self.teig.vals[i] + c);
                proj[(i, 0)] *= d;
                proj[(i, 1)] *= d;
            }
            let back = v.dot(&proj);
            let zb = &mut z[b * n..(b + 1) * n];
            for i in 0..n {
                zb[i] = C64::new(back[(i, 0)], back[(i, 1)]);
            }
        }
    }
}

/// Lowest `count` eigenpairs. Dense Hermitian solve below [`DENSE_THRESHOLD`],
/// shift-invert Lanczos above (the transverse eigendecomposition is computed
/// on the fly; sweeps use [`lowest_eigenpairs_with`] to share it).
pub fn lowest_eigenpairs(
    fm: &FiberMatrix,
    count: usize,
    tol: f64,
) -> Result<EigenPairs, FiberError> {
    lowest_eigenpairs_with(fm, count, tol, None)
}

/// Like [`lowest_eigenpairs`] but reusing a shared transverse
/// eigendecomposition when the iterative path is taken.
pub fn lowest_eigenpairs_with(
    fm: &FiberMatrix,
    count: usize,
    tol: f64,
    teig: Option<&TransverseEigen>,
) -> Result<EigenPairs, FiberError> {
    let dim = fm.dim();
    if count > dim {
        return Err(FiberError::CountTooLarge { requested: count, dim });
    }
    if dim <= DENSE_THRESHOLD {
        let a = fm.to_dense();
        let (vals, vecs) = linalg::eigh_complex(&a);
        let mut out = Vec::with_capacity(count);
        for c in 0..count {
            out.push(vecs.column(c).to_vec());
        }
        finish_pairs(fm, vals[..count].to_vec(), out)
    } else {
        let owned;
        let teig = match teig {
            Some(t) => t,
            None => {
                let (vals, vecs) = linalg::eigh_real(&fm.lap.to_dense());
                owned = TransverseEigen { vals, vecs };
                &owned
            }
        };
        lowest_eigenpairs_iterative(fm, count, tol, teig)
    }
}

/// Lowest eigenvalues only. The dense path skips the eigenvector
/// back-transformation, which dominates zheev's cost; band sweeps and edge
/// refinements go through here.
pub fn lowest_values(
    fm: &FiberMatrix,
    count: usize,
    tol: f64,
    teig: Option<&TransverseEigen>,
) -> Result<Vec<f64>, FiberError> {
    let dim = fm.dim();
    if count > dim {
        return Err(FiberError::CountTooLarge { requested: count, dim });
    }
    if dim <= DENSE_THRESHOLD {
        let vals = linalg::eigvalsh_complex(&fm.to_dense());
        Ok(vals[..count].to_vec())
    } else {
        lowest_eigenpairs_with(fm, count, tol, teig).map(|p| p.values)
    }
}

/// Shift-invert Lanczos path, regardless of dimension.
pub fn lowest_eigenpairs_iterative(
    fm: &FiberMatrix,
    count: usize,
    tol: f64,
    teig: &TransverseEigen,
) -> Result<EigenPairs, FiberError> {
    let dim = fm.dim();
    if count > dim {
        return Err(FiberError::CountTooLarge { requested: count, dim });
    }
    let prec = FiberPrec { teig, ell_max: fm.ell_max, k: fm.k };
    let max_steps = (12 * (count + 4)).max(100).min(dim);
    let (vals, vecs) = linalg::lowest_eigenpairs_shift_invert(fm, &prec, count, tol, max_steps)?;
    finish_pairs(fm, vals, vecs)
}

fn finish_pairs(
    fm: &FiberMatrix,
    values: Vec<f64>,
    mut vectors: Vec<Vec<C64>>,
) -> Result<EigenPairs, FiberError> {
    let dim = fm.dim();
    let mut residuals = Vec::with_capacity(values.len());
    let mut ay = vec![C64::new(0.0, 0.0); dim];
    for (val, vec) in values.iter().zip(vectors.iter_mut()) {
        fm.apply(vec, &mut ay);
        linalg::caxpy(C64::new(-val, 0.0), vec, &mut ay);
        residuals.push(linalg::cnorm(&ay));
        linalg::gauge_fix(vec);
    }
    Ok(EigenPairs { values, vectors, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{assemble_transverse, build_grid, CrossSectionShape};
    use approx::assert_relative_eq;

    fn square_ops(h: f64) -> TransverseOperators {
        let g = build_grid(&CrossSectionShape::rectangle(1.0, 1.0), h).unwrap();
        assemble_transverse(&g)
    }

    #[test]
    fn straight_tube_spectrum_is_separable() {
        let ops = square_ops(0.2);
        let beta = TwistProfile::constant(0.0);
        let k = 0.3;
        let ell_max = 2;
        let fm = assemble_fiber(&ops, &beta, k, ell_max).unwrap();
        let pairs = lowest_eigenpairs(&fm, 10, 1e-9).unwrap();

        // reference: lambda_j(omega) + (ell+k)^2 over the same discrete L
        let (lam, _) = linalg::eigh_real(&ops.laplacian_t.to_dense());
        let mut expect: Vec<f64> = Vec::new();
        for ell in -(ell_max as i64)..=(ell_max as i64) {
            for &l in &lam {
                expect.push(l + (ell as f64 + k).powi(2));
            }
        }
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for i in 0..10 {
            assert_relative_eq!(pairs.values[i], expect[i], max_relative = 1e-9);
        }
    }

    #[test]
    fn hermiticity_is_exact() {
        let ops = square_ops(0.25);
        let beta = TwistProfile::with_cosine(0.3, 0.15, 2);
        let fm = assemble_fiber(&ops, &beta, 0.21, 3).unwrap();
        assert_eq!(fm.hermiticity_error(), 0.0);
    }

    #[test]
    fn matvec_matches_dense() {
        let ops = square_ops(0.25);
        let beta = TwistProfile::with_cosine(0.4, 0.2, 1);
        let fm = assemble_fiber(&ops, &beta, -0.17, 2).unwrap();
        let a = fm.to_dense();
        let dim = fm.dim();
        let x = linalg::deterministic_start(dim);
        let mut y = vec![C64::new(0.0, 0.0); dim];
        fm.apply(&x, &mut y);
        for i in 0..dim {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..dim {
                acc += a[(i, j)] * x[j];
            }
            assert!((acc - y[i]).norm() < 1e-10, "row {i}: {acc} vs {}", y[i]);
        }
    }

    #[test]
    fn momentum_reflection_symmetry() {
        let ops = square_ops(0.2);
        let beta = TwistProfile::with_cosine(0.35, 0.1, 1);
        let k = 0.23;
        let a = lowest_eigenpairs(&assemble_fiber(&ops, &beta, k, 3).unwrap(), 4, 1e-9).unwrap();
        let b = lowest_eigenpairs(&assemble_fiber(&ops, &beta, -k, 3).unwrap(), 4, 1e-9).unwrap();
        for i in 0..4 {
            assert_relative_eq!(a.values[i], b.values[i], max_relative = 1e-8);
        }
    }

    #[test]
    fn spectral_shift_by_identity() {
        let ops = square_ops(0.25);
        let beta = TwistProfile::constant(0.4);
        let fm = assemble_fiber(&ops, &beta, 0.1, 1).unwrap();
        let a = fm.to_dense();
        let c = 5.0;
        let mut shifted = a.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += C64::new(c, 0.0);
        }
        let (va, _) = linalg::eigh_complex(&a);
        let (vs, _) = linalg::eigh_complex(&shifted);
        for i in 0..va.len() {
            assert_relative_eq!(vs[i], va[i] + c, max_relative = 1e-12);
        }
    }

    #[test]
    fn truncation_is_monotone() {
        let ops = square_ops(0.2);
        let beta = TwistProfile::with_cosine(0.3, 0.2, 1);
        let e1: Vec<f64> = [2usize, 4]
            .iter()
            .map(|&lm| {
                lowest_eigenpairs(&assemble_fiber(&ops, &beta, 0.2, lm).unwrap(), 1, 1e-10)
                    .unwrap()
                    .values[0]
            })
            .collect();
        assert!(e1[1] <= e1[0] + 1e-9, "E1 should not increase with ell_max: {:?}", e1);
    }

    #[test]
    fn truncation_too_small_is_rejected() {
        let ops = square_ops(0.25);
        let beta = TwistProfile::with_cosine(0.3, 0.2, 3);
        assert!(matches!(
            assemble_fiber(&ops, &beta, 0.0, 2),
            Err(FiberError::TruncationTooSmall { .. })
        ));
    }

    #[test]
    fn iterative_path_matches_dense() {
        let ops = square_ops(0.125);
        let beta = TwistProfile::with_cosine(0.4, 0.15, 1);
        let fm = assemble_fiber(&ops, &beta, 0.11, 2).unwrap();
        let dense = lowest_eigenpairs(&fm, 3, 1e-10).unwrap();
        let teig = TransverseEigen::new(&ops);
        let iter = lowest_eigenpairs_iterative(&fm, 3, 1e-10, &teig).unwrap();
        for i in 0..3 {
            assert_relative_eq!(dense.values[i], iter.values[i], max_relative = 1e-8);
        }
        for (r, v) in iter.residuals.iter().zip(&iter.values) {
            assert!(r / v.abs().max(1.0) < 1e-9, "residual {r}");
        }
    }

    #[test]
    fn positive_definite_by_inertia() {
        let ops = square_ops(0.25);
        let beta = TwistProfile::with_cosine(0.5, 0.25, 2);
        let fm = assemble_fiber(&ops, &beta, 0.4, 2).unwrap();
        let neg = linalg::hermitian_negative_inertia(&fm.to_dense(), 0.0);
        assert_eq!(neg, 0);
    }

    #[test]
    fn eigenvectors_orthonormal_and_gauged() {
        let ops = square_ops(0.2);
        let beta = TwistProfile::with_cosine(0.3, 0.1, 1);
        let fm = assemble_fiber(&ops, &beta, 0.07, 2).unwrap();
        let pairs = lowest_eigenpairs(&fm, 3, 1e-9).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let d = linalg::cdot(&pairs.vectors[i], &pairs.vectors[j]).norm();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-9);
            }
            let v = &pairs.vectors[i];
            let imax = (0..v.len())
                .max_by(|&a, &b| v[a].norm().partial_cmp(&v[b].norm()).unwrap())
                .unwrap();
            assert!(v[imax].im.abs() < 1e-12 && v[imax].re > 0.0);
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

            /// Hermiticity is bitwise and the form stays positive definite
            /// for arbitrary real twist profiles and momenta.
            #[test]
            fn assembly_hermitian_and_positive(
                b0 in -0.8f64..0.8,
                re1 in -0.4f64..0.4,
                im1 in -0.4f64..0.4,
                re2 in -0.25f64..0.25,
                k in -0.5f64..0.5,
            ) {
                let ops = square_ops(0.25);
                let beta = TwistProfile::new(vec![
                    C64::new(b0, 0.0),
                    C64::new(re1, im1),
                    C64::new(re2, 0.0),
                ]).unwrap();
                let fm = assemble_fiber(&ops, &beta, k, 2).unwrap();
                prop_assert_eq!(fm.hermiticity_error(), 0.0);
                let neg = linalg::hermitian_negative_inertia(&fm.to_dense(), 0.0);
                prop_assert_eq!(neg, 0);
            }

            /// Complex-conjugation equivalence: the spectrum is even in k.
            #[test]
            fn spectrum_even_in_k(k in 0.01f64..0.5, amp in 0.05f64..0.3) {
                let ops = square_ops(0.25);
                let beta = TwistProfile::with_cosine(0.3, amp, 1);
                let plus = lowest_eigenpairs(&assemble_fiber(&ops, &beta, k, 2).unwrap(), 3, 1e-10).unwrap();
                let minus = lowest_eigenpairs(&assemble_fiber(&ops, &beta, -k, 2).unwrap(), 3, 1e-10).unwrap();
                for i in 0..3 {
                    prop_assert!((plus.values[i] - minus.values[i]).abs() <= 1e-8 * plus.values[i].abs());
                }
            }
        }
    }

    #[test]
    fn twist_profile_eval_is_real_and_matches_coeffs() {
        let beta = TwistProfile::new(vec![
            C64::new(0.2, 0.0),
            C64::new(0.1, -0.05),
            C64::new(0.0, 0.02),
        ])
        .unwrap();
        for i in 0..32 {
            let x = 2.0 * std::f64::consts::PI * i as f64 / 32.0;
            let direct = 0.2
                + 2.0 * (C64::new(0.1, -0.05) * C64::from_polar(1.0, x)).re
                + 2.0 * (C64::new(0.0, 0.02) * C64::from_polar(1.0, 2.0 * x)).re;
            assert_relative_eq!(beta.eval(x), direct, epsilon = 1e-14);
        }
        // squared coefficients reproduce beta(x)^2
        let b2 = beta.squared_coeffs();
        for i in 0..16 {
            let x = 2.0 * std::f64::consts::PI * i as f64 / 16.0;
            let mut v = b2[0].re;
            for (m, c) in b2.iter().enumerate().skip(1) {
                v += 2.0 * (c * C64::from_polar(1.0, m as f64 * x)).re;
            }
            assert_relative_eq!(v, beta.eval(x).powi(2), epsilon = 1e-12);
        }
    }
}
