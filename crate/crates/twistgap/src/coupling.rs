//! Periodic coupling functions built from edge eigenfunctions.
//!
//! For an edge eigenfunction psi at extremizer k*, the coupling function is
//!
//! ```text
//! eta(x3) = 2 Re int_omega conj(d_phi psi) (beta d_phi + d3 + i k*) psi dx_t,
//! ```
//!
//! evaluated on a uniform x3 grid fine enough that all trigonometric products
//! of the truncated series are alias-free, so the discrete transform recovers
//! the Fourier coefficients eta_l = (2 pi)^{-1/2} int eta e^{-i l x} dx
//! exactly (up to rounding) and the mean is the exact average.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fiber::{self, FiberError, TransverseEigen, TwistProfile};
use crate::geometry::TransverseOperators;
use crate::linalg::{self, C64};

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error(
        "band {band} is nearly degenerate at k* = {k_star}: gap {gap:.3e} below threshold {threshold:.3e}; eta would be gauge-unstable"
    )]
    NearDegenerate { band: usize, k_star: f64, gap: f64, threshold: f64 },
    #[error(transparent)]
    Fiber(#[from] FiberError),
}

/// Normalized edge eigenfunction in the (longitudinal mode x transverse node)
/// block basis.
#[derive(Debug, Clone)]
pub struct EdgeEigenfunction {
    pub k_star: f64,
    pub band_index: usize,
    pub eigenvalue: f64,
    pub ell_max: usize,
    pub n_omega: usize,
    /// Concatenated blocks, unit l2 norm (which is the L2(omega x T) norm in
    /// the embedded convention).
    pub vector: Vec<C64>,
}

impl EdgeEigenfunction {
    pub fn block(&self, ell: i64) -> &[C64] {
        let b = (ell + self.ell_max as i64) as usize;
        &self.vector[b * self.n_omega..(b + 1) * self.n_omega]
    }

    pub fn norm(&self) -> f64 {
        linalg::cnorm(&self.vector)
    }

    /// l2 weight carried by the longitudinal mode ell.
    pub fn block_norm(&self, ell: i64) -> f64 {
        linalg::cnorm(self.block(ell))
    }
}

/// Solve the fiber at k* and return the normalized `band_index`-th
/// eigenfunction, refusing when the neighboring band is too close for the
/// eigenvector (and hence eta) to be well defined.
pub fn edge_eigenfunction(
    ops: &TransverseOperators,
    beta: &TwistProfile,
    k_star: f64,
    band_index: usize,
    ell_max: usize,
    tol: f64,
    teig: Option<&TransverseEigen>,
) -> Result<EdgeEigenfunction, CouplingError> {
    let fm = fiber::assemble_fiber(ops, beta, k_star, ell_max)?;
    let count = (band_index + 1).min(fm.dim());
    let pairs = fiber::lowest_eigenpairs_with(&fm, count, tol, teig)?;
    let e = pairs.values[band_index - 1];
    let scale = e.abs().max(1.0);
    let threshold = 10.0 * tol * scale;
    let mut gap = f64::INFINITY;
    if band_index >= 2 {
        gap = gap.min(e - pairs.values[band_index - 2]);
    }
    if band_index < pairs.values.len() {
        gap = gap.min(pairs.values[band_index] - e);
    }
    if gap < threshold {
        return Err(CouplingError::NearDegenerate { band: band_index, k_star, gap, threshold });
    }
    let mut vector = pairs.vectors[band_index - 1].clone();
    let n = linalg::cnorm(&vector);
    linalg::cscale(1.0 / n, &mut vector);
    Ok(EdgeEigenfunction {
        k_star,
        band_index,
        eigenvalue: e,
        ell_max: fm.ell_max,
        n_omega: fm.n_omega,
        vector,
    })
}

/// 2pi-periodic coupling function: samples, Fourier coefficients and mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingFunction {
    /// Uniform grid over [0, 2pi).
    pub x3: Vec<f64>,
    pub samples: Vec<f64>,
    /// Coefficient of e^{i l x} under the (2 pi)^{-1/2} convention, for
    /// l = -max_harmonic ..= max_harmonic.
    pub fourier: Vec<Complex64>,
    pub max_harmonic: usize,
    pub mean: f64,
    /// Twist truncation order, the cutoff for the l1 tail report.
    pub beta_order: usize,
    /// max |eta_l - conj(eta_{-l})|: reality residual of the transform.
    pub imag_residual: f64,
}

impl CouplingFunction {
    pub fn coeff(&self, l: i64) -> Complex64 {
        let m = self.max_harmonic as i64;
        if l.abs() > m {
            Complex64::new(0.0, 0.0)
        } else {
            self.fourier[(l + m) as usize]
        }
    }

    /// Evaluate by Fourier synthesis (exact for the represented harmonics).
    pub fn eval(&self, x: f64) -> f64 {
        let inv = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let m = self.max_harmonic as i64;
        let mut acc = Complex64::new(0.0, 0.0);
        for l in -m..=m {
            acc += self.coeff(l) * Complex64::from_polar(1.0, l as f64 * x);
        }
        (acc * inv).re
    }

    pub fn sup_abs(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Harmonics carrying at least `rel` of the l1 mass.
    pub fn significant_harmonics(&self, rel: f64) -> Vec<i64> {
        let m = self.max_harmonic as i64;
        let l1: f64 = (-m..=m).map(|l| self.coeff(l).norm()).sum();
        (-m..=m).filter(|&l| self.coeff(l).norm() > rel * l1.max(1e-300)).collect()
    }

    /// Build from samples on a uniform [0, 2pi) grid (odd count), e.g. for
    /// synthetic coupling profiles in model studies.
    pub fn from_samples(samples: Vec<f64>, beta_order: usize) -> Self {
        let n = samples.len();
        assert!(n % 2 == 1, "need an odd sample count for a symmetric harmonic range");
        let x3: Vec<f64> = (0..n).map(|j| 2.0 * std::f64::consts::PI * j as f64 / n as f64).collect();
        let max_harmonic = (n - 1) / 2;
        let (fourier, mean, imag_residual) = transform(&samples, max_harmonic);
        CouplingFunction { x3, samples, fourier, max_harmonic, mean, beta_order, imag_residual }
    }

    pub fn constant(value: f64) -> Self {
        CouplingFunction::from_samples(vec![value; 5], 0)
    }
}

fn transform(samples: &[f64], max_harmonic: usize) -> (Vec<Complex64>, f64, f64) {
    let n = samples.len();
    let root = (2.0 * std::f64::consts::PI).sqrt();
    let m = max_harmonic as i64;
    let mut fourier = Vec::with_capacity(2 * max_harmonic + 1);
    for l in -m..=m {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &s) in samples.iter().enumerate() {
            let x = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            acc += Complex64::from_polar(1.0, -(l as f64) * x) * s;
        }
        fourier.push(acc * root / n as f64);
    }
    let mean: f64 = samples.iter().sum::<f64>() / n as f64;
    let mut imag_residual = 0.0f64;
    for l in 0..=m {
        let a = fourier[(m + l) as usize];
        let b = fourier[(m - l) as usize];
        imag_residual = imag_residual.max((a - b.conj()).norm());
    }
    (fourier, mean, imag_residual)
}

/// Compute eta from an edge eigenfunction. The x3 grid has
/// 4 ell_max + 2 M + 1 points, alias-free for the product of the two
/// truncated factors and the twist profile.
pub fn compute_eta(
    psi: &EdgeEigenfunction,
    beta: &TwistProfile,
    ops: &TransverseOperators,
) -> CouplingFunction {
    let n = psi.n_omega;
    let nb = 2 * psi.ell_max + 1;
    let m_order = beta.order();
    let n3 = 4 * psi.ell_max + 2 * m_order + 1;
    let inv_2pi = 1.0 / (2.0 * std::f64::consts::PI);

    // per-block d_phi and (d3 + ik) images
    let mut p = vec![C64::new(0.0, 0.0); n * nb];
    let mut q = vec![C64::new(0.0, 0.0); n * nb];
    for b in 0..nb {
        let ell = b as i64 - psi.ell_max as i64;
        let src = &psi.vector[b * n..(b + 1) * n];
        ops.dphi.apply_complex(src, &mut p[b * n..(b + 1) * n]);
        let w = C64::new(0.0, ell as f64 + psi.k_star);
        for i in 0..n {
            q[b * n + i] = w * src[i];
        }
    }

    let mut x3 = Vec::with_capacity(n3);
    let mut samples = Vec::with_capacity(n3);
    let mut a_x = vec![C64::new(0.0, 0.0); n];
    let mut c_x = vec![C64::new(0.0, 0.0); n];
    for j in 0..n3 {
        let x = 2.0 * std::f64::consts::PI * j as f64 / n3 as f64;
        for v in a_x.iter_mut() {
            *v = C64::new(0.0, 0.0);
        }
        for v in c_x.iter_mut() {
            *v = C64::new(0.0, 0.0);
        }
        for b in 0..nb {
            let ell = b as i64 - psi.ell_max as i64;
            let phase = C64::from_polar(1.0, ell as f64 * x);
            for i in 0..n {
                a_x[i] += phase * p[b * n + i];
                c_x[i] += phase * q[b * n + i];
            }
        }
        // s = <a, beta a + c>; the 1/(2 pi) carries both plane-wave factors
        let mut s = C64::new(0.0, 0.0);
        let bx = beta.eval(x);
        for i in 0..n {
            s += a_x[i].conj() * (a_x[i] * bx + c_x[i]);
        }
        x3.push(x);
        samples.push(2.0 * (s * inv_2pi).re);
    }

    let max_harmonic = 2 * psi.ell_max + m_order;
    let (fourier, mean, imag_residual) = transform(&samples, max_harmonic);
    CouplingFunction {
        x3,
        samples,
        fourier,
        max_harmonic,
        mean,
        beta_order: m_order,
        imag_residual,
    }
}

/// l1 mass of the Fourier coefficients and the fraction carried by harmonics
/// beyond the twist order (a truncation-health indicator).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EtaL1Report {
    pub l1: f64,
    pub tail_fraction: f64,
    pub cutoff: usize,
}

pub fn eta_l1_report(cf: &CouplingFunction) -> EtaL1Report {
    let m = cf.max_harmonic as i64;
    let cutoff = cf.beta_order as i64;
    let mut l1 = 0.0;
    let mut tail = 0.0;
    for l in -m..=m {
        let a = cf.coeff(l).norm();
        l1 += a;
        if l.abs() > cutoff {
            tail += a;
        }
    }
    EtaL1Report {
        l1,
        tail_fraction: if l1 > 0.0 { tail / l1 } else { 0.0 },
        cutoff: cf.beta_order,
    }
}
