//! Birman-Schwinger verification route.
//!
//! For h_eff = -mu d^2/dx^2 - V with V = eta eps, the count of eigenvalues
//! below -lambda equals the number of eigenvalues above 1 of the sandwiched
//! operator a(lambda) F V F* a(lambda), a(k; lambda) = (mu k^2 + lambda)^{-1/2},
//! in momentum representation. This module discretizes that operator by a
//! Nystrom rule and diagonalizes it densely; it exists to cross-check the
//! production inertia counter, not to replace it.
//!
//! The kernel needs the transform of eta eps on the difference lattice:
//! F(eta eps)(q) = (2 pi)^{-1/2} sum_l eta_l eps_hat(q - l), so only the
//! scalar even function eps_hat is ever integrated. Slowly decaying profiles
//! are handled by truncating at X with the four-term oscillatory boundary
//! expansion, whose remainder is O(X^{-alpha-3} / q^4).

use ndarray::Array2;
use num_complex::Complex64;
use thiserror::Error;

use crate::coupling::CouplingFunction;
use crate::effective::DecayProfile;
use crate::linalg::{self, C64};

#[derive(Debug, Error)]
pub enum BschError {
    #[error("momentum grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("transform undefined: {0}")]
    NotIntegrable(String),
}

/// Discretized Birman-Schwinger operator at one lambda.
pub struct BSOperator {
    pub lambda: f64,
    pub mu: f64,
    pub k_grid: Vec<f64>,
    pub dk: f64,
    pub matrix: Array2<C64>,
}

impl BSOperator {
    pub fn dim(&self) -> usize {
        self.k_grid.len()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn largest_eigenvalue(&self) -> f64 {
        let (vals, _) = linalg::eigh_complex(&self.matrix);
        *vals.last().unwrap()
    }

    /// Debug dump of the cached difference-lattice transform.
    pub fn dump_kernel(&self, veff_hat: &[Complex64]) -> String {
        let mut s = format!(
            "# twistgap bs-kernel v1 lambda={:.16e} dk={:.16e}\n",
            self.lambda, self.dk
        );
        let half = (veff_hat.len() - 1) / 2;
        for (m, v) in veff_hat.iter().enumerate() {
            let q = (m as i64 - half as i64) as f64 * self.dk;
            s.push_str(&format!("{:.16e} {:.16e} {:.16e}\n", q, v.re, v.im));
        }
        s
    }
}

// ---------------------------------------------------------------------------
// scalar transforms eps_hat(q) = (2 pi)^{-1/2} int e^{-iqx} eps(x) dx
// ---------------------------------------------------------------------------

/// 4-point Gauss-Legendre nodes/weights on [-1, 1].
const GL4_X: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL4_W: [f64; 4] = [
    0.347_854_845_137_453_85,
    0.652_145_154_862_546_2,
    0.652_145_154_862_546_2,
    0.347_854_845_137_453_85,
];

fn panel_quad(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panel: f64) -> f64 {
    let n = ((b - a) / panel).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let x0 = a + i as f64 * h;
        for (xi, wi) in GL4_X.iter().zip(GL4_W.iter()) {
            let x = x0 + 0.5 * h * (1.0 + xi);
            acc += wi * f(x);
        }
    }
    acc * 0.5 * (b - a) / n as f64
}

/// int_0^infty cos(qx) eps(x) dx for the power families, q != 0: direct
/// panels on [0, X] plus the boundary expansion of the tail.
fn cos_transform_power(eps: &DecayProfile, alpha: f64, q: f64) -> f64 {
    let q = q.abs();
    // remainder ~ c4 X^{-alpha-3} / q^4; pick X for ~1e-10 absolute
    let x_cut = (1e10 / q.powi(4)).powf(1.0 / (alpha + 3.0)).clamp(60.0, 4.0e5);
    let panel = (std::f64::consts::PI / (8.0 * q)).min(0.5);
    let head = panel_quad(&|x| (q * x).cos() * eps.eval(x), 0.0, x_cut, panel);
    let (s, c) = (q * x_cut).sin_cos();
    let tail = -s * eps.eval(x_cut) / q - c * eps.deriv(x_cut, 1) / (q * q)
        + s * eps.deriv(x_cut, 2) / (q * q * q)
        + c * eps.deriv(x_cut, 3) / (q * q * q * q);
    head + tail
}

/// int_0^infty eps dx for the power families (q = 0), alpha > 1: direct
/// panels plus the analytic tail series.
fn zero_transform_power(eps: &DecayProfile, c: f64, alpha: f64) -> Result<f64, BschError> {
    if alpha <= 1.0 {
        return Err(BschError::NotIntegrable(format!(
            "profile with alpha = {alpha} <= 1 is not integrable; the q = 0 kernel entry is undefined (needs a mean-zero eta)"
        )));
    }
    let x_cut = 150.0f64;
    let head = panel_quad(&|x| eps.eval(x), 0.0, x_cut, 0.25);
    // (1+x^2)^(-a/2) = x^-a (1 - (a/2) x^-2 + (a/2)(a/2+1)/2 x^-4 - ...)
    let a = alpha;
    let tail = c
        * (x_cut.powf(1.0 - a) / (a - 1.0) - (a / 2.0) * x_cut.powf(-1.0 - a) / (a + 1.0)
            + (a / 2.0) * (a / 2.0 + 1.0) / 2.0 * x_cut.powf(-3.0 - a) / (a + 3.0));
    Ok(head + tail)
}

/// The (2 pi)^{-1/2}-convention Fourier transform of the (even) profile.
pub fn eps_hat(eps: &DecayProfile, q: f64) -> Result<f64, BschError> {
    let norm = (2.0 / std::f64::consts::PI).sqrt();
    match *eps {
        DecayProfile::PowerWithLimit { limit } => {
            Ok(limit * (std::f64::consts::PI / 2.0).sqrt() * (-q.abs()).exp())
        }
        DecayProfile::CompactBump { radius, .. } => {
            let panel = (std::f64::consts::PI / (8.0 * q.abs().max(0.25))).min(radius / 16.0);
            Ok(norm * panel_quad(&|x| (q * x).cos() * eps.eval(x), 0.0, radius, panel))
        }
        DecayProfile::Power { c, alpha } | DecayProfile::SignedPower { c, alpha } => {
            if q.abs() < 1e-9 {
                Ok(norm * zero_transform_power(eps, c, alpha)?)
            } else {
                Ok(norm * cos_transform_power(eps, alpha, q))
            }
        }
    }
}

/// Transform of eta * eps on a q-lattice: values for q = m dk,
/// m = -half ..= half, computed once and mirrored so Hermiticity of the
/// Nystrom matrix is bitwise.
pub fn veff_hat_lattice(
    eta: &CouplingFunction,
    eps: &DecayProfile,
    dk: f64,
    half: usize,
) -> Result<Vec<Complex64>, BschError> {
    let inv_root = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let harmonics = eta.significant_harmonics(1e-14);
    if harmonics.contains(&0) && eps.alpha() <= 1.0 {
        // the l = 0 sideband hits eps_hat(q) near its non-integrable point
        return Err(BschError::NotIntegrable(
            "eta has a nonzero mean and eps decays with alpha <= 1".into(),
        ));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); 2 * half + 1];
    for m in 0..=half {
        let q = m as f64 * dk;
        let mut acc = Complex64::new(0.0, 0.0);
        for &l in &harmonics {
            let shift = eps_hat(eps, q - l as f64)?;
            acc += eta.coeff(l) * shift;
        }
        acc *= inv_root;
        out[half + m] = acc;
        out[half - m] = acc.conj();
    }
    Ok(out)
}

/// Assemble the Nystrom discretization with trapezoid weights on the
/// symmetric grid k in [-K, K] with step dk.
pub fn assemble_bs(
    eta: &CouplingFunction,
    eps: &DecayProfile,
    mu: f64,
    lambda: f64,
    k_cut: f64,
    dk: f64,
) -> Result<BSOperator, BschError> {
    let sup_v = eta.sup_abs() * eps.sup_abs();
    let k_need = 10.0 * (sup_v / mu).sqrt();
    if k_cut < k_need {
        return Err(BschError::GridTooCoarse(format!(
            "cutoff K = {k_cut:.3} below 10 sqrt(supV/mu) = {k_need:.3}"
        )));
    }
    let dk_lambda = (lambda / mu).sqrt() / 5.0;
    if dk > dk_lambda {
        return Err(BschError::GridTooCoarse(format!(
            "dk = {dk:.3e} does not resolve the lambda scale {dk_lambda:.3e}"
        )));
    }
    if dk > 0.25 {
        return Err(BschError::GridTooCoarse(format!(
            "dk = {dk:.3e} does not resolve the unit sideband lattice"
        )));
    }

    let half = (k_cut / dk).floor() as usize;
    let n = 2 * half + 1;
    let k_grid: Vec<f64> = (0..n).map(|i| (i as i64 - half as i64) as f64 * dk).collect();
    let vhat = veff_hat_lattice(eta, eps, dk, n - 1)?;

    let a: Vec<f64> = k_grid.iter().map(|&k| 1.0 / (mu * k * k + lambda).sqrt()).collect();
    let sqrt_w: Vec<f64> =
        (0..n).map(|i| if i == 0 || i == n - 1 { (dk / 2.0).sqrt() } else { dk.sqrt() }).collect();

    // kernel of F V F* in momentum space is (2 pi)^{-1/2} (F V)(k - k')
    let kernel_norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut matrix = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let m = (n - 1) + i - j; // index of q = (k_i - k_j) in the lattice
            let v = vhat[m] * (kernel_norm * a[i] * a[j] * sqrt_w[i] * sqrt_w[j]);
            matrix[(i, j)] = v;
            matrix[(j, i)] = v.conj();
        }
    }
    Ok(BSOperator { lambda, mu, k_grid, dk, matrix })
}

/// Number of eigenvalues above the threshold, by dense Hermitian
/// diagonalization.
pub fn bs_count(bs: &BSOperator, threshold: f64) -> usize {
    let (vals, _) = linalg::eigh_complex(&bs.matrix);
    vals.iter().filter(|&&v| v > threshold).count()
}

/// Count with a self-convergence certificate: the integer must survive
/// enlarging the cutoff and refining the step.
pub fn bs_count_stable(
    eta: &CouplingFunction,
    eps: &DecayProfile,
    mu: f64,
    lambda: f64,
    threshold: f64,
) -> Result<(usize, bool), BschError> {
    let sup_v = eta.sup_abs() * eps.sup_abs();
    // floor: a couple of kernel widths past the farthest sideband (the
    // refinement pass below certifies sufficiency)
    let h = eta.significant_harmonics(1e-12).iter().map(|l| l.unsigned_abs()).max().unwrap_or(0);
    let k_cut = (10.0 * (sup_v / mu).sqrt()).max(2.0 + h as f64);
    let dk = ((lambda / mu).sqrt() / 5.0).min(0.2);
    let base = bs_count(&assemble_bs(eta, eps, mu, lambda, k_cut, dk)?, threshold);
    let refined =
        bs_count(&assemble_bs(eta, eps, mu, lambda, 1.4 * k_cut, dk / 1.5)?, threshold);
    Ok((base, base == refined))
}
