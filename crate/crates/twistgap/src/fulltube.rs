//! Truncated full operator on omega x [-X, X] with Dirichlet ends.
//!
//! The twist rate theta' = beta - eps is no longer periodic, so x3 is
//! discretized by finite differences and the operator is assembled from the
//! quadratic form: transverse gradient per slice plus, per staggered edge,
//! |theta'(x_mid) d_phi f_mid + (f_{j+1} - f_j)/step|^2 with the slice average
//! f_mid. The result is a symmetric banded matrix whose window counts come
//! from two LDL^T inertia sweeps — a qualitative validator for the effective
//! model's trend, not a quantitative asymptotic tool (the dimension grows
//! linearly in X).

use thiserror::Error;

use crate::effective::DecayProfile;
use crate::fiber::TwistProfile;
use crate::geometry::TransverseOperators;
use crate::linalg::BandedSymmetric;
use crate::sparse::CsrMatrix;

#[derive(Debug, Error)]
pub enum TubeError {
    #[error("tube half-length X = {0} must be a positive multiple of 2 pi")]
    BadHalfLength(f64),
    #[error("x3 step {step:.4} too coarse: {why}")]
    ResolutionTooCoarse { step: f64, why: String },
}

/// Decaying part of the twist rate, scaled: theta' = beta - scale * eps.
#[derive(Debug, Clone)]
pub struct TubePerturbation {
    pub eps: DecayProfile,
    pub scale: f64,
}

pub struct TubeOperator {
    pub x_half: f64,
    pub x3_step: f64,
    pub n3: usize,
    pub n_omega: usize,
    pub matrix: BandedSymmetric,
}

/// Outcome of a window count: the integer plus how many pivots needed the
/// breakdown perturbation.
#[derive(Debug, Clone, Copy)]
pub struct WindowCount {
    pub count: usize,
    pub perturbations: usize,
}

pub fn assemble_tube(
    ops: &TransverseOperators,
    beta: &TwistProfile,
    eps: Option<&TubePerturbation>,
    x_half: f64,
    x3_step: f64,
) -> Result<TubeOperator, TubeError> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let periods = x_half / two_pi;
    if x_half <= 0.0 || (periods - periods.round()).abs() > 1e-9 {
        return Err(TubeError::BadHalfLength(x_half));
    }
    let m = beta.order().max(1);
    let max_step = two_pi / (8.0 * m as f64);
    if x3_step > max_step {
        return Err(TubeError::ResolutionTooCoarse {
            step: x3_step,
            why: format!("need at least 8 points per twist period (step <= {max_step:.4})"),
        });
    }

    // odd interior count so x3 = 0 is a node and the grid is symmetric
    let mut n3 = (2.0 * x_half / x3_step).round() as usize;
    if n3 % 2 == 0 {
        n3 += 1;
    }
    let step = 2.0 * x_half / (n3 as f64 + 1.0);
    let n = ops.n_nodes();
    let g = &ops.dphi;

    let theta = |x: f64| {
        beta.eval(x) - eps.map_or(0.0, |p| p.scale * p.eps.eval(x))
    };

    // triplets for one edge operator pair B^T B where
    // B f = c G (f_l + f_r)/2 + (f_r - f_l)/step acting on slices (l, r);
    // expressed through the sparse pieces: G, G^T G and the identity.
    let gtg = g.gram();
    let gt = g.transpose();

    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let lap = ops.laplacian_t.triplets();
    for j in 0..n3 {
        let off = j * n;
        for &(r, c, v) in &lap {
            triplets.push((off + r, off + c, v));
        }
    }

    let inv_step = 1.0 / step;
    let gt_trip = gt.triplets();
    let g_trip = g.triplets();
    let gtg_trip = gtg.triplets();
    for e in 0..=n3 {
        // edge between slice e-1 and e (virtual Dirichlet slices at -1, n3)
        let x_mid = -x_half + (e as f64 + 0.5) * step;
        let c = theta(x_mid);
        let l = if e == 0 { None } else { Some(e - 1) };
        let r = if e == n3 { None } else { Some(e) };
        // B^T B expands into four slice-pair blocks:
        //   (s, t)-block = w_s w_t c^2/4 G^T G + (w_s d_t c/2) G^T + (d_s w_t c/2) G + d_s d_t I
        // with averaging weights w = 1/2 (both slices) and difference signs
        // d_l = -1/step, d_r = +1/step.
        let parts: [(Option<usize>, f64, f64); 2] =
            [(l, 0.5, -inv_step), (r, 0.5, inv_step)];
        for &(s, ws, ds) in &parts {
            let Some(s) = s else { continue };
            for &(t, wt, dt) in &parts {
                let Some(t) = t else { continue };
                let (ro, co) = (s * n, t * n);
                let c_gtg = ws * wt * c * c;
                for &(rr, cc, v) in &gtg_trip {
                    triplets.push((ro + rr, co + cc, c_gtg * v));
                }
                let c_gt = ws * dt * c;
                if c_gt != 0.0 {
                    for &(rr, cc, v) in &gt_trip {
                        triplets.push((ro + rr, co + cc, c_gt * v));
                    }
                }
                let c_g = ds * wt * c;
                if c_g != 0.0 {
                    for &(rr, cc, v) in &g_trip {
                        triplets.push((ro + rr, co + cc, c_g * v));
                    }
                }
                let c_i = ds * dt;
                for node in 0..n {
                    triplets.push((ro + node, co + node, c_i));
                }
            }
        }
    }

    // symmetrize through CSR (merges duplicates deterministically), then pack
    let dim = n * n3;
    let csr = CsrMatrix::from_triplets(dim, dim, &triplets);
    let mut bandwidth = 0usize;
    for (r, c, _) in csr.triplets() {
        bandwidth = bandwidth.max(r.abs_diff(c));
    }
    let mut banded = BandedSymmetric::zeros(dim, bandwidth);
    for (r, c, v) in csr.triplets() {
        if r >= c {
            banded.band[r - c][c] += v;
        }
    }

    Ok(TubeOperator { x_half, x3_step: step, n3, n_omega: n, matrix: banded })
}

impl TubeOperator {
    pub fn dim(&self) -> usize {
        self.n_omega * self.n3
    }

    /// Exact eigenvalue count in the open window (a, b) by two inertia
    /// sweeps. Near-singular pivots are perturbed and reported.
    pub fn gap_window_count(&self, a: f64, b: f64) -> WindowCount {
        assert!(a < b, "window must be nonempty");
        let lo = self.matrix.count_below(a);
        let hi = self.matrix.count_below(b);
        WindowCount {
            count: hi.negatives.saturating_sub(lo.negatives),
            perturbations: lo.perturbations + hi.perturbations,
        }
    }

    /// Lowest eigenvalues by Sturm bisection on the banded inertia.
    pub fn lowest_eigenvalues(&self, count: usize) -> Vec<f64> {
        // Gershgorin-style bounds from the band
        let mut hi = 0.0f64;
        for i in 0..self.matrix.n {
            let mut row = 0.0;
            for d in 0..=self.matrix.bandwidth {
                if i + d < self.matrix.n {
                    row += self.matrix.band[d][i].abs();
                }
                if d <= i && d > 0 {
                    row += self.matrix.band[d][i - d].abs();
                }
            }
            hi = hi.max(row);
        }
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            let mut a = 0.0;
            let mut b = hi;
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                if self.matrix.count_below(mid).negatives <= k {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            out.push(0.5 * (a + b));
        }
        out
    }
}
