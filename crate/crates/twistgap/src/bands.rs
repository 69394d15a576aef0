//! Band charts over the dual torus, gap detection, and edge analysis
//! (extremizers, effective masses, regularity diagnostics).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fiber::{self, FiberError, TransverseEigen, TwistProfile};
use crate::geometry::TransverseOperators;

#[derive(Debug, Error)]
pub enum BandsError {
    #[error("invalid k sampling: {0}")]
    InvalidSampling(String),
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error("edge refinement did not resolve: {0}")]
    EdgeUnresolved(String),
    #[error("invalid edge request: {0}")]
    InvalidEdge(String),
}

/// Sampled band functions E_ell(k) on the uniform k grid over [-1/2, 1/2).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandChart {
    pub k_samples: Vec<f64>,
    /// bands[i][l] = E_{l+1}(k_i)
    pub bands: Vec<Vec<f64>>,
    pub l_count: usize,
}

impl BandChart {
    pub fn n_k(&self) -> usize {
        self.k_samples.len()
    }

    /// Sampled range [min, max] of band `ell` (1-based).
    pub fn band_range(&self, ell: usize) -> (f64, f64) {
        let col = ell - 1;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in &self.bands {
            lo = lo.min(row[col]);
            hi = hi.max(row[col]);
        }
        (lo, hi)
    }

    pub fn band_values(&self, ell: usize) -> Vec<f64> {
        self.bands.iter().map(|row| row[ell - 1]).collect()
    }
}

/// Spectral gap. `lower` is -infinity for the semibounded gap (index 0).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Gap {
    pub index: usize,
    pub lower: f64,
    pub upper: f64,
    /// Band whose maximum is the lower edge (None for gap 0).
    pub band_below: Option<usize>,
    /// Band whose minimum is the upper edge.
    pub band_above: usize,
}

/// Which edge of a gap: the lower endpoint is a band maximum (the paper's
/// minus edge), the upper endpoint a band minimum (the plus edge).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapSide {
    Lower,
    Upper,
}

impl GapSide {
    /// +1 for the upper (+) edge, -1 for the lower (-) edge; this is the sign
    /// entering mu = +-(1/2) E'' and the -+2 pi <eta> eps coupling.
    pub fn sign(&self) -> f64 {
        match self {
            GapSide::Upper => 1.0,
            GapSide::Lower => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Extremizer {
    pub k_star: f64,
    pub mu: f64,
    /// Richardson error estimate on mu.
    pub mu_err: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularityFlags {
    /// (i) a unique band attains the edge value
    pub unique_band: bool,
    /// (ii) finitely many extremizers, all refinements converged
    pub finite_extremizers: bool,
    /// (iii) mu > mu_floor at every extremizer
    pub positive_mass: bool,
    /// |E'(k*)| < slope_tol at every extremizer
    pub flat_at_extremizers: bool,
    pub notes: Vec<String>,
}

impl RegularityFlags {
    pub fn is_regular(&self) -> bool {
        self.unique_band && self.finite_extremizers && self.positive_mass
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeReport {
    pub gap_index: usize,
    pub side: GapSide,
    /// Refined extremal band value.
    pub edge_value: f64,
    /// 1-based index of the band attaining the edge.
    pub band_index: usize,
    pub extremizers: Vec<Extremizer>,
    pub regularity: RegularityFlags,
}

/// Edge-analysis tolerances. The relative ones are scaled by the edge
/// magnitude.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeParams {
    pub ell_max: usize,
    pub solver_tol: f64,
    pub refine_tol: f64,
    pub band_tol_rel: f64,
    pub slope_tol: f64,
    pub mu_floor: f64,
    pub gap_tol_rel: f64,
}

impl Default for EdgeParams {
    fn default() -> Self {
        EdgeParams {
            ell_max: 6,
            solver_tol: 1e-9,
            refine_tol: 1e-6,
            band_tol_rel: 1e-7,
            slope_tol: 1e-5,
            mu_floor: 1e-6,
            gap_tol_rel: 1e-6,
        }
    }
}

/// Sample the lowest `l_count` bands at `n_k` momenta. Only k in [0, 1/2] is
/// solved; negative momenta are filled by reflection.
pub fn sweep_bands(
    ops: &TransverseOperators,
    beta: &TwistProfile,
    l_count: usize,
    n_k: usize,
    ell_max: usize,
    tol: f64,
) -> Result<BandChart, BandsError> {
    let probe = fiber::assemble_fiber(ops, beta, 0.0, ell_max)?;
    let teig = if probe.dim() > fiber::DENSE_THRESHOLD {
        Some(TransverseEigen::new(ops))
    } else {
        None
    };
    sweep_bands_with(ops, beta, l_count, n_k, ell_max, tol, teig.as_ref())
}

/// Like [`sweep_bands`] with a shared transverse eigendecomposition.
pub fn sweep_bands_with(
    ops: &TransverseOperators,
    beta: &TwistProfile,
    l_count: usize,
    n_k: usize,
    ell_max: usize,
    tol: f64,
    teig: Option<&TransverseEigen>,
) -> Result<BandChart, BandsError> {
    if n_k < 16 || n_k % 2 != 0 {
        return Err(BandsError::InvalidSampling(format!(
            "n_k must be even and at least 16, got {n_k}"
        )));
    }
    let k_samples: Vec<f64> = (0..n_k).map(|i| -0.5 + i as f64 / n_k as f64).collect();

    // indices that need a solve: k = -1/2 (the torus point 1/2) and k >= 0
    let solve_idx: Vec<usize> = (0..n_k).filter(|&i| i == 0 || i >= n_k / 2).collect();

    let solved: Vec<(usize, Result<Vec<f64>, FiberError>)> = solve_idx
        .par_iter()
        .map(|&i| {
            let fm = match fiber::assemble_fiber(ops, beta, k_samples[i], ell_max) {
                Ok(fm) => fm,
                Err(e) => return (i, Err(e)),
            };
            let res = fiber::lowest_values(&fm, l_count, tol, teig);
            (i, res)
        })
        .collect();

    let mut bands = vec![Vec::new(); n_k];
    for (i, res) in solved {
        bands[i] = res?;
    }
    // mirror: E(-k) = E(k); -k_i for 0 < i < n_k/2 sits at index n_k - i
    for i in 1..n_k / 2 {
        bands[i] = bands[n_k - i].clone();
    }

    Ok(BandChart { k_samples, bands, l_count })
}

/// Gap scan outcome; `suppressed` lists candidate gaps narrower than the
/// resolution threshold.
#[derive(Debug, Clone)]
pub struct GapScan {
    pub gaps: Vec<Gap>,
    pub suppressed: Vec<(f64, f64)>,
    /// Upper limit of the certified window (the top resolved band's maximum).
    pub window_top: f64,
}

pub fn scan_gaps(chart: &BandChart, gap_tol_rel: f64) -> GapScan {
    let l = chart.l_count;
    let mut gaps = Vec::new();
    let mut suppressed = Vec::new();

    let (lo1, _) = chart.band_range(1);
    gaps.push(Gap { index: 0, lower: f64::NEG_INFINITY, upper: lo1, band_below: None, band_above: 1 });

    let mut running_max = f64::NEG_INFINITY;
    let mut arg_max = 1usize;
    for ell in 1..l {
        let (_, hi) = chart.band_range(ell);
        if hi > running_max {
            running_max = hi;
            arg_max = ell;
        }
        let (lo_next, _) = chart.band_range(ell + 1);
        let scale = running_max.abs().max(lo_next.abs()).max(1.0);
        let width = lo_next - running_max;
        if width > gap_tol_rel * scale {
            gaps.push(Gap {
                index: gaps.len(),
                lower: running_max,
                upper: lo_next,
                band_below: Some(arg_max),
                band_above: ell + 1,
            });
        } else if width > 0.0 {
            suppressed.push((running_max, lo_next));
        }
    }

    let (_, window_top) = chart.band_range(l);
    GapScan { gaps, suppressed, window_top }
}

/// Gaps between the sampled band ranges; gap 0 is the semibounded one. Gaps
/// are certified only relative to the resolved window.
pub fn find_gaps(chart: &BandChart) -> Vec<Gap> {
    scan_gaps(chart, EdgeParams::default().gap_tol_rel).gaps
}

/// Indices of strict-or-flat local minima of a periodic sample sequence.
pub(crate) fn local_minima_indices(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    let mut out = Vec::new();
    for i in 0..n {
        let prev = values[(i + n - 1) % n];
        let next = values[(i + 1) % n];
        if values[i] <= prev && values[i] <= next {
            // flat runs: keep only the run's first index
            if values[i] == prev && i != 0 {
                continue;
            }
            out.push(i);
        }
    }
    out
}

/// Golden-section minimization of a unimodal-on-bracket function.
fn golden_min<E>(
    f: &mut dyn FnMut(f64) -> Result<f64, E>,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, f64), E> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..max_iter {
        if (b - a).abs() < tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    if fc < fd {
        Ok((c, fc))
    } else {
        Ok((d, fd))
    }
}

fn torus_dist(a: f64, b: f64) -> f64 {
    let mut d = (a - b).rem_euclid(1.0);
    if d > 0.5 {
        d = 1.0 - d;
    }
    d
}

/// Locate extrema of a band function by coarse scan plus golden-section
/// refinement; refined positions closer than `cluster_radius` merge. Returns
/// (k*, value) pairs with k* in [0, 1/2] (canonical representatives).
pub(crate) fn find_band_extrema<E>(
    eval: &mut dyn FnMut(f64) -> Result<f64, E>,
    n_coarse: usize,
    minimize: bool,
    cluster_radius: f64,
    refine_tol: f64,
    value_tol: f64,
) -> Result<Vec<(f64, f64)>, E> {
    let ks: Vec<f64> = (0..n_coarse).map(|i| -0.5 + i as f64 / n_coarse as f64).collect();
    let mut coarse = Vec::with_capacity(n_coarse);
    for &k in &ks {
        coarse.push(eval(k)?);
    }
    find_band_extrema_seeded(&coarse, eval, minimize, cluster_radius, refine_tol, value_tol)
}

/// Same, but seeded from already-computed coarse samples on the uniform grid
/// over [-1/2, 1/2) (a band chart row).
pub(crate) fn find_band_extrema_seeded<E>(
    coarse: &[f64],
    eval: &mut dyn FnMut(f64) -> Result<f64, E>,
    minimize: bool,
    cluster_radius: f64,
    refine_tol: f64,
    value_tol: f64,
) -> Result<Vec<(f64, f64)>, E> {
    let sign = if minimize { 1.0 } else { -1.0 };
    let n_coarse = coarse.len();
    let ks: Vec<f64> = (0..n_coarse).map(|i| -0.5 + i as f64 / n_coarse as f64).collect();
    let vals: Vec<f64> = coarse.iter().map(|&v| sign * v).collect();
    let seeds = local_minima_indices(&vals);
    let dk = 1.0 / n_coarse as f64;

    let mut found: Vec<(f64, f64)> = Vec::new();
    for s in seeds {
        let k0 = ks[s];
        let mut g = |k: f64| -> Result<f64, E> { eval(k).map(|v| sign * v) };
        let (k_star, v_star) = golden_min(&mut g, k0 - dk, k0 + dk, refine_tol, 200)?;
        // canonicalize onto [0, 1/2] using evenness, snapping the symmetry points
        let mut k_star = k_star.rem_euclid(1.0);
        if k_star > 0.5 {
            k_star = 1.0 - k_star;
        }
        if k_star < 8.0 * refine_tol {
            k_star = 0.0;
        }
        if (0.5 - k_star).abs() < 8.0 * refine_tol {
            k_star = 0.5;
        }
        found.push((k_star, sign * v_star));
    }

    // keep only extrema attaining the global extremal value, then cluster
    let best = found
        .iter()
        .map(|&(_, v)| v)
        .fold(if minimize { f64::INFINITY } else { f64::NEG_INFINITY }, |acc, v| {
            if minimize {
                acc.min(v)
            } else {
                acc.max(v)
            }
        });
    let mut kept: Vec<(f64, f64)> = Vec::new();
    let mut candidates: Vec<(f64, f64)> = found
        .into_iter()
        .filter(|&(_, v)| (v - best).abs() <= value_tol)
        .collect();
    candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for (k, v) in candidates {
        if kept.iter().all(|&(k0, _)| torus_dist(k, k0) > cluster_radius) {
            kept.push((k, v));
        }
    }
    Ok(kept)
}

/// Central second difference at two step sizes with Richardson extrapolation.
/// Returns (mu, error bar, slope) where mu = sign/2 * E''.
pub(crate) fn estimate_mass<E>(
    eval: &mut dyn FnMut(f64) -> Result<f64, E>,
    k_star: f64,
    delta: f64,
    sign: f64,
) -> Result<(f64, f64, f64), E> {
    let mut second = |d: f64| -> Result<f64, E> {
        let ep = eval(k_star + d)?;
        let em = eval(k_star - d)?;
        let e0 = eval(k_star)?;
        Ok((ep - 2.0 * e0 + em) / (d * d))
    };
    let d1 = second(delta)?;
    let d2 = second(delta / 2.0)?;
    let extrap = (4.0 * d2 - d1) / 3.0;
    let err = (d2 - d1).abs() / 3.0;
    let slope = {
        let ep = eval(k_star + delta)?;
        let em = eval(k_star - delta)?;
        (ep - em) / (2.0 * delta)
    };
    Ok((0.5 * sign * extrap, 0.5 * err, slope))
}

/// Analyze one edge of a gap: identify the attaining band, refine its
/// extremizers, estimate effective masses, and run the regularity checks.
pub fn analyze_edge(
    chart: &BandChart,
    gap: &Gap,
    side: GapSide,
    ops: &TransverseOperators,
    beta: &TwistProfile,
    params: &EdgeParams,
    teig: Option<&TransverseEigen>,
) -> Result<EdgeReport, BandsError> {
    if gap.index == 0 && side == GapSide::Lower {
        return Err(BandsError::InvalidEdge(
            "the semibounded gap has no lower edge".into(),
        ));
    }
    let coarse_edge = match side {
        GapSide::Upper => gap.upper,
        GapSide::Lower => gap.lower,
    };
    let band_index = match side {
        GapSide::Upper => gap.band_above,
        GapSide::Lower => gap.band_below.expect("bounded gap carries its lower band"),
    };
    let scale = coarse_edge.abs().max(1.0);
    let band_tol = params.band_tol_rel * scale;

    let mut notes = Vec::new();

    // (i) which bands attain the edge value on the sampled chart
    let mut attaining = Vec::new();
    for ell in 1..=chart.l_count {
        let (lo, hi) = chart.band_range(ell);
        let v = match side {
            GapSide::Upper => lo,
            GapSide::Lower => hi,
        };
        if (v - coarse_edge).abs() <= band_tol.max(1e3 * params.solver_tol * scale) {
            attaining.push(ell);
        }
    }
    let unique_band = attaining.len() == 1;
    if !unique_band {
        notes.push(format!("bands {:?} all attain the edge within band_tol", attaining));
    }

    // refined extremizer search on the attaining band; solves are memoized
    // since the refinement and mass stencils revisit momenta
    let mut memo: std::collections::BTreeMap<u64, f64> = std::collections::BTreeMap::new();
    let mut eval = |k: f64| -> Result<f64, BandsError> {
        if let Some(&v) = memo.get(&k.to_bits()) {
            return Ok(v);
        }
        let fm = fiber::assemble_fiber(ops, beta, k, params.ell_max)?;
        let vals = fiber::lowest_values(&fm, band_index, params.solver_tol, teig)?;
        let v = vals[band_index - 1];
        memo.insert(k.to_bits(), v);
        Ok(v)
    };
    let minimize = side == GapSide::Upper;
    let n_coarse = chart.n_k();
    let cluster_radius = 2.0 / n_coarse as f64;
    let value_tol = band_tol.max(1e3 * params.solver_tol * scale);
    let coarse = chart.band_values(band_index);
    let extrema = find_band_extrema_seeded(
        &coarse,
        &mut eval,
        minimize,
        cluster_radius,
        params.refine_tol,
        value_tol,
    )?;
    if extrema.is_empty() {
        return Err(BandsError::EdgeUnresolved(format!(
            "no extremum of band {band_index} found near the {side:?} edge of gap {}",
            gap.index
        )));
    }

    let refined_edge = extrema
        .iter()
        .map(|&(_, v)| v)
        .fold(if minimize { f64::INFINITY } else { f64::NEG_INFINITY }, |acc, v| {
            if minimize {
                acc.min(v)
            } else {
                acc.max(v)
            }
        });

    // masses and slopes; mirror the interior extremizers afterwards
    let delta = (1.0 / (2.0 * n_coarse as f64)).max(16.0 * params.refine_tol);
    let mut extremizers = Vec::new();
    for &(k_star, _) in &extrema {
        let (mu, mu_err, slope) = estimate_mass(&mut eval, k_star, delta, side.sign())?;
        extremizers.push(Extremizer { k_star, mu, mu_err, slope });
        if k_star != 0.0 && k_star != 0.5 {
            extremizers.push(Extremizer { k_star: -k_star, mu, mu_err, slope });
        }
    }
    extremizers.sort_by(|a, b| a.k_star.partial_cmp(&b.k_star).unwrap());

    let positive_mass = extremizers.iter().all(|e| e.mu > params.mu_floor);
    if !positive_mass {
        notes.push("some extremizer has nonpositive curvature (degenerate extremum)".into());
    }
    let flat = extremizers.iter().all(|e| e.slope.abs() < params.slope_tol * scale.max(1.0));
    if !flat {
        notes.push("residual first derivative above slope_tol at an extremizer".into());
    }
    if (refined_edge - coarse_edge).abs() > 0.5 * (1.0 / n_coarse as f64).powi(2) * scale * 100.0 {
        notes.push(format!(
            "refined edge {refined_edge:.6e} differs from coarse {coarse_edge:.6e} by more than the grid error model"
        ));
    }

    Ok(EdgeReport {
        gap_index: gap.index,
        side,
        edge_value: refined_edge,
        band_index,
        extremizers,
        regularity: RegularityFlags {
            unique_band,
            finite_extremizers: true,
            positive_mass,
            flat_at_extremizers: flat,
            notes,
        },
    })
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
    fn straight_tube_first_band_is_quadratic() {
        let ops = square_ops(0.2);
        let beta = TwistProfile::constant(0.0);
        let chart = sweep_bands(&ops, &beta, 2, 16, 1, 1e-9).unwrap();
        let (lam, _) = crate::linalg::eigh_real(&ops.laplacian_t.to_dense());
        for (i, &k) in chart.k_samples.iter().enumerate() {
            assert_relative_eq!(chart.bands[i][0], lam[0] + k * k, max_relative = 1e-8);
        }
    }

    #[test]
    fn chart_rows_are_sorted_and_symmetric() {
        let ops = square_ops(0.25);
        let beta = TwistProfile::with_cosine(0.3, 0.15, 1);
        let chart = sweep_bands(&ops, &beta, 3, 16, 2, 1e-9).unwrap();
        for row in &chart.bands {
            for l in 1..row.len() {
                assert!(row[l] >= row[l - 1] - 1e-10);
            }
        }
        let n = chart.n_k();
        for i in 1..n / 2 {
            for l in 0..3 {
                assert_relative_eq!(chart.bands[i][l], chart.bands[n - i][l], max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn odd_or_small_nk_rejected() {
        let ops = square_ops(0.25);
        let beta = TwistProfile::constant(0.0);
        assert!(sweep_bands(&ops, &beta, 1, 15, 1, 1e-9).is_err());
        assert!(sweep_bands(&ops, &beta, 1, 8, 1, 1e-9).is_err());
    }

    #[test]
    fn constant_twist_first_band_min_at_zero() {
        let ops = square_ops(0.2);
        let beta = TwistProfile::constant(0.4);
        let chart = sweep_bands(&ops, &beta, 1, 16, 2, 1e-9).unwrap();
        let vals = chart.band_values(1);
        let arg = (0..vals.len())
            .min_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap())
            .unwrap();
        assert_eq!(chart.k_samples[arg], 0.0);
        // strictly increasing away from zero on the sampled half-axis
        let half: Vec<f64> = (0..=chart.n_k() / 2).map(|i| vals[(chart.n_k() / 2 + i) % chart.n_k()]).collect();
        for w in half.windows(2) {
            assert!(w[1] >= w[0] - 1e-10);
        }
    }

    #[test]
    fn synthetic_chart_yields_one_bounded_gap() {
        let k_samples: Vec<f64> = (0..16).map(|i| -0.5 + i as f64 / 16.0).collect();
        let bands: Vec<Vec<f64>> = k_samples
            .iter()
            .map(|&k| vec![1.0 + (2.0 * std::f64::consts::PI * k).cos().abs(), 3.0 + k * k])
            .collect();
        let chart = BandChart { k_samples, bands, l_count: 2 };
        let gaps = find_gaps(&chart);
        assert_eq!(gaps.len(), 2);
        assert_eq!(gaps[0].index, 0);
        assert!(gaps[0].lower.is_infinite());
        assert_relative_eq!(gaps[1].lower, 2.0, max_relative = 1e-12);
        assert_relative_eq!(gaps[1].upper, 3.0, max_relative = 1e-12);
    }

    #[test]
    fn straight_tube_has_only_the_semibounded_gap() {
        let ops = square_ops(0.1);
        let beta = TwistProfile::constant(0.0);
        let chart = sweep_bands(&ops, &beta, 3, 16, 2, 1e-9).unwrap();
        let gaps = find_gaps(&chart);
        assert_eq!(gaps.len(), 1, "gaps: {:?}", gaps);
        let exact = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
        assert!((gaps[0].upper - exact).abs() / exact < 0.01);
    }

    #[test]
    fn constant_twist_has_only_the_semibounded_gap() {
        let ops = square_ops(0.2);
        let beta = TwistProfile::constant(0.4);
        let chart = sweep_bands(&ops, &beta, 4, 16, 3, 1e-9).unwrap();
        let gaps = find_gaps(&chart);
        assert_eq!(gaps.len(), 1, "gaps: {:?}", gaps);
    }

    #[test]
    fn straight_tube_edge_mass_is_one() {
        let ops = square_ops(0.1);
        let beta = TwistProfile::constant(0.0);
        let chart = sweep_bands(&ops, &beta, 1, 16, 1, 1e-10).unwrap();
        let gaps = find_gaps(&chart);
        let params = EdgeParams { ell_max: 1, solver_tol: 1e-10, ..Default::default() };
        let report =
            analyze_edge(&chart, &gaps[0], GapSide::Upper, &ops, &beta, &params, None).unwrap();
        assert_eq!(report.extremizers.len(), 1);
        assert_eq!(report.extremizers[0].k_star, 0.0);
        assert_relative_eq!(report.extremizers[0].mu, 1.0, max_relative = 0.02);
        assert!(report.regularity.is_regular());
    }

    #[test]
    fn synthetic_band_extrema_detected() {
        // E(k) = cos^2(2 pi k): maxima at {0, 1/2}, minima at +-1/4
        let mut f = |k: f64| -> Result<f64, std::convert::Infallible> {
            Ok((2.0 * std::f64::consts::PI * k).cos().powi(2))
        };
        let maxima = find_band_extrema(&mut f, 32, false, 2.0 / 32.0, 1e-9, 1e-9).unwrap();
        let max_ks: Vec<f64> = maxima.iter().map(|&(k, _)| k).collect();
        assert_eq!(max_ks.len(), 2);
        assert!(max_ks.iter().any(|&k| k == 0.0));
        assert!(max_ks.iter().any(|&k| k == 0.5));

        let minima = find_band_extrema(&mut f, 32, true, 2.0 / 32.0, 1e-9, 1e-9).unwrap();
        assert_eq!(minima.len(), 1, "canonical representative of the +-1/4 pair");
        assert!((minima[0].0 - 0.25).abs() < 1e-6);

        // masses: E'' = -8 pi^2 at k=0 (max side), +8 pi^2 at k=1/4 (min side)
        let (mu_max, _, slope) = estimate_mass(&mut f, 0.0, 1e-3, -1.0).unwrap();
        assert_relative_eq!(mu_max, 4.0 * std::f64::consts::PI.powi(2), max_relative = 1e-5);
        assert!(slope.abs() < 1e-9);
        let (mu_min, _, _) = estimate_mass(&mut f, 0.25, 1e-3, 1.0).unwrap();
        assert_relative_eq!(mu_min, 4.0 * std::f64::consts::PI.powi(2), max_relative = 1e-5);
    }

    #[test]
    fn mirror_closure_of_reported_extremizers() {
        // band with interior extrema: E(k) = cos^2(2 pi k) dressed as a chart
        let k_samples: Vec<f64> = (0..32).map(|i| -0.5 + i as f64 / 32.0).collect();
        let bands: Vec<Vec<f64>> = k_samples
            .iter()
            .map(|&k| vec![(2.0 * std::f64::consts::PI * k).cos().powi(2)])
            .collect();
        let chart = BandChart { k_samples, bands, l_count: 1 };
        // interior minima of band 1 at +-1/4; check the mirroring convention
        // through find_band_extrema + the report assembly path in analyze_edge
        // (exercised on real operators elsewhere; here just the detector)
        let mut f = |k: f64| -> Result<f64, std::convert::Infallible> {
            Ok((2.0 * std::f64::consts::PI * k).cos().powi(2))
        };
        let minima = find_band_extrema(&mut f, chart.n_k(), true, 2.0 / 32.0, 1e-9, 1e-9).unwrap();
        assert_eq!(minima.len(), 1);
        assert!(minima[0].0 > 0.0 && minima[0].0 < 0.5);
    }

    #[test]
    fn lower_edge_of_gap_zero_is_rejected() {
        let ops = square_ops(0.25);
        let beta = TwistProfile::constant(0.0);
        let chart = sweep_bands(&ops, &beta, 1, 16, 1, 1e-9).unwrap();
        let gaps = find_gaps(&chart);
        let params = EdgeParams { ell_max: 1, ..Default::default() };
        assert!(matches!(
            analyze_edge(&chart, &gaps[0], GapSide::Lower, &ops, &beta, &params, None),
            Err(BandsError::InvalidEdge(_))
        ));
    }
}
