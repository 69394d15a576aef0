//! End-to-end acceptance checks. Each test prints one pass/fail line with its
//! runtime; tolerances are pinned in the assertions. Tests take a global lock
//! so the runtime budgets refer to a machine that is not fighting itself.

use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use approx::assert_relative_eq;

use twistgap::bands::{self, GapSide};
use twistgap::bsch;
use twistgap::config::RunConfig;
use twistgap::coupling::{self, CouplingFunction};
use twistgap::effective::{self, Channel, DecayProfile, EffectiveModel};
use twistgap::fiber::TwistProfile;
use twistgap::geometry::{assemble_transverse, build_grid, CrossSectionShape};
use twistgap::linalg;
use twistgap::pipeline;

static GATE: Mutex<()> = Mutex::new(());

fn gate() -> MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn finish(name: &str, start: Instant, budget_secs: u64, detail: &str) {
    let elapsed = start.elapsed();
    if elapsed.as_secs() >= budget_secs {
        println!("acceptance {name}: FAIL — {budget_secs}s budget exceeded ({elapsed:?})");
        panic!("{name} exceeded its {budget_secs}s budget ({elapsed:?})");
    }
    println!("acceptance {name}: PASS in {:.1}s — {detail}", elapsed.as_secs_f64());
}

fn golden(path: &str) -> (RunConfig, String) {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(path);
    RunConfig::from_path(&path).expect("golden config parses")
}

fn run_verify(path: &str, out: &tempfile::TempDir) -> pipeline::VerifyOutput {
    let (config, text) = golden(path);
    std::env::set_var("TWISTGAP_OUT_DIR", out.path());
    let v = pipeline::verify(&config, &text).expect("pipeline runs");
    std::env::remove_var("TWISTGAP_OUT_DIR");
    v
}

/// 1. Straight-tube reference: the semibounded edge sits at the square's
/// lowest Dirichlet eigenvalue, the first band is exactly quadratic, and the
/// edge mass is 1.
#[test]
fn criterion_01_straight_tube() {
    let _g = gate();
    let t0 = Instant::now();
    let exact = 2.0 * std::f64::consts::PI * std::f64::consts::PI;

    let grid = build_grid(&CrossSectionShape::rectangle(1.0, 1.0), 0.025).unwrap();
    let ops = assemble_transverse(&grid);
    let beta = TwistProfile::constant(0.0);
    let teig = twistgap::fiber::TransverseEigen::new(&ops);
    let chart = bands::sweep_bands_with(&ops, &beta, 1, 16, 1, 1e-9, Some(&teig)).unwrap();
    let gaps = bands::find_gaps(&chart);
    assert_eq!(gaps.len(), 1);
    let lambda1 = gaps[0].upper;
    let rel = (lambda1 - exact).abs() / exact;
    assert!(rel <= 0.01, "lambda_1 {lambda1} vs {exact} (rel {rel:.2e})");

    // first band is lambda_1 + k^2 on the whole sampled torus
    for (i, &k) in chart.k_samples.iter().enumerate() {
        assert_relative_eq!(chart.bands[i][0], lambda1 + k * k, max_relative = 1e-7);
    }

    let params = bands::EdgeParams { ell_max: 1, ..Default::default() };
    let report =
        bands::analyze_edge(&chart, &gaps[0], GapSide::Upper, &ops, &beta, &params, Some(&teig))
            .unwrap();
    assert_eq!(report.extremizers.len(), 1);
    assert_eq!(report.extremizers[0].k_star, 0.0);
    let mu = report.extremizers[0].mu;
    assert!((mu - 1.0).abs() <= 0.02, "mu = {mu}");
    assert!(report.regularity.is_regular());

    finish(
        "01 straight tube",
        t0,
        60,
        &format!("lambda_1 rel err {rel:.1e}, mu {mu:.6}"),
    );
}

/// 2. Constant-twist consistency: one gap, a unique extremizer at k = 0 with
/// positive mass, and a constant coupling function matching the closed form.
#[test]
fn criterion_02_constant_twist() {
    let _g = gate();
    let t0 = Instant::now();
    let out = tempfile::tempdir().unwrap();
    let v = run_verify("constant_twist.json", &out);
    println!("{}", v.matrix());
    assert!(v.all_passed(), "verify failures:\n{}", v.matrix());

    let data = &v.run.data;
    assert_eq!(data.gaps.len(), 1, "exactly one gap");
    let edge = &data.edges[0];
    assert_eq!(edge.extremizers.len(), 1);
    assert_eq!(edge.extremizers[0].k_star, 0.0);
    assert!(edge.extremizers[0].mu > 0.0);
    let entry = &data.couplings[0].entries[0];
    let reference = entry.constant_twist_reference.unwrap();
    let spread = entry.eta.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - entry.eta.samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let rel = (entry.eta.mean - reference).abs() / reference;
    assert!(rel <= 0.01 && spread <= 0.01 * reference.abs());

    finish(
        "02 constant twist",
        t0,
        300,
        &format!("mu {:.4}, eta {:.6e} vs closed form {:.6e}", edge.extremizers[0].mu, entry.eta.mean, reference),
    );
}

/// 3. Counting exactness: inertia counts equal dense-diagonalization counts
/// on 50 random (potential, lambda) instances, exactly.
#[test]
fn criterion_03_counting_exactness() {
    let _g = gate();
    let t0 = Instant::now();
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xACCE);
    for case in 0..50 {
        let alpha = rng.gen_range(0.7..3.2);
        let coeff = rng.gen_range(-1.0..3.0);
        let lambda = 10f64.powf(rng.gen_range(-3.0..-1.0));
        let n = rng.gen_range(40..=400);
        let r = rng.gen_range(5.0..40.0);
        let mu = rng.gen_range(0.5..2.0);
        let channel = Channel::mean_field(mu, coeff);
        let eps = DecayProfile::Power { c: 1.0, alpha };
        let (diag, off) = effective::assemble_channel_tridiagonal(&channel, &eps, lambda, r, n);
        let offs = vec![off; n - 1];
        let inertia = linalg::tridiagonal_count_below(&diag, &offs, 0.0);
        let mut dense = ndarray::Array2::<f64>::zeros((n, n));
        for i in 0..n {
            dense[(i, i)] = diag[i];
            if i + 1 < n {
                dense[(i, i + 1)] = off;
                dense[(i + 1, i)] = off;
            }
        }
        let (vals, _) = linalg::eigh_real(&dense);
        let exact = vals.iter().filter(|&&v| v < 0.0).count();
        assert_eq!(inertia, exact, "case {case} (n = {n})");
    }
    finish("03 counting exactness", t0, 60, "50/50 instances agree exactly");
}

/// 4. Birman-Schwinger identity: the sandwiched-operator count equals the
/// inertia count at 5 lambdas for 3 potentials, exactly, with both
/// convergence certificates set.
#[test]
fn criterion_04_birman_schwinger() {
    let _g = gate();
    let t0 = Instant::now();
    let cases: Vec<(&str, CouplingFunction, DecayProfile, f64)> = vec![
        (
            "lorentzian",
            CouplingFunction::constant(1.0),
            DecayProfile::PowerWithLimit { limit: 2.0 },
            1.0,
        ),
        (
            "compact bump",
            CouplingFunction::constant(0.8),
            DecayProfile::CompactBump { c: 0.6, radius: 2.5 },
            1.0,
        ),
        ("cosine sidebands", {
            let n = 33;
            let samples: Vec<f64> = (0..n)
                .map(|j| 0.5 * (1.0 + (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos()))
                .collect();
            CouplingFunction::from_samples(samples, 1)
        }, DecayProfile::Power { c: 1.0, alpha: 3.0 }, 1.0),
    ];
    let mut detail = Vec::new();
    for (name, eta, eps, mu) in &cases {
        let sup_v = eta.sup_abs() * eps.sup_abs();
        let mut nonzero = false;
        for i in 0..5 {
            let lambda = 0.1 * sup_v * 0.841f64.powi(i);
            let (bs, bs_ok) = bsch::bs_count_stable(eta, eps, *mu, lambda, 1.0).unwrap();
            let model = EffectiveModel {
                channels: vec![Channel::oscillating(*mu, eta.clone())],
                eps: eps.clone(),
            };
            let direct = effective::count_below(&model, lambda, 0.0, 0).unwrap();
            assert!(bs_ok && direct.converged, "{name}: flags at lambda {lambda:.3e}");
            assert_eq!(bs, direct.count, "{name} at lambda {lambda:.3e}");
            nonzero |= bs > 0;
        }
        assert!(nonzero, "{name}: all counts were zero; the check would be vacuous");
        detail.push(format!("{name} ok"));
    }
    finish("04 birman-schwinger", t0, 600, &detail.join(", "));
}

/// 5. Power-law regime: fitted log-log slope within tolerance of the
/// predicted 1/2 - 1/alpha, and the exact/semiclassical ratio near 1 at the
/// smallest lambda, for alpha = 0.8 and 1.5.
#[test]
fn criterion_05_power_law() {
    let _g = gate();
    let t0 = Instant::now();
    let mut detail = Vec::new();
    for (alpha, c, tol) in [(0.8, 1.0, 0.10), (1.5, 10.0, 0.15)] {
        let model = EffectiveModel {
            channels: vec![Channel::mean_field(1.0, 1.0)],
            eps: DecayProfile::Power { c, alpha },
        };
        let sup_v = model.sup_abs_potential();
        let curve = effective::count_curve(&model, 1e-6 * sup_v, 1e-1 * sup_v, 25).unwrap();
        let fit = effective::fit_power_law(&curve, alpha).unwrap();
        let rel = (fit.exponent - fit.expected).abs() / fit.expected.abs();
        assert!(
            rel <= tol,
            "alpha {alpha}: exponent {} vs {} (rel {rel:.3})",
            fit.exponent,
            fit.expected
        );
        let ratio = fit.ratio_at_min.expect("semiclassical reference present");
        assert!(
            (0.8..=1.2).contains(&ratio),
            "alpha {alpha}: exact/semiclassical ratio {ratio}"
        );
        detail.push(format!(
            "alpha {alpha}: slope {:.4} (target {:.4}), ratio {:.3}",
            fit.exponent, fit.expected, ratio
        ));
    }
    finish("05 power law", t0, 900, &detail.join("; "));
}

/// 6. Oscillating versus mean-field: for eta = 1 + cos x the exact counts of
/// the full potential track the mean-field counts to within 15% at the three
/// smallest lambdas.
#[test]
fn criterion_06_oscillating_vs_mean() {
    let _g = gate();
    let t0 = Instant::now();
    let n = 33;
    let samples: Vec<f64> = (0..n)
        .map(|j| 1.0 + (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos())
        .collect();
    let eta = CouplingFunction::from_samples(samples, 1);
    let eps = DecayProfile::Power { c: 1.0, alpha: 1.0 };
    let sup_v = eta.sup_abs() * eps.sup_abs();
    let cmp = effective::compare_oscillating_vs_mean(
        &eta,
        &eps,
        1.0,
        1e-6 * sup_v,
        1e-1 * sup_v,
        25,
    )
    .unwrap();
    let tail: Vec<&effective::OscVsMeanRow> = cmp.rows.iter().rev().take(3).collect();
    let mut ratios = Vec::new();
    for row in tail {
        let ratio = row.ratio.expect("mean-field counts positive at small lambda");
        assert!(
            (0.85..=1.15).contains(&ratio),
            "lambda {:.3e}: ratio {ratio} (full {}, mean {})",
            row.lambda,
            row.full,
            row.mean
        );
        ratios.push(format!("{ratio:.3}"));
    }
    finish("06 oscillating vs mean", t0, 900, &format!("ratios {}", ratios.join(", ")));
}

/// 7. Log law at alpha = 2: the N vs |ln lambda| slope matches the predicted
/// 1/pi within 15% for the supercritical coefficient, and the subcritical
/// curve is constant over its final decade.
#[test]
fn criterion_07_log_law() {
    let _g = gate();
    let t0 = Instant::now();

    let model = EffectiveModel {
        channels: vec![Channel::mean_field(1.0, 1.0)],
        eps: DecayProfile::PowerWithLimit { limit: 1.25 },
    };
    let sup_v = model.sup_abs_potential();
    let curve = effective::count_curve(&model, 2e-12 * sup_v, 1e-2 * sup_v, 60).unwrap();
    let fit = effective::fit_log_law(&curve, 1.0, 1.0, 1.25).unwrap();
    let target = 1.0 / std::f64::consts::PI;
    assert_relative_eq!(fit.predicted, target, max_relative = 1e-12);
    let rel = (fit.slope - target).abs() / target;
    assert!(rel <= 0.15, "slope {} vs {} (rel {rel:.3})", fit.slope, target);

    let sub = EffectiveModel {
        channels: vec![Channel::mean_field(1.0, 1.0)],
        eps: DecayProfile::PowerWithLimit { limit: 0.125 },
    };
    let sub_curve = effective::count_curve(&sub, 1e-8 * 0.125, 1e-1 * 0.125, 15).unwrap();
    let sub_fit = effective::fit_log_law(&sub_curve, 1.0, 1.0, 0.125).unwrap();
    assert!(sub_fit.subcritical && sub_fit.bounded_tail, "subcritical tail not constant");

    finish(
        "07 log law",
        t0,
        900,
        &format!("slope {:.4} vs {:.4} (rel {:.3}); subcritical constant", fit.slope, target, rel),
    );
}

/// 8. Boundedness regimes: negative coupling, zero-mean oscillation with
/// alpha in (1,2), and fast decay alpha > 2 all give count curves constant
/// over the final lambda decade.
#[test]
fn criterion_08_boundedness() {
    let _g = gate();
    let t0 = Instant::now();

    // repulsive mean field
    let repulsive = EffectiveModel {
        channels: vec![Channel::mean_field(1.0, -1.0)],
        eps: DecayProfile::Power { c: 1.0, alpha: 1.0 },
    };
    let curve = effective::count_curve(&repulsive, 1e-6, 1e-1, 13).unwrap();
    assert!(curve.rows.iter().all(|r| r.count == 0));
    assert!(effective::tail_is_constant(&curve));

    // zero-mean oscillation, alpha in (1, 2)
    let n = 33;
    let samples: Vec<f64> =
        (0..n).map(|j| (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos()).collect();
    let eta = CouplingFunction::from_samples(samples, 1);
    let osc = EffectiveModel {
        channels: vec![Channel::oscillating(1.0, eta)],
        eps: DecayProfile::Power { c: 1.0, alpha: 1.5 },
    };
    let curve_osc = effective::count_curve(&osc, 1e-6, 1e-1, 13).unwrap();
    assert!(
        effective::tail_is_constant(&curve_osc),
        "zero-mean rows: {:?}",
        curve_osc.rows.iter().map(|r| r.count).collect::<Vec<_>>()
    );

    // fast decay
    let fast = EffectiveModel {
        channels: vec![Channel::mean_field(1.0, 3.0)],
        eps: DecayProfile::Power { c: 1.0, alpha: 3.0 },
    };
    let curve_fast = effective::count_curve(&fast, 3e-7, 3e-2, 13).unwrap();
    assert!(effective::tail_is_constant(&curve_fast));
    assert!(curve_fast.rows.last().unwrap().count > 0);

    let tails: Vec<usize> = [&curve, &curve_osc, &curve_fast]
        .iter()
        .map(|c| c.rows.last().unwrap().count)
        .collect();
    finish("08 boundedness", t0, 600, &format!("tail counts {:?}", tails));
}

/// 9. Zero-coupling symmetry: a straight tube and a centered disk both give
/// couplings at the rounding floor.
#[test]
fn criterion_09_zero_coupling() {
    let _g = gate();
    let t0 = Instant::now();

    // no twist: eta vanishes identically
    let ops = assemble_transverse(
        &build_grid(&CrossSectionShape::rectangle(1.0, 1.0), 0.0625).unwrap(),
    );
    let beta = TwistProfile::constant(0.0);
    let psi = coupling::edge_eigenfunction(&ops, &beta, 0.0, 1, 1, 1e-9, None).unwrap();
    let eta = coupling::compute_eta(&psi, &beta, &ops);
    assert_eq!(eta.sup_abs(), 0.0);

    // centered disk with a real twist: the angular-invariant ground state is
    // annihilated by d_phi exactly on the polar grid
    let disk = assemble_transverse(&build_grid(&CrossSectionShape::ellipse(1.0, 1.0), 0.08).unwrap());
    let beta_disk = TwistProfile::constant(0.4);
    let psi_d = coupling::edge_eigenfunction(&disk, &beta_disk, 0.0, 1, 2, 1e-9, None).unwrap();
    let eta_d = coupling::compute_eta(&psi_d, &beta_disk, &disk);
    // natural envelope: 2 sup|beta| sup|x_t|^2 E / (2 pi)
    let scale = 2.0 * 0.4 * disk.moment_bound * psi_d.eigenvalue / (2.0 * std::f64::consts::PI);
    assert!(
        eta_d.sup_abs() <= 1e-8 * scale,
        "disk coupling {} vs {:.3e}",
        eta_d.sup_abs(),
        1e-8 * scale
    );

    finish(
        "09 zero coupling",
        t0,
        120,
        &format!("square sup|eta| = 0, disk sup|eta| = {:.2e} (scale {scale:.2})", eta_d.sup_abs()),
    );
}

/// 10. Full-tube trend: window counts in the truncated tube are nondecreasing
/// in the perturbation scale, positive at the largest scale, and stable under
/// domain doubling within the edge-state allowance.
#[test]
fn criterion_10_tube_trend() {
    let _g = gate();
    let t0 = Instant::now();
    let out = tempfile::tempdir().unwrap();
    let v = run_verify("tube_trend.json", &out);
    println!("{}", v.matrix());
    assert!(v.all_passed(), "verify failures:\n{}", v.matrix());
    let tube = v.run.data.tube.as_ref().unwrap();
    let counts: Vec<usize> = tube.rows.iter().map(|r| r.count).collect();
    finish("10 tube trend", t0, 1800, &format!("window counts {:?}", counts));
}
