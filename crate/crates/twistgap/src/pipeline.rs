//! Stage orchestration: bands -> edges -> coupling -> counts/fits, with the
//! optional Birman-Schwinger and truncated-tube cross-checks, plus the
//! `verify` harness that grades a finished run against the expectations
//! embedded in its config.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::bands::{self, BandChart, EdgeReport, Gap, GapSide};
use crate::bsch;
use crate::config::{RunConfig, Stage, VerifyCheck};
use crate::coupling::{self, CouplingFunction, EtaL1Report};
use crate::effective::{
    self, Channel, ChannelPotential, CountCurve, DecayProfile, EffectiveModel, EffectiveError,
};
use crate::fiber::{self, TransverseEigen, TwistProfile};
use crate::fulltube::{self, TubePerturbation};
use crate::geometry::{assemble_transverse, build_grid, TransverseOperators};
use crate::linalg;
use crate::report::{self, BsRow, RegimeSummary, RunReport, TubeRow};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("[config] {0}")]
    Config(#[from] crate::config::ConfigError),
    #[error("[bands] {0}")]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error("[bands] {0}")]
    Bands(#[from] bands::BandsError),
    #[error("[coupling] {0}")]
    Coupling(#[from] coupling::CouplingError),
    #[error("[count] {0}")]
    Effective(#[from] EffectiveError),
    #[error("[bs-check] {0}")]
    Bsch(#[from] bsch::BschError),
    #[error("[tube-check] {0}")]
    Tube(#[from] fulltube::TubeError),
    #[error("[io] {0}")]
    Io(#[from] std::io::Error),
    #[error("[{stage}] {message}")]
    Stage { stage: &'static str, message: String },
}

/// Coupling data for one extremizer of one edge.
#[derive(Debug, Clone)]
pub struct CouplingEntry {
    pub m_index: usize,
    pub k_star: f64,
    pub mu: f64,
    pub eigenvalue: f64,
    pub eta: CouplingFunction,
    pub l1: EtaL1Report,
    /// 2 beta int (d_phi psi)^2: the constant-twist closed form, when beta is
    /// constant (diagnostic reference).
    pub constant_twist_reference: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EdgeCoupling {
    pub gap_index: usize,
    pub side: GapSide,
    pub entries: Vec<CouplingEntry>,
}

#[derive(Debug, Clone)]
pub struct EdgeCounts {
    pub gap_index: usize,
    pub side: GapSide,
    pub model_kind: String,
    pub sup_v: f64,
    pub curve: CountCurve,
    pub summary: RegimeSummary,
}

#[derive(Debug, Clone, Default)]
pub struct TubeCheck {
    pub window: (f64, f64),
    pub rows: Vec<TubeRow>,
    pub edge_allowance: usize,
}

/// Everything the stages produced, for downstream consumers (verify, tests).
pub struct PipelineData {
    pub warnings: Vec<String>,
    pub chart: Option<BandChart>,
    pub gaps: Vec<Gap>,
    pub suppressed: Vec<(f64, f64)>,
    pub window_top: f64,
    pub edges: Vec<EdgeReport>,
    pub couplings: Vec<EdgeCoupling>,
    pub counts: Vec<EdgeCounts>,
    pub bs_rows: Vec<BsRow>,
    pub tube: Option<TubeCheck>,
    pub beta_sup: f64,
    pub moment_bound: f64,
}

pub struct RunOutput {
    pub report: RunReport,
    pub data: PipelineData,
    pub out_dir: PathBuf,
}

fn write_artifact(
    dir: &Path,
    name: &str,
    contents: &str,
    artifacts: &mut Vec<String>,
) -> Result<(), PipelineError> {
    std::fs::write(dir.join(name), contents)?;
    artifacts.push(name.to_string());
    Ok(())
}

/// Execute the configured stages in dependency order, writing artifacts under
/// the resolved output directory.
pub fn run(config: &RunConfig, config_text: &str, emit_plots: bool) -> Result<RunOutput, PipelineError> {
    config.validate()?;
    let started = chrono::Utc::now().to_rfc3339();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.numerics.workers)
        .build()
        .map_err(|e| PipelineError::Stage { stage: "config", message: e.to_string() })?;
    let data = pool.install(|| execute_stages(config))?;

    let out_dir = config.resolved_output_dir();
    std::fs::create_dir_all(&out_dir)?;
    let mut artifacts = Vec::new();

    if let Some(chart) = &data.chart {
        write_artifact(&out_dir, "bands.txt", &report::bands_table(chart), &mut artifacts)?;
        write_artifact(
            &out_dir,
            "gaps.txt",
            &report::gaps_table(&data.gaps, &data.suppressed, data.window_top),
            &mut artifacts,
        )?;
        if emit_plots {
            for l in 1..=chart.l_count {
                let pts: Vec<(f64, f64)> = chart
                    .k_samples
                    .iter()
                    .zip(chart.band_values(l))
                    .map(|(&k, e)| (k, e))
                    .collect();
                write_artifact(
                    &out_dir,
                    &format!("plot_band_{l}.txt"),
                    &report::plot_series(&format!("band {l}: k E"), &pts),
                    &mut artifacts,
                )?;
            }
        }
    }
    if !data.edges.is_empty() {
        write_artifact(&out_dir, "edges.txt", &report::edges_table(&data.edges), &mut artifacts)?;
    }
    for ec in &data.couplings {
        for entry in &ec.entries {
            let name = format!(
                "eta_g{}_{}_m{}.txt",
                ec.gap_index,
                report::side_name(ec.side),
                entry.m_index
            );
            write_artifact(
                &out_dir,
                &name,
                &report::eta_table(
                    ec.gap_index,
                    ec.side,
                    entry.m_index,
                    entry.k_star,
                    &entry.eta,
                    &entry.l1,
                ),
                &mut artifacts,
            )?;
        }
    }
    for c in &data.counts {
        let name = format!("counts_g{}_{}.txt", c.gap_index, report::side_name(c.side));
        write_artifact(
            &out_dir,
            &name,
            &report::counts_table(c.gap_index, c.side, &c.model_kind, &c.curve),
            &mut artifacts,
        )?;
        if emit_plots {
            let pts: Vec<(f64, f64)> =
                c.curve.rows.iter().map(|r| (r.lambda, r.count as f64)).collect();
            write_artifact(
                &out_dir,
                &format!("plot_counts_g{}_{}.txt", c.gap_index, report::side_name(c.side)),
                &report::plot_series("lambda N", &pts),
                &mut artifacts,
            )?;
        }
    }
    if !data.counts.is_empty() {
        let summaries: Vec<RegimeSummary> =
            data.counts.iter().map(|c| c.summary.clone()).collect();
        write_artifact(&out_dir, "fits.txt", &report::fits_table(&summaries), &mut artifacts)?;
    }
    if !data.bs_rows.is_empty() {
        write_artifact(&out_dir, "bs_check.txt", &report::bs_table(&data.bs_rows), &mut artifacts)?;
    }
    if let Some(tube) = &data.tube {
        write_artifact(
            &out_dir,
            "tube_check.txt",
            &report::tube_table(tube.window, &tube.rows),
            &mut artifacts,
        )?;
    }

    let report = RunReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: report::config_hash(config_text),
        started_at: started,
        finished_at: chrono::Utc::now().to_rfc3339(),
        stages_run: config.stages.iter().map(|s| s.name().to_string()).collect(),
        warnings: data.warnings.clone(),
        artifacts,
        gap_count: data.chart.as_ref().map(|_| data.gaps.len()),
        window_top: data.chart.as_ref().map(|_| data.window_top),
        edge_values: data
            .edges
            .iter()
            .map(|e| (e.gap_index, report::side_name(e.side).to_string(), e.edge_value))
            .collect(),
        regimes: data.counts.iter().map(|c| c.summary.clone()).collect(),
    };
    std::fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&report).unwrap())?;

    Ok(RunOutput { report, data, out_dir })
}

fn execute_stages(config: &RunConfig) -> Result<PipelineData, PipelineError> {
    let beta = config
        .twist_profile()
        .map_err(|m| PipelineError::Stage { stage: "config", message: m })?;
    let ell_max = config.ell_max();
    let params = config.edge_params();

    let mut warnings = Vec::new();
    if config.cross_section.is_centered_disk() {
        warnings.push(
            "cross-section is a centered disk: twisting acts trivially on the first band and all couplings vanish"
                .to_string(),
        );
    }

    let grid = build_grid(&config.cross_section, config.grid_spacing)?;
    let ops = assemble_transverse(&grid);

    let mut data = PipelineData {
        warnings,
        chart: None,
        gaps: Vec::new(),
        suppressed: Vec::new(),
        window_top: f64::NEG_INFINITY,
        edges: Vec::new(),
        couplings: Vec::new(),
        counts: Vec::new(),
        bs_rows: Vec::new(),
        tube: None,
        beta_sup: beta.sup_abs(),
        moment_bound: ops.moment_bound,
    };

    // shared transverse eigendecomposition when the fiber goes iterative
    let probe_dim = ops.n_nodes() * (2 * ell_max + 1);
    let teig = if probe_dim > fiber::DENSE_THRESHOLD {
        Some(TransverseEigen::new(&ops))
    } else {
        None
    };

    for &stage in &config.stages {
        match stage {
            Stage::Bands => {
                let chart = bands::sweep_bands_with(
                    &ops,
                    &beta,
                    config.numerics.bands,
                    config.numerics.n_k,
                    ell_max,
                    config.numerics.solver_tol,
                    teig.as_ref(),
                )?;
                let scan = bands::scan_gaps(&chart, config.numerics.gap_tol_rel);
                data.gaps = scan.gaps;
                data.suppressed = scan.suppressed;
                data.window_top = scan.window_top;
                data.chart = Some(chart);
            }
            Stage::Edges => {
                let chart = data.chart.as_ref().expect("bands ran first");
                let mut edges = Vec::new();
                for gap in &data.gaps {
                    let sides: &[GapSide] = if gap.index == 0 {
                        &[GapSide::Upper]
                    } else {
                        &[GapSide::Lower, GapSide::Upper]
                    };
                    for &side in sides {
                        edges.push(bands::analyze_edge(
                            chart,
                            gap,
                            side,
                            &ops,
                            &beta,
                            &params,
                            teig.as_ref(),
                        )?);
                    }
                }
                data.edges = edges;
            }
            Stage::Coupling => {
                for edge in &data.edges {
                    let mut entries = Vec::new();
                    for (m_index, x) in edge.extremizers.iter().enumerate() {
                        let psi = coupling::edge_eigenfunction(
                            &ops,
                            &beta,
                            x.k_star,
                            edge.band_index,
                            ell_max,
                            config.numerics.solver_tol,
                            teig.as_ref(),
                        )?;
                        let eta = coupling::compute_eta(&psi, &beta, &ops);
                        let l1 = coupling::eta_l1_report(&eta);
                        let constant_twist_reference = if beta.is_constant() {
                            Some(constant_twist_eta(&psi, &beta, &ops))
                        } else {
                            None
                        };
                        entries.push(CouplingEntry {
                            m_index,
                            k_star: x.k_star,
                            mu: x.mu,
                            eigenvalue: psi.eigenvalue,
                            eta,
                            l1,
                            constant_twist_reference,
                        });
                    }
                    data.couplings.push(EdgeCoupling {
                        gap_index: edge.gap_index,
                        side: edge.side,
                        entries,
                    });
                }
            }
            Stage::Count => {
                for ec in &data.couplings {
                    data.counts.push(count_one_edge(config, ec)?);
                }
            }
            Stage::BsCheck => {
                data.bs_rows = bs_check(config, &data)?;
            }
            Stage::TubeCheck => {
                data.tube = Some(tube_check(config, &ops, &beta, &data)?);
            }
        }
    }
    Ok(data)
}

fn constant_twist_eta(
    psi: &coupling::EdgeEigenfunction,
    beta: &TwistProfile,
    ops: &TransverseOperators,
) -> f64 {
    let n = psi.n_omega;
    let mut p0 = vec![linalg::C64::new(0.0, 0.0); n];
    ops.dphi.apply_complex(psi.block(0), &mut p0);
    2.0 * beta.eval(0.0) * p0.iter().map(|z| z.norm_sqr()).sum::<f64>()
        / (2.0 * std::f64::consts::PI)
}

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Channels for the edge's effective operator. The edge-side sign enters as
/// V = side * 2 pi <eta_m> eps (mean field) or side * 2 pi eta_m(x) eps(x).
fn edge_model(config: &RunConfig, ec: &EdgeCoupling) -> (EffectiveModel, String) {
    let sign = ec.side.sign();
    let channels: Vec<Channel> = ec
        .entries
        .iter()
        .map(|entry| {
            if config.numerics.mean_field {
                Channel::mean_field(entry.mu, sign * TWO_PI * entry.eta.mean)
            } else {
                Channel {
                    mu: entry.mu,
                    potential: ChannelPotential::Oscillating {
                        eta: entry.eta.clone(),
                        sign: sign * TWO_PI,
                    },
                }
            }
        })
        .collect();
    let kind = if config.numerics.mean_field { "mean_field" } else { "oscillating" };
    (EffectiveModel { channels, eps: config.perturbation.clone() }, kind.to_string())
}

fn count_one_edge(config: &RunConfig, ec: &EdgeCoupling) -> Result<EdgeCounts, PipelineError> {
    let (model, model_kind) = edge_model(config, ec);
    let sup_v = model.sup_abs_potential();
    let side = report::side_name(ec.side).to_string();
    if sup_v == 0.0 {
        return Ok(EdgeCounts {
            gap_index: ec.gap_index,
            side: ec.side,
            model_kind,
            sup_v,
            curve: CountCurve { rows: Vec::new() },
            summary: RegimeSummary {
                gap_index: ec.gap_index,
                side,
                regime: "zero-coupling".into(),
                power_fit: None,
                log_fit: None,
                predicted_log_slope: None,
                bounded_tail: Some(true),
                notes: vec!["coupling vanishes; the perturbation is spectrally inert at this edge".into()],
            },
        });
    }
    let curve = effective::count_curve(
        &model,
        config.numerics.lambda_min_rel * sup_v,
        config.numerics.lambda_max_rel * sup_v,
        config.numerics.lambda_points,
    )?;
    let summary = classify_regime(config, ec, &model, &curve);
    Ok(EdgeCounts { gap_index: ec.gap_index, side: ec.side, model_kind, sup_v, curve, summary })
}

fn classify_regime(
    config: &RunConfig,
    ec: &EdgeCoupling,
    model: &EffectiveModel,
    curve: &CountCurve,
) -> RegimeSummary {
    let eps = &model.eps;
    let alpha = eps.alpha();
    let side = report::side_name(ec.side).to_string();
    let sign = ec.side.sign();
    let means: Vec<f64> = ec.entries.iter().map(|e| sign * e.eta.mean).collect();
    let mean_scale = ec
        .entries
        .iter()
        .map(|e| e.eta.sup_abs())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let any_positive = means.iter().any(|&m| m > 1e-9 * mean_scale);
    let all_negative = means.iter().all(|&m| m < -1e-9 * mean_scale);
    let some_zero = means.iter().any(|&m| m.abs() <= 1e-9 * mean_scale);

    let mut notes = Vec::new();
    let mut power_fit = None;
    let mut log_fit = None;
    let mut predicted_log_slope = None;
    let mut bounded_tail = None;

    let regime = if alpha < 2.0 && any_positive && eps.is_s_plus() {
        match effective::fit_power_law(curve, alpha) {
            Ok(f) => power_fit = Some(f),
            Err(e) => notes.push(format!("power-law fit unavailable: {e}")),
        }
        "growth-power-law".to_string()
    } else if alpha < 2.0 && all_negative {
        bounded_tail = Some(effective::tail_is_constant(curve));
        "bounded-negative-coupling".to_string()
    } else if alpha < 2.0 && some_zero {
        bounded_tail = Some(effective::tail_is_constant(curve));
        match effective::fit_power_law(curve, alpha) {
            Ok(f) => {
                power_fit = Some(f);
                notes.push("zero-mean oscillatory coupling: exponent bounds the suppressed growth".into());
            }
            Err(_) => notes.push("zero-mean coupling: counts below the fit floor".into()),
        }
        if alpha <= 1.0 {
            "oscillation-suppressed-growth".to_string()
        } else {
            "bounded-zero-mean".to_string()
        }
    } else if alpha == 2.0 {
        if let Some(limit) = eps.x2_limit() {
            // multi-channel prediction adds per-channel coefficients
            let predicted: f64 = ec
                .entries
                .iter()
                .zip(&means)
                .map(|(e, &m)| {
                    ((TWO_PI * m * limit) / e.mu - 0.25).max(0.0).sqrt() / std::f64::consts::PI
                })
                .sum();
            predicted_log_slope = Some(predicted);
            let subcritical = ec
                .entries
                .iter()
                .zip(&means)
                .all(|(e, &m)| 4.0 * TWO_PI * m * limit < e.mu);
            if subcritical {
                bounded_tail = Some(effective::tail_is_constant(curve));
                "bounded-subcritical-log".to_string()
            } else {
                if let Some(first) = ec.entries.first() {
                    match effective::fit_log_law(curve, first.mu, TWO_PI * means[0], limit) {
                        Ok(f) => log_fit = Some(f),
                        Err(e) => notes.push(format!("log-law fit unavailable: {e}")),
                    }
                }
                "growth-log-law".to_string()
            }
        } else {
            bounded_tail = Some(effective::tail_is_constant(curve));
            "borderline-alpha-two".to_string()
        }
    } else {
        bounded_tail = Some(effective::tail_is_constant(curve));
        "bounded-fast-decay".to_string()
    };

    // full-potential runs share the mean-field predictions only asymptotically
    if !config.numerics.mean_field {
        notes.push("counts taken with the full oscillating potential".into());
    }

    RegimeSummary {
        gap_index: ec.gap_index,
        side,
        regime,
        power_fit,
        log_fit,
        predicted_log_slope,
        bounded_tail,
        notes,
    }
}

fn bs_check(config: &RunConfig, data: &PipelineData) -> Result<Vec<BsRow>, PipelineError> {
    let ec = data
        .couplings
        .first()
        .ok_or(PipelineError::Stage { stage: "bs-check", message: "no coupling data".into() })?;
    let entry = ec
        .entries
        .first()
        .ok_or(PipelineError::Stage { stage: "bs-check", message: "no extremizer".into() })?;
    let eps = &config.perturbation;
    let mu = entry.mu;
    let eta = &entry.eta;
    let sup_v = eta.sup_abs() * eps.sup_abs();
    if sup_v == 0.0 {
        return Err(PipelineError::Stage {
            stage: "bs-check",
            message: "coupling vanishes; nothing to verify".into(),
        });
    }

    let model = EffectiveModel {
        channels: vec![Channel::oscillating(mu, eta.clone())],
        eps: eps.clone(),
    };

    // the identity is exact at every lambda; sample where the dense
    // diagonalization stays small (grid size scales as lambda^{-1/2})
    let lambdas: Vec<f64> = (0..5).map(|i| 1e-1 * sup_v * 0.841f64.powi(i)).collect();
    let rows: Result<Vec<BsRow>, PipelineError> = lambdas
        .par_iter()
        .map(|&lambda| {
            let (bs_n, bs_ok) = bsch::bs_count_stable(eta, eps, mu, lambda, 1.0)?;
            let direct = effective::count_below(&model, lambda, 0.0, 0)?;
            Ok(BsRow {
                lambda,
                bs_count: bs_n,
                direct_count: direct.count,
                bs_converged: bs_ok,
                direct_converged: direct.converged,
            })
        })
        .collect();
    rows
}

fn tube_check(
    config: &RunConfig,
    ops: &TransverseOperators,
    beta: &TwistProfile,
    data: &PipelineData,
) -> Result<TubeCheck, PipelineError> {
    // edge of the semibounded gap: refined value when edges ran, else coarse
    let edge = data
        .edges
        .iter()
        .find(|e| e.gap_index == 0)
        .map(|e| e.edge_value)
        .or_else(|| data.gaps.first().map(|g| g.upper))
        .ok_or(PipelineError::Stage { stage: "tube-check", message: "no gap data".into() })?;

    let window = (edge - config.tube.window_depth, edge - config.tube.window_margin);
    let x_half = config.tube.half_length_periods as f64 * TWO_PI;
    let step = config.tube.x3_step;

    let mut rows = Vec::new();
    for &scale in &config.tube.scales {
        let pert = TubePerturbation { eps: config.perturbation.clone(), scale };
        let tube = fulltube::assemble_tube(ops, beta, Some(&pert), x_half, step)?;
        let wc = tube.gap_window_count(window.0, window.1);
        rows.push(TubeRow { scale, x_half, count: wc.count, perturbations: wc.perturbations });
    }
    // domain-doubling stability at the largest scale
    if let Some(&scale) = config.tube.scales.last() {
        let pert = TubePerturbation { eps: config.perturbation.clone(), scale };
        let tube = fulltube::assemble_tube(ops, beta, Some(&pert), 2.0 * x_half, step)?;
        let wc = tube.gap_window_count(window.0, window.1);
        rows.push(TubeRow {
            scale,
            x_half: 2.0 * x_half,
            count: wc.count,
            perturbations: wc.perturbations,
        });
    }
    Ok(TubeCheck { window, rows, edge_allowance: config.tube.edge_allowance })
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped(String),
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

pub struct VerifyOutput {
    pub run: RunOutput,
    pub checks: Vec<CheckResult>,
}

pub fn check_matrix(checks: &[CheckResult]) -> String {
    let mut s = String::from("# twistgap verify v1\n");
    for c in checks {
        let status = match &c.status {
            CheckStatus::Pass => "PASS".to_string(),
            CheckStatus::Fail => "FAIL".to_string(),
            CheckStatus::Skipped(r) => format!("SKIPPED ({r})"),
        };
        s.push_str(&format!("{:<24} {:<10} {}\n", c.name, status, c.detail));
    }
    s
}

impl VerifyOutput {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| !matches!(c.status, CheckStatus::Fail))
    }

    pub fn matrix(&self) -> String {
        check_matrix(&self.checks)
    }
}

pub fn verify(config: &RunConfig, config_text: &str) -> Result<VerifyOutput, PipelineError> {
    let run_out = run(config, config_text, false)?;
    let mut checks = Vec::new();
    for check in &config.verify {
        checks.push(evaluate_check(config, check, &run_out.data));
    }
    std::fs::write(run_out.out_dir.join("verify.txt"), check_matrix(&checks))?;
    Ok(VerifyOutput { run: run_out, checks })
}

fn pass(name: &str, detail: String) -> CheckResult {
    CheckResult { name: name.into(), status: CheckStatus::Pass, detail }
}

fn fail(name: &str, detail: String) -> CheckResult {
    CheckResult { name: name.into(), status: CheckStatus::Fail, detail }
}

fn skip(name: &str, why: &str) -> CheckResult {
    CheckResult { name: name.into(), status: CheckStatus::Skipped(why.into()), detail: String::new() }
}

fn evaluate_check(config: &RunConfig, check: &VerifyCheck, data: &PipelineData) -> CheckResult {
    match check {
        VerifyCheck::EdgeValue { value, rel_tol } => {
            let Some(edge) = data.edges.iter().find(|e| e.gap_index == 0) else {
                return skip("edge_value", "edges stage not run");
            };
            let rel = (edge.edge_value - value).abs() / value.abs();
            let detail = format!("edge {} vs {} (rel {:.2e})", edge.edge_value, value, rel);
            if rel <= *rel_tol {
                pass("edge_value", detail)
            } else {
                fail("edge_value", detail)
            }
        }
        VerifyCheck::GapCount { expect } => {
            if data.chart.is_none() {
                return skip("gap_count", "bands stage not run");
            }
            let got = data.gaps.len();
            let detail = format!("{got} gaps (expected {expect})");
            if got == *expect {
                pass("gap_count", detail)
            } else {
                fail("gap_count", detail)
            }
        }
        VerifyCheck::Edge { gap, side, k_star, k_tol, mu, mu_rel_tol } => {
            let want_side =
                if side == "lower" { GapSide::Lower } else { GapSide::Upper };
            let Some(edge) =
                data.edges.iter().find(|e| e.gap_index == *gap && e.side == want_side)
            else {
                return skip("edge", "edge not analyzed");
            };
            let hit = edge
                .extremizers
                .iter()
                .find(|x| (x.k_star - k_star).abs() <= *k_tol);
            match hit {
                Some(x) => {
                    let unique = edge.extremizers.len()
                        == if *k_star == 0.0 || *k_star == 0.5 { 1 } else { 2 };
                    let mass_ok = match mu {
                        Some(mu) => (x.mu - mu).abs() / mu.abs() <= *mu_rel_tol,
                        None => x.mu > 0.0,
                    };
                    let detail = format!(
                        "k* {} mu {} (expected {:?}); {} extremizer(s); regular {}",
                        x.k_star,
                        x.mu,
                        mu,
                        edge.extremizers.len(),
                        edge.regularity.is_regular()
                    );
                    if mass_ok && unique && edge.regularity.is_regular() {
                        pass("edge", detail)
                    } else {
                        fail("edge", detail)
                    }
                }
                None => fail(
                    "edge",
                    format!(
                        "no extremizer near k* = {k_star}; found {:?}",
                        edge.extremizers.iter().map(|x| x.k_star).collect::<Vec<_>>()
                    ),
                ),
            }
        }
        VerifyCheck::EtaConstant { rel_tol } => {
            let Some(entry) = data.couplings.first().and_then(|c| c.entries.first()) else {
                return skip("eta_constant", "coupling stage not run");
            };
            let Some(reference) = entry.constant_twist_reference else {
                return skip("eta_constant", "twist is not constant");
            };
            let spread = entry.eta.samples.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
                - entry.eta.samples.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            let rel = (entry.eta.mean - reference).abs() / reference.abs().max(1e-300);
            let detail = format!(
                "eta mean {} vs closed form {} (rel {:.2e}), spread {:.2e}",
                entry.eta.mean, reference, rel, spread
            );
            if rel <= *rel_tol && spread <= *rel_tol * reference.abs() {
                pass("eta_constant", detail)
            } else {
                fail("eta_constant", detail)
            }
        }
        VerifyCheck::EtaZero { rel_tol } => {
            let Some(ec) = data.couplings.first() else {
                return skip("eta_zero", "coupling stage not run");
            };
            // natural scale: envelope 2 sup|beta| sup|x_t|^2 E of the integrand
            let edge = data.edges.first().map_or(1.0, |e| e.edge_value);
            let scale =
                2.0 * data.beta_sup.max(1e-300) * data.moment_bound * edge / TWO_PI;
            let worst = ec
                .entries
                .iter()
                .map(|e| e.eta.sup_abs())
                .fold(0.0f64, f64::max);
            let detail = format!("max |eta| {worst:.3e} vs {:.3e} (= {rel_tol:.0e} x scale {scale:.3e})", rel_tol * scale);
            if worst <= rel_tol * scale {
                pass("eta_zero", detail)
            } else {
                fail("eta_zero", detail)
            }
        }
        VerifyCheck::CountingExactness { cases, max_dim } => {
            counting_exactness(*cases, *max_dim)
        }
        VerifyCheck::BsIdentity { lambdas_rel } => bs_identity(config, data, lambdas_rel),
        VerifyCheck::PowerLaw { slope_rel_tol, ratio_band } => {
            let Some(counts) = data.counts.first() else {
                return skip("power_law", "count stage not run");
            };
            match &counts.summary.power_fit {
                Some(f) => {
                    let rel = (f.exponent - f.expected).abs() / f.expected.abs();
                    let ratio = f.ratio_at_min;
                    let ratio_ok = ratio
                        .map(|r| r >= ratio_band[0] && r <= ratio_band[1])
                        .unwrap_or(false);
                    let detail = format!(
                        "exponent {} vs {} (rel {:.2e}); ratio {:?} in [{}, {}]",
                        f.exponent, f.expected, rel, ratio, ratio_band[0], ratio_band[1]
                    );
                    if rel <= *slope_rel_tol && ratio_ok {
                        pass("power_law", detail)
                    } else {
                        fail("power_law", detail)
                    }
                }
                None => skip("power_law", "insufficient resolution for the fit"),
            }
        }
        VerifyCheck::LogLaw { slope_rel_tol } => {
            let Some(counts) = data.counts.first() else {
                return skip("log_law", "count stage not run");
            };
            let predicted = counts.summary.predicted_log_slope.unwrap_or(0.0);
            if counts.summary.regime == "bounded-subcritical-log" {
                let ok = counts.summary.bounded_tail == Some(true);
                let detail = "subcritical coefficient: tail constancy".to_string();
                return if ok { pass("log_law", detail) } else { fail("log_law", detail) };
            }
            match &counts.summary.log_fit {
                Some(f) => {
                    let rel = (f.slope - predicted).abs() / predicted.abs().max(1e-300);
                    let detail =
                        format!("slope {} vs {} (rel {:.2e})", f.slope, predicted, rel);
                    if rel <= *slope_rel_tol {
                        pass("log_law", detail)
                    } else {
                        fail("log_law", detail)
                    }
                }
                None => skip("log_law", "insufficient resolution for the fit"),
            }
        }
        VerifyCheck::BoundedTail => {
            let Some(counts) = data.counts.first() else {
                return skip("bounded_tail", "count stage not run");
            };
            let last = counts.curve.rows.last().map(|r| r.count);
            match counts.summary.bounded_tail {
                Some(true) => pass(
                    "bounded_tail",
                    format!("counts constant over the final decade (tail count {:?})", last),
                ),
                Some(false) => fail("bounded_tail", "counts still changing in the final decade".into()),
                None => skip("bounded_tail", "regime does not test boundedness"),
            }
        }
        VerifyCheck::OscVsMean { ratio_band, last } => {
            let Some(entry) = data.couplings.first().and_then(|c| c.entries.first()) else {
                return skip("osc_vs_mean", "coupling stage not run");
            };
            let sup_v = entry.eta.sup_abs() * config.perturbation.sup_abs();
            match effective::compare_oscillating_vs_mean(
                &entry.eta,
                &config.perturbation,
                entry.mu,
                config.numerics.lambda_min_rel * sup_v,
                config.numerics.lambda_max_rel * sup_v,
                config.numerics.lambda_points,
            ) {
                Ok(cmp) => {
                    let tail: Vec<_> = cmp
                        .rows
                        .iter()
                        .rev()
                        .take(*last)
                        .collect();
                    let ratios: Vec<f64> =
                        tail.iter().filter_map(|r| r.ratio).collect();
                    let ok = ratios.len() == *last
                        && ratios.iter().all(|&r| r >= ratio_band[0] && r <= ratio_band[1]);
                    let detail = format!("smallest-lambda ratios {:?}", ratios);
                    if ok {
                        pass("osc_vs_mean", detail)
                    } else {
                        fail("osc_vs_mean", detail)
                    }
                }
                Err(e) => fail("osc_vs_mean", e.to_string()),
            }
        }
        VerifyCheck::TubeTrend => {
            let Some(tube) = &data.tube else {
                return skip("tube_trend", "tube-check stage not run");
            };
            let n = config.tube.scales.len();
            if tube.rows.len() < n + 1 {
                return fail("tube_trend", "missing tube rows".into());
            }
            let counts: Vec<usize> = tube.rows.iter().map(|r| r.count).collect();
            let monotone = counts[..n].windows(2).all(|w| w[1] >= w[0]);
            let positive = counts[n - 1] > 0;
            let stable = counts[n].abs_diff(counts[n - 1]) <= tube.edge_allowance;
            let detail = format!(
                "counts {:?} (last row is the doubled domain), allowance {}",
                counts, tube.edge_allowance
            );
            if monotone && positive && stable {
                pass("tube_trend", detail)
            } else {
                fail("tube_trend", detail)
            }
        }
    }
}

fn counting_exactness(cases: usize, max_dim: usize) -> CheckResult {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x00C0_FFEE);
    let mut checked = 0usize;
    for case in 0..cases {
        let alpha = rng.gen_range(0.7..3.2);
        let coeff = rng.gen_range(-1.0..3.0);
        let lambda = 10f64.powf(rng.gen_range(-3.0..-1.0));
        let n = rng.gen_range(40..=max_dim);
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
        if inertia != exact {
            return fail(
                "counting_exactness",
                format!("case {case}: inertia {inertia} vs dense {exact} (n = {n})"),
            );
        }
        checked += 1;
    }
    pass("counting_exactness", format!("{checked} random instances agree exactly"))
}

fn bs_identity(config: &RunConfig, data: &PipelineData, lambdas_rel: &[f64]) -> CheckResult {
    let Some(entry) = data.couplings.first().and_then(|c| c.entries.first()) else {
        return skip("bs_identity", "coupling stage not run");
    };
    let eps = &config.perturbation;
    let eta = &entry.eta;
    let mu = entry.mu;
    let sup_v = eta.sup_abs() * eps.sup_abs();
    if sup_v == 0.0 {
        return skip("bs_identity", "zero coupling");
    }
    let model = EffectiveModel {
        channels: vec![Channel::oscillating(mu, eta.clone())],
        eps: eps.clone(),
    };
    let mut details = Vec::new();
    for &rel in lambdas_rel {
        let lambda = rel * sup_v;
        let bs = match bsch::bs_count_stable(eta, eps, mu, lambda, 1.0) {
            Ok(v) => v,
            Err(e) => return fail("bs_identity", e.to_string()),
        };
        let direct = match effective::count_below(&model, lambda, 0.0, 0) {
            Ok(v) => v,
            Err(e) => return fail("bs_identity", e.to_string()),
        };
        details.push(format!("lambda {lambda:.3e}: bs {} direct {}", bs.0, direct.count));
        if !(bs.1 && direct.converged && bs.0 == direct.count) {
            return fail("bs_identity", details.join("; "));
        }
    }
    pass("bs_identity", details.join("; "))
}
