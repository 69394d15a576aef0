//! Artifact serialization. Every table is a versioned plain-text schema with
//! numeric fields at 17 significant digits, so reruns under an identical
//! config are byte-identical and golden tests can diff files directly.

use serde::Serialize;

use crate::bands::{BandChart, EdgeReport, Gap, GapSide};
use crate::coupling::{CouplingFunction, EtaL1Report};
use crate::effective::{CountCurve, LogLawFit, PowerLawFit};

pub fn fmt(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{:.16e}", x)
    }
}

pub fn side_name(side: GapSide) -> &'static str {
    match side {
        GapSide::Lower => "lower",
        GapSide::Upper => "upper",
    }
}

pub fn bands_table(chart: &BandChart) -> String {
    let mut s = format!(
        "# twistgap bands v1 n_k={} bands={}\n# k E_1 .. E_L\n",
        chart.n_k(),
        chart.l_count
    );
    for (i, &k) in chart.k_samples.iter().enumerate() {
        s.push_str(&fmt(k));
        for l in 0..chart.l_count {
            s.push(' ');
            s.push_str(&fmt(chart.bands[i][l]));
        }
        s.push('\n');
    }
    s
}

pub fn gaps_table(gaps: &[Gap], suppressed: &[(f64, f64)], window_top: f64) -> String {
    let mut s = format!(
        "# twistgap gaps v1 window_top={}\n# certified relative to the resolved band window only\n# index lower upper band_below band_above\n",
        fmt(window_top)
    );
    for g in gaps {
        s.push_str(&format!(
            "{} {} {} {} {}\n",
            g.index,
            fmt(g.lower),
            fmt(g.upper),
            g.band_below.map_or("-".to_string(), |b| b.to_string()),
            g.band_above
        ));
    }
    for (lo, hi) in suppressed {
        s.push_str(&format!("# suppressed-below-tolerance {} {}\n", fmt(*lo), fmt(*hi)));
    }
    s
}

pub fn edges_table(edges: &[EdgeReport]) -> String {
    let mut s = String::from(
        "# twistgap edges v1\n# edge gap side band value unique_band finite positive_mass flat\n",
    );
    for e in edges {
        s.push_str(&format!(
            "edge {} {} {} {} {} {} {} {}\n",
            e.gap_index,
            side_name(e.side),
            e.band_index,
            fmt(e.edge_value),
            e.regularity.unique_band,
            e.regularity.finite_extremizers,
            e.regularity.positive_mass,
            e.regularity.flat_at_extremizers,
        ));
        for x in &e.extremizers {
            s.push_str(&format!(
                "extremizer {} {} {} {}\n",
                fmt(x.k_star),
                fmt(x.mu),
                fmt(x.mu_err),
                fmt(x.slope)
            ));
        }
        for note in &e.regularity.notes {
            s.push_str(&format!("# note: {note}\n"));
        }
    }
    s
}

pub fn eta_table(
    gap: usize,
    side: GapSide,
    m_index: usize,
    k_star: f64,
    eta: &CouplingFunction,
    l1: &EtaL1Report,
) -> String {
    let mut s = format!(
        "# twistgap eta v1 gap={} side={} m={} k_star={}\n# mean={} l1={} tail_fraction={}\n# x3 eta\n",
        gap,
        side_name(side),
        m_index,
        fmt(k_star),
        fmt(eta.mean),
        fmt(l1.l1),
        fmt(l1.tail_fraction)
    );
    for (x, v) in eta.x3.iter().zip(&eta.samples) {
        s.push_str(&format!("{} {}\n", fmt(*x), fmt(*v)));
    }
    s.push_str("# fourier l re im\n");
    let m = eta.max_harmonic as i64;
    for l in -m..=m {
        let c = eta.coeff(l);
        s.push_str(&format!("# fourier {} {} {}\n", l, fmt(c.re), fmt(c.im)));
    }
    s
}

pub fn counts_table(gap: usize, side: GapSide, model_kind: &str, curve: &CountCurve) -> String {
    let mut s = format!(
        "# twistgap counts v1 gap={} side={} potential={}\n# lambda count r step converged semiclassical\n",
        gap,
        side_name(side),
        model_kind
    );
    for row in &curve.rows {
        s.push_str(&format!(
            "{} {} {} {} {} {}\n",
            fmt(row.lambda),
            row.count,
            fmt(row.r),
            fmt(row.step),
            row.converged,
            row.semiclassical.map_or("-".to_string(), fmt),
        ));
    }
    s
}

/// Plot-ready two-column series (x y per line, no headers beyond one `#`).
pub fn plot_series(title: &str, points: &[(f64, f64)]) -> String {
    let mut s = format!("# {title}\n");
    for (x, y) in points {
        s.push_str(&format!("{} {}\n", fmt(*x), fmt(*y)));
    }
    s
}

/// Asymptotic-regime summary for one analyzed edge.
#[derive(Debug, Clone, Serialize)]
pub struct RegimeSummary {
    pub gap_index: usize,
    pub side: String,
    /// Self-describing regime label (growth/bounded and why).
    pub regime: String,
    pub power_fit: Option<PowerLawFit>,
    pub log_fit: Option<LogLawFit>,
    pub predicted_log_slope: Option<f64>,
    pub bounded_tail: Option<bool>,
    pub notes: Vec<String>,
}

pub fn fits_table(summaries: &[RegimeSummary]) -> String {
    let mut s = String::from("# twistgap fits v1\n# gap side regime quantity value expected\n");
    for r in summaries {
        if let Some(f) = &r.power_fit {
            s.push_str(&format!(
                "{} {} {} loglog_exponent {} {}\n",
                r.gap_index,
                r.side,
                r.regime,
                fmt(f.exponent),
                fmt(f.expected)
            ));
            if let Some(ratio) = f.ratio_at_min {
                s.push_str(&format!(
                    "{} {} {} semiclassical_ratio {} {}\n",
                    r.gap_index,
                    r.side,
                    r.regime,
                    fmt(ratio),
                    fmt(1.0)
                ));
            }
        }
        if let Some(f) = &r.log_fit {
            s.push_str(&format!(
                "{} {} {} log_slope {} {}\n",
                r.gap_index,
                r.side,
                r.regime,
                fmt(f.slope),
                fmt(r.predicted_log_slope.unwrap_or(f.predicted))
            ));
        }
        if let Some(b) = r.bounded_tail {
            s.push_str(&format!(
                "{} {} {} bounded_tail {} {}\n",
                r.gap_index, r.side, r.regime, b, true
            ));
        }
        for n in &r.notes {
            s.push_str(&format!("# note: {n}\n"));
        }
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct BsRow {
    pub lambda: f64,
    pub bs_count: usize,
    pub direct_count: usize,
    pub bs_converged: bool,
    pub direct_converged: bool,
}

pub fn bs_table(rows: &[BsRow]) -> String {
    let mut s = String::from(
        "# twistgap bs-check v1\n# lambda bs_count direct_count bs_converged direct_converged agree\n",
    );
    for r in rows {
        s.push_str(&format!(
            "{} {} {} {} {} {}\n",
            fmt(r.lambda),
            r.bs_count,
            r.direct_count,
            r.bs_converged,
            r.direct_converged,
            r.bs_count == r.direct_count
        ));
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct TubeRow {
    pub scale: f64,
    pub x_half: f64,
    pub count: usize,
    pub perturbations: usize,
}

pub fn tube_table(window: (f64, f64), rows: &[TubeRow]) -> String {
    let mut s = format!(
        "# twistgap tube-check v1 window_lower={} window_upper={}\n# scale x_half count perturbed_pivots\n",
        fmt(window.0),
        fmt(window.1)
    );
    for r in rows {
        s.push_str(&format!(
            "{} {} {} {}\n",
            fmt(r.scale),
            fmt(r.x_half),
            r.count,
            r.perturbations
        ));
    }
    s
}

/// Machine-readable run summary with provenance; the full tables live in the
/// text artifacts next to it.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool_version: String,
    pub config_sha256: String,
    pub started_at: String,
    pub finished_at: String,
    pub stages_run: Vec<String>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<String>,
    pub gap_count: Option<usize>,
    pub window_top: Option<f64>,
    pub edge_values: Vec<(usize, String, f64)>,
    pub regimes: Vec<RegimeSummary>,
}

pub fn config_hash(text: &str) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    format!("{:x}", h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_uses_17_significant_digits() {
        assert_eq!(fmt(1.0), "1.0000000000000000e0");
        assert_eq!(fmt(f64::NEG_INFINITY), "-inf");
        assert!(fmt(std::f64::consts::PI).starts_with("3.1415926535897931e0"));
    }

    #[test]
    fn config_hash_is_stable() {
        let a = config_hash("{\"x\":1}");
        let b = config_hash("{\"x\":1}");
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        assert_ne!(a, config_hash("{\"x\":2}"));
    }
}
