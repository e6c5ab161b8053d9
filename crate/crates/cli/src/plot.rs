//! Self-contained SVG line charts drawn from a results table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use sadl_core::eval::{experts_term, sadl_bound};

use crate::table::{fmt_sig, Table};
use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    DriftRate,
    Knn,
    NmiProb,
    Regret,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [PlotKind::DriftRate, PlotKind::Knn, PlotKind::NmiProb, PlotKind::Regret];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::DriftRate => "drift_rate",
            PlotKind::Knn => "knn",
            PlotKind::NmiProb => "nmi_prob",
            PlotKind::Regret => "regret",
        }
    }
}

impl FromStr for PlotKind {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, RunError> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| RunError::Format(format!("unknown plot kind {s:?}; expected drift_rate, knn, nmi_prob or regret")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"];

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders a line chart. `y_range` fixes the y axis; values outside it are
/// clamped onto the frame.
pub fn chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series], y_range: Option<(f64, f64)>) -> String {
    let (x0, x1) = extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = y_range.unwrap_or_else(|| extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.1))));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y.clamp(y0, y1) - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT},{TOP} V{} H{}" fill="none" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let (px, py) = (sx(fx), sy(fy));
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, fmt_tick(fx));
        let _ = writeln!(s, r#"<line x1="{}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, py + 4.0, fmt_tick(fy));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 10.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{y}" text-anchor="middle" transform="rotate(-90 16 {y})">{}</text>"#,
        escape(y_label),
        y = TOP + ph / 2.0
    );

    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 16.0 * i as f64;
        let lx = LEFT + pw - 180.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>"#, lx + 24.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 30.0, ly + 4.0, escape(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    let r = (v * 1e4).round() / 1e4;
    fmt_sig(if r == 0.0 { 0.0 } else { r })
}

/// Mean over trials of `value(row)` at each step, per algorithm.
fn mean_by_step(table: &Table, algo: &str, value: impl Fn(&crate::Row) -> Option<f64>) -> Vec<(f64, f64)> {
    let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for r in table.rows.iter().filter(|r| r.algo == algo) {
        if let Some(v) = value(r) {
            let e = acc.entry(r.t).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(t, (sum, n))| (t as f64, sum / n as f64)).collect()
}

fn require(table: &Table, column: &str, has: impl Fn(&crate::Row) -> bool) -> Result<(), RunError> {
    if table.rows.iter().any(has) {
        Ok(())
    } else {
        Err(RunError::Format(format!("results table has no `{column}` values")))
    }
}

/// The `8C(1 + γ)√t + 40 ln(t + 1)√t` curve over `[1, t]`, with `C` the
/// smallest constant that keeps it above every point of `regret`.
pub fn bound_overlay(regret: &[(f64, f64)], gamma: &[(f64, f64)]) -> (f64, Vec<(f64, f64)>) {
    let c = regret
        .iter()
        .zip(gamma)
        .map(|(&(t, r), &(_, g))| {
            let t = t as u64;
            (r - experts_term(t, t)) / (8.0 * (1.0 + g) * (t as f64).sqrt())
        })
        .fold(0.0f64, f64::max);
    let curve = gamma.iter().map(|&(t, g)| (t, sadl_bound(c, g, 1, t as u64))).collect();
    (c, curve)
}

pub fn plot_series(table: &Table, kind: PlotKind, nmi_threshold: f64) -> Result<Vec<Series>, RunError> {
    let algos = table.algorithms();
    let line = |name: &str, points: Vec<(f64, f64)>| Series {
        name: name.to_string(),
        points,
        dashed: false,
    };
    Ok(match kind {
        PlotKind::DriftRate => {
            require(table, "gamma_cum", |r| r.gamma_cum.is_some())?;
            let algo = &algos[0];
            let mut prev: BTreeMap<u64, f64> = BTreeMap::new();
            let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
            for r in table.rows.iter().filter(|r| &r.algo == algo) {
                if let Some(g) = r.gamma_cum {
                    let before = prev.insert(r.trial, g).unwrap_or(0.0);
                    let e = acc.entry(r.t).or_default();
                    e.0 += g - before;
                    e.1 += 1;
                }
            }
            vec![line("comparator", acc.into_iter().map(|(t, (s, n))| (t as f64, s / n as f64)).collect())]
        }
        PlotKind::Knn => {
            require(table, "knn_err", |r| r.knn_err.is_some())?;
            algos.iter().map(|a| line(a, mean_by_step(table, a, |r| r.knn_err))).collect()
        }
        PlotKind::NmiProb => {
            require(table, "nmi", |r| r.nmi.is_some())?;
            algos
                .iter()
                .map(|a| line(a, mean_by_step(table, a, |r| r.nmi.map(|v| f64::from(u8::from(v > nmi_threshold))))))
                .collect()
        }
        PlotKind::Regret => {
            require(table, "regret_cum", |r| r.regret_cum.is_some())?;
            let mut out: Vec<Series> = algos.iter().map(|a| line(a, mean_by_step(table, a, |r| r.regret_cum))).collect();
            let reference = algos.iter().find(|a| *a == "sadl").unwrap_or(&algos[0]);
            let regret = mean_by_step(table, reference, |r| r.regret_cum);
            let gamma = mean_by_step(table, reference, |r| r.gamma_cum);
            let (c, curve) = bound_overlay(&regret, &gamma);
            out.push(Series {
                name: format!("bound, C = {}", fmt_sig((c * 1e3).round() / 1e3)),
                points: curve,
                dashed: true,
            });
            out
        }
    })
}

pub fn emit_plot(table: &Table, kind: PlotKind, path: &Path, nmi_threshold: f64) -> Result<(), RunError> {
    let series = plot_series(table, kind, nmi_threshold)?;
    let (title, y_label, range) = match kind {
        PlotKind::DriftRate => ("Comparator drift per step", "‖M*ₜ − M*ₜ₋₁‖", None),
        PlotKind::Knn => ("Mean k-NN error", "error rate", None),
        PlotKind::NmiProb => ("P(NMI > threshold)", "probability", Some((0.0, 1.0))),
        PlotKind::Regret => ("Mean cumulative dynamic regret", "regret", None),
    };
    let svg = chart_svg(title, "t", y_label, &series, range);
    std::fs::write(path, svg).map_err(|e| RunError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Row;

    fn row(t: u64, trial: u64, algo: &str) -> Row {
        Row {
            t,
            trial,
            algo: algo.into(),
            loss_raw: 1.0,
            loss_clipped: 0.5,
            chosen_level: None,
            knn_err: Some(0.1 * t as f64),
            nmi: Some(0.9),
            gamma_cum: Some(t as f64),
            regret_cum: Some(10.0 * t as f64),
        }
    }

    #[test]
    fn one_series_two_points_is_one_polyline() {
        let s = vec![Series {
            name: "a".into(),
            points: vec![(1.0, 2.0), (3.0, 4.0)],
            dashed: false,
        }];
        let svg = chart_svg("x", "t", "y", &s, None);
        assert_eq!(svg.matches("<polyline").count(), 1);
        let start = svg.find("points=\"").unwrap() + 8;
        let pts = &svg[start..start + svg[start..].find('"').unwrap()];
        assert_eq!(pts.split(' ').count(), 2);
        assert!(svg.starts_with("<svg xmlns="));
    }

    #[test]
    fn probability_axis_is_unit_interval() {
        let table = Table {
            rows: vec![row(1, 0, "sadl"), row(2, 0, "sadl")],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.svg");
        emit_plot(&table, PlotKind::NmiProb, &path, 0.8).unwrap();
        let svg = std::fs::read_to_string(path).unwrap();
        // bottom and top tick labels
        assert!(svg.contains(">0</text>") && svg.contains(">1</text>"));
        let series = plot_series(&table, PlotKind::NmiProb, 0.8).unwrap();
        assert!(series[0].points.iter().all(|p| p.1 == 1.0));
    }

    #[test]
    fn missing_columns_are_errors() {
        let mut r = row(1, 0, "sadl");
        r.knn_err = None;
        r.regret_cum = None;
        let table = Table { rows: vec![r] };
        assert!(plot_series(&table, PlotKind::Knn, 0.8).is_err());
        assert!(plot_series(&table, PlotKind::Regret, 0.8).is_err());
        assert!(plot_series(&table, PlotKind::DriftRate, 0.8).is_ok());
    }

    #[test]
    fn regret_plot_overlays_the_bound() {
        let table = Table {
            rows: (1..=50).map(|t| row(t, 0, "sadl")).collect(),
        };
        let series = plot_series(&table, PlotKind::Regret, 0.8).unwrap();
        assert_eq!(series.len(), 2);
        let bound = &series[1];
        assert!(bound.dashed);
        for (&(_, b), &(_, r)) in bound.points.iter().zip(&series[0].points) {
            assert!(b >= r - 1e-9);
        }
        // the curve is the library's bound at the fitted constant
        let (c, _) = bound_overlay(&series[0].points, &(1..=50).map(|t| (t as f64, t as f64)).collect::<Vec<_>>());
        let (t, b) = bound.points[9];
        assert!((b - sadl_bound(c, t, 1, t as u64)).abs() < 1e-9);
    }

    #[test]
    fn drift_rate_differences_the_cumulative_column() {
        let table = Table {
            rows: vec![row(1, 0, "sadl"), row(2, 0, "sadl"), row(3, 0, "sadl")],
        };
        let s = plot_series(&table, PlotKind::DriftRate, 0.8).unwrap();
        assert_eq!(s[0].points, vec![(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]);
    }

    #[test]
    fn kinds_parse() {
        for k in PlotKind::ALL {
            assert_eq!(k.name().parse::<PlotKind>().unwrap(), k);
        }
        assert!("bars".parse::<PlotKind>().is_err());
    }
}
