//! Minimal SVG line plots of metric curves: one file per `(metric, group)`,
//! one line per kind, with a shaded ±std band.

use std::fmt::Write as _;

use crate::experiment::MetricCurve;
use crate::store::LayerKind;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn colour(kind: LayerKind) -> &'static str {
    match kind {
        LayerKind::Hidden => "#1f77b4",
        LayerKind::Attn => "#2ca02c",
        LayerKind::Mlp => "#d62728",
    }
}

/// File stem for a curve, e.g. `auroc` or `gini_e_C_a_C`.
pub fn file_stem(curve: &MetricCurve) -> String {
    match curve.group {
        None => curve.metric.name().to_string(),
        Some(g) => format!("{}_{}", curve.metric.name(), g.name()),
    }
}

/// Renders one curve. Absent points break the line.
pub fn render_svg(curve: &MetricCurve) -> String {
    let present: Vec<(usize, f64, f64)> = curve
        .points
        .iter()
        .filter_map(|p| p.summary.map(|s| (p.layer, s.mean, s.std)))
        .collect();
    let max_layer = curve.points.iter().map(|p| p.layer).max().unwrap_or(0).max(1) as f64;
    let (mut lo, mut hi) = present
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, m, s)| {
            (lo.min(m - s), hi.max(m + s))
        });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let x = |layer: f64| MARGIN + layer / max_layer * (WIDTH - 2.0 * MARGIN);
    let y = |v: f64| HEIGHT - MARGIN - (v - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        file_stem(curve)
    );
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" stroke="black" fill="none"/>"#
    );
    for (v, anchor_y) in [(lo, y0), (hi, y1)] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{anchor_y}" text-anchor="end" font-family="sans-serif" font-size="10">{v:.3}</text>"#,
            x0 - 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">layer (0..{})</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        max_layer
    );

    for (ki, kind) in LayerKind::ALL.into_iter().enumerate() {
        let mut pts: Vec<_> = curve.points.iter().filter(|p| p.kind == kind).collect();
        if pts.is_empty() {
            continue;
        }
        pts.sort_by_key(|p| p.layer);
        // Split into runs of present points.
        let mut runs: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new()];
        for p in pts {
            match p.summary {
                Some(s) => runs
                    .last_mut()
                    .expect("non-empty")
                    .push((p.layer as f64, s.mean, s.std)),
                None => runs.push(Vec::new()),
            }
        }
        for run in runs.iter().filter(|r| !r.is_empty()) {
            let upper = run.iter().map(|&(l, m, s)| format!("{:.2},{:.2}", x(l), y(m + s)));
            let lower = run
                .iter()
                .rev()
                .map(|&(l, m, s)| format!("{:.2},{:.2}", x(l), y(m - s)));
            let band: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{}" fill-opacity="0.15" stroke="none"/>"#,
                band.join(" "),
                colour(kind)
            );
            let line: Vec<String> = run
                .iter()
                .map(|&(l, m, _)| format!("{:.2},{:.2}", x(l), y(m)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                line.join(" "),
                colour(kind)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{}">{kind} (mean ± std)</text>"#,
            x1 - 110.0,
            y1 + 14.0 * (ki as f64 + 1.0),
            colour(kind)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
