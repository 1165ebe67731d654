//! Learning curves as SVG: mean eval return against env steps, with a
//! shaded ±1 std band, one curve per run directory.

use std::fmt::Write as _;
use std::path::Path;

use crate::aggregate::{load_runs, read_aggregate};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub name: String,
    /// `(env_steps, mean, std)` samples in step order.
    pub points: Vec<(f64, f64, f64)>,
}

/// A sweep directory contributes its aggregate; a single run its metrics.
pub fn load_curve(dir: &Path) -> anyhow::Result<Curve> {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    let agg = dir.join("aggregate.csv");
    let points = if agg.is_file() {
        read_aggregate(&agg)?
            .into_iter()
            .map(|r| (r.env_steps as f64, r.mean_eval_return, r.std_eval_return))
            .collect()
    } else {
        let rows = load_runs(&[dir])?.remove(0);
        rows.into_iter().map(|r| (r.env_steps as f64, r.mean_eval_return, r.eval_return_std)).collect()
    };
    Ok(Curve { name, points })
}

pub fn plot(dirs: &[&Path], out: &Path) -> anyhow::Result<()> {
    let curves = dirs.iter().map(|d| load_curve(d)).collect::<anyhow::Result<Vec<_>>>()?;
    std::fs::write(out, render(&curves))?;
    Ok(())
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn ticks(lo: f64, hi: f64) -> (Vec<f64>, usize) {
    let step = nice_step(hi - lo);
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    ((first..=last).map(|k| k as f64 * step).collect(), decimals)
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Deterministic SVG text for the curves.
pub fn render(curves: &[Curve]) -> String {
    let finite: Vec<Vec<(f64, f64, f64)>> = curves
        .iter()
        .map(|c| c.points.iter().copied().filter(|(x, m, s)| x.is_finite() && m.is_finite() && s.is_finite()).collect())
        .collect();
    let (x0, x1) = range(finite.iter().flatten().map(|p| p.0));
    let (y0, y1) = range(finite.iter().flatten().flat_map(|p| [p.1 - p.2, p.1 + p.2]));
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black" stroke-width="1"/>"#
    );

    let (xt, xd) = ticks(x0, x1);
    for t in xt {
        let x = sx(t);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#888"/>"##, TOP + ph, TOP + ph + 4.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{t:.xd$}</text>"#, TOP + ph + 16.0);
    }
    let (yt, yd) = ticks(y0, y1);
    for t in yt {
        let y = sy(t);
        let _ = writeln!(s, r##"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="#888"/>"##, LEFT - 4.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{t:.yd$}</text>"#, LEFT - 7.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">env_steps</text>"#, LEFT + pw / 2.0, HEIGHT - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">mean_eval_return</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    for (i, (curve, pts)) in curves.iter().zip(&finite).enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let upper = pts.iter().map(|&(x, m, sd)| format!("{:.2},{:.2}", sx(x), sy(m + sd)));
        let lower = pts.iter().rev().map(|&(x, m, sd)| format!("{:.2},{:.2}", sx(x), sy(m - sd)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(s, r#"<polygon points="{}" fill="{colour}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
        let line: Vec<String> = pts.iter().map(|&(x, m, _)| format!("{:.2},{:.2}", sx(x), sy(m))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#, line.join(" "));

        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 14.0;
        let _ = writeln!(s, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="3"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&curve.name));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(name: &str, steps: &[u64]) -> Curve {
        Curve { name: name.into(), points: steps.iter().map(|&x| (x as f64, x as f64 / 100.0, 0.5)).collect() }
    }

    fn points_of(svg: &str, tag: &str) -> Vec<usize> {
        svg.lines()
            .filter(|l| l.starts_with(tag))
            .map(|l| l.split("points=\"").nth(1).unwrap().split('"').next().unwrap().split(' ').count())
            .collect()
    }

    #[test]
    fn one_run_one_line_one_band() {
        let svg = render(&[curve("a", &[150, 300, 450])]);
        assert_eq!(points_of(&svg, "<polyline"), [3]);
        assert_eq!(points_of(&svg, "<polygon"), [6]);
        assert!(svg.contains(">a</text>"));
    }

    #[test]
    fn own_grids_without_interpolation() {
        let svg = render(&[curve("a", &[150, 300, 450]), curve("b<&>", &[100, 700])]);
        assert_eq!(points_of(&svg, "<polyline"), [3, 2]);
        assert!(svg.contains("b&lt;&amp;&gt;"));
    }

    #[test]
    fn ticks_are_round_numbers() {
        let (t, d) = ticks(0.0, 1.0);
        assert_eq!(d, 1);
        assert_eq!(t.len(), 6);
        assert_eq!(format!("{:.d$}", t[3]), "0.6");
        let (t, d) = ticks(150.0, 150_000.0);
        assert_eq!((t[0], t[1], d), (50_000.0, 100_000.0, 0));
    }

    #[test]
    fn missing_metrics_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let err = plot(&[dir.path()], &dir.path().join("x.svg")).unwrap_err();
        assert!(err.to_string().contains(&dir.path().join("metrics.csv").display().to_string()));
    }

    #[test]
    fn degenerate_inputs_render() {
        let svg = render(&[curve("single", &[150]), Curve { name: "nan".into(), points: vec![(1.0, f64::NAN, 0.0)] }]);
        assert_eq!(points_of(&svg, "<polyline").len(), 2);
        assert!(!svg.contains("NaN"));
    }
}
