//! Standalone SVG charts drawn from the same numbers as the CSV reports.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::models::Algorithm;
use crate::study::{HorizonIndex, TargetKind};

use super::suite::{DistributionEntry, MetricsReport};

const W: f64 = 720.0;
const H: f64 = 400.0;
const PAD: f64 = 60.0;
const COLORS: [&str; 4] = ["#888888", "#2b7bb9", "#d95f02", "#1b9e77"];

fn color(a: Algorithm) -> &'static str {
    COLORS[Algorithm::ALL.iter().position(|&x| x == a).unwrap_or(0)]
}

fn unit(kind: TargetKind) -> &'static str {
    match kind {
        TargetKind::TollPrice => "$",
        TargetKind::TravelTimeDifference => "min",
    }
}

fn header(s: &mut String, title: &str) {
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-size="15">{title}</text>
<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="black"/>
<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>
"#,
        W / 2.0,
        H - PAD,
        W - PAD / 2.0,
        H - PAD,
        H - PAD
    );
}

fn y_ticks(s: &mut String, lo: f64, hi: f64) {
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = H - PAD - (H - 2.0 * PAD) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#, PAD - 6.0, y + 4.0);
    }
}

fn legend(s: &mut String, algos: &BTreeSet<Algorithm>) {
    for (i, a) in algos.iter().enumerate() {
        let x = PAD + 10.0 + 110.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="36" width="12" height="12" fill="{}"/><text x="{}" y="46">{a}</text>"#,
            color(*a),
            x + 16.0
        );
    }
}

/// Grouped bars of pooled test MAE per horizon.
pub fn mae_bars(metrics: &MetricsReport, kind: TargetKind) -> String {
    let algos: BTreeSet<Algorithm> = metrics.entries.iter().map(|e| e.algorithm).collect();
    let horizons: BTreeSet<HorizonIndex> = metrics.entries.iter().map(|e| e.horizon).collect();
    let max = algos
        .iter()
        .flat_map(|&a| horizons.iter().filter_map(move |&h| metrics.pooled_test(a, h)))
        .map(|m| m.mae)
        .fold(0.0, f64::max)
        .max(1e-12);
    let mut s = String::new();
    header(&mut s, &format!("Test MAE ({}) by horizon", unit(kind)));
    y_ticks(&mut s, 0.0, max);
    legend(&mut s, &algos);
    let group = (W - 1.5 * PAD) / horizons.len().max(1) as f64;
    let bar = group * 0.8 / algos.len().max(1) as f64;
    for (gi, &h) in horizons.iter().enumerate() {
        let gx = PAD + group * gi as f64 + group * 0.1;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{} min</text>"#,
            gx + group * 0.4,
            H - PAD + 18.0,
            h.minutes()
        );
        for (ai, &a) in algos.iter().enumerate() {
            let Some(m) = metrics.pooled_test(a, h) else { continue };
            let bh = (H - 2.0 * PAD) * m.mae / max;
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{bh:.1}" fill="{}"><title>{a} {} min: {}</title></rect>"#,
                gx + bar * ai as f64,
                H - PAD - bh,
                bar * 0.9,
                color(a),
                h.minutes(),
                m.mae
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Box-and-whisker plot of test errors per (algorithm, horizon).
pub fn error_boxes(distributions: &[DistributionEntry], kind: TargetKind) -> String {
    let lo = distributions.iter().map(|d| d.distribution.whisker_low).fold(f64::INFINITY, f64::min);
    let hi = distributions.iter().map(|d| d.distribution.whisker_high).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
    let algos: BTreeSet<Algorithm> = distributions.iter().map(|d| d.algorithm).collect();
    let mut s = String::new();
    header(&mut s, &format!("Test errors ({}), actual minus predicted", unit(kind)));
    y_ticks(&mut s, lo, hi);
    legend(&mut s, &algos);
    let slot = (W - 1.5 * PAD) / distributions.len().max(1) as f64;
    for (i, e) in distributions.iter().enumerate() {
        let d = &e.distribution;
        let cx = PAD + slot * (i as f64 + 0.5);
        let hw = slot * 0.3;
        let c = color(e.algorithm);
        let _ = writeln!(
            s,
            r#"<g><title>{} {} min: q1 {} median {} q3 {} outliers {}</title>
<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="{c}"/>
<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{c}" fill-opacity="0.4" stroke="{c}"/>
<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/></g>"#,
            e.algorithm,
            e.horizon.minutes(),
            d.q1,
            d.median,
            d.q3,
            d.outliers,
            y(d.whisker_low),
            y(d.whisker_high),
            cx - hw,
            y(d.q3),
            2.0 * hw,
            (y(d.q1) - y(d.q3)).max(0.5),
            cx - hw,
            y(d.median),
            cx + hw,
            y(d.median)
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{}" text-anchor="middle" font-size="9">{}</text>"#,
            H - PAD + 14.0,
            e.horizon.minutes()
        );
    }
    s.push_str("</svg>\n");
    s
}
