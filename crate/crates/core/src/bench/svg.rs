//! Standalone SVG 1.1 charts. Plotted statistics are also attached as
//! `data-*` attributes so they can be checked without parsing geometry.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use crate::metrics::percentile;

use super::repeat::RepeatabilityReport;
use super::EvaluationRecord;

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Box-and-whisker statistics with 1.5 IQR whiskers.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Most extreme values within 1.5 IQR of the box.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Quartiles by linear interpolation between order statistics.
pub fn quartiles(values: &[f64]) -> Option<BoxStats> {
    let mut v = values.to_vec();
    let q1 = percentile(&mut v, 25.0)?;
    let median = percentile(&mut v, 50.0)?;
    let q3 = percentile(&mut v, 75.0)?;
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| (lo..=hi).contains(x)).collect();
    Some(BoxStats {
        n: v.len(),
        q1,
        median,
        q3,
        whisker_low: inside.first().copied().unwrap_or(q1),
        whisker_high: inside.last().copied().unwrap_or(q3),
        outliers: v.iter().copied().filter(|x| !(lo..=hi).contains(x)).collect(),
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Scale {
    lo: f64,
    hi: f64,
    top: f64,
    bottom: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, top: f64, bottom: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        let pad = 0.05 * (hi - lo);
        Self {
            lo: lo - pad,
            hi: hi + pad,
            top,
            bottom,
        }
    }

    fn y(&self, v: f64) -> f64 {
        self.bottom - (v - self.lo) / (self.hi - self.lo) * (self.bottom - self.top)
    }
}

fn axis(out: &mut String, scale: &Scale, x: f64, label: &str) {
    let _ = writeln!(
        out,
        r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
        scale.top, scale.bottom
    );
    for i in 0..=4 {
        let v = scale.lo + (scale.hi - scale.lo) * i as f64 / 4.0;
        let y = scale.y(v);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{x:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{v:.2}</text>"#,
            x - 4.0,
            x - 6.0,
            y + 3.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.2}" font-size="12" transform="rotate(-90 14 {:.2})" text-anchor="middle">{}</text>"#,
        (scale.top + scale.bottom) / 2.0,
        (scale.top + scale.bottom) / 2.0,
        escape(label)
    );
}

/// Per-region, per-method box plots of `metric` ("dice" or "hd95") for one
/// dataset, pooling subjects and sequences. `None` without any values.
pub fn boxplot_svg(dataset: &str, metric: &str, records: &[EvaluationRecord]) -> Option<String> {
    let value = |r: &EvaluationRecord| if metric == "dice" { r.dice } else { r.hd95_mm };
    let mut groups: BTreeMap<&str, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    let mut methods: BTreeSet<&str> = BTreeSet::new();
    for r in records.iter().filter(|r| r.dataset == dataset) {
        methods.insert(&r.method);
        let entry = groups.entry(&r.region).or_default().entry(&r.method).or_default();
        if let Some(v) = value(r) {
            entry.push(v);
        }
    }
    let all: Vec<f64> = groups.values().flat_map(|m| m.values().flatten().copied()).collect();
    if all.is_empty() {
        return None;
    }
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let methods: Vec<&str> = methods.into_iter().collect();
    let box_w = 18.0;
    let group_w = methods.len() as f64 * (box_w + 6.0) + 24.0;
    let left = 60.0;
    let width = left + groups.len() as f64 * group_w + 20.0 + 120.0;
    let height = 360.0;
    let scale = Scale::new(lo, hi, 30.0, height - 60.0);

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" data-dataset="{}" data-metric="{}">"#,
        escape(dataset),
        escape(metric)
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="18" font-size="14" text-anchor="middle">{} {}</text>"#,
        width / 2.0,
        escape(dataset),
        escape(metric)
    );
    axis(&mut out, &scale, left - 10.0, if metric == "dice" { "Dice" } else { "HD95 (mm)" });
    for (gi, (region, by_method)) in groups.iter().enumerate() {
        let gx = left + gi as f64 * group_w;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
            gx + group_w / 2.0,
            height - 40.0,
            escape(region)
        );
        for (mi, method) in methods.iter().enumerate() {
            let Some(stats) = by_method.get(method).and_then(|v| quartiles(v)) else {
                continue;
            };
            let x = gx + 12.0 + mi as f64 * (box_w + 6.0);
            let cx = x + box_w / 2.0;
            let color = PALETTE[mi % PALETTE.len()];
            let _ = writeln!(
                out,
                r#"<g class="box" data-region="{}" data-method="{}" data-n="{}" data-q1="{}" data-median="{}" data-q3="{}" data-whisker-low="{}" data-whisker-high="{}">"#,
                escape(region),
                escape(method),
                stats.n,
                stats.q1,
                stats.median,
                stats.q3,
                stats.whisker_low,
                stats.whisker_high
            );
            let _ = writeln!(
                out,
                r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                scale.y(stats.whisker_low),
                scale.y(stats.whisker_high)
            );
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{:.2}" width="{box_w:.2}" height="{:.2}" fill="{color}" fill-opacity="0.6" stroke="black"/>"#,
                scale.y(stats.q3),
                (scale.y(stats.q1) - scale.y(stats.q3)).max(0.5)
            );
            let _ = writeln!(
                out,
                r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-width="2"/>"#,
                x + box_w,
                y = scale.y(stats.median)
            );
            for o in &stats.outliers {
                let _ = writeln!(
                    out,
                    r#"<circle class="outlier" cx="{cx:.2}" cy="{:.2}" r="2.5" fill="none" stroke="black" data-value="{o}"/>"#,
                    scale.y(*o)
                );
            }
            let _ = writeln!(out, "</g>");
        }
    }
    let lx = width - 130.0;
    for (mi, method) in methods.iter().enumerate() {
        let y = 40.0 + mi as f64 * 16.0;
        let _ = writeln!(
            out,
            r#"<rect x="{lx:.2}" y="{:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            y - 9.0,
            PALETTE[mi % PALETTE.len()],
            lx + 14.0,
            y,
            escape(method)
        );
    }
    let _ = writeln!(out, "</svg>");
    Some(out)
}

/// One panel per (region, method) with a line per subject across the sorted
/// sequences; gaps split a line.
pub fn repeatability_svg(report: &RepeatabilityReport) -> Option<String> {
    if report.trajectories.is_empty() {
        return None;
    }
    let mut panels: BTreeMap<(&str, &str), Vec<&super::Trajectory>> = BTreeMap::new();
    for t in &report.trajectories {
        panels.entry((&t.region, &t.method)).or_default().push(t);
    }
    let (pw, ph) = (260.0, 220.0);
    let cols = panels.len().min(4);
    let rows = panels.len().div_ceil(cols);
    let width = cols as f64 * pw;
    let height = rows as f64 * ph + 30.0;
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" data-dataset="{}">"#,
        escape(&report.dataset)
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="18" font-size="14" text-anchor="middle">{} volume (mL) across {}</text>"#,
        width / 2.0,
        escape(&report.dataset),
        escape(&report.sequences.join(", "))
    );
    let k = report.sequences.len();
    for (pi, ((region, method), trajs)) in panels.iter().enumerate() {
        let ox = (pi % cols) as f64 * pw;
        let oy = 30.0 + (pi / cols) as f64 * ph;
        let vals: Vec<f64> = trajs.iter().flat_map(|t| t.volumes.iter().flatten().copied()).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if vals.is_empty() { (0.0, 1.0) } else { (lo, hi) };
        let scale = Scale::new(lo, hi, oy + 20.0, oy + ph - 40.0);
        let x_of = |i: usize| ox + 60.0 + (pw - 80.0) * if k > 1 { i as f64 / (k - 1) as f64 } else { 0.5 };
        let _ = writeln!(
            out,
            r#"<g class="panel" data-region="{}" data-method="{}">"#,
            escape(region),
            escape(method)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{} / {}</text>"#,
            ox + pw / 2.0,
            oy + 12.0,
            escape(region),
            escape(method)
        );
        axis(&mut out, &scale, ox + 50.0, "mL");
        for (i, s) in report.sequences.iter().enumerate() {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-size="9" text-anchor="middle">{}</text>"#,
                x_of(i),
                oy + ph - 26.0,
                escape(s)
            );
        }
        for (ti, t) in trajs.iter().enumerate() {
            let color = PALETTE[ti % PALETTE.len()];
            let data: Vec<String> = t.volumes.iter().map(|v| v.map_or(String::new(), |v| v.to_string())).collect();
            let _ = writeln!(
                out,
                r#"<g class="subject" data-subject="{}" data-volumes="{}">"#,
                escape(&t.subject),
                data.join(";")
            );
            let mut run: Vec<(f64, f64)> = Vec::new();
            let flush = |run: &mut Vec<(f64, f64)>, out: &mut String| {
                if run.len() > 1 {
                    let pts: Vec<String> = run.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}"/>"#, pts.join(" "));
                }
                run.clear();
            };
            for (i, v) in t.volumes.iter().enumerate() {
                match v {
                    Some(v) => {
                        let p = (x_of(i), scale.y(*v));
                        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}"/>"#, p.0, p.1);
                        run.push(p);
                    }
                    None => flush(&mut run, &mut out),
                }
            }
            flush(&mut run, &mut out);
            let _ = writeln!(out, "</g>");
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(out, "</svg>");
    Some(out)
}
