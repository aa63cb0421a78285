//! Markdown comparison tables and SVG scatter plots from benchmark rows.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::bench::SuiteRow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Better {
    Higher,
    Lower,
}

/// A per-model, per-path metric table.
pub struct TableSpec {
    pub file: &'static str,
    pub title: &'static str,
    pub better: Better,
    pub value: fn(&SuiteRow) -> f64,
    pub format: fn(&SuiteRow) -> String,
}

fn mb(r: &SuiteRow) -> f64 {
    r.memory_bytes as f64 / 1e6
}

pub const TABLES: [TableSpec; 5] = [
    TableSpec {
        file: "accuracy.md",
        title: "Accuracy",
        better: Better::Higher,
        value: |r| r.accuracy,
        format: |r| format!("{:.4}", r.accuracy),
    },
    TableSpec {
        file: "loc_score.md",
        title: "Loc-score",
        better: Better::Higher,
        value: |r| r.loc_score,
        format: |r| format!("{:.4}", r.loc_score),
    },
    TableSpec {
        file: "memory.md",
        title: "Memory footprint (MB)",
        better: Better::Lower,
        value: |r| r.memory_bytes as f64,
        format: |r| format!("{:.4}", mb(r)),
    },
    TableSpec {
        file: "latency.md",
        title: "Inference latency (ms)",
        better: Better::Lower,
        value: |r| r.latency_ms_mean,
        format: |r| format!("{:.3e} ± {:.1e}", r.latency_ms_mean, r.latency_ms_std),
    },
    TableSpec {
        file: "throughput.md",
        title: "Inference throughput (predictions per ms)",
        better: Better::Higher,
        value: |r| r.throughput_mean,
        format: |r| format!("{:.1} ± {:.1}", r.throughput_mean, r.throughput_std),
    },
];

/// Row indices holding the best value of `spec` for each path.
pub fn best_per_path(rows: &[SuiteRow], spec: &TableSpec) -> Vec<usize> {
    let paths: BTreeSet<&str> = rows.iter().map(|r| r.path.as_str()).collect();
    let mut best = Vec::new();
    for p in paths {
        let candidates = rows.iter().enumerate().filter(|(_, r)| r.path == p);
        let pick = match spec.better {
            Better::Higher => candidates.max_by(|a, b| (spec.value)(a.1).total_cmp(&(spec.value)(b.1))),
            Better::Lower => candidates.min_by(|a, b| (spec.value)(a.1).total_cmp(&(spec.value)(b.1))),
        };
        let target = (spec.value)(pick.unwrap().1);
        best.extend(
            rows.iter()
                .enumerate()
                .filter(|(_, r)| r.path == p && (spec.value)(r) == target)
                .map(|(i, _)| i),
        );
    }
    best.sort_unstable();
    best
}

/// Models as rows, paths as columns; the best cell of each column in bold.
pub fn markdown_table(rows: &[SuiteRow], spec: &TableSpec) -> String {
    let mut models: Vec<&str> = Vec::new();
    for r in rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let paths: Vec<&str> = rows
        .iter()
        .map(|r| r.path.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let best = best_per_path(rows, spec);
    let mut out = format!("### {}\n\n| model |", spec.title);
    for p in &paths {
        let _ = write!(out, " {p} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(paths.len()));
    out.push('\n');
    for m in &models {
        let _ = write!(out, "| {m} |");
        for p in &paths {
            match rows.iter().position(|r| r.model == *m && r.path == *p) {
                Some(i) if best.contains(&i) => {
                    let _ = write!(out, " **{}** |", (spec.format)(&rows[i]));
                }
                Some(i) => {
                    let _ = write!(out, " {} |", (spec.format)(&rows[i]));
                }
                None => out.push_str(" – |"),
            }
        }
        out.push('\n');
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A labelled scatter plot.
pub fn scatter_svg(title: &str, x_label: &str, y_label: &str, points: &[(String, f64, f64)]) -> String {
    let (w, h, m) = (640.0, 440.0, 60.0);
    let bounds = |vals: Vec<f64>| {
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = if hi > lo {
            (hi - lo) * 0.08
        } else {
            lo.abs().max(1.0) * 0.1
        };
        (lo - pad, hi + pad)
    };
    let (x0, x1) = bounds(points.iter().map(|p| p.1).collect());
    let (y0, y1) = bounds(points.iter().map(|p| p.2).collect());
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{m}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{m}" y1="{m}" x2="{m}" y2="{0}" stroke="black"/>"#,
        h - m,
        w - m
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(fx),
            h - m + 16.0,
            tick(fx)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            m - 6.0,
            sy(fy) + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        w / 2.0,
        h - 14.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        h / 2.0,
        escape(y_label)
    );
    for (label, x, y) in points {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.1}" cy="{:.1}" r="4" fill="#1f77b4"/><text x="{:.1}" y="{:.1}">{}</text>"##,
            sx(*x),
            sy(*y),
            sx(*x) + 6.0,
            sy(*y) - 6.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

pub const PLOTS: [&str; 3] = [
    "memory_vs_accuracy.svg",
    "latency_vs_accuracy.svg",
    "latency_vs_memory.svg",
];

/// Writes the five tables and three plots into `dir`, returning their paths.
pub fn write_report(rows: &[SuiteRow], dir: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::config("results", "no benchmark rows to report"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<()> {
        let file = dir.join(name);
        std::fs::write(&file, text).map_err(|e| Error::io(&file, e))?;
        written.push(file);
        Ok(())
    };
    for spec in &TABLES {
        emit(spec.file, markdown_table(rows, spec))?;
    }
    let label = |r: &SuiteRow| format!("{} ({})", r.model, r.path);
    let pts = |f: &dyn Fn(&SuiteRow) -> (f64, f64)| -> Vec<(String, f64, f64)> {
        rows.iter()
            .map(|r| {
                let (x, y) = f(r);
                (label(r), x, y)
            })
            .collect()
    };
    emit(
        PLOTS[0],
        scatter_svg(
            "Memory footprint against accuracy",
            "memory (MB)",
            "accuracy",
            &pts(&|r| (mb(r), r.accuracy)),
        ),
    )?;
    emit(
        PLOTS[1],
        scatter_svg(
            "Inference latency against accuracy",
            "latency (ms)",
            "accuracy",
            &pts(&|r| (r.latency_ms_mean, r.accuracy)),
        ),
    )?;
    emit(
        PLOTS[2],
        scatter_svg(
            "Inference latency against memory footprint",
            "latency (ms)",
            "memory (MB)",
            &pts(&|r| (r.latency_ms_mean, mb(r))),
        ),
    )?;
    Ok(written)
}
