use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use super::config::ExperimentConfig;
use super::runner::{columns, Row, RunReport};
use super::HarnessError;

/// Mean and sample standard deviation of each metric over replications, for
/// one method at one sweep value. Empty cells are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub param_name: String,
    pub param_value: f64,
    pub replications: usize,
    pub mean: Vec<Option<f64>>,
    pub sd: Vec<Option<f64>>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Summary rows in sweep order, methods in config order.
pub fn summarize(cfg: &ExperimentConfig, rows: &[Row]) -> Vec<SummaryRow> {
    let ncols = columns(cfg).len();
    let mut params: Vec<f64> = Vec::new();
    for r in rows {
        if !params.contains(&r.param_value) {
            params.push(r.param_value);
        }
    }
    let mut out = Vec::new();
    for &p in &params {
        for method in &cfg.methods {
            let block: Vec<&Row> = rows.iter().filter(|r| r.param_value == p && &r.method == method).collect();
            if block.is_empty() {
                continue;
            }
            let mut mean = vec![None; ncols];
            let mut sd = vec![None; ncols];
            for c in 0..ncols {
                let vals: Vec<f64> = block.iter().filter_map(|r| r.values[c]).collect();
                if vals.is_empty() {
                    continue;
                }
                let k = vals.len() as f64;
                let mu = vals.iter().sum::<f64>() / k;
                let var = if vals.len() > 1 {
                    vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (k - 1.0)
                } else {
                    0.0
                };
                mean[c] = Some(mu);
                sd[c] = Some(var.sqrt());
            }
            out.push(SummaryRow {
                method: method.clone(),
                param_name: block[0].param_name.clone(),
                param_value: p,
                replications: block.len(),
                mean,
                sd,
            });
        }
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Line plot of the per-method means of metric column `col` against the
/// swept parameter.
pub fn render_svg(cfg: &ExperimentConfig, summary: &[SummaryRow], col: usize, metric: &str) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 50.0);
    let points: Vec<(&str, f64, f64)> = summary
        .iter()
        .filter_map(|s| s.mean[col].map(|m| (s.method.as_str(), s.param_value, m)))
        .collect();
    let param_name = summary.first().map_or("n", |s| s.param_name.as_str());
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{} : {metric}</text>"#,
        (w - right + left) / 2.0,
        cfg.name
    );
    if points.is_empty() {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">no data</text>"#, w / 2.0, h / 2.0);
        svg.push_str("</svg>\n");
        return svg;
    }
    let span = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = span(&mut points.iter().map(|p| p.1));
    let (y0, y1) = span(&mut points.iter().map(|p| p.2));
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let _ = writeln!(
        svg,
        r#"<path d="M{l} {t} V{b} H{r}" fill="none" stroke="black"/>"#,
        l = left,
        t = top,
        b = h - bottom,
        r = w - right
    );
    let mut xs: Vec<f64> = points.iter().map(|p| p.1).collect();
    xs.dedup();
    for x in &xs {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x}</text>"#,
            px(*x),
            h - bottom + 16.0
        );
    }
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{y:.3}</text>"#,
            left - 6.0,
            py(y) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{param_name}</text>"#,
        (w - right + left) / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{metric}</text>"#,
        (h - bottom + top) / 2.0,
        (h - bottom + top) / 2.0
    );
    for (i, method) in cfg.methods.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = points
            .iter()
            .filter(|p| p.0 == method)
            .map(|p| format!("{:.2},{:.2}", px(p.1), py(p.2)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        for p in &pts {
            let (cx, cy) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(svg, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let ly = top + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{method}</text>"#,
            w - right + 12.0,
            w - right + 32.0,
            w - right + 38.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn write_rows(cfg: &ExperimentConfig, rows: &[Row], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["replication".to_string(), "method".into(), "param_name".into(), "param_value".into()];
    header.extend(columns(cfg));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.replication.to_string(), r.method.clone(), r.param_name.clone(), r.param_value.to_string()];
        rec.extend(r.values.iter().map(|v| cell(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary(cfg: &ExperimentConfig, summary: &[SummaryRow], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["method".to_string(), "param_name".into(), "param_value".into(), "replications".into()];
    for c in columns(cfg) {
        header.push(format!("{c}_mean"));
        header.push(format!("{c}_sd"));
    }
    w.write_record(&header)?;
    for s in summary {
        let mut rec = vec![s.method.clone(), s.param_name.clone(), s.param_value.to_string(), s.replications.to_string()];
        for (m, d) in s.mean.iter().zip(&s.sd) {
            rec.push(cell(*m));
            rec.push(cell(*d));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the data CSV, the summary CSV, one SVG per metric that has data,
/// and a metadata sidecar holding everything non-deterministic.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    rows: &[Row],
    out_dir: &Path,
    jobs: Option<usize>,
) -> Result<RunReport, HarnessError> {
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let results = out_dir.join("results.csv");
    write_rows(cfg, rows, &results)?;
    files.push(results);
    let summary = summarize(cfg, rows);
    let summary_path = out_dir.join("summary.csv");
    write_summary(cfg, &summary, &summary_path)?;
    files.push(summary_path);
    for (c, metric) in columns(cfg).iter().enumerate() {
        if summary.iter().all(|s| s.mean[c].is_none()) {
            continue;
        }
        let path = out_dir.join(format!("{metric}.svg"));
        fs::write(&path, render_svg(cfg, &summary, c, metric))?;
        files.push(path);
    }
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let meta = format!(
        "name = {:?}\nmaster_seed = {}\nreplications = {}\nrows = {}\njobs = {}\ncreated_unix = {created}\ncroms_version = {:?}\n",
        cfg.name,
        cfg.master_seed,
        cfg.replications,
        rows.len(),
        jobs.map_or("auto".to_string(), |j| j.to_string()),
        env!("CARGO_PKG_VERSION"),
    );
    let meta_path = out_dir.join("metadata.toml");
    fs::write(&meta_path, meta)?;
    files.push(meta_path);
    Ok(RunReport {
        rows: rows.len(),
        summary_rows: summary.len(),
        files,
    })
}
