use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::world::TerrainKind;

use super::{read_metrics, EvalSummary, MetricsLog, TrainError};

/// Mean and population standard deviation across runs at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub runs: usize,
    pub reward_mean: f64,
    pub reward_std: f64,
    pub length_mean: f64,
    pub length_std: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotReport {
    pub files: Vec<PathBuf>,
    /// Malformed lines skipped across all logs.
    pub skipped_lines: usize,
    pub warnings: Vec<String>,
    /// Curves per algorithm label, in label order.
    pub curves: BTreeMap<String, Vec<CurvePoint>>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

fn curves(logs: &[MetricsLog], label: &str, warnings: &mut Vec<String>) -> Vec<CurvePoint> {
    let len = logs.iter().map(|l| l.records.len()).min().unwrap_or(0);
    if logs.iter().any(|l| l.records.len() != len) {
        let msg = format!("{label}: logs have unequal lengths; truncating to {len} iterations");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    (0..len)
        .map(|j| {
            let r: Vec<f64> = logs.iter().map(|l| l.records[j].mean_reward).collect();
            let e: Vec<f64> = logs.iter().map(|l| l.records[j].mean_episode_length).collect();
            let (reward_mean, reward_std) = mean_std(&r);
            let (length_mean, length_std) = mean_std(&e);
            CurvePoint {
                iteration: logs[0].records[j].iteration,
                runs: logs.len(),
                reward_mean,
                reward_std,
                length_mean,
                length_std,
            }
        })
        .collect()
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Line chart with a shaded mean ± std band per series.
fn band_chart(title: &str, y_label: &str, series: &[(&str, Vec<(f64, f64, f64)>)]) -> String {
    let (w, h) = (640.0, 400.0);
    let (l, r, t, b) = (70.0, 150.0, 40.0, 50.0);
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, m, s) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(m - s);
        y1 = y1.max(m + s);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| l + (x - x0) / (x1 - x0) * (w - l - r);
    let py = |y: f64| h - b - (y - y0) / (y1 - y0) * (h - t - b);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{title}</text>"#, w / 2.0);
    let _ = writeln!(
        s,
        r#"<line x1="{l}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{l}" y1="{t}" x2="{l}" y2="{}" stroke="black"/>"#,
        h - b,
        w - r,
        h - b,
        h - b
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{fx:.0}</text><text x="{}" y="{:.1}" text-anchor="end">{fy:.3}</text>"#,
            px(fx),
            h - b + 18.0,
            l - 6.0,
            py(fy) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{}" text-anchor="middle">iteration</text>"#,
        l + (w - l - r) / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{y_label}</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (k, (name, p)) in series.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        let upper = p.iter().map(|&(x, m, sd)| format!("{:.2},{:.2}", px(x), py(m + sd)));
        let lower = p.iter().rev().map(|&(x, m, sd)| format!("{:.2},{:.2}", px(x), py(m - sd)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(s, r#"<polygon points="{}" fill="{c}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
        let line: Vec<String> = p.iter().map(|&(x, m, _)| format!("{:.2},{:.2}", px(x), py(m))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#, line.join(" "));
        let ly = t + 10.0 + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="3"/><text x="{}" y="{}">{name}</text>"#,
            w - r + 10.0,
            w - r + 30.0,
            w - r + 35.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn heatmap(summary: &EvalSummary) -> String {
    let k = summary.skill_usage.counts.first().map_or(0, |c| c.len());
    let (cw, ch, l, t) = (80.0, 36.0, 110.0, 50.0);
    let w = l + cw * k as f64 + 20.0;
    let h = t + ch * TerrainKind::ALL.len() as f64 + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="15">skill usage per terrain</text>"#, w / 2.0);
    for j in 0..k {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">skill {}</text>"#,
            l + cw * (j as f64 + 0.5),
            t - 8.0,
            j + 1
        );
    }
    for (i, kind) in TerrainKind::ALL.iter().enumerate() {
        let y = t + ch * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, l - 8.0, y + ch / 2.0 + 4.0, kind.name());
        let row = summary.skill_usage.row(*kind);
        for j in 0..k {
            let x = l + cw * j as f64;
            let (fill, label) = match row {
                Some(r) => {
                    let v = r[j];
                    let shade = (255.0 * (1.0 - v)).round() as u8;
                    (format!("rgb({shade},{shade},255)"), format!("{:.2}", v))
                }
                None => ("#dddddd".to_string(), "no data".to_string()),
            };
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="{fill}" stroke="white"/><text x="{:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#,
                x + cw / 2.0,
                y + ch / 2.0 + 4.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn write(path: PathBuf, text: &str, report: &mut PlotReport) -> Result<(), TrainError> {
    std::fs::write(&path, text).map_err(|e| TrainError::io(&path, e))?;
    report.files.push(path);
    Ok(())
}

/// Reward and episode-length curves (mean ± std across runs of each
/// algorithm), their CSV, and an optional skill-usage heatmap.
pub fn emit_plots(
    logs: &[PathBuf],
    out_dir: &Path,
    eval: Option<&EvalSummary>,
) -> Result<PlotReport, TrainError> {
    let mut report = PlotReport::default();
    let mut groups: BTreeMap<String, Vec<MetricsLog>> = BTreeMap::new();
    for p in logs {
        let log = read_metrics(p)?;
        report.skipped_lines += log.skipped;
        if log.skipped > 0 {
            report
                .warnings
                .push(format!("{}: skipped {} malformed lines", p.display(), log.skipped));
        }
        if log.records.is_empty() {
            let msg = format!("{}: no records", p.display());
            log::warn!("{msg}");
            report.warnings.push(msg);
            continue;
        }
        let label = log
            .header
            .as_ref()
            .map_or_else(|| "unknown".to_string(), |h| h.config.ppo.algorithm.to_string());
        groups.entry(label).or_default().push(log);
    }
    if groups.is_empty() {
        return Err(TrainError::EmptyLog(
            logs.first().cloned().unwrap_or_default(),
        ));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| TrainError::io(out_dir, e))?;

    let mut csv = String::from("algorithm,iteration,runs,reward_mean,reward_std,length_mean,length_std\n");
    for (label, group) in &groups {
        let c = curves(group, label, &mut report.warnings);
        for p in &c {
            let _ = writeln!(
                csv,
                "{label},{},{},{},{},{},{}",
                p.iteration, p.runs, p.reward_mean, p.reward_std, p.length_mean, p.length_std
            );
        }
        report.curves.insert(label.clone(), c);
    }
    write(out_dir.join("curves.csv"), &csv, &mut report)?;

    let series = |f: fn(&CurvePoint) -> (f64, f64)| -> Vec<(&str, Vec<(f64, f64, f64)>)> {
        report
            .curves
            .iter()
            .map(|(label, c)| {
                let pts = c
                    .iter()
                    .map(|p| {
                        let (m, s) = f(p);
                        (p.iteration as f64, m, s)
                    })
                    .collect();
                (label.as_str(), pts)
            })
            .collect()
    };
    let reward = band_chart("Total reward", "mean total reward", &series(|p| (p.reward_mean, p.reward_std)));
    let length = band_chart("Episode length", "mean episode length", &series(|p| (p.length_mean, p.length_std)));
    write(out_dir.join("reward.svg"), &reward, &mut report)?;
    write(out_dir.join("episode_length.svg"), &length, &mut report)?;

    if let Some(summary) = eval {
        let k = summary.skill_usage.counts.first().map_or(0, |c| c.len());
        let mut csv = String::from("terrain");
        for j in 0..k {
            let _ = write!(csv, ",skill_{}", j + 1);
        }
        csv.push_str(",steps\n");
        for kind in TerrainKind::ALL {
            let steps: u64 = summary.skill_usage.counts[kind.index()].iter().sum();
            csv.push_str(kind.name());
            match summary.skill_usage.row(kind) {
                Some(r) => r.iter().for_each(|v| {
                    let _ = write!(csv, ",{v}");
                }),
                None => (0..k).for_each(|_| csv.push_str(",no data")),
            }
            let _ = writeln!(csv, ",{steps}");
        }
        write(out_dir.join("skill_usage.csv"), &csv, &mut report)?;
        write(out_dir.join("skill_usage.svg"), &heatmap(summary), &mut report)?;
    }
    Ok(report)
}
