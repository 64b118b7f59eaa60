//! Persisting experiment reports: CSV summary table, JSON, and an SVG
//! grouped-bar figure of mean true positives.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{ExperimentReport, PhaseTimings};

/// One CSV row: a method's summary within one scenario cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub structure: String,
    pub m: usize,
    pub rho: f64,
    pub method: String,
    pub runs: usize,
    pub mean_true_positives: f64,
    pub tp_stderr: f64,
    pub fwer: f64,
    pub fwer_stderr: f64,
    pub mean_false_positives: f64,
}

const HEADER: [&str; 10] = [
    "structure",
    "m",
    "rho",
    "method",
    "runs",
    "mean_true_positives",
    "tp_stderr",
    "fwer",
    "fwer_stderr",
    "mean_false_positives",
];

pub fn summary_rows(reports: &[ExperimentReport]) -> Vec<SummaryRow> {
    reports
        .iter()
        .flat_map(|r| {
            let s = &r.config.scenario;
            r.summaries.iter().map(move |x| SummaryRow {
                structure: s.structure.name().into(),
                m: s.m,
                rho: s.structure.rho(),
                method: x.method.as_str().into(),
                runs: r.runs.len(),
                mean_true_positives: x.mean_true_positives,
                tp_stderr: x.tp_stderr,
                fwer: x.fwer,
                fwer_stderr: x.fwer_stderr,
                mean_false_positives: x.mean_false_positives,
            })
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(HEADER).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(e.to_string()))
}

/// Paths written by [`emit_outputs`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputPaths {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub timing: PathBuf,
    pub svg: PathBuf,
}

#[derive(Serialize)]
struct TimingEntry<'a> {
    structure: &'a str,
    m: usize,
    rho: f64,
    timing: PhaseTimings,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `summary.csv`, `report.json`, `timing.json` and `power.svg` into
/// `dir`, creating it if needed. Everything except `timing.json` is a pure
/// function of the reports' configurations.
pub fn emit_outputs(reports: &[ExperimentReport], dir: &Path) -> Result<OutputPaths> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = OutputPaths {
        csv: dir.join("summary.csv"),
        json: dir.join("report.json"),
        timing: dir.join("timing.json"),
        svg: dir.join("power.svg"),
    };
    let rows = summary_rows(reports);
    write(&paths.csv, &summary_csv(&rows)?)?;
    write(&paths.json, &(serde_json::to_string_pretty(reports).expect("report serializes") + "\n"))?;
    let timing: Vec<TimingEntry> = reports
        .iter()
        .map(|r| TimingEntry {
            structure: r.config.scenario.structure.name(),
            m: r.config.scenario.m,
            rho: r.config.scenario.structure.rho(),
            timing: r.timing,
        })
        .collect();
    write(&paths.timing, &(serde_json::to_string_pretty(&timing).expect("timing serializes") + "\n"))?;
    write(&paths.svg, &power_svg(&rows))?;
    Ok(paths)
}

const PALETTE: [&str; 6] = ["#c6dbef", "#9ecae1", "#bdbdbd", "#737373", "#2171b5", "#08306b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Grouped bars of mean true positives: one panel per (structure, m), one
/// bar group per correlation within it, one bar per method.
pub fn power_svg(rows: &[SummaryRow]) -> String {
    let mut structures: Vec<&str> = Vec::new();
    let mut ms: Vec<usize> = Vec::new();
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !structures.contains(&r.structure.as_str()) {
            structures.push(&r.structure);
        }
        if !ms.contains(&r.m) {
            ms.push(r.m);
        }
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    ms.sort_unstable();

    let (panel_w, panel_h, margin) = (260.0, 180.0, 40.0);
    let legend_h = 24.0;
    let width = margin + ms.len().max(1) as f64 * (panel_w + margin);
    let height = legend_h + margin + structures.len().max(1) as f64 * (panel_h + margin);
    let y_max = rows
        .iter()
        .map(|r| r.mean_true_positives)
        .fold(0.0f64, f64::max)
        .max(1.0)
        * 1.05;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, method) in methods.iter().enumerate() {
        let x = margin + k as f64 * 120.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{x}" y="6" width="10" height="10" fill="{}"/><text x="{}" y="15">{}</text>"#,
            PALETTE[k % PALETTE.len()],
            x + 14.0,
            escape(method)
        );
    }
    for (si, structure) in structures.iter().enumerate() {
        for (mi, &m) in ms.iter().enumerate() {
            let x0 = margin + mi as f64 * (panel_w + margin);
            let y0 = legend_h + margin + si as f64 * (panel_h + margin);
            let _ = writeln!(
                svg,
                r#"<g class="panel"><rect x="{x0}" y="{y0}" width="{panel_w}" height="{panel_h}" fill="none" stroke="black"/><text x="{}" y="{}" text-anchor="middle">{} m={m}</text>"#,
                x0 + panel_w / 2.0,
                y0 - 4.0,
                escape(structure)
            );
            let mut rhos: Vec<f64> = rows
                .iter()
                .filter(|r| r.structure == *structure && r.m == m)
                .map(|r| r.rho)
                .collect();
            rhos.sort_by(f64::total_cmp);
            rhos.dedup();
            let group_w = panel_w / rhos.len().max(1) as f64;
            let bar_w = group_w * 0.8 / methods.len().max(1) as f64;
            for (gi, &rho) in rhos.iter().enumerate() {
                let gx = x0 + gi as f64 * group_w + group_w * 0.1;
                let _ = writeln!(svg, r#"<g class="cell" data-structure="{structure}" data-m="{m}" data-rho="{rho}">"#);
                for (k, method) in methods.iter().enumerate() {
                    let Some(r) = rows
                        .iter()
                        .find(|r| r.structure == *structure && r.m == m && r.rho == rho && r.method == *method)
                    else {
                        continue;
                    };
                    let h = r.mean_true_positives / y_max * panel_h;
                    let _ = writeln!(
                        svg,
                        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{} {:.3}</title></rect>"#,
                        gx + k as f64 * bar_w,
                        y0 + panel_h - h,
                        bar_w,
                        h,
                        PALETTE[k % PALETTE.len()],
                        escape(method),
                        r.mean_true_positives
                    );
                }
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.2}" y="{}" text-anchor="middle">rho={rho}</text></g>"#,
                    gx + group_w * 0.4,
                    y0 + panel_h + 12.0
                );
            }
            let _ = writeln!(svg, "</g>");
        }
    }
    svg.push_str("</svg>\n");
    svg
}
