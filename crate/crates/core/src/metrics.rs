//! Statistics, comparisons and output artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runner::{RunResults, SuiteSamples};
use crate::session::TimingSample;

/// Box-plot statistics. Quartiles use linear interpolation at position
/// `p * (n - 1)` of the sorted values; whiskers are the most extreme data
/// points inside the 1.5 * IQR fences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

pub fn summarize(values: &[f64]) -> Result<StatsSummary> {
    if values.is_empty() {
        return Err(Error::Parameter("cannot summarize an empty sample".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Parameter("sample contains NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);

    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);

    let inside = |v: &&f64| **v >= lo_fence && **v <= hi_fence;
    // The median always lies inside the fences, so both exist.
    let whisker_low = *sorted.iter().find(inside).unwrap();
    let whisker_high = *sorted.iter().rev().find(inside).unwrap();
    let outliers = sorted.iter().copied().filter(|v| !inside(&v)).collect();

    Ok(StatsSummary {
        n,
        mean,
        median,
        q1,
        q3,
        iqr,
        whisker_low,
        whisker_high,
        outliers,
    })
}

/// Signed percent change from `baseline_mean` to `candidate_mean`;
/// negative means the candidate is faster.
pub fn percent_delta(baseline_mean: f64, candidate_mean: f64) -> Result<f64> {
    if !(baseline_mean > 0.0) {
        return Err(Error::Parameter(format!("baseline mean must be > 0, got {baseline_mean}")));
    }
    Ok(100.0 * (candidate_mean - baseline_mean) / baseline_mean)
}

pub fn transfer_rate(sample: &TimingSample) -> Result<f64> {
    if !(sample.total_download_time_s > 0.0) {
        return Err(Error::Parameter(format!(
            "transfer rate undefined for total time {}",
            sample.total_download_time_s
        )));
    }
    Ok(sample.file_bytes as f64 / sample.total_download_time_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Handshake,
    Total,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Handshake, Metric::Total];

    pub fn of(self, s: &TimingSample) -> f64 {
        match self {
            Metric::Handshake => s.handshake_time_s,
            Metric::Total => s.total_download_time_s,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Handshake => "handshake",
            Metric::Total => "total",
        }
    }
}

pub fn summarize_group(group: &SuiteSamples, metric: Metric) -> Result<StatsSummary> {
    let values: Vec<f64> = group.valid().map(|s| metric.of(s)).collect();
    summarize(&values).map_err(|_| Error::Parameter(format!("suite {:?} has no valid samples", group.suite)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub low_pct: f64,
    pub high_pct: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            low_pct: 10.0,
            high_pct: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub suite: String,
    pub metric: Metric,
    pub baseline_mean: f64,
    pub candidate_mean: f64,
    pub baseline_median: f64,
    pub candidate_median: f64,
    pub delta_pct: f64,
    pub within_low: bool,
    pub within_high: bool,
    pub candidate_n: usize,
    pub excluded_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub baseline_suite: String,
    pub thresholds: Thresholds,
    pub baseline_n: usize,
    pub baseline_excluded_n: usize,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn all_within_low(&self) -> bool {
        self.rows.iter().all(|r| r.within_low)
    }

    pub fn all_within_high(&self) -> bool {
        self.rows.iter().all(|r| r.within_high)
    }

    pub fn to_table(&self) -> String {
        let t = &self.thresholds;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "baseline: {} (n={}, excluded={})",
            self.baseline_suite, self.baseline_n, self.baseline_excluded_n
        );
        let lo = format!("<{}%", t.low_pct);
        let hi = format!("<{}%", t.high_pct);
        let _ = writeln!(
            out,
            "{:<18} {:<9} {:>12} {:>12} {:>12} {:>12} {:>9} {:>6} {:>6} {:>5} {:>4}",
            "suite", "metric", "base_mean", "cand_mean", "base_median", "cand_median", "delta%", lo, hi, "n", "excl"
        );
        let yn = |b: bool| if b { "pass" } else { "FAIL" };
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<18} {:<9} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>+9.2} {:>6} {:>6} {:>5} {:>4}",
                r.suite,
                r.metric.name(),
                r.baseline_mean,
                r.candidate_mean,
                r.baseline_median,
                r.candidate_median,
                r.delta_pct,
                yn(r.within_low),
                yn(r.within_high),
                r.candidate_n,
                r.excluded_n
            );
        }
        out
    }
}

/// One row per (non-baseline suite, metric), deltas taken between means.
pub fn compare(groups: &[SuiteSamples], baseline: &str, thresholds: Thresholds) -> Result<ComparisonReport> {
    let base = groups
        .iter()
        .find(|g| g.suite == baseline)
        .ok_or_else(|| Error::Parameter(format!("baseline suite {baseline:?} not present in results")))?;

    let mut rows = Vec::new();
    let mut baseline_n = 0;
    for metric in Metric::ALL {
        let b = summarize_group(base, metric)?;
        baseline_n = b.n;
        for g in groups.iter().filter(|g| g.suite != baseline) {
            let c = summarize_group(g, metric)?;
            let delta_pct = percent_delta(b.mean, c.mean)?;
            rows.push(ComparisonRow {
                suite: g.suite.clone(),
                metric,
                baseline_mean: b.mean,
                candidate_mean: c.mean,
                baseline_median: b.median,
                candidate_median: c.median,
                delta_pct,
                within_low: delta_pct < thresholds.low_pct,
                within_high: delta_pct < thresholds.high_pct,
                candidate_n: c.n,
                excluded_n: g.excluded_n(),
            });
        }
    }
    Ok(ComparisonReport {
        baseline_suite: baseline.to_string(),
        thresholds,
        baseline_n,
        baseline_excluded_n: base.excluded_n(),
        rows,
    })
}

pub fn compare_results(results: &RunResults, baseline: &str, thresholds: Thresholds) -> Result<ComparisonReport> {
    compare(&results.groups, baseline, thresholds)
}

pub const CSV_HEADER: &str =
    "scenario,suite,run,seed,handshake_time_s,total_download_time_s,file_bytes,transfer_rate_Bps,valid";
pub const SWEPT_COLUMN: &str = "swept_value";

pub fn csv_row(scenario: &str, s: &TimingSample) -> String {
    format!(
        "{},{},{},{},{:.9},{:.9},{},{},{}",
        scenario,
        s.suite_name,
        s.run,
        s.seed,
        s.handshake_time_s,
        s.total_download_time_s,
        s.file_bytes,
        s.transfer_rate_bps,
        s.valid
    )
}

pub fn render_csv(results: &RunResults) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for s in results.samples() {
        out.push_str(&csv_row(&results.scenario.name, s));
        out.push('\n');
    }
    out
}

/// CSV spanning several sweep points, with the swept value appended.
pub fn render_sweep_csv(points: &[(f64, RunResults)]) -> String {
    let mut out = format!("{CSV_HEADER},{SWEPT_COLUMN}\n");
    for (value, results) in points {
        for s in results.samples() {
            let _ = writeln!(out, "{},{}", csv_row(&results.scenario.name, s), value);
        }
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_csv(results: &RunResults, path: &Path) -> Result<()> {
    write_text(path, &render_csv(results))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRecord {
    pub scenario: String,
    pub sample: TimingSample,
    pub swept_value: Option<f64>,
}

pub fn parse_csv(text: &str, origin: &Path) -> Result<Vec<CsvRecord>> {
    let err = |line: u64, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        message: format!("line {line}: {msg}"),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let expected: Vec<&str> = CSV_HEADER.split(',').collect();
    let with_swept = {
        let h: Vec<&str> = headers.iter().collect();
        if h == expected {
            false
        } else if h.len() == expected.len() + 1 && h[..expected.len()] == expected[..] && h[expected.len()] == SWEPT_COLUMN {
            true
        } else {
            return Err(err(1, format!("header does not match `{CSV_HEADER}`")));
        }
    };

    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> std::result::Result<T, String> {
            rec.get(i)
                .ok_or_else(|| format!("missing field `{name}`"))?
                .parse()
                .map_err(|_| format!("bad value {:?} for `{name}`", rec.get(i).unwrap_or("")))
        }
        let parse = || -> std::result::Result<CsvRecord, String> {
            Ok(CsvRecord {
                scenario: field(&rec, 0, "scenario")?,
                sample: TimingSample {
                    suite_name: field(&rec, 1, "suite")?,
                    run: field(&rec, 2, "run")?,
                    seed: field(&rec, 3, "seed")?,
                    handshake_time_s: field(&rec, 4, "handshake_time_s")?,
                    total_download_time_s: field(&rec, 5, "total_download_time_s")?,
                    file_bytes: field(&rec, 6, "file_bytes")?,
                    transfer_rate_bps: field(&rec, 7, "transfer_rate_Bps")?,
                    valid: field(&rec, 8, "valid")?,
                },
                swept_value: if with_swept { Some(field(&rec, 9, SWEPT_COLUMN)?) } else { None },
            })
        };
        out.push(parse().map_err(|m| err(line, m))?);
    }
    Ok(out)
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

/// Groups records by suite in order of first appearance.
pub fn group_by_suite(records: &[CsvRecord]) -> Vec<SuiteSamples> {
    let mut groups: Vec<SuiteSamples> = Vec::new();
    for r in records {
        match groups.iter_mut().find(|g| g.suite == r.sample.suite_name) {
            Some(g) => g.samples.push(r.sample.clone()),
            None => groups.push(SuiteSamples {
                suite: r.sample.suite_name.clone(),
                samples: vec![r.sample.clone()],
            }),
        }
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlottedBox {
    pub suite: String,
    pub summary: StatsSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotSidecar {
    pub metric: String,
    pub unit: String,
    pub boxes: Vec<PlottedBox>,
}

pub fn sidecar_path(svg: &Path) -> PathBuf {
    svg.with_extension("json")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_boxplot_svg(boxes: &[PlottedBox], metric: &str) -> String {
    const BOX_W: f64 = 60.0;
    const SLOT: f64 = 120.0;
    const LEFT: f64 = 80.0;
    const TOP: f64 = 40.0;
    const PLOT_H: f64 = 300.0;
    let width = LEFT + SLOT * boxes.len() as f64 + 20.0;
    let height = TOP + PLOT_H + 60.0;

    let values = boxes.iter().flat_map(|b| {
        let s = &b.summary;
        [s.whisker_low, s.whisker_high].into_iter().chain(s.outliers.iter().copied())
    });
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi - lo <= 0.0 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        lo -= pad;
        hi += pad;
    }
    let y = |v: f64| TOP + (hi - v) / (hi - lo) * PLOT_H;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{} (s)</text>"#,
        width / 2.0,
        xml_escape(metric)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT:.2}" y1="{TOP:.2}" x2="{LEFT:.2}" y2="{:.2}" stroke="black"/>"#,
        TOP + PLOT_H
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y(v) + 4.0,
            format_tick(v)
        );
    }
    for (i, b) in boxes.iter().enumerate() {
        let s = &b.summary;
        let cx = LEFT + SLOT * (i as f64 + 0.5);
        let (x0, x1) = (cx - BOX_W / 2.0, cx + BOX_W / 2.0);
        let _ = writeln!(svg, r#"<g class="box" data-suite="{}">"#, xml_escape(&b.suite));
        let _ = writeln!(
            svg,
            r#"  <line class="whisker" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y(s.whisker_high),
            y(s.q3)
        );
        let _ = writeln!(
            svg,
            r#"  <line class="whisker" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y(s.q1),
            y(s.whisker_low)
        );
        for w in [s.whisker_low, s.whisker_high] {
            let _ = writeln!(
                svg,
                r#"  <line class="cap" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
                cx - BOX_W / 4.0,
                y(w),
                cx + BOX_W / 4.0,
                y(w)
            );
        }
        let _ = writeln!(
            svg,
            r##"  <rect class="iqr" x="{x0:.2}" y="{:.2}" width="{BOX_W:.2}" height="{:.2}" fill="#9ecae1" stroke="black"/>"##,
            y(s.q3),
            y(s.q1) - y(s.q3)
        );
        let _ = writeln!(
            svg,
            r#"  <line class="median" x1="{x0:.2}" y1="{:.2}" x2="{x1:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            y(s.median),
            y(s.median)
        );
        for o in &s.outliers {
            let _ = writeln!(
                svg,
                r#"  <circle class="outlier" cx="{cx:.2}" cy="{:.2}" r="3" fill="none" stroke="black"/>"#,
                y(*o)
            );
        }
        let _ = writeln!(
            svg,
            r#"  <text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + PLOT_H + 20.0,
            xml_escape(&b.suite)
        );
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    svg
}

fn format_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

/// Writes the SVG at `path` and the plotted numbers next to it as JSON.
pub fn emit_boxplot(summaries: &[(String, StatsSummary)], metric: &str, path: &Path) -> Result<()> {
    if summaries.is_empty() {
        return Err(Error::Parameter("box plot needs at least one summary".into()));
    }
    let boxes: Vec<PlottedBox> = summaries
        .iter()
        .map(|(suite, summary)| PlottedBox {
            suite: suite.clone(),
            summary: summary.clone(),
        })
        .collect();
    write_text(path, &render_boxplot_svg(&boxes, metric))?;
    let sidecar = BoxplotSidecar {
        metric: metric.to_string(),
        unit: "s".into(),
        boxes,
    };
    let mut json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    json.push('\n');
    write_text(&sidecar_path(path), &json)
}
