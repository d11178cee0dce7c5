//! Self-contained SVG renderings of a benchmark report: epoch-time series,
//! log-scale load times, the load/train split, and the preset comparison.
//! Hand-rolled on purpose — four fixed charts don't justify a plotting
//! dependency, and the output stays byte-stable across environments.

use std::fs;
use std::path::{Path, PathBuf};

use crate::bench::{BenchReport, CaseSummary};
use crate::error::{Error, Result};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 430.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 180.0; // room for the legend
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 96.0; // room for rotated case labels

/// One distinguishable stroke/fill per case, cycling past eight.
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(ch),
        }
    }
    out
}

fn fmt_ms(v: f64) -> String {
    if v >= 100.0 {
        format!("{v:.0}")
    } else if v >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

/// Minimal SVG assembler; every string that came from data goes through
/// [`xml_escape`] before it lands here.
struct SvgDoc {
    body: String,
}

impl SvgDoc {
    fn new(title: &str) -> Self {
        let mut doc = SvgDoc { body: String::with_capacity(4096) };
        doc.body.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        doc.body.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
        ));
        doc.rect(0.0, 0.0, WIDTH, HEIGHT, "#ffffff");
        doc.text(WIDTH / 2.0, 22.0, 15.0, "middle", title);
        doc
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        self.body.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"/>\n"
        ));
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        self.body.push_str(&format!(
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" \
             stroke=\"{stroke}\" stroke-width=\"{width}\"/>\n"
        ));
    }

    fn polyline(&mut self, points: &[(f64, f64)], stroke: &str) {
        if points.len() < 2 {
            return;
        }
        let pts: Vec<String> =
            points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        self.body.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"/>\n",
            pts.join(" ")
        ));
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        self.body.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{r}\" fill=\"{fill}\"/>\n"
        ));
    }

    /// `text` is escaped here; pass it raw.
    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, text: &str) {
        self.body.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size}\" \
             text-anchor=\"{anchor}\">{}</text>\n",
            xml_escape(text)
        ));
    }

    /// Rotated tick label for long case ids along the x axis.
    fn tilted_label(&mut self, x: f64, y: f64, text: &str) {
        self.body.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"10\" text-anchor=\"end\" \
             transform=\"rotate(-35 {x:.2} {y:.2})\">{}</text>\n",
            xml_escape(text)
        ));
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

/// Plot area in chart coordinates.
struct Frame {
    x0: f64,
    y0: f64, // bottom
    x1: f64,
    y1: f64, // top
}

fn frame() -> Frame {
    Frame {
        x0: MARGIN_LEFT,
        y0: HEIGHT - MARGIN_BOTTOM,
        x1: WIDTH - MARGIN_RIGHT,
        y1: MARGIN_TOP,
    }
}

fn draw_axes(doc: &mut SvgDoc, f: &Frame, y_label: &str) {
    doc.line(f.x0, f.y0, f.x1, f.y0, "#000000", 1.0);
    doc.line(f.x0, f.y0, f.x0, f.y1, "#000000", 1.0);
    // Vertical axis caption, rotated along the axis.
    doc.body.push_str(&format!(
        "<text x=\"16\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {:.2})\">{}</text>\n",
        (f.y0 + f.y1) / 2.0,
        (f.y0 + f.y1) / 2.0,
        xml_escape(y_label)
    ));
}

/// Linear y ticks: five evenly spaced labels from 0 to `max`.
fn draw_linear_ticks(doc: &mut SvgDoc, f: &Frame, max: f64) {
    for i in 0..=4 {
        let v = max * i as f64 / 4.0;
        let y = f.y0 - (f.y0 - f.y1) * i as f64 / 4.0;
        doc.line(f.x0 - 4.0, y, f.x0, y, "#000000", 1.0);
        if i > 0 {
            doc.line(f.x0, y, f.x1, y, "#dddddd", 0.5);
        }
        doc.text(f.x0 - 7.0, y + 3.5, 10.0, "end", &fmt_ms(v));
    }
}

fn legend(doc: &mut SvgDoc, entries: &[(String, &str)]) {
    let x = WIDTH - MARGIN_RIGHT + 14.0;
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = MARGIN_TOP + 14.0 * i as f64;
        doc.rect(x, y, 9.0, 9.0, color);
        doc.text(x + 13.0, y + 8.0, 10.0, "start", label);
    }
}

/// Maximum over possibly-flat data, floored so scales never collapse.
fn scale_max(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0_f64, f64::max).max(1e-6) * 1.05
}

/// Chart 1: every recorded epoch time, one line per case, x = the record's
/// position within its case (repeats concatenated).
fn plot_epoch_times(report: &BenchReport) -> String {
    let mut doc = SvgDoc::new("Epoch time per recorded epoch");
    let f = frame();
    draw_axes(&mut doc, &f, "epoch time (ms)");

    let mut case_order: Vec<&str> = Vec::new();
    for r in &report.records {
        if !case_order.contains(&r.case_id.as_str()) {
            case_order.push(&r.case_id);
        }
    }
    let max_y = scale_max(report.records.iter().map(|r| r.epoch_time_ms));
    let max_len = case_order
        .iter()
        .map(|id| report.records.iter().filter(|r| r.case_id == *id).count())
        .max()
        .unwrap_or(1)
        .max(2);
    draw_linear_ticks(&mut doc, &f, max_y);
    doc.text((f.x0 + f.x1) / 2.0, f.y0 + 28.0, 11.0, "middle", "recorded epoch #");

    let mut entries = Vec::new();
    for (ci, id) in case_order.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let points: Vec<(f64, f64)> = report
            .records
            .iter()
            .filter(|r| r.case_id == *id)
            .enumerate()
            .map(|(i, r)| {
                let x = f.x0 + (f.x1 - f.x0) * i as f64 / (max_len - 1) as f64;
                let y = f.y0 - (f.y0 - f.y1) * r.epoch_time_ms / max_y;
                (x, y)
            })
            .collect();
        doc.polyline(&points, color);
        for &(x, y) in &points {
            doc.circle(x, y, 2.2, color);
        }
        entries.push((id.to_string(), color));
    }
    for i in 0..max_len {
        let x = f.x0 + (f.x1 - f.x0) * i as f64 / (max_len - 1) as f64;
        doc.text(x, f.y0 + 14.0, 10.0, "middle", &i.to_string());
    }
    legend(&mut doc, &entries);
    doc.finish()
}

/// Chart 2: median load time per case, log₁₀ scale with decade gridlines —
/// the spread between readers spans orders of magnitude once datasets grow.
fn plot_load_log(summaries: &[CaseSummary]) -> String {
    let mut doc = SvgDoc::new("Median data-loading time per case (log scale)");
    let f = frame();
    draw_axes(&mut doc, &f, "load time (ms, log)");

    const FLOOR_MS: f64 = 1e-3;
    let logs: Vec<f64> =
        summaries.iter().map(|s| s.median_load_ms.max(FLOOR_MS).log10()).collect();
    let lo = logs.iter().cloned().fold(f64::INFINITY, f64::min).floor();
    let hi = (logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.05).ceil().max(lo + 1.0);

    for k in (lo as i64)..=(hi as i64) {
        let y = f.y0 - (f.y0 - f.y1) * (k as f64 - lo) / (hi - lo);
        doc.line(f.x0 - 4.0, y, f.x1, y, "#dddddd", 0.5);
        doc.text(f.x0 - 7.0, y + 3.5, 10.0, "end", &fmt_ms(10f64.powi(k as i32)));
    }

    let n = summaries.len().max(1);
    let slot = (f.x1 - f.x0) / n as f64;
    let bar_w = (slot * 0.6).min(48.0);
    for (i, s) in summaries.iter().enumerate() {
        let cx = f.x0 + slot * (i as f64 + 0.5);
        let top = f.y0
            - (f.y0 - f.y1) * (s.median_load_ms.max(FLOOR_MS).log10() - lo) / (hi - lo);
        doc.rect(cx - bar_w / 2.0, top, bar_w, f.y0 - top, PALETTE[i % PALETTE.len()]);
        doc.text(cx, top - 4.0, 10.0, "middle", &fmt_ms(s.median_load_ms));
        doc.tilted_label(cx + 4.0, f.y0 + 14.0, &s.case_id);
    }
    doc.finish()
}

/// Chart 3: each case's epoch time split into loading, training, and the
/// unattributed remainder, as stacked bars.
fn plot_time_split(summaries: &[CaseSummary]) -> String {
    let mut doc = SvgDoc::new("Epoch time split: loading vs training");
    let f = frame();
    draw_axes(&mut doc, &f, "time (ms)");

    let max_y = scale_max(summaries.iter().map(|s| s.median_epoch_ms));
    draw_linear_ticks(&mut doc, &f, max_y);

    const LOAD_COLOR: &str = "#d62728";
    const TRAIN_COLOR: &str = "#1f77b4";
    const OTHER_COLOR: &str = "#bbbbbb";
    let n = summaries.len().max(1);
    let slot = (f.x1 - f.x0) / n as f64;
    let bar_w = (slot * 0.6).min(48.0);
    let px_per_ms = (f.y0 - f.y1) / max_y;
    for (i, s) in summaries.iter().enumerate() {
        let cx = f.x0 + slot * (i as f64 + 0.5);
        let x = cx - bar_w / 2.0;
        let other = (s.median_epoch_ms - s.median_load_ms - s.median_train_ms).max(0.0);
        let mut y = f.y0;
        for (value, color) in [
            (s.median_load_ms, LOAD_COLOR),
            (s.median_train_ms, TRAIN_COLOR),
            (other, OTHER_COLOR),
        ] {
            let h = value * px_per_ms;
            doc.rect(x, y - h, bar_w, h, color);
            y -= h;
        }
        doc.tilted_label(cx + 4.0, f.y0 + 14.0, &s.case_id);
    }
    legend(
        &mut doc,
        &[
            ("loading".to_string(), LOAD_COLOR),
            ("training".to_string(), TRAIN_COLOR),
            ("other".to_string(), OTHER_COLOR),
        ],
    );
    doc.finish()
}

/// Chart 4: few vs extensive median epoch time, grouped by reader ×
/// allocation — how much augmentation cost the pipeline hides.
fn plot_preset_compare(summaries: &[CaseSummary]) -> String {
    let mut doc = SvgDoc::new("Preset cost by reader and allocation");
    let f = frame();
    draw_axes(&mut doc, &f, "median epoch time (ms)");

    let mut groups: Vec<(String, String)> = Vec::new(); // (reader, allocation)
    for s in summaries {
        let key = (s.reader.clone(), s.allocation.clone());
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    let max_y = scale_max(summaries.iter().map(|s| s.median_epoch_ms));
    draw_linear_ticks(&mut doc, &f, max_y);

    const FEW_COLOR: &str = "#2ca02c";
    const EXT_COLOR: &str = "#9467bd";
    let n = groups.len().max(1);
    let slot = (f.x1 - f.x0) / n as f64;
    let bar_w = (slot * 0.3).min(40.0);
    for (i, (reader, allocation)) in groups.iter().enumerate() {
        let cx = f.x0 + slot * (i as f64 + 0.5);
        for (j, (preset, color)) in [("few", FEW_COLOR), ("extensive", EXT_COLOR)]
            .iter()
            .enumerate()
        {
            let Some(s) = summaries.iter().find(|s| {
                s.reader == *reader && s.allocation == *allocation && s.preset == *preset
            }) else {
                continue;
            };
            let x = cx + (j as f64 - 1.0) * bar_w;
            let h = (f.y0 - f.y1) * s.median_epoch_ms / max_y;
            doc.rect(x, f.y0 - h, bar_w, h, color);
        }
        doc.tilted_label(cx + 4.0, f.y0 + 14.0, &format!("{reader}-{allocation}"));
    }
    legend(
        &mut doc,
        &[("few".to_string(), FEW_COLOR), ("extensive".to_string(), EXT_COLOR)],
    );
    doc.finish()
}

/// Render all four charts into `out_dir`, returning the written paths in a
/// fixed order.
pub fn emit_plots(report: &BenchReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if report.records.is_empty() {
        return Err(Error::EmptyReport);
    }
    fs::create_dir_all(out_dir)?;
    let summaries = report.case_summaries();
    let charts: [(&str, String); 4] = [
        ("epoch_times.svg", plot_epoch_times(report)),
        ("load_times_log.svg", plot_load_log(&summaries)),
        ("time_split.svg", plot_time_split(&summaries)),
        ("preset_compare.svg", plot_preset_compare(&summaries)),
    ];
    let mut paths = Vec::with_capacity(4);
    for (name, svg) in charts {
        let path = out_dir.join(name);
        fs::write(&path, svg)?;
        paths.push(path);
    }
    Ok(paths)
}
