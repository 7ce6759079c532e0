//! Static SVG plots, written by hand so the output is byte-for-byte
//! reproducible: no timestamps, fixed number formatting, fixed palette.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use adaptopt::engine::RunRecord;

use crate::CliError;

const WIDTH: f64 = 900.0;
const PANEL_HEIGHT: f64 = 320.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 40.0;
/// Traces are thinned to at most this many points.
const MAX_POINTS: usize = 1500;

const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

pub const TRAJECTORY_FILE: &str = "trajectories.svg";
pub const MONITOR_FILE: &str = "monitors.svg";

struct Series {
    label: String,
    color: &'static str,
    points: Vec<(f64, f64)>,
}

/// Writes the trajectory and monitor plots into `dir`.
pub fn render_plots(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let files = [(TRAJECTORY_FILE, trajectory_svg(record)?), (MONITOR_FILE, monitor_svg(record)?)];
    let mut written = Vec::new();
    for (name, svg) in files {
        let path = dir.join(name);
        std::fs::write(&path, svg).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

fn refuse_empty(record: &RunRecord) -> Result<(), CliError> {
    if record.is_empty() {
        return Err(CliError::Runtime("nothing to plot: the record has no samples".into()));
    }
    Ok(())
}

fn stride(len: usize) -> usize {
    len.div_ceil(MAX_POINTS).max(1)
}

/// One panel per coordinate, one trace per agent.
pub fn trajectory_svg(record: &RunRecord) -> Result<String, CliError> {
    refuse_empty(record)?;
    let first = &record.states[0];
    let (n, m) = (first.agent_count(), first.dim());
    let step = stride(record.len());
    let mut doc = Document::new(m);
    for k in 0..m {
        let series: Vec<Series> = (0..n)
            .map(|i| Series {
                label: format!("agent {i}"),
                color: PALETTE[i % PALETTE.len()],
                points: record
                    .times
                    .iter()
                    .zip(&record.states)
                    .step_by(step)
                    .chain(last_sample(record, step))
                    .map(|(t, s)| (*t, s.x.row(i)[k]))
                    .collect(),
            })
            .collect();
        doc.panel(k, &format!("x[i][{k}] vs t"), &series, false);
    }
    Ok(doc.finish())
}

/// V, V1, diameter and max gain against time on a log scale.
pub fn monitor_svg(record: &RunRecord) -> Result<String, CliError> {
    refuse_empty(record)?;
    if record.monitors.len() != record.len() {
        return Err(CliError::Runtime("record must be annotated before plotting monitors".into()));
    }
    let step = stride(record.len());
    let pick = |label: &str, color: &'static str, f: fn(&adaptopt::monitor::MonitorSample) -> f64| Series {
        label: label.to_string(),
        color,
        points: record.monitors.iter().step_by(step).chain(last_monitor(record, step)).map(|s| (s.t, f(s))).collect(),
    };
    let series = [
        pick("V", PALETTE[0], |s| s.v),
        pick("V1", PALETTE[1], |s| s.v1),
        pick("diameter", PALETTE[2], |s| s.diameter),
        pick("max gain", PALETTE[3], |s| s.max_gain),
    ];
    let mut doc = Document::new(1);
    doc.panel(0, "monitors vs t (log scale, positive values)", &series, true);
    Ok(doc.finish())
}

// the final sample is always drawn even when thinning skips it
fn last_sample(record: &RunRecord, step: usize) -> Option<(&f64, &adaptopt::protocol::ProtocolState)> {
    let last = record.len() - 1;
    (!last.is_multiple_of(step)).then(|| (&record.times[last], &record.states[last]))
}

fn last_monitor(record: &RunRecord, step: usize) -> Option<&adaptopt::monitor::MonitorSample> {
    let last = record.monitors.len() - 1;
    (!last.is_multiple_of(step)).then(|| &record.monitors[last])
}

struct Document {
    body: String,
}

impl Document {
    fn new(panels: usize) -> Self {
        let height = PANEL_HEIGHT * panels as f64;
        let mut body = String::new();
        let _ = writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(body, r#"<rect width="100%" height="100%" fill="white"/>"#);
        Document { body }
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }

    fn panel(&mut self, index: usize, title: &str, series: &[Series], log_y: bool) {
        let top = index as f64 * PANEL_HEIGHT + MARGIN_TOP;
        let (left, plot_w) = (MARGIN_LEFT, WIDTH - MARGIN_LEFT - MARGIN_RIGHT);
        let plot_h = PANEL_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let ty =
            |y: f64| if log_y { (y > 0.0 && y.is_finite()).then(|| y.log10()) } else { y.is_finite().then_some(y) };

        let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
        let ys = series.iter().flat_map(|s| s.points.iter().filter_map(|p| ty(p.1)));
        let (x_lo, x_hi) = padded_range(xs, 0.0);
        let (y_lo, y_hi) = padded_range(ys, 0.05);
        let sx = |x: f64| left + (x - x_lo) / (x_hi - x_lo) * plot_w;
        let sy = |y: f64| top + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;

        let b = &mut self.body;
        let _ = writeln!(b, r#"<text x="{left}" y="{:.1}" font-size="14">{}</text>"#, top - 12.0, escape(title));
        let _ = writeln!(
            b,
            r#"<rect x="{left}" y="{top:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="black"/>"#
        );
        for x in ticks(x_lo, x_hi) {
            let px = sx(x);
            let _ = writeln!(
                b,
                r##"<line x1="{px:.2}" y1="{:.1}" x2="{px:.2}" y2="{:.1}" stroke="#ddd"/><text x="{px:.2}" y="{:.1}" text-anchor="middle">{}</text>"##,
                top,
                top + plot_h,
                top + plot_h + 16.0,
                tick_label(x)
            );
        }
        let y_ticks = if log_y { decade_ticks(y_lo, y_hi) } else { ticks(y_lo, y_hi) };
        for y in y_ticks {
            let py = sy(y);
            let label = if log_y { format!("1e{}", y.round() as i64) } else { tick_label(y) };
            let _ = writeln!(
                b,
                r##"<line x1="{left}" y1="{py:.2}" x2="{:.1}" y2="{py:.2}" stroke="#ddd"/><text x="{:.1}" y="{:.2}" text-anchor="end">{label}</text>"##,
                left + plot_w,
                left - 6.0,
                py + 4.0
            );
        }
        let _ = writeln!(
            b,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">t</text>"#,
            left + plot_w / 2.0,
            top + plot_h + 32.0
        );

        for (k, s) in series.iter().enumerate() {
            // a run of drawable points becomes one polyline; gaps split it
            let mut run = String::new();
            let flush = |run: &mut String, b: &mut String| {
                if !run.is_empty() {
                    let _ = writeln!(
                        b,
                        r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
                        s.color,
                        run.trim_end()
                    );
                    run.clear();
                }
            };
            for &(x, y) in &s.points {
                match ty(y) {
                    Some(y) => {
                        let _ = write!(run, "{:.2},{:.2} ", sx(x), sy(y));
                    }
                    None => flush(&mut run, b),
                }
            }
            flush(&mut run, b);
            let ly = top + 14.0 + 16.0 * k as f64;
            let lx = left + plot_w + 12.0;
            let _ = writeln!(
                b,
                r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="2"/><text x="{:.1}" y="{ly:.1}">{}</text>"#,
                ly - 4.0,
                lx + 18.0,
                ly - 4.0,
                s.color,
                lx + 24.0,
                escape(&s.label)
            );
        }
    }
}

fn padded_range(values: impl Iterator<Item = f64>, pad: f64) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * lo.abs().max(1.0) {
        return (lo - 0.5, hi + 0.5);
    }
    let d = (hi - lo) * pad;
    (lo - d, hi + d)
}

/// Roughly five ticks at 1/2/5 multiples of a power of ten.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|f| f * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn decade_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let (first, last) = (lo.ceil() as i64, hi.floor() as i64);
    let every = ((last - first) / 8 + 1).max(1) as usize;
    (first..=last).step_by(every).map(|k| k as f64).collect()
}

fn tick_label(v: f64) -> String {
    let v = if v.abs() < 1e-12 { 0.0 } else { v };
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
