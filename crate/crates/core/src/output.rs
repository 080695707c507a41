//! CSV time series, JSON reports and SVG plots.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::ScenarioReport;
use crate::sim::SampleRecord;

pub const CSV_COLUMNS: [&str; 35] = [
    "t", "vin_a", "vin_b", "vin_c", "i1_a", "i1_b", "i1_c", "i2_a", "i2_b", "i2_c", "i3_a", "i3_b",
    "i3_c", "v_a", "v_b", "v_c", "v_d", "v_q", "v_0", "ibeta_d", "ibeta_q", "ibeta_0", "v_c",
    "d1_a", "d1_b", "d1_c", "d2_a", "d2_b", "d2_c", "p", "q", "pf", "f", "p_star", "v_star",
];

/// Values of one record in [`CSV_COLUMNS`] order; `None` only for an
/// undefined power factor.
pub fn csv_row(r: &SampleRecord) -> [Option<f64>; 35] {
    let mut v = vec![r.t];
    for x in [r.vin, r.i1, r.i2, r.i3, r.v] {
        v.extend(x.0);
    }
    v.extend(r.v_dq0.to_array());
    v.extend(r.ibeta_dq0.to_array());
    v.push(r.vc);
    v.extend(r.d1.0);
    v.extend(r.d2.0);
    v.extend([r.p, r.q]);
    let mut row = [None; 35];
    for (slot, x) in row.iter_mut().zip(v) {
        *slot = Some(x);
    }
    row[31] = r.pf;
    row[32] = Some(r.f);
    row[33] = Some(r.p_star);
    row[34] = Some(r.v_star);
    row
}

/// Seventeen significant digits: every f64 survives a text round trip.
fn fmt_value(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(records: &[SampleRecord], out: impl Write) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Empty("record list"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record(csv_row(r).iter().map(|v| v.map(fmt_value).unwrap_or_default()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(records: &[SampleRecord], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(records, std::io::BufWriter::new(file))
}

pub fn emit_report(report: &ScenarioReport, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    points: Vec<(f64, f64)>,
}

struct Panel<'a> {
    file: &'a str,
    title: &'a str,
    unit: &'a str,
    series: Vec<Series<'a>>,
}

fn panels(records: &[SampleRecord]) -> Vec<Panel<'static>> {
    let line = |label, color, f: &dyn Fn(&SampleRecord) -> Option<f64>| Series {
        label,
        color,
        points: records.iter().filter_map(|r| f(r).map(|y| (r.t, y))).collect(),
    };
    vec![
        Panel {
            file: "voltage_dq",
            title: "Load voltage d-axis",
            unit: "V",
            series: vec![
                line("v_d", "#1f77b4", &|r| Some(r.v_dq0.d)),
                line("v_q", "#2ca02c", &|r| Some(r.v_dq0.q)),
                line("v*", "#d62728", &|r| Some(r.v_star)),
            ],
        },
        Panel {
            file: "power_factor",
            title: "Grid power factor",
            unit: "",
            series: vec![line("pf", "#1f77b4", &|r| r.pf)],
        },
        Panel {
            file: "grid_current_dq0",
            title: "Grid current dq0",
            unit: "A",
            series: vec![
                line("i_d", "#1f77b4", &|r| Some(r.ibeta_dq0.d)),
                line("i_q", "#ff7f0e", &|r| Some(r.ibeta_dq0.q)),
                line("i_0", "#2ca02c", &|r| Some(r.ibeta_dq0.zero)),
            ],
        },
        Panel {
            file: "dc_link",
            title: "DC-link voltage",
            unit: "V",
            series: vec![line("v_C", "#1f77b4", &|r| Some(r.vc))],
        },
        Panel {
            file: "active_power",
            title: "Load active power",
            unit: "W",
            series: vec![
                line("P", "#1f77b4", &|r| Some(r.p)),
                line("P*", "#d62728", &|r| Some(r.p_star)),
            ],
        },
        Panel {
            file: "frequency",
            title: "Grid frequency",
            unit: "Hz",
            series: vec![line("f", "#1f77b4", &|r| Some(r.f))],
        },
    ]
}

/// Picks "nice" tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::EPSILON);
    let raw = span / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut out = Vec::new();
    let mut v = (lo / step).ceil() * step;
    while v <= hi + 1e-9 * span {
        out.push(v);
        v += step;
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const MAX_POINTS: usize = 4000;

fn render(panel: &Panel) -> String {
    let (w, h) = (800.0, 400.0);
    let (ml, mr, mt, mb) = (80.0, 110.0, 40.0, 50.0);
    let all = panel.series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in all.filter(|(x, y)| x.is_finite() && y.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    let pad = ((y1 - y0) * 0.05).max(1e-6 * y1.abs().max(1.0));
    y0 -= pad;
    y1 += pad;
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-size="15" text-anchor="middle">{}</text>"#,
        w / 2.0,
        escape(panel.title)
    );
    let (bx, by, bw, bh) = (ml, mt, w - ml - mr, h - mt - mb);
    let _ = writeln!(
        s,
        r#"<rect x="{bx}" y="{by}" width="{bw}" height="{bh}" fill="none" stroke="black"/>"#
    );
    for t in ticks(x0, x1, 8) {
        let x = px(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{by}" x2="{x:.2}" y2="{}" stroke="#ddd"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
            by + bh,
            by + bh + 16.0,
            fmt_tick(t)
        );
    }
    for t in ticks(y0, y1, 6) {
        let y = py(t);
        let _ = writeln!(
            s,
            r##"<line x1="{bx}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            bx + bw,
            bx - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">t (s)</text>"#,
        bx + bw / 2.0,
        h - 10.0
    );
    if !panel.unit.is_empty() {
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{}</text>"#,
            by + bh / 2.0,
            by + bh / 2.0,
            escape(panel.unit)
        );
    }
    for (k, series) in panel.series.iter().enumerate() {
        let stride = series.points.len().div_ceil(MAX_POINTS).max(1);
        let mut d = String::new();
        for (x, y) in series.points.iter().step_by(stride).filter(|(x, y)| x.is_finite() && y.is_finite()) {
            let _ = write!(d, "{:.2},{:.2} ", px(*x), py(*y));
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
            series.color,
            d.trim_end()
        );
        let ly = by + 14.0 + 18.0 * k as f64;
        let lx = bx + bw + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            series.color,
            lx + 26.0,
            ly + 4.0,
            escape(series.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.6}");
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    }
}

/// Renders every panel as an in-memory SVG document, keyed by panel name.
pub fn render_plots(records: &[SampleRecord]) -> Result<Vec<(&'static str, String)>> {
    if records.is_empty() {
        return Err(Error::Empty("record list"));
    }
    Ok(panels(records).iter().map(|p| (p.file, render(p))).collect())
}

/// Writes `<prefix>_<panel>.svg` for each panel and returns the paths.
pub fn emit_plots(records: &[SampleRecord], prefix: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let prefix = prefix.as_ref();
    let mut paths = Vec::new();
    for (name, svg) in render_plots(records)? {
        let mut file = prefix.as_os_str().to_owned();
        file.push(format!("_{name}.svg"));
        let path = PathBuf::from(file);
        std::fs::write(&path, svg)?;
        paths.push(path);
    }
    Ok(paths)
}
