//! Metrics traces, their CSV form, and SVG comparison charts.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "iteration,wall_seconds,rho,heldout_ll_per_token";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub iteration: u64,
    pub wall_seconds: f64,
    pub rho: f64,
    /// Held-out log likelihood, nats per token.
    pub heldout_ll_per_token: f64,
}

/// Evaluations recorded during a run, ordered by iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsTrace {
    rows: Vec<MetricsRow>,
}

impl MetricsTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    /// Appends a row; iterations must strictly increase and wall time must not
    /// go backwards.
    pub fn push(&mut self, row: MetricsRow) -> Result<()> {
        if let Some(prev) = self.rows.last() {
            if row.iteration <= prev.iteration {
                return Err(Error::InvalidState(format!(
                    "metrics iteration {} does not follow {}",
                    row.iteration, prev.iteration
                )));
            }
            if row.wall_seconds < prev.wall_seconds {
                return Err(Error::InvalidState("metrics wall time went backwards".into()));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Drops rows recorded after `iteration`.
    pub fn truncate_after(&mut self, iteration: u64) {
        self.rows.retain(|r| r.iteration <= iteration);
    }

    /// Mean held-out likelihood over rows within the last `window` iterations
    /// of the trace.
    pub fn trailing_mean(&self, window: u64) -> Option<f64> {
        let last = self.rows.last()?.iteration;
        let cutoff = last.saturating_sub(window);
        let tail: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.iteration > cutoff || r.iteration == last)
            .map(|r| r.heldout_ll_per_token)
            .collect();
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(METRICS_HEADER);
        out.push('\n');
        for r in &self.rows {
            // Display for f64 is the shortest representation that parses back exactly.
            let _ = writeln!(out, "{},{},{},{}", r.iteration, r.wall_seconds, r.rho, r.heldout_ll_per_token);
        }
        out
    }

    pub fn parse_csv(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == METRICS_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: 1,
                    reason: format!("expected header `{METRICS_HEADER}`"),
                })
            }
        }
        let mut trace = MetricsTrace::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| Error::Parse {
                path: path.into(),
                line: i + 1,
                reason,
            };
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 4 {
                return Err(bad(format!("expected 4 fields, found {}", fields.len())));
            }
            let float = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
            let row = MetricsRow {
                iteration: fields[0].parse().map_err(|e| bad(format!("`{}`: {e}", fields[0])))?,
                wall_seconds: float(fields[1])?,
                rho: float(fields[2])?,
                heldout_ll_per_token: float(fields[3])?,
            };
            trace.push(row).map_err(|e| bad(e.to_string()))?;
        }
        Ok(trace)
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Writes the trace as CSV.
pub fn emit_metrics(trace: &MetricsTrace, path: &Path) -> Result<()> {
    write_atomic(path, trace.to_csv().as_bytes())
}

pub fn read_metrics(path: &Path) -> Result<MetricsTrace> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MetricsTrace::parse_csv(&text, path)
}

/// Data bounds of all traces, each axis padded by 5% of its span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    let span = if span > 0.0 { span } else { hi.abs().max(1.0) };
    (lo - 0.05 * span, hi + 0.05 * span)
}

pub fn plot_bounds(traces: &[(String, MetricsTrace)]) -> Option<PlotBounds> {
    let points = traces
        .iter()
        .flat_map(|(_, t)| t.rows())
        .map(|r| (r.iteration as f64, r.heldout_ll_per_token))
        .filter(|(_, y)| y.is_finite());
    let mut bounds: Option<(f64, f64, f64, f64)> = None;
    for (x, y) in points {
        bounds = Some(match bounds {
            None => (x, x, y, y),
            Some((a, b, c, d)) => (a.min(x), b.max(x), c.min(y), d.max(y)),
        });
    }
    let (x0, x1, y0, y1) = bounds?;
    let (x_min, x_max) = padded(x0, x1);
    let (y_min, y_max) = padded(y0, y1);
    Some(PlotBounds {
        x_min,
        x_max,
        y_min,
        y_max,
    })
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Renders one polyline per named trace, iteration on x and held-out
/// log likelihood on y.
pub fn render_svg(traces: &[(String, MetricsTrace)]) -> Result<String> {
    if traces.is_empty() {
        return Err(Error::EmptyData("no traces to plot".into()));
    }
    let bounds = plot_bounds(traces).unwrap_or(PlotBounds {
        x_min: 0.0,
        x_max: 1.0,
        y_min: 0.0,
        y_max: 1.0,
    });
    let (width, height) = (820.0, 480.0);
    let (left, right, top, bottom) = (80.0, 200.0, 30.0, 60.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;
    let sx = |x: f64| left + (x - bounds.x_min) / (bounds.x_max - bounds.x_min) * plot_w;
    let sy = |y: f64| top + (bounds.y_max - y) / (bounds.y_max - bounds.y_min) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = bounds.x_min + f * (bounds.x_max - bounds.x_min);
        let yv = bounds.y_min + f * (bounds.y_max - bounds.y_min);
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#444"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{xv:.0}</text>"##,
            top + plot_h,
            top + plot_h + 5.0,
            top + plot_h + 20.0
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{left}" y2="{py:.2}" stroke="#444"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3}</text>"##,
            left - 5.0,
            left - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration</text>"#,
        left + plot_w / 2.0,
        height - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">held-out log likelihood (nats/token)</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );

    for (i, (name, trace)) in traces.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = trace
            .rows()
            .iter()
            .filter(|r| r.heldout_ll_per_token.is_finite())
            .map(|r| format!("{:.2},{:.2}", sx(r.iteration as f64), sy(r.heldout_ll_per_token)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = top + 15.0 + 20.0 * i as f64;
        let lx = left + plot_w + 15.0;
        let _ = writeln!(
            svg,
            r#"<g class="legend"><line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            xml_escape(name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes the comparison chart for the named traces.
pub fn emit_plot(traces: &[(String, MetricsTrace)], path: &Path) -> Result<()> {
    let svg = render_svg(traces)?;
    write_atomic(path, svg.as_bytes())
}
