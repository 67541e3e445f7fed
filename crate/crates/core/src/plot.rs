//! Dependency-free SVG line plots.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("malformed csv: {0}")]
    Csv(String),
    #[error("nothing to plot: {0}")]
    Empty(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-2..1e5).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

struct Axis {
    log: bool,
    lo: f64,
    hi: f64,
}

impl Axis {
    fn new(log: bool, values: impl Iterator<Item = f64>) -> Option<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let t = if log { v.log10() } else { v };
            if t.is_finite() {
                lo = lo.min(t);
                hi = hi.max(t);
            }
        }
        if !lo.is_finite() {
            return None;
        }
        if hi - lo < 1e-12 {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            lo -= pad;
            hi += pad;
        }
        Some(Self { log, lo, hi })
    }

    fn transform(&self, v: f64) -> f64 {
        let t = if self.log { v.log10() } else { v };
        (t - self.lo) / (self.hi - self.lo)
    }

    /// Tick positions in data units.
    fn ticks(&self) -> Vec<f64> {
        if self.log && self.hi.floor() - self.lo.ceil() >= 1.0 {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            let every = ((b - a) / 8 + 1).max(1);
            return (a..=b)
                .step_by(every as usize)
                .map(|e| 10f64.powi(e))
                .collect();
        }
        (0..=4)
            .map(|i| {
                let t = self.lo + (self.hi - self.lo) * i as f64 / 4.0;
                if self.log {
                    10f64.powf(t)
                } else {
                    t
                }
            })
            .collect()
    }
}

impl LinePlot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: false,
            log_y: false,
            series: Vec::new(),
        }
    }

    pub fn log_log(mut self) -> Self {
        self.log_x = true;
        self.log_y = true;
        self
    }

    pub fn with_series(mut self, name: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series {
            name: name.into(),
            points,
        });
        self
    }

    /// Renders the plot. Non-finite points, and non-positive points on log
    /// axes, split a series into separate polylines.
    pub fn to_svg(&self) -> Result<String, PlotError> {
        let all = || self.series.iter().flat_map(|s| s.points.iter());
        let ok = |&(x, y): &(f64, f64)| {
            x.is_finite() && y.is_finite() && (!self.log_x || x > 0.0) && (!self.log_y || y > 0.0)
        };
        let xa = Axis::new(self.log_x, all().filter(|p| ok(p)).map(|p| p.0))
            .ok_or_else(|| PlotError::Empty(self.title.clone()))?;
        let ya = Axis::new(self.log_y, all().filter(|p| ok(p)).map(|p| p.1))
            .ok_or_else(|| PlotError::Empty(self.title.clone()))?;
        let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        let px = |x: f64| LEFT + xa.transform(x) * pw;
        let py = |y: f64| TOP + (1.0 - ya.transform(y)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(
            s,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for t in xa.ticks() {
            let x = px(t);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                TOP + ph,
                TOP + ph + 18.0,
                fmt_num(t)
            );
        }
        for t in ya.ticks() {
            let y = py(t);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                y + 4.0,
                fmt_num(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, ser) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let mut segment: Vec<String> = Vec::new();
            let flush = |segment: &mut Vec<String>, s: &mut String| {
                if !segment.is_empty() {
                    let _ = writeln!(
                        s,
                        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                        segment.join(" ")
                    );
                    segment.clear();
                }
            };
            for p in &ser.points {
                if ok(p) {
                    segment.push(format!("{:.2},{:.2}", px(p.0), py(p.1)));
                } else {
                    flush(&mut segment, &mut s);
                }
            }
            flush(&mut segment, &mut s);
            let ly = TOP + 14.0 + 18.0 * i as f64;
            let lx = LEFT + pw + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                lx + 20.0,
                lx + 26.0,
                ly + 4.0,
                escape(&ser.name)
            );
        }
        s.push_str("</svg>\n");
        Ok(s)
    }
}

/// Header and rows of a comma-separated table with a single header line.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>), PlotError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| PlotError::Csv("missing header".into()))?
        .split(',')
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
        if row.len() != header.len() {
            return Err(PlotError::Csv(format!(
                "row {} has {} fields, header has {}",
                i + 1,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(PlotError::Csv("no data rows".into()));
    }
    Ok((header, rows))
}

fn number(cell: &str, row: usize) -> Result<f64, PlotError> {
    cell.parse::<f64>()
        .map_err(|_| PlotError::Csv(format!("row {row}: '{cell}' is not a number")))
}

/// Builds a plot from a CSV table.
///
/// A `method,K,...,best_ns` table becomes a log-log plot with one series per
/// method. Any other table is wide: column 0 is x and every further column
/// is a series.
pub fn plot_from_csv(text: &str, title: &str) -> Result<LinePlot, PlotError> {
    let (header, rows) = parse_csv(text)?;
    let col = |name: &str| header.iter().position(|h| h == name);
    if let (Some(m), Some(k), Some(t)) = (col("method"), col("K"), col("best_ns")) {
        let mut plot = LinePlot::new(title, "K", "best one-step time [ns]").log_log();
        for (i, row) in rows.iter().enumerate() {
            let point = (number(&row[k], i + 1)?, number(&row[t], i + 1)?);
            match plot.series.iter_mut().find(|s| s.name == row[m]) {
                Some(s) => s.points.push(point),
                None => plot.series.push(Series {
                    name: row[m].clone(),
                    points: vec![point],
                }),
            }
        }
        return Ok(plot);
    }
    if header.len() < 2 {
        return Err(PlotError::Csv(
            "need an x column and at least one series".into(),
        ));
    }
    let mut plot = LinePlot::new(title, &header[0], "value");
    for (j, name) in header.iter().enumerate().skip(1) {
        let points = rows
            .iter()
            .enumerate()
            .map(|(i, r)| Ok((number(&r[0], i + 1)?, number(&r[j], i + 1)?)))
            .collect::<Result<Vec<_>, PlotError>>()?;
        plot.series.push(Series {
            name: name.clone(),
            points,
        });
    }
    Ok(plot)
}
