//! Hand-written SVG box plots and line charts from result CSVs.
//!
//! Output depends only on the input table, so identical CSVs give identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("row {row}, column '{column}': cannot parse '{value}' as a number")]
    NotNumeric { row: usize, column: String, value: String },
    #[error("no numeric values in column '{0}'")]
    Empty(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotKind {
    Boxplot,
    Line,
}

/// A CSV held as strings.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn from_reader(r: impl std::io::Read) -> Result<Self, PlotError> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.iter().map(String::from).collect();
        let rows = rdr
            .records()
            .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Self { headers, rows })
    }

    pub fn from_path(path: &Path) -> Result<Self, PlotError> {
        Self::from_reader(std::fs::File::open(path).map_err(csv::Error::from)?)
    }

    pub fn column(&self, name: &str) -> Result<usize, PlotError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PlotError::MissingColumn(name.to_string()))
    }

    pub fn has(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    /// `(label, value)` pairs, skipping empty cells.
    fn pairs(&self, label: usize, value: usize) -> Result<Vec<(String, f64)>, PlotError> {
        let mut out = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            let cell = row.get(value).map(String::as_str).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            let v = cell.parse::<f64>().map_err(|_| PlotError::NotNumeric {
                row: i + 1,
                column: self.headers[value].clone(),
                value: cell.to_string(),
            })?;
            out.push((row.get(label).cloned().unwrap_or_default(), v));
        }
        if out.is_empty() {
            return Err(PlotError::Empty(self.headers[value].clone()));
        }
        Ok(out)
    }
}

/// Five-number summary with Tukey whiskers.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Linear-interpolation quartiles; whiskers reach the most extreme values
/// within 1.5 IQR of the box.
pub fn box_stats(values: &[f64]) -> BoxStats {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| *x >= lo_fence && *x <= hi_fence).collect();
    BoxStats {
        q1,
        median,
        q3,
        whisker_lo: inside.first().copied().unwrap_or(q1),
        whisker_hi: inside.last().copied().unwrap_or(q3),
        outliers: v.into_iter().filter(|x| *x < lo_fence || *x > hi_fence).collect(),
    }
}

fn num(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

struct Scale {
    lo: f64,
    hi: f64,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if hi - lo <= 0.0 {
            let pad = if lo == 0.0 { 0.5 } else { lo.abs() * 0.1 };
            lo -= pad;
            hi += pad;
        } else {
            let pad = 0.05 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Self { lo, hi }
    }

    fn y(&self, v: f64) -> f64 {
        TOP + (H - TOP - BOTTOM) * (self.hi - v) / (self.hi - self.lo)
    }
}

fn frame(out: &mut String, title: &str, x_label: &str, y_label: &str, scale: &Scale) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="12">"#,
        num(W),
        num(H),
        num(W),
        num(H)
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#, num(W), num(H));
    let _ = writeln!(out, r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#, num(W / 2.0), escape(title));
    let (x0, y0, y1) = (LEFT, H - BOTTOM, TOP);
    let _ = writeln!(
        out,
        r#"<line class="axis" x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        num(x0),
        num(y0),
        num(W - RIGHT),
        num(y0)
    );
    let _ = writeln!(
        out,
        r#"<line class="axis" x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        num(x0),
        num(y0),
        num(x0),
        num(y1)
    );
    for k in 0..=4 {
        let v = scale.lo + (scale.hi - scale.lo) * k as f64 / 4.0;
        let y = scale.y(v);
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/><text x="{}" y="{}" text-anchor="end">{}</text>"#,
            num(x0 - 5.0),
            num(y),
            num(x0),
            num(y),
            num(x0 - 8.0),
            num(y + 4.0),
            format!("{v:.4}")
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        num((LEFT + W - RIGHT) / 2.0),
        num(H - 10.0),
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        num((TOP + H - BOTTOM) / 2.0),
        num((TOP + H - BOTTOM) / 2.0),
        escape(y_label)
    );
}

/// Groups in order of first appearance.
fn grouped(pairs: Vec<(String, f64)>) -> Vec<(String, Vec<f64>)> {
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    for (k, v) in pairs {
        match out.iter_mut().find(|(g, _)| *g == k) {
            Some((_, vals)) => vals.push(v),
            None => out.push((k, vec![v])),
        }
    }
    out
}

/// One box per value of `group`, summarising `value`.
pub fn boxplot_svg(table: &Table, group: &str, value: &str) -> Result<String, PlotError> {
    let g = table.column(group)?;
    let v = table.column(value)?;
    let groups: Vec<(String, BoxStats)> = grouped(table.pairs(g, v)?)
        .into_iter()
        .map(|(k, vals)| (k, box_stats(&vals)))
        .collect();
    let scale = Scale::new(groups.iter().flat_map(|(_, b)| {
        [b.whisker_lo, b.whisker_hi].into_iter().chain(b.outliers.iter().copied())
    }));
    let mut out = String::new();
    frame(&mut out, &format!("{value} by {group}"), group, value, &scale);
    let slot = (W - LEFT - RIGHT) / groups.len() as f64;
    let half = (slot * 0.3).min(40.0);
    for (k, (label, b)) in groups.iter().enumerate() {
        let cx = LEFT + slot * (k as f64 + 0.5);
        let _ = writeln!(
            out,
            r#"<g class="box" data-group="{}" data-median="{}" data-q1="{}" data-q3="{}">"#,
            escape(label),
            num(b.median),
            num(b.q1),
            num(b.q3)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
            num(cx),
            num(scale.y(b.whisker_lo)),
            num(cx),
            num(scale.y(b.whisker_hi))
        );
        for w in [b.whisker_lo, b.whisker_hi] {
            let _ = writeln!(
                out,
                r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
                num(cx - half / 2.0),
                num(scale.y(w)),
                num(cx + half / 2.0),
                num(scale.y(w))
            );
        }
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="lightsteelblue" stroke="black"/>"#,
            num(cx - half),
            num(scale.y(b.q3)),
            num(2.0 * half),
            num(scale.y(b.q1) - scale.y(b.q3))
        );
        let _ = writeln!(
            out,
            r#"<line class="median" x1="{}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-width="2"/>"#,
            num(cx - half),
            num(scale.y(b.median)),
            num(cx + half),
            num(scale.y(b.median))
        );
        for o in &b.outliers {
            let _ = writeln!(out, r#"<circle cx="{}" cy="{}" r="3" fill="none" stroke="black"/>"#, num(cx), num(scale.y(*o)));
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            num(cx),
            num(H - BOTTOM + 16.0),
            escape(label)
        );
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Median of `y` at each distinct numeric `x`, one polyline per value of
/// `series` (or a single line).
pub fn line_svg(table: &Table, x: &str, y: &str, series: Option<&str>) -> Result<String, PlotError> {
    let xi = table.column(x)?;
    let yi = table.column(y)?;
    let si = series.map(|s| table.column(s)).transpose()?;
    let xs = table.pairs(yi, xi)?;
    let ys = table.pairs(xi, yi)?;
    if xs.len() != ys.len() {
        return Err(PlotError::Empty(y.to_string()));
    }
    let labels: Vec<String> = table
        .rows
        .iter()
        .filter(|r| !r[xi].is_empty() && !r[yi].is_empty())
        .map(|r| si.map(|s| r[s].clone()).unwrap_or_default())
        .collect();
    let mut lines: Vec<(String, BTreeMap<u64, (f64, Vec<f64>)>)> = Vec::new();
    for ((label, (_, xv)), (_, yv)) in labels.into_iter().zip(xs).zip(ys) {
        let idx = match lines.iter().position(|(l, _)| *l == label) {
            Some(i) => i,
            None => {
                lines.push((label, BTreeMap::new()));
                lines.len() - 1
            }
        };
        // order keys by value: map the float to a monotone integer key
        let key = {
            let b = xv.to_bits();
            if xv.is_sign_negative() { !b } else { b | (1 << 63) }
        };
        lines[idx].1.entry(key).or_insert((xv, Vec::new())).1.push(yv);
    }
    let points: Vec<(String, Vec<(f64, f64)>)> = lines
        .into_iter()
        .map(|(l, m)| (l, m.into_values().map(|(xv, ys)| (xv, box_stats(&ys).median)).collect()))
        .collect();
    let yscale = Scale::new(points.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)));
    let xscale = Scale::new(points.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)));
    let px = |v: f64| LEFT + (W - LEFT - RIGHT) * (v - xscale.lo) / (xscale.hi - xscale.lo);
    let mut out = String::new();
    frame(&mut out, &format!("median {y} vs {x}"), x, y, &yscale);
    const COLORS: [&str; 6] = ["steelblue", "darkorange", "seagreen", "firebrick", "purple", "gray"];
    for (k, (label, pts)) in points.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|(a, b)| format!("{},{}", num(px(*a)), num(yscale.y(*b)))).collect();
        let _ = writeln!(
            out,
            r#"<polyline class="series" data-series="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            escape(label),
            path.join(" ")
        );
        for (a, b) in pts {
            let _ = writeln!(
                out,
                r#"<circle cx="{}" cy="{}" r="3" fill="{color}" data-x="{}" data-y="{}"/>"#,
                num(px(*a)),
                num(yscale.y(*b)),
                num(*a),
                num(*b)
            );
        }
    }
    for (k, (a, _)) in points.iter().flat_map(|(_, p)| p.iter()).enumerate().filter(|(k, _)| *k < 12) {
        let _ = k;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            num(px(*a)),
            num(H - BOTTOM + 16.0),
            num(*a)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Picks default columns for `kind` and renders the table.
pub fn render(table: &Table, kind: PlotKind, group: Option<&str>, value: Option<&str>) -> Result<String, PlotError> {
    let default_group = if table.has("sweep_value") { "sweep_value" } else { "method" };
    let value = value.unwrap_or("w1");
    match kind {
        PlotKind::Boxplot => boxplot_svg(table, group.unwrap_or(default_group), value),
        PlotKind::Line => line_svg(table, group.unwrap_or("sweep_value"), value, None),
    }
}
