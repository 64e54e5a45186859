//! Self-contained SVG charts from metrics and loss CSVs, plus a text echo.

use std::fmt::Write as _;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

/// One metrics row as written by `eval` and `ablate`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub label: String,
    pub trials: u32,
    pub successes: u32,
    pub collisions: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlotData {
    Metrics(Vec<MetricsRow>),
    Loss(Vec<(usize, f64)>),
}

const METRIC_TAIL: &str = "trials,successes,collisions,success_rate,collision_rate";

fn bad(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| bad(line, format!("column `{what}`: cannot parse `{s}`")))
}

/// Accepts `label,...`/`variant,...` metrics tables and `step,loss` curves.
pub fn parse_csv(text: &str) -> Result<PlotData> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(bad(1, "empty CSV"));
    };
    let header = header.trim();
    if header == crate::harness::LOSS_CSV_HEADER {
        let mut pts = Vec::new();
        for (i, l) in lines {
            let cols: Vec<&str> = l.split(',').collect();
            if cols.len() != 2 {
                return Err(bad(i + 1, format!("expected 2 columns, found {}", cols.len())));
            }
            let loss: f64 = field(cols[1], i + 1, "loss")?;
            if !loss.is_finite() {
                return Err(bad(i + 1, "loss must be finite"));
            }
            pts.push((field(cols[0], i + 1, "step")?, loss));
        }
        return Ok(PlotData::Loss(pts));
    }
    let metrics = [format!("label,{METRIC_TAIL}"), format!("variant,{METRIC_TAIL}")];
    if !metrics.iter().any(|h| h == header) {
        return Err(bad(
            1,
            format!("unrecognized header `{header}` (expected step,loss or label/variant,{METRIC_TAIL})"),
        ));
    }
    let mut rows = Vec::new();
    for (i, l) in lines {
        let cols: Vec<&str> = l.split(',').collect();
        if cols.len() != 6 {
            return Err(bad(i + 1, format!("expected 6 columns, found {}", cols.len())));
        }
        let row = MetricsRow {
            label: cols[0].trim().to_string(),
            trials: field(cols[1], i + 1, "trials")?,
            successes: field(cols[2], i + 1, "successes")?,
            collisions: field(cols[3], i + 1, "collisions")?,
        };
        if row.successes > row.trials || row.collisions > row.trials {
            return Err(bad(i + 1, "counts exceed trials"));
        }
        rows.push(row);
    }
    Ok(PlotData::Metrics(rows))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn rate(n: u32, d: u32) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

fn open_svg(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, y0, y1) = (MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        s,
        r##"<path d="M{x0:.1} {y1:.1} L{x0:.1} {y0:.1} L{:.1} {y0:.1}" stroke="#000000" fill="none"/>"##,
        WIDTH - MARGIN
    );
    s
}

fn bars(rows: &[MetricsRow]) -> String {
    let mut s = open_svg("success rate (collision rate hatched)");
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let slot = plot_w / rows.len().max(1) as f64;
    let bw = 0.6 * slot;
    for (i, r) in rows.iter().enumerate() {
        let x = MARGIN + slot * i as f64 + 0.2 * slot;
        let sr = rate(r.successes, r.trials);
        let cr = rate(r.collisions, r.trials);
        let h = sr * plot_h;
        let _ = writeln!(
            s,
            r##"<rect class="bar" x="{x:.2}" y="{:.2}" width="{bw:.2}" height="{h:.2}" fill="#4c72b0"/>"##,
            HEIGHT - MARGIN - h
        );
        let ch = cr * plot_h;
        let _ = writeln!(
            s,
            r##"<rect class="collision" x="{:.2}" y="{:.2}" width="{:.2}" height="{ch:.2}" fill="#c44e52" fill-opacity="0.6"/>"##,
            x + 0.7 * bw,
            HEIGHT - MARGIN - ch,
            0.3 * bw
        );
        let cx = x + bw / 2.0;
        let _ = writeln!(
            s,
            r#"<text class="label" x="{cx:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN + 16.0,
            escape(&r.label)
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle">{}/{}</text>"#,
            HEIGHT - MARGIN - h - 4.0,
            r.successes,
            r.trials
        );
    }
    s.push_str("</svg>\n");
    s
}

fn curve(pts: &[(usize, f64)]) -> String {
    let mut s = open_svg("training loss");
    let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let last = pts.iter().map(|p| p.0).max().unwrap_or(0).max(1) as f64;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let coords: Vec<String> = pts
        .iter()
        .map(|&(step, l)| {
            let x = MARGIN + plot_w * step as f64 / last;
            let y = HEIGHT - MARGIN - plot_h * (l - lo) / span;
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#4c72b0" stroke-width="1.5"/>"##,
        coords.join(" ")
    );
    if pts.is_empty() {
        s.push_str("<!-- no rows -->\n");
    } else {
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN:.1}" y="{:.1}" font-family="sans-serif" font-size="10">max {hi:.4e}</text>"#,
            MARGIN - 6.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN:.1}" y="{:.1}" font-family="sans-serif" font-size="10">min {lo:.4e}</text>"#,
            HEIGHT - MARGIN + 16.0
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn render_svg(data: &PlotData) -> String {
    match data {
        PlotData::Metrics(rows) => bars(rows),
        PlotData::Loss(pts) => curve(pts),
    }
}

/// Plain-text echo of the parsed table.
pub fn render_table(data: &PlotData) -> String {
    let mut s = String::new();
    match data {
        PlotData::Metrics(rows) => {
            let w = rows.iter().map(|r| r.label.len()).max().unwrap_or(5).max(5);
            let _ = writeln!(s, "{:<w$}  {:>6}  {:>9}  {:>10}", "label", "trials", "successes", "collisions");
            for r in rows {
                let _ = writeln!(s, "{:<w$}  {:>6}  {:>9}  {:>10}", r.label, r.trials, r.successes, r.collisions);
            }
        }
        PlotData::Loss(pts) => {
            let _ = writeln!(s, "{} loss rows", pts.len());
            if let (Some(first), Some(last)) = (pts.first(), pts.last()) {
                let _ = writeln!(s, "step {:>8}  loss {:.6e}", first.0, first.1);
                let _ = writeln!(s, "step {:>8}  loss {:.6e}", last.0, last.1);
            }
        }
    }
    s
}

/// Parses CSV text and returns `(svg, text table)`.
pub fn plot_csv(text: &str) -> Result<(String, String)> {
    let data = parse_csv(text)?;
    Ok((render_svg(&data), render_table(&data)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ABLATION: &str = "variant,trials,successes,collisions,success_rate,collision_rate\n\
full,20,15,0,0.75,0\nno-tap,20,12,1,0.6,0.05\nno-omni,20,0,0,0,0\nexpert,20,20,0,1,0\n";

    #[test]
    fn four_rows_give_four_labeled_bars() {
        let (svg, table) = plot_csv(ABLATION).unwrap();
        assert_eq!(svg.matches(r#"class="bar""#).count(), 4);
        assert_eq!(svg.matches(r#"class="label""#).count(), 4);
        for l in ["full", "no-tap", "no-omni", "expert"] {
            assert!(svg.contains(&format!(">{l}</text>")));
            assert!(table.contains(l));
        }
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(!svg.contains("href"));
    }

    #[test]
    fn loss_polyline_has_one_vertex_per_row() {
        let losses: Vec<f64> = (0..37).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        let (svg, _) = plot_csv(&crate::harness::loss_csv(&losses)).unwrap();
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 37);
    }

    #[test]
    fn output_is_deterministic() {
        assert_eq!(plot_csv(ABLATION).unwrap(), plot_csv(ABLATION).unwrap());
    }

    #[test]
    fn schema_mismatch_is_reported() {
        assert!(matches!(plot_csv("a,b\n1,2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(plot_csv("step,loss\n0,1\n1\n"), Err(Error::Parse { line: 3, .. })));
        assert!(plot_csv("").is_err());
        assert!(plot_csv("label,trials,successes,collisions,success_rate,collision_rate\nx,2,3,0,1.5,0\n").is_err());
    }

    #[test]
    fn labels_are_escaped() {
        let csv = "label,trials,successes,collisions,success_rate,collision_rate\na<b&c,1,1,0,1,0\n";
        let (svg, _) = plot_csv(csv).unwrap();
        assert!(svg.contains("a&lt;b&amp;c"));
    }
}
