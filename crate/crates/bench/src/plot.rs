//! Minimal static SVG charts: line panels and bar panels side by side.

use std::fmt::Write as _;

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 48.0;
const TITLE_H: f64 = 28.0;
const LEGEND_ROW: f64 = 16.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Panel {
    Lines {
        title: String,
        x_label: String,
        y_label: String,
        series: Vec<Series>,
    },
    Bars {
        title: String,
        y_label: String,
        bars: Vec<(String, f64)>,
    },
}

/// Tick positions covering `[lo, hi]` with steps of 1, 2 or 5 times a power of ten.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let mut out = Vec::new();
    let mut t = (lo / step).ceil() * step;
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn label(v: f64) -> String {
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

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * hi.abs().max(1.0) {
        let pad = hi.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        self.x0 + (v - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    fn y(&self, v: f64) -> f64 {
        self.y0 + self.h - (v - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }
}

fn axes(out: &mut String, f: &Frame, title: &str, x_label: &str, y_label: &str, x_ticks: bool) {
    let (x0, y0, w, h) = (f.x0, f.y0, f.w, f.h);
    let _ = writeln!(
        out,
        r##"<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#333"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
        x0 + w / 2.0,
        y0 - 12.0,
        escape(title)
    );
    for t in ticks(f.yr.0, f.yr.1) {
        let y = f.y(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x0}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end" font-size="10">{}</text>"##,
            x0 + w,
            x0 - 4.0,
            y + 3.0,
            label(t)
        );
    }
    if x_ticks {
        for t in ticks(f.xr.0, f.xr.1) {
            let x = f.x(t);
            let _ = writeln!(
                out,
                r#"<text x="{x}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
                y0 + h + 14.0,
                label(t)
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="11">{}</text>"#,
        x0 + w / 2.0,
        y0 + h + 32.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate({},{}) rotate(-90)" text-anchor="middle" font-size="11">{}</text>"#,
        x0 - 48.0,
        y0 + h / 2.0,
        escape(y_label)
    );
}

fn lines_panel(out: &mut String, left: f64, top: f64, title: &str, x_label: &str, y_label: &str, series: &[Series]) {
    let finite = || series.iter().flat_map(|s| &s.points).filter(|p| p.0.is_finite() && p.1.is_finite());
    let xr = padded(
        finite().map(|p| p.0).fold(f64::INFINITY, f64::min),
        finite().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
    );
    let yr = padded(
        finite().map(|p| p.1).fold(f64::INFINITY, f64::min),
        finite().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
    );
    let f = Frame {
        x0: left + MARGIN_L,
        y0: top + MARGIN_T,
        w: PANEL_W - MARGIN_L - MARGIN_R,
        h: PANEL_H - MARGIN_T - MARGIN_B,
        xr,
        yr,
    };
    axes(out, &f, title, x_label, y_label, true);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", f.x(x), f.y(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = f.y0 + 6.0 + LEGEND_ROW * i as f64;
        let lx = f.x0 + f.w - 120.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-size="10">{}</text>"#,
            lx + 16.0,
            lx + 20.0,
            ly + 3.0,
            escape(&s.name)
        );
    }
}

fn bars_panel(out: &mut String, left: f64, top: f64, title: &str, y_label: &str, bars: &[(String, f64)]) {
    let hi = bars.iter().map(|b| b.1).filter(|v| v.is_finite()).fold(0.0, f64::max);
    let f = Frame {
        x0: left + MARGIN_L,
        y0: top + MARGIN_T,
        w: PANEL_W - MARGIN_L - MARGIN_R,
        h: PANEL_H - MARGIN_T - MARGIN_B,
        xr: (0.0, bars.len().max(1) as f64),
        yr: (0.0, if hi > 0.0 { hi * 1.1 } else { 1.0 }),
    };
    axes(out, &f, title, "", y_label, false);
    for (i, (name, v)) in bars.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let slot = f.w / bars.len() as f64;
        let x = f.x0 + slot * (i as f64 + 0.2);
        let cx = f.x0 + slot * (i as f64 + 0.5);
        let _ = writeln!(
            out,
            r#"<text x="{cx}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            f.y0 + f.h + 14.0,
            escape(name)
        );
        if v.is_finite() {
            let y = f.y(*v);
            let _ = writeln!(
                out,
                r#"<rect x="{x}" y="{y}" width="{}" height="{}" fill="{color}"/><text x="{cx}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
                slot * 0.6,
                f.y0 + f.h - y,
                y - 3.0,
                label(*v)
            );
        } else {
            let _ = writeln!(
                out,
                r#"<text x="{cx}" y="{}" text-anchor="middle" font-size="10">n/a</text>"#,
                f.y0 + f.h - 4.0
            );
        }
    }
}

/// Renders `panels` left to right under a common title.
pub fn render(title: &str, panels: &[Panel]) -> String {
    let width = PANEL_W * panels.len().max(1) as f64;
    let height = PANEL_H + TITLE_H;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="15" font-weight="bold">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    for (i, p) in panels.iter().enumerate() {
        let left = PANEL_W * i as f64;
        match p {
            Panel::Lines {
                title,
                x_label,
                y_label,
                series,
            } => lines_panel(&mut out, left, TITLE_H, title, x_label, y_label, series),
            Panel::Bars { title, y_label, bars } => bars_panel(&mut out, left, TITLE_H, title, y_label, bars),
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let t = ticks(0.013, 0.021);
        assert!(t.len() >= 3 && t.len() <= 7, "{t:?}");
    }

    #[test]
    fn renders_well_formed_svg() {
        let svg = render(
            "demo <1>",
            &[
                Panel::Lines {
                    title: "a".into(),
                    x_label: "x".into(),
                    y_label: "y".into(),
                    series: vec![Series {
                        name: "s".into(),
                        points: vec![(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN)],
                    }],
                },
                Panel::Bars {
                    title: "b".into(),
                    y_label: "v".into(),
                    bars: vec![("p".into(), 1.5), ("q".into(), f64::NAN)],
                },
            ],
        );
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("demo &lt;1&gt;"));
        assert!(!svg.contains("NaN"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }
}
