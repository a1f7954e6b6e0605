use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ExplanationBundle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarGroup {
    pub label: String,
    /// Caption under the group, e.g. the object at the candidate's pixel.
    pub caption: String,
    pub bars: Vec<Bar>,
}

/// Grouped bar charts: component and overall values per candidate, and
/// signed component differences per contrasted pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartData {
    pub value_axis: String,
    pub rdx_axis: String,
    pub candidates: Vec<BarGroup>,
    pub rdx: Vec<BarGroup>,
}

/// Bar-chart data taken directly from the bundle's values.
pub fn render_chart(bundle: &ExplanationBundle) -> ChartData {
    let names = &bundle.components.names;
    let candidates = bundle
        .candidates
        .iter()
        .map(|c| {
            let mut bars: Vec<Bar> = names
                .iter()
                .zip(&c.values)
                .map(|(n, &v)| Bar {
                    name: n.clone(),
                    value: v,
                })
                .collect();
            bars.push(Bar {
                name: "overall".into(),
                value: c.overall,
            });
            BarGroup {
                label: c.label.clone(),
                caption: c.object.clone(),
                bars,
            }
        })
        .collect();
    let rdx = bundle
        .rdx
        .iter()
        .map(|r| BarGroup {
            label: format!("{} vs {}", r.pair.0, r.pair.1),
            caption: String::new(),
            bars: names
                .iter()
                .zip(&r.deltas)
                .map(|(n, &d)| Bar {
                    name: n.clone(),
                    value: d,
                })
                .collect(),
        })
        .collect();
    ChartData {
        value_axis: "weighted Q-value".into(),
        rdx_axis: "RDX (weighted Q-value difference)".into(),
        candidates,
        rdx,
    }
}

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#9c755f",
];
const OVERALL_FILL: &str = "#555555";
const BAR_W: f64 = 18.0;
const GROUP_GAP: f64 = 24.0;
const PANEL_H: f64 = 160.0;
const MARGIN: f64 = 40.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fill(name: &str, k: usize) -> &'static str {
    if name == "overall" {
        OVERALL_FILL
    } else {
        PALETTE[k % PALETTE.len()]
    }
}

struct Panel<'a> {
    id: &'a str,
    title: &'a str,
    groups: &'a [BarGroup],
}

/// Draw one panel of grouped bars; returns its width.
fn panel(out: &mut String, p: &Panel<'_>, top: f64) -> f64 {
    let max_abs = p
        .groups
        .iter()
        .flat_map(|g| g.bars.iter().map(|b| b.value.abs()))
        .fold(0.0_f64, f64::max);
    let has_negative = p.groups.iter().any(|g| g.bars.iter().any(|b| b.value < 0.0));
    let scale = if max_abs > 0.0 { PANEL_H / 2.0 / max_abs } else { 0.0 };
    let axis_y = if has_negative { top + PANEL_H / 2.0 } else { top + PANEL_H };
    let scale = if has_negative { scale } else { scale * 2.0 };

    let _ = writeln!(out, r#"<g id="{}">"#, p.id);
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="{:.2}" class="title">{}</text>"#, top - 8.0, escape(p.title));
    let mut x = MARGIN;
    for (gi, g) in p.groups.iter().enumerate() {
        let _ = writeln!(out, r#"<g id="{}-g{gi}">"#, p.id);
        let start = x;
        for (bi, b) in g.bars.iter().enumerate() {
            let h = b.value.abs() * scale;
            let y = if b.value < 0.0 { axis_y } else { axis_y - h };
            let _ = writeln!(
                out,
                r#"<rect id="{}-g{gi}-b{bi}" x="{x:.2}" y="{y:.2}" width="{BAR_W:.2}" height="{h:.2}" fill="{}" data-name="{}" data-value="{}"><title>{}: {:.3}</title></rect>"#,
                p.id,
                fill(&b.name, bi),
                escape(&b.name),
                b.value,
                escape(&b.name),
                b.value
            );
            x += BAR_W;
        }
        let mid = (start + x) / 2.0;
        let _ = writeln!(
            out,
            r#"<text x="{mid:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            top + PANEL_H + 14.0,
            escape(&g.label)
        );
        if !g.caption.is_empty() {
            let _ = writeln!(
                out,
                r#"<text x="{mid:.2}" y="{:.2}" text-anchor="middle" class="caption">{}</text>"#,
                top + PANEL_H + 26.0,
                escape(&g.caption)
            );
        }
        let _ = writeln!(out, "</g>");
        x += GROUP_GAP;
    }
    let width = x.max(MARGIN + 100.0);
    let _ = writeln!(
        out,
        r##"<line id="{}-axis" x1="{:.2}" y1="{axis_y:.2}" x2="{width:.2}" y2="{axis_y:.2}" stroke="#000"/>"##,
        p.id,
        MARGIN - 4.0
    );
    let _ = writeln!(out, "</g>");
    width
}

/// A self-contained SVG of the chart. Element order and ids depend only on
/// the data, so equal inputs give byte-identical documents.
pub fn render_svg(chart: &ChartData) -> String {
    let mut body = String::new();
    let top1 = MARGIN;
    let w1 = panel(
        &mut body,
        &Panel {
            id: "values",
            title: &chart.value_axis,
            groups: &chart.candidates,
        },
        top1,
    );
    let top2 = top1 + PANEL_H + 2.0 * MARGIN;
    let w2 = panel(
        &mut body,
        &Panel {
            id: "rdx",
            title: &chart.rdx_axis,
            groups: &chart.rdx,
        },
        top2,
    );

    let mut legend = String::new();
    let names: Vec<&str> = chart
        .candidates
        .first()
        .map(|g| g.bars.iter().map(|b| b.name.as_str()).collect())
        .unwrap_or_default();
    let legend_y = top2 + PANEL_H + 2.0 * MARGIN - 10.0;
    let _ = writeln!(legend, r#"<g id="legend">"#);
    for (k, n) in names.iter().enumerate() {
        let x = MARGIN + k as f64 * 90.0;
        let _ = writeln!(
            legend,
            r#"<rect x="{x:.2}" y="{:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{legend_y:.2}">{}</text>"#,
            legend_y - 9.0,
            fill(n, k),
            x + 14.0,
            escape(n)
        );
    }
    let _ = writeln!(legend, "</g>");

    let width = w1.max(w2) + MARGIN;
    let height = legend_y + MARGIN / 2.0;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"11\">\n<style>.title{{font-weight:bold}} .caption{{fill:#555}}</style>\n{body}{legend}</svg>\n"
    )
}
