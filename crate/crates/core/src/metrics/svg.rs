//! Minimal SVG emission for report figures. Output is plain, well-formed
//! XML with no external dependencies.

const COLORS: [&str; 6] = [
    "#4878d0", "#ee854a", "#6acc64", "#d65f5f", "#956cb4", "#8c613c",
];

pub struct BarPanel {
    pub title: String,
    pub labels: Vec<String>,
    pub series: Vec<(String, Vec<f64>)>,
}

pub struct LinePanel {
    pub title: String,
    /// Named polylines of (x, y) points.
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 240.0;
const MARGIN: f64 = 40.0;

/// One SVG document with one bar panel stacked per entry. An empty slice
/// yields a small valid placeholder document.
pub fn bar_chart(panels: &[BarPanel]) -> String {
    render(panels.len(), |doc, idx, y0| {
        let panel = &panels[idx];
        doc.push_str(&format!(
            "<text x=\"{MARGIN}\" y=\"{}\" font-size=\"14\" font-family=\"sans-serif\">{}</text>\n",
            y0 + 16.0,
            escape(&panel.title)
        ));
        let max = panel
            .series
            .iter()
            .flat_map(|(_, v)| v.iter())
            .fold(1e-12f64, |m, &v| m.max(v.abs()));
        let plot_h = PANEL_H - 70.0;
        let base_y = y0 + 30.0 + plot_h;
        let groups = panel.labels.len().max(1) as f64;
        let group_w = (PANEL_W - 2.0 * MARGIN) / groups;
        let bar_w = (group_w * 0.8) / panel.series.len().max(1) as f64;
        for (g, label) in panel.labels.iter().enumerate() {
            let gx = MARGIN + g as f64 * group_w;
            for (s, (_, values)) in panel.series.iter().enumerate() {
                let v = values.get(g).copied().unwrap_or(0.0);
                let h = (v.abs() / max * plot_h).min(plot_h);
                doc.push_str(&format!(
                    "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>\n",
                    gx + group_w * 0.1 + s as f64 * bar_w,
                    base_y - h,
                    bar_w.max(1.0),
                    h,
                    COLORS[s % COLORS.len()]
                ));
            }
            doc.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"middle\">{}</text>\n",
                gx + group_w / 2.0,
                base_y + 16.0,
                escape(label)
            ));
        }
        legend(doc, panel.series.iter().map(|(n, _)| n.as_str()), y0);
        doc.push_str(&format!(
            "<line x1=\"{MARGIN}\" y1=\"{base_y:.2}\" x2=\"{:.2}\" y2=\"{base_y:.2}\" stroke=\"#333\"/>\n",
            PANEL_W - MARGIN
        ));
    })
}

/// One SVG document with one line panel stacked per entry.
pub fn line_chart(panels: &[LinePanel]) -> String {
    render(panels.len(), |doc, idx, y0| {
        let panel = &panels[idx];
        doc.push_str(&format!(
            "<text x=\"{MARGIN}\" y=\"{}\" font-size=\"14\" font-family=\"sans-serif\">{}</text>\n",
            y0 + 16.0,
            escape(&panel.title)
        ));
        let xs: Vec<f64> = panel
            .series
            .iter()
            .flat_map(|(_, pts)| pts.iter().map(|p| p.0))
            .collect();
        let ys: Vec<f64> = panel
            .series
            .iter()
            .flat_map(|(_, pts)| pts.iter().map(|p| p.1))
            .collect();
        let (x_max, y_max) = (
            xs.iter().fold(1e-12f64, |m, &v| m.max(v)),
            ys.iter().fold(1e-12f64, |m, &v| m.max(v)),
        );
        let plot_h = PANEL_H - 70.0;
        let plot_w = PANEL_W - 2.0 * MARGIN;
        let base_y = y0 + 30.0 + plot_h;
        for (s, (_, points)) in panel.series.iter().enumerate() {
            if points.is_empty() {
                continue;
            }
            let path: Vec<String> = points
                .iter()
                .map(|&(x, y)| {
                    format!(
                        "{:.2},{:.2}",
                        MARGIN + x / x_max * plot_w,
                        base_y - y / y_max * plot_h
                    )
                })
                .collect();
            doc.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
                path.join(" "),
                COLORS[s % COLORS.len()]
            ));
        }
        legend(doc, panel.series.iter().map(|(n, _)| n.as_str()), y0);
        doc.push_str(&format!(
            "<line x1=\"{MARGIN}\" y1=\"{base_y:.2}\" x2=\"{:.2}\" y2=\"{base_y:.2}\" stroke=\"#333\"/>\n",
            PANEL_W - MARGIN
        ));
    })
}

fn legend<'a>(doc: &mut String, names: impl Iterator<Item = &'a str>, y0: f64) {
    for (i, name) in names.enumerate() {
        let x = PANEL_W - MARGIN - 140.0 + (i % 2) as f64 * 70.0;
        let y = y0 + 12.0 + (i / 2) as f64 * 14.0;
        doc.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n",
            y - 9.0,
            COLORS[i % COLORS.len()]
        ));
        doc.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{y:.2}\" font-size=\"11\" font-family=\"sans-serif\">{}</text>\n",
            x + 14.0,
            escape(name)
        ));
    }
}

fn render(count: usize, mut panel: impl FnMut(&mut String, usize, f64)) -> String {
    let height = if count == 0 {
        60.0
    } else {
        count as f64 * PANEL_H
    };
    let mut doc = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PANEL_W}\" height=\"{height}\" viewBox=\"0 0 {PANEL_W} {height}\">\n"
    );
    if count == 0 {
        doc.push_str(&format!(
            "<text x=\"{MARGIN}\" y=\"32\" font-size=\"14\" font-family=\"sans-serif\">no data</text>\n"
        ));
    }
    for idx in 0..count {
        panel(&mut doc, idx, idx as f64 * PANEL_H);
    }
    doc.push_str("</svg>\n");
    doc
}

#[cfg(test)]
pub(crate) fn assert_well_formed(svg: &str) {
    // Tiny structural check over our own generator: every tag closes.
    let mut stack: Vec<String> = Vec::new();
    let mut rest = svg;
    while let Some(start) = rest.find('<') {
        let end = start + rest[start..].find('>').expect("unclosed tag");
        let tag = &rest[start + 1..end];
        rest = &rest[end + 1..];
        if tag.starts_with('?') || tag.starts_with('!') || tag.ends_with('/') {
            continue;
        }
        if let Some(name) = tag.strip_prefix('/') {
            assert_eq!(stack.pop().as_deref(), Some(name), "mismatched </{name}>");
        } else {
            stack.push(tag.split_whitespace().next().unwrap().to_string());
        }
    }
    assert!(stack.is_empty(), "unclosed tags: {stack:?}");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bar_chart_is_well_formed_xml() {
        let panels = vec![BarPanel {
            title: "S & <ST> \"quoted\"".into(),
            labels: vec!["x1".into(), "x2".into()],
            series: vec![
                ("S".into(), vec![0.3, 0.7]),
                ("ST".into(), vec![0.35, 0.72]),
            ],
        }];
        let doc = bar_chart(&panels);
        assert!(doc.starts_with("<?xml"));
        assert_well_formed(&doc);
        assert!(doc.contains("&lt;ST&gt;"));
    }

    #[test]
    fn empty_chart_is_still_valid() {
        let doc = line_chart(&[]);
        assert_well_formed(&doc);
        assert!(doc.contains("no data"));
    }
}
