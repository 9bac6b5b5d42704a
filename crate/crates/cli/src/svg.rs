//! Minimal SVG charts for analysis reports: an answer-step bar chart and the
//! PDM-vs-progress line chart, one series per method label.

use std::fmt::Write;

use crate::analyze::Report;

const WIDTH: f64 = 720.0;
const PANEL: f64 = 300.0;
const MARGIN: f64 = 48.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Panel {
    top: f64,
}

impl Panel {
    fn x(&self, frac: f64) -> f64 {
        MARGIN + frac * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, frac: f64) -> f64 {
        self.top + PANEL - MARGIN - frac * (PANEL - 2.0 * MARGIN)
    }

    fn axes(&self, out: &mut String, title: &str, x_label: &str, y_label: &str) {
        let (x0, x1, y0, y1) = (self.x(0.0), self.x(1.0), self.y(0.0), self.y(1.0));
        let _ = write!(
            out,
            r##"<text x="{}" y="{}" font-size="14" text-anchor="middle">{title}</text>
<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#000"/>
<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#000"/>
<text x="{}" y="{}" font-size="11" text-anchor="middle">{x_label}</text>
<text x="12" y="{}" font-size="11" transform="rotate(-90 12 {})" text-anchor="middle">{y_label}</text>
"##,
            WIDTH / 2.0,
            self.top + 20.0,
            (x0 + x1) / 2.0,
            y0 + 32.0,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
        );
    }

    fn tick_x(&self, out: &mut String, frac: f64, label: &str) {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{label}</text>"#,
            self.x(frac),
            self.y(0.0) + 14.0
        );
    }

    fn tick_y(&self, out: &mut String, frac: f64, label: &str) {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{label}</text>"#,
            self.x(0.0) - 4.0,
            self.y(frac) + 3.0
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn legend(out: &mut String, labels: &[&str]) {
    for (i, label) in labels.iter().enumerate() {
        let y = 40.0 + 14.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}" font-size="11">{}</text>"#,
            WIDTH - 200.0,
            y - 9.0,
            WIDTH - 186.0,
            y,
            escape(label)
        );
    }
}

fn histogram(out: &mut String, report: &Report) {
    let panel = Panel { top: 0.0 };
    panel.axes(out, "Answer step", "step", "traces");
    let steps = report.groups.iter().map(|g| g.steps).max().unwrap_or(0).max(1);
    let peak = report
        .groups
        .iter()
        .flat_map(|g| g.answer_histogram.bins.values().copied())
        .max()
        .unwrap_or(0)
        .max(1);
    let series = report.groups.len().max(1) as f64;
    let slot = 1.0 / steps as f64;
    for (i, g) in report.groups.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for (&step, &count) in &g.answer_histogram.bins {
            let left = (step as f64 - 1.0) * slot + slot * (0.1 + 0.8 * i as f64 / series);
            let (x0, x1) = (panel.x(left), panel.x(left + slot * 0.8 / series));
            let (y0, y1) = (panel.y(0.0), panel.y(count as f64 / peak as f64));
            let _ = writeln!(
                out,
                r#"<rect x="{x0:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}" fill="{color}"/>"#,
                (x1 - x0).max(0.5),
                y0 - y1
            );
        }
    }
    let every = steps.div_ceil(16);
    for step in (1..=steps).filter(|s| (s - 1) % every == 0) {
        panel.tick_x(out, (step as f64 - 0.5) * slot, &step.to_string());
    }
    panel.tick_y(out, 0.0, "0");
    panel.tick_y(out, 1.0, &peak.to_string());
}

fn curves(out: &mut String, report: &Report) {
    let panel = Panel { top: PANEL };
    panel.axes(out, "PDM by relative step", "i / K", "mean PDM");
    for (i, g) in report.groups.iter().enumerate() {
        if g.pdm_curve.is_empty() {
            continue;
        }
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = g
            .pdm_curve
            .iter()
            .map(|p| format!("{:.1},{:.1}", panel.x(p.relative_step), panel.y(p.mean_pdm.clamp(0.0, 1.0))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            points.join(" ")
        );
    }
    for f in [0.0, 0.5, 1.0] {
        panel.tick_x(out, f, &f.to_string());
        panel.tick_y(out, f, &f.to_string());
    }
}

pub fn render(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{}" font-family="sans-serif">"#,
        2.0 * PANEL
    );
    histogram(&mut out, report);
    curves(&mut out, report);
    let labels: Vec<&str> = report.groups.iter().map(|g| g.label.as_str()).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyze::{build_report, GroupReport};
    use dift_core::instrument::{AnswerHistogram, CurvePoint};

    #[test]
    fn renders_bars_and_lines() {
        let mut hist = AnswerHistogram::default();
        hist.record(Some(2));
        hist.record(Some(2));
        hist.record(None);
        let mut report = build_report(Vec::new(), 4);
        report.groups.push(GroupReport {
            label: "a<b".into(),
            traces: 3,
            complete: 3,
            steps: 4,
            mean_answer_step: hist.mean_step(),
            answer_histogram: hist,
            mean_oracle_calls: 8.0,
            pdm_curve: vec![
                CurvePoint { relative_step: 0.125, mean_pdm: 0.2, count: 2 },
                CurvePoint { relative_step: 0.875, mean_pdm: 0.1, count: 2 },
            ],
        });
        let svg = render(&report);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("a&lt;b"));
    }

    #[test]
    fn empty_report_is_valid_svg() {
        let svg = render(&build_report(Vec::new(), 16));
        assert!(svg.contains("</svg>"));
        assert!(!svg.contains("<polyline"));
    }
}
