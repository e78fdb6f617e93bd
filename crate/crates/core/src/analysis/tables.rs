//! Tabular and graphical renderings of analysis results.
//!
//! Rows are ordered by parameter name; numbers are printed with Rust's
//! shortest round-trip formatting, so CSV values parse back bit-exact.

use std::fmt::Write as _;

use super::{LocalSensitivityResult, MomentResult, SobolResult};
use crate::metrics::svg;

/// Human-readable Sobol table, one block per output.
pub fn render_sobol_table(result: &SobolResult) -> String {
    let mut out = String::new();
    for output in &result.outputs {
        let _ = writeln!(
            out,
            "output {}  (variance {:.6}, N {})",
            output.output, output.variance, result.base_count
        );
        if output.zero_variance {
            let _ = writeln!(out, "  zero output variance: indices undefined");
            continue;
        }
        let _ = writeln!(
            out,
            "  {:<16} {:>10} {:>10} {:>10} {:>10}",
            "parameter", "S", "±95%", "ST", "±95%"
        );
        let mut params = output.params.clone();
        params.sort_by(|a, b| a.name.cmp(&b.name));
        for p in params {
            let _ = writeln!(
                out,
                "  {:<16} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                p.name, p.s_first, p.s_first_ci, p.s_total, p.s_total_ci
            );
        }
    }
    out
}

pub fn sobol_csv(result: &SobolResult) -> String {
    let mut out =
        String::from("output,parameter,s_first,s_first_ci95,s_total,s_total_ci95,variance,n\n");
    for output in &result.outputs {
        let mut params = output.params.clone();
        params.sort_by(|a, b| a.name.cmp(&b.name));
        for p in params {
            if output.zero_variance {
                let _ = writeln!(
                    out,
                    "{},{},,,,,{},{}",
                    output.output, p.name, output.variance, result.base_count
                );
            } else {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    output.output,
                    p.name,
                    p.s_first,
                    p.s_first_ci,
                    p.s_total,
                    p.s_total_ci,
                    output.variance,
                    result.base_count
                );
            }
        }
    }
    out
}

pub fn local_csv(result: &LocalSensitivityResult) -> String {
    let mut out = String::from("output,parameter,derivative,step\n");
    for output in &result.outputs {
        let mut params = output.params.clone();
        params.sort_by(|a, b| a.name.cmp(&b.name));
        for p in params {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                output.output, p.name, p.derivative, p.step
            );
        }
    }
    out
}

pub fn moments_csv(result: &MomentResult) -> String {
    let mut out = String::from("output,mean,variance\n");
    for o in &result.outputs {
        let _ = writeln!(out, "{},{},{}", o.output, o.mean, o.variance);
    }
    out
}

/// Grouped bar chart of first-order and total indices, one panel per output.
pub fn sobol_report_svg(result: &SobolResult) -> String {
    let mut panels = Vec::new();
    for output in &result.outputs {
        let mut params = output.params.clone();
        params.sort_by(|a, b| a.name.cmp(&b.name));
        let labels: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
        let series = vec![
            (
                "S".to_string(),
                params.iter().map(|p| p.s_first).collect::<Vec<_>>(),
            ),
            ("ST".to_string(), params.iter().map(|p| p.s_total).collect()),
        ];
        panels.push(svg::BarPanel {
            title: format!("Sobol indices: {}", output.output),
            labels,
            series,
        });
    }
    svg::bar_chart(&panels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{OutputSobol, ParamSobol};

    fn result() -> SobolResult {
        SobolResult {
            base_count: 8,
            outputs: vec![OutputSobol {
                output: "y".into(),
                variance: 13.0 / 3.0,
                zero_variance: false,
                params: vec![
                    ParamSobol {
                        name: "x2".into(),
                        s_first: 9.0 / 13.0,
                        s_first_ci: 0.01,
                        s_total: 9.0 / 13.0,
                        s_total_ci: 0.02,
                    },
                    ParamSobol {
                        name: "x1".into(),
                        s_first: 4.0 / 13.0,
                        s_first_ci: 0.01,
                        s_total: 4.0 / 13.0,
                        s_total_ci: 0.02,
                    },
                    ParamSobol {
                        name: "x3".into(),
                        s_first: 0.0,
                        s_first_ci: 0.0,
                        s_total: 0.0,
                        s_total_ci: 0.0,
                    },
                ],
            }],
        }
    }

    #[test]
    fn table_has_a_row_per_parameter_sorted_by_name() {
        let table = render_sobol_table(&result());
        let rows: Vec<&str> = table.lines().skip(2).collect();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].trim_start().starts_with("x1"));
        assert!(rows[2].trim_start().starts_with("x3"));
    }

    #[test]
    fn empty_result_renders_header_only() {
        let empty = SobolResult {
            base_count: 0,
            outputs: vec![],
        };
        assert_eq!(sobol_csv(&empty).lines().count(), 1);
        assert!(render_sobol_table(&empty).is_empty());
    }

    #[test]
    fn csv_values_round_trip() {
        let csv = sobol_csv(&result());
        let line = csv.lines().nth(1).unwrap();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], "y");
        assert_eq!(fields[1], "x1");
        let s: f64 = fields[2].parse().unwrap();
        assert!((s - 4.0 / 13.0).abs() < 1e-12);
        let var: f64 = fields[6].parse().unwrap();
        assert_eq!(var, 13.0 / 3.0);
    }
}
