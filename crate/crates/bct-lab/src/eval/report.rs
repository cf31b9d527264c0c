//! Report serialization: a flat CSV for machines and a markdown summary
//! table for humans. Output is fully deterministic — fixed row order, no
//! timestamps — so identical runs produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::eval::run::{EvalReport, MetricPoint, SideReport};

/// A run section within a combined report, e.g. ("lower", &old_baseline).
pub type LabeledReport<'a> = (&'a str, &'a EvalReport);

fn push_rows(out: &mut String, label: &str, side_name: &str, side: &SideReport) {
    let mut write_point = |metric: &str, protocol: &str, p: &MetricPoint| {
        let _ = writeln!(
            out,
            "{metric},{protocol},{label}.{side_name},{},{},{}",
            p.requested, p.value, p.achieved
        );
    };
    for p in &side.verification {
        write_point("tar", "verification", p);
    }
    for p in &side.identification {
        write_point("tpir", "identification", p);
    }
}

/// Renders every section as CSV rows under the header
/// `metric,protocol,mode,operating_point,value,achieved_operating_point`.
/// Audit rates, when attached, append as four labeled rows per section.
pub fn render_report_csv(reports: &[LabeledReport<'_>]) -> String {
    let mut out = String::from("metric,protocol,mode,operating_point,value,achieved_operating_point\n");
    for (label, report) in reports {
        push_rows(&mut out, label, "self", &report.self_test);
        push_rows(&mut out, label, "cross", &report.cross_test);
        let _ = writeln!(out, "avg,summary,{label},,{},", report.avg);
        if let Some(rates) = &report.constraints {
            for (name, rate) in rates.labeled() {
                let _ = writeln!(out, "{name},audit,{label},,{rate},");
            }
        }
    }
    out
}

fn fmt_cell(p: &MetricPoint) -> String {
    if p.supported {
        format!("{:.4}", p.value)
    } else {
        format!("{:.4}†", p.value)
    }
}

/// Renders the headline summary: one row per section, the four
/// cross/self × verification/identification numbers at the first operating
/// point, and their mean. Daggers flag operating points finer than the
/// available trial counts can resolve.
pub fn render_report_md(reports: &[LabeledReport<'_>]) -> String {
    let mut out = String::new();
    if reports.is_empty() {
        return out;
    }
    let first = reports[0].1;
    let far = first.self_test.verification[0].requested;
    let fpir = first.self_test.identification[0].requested;
    let _ = writeln!(out, "# Evaluation summary");
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "| run | cross TAR@{far} | self TAR@{far} | cross TPIR@{fpir} | self TPIR@{fpir} | avg |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    for (label, report) in reports {
        let _ = writeln!(
            out,
            "| {label} | {} | {} | {} | {} | {:.4} |",
            fmt_cell(&report.cross_test.verification[0]),
            fmt_cell(&report.self_test.verification[0]),
            fmt_cell(&report.cross_test.identification[0]),
            fmt_cell(&report.self_test.identification[0]),
            report.avg
        );
    }
    let audited: Vec<&LabeledReport> =
        reports.iter().filter(|(_, r)| r.constraints.is_some()).collect();
    if !audited.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "## Constraint audit");
        let _ = writeln!(out);
        let _ = writeln!(out, "| run | both_new | old_negative | old_positive | both_old |");
        let _ = writeln!(out, "|---|---|---|---|---|");
        for (label, report) in &audited {
            let rates = report.constraints.as_ref().unwrap();
            let row = rates
                .labeled()
                .iter()
                .map(|(_, r)| format!("{r:.4}"))
                .collect::<Vec<_>>()
                .join(" | ");
            let _ = writeln!(out, "| {label} | {row} |");
        }
    }
    if out.contains('†') {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "† operating point below the resolution of the available pair/query counts"
        );
    }
    out
}

/// Writes `report.csv` and `report.md` into `dir`.
pub fn write_report_files(dir: &Path, reports: &[LabeledReport<'_>]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.csv"), render_report_csv(reports))?;
    std::fs::write(dir.join("report.md"), render_report_md(reports))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::audit::ConstraintRates;
    use crate::eval::run::{MetricPoint, SideReport};

    fn point(requested: f64, value: f64) -> MetricPoint {
        MetricPoint { requested, value, threshold: 0.5, achieved: requested, supported: true }
    }

    fn sample_report() -> EvalReport {
        let side = |v: f64, i: f64| SideReport {
            verification: vec![point(0.01, v), point(0.1, v + 0.05)],
            identification: vec![point(0.01, i)],
        };
        EvalReport {
            self_test: side(0.9, 0.8),
            cross_test: side(0.7, 0.6),
            avg: (0.9 + 0.7 + 0.8 + 0.6) / 4.0,
            constraints: Some(ConstraintRates {
                both_new: 0.99,
                old_negative: 0.97,
                old_positive: 0.8,
                both_old: 0.75,
            }),
        }
    }

    #[test]
    fn csv_has_header_and_one_row_per_point() {
        let report = sample_report();
        let csv = render_report_csv(&[("method", &report)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "metric,protocol,mode,operating_point,value,achieved_operating_point"
        );
        // 2 sides × (2 verification + 1 identification) + avg + 4 audit rows.
        assert_eq!(lines.len(), 1 + 6 + 1 + 4);
        assert!(lines.iter().any(|l| l.starts_with("tar,verification,method.cross,0.01,0.7,")));
        assert!(lines.iter().any(|l| l.starts_with("avg,summary,method,,0.75")));
        assert!(lines.iter().any(|l| *l == "both_old,audit,method,,0.75,"));
    }

    #[test]
    fn markdown_lists_each_run_row() {
        let report = sample_report();
        let md = render_report_md(&[("lower", &report), ("mixbct", &report)]);
        assert!(md.contains("| lower |"));
        assert!(md.contains("| mixbct |"));
        assert!(md.contains("TAR@0.01"));
        assert!(md.contains("## Constraint audit"));
        assert!(!md.contains('†'), "all points are supported in this fixture");
    }

    #[test]
    fn unsupported_points_get_a_dagger() {
        let mut report = sample_report();
        report.self_test.verification[0].supported = false;
        report.constraints = None;
        let md = render_report_md(&[("run", &report)]);
        assert!(md.contains('†'));
        assert!(md.contains("below the resolution"));
        assert!(!md.contains("Constraint audit"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let report = sample_report();
        let a = render_report_csv(&[("x", &report)]);
        let b = render_report_csv(&[("x", &report)]);
        assert_eq!(a, b);
    }

    #[test]
    fn files_land_in_the_target_directory() {
        let report = sample_report();
        let dir = tempfile::tempdir().unwrap();
        write_report_files(dir.path(), &[("solo", &report)]).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
        assert!(csv.starts_with("metric,"));
        assert!(md.contains("| solo |"));
    }
}
