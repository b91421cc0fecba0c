//! Builds an evaluation report from predictions and renders it three ways.

use vsr::eval::{render_report, EvalReport, ReportFormat, Sections};

fn main() -> vsr::Result<()> {
    let labels = [0, 0, 1, 1, 2, 2, 0, 1, 2];
    let predicted = [0, 1, 1, 1, 2, 0, 0, 1, 2];
    let subjects = ["s1", "s1", "s1", "s2", "s2", "s2", "s3", "s3", "s3"];
    let report = EvalReport::from_predictions(3, &labels, &predicted, &subjects, "test", "example")?;
    let all = Sections { per_subject: true, confusion: true };
    println!("{}", render_report(&report, ReportFormat::Text, all));
    println!("{}", render_report(&report, ReportFormat::Csv, all));
    println!("{}", report.to_json());
    Ok(())
}
