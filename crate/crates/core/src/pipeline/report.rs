use std::fmt::Write;

use super::evaluate::Evaluation;
use super::experiment::ReportBundle;
use crate::metrics::MeanStd;

fn cell(m: &MeanStd) -> String {
    format!("{:.3} ({:.3})", m.mean, m.std)
}

/// Markdown table of one evaluation: one row per tolerance, mean (std) over files.
pub fn evaluation_table(eval: &Evaluation) -> String {
    let mut out = String::from("| tolerance | files | precision | recall | F-score | accuracy |\n|---|---|---|---|---|---|\n");
    for s in &eval.summary {
        let _ = writeln!(
            out,
            "| {} c | {} | {} | {} | {} | {} |",
            s.tolerance_cents,
            s.files,
            cell(&s.precision),
            cell(&s.recall),
            cell(&s.f_score),
            cell(&s.accuracy)
        );
    }
    out
}

/// Human-readable summary of an experiment: one row per run, evaluation set and tolerance.
pub fn render_table(bundle: &ReportBundle) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {:?} experiment\n", bundle.config.experiment);
    let _ = writeln!(
        out,
        "config {} · manifest {} · params {}\n",
        bundle.config_fingerprint,
        &bundle.manifest_sha256[..16],
        bundle.params_hash
    );
    let _ = writeln!(
        out,
        "{} training / {} validation files\n",
        bundle.train_files.len(),
        bundle.validation_files.len()
    );
    out.push_str("| architecture | seed | threshold | set | tolerance | P | R | F | Acc | weights |\n");
    out.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
    for run in &bundle.runs {
        for eval in &run.evaluations {
            for s in &eval.summary {
                let _ = writeln!(
                    out,
                    "| {} | {} | {:.2} | {} ({}) | {} c | {} | {} | {} | {} | {} |",
                    run.architecture,
                    run.seed,
                    run.threshold,
                    eval.name,
                    s.files,
                    s.tolerance_cents,
                    cell(&s.precision),
                    cell(&s.recall),
                    cell(&s.f_score),
                    cell(&s.accuracy),
                    run.weights_fingerprint
                );
            }
        }
    }
    out
}
