use embclass::EvalReport;

use crate::config::RunConfig;
use crate::error::{io_err, CliError, EXIT_INVALID};
use crate::io::render_table;

use super::{report_row, REPORT_HEADER};

/// Text tables written by the other commands, in report order.
const SECTIONS: [(&str, &str); 4] = [
    ("fuse.txt", "Language, vision and fused accuracy"),
    ("sweep.txt", "k-NN accuracy per k"),
    ("fewshot.txt", "Few-shot k-NN, mean and 95% half-width"),
    ("oracle.txt", "Oracles"),
];

/// Collect every report in the output directory into `report.txt`.
pub fn run(cfg: &RunConfig) -> Result<i32, CliError> {
    let dir = &cfg.output;
    let entries = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut eval_files: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("eval-") && n.ends_with(".json"))
        })
        .collect();
    eval_files.sort();

    let mut text = String::new();
    if !eval_files.is_empty() {
        let mut rows = Vec::new();
        for p in &eval_files {
            let body = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            let r: EvalReport = serde_json::from_str(&body)
                .map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?;
            rows.push(report_row(&r));
        }
        text.push_str("Evaluations\n\n");
        text.push_str(&render_table(&REPORT_HEADER, &rows));
    }
    for (file, title) in SECTIONS {
        let p = dir.join(file);
        if !p.is_file() {
            continue;
        }
        let body = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(title);
        text.push_str("\n\n");
        text.push_str(&body);
    }
    if text.is_empty() {
        eprintln!("no reports found in {}", dir.display());
        return Ok(EXIT_INVALID);
    }
    let path = dir.join("report.txt");
    std::fs::write(&path, &text).map_err(|e| io_err(&path, e))?;
    print!("{text}");
    Ok(0)
}
