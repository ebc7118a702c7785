pub mod eval;
pub mod fewshot;
pub mod fuse;
pub mod oracle;
pub mod report;
pub mod sweep;
pub mod synth;
pub mod validate;

use embclass::EvalReport;

use crate::io::opt_pct;

pub const REPORT_HEADER: [&str; 5] = ["variant", "samples", "top-1", "ReaL", "class mean"];

pub fn report_row(r: &EvalReport) -> Vec<String> {
    vec![
        r.variant.clone(),
        r.samples.to_string(),
        opt_pct(r.top1),
        opt_pct(r.real),
        opt_pct(r.mean_per_class),
    ]
}

/// `class,accuracy` rows; classes without samples get an empty cell.
pub fn per_class_rows(per_class: &[Option<f64>]) -> Vec<Vec<String>> {
    per_class
        .iter()
        .enumerate()
        .map(|(c, a)| vec![c.to_string(), a.map(|a| a.to_string()).unwrap_or_default()])
        .collect()
}

