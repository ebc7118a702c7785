use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Method string recorded in reports next to every interval.
pub const CI_METHOD: &str = "student-t, two-sided 95%";

/// Mean with a confidence half-width over repeated trials.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
    pub trials: usize,
}

/// Mean and t-distribution 95% half-width `t(0.975, n-1) * s / sqrt(n)`,
/// with `s` the sample standard deviation.
pub fn ci_95(trials: &[f64]) -> Result<Interval> {
    let n = trials.len();
    if n < 2 {
        return Err(Error::arg(format!(
            "a confidence interval needs at least 2 trials, got {n}"
        )));
    }
    let mean = trials.iter().sum::<f64>() / n as f64;
    let var = trials.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    Ok(Interval {
        mean,
        half_width: t * var.sqrt() / (n as f64).sqrt(),
        trials: n,
    })
}
