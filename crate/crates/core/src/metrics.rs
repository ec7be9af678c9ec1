//! Alignment and error metrics against the ground-truth signal.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dotc, norm_sqr, Real, C};

/// Default success threshold on the final phase-aligned MSE.
pub const SUCCESS_THRESHOLD: f64 = 1e-10;

fn check<T: Real>(x: &[C<T>], x_star: &[C<T>]) -> Result<T> {
    if x.len() != x_star.len() {
        return Err(Error::Dimension { expected: x_star.len(), got: x.len() });
    }
    let ns = norm_sqr(x_star);
    if !(ns > T::zero()) {
        return Err(Error::Parameter("reference signal has zero norm".into()));
    }
    Ok(ns)
}

/// `alpha = x*^H x / ||x*||^2` and `sigma2 = ||x - alpha x*||^2 / ||x*||^2`.
pub fn alignment<T: Real>(x: &[C<T>], x_star: &[C<T>]) -> Result<(C<T>, T)> {
    let ns = check(x, x_star)?;
    let alpha = dotc(x_star, x) / ns;
    let resid: T = x
        .iter()
        .zip(x_star)
        .map(|(a, b)| (a - b * alpha).norm_sqr())
        .sum();
    Ok((alpha, resid / ns))
}

/// `min_theta ||x - e^{i theta} x*||^2 / ||x*||^2`, attained at
/// `theta = arg(x*^H x)` (zero when that product vanishes).
pub fn phase_aligned_mse<T: Real>(x: &[C<T>], x_star: &[C<T>]) -> Result<(T, T)> {
    let ns = check(x, x_star)?;
    let c = dotc(x_star, x);
    let theta = if c.norm() > T::zero() { c.arg() } else { T::zero() };
    let rot = C::from_polar(T::one(), theta);
    let err: T = x.iter().zip(x_star).map(|(a, b)| (a - b * rot).norm_sqr()).sum();
    Ok((err / ns, theta))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Fail,
    Diverged,
}

/// Metrics of one iterate `x^t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub t: usize,
    pub abs_alpha_hat: f64,
    pub sigma2_hat: f64,
    /// Phase-aligned MSE normalized by `||x*||^2`.
    pub mse: f64,
    /// Same error normalized by `n`.
    pub mse_per_n: f64,
    /// Divergence of the step that produced this iterate (none at `t = 0`).
    pub div_value: Option<f64>,
}

impl TrialRow {
    pub fn measure<T: Real>(t: usize, x: &[C<T>], x_star: &[C<T>], div_value: Option<f64>) -> Result<Self> {
        let (alpha, sigma2) = alignment(x, x_star)?;
        let (mse, _) = phase_aligned_mse(x, x_star)?;
        let power = norm_sqr(x_star).as_f64() / x_star.len() as f64;
        Ok(Self {
            t,
            abs_alpha_hat: alpha.norm().as_f64(),
            sigma2_hat: sigma2.as_f64(),
            mse: mse.as_f64(),
            mse_per_n: mse.as_f64() * power,
            div_value,
        })
    }
}

/// Per-trial trajectory plus provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<TrialRow>,
    pub outcome: Outcome,
    /// Reason code when the trial diverged or was halted.
    pub reason: Option<String>,
}

impl TrialRecord {
    pub fn final_mse(&self) -> Option<f64> {
        self.rows.last().map(|r| r.mse)
    }
}

/// True iff the trial did not diverge and its last MSE is below `threshold`.
pub fn success(record: &TrialRecord, threshold: f64) -> bool {
    if record.outcome == Outcome::Diverged {
        return false;
    }
    matches!(record.final_mse(), Some(m) if m < threshold)
}

/// Formats with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub const TRIAL_CSV_HEADER: [&str; 7] = ["seed", "t", "abs_alpha_hat", "sigma2_hat", "mse", "div_value", "mse_per_n"];

/// Writes trial rows; the first six columns are the fixed trial schema.
pub fn write_trial_csv<W: Write>(out: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIAL_CSV_HEADER)?;
    for rec in records {
        for r in &rec.rows {
            w.write_record([
                rec.seed.to_string(),
                r.t.to_string(),
                fmt17(r.abs_alpha_hat),
                fmt17(r.sigma2_hat),
                fmt17(r.mse),
                r.div_value.map(fmt17).unwrap_or_default(),
                fmt17(r.mse_per_n),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
