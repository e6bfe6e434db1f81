//! Closed-form predictions of post-sketch affinity and distance, the RIP
//! band, and sketch-dimension planning from empirically calibrated
//! constants.
//!
//! All quantities are squared (affinity², distance²).

use serde::{Deserialize, Serialize};

use crate::conclab::{fit_decay, ConcentrationReport, MIN_FAILURES_FOR_FIT};
use crate::error::{invalid, Error, Result};

/// Fit quality below which a calibration is refused.
pub const MIN_RELIABLE_R2: f64 = 0.9;

/// Predicted post-sketch geometry of one pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RipEstimate {
    pub oaff_sq: f64,
    pub od_sq: f64,
    /// `ε·(d1 − aff²)`: half-width of the concentration band in affinity units.
    pub slack: f64,
}

fn check_dims(d1: usize, d2: usize, n: usize) -> Result<()> {
    if d1 == 0 || d1 > d2 || d2 >= n {
        return Err(invalid(format!("need 1 <= d1 <= d2 < n, got d1 = {d1}, d2 = {d2}, n = {n}")));
    }
    Ok(())
}

/// `aff² + (d2/n)·(d1 − aff²)`.
pub fn projected_affinity_estimate(aff_sq: f64, d1: usize, d2: usize, n: usize) -> Result<f64> {
    check_dims(d1, d2, n)?;
    if !(0.0..=d1 as f64).contains(&aff_sq) {
        return Err(invalid(format!("affinity² {aff_sq} outside [0, {d1}]")));
    }
    Ok(aff_sq + d2 as f64 / n as f64 * (d1 as f64 - aff_sq))
}

/// `D² − (d2/n)·(D² − (d2 − d1)/2)`.
pub fn projected_distance_estimate(d_sq: f64, d1: usize, d2: usize, n: usize) -> Result<f64> {
    check_dims(d1, d2, n)?;
    let floor = (d2 - d1) as f64 / 2.0;
    let ceil = (d1 + d2) as f64 / 2.0;
    if !(floor..=ceil).contains(&d_sq) {
        return Err(invalid(format!("distance² {d_sq} outside [{floor}, {ceil}]")));
    }
    Ok(d_sq - d2 as f64 / n as f64 * (d_sq - floor))
}

/// Estimates and band radius for a pair with the given pre-sketch affinity².
pub fn rip_estimate(aff_sq: f64, d1: usize, d2: usize, n: usize, epsilon: f64) -> Result<RipEstimate> {
    check_epsilon(epsilon)?;
    let oaff_sq = projected_affinity_estimate(aff_sq, d1, d2, n)?;
    Ok(RipEstimate {
        oaff_sq,
        od_sq: (d1 + d2) as f64 / 2.0 - oaff_sq,
        slack: epsilon * (d1 as f64 - aff_sq),
    })
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    Ok(())
}

/// `((1 − ε)·D², (1 + ε)·D²)`.
pub fn rip_band(d_sq: f64, epsilon: f64) -> Result<(f64, f64)> {
    check_epsilon(epsilon)?;
    if !(d_sq >= 0.0) {
        return Err(invalid(format!("distance² must be non-negative, got {d_sq}")));
    }
    Ok(((1.0 - epsilon) * d_sq, (1.0 + epsilon) * d_sq))
}

/// Grid a calibration was fitted on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGrid {
    pub lemma: String,
    pub n_values: Vec<usize>,
    pub d: usize,
    pub trials: usize,
}

/// Empirical stand-ins for the unspecified constants `c1(ε)`, `c2(ε)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub c1_hat: Option<f64>,
    pub c2_hat: Option<f64>,
    /// `max(0, a)` for the fitted `ln p̂ ≈ a − c2·n`; failure rates are
    /// bounded by `e^{log_prefactor − c2·n}` rather than `e^{−c2·n}`.
    #[serde(default)]
    pub log_prefactor: f64,
    pub epsilon: f64,
    pub fit_r2: Option<f64>,
    pub reliable: bool,
    pub grid: CalibrationGrid,
    /// Why the calibration is unreliable, when it is.
    pub diagnostic: Option<String>,
}

/// Fits `c2` as the decay rate of `ln p̂` against `n`, and `c1` as the
/// smallest `n/d` on the grid whose failure rate already sits under the
/// curve `e^{log_prefactor − c2·n}` (rounded up to two decimals).
pub fn calibrate_constants(report: &ConcentrationReport) -> CalibrationResult {
    let cfg = &report.config;
    let d = cfg.d2.max(1);
    let mut result = CalibrationResult {
        c1_hat: None,
        c2_hat: None,
        log_prefactor: 0.0,
        epsilon: cfg.epsilon,
        fit_r2: None,
        reliable: false,
        grid: CalibrationGrid {
            lemma: cfg.lemma.id().to_string(),
            n_values: report.cells.iter().map(|c| c.n).collect(),
            d,
            trials: cfg.trials,
        },
        diagnostic: None,
    };
    let fit = match fit_decay(report) {
        Ok(fit) => fit,
        Err(e) => {
            result.diagnostic = Some(format!(
                "need at least 2 grid points with >= {MIN_FAILURES_FOR_FIT} failures: {e}"
            ));
            return result;
        }
    };
    let c2 = -fit.slope;
    result.c2_hat = Some(c2);
    result.fit_r2 = Some(fit.r2);
    result.log_prefactor = fit.intercept.max(0.0);
    if !(c2 > 0.0) || fit.r2 < MIN_RELIABLE_R2 {
        result.diagnostic = Some(format!(
            "decay fit unusable: c2 = {c2:.4e}, r2 = {:.4} (need c2 > 0 and r2 >= {MIN_RELIABLE_R2})",
            fit.r2
        ));
        return result;
    }
    let mut cells: Vec<_> = report.cells.iter().filter(|c| c.valid > 0).collect();
    cells.sort_by_key(|c| c.n);
    let a = result.log_prefactor;
    let threshold = cells.into_iter().find(|c| c.p_hat <= (a - c2 * c.n as f64).exp() * (1.0 + 1e-9));
    match threshold {
        Some(cell) => {
            result.c1_hat = Some((100.0 * cell.n as f64 / d as f64).ceil() / 100.0);
            result.reliable = true;
        }
        None => {
            result.diagnostic = Some("no grid point has a failure rate under the fitted envelope; extend the grid".into());
        }
    }
    result
}

/// Which requirement fixed the planned dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BindingConstraint {
    Dimension,
    UnionBound,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchPlan {
    pub n: usize,
    pub binding: BindingConstraint,
}

/// Smallest `n` with `n ≥ c1·max(d, ln L)` and
/// `e^{log_prefactor − c2·n}·L(L−1)/2 ≤ target_failure`. Never below `d + 1`.
pub fn plan_sketch_dimension(
    d: usize,
    l_count: usize,
    epsilon: f64,
    target_failure: f64,
    cal: &CalibrationResult,
) -> Result<SketchPlan> {
    check_epsilon(epsilon)?;
    if d == 0 || l_count == 0 {
        return Err(invalid("d and L must be positive"));
    }
    if !(target_failure > 0.0 && target_failure < 1.0) {
        return Err(invalid(format!("target failure must lie in (0, 1), got {target_failure}")));
    }
    if (cal.epsilon - epsilon).abs() > 1e-12 {
        return Err(Error::CalibrationMismatch(format!(
            "calibration was fitted at epsilon = {}, requested {epsilon}",
            cal.epsilon
        )));
    }
    let (c1, c2) = match (cal.reliable, cal.c1_hat, cal.c2_hat) {
        (true, Some(c1), Some(c2)) => (c1, c2),
        _ => {
            return Err(Error::Calibration(format!(
                "refusing unreliable calibration: {}",
                cal.diagnostic.as_deref().unwrap_or("missing constants")
            )))
        }
    };
    let scale = (d as f64).max((l_count as f64).ln());
    let n_dim = ((c1 * scale).ceil() as usize).max(d + 1);
    let pairs = (l_count * (l_count - 1)) as f64 / 2.0;
    let n_union = if pairs <= 0.0 {
        0
    } else {
        (((pairs / target_failure).ln() + cal.log_prefactor) / c2).ceil().max(0.0) as usize
    };
    Ok(if n_union > n_dim {
        SketchPlan { n: n_union, binding: BindingConstraint::UnionBound }
    } else {
        SketchPlan { n: n_dim, binding: BindingConstraint::Dimension }
    })
}
