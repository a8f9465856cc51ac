use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::background::BackflashEstimate;
use crate::error::{Error, Result};

/// Two-sided 95 % normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    /// Normal approximation with propagated variance.
    #[default]
    Normal,
    /// Exact Poisson interval on the gross counts, shifted by the scaled background.
    Garwood,
}

/// Leakage bound `P_L = N_B / (N_P · η_det · η_ch)` with its 95 % interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub n_backflash: f64,
    pub n_backflash_std_error: f64,
    pub n_dut_counts: u64,
    pub eta_det: f64,
    pub eta_ch: f64,
    pub p_leak: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_method: CiMethod,
    /// Attenuation factors applied by countermeasures; empty for a measured report.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mitigation_factors: Vec<f64>,
    /// Unmitigated values, kept so repeated mitigation composes from the source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured: Option<MeasuredLeakage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredLeakage {
    pub n_backflash: f64,
    pub n_backflash_std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl LeakageReport {
    pub fn p_leak_std_error(&self) -> f64 {
        (self.ci_high - self.ci_low) / (2.0 * Z95)
    }
}

fn check_inputs(n_dut_counts: u64, eta_det: f64, eta_ch: f64) -> Result<()> {
    if n_dut_counts == 0 {
        return Err(Error::ZeroDutCounts);
    }
    for (name, eta) in [("eta_det", eta_det), ("eta_ch", eta_ch)] {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1], got {eta}")));
        }
    }
    Ok(())
}

fn p_leak_of(n_backflash: f64, n_dut_counts: u64, eta_det: f64, eta_ch: f64) -> f64 {
    n_backflash / (n_dut_counts as f64 * eta_det * eta_ch)
}

/// Leakage from a bare backflash count, taking its error as Poisson (`√N_B`)
/// and `N_P` as Poisson.
pub fn estimate_leakage(n_backflash: f64, n_dut_counts: u64, eta_det: f64, eta_ch: f64) -> Result<LeakageReport> {
    let est = BackflashEstimate {
        n_backflash,
        std_error: n_backflash.max(0.0).sqrt(),
        gross_counts: n_backflash.max(0.0).round() as u64,
        reference_counts: 0,
        scale: 0.0,
    };
    estimate_leakage_from(&est, n_dut_counts, None, eta_det, eta_ch, CiMethod::Normal)
}

/// Leakage from an integrated region. With `n_triggers` the variance of `N_P`
/// is binomial, otherwise Poisson.
pub fn estimate_leakage_from(
    estimate: &BackflashEstimate,
    n_dut_counts: u64,
    n_triggers: Option<u64>,
    eta_det: f64,
    eta_ch: f64,
    method: CiMethod,
) -> Result<LeakageReport> {
    check_inputs(n_dut_counts, eta_det, eta_ch)?;
    let n_b = estimate.n_backflash;
    let p = p_leak_of(n_b, n_dut_counts, eta_det, eta_ch);
    let denom = n_dut_counts as f64 * eta_det * eta_ch;
    let np = n_dut_counts as f64;

    let (lo, hi) = match method {
        CiMethod::Normal => {
            let var_np = match n_triggers {
                Some(t) if t > 0 => np * (1.0 - (np / t as f64).min(1.0)),
                _ => np,
            };
            let var = (estimate.std_error / denom).powi(2) + p * p * var_np / (np * np);
            let half = Z95 * var.sqrt();
            (p - half, p + half)
        }
        CiMethod::Garwood => {
            let (g_lo, g_hi) = garwood(estimate.gross_counts);
            let bg = estimate.scaled_background();
            ((g_lo - bg) / denom, (g_hi - bg) / denom)
        }
    };

    Ok(LeakageReport {
        n_backflash: n_b,
        n_backflash_std_error: estimate.std_error,
        n_dut_counts,
        eta_det,
        eta_ch,
        p_leak: p,
        ci_low: lo.min(p),
        ci_high: hi.max(p),
        ci_method: method,
        mitigation_factors: Vec::new(),
        measured: None,
    })
}

/// Exact central 95 % Poisson interval for an observed count.
pub fn garwood(count: u64) -> (f64, f64) {
    let alpha = 1.0 - 0.95;
    let k = count as f64;
    let lo = if count == 0 {
        0.0
    } else {
        ChiSquared::new(2.0 * k).unwrap().inverse_cdf(alpha / 2.0) / 2.0
    };
    let hi = ChiSquared::new(2.0 * k + 2.0).unwrap().inverse_cdf(1.0 - alpha / 2.0) / 2.0;
    (lo, hi)
}

/// Applies an extra attenuation factor to a report, keeping the defining
/// ratio exact. The factor product is taken in sorted order, so the final
/// report does not depend on the order factors were applied in.
pub fn mitigate(report: &LeakageReport, factor: f64) -> LeakageReport {
    let measured = report.measured.unwrap_or(MeasuredLeakage {
        n_backflash: report.n_backflash,
        n_backflash_std_error: report.n_backflash_std_error,
        ci_low: report.ci_low,
        ci_high: report.ci_high,
    });
    let mut factors = report.mitigation_factors.clone();
    factors.push(factor);
    factors.sort_by(f64::total_cmp);
    let total: f64 = factors.iter().product();

    let n_b = measured.n_backflash * total;
    let p = p_leak_of(n_b, report.n_dut_counts, report.eta_det, report.eta_ch);
    let (a, b) = (measured.ci_low * total, measured.ci_high * total);
    LeakageReport {
        n_backflash: n_b,
        n_backflash_std_error: measured.n_backflash_std_error * total,
        p_leak: p,
        ci_low: a.min(b).min(p),
        ci_high: a.max(b).max(p),
        mitigation_factors: factors,
        measured: Some(measured),
        ..report.clone()
    }
}
