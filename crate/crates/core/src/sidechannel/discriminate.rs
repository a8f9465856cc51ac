use serde::{Deserialize, Serialize};

use super::grid::{mass_grid, total_variation, GRID_STEP_PS};
use crate::model::{TemporalDensity, FWHM_PER_SIGMA};

/// Eve's single-shot ability to tell which of two detectors flashed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationResult {
    /// Maximum-likelihood guessing probability, `(1 + tv_distance) / 2`.
    pub guess_probability: f64,
    pub tv_distance: f64,
    /// `1 - H₂(p_err)` for the binary channel at the ML decision.
    pub leaked_bits_per_detection: f64,
    pub grid_step_ps: f64,
    /// |TV(step) - TV(step / 2)|, the quadrature convergence check.
    pub grid_halving_delta: f64,
}

/// Tolerance on the grid-halving check.
pub const GRID_TOLERANCE: f64 = 1e-4;

impl DiscriminationResult {
    pub fn converged(&self) -> bool {
        self.grid_halving_delta <= GRID_TOLERANCE
    }
}

fn tv_on_grid(a: &TemporalDensity, b: &TemporalDensity, sigma_ps: f64, step_ps: f64) -> f64 {
    let span = a.duration_ns().max(b.duration_ns()) * 1e3;
    let ga = mass_grid(a, sigma_ps, step_ps, span);
    let gb = mass_grid(b, sigma_ps, step_ps, span);
    total_variation(&ga.masses, &gb.masses)
}

/// Binary mutual information `1 - H₂((1 - t) / 2)`, evaluated without the
/// cancellation that `1 - H₂` suffers near `t = 0`.
pub fn leaked_bits(tv: f64) -> f64 {
    let t = tv.clamp(0.0, 1.0);
    if t == 0.0 {
        return 0.0;
    }
    // (1+t)ln(1+t) + (1-t)ln(1-t) = Σ_k t^{2k} / (k (2k - 1))
    let g = if t < 0.1 {
        let t2 = t * t;
        let mut term = t2;
        let mut sum = 0.0;
        for k in 1..=30 {
            let kf = k as f64;
            sum += term / (kf * (2.0 * kf - 1.0));
            term *= t2;
        }
        sum
    } else if t == 1.0 {
        2.0 * std::f64::consts::LN_2
    } else {
        (1.0 + t) * t.ln_1p() + (1.0 - t) * (-t).ln_1p()
    };
    (g / (2.0 * std::f64::consts::LN_2)).clamp(0.0, 1.0)
}

/// Total-variation discrimination of two jitter-blurred emission profiles.
pub fn discriminate(
    profile_a: &TemporalDensity,
    profile_b: &TemporalDensity,
    arrival_jitter_fwhm_ps: f64,
) -> DiscriminationResult {
    let sigma = arrival_jitter_fwhm_ps.max(0.0) / FWHM_PER_SIGMA;
    let tv = tv_on_grid(profile_a, profile_b, sigma, GRID_STEP_PS);
    let tv_half = tv_on_grid(profile_a, profile_b, sigma, GRID_STEP_PS / 2.0);
    DiscriminationResult {
        guess_probability: (1.0 + tv) / 2.0,
        tv_distance: tv,
        leaked_bits_per_detection: leaked_bits(tv),
        grid_step_ps: GRID_STEP_PS,
        grid_halving_delta: (tv - tv_half).abs(),
    }
}
