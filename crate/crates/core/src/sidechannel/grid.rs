use statrs::function::erf::erfc;

use crate::model::TemporalDensity;

/// Quadrature step for discrimination.
pub const GRID_STEP_PS: f64 = 10.0;

/// Cell masses of a temporal profile convolved with Gaussian timing jitter.
/// Cell `i` covers `[origin + i·step, origin + (i+1)·step)` in ps after avalanche start.
#[derive(Debug, Clone, PartialEq)]
pub struct MassGrid {
    pub origin_ps: f64,
    pub step_ps: f64,
    pub masses: Vec<f64>,
}

impl MassGrid {
    /// Cumulative mass at grid edge `k` (edge 0 is the origin).
    pub fn prefix(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.masses.len() + 1);
        p.push(0.0);
        let mut acc = 0.0;
        for m in &self.masses {
            acc += m;
            p.push(acc);
        }
        p
    }
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Padding needed on each side so that jittered mass stays on the grid.
pub(crate) fn padding_ps(sigma_ps: f64, step_ps: f64) -> f64 {
    ((8.0 * sigma_ps) / step_ps).ceil() * step_ps + step_ps
}

/// Profile masses on a grid aligned to t = 0, spanning `[-pad, span + pad)`.
pub fn mass_grid(profile: &TemporalDensity, sigma_ps: f64, step_ps: f64, span_ps: f64) -> MassGrid {
    let pad = padding_ps(sigma_ps, step_ps);
    let n = ((span_ps + 2.0 * pad) / step_ps).ceil() as usize;
    let origin = -pad;
    let edge_ns = |i: usize| (origin + i as f64 * step_ps) / 1e3;

    let mut masses: Vec<f64> = (0..n)
        .map(|i| profile.cdf(edge_ns(i + 1)) - profile.cdf(edge_ns(i)))
        .collect();
    // make the in-order sum exactly one: s + (1 - s) == 1 for s near 1
    if let Some(last) = masses.iter().rposition(|&m| m > 0.0) {
        let s: f64 = masses[..last].iter().sum();
        masses[last] = 1.0 - s;
    }

    if sigma_ps > step_ps * 1e-3 {
        masses = convolve_gaussian(&masses, sigma_ps, step_ps);
    }
    MassGrid {
        origin_ps: origin,
        step_ps,
        masses,
    }
}

fn convolve_gaussian(masses: &[f64], sigma_ps: f64, step_ps: f64) -> Vec<f64> {
    let half = (8.0 * sigma_ps / step_ps).ceil() as isize;
    let mut kernel: Vec<f64> = (-half..=half)
        .map(|j| {
            let a = (j as f64 - 0.5) * step_ps / sigma_ps;
            let b = (j as f64 + 0.5) * step_ps / sigma_ps;
            normal_cdf(b) - normal_cdf(a)
        })
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let n = masses.len() as isize;
    let mut out = vec![0.0; masses.len()];
    for (i, &m) in masses.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        for (jj, &k) in kernel.iter().enumerate() {
            let t = i as isize + jj as isize - half;
            if (0..n).contains(&t) {
                out[t as usize] += m * k;
            }
        }
    }
    out
}

/// Half the L1 distance between two mass vectors on the same grid, computed
/// symmetrically from both positive parts.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    let (mut pos, mut neg) = (0.0, 0.0);
    for i in 0..n {
        let d = a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0);
        if d > 0.0 {
            pos += d;
        } else {
            neg -= d;
        }
    }
    (0.5 * (pos + neg)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_masses_sum_to_one() {
        let p = TemporalDensity::trapezoidal(10.0, 2.0, 3.0).unwrap();
        let g = mass_grid(&p, 0.0, GRID_STEP_PS, 10_000.0);
        assert_eq!(g.masses.iter().sum::<f64>(), 1.0);
        let g = mass_grid(&p, 55.0, GRID_STEP_PS, 10_000.0);
        assert!((g.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        let v = normal_cdf(1.959_963_984_540_054);
        assert!((v - 0.975).abs() < 1e-10, "{v}");
    }
}
