//! Backflash emission profiles: a normalized temporal density over the
//! avalanche lifetime and a normalized spectral density over wavelength.

use serde::{Deserialize, Serialize};

/// Shape description as it appears in the bench document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Rectangular {
        duration_ns: f64,
    },
    Trapezoidal {
        duration_ns: f64,
        rise_ns: f64,
        fall_ns: f64,
    },
    /// Knots are `[t_ns, relative_density]`; the first knot sits at t = 0.
    PiecewiseLinear {
        knots: Vec<[f64; 2]>,
    },
}

/// Piecewise-linear probability density on `[0, duration]`, integrating to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ShapeSpec", into = "ShapeSpec")]
pub struct TemporalDensity {
    spec: ShapeSpec,
    times: Vec<f64>,
    values: Vec<f64>,
    // cumulative mass at each knot; cum[0] = 0, cum[last] = 1
    cum: Vec<f64>,
}

impl TemporalDensity {
    pub fn rectangular(duration_ns: f64) -> Result<Self, String> {
        Self::try_from(ShapeSpec::Rectangular { duration_ns })
    }

    pub fn trapezoidal(duration_ns: f64, rise_ns: f64, fall_ns: f64) -> Result<Self, String> {
        Self::try_from(ShapeSpec::Trapezoidal {
            duration_ns,
            rise_ns,
            fall_ns,
        })
    }

    pub fn piecewise_linear(knots: Vec<[f64; 2]>) -> Result<Self, String> {
        Self::try_from(ShapeSpec::PiecewiseLinear { knots })
    }

    pub fn spec(&self) -> &ShapeSpec {
        &self.spec
    }

    pub fn duration_ns(&self) -> f64 {
        *self.times.last().expect("at least two knots")
    }

    /// Density per ns at `t_ns`; zero outside `[0, duration]`.
    pub fn pdf(&self, t_ns: f64) -> f64 {
        if !(0.0..=self.duration_ns()).contains(&t_ns) {
            return 0.0;
        }
        let j = self.segment_containing(t_ns);
        let (t0, t1) = (self.times[j], self.times[j + 1]);
        let (v0, v1) = (self.values[j], self.values[j + 1]);
        v0 + (v1 - v0) * (t_ns - t0) / (t1 - t0)
    }

    /// Cumulative emitted fraction by `t_ns`.
    pub fn cdf(&self, t_ns: f64) -> f64 {
        if t_ns <= 0.0 {
            return 0.0;
        }
        if t_ns >= self.duration_ns() {
            return 1.0;
        }
        let j = self.segment_containing(t_ns);
        let x = t_ns - self.times[j];
        let len = self.times[j + 1] - self.times[j];
        let (v0, v1) = (self.values[j], self.values[j + 1]);
        (self.cum[j] + v0 * x + (v1 - v0) * x * x / (2.0 * len)).min(1.0)
    }

    /// Mass inside `[a_ns, b_ns]`.
    pub fn mass_between(&self, a_ns: f64, b_ns: f64) -> f64 {
        if b_ns <= a_ns {
            0.0
        } else {
            self.cdf(b_ns) - self.cdf(a_ns)
        }
    }

    /// Inverse-CDF sample for `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        // first knot whose cumulative mass exceeds u; its left neighbour opens the segment
        let idx = self.cum.partition_point(|&c| c <= u);
        if idx == 0 {
            return 0.0;
        }
        if idx >= self.cum.len() {
            return self.duration_ns();
        }
        let j = idx - 1;
        let m = u - self.cum[j];
        if m <= 0.0 {
            return self.times[j];
        }
        let len = self.times[j + 1] - self.times[j];
        let (v0, v1) = (self.values[j], self.values[j + 1]);
        let a = (v1 - v0) / (2.0 * len);
        let x = if a.abs() < 1e-15 * v0.max(1e-300) {
            m / v0
        } else {
            let disc = (v0 * v0 + 4.0 * a * m).max(0.0);
            2.0 * m / (v0 + disc.sqrt())
        };
        (self.times[j] + x.clamp(0.0, len)).min(self.duration_ns())
    }

    fn segment_containing(&self, t: f64) -> usize {
        let idx = self.times.partition_point(|&k| k <= t);
        idx.saturating_sub(1).min(self.times.len() - 2)
    }
}

impl TryFrom<ShapeSpec> for TemporalDensity {
    type Error = String;

    fn try_from(spec: ShapeSpec) -> Result<Self, String> {
        let knots: Vec<(f64, f64)> = match &spec {
            ShapeSpec::Rectangular { duration_ns } => {
                let d = *duration_ns;
                if !(d.is_finite() && d > 0.0) {
                    return Err(format!("duration_ns must be > 0, got {d}"));
                }
                vec![(0.0, 1.0), (d, 1.0)]
            }
            ShapeSpec::Trapezoidal {
                duration_ns,
                rise_ns,
                fall_ns,
            } => {
                let (d, r, f) = (*duration_ns, *rise_ns, *fall_ns);
                if !(d.is_finite() && d > 0.0) {
                    return Err(format!("duration_ns must be > 0, got {d}"));
                }
                if !(r >= 0.0 && f >= 0.0 && r + f <= d) {
                    return Err(format!(
                        "ramps must satisfy 0 <= rise, fall and rise + fall <= duration (rise {r}, fall {f}, duration {d})"
                    ));
                }
                let mut k = Vec::with_capacity(4);
                k.push((0.0, if r > 0.0 { 0.0 } else { 1.0 }));
                if r > 0.0 {
                    k.push((r, 1.0));
                }
                if f > 0.0 {
                    if d - f > r {
                        k.push((d - f, 1.0));
                    }
                    k.push((d, 0.0));
                } else if d > r {
                    k.push((d, 1.0));
                }
                k
            }
            ShapeSpec::PiecewiseLinear { knots } => {
                if knots.len() < 2 {
                    return Err("piecewise_linear needs at least two knots".into());
                }
                if knots[0][0] != 0.0 {
                    return Err("first knot must be at t = 0".into());
                }
                for w in knots.windows(2) {
                    if !(w[1][0] > w[0][0]) {
                        return Err("knot times must be strictly increasing".into());
                    }
                }
                if knots
                    .iter()
                    .any(|k| !(k[1].is_finite() && k[1] >= 0.0) || !k[0].is_finite())
                {
                    return Err("knot densities must be finite and >= 0".into());
                }
                knots.iter().map(|k| (k[0], k[1])).collect()
            }
        };

        let times: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let raw: Vec<f64> = knots.iter().map(|k| k.1).collect();
        let area: f64 = times
            .windows(2)
            .zip(raw.windows(2))
            .map(|(t, v)| 0.5 * (v[0] + v[1]) * (t[1] - t[0]))
            .sum();
        if !(area.is_finite() && area > 0.0) {
            return Err("temporal density has zero area".into());
        }
        let values: Vec<f64> = raw.iter().map(|v| v / area).collect();
        let mut cum = Vec::with_capacity(times.len());
        cum.push(0.0);
        for j in 0..times.len() - 1 {
            let seg = 0.5 * (values[j] + values[j + 1]) * (times[j + 1] - times[j]);
            cum.push(cum[j] + seg);
        }
        *cum.last_mut().unwrap() = 1.0;
        Ok(Self {
            spec,
            times,
            values,
            cum,
        })
    }
}

impl From<TemporalDensity> for ShapeSpec {
    fn from(d: TemporalDensity) -> Self {
        d.spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectrumSpec {
    edges_nm: Vec<f64>,
    weights: Vec<f64>,
}

/// Piecewise-constant spectral density over `[edges_nm[0], edges_nm[n]]`, normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpectrumSpec", into = "SpectrumSpec")]
pub struct SpectralDensity {
    edges_nm: Vec<f64>,
    weights: Vec<f64>,
    // normalized density per nm in each cell
    density: Vec<f64>,
}

impl SpectralDensity {
    pub fn new(edges_nm: Vec<f64>, weights: Vec<f64>) -> Result<Self, String> {
        Self::try_from(SpectrumSpec { edges_nm, weights })
    }

    /// Uniform density over `[lo_nm, hi_nm]`.
    pub fn flat(lo_nm: f64, hi_nm: f64) -> Result<Self, String> {
        Self::new(vec![lo_nm, hi_nm], vec![1.0])
    }

    pub fn support_nm(&self) -> (f64, f64) {
        (self.edges_nm[0], *self.edges_nm.last().unwrap())
    }

    pub fn density_at(&self, wavelength_nm: f64) -> f64 {
        let (lo, hi) = self.support_nm();
        if !(lo..=hi).contains(&wavelength_nm) {
            return 0.0;
        }
        let idx = self.edges_nm.partition_point(|&e| e <= wavelength_nm);
        self.density[idx.saturating_sub(1).min(self.density.len() - 1)]
    }

    /// Fraction of the emission between `lo_nm` and `hi_nm`.
    pub fn fraction_in(&self, lo_nm: f64, hi_nm: f64) -> f64 {
        if hi_nm <= lo_nm {
            return 0.0;
        }
        let mut total = 0.0;
        for (i, d) in self.density.iter().enumerate() {
            let a = self.edges_nm[i].max(lo_nm);
            let b = self.edges_nm[i + 1].min(hi_nm);
            if b > a {
                total += d * (b - a);
            }
        }
        total.clamp(0.0, 1.0)
    }
}

impl TryFrom<SpectrumSpec> for SpectralDensity {
    type Error = String;

    fn try_from(s: SpectrumSpec) -> Result<Self, String> {
        if s.edges_nm.len() < 2 || s.weights.len() + 1 != s.edges_nm.len() {
            return Err("spectrum needs n + 1 edges for n weights (n >= 1)".into());
        }
        if s.edges_nm.windows(2).any(|w| !(w[1] > w[0])) || s.edges_nm.iter().any(|e| !e.is_finite()) {
            return Err("spectrum edges must be finite and strictly increasing".into());
        }
        if s.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err("spectrum weights must be finite and >= 0".into());
        }
        let area: f64 = s
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * (s.edges_nm[i + 1] - s.edges_nm[i]))
            .sum();
        if !(area > 0.0) {
            return Err("spectrum has zero area".into());
        }
        let density = s.weights.iter().map(|w| w / area).collect();
        Ok(Self {
            edges_nm: s.edges_nm,
            weights: s.weights,
            density,
        })
    }
}

impl From<SpectralDensity> for SpectrumSpec {
    fn from(s: SpectralDensity) -> Self {
        SpectrumSpec {
            edges_nm: s.edges_nm,
            weights: s.weights,
        }
    }
}

/// How the backflash yield follows the excess bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum YieldScaling {
    Constant,
    /// Yield grows linearly with excess bias (avalanche charge proxy);
    /// `mean_photons_per_avalanche` is the yield at the reference bias.
    ProportionalToExcessBias {
        reference_excess_bias_v: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackflashProfile {
    pub shape: TemporalDensity,
    pub mean_photons_per_avalanche: f64,
    pub yield_scaling: YieldScaling,
    pub spectrum: SpectralDensity,
}

impl BackflashProfile {
    pub fn yield_at(&self, excess_bias_v: f64) -> f64 {
        match self.yield_scaling {
            YieldScaling::Constant => self.mean_photons_per_avalanche,
            YieldScaling::ProportionalToExcessBias {
                reference_excess_bias_v,
            } => self.mean_photons_per_avalanche * excess_bias_v / reference_excess_bias_v,
        }
    }
}

/// Evaluates the temporal emission density (per ns) at `t_ns` after avalanche start.
pub fn profile_density(profile: &BackflashProfile, t_ns: f64) -> f64 {
    profile.shape.pdf(t_ns)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn midpoint_integral(d: &TemporalDensity, steps: usize) -> f64 {
        let len = d.duration_ns();
        let h = len / steps as f64;
        (0..steps).map(|i| d.pdf((i as f64 + 0.5) * h) * h).sum()
    }

    #[test]
    fn rectangle_density_is_one_over_duration() {
        let d = TemporalDensity::rectangular(10.0).unwrap();
        assert!((d.pdf(5.0) - 0.1).abs() < 1e-15);
        assert_eq!(d.pdf(-1.0), 0.0);
        assert_eq!(d.pdf(10.5), 0.0);
    }

    #[test]
    fn trapezoid_ramp_midpoint_is_half_plateau() {
        let d = TemporalDensity::trapezoidal(10.0, 2.0, 2.0).unwrap();
        let plateau = d.pdf(5.0);
        assert!((plateau - 0.125).abs() < 1e-15);
        assert!((d.pdf(1.0) - plateau / 2.0).abs() < 1e-15);
        // numeric integration oracle, midpoint rule is exact per linear piece when knots align
        assert!((midpoint_integral(&d, 100_000) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn triangle_dedupes_knots() {
        let d = TemporalDensity::trapezoidal(4.0, 2.0, 2.0).unwrap();
        assert!((d.pdf(2.0) - 0.5).abs() < 1e-12);
        assert!((d.cdf(2.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(TemporalDensity::rectangular(0.0).is_err());
        assert!(TemporalDensity::trapezoidal(4.0, 3.0, 2.0).is_err());
        assert!(TemporalDensity::piecewise_linear(vec![[1.0, 1.0], [2.0, 1.0]]).is_err());
        assert!(TemporalDensity::piecewise_linear(vec![[0.0, 0.0], [2.0, 0.0]]).is_err());
        assert!(serde_json::from_str::<TemporalDensity>(r#"{"kind":"rectangular","duration_ns":-1}"#).is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        let d = TemporalDensity::piecewise_linear(vec![[0.0, 0.0], [1.0, 3.0], [4.0, 1.0], [6.0, 0.0]]).unwrap();
        for i in 0..=100 {
            let u = i as f64 / 100.0;
            let t = d.quantile(u);
            assert!((d.cdf(t) - u).abs() < 1e-9, "u={u} t={t}");
        }
    }

    #[test]
    fn spectral_fraction_of_flat_band() {
        let s = SpectralDensity::flat(1530.0, 1600.0).unwrap();
        assert!((s.fraction_in(1545.0, 1555.0) - 1.0 / 7.0).abs() < 1e-15);
        assert!((s.density_at(1560.0) - 1.0 / 70.0).abs() < 1e-15);
        assert_eq!(s.fraction_in(1400.0, 1500.0), 0.0);
        assert!((s.fraction_in(0.0, 5000.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn serde_round_trip_keeps_spec() {
        let d = TemporalDensity::trapezoidal(12.0, 2.0, 3.0).unwrap();
        let text = serde_json::to_string(&d).unwrap();
        assert!(text.contains("\"kind\":\"trapezoidal\""));
        let back: TemporalDensity = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
    }
}
