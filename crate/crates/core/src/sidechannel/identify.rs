use serde::{Deserialize, Serialize};

use super::grid::{mass_grid, GRID_STEP_PS};
use crate::error::{Error, Result};
use crate::model::{TemporalDensity, FWHM_PER_SIGMA};
use crate::tracelab::{DelayRegion, ResidualHistogram};

/// A named reference emission profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub shape: TemporalDensity,
}

impl CatalogEntry {
    pub fn new(name: impl Into<String>, shape: TemporalDensity) -> Self {
        Self {
            name: name.into(),
            shape,
        }
    }
}

/// Profiles of the detector families shipped with the tool.
pub fn builtin_catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry::new("rectangular-10ns", TemporalDensity::rectangular(10.0).unwrap()),
        CatalogEntry::new("rectangular-5ns", TemporalDensity::rectangular(5.0).unwrap()),
        CatalogEntry::new(
            "trapezoidal-10ns",
            TemporalDensity::trapezoidal(10.0, 2.0, 2.0).unwrap(),
        ),
        CatalogEntry::new(
            "trapezoidal-20ns",
            TemporalDensity::trapezoidal(20.0, 4.0, 4.0).unwrap(),
        ),
    ]
}

/// Normalized, non-negative temporal shape measured over a delay region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionShape {
    pub start_ps: f64,
    pub bin_width_ps: f64,
    pub weights: Vec<f64>,
}

impl RegionShape {
    /// Background-subtracted counts inside `region`, clipped at zero and normalized.
    pub fn from_residual(residual: &ResidualHistogram, region: DelayRegion) -> Result<Self> {
        let bins = residual.bins_for(region)?;
        let w = residual.geometry.bin_width_ps as f64;
        Self::from_values(bins.start as f64 * w, w, &residual.values[bins])
    }

    pub fn from_values(start_ps: f64, bin_width_ps: f64, values: &[f64]) -> Result<Self> {
        let clipped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        if !(total > 0.0) {
            return Err(Error::EmptyRegion("no positive residual counts".into()));
        }
        Ok(Self {
            start_ps,
            bin_width_ps,
            weights: clipped.into_iter().map(|v| v / total).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorMatch {
    pub name: String,
    /// Total-variation distance at the best alignment, counting model mass
    /// that falls outside the measured window.
    pub tv_distance: f64,
    /// Fitted delay of the avalanche onset.
    pub onset_ps: f64,
    /// Another entry reached exactly the same distance.
    pub tied: bool,
}

fn best_alignment(measured: &RegionShape, shape: &TemporalDensity, sigma_ps: f64) -> (f64, f64) {
    let h = GRID_STEP_PS;
    let grid = mass_grid(shape, sigma_ps, h, shape.duration_ns() * 1e3);
    let prefix = grid.prefix();
    let n_cells = grid.masses.len() as i64;
    let cells_per_bin = (measured.bin_width_ps / h).round().max(1.0) as i64;
    let bins = measured.weights.len() as i64;
    let window_cells = bins * cells_per_bin;
    let origin_cells = (grid.origin_ps / h).round() as i64;
    let at = |edge: i64| prefix[edge.clamp(0, n_cells) as usize];

    let mut best = (f64::INFINITY, 0.0);
    // onset expressed in grid cells from the window start
    for onset in (-n_cells - origin_cells)..=(window_cells - origin_cells) {
        let mut inside = 0.0;
        let mut l1 = 0.0;
        for (k, &m) in measured.weights.iter().enumerate() {
            let lo = k as i64 * cells_per_bin - onset - origin_cells;
            let model = at(lo + cells_per_bin) - at(lo);
            inside += model;
            l1 += (m - model).abs();
        }
        let tv = (0.5 * (l1 + (1.0 - inside).max(0.0))).clamp(0.0, 1.0);
        if tv < best.0 {
            best = (tv, measured.start_ps + onset as f64 * h);
        }
    }
    best
}

/// Ranks catalog entries by how well their jitter-blurred profile matches the
/// measured shape, best first. Ties are broken by name.
pub fn identify_detector_type(
    measured: &RegionShape,
    catalog: &[CatalogEntry],
    timing_fwhm_ps: f64,
) -> Result<Vec<DetectorMatch>> {
    if catalog.is_empty() {
        return Err(Error::InvalidArgument("detector catalog is empty".into()));
    }
    if measured.weights.is_empty() {
        return Err(Error::EmptyRegion("no positive residual counts".into()));
    }
    let sigma = timing_fwhm_ps.max(0.0) / FWHM_PER_SIGMA;
    let mut out: Vec<DetectorMatch> = catalog
        .iter()
        .map(|e| {
            let (tv, onset) = best_alignment(measured, &e.shape, sigma);
            DetectorMatch {
                name: e.name.clone(),
                tv_distance: tv,
                onset_ps: onset,
                tied: false,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.tv_distance
            .total_cmp(&b.tv_distance)
            .then_with(|| a.name.cmp(&b.name))
    });
    for i in 0..out.len() {
        let tied = (i > 0 && out[i - 1].tv_distance == out[i].tv_distance)
            || (i + 1 < out.len() && out[i + 1].tv_distance == out[i].tv_distance);
        out[i].tied = tied;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sampled(shape: &TemporalDensity, onset_ps: f64, bins: usize) -> RegionShape {
        let w = 100.0;
        let v: Vec<f64> = (0..bins)
            .map(|k| shape.mass_between((k as f64 * w - onset_ps) / 1e3, ((k + 1) as f64 * w - onset_ps) / 1e3))
            .collect();
        RegionShape::from_values(50_000.0, w, &v).unwrap()
    }

    #[test]
    fn exact_shape_is_recovered() {
        let cat = builtin_catalog();
        let m = sampled(&cat[2].shape, 500.0, 120);
        let ranked = identify_detector_type(&m, &cat, 0.0).unwrap();
        assert_eq!(ranked[0].name, "trapezoidal-10ns");
        assert!(ranked[0].tv_distance < 1e-9, "{ranked:?}");
        assert!((ranked[0].onset_ps - 50_500.0).abs() < 1e-6);
        assert!(ranked[1].tv_distance > 0.05);
    }

    #[test]
    fn identical_entries_tie_and_sort_by_name() {
        let s = TemporalDensity::rectangular(10.0).unwrap();
        let cat = vec![CatalogEntry::new("b", s.clone()), CatalogEntry::new("a", s.clone())];
        let ranked = identify_detector_type(&sampled(&s, 300.0, 110), &cat, 0.0).unwrap();
        assert_eq!(ranked[0].name, "a");
        assert!(ranked[0].tied && ranked[1].tied);
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(matches!(
            RegionShape::from_values(0.0, 100.0, &[-1.0, 0.0]),
            Err(Error::EmptyRegion(_))
        ));
        let m = RegionShape::from_values(0.0, 100.0, &[1.0]).unwrap();
        assert!(identify_detector_type(&m, &[], 0.0).is_err());
    }
}
