//! Audit outcomes and the log-log slope fit shared by every audit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Outcome of a bound audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioReport {
    pub sup_ratio: f64,
    pub argmax: (f64, f64),
    pub boundary_slope: f64,
    pub passed: bool,
    pub samples: usize,
    /// Supremum of the ratio per region tag.
    pub regions: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl Default for RatioReport {
    fn default() -> Self {
        Self::new()
    }
}

impl RatioReport {
    pub fn new() -> Self {
        RatioReport {
            sup_ratio: 0.0,
            argmax: (f64::NAN, f64::NAN),
            boundary_slope: f64::NAN,
            passed: false,
            samples: 0,
            regions: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    /// Records one ratio; ties keep the first location so reductions are order-stable.
    pub fn observe(&mut self, ratio: f64, at: (f64, f64), tags: Option<&[&str]>) {
        self.samples += 1;
        if ratio > self.sup_ratio || self.argmax.0.is_nan() {
            self.sup_ratio = ratio;
            self.argmax = at;
        }
        if let Some(tags) = tags {
            for t in tags {
                let e = self.regions.entry((*t).to_string()).or_insert(0.0);
                if ratio > *e {
                    *e = ratio;
                }
            }
        }
    }
}

/// Least-squares slope of log y against log x. Non-positive samples are ignored.
pub fn loglog_slope(samples: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    linear_slope(&pts)
}

/// Least-squares slope of y against x; NaN with fewer than two distinct abscissae.
pub fn linear_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        f64::NAN
    } else {
        sxy / sxx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let s: Vec<(f64, f64)> = (1..20).map(|k| (k as f64, 3.0 * (k as f64).powf(-2.5))).collect();
        assert!((loglog_slope(&s) + 2.5).abs() < 1e-12);
    }

    #[test]
    fn constant_samples_have_zero_slope() {
        let s: Vec<(f64, f64)> = (1..10).map(|k| (k as f64, 0.7)).collect();
        assert!(loglog_slope(&s).abs() < 1e-14);
    }

    #[test]
    fn observe_tracks_sup_and_regions() {
        let mut r = RatioReport::new();
        r.observe(1.0, (0.0, 0.0), Some(&["small"]));
        r.observe(3.0, (1.0, 2.0), Some(&["v_dominant"]));
        r.observe(3.0, (5.0, 5.0), Some(&["v_dominant", "x_dominant"]));
        assert_eq!(r.sup_ratio, 3.0);
        assert_eq!(r.argmax, (1.0, 2.0));
        assert_eq!(r.regions["x_dominant"], 3.0);
        assert_eq!(r.samples, 3);
    }
}
