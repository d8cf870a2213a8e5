//! The pointwise majorant of kernel derivatives, region-tagged ratio audits against
//! tables, ray slope fits and the rescaled majorant at other times.
//!
//! The sheared variable is w = v - x (w = v - x/t at time t), so the brackets read
//! <x, w>, <x> and <w>.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Coords, DerivFrame};
use crate::report::{loglog_slope, RatioReport};
use crate::symbol::FracParam;
use crate::table::{fmt17, KernelTable};

/// Pass threshold for the ratio slope near the window edge.
pub const SLOPE_LIMIT: f64 = 0.05;

/// Fraction of the window (by radius) used for the boundary slope.
pub const OUTER_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub eps: f64,
    pub b1: u32,
    pub b2: u32,
    pub fp: FracParam,
    /// Added to the joint exponent 2 + 2s - 2 eps; nonzero only for negative controls.
    pub extra: f64,
}

impl EnvelopeParams {
    pub fn new(fp: FracParam, b1: u32, b2: u32, eps: f64) -> Result<Self> {
        let ep = EnvelopeParams { eps, b1, b2, fp, extra: 0.0 };
        ep.validate()?;
        Ok(ep)
    }

    /// eps = 0.1 min(s, 1 - s).
    pub fn default_eps(fp: FracParam) -> f64 {
        0.1 * fp.s.min(1.0 - fp.s)
    }

    pub fn with_default_eps(fp: FracParam, b1: u32, b2: u32) -> Result<Self> {
        Self::new(fp, b1, b2, Self::default_eps(fp))
    }

    /// The tightened majorant whose joint exponent is one larger.
    pub fn negative_control(mut self) -> Self {
        self.extra = 1.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.fp.s;
        if !(self.eps > 0.0 && self.eps < s) {
            return Err(Error::Config(format!("eps must lie in (0, s) = (0, {s}), got {}", self.eps)));
        }
        if !(2.0 + 2.0 * s - 2.0 * self.eps > 0.0) {
            return Err(Error::Config("joint exponent 2 + 2s - 2 eps must be positive".into()));
        }
        if self.b1 > 1 || self.b2 > 1 {
            return Err(Error::Config(format!("derivative orders must be 0 or 1, got ({}, {})", self.b1, self.b2)));
        }
        Ok(())
    }

    fn joint_exponent(&self) -> f64 {
        2.0 + 2.0 * self.fp.s - 2.0 * self.eps + self.extra
    }
}

/// Region of the sheared plane a point belongs to; overlaps are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionTag {
    Small,
    VDominant,
    XDominant,
}

impl RegionTag {
    pub fn name(self) -> &'static str {
        match self {
            RegionTag::Small => "small",
            RegionTag::VDominant => "v_dominant",
            RegionTag::XDominant => "x_dominant",
        }
    }

    /// Tags of a point given in sheared variables (x, w).
    pub fn of(x: f64, w: f64) -> Vec<RegionTag> {
        let mut out = Vec::with_capacity(2);
        if x.abs() <= 1.0 && w.abs() <= 1.0 {
            out.push(RegionTag::Small);
        }
        if w.abs() >= x.abs() {
            out.push(RegionTag::VDominant);
        }
        if x.abs() >= w.abs() {
            out.push(RegionTag::XDominant);
        }
        out
    }
}

/// sqrt(1 + a^2 + b^2).
pub fn bracket2(a: f64, b: f64) -> f64 {
    (1.0 + a * a + b * b).sqrt()
}

/// sqrt(1 + a^2).
pub fn bracket(a: f64) -> f64 {
    (1.0 + a * a).sqrt()
}

/// The majorant at a physical point (x, v) at t = 1.
pub fn envelope_eval(x: f64, v: f64, ep: &EnvelopeParams) -> f64 {
    envelope_sheared(x, v - x, ep)
}

/// The majorant in sheared variables (x, w).
pub fn envelope_sheared(x: f64, w: f64, ep: &EnvelopeParams) -> f64 {
    let e = ep.eps;
    1.0 / (bracket2(x, w).powf(ep.joint_exponent())
        * bracket(x).powf(e + ep.b1 as f64)
        * bracket(w).powf(e + ep.b2 as f64))
}

/// The rescaled majorant at time t and a physical point (x, v):
/// t^{-1-(2+b1+b2)/(2s)-b1} times the t = 1 majorant at (x t^{-1-1/(2s)}, v t^{-1/(2s)}).
pub fn envelope_at_time(t: f64, x: f64, v: f64, ep: &EnvelopeParams) -> f64 {
    let inv = 1.0 / (2.0 * ep.fp.s);
    let xs = x * t.powf(-1.0 - inv);
    let vs = v * t.powf(-inv);
    let pre = t.powf(-1.0 - (2.0 + (ep.b1 + ep.b2) as f64) * inv - ep.b1 as f64);
    pre * envelope_eval(xs, vs, ep)
}

/// Least-squares slope of log |value| against log radius.
pub fn slope_fit(samples: &[(f64, f64)]) -> f64 {
    let abs: Vec<(f64, f64)> = samples.iter().map(|&(r, y)| (r, y.abs())).collect();
    loglog_slope(&abs)
}

fn check_table(table: &KernelTable, ep: &EnvelopeParams, t: f64) -> Result<()> {
    ep.validate()?;
    let h = &table.header;
    if h.coords != Coords::Physical {
        return Err(Error::Contract("envelope audits need a table in physical coordinates".into()));
    }
    if h.frame != DerivFrame::Sheared && h.b1 + h.b2 > 0 {
        return Err(Error::Contract("envelope audits need sheared-frame derivatives".into()));
    }
    if (h.s - ep.fp.s).abs() > 1e-15 || h.b1 != ep.b1 || h.b2 != ep.b2 || (h.t - t).abs() > 1e-15 * t {
        return Err(Error::Contract(format!(
            "table (s={}, t={}, b=({},{})) does not match the audit (s={}, t={t}, b=({},{}))",
            h.s, h.t, h.b1, h.b2, ep.fp.s, ep.b1, ep.b2
        )));
    }
    Ok(())
}

/// Ratio |table| / majorant over |x|, |v| <= window, tagged by region, with the slope
/// of the per-shell supremum against the shell radius max(|x|, |v|) on the outer part.
fn audit(table: &KernelTable, window: f64, t: f64, env: &dyn Fn(f64, f64) -> f64) -> Result<RatioReport> {
    let g = *table.grid();
    if window > g.half_extent() {
        return Err(Error::Config(format!("window {window} exceeds the table half extent {}", g.half_extent())));
    }
    let n = g.n();
    let half = n / 2;
    let dx = g.dx();
    let k_max = (window / dx + 1e-9).floor() as usize;
    let k_in = ((1.0 - OUTER_FRACTION) * window / dx).ceil() as usize;
    let mut shells = vec![0.0f64; k_max + 1];
    let mut rep = RatioReport::new();
    for i in half - k_max..=half + k_max {
        let x = g.coord(i);
        for j in half - k_max..=half + k_max {
            let v = g.coord(j);
            let e = env(x, v);
            let r = table.get(i, j).abs() / e;
            let tags: Vec<&str> = RegionTag::of(x, v - x / t).into_iter().map(RegionTag::name).collect();
            rep.observe(r, (x, v), Some(&tags));
            let k = (i as i64 - half as i64).unsigned_abs().max((j as i64 - half as i64).unsigned_abs()) as usize;
            shells[k] = shells[k].max(r);
        }
    }
    let outer: Vec<(f64, f64)> = (k_in.max(1)..=k_max).map(|k| (k as f64 * dx, shells[k])).collect();
    rep.boundary_slope = loglog_slope(&outer);
    rep.passed = rep.sup_ratio.is_finite() && rep.boundary_slope.is_finite() && rep.boundary_slope <= SLOPE_LIMIT;
    rep.notes.push(format!(
        "window {window}, shells {:.3}..{:.3}, slope limit {SLOPE_LIMIT}",
        k_in.max(1) as f64 * dx,
        k_max as f64 * dx
    ));
    Ok(rep)
}

/// Audits a t = 1 physical-coordinate table against the majorant on |x|, |v| <= window.
pub fn verify_envelope(table: &KernelTable, ep: &EnvelopeParams, window: f64) -> Result<RatioReport> {
    check_table(table, ep, 1.0)?;
    let mut rep = audit(table, window, 1.0, &|x, v| envelope_eval(x, v, ep))?;
    rep.notes.push(format!("s={}, b=({},{}), eps={}, extra exponent {}", ep.fp.s, ep.b1, ep.b2, ep.eps, ep.extra));
    Ok(rep)
}

/// Audits a time-t physical-coordinate table against the rescaled majorant.
pub fn verify_scaled_envelope(t: f64, ep: &EnvelopeParams, table_t: &KernelTable, window: f64) -> Result<RatioReport> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Config(format!("time must be positive, got {t}")));
    }
    check_table(table_t, ep, t)?;
    let mut rep = audit(table_t, window, t, &|x, v| envelope_at_time(t, x, v, ep))?;
    rep.notes.push(format!("t={t}, s={}, b=({},{}), eps={}", ep.fp.s, ep.b1, ep.b2, ep.eps));
    Ok(rep)
}

/// Lattice samples (radius, value) along the ray x = 0 (v >= 0) or v = 0 (x >= 0).
pub fn ray_samples(table: &KernelTable, along_v: bool, r_min: f64, r_max: f64) -> Vec<(f64, f64)> {
    let g = table.grid();
    let n = g.n();
    let half = n / 2;
    (half..n)
        .filter_map(|k| {
            let r = g.coord(k);
            if r < r_min || r > r_max {
                return None;
            }
            let val = if along_v { table.get(half, k) } else { table.get(k, half) };
            Some((r, val))
        })
        .collect()
}

/// Writes ray samples with the majorant alongside as CSV: r, value, envelope.
pub fn write_ray_csv(path: &Path, samples: &[(f64, f64)], along_v: bool, ep: &EnvelopeParams) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "r,value,envelope")?;
    for &(r, val) in samples {
        let e = if along_v { envelope_eval(0.0, r, ep) } else { envelope_eval(r, 0.0, ep) };
        writeln!(f, "{},{},{}", fmt17(r), fmt17(val), fmt17(e))?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpectralGrid;
    use crate::inversion::{invert_fft, BuildOptions, TableRequest};
    use crate::oracle::gaussian_physical;

    fn fp(s: f64) -> FracParam {
        FracParam::new(s).unwrap()
    }

    #[test]
    fn bracket_examples() {
        assert_eq!(bracket2(0.0, 0.0), 1.0);
        assert!((bracket2(3.0, 4.0) - 26f64.sqrt()).abs() < 1e-15);
        assert_eq!(bracket2(1.3, -0.2), bracket2(-0.2, 1.3));
    }

    #[test]
    fn envelope_examples() {
        let ep = EnvelopeParams::new(fp(0.5), 0, 0, 0.1).unwrap();
        assert_eq!(envelope_eval(0.0, 0.0, &ep), 1.0);
        // (x, w) = (1, 0): <x,w> = sqrt2, <x> = sqrt2, <w> = 1
        let want = 1.0 / (2f64.sqrt().powf(2.8) * 2f64.sqrt().powf(0.1));
        assert!((envelope_eval(1.0, 1.0, &ep) - want).abs() < 1e-15);
    }

    #[test]
    fn envelope_decay_along_velocity_axis() {
        let ep = EnvelopeParams::new(fp(0.5), 0, 0, 0.05).unwrap();
        let s: Vec<(f64, f64)> = [1e3, 2e3, 4e3, 8e3].iter().map(|&v| (v, envelope_eval(0.0, v, &ep))).collect();
        // <x> = 1 on this ray, so only one eps factor survives: exponent 2 + 2s - eps
        assert!((slope_fit(&s) + 2.95).abs() < 1e-3);
    }

    #[test]
    fn params_are_validated() {
        assert!(EnvelopeParams::new(fp(0.5), 0, 0, 0.0).is_err());
        assert!(EnvelopeParams::new(fp(0.5), 0, 0, 0.5).is_err());
        assert!(EnvelopeParams::new(fp(0.5), 2, 0, 0.1).is_err());
        assert!((EnvelopeParams::default_eps(fp(0.75)) - 0.025).abs() < 1e-15);
    }

    #[test]
    fn every_point_gets_a_tag() {
        for &(x, w) in &[(0.0, 0.0), (3.0, -1.0), (-0.5, 7.0), (2.0, 2.0)] {
            assert!(!RegionTag::of(x, w).is_empty());
        }
        assert_eq!(RegionTag::of(2.0, 2.0).len(), 2);
    }

    #[test]
    fn scaled_envelope_reduces_at_unit_time() {
        let ep = EnvelopeParams::new(fp(0.25), 1, 0, 0.02).unwrap();
        for &(x, v) in &[(0.3, -2.0), (5.0, 1.0)] {
            assert!((envelope_at_time(1.0, x, v, &ep) - envelope_eval(x, v, &ep)).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_samples_have_zero_slope() {
        assert!(slope_fit(&[(1.0, -2.0), (2.0, 2.0), (3.0, 2.0)]).abs() < 1e-14);
    }

    #[test]
    fn gaussian_ray_is_super_polynomial() {
        let g = SpectralGrid::new(128, 20.0).unwrap();
        let t = invert_fft(&g, fp(1.0), TableRequest::kernel(Coords::Physical), &BuildOptions::default()).unwrap();
        let rays = ray_samples(&t, true, 1.0, 4.0);
        for &(r, v) in &rays {
            assert!((v - gaussian_physical(0.0, r)).abs() < 1e-12);
        }
        assert!(slope_fit(&rays) < -10.0);
    }

    #[test]
    fn mismatched_table_is_rejected() {
        let g = SpectralGrid::new(128, 20.0).unwrap();
        let t = invert_fft(&g, fp(1.0), TableRequest::kernel(Coords::Sheared), &BuildOptions::default()).unwrap();
        let ep = EnvelopeParams::new(fp(0.5), 0, 0, 0.1).unwrap();
        assert!(matches!(verify_envelope(&t, &ep, 5.0), Err(Error::Contract(_))));
    }
}
