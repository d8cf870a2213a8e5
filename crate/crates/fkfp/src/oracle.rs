//! Independent reference values: closed forms at s = 1 and s = 1/2, and a
//! polar-projection quadrature that evaluates the inverse Fourier integral pointwise.
//!
//! The multiplier is exp(-A(theta) r^{2s}) in polar frequency coordinates, so the
//! radial integral reduces to the one-dimensional transform
//! J_k(beta) = int_0^inf r^{1+k} e^{-r^{2s}} e^{i beta r} dr,
//! evaluated on a rotated ray where it decays exponentially.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Coords;
use crate::inversion::{derivative_symbol, TableRequest};
use crate::quad::{graded_rule, GaussLegendre};
use crate::symbol::{m_value, FracParam};
use crate::table::KernelTable;

const SQRT3_OVER_2PI: f64 = 0.275_664_447_710_896_5;

/// s = 1 kernel in sheared coordinates: (sqrt3 / 2pi) exp(-(x^2 - x w + w^2)).
pub fn gaussian_sheared(x: f64, w: f64) -> f64 {
    SQRT3_OVER_2PI * (-(x * x - x * w + w * w)).exp()
}

/// s = 1 kernel in physical coordinates: (sqrt3 / 2pi) exp(-(3x^2 - 3xv + v^2)).
pub fn gaussian_physical(x: f64, v: f64) -> f64 {
    SQRT3_OVER_2PI * (-(3.0 * x * x - 3.0 * x * v + v * v)).exp()
}

/// Velocity marginal at s = 1/2: the Cauchy density 1 / (pi (1 + v^2)).
pub fn cauchy(v: f64) -> f64 {
    1.0 / (PI * (1.0 + v * v))
}

/// J_k(beta) on precomputed nodes for one (s, k).
pub struct RadialTransform {
    k: u32,
    phase: Complex64,
    /// weight * (1/alpha) t^{(2+k)/alpha - 1} e^{-t e^{i alpha phi}}
    g: Vec<Complex64>,
    /// e^{i phi} t^{1/alpha}
    q: Vec<Complex64>,
}

impl RadialTransform {
    pub fn new(s: f64, k: u32) -> Self {
        let alpha = 2.0 * s;
        let phi = PI / (2.0 * (1.0 + alpha));
        let ea = Complex64::from_polar(1.0, alpha * phi);
        let ep = Complex64::from_polar(1.0, phi);
        let t_max = 60.0 / (alpha * phi).cos();
        let t_min = 1e-10;
        let ratio: f64 = 1.35;
        let panels = ((t_max / t_min).ln() / ratio.ln()).ceil() as usize;
        let gl = GaussLegendre::new(24);
        let mut edges = vec![0.0, t_min];
        for p in 1..=panels {
            edges.push(t_min * (t_max / t_min).powf(p as f64 / panels as f64));
        }
        let pw = (2.0 + k as f64) / alpha - 1.0;
        let mut g = Vec::new();
        let mut q = Vec::new();
        for win in edges.windows(2) {
            for (t, w) in gl.mapped(win[0], win[1]) {
                g.push((-t * ea).exp() * (w * t.powf(pw) / alpha));
                q.push(ep * t.powf(1.0 / alpha));
            }
        }
        RadialTransform { k, phase: Complex64::from_polar(1.0, phi * (2.0 + k as f64)), g, q }
    }

    pub fn order(&self) -> u32 {
        self.k
    }

    pub fn eval(&self, beta: f64) -> Complex64 {
        let b = beta.abs();
        let i_b = Complex64::new(0.0, b);
        let sum: Complex64 = self.g.iter().zip(&self.q).map(|(g, q)| g * (i_b * q).exp()).sum();
        let out = self.phase * sum;
        if beta < 0.0 {
            out.conj()
        } else {
            out
        }
    }
}

/// Pointwise evaluation of the kernel (or a derivative) by polar projection.
pub struct QuadratureOracle {
    fp: FracParam,
    req: TableRequest,
    radial: RadialTransform,
}

/// Default starting resolution per theta segment.
const BASE_NODES: usize = 96;
const MAX_NODES: usize = 3072;

impl QuadratureOracle {
    pub fn new(fp: FracParam, req: TableRequest) -> Result<Self> {
        if !(req.t > 0.0) {
            return Err(Error::Config(format!("time must be positive, got {}", req.t)));
        }
        Ok(QuadratureOracle { fp, req, radial: RadialTransform::new(fp.s, req.b1 + req.b2) })
    }

    /// A(theta): the multiplier is exp(-A r^{2s}) along the direction theta.
    fn angular(&self, c: f64, sn: f64) -> f64 {
        let t = self.req.t;
        let a = match self.req.coords {
            Coords::Sheared => t * c,
            Coords::Physical => sn + t * c,
        };
        t * m_value(a, sn, self.fp.s)
    }

    fn integrand(&self, th: f64, x: f64, y: f64) -> f64 {
        let (sn, c) = th.sin_cos();
        let a = self.angular(c, sn);
        let alpha = 2.0 * self.fp.s;
        let k = (self.req.b1 + self.req.b2) as f64;
        let beta = (x * c + y * sn) * a.powf(-1.0 / alpha);
        let p = derivative_symbol(c, sn, self.req.t, self.req.b1, self.req.b2, self.req.coords, self.req.frame);
        (p * self.radial.eval(beta) * a.powf(-(2.0 + k) / alpha)).re
    }

    /// Breakpoints in [0, pi]: where an argument of M vanishes and where beta = 0.
    fn breakpoints(&self, x: f64, y: f64) -> Vec<f64> {
        let mut b = vec![0.0, PI, 0.5 * PI];
        if self.req.coords == Coords::Physical {
            b.push(PI - self.req.t.atan());
        }
        if x != 0.0 || y != 0.0 {
            b.push((-x).atan2(y).rem_euclid(PI));
        }
        b.sort_by(|a, c| a.partial_cmp(c).unwrap());
        b.dedup_by(|a, c| (*a - *c).abs() < 1e-14);
        b
    }

    fn integrate(&self, x: f64, y: f64, nodes: usize, bps: &[f64]) -> f64 {
        let gl = GaussLegendre::new(nodes);
        let mut acc = 0.0;
        for w in bps.windows(2) {
            for (th, wt) in graded_rule(&gl, w[0], w[1]) {
                acc += wt * self.integrand(th, x, y);
            }
        }
        2.0 * acc / (4.0 * PI * PI)
    }

    /// Value at (x, y) in the request's coordinates and the last refinement difference.
    pub fn eval(&self, x: f64, y: f64, tol: f64) -> Result<(f64, f64)> {
        if tol < 1e-10 {
            return Err(Error::Config(format!("quadrature tolerance must be >= 1e-10, got {tol}")));
        }
        let bps = self.breakpoints(x, y);
        let mut n = BASE_NODES;
        let mut prev = self.integrate(x, y, n, &bps);
        loop {
            n *= 2;
            let cur = self.integrate(x, y, n, &bps);
            let err = (cur - prev).abs();
            if err <= tol {
                return Ok((cur, err));
            }
            if n >= MAX_NODES {
                return Err(Error::Accuracy { msg: format!("theta refinement stalled at ({x}, {y}) with delta {err:.2e}"), best: cur });
            }
            prev = cur;
        }
    }
}

impl QuadratureOracle {
    /// Sum over the eight nearest periodic images (x + jP, y + kP) and its refinement error.
    /// A table on a lattice of period P holds the image sum, so this is its leading aliasing term.
    pub fn image_ring(&self, x: f64, y: f64, period: f64, tol: f64) -> Result<(f64, f64)> {
        let mut sum = 0.0;
        let mut err = 0.0;
        for j in -1i32..=1 {
            for k in -1i32..=1 {
                if j == 0 && k == 0 {
                    continue;
                }
                let (v, e) = self.eval(x + j as f64 * period, y + k as f64 * period, tol)?;
                sum += v;
                err += e;
            }
        }
        Ok((sum, err))
    }
}

/// One table value against the quadrature oracle.
///
/// A lattice table holds the periodic image sum minus the discarded spectrum, so the
/// nearest image ring is added to the oracle value and the remaining rings, which are
/// smaller than the first for kernels decaying faster than r^{-2}, are charged to the budget
/// together with the spectral truncation bound and both refinement errors.
#[derive(Debug, Clone, Serialize)]
pub struct PointCheck {
    pub x: f64,
    pub y: f64,
    pub table: f64,
    pub quadrature: f64,
    pub ring: f64,
    pub diff: f64,
    pub budget: f64,
}

impl PointCheck {
    pub fn ratio(&self) -> f64 {
        self.diff / self.budget
    }
}

/// Compares a table with the quadrature oracle at the lattice points nearest to `points`.
pub fn compare_table(table: &KernelTable, points: &[(f64, f64)], tol: f64) -> Result<Vec<PointCheck>> {
    let h = &table.header;
    let req = TableRequest { t: h.t, b1: h.b1, b2: h.b2, coords: h.coords, frame: h.frame };
    let q = QuadratureOracle::new(FracParam::new(h.s)?, req)?;
    let g = table.grid();
    points
        .iter()
        .map(|&(x, y)| {
            let (i, j) = (g.nearest_index(x), g.nearest_index(y));
            let (x, y) = (g.coord(i), g.coord(j));
            let (val, err) = q.eval(x, y, tol)?;
            let (ring, ring_err) = q.image_ring(x, y, g.period(), tol)?;
            let diff = (table.get(i, j) - val - ring).abs();
            let budget = err + ring_err + h.meta.truncation_bound + ring.abs();
            Ok(PointCheck { x, y, table: table.get(i, j), quadrature: val, ring, diff, budget })
        })
        .collect()
}

/// Convenience wrapper: one-off pointwise evaluation.
pub fn invert_quadrature(x: f64, y: f64, fp: FracParam, req: TableRequest, tol: f64) -> Result<(f64, f64)> {
    QuadratureOracle::new(fp, req)?.eval(x, y, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DerivFrame;

    #[test]
    fn radial_transform_matches_laplace_closed_form_at_half() {
        // alpha = 1: J_k(beta) = (k+1)! / (1 - i beta)^{k+2}
        for k in 0..3u32 {
            let rt = RadialTransform::new(0.5, k);
            let fact: f64 = (1..=k + 1).map(|j| j as f64).product();
            for &b in &[0.0, 0.3, -2.0, 17.0, 400.0] {
                let want = Complex64::new(fact, 0.0) / Complex64::new(1.0, -b).powu(k + 2);
                let got = rt.eval(b);
                assert!((got - want).norm() < 1e-13 * want.norm().max(1e-3), "k={k} b={b} {got} {want}");
            }
        }
    }

    #[test]
    fn radial_transform_at_zero_is_gamma() {
        // J_0(0) = Gamma(2/alpha) / alpha
        let rt = RadialTransform::new(0.25, 0);
        assert!((rt.eval(0.0).re - 6.0 / 0.5).abs() < 1e-10);
        let rt = RadialTransform::new(1.0, 0);
        assert!((rt.eval(0.0).re - 0.5).abs() < 1e-13);
    }

    #[test]
    fn gaussian_oracle_values() {
        let one = FracParam::new(1.0).unwrap();
        let q = QuadratureOracle::new(one, TableRequest::kernel(Coords::Sheared)).unwrap();
        for &(x, w) in &[(0.0, 0.0), (0.3, 0.2), (-1.0, 0.5), (2.0, 2.5)] {
            let (v, _) = q.eval(x, w, 1e-10).unwrap();
            assert!((v - gaussian_sheared(x, w)).abs() < 1e-12, "({x},{w}) {v}");
        }
        let q = QuadratureOracle::new(one, TableRequest::kernel(Coords::Physical)).unwrap();
        let (v, _) = q.eval(0.4, 1.1, 1e-10).unwrap();
        assert!((v - gaussian_physical(0.4, 1.1)).abs() < 1e-12);
    }

    #[test]
    fn odd_derivative_vanishes_at_origin() {
        for s in [0.25, 0.5, 0.75] {
            let fp = FracParam::new(s).unwrap();
            let req = TableRequest::derivative(1, 0, Coords::Sheared, DerivFrame::Sheared);
            let (v, _) = invert_quadrature(0.0, 0.0, fp, req, 1e-10).unwrap();
            assert!(v.abs() < 1e-10, "{s}: {v}");
        }
    }

    #[test]
    fn gaussian_derivative_oracle() {
        let one = FracParam::new(1.0).unwrap();
        let req = TableRequest::derivative(1, 1, Coords::Sheared, DerivFrame::Sheared);
        let (x, w) = (0.4, -0.3);
        let (v, _) = invert_quadrature(x, w, one, req, 1e-10).unwrap();
        // d_x d_w G = ((2x - w)(2w - x) + 1) G
        let want = ((2.0 * x - w) * (2.0 * w - x) + 1.0) * gaussian_sheared(x, w);
        assert!((v - want).abs() < 1e-12, "{v} {want}");
    }

    #[test]
    fn tolerance_floor_is_enforced() {
        let fp = FracParam::new(0.5).unwrap();
        assert!(invert_quadrature(0.0, 0.0, fp, TableRequest::kernel(Coords::Sheared), 1e-12).is_err());
    }
}
