//! The Fourier symbol M(xi, eta) = int_0^1 |(xi - eta) tau + eta|^{2s} dtau,
//! its exponential, finite-difference derivatives and the derivative-bound audits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{graded_rule, GaussLegendre};
use crate::report::{loglog_slope, RatioReport};

/// Fractional order with the derived quantities s* and the integration-by-parts order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracParam {
    pub s: f64,
    pub s_star: f64,
    #[serde(rename = "box")]
    pub boxp: u32,
}

impl FracParam {
    /// Accepts 0 < s <= 1. The endpoint s = 1 is the Gaussian oracle case.
    pub fn new(s: f64) -> Result<Self> {
        if !s.is_finite() || s <= 0.0 || s > 1.0 {
            return Err(Error::Config(format!("s must lie in (0, 1], got {s}")));
        }
        let (s_star, boxp) = if s <= 0.5 { (s, 2) } else { (s - 0.5, 3) };
        Ok(FracParam { s, s_star, boxp })
    }

    pub fn is_oracle(&self) -> bool {
        self.s >= 1.0
    }

    /// Bound audits are only meaningful for 0 < s < 1.
    pub fn require_fractional(&self) -> Result<()> {
        if self.is_oracle() {
            Err(Error::Config("bound audits require 0 < s < 1; s = 1 is oracle-only".into()))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqPoint {
    pub xi: f64,
    pub eta: f64,
}

impl FreqPoint {
    pub fn new(xi: f64, eta: f64) -> Self {
        FreqPoint { xi, eta }
    }

    fn check(&self) -> Result<()> {
        if self.xi.is_finite() && self.eta.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("non-finite frequency ({}, {})", self.xi, self.eta)))
        }
    }
}

/// Derivative orders in xi and eta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivOrder {
    pub m1: u32,
    pub m2: u32,
}

pub const MAX_FD_ORDER: u32 = 6;

impl DerivOrder {
    pub fn new(m1: u32, m2: u32) -> Result<Self> {
        if m1 + m2 > MAX_FD_ORDER {
            return Err(Error::Config(format!(
                "derivative order {m1}+{m2} exceeds the finite-difference budget {MAX_FD_ORDER}"
            )));
        }
        Ok(DerivOrder { m1, m2 })
    }

    pub fn total(&self) -> u32 {
        self.m1 + self.m2
    }
}

/// Relative distance to the diagonal below which the closed form is replaced by quadrature.
pub const DIAGONAL_SWITCH: f64 = 1e-6;

/// M(xi, eta) without input validation, for inner loops.
///
/// Same-sign arguments use expm1/ln_1p so that the quotient
/// (|xi|^{2s} xi - |eta|^{2s} eta) / (xi - eta) loses no digits near the diagonal.
#[inline]
pub fn m_value(xi: f64, eta: f64, s: f64) -> f64 {
    let p = 2.0 * s;
    let d = xi - eta;
    let scale = xi.abs() + eta.abs();
    if scale == 0.0 {
        return 0.0;
    }
    if d == 0.0 {
        return xi.abs().powf(p);
    }
    if d.abs() <= DIAGONAL_SWITCH * scale {
        return m_gauss(xi, eta, s, &GL32);
    }
    if xi * eta > 0.0 {
        // both nonzero with equal sign: scale by the larger magnitude
        let (big, small) = if xi.abs() >= eta.abs() { (xi, eta) } else { (eta, xi) };
        let r = (small - big) / big; // in (-1, 0)
        let u = r.ln_1p();
        big.abs().powf(p) * ((p + 1.0) * u).exp_m1() / ((p + 1.0) * r)
    } else {
        (xi.abs().powf(p + 1.0) + eta.abs().powf(p + 1.0)) / ((p + 1.0) * d.abs())
    }
}

static GL32: std::sync::LazyLock<GaussLegendre> = std::sync::LazyLock::new(|| GaussLegendre::new(32));

fn m_gauss(xi: f64, eta: f64, s: f64, gl: &GaussLegendre) -> f64 {
    let p = 2.0 * s;
    let f = |tau: f64| ((xi - eta) * tau + eta).abs().powf(p);
    let denom = eta - xi;
    let cross = if denom != 0.0 { eta / denom } else { f64::NAN };
    if cross > 0.0 && cross < 1.0 {
        // the integrand vanishes like |tau - tau*|^{2s} at the kink: grade toward it
        let piece = |a: f64, b: f64| graded_rule(gl, a, b).into_iter().map(|(t, w)| w * f(t)).sum::<f64>();
        piece(0.0, cross) + piece(cross, 1.0)
    } else {
        gl.integrate(0.0, 1.0, f)
    }
}

/// Closed form of M with the diagonal limit |xi|^{2s}.
pub fn m_closed(p: FreqPoint, fp: FracParam) -> Result<f64> {
    p.check()?;
    Ok(m_value(p.xi, p.eta, fp.s))
}

/// Gauss-Legendre evaluation of the integral form, split at the kink tau* = eta / (eta - xi).
pub fn m_quadrature(p: FreqPoint, fp: FracParam, nodes: usize) -> Result<f64> {
    p.check()?;
    if nodes < 8 {
        return Err(Error::Config(format!("m_quadrature needs at least 8 nodes, got {nodes}")));
    }
    Ok(m_gauss(p.xi, p.eta, fp.s, &GaussLegendre::new(nodes)))
}

/// e^{-M(xi, eta)}.
pub fn exp_m(p: FreqPoint, fp: FracParam) -> Result<f64> {
    Ok((-m_closed(p, fp)?).exp())
}

/// Which function a derivative audit differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    #[serde(rename = "M")]
    M,
    #[serde(rename = "expM")]
    ExpM,
}

impl Target {
    pub fn eval(&self, xi: f64, eta: f64, s: f64) -> f64 {
        match self {
            Target::M => m_value(xi, eta, s),
            Target::ExpM => (-m_value(xi, eta, s)).exp(),
        }
    }
}

/// Central stencil of order m with O(h^2) error: offsets in units of h and weights.
fn central_stencil(m: u32) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m as usize + 1);
    let mut binom = 1.0;
    for k in 0..=m {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        out.push((m as f64 / 2.0 - k as f64, sign * binom));
        binom = binom * (m - k) as f64 / (k + 1) as f64;
    }
    out
}

fn tensor_difference<F: Fn(f64, f64) -> f64>(f: &F, xi: f64, eta: f64, d: DerivOrder, hx: f64, hy: f64) -> f64 {
    let sx = central_stencil(d.m1);
    let sy = central_stencil(d.m2);
    let mut acc = 0.0;
    for &(ox, wx) in &sx {
        for &(oy, wy) in &sy {
            acc += wx * wy * f(xi + ox * hx, eta + oy * hy);
        }
    }
    acc / (hx.powi(d.m1 as i32) * hy.powi(d.m2 as i32))
}

/// Tensor central differences with one Richardson step (h and h/2), O(h^4).
pub fn fd_derivative<F: Fn(f64, f64) -> f64>(f: &F, xi: f64, eta: f64, d: DerivOrder, hx: f64, hy: f64) -> f64 {
    if d.total() == 0 {
        return f(xi, eta);
    }
    let coarse = tensor_difference(f, xi, eta, d, hx, hy);
    let fine = tensor_difference(f, xi, eta, d, 0.5 * hx, 0.5 * hy);
    (4.0 * fine - coarse) / 3.0
}

fn check_stencil(p: FreqPoint, d: DerivOrder, hx: f64, hy: f64) -> Result<()> {
    if !(hx > 0.0 && hy > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got ({hx}, {hy})")));
    }
    let k = d.total().max(1) as f64;
    if (d.m1 > 0 && p.xi.abs() < 4.0 * hx * k) || (d.m2 > 0 && p.eta.abs() < 4.0 * hy * k) {
        return Err(Error::Domain(format!(
            "stencil at ({}, {}) with steps ({hx}, {hy}) crosses an axis",
            p.xi, p.eta
        )));
    }
    Ok(())
}

/// Finite-difference derivative of M with a common step h in both directions.
pub fn m_deriv_fd(p: FreqPoint, fp: FracParam, d: DerivOrder, h: f64) -> Result<f64> {
    m_deriv_fd_steps(p, fp, d, h, h, Target::M)
}

/// Finite-difference derivative of M or e^{-M} with separate steps per direction.
pub fn m_deriv_fd_steps(p: FreqPoint, fp: FracParam, d: DerivOrder, hx: f64, hy: f64, target: Target) -> Result<f64> {
    p.check()?;
    check_stencil(p, d, hx, hy)?;
    let s = fp.s;
    Ok(fd_derivative(&|a, b| target.eval(a, b, s), p.xi, p.eta, d, hx, hy))
}

/// (|xi|^{2s+1-m1} + |eta|^{2s+1-m2}) / (|xi|^{m1+1} + |eta|^{m2+1}).
pub fn m_derivative_bound(p: FreqPoint, fp: FracParam, d: DerivOrder) -> Result<f64> {
    p.check()?;
    if p.xi == 0.0 && p.eta == 0.0 {
        return Err(Error::Domain("derivative bound undefined at the origin".into()));
    }
    let q = 2.0 * fp.s + 1.0;
    let num = pow0(p.xi.abs(), q - d.m1 as f64) + pow0(p.eta.abs(), q - d.m2 as f64);
    let den = p.xi.abs().powi(d.m1 as i32 + 1) + p.eta.abs().powi(d.m2 as i32 + 1);
    let out = num / den;
    if out.is_finite() {
        Ok(out)
    } else {
        Err(Error::Domain(format!("bound is not finite at ({}, {})", p.xi, p.eta)))
    }
}

/// The bound for derivatives of e^{-M}; its right-hand side coincides with the one for M.
pub fn exp_m_derivative_bound(p: FreqPoint, fp: FracParam, d: DerivOrder) -> Result<f64> {
    m_derivative_bound(p, fp, d)
}

fn pow0(x: f64, e: f64) -> f64 {
    if x == 0.0 && e == 0.0 {
        1.0
    } else {
        x.powf(e)
    }
}

/// Log-spaced sampling region for the derivative audits.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AuditRegion {
    pub r_min: f64,
    pub r_max: f64,
    pub per_decade: usize,
}

/// Smallest admissible |xi| or |eta| in an audit grid.
pub const AXIS_EXCLUSION: f64 = 1e-2;

/// Relative finite-difference step used by the audits, per direction.
pub const AUDIT_STEP: f64 = 1e-3;

impl AuditRegion {
    /// Points (a, b) and (a, -b) with a, b log-spaced and a + b in [r_min, r_max].
    pub fn points(&self) -> Result<Vec<FreqPoint>> {
        if !(self.r_min > 0.0 && self.r_max >= self.r_min) || self.per_decade == 0 {
            return Err(Error::Config(format!("invalid audit region {self:?}")));
        }
        let lo = (self.r_min / 20.0).max(AXIS_EXCLUSION);
        if lo > self.r_min / 2.0 {
            return Err(Error::Domain(format!(
                "region radius {} forces samples inside the axis exclusion zone |.| < {AXIS_EXCLUSION}",
                self.r_min
            )));
        }
        let mags = logspace(lo, self.r_max, self.per_decade);
        let mut pts = Vec::new();
        for &a in &mags {
            for &b in &mags {
                let r = a + b;
                if r >= self.r_min * (1.0 - 1e-12) && r <= self.r_max * (1.0 + 1e-12) {
                    pts.push(FreqPoint::new(a, b));
                    pts.push(FreqPoint::new(a, -b));
                }
            }
        }
        Ok(pts)
    }
}

pub fn logspace(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = ((decades * per_decade as f64).round() as usize).max(1);
    (0..=n).map(|k| lo * (hi / lo).powf(k as f64 / n as f64)).collect()
}

/// Ratio |finite-difference derivative| / bound over a region for all orders up to `max_order`.
///
/// The boundary slope is the least-squares slope of log(sup ratio per radius bin)
/// against log radius, with radius |xi| + |eta|.
pub fn audit_derivative_bounds(region: AuditRegion, fp: FracParam, max_order: u32, target: Target) -> Result<RatioReport> {
    fp.require_fractional()?;
    if max_order > 3 {
        return Err(Error::Config(format!("audits support total order <= 3, got {max_order}")));
    }
    let pts = region.points()?;
    let nbins = ((region.r_max / region.r_min).log10() * region.per_decade as f64).ceil().max(1.0) as usize;
    let mut bins = vec![0.0f64; nbins];
    let mut report = RatioReport::new();
    let mut extrapolated = 0usize;
    let bin_of = |p: &FreqPoint| {
        let r = p.xi.abs() + p.eta.abs();
        (((r / region.r_min).log10() * region.per_decade as f64).floor().max(0.0) as usize).min(nbins - 1)
    };
    let centre = |k: usize| region.r_min * 10f64.powf((k as f64 + 0.5) / region.per_decade as f64);
    let slope_of = |bins: &[f64]| {
        let s: Vec<(f64, f64)> = bins.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(k, &v)| (centre(k), v)).collect();
        loglog_slope(&s)
    };
    for m1 in 0..=max_order {
        for m2 in 0..=(max_order - m1) {
            let d = DerivOrder::new(m1, m2)?;
            if (m1 == 0) != (m2 == 0) {
                extrapolated += 1;
            }
            let tag = format!("order ({m1},{m2})");
            let mut own = vec![0.0f64; nbins];
            for &p in &pts {
                let hx = AUDIT_STEP * p.xi.abs();
                let hy = AUDIT_STEP * p.eta.abs();
                let val = m_deriv_fd_steps(p, fp, d, hx, hy, target)
                    .map_err(|e| Error::Domain(format!("{e} (order {m1},{m2})")))?;
                let bound = m_derivative_bound(p, fp, d)?;
                let ratio = val.abs() / bound;
                if !ratio.is_finite() {
                    return Err(Error::Domain(format!("non-finite ratio at ({}, {})", p.xi, p.eta)));
                }
                report.observe(ratio, (p.xi, p.eta), Some(&[tag.as_str()]));
                let k = bin_of(&p);
                bins[k] = bins[k].max(ratio);
                own[k] = own[k].max(ratio);
            }
            report.notes.push(format!("{tag}: slope {:.4}", slope_of(&own)));
        }
    }
    report.boundary_slope = slope_of(&bins);
    report.passed = report.sup_ratio.is_finite() && report.boundary_slope <= 0.05;
    report.notes.push(format!(
        "{extrapolated} of the audited orders mix a zero and a nonzero index; the bound is stated for positive orders and is extrapolated there"
    ));
    Ok(report)
}

/// M and its first three eta-derivatives at (xi, eta), eta != 0.
///
/// Away from the diagonal M is the divided difference (F(xi) - F(eta)) / ((2s+1)(xi - eta))
/// with F(u) = u |u|^{2s}, differentiated by the Leibniz rule. Near the diagonal both
/// arguments share a sign and d^j/d eta^j M = int_0^1 (1 - tau)^j g_j(u(tau)) dtau with
/// u = eta + tau (xi - eta) and g_j the j-th derivative of |u|^{2s}.
pub fn m_eta_derivatives(xi: f64, eta: f64, s: f64) -> [f64; 4] {
    let p = 2.0 * s;
    let d = xi - eta;
    let big = xi.abs().max(eta.abs());
    if xi * eta > 0.0 && d.abs() <= 0.1 * big {
        let mut out = [0.0; 4];
        for (tau, w) in GL16.mapped(0.0, 1.0) {
            let u = eta + tau * d;
            let a = u.abs();
            let sg = u.signum();
            let ap = a.powf(p);
            let g = [ap, p * ap / a * sg, p * (p - 1.0) * ap / (a * a), p * (p - 1.0) * (p - 2.0) * ap / (a * a * a) * sg];
            let om = 1.0 - tau;
            let mut f = 1.0;
            for j in 0..4 {
                out[j] += w * f * g[j];
                f *= om;
            }
        }
        return out;
    }
    let q = p + 1.0;
    let fe = |u: f64| u * u.abs().powf(p);
    let a = eta.abs();
    let ap = a.powf(p);
    let sg = eta.signum();
    // A_0 = F(xi) - F(eta), A_i = -F^{(i)}(eta)
    let big_a = [fe(xi) - fe(eta), -q * ap, -q * p * ap / a * sg, -q * p * (p - 1.0) * ap / (a * a)];
    // h^{(k)} = k! / (q d^{k+1})
    let h = [1.0 / (q * d), 1.0 / (q * d * d), 2.0 / (q * d * d * d), 6.0 / (q * d * d * d * d)];
    let binom = [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0], [1.0, 3.0, 3.0, 1.0]];
    let mut out = [0.0; 4];
    for j in 0..4 {
        for i in 0..=j {
            out[j] += binom[j][i] * big_a[i] * h[j - i];
        }
    }
    out
}

/// d^k/d eta^k e^{-M} for k <= 3 from M and its eta-derivatives.
#[inline]
pub fn exp_m_eta_derivative(k: u32, m: &[f64; 4]) -> f64 {
    let e = (-m[0]).exp();
    match k {
        0 => e,
        1 => -m[1] * e,
        2 => (m[1] * m[1] - m[2]) * e,
        3 => (-m[1] * m[1] * m[1] + 3.0 * m[1] * m[2] - m[3]) * e,
        _ => panic!("eta-derivative order {k} exceeds 3"),
    }
}

static GL16: std::sync::LazyLock<GaussLegendre> = std::sync::LazyLock::new(|| GaussLegendre::new(16));
