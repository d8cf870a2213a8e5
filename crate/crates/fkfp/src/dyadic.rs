//! Littlewood-Paley partition, dyadic block integrals after integration by parts in eta,
//! their regime bounds, and the block-sum reconstruction of kernel derivatives.
//!
//! In sheared coordinates (x, w) at t = 1,
//! d_x^{b1} d_w^{b2} K = (2 pi)^{-2} i^B sum_a C_{a,b2} w^{-(B+b2-a)}
//!     int int (i xi)^{b1} (i eta)^a d_eta^B e^{-M} e^{i(xi x + eta w)} dxi deta,
//! with B = 2 for s <= 1/2 and B = 3 for s > 1/2. Splitting the frequency plane with
//! chi(|xi|/2^{m1}) chi(|eta|/2^{m2}) gives one block per (m1, m2).

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::GaussLegendre;
use crate::report::{linear_slope, RatioReport};
use crate::symbol::{exp_m_eta_derivative, fd_derivative, m_eta_derivatives, m_value, DerivOrder, FracParam};

/// psi(t) = e^{-1/t} / (e^{-1/t} + e^{-1/(1-t)}) on (0, 1); 0 below and 1 above.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        1.0 / (1.0 + (1.0 / t - 1.0 / (1.0 - t)).exp())
    }
}

/// Smooth cutoff phi = 1 on [0, a], 0 on [2a, inf); chi(r) = phi(r) - phi(2r).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LPBump {
    pub ramp_start: f64,
}

impl Default for LPBump {
    fn default() -> Self {
        LPBump { ramp_start: 1.0 }
    }
}

impl LPBump {
    pub fn phi(&self, r: f64) -> f64 {
        1.0 - smooth_step(r / self.ramp_start - 1.0)
    }

    /// Supported in [a/2, 2a].
    pub fn chi(&self, r: f64) -> f64 {
        if r <= 0.5 * self.ramp_start || r >= 2.0 * self.ramp_start {
            return 0.0;
        }
        self.phi(r) - self.phi(2.0 * r)
    }
}

/// chi(r / 2^m) for the default bump.
pub fn lp_chi(r: f64, m: i32) -> f64 {
    LPBump::default().chi(r * 2f64.powi(-m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NearDiagonal,
    EtaDominant,
    XiDominant,
}

impl Regime {
    pub fn of(m1: i32, m2: i32) -> Self {
        if (m1 - m2).abs() <= 2 {
            Regime::NearDiagonal
        } else if m2 >= m1 + 3 {
            Regime::EtaDominant
        } else {
            Regime::XiDominant
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Regime::NearDiagonal => "near_diagonal",
            Regime::EtaDominant => "eta_dominant",
            Regime::XiDominant => "xi_dominant",
        }
    }
}

/// G blocks (two integrations by parts, s <= 1/2) or H blocks (three, s > 1/2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    G,
    H,
}

impl Branch {
    pub fn of(fp: FracParam) -> Self {
        if fp.boxp == 2 {
            Branch::G
        } else {
            Branch::H
        }
    }
}

/// Exponents n1..n5 (G) or n6..n10 (H, stored in the same slots).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NParams {
    pub branch: Branch,
    pub n: [u32; 5],
}

impl NParams {
    fn thresholds(fp: FracParam, b1: u32, b2: u32) -> (f64, f64) {
        let shift = if Branch::of(fp) == Branch::G { 0.0 } else { 1.0 };
        (2.0 * fp.s + (b1 + b2) as f64 - shift, 2.0 * fp.s + b2 as f64 - shift)
    }

    /// Smallest admissible integers, with n1 + n2 split as evenly as possible and n4 = 0.
    pub fn policy(fp: FracParam, b1: u32, b2: u32) -> Self {
        let (t, t5) = Self::thresholds(fp, b1, b2);
        let big = t.floor() as u32 + 1;
        NParams { branch: Branch::of(fp), n: [big.div_ceil(2), big / 2, big, 0, t5.floor() as u32 + 1] }
    }

    pub fn check(&self, fp: FracParam, b1: u32, b2: u32) -> Result<()> {
        if self.branch != Branch::of(fp) {
            return Err(Error::Contract(format!("{:?} exponents supplied for a {:?} block", self.branch, Branch::of(fp))));
        }
        let (t, t5) = Self::thresholds(fp, b1, b2);
        let [n1, n2, n3, _, n5] = self.n;
        if n1 + n2 == 0 || ((n1 + n2) as f64) <= t || (n3 as f64) <= t || (n5 as f64) <= t5 {
            return Err(Error::Contract(format!("exponents {:?} are not admissible for s = {}, b = ({b1}, {b2})", self.n, fp.s)));
        }
        Ok(())
    }
}

/// binom(b2, a) (-1)^{b2-a} B (B+1) ... (B+b2-a-1): from d_w^{b2} of w^{-B} e^{i eta w}.
pub fn leibniz_constant(a: u32, b2: u32, boxp: u32) -> f64 {
    assert!(a <= b2);
    let mut binom = 1.0;
    for k in 0..a {
        binom = binom * (b2 - k) as f64 / (k + 1) as f64;
    }
    let j = b2 - a;
    let rising: f64 = (0..j).map(|k| (boxp + k) as f64).product();
    let sign = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
    binom * sign * rising
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub m1: i32,
    pub m2: i32,
    pub b1: u32,
    pub b2: u32,
    pub fp: FracParam,
    /// (x, w) in sheared coordinates.
    pub point: (f64, f64),
}

impl BlockSpec {
    pub fn validate(&self) -> Result<()> {
        let (x, w) = self.point;
        if !x.is_finite() || !w.is_finite() {
            return Err(Error::Domain(format!("non-finite point ({x}, {w})")));
        }
        if w == 0.0 {
            return Err(Error::Domain("blocks need w != 0: the integrated-by-parts prefactor carries 1/w powers".into()));
        }
        if self.b1 > 3 || self.b2 > 3 {
            return Err(Error::Config(format!("block derivative orders are limited to 3, got ({}, {})", self.b1, self.b2)));
        }
        if self.m1.abs() > 200 || self.m2.abs() > 200 {
            return Err(Error::Config(format!("dyadic index out of range: ({}, {})", self.m1, self.m2)));
        }
        Ok(())
    }

    pub fn regime(&self) -> Regime {
        Regime::of(self.m1, self.m2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockResult {
    pub m1: i32,
    pub m2: i32,
    pub value: Complex64,
    pub bound: f64,
    pub regime: Regime,
    pub quad_points_used: usize,
    /// The oscillation budget was exceeded; `value` is zero and `bound` stands in for it.
    pub flagged: bool,
}

fn pow_frac(base: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        base.powf(e)
    }
}

/// Right-hand side of the block estimate for the block's regime. Infinite when x = 0
/// and b1 > 0 in the xi-dominant regime, where the estimate is vacuous.
pub fn block_bound(spec: &BlockSpec, np: &NParams) -> Result<f64> {
    spec.validate()?;
    np.check(spec.fp, spec.b1, spec.b2)?;
    let (x, w) = spec.point;
    let (xa, va) = (x.abs(), w.abs());
    let ss = spec.fp.s_star;
    let bx = spec.fp.boxp as f64;
    let (b1, b2) = (spec.b1 as f64, spec.b2 as f64);
    let (m1, m2) = (spec.m1 as f64, spec.m2 as f64);
    let [n1, n2, n3, n4, n5] = np.n;
    let lead = 1.0 / va.powf(bx + b2);
    let out = match spec.regime() {
        Regime::NearDiagonal => {
            let n12 = (n1 + n2) as f64;
            let denom = pow_frac(xa, n1 as f64 / n12) * pow_frac(va, n2 as f64 / n12);
            let mn = if denom == 0.0 { 1.0 } else { (2f64.powf(-m1) / denom).min(1.0) };
            2f64.powf(m1 * (2.0 * ss + b1)) * lead * (va * 2f64.powf(m1)).powf(b2).max(1.0) * mn.powf(n12)
        }
        Regime::EtaDominant => {
            let mn = (2f64.powf(-m2) / va).min(1.0);
            2f64.powf(m1 * (1.0 + b1) + m2 * (2.0 * ss - 1.0)) * lead * (va * 2f64.powf(m2)).powf(b2).max(1.0) * mn.powi(n3 as i32)
        }
        Regime::XiDominant => {
            let xb = xa.powi(spec.b1 as i32);
            if xb == 0.0 {
                return Ok(f64::INFINITY);
            }
            let denom = xa.powi(n4 as i32) * va.powi(n5 as i32);
            let mn = (2f64.powf(-m1 * n4 as f64 - m2 * n5 as f64) / denom).min(1.0);
            2f64.powf(m2 * 2.0 * ss) / xb * lead * (va * 2f64.powf(m2)).powf(b2).max(1.0) * mn
        }
    };
    Ok(out)
}

/// Default dyadic window m1, m2 in [-40, 40].
pub const BLOCK_WINDOW: (i32, i32) = (-40, 40);
/// Lowest index the window may be extended to.
const MIN_WINDOW: i32 = -200;
/// Hard cap on quadrature nodes per axis; beyond it a block is bounded, not evaluated.
pub const MAX_AXIS_NODES: usize = 4096;
const PANEL_NODES: usize = 16;
const BASE_PANELS: usize = 2;
/// Longest panel, in oscillation periods of e^{i xi x}.
const PANEL_PERIODS: f64 = 1.5;
/// Blocks whose tensor rule exceeds this many points get oscillation-aware bounds.
const OSC_REFINE_POINTS: usize = 1 << 16;
/// Safety factor on quadrature-estimated magnitude bounds.
const BOUND_SAFETY: f64 = 1.5;
/// Exponent beyond which e^{-M} and all its polynomial prefactors underflow.
const UNDERFLOW_EXPONENT: f64 = 800.0;

/// Reference rule on the positive half of a block axis, for m = 0: nodes in [1/2, 2].
#[derive(Debug, Clone)]
struct AxisRule {
    r: Vec<f64>,
    /// weight times chi(r)
    wc: Vec<f64>,
    /// weight alone
    w: Vec<f64>,
}

impl AxisRule {
    fn new(gl: &GaussLegendre, panels: [usize; 2]) -> Self {
        let bump = LPBump::default();
        let (mut r, mut wc, mut w) = (Vec::new(), Vec::new(), Vec::new());
        for (half, &p) in [(0.5, 1.0), (1.0, 2.0)].iter().zip(&panels) {
            let h = (half.1 - half.0) / p as f64;
            for k in 0..p {
                let a = half.0 + h * k as f64;
                for (x, wt) in gl.mapped(a, a + h) {
                    r.push(x);
                    w.push(wt);
                    wc.push(wt * bump.chi(x));
                }
            }
        }
        AxisRule { r, wc, w }
    }

    fn len(&self) -> usize {
        self.r.len()
    }
}

fn panels_for(m: i32, freq: f64) -> [usize; 2] {
    let per = |len: f64| -> usize {
        let need = (2f64.powi(m) * len * freq.abs() / (PANEL_PERIODS * 2.0 * PI)).ceil();
        if need.is_finite() && need < 1e9 {
            (need as usize).max(BASE_PANELS)
        } else {
            usize::MAX / 4
        }
    };
    [per(0.5), per(1.0)]
}

fn axis_nodes(panels: [usize; 2]) -> usize {
    panels[0].saturating_add(panels[1]).saturating_mul(PANEL_NODES)
}

const QUADRANTS: [(f64, f64); 4] = [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)];

/// Magnitude moments of one block: sum over quadrants of
/// int int chi chi |xi|^j |eta|^a |d_eta^B e^{-M}|, index j * 4 + a.
type Moments = [f64; 16];

/// Outcome of a truncated block sum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockSum {
    pub value: Complex64,
    /// Sum of magnitude bounds of blocks that were skipped.
    pub skipped_bound: f64,
    /// Sum of magnitude bounds of blocks that exceeded the oscillation budget.
    pub flagged_bound: f64,
    pub evaluated: usize,
    pub skipped: usize,
    pub flagged: usize,
    pub blocks: Vec<BlockResult>,
}

impl BlockSum {
    /// Upper bound on the truncation error of the sum.
    pub fn error_budget(&self) -> f64 {
        self.skipped_bound + self.flagged_bound
    }
}

/// Per-s state: reference tables of M and its eta-derivatives (by homogeneity they
/// depend on m2 - m1 only), magnitude moments and oscillation-aware moments.
pub struct DyadicEngine {
    fp: FracParam,
    window: (i32, i32),
    gl: GaussLegendre,
    base: AxisRule,
    /// Lower constant: M(xi, eta) >= c max(|xi|, |eta|)^{2s}.
    c_low: f64,
    reference: HashMap<i32, Vec<[f64; 4]>>,
    moments: HashMap<(i32, i32), Moments>,
    osc: HashMap<(i32, i32, u32, u32), Vec<[f64; 6]>>,
}

impl DyadicEngine {
    pub fn new(fp: FracParam) -> Self {
        Self::with_window(fp, BLOCK_WINDOW)
    }

    pub fn with_window(fp: FracParam, window: (i32, i32)) -> Self {
        let gl = GaussLegendre::new(PANEL_NODES);
        let base = AxisRule::new(&gl, [BASE_PANELS; 2]);
        let mut c = f64::INFINITY;
        for k in 0..=4000 {
            let u = -1.0 + 2.0 * k as f64 / 4000.0;
            c = c.min(m_value(1.0, u, fp.s)).min(m_value(u, 1.0, fp.s));
        }
        DyadicEngine {
            fp,
            window,
            gl,
            base,
            c_low: 0.9 * c,
            reference: HashMap::new(),
            moments: HashMap::new(),
            osc: HashMap::new(),
        }
    }

    pub fn fp(&self) -> FracParam {
        self.fp
    }

    pub fn window(&self) -> (i32, i32) {
        self.window
    }

    /// True when e^{-M} underflows on the whole block.
    fn underflows(&self, m1: i32, m2: i32) -> bool {
        let lo = 2f64.powi(m1.max(m2) - 1);
        self.c_low * lo.powf(2.0 * self.fp.s) > UNDERFLOW_EXPONENT
    }

    /// Fills the table of M and eta-derivatives on the base rule of block (0, d), all quadrants.
    fn ensure_reference(&mut self, d: i32) {
        if self.reference.contains_key(&d) {
            return;
        }
        let n = self.base.len();
        let scale = 2f64.powi(d);
        let mut out = Vec::with_capacity(4 * n * n);
        for &(sx, sy) in &QUADRANTS {
            for &r in &self.base.r {
                for &rho in &self.base.r {
                    out.push(m_eta_derivatives(sx * r, sy * scale * rho, self.fp.s));
                }
            }
        }
        self.reference.insert(d, out);
    }

    /// d_eta^B e^{-M} at scale 2^{m1} from reference values.
    fn scaled_d(&self, m1: i32, refv: &[f64; 4]) -> f64 {
        let p = 2.0 * self.fp.s;
        let lam = 2f64.powi(m1);
        let lp = lam.powf(p);
        let m = [lp * refv[0], lp / lam * refv[1], lp / (lam * lam) * refv[2], lp / (lam * lam * lam) * refv[3]];
        exp_m_eta_derivative(self.fp.boxp, &m)
    }

    fn moments(&mut self, m1: i32, m2: i32) -> Moments {
        if let Some(q) = self.moments.get(&(m1, m2)) {
            return *q;
        }
        let mut acc = [0.0; 16];
        if !self.underflows(m1, m2) {
            let n = self.base.len();
            self.ensure_reference(m2 - m1);
            let refv = &self.reference[&(m2 - m1)];
            let (lx, ly) = (2f64.powi(m1), 2f64.powi(m2));
            let pw = |r: f64| [1.0, r, r * r, r * r * r];
            let px: Vec<[f64; 4]> = self.base.r.iter().map(|&r| pw(lx * r)).collect();
            let py: Vec<[f64; 4]> = self.base.r.iter().map(|&r| pw(ly * r)).collect();
            for q in 0..4 {
                for k in 0..n {
                    let mut row = [0.0; 4];
                    for l in 0..n {
                        let dv = self.scaled_d(m1, &refv[(q * n + k) * n + l]).abs() * ly * self.base.wc[l];
                        for a in 0..4 {
                            row[a] += dv * py[l][a];
                        }
                    }
                    let wk = lx * self.base.wc[k];
                    for j in 0..4 {
                        for a in 0..4 {
                            acc[j * 4 + a] += wk * px[k][j] * row[a];
                        }
                    }
                }
            }
        }
        self.moments.insert((m1, m2), acc);
        acc
    }

    /// d_eta^B e^{-M} evaluated directly.
    fn direct_d(&self, xi: f64, eta: f64) -> f64 {
        exp_m_eta_derivative(self.fp.boxp, &m_eta_derivatives(xi, eta, self.fp.s))
    }

    /// Moments of |d_xi^k Phi| and |d_eta^k Phi| (k = 1..3) for Phi = chi chi xi^{b1} eta^a D,
    /// which bound the block by |x|^{-k} and |w|^{-k} after integrating by parts.
    fn osc_moments(&mut self, m1: i32, m2: i32, b1: u32, b2: u32) -> Vec<[f64; 6]> {
        if let Some(v) = self.osc.get(&(m1, m2, b1, b2)) {
            return v.clone();
        }
        let bump = LPBump::default();
        let rule = AxisRule::new(&self.gl, [1, 1]);
        let (lx, ly) = (2f64.powi(m1), 2f64.powi(m2));
        let (hx, hy) = (2e-3 * lx, 2e-3 * ly);
        let mut out = vec![[0.0; 6]; b2 as usize + 1];
        for &(sx, sy) in &QUADRANTS {
            for (k, &r) in rule.r.iter().enumerate() {
                for (l, &rho) in rule.r.iter().enumerate() {
                    let xi = sx * lx * r;
                    let eta = sy * ly * rho;
                    for a in 0..=b2 {
                        let fx = |u: f64, _: f64| bump.chi(u.abs() / lx) * u.powi(b1 as i32) * self.direct_d(u, eta);
                        let fy = |_: f64, u: f64| bump.chi(u.abs() / ly) * u.powi(a as i32) * self.direct_d(xi, u);
                        let wx = lx * rule.w[k] * ly * rule.wc[l] * eta.abs().powi(a as i32);
                        let wy = lx * rule.wc[k] * xi.abs().powi(b1 as i32) * ly * rule.w[l];
                        for o in 1..=3u32 {
                            let dx = fd_derivative(&fx, xi, eta, DerivOrder { m1: o, m2: 0 }, hx, hx);
                            let dy = fd_derivative(&fy, xi, eta, DerivOrder { m1: 0, m2: o }, hy, hy);
                            out[a as usize][(o - 1) as usize] += wx * dx.abs();
                            out[a as usize][(o + 2) as usize] += wy * dy.abs();
                        }
                    }
                }
            }
        }
        self.osc.insert((m1, m2, b1, b2), out.clone());
        out
    }

    /// Integral of chi chi (i xi)^{b1} (i eta)^a D e^{i(xi x + eta w)} over all quadrants, a = 0..=b2.
    fn integrate(&mut self, m1: i32, m2: i32, x: f64, w: f64, b1: u32, b2: u32) -> (Vec<Complex64>, usize) {
        let px = panels_for(m1, x);
        let py = panels_for(m2, w);
        let cached = px == [BASE_PANELS; 2] && py == [BASE_PANELS; 2];
        let (rx, ry) = if cached {
            (self.base.clone(), self.base.clone())
        } else {
            (AxisRule::new(&self.gl, px), AxisRule::new(&self.gl, py))
        };
        if cached {
            self.ensure_reference(m2 - m1);
        }
        let refv = if cached { self.reference.get(&(m2 - m1)) } else { None };
        let (lx, ly) = (2f64.powi(m1), 2f64.powi(m2));
        let (nx, ny) = (rx.len(), ry.len());
        let na = b2 as usize + 1;
        let i = Complex64::new(0.0, 1.0);
        let mut acc = vec![Complex64::new(0.0, 0.0); na];
        let mut cy = vec![Complex64::new(0.0, 0.0); ny * na];
        for (q, &(sx, sy)) in QUADRANTS.iter().enumerate() {
            for l in 0..ny {
                let eta = sy * ly * ry.r[l];
                let base = Complex64::from_polar(ly * ry.wc[l], eta * w);
                let ie = i * eta;
                let mut pw = Complex64::new(1.0, 0.0);
                for a in 0..na {
                    cy[l * na + a] = base * pw;
                    pw *= ie;
                }
            }
            for k in 0..nx {
                if rx.wc[k] == 0.0 {
                    continue;
                }
                let xi = sx * lx * rx.r[k];
                let cx = Complex64::from_polar(lx * rx.wc[k], xi * x) * (i * xi).powu(b1);
                let mut row = vec![Complex64::new(0.0, 0.0); na];
                for l in 0..ny {
                    let dv = match refv {
                        Some(r) => self.scaled_d(m1, &r[(q * nx + k) * ny + l]),
                        None => self.direct_d(xi, sy * ly * ry.r[l]),
                    };
                    if dv == 0.0 {
                        continue;
                    }
                    for a in 0..na {
                        row[a] += cy[l * na + a] * dv;
                    }
                }
                for a in 0..na {
                    acc[a] += cx * row[a];
                }
            }
        }
        (acc, 4 * nx * ny)
    }

    fn prefactors(&self, w: f64, b2: u32) -> Vec<Complex64> {
        let boxp = self.fp.boxp;
        let ib = Complex64::new(0.0, 1.0).powu(boxp);
        (0..=b2)
            .map(|a| ib * leibniz_constant(a, b2, boxp) * w.powi(-((boxp + b2 - a) as i32)) / (4.0 * PI * PI))
            .collect()
    }

    /// Magnitude bound of one block at (x, w); oscillation-aware when `refine` is set.
    #[allow(clippy::too_many_arguments)]
    fn magnitude_bound(&mut self, m1: i32, m2: i32, x: f64, w: f64, b1: u32, b2: u32, refine: bool) -> f64 {
        let q = self.moments(m1, m2);
        let pref = self.prefactors(w, b2);
        let osc = if refine { Some(self.osc_moments(m1, m2, b1, b2)) } else { None };
        let mut out = 0.0;
        for a in 0..=b2 as usize {
            let mut mag = q[b1 as usize * 4 + a];
            if let Some(o) = &osc {
                for k in 0..3 {
                    let p = (k + 1) as i32;
                    if x != 0.0 {
                        mag = mag.min(BOUND_SAFETY * o[a][k] / x.abs().powi(p));
                    }
                    mag = mag.min(BOUND_SAFETY * o[a][k + 3] / w.abs().powi(p));
                }
            }
            out += pref[a].norm() * mag;
        }
        out
    }

    fn block_cost(m1: i32, m2: i32, x: f64, w: f64) -> (usize, usize) {
        (axis_nodes(panels_for(m1, x)), axis_nodes(panels_for(m2, w)))
    }

    /// Evaluates one block. Blocks whose integrand underflows return exactly zero.
    pub fn eval_block(&mut self, spec: &BlockSpec) -> Result<BlockResult> {
        spec.validate()?;
        if spec.fp != self.fp {
            return Err(Error::Contract("block spec and engine disagree on s".into()));
        }
        let (x, w) = spec.point;
        let np = NParams::policy(self.fp, spec.b1, spec.b2);
        let bound = block_bound(spec, &np)?;
        let mut res = BlockResult {
            m1: spec.m1,
            m2: spec.m2,
            value: Complex64::new(0.0, 0.0),
            bound,
            regime: spec.regime(),
            quad_points_used: 0,
            flagged: false,
        };
        if self.underflows(spec.m1, spec.m2) {
            return Ok(res);
        }
        let (nx, ny) = Self::block_cost(spec.m1, spec.m2, x, w);
        if nx > MAX_AXIS_NODES || ny > MAX_AXIS_NODES {
            res.flagged = true;
            return Ok(res);
        }
        let (ints, used) = self.integrate(spec.m1, spec.m2, x, w, spec.b1, spec.b2);
        let pref = self.prefactors(w, spec.b2);
        res.value = ints.iter().zip(&pref).map(|(a, b)| a * b).sum();
        res.quad_points_used = used;
        Ok(res)
    }

    /// Truncated block sum for d_x^{b1} d_w^{b2} K(1, x, w).
    ///
    /// Blocks are skipped in increasing order of their magnitude bound while the skipped
    /// total stays below tol / 2. When the blocks on the lower window edge carry more
    /// than tol / 4 the window is extended downward (the slowly decaying low-frequency
    /// tail of the H branch needs this); the sum fails when that does not help.
    pub fn sum_blocks(&mut self, x: f64, w: f64, b1: u32, b2: u32, tol: f64) -> Result<BlockSum> {
        if !(tol > 0.0) {
            return Err(Error::Config(format!("block-sum tolerance must be positive, got {tol}")));
        }
        let probe = BlockSpec { m1: 0, m2: 0, b1, b2, fp: self.fp, point: (x, w) };
        probe.validate()?;
        let (mut lo, hi) = self.window;
        loop {
            let cands = self.candidates(lo, hi, x, w, b1, b2, tol);
            let edge = |on: &dyn Fn(i32, i32) -> bool| cands.iter().filter(|c| on(c.1, c.2)).map(|c| c.0).sum::<f64>();
            let low_edge = edge(&|m1, m2| m1 == lo || m2 == lo);
            let high_edge = edge(&|m1, m2| m1 == hi || m2 == hi);
            if high_edge > 0.25 * tol || (low_edge > 0.25 * tol && lo <= MIN_WINDOW) {
                return Err(Error::Accuracy {
                    msg: format!("blocks on the edge of the window ({lo}, {hi}) carry {:.2e} > tol/4", low_edge.max(high_edge)),
                    best: f64::NAN,
                });
            }
            if low_edge > 0.25 * tol {
                lo -= 20;
                continue;
            }
            return self.sum_candidates(cands, x, w, b1, b2, tol);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn candidates(&mut self, lo: i32, hi: i32, x: f64, w: f64, b1: u32, b2: u32, tol: f64) -> Vec<(f64, i32, i32)> {
        let mut cands = Vec::with_capacity(((hi - lo + 1) * (hi - lo + 1)) as usize);
        for m1 in lo..=hi {
            for m2 in lo..=hi {
                let mut b = self.magnitude_bound(m1, m2, x, w, b1, b2, false);
                if b > 0.0 {
                    let (nx, ny) = Self::block_cost(m1, m2, x, w);
                    if nx.saturating_mul(ny) > OSC_REFINE_POINTS && b > 1e-6 * tol {
                        b = self.magnitude_bound(m1, m2, x, w, b1, b2, true);
                    }
                }
                cands.push((b, m1, m2));
            }
        }
        cands
    }

    fn sum_candidates(&mut self, mut cands: Vec<(f64, i32, i32)>, x: f64, w: f64, b1: u32, b2: u32, tol: f64) -> Result<BlockSum> {
        cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then((a.1, a.2).cmp(&(b.1, b.2))));
        let mut skipped_bound = 0.0;
        let mut skipped = 0;
        let mut keep = Vec::new();
        for &(b, m1, m2) in &cands {
            if skipped_bound + b <= 0.5 * tol {
                skipped_bound += b;
                skipped += 1;
            } else {
                keep.push((m1, m2, b));
            }
        }
        keep.sort_by_key(|&(m1, m2, _)| (m1, m2));
        let mut out = BlockSum {
            value: Complex64::new(0.0, 0.0),
            skipped_bound,
            flagged_bound: 0.0,
            evaluated: 0,
            skipped,
            flagged: 0,
            blocks: Vec::with_capacity(keep.len()),
        };
        for (m1, m2, b) in keep {
            let r = self.eval_block(&BlockSpec { m1, m2, b1, b2, fp: self.fp, point: (x, w) })?;
            if r.flagged {
                out.flagged += 1;
                out.flagged_bound += b;
            } else {
                out.evaluated += 1;
                out.value += r.value;
            }
            out.blocks.push(r);
        }
        Ok(out)
    }
}

/// One-off block evaluation.
pub fn block_eval(spec: &BlockSpec) -> Result<BlockResult> {
    DyadicEngine::new(spec.fp).eval_block(spec)
}

/// One-off block sum; see [`DyadicEngine::sum_blocks`].
pub fn sum_blocks(x: f64, w: f64, fp: FracParam, b1: u32, b2: u32, tol: f64) -> Result<Complex64> {
    Ok(DyadicEngine::new(fp).sum_blocks(x, w, b1, b2, tol)?.value)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockRecord {
    pub point: (f64, f64),
    pub m1: i32,
    pub m2: i32,
    pub regime: Regime,
    pub abs_value: f64,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockAudit {
    pub s: f64,
    pub b1: u32,
    pub b2: u32,
    pub nparams: NParams,
    pub report: RatioReport,
    /// (m1 + m2, sup ratio at that level)
    pub levels: Vec<(i32, f64)>,
    pub blocks: Vec<BlockRecord>,
}

/// Ratio |block| / bound over every evaluated block at every point.
///
/// The boundary slope is the least-squares slope of log2(sup ratio per level m1 + m2)
/// against the level; a pass needs finite ratios and slope <= 0.05.
/// Largest growth rate of log2 ratio toward either end of the level range,
/// fitted over the outer quarter (at least three levels) on each side.
pub fn edge_growth(pts: &[(f64, f64)]) -> f64 {
    let k = (pts.len() / 4).max(3).min(pts.len());
    let low = -linear_slope(&pts[..k]);
    let high = linear_slope(&pts[pts.len() - k..]);
    match (low.is_nan(), high.is_nan()) {
        (true, true) => f64::NAN,
        (true, false) => high,
        (false, true) => low,
        _ => low.max(high),
    }
}

pub fn audit_block_bounds(
    engine: &mut DyadicEngine,
    points: &[(f64, f64)],
    b1: u32,
    b2: u32,
    np: NParams,
    tol: f64,
) -> Result<BlockAudit> {
    let fp = engine.fp();
    fp.require_fractional()?;
    np.check(fp, b1, b2)?;
    let mut report = RatioReport::new();
    let mut levels: std::collections::BTreeMap<i32, f64> = std::collections::BTreeMap::new();
    let mut blocks = Vec::new();
    for &(x, w) in points {
        let sum = engine.sum_blocks(x, w, b1, b2, tol)?;
        for r in sum.blocks.iter().filter(|r| !r.flagged) {
            let spec = BlockSpec { m1: r.m1, m2: r.m2, b1, b2, fp, point: (x, w) };
            let bound = block_bound(&spec, &np)?;
            let ratio = r.value.norm() / bound;
            if !ratio.is_finite() {
                if bound.is_infinite() {
                    continue;
                }
                return Err(Error::Domain(format!("non-finite block ratio at ({x}, {w}), block ({}, {})", r.m1, r.m2)));
            }
            report.observe(ratio, (x, w), Some(&[r.regime.tag()]));
            let e = levels.entry(r.m1 + r.m2).or_insert(0.0);
            *e = e.max(ratio);
            blocks.push(BlockRecord { point: (x, w), m1: r.m1, m2: r.m2, regime: r.regime, abs_value: r.value.norm(), bound, ratio });
        }
    }
    let levels: Vec<(i32, f64)> = levels.into_iter().filter(|&(_, v)| v > 0.0).collect();
    let pts: Vec<(f64, f64)> = levels.iter().map(|&(l, v)| (l as f64, v.log2())).collect();
    report.boundary_slope = edge_growth(&pts);
    report.passed = report.sup_ratio.is_finite() && report.boundary_slope <= 0.05;
    Ok(BlockAudit { s: fp.s, b1, b2, nparams: np, report, levels, blocks })
}
