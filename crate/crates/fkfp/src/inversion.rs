//! FFT tabulation of the kernel and its derivatives, lattice shearing,
//! band-limited interpolation and the self-similar rescaling.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dyadic::smooth_step;
use crate::error::{Error, Result};
use crate::fft::{shift2, Fft2};
pub use crate::grid::lattice_boundary_sup;
use crate::grid::{multiplier, Coords, DerivFrame, FittedGrid, SpectralGrid};
use crate::quad::GaussLegendre;
use crate::symbol::FracParam;
use crate::table::{unix_now, KernelTable, TableHeader, TableMeta, Tolerances};

/// What to tabulate: time, derivative orders, coordinates and derivative frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRequest {
    pub t: f64,
    pub b1: u32,
    pub b2: u32,
    pub coords: Coords,
    pub frame: DerivFrame,
}

impl TableRequest {
    pub fn kernel(coords: Coords) -> Self {
        TableRequest { t: 1.0, b1: 0, b2: 0, coords, frame: DerivFrame::Sheared }
    }

    pub fn derivative(b1: u32, b2: u32, coords: Coords, frame: DerivFrame) -> Self {
        TableRequest { t: 1.0, b1, b2, coords, frame }
    }

    pub fn at_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildOptions {
    pub truncation_tol: f64,
    pub mass_tol: f64,
    /// Fraction of the frequency box over which the spectrum is rolled off smoothly.
    pub taper: Option<f64>,
    /// Resolved configuration echoed into the table metadata.
    pub config: BTreeMap<String, String>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { truncation_tol: 1e-12, mass_tol: 1e-6, taper: None, config: BTreeMap::new() }
    }
}

impl BuildOptions {
    pub fn with_taper(mut self, taper: Option<f64>) -> Self {
        self.taper = taper;
        self
    }
}

/// Symbol of the requested derivative in the coordinates the multiplier lives in.
///
/// With w = v - x/t: d_x|_w = d_x + d_v / t and d_w = d_v.
#[inline]
pub fn derivative_symbol(xi: f64, eta: f64, t: f64, b1: u32, b2: u32, coords: Coords, frame: DerivFrame) -> Complex64 {
    if b1 == 0 && b2 == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let a = match (coords, frame) {
        (Coords::Sheared, DerivFrame::Sheared) | (Coords::Physical, DerivFrame::Physical) => xi,
        (Coords::Physical, DerivFrame::Sheared) => xi + eta / t,
        (Coords::Sheared, DerivFrame::Physical) => xi - eta / t,
    };
    Complex64::new(0.0, a).powu(b1) * Complex64::new(0.0, eta).powu(b2)
}

/// One-dimensional taper weight at |k| / R = u.
pub fn taper_weight(u: f64, fraction: f64) -> f64 {
    1.0 - smooth_step((u - (1.0 - fraction)) / fraction)
}

/// The multiplier sampled on the grid, centered order `[i_xi * n + j_eta]`.
pub fn build_multiplier(grid: &SpectralGrid, fp: FracParam, t: f64, coords: Coords) -> Result<Vec<f64>> {
    check_time(t)?;
    let n = grid.n();
    let freqs: Vec<f64> = (0..n).map(|k| grid.freq(k)).collect();
    let mut out = Vec::with_capacity(n * n);
    for &xi in &freqs {
        for &eta in &freqs {
            out.push(multiplier(xi, eta, fp.s, t, coords));
        }
    }
    Ok(out)
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("time must be positive, got {t}")))
    }
}

/// Tabulates d^{b1} d^{b2} of the kernel by a 2D inverse FFT of the multiplier.
///
/// Forward transforms carry e^{-i(xi x + eta v)}; the inverse carries (2 pi)^{-2}.
/// Without a taper the grid must be admissible: every boundary multiplier value
/// at most `truncation_tol`.
pub fn invert_fft(grid: &SpectralGrid, fp: FracParam, req: TableRequest, opts: &BuildOptions) -> Result<KernelTable> {
    grid.validate()?;
    check_time(req.t)?;
    if let Some(f) = opts.taper {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Config(format!("taper fraction must lie in (0, 1], got {f}")));
        }
    }
    let n = grid.n();
    let r = grid.radius_xi;
    let freqs: Vec<f64> = (0..n).map(|k| grid.freq(k)).collect();
    let weights: Vec<f64> = match opts.taper {
        Some(f) => freqs.iter().map(|k| taper_weight(k.abs() / r, f)).collect(),
        None => vec![1.0; n],
    };
    let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
    let mut achieved = 0.0f64;
    let mut lost = 0.0f64;
    for (i, &xi) in freqs.iter().enumerate() {
        for (j, &eta) in freqs.iter().enumerate() {
            let m = multiplier(xi, eta, fp.s, req.t, req.coords);
            let w = weights[i] * weights[j];
            let edge = match opts.taper {
                Some(_) => w < 1.0,
                None => i == 0 || j == 0 || i == n - 1 || j == n - 1,
            };
            if edge {
                achieved = achieved.max(m);
            }
            let sym = derivative_symbol(xi, eta, req.t, req.b1, req.b2, req.coords, req.frame);
            lost += (1.0 - w) * sym.norm() * m;
            buf[i * n + j] = sym * (m * w);
        }
    }
    if opts.taper.is_none() && achieved > opts.truncation_tol {
        return Err(Error::Config(format!(
            "inadmissible grid: boundary multiplier {achieved:.3e} exceeds truncation_tol {:.1e} (n = {n}, radius = {r})",
            opts.truncation_tol
        )));
    }
    shift2(&mut buf, n);
    Fft2::new(n).both(&mut buf, true);
    shift2(&mut buf, n);
    let scale = grid.dxi() * grid.dxi() / (4.0 * PI * PI);
    let mut max_abs_imag = 0.0f64;
    let values: Vec<f64> = buf
        .iter()
        .map(|z| {
            max_abs_imag = max_abs_imag.max((z.im * scale).abs());
            z.re * scale
        })
        .collect();
    drop(buf);
    let method = if opts.taper.is_some() { "fft-tapered" } else { "fft" };
    let bound = lost * scale + spectral_tail(fp, req, r);
    let mut table = finish_table(grid, fp, req, opts, values, method, achieved, max_abs_imag)?;
    table.header.meta.truncation_bound = bound;
    Ok(table)
}

#[allow(clippy::too_many_arguments)]
fn finish_table(
    grid: &SpectralGrid,
    fp: FracParam,
    req: TableRequest,
    opts: &BuildOptions,
    values: Vec<f64>,
    method: &str,
    achieved: f64,
    max_abs_imag: f64,
) -> Result<KernelTable> {
    let dx = grid.dx();
    let is_kernel = req.b1 == 0 && req.b2 == 0;
    let mass_defect = is_kernel.then(|| values.iter().sum::<f64>() * dx * dx - 1.0);
    let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
    let header = TableHeader {
        s: fp.s,
        t: req.t,
        b1: req.b1,
        b2: req.b2,
        coords: req.coords,
        frame: req.frame,
        grid: *grid,
        tolerances: Tolerances { truncation_tol: opts.truncation_tol, mass_tol: opts.mass_tol },
        mass_defect,
        meta: TableMeta {
            method: method.to_string(),
            truncation_achieved: achieved,
            truncation_bound: 0.0,
            taper: opts.taper,
            mass_defect,
            min_value,
            max_abs_imag,
            built_at: unix_now(),
            config: opts.config.clone(),
        },
    };
    Ok(KernelTable { header, values })
}

/// Builds a table on a grid chosen by a policy, applying the taper the policy asks for.
pub fn invert_fitted(fitted: &FittedGrid, fp: FracParam, req: TableRequest, opts: &BuildOptions) -> Result<KernelTable> {
    let opts = opts.clone().with_taper(fitted.taper.or(opts.taper));
    invert_fft(&fitted.grid, fp, req, &opts)
}

/// (2 pi)^{-2} times the integral of |symbol| e^{-tM} outside the disk of radius `r`.
///
/// The multiplier is exp(-A(theta) rho^{2s}) along each direction, so the radial part is
/// (1/2s) A^{-p} Gamma(p, A r^{2s}) with p = (2 + b1 + b2) / 2s. The disk contains the
/// square frequency box, so this bounds what the box discards.
pub fn spectral_tail(fp: FracParam, req: TableRequest, r: f64) -> f64 {
    let alpha = 2.0 * fp.s;
    let p = (2.0 + (req.b1 + req.b2) as f64) / alpha;
    let gl = GaussLegendre::new(16);
    let n_theta = 2048;
    let mut acc = 0.0;
    for k in 0..n_theta {
        let th = 2.0 * PI * (k as f64 + 0.5) / n_theta as f64;
        let (sn, c) = th.sin_cos();
        let a = -multiplier(c, sn, fp.s, req.t, req.coords).ln();
        let sym = derivative_symbol(c, sn, req.t, req.b1, req.b2, req.coords, req.frame).norm();
        let z = a * r.powf(alpha);
        let hi = z.max(p) + 80.0;
        let panels = ((hi - z) / 4.0).ceil().max(1.0) as usize;
        let width = (hi - z) / panels as f64;
        let mut gamma = 0.0;
        for q in 0..panels {
            let lo = z + q as f64 * width;
            gamma += gl.integrate(lo, lo + width, |u| ((p - 1.0) * u.ln() - u).exp());
        }
        acc += sym * gamma * a.powf(-p) / alpha;
    }
    acc * (2.0 * PI / n_theta as f64) / (4.0 * PI * PI)
}

/// Resamples a t = 1 sheared table to physical coordinates by exact index shearing:
/// K_phys(x_i, v_j) = K(x_i, v_j - x_i), periodic on the lattice.
pub fn shear_to_physical(table: &KernelTable) -> Result<KernelTable> {
    let h = &table.header;
    if h.coords != Coords::Sheared {
        return Err(Error::Contract("shear_to_physical expects a sheared table".into()));
    }
    if h.t != 1.0 {
        return Err(Error::Contract(format!(
            "exact lattice shearing needs t = 1 (w = v - x/t lands off-lattice at t = {})",
            h.t
        )));
    }
    let n = table.n();
    let half = n / 2;
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let jw = (j + n + half - i) % n;
            values[i * n + j] = table.values[i * n + jw];
        }
    }
    let mut header = h.clone();
    header.coords = Coords::Physical;
    header.meta.method = format!("{}+lattice-shear", h.meta.method);
    Ok(KernelTable { header, values })
}

/// Trigonometric interpolant of a table (exact on the lattice).
pub struct Interpolant {
    grid: SpectralGrid,
    coeffs: Vec<Complex64>,
}

impl Interpolant {
    pub fn new(table: &KernelTable) -> Self {
        let grid = *table.grid();
        let n = grid.n();
        let mut coeffs: Vec<Complex64> = table.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        shift2(&mut coeffs, n);
        Fft2::new(n).both(&mut coeffs, false);
        shift2(&mut coeffs, n);
        let norm = 1.0 / (n * n) as f64;
        coeffs.iter_mut().for_each(|c| *c *= norm);
        Interpolant { grid, coeffs }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    fn phases(&self, x: f64) -> Vec<Complex64> {
        let n = self.grid.n();
        (0..n)
            .map(|k| {
                let a = self.grid.freq(k) * x;
                if k == 0 {
                    // Nyquist mode: the real-symmetric choice
                    Complex64::new(a.cos(), 0.0)
                } else {
                    Complex64::new(a.cos(), a.sin())
                }
            })
            .collect()
    }

    /// Value at an arbitrary point inside the periodic cell.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        let half = self.grid.half_extent();
        if x.abs() > half || y.abs() > half || !x.is_finite() || !y.is_finite() {
            return Err(Error::Range(format!("({x}, {y}) lies outside the table extent {half}")));
        }
        let n = self.grid.n();
        let ex = self.phases(x);
        let ey = self.phases(y);
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, e) in ex.iter().enumerate() {
            let row = &self.coeffs[k * n..(k + 1) * n];
            let inner: Complex64 = row.iter().zip(&ey).map(|(c, p)| c * p).sum();
            acc += e * inner;
        }
        Ok(acc.re)
    }
}

/// Kernel at any time via the self-similar law applied to a t = 1 table in physical coordinates:
/// value(t, x, v) = t^{-1-(2+b1+b2)/(2s)-b1} table(x t^{-1-1/(2s)}, v t^{-1/(2s)}).
pub struct ScaledKernel {
    interp: Interpolant,
    s: f64,
    b1: u32,
    b2: u32,
}

impl ScaledKernel {
    pub fn new(table: &KernelTable) -> Result<Self> {
        let h = &table.header;
        if h.t != 1.0 || h.coords != Coords::Physical {
            return Err(Error::Contract("rescaling needs a t = 1 table in physical coordinates".into()));
        }
        Ok(ScaledKernel { interp: Interpolant::new(table), s: h.s, b1: h.b1, b2: h.b2 })
    }

    pub fn prefactor(&self, t: f64) -> f64 {
        scaling_prefactor(t, self.s, self.b1, self.b2)
    }

    pub fn at(&self, t: f64, x: f64, v: f64) -> Result<f64> {
        check_time(t)?;
        let inv = 1.0 / (2.0 * self.s);
        let xs = x * t.powf(-1.0 - inv);
        let vs = v * t.powf(-inv);
        Ok(self.prefactor(t) * self.interp.eval(xs, vs)?)
    }
}

/// t^{-1-(2+b1+b2)/(2s)-b1}.
pub fn scaling_prefactor(t: f64, s: f64, b1: u32, b2: u32) -> f64 {
    t.powf(-1.0 - (2.0 + (b1 + b2) as f64) / (2.0 * s) - b1 as f64)
}
