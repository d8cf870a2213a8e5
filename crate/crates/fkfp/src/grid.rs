//! Frequency/physical lattice pairs and admissible grid sizing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbol::{m_value, FracParam};

/// Coordinates of a table: physical (x, v) or sheared (x, w) with w = v - x / t.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coords {
    Sheared,
    Physical,
}

/// Derivative frame: physical (d_x, d_v) or sheared (d_x at fixed w, d_w).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerivFrame {
    Sheared,
    Physical,
}

impl std::str::FromStr for Coords {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sheared" => Ok(Coords::Sheared),
            "physical" => Ok(Coords::Physical),
            _ => Err(Error::Config(format!("coords must be sheared or physical, got {s:?}"))),
        }
    }
}

impl std::str::FromStr for DerivFrame {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sheared" => Ok(DerivFrame::Sheared),
            "physical" => Ok(DerivFrame::Physical),
            _ => Err(Error::Config(format!("frame must be sheared or physical, got {s:?}"))),
        }
    }
}

/// Uniform lattice: frequencies (k - n/2) * 2R/n and positions (j - n/2) * pi/R.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    pub n_xi: usize,
    pub n_eta: usize,
    pub radius_xi: f64,
    pub radius_eta: f64,
}

impl SpectralGrid {
    pub fn new(n: usize, radius: f64) -> Result<Self> {
        let g = SpectralGrid { n_xi: n, n_eta: n, radius_xi: radius, radius_eta: radius };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for n in [self.n_xi, self.n_eta] {
            if n < 4 || !n.is_power_of_two() {
                return Err(Error::Config(format!("grid size must be a power of two >= 4, got {n}")));
            }
        }
        if self.n_xi != self.n_eta || self.radius_xi != self.radius_eta {
            return Err(Error::Config("only square isotropic grids are supported".into()));
        }
        if !(self.radius_xi > 0.0 && self.radius_xi.is_finite()) {
            return Err(Error::Config(format!("grid radius must be positive, got {}", self.radius_xi)));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n_xi
    }

    pub fn dxi(&self) -> f64 {
        2.0 * self.radius_xi / self.n_xi as f64
    }

    pub fn dx(&self) -> f64 {
        std::f64::consts::PI / self.radius_xi
    }

    /// Full period of the physical lattice.
    pub fn period(&self) -> f64 {
        self.n_xi as f64 * self.dx()
    }

    /// Half the physical period: the largest representable |x|.
    pub fn half_extent(&self) -> f64 {
        std::f64::consts::PI / self.dxi()
    }

    pub fn freq(&self, k: usize) -> f64 {
        (k as f64 - (self.n_xi / 2) as f64) * self.dxi()
    }

    pub fn coord(&self, j: usize) -> f64 {
        (j as f64 - (self.n_xi / 2) as f64) * self.dx()
    }

    /// Index of the lattice point nearest to x, clamped to the lattice.
    pub fn nearest_index(&self, x: f64) -> usize {
        let u = (x / self.dx()).round() + (self.n_xi / 2) as f64;
        u.clamp(0.0, (self.n_xi - 1) as f64) as usize
    }

    /// Lattice index of a coordinate if it lies on the lattice (to 1e-9 of a cell).
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let u = x / self.dx() + (self.n_xi / 2) as f64;
        let r = u.round();
        if (u - r).abs() < 1e-9 && r >= 0.0 && (r as usize) < self.n_xi {
            Some(r as usize)
        } else {
            None
        }
    }
}

/// Fourier multiplier of the kernel at time t in the requested coordinates.
///
/// Physical: exp(-int_0^t |eta + xi tau|^{2s} dtau) = exp(-t M(eta + t xi, eta)).
/// Sheared (w = v - x/t): exp(-t M(t xi, eta)).
#[inline]
pub fn multiplier(xi: f64, eta: f64, s: f64, t: f64, coords: Coords) -> f64 {
    let a = match coords {
        Coords::Physical => eta + t * xi,
        Coords::Sheared => t * xi,
    };
    (-t * m_value(a, eta, s)).exp()
}

/// Largest multiplier value on the boundary of the square [-r, r]^2, sampled densely.
pub fn boundary_sup(r: f64, fp: FracParam, t: f64, coords: Coords) -> f64 {
    let m = 4000;
    let mut sup = 0.0f64;
    for k in 0..=m {
        let u = -r + 2.0 * r * k as f64 / m as f64;
        for (a, b) in [(r, u), (-r, u), (u, r), (u, -r)] {
            sup = sup.max(multiplier(a, b, fp.s, t, coords));
        }
    }
    sup
}

/// Largest multiplier value on the outermost lattice ring.
pub fn lattice_boundary_sup(grid: &SpectralGrid, fp: FracParam, t: f64, coords: Coords) -> f64 {
    let n = grid.n();
    let mut sup = 0.0f64;
    for k in 0..n {
        let u = grid.freq(k);
        for (a, b) in [(grid.freq(0), u), (grid.freq(n - 1), u), (u, grid.freq(0)), (u, grid.freq(n - 1))] {
            sup = sup.max(multiplier(a, b, fp.s, t, coords));
        }
    }
    sup
}

/// Smallest radius whose boundary multiplier is at most `tol`.
pub fn admissible_radius(fp: FracParam, t: f64, coords: Coords, tol: f64) -> Result<f64> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Config(format!("truncation tolerance must lie in (0, 1), got {tol}")));
    }
    let mut lo = 1e-3;
    let mut hi = 1.0;
    while boundary_sup(hi, fp, t, coords) > tol {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::Config("no admissible radius below 1e9".into()));
        }
    }
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if boundary_sup(mid, fp, t, coords) > tol {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-6 {
            break;
        }
    }
    Ok(hi)
}

/// How to size a grid for a physical evaluation window.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridPolicy {
    /// Physical half-window |x|, |v| <= window that the table must cover.
    pub window: f64,
    /// The physical period is at least 2 * extent_factor times the largest coordinate.
    pub extent_factor: f64,
    pub truncation_tol: f64,
    pub n_max: usize,
    /// Fraction of the frequency box covered by the taper when the size cap binds.
    pub taper_fraction: f64,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy { window: 20.0, extent_factor: 2.0, truncation_tol: 1e-12, n_max: 4096, taper_fraction: 0.5 }
    }
}

/// A grid together with the taper it needs (None when the grid is admissible as is).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FittedGrid {
    pub grid: SpectralGrid,
    pub taper: Option<f64>,
}

impl GridPolicy {
    /// Largest coordinate magnitude the table must represent.
    pub fn max_coord(&self, t: f64, coords: Coords) -> f64 {
        match coords {
            Coords::Physical => self.window,
            Coords::Sheared => self.window * (1.0 + 1.0 / t),
        }
    }

    pub fn fit(&self, fp: FracParam, t: f64, coords: Coords) -> Result<FittedGrid> {
        if !(self.window > 0.0) || !(self.extent_factor >= 1.0) {
            return Err(Error::Config(format!("invalid grid policy {self:?}")));
        }
        if !self.n_max.is_power_of_two() {
            return Err(Error::Config(format!("n_max must be a power of two, got {}", self.n_max)));
        }
        let period = 2.0 * self.extent_factor * self.max_coord(t, coords);
        let r_adm = admissible_radius(fp, t, coords, self.truncation_tol)?;
        // the outermost lattice ring sits at R and R - 2R/n
        let need = (period * r_adm / std::f64::consts::PI).ceil() as usize;
        let n = (need + 2).next_power_of_two().max(64);
        if n <= self.n_max {
            let mut r = r_adm * n as f64 / (n - 2) as f64;
            while lattice_boundary_sup(&SpectralGrid::new(n, r)?, fp, t, coords) > self.truncation_tol {
                r *= 1.005;
            }
            Ok(FittedGrid { grid: SpectralGrid::new(n, r)?, taper: None })
        } else {
            let n = self.n_max;
            let radius = n as f64 * std::f64::consts::PI / period;
            Ok(FittedGrid { grid: SpectralGrid::new(n, radius)?, taper: Some(self.taper_fraction) })
        }
    }
}
