//! Kernel tables and their CSV + JSON persistence.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Coords, DerivFrame, SpectralGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub truncation_tol: f64,
    pub mass_tol: f64,
}

/// Provenance of a table. `built_at` (unix seconds) is the only time-dependent field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub method: String,
    /// Largest untapered multiplier value where the spectrum is cut or tapered.
    pub truncation_achieved: f64,
    /// Bound on the pointwise error from the discarded and tapered spectrum.
    #[serde(default)]
    pub truncation_bound: f64,
    pub taper: Option<f64>,
    pub mass_defect: Option<f64>,
    pub min_value: f64,
    pub max_abs_imag: f64,
    pub built_at: u64,
    pub config: BTreeMap<String, String>,
}

/// Everything about a table except its values; this is the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableHeader {
    pub s: f64,
    pub t: f64,
    pub b1: u32,
    pub b2: u32,
    pub coords: Coords,
    pub frame: DerivFrame,
    pub grid: SpectralGrid,
    pub tolerances: Tolerances,
    pub mass_defect: Option<f64>,
    pub meta: TableMeta,
}

/// Sampled kernel (or derivative) on the physical side of a grid.
/// `values[i * n + j]` is the value at (coord(i), coord(j)): rows follow x.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    pub header: TableHeader,
    pub values: Vec<f64>,
}

impl KernelTable {
    pub fn grid(&self) -> &SpectralGrid {
        &self.header.grid
    }

    pub fn n(&self) -> usize {
        self.header.grid.n()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    /// Value at a lattice point given by coordinates.
    pub fn at_lattice(&self, x: f64, y: f64) -> Result<f64> {
        let g = self.grid();
        match (g.index_of(x), g.index_of(y)) {
            (Some(i), Some(j)) => Ok(self.get(i, j)),
            _ => Err(Error::Range(format!("({x}, {y}) is not a lattice point"))),
        }
    }

    pub fn mass(&self) -> f64 {
        let dx = self.grid().dx();
        self.values.iter().sum::<f64>() * dx * dx
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Writes `<stem>.csv` and `<stem>.json`; returns both paths.
    pub fn save(&self, stem: &Path) -> Result<(PathBuf, PathBuf)> {
        let csv_path = stem.with_extension("csv");
        let json_path = stem.with_extension("json");
        write_values_csv(&csv_path, &self.header, &self.values)?;
        let f = BufWriter::new(File::create(&json_path)?);
        serde_json::to_writer_pretty(f, &self.header)?;
        Ok((csv_path, json_path))
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let json_path = stem.with_extension("json");
        let header: TableHeader = serde_json::from_reader(File::open(&json_path)?)?;
        header.grid.validate()?;
        let values = read_values_csv(&stem.with_extension("csv"), header.grid.n())?;
        Ok(KernelTable { header, values })
    }
}

/// Formats a double with 17 significant digits, which round-trips exactly.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_values_csv(path: &Path, h: &TableHeader, values: &[f64]) -> Result<()> {
    let g = &h.grid;
    let n = g.n();
    let mut f = BufWriter::new(File::create(path)?);
    let second = match h.coords {
        Coords::Physical => "v",
        Coords::Sheared => "w",
    };
    writeln!(
        f,
        "# rows: x = x0 + i*dx, i = 0..{n}; columns: {second} = x0 + j*dx, j = 0..{n}; x0 = {}; dx = {}",
        fmt17(g.coord(0)),
        fmt17(g.dx())
    )?;
    writeln!(f, "# s = {}; t = {}; b1 = {}; b2 = {}; coords = {:?}; frame = {:?}", h.s, h.t, h.b1, h.b2, h.coords, h.frame)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(f);
    let mut row = Vec::with_capacity(n);
    for i in 0..n {
        row.clear();
        row.extend(values[i * n..(i + 1) * n].iter().map(|&v| fmt17(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_values_csv(path: &Path, n: usize) -> Result<Vec<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).from_path(path)?;
    let mut values = Vec::with_capacity(n * n);
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != n {
            return Err(Error::Format(format!("row has {} columns, expected {n}", rec.len())));
        }
        for field in rec.iter() {
            values.push(field.trim().parse::<f64>().map_err(|e| Error::Format(format!("{field:?}: {e}")))?);
        }
    }
    if values.len() != n * n {
        return Err(Error::Format(format!("table has {} values, expected {}", values.len(), n * n)));
    }
    Ok(values)
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}
