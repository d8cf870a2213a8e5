//! Evolve a lattice delta to t = 1 and compare with the kernel table; split the run in two.

use fkfp::evolve::{EvolveConfig, Evolution, PhaseField};
use fkfp::grid::{Coords, GridPolicy};
use fkfp::inversion::{invert_fitted, BuildOptions, TableRequest};
use fkfp::{FracParam, Result};

fn main() -> Result<()> {
    let fp = FracParam::new(0.5)?;
    let fit = GridPolicy { window: 10.0, ..GridPolicy::default() }.fit(fp, 1.0, Coords::Physical)?;
    let table = invert_fitted(&fit, fp, TableRequest::kernel(Coords::Physical), &BuildOptions::default())?;
    let delta = PhaseField::delta(fit.grid);
    let steps = |t: f64| EvolveConfig::new(t, EvolveConfig::min_steps(t, &fit.grid));
    let mut ev = Evolution::new(&delta);
    ev.advance(fp, &steps(0.5), 0, |log, _| println!("t = {:.3}: mass {:.15}, L2 {:.6}", log.time, log.mass, log.l2))?;
    ev.advance(fp, &steps(0.5), 0, |log, _| println!("t = {:.3}: mass {:.15}, L2 {:.6}", log.time, log.mass, log.l2))?;
    let f = ev.field();
    let worst = f.values.iter().zip(&table.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max |evolved - table| = {worst:.2e} (peak {:.3})", table.max_abs());
    Ok(())
}
