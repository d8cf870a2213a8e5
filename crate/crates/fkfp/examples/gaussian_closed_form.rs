//! At s = 1 the kernel is an explicit Gaussian; compare the FFT table with it.

use fkfp::grid::{Coords, GridPolicy};
use fkfp::inversion::{invert_fitted, BuildOptions, TableRequest};
use fkfp::oracle::gaussian_physical;
use fkfp::{FracParam, Result};

fn main() -> Result<()> {
    let one = FracParam::new(1.0)?;
    let fit = GridPolicy { window: 6.0, ..GridPolicy::default() }.fit(one, 1.0, Coords::Physical)?;
    let table = invert_fitted(&fit, one, TableRequest::kernel(Coords::Physical), &BuildOptions::default())?;
    let g = table.grid();
    let mut worst = 0.0f64;
    for i in 0..table.n() {
        for j in 0..table.n() {
            let (x, v) = (g.coord(i), g.coord(j));
            if x.abs() <= 3.0 && v.abs() <= 3.0 {
                worst = worst.max((table.get(i, j) - gaussian_physical(x, v)).abs());
            }
        }
    }
    println!("n = {}: max |table - closed form| on |x|, |v| <= 3 is {worst:.2e}", table.n());
    Ok(())
}
