//! Pointwise polar-projection quadrature against an FFT table, with the image and truncation budget.

use fkfp::grid::{Coords, GridPolicy};
use fkfp::inversion::{invert_fitted, BuildOptions, TableRequest};
use fkfp::oracle::compare_table;
use fkfp::{FracParam, Result};

fn main() -> Result<()> {
    let fp = FracParam::new(0.75)?;
    let fit = GridPolicy { window: 10.0, ..GridPolicy::default() }.fit(fp, 1.0, Coords::Sheared)?;
    let table = invert_fitted(&fit, fp, TableRequest::kernel(Coords::Sheared), &BuildOptions::default())?;
    for c in compare_table(&table, &[(0.0, 0.0), (1.0, -0.5), (-2.0, 1.0)], 1e-8)? {
        println!(
            "({:.3}, {:.3}): table {:.12e}, quadrature {:.12e}, image ring {:.2e}, |diff| {:.2e} / budget {:.2e}",
            c.x, c.y, c.table, c.quadrature, c.ring, c.diff, c.budget
        );
    }
    Ok(())
}
