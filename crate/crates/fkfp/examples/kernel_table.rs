//! Tabulate the s = 1/2 kernel on a policy-fitted lattice and save it as CSV + JSON.

use fkfp::grid::{Coords, GridPolicy};
use fkfp::inversion::{invert_fitted, BuildOptions, TableRequest};
use fkfp::{FracParam, Result};

fn main() -> Result<()> {
    let fp = FracParam::new(0.5)?;
    let fit = GridPolicy { window: 10.0, ..GridPolicy::default() }.fit(fp, 1.0, Coords::Physical)?;
    let table = invert_fitted(&fit, fp, TableRequest::kernel(Coords::Physical), &BuildOptions::default())?;
    let h = &table.header;
    println!("n = {}, frequency radius = {:.2}, half extent = {:.2}", table.n(), h.grid.radius_xi, table.grid().half_extent());
    println!("mass defect {:.2e}, min {:.2e}, truncation bound {:.2e}", h.mass_defect.unwrap_or(0.0), h.meta.min_value, h.meta.truncation_bound);
    let dir = std::env::temp_dir().join("fkfp_examples");
    std::fs::create_dir_all(&dir)?;
    let (csv, json) = table.save(&dir.join("kernel_s050"))?;
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}
