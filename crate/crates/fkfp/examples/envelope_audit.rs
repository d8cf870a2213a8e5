//! Ratio of a tabulated kernel to the pointwise envelope, with rays along the axes.

use fkfp::envelope::{ray_samples, slope_fit, verify_envelope, EnvelopeParams};
use fkfp::grid::{Coords, DerivFrame, GridPolicy};
use fkfp::inversion::{invert_fitted, BuildOptions, TableRequest};
use fkfp::{FracParam, Result};

fn main() -> Result<()> {
    let fp = FracParam::new(0.5)?;
    let fit = GridPolicy::default().fit(fp, 1.0, Coords::Physical)?;
    let req = TableRequest::derivative(0, 0, Coords::Physical, DerivFrame::Sheared);
    let table = invert_fitted(&fit, fp, req, &BuildOptions::default())?;
    let ep = EnvelopeParams::with_default_eps(fp, 0, 0)?;
    let rep = verify_envelope(&table, &ep, 20.0)?;
    println!("sup ratio {:.3e} at {:?}, outer slope {:.3}, passed {}", rep.sup_ratio, rep.argmax, rep.boundary_slope, rep.passed);
    for (region, sup) in &rep.regions {
        println!("  {region:<12} {sup:.3e}");
    }
    let control = verify_envelope(&table, &ep.negative_control(), 20.0)?;
    println!("negative control passed {} (slope {:.3})", control.passed, control.boundary_slope);
    println!("decay along x = 0: slope {:.3}", slope_fit(&ray_samples(&table, true, 5.0, 20.0)));
    println!("decay along v = 0: slope {:.3}", slope_fit(&ray_samples(&table, false, 5.0, 20.0)));
    Ok(())
}
