//! Kernel at other times from one t = 1 table through the self-similar law.

use fkfp::grid::{Coords, DerivFrame, GridPolicy};
use fkfp::inversion::{invert_fitted, BuildOptions, ScaledKernel, TableRequest};
use fkfp::oracle::QuadratureOracle;
use fkfp::{FracParam, Result};

fn main() -> Result<()> {
    let fp = FracParam::new(0.5)?;
    let fit = GridPolicy { window: 10.0, extent_factor: 4.0, ..GridPolicy::default() }.fit(fp, 1.0, Coords::Physical)?;
    let req = TableRequest::derivative(1, 0, Coords::Physical, DerivFrame::Physical);
    let scaled = ScaledKernel::new(&invert_fitted(&fit, fp, req, &BuildOptions::default())?)?;
    for t in [0.5, 2.0, 4.0] {
        let direct = QuadratureOracle::new(fp, req.at_time(t))?;
        let (x, v) = (0.5 * t, -0.25 * t);
        let (q, _) = direct.eval(x, v, 1e-9)?;
        let r = scaled.at(t, x, v)?;
        println!("t = {t}: prefactor {:.4e}, rescaled {r:.10e}, direct {q:.10e}, rel {:.1e}", scaled.prefactor(t), (r - q).abs() / q.abs());
    }
    Ok(())
}
