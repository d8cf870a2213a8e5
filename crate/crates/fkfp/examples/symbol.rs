//! The averaged symbol M, its closed form against quadrature, and the derivative-bound audit.

use fkfp::symbol::{audit_derivative_bounds, m_closed, m_quadrature, AuditRegion, FreqPoint, Target};
use fkfp::{FracParam, Result};

fn main() -> Result<()> {
    let fp = FracParam::new(0.5)?;
    for (xi, eta) in [(1.0, 1.0), (2.0, -1.0), (0.0, 3.0), (10.0, 0.1)] {
        let p = FreqPoint::new(xi, eta);
        println!("M({xi}, {eta}) = {:.15} (quadrature {:.15})", m_closed(p, fp)?, m_quadrature(p, fp, 64)?);
    }
    let region = AuditRegion { r_min: 0.1, r_max: 100.0, per_decade: 4 };
    for (target, name) in [(Target::M, "M"), (Target::ExpM, "exp(-M)")] {
        let rep = audit_derivative_bounds(region, fp, 3, target)?;
        println!("{name}: sup ratio {:.3e}, slope {:.3}, passed {}", rep.sup_ratio, rep.boundary_slope, rep.passed);
        for note in &rep.notes {
            println!("  {note}");
        }
    }
    Ok(())
}
