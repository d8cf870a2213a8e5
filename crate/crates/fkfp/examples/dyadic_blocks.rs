//! Littlewood-Paley block decomposition of the kernel at one point, and the block-bound audit.

use fkfp::dyadic::{audit_block_bounds, DyadicEngine, NParams};
use fkfp::oracle::invert_quadrature;
use fkfp::grid::Coords;
use fkfp::inversion::TableRequest;
use fkfp::{FracParam, Result};

fn main() -> Result<()> {
    let fp = FracParam::new(0.5)?;
    let mut engine = DyadicEngine::new(fp);
    let (x, w) = (1.0, 4.0);
    let sum = engine.sum_blocks(x, w, 0, 0, 1e-6)?;
    let (q, _) = invert_quadrature(x, w, fp, TableRequest::kernel(Coords::Sheared), 1e-9)?;
    println!("blocks {:.10e}, quadrature {q:.10e}, budget {:.1e}", sum.value.re, sum.error_budget());
    println!("{} blocks evaluated, {} skipped", sum.evaluated, sum.skipped);
    let mut top = sum.blocks.clone();
    top.sort_by(|a, b| b.value.norm().total_cmp(&a.value.norm()));
    for r in top.iter().take(5) {
        println!("  block ({:>3}, {:>3}) {:<14} |value| {:.3e}, bound {:.3e}", r.m1, r.m2, r.regime.tag(), r.value.norm(), r.bound);
    }
    let audit = audit_block_bounds(&mut engine, &[(x, w), (-2.0, 1.5)], 0, 0, NParams::policy(fp, 0, 0), 1e-5)?;
    println!("block audit: sup ratio {:.3e}, edge slope {:.3}", audit.report.sup_ratio, audit.report.boundary_slope);
    Ok(())
}
