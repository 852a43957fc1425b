//! Serial and pooled evaluation give the same bits; only the time differs.
//! Set PARAFIT_WORKERS to pick the pool size.

use std::time::Instant;

use parafit::engine::{nll, Backend};
use parafit::mcgen::{generate_1d, GenSpec};
use parafit::pdf::PdfTree;
use parafit::variable::{Registry, Variable};

fn main() -> parafit::error::Result<()> {
    let mut reg = Registry::new();
    let x = reg.add(Variable::observable("x", -5.0, 5.0))?;
    let mu = reg.add(Variable::parameter("mu", 0.0))?;
    let sigma = reg.add(Variable::parameter("sigma", 1.0))?;
    let mut tree = PdfTree::new();
    let g = tree.gaussian(&reg, "g", x, mu, sigma)?;
    let data = generate_1d(&tree, g, &reg, x, &GenSpec::new(1_000_000, 2))?;
    let snap = reg.snapshot();

    let pool = Backend::from_env(Backend::pool(0)?)?;
    for (label, be) in [("serial", Backend::serial()), ("pool", pool)] {
        let t = Instant::now();
        let v = nll(&tree, g, &data, &snap, &be)?;
        println!(
            "{label:>6} ({} workers): {v:.10}  bits {:016x}  {:?}",
            be.workers(),
            v.to_bits(),
            t.elapsed()
        );
    }
    Ok(())
}
