//! What the normalization cache does as parameters move.

use parafit::engine::CacheStore;
use parafit::pdf::PdfTree;
use parafit::variable::{Registry, Variable};

fn main() -> parafit::error::Result<()> {
    let mut reg = Registry::new();
    let x = reg.add(Variable::observable("x", 0.0, 1.0))?;
    let mu = reg.add(Variable::parameter("mu", 0.5))?;
    let sigma = reg.add(Variable::parameter("sigma", 0.1))?;
    let c0 = reg.add(Variable::parameter("c0", 1.0))?;
    let c1 = reg.add(Variable::parameter("c1", 0.3))?;
    let f = reg.add(Variable::parameter("f", 0.6))?;
    let mut tree = PdfTree::new();
    let g = tree.gaussian(&reg, "g", x, mu, sigma)?;
    let p = tree.polynomial(&reg, "p", x, &[c0, c1])?;
    let sum = tree.add(&reg, "sum", &[g, p], &[f])?;

    let mut store = CacheStore::new();
    let mut step = |label: &str, reg: &Registry| -> parafit::error::Result<()> {
        store.reset_stats();
        store.resolve(&tree, sum, &reg.snapshot())?;
        let s = store.stats();
        println!(
            "{label:<22} hits {}  recomputes {}  kernel calls {}",
            s.hits, s.recomputes, s.kernel_calls
        );
        Ok(())
    };
    step("cold", &reg)?;
    step("repeat", &reg)?;
    reg.set_value(f, 0.5)?;
    step("fraction changed", &reg)?;
    reg.set_value(c1, 0.4)?;
    step("polynomial changed", &reg)?;
    reg.set_value(mu, 0.5)?;
    step("same value re-set", &reg)?;
    Ok(())
}
