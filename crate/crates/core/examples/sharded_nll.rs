//! Static sharding: every worker count reduces to the serial NLL.

use parafit::distributed::{evaluate_shards, reduce, ShardPlan};
use parafit::engine::{Backend, Engine};
use parafit::mcgen::{generate_1d, GenSpec};
use parafit::pdf::PdfTree;
use parafit::variable::{Registry, Variable};

fn main() -> parafit::error::Result<()> {
    let mut reg = Registry::new();
    let x = reg.add(Variable::observable("x", 0.0, 4.0))?;
    let alpha = reg.add(Variable::parameter("alpha", -0.8))?;
    let mut tree = PdfTree::new();
    let e = tree.exponential(&reg, "e", x, alpha)?;
    let data = generate_1d(&tree, e, &reg, x, &GenSpec::new(100_000, 9))?;

    let be = Backend::serial();
    let snap = reg.snapshot();
    let mut engine = Engine::new(be.clone());
    let serial = engine.nll(&tree, e, &data, &snap)?;
    let prepared = engine.prepare(&tree, e, &data, &snap)?;
    let eval = prepared.evaluator(&tree, &snap);
    println!("serial        {serial:.10}");
    for w in [1, 2, 3, 4, 8] {
        let plan = ShardPlan::new(data.len(), w, be.block());
        let sizes: Vec<usize> = plan.shards().iter().map(|s| s.len()).collect();
        let total = reduce(evaluate_shards(&eval, e, &data, &plan, &be)?)?;
        println!(
            "W={w}  {total:.10}  equal bits: {}  shards {sizes:?}",
            total.to_bits() == serial.to_bits()
        );
    }
    Ok(())
}
