//! Slope fit of a truncated exponential.

use parafit::dataset::DataSet;
use parafit::fit::FitManager;
use parafit::mcgen::{generate_1d, GenSpec};
use parafit::pdf::PdfTree;
use parafit::variable::{Registry, Variable};

fn main() -> parafit::error::Result<()> {
    let mut reg = Registry::new();
    let x = reg.add(Variable::observable("x", 0.0, 3.0))?;
    let alpha = reg.add(Variable::parameter("alpha", -1.5).with_step(0.1))?;
    let mut tree = PdfTree::new();
    let e = tree.exponential(&reg, "e", x, alpha)?;

    let data = DataSet::Unbinned(generate_1d(&tree, e, &reg, x, &GenSpec::new(50_000, 3))?);
    reg.set_value(alpha, -0.5)?;
    let r = FitManager::new(&tree, e, &data).run(&mut reg)?;
    println!(
        "{}: alpha = {:.4} +/- {:.4} (truth -1.5)",
        r.status.as_str(),
        reg.value(alpha),
        reg.get(alpha).error().unwrap_or(f64::NAN)
    );
    Ok(())
}
