//! Generate a gaussian toy and fit it back.

use parafit::dataset::DataSet;
use parafit::fit::FitManager;
use parafit::mcgen::{generate_1d, GenSpec};
use parafit::pdf::PdfTree;
use parafit::variable::{Registry, Variable};

fn main() -> parafit::error::Result<()> {
    let mut reg = Registry::new();
    let x = reg.add(Variable::observable("x", 0.0, 1.0))?;
    let mu = reg.add(
        Variable::parameter("mu", 0.5)
            .with_bounds(0.0, 1.0)
            .with_step(0.01),
    )?;
    let sigma = reg.add(
        Variable::parameter("sigma", 0.1)
            .with_bounds(1e-3, 1.0)
            .with_step(0.01),
    )?;
    let mut tree = PdfTree::new();
    let g = tree.gaussian(&reg, "g", x, mu, sigma)?;

    let data = generate_1d(&tree, g, &reg, x, &GenSpec::new(100_000, 7))?;

    // Start away from the truth.
    reg.set_value(mu, 0.4)?;
    reg.set_value(sigma, 0.2)?;
    let data = DataSet::Unbinned(data);
    let result = FitManager::new(&tree, g, &data).run(&mut reg)?;

    println!(
        "status {}  nll {:.4}  calls {}",
        result.status.as_str(),
        result.nll_min,
        result.n_calls
    );
    for (name, (v, e)) in result.names.iter().zip(result.values.iter().zip(&result.errors)) {
        println!("{name:>6} = {v:.6} +/- {e:.2e}");
    }
    println!("expected sigma_mu ~ {:.2e}", 0.1 / (100_000f64).sqrt());
    Ok(())
}
