//! The same gaussian fitted unbinned and binned.

use parafit::dataset::{BinnedDataSet, DataSet};
use parafit::fit::FitManager;
use parafit::mcgen::{generate_1d, GenSpec};
use parafit::pdf::PdfTree;
use parafit::variable::{Registry, Variable};

fn main() -> parafit::error::Result<()> {
    let mut reg = Registry::new();
    let x = reg.add(Variable::observable("x", -3.0, 3.0))?;
    let mu = reg.add(Variable::parameter("mu", 0.2).with_bounds(-3.0, 3.0))?;
    let sigma = reg.add(Variable::parameter("sigma", 0.7).with_bounds(0.01, 3.0))?;
    let mut tree = PdfTree::new();
    let g = tree.gaussian(&reg, "g", x, mu, sigma)?;

    let events = generate_1d(&tree, g, &reg, x, &GenSpec::new(100_000, 5))?;
    let mut hist = BinnedDataSet::new(&reg, &[x], &[120])?;
    for &v in events.column(x)? {
        hist.fill(&[v])?;
    }

    for data in [DataSet::Unbinned(events), DataSet::Binned(hist)] {
        let label = match data {
            DataSet::Unbinned(_) => "unbinned",
            DataSet::Binned(_) => "binned",
        };
        let mut fit_reg = reg.clone();
        fit_reg.set_value(mu, 0.0)?;
        fit_reg.set_value(sigma, 1.0)?;
        let r = FitManager::new(&tree, g, &data).run(&mut fit_reg)?;
        println!(
            "{label:>8}: mu = {:.5} +/- {:.5}, sigma = {:.5} +/- {:.5}",
            r.values[0], r.errors[0], r.values[1], r.errors[1]
        );
    }
    Ok(())
}
