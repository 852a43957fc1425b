//! Pull distribution of the fitted mean over repeated toys.

use parafit::dataset::DataSet;
use parafit::fit::{FitManager, FitStatus};
use parafit::mcgen::{generate_1d, GenSpec};
use parafit::pdf::PdfTree;
use parafit::variable::{Registry, Variable};

fn main() -> parafit::error::Result<()> {
    let toys: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(100);
    let mut reg = Registry::new();
    let x = reg.add(Variable::observable("x", 0.0, 1.0))?;
    let mu = reg.add(Variable::parameter("mu", 0.5).with_bounds(0.0, 1.0))?;
    let sigma = reg.add(Variable::parameter("sigma", 0.1).with_bounds(0.01, 1.0))?;
    let mut tree = PdfTree::new();
    let g = tree.gaussian(&reg, "g", x, mu, sigma)?;

    let mut pulls = Vec::new();
    for seed in 0..toys {
        let data = DataSet::Unbinned(generate_1d(&tree, g, &reg, x, &GenSpec::new(10_000, seed))?);
        let mut fit_reg = reg.clone();
        let r = FitManager::new(&tree, g, &data).run(&mut fit_reg)?;
        if r.status == FitStatus::Converged {
            pulls.push((r.values[0] - 0.5) / r.errors[0]);
        }
    }
    let n = pulls.len() as f64;
    let mean = pulls.iter().sum::<f64>() / n;
    let sd = (pulls.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    println!(
        "{} of {toys} converged; pull mean {mean:.3}, sd {sd:.3}",
        pulls.len()
    );
    Ok(())
}
