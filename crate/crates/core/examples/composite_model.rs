//! Signal peak on an exponential and linear background, fitted as one sum.

use parafit::dataset::DataSet;
use parafit::fit::FitManager;
use parafit::mcgen::{generate_1d, GenSpec};
use parafit::pdf::PdfTree;
use parafit::variable::{Registry, Variable};

fn main() -> parafit::error::Result<()> {
    let mut reg = Registry::new();
    let x = reg.add(Variable::observable("x", 0.0, 1.0))?;
    let mu = reg.add(Variable::parameter("mu", 0.4).with_bounds(0.0, 1.0))?;
    let sigma = reg.add(Variable::parameter("sigma", 0.05).with_bounds(0.005, 0.5))?;
    let alpha = reg.add(Variable::parameter("alpha", -3.0).with_bounds(-10.0, 10.0))?;
    let c0 = reg.add(Variable::parameter("c0", 1.0).fixed(true))?;
    let c1 = reg.add(Variable::parameter("c1", 0.5).with_bounds(0.0, 2.0))?;
    let f_sig = reg.add(Variable::parameter("f_sig", 0.3).with_bounds(0.0, 1.0))?;
    let f_exp = reg.add(Variable::parameter("f_exp", 0.4).with_bounds(0.0, 1.0))?;

    let mut tree = PdfTree::new();
    let sig = tree.gaussian(&reg, "signal", x, mu, sigma)?;
    let exp = tree.exponential(&reg, "exp_bkg", x, alpha)?;
    let lin = tree.polynomial(&reg, "lin_bkg", x, &[c0, c1])?;
    // The linear fraction is 1 - f_sig - f_exp.
    let model = tree.add(&reg, "model", &[sig, exp, lin], &[f_sig, f_exp])?;

    let data = DataSet::Unbinned(generate_1d(&tree, model, &reg, x, &GenSpec::new(200_000, 13))?);
    for (id, start) in [
        (mu, 0.45),
        (sigma, 0.08),
        (alpha, -2.0),
        (c1, 1.0),
        (f_sig, 0.2),
        (f_exp, 0.3),
    ] {
        reg.set_value(id, start)?;
    }
    // The two backgrounds are strongly correlated, so c1 and f_exp wander
    // from toy to toy far more than the signal parameters do.
    let r = FitManager::new(&tree, model, &data).run(&mut reg)?;
    println!("{} after {} calls", r.status.as_str(), r.n_calls);
    let truth = [0.4, 0.05, -3.0, 1.0, 0.5, 0.3, 0.4];
    for (k, name) in r.names.iter().enumerate() {
        let tag = if r.fixed[k] { " (fixed)" } else { "" };
        println!(
            "{name:>6} = {:>9.5} +/- {:.5}  truth {}{tag}",
            r.values[k], r.errors[k], truth[k]
        );
    }
    Ok(())
}
