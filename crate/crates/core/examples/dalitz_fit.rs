//! Three-resonance Dalitz model from a JSON file: generate, then fit the
//! free magnitudes and phases.
//!
//! cargo run --release --example dalitz_fit -- crates/core/examples/models/d_to_kkpi.json

use std::path::PathBuf;

use parafit::cli::{build_dalitz, DalitzModelFile};
use parafit::dataset::DataSet;
use parafit::engine::Backend;
use parafit::fit::FitManager;
use parafit::mcgen::{generate_dalitz_node, GenSpec};

fn main() -> parafit::error::Result<()> {
    let path = std::env::args_os().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/examples/models/d_to_kkpi.json"
        ))
    });
    let file = DalitzModelFile::read(&path)?;
    let mut model = build_dalitz(&file)?;

    let data = generate_dalitz_node(&model.tree, model.root, &model.registry, &GenSpec::new(20_000, 1))?;
    println!("generated {} events", data.len());

    let truth = model.registry.clone();
    for id in model.registry.free_parameters() {
        let v = model.registry.value(id);
        model.registry.set_value(id, v * 0.8 + 0.05)?;
    }
    let data = DataSet::Unbinned(data);
    let r = FitManager::new(&model.tree, model.root, &data)
        .backend(Backend::from_env(Backend::serial())?)
        .run(&mut model.registry)?;
    println!("{}  nll {:.3}  calls {}", r.status.as_str(), r.nll_min, r.n_calls);
    for (k, name) in r.names.iter().enumerate() {
        if r.fixed[k] {
            continue;
        }
        let id = truth.lookup(name).expect("parameter from the model");
        println!(
            "{name:>18} = {:>8.4} +/- {:.4}  truth {:.4}",
            r.values[k],
            r.errors[k],
            truth.value(id)
        );
    }
    Ok(())
}
