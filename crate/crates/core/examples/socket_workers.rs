//! Driver and workers talking the frame protocol over local socket pairs.

use std::os::unix::net::UnixStream;
use std::thread;

use parafit::distributed::{Driver, ShardPlan, Worker};
use parafit::engine::{nll, Backend};
use parafit::mcgen::{generate_1d, GenSpec};
use parafit::pdf::PdfTree;
use parafit::variable::{Registry, Variable};

fn main() -> parafit::error::Result<()> {
    let mut reg = Registry::new();
    let x = reg.add(Variable::observable("x", -2.0, 2.0))?;
    let mu = reg.add(Variable::parameter("mu", 0.1))?;
    let sigma = reg.add(Variable::parameter("sigma", 0.6).with_bounds(0.01, 5.0))?;
    let mut tree = PdfTree::new();
    let g = tree.gaussian(&reg, "g", x, mu, sigma)?;
    let data = generate_1d(&tree, g, &reg, x, &GenSpec::new(40_000, 4))?;

    let block = 4096;
    let plan = ShardPlan::new(data.len(), 4, block);
    let mut ends = Vec::new();
    let mut workers = Vec::new();
    for shard in plan.shards() {
        let (driver_end, mut worker_end) =
            UnixStream::pair().map_err(|e| parafit::error::Error::Io(e.to_string()))?;
        let w = Worker::new(
            shard.index,
            data.slice(shard.range.clone()),
            tree.clone(),
            g,
            reg.clone(),
            vec![mu, sigma],
            block,
        )?;
        workers.push(thread::spawn(move || w.serve(&mut worker_end)));
        ends.push(driver_end);
    }

    let mut driver = Driver::new(ends);
    for (m, s) in [(0.1, 0.6), (0.0, 0.5), (0.2, 0.7)] {
        reg.set_value(mu, m)?;
        reg.set_value(sigma, s)?;
        let remote = driver.evaluate(&[m, s])?;
        let local = nll(&tree, g, &data, &reg.snapshot(), &Backend::serial())?;
        println!(
            "mu={m} sigma={s}: remote {remote:.10}  local {local:.10}  same bits {}",
            remote.to_bits() == local.to_bits()
        );
    }
    driver.shutdown()?;
    for w in workers {
        w.join().expect("worker thread")?;
    }
    Ok(())
}
