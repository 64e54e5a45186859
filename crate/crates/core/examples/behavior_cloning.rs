//! End-to-end behavior cloning on the out-of-view pick task with a LiDAR, then
//! closed-loop evaluation. Takes a couple of minutes in release mode.

use omnidp::config::RunConfig;
use omnidp::harness::{collect, evaluate, train};

fn main() -> omnidp::Result<()> {
    let cfg = RunConfig::parse("task = pick-ov\nsensor = lidar\nepisodes = 60\ntrain_steps = 1500\n")?;
    let (episodes, report) = collect(&cfg.collect_config())?;
    println!("collected: {report}");
    let trained = train(&cfg.train_config(), &episodes)?;
    let n = trained.losses.len();
    let tail = trained.losses[n.saturating_sub(100)..].iter().sum::<f64>() / 100f64.min(n as f64);
    println!("trained {n} steps, mean loss over the last 100: {tail:.5}");
    let m = evaluate(&trained.policy, &cfg.task_spec(), cfg.sensor, &cfg.sensor_settings(), 10, cfg.eval_seed)?;
    println!("{} {}: {m}", cfg.task, cfg.sensor);
    Ok(())
}
