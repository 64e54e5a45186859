//! Small-budget run of the full / no-omni / no-tap comparison on the flicker
//! task. Numbers from this budget are indicative only.

use omnidp::config::RunConfig;
use omnidp::harness::{ablation_csv, ablation_suite, AblationConfig};

fn main() -> omnidp::Result<()> {
    let cfg = RunConfig::parse("task = flicker-ov\nepisodes = 40\ntrain_steps = 800\neval_trials = 10\n")?;
    let acfg = AblationConfig {
        task: cfg.task_spec(),
        settings: cfg.sensor_settings(),
        expert: cfg.expert_config(),
        train: cfg.train_config(),
        episodes: cfg.episodes,
        collect_seed: cfg.seed,
        trials: cfg.eval_trials,
        eval_seed: cfg.eval_seed,
    };
    print!("{}", ablation_csv(&ablation_suite(&acfg)?));
    Ok(())
}
