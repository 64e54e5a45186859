//! Scripted-expert demonstrations: collect, write episode files, read them
//! back and replay the recorded actions.

use omnidp::harness::{collect, load_dataset, replay, write_dataset, CollectConfig, SensorKind, TaskId, TaskSpec};

fn main() -> omnidp::Result<()> {
    let dir = std::env::temp_dir().join("omnidp_expert_demos");
    for task in TaskId::ALL {
        let cfg = CollectConfig::new(TaskSpec::new(task), SensorKind::Lidar, 3, 1);
        let (episodes, report) = collect(&cfg)?;
        let sub = dir.join(task.name());
        write_dataset(&sub, &episodes)?;
        let back = load_dataset(&sub)?;
        let replays: Vec<bool> = back.iter().map(|ep| replay(&cfg.task, ep).map(|o| o.success)).collect::<Result<_, _>>()?;
        let lengths: Vec<usize> = back.iter().map(|e| e.frames.len()).collect();
        println!("{task}: {report}; lengths {lengths:?}; replay success {replays:?}");
    }
    println!("episodes written under {}", dir.display());
    Ok(())
}
