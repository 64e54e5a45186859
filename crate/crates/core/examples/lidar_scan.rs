//! Renders panoramic LiDAR frames of an out-of-view scene and reports where
//! the returns land.

use omnidp::harness::{lidar_pose, TaskId, TaskSpec};
use omnidp::lidar_sim::{azimuth_deg, elevation_deg, LidarModel};

fn main() -> omnidp::Result<()> {
    let inst = TaskSpec::new(TaskId::PickOv).generate(7)?;
    let model = LidarModel::default();
    let pose = lidar_pose();
    let target = inst.stages[0].grasp.translation - pose.translation;
    println!("target azimuth {:.1} deg, {:.2} m away", azimuth_deg(&target), target.norm());

    for k in 0..3 {
        let frame = model.frame(&inst.scene, &pose, k, 0.1 * k as f64);
        let (lo, hi) = frame
            .points
            .iter()
            .map(elevation_deg)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), e| (a.min(e), b.max(e)));
        let mean_az = frame.points.iter().map(azimuth_deg).sum::<f64>() / frame.len().max(1) as f64;
        println!(
            "frame {k}: {} returns, elevation [{lo:.1}, {hi:.1}] deg, mean azimuth {mean_az:.1} deg",
            frame.len()
        );
    }
    Ok(())
}
