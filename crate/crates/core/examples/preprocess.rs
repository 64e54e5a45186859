//! Range crop, uniform downsampling and temporal aggregation of LiDAR frames.

use omnidp::harness::{lidar_pose, TaskId, TaskSpec};
use omnidp::lidar_sim::LidarModel;
use omnidp::pointcloud::{range_crop, temporal_aggregate, uniform_downsample};

fn main() -> omnidp::Result<()> {
    let inst = TaskSpec::new(TaskId::FlickerOv).generate(2)?;
    let model = LidarModel::default();
    let frames: Vec<_> = (0..3)
        .map(|k| model.frame(&inst.scene, &lidar_pose(), k, 0.1 * k as f64))
        .collect();
    let cropped: Vec<_> = frames.iter().map(|f| range_crop(f, 1.3)).collect();
    for (f, c) in frames.iter().zip(&cropped) {
        println!("t={:.1}: {} returns, {} within 1.3 m", f.timestamp, f.len(), c.len());
    }
    let small = uniform_downsample(&cropped[2], 64, 0)?;
    println!("downsampled newest frame to {} points", small.len());

    let agg = temporal_aggregate(&cropped, 256, 3, 0)?;
    let mut counts = std::collections::BTreeMap::new();
    for p in &agg.points {
        *counts.entry(format!("{:.2}", p.t_rel)).or_insert(0) += 1;
    }
    println!("aggregated {} points; per t_rel: {counts:?}", agg.len());
    Ok(())
}
