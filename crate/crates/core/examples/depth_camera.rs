//! Head depth camera: render a depth image, back-project it, and show that an
//! object behind the robot is invisible.

use omnidp::harness::{camera_pose, TaskId, TaskSpec};
use omnidp::lidar_sim::{depth_image, depth_to_pointcloud, DepthCameraModel};

fn main() -> omnidp::Result<()> {
    let model = DepthCameraModel::default();
    for (task, seed) in [(TaskId::Pick, 3), (TaskId::PickOv, 3)] {
        let inst = TaskSpec::new(task).generate(seed)?;
        let img = depth_image(&inst.scene, &camera_pose(), &model);
        let hits = img.data.iter().filter(|d| **d > 0.0).count();
        let cloud = depth_to_pointcloud(&img, &model, 0.0)?;
        println!(
            "{task}: {hits} of {} pixels see something; {} points after back-projection",
            img.data.len(),
            cloud.len()
        );
    }
    println!("horizontal field of view {:.1} deg", 2.0 * model.horizontal_half_fov().to_degrees());
    Ok(())
}
