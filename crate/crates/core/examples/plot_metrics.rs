//! Bar chart of a metrics table and a loss curve, written as SVG.

use omnidp::harness::{loss_csv, Metrics, METRICS_CSV_HEADER};
use omnidp::plot::plot_csv;

fn main() -> omnidp::Result<()> {
    let rows = [
        ("pick-ov/lidar", Metrics { trials: 20, successes: 19, collisions: 0 }),
        ("pick-ov/depthcam", Metrics { trials: 20, successes: 1, collisions: 0 }),
        ("obstacle-ov/lidar", Metrics { trials: 20, successes: 17, collisions: 2 }),
        ("obstacle-ov/depthcam", Metrics { trials: 20, successes: 3, collisions: 16 }),
    ];
    let mut csv = format!("{METRICS_CSV_HEADER}\n");
    for (label, m) in rows {
        csv.push_str(&m.csv_row(label));
        csv.push('\n');
    }
    let dir = std::env::temp_dir().join("omnidp_plots");
    std::fs::create_dir_all(&dir)?;
    let (svg, table) = plot_csv(&csv)?;
    std::fs::write(dir.join("bars.svg"), svg)?;
    print!("{table}");

    let losses: Vec<f64> = (0..200).map(|i| 1.0 / (1.0 + 0.05 * i as f64)).collect();
    let (svg, table) = plot_csv(&loss_csv(&losses))?;
    std::fs::write(dir.join("loss.svg"), svg)?;
    print!("{table}");
    println!("wrote {}", dir.display());
    Ok(())
}
