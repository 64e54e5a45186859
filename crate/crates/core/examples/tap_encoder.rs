//! Point encoder with time-aware attention pooling: attention over frames of
//! different age, and the max-pooling alternative.

use omnidp::encoder::{attention_weights, encoder_forward, Encoder, EncoderConfig, Pooling};
use omnidp::pointcloud::{AggregatedCloud, TimedPoint};
use omnidp::rng::seeded;
use omnidp::Vec3;

fn main() -> omnidp::Result<()> {
    let cloud = AggregatedCloud {
        points: (0..12)
            .map(|i| TimedPoint {
                position: Vec3::new(0.4, 0.05 * i as f64, 1.3),
                t_rel: (i % 3) as f64 / 2.0,
            })
            .collect(),
    };
    let enc = Encoder::new(&EncoderConfig::default(), &mut seeded(0))?;
    let w = attention_weights(&enc.head, &cloud)?;
    println!("attention weights (sum {:.12}):", w.sum());
    for (p, wi) in cloud.points.iter().zip(w.iter()).take(3) {
        println!("  t_rel {:.1} -> {wi:.4}", p.t_rel);
    }
    let f = encoder_forward(&enc, &cloud)?;
    println!("TAP feature: {} dims, norm {:.4}", f.len(), f.dot(&f).sqrt());

    let max_cfg = EncoderConfig {
        pooling: Pooling::Max,
        ..EncoderConfig::default()
    };
    let enc_max = Encoder::new(&max_cfg, &mut seeded(0))?;
    let g = encoder_forward(&enc_max, &cloud)?;
    println!("max-pooled feature: {} dims, norm {:.4}", g.len(), g.dot(&g).sqrt());
    Ok(())
}
