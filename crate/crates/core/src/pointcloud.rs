//! Point-cloud preprocessing: range crop, fixed-budget downsampling and
//! temporal aggregation with normalized relative timestamps.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::rng::seeded;

pub const DEFAULT_CROP_RADIUS: f64 = 1.3;
pub const DEFAULT_POINT_BUDGET: usize = 4096;
pub const DEFAULT_WINDOW: usize = 3;

/// One sensor sweep in the sensor's egocentric frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloudFrame {
    pub timestamp: f64,
    pub points: Vec<Vec3>,
}

impl PointCloudFrame {
    pub fn new(timestamp: f64, points: Vec<Vec3>) -> Self {
        Self { timestamp, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPoint {
    pub position: Vec3,
    pub t_rel: f64,
}

/// Fixed-cardinality point set with per-point recency in `[0, 1]` (1 = newest).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AggregatedCloud {
    pub points: Vec<TimedPoint>,
}

impl AggregatedCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Wraps a single frame with every point marked as newest.
    pub fn from_positions(points: impl IntoIterator<Item = Vec3>) -> Self {
        Self {
            points: points
                .into_iter()
                .map(|position| TimedPoint { position, t_rel: 1.0 })
                .collect(),
        }
    }

    /// Checks the cardinality, timestamp range, and crop radius invariants.
    pub fn validate(&self, budget: usize, crop_radius: f64) -> Result<()> {
        if self.points.len() != budget {
            return Err(Error::dims("aggregated cloud", budget, self.points.len()));
        }
        let mut newest = false;
        for p in &self.points {
            if !(0.0..=1.0).contains(&p.t_rel) {
                return Err(Error::OutOfRange {
                    what: "t_rel".into(),
                    value: p.t_rel,
                });
            }
            newest |= p.t_rel == 1.0;
            if p.position.norm() > crop_radius + 1e-9 {
                return Err(Error::OutOfRange {
                    what: "point radius".into(),
                    value: p.position.norm(),
                });
            }
        }
        if !newest {
            return Err(Error::InvalidInput("no point carries t_rel = 1".into()));
        }
        Ok(())
    }
}

/// Keeps points with `|p| <= r_max`, preserving order.
pub fn range_crop(frame: &PointCloudFrame, r_max: f64) -> PointCloudFrame {
    PointCloudFrame {
        timestamp: frame.timestamp,
        points: frame
            .points
            .iter()
            .copied()
            .filter(|p| p.norm() <= r_max)
            .collect(),
    }
}

/// Indices realizing the downsample rule for a set of `len` points.
///
/// With `len >= n` a uniform subset without replacement, kept in input order.
/// With `len < n` every index once, then uniform draws with replacement.
fn downsample_indices<R: Rng + ?Sized>(len: usize, n: usize, rng: &mut R) -> Vec<usize> {
    if len >= n {
        let mut picked = index::sample(rng, len, n).into_vec();
        picked.sort_unstable();
        picked
    } else {
        let mut picked: Vec<usize> = (0..len).collect();
        picked.extend((len..n).map(|_| rng.random_range(0..len)));
        picked
    }
}

pub fn uniform_downsample(frame: &PointCloudFrame, n: usize, seed: u64) -> Result<PointCloudFrame> {
    uniform_downsample_with(frame, n, &mut seeded(seed))
}

pub fn uniform_downsample_with<R: Rng + ?Sized>(
    frame: &PointCloudFrame,
    n: usize,
    rng: &mut R,
) -> Result<PointCloudFrame> {
    if n == 0 {
        return Err(Error::InvalidInput("downsample budget must be >= 1".into()));
    }
    if frame.is_empty() {
        return Err(Error::EmptyCloud(format!(
            "cannot downsample the empty frame at t = {}",
            frame.timestamp
        )));
    }
    let idx = downsample_indices(frame.len(), n, rng);
    Ok(PointCloudFrame {
        timestamp: frame.timestamp,
        points: idx.into_iter().map(|i| frame.points[i]).collect(),
    })
}

pub fn temporal_aggregate(
    frames: &[PointCloudFrame],
    budget: usize,
    window: usize,
    seed: u64,
) -> Result<AggregatedCloud> {
    temporal_aggregate_with(frames, budget, window, &mut seeded(seed))
}

/// Concatenates a short window of frames, stamps each point with its frame's
/// normalized recency and downsamples the union to `budget` points.
///
/// Recency is normalized over the frames that contribute points, so the newest
/// non-empty frame always maps to 1. A single contributing frame maps to 1.
pub fn temporal_aggregate_with<R: Rng + ?Sized>(
    frames: &[PointCloudFrame],
    budget: usize,
    window: usize,
    rng: &mut R,
) -> Result<AggregatedCloud> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("temporal window holds no frames".into()));
    }
    if frames.len() > window {
        return Err(Error::InvalidInput(format!(
            "{} frames exceed the temporal window of {window}",
            frames.len()
        )));
    }
    if budget == 0 {
        return Err(Error::InvalidInput("point budget must be >= 1".into()));
    }
    for pair in frames.windows(2) {
        if !(pair[1].timestamp > pair[0].timestamp) {
            return Err(Error::InvalidInput(format!(
                "frame timestamps must increase strictly ({} then {})",
                pair[0].timestamp, pair[1].timestamp
            )));
        }
    }

    let live: Vec<&PointCloudFrame> = frames.iter().filter(|f| !f.is_empty()).collect();
    let (Some(first), Some(last)) = (live.first(), live.last()) else {
        return Err(Error::EmptyCloud("every frame in the window is empty".into()));
    };
    let (t_min, t_max) = (first.timestamp, last.timestamp);
    let span = t_max - t_min;

    let mut union = Vec::with_capacity(live.iter().map(|f| f.len()).sum());
    for f in &live {
        let t_rel = if span > 0.0 {
            ((f.timestamp - t_min) / span).clamp(0.0, 1.0)
        } else {
            1.0
        };
        union.extend(f.points.iter().map(|&position| TimedPoint { position, t_rel }));
    }

    let mut idx = downsample_indices(union.len(), budget, rng);
    // Keep at least one point of the newest frame after subsampling.
    if !idx.iter().any(|&i| union[i].t_rel == 1.0) {
        let newest_start = union.len() - last.len();
        let pick = rng.random_range(newest_start..union.len());
        let slot = rng.random_range(0..idx.len());
        idx[slot] = pick;
        idx.sort_unstable();
    }
    Ok(AggregatedCloud {
        points: idx.into_iter().map(|i| union[i]).collect(),
    })
}

/// Crop, aggregate, and downsample settings shared by data collection and rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preprocessor {
    pub crop_radius: f64,
    pub budget: usize,
    pub window: usize,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self {
            crop_radius: DEFAULT_CROP_RADIUS,
            budget: DEFAULT_POINT_BUDGET,
            window: DEFAULT_WINDOW,
        }
    }
}

impl Preprocessor {
    /// Crops each frame of the (most recent `window`) frames, then aggregates.
    pub fn process<R: Rng + ?Sized>(
        &self,
        frames: &[PointCloudFrame],
        rng: &mut R,
    ) -> Result<AggregatedCloud> {
        let start = frames.len().saturating_sub(self.window);
        let cropped: Vec<PointCloudFrame> = frames[start..]
            .iter()
            .map(|f| range_crop(f, self.crop_radius))
            .collect();
        temporal_aggregate_with(&cropped, self.budget, self.window, rng)
    }
}
