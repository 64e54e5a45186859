//! Recorded trajectories and their little-endian "ODPE" file format.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::pointcloud::{AggregatedCloud, TimedPoint};
use crate::{ACTION_DIM, PROPRIO_DIM};

use super::sensor::SensorKind;
use super::task::TaskId;

pub const EPISODE_MAGIC: &[u8; 4] = b"ODPE";
pub const EPISODE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeHeader {
    pub task: TaskId,
    pub sensor: SensorKind,
    pub point_budget: u32,
    /// Scene seed; regenerating the task with it reproduces the world.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub timestamp: f64,
    pub proprio: Vec<f32>,
    pub action: Vec<f32>,
    /// `(x, y, z, t_rel)` per point.
    pub points: Vec<[f32; 4]>,
}

impl Frame {
    pub fn new(timestamp: f64, proprio: &[f64], action: &[f64], cloud: &AggregatedCloud) -> Self {
        Self {
            timestamp,
            proprio: proprio.iter().map(|&v| v as f32).collect(),
            action: action.iter().map(|&v| v as f32).collect(),
            points: cloud
                .points
                .iter()
                .map(|p| [p.position.x as f32, p.position.y as f32, p.position.z as f32, p.t_rel as f32])
                .collect(),
        }
    }

    pub fn proprio_f64(&self) -> Vec<f64> {
        self.proprio.iter().map(|&v| v as f64).collect()
    }

    pub fn action_f64(&self) -> Vec<f64> {
        self.action.iter().map(|&v| v as f64).collect()
    }

    pub fn cloud(&self) -> AggregatedCloud {
        AggregatedCloud {
            points: self
                .points
                .iter()
                .map(|&[x, y, z, t]| TimedPoint {
                    position: Vec3::new(x as f64, y as f64, z as f64),
                    t_rel: t as f64,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub header: EpisodeHeader,
    pub frames: Vec<Frame>,
}

impl Episode {
    pub fn validate(&self) -> Result<()> {
        for (i, f) in self.frames.iter().enumerate() {
            if f.proprio.len() != PROPRIO_DIM {
                return Err(Error::dims(format!("frame {i} proprio"), PROPRIO_DIM, f.proprio.len()));
            }
            if f.action.len() != ACTION_DIM {
                return Err(Error::dims(format!("frame {i} action"), ACTION_DIM, f.action.len()));
            }
            if f.points.len() > self.header.point_budget as usize {
                return Err(Error::dims(
                    format!("frame {i} cloud"),
                    self.header.point_budget as usize,
                    f.points.len(),
                ));
            }
            if !f.timestamp.is_finite() {
                return Err(Error::Format(format!("frame {i} timestamp is not finite")));
            }
        }
        for (i, w) in self.frames.windows(2).enumerate() {
            if !(w[1].timestamp > w[0].timestamp) {
                return Err(Error::Format(format!("timestamps not increasing at frame {}", i + 1)));
            }
        }
        Ok(())
    }
}

pub fn write_episode<W: Write>(ep: &Episode, mut w: W) -> Result<()> {
    ep.validate()?;
    let h = &ep.header;
    w.write_all(EPISODE_MAGIC)?;
    w.write_all(&EPISODE_VERSION.to_le_bytes())?;
    w.write_all(&(PROPRIO_DIM as u32).to_le_bytes())?;
    w.write_all(&(ACTION_DIM as u32).to_le_bytes())?;
    w.write_all(&h.point_budget.to_le_bytes())?;
    w.write_all(&(ep.frames.len() as u32).to_le_bytes())?;
    w.write_all(&[h.sensor.code()])?;
    w.write_all(&h.task.code().to_le_bytes())?;
    w.write_all(&h.seed.to_le_bytes())?;
    for f in &ep.frames {
        w.write_all(&f.timestamp.to_le_bytes())?;
        for v in f.proprio.iter().chain(&f.action) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(f.points.len() as u32).to_le_bytes())?;
        for p in &f.points {
            for v in p {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

struct Cursor<R> {
    r: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.r
            .read_exact(&mut b)
            .map_err(|_| Error::Format(format!("truncated episode while reading {what}")))?;
        Ok(b)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes(what)?))
    }
}

pub fn read_episode<R: Read>(r: R) -> Result<Episode> {
    let mut c = Cursor { r };
    if &c.bytes::<4>("magic")? != EPISODE_MAGIC {
        return Err(Error::Format("not an episode file (bad magic)".into()));
    }
    let version = c.u32("version")?;
    if version != EPISODE_VERSION {
        return Err(Error::Format(format!("unsupported episode version {version}")));
    }
    let pd = c.u32("proprio_dim")? as usize;
    let ad = c.u32("action_dim")? as usize;
    if pd != PROPRIO_DIM || ad != ACTION_DIM {
        return Err(Error::Format(format!("episode dims {pd}/{ad}, expected {PROPRIO_DIM}/{ACTION_DIM}")));
    }
    let point_budget = c.u32("point_budget")?;
    let frame_count = c.u32("frame_count")? as usize;
    let sensor_code = c.bytes::<1>("sensor_kind")?[0];
    let sensor =
        SensorKind::from_code(sensor_code).ok_or_else(|| Error::Format(format!("unknown sensor code {sensor_code}")))?;
    let task_code = c.u32("task_id")?;
    let task = TaskId::from_code(task_code).ok_or_else(|| Error::Format(format!("unknown task code {task_code}")))?;
    let seed = u64::from_le_bytes(c.bytes("seed")?);

    let mut frames = Vec::with_capacity(frame_count.min(1 << 16));
    for _ in 0..frame_count {
        let timestamp = f64::from_le_bytes(c.bytes("timestamp")?);
        let proprio = (0..PROPRIO_DIM).map(|_| c.f32("proprio")).collect::<Result<Vec<_>>>()?;
        let action = (0..ACTION_DIM).map(|_| c.f32("action")).collect::<Result<Vec<_>>>()?;
        let n = c.u32("n_points")?;
        if n > point_budget {
            return Err(Error::Format(format!("frame holds {n} points, budget is {point_budget}")));
        }
        let mut points = Vec::with_capacity(n as usize);
        for _ in 0..n {
            points.push([c.f32("point")?, c.f32("point")?, c.f32("point")?, c.f32("point")?]);
        }
        frames.push(Frame {
            timestamp,
            proprio,
            action,
            points,
        });
    }
    let mut rest = [0u8; 1];
    if c.r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after the last frame".into()));
    }
    let ep = Episode {
        header: EpisodeHeader {
            task,
            sensor,
            point_budget,
            seed,
        },
        frames,
    };
    ep.validate()?;
    Ok(ep)
}

pub fn save_episode(ep: &Episode, path: &Path) -> Result<()> {
    write_episode(ep, BufWriter::new(fs::File::create(path)?))
}

pub fn load_episode(path: &Path) -> Result<Episode> {
    read_episode(BufReader::new(fs::File::open(path)?))
}

/// Every `*.odpe` file in a directory, sorted by file name.
pub fn load_dataset(dir: &Path) -> Result<Vec<Episode>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "odpe"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidInput(format!("no episode files in {}", dir.display())));
    }
    paths.iter().map(|p| load_episode(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_episode(seed: u64, frames: usize, budget: u32) -> Episode {
        let mut rng = seeded(seed);
        Episode {
            header: EpisodeHeader {
                task: TaskId::ALL[rng.random_range(0..TaskId::ALL.len())],
                sensor: if rng.random_bool(0.5) { SensorKind::Lidar } else { SensorKind::DepthCam },
                point_budget: budget,
                seed: rng.random(),
            },
            frames: (0..frames)
                .map(|i| Frame {
                    timestamp: i as f64 * 0.1 + rng.random_range(0.0..0.05),
                    proprio: (0..PROPRIO_DIM).map(|_| rng.random_range(-3.0..3.0)).collect(),
                    action: (0..ACTION_DIM).map(|_| rng.random_range(-3.0..3.0)).collect(),
                    points: (0..rng.random_range(0..=budget))
                        .map(|_| [rng.random(), rng.random(), rng.random(), rng.random()])
                        .collect(),
                })
                .collect(),
        }
    }

    fn bytes(ep: &Episode) -> Vec<u8> {
        let mut buf = Vec::new();
        write_episode(ep, &mut buf).unwrap();
        buf
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), frames in 0usize..6, budget in 1u32..20) {
            let ep = random_episode(seed, frames, budget);
            let buf = bytes(&ep);
            let back = read_episode(buf.as_slice()).unwrap();
            prop_assert_eq!(&back, &ep);
            prop_assert_eq!(bytes(&back), buf);
        }
    }

    #[test]
    fn header_layout() {
        let ep = random_episode(1, 2, 4);
        let buf = bytes(&ep);
        assert_eq!(&buf[..4], b"ODPE");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 43);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 28);
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(buf[20..24].try_into().unwrap()), 2);
        assert_eq!(buf[24], ep.header.sensor.code());
        assert_eq!(u32::from_le_bytes(buf[25..29].try_into().unwrap()), ep.header.task.code());
        assert_eq!(u64::from_le_bytes(buf[29..37].try_into().unwrap()), ep.header.seed);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let ep = random_episode(2, 3, 5);
        let buf = bytes(&ep);
        for cut in [0, 3, 20, 36, buf.len() - 1] {
            assert!(read_episode(&buf[..cut]).is_err(), "cut {cut}");
        }
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_episode(extra.as_slice()).is_err());
        let mut magic = buf.clone();
        magic[0] = b'X';
        assert!(read_episode(magic.as_slice()).is_err());
        let mut dims = buf.clone();
        dims[8] = 44;
        assert!(read_episode(dims.as_slice()).is_err());
    }

    #[test]
    fn invariants_are_enforced_on_write() {
        let mut ep = random_episode(3, 3, 5);
        ep.frames[2].timestamp = ep.frames[1].timestamp;
        assert!(write_episode(&ep, Vec::new()).is_err());
        let mut ep = random_episode(3, 3, 5);
        ep.frames[0].action.pop();
        assert!(write_episode(&ep, Vec::new()).is_err());
    }
}
