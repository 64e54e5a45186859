//! Binary checkpoint: magic `ODPW`, version, a table of named row-major f64
//! blocks, the action statistics, then the noise schedule. All integers are
//! u32 and all floats f64, little-endian.
//!
//! The first block, `meta.arch`, stores the architecture needed to rebuild
//! the policy before the parameter blocks are copied in by name.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::encoder::{EncoderConfig, Pooling};
use crate::error::{Error, Result};
use crate::nn::Parameterized;
use crate::rng::seeded;
use crate::ACTION_DIM;

use super::{ActionNormalizer, NoiseSchedule, Policy, PolicyConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ODPW";
const VERSION: u32 = 1;
const META: &str = "meta.arch";

fn arch(p: &Policy) -> Vec<f64> {
    let enc_widths: Vec<usize> = p.encoder.points.mlp.layers.iter().map(|l| l.output_dim()).collect();
    let hidden = p.denoiser.hidden_widths();
    let mut m = vec![
        p.denoiser.horizon as f64,
        p.denoiser.emb_width as f64,
        p.window as f64,
        p.execute as f64,
        match p.encoder.pooling {
            Pooling::TimeAware => 0.0,
            Pooling::Max => 1.0,
        },
        p.encoder.feature_conditioned as u8 as f64,
        p.denoiser.clip_sample as u8 as f64,
        p.encoder.head.mlp.layers[0].output_dim() as f64,
        enc_widths.len() as f64,
    ];
    m.extend(enc_widths.iter().map(|&w| w as f64));
    m.push(hidden.len() as f64);
    m.extend(hidden.iter().map(|&w| w as f64));
    m
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_block(out: &mut Vec<u8>, name: &str, rows: usize, cols: usize, data: &[f64]) -> Result<()> {
    put_u32(out, name.len())?;
    out.extend_from_slice(name.as_bytes());
    put_u32(out, rows)?;
    put_u32(out, cols)?;
    put_f64s(out, data);
    Ok(())
}

pub fn write_checkpoint<W: Write>(policy: &Policy, mut w: W) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, VERSION as usize)?;
    let blocks = policy.blocks();
    put_u32(&mut out, blocks.len() + 1)?;
    let meta = arch(policy);
    put_block(&mut out, META, 1, meta.len(), &meta)?;
    for b in &blocks {
        put_block(&mut out, &b.name, b.rows, b.cols, b.data)?;
    }
    put_f64s(&mut out, &policy.normalizer.mean);
    put_f64s(&mut out, &policy.normalizer.scale);
    put_u32(&mut out, policy.schedule.steps())?;
    put_f64s(&mut out, policy.schedule.betas());
    w.write_all(&out)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.at < n {
            return Err(Error::Format(format!("checkpoint truncated at byte {}", self.at)));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("block too large".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

struct RawBlock {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(Error::Format(format!("bad {what} in checkpoint architecture: {v}")))
    }
}

fn config_from_arch(m: &[f64]) -> Result<PolicyConfig> {
    let get = |i: usize, what: &str| -> Result<usize> {
        m.get(i)
            .ok_or_else(|| Error::Format("architecture block too short".into()))
            .and_then(|&v| as_count(v, what))
    };
    let n_enc = get(8, "encoder depth")?;
    let widths = (0..n_enc).map(|i| get(9 + i, "encoder width")).collect::<Result<Vec<_>>>()?;
    let n_hidden = get(9 + n_enc, "denoiser depth")?;
    let hidden = (0..n_hidden)
        .map(|i| get(10 + n_enc + i, "denoiser width"))
        .collect::<Result<Vec<_>>>()?;
    if m.len() != 10 + n_enc + n_hidden {
        return Err(Error::Format("architecture block has trailing values".into()));
    }
    Ok(PolicyConfig {
        encoder: EncoderConfig {
            widths,
            head_hidden: get(7, "head width")?,
            pooling: if get(4, "pooling")? == 0 { Pooling::TimeAware } else { Pooling::Max },
            feature_conditioned: get(5, "feature conditioning")? != 0,
        },
        horizon: get(0, "horizon")?,
        execute: get(3, "executed steps")?,
        hidden,
        emb_width: get(1, "embedding width")?,
        window: get(2, "window")?,
        clip_sample: get(6, "clip flag")? != 0,
        ..PolicyConfig::default()
    })
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Policy> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, at: 0 };
    if c.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = c.u32()?;
    let mut raw = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = c.u32()?;
        let name = String::from_utf8(c.take(len)?.to_vec()).map_err(|_| Error::Format("block name is not UTF-8".into()))?;
        let rows = c.u32()?;
        let cols = c.u32()?;
        let n = rows.checked_mul(cols).ok_or_else(|| Error::Format("block too large".into()))?;
        let data = c.f64s(n)?;
        raw.push(RawBlock { name, rows, cols, data });
    }
    let mean = c.f64s(ACTION_DIM)?;
    let scale = c.f64s(ACTION_DIM)?;
    let k = c.u32()?;
    let betas = c.f64s(k)?;
    if c.at != buf.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }

    let Some((meta, params)) = raw.split_first() else {
        return Err(Error::Format("checkpoint has no blocks".into()));
    };
    if meta.name != META || meta.rows != 1 {
        return Err(Error::Format(format!("first block must be `{META}`")));
    }
    let cfg = config_from_arch(&meta.data)?;
    let normalizer = ActionNormalizer { mean, scale };
    let mut policy = Policy::new(&cfg, normalizer, &mut seeded(0))?;
    policy.schedule = NoiseSchedule::from_betas(betas)?;
    let mut slots = policy.blocks_mut();
    if slots.len() != params.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {} parameter blocks, architecture needs {}",
            params.len(),
            slots.len()
        )));
    }
    for (slot, b) in slots.iter_mut().zip(params) {
        if slot.name != b.name || slot.rows != b.rows || slot.cols != b.cols {
            return Err(Error::Format(format!(
                "block `{}` ({}x{}) does not match expected `{}` ({}x{})",
                b.name, b.rows, b.cols, slot.name, slot.rows, slot.cols
            )));
        }
        slot.data.copy_from_slice(&b.data);
    }
    drop(slots);
    Ok(policy)
}

pub fn save_checkpoint(policy: &Policy, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    write_checkpoint(policy, &mut bytes)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Policy> {
    read_checkpoint(fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;

    fn policy(pooling: Pooling) -> Policy {
        let cfg = PolicyConfig {
            encoder: EncoderConfig {
                widths: vec![8, 6],
                head_hidden: 4,
                pooling,
                feature_conditioned: false,
            },
            horizon: 3,
            execute: 2,
            hidden: vec![12, 10],
            emb_width: 6,
            window: 2,
            ..PolicyConfig::default()
        };
        let mut norm = ActionNormalizer::identity();
        norm.mean[3] = 0.125;
        norm.scale[7] = 1.0 / 3.0;
        Policy::new(&cfg, norm, &mut seeded(42)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for pooling in [Pooling::TimeAware, Pooling::Max] {
            let p = policy(pooling);
            let mut a = Vec::new();
            write_checkpoint(&p, &mut a).unwrap();
            let q = read_checkpoint(a.as_slice()).unwrap();
            assert_eq!(p, q);
            let mut b = Vec::new();
            write_checkpoint(&q, &mut b).unwrap();
            assert_eq!(a, b);
            assert_eq!(&a[..4], b"ODPW");
        }
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let mut a = Vec::new();
        write_checkpoint(&policy(Pooling::TimeAware), &mut a).unwrap();
        assert!(read_checkpoint(&a[..a.len() - 1]).is_err());
        let mut bad = a.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(bad.as_slice()).is_err());
        let mut long = a.clone();
        long.push(0);
        assert!(read_checkpoint(long.as_slice()).is_err());
        // Rename the first parameter block.
        let mut renamed = a.clone();
        let at = renamed.windows(14).position(|w| w == b"encoder.points").unwrap();
        renamed[at] = b'E';
        assert!(read_checkpoint(renamed.as_slice()).is_err());
    }
}
