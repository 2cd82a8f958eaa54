//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! "DDTM" | version u32 | K u32 | F_c u32 | F_t u32 | variant u32
//! a | b | c | b_start | b_stop | U | V | W      (row-major f64 blocks)
//! FNV-1a 64 checksum of every preceding byte (u64)
//! ```

use std::path::Path;

use super::{Block, HiddenConfig, ModelParams, ParamBlocks, Variant};
use crate::error::{Error, Result};
use crate::math::fnv64;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DDTM";
pub const CHECKPOINT_VERSION: u32 = 1;

fn block_dims(block: Block, k: usize, fc: usize, ft: usize) -> (usize, usize) {
    match block {
        Block::A => (k, 1),
        Block::B | Block::BStart | Block::BStop => (fc, 1),
        Block::C => (ft, 1),
        Block::U => (fc, k),
        Block::V => (ft, k),
        Block::W => (fc, fc),
    }
}

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let (k, fc, ft) = (
        params.vocab_size(),
        params.comment_bits(),
        params.thread_bits(),
    );
    let mut out = Vec::with_capacity(32 + 8 * (k * (1 + fc + ft) + fc * (3 + fc) + ft));
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [
        CHECKPOINT_VERSION,
        k as u32,
        fc as u32,
        ft as u32,
        params.variant.tag(),
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let row_major = |m: &nalgebra::DMatrix<f64>, out: &mut Vec<u8>| {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.extend_from_slice(&m[(i, j)].to_le_bytes());
            }
        }
    };
    for block in Block::ALL {
        match block {
            Block::U => row_major(&params.u, &mut out),
            Block::V => row_major(&params.v, &mut out),
            Block::W => row_major(&params.w, &mut out),
            _ => {
                for v in params.block(block) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    let sum = fnv64(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, section: &'static str) -> Result<&'a [u8]> {
        let have = self.bytes.len() - self.pos;
        if have < n {
            return Err(Error::Checkpoint {
                section,
                message: format!("truncated: need {n} bytes, {have} remain"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, section: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, section)?.try_into().unwrap(),
        ))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint {
            section: "magic",
            message: "not a DDTM checkpoint".into(),
        });
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint {
            section: "version",
            message: format!("unsupported version {version}, expected {CHECKPOINT_VERSION}"),
        });
    }
    let k = r.u32("header")? as usize;
    let fc = r.u32("header")? as usize;
    let ft = r.u32("header")? as usize;
    let tag = r.u32("header")?;
    let variant = Variant::from_tag(tag).ok_or_else(|| Error::Checkpoint {
        section: "header",
        message: format!("unknown variant tag {tag}"),
    })?;

    // Slice every block before allocating, so a corrupted header cannot
    // request more memory than the file holds.
    let mut raws = Vec::with_capacity(Block::ALL.len());
    for block in Block::ALL {
        let (rows, cols) = block_dims(block, k, fc, ft);
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Checkpoint {
                section: "header",
                message: format!("dimensions (K, F_c, F_t) = ({k}, {fc}, {ft}) overflow"),
            })?;
        raws.push(r.take(n, block.name())?);
    }
    let mut blocks = ParamBlocks::zeros(k, fc, ft);
    for (block, raw) in Block::ALL.into_iter().zip(raws) {
        let (rows, cols) = block_dims(block, k, fc, ft);
        let mut vals = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        match block {
            Block::U | Block::V | Block::W => {
                let m = match block {
                    Block::U => &mut blocks.u,
                    Block::V => &mut blocks.v,
                    _ => &mut blocks.w,
                };
                for i in 0..rows {
                    for j in 0..cols {
                        m[(i, j)] = vals.next().unwrap();
                    }
                }
            }
            _ => {
                for (dst, v) in blocks.block_mut(block).iter_mut().zip(vals) {
                    *dst = v;
                }
            }
        }
    }
    let body_len = r.pos;
    let stored = u64::from_le_bytes(r.take(8, "checksum")?.try_into().unwrap());
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint {
            section: "checksum",
            message: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    let actual = fnv64(&bytes[..body_len]);
    if stored != actual {
        return Err(Error::Checkpoint {
            section: "checksum",
            message: format!("stored {stored:#018x} != computed {actual:#018x}"),
        });
    }
    Ok(ModelParams { variant, blocks })
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

/// Loads and validates a checkpoint; non-finite parameters are rejected.
pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let params = decode_checkpoint(&bytes)?;
    params.validate()?;
    Ok(params)
}

/// Loads a checkpoint and checks its dimensions against a run configuration.
pub fn load_checkpoint_expecting(path: &Path, k: usize, cfg: &HiddenConfig) -> Result<ModelParams> {
    let params = load_checkpoint(path)?;
    let got = (
        params.vocab_size(),
        params.comment_bits(),
        params.thread_bits(),
    );
    let want = (k, cfg.comment_bits, cfg.thread_bits);
    if got != want {
        return Err(Error::Checkpoint {
            section: "header",
            message: format!(
                "dimension mismatch: checkpoint has (K, F_c, F_t) = {got:?}, run expects {want:?}"
            ),
        });
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelParams {
        let cfg = HiddenConfig::new(2, 3, Variant::Ddtm).unwrap();
        let mut p = ModelParams::zeros(4, cfg);
        for b in Block::ALL {
            for (i, v) in p.block_mut(b).iter_mut().enumerate() {
                *v = (i as f64 + 1.0) * 0.37 - 1.1;
            }
        }
        p.u[(1, 3)] = -7.25;
        p
    }

    #[test]
    fn header_layout() {
        let bytes = encode_checkpoint(&sample());
        assert_eq!(&bytes[..4], b"DDTM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 3);
        // U sits after a(4) b(2) c(3) b_start(2) b_stop(2) and is row-major
        let u_off = 24 + 8 * 13;
        let u13 = f64::from_le_bytes(bytes[u_off + 8 * 7..u_off + 8 * 8].try_into().unwrap());
        assert_eq!(u13, -7.25);
    }

    #[test]
    fn bitwise_round_trip() {
        let p = sample();
        let q = decode_checkpoint(&encode_checkpoint(&p)).unwrap();
        for b in Block::ALL {
            let x: Vec<u64> = p.block(b).iter().map(|v| v.to_bits()).collect();
            let y: Vec<u64> = q.block(b).iter().map(|v| v.to_bits()).collect();
            assert_eq!(x, y);
        }
        assert_eq!(q.variant, Variant::Ddtm);
    }

    #[test]
    fn truncation_names_section() {
        let bytes = encode_checkpoint(&sample());
        let cut = 24 + 8 * 4 + 8; // inside b
        match decode_checkpoint(&bytes[..cut]) {
            Err(Error::Checkpoint { section, .. }) => assert_eq!(section, "b"),
            other => panic!("unexpected {other:?}"),
        }
        match decode_checkpoint(&bytes[..bytes.len() - 3]) {
            Err(Error::Checkpoint { section, .. }) => assert_eq!(section, "checksum"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = encode_checkpoint(&sample());
        bytes[40] ^= 0x10;
        assert!(matches!(
            decode_checkpoint(&bytes),
            Err(Error::Checkpoint {
                section: "checksum",
                ..
            })
        ));
        let mut bytes = encode_checkpoint(&sample());
        bytes[0] = b'X';
        assert!(matches!(
            decode_checkpoint(&bytes),
            Err(Error::Checkpoint {
                section: "magic",
                ..
            })
        ));
        let mut bytes = encode_checkpoint(&sample());
        bytes[4] = 9;
        assert!(matches!(
            decode_checkpoint(&bytes),
            Err(Error::Checkpoint {
                section: "version",
                ..
            })
        ));
    }
}
