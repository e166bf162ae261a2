//! The `.ten` tensor container: `SECT`, version, dtype, rank, little-endian
//! `u32` extents, then row-major little-endian values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use secn_core::Tensor;

pub const MAGIC: &[u8; 4] = b"SECT";
pub const VERSION: u8 = 1;

/// Element type on disk. Tensors are always `f64` in memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F64 = 0,
    F32 = 1,
}

impl Dtype {
    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Dtype::F64),
            1 => Ok(Dtype::F32),
            _ => bail!("unknown dtype tag {b}"),
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
        }
    }
}

pub fn encode(t: &Tensor, dtype: Dtype) -> Result<Vec<u8>> {
    ensure!(t.rank() <= u8::MAX as usize, "rank {} does not fit the header", t.rank());
    let mut out = Vec::with_capacity(7 + 4 * t.rank() + dtype.width() * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, dtype as u8, t.rank() as u8]);
    for &d in t.shape() {
        let d = u32::try_from(d).context("extent does not fit in u32")?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    match dtype {
        Dtype::F64 => t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Dtype::F32 => t.data().iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let mut r = bytes;
    let mut head = [0u8; 7];
    r.read_exact(&mut head).context("truncated header")?;
    ensure!(&head[..4] == MAGIC, "not a .ten file (bad magic)");
    ensure!(head[4] == VERSION, "unsupported .ten version {}", head[4]);
    let dtype = Dtype::from_byte(head[5])?;
    let rank = head[6] as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).context("truncated extents")?;
        shape.push(u32::from_le_bytes(b) as usize);
    }
    let n: usize = shape.iter().product();
    ensure!(
        r.len() == n * dtype.width(),
        "expected {} bytes of data for shape {shape:?}, found {}",
        n * dtype.width(),
        r.len()
    );
    let data = match dtype {
        Dtype::F64 => r.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
        Dtype::F32 => r.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
    };
    Ok(Tensor::new(&shape, data)?)
}

pub fn write(path: &Path, t: &Tensor, dtype: Dtype) -> Result<()> {
    let bytes = encode(t, dtype)?;
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode(&bytes).with_context(|| format!("decoding {}", path.display()))
}
