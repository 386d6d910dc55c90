//! `AHSF` tensor container:
//!
//! ```text
//! "AHSF"  u32 rank  rank x u32 dim  prod(dims) x f32
//! ```
//!
//! Little endian throughout, payload row-major (last index fastest).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::FileError;

pub const TENSOR_MAGIC: [u8; 4] = *b"AHSF";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Option<Self> {
        (dims.iter().product::<usize>() == data.len()).then_some(Self { dims, data })
    }
}

pub fn write_tensor_to(w: &mut impl Write, dims: &[usize], data: &[f32]) -> std::io::Result<()> {
    let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidInput, m.to_string());
    if dims.iter().product::<usize>() != data.len() {
        return Err(bad("tensor data does not match its dims"));
    }
    let rank = u32::try_from(dims.len()).map_err(|_| bad("tensor rank too large"))?;
    w.write_all(&TENSOR_MAGIC)?;
    w.write_all(&rank.to_le_bytes())?;
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| bad("tensor dim exceeds u32"))?;
        w.write_all(&d.to_le_bytes())?;
    }
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor_from(r: &mut impl Read) -> std::io::Result<Tensor> {
    let bad = |m: String| std::io::Error::new(std::io::ErrorKind::InvalidData, m);
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    if word != TENSOR_MAGIC {
        return Err(bad(format!("bad tensor magic {word:?}")));
    }
    r.read_exact(&mut word)?;
    let rank = u32::from_le_bytes(word) as usize;
    if rank > 16 {
        return Err(bad(format!("implausible tensor rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        r.read_exact(&mut word)?;
        dims.push(u32::from_le_bytes(word) as usize);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| bad("tensor size overflows".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 4 * count {
        return Err(bad(format!("payload has {} bytes, dims need {}", bytes.len(), 4 * count)));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(Tensor { dims, data })
}

pub fn write_tensor(path: &Path, dims: &[usize], data: &[f32]) -> Result<(), FileError> {
    let f = File::create(path).map_err(|e| FileError::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_tensor_to(&mut w, dims, data)
        .and_then(|_| w.flush())
        .map_err(|e| FileError::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor, FileError> {
    let f = File::open(path).map_err(|e| FileError::io(path, e))?;
    read_tensor_from(&mut BufReader::new(f)).map_err(|e| match e.kind() {
        std::io::ErrorKind::InvalidData | std::io::ErrorKind::UnexpectedEof => FileError::format(path, e.to_string()),
        _ => FileError::io(path, e),
    })
}
