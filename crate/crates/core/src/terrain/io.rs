//! Terrain file formats.
//!
//! Binary (`.hgt`), little-endian:
//!
//! ```text
//! magic     4 bytes  "SWHF"
//! version   u32      1
//! nx, ny    u32, u32
//! cell_size f64
//! heights   nx*ny f32, row-major (rows along y)
//! safe      ceil(nx*ny/8) bytes, bit i of byte k is cell 8k+i
//! ```
//!
//! Text: a header line `hgt-text 1 <nx> <ny> <cell_size>` followed by one
//! line per row, each cell written as `<height>:<0|1>`. Floats use the
//! shortest round-tripping representation, so the format is lossless.

use std::io::{BufRead, Read, Write};

use super::{HeightField, TerrainError};

pub const MAGIC: [u8; 4] = *b"SWHF";
pub const VERSION: u32 = 1;

pub fn write_binary<W: Write>(field: &HeightField, mut w: W) -> Result<(), TerrainError> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(field.nx() as u32).to_le_bytes())?;
    w.write_all(&(field.ny() as u32).to_le_bytes())?;
    w.write_all(&field.cell_size().to_le_bytes())?;
    let mut buf = Vec::with_capacity(field.heights().len() * 4);
    for h in field.heights() {
        buf.extend_from_slice(&h.to_le_bytes());
    }
    w.write_all(&buf)?;
    let mut bits = vec![0u8; field.safe_mask().len().div_ceil(8)];
    for (i, &s) in field.safe_mask().iter().enumerate() {
        if s {
            bits[i / 8] |= 1 << (i % 8);
        }
    }
    w.write_all(&bits)?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<HeightField, TerrainError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(TerrainError::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(TerrainError::Format(format!("unsupported version {version}")));
    }
    let nx = read_u32(&mut r)? as usize;
    let ny = read_u32(&mut r)? as usize;
    let mut cs = [0u8; 8];
    r.read_exact(&mut cs)?;
    let cell_size = f64::from_le_bytes(cs);
    let n = nx
        .checked_mul(ny)
        .filter(|&n| n <= 1 << 28)
        .ok_or_else(|| TerrainError::Format(format!("implausible grid {nx}x{ny}")))?;
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw)?;
    let heights = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut bits = vec![0u8; n.div_ceil(8)];
    r.read_exact(&mut bits)?;
    let safe = (0..n).map(|i| bits[i / 8] & (1 << (i % 8)) != 0).collect();
    HeightField::new(nx, ny, cell_size, heights, safe)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, TerrainError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_text<W: Write>(field: &HeightField, mut w: W) -> Result<(), TerrainError> {
    writeln!(w, "hgt-text 1 {} {} {}", field.nx(), field.ny(), field.cell_size())?;
    let mut line = String::new();
    for iy in 0..field.ny() {
        line.clear();
        for ix in 0..field.nx() {
            if ix > 0 {
                line.push(' ');
            }
            let i = field.index(ix, iy);
            line.push_str(&format!(
                "{}:{}",
                field.heights()[i],
                u8::from(field.safe_mask()[i])
            ));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_text<R: BufRead>(r: R) -> Result<HeightField, TerrainError> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| TerrainError::Format("empty text terrain".into()))??;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 5 || parts[0] != "hgt-text" || parts[1] != "1" {
        return Err(TerrainError::Format(format!("bad header `{header}`")));
    }
    let bad = |what: &str| TerrainError::Format(format!("bad {what} in header"));
    let nx: usize = parts[2].parse().map_err(|_| bad("nx"))?;
    let ny: usize = parts[3].parse().map_err(|_| bad("ny"))?;
    let cell_size: f64 = parts[4].parse().map_err(|_| bad("cell_size"))?;
    let mut heights = Vec::with_capacity(nx * ny);
    let mut safe = Vec::with_capacity(nx * ny);
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let before = heights.len();
        for tok in line.split_whitespace() {
            let (h, s) = tok
                .split_once(':')
                .ok_or_else(|| TerrainError::Format(format!("row {row}: token `{tok}`")))?;
            heights.push(
                h.parse::<f32>()
                    .map_err(|_| TerrainError::Format(format!("row {row}: height `{h}`")))?,
            );
            safe.push(match s {
                "1" => true,
                "0" => false,
                _ => return Err(TerrainError::Format(format!("row {row}: flag `{s}`"))),
            });
        }
        if heights.len() - before != nx {
            return Err(TerrainError::Format(format!(
                "row {row} has {} cells, expected {nx}",
                heights.len() - before
            )));
        }
    }
    HeightField::new(nx, ny, cell_size, heights, safe)
}
