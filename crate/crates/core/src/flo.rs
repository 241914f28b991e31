//! Middlebury `.flo` binary flow file reader and writer.
//!
//! Layout: float32 tag `202021.25` (little-endian), int32 width, int32
//! height, then `width*height` interleaved `(u, v)` float32 pairs in
//! row-major order. Stride metadata does not fit the format and travels
//! in the clip manifest instead.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::flow::{FlowField, FlowSource};

/// Sanity tag shared by all Middlebury-style flow files.
pub const FLO_MAGIC: f32 = 202021.25;

const MAX_DIM: i32 = 100_000;

/// Read a `.flo` file. The result carries `source = Ingested` and
/// `stride = 1`; callers override the stride from sidecar metadata.
pub fn read_flo(path: &Path) -> Result<FlowField> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    read_flo_from(&mut r)
}

pub fn read_flo_from<R: Read>(r: &mut R) -> Result<FlowField> {
    let magic = r.read_f32::<LittleEndian>()?;
    if magic != FLO_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let width = r.read_i32::<LittleEndian>()?;
    let height = r.read_i32::<LittleEndian>()?;
    if width <= 0 || height <= 0 || width > MAX_DIM || height > MAX_DIM {
        return Err(Error::DimensionOverflow {
            width: width as i64,
            height: height as i64,
        });
    }
    let n = width as usize * height as usize;
    let mut u = vec![0.0f32; n];
    let mut v = vec![0.0f32; n];
    for i in 0..n {
        u[i] = read_payload_f32(r, n, i)?;
        v[i] = read_payload_f32(r, n, i)?;
    }
    FlowField::new(
        width as usize,
        height as usize,
        u,
        v,
        1,
        FlowSource::Ingested,
    )
}

fn read_payload_f32<R: Read>(r: &mut R, n: usize, done_pairs: usize) -> Result<f32> {
    r.read_f32::<LittleEndian>().map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::TruncatedFile {
                expected: n * 2,
                got: done_pairs * 2,
            }
        } else {
            Error::IoFailure(e)
        }
    })
}

/// Write a `.flo` file; `read_flo(write_flo(f))` is bit-exact.
pub fn write_flo(field: &FlowField, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_flo_to(field, &mut w)
}

pub fn write_flo_to<W: Write>(field: &FlowField, w: &mut W) -> Result<()> {
    if field.width == 0
        || field.height == 0
        || field.width > MAX_DIM as usize
        || field.height > MAX_DIM as usize
    {
        return Err(Error::DimensionOverflow {
            width: field.width as i64,
            height: field.height as i64,
        });
    }
    field.check_finite()?;
    w.write_f32::<LittleEndian>(FLO_MAGIC)?;
    w.write_i32::<LittleEndian>(field.width as i32)?;
    w.write_i32::<LittleEndian>(field.height as i32)?;
    for i in 0..field.len() {
        w.write_f32::<LittleEndian>(field.u[i])?;
        w.write_f32::<LittleEndian>(field.v[i])?;
    }
    w.flush()?;
    Ok(())
}
