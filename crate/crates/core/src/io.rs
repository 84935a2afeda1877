//! On-disk formats: the MLF1 binary field file and the wavefront-set CSV.
//!
//! MLF1 layout: the four magic bytes `MLF1`, a little-endian `u32` header
//! length, a compact JSON header, then the row-major `f64` values in
//! little-endian order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    angle_gap, discretize_directions, nearest_direction_index, Direction, GridSpec, PhaseSpaceSample, SampledField,
    WavefrontSet,
};

pub const MAGIC: [u8; 4] = *b"MLF1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    shape: Vec<usize>,
    spacing: Vec<f64>,
    origin: Vec<f64>,
    dtype: String,
    order: String,
    support_margin: usize,
}

pub fn encode_field(field: &SampledField) -> Result<Vec<u8>> {
    let g = field.grid();
    let header = Header {
        shape: g.shape().to_vec(),
        spacing: g.spacing().to_vec(),
        origin: g.origin().to_vec(),
        dtype: "f64le".into(),
        order: "row-major".into(),
        support_margin: field.support_margin(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + json.len() + 8 * field.values().len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_field(bytes: &[u8]) -> Result<SampledField> {
    if bytes.len() < 4 {
        return Err(Error::Truncated("file shorter than the magic bytes".into()));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 8 {
        return Err(Error::Truncated("missing header length".into()));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() < hlen {
        return Err(Error::Truncated(format!("header declares {hlen} bytes, {} present", body.len())));
    }
    let header: Header =
        serde_json::from_slice(&body[..hlen]).map_err(|e| Error::BadHeader(e.to_string()))?;
    if header.dtype != "f64le" {
        return Err(Error::BadHeader(format!("unsupported dtype {:?}", header.dtype)));
    }
    if header.order != "row-major" {
        return Err(Error::BadHeader(format!("unsupported order {:?}", header.order)));
    }
    let grid = GridSpec::new(header.shape, header.spacing, header.origin)
        .map_err(|e| Error::BadHeader(e.to_string()))?;
    let payload = &body[hlen..];
    let expected = grid.len() * 8;
    if payload.len() < expected {
        return Err(Error::Truncated(format!("payload has {} of {expected} bytes", payload.len())));
    }
    if payload.len() > expected {
        return Err(Error::SizeMismatch { expected, actual: payload.len() });
    }
    let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    SampledField::new(grid, values, header.support_margin)
}

pub fn write_field(path: impl AsRef<Path>, field: &SampledField) -> Result<()> {
    let bytes = encode_field(field)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<SampledField> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_field(&bytes)
}

pub const CSV_HEADER: [&str; 6] = ["x1", "x2", "theta_rad", "decay_order", "log_constant", "singular"];

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    x1: f64,
    x2: f64,
    theta_rad: f64,
    decay_order: f64,
    log_constant: f64,
    singular: u8,
}

pub fn write_wavefront_csv<W: Write>(out: W, wf: &WavefrontSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for s in wf.samples() {
        if s.x.len() != 2 {
            return Err(Error::InvalidParameter("wavefront CSV holds planar samples only".into()));
        }
        w.write_record(&[
            s.x[0].to_string(),
            s.x[1].to_string(),
            s.theta.angle().to_string(),
            s.decay_order.to_string(),
            s.log_constant.to_string(),
            (s.singular as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads samples back; the position lattice is not stored, so it is `None`.
///
/// Angles that match the `direction_count` lattice are replaced by the exact
/// lattice directions.
pub fn read_wavefront_csv<R: Read>(input: R, direction_count: usize) -> Result<WavefrontSet> {
    let dirs = discretize_directions(direction_count)?;
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::BadCsv(format!("unexpected header {headers:?}")));
    }
    let mut samples = Vec::new();
    for row in r.deserialize() {
        let row: CsvRow = row.map_err(|e| Error::BadCsv(e.to_string()))?;
        if !(0.0..std::f64::consts::TAU).contains(&row.theta_rad) {
            return Err(Error::BadCsv(format!("theta_rad {} outside [0, 2pi)", row.theta_rad)));
        }
        if row.singular > 1 {
            return Err(Error::BadCsv(format!("singular flag {} is not 0 or 1", row.singular)));
        }
        samples.push(PhaseSpaceSample {
            x: vec![row.x1, row.x2],
            theta: {
                let k = nearest_direction_index(row.theta_rad, direction_count);
                if angle_gap(dirs[k].angle(), row.theta_rad) <= 1e-12 {
                    dirs[k].clone()
                } else {
                    Direction::from_angle(row.theta_rad)
                }
            },
            decay_order: row.decay_order,
            log_constant: row.log_constant,
            singular: row.singular == 1,
        });
    }
    WavefrontSet::new(samples, None, direction_count)
}

pub fn save_wavefront_csv(path: impl AsRef<Path>, wf: &WavefrontSet) -> Result<()> {
    write_wavefront_csv(fs::File::create(path)?, wf)
}

pub fn load_wavefront_csv(path: impl AsRef<Path>, direction_count: usize) -> Result<WavefrontSet> {
    read_wavefront_csv(fs::File::open(path)?, direction_count)
}
