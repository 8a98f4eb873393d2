//! Binary PGM (P5) reading and writing, 8- and 16-bit.
//!
//! 16-bit samples are big-endian as required by the netpbm format.

use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::{DepthFrame, GrayFrame, IrFrame};
use crate::io::{read_file, write_atomic};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: u32,
    pub height: u32,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

fn next_token<'a>(data: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format("PGM", "unexpected end of header"));
    }
    Ok(&data[start..*pos])
}

fn header_number(data: &[u8], pos: &mut usize, name: &str) -> Result<u32> {
    let tok = next_token(data, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format("PGM", format!("bad {name}")))
}

pub fn decode(data: &[u8]) -> Result<Pgm> {
    let mut pos = 0;
    if next_token(data, &mut pos)? != b"P5" {
        return Err(Error::format("PGM", "missing P5 magic"));
    }
    let width = header_number(data, &mut pos, "width")?;
    let height = header_number(data, &mut pos, "height")?;
    let maxval = header_number(data, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format("PGM", format!("maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates header and raster
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(Error::format("PGM", "missing raster"));
    }
    pos += 1;
    let n = width as usize * height as usize;
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let raster = &data[pos..];
    if raster.len() < n * bytes_per {
        return Err(Error::format(
            "PGM",
            format!("raster truncated: {} of {} bytes", raster.len(), n * bytes_per),
        ));
    }
    let samples = if bytes_per == 1 {
        raster[..n].iter().map(|&b| b as u16).collect()
    } else {
        raster[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        samples,
    })
}

pub fn encode(pgm: &Pgm) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", pgm.width, pgm.height, pgm.maxval).into_bytes();
    if pgm.maxval < 256 {
        out.extend(pgm.samples.iter().map(|&s| s as u8));
    } else {
        for &s in &pgm.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    }
    out
}

pub fn encode_depth(frame: &DepthFrame) -> Vec<u8> {
    encode(&Pgm {
        width: frame.width,
        height: frame.height,
        maxval: 65535,
        samples: frame.depth_mm.clone(),
    })
}

pub fn encode_gray(frame: &GrayFrame) -> Vec<u8> {
    encode(&Pgm {
        width: frame.width,
        height: frame.height,
        maxval: 255,
        samples: frame.pixels.iter().map(|&p| p as u16).collect(),
    })
}

pub fn decode_depth(data: &[u8], timestamp_us: u64) -> Result<DepthFrame> {
    let pgm = decode(data)?;
    if pgm.maxval < 256 {
        return Err(Error::format("depth PGM", "expected 16-bit samples"));
    }
    DepthFrame::new(pgm.width, pgm.height, pgm.samples, timestamp_us)
}

pub fn decode_gray(data: &[u8], timestamp_us: u64) -> Result<GrayFrame> {
    let pgm = decode(data)?;
    if pgm.maxval > 255 {
        return Err(Error::format("gray PGM", "expected 8-bit samples"));
    }
    let pixels = pgm.samples.iter().map(|&s| s as u8).collect();
    GrayFrame::new(pgm.width, pgm.height, pixels, timestamp_us)
}

pub fn read_depth(path: &Path, timestamp_us: u64) -> Result<DepthFrame> {
    decode_depth(&read_file(path)?, timestamp_us)
}

pub fn read_gray(path: &Path, timestamp_us: u64) -> Result<GrayFrame> {
    decode_gray(&read_file(path)?, timestamp_us)
}

pub fn read_ir(path: &Path, timestamp_us: u64) -> Result<IrFrame> {
    Ok(read_gray(path, timestamp_us)?.into())
}

pub fn write_depth(path: &Path, frame: &DepthFrame) -> Result<()> {
    write_atomic(path, &encode_depth(frame))
}

pub fn write_gray(path: &Path, frame: &GrayFrame) -> Result<()> {
    write_atomic(path, &encode_gray(frame))
}

pub fn write_ir(path: &Path, frame: &IrFrame) -> Result<()> {
    write_atomic(path, &encode_gray(&GrayFrame::from(frame.clone())))
}
