//! Binary sample container.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic        4 bytes  "EEGR"
//! version      u32      1
//! rate_hz      f64
//! n_channels   u32
//! n_samples    u64
//! names        n_channels × (u16 byte length, UTF-8 bytes)
//! samples      n_channels × n_samples × f32, channel-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EEGR";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ContainerHeader {
    pub sampling_rate_hz: f64,
    pub channel_names: Vec<String>,
    pub n_samples: usize,
}

pub fn write_container(
    path: &Path,
    sampling_rate_hz: f64,
    channel_names: &[String],
    samples: &Array2<f64>,
) -> Result<()> {
    if channel_names.len() != samples.nrows() {
        return Err(Error::MalformedRecording(format!(
            "{} names for {} channels",
            channel_names.len(),
            samples.nrows()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&sampling_rate_hz.to_le_bytes())?;
    w.write_all(&(samples.nrows() as u32).to_le_bytes())?;
    w.write_all(&(samples.ncols() as u64).to_le_bytes())?;
    for name in channel_names {
        let bytes = name.as_bytes();
        let len = u16::try_from(bytes.len())
            .map_err(|_| Error::MalformedRecording(format!("channel name too long: {name}")))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(bytes)?;
    }
    for row in samples.rows() {
        for &v in row {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::MalformedRecording(format!("truncated header: {e}")))?;
    Ok(buf)
}

fn read_header_from(r: &mut impl Read) -> Result<ContainerHeader> {
    let magic: [u8; 4] = read_exact(r)?;
    if &magic != MAGIC {
        return Err(Error::MalformedRecording("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_exact(r)?);
    if version != VERSION {
        return Err(Error::MalformedRecording(format!("unsupported version {version}")));
    }
    let sampling_rate_hz = f64::from_le_bytes(read_exact(r)?);
    let n_channels = u32::from_le_bytes(read_exact(r)?) as usize;
    let n_samples = u64::from_le_bytes(read_exact(r)?) as usize;
    let mut channel_names = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        let len = u16::from_le_bytes(read_exact(r)?) as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)
            .map_err(|e| Error::MalformedRecording(format!("truncated name table: {e}")))?;
        channel_names.push(
            String::from_utf8(buf).map_err(|_| Error::MalformedRecording("non-UTF-8 name".into()))?,
        );
    }
    Ok(ContainerHeader { sampling_rate_hz, channel_names, n_samples })
}

pub fn read_container_header(path: &Path) -> Result<ContainerHeader> {
    let mut r = BufReader::new(File::open(path)?);
    read_header_from(&mut r)
}

pub fn read_container(path: &Path) -> Result<(ContainerHeader, Array2<f64>)> {
    let mut r = BufReader::new(File::open(path)?);
    let header = read_header_from(&mut r)?;
    let n = header.channel_names.len() * header.n_samples;
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw)
        .map_err(|e| Error::MalformedRecording(format!("truncated samples: {e}")))?;
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let samples = Array2::from_shape_vec((header.channel_names.len(), header.n_samples), values)
        .map_err(|e| Error::MalformedRecording(e.to_string()))?;
    Ok((header, samples))
}
