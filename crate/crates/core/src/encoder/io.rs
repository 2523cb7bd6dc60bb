//! Binary parameter files: an 8-byte magic, a little-endian `u64` header
//! length, a JSON header, then every parameter as a little-endian `f64` in
//! layout order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncoderConfig, EncoderKind, EncoderParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DMFENC01";

#[derive(Debug, Serialize, Deserialize)]
struct TensorShape {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    seed: Option<u64>,
    num_params: usize,
    tensors: Vec<TensorShape>,
}

fn tensors(config: &EncoderConfig) -> Vec<TensorShape> {
    let mut out = vec![TensorShape {
        name: "embedding".into(),
        shape: vec![config.vocab_size, config.embed_dim],
    }];
    if config.kind == EncoderKind::Conv {
        for &h in &config.windows {
            out.push(TensorShape {
                name: format!("conv{h}.weight"),
                shape: vec![config.num_filters, h, config.embed_dim],
            });
            out.push(TensorShape {
                name: format!("conv{h}.bias"),
                shape: vec![config.num_filters],
            });
        }
    }
    out.push(TensorShape {
        name: "dense.weight".into(),
        shape: vec![config.output_dim, config.feature_dim()],
    });
    out.push(TensorShape {
        name: "dense.bias".into(),
        shape: vec![config.output_dim],
    });
    out
}

pub fn write_params<W: Write>(params: &EncoderParams, seed: Option<u64>, mut w: W) -> Result<()> {
    let header = Header {
        config: params.config().clone(),
        seed,
        num_params: params.len(),
        tensors: tensors(params.config()),
    };
    let json = serde_json::to_vec(&header)?;
    let io = |e| Error::io("<encoder stream>", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for v in params.values() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Returns the parameters and the seed recorded in the header.
pub fn read_params<R: Read>(mut r: R) -> Result<(EncoderParams, Option<u64>)> {
    let io = |e| Error::io("<encoder stream>", e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::InvalidData("not an encoder parameter file".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(io)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(io)?;
    let header: Header = serde_json::from_slice(&json)?;
    let mut values = Vec::with_capacity(header.num_params);
    let mut buf = [0u8; 8];
    for _ in 0..header.num_params {
        r.read_exact(&mut buf).map_err(io)?;
        values.push(f64::from_le_bytes(buf));
    }
    if r.read(&mut buf).map_err(io)? != 0 {
        return Err(Error::InvalidData("trailing bytes after parameters".into()));
    }
    Ok((EncoderParams::from_values(header.config, values)?, header.seed))
}

pub fn save_params(params: &EncoderParams, seed: Option<u64>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_params(params, seed, BufWriter::new(file))
}

pub fn load_params(path: &Path) -> Result<(EncoderParams, Option<u64>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_params(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        for config in [EncoderConfig::conv(17, 4), EncoderConfig::average(17, 1)] {
            let p = EncoderParams::init(config, 31).unwrap();
            let mut buf = Vec::new();
            write_params(&p, Some(31), &mut buf).unwrap();
            let (back, seed) = read_params(buf.as_slice()).unwrap();
            assert_eq!(seed, Some(31));
            assert_eq!(back, p);
        }
    }

    #[test]
    fn header_lists_shapes() {
        let p = EncoderParams::init(EncoderConfig::conv(10, 2), 0).unwrap();
        let mut buf = Vec::new();
        write_params(&p, None, &mut buf).unwrap();
        let len = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&buf[16..16 + len]).unwrap();
        assert_eq!(header["config"]["kind"], "conv");
        assert_eq!(header["tensors"][1]["shape"], serde_json::json!([50, 3, 50]));
        assert_eq!(buf.len(), 16 + len + 8 * p.len());
    }

    #[test]
    fn truncated_or_foreign_files_rejected() {
        let p = EncoderParams::init(EncoderConfig::average(5, 1), 0).unwrap();
        let mut buf = Vec::new();
        write_params(&p, None, &mut buf).unwrap();
        assert!(read_params(&buf[..buf.len() - 3]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_params(extra.as_slice()).is_err());
        assert!(read_params(&b"NOTMAGIC"[..]).is_err());
    }
}
