//! Checkpoint persistence: a small binary container holding the network
//! configuration and every parameter tensor, bit-exact across round trips.
//!
//! Layout:
//!
//! ```text
//! "IADN"            4-byte magic
//! 0x01              format version
//! u32 LE            header length in bytes
//! header            UTF-8 text (see below)
//! payload           all parameter values as f32 little-endian
//! ```
//!
//! The header's first line is `config ` followed by the configuration as
//! JSON; each following line is `param <name> <offset> <d0> <d1> ...` where
//! `offset` counts f32 elements into the payload. Parameters are laid out in
//! sorted name order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::netgraph::config::NetworkConfig;
use crate::netgraph::network::Network;
use crate::numerics::Tensor;

const MAGIC: &[u8; 4] = b"IADN";
const VERSION: u8 = 1;

/// Serializes the network to `path`, overwriting any existing file.
pub fn save_checkpoint(path: impl AsRef<Path>, net: &Network<f32>) -> Result<()> {
    let path = path.as_ref();
    net.validate()?;

    let config_json = serde_json::to_string(&net.config)
        .map_err(|e| Error::Data(format!("could not encode configuration: {e}")))?;
    let mut header = format!("config {config_json}\n");
    let mut offset = 0usize;
    for (name, tensor) in &net.params {
        let dims: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
        header.push_str(&format!("param {name} {offset} {}\n", dims.join(" ")));
        offset += tensor.numel();
    }
    let header_bytes = header.as_bytes();
    let header_len = u32::try_from(header_bytes.len())
        .map_err(|_| Error::Data("checkpoint header exceeds 4 GiB".into()))?;

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&[VERSION]).map_err(io_err)?;
    w.write_all(&header_len.to_le_bytes()).map_err(io_err)?;
    w.write_all(header_bytes).map_err(io_err)?;
    for tensor in net.params.values() {
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Reads a checkpoint back into a validated network.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network<f32>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io_err = |e| Error::io(path, e);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::Data(format!("{} is not a checkpoint (bad magic)", path.display())));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version).map_err(io_err)?;
    if version[0] != VERSION {
        return Err(Error::Version {
            found: format!("v{}", version[0]),
            expected: format!("v{VERSION}"),
        });
    }
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes).map_err(io_err)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes).map_err(io_err)?;
    let header = String::from_utf8(header_bytes)
        .map_err(|_| Error::Data("checkpoint header is not UTF-8".into()))?;

    let mut config: Option<NetworkConfig> = None;
    let mut entries: Vec<(String, usize, Vec<usize>)> = Vec::new();
    for line in header.lines() {
        if let Some(json) = line.strip_prefix("config ") {
            config = Some(serde_json::from_str(json).map_err(|e| {
                Error::Data(format!("checkpoint configuration does not parse: {e}"))
            })?);
        } else if let Some(rest) = line.strip_prefix("param ") {
            let mut parts = rest.split_whitespace();
            let name = parts
                .next()
                .ok_or_else(|| Error::Data(format!("malformed param line {line:?}")))?
                .to_string();
            let parse =
                |s: &str| s.parse::<usize>().map_err(|_| Error::Data(format!("malformed param line {line:?}")));
            let offset = parse(
                parts.next().ok_or_else(|| Error::Data(format!("malformed param line {line:?}")))?,
            )?;
            let dims = parts.map(parse).collect::<Result<Vec<usize>>>()?;
            entries.push((name, offset, dims));
        } else if !line.trim().is_empty() {
            return Err(Error::Data(format!("unrecognized checkpoint header line {line:?}")));
        }
    }
    let config = config.ok_or_else(|| Error::Data("checkpoint has no config line".into()))?;

    let total: usize = entries.iter().map(|(_, _, dims)| dims.iter().product::<usize>()).sum();
    let mut payload = vec![0u8; total * 4];
    r.read_exact(&mut payload)
        .map_err(|_| Error::Data(format!("checkpoint payload truncated (expected {total} values)")))?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(io_err)? != 0 {
        return Err(Error::Data("checkpoint has trailing bytes after the payload".into()));
    }

    let mut params = BTreeMap::new();
    for (name, offset, dims) in entries {
        let numel: usize = dims.iter().product();
        let end = offset.checked_add(numel).filter(|&e| e * 4 <= payload.len()).ok_or_else(
            || Error::Data(format!("parameter {name:?} points outside the payload")),
        )?;
        let data: Vec<f32> = payload[offset * 4..end * 4]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if params.insert(name.clone(), Tensor::from_vec(dims, data)?).is_some() {
            return Err(Error::Data(format!("duplicate parameter {name:?} in checkpoint")));
        }
    }

    let net = Network { config, params };
    net.validate()?;
    Ok(net)
}
