//! Checkpoints: one JSON header line followed by the parameters as
//! little-endian f64.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lstm::{PolicyNet, PolicyShape};
use super::train::Adam;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    shape: PolicyShape,
    n_params: usize,
    adam_step: u64,
    /// Tensors stored after the header, in order.
    blocks: Vec<String>,
}

const FORMAT: &str = "cfsr-policy-v1";

pub fn save_checkpoint(path: &Path, net: &PolicyNet, adam: Option<&Adam>) -> Result<()> {
    let mut blocks = vec!["params".to_string()];
    if adam.is_some() {
        blocks.extend(["adam_m".to_string(), "adam_v".to_string()]);
    }
    let header = Header {
        format: FORMAT.into(),
        shape: net.shape(),
        n_params: net.params().len(),
        adam_step: adam.map_or(0, |a| a.t),
        blocks,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    let mut write = |v: &[f64]| -> std::io::Result<()> {
        for x in v {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    };
    write(net.params())?;
    if let Some(a) = adam {
        write(&a.m)?;
        write(&a.v)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(PolicyNet, Option<Adam>)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: Header = serde_json::from_str(line.trim_end())?;
    if header.format != FORMAT || header.n_params != header.shape.n_params() {
        return Err(Error::config(format!("{} is not a compatible checkpoint", path.display())));
    }
    let mut read = || -> Result<Vec<f64>> {
        let mut buf = vec![0u8; 8 * header.n_params];
        r.read_exact(&mut buf)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    };
    let net = PolicyNet::from_params(header.shape, read()?)?;
    let adam = if header.blocks.len() == 3 {
        let mut a = Adam::new(header.n_params);
        a.m = read()?;
        a.v = read()?;
        a.t = header.adam_step;
        Some(a)
    } else {
        None
    };
    Ok((net, adam))
}
