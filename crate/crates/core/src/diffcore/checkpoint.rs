//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "GAMOCKPT"
//! version    u32
//! manifest   u64 length + UTF-8 JSON
//! count      u32
//! per parameter:
//!   name     u32 length + UTF-8
//!   rank     u32
//!   extents  rank × u64
//!   values   product(extents) × f64
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffcore::layer::{Activation, DenseLayer, Mlp};
use crate::diffcore::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GAMOCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkArch {
    pub dims: Vec<usize>,
    pub activations: Vec<Activation>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub networks: BTreeMap<String, NetworkArch>,
    /// Model-level metadata owned by whoever wrote the checkpoint.
    #[serde(default)]
    pub model: serde_json::Value,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(seed: u64) -> Self {
        Self {
            manifest: Manifest {
                seed,
                ..Manifest::default()
            },
            params: Vec::new(),
        }
    }

    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.params.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn add_mlp(&mut self, prefix: &str, mlp: &Mlp) {
        self.manifest.networks.insert(
            prefix.to_string(),
            NetworkArch {
                dims: mlp.dims(),
                activations: mlp.activations(),
            },
        );
        for (name, p) in mlp.param_names(prefix).into_iter().zip(mlp.params()) {
            self.insert(name, p.clone());
        }
    }

    pub fn mlp(&self, prefix: &str) -> Result<Mlp> {
        let arch = self
            .manifest
            .networks
            .get(prefix)
            .ok_or_else(|| Error::Checkpoint(format!("no network `{prefix}` in manifest")))?;
        let layers = arch
            .activations
            .iter()
            .enumerate()
            .map(|(i, &act)| {
                let fetch = |kind: &str| {
                    self.get(&format!("{prefix}.{i}.{kind}"))
                        .cloned()
                        .ok_or_else(|| Error::Checkpoint(format!("missing {prefix}.{i}.{kind}")))
                };
                DenseLayer::new(fetch("weight")?, fetch("bias")?, act)
            })
            .collect::<Result<Vec<_>>>()?;
        let mlp = Mlp::from_layers(layers)?;
        if mlp.dims() != arch.dims {
            return Err(Error::Checkpoint(format!(
                "network `{prefix}` dims {:?} disagree with manifest {:?}",
                mlp.dims(),
                arch.dims
            )));
        }
        Ok(mlp)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        let manifest = serde_json::to_vec(&self.manifest)?;
        w.write_all(&(manifest.len() as u64).to_le_bytes())?;
        w.write_all(&manifest)?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for (name, t) in &self.params {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.rank() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let len = read_u64(&mut r)? as usize;
        let mut manifest = vec![0u8; len];
        read_exact(&mut r, &mut manifest)?;
        let manifest: Manifest = serde_json::from_slice(&manifest)?;
        let count = read_u32(&mut r)?;
        let mut params = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            read_exact(&mut r, &mut name)?;
            let name = String::from_utf8(name).map_err(|e| Error::Checkpoint(e.to_string()))?;
            let rank = read_u32(&mut r)? as usize;
            let shape = (0..rank)
                .map(|_| read_u64(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let mut buf = [0u8; 8];
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                read_exact(&mut r, &mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            params.push((name, Tensor::new(shape, data)?));
        }
        Ok(Self { manifest, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_round_trips_bit_exact() {
        let mlp = Mlp::init(&[3, 5, 2], &[Activation::Relu, Activation::Sigmoid], 4).unwrap();
        let mut ck = Checkpoint::new(4);
        ck.add_mlp("m", &mlp);
        ck.manifest.model = serde_json::json!({"classes": 2});
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.mlp("m").unwrap(), mlp);
    }

    #[test]
    fn header_layout_is_fixed() {
        let mut ck = Checkpoint::new(0);
        ck.insert("x", Tensor::vector(vec![1.0]));
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"GAMOCKPT");
        assert_eq!(&buf[8..12], &1u32.to_le_bytes());
        // tail: rank 1, extent 1, value 1.0
        assert_eq!(&buf[buf.len() - 8..], &1.0f64.to_le_bytes());
    }

    #[test]
    fn truncated_or_foreign_input_rejected() {
        let mut ck = Checkpoint::new(0);
        ck.insert("x", Tensor::vector(vec![1.0, 2.0]));
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert!(Checkpoint::read_from(&buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Checkpoint::read_from(bad.as_slice()).is_err());
    }
}
