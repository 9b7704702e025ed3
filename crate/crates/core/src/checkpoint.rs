//! Versioned little-endian binary snapshot of a tuned controller and its critic.
//!
//! Layout: magic `ZOACCKPT`, `u32` version, task name, parameter names,
//! mapped parameter vector, then an optional critic block holding the layer
//! sizes, the flat weight vector and the input normalizer. Strings are
//! `u32` length + UTF-8 bytes; vectors are `u32` length + `f64` values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::critic::{InputNormalizer, ValueNet};
use crate::error::{Error, Result};
use crate::param_space::{MappedVector, ParamSpace};

pub const MAGIC: &[u8; 8] = b"ZOACCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub task: String,
    pub param_names: Vec<String>,
    pub theta_mapped: MappedVector,
    pub critic: Option<(ValueNet, InputNormalizer)>,
}

impl Checkpoint {
    pub fn new(task: &str, space: &ParamSpace, theta: MappedVector, critic: Option<(ValueNet, InputNormalizer)>) -> Result<Self> {
        if theta.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: theta.len(),
            });
        }
        Ok(Self {
            task: task.to_string(),
            param_names: space.names().map(str::to_string).collect(),
            theta_mapped: theta,
            critic,
        })
    }

    /// Fails unless the stored parameter names match `space` in order.
    pub fn check_space(&self, space: &ParamSpace) -> Result<()> {
        let names: Vec<&str> = space.names().collect();
        if names != self.param_names.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Checkpoint(format!(
                "parameter names {:?} do not match the task space {:?}",
                self.param_names, names
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_str(&mut out, &self.task);
        put_u32(&mut out, self.param_names.len() as u32);
        for n in &self.param_names {
            put_str(&mut out, n);
        }
        put_f64s(&mut out, self.theta_mapped.as_slice());
        match &self.critic {
            None => out.push(0),
            Some((net, norm)) => {
                out.push(1);
                put_u32(&mut out, net.sizes().len() as u32);
                for &s in net.sizes() {
                    put_u32(&mut out, s as u32);
                }
                put_f64s(&mut out, net.params());
                put_f64s(&mut out, &norm.mean);
                put_f64s(&mut out, &norm.scale);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = get_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}, expected {VERSION}")));
        }
        let task = get_str(&mut r)?;
        let n = get_u32(&mut r)? as usize;
        let param_names = (0..n).map(|_| get_str(&mut r)).collect::<Result<Vec<_>>>()?;
        let theta = get_f64s(&mut r)?;
        if theta.len() != n {
            return Err(Error::Checkpoint(format!("{} parameter names but {} values", n, theta.len())));
        }
        let mut flag = [0u8; 1];
        read_exact(&mut r, &mut flag)?;
        let critic = match flag[0] {
            0 => None,
            1 => {
                let layers = get_u32(&mut r)? as usize;
                let sizes = (0..layers).map(|_| get_u32(&mut r).map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
                let params = get_f64s(&mut r)?;
                let net = ValueNet::from_parts(sizes, params).map_err(|e| Error::Checkpoint(e.to_string()))?;
                let mean = get_f64s(&mut r)?;
                let scale = get_f64s(&mut r)?;
                if mean.len() != net.obs_dim() || scale.len() != net.obs_dim() {
                    return Err(Error::Checkpoint("normalizer size does not match the critic input".into()));
                }
                Some((net, InputNormalizer { mean, scale }))
            }
            f => return Err(Error::Checkpoint(format!("invalid critic flag {f}"))),
        };
        if !r.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.len())));
        }
        Ok(Self {
            task,
            param_names,
            theta_mapped: MappedVector(theta),
            critic,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    put_u32(out, v.len() as u32);
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Checkpoint("unexpected end of file".into()))
}

fn get_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_str(r: &mut &[u8]) -> Result<String> {
    let n = get_u32(r)? as usize;
    if n > r.len() {
        return Err(Error::Checkpoint("string length exceeds file size".into()));
    }
    let mut b = vec![0u8; n];
    read_exact(r, &mut b)?;
    String::from_utf8(b).map_err(|_| Error::Checkpoint("invalid UTF-8 in string".into()))
}

fn get_f64s(r: &mut &[u8]) -> Result<Vec<f64>> {
    let n = get_u32(r)? as usize;
    if n.saturating_mul(8) > r.len() {
        return Err(Error::Checkpoint("vector length exceeds file size".into()));
    }
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        read_exact(r, &mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}
