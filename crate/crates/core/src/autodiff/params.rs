//! Named parameter collections, seeded initialization and the binary
//! checkpoint format (see `docs/formats.md`).

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"NCHW1";

/// Ordered, named set of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, mut t: Tensor) -> usize {
        let name = name.into();
        t.set_requires_grad(true);
        if let Some(i) = self.index_of(&name) {
            self.tensors[i] = t;
            return i;
        }
        self.names.push(name);
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Mutable references to the parameters at `indices`, in that order.
    pub fn select_mut(&mut self, indices: &[usize]) -> Vec<&mut Tensor> {
        let mut slots: Vec<Option<&mut Tensor>> = self.tensors.iter_mut().map(Some).collect();
        indices
            .iter()
            .map(|&i| slots[i].take().expect("parameter selected twice"))
            .collect()
    }

    pub fn clear_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::clear_grad);
    }

    pub fn total_values(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        for (name, t) in self.iter() {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::io("<checkpoint>", e))?;
        parse_checkpoint(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_checkpoint(&mut w)
            .map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        parse_checkpoint(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::MalformedFile {
                offset: self.pos,
                reason: format!("truncated {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn parse_checkpoint(bytes: &[u8]) -> Result<ParamSet> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(5, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::MalformedFile {
            offset: 0,
            reason: "missing NCHW1 magic".into(),
        });
    }
    let mut set = ParamSet::new();
    while c.pos < bytes.len() {
        let start = c.pos;
        let name_len = c.u32("name length")? as usize;
        let name = std::str::from_utf8(c.take(name_len, "name")?)
            .map_err(|_| Error::MalformedFile {
                offset: start + 4,
                reason: "parameter name is not UTF-8".into(),
            })?
            .to_string();
        let rank = c.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(c.u64("extent")? as usize);
        }
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n
            .filter(|n| n.checked_mul(8).is_some())
            .ok_or(Error::MalformedFile {
                offset: start,
                reason: "extent product overflows".into(),
            })?;
        let raw = c.take(n * 8, "values")?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::MalformedFile {
            offset: start,
            reason: e.to_string(),
        })?;
        set.insert(name, t);
    }
    Ok(set)
}

/// Fan-in scaled uniform initialization: `U(−√(6/fan_in), √(6/fan_in))`.
pub fn he_uniform<R: Rng + ?Sized>(shape: Vec<usize>, fan_in: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("generated data matches shape")
}
