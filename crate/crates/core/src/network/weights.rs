use std::collections::BTreeMap;

use crate::error::{config, Result};
use crate::tensor::{AffineNorm, Dims, Tensor, NORM_EPS};

/// One named learnable (or running-statistic) array with its true rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Param {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(config(format!(
                "param shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: Vec<usize>, v: f32) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![v; n] }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Name and shape of one entry the network expects.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamSlot {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Every parameter of a network instance, keyed by canonical dotted path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    entries: BTreeMap<String, Param>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, p: Param) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(config(format!("duplicate parameter `{name}`")));
        }
        self.entries.insert(name, p);
        Ok(())
    }

    /// Replaces an existing entry, keeping its shape contract.
    pub fn set(&mut self, name: &str, data: Vec<f32>) -> Result<()> {
        let p = self
            .entries
            .get_mut(name)
            .ok_or_else(|| config(format!("no parameter `{name}`")))?;
        if p.data.len() != data.len() {
            return Err(config(format!(
                "parameter `{name}` holds {} values, got {}",
                p.data.len(),
                data.len()
            )));
        }
        p.data = data;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Sum of element counts over all entries.
    pub fn total_elements(&self) -> usize {
        self.entries.values().map(Param::numel).sum()
    }

    /// Exact-cover check against a manifest: no missing, extra or misshapen entries.
    pub fn verify(&self, manifest: &[ParamSlot]) -> Result<()> {
        let mut expected: BTreeMap<&str, &[usize]> = BTreeMap::new();
        for slot in manifest {
            expected.insert(&slot.name, &slot.shape);
        }
        if let Some(missing) = expected.keys().find(|k| !self.entries.contains_key(**k)) {
            return Err(config(format!("weight store is missing `{missing}`")));
        }
        if let Some(extra) = self.entries.keys().find(|k| !expected.contains_key(k.as_str())) {
            return Err(config(format!("weight store has unexpected `{extra}`")));
        }
        for (name, shape) in expected {
            let have = &self.entries[name].shape;
            if have.as_slice() != shape {
                return Err(config(format!(
                    "parameter `{name}` has shape {have:?}, expected {shape:?}"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn param(&self, name: &str) -> Result<&Param> {
        self.entries
            .get(name)
            .ok_or_else(|| config(format!("missing parameter `{name}`")))
    }

    pub(crate) fn tensor4(&self, name: &str) -> Result<Tensor> {
        let p = self.param(name)?;
        if p.shape.len() != 4 {
            return Err(config(format!("parameter `{name}` is not rank 4")));
        }
        let d = Dims::new(p.shape[0], p.shape[1], p.shape[2], p.shape[3]);
        Tensor::new(d, p.data.clone())
    }

    pub(crate) fn vector(&self, name: &str, len: usize) -> Result<Vec<f32>> {
        let p = self.param(name)?;
        if p.shape != [len] {
            return Err(config(format!(
                "parameter `{name}` has shape {:?}, expected [{len}]",
                p.shape
            )));
        }
        Ok(p.data.clone())
    }

    pub(crate) fn norm(&self, prefix: &str, channels: usize) -> Result<AffineNorm> {
        Ok(AffineNorm {
            gamma: self.vector(&format!("{prefix}.weight"), channels)?,
            beta: self.vector(&format!("{prefix}.bias"), channels)?,
            mean: self.vector(&format!("{prefix}.running_mean"), channels)?,
            var: self.vector(&format!("{prefix}.running_var"), channels)?,
            eps: NORM_EPS,
        })
    }
}
