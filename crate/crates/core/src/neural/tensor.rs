use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn next_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Named parameter tensors. Any mutable access assigns a fresh version, so
/// caches computed against older values can be detected.
#[derive(Debug, Clone)]
pub struct Params {
    tensors: BTreeMap<String, Tensor>,
    version: u64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            tensors: BTreeMap::new(),
            version: next_version(),
        }
    }
}

/// Equality compares names, shapes and values, not versions.
impl PartialEq for Params {
    fn eq(&self, other: &Self) -> bool {
        self.tensors == other.tensors
    }
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.version = next_version();
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    /// Panics on a missing name: parameter sets are built from the spec, so
    /// a miss is a programming error.
    pub fn data(&self, name: &str) -> &[f64] {
        &self
            .tensors
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter `{name}`"))
            .data
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.version = next_version();
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.version = next_version();
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.tensors.keys().cloned().collect()
    }

    pub fn n_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Params {
        let mut p = Params::new();
        for (k, t) in &self.tensors {
            p.tensors.insert(k.clone(), Tensor::zeros(t.shape.clone()));
        }
        p
    }

    pub(crate) fn slot(&mut self, name: &str) -> &mut [f64] {
        self.version = next_version();
        &mut self
            .tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter `{name}`"))
            .data
    }

    /// Disjoint mutable views of several tensors, in the order requested.
    pub(crate) fn slots<const N: usize>(&mut self, names: [&str; N]) -> [&mut [f64]; N] {
        self.version = next_version();
        let mut found: Vec<Option<&mut [f64]>> = (0..N).map(|_| None).collect();
        for (k, t) in self.tensors.iter_mut() {
            if let Some(i) = names.iter().position(|n| n == k) {
                found[i] = Some(&mut t.data);
            }
        }
        let mut it = found.into_iter().enumerate().map(|(i, s)| {
            s.unwrap_or_else(|| panic!("missing parameter `{}`", names[i]))
        });
        std::array::from_fn(|_| it.next().expect("length N"))
    }

    /// `self += other` elementwise; shapes must match.
    pub fn add_assign(&mut self, other: &Params) {
        for (k, t) in &mut self.tensors {
            let o = &other.tensors[k];
            t.data.iter_mut().zip(&o.data).for_each(|(a, b)| *a += b);
        }
        self.version = next_version();
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors.values_mut() {
            t.data.iter_mut().for_each(|v| *v *= s);
        }
        self.version = next_version();
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .values()
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Serialize for Params {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<NamedTensor> = self
            .tensors
            .iter()
            .map(|(k, t)| NamedTensor {
                name: k.clone(),
                shape: t.shape.clone(),
                data: t.data.clone(),
            })
            .collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Params {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let v = Vec::<NamedTensor>::deserialize(d)?;
        let mut p = Params::new();
        for nt in v {
            let t = Tensor::new(nt.shape, nt.data).map_err(D::Error::custom)?;
            p.tensors.insert(nt.name, t);
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checked() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert_eq!(Tensor::zeros(vec![2, 3]).len(), 6);
    }

    #[test]
    fn mutation_bumps_version() {
        let mut p = Params::new();
        p.insert("a", Tensor::zeros(vec![2]));
        let v = p.version();
        let _ = p.get("a");
        assert_eq!(p.version(), v);
        p.get_mut("a").unwrap().data[0] = 1.0;
        assert_ne!(p.version(), v);
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let mut p = Params::new();
        p.insert("w", Tensor::new(vec![1, 3], vec![0.1, -1.0 / 3.0, 1e-300]).unwrap());
        let s = serde_json::to_string(&p).unwrap();
        let q: Params = serde_json::from_str(&s).unwrap();
        assert_eq!(q.data("w"), p.data("w"));
    }
}
