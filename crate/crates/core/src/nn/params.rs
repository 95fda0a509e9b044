use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            name: name.into(),
            shape,
            data: vec![0.0; len],
        }
    }
}

/// Ordered named tensors holding every weight and bias of one network.
///
/// Each value carries a stamp that changes on every mutation; activation
/// caches record it so a backward pass against modified parameters is caught.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterSet {
    tensors: Vec<Tensor>,
    #[serde(skip, default = "fresh_stamp")]
    stamp: u64,
}

impl PartialEq for ParameterSet {
    fn eq(&self, other: &Self) -> bool {
        self.tensors == other.tensors
    }
}

impl ParameterSet {
    pub fn new(tensors: Vec<Tensor>) -> Self {
        ParameterSet {
            tensors,
            stamp: fresh_stamp(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ParameterSet::new(
            self.tensors
                .iter()
                .map(|t| Tensor::zeros(t.name.clone(), t.shape.clone()))
                .collect(),
        )
    }

    pub fn stamp(&self) -> u64 {
        self.stamp
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensor(&self, idx: usize) -> &Tensor {
        &self.tensors[idx]
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut Tensor {
        self.stamp = fresh_stamp();
        &mut self.tensors[idx]
    }

    /// Total number of scalars.
    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> + '_ {
        self.tensors.iter().flat_map(|t| t.data.iter())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.stamp = fresh_stamp();
        self.tensors.iter_mut().flat_map(|t| t.data.iter_mut())
    }

    /// Scalar at a flat index across all tensors.
    pub fn get(&self, mut k: usize) -> f64 {
        for t in &self.tensors {
            if k < t.data.len() {
                return t.data[k];
            }
            k -= t.data.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set(&mut self, mut k: usize, value: f64) {
        self.stamp = fresh_stamp();
        for t in &mut self.tensors {
            if k < t.data.len() {
                t.data[k] = value;
                return;
            }
            k -= t.data.len();
        }
        panic!("parameter index out of range")
    }

    pub fn same_layout(&self, other: &ParameterSet) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    fn check_layout(&self, other: &ParameterSet) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::shape(
                "parameter set",
                format!("{} tensors", self.tensors.len()),
                format!("incompatible layout with {} tensors", other.tensors.len()),
            ))
        }
    }

    pub fn add_assign(&mut self, other: &ParameterSet) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values_mut() {
            *v *= factor;
        }
    }

    /// Elementwise `τ·online + (1 − τ)·target`.
    pub fn blend(target: &ParameterSet, online: &ParameterSet, tau: f64) -> Result<ParameterSet> {
        let mut out = target.clone();
        out.blend_from(online, tau)?;
        Ok(out)
    }

    /// In-place form of [`ParameterSet::blend`] with `self` as the target.
    pub fn blend_from(&mut self, online: &ParameterSet, tau: f64) -> Result<()> {
        self.check_layout(online)?;
        if tau == 1.0 {
            // exact copy, independent of rounding in the blend
            for (a, b) in self.values_mut().zip(online.values()) {
                *a = *b;
            }
            return Ok(());
        }
        for (a, b) in self.values_mut().zip(online.values()) {
            // equals τ·online + (1 − τ)·target, and is exact when the two agree
            *a += tau * (b - *a);
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}
