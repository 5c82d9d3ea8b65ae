use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl LayerSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Named, contiguous slices of a flat parameter vector.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    layers: Vec<LayerSpec>,
    total: usize,
}

impl Layout {
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize]) -> Range<usize> {
        let spec = LayerSpec {
            name: name.into(),
            offset: self.total,
            shape: shape.to_vec(),
        };
        self.total += spec.len();
        let r = spec.range();
        self.layers.push(spec);
        r
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn get(&self, name: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Span covering every layer whose name starts with `prefix` (layers of a
    /// component are pushed contiguously).
    pub fn group(&self, prefix: &str) -> Range<usize> {
        let mut it = self.layers.iter().filter(|l| l.name.starts_with(prefix));
        match it.next() {
            None => 0..0,
            Some(first) => {
                let end = it.last().unwrap_or(first).range().end;
                first.offset..end
            }
        }
    }
}

/// Flat `f32` parameter vector plus its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub layout: Layout,
    pub data: Vec<f32>,
}

impl ParameterSet {
    pub fn zeros(layout: Layout) -> Self {
        let data = vec![0.0; layout.total()];
        ParameterSet { layout, data }
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.layout.total() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for layout of {}",
                self.data.len(),
                self.layout.total()
            )));
        }
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!("non-finite parameter at {i}")));
        }
        Ok(())
    }

    pub fn slice(&self, name: &str) -> Option<&[f32]> {
        self.layout.get(name).map(|l| &self.data[l.range()])
    }

    pub fn slice_mut(&mut self, name: &str) -> Option<&mut [f32]> {
        let r = self.layout.get(name)?.range();
        Some(&mut self.data[r])
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

/// Kaiming-uniform bound for leaky-ReLU layers with the given fan-in.
pub fn kaiming_bound(fan_in: usize, slope: f64) -> f64 {
    let gain = (2.0 / (1.0 + slope * slope)).sqrt();
    gain * (3.0 / fan_in.max(1) as f64).sqrt()
}

/// Fills every `*.w` layer with Kaiming-uniform values (fan-in = product of
/// all but the last dimension); biases stay zero.
pub fn kaiming_init(params: &mut ParameterSet, slope: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for l in params.layout.layers().to_vec() {
        if !l.name.ends_with(".w") {
            continue;
        }
        let fan_in: usize = l.shape[..l.shape.len() - 1].iter().product();
        let b = kaiming_bound(fan_in, slope) as f32;
        for v in &mut params.data[l.range()] {
            *v = rng.random_range(-b..b);
        }
    }
}
