use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of parameters of a dense network with the given layer widths.
pub fn param_count(shape: &[usize]) -> usize {
    shape.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.len() < 2 {
        return Err(Error::usage(format!(
            "shape needs at least an input and an output width, got {shape:?}"
        )));
    }
    if shape.iter().any(|&w| w == 0) {
        return Err(Error::usage(format!("layer widths must be positive, got {shape:?}")));
    }
    Ok(())
}

/// One dense layer: `weights[out][in]` and `bias[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Flattened parameters of a dense network.
///
/// `shape` lists layer widths from input to output. Each layer is stored as
/// its row-major `out x in` weight matrix followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        validate_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            values: vec![0.0; param_count(shape)],
        })
    }

    pub fn from_values(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        validate_shape(shape)?;
        let want = param_count(shape);
        if values.len() != want {
            return Err(Error::usage(format!(
                "shape {shape:?} needs {want} parameters, got {}",
                values.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            values,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.shape[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.shape.last().expect("validated shape")
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_same_shape(&self, other: &ParamVector) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::usage(format!(
                "parameter shapes differ: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn unflatten(&self) -> Vec<Layer> {
        let mut layers = Vec::with_capacity(self.shape.len() - 1);
        let mut at = 0;
        for w in self.shape.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = (0..fan_out)
                .map(|o| self.values[at + o * fan_in..at + (o + 1) * fan_in].to_vec())
                .collect();
            at += fan_in * fan_out;
            let bias = self.values[at..at + fan_out].to_vec();
            at += fan_out;
            layers.push(Layer { weights, bias });
        }
        layers
    }

    pub fn flatten(shape: &[usize], layers: &[Layer]) -> Result<Self> {
        validate_shape(shape)?;
        if layers.len() != shape.len() - 1 {
            return Err(Error::usage("layer count does not match shape"));
        }
        let mut values = Vec::with_capacity(param_count(shape));
        for (w, layer) in shape.windows(2).zip(layers) {
            if layer.bias.len() != w[1]
                || layer.weights.len() != w[1]
                || layer.weights.iter().any(|row| row.len() != w[0])
            {
                return Err(Error::usage("layer dimensions do not match shape"));
            }
            for row in &layer.weights {
                values.extend_from_slice(row);
            }
            values.extend_from_slice(&layer.bias);
        }
        Ok(Self {
            shape: shape.to_vec(),
            values,
        })
    }

    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &ParamVector) -> Result<()> {
        self.check_same_shape(x)?;
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &ParamVector) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}
