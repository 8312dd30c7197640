use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Learned lookup table mapping a category index to a vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    rows: usize,
    dim: usize,
    table: Vec<f64>,
}

impl Embedding {
    pub fn new<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Self {
        let table = (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self { rows, dim, table }
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self { rows, dim, table: vec![0.0; rows * dim] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut [f64] {
        &mut self.table
    }

    pub fn row(&self, i: usize) -> Result<&[f64]> {
        if i >= self.rows {
            return Err(Error::Invalid(format!("embedding index {i} out of {} rows", self.rows)));
        }
        Ok(&self.table[i * self.dim..(i + 1) * self.dim])
    }

    pub fn forward(&self, indices: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i)?);
        }
        Tensor::new(vec![indices.len(), self.dim], data)
    }

    /// Scatter-adds `upstream` rows into the table gradient.
    pub fn backward(&self, indices: &[usize], upstream: &[f64], grad: &mut [f64]) {
        for (k, &i) in indices.iter().enumerate() {
            let src = &upstream[k * self.dim..(k + 1) * self.dim];
            grad[i * self.dim..(i + 1) * self.dim].iter_mut().zip(src).for_each(|(g, u)| *g += u);
        }
    }
}
