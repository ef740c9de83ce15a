//! Dense per-node state storage shared by the consensus and optimization
//! iterations. Node `i` owns the contiguous slice `data[i*d..(i+1)*d]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeStates {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl NodeStates {
    pub fn zeros(n: usize, dim: usize) -> Self {
        NodeStates {
            n,
            dim,
            data: vec![0.0; n * dim],
        }
    }

    /// One scalar per node.
    pub fn from_scalars(values: &[f64]) -> Self {
        NodeStates {
            n: values.len(),
            dim: 1,
            data: values.to_vec(),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(NodeStates {
            n: rows.len(),
            dim,
            data,
        })
    }

    /// Every node holds a copy of `point`.
    pub fn replicated(n: usize, point: &[f64]) -> Self {
        let mut data = Vec::with_capacity(n * point.len());
        for _ in 0..n {
            data.extend_from_slice(point);
        }
        NodeStates {
            n,
            dim: point.len(),
            data,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Coordinate `c` of every node.
    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.data[i * self.dim + c]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for i in 0..self.n {
            for (acc, v) in m.iter_mut().zip(self.node(i)) {
                *acc += v;
            }
        }
        for v in &mut m {
            *v /= self.n as f64;
        }
        m
    }

    pub fn sum(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for i in 0..self.n {
            for (acc, v) in m.iter_mut().zip(self.node(i)) {
                *acc += v;
            }
        }
        m
    }

    /// Frobenius norm of the deviation from `center` replicated at every node.
    pub fn deviation_norm(&self, center: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for (v, c) in self.node(i).iter().zip(center) {
                s += (v - c) * (v - c);
            }
        }
        s.sqrt()
    }

    /// Largest per-coordinate range `max_i x_ic - min_i x_ic`.
    pub fn spread(&self) -> f64 {
        (0..self.dim)
            .map(|c| {
                let (lo, hi) = (0..self.n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                    let v = self.data[i * self.dim + c];
                    (lo.min(v), hi.max(v))
                });
                if self.n == 0 {
                    0.0
                } else {
                    hi - lo
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &NodeStates) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        Ok(())
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
