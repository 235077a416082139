//! Node-valued time series.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Per-node vector values over a time grid, stored time-major, node-minor,
/// channel-innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: usize,
    nodes: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn new(times: usize, nodes: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != times * nodes * channels {
            return Err(Error::Shape(format!(
                "trajectory data has {} values, expected {times}x{nodes}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            times,
            nodes,
            channels,
            data,
        })
    }

    pub fn zeros(times: usize, nodes: usize, channels: usize) -> Self {
        Self {
            times,
            nodes,
            channels,
            data: vec![0.0; times * nodes * channels],
        }
    }

    pub fn times(&self) -> usize {
        self.times
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn frame(&self, k: usize) -> &[f64] {
        let len = self.nodes * self.channels;
        &self.data[k * len..(k + 1) * len]
    }

    pub fn frame_mut(&mut self, k: usize) -> &mut [f64] {
        let len = self.nodes * self.channels;
        &mut self.data[k * len..(k + 1) * len]
    }

    /// Keeps the listed nodes, in the listed order.
    pub fn select_nodes(&self, kept: &[usize]) -> Result<Self> {
        if let Some(&bad) = kept.iter().find(|&&p| p >= self.nodes) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                size: self.nodes,
            });
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(self.times * kept.len() * c);
        for k in 0..self.times {
            let f = self.frame(k);
            for &p in kept {
                data.extend_from_slice(&f[p * c..(p + 1) * c]);
            }
        }
        Self::new(self.times, kept.len(), c, data)
    }

    /// Applies a node operator (`rows x nodes`) to every frame and channel.
    pub fn map_nodes(&self, op: &CsrMatrix) -> Result<Self> {
        if op.cols() != self.nodes {
            return Err(Error::Shape(format!(
                "operator has {} columns, trajectory has {} nodes",
                op.cols(),
                self.nodes
            )));
        }
        let mut out = vec![0.0; self.times * op.rows() * self.channels];
        op.apply_blocks(&self.data, self.channels, &mut out, 1.0, false);
        Self::new(self.times, op.rows(), self.channels, out)
    }
}
