//! Time grids and real-valued functions sampled on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform partition `0 = t_0 < t_1 < ... < t_n = T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon {horizon} must be > 0")));
        }
        if steps < 1 {
            return Err(Error::InvalidGrid("need at least one step".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of steps `n`; there are `n + 1` nodes.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.node(i)).collect()
    }

    /// Index of the node equal to `t` (within a relative tolerance), if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt();
        let i = x.round();
        if i < 0.0 || i > self.steps as f64 {
            return None;
        }
        ((x - i).abs() <= 1e-9 * x.abs().max(1.0)).then_some(i as usize)
    }
}

/// A real function sampled on strictly increasing nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidGrid(format!("{} nodes", nodes.len())));
        }
        if nodes.len() != values.len() {
            return Err(Error::InvalidGrid(format!(
                "{} nodes but {} values",
                nodes.len(),
                values.len()
            )));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidGrid("non-finite node".into()));
        }
        if let Some(w) = nodes.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "nodes not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite value".into()));
        }
        Ok(Self { nodes, values })
    }

    /// Samples `f` on `grid`.
    pub fn sample(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let nodes = grid.nodes();
        let values = nodes.iter().map(|&x| f(x)).collect();
        Self::new(nodes, values)
    }

    /// Samples `f` on `n` uniform steps of `[a, b]`.
    pub fn uniform(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if b.is_nan() || a.is_nan() || b <= a || n < 1 {
            return Err(Error::InvalidGrid(format!("[{a}, {b}] with {n} steps")));
        }
        let h = (b - a) / n as f64;
        let nodes: Vec<f64> = (0..=n)
            .map(|i| if i == n { b } else { a + i as f64 * h })
            .collect();
        let values = nodes.iter().map(|&x| f(x)).collect();
        Self::new(nodes, values)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn a(&self) -> f64 {
        self.nodes[0]
    }

    pub fn b(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.nodes.clone(), values)
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = self
            .nodes
            .iter()
            .zip(&self.values)
            .map(|(&x, &v)| f(x, v))
            .collect();
        self.with_values(values)
    }

    /// Function on the mirrored grid `x -> a + b - x`.
    pub fn reflect(&self) -> Self {
        let (a, b) = (self.a(), self.b());
        let nodes = self.nodes.iter().rev().map(|&x| a + b - x).collect();
        let values = self.values.iter().rev().copied().collect();
        Self { nodes, values }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

/// Grid values where one endpoint carries a singular (undefined) value.
///
/// The value at `singular_node` is stored as NaN.
#[derive(Clone, Debug)]
pub struct EndpointSingular {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub singular_node: usize,
}

impl EndpointSingular {
    /// `(node, value)` pairs excluding the singular endpoint.
    pub fn defined(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes
            .iter()
            .zip(&self.values)
            .enumerate()
            .filter(move |(i, _)| *i != self.singular_node)
            .map(|(_, (&x, &v))| (x, v))
    }

    /// Completes the singular endpoint with a caller-supplied value.
    pub fn complete_with(&self, endpoint_value: f64) -> Result<GridFunction> {
        let mut values = self.values.clone();
        values[self.singular_node] = endpoint_value;
        GridFunction::new(self.nodes.clone(), values)
    }
}
