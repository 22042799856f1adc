//! Radial grids and sampled even profiles.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{monotone_slopes, Hermite, Parity};

/// A refinement zone: node density gains `strength / (1 + ((r − center)/width)²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub center: f64,
    pub width: f64,
    pub strength: f64,
}

impl Cluster {
    fn cumulative(&self, r: f64) -> f64 {
        self.strength
            * self.width
            * (((r - self.center) / self.width).atan() + (self.center / self.width).atan())
    }
}

/// Nodes `0 = r_0 < r_1 < … < r_M = R_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    nodes: Vec<f64>,
}

impl RadialGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::Domain("a radial grid needs at least 3 nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::Domain("a radial grid must start at r = 0".into()));
        }
        if nodes
            .windows(2)
            .any(|w| !(w[1] > w[0]) || !w[1].is_finite())
        {
            return Err(Error::Domain(
                "grid nodes must be finite and strictly increasing".into(),
            ));
        }
        Ok(RadialGrid { nodes })
    }

    /// `cells` equal cells on `[0, r_max]`.
    pub fn uniform(cells: usize, r_max: f64) -> Result<Self> {
        if !(r_max > 0.0) {
            return Err(Error::Domain(format!(
                "r_max must be positive, got {r_max}"
            )));
        }
        Self::new(
            (0..=cells)
                .map(|i| r_max * i as f64 / cells as f64)
                .collect(),
        )
    }

    /// Exponentially stretched grid, finest at the origin; `stretch` is the
    /// log of the ratio between the last and the first cell width.
    pub fn graded(cells: usize, r_max: f64, stretch: f64) -> Result<Self> {
        if stretch.abs() < 1e-12 {
            return Self::uniform(cells, r_max);
        }
        let denom = stretch.exp_m1();
        Self::new(
            (0..=cells)
                .map(|i| {
                    let xi = i as f64 / cells as f64;
                    if i == cells {
                        r_max
                    } else {
                        r_max * (stretch * xi).exp_m1() / denom
                    }
                })
                .collect(),
        )
    }

    /// Node density proportional to `1 + Σ` cluster terms; cells are
    /// equal-mass slices of the cumulative density.
    pub fn clustered(cells: usize, r_max: f64, clusters: &[Cluster]) -> Result<Self> {
        if !(r_max > 0.0) {
            return Err(Error::Domain(format!(
                "r_max must be positive, got {r_max}"
            )));
        }
        if clusters
            .iter()
            .any(|c| !(c.width > 0.0) || !(c.strength >= 0.0) || !c.center.is_finite())
        {
            return Err(Error::Domain(
                "clusters need positive width and nonnegative strength".into(),
            ));
        }
        let mass = |r: f64| r + clusters.iter().map(|c| c.cumulative(r)).sum::<f64>();
        let total = mass(r_max);
        let mut nodes = Vec::with_capacity(cells + 1);
        nodes.push(0.0);
        for i in 1..cells {
            let target = total * i as f64 / cells as f64;
            let (mut lo, mut hi) = (0.0, r_max);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if mass(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            nodes.push(0.5 * (lo + hi));
        }
        nodes.push(r_max);
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn r_max(&self) -> f64 {
        *self.nodes.last().expect("nonempty grid")
    }

    pub fn min_spacing(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Grid with every cell split in two; old nodes keep even indices.
    pub fn refined(&self) -> RadialGrid {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len() - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(self.r_max());
        RadialGrid { nodes }
    }
}

/// A sampled even radial profile `u(r)` with its monotone cubic interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Domain(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at node {i}")));
        }
        let slopes = monotone_slopes(grid.nodes(), &values, Parity::Even);
        Ok(RadialField {
            grid,
            values,
            slopes,
        })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: Arc<RadialGrid>, f: F) -> Result<Self> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Node slopes of the monotone interpolant (`slopes()[0] == 0`).
    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn interpolant(&self) -> Hermite<'_> {
        Hermite {
            x: self.grid.nodes(),
            y: &self.values,
            m: &self.slopes,
            parity: Parity::Even,
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.interpolant().value(r)
    }

    pub fn derivative(&self, r: f64) -> f64 {
        self.interpolant().derivative(r)
    }

    pub fn origin_value(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `sup |∂_r u|` of the interpolant and where it is attained.
    pub fn gradient_sup(&self) -> (f64, f64) {
        self.interpolant().derivative_sup()
    }

    pub fn curvature_sup(&self) -> f64 {
        self.interpolant().second_derivative_sup()
    }

    /// Largest node radius where `|u - u(R_max)|` exceeds `eps`; zero for a
    /// flat field.
    pub fn support_radius(&self, eps: f64) -> f64 {
        let far = *self.values.last().expect("nonempty");
        let nodes = self.grid.nodes();
        self.values
            .iter()
            .rposition(|v| (v - far).abs() > eps)
            .map(|i| nodes[(i + 1).min(nodes.len() - 1)])
            .unwrap_or(0.0)
    }

    pub fn scaled(&self, c: f64) -> RadialField {
        RadialField::new(
            self.grid.clone(),
            self.values.iter().map(|v| c * v).collect(),
        )
        .expect("scaling keeps values finite")
    }

    /// Rejects fields whose support reaches past `fraction · R_max`.
    pub fn check_support(&self, fraction: f64) -> Result<()> {
        let scale = self
            .values
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let support = self.support_radius(1e-10 * scale);
        let limit = fraction * self.grid.r_max();
        if support > limit + 1e-12 * limit {
            return Err(Error::Truncation { support, limit });
        }
        Ok(())
    }
}
