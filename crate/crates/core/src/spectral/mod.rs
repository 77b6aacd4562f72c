//! Neumann eigenbasis of `A = -Δ + I` on an axis-aligned box.
//!
//! Basis functions are tensor cosines
//! `e_k(x) = Π_i η(k_i) cos(k_i π x_i / L_i)` with `η(0) = √(1/L_i)` and
//! `η(k>0) = √(2/L_i)`, ordered by ascending eigenvalue
//! `μ_k = 1 + Σ_i (k_i π / L_i)²` with lexicographic tie-breaking.
//!
//! Fields live either as coefficient vectors ([`SpectralField`]) or as
//! samples on a cell-centred quadrature grid ([`GridField`]). The grid holds
//! at least `padding · (k_max + 1)` nodes per axis; with `padding = 2` the
//! midpoint rule integrates every product of four retained modes exactly,
//! which is what the cubic chemical potential and the quartic energy need.

mod field;
mod norms;
mod transform;

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use field::{evaluate, gradient_evaluate, project, GridField, SpectralField};
pub use norms::{holder_seminorm, l4_norm, sobolev_norm, HolderWindow};
pub(crate) use transform::AxisTransforms;

/// Default bound on the total number of quadrature nodes.
pub const DEFAULT_MAX_GRID_NODES: usize = 1 << 22;

/// Default dealiasing factor. Cubic nonlinearities need at least 2.
pub const DEFAULT_PADDING: f64 = 2.0;

/// Axis-aligned box `Π_i [0, L_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lengths: Vec<f64>,
}

impl Domain {
    pub fn new(lengths: Vec<f64>) -> Result<Self> {
        if lengths.is_empty() || lengths.len() > 3 {
            return Err(invalid(format!(
                "domain dimension must be 1, 2 or 3, got {}",
                lengths.len()
            )));
        }
        if lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(invalid("domain lengths must be finite and positive"));
        }
        Ok(Self { lengths })
    }

    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }
}

/// Closed-form eigenvalue of the multi-index `k`.
pub fn eigenvalue_of(domain: &Domain, k: &[usize]) -> f64 {
    1.0 + k
        .iter()
        .zip(domain.lengths())
        .map(|(&ki, &l)| (ki as f64 * PI / l).powi(2))
        .sum::<f64>()
}

fn mode_order(a: &(Vec<usize>, f64), b: &(Vec<usize>, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0))
}

/// The first `m` multi-indices in eigenvalue order, with their eigenvalues.
pub fn enumerate_modes(domain: &Domain, m: usize) -> Vec<(Vec<usize>, f64)> {
    if m == 0 {
        return Vec::new();
    }
    let lmax = domain.lengths().iter().cloned().fold(0.0, f64::max);
    let mut reach = (PI / lmax).powi(2);
    loop {
        let cutoff = 1.0 + reach;
        // One extra index per axis so rounding never drops a mode at the cutoff.
        let bounds: Vec<usize> = domain
            .lengths()
            .iter()
            .map(|l| (reach.sqrt() * l / PI).floor() as usize + 1)
            .collect();
        let mut found = Vec::new();
        let mut k = vec![0usize; domain.dim()];
        'outer: loop {
            let mu = eigenvalue_of(domain, &k);
            if mu <= cutoff {
                found.push((k.clone(), mu));
            }
            for axis in (0..k.len()).rev() {
                if k[axis] < bounds[axis] {
                    k[axis] += 1;
                    continue 'outer;
                }
                k[axis] = 0;
            }
            break;
        }
        if found.len() >= m {
            found.sort_by(mode_order);
            found.truncate(m);
            return found;
        }
        reach *= 2.0;
    }
}

/// Cell-centred tensor grid used for quadrature and pseudo-spectral products.
#[derive(Debug, Clone)]
pub struct QuadGrid {
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub nodes: Vec<Vec<f64>>,
    /// Cell volume, the common quadrature weight.
    pub weight: f64,
}

impl QuadGrid {
    fn new(domain: &Domain, shape: Vec<usize>) -> Self {
        let spacing: Vec<f64> = shape
            .iter()
            .zip(domain.lengths())
            .map(|(&n, &l)| l / n as f64)
            .collect();
        let nodes = shape
            .iter()
            .zip(&spacing)
            .map(|(&n, &h)| (0..n).map(|j| (j as f64 + 0.5) * h).collect())
            .collect();
        let weight = spacing.iter().product();
        Self {
            shape,
            spacing,
            nodes,
            weight,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    /// Multi-index of a flat (row-major) node index.
    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for axis in (0..self.shape.len()).rev() {
            out[axis] = flat % self.shape[axis];
            flat /= self.shape[axis];
        }
    }

    /// Coordinates of a flat node index.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim()];
        self.unravel(flat, &mut idx);
        idx.iter()
            .enumerate()
            .map(|(axis, &j)| self.nodes[axis][j])
            .collect()
    }
}

/// Ordered eigenpairs plus the quadrature grid and transform plans.
pub struct BasisSpec {
    domain: Domain,
    modes: Vec<Vec<usize>>,
    eigenvalues: Vec<f64>,
    padding: f64,
    grid: QuadGrid,
    // Per-mode normalisation Π η(k_i) and position in the dense grid tensor.
    norm: Vec<f64>,
    dense_index: Vec<usize>,
    pub(crate) transforms: AxisTransforms,
}

impl fmt::Debug for BasisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasisSpec")
            .field("domain", &self.domain)
            .field("m", &self.modes.len())
            .field("padding", &self.padding)
            .field("grid_shape", &self.grid.shape)
            .finish()
    }
}

impl BasisSpec {
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Number of retained modes.
    pub fn m(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[Vec<usize>] {
        &self.modes
    }

    pub fn mode(&self, index: usize) -> &[usize] {
        &self.modes[index]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn padding(&self) -> f64 {
        self.padding
    }

    pub fn grid(&self) -> &QuadGrid {
        &self.grid
    }

    pub fn eigenvalue(&self, index: usize) -> Result<f64> {
        self.eigenvalues
            .get(index)
            .copied()
            .ok_or(Error::IndexOutOfRange {
                index,
                len: self.m(),
            })
    }

    /// Position of a multi-index in the ordering, if retained.
    pub fn position(&self, k: &[usize]) -> Option<usize> {
        self.modes.iter().position(|mode| mode == k)
    }

    pub(crate) fn norm_factor(&self, index: usize) -> f64 {
        self.norm[index]
    }

    pub(crate) fn dense_index(&self, index: usize) -> usize {
        self.dense_index[index]
    }

    /// Direct evaluation of `e_k` at a point.
    pub fn eval_mode(&self, index: usize, x: &[f64]) -> f64 {
        let k = &self.modes[index];
        let mut v = self.norm[index];
        for axis in 0..k.len() {
            v *= (k[axis] as f64 * PI * x[axis] / self.domain.lengths[axis]).cos();
        }
        v
    }

    /// Direct evaluation of `∂_axis e_k` at a point.
    pub fn eval_mode_derivative(&self, index: usize, axis: usize, x: &[f64]) -> f64 {
        let k = &self.modes[index];
        let mut v = self.norm[index];
        for a in 0..k.len() {
            let w = k[a] as f64 * PI / self.domain.lengths[a];
            v *= if a == axis {
                -w * (w * x[a]).sin()
            } else {
                (w * x[a]).cos()
            };
        }
        v
    }
}

fn eta(k: usize, length: f64) -> f64 {
    if k == 0 {
        (1.0 / length).sqrt()
    } else {
        (2.0 / length).sqrt()
    }
}

/// Builds the first `m` eigenpairs and a grid padded by `padding`.
pub fn build_basis(domain: &Domain, m: usize, padding: f64) -> Result<Arc<BasisSpec>> {
    build_basis_bounded(domain, m, padding, DEFAULT_MAX_GRID_NODES)
}

pub fn build_basis_bounded(
    domain: &Domain,
    m: usize,
    padding: f64,
    max_grid_nodes: usize,
) -> Result<Arc<BasisSpec>> {
    if m == 0 {
        return Err(invalid("mode count must be at least 1"));
    }
    if !(padding.is_finite() && padding >= 1.0) {
        return Err(invalid(format!("padding must be >= 1, got {padding}")));
    }
    // The enumeration itself is bounded by the node budget: every retained
    // mode needs at least one node per axis.
    if m > max_grid_nodes {
        return Err(Error::GridTooLarge {
            nodes: m,
            bound: max_grid_nodes,
        });
    }
    let listed = enumerate_modes(domain, m);
    let dim = domain.dim();
    let mut kmax = vec![0usize; dim];
    for (k, _) in &listed {
        for axis in 0..dim {
            kmax[axis] = kmax[axis].max(k[axis]);
        }
    }
    let shape: Vec<usize> = kmax
        .iter()
        .map(|&k| ((padding * (k + 1) as f64).ceil() as usize).max(1))
        .collect();
    let nodes = shape
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .unwrap_or(usize::MAX);
    if nodes > max_grid_nodes {
        return Err(Error::GridTooLarge {
            nodes,
            bound: max_grid_nodes,
        });
    }
    let grid = QuadGrid::new(domain, shape);
    let mut modes = Vec::with_capacity(m);
    let mut eigenvalues = Vec::with_capacity(m);
    let mut norm = Vec::with_capacity(m);
    let mut dense_index = Vec::with_capacity(m);
    for (k, mu) in listed {
        let mut flat = 0;
        let mut nf = 1.0;
        for axis in 0..dim {
            flat = flat * grid.shape[axis] + k[axis];
            nf *= eta(k[axis], domain.lengths[axis]);
        }
        dense_index.push(flat);
        norm.push(nf);
        eigenvalues.push(mu);
        modes.push(k);
    }
    let transforms = AxisTransforms::new(&grid.shape);
    Ok(Arc::new(BasisSpec {
        domain: domain.clone(),
        modes,
        eigenvalues,
        padding,
        grid,
        norm,
        dense_index,
        transforms,
    }))
}
