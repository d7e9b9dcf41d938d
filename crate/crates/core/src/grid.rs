//! Uniform tensor grids on an interval or a rectangle, the exact boundary
//! distance, and the Dirichlet Laplacian with boundary rows eliminated.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SelError};
use crate::operator::{SparseOperator, Stencil};

/// The domain Ω. Intervals are `(0, length)`, rectangles `(0, width) × (0, height)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainShape {
    Interval { length: f64 },
    Rectangle { width: f64, height: f64 },
}

impl DomainShape {
    pub fn unit_interval() -> Self {
        DomainShape::Interval { length: 1.0 }
    }

    pub fn unit_square() -> Self {
        DomainShape::Rectangle { width: 1.0, height: 1.0 }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainShape::Interval { .. } => 1,
            DomainShape::Rectangle { .. } => 2,
        }
    }

    pub fn extents(&self) -> Vec<f64> {
        match *self {
            DomainShape::Interval { length } => vec![length],
            DomainShape::Rectangle { width, height } => vec![width, height],
        }
    }

    pub fn diameter(&self) -> f64 {
        self.extents().iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    pub fn measure(&self) -> f64 {
        self.extents().iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.extents().iter().all(|e| e.is_finite() && *e > 0.0) {
            Ok(())
        } else {
            Err(SelError::InvalidDomain(format!("extents must be positive and finite: {self:?}")))
        }
    }

    /// Exact distance from `x` to the boundary.
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.extents()
            .iter()
            .zip(x)
            .map(|(e, xi)| xi.min(e - xi))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Values on the interior nodes of a [`Grid`]; the Dirichlet boundary value 0
/// is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScalarField(pub Vec<f64>);

impl ScalarField {
    pub fn zeros(len: usize) -> Self {
        ScalarField(vec![0.0; len])
    }

    pub fn constant(len: usize, value: f64) -> Self {
        ScalarField(vec![value; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &[f64], f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.len(), other.len());
        ScalarField(self.0.iter().zip(other).map(|(&a, &b)| f(a, b)).collect())
    }

    /// First node (and its value) where the field is not strictly positive.
    pub fn first_non_positive(&self) -> Option<(usize, f64)> {
        self.0.iter().copied().enumerate().find(|&(_, v)| v.is_nan() || v <= 0.0)
    }

    pub fn require_positive(&self) -> Result<()> {
        match self.first_non_positive() {
            Some((node, value)) => Err(SelError::NonPositiveField { node, value }),
            None => Ok(()),
        }
    }
}

impl Deref for ScalarField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ScalarField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ScalarField {
    fn from(v: Vec<f64>) -> Self {
        ScalarField(v)
    }
}

/// How the discrete gradient treats nodes next to the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientStencil {
    /// Central differences everywhere, using the Dirichlet value 0 for
    /// boundary neighbours. Exact for quadratics.
    Central,
    /// Central differences in the interior, one-sided `(u_1 - 0)/h` towards
    /// the boundary at nodes that touch it.
    BoundaryOneSided,
}

/// Uniform tensor grid with `n` subdivisions per axis.
///
/// Interior nodes are ordered lexicographically with the first axis varying
/// fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    shape: DomainShape,
    n: usize,
    spacing: Vec<f64>,
    coords: Vec<f64>,
    dist: Vec<f64>,
}

/// Builds the uniform grid with `n` subdivisions per axis.
pub fn build_grid(shape: DomainShape, n: usize) -> Result<Grid> {
    if n < 2 {
        return Err(SelError::InvalidResolution(n));
    }
    shape.validate()?;
    let dim = shape.dim();
    let extents = shape.extents();
    let spacing: Vec<f64> = extents.iter().map(|e| e / n as f64).collect();
    let m = n - 1;
    let count = m.pow(dim as u32);
    let mut coords = Vec::with_capacity(count * dim);
    let mut dist = Vec::with_capacity(count);
    for k in 0..count {
        let mut rest = k;
        let mut x = [0.0; 2];
        let mut d = f64::INFINITY;
        for axis in 0..dim {
            let i = rest % m + 1;
            rest /= m;
            x[axis] = i as f64 * extents[axis] / n as f64;
            // From the integer index so that reflected nodes get identical d.
            d = d.min(i.min(n - i) as f64 * extents[axis] / n as f64);
        }
        coords.extend_from_slice(&x[..dim]);
        dist.push(d);
    }
    Ok(Grid { shape, n, spacing, coords, dist })
}

impl Grid {
    pub fn shape(&self) -> DomainShape {
        self.shape
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    /// Spacing per axis.
    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Largest spacing over the axes.
    pub fn h(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }

    /// Midpoint-rule weight attached to each interior node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        let dim = self.dim();
        &self.coords[k * dim..(k + 1) * dim]
    }

    /// Boundary distance per interior node.
    pub fn distances(&self) -> &[f64] {
        &self.dist
    }

    pub fn diameter(&self) -> f64 {
        self.shape.diameter()
    }

    /// Per-axis index (1-based, boundary nodes are 0 and n) of node `k`.
    pub fn multi_index(&self, k: usize) -> [usize; 2] {
        let m = self.n - 1;
        match self.dim() {
            1 => [k + 1, 0],
            _ => [k % m + 1, k / m + 1],
        }
    }

    fn linear_index(&self, idx: [usize; 2]) -> usize {
        let m = self.n - 1;
        match self.dim() {
            1 => idx[0] - 1,
            _ => (idx[1] - 1) * m + (idx[0] - 1),
        }
    }

    /// Neighbour of node `k` along `axis` in direction `step` (±1); `None`
    /// when that neighbour is a boundary node.
    pub fn neighbor(&self, k: usize, axis: usize, step: isize) -> Option<usize> {
        let mut idx = self.multi_index(k);
        let j = idx[axis] as isize + step;
        if j <= 0 || j >= self.n as isize {
            return None;
        }
        idx[axis] = j as usize;
        Some(self.linear_index(idx))
    }

    pub fn check_field(&self, f: &[f64]) -> Result<()> {
        if f.len() == self.len() {
            Ok(())
        } else {
            Err(SelError::FieldLength { expected: self.len(), got: f.len() })
        }
    }

    /// Midpoint-rule integral of a nodal quantity.
    pub fn integrate(&self, values: impl IntoIterator<Item = f64>) -> f64 {
        values.into_iter().sum::<f64>() * self.cell_volume()
    }

    /// Nodes whose nearest boundary point lies on an edge at least
    /// `corner_fraction` of that edge's length away from both of its ends.
    /// Every node qualifies on an interval.
    pub fn away_from_corners(&self, k: usize, corner_fraction: f64) -> bool {
        if self.dim() == 1 {
            return true;
        }
        let x = self.point(k);
        let ext = self.shape.extents();
        let d = self.dist[k];
        // Any axis whose wall realizes the distance; the foot of the
        // perpendicular then moves along the other axis.
        (0..2).any(|axis| {
            let wall = x[axis].min(ext[axis] - x[axis]);
            if (wall - d).abs() > 1e-12 * ext[axis] {
                return false;
            }
            let other = 1 - axis;
            let s = x[other];
            s >= corner_fraction * ext[other] && s <= (1.0 - corner_fraction) * ext[other]
        })
    }

    /// Magnitude of the discrete gradient at every interior node.
    pub fn gradient_magnitude(&self, u: &[f64], stencil: GradientStencil) -> Vec<f64> {
        assert_eq!(u.len(), self.len());
        (0..self.len())
            .map(|k| {
                let mut sq = 0.0;
                for axis in 0..self.dim() {
                    let h = self.spacing[axis];
                    let lo = self.neighbor(k, axis, -1);
                    let hi = self.neighbor(k, axis, 1);
                    let val = |nb: Option<usize>| nb.map_or(0.0, |j| u[j]);
                    let g = match (stencil, lo, hi) {
                        (GradientStencil::BoundaryOneSided, None, Some(_)) => u[k] / h,
                        (GradientStencil::BoundaryOneSided, Some(_), None) => -u[k] / h,
                        _ => (val(hi) - val(lo)) / (2.0 * h),
                    };
                    sq += g * g;
                }
                sq.sqrt()
            })
            .collect()
    }
}

/// Negative Laplacian, 3-point (1D) or 5-point (2D), with Dirichlet rows
/// eliminated.
pub fn assemble_laplacian(grid: &Grid) -> SparseOperator {
    let stencil = match grid.dim() {
        1 => Stencil::ThreePoint,
        _ => Stencil::FivePoint,
    };
    let rows = (0..grid.len())
        .map(|k| {
            let mut row = Vec::with_capacity(5);
            let mut diag = 0.0;
            for axis in 0..grid.dim() {
                let w = 1.0 / (grid.spacing()[axis] * grid.spacing()[axis]);
                diag += 2.0 * w;
                for step in [-1, 1] {
                    if let Some(j) = grid.neighbor(k, axis, step) {
                        row.push((j, -w));
                    }
                }
            }
            row.push((k, diag));
            row
        })
        .collect();
    SparseOperator::from_rows(rows, stencil)
}

/// Nodewise `d^(-gamma)`.
pub fn power_weight(grid: &Grid, gamma: f64) -> ScalarField {
    ScalarField(grid.distances().iter().map(|d| d.powf(-gamma)).collect())
}
