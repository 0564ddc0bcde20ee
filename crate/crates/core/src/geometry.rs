//! Tensor-product node grids on boxes `[0, L_1] × … × [0, L_d]`.
//!
//! Nodes are numbered with axis 0 varying fastest, so the last axis (the
//! gravity axis, pointing down) has the largest stride. The face `x_d = 0`
//! is the surface; every other face is underground.
//!
//! Quadrature is the tensor trapezoid rule. Boundary weights are products of
//! the transverse 1D trapezoid weights, so corners are shared between the
//! faces that meet there and each face integrates constants to its measure.

use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Surface,
    Underground,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub axis: usize,
    pub side: Side,
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone)]
pub struct GridDomain {
    extents: Vec<f64>,
    cells: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    nodes: usize,
    volume_weights: Vec<f64>,
    surface_weights: Vec<f64>,
    underground_weights: Vec<f64>,
}

fn trapezoid_weight(i: usize, cells: usize, h: f64) -> f64 {
    if i == 0 || i == cells {
        0.5 * h
    } else {
        h
    }
}

impl GridDomain {
    pub fn new(extents: &[f64], cells: &[usize]) -> Result<Self> {
        let d = extents.len();
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidParameter(format!(
                "dimension must be 1, 2 or 3, got {d}"
            )));
        }
        if cells.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: cells.len() });
        }
        if let Some(&l) = extents.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidParameter(format!("extent {l} must be positive")));
        }
        if let Some(&n) = cells.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidParameter(format!(
                "each axis needs at least 2 cells, got {n}"
            )));
        }

        let spacing: Vec<f64> = extents.iter().zip(cells).map(|(l, &n)| l / n as f64).collect();
        let mut strides = vec![1usize; d];
        for k in 1..d {
            strides[k] = strides[k - 1] * (cells[k - 1] + 1);
        }
        let nodes = strides[d - 1] * (cells[d - 1] + 1);

        let mut grid = GridDomain {
            extents: extents.to_vec(),
            cells: cells.to_vec(),
            spacing,
            strides,
            nodes,
            volume_weights: vec![0.0; nodes],
            surface_weights: vec![0.0; nodes],
            underground_weights: vec![0.0; nodes],
        };

        let mut idx = vec![0usize; d];
        for node in 0..nodes {
            grid.multi_index_into(node, &mut idx);
            let w: Vec<f64> = (0..d)
                .map(|k| trapezoid_weight(idx[k], cells[k], grid.spacing[k]))
                .collect();
            grid.volume_weights[node] = w.iter().product();
            for face in grid.faces() {
                let on_face = match face.side {
                    Side::Low => idx[face.axis] == 0,
                    Side::High => idx[face.axis] == cells[face.axis],
                };
                if !on_face {
                    continue;
                }
                let transverse: f64 = (0..d).filter(|&k| k != face.axis).map(|k| w[k]).product();
                match face.tag {
                    BoundaryTag::Surface => grid.surface_weights[node] += transverse,
                    BoundaryTag::Underground => grid.underground_weights[node] += transverse,
                }
            }
        }
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    /// Number of nodes along `axis`.
    pub fn axis_nodes(&self, axis: usize) -> usize {
        self.cells[axis] + 1
    }

    /// Largest index distance between coupled nodes.
    pub fn bandwidth(&self) -> usize {
        self.strides[self.dim() - 1]
    }

    pub fn faces(&self) -> Vec<Face> {
        let d = self.dim();
        let mut out = Vec::with_capacity(2 * d);
        for axis in 0..d {
            for side in [Side::Low, Side::High] {
                let tag = if axis == d - 1 && side == Side::Low {
                    BoundaryTag::Surface
                } else {
                    BoundaryTag::Underground
                };
                out.push(Face { axis, side, tag });
            }
        }
        out
    }

    pub fn multi_index_into(&self, node: usize, idx: &mut [usize]) {
        let mut rest = node;
        for k in 0..self.dim() {
            let n = self.cells[k] + 1;
            idx[k] = rest % n;
            rest /= n;
        }
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        self.multi_index_into(node, &mut idx);
        idx
    }

    pub fn coordinates(&self, node: usize) -> Vec<f64> {
        self.multi_index(node)
            .iter()
            .zip(&self.spacing)
            .map(|(&i, h)| i as f64 * h)
            .collect()
    }

    /// Depth of a node, i.e. its coordinate along the gravity axis.
    pub fn depth(&self, node: usize) -> f64 {
        let d = self.dim();
        (node / self.strides[d - 1]) as f64 * self.spacing[d - 1]
    }

    pub fn volume_weights(&self) -> &[f64] {
        &self.volume_weights
    }

    pub fn boundary_weights(&self, tag: BoundaryTag) -> &[f64] {
        match tag {
            BoundaryTag::Surface => &self.surface_weights,
            BoundaryTag::Underground => &self.underground_weights,
        }
    }

    pub fn measure(&self) -> f64 {
        self.extents.iter().product()
    }

    pub fn boundary_measure(&self, tag: BoundaryTag) -> f64 {
        self.boundary_weights(tag).iter().sum()
    }

    /// Stable digest of the grid layout, recorded in run manifests.
    pub fn grid_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("d={};extents={:?};cells={:?}", self.dim(), self.extents, self.cells));
        hex::encode(h.finalize())
    }
}

pub fn build_grid(extents: &[f64], cells: &[usize]) -> Result<Arc<GridDomain>> {
    GridDomain::new(extents, cells).map(Arc::new)
}

/// Nodal values on a grid.
#[derive(Debug, Clone)]
pub struct DiscreteField {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
}

impl PartialEq for DiscreteField {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.domain, &other.domain) && self.values == other.values
    }
}

impl DiscreteField {
    pub fn new(domain: Arc<GridDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.node_count() {
            return Err(Error::DimensionMismatch {
                expected: domain.node_count(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite value at node {i}")));
        }
        Ok(DiscreteField { domain, values })
    }

    /// Construction without the finiteness scan, for values produced internally.
    pub(crate) fn from_raw(domain: Arc<GridDomain>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), domain.node_count());
        DiscreteField { domain, values }
    }

    pub fn zeros(domain: Arc<GridDomain>) -> Self {
        let n = domain.node_count();
        DiscreteField { domain, values: vec![0.0; n] }
    }

    pub fn constant(domain: Arc<GridDomain>, c: f64) -> Self {
        let n = domain.node_count();
        DiscreteField { domain, values: vec![c; n] }
    }

    pub fn from_fn(domain: Arc<GridDomain>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..domain.node_count()).map(|i| f(&domain.coordinates(i))).collect();
        Self::new(domain, values)
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
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

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_same_domain(&self, other: &DiscreteField) -> Result<()> {
        if Arc::ptr_eq(&self.domain, &other.domain)
            || (self.domain.extents == other.domain.extents && self.domain.cells == other.domain.cells)
        {
            Ok(())
        } else {
            Err(Error::DomainMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DiscreteField {
        DiscreteField::from_raw(self.domain.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, a: f64) -> DiscreteField {
        self.map(|v| a * v)
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &DiscreteField) {
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    pub fn sub(&self, other: &DiscreteField) -> DiscreteField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn pointwise_mul(&self, other: &DiscreteField) -> DiscreteField {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        DiscreteField::from_raw(self.domain.clone(), values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoid-rule L² inner product.
    pub fn l2_inner(&self, other: &DiscreteField) -> f64 {
        weighted_dot(self.domain.volume_weights(), &self.values, &other.values)
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_inner(self).sqrt()
    }
}

pub(crate) fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

pub fn quad_volume(f: &DiscreteField) -> f64 {
    f.domain.volume_weights().iter().zip(&f.values).map(|(w, v)| w * v).sum()
}

pub fn quad_boundary(f: &DiscreteField, tag: BoundaryTag) -> f64 {
    f.domain.boundary_weights(tag).iter().zip(&f.values).map(|(w, v)| w * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_nodes_and_faces() {
        let g = build_grid(&[1.0], &[4]).unwrap();
        assert_eq!(g.node_count(), 5);
        let xs: Vec<f64> = (0..5).map(|i| g.coordinates(i)[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.boundary_weights(BoundaryTag::Surface), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(g.boundary_weights(BoundaryTag::Underground), &[0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn unit_square_boundary_measures() {
        let g = build_grid(&[1.0, 1.0], &[4, 4]).unwrap();
        assert!((g.boundary_measure(BoundaryTag::Surface) - 1.0).abs() < 1e-14);
        assert!((g.boundary_measure(BoundaryTag::Underground) - 3.0).abs() < 1e-14);
        // surface nodes sit at depth 0
        for i in 0..g.node_count() {
            if g.boundary_weights(BoundaryTag::Surface)[i] > 0.0 {
                assert_eq!(g.depth(i), 0.0);
            }
        }
    }

    #[test]
    fn unit_cube_boundary_measures() {
        let g = build_grid(&[1.0, 2.0, 1.0], &[3, 4, 2]).unwrap();
        assert!((g.boundary_measure(BoundaryTag::Surface) - 2.0).abs() < 1e-13);
        assert!((g.boundary_measure(BoundaryTag::Underground) - 8.0).abs() < 1e-13);
        assert!((g.volume_weights().iter().sum::<f64>() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_single_cell() {
        assert!(build_grid(&[1.0], &[1]).is_err());
        assert!(build_grid(&[1.0, 1.0], &[4]).is_err());
        assert!(build_grid(&[-1.0], &[4]).is_err());
    }

    #[test]
    fn volume_quadrature() {
        let g = build_grid(&[1.0], &[64]).unwrap();
        let one = DiscreteField::constant(g.clone(), 1.0);
        assert!((quad_volume(&one) - 1.0).abs() < 1e-14);
        let x = DiscreteField::from_fn(g.clone(), |p| p[0]).unwrap();
        assert!((quad_volume(&x) - 0.5).abs() < 1e-14);
        // Richardson: trapezoid error for x² is h²/6 exactly
        let x2 = DiscreteField::from_fn(g.clone(), |p| p[0] * p[0]).unwrap();
        let h = 1.0 / 64.0;
        let err = quad_volume(&x2) - 1.0 / 3.0;
        assert!(err.abs() < 3e-4);
        assert!((err - h * h / 6.0).abs() < 1e-14);
    }

    #[test]
    fn boundary_quadrature() {
        let g = build_grid(&[1.0, 1.0], &[4, 4]).unwrap();
        let one = DiscreteField::constant(g.clone(), 1.0);
        assert!((quad_boundary(&one, BoundaryTag::Underground) - 3.0).abs() < 1e-14);
        let zero = DiscreteField::zeros(g.clone());
        assert_eq!(quad_boundary(&zero, BoundaryTag::Surface), 0.0);
        let g1 = build_grid(&[1.0], &[8]).unwrap();
        assert_eq!(quad_boundary(&DiscreteField::constant(g1, 1.0), BoundaryTag::Surface), 1.0);
    }

    #[test]
    fn field_rejects_bad_input() {
        let g = build_grid(&[1.0], &[4]).unwrap();
        assert!(DiscreteField::new(g.clone(), vec![0.0; 4]).is_err());
        assert!(DiscreteField::new(g, vec![0.0, 1.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn grid_hash_is_stable() {
        let a = build_grid(&[1.0, 1.0], &[8, 8]).unwrap();
        let b = build_grid(&[1.0, 1.0], &[8, 8]).unwrap();
        let c = build_grid(&[1.0, 1.0], &[8, 9]).unwrap();
        assert_eq!(a.grid_hash(), b.grid_hash());
        assert_ne!(a.grid_hash(), c.grid_hash());
    }
}
