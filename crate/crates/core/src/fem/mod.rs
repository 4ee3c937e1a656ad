//! P1 finite element operators on bulk triangulations and the closed
//! membrane curve: sparse storage, quadrature, and assembly.
//!
//! All bulk operators assembled for one mesh share a single sparsity
//! pattern (node-to-node adjacency including the diagonal), so matrices can
//! be combined entrywise when forming time-stepping systems. Assembly is
//! deterministic: elements are visited in index order and contributions
//! accumulated in a fixed order, so assembling twice from identical inputs
//! yields bitwise-identical matrices.

mod assembly;
pub mod quadrature;
mod sparse;

pub use assembly::{
    assemble_advection_bulk, assemble_advection_bulk_in, assemble_boundary_advection,
    assemble_load, assemble_mass, assemble_mass_in, assemble_stiffness, assemble_stiffness_in,
    assemble_surface_load, assemble_surface_operators, bulk_pattern, curve_pattern,
    BoundaryOrientation, QuadDegree, SurfaceOperators,
};
pub use sparse::{SparseMatrix, SparsityPattern};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("element {element} is degenerate (signed area {area:.3e})")]
    DegenerateElement { element: usize, area: f64 },
    #[error("curve segment {segment} has zero length")]
    ZeroLengthSegment { segment: usize },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
}

/// Region a nodal field lives on. Bulk fields carry mol um^-3, surface
/// fields mol um^-2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    InteriorBulk,
    ExteriorBulk,
    Surface,
}

/// Nodal P1 coefficient vector tagged with the region it belongs to.
#[derive(Debug, Clone)]
pub struct FieldVector {
    pub region: Region,
    pub values: Vec<f64>,
}

impl FieldVector {
    pub fn new(region: Region, values: Vec<f64>) -> Self {
        Self { region, values }
    }

    pub fn constant(region: Region, value: f64, len: usize) -> Self {
        Self {
            region,
            values: vec![value; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl std::ops::Deref for FieldVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// Mesh positions at two consecutive time levels together with the
/// piecewise-constant-in-time ALE velocity `w = (next - prev) / dt`.
#[derive(Debug, Clone)]
pub struct AleFrame {
    pub positions_prev: Vec<[f64; 2]>,
    pub positions_next: Vec<[f64; 2]>,
    pub dt: f64,
    pub velocity: Vec<[f64; 2]>,
}

impl AleFrame {
    pub fn new(positions_prev: Vec<[f64; 2]>, positions_next: Vec<[f64; 2]>, dt: f64) -> Self {
        assert_eq!(positions_prev.len(), positions_next.len());
        assert!(dt > 0.0, "AleFrame requires dt > 0");
        let velocity = positions_prev
            .iter()
            .zip(&positions_next)
            .map(|(p, q)| [(q[0] - p[0]) / dt, (q[1] - p[1]) / dt])
            .collect();
        Self {
            positions_prev,
            positions_next,
            dt,
            velocity,
        }
    }

    /// Frame of a mesh at rest: both levels equal, velocity identically zero.
    pub fn stationary(positions: Vec<[f64; 2]>, dt: f64) -> Self {
        let n = positions.len();
        Self {
            positions_prev: positions.clone(),
            positions_next: positions,
            dt,
            velocity: vec![[0.0, 0.0]; n],
        }
    }
}
