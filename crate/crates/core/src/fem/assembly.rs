//! Assembly of the time-dependent P1 operators.
//!
//! Bulk matrices use analytic element integration for mass and stiffness and
//! a degree-2 Gauss rule where nodal velocity fields enter. Curve matrices
//! use 1D P1 closed forms and a 2-point Gauss rule per segment. The boundary
//! advection matrix and the surface advection matrix are built from nodal
//! values of the velocity mismatch, interpolated P1 along the curve, so both
//! vanish identically when the nodal mismatch vanishes and the surface
//! advection column sums telescope to zero around the closed curve.

use std::sync::Arc;

use super::quadrature::{SEG_GAUSS2, TRI_DEGREE2, TRI_DEGREE5};
use super::sparse::{SparseMatrix, SparsityPattern};
use super::FemError;
use crate::curve::CurveState;
use crate::mesh::Triangulation;

/// Whose outward normal the boundary advection matrix refers to.
///
/// The membrane curve stores the normal pointing out of the interior
/// region; the same curve seen from the exterior region has the opposite
/// outward normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryOrientation {
    InteriorOutward,
    ExteriorOutward,
}

impl BoundaryOrientation {
    fn sign(self) -> f64 {
        match self {
            BoundaryOrientation::InteriorOutward => 1.0,
            BoundaryOrientation::ExteriorOutward => -1.0,
        }
    }
}

/// Node-to-node adjacency pattern (with diagonal) shared by every bulk
/// operator assembled on `tri`.
pub fn bulk_pattern(tri: &Triangulation) -> Arc<SparsityPattern> {
    let n = tri.node_coords.len();
    let mut pairs = Vec::with_capacity(9 * tri.triangles.len() + n);
    for t in &tri.triangles {
        for &i in t {
            for &j in t {
                pairs.push((i, j));
            }
        }
    }
    for i in 0..n {
        pairs.push((i, i));
    }
    Arc::new(SparsityPattern::from_pairs(n, n, &mut pairs))
}

/// Cyclic tridiagonal pattern for operators on a closed curve of `n` nodes.
pub fn curve_pattern(n: usize) -> Arc<SparsityPattern> {
    let mut pairs = Vec::with_capacity(3 * n);
    for i in 0..n {
        let prev = (i + n - 1) % n;
        let next = (i + 1) % n;
        pairs.push((i, prev));
        pairs.push((i, i));
        pairs.push((i, next));
    }
    Arc::new(SparsityPattern::from_pairs(n, n, &mut pairs))
}

fn tri_geometry(
    tri: &Triangulation,
    positions: &[[f64; 2]],
    e: usize,
) -> Result<([usize; 3], [[f64; 2]; 3], f64), FemError> {
    let nodes = tri.triangles[e];
    let p = [
        positions[nodes[0]],
        positions[nodes[1]],
        positions[nodes[2]],
    ];
    let two_a = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    if !(two_a > 0.0) || !two_a.is_finite() {
        return Err(FemError::DegenerateElement {
            element: e,
            area: 0.5 * two_a,
        });
    }
    Ok((nodes, p, two_a))
}

/// P1 basis gradients on a straight triangle: grad phi_k = (b_k, c_k) / 2A.
fn p1_gradients(p: &[[f64; 2]; 3], two_a: f64) -> [[f64; 2]; 3] {
    let b = [
        p[1][1] - p[2][1],
        p[2][1] - p[0][1],
        p[0][1] - p[1][1],
    ];
    let c = [
        p[2][0] - p[1][0],
        p[0][0] - p[2][0],
        p[1][0] - p[0][0],
    ];
    [
        [b[0] / two_a, c[0] / two_a],
        [b[1] / two_a, c[1] / two_a],
        [b[2] / two_a, c[2] / two_a],
    ]
}

/// Bulk mass matrix, exact for P1: element block (A/12) [[2,1,1],[1,2,1],[1,1,2]].
pub fn assemble_mass(tri: &Triangulation, positions: &[[f64; 2]]) -> Result<SparseMatrix, FemError> {
    assemble_mass_in(&bulk_pattern(tri), tri, positions)
}

pub fn assemble_mass_in(
    pattern: &Arc<SparsityPattern>,
    tri: &Triangulation,
    positions: &[[f64; 2]],
) -> Result<SparseMatrix, FemError> {
    let mut m = SparseMatrix::zeros(pattern.clone());
    for e in 0..tri.triangles.len() {
        let (nodes, _p, two_a) = tri_geometry(tri, positions, e)?;
        let off_diag = two_a / 24.0;
        let diag = two_a / 12.0;
        for (li, &ni) in nodes.iter().enumerate() {
            for (lj, &nj) in nodes.iter().enumerate() {
                m.add_to(ni, nj, if li == lj { diag } else { off_diag });
            }
        }
    }
    Ok(m)
}

/// Bulk stiffness matrix with constant diffusivity `d`.
pub fn assemble_stiffness(
    tri: &Triangulation,
    positions: &[[f64; 2]],
    d: f64,
) -> Result<SparseMatrix, FemError> {
    assemble_stiffness_in(&bulk_pattern(tri), tri, positions, d)
}

pub fn assemble_stiffness_in(
    pattern: &Arc<SparsityPattern>,
    tri: &Triangulation,
    positions: &[[f64; 2]],
    d: f64,
) -> Result<SparseMatrix, FemError> {
    let mut k = SparseMatrix::zeros(pattern.clone());
    for e in 0..tri.triangles.len() {
        let (nodes, p, two_a) = tri_geometry(tri, positions, e)?;
        let g = p1_gradients(&p, two_a);
        let area = 0.5 * two_a;
        for (li, &ni) in nodes.iter().enumerate() {
            for (lj, &nj) in nodes.iter().enumerate() {
                k.add_to(ni, nj, d * area * (g[li][0] * g[lj][0] + g[li][1] * g[lj][1]));
            }
        }
    }
    Ok(k)
}

/// Bulk advection matrix: entries int phi_mu [(w - u) . grad phi_nu] dx with
/// nodal P1 velocities, integrated with the degree-2 rule (exact here).
pub fn assemble_advection_bulk(
    tri: &Triangulation,
    positions: &[[f64; 2]],
    w: &[[f64; 2]],
    u_material: &[[f64; 2]],
) -> Result<SparseMatrix, FemError> {
    assemble_advection_bulk_in(&bulk_pattern(tri), tri, positions, w, u_material)
}

pub fn assemble_advection_bulk_in(
    pattern: &Arc<SparsityPattern>,
    tri: &Triangulation,
    positions: &[[f64; 2]],
    w: &[[f64; 2]],
    u_material: &[[f64; 2]],
) -> Result<SparseMatrix, FemError> {
    if w.len() != positions.len() || u_material.len() != positions.len() {
        return Err(FemError::DimensionMismatch {
            context: format!(
                "advection velocities ({}, {}) vs {} nodes",
                w.len(),
                u_material.len(),
                positions.len()
            ),
        });
    }
    let mut bm = SparseMatrix::zeros(pattern.clone());
    for e in 0..tri.triangles.len() {
        let (nodes, p, two_a) = tri_geometry(tri, positions, e)?;
        let g = p1_gradients(&p, two_a);
        let area = 0.5 * two_a;
        // nodal velocity mismatch on this element
        let v: [[f64; 2]; 3] = [
            [
                w[nodes[0]][0] - u_material[nodes[0]][0],
                w[nodes[0]][1] - u_material[nodes[0]][1],
            ],
            [
                w[nodes[1]][0] - u_material[nodes[1]][0],
                w[nodes[1]][1] - u_material[nodes[1]][1],
            ],
            [
                w[nodes[2]][0] - u_material[nodes[2]][0],
                w[nodes[2]][1] - u_material[nodes[2]][1],
            ],
        ];
        let mut local = [[0.0f64; 3]; 3];
        for (bary, wq) in TRI_DEGREE2 {
            let vq = [
                bary[0] * v[0][0] + bary[1] * v[1][0] + bary[2] * v[2][0],
                bary[0] * v[0][1] + bary[1] * v[1][1] + bary[2] * v[2][1],
            ];
            for lmu in 0..3 {
                let phi_mu = bary[lmu];
                for lnu in 0..3 {
                    local[lnu][lmu] +=
                        wq * area * phi_mu * (vq[0] * g[lnu][0] + vq[1] * g[lnu][1]);
                }
            }
        }
        for (lnu, &nnu) in nodes.iter().enumerate() {
            for (lmu, &nmu) in nodes.iter().enumerate() {
                bm.add_to(nnu, nmu, local[lnu][lmu]);
            }
        }
    }
    Ok(bm)
}

/// Boundary advection matrix A_Gamma on the bulk index space.
///
/// The normal slip (w - u_Gamma) . n is sampled at curve nodes with the
/// nodal outward normal and interpolated P1 along the curve, so the matrix
/// is exactly zero whenever the nodal slip vanishes.
pub fn assemble_boundary_advection(
    pattern: &Arc<SparsityPattern>,
    tri: &Triangulation,
    positions: &[[f64; 2]],
    curve: &CurveState,
    w_bulk: &[[f64; 2]],
    u_gamma: &[[f64; 2]],
    orientation: BoundaryOrientation,
) -> Result<SparseMatrix, FemError> {
    let loop_nodes = &tri.inner_boundary_loop;
    let n = loop_nodes.len();
    if curve.len() != n || u_gamma.len() != n {
        return Err(FemError::DimensionMismatch {
            context: format!(
                "boundary loop {} vs curve {} vs u_gamma {}",
                n,
                curve.len(),
                u_gamma.len()
            ),
        });
    }
    let sign = orientation.sign();
    // nodal normal slip
    let slip: Vec<f64> = (0..n)
        .map(|i| {
            let b = loop_nodes[i];
            let dw = [w_bulk[b][0] - u_gamma[i][0], w_bulk[b][1] - u_gamma[i][1]];
            sign * (dw[0] * curve.normals[i][0] + dw[1] * curve.normals[i][1])
        })
        .collect();
    let mut a = SparseMatrix::zeros(pattern.clone());
    for i in 0..n {
        let j = (i + 1) % n;
        let (bi, bj) = (loop_nodes[i], loop_nodes[j]);
        let pi = positions[bi];
        let pj = positions[bj];
        let len = ((pj[0] - pi[0]).powi(2) + (pj[1] - pi[1]).powi(2)).sqrt();
        if len == 0.0 {
            return Err(FemError::ZeroLengthSegment { segment: i });
        }
        let mut local = [[0.0f64; 2]; 2];
        for (s, wq) in SEG_GAUSS2 {
            let phi = [1.0 - s, s];
            let sq = slip[i] * phi[0] + slip[j] * phi[1];
            for lnu in 0..2 {
                for lmu in 0..2 {
                    local[lnu][lmu] += wq * len * phi[lmu] * sq * phi[lnu];
                }
            }
        }
        let idx = [bi, bj];
        for lnu in 0..2 {
            for lmu in 0..2 {
                a.add_to(idx[lnu], idx[lmu], local[lnu][lmu]);
            }
        }
    }
    Ok(a)
}

/// Mass, stiffness and advection operators on the closed curve.
pub struct SurfaceOperators {
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    pub advection: SparseMatrix,
}

/// Assemble M_s, K_s (diffusivity `d`) and B_s on the curve.
///
/// B_s entries are int (phi_mu theta)' phi_nu ds per segment, where theta is
/// the P1 interpolant of the nodal tangential speed (w - u_Gamma) . t. Its
/// column sums telescope to zero around the closed curve.
pub fn assemble_surface_operators(
    curve: &CurveState,
    d: f64,
    w_curve: &[[f64; 2]],
    u_gamma: &[[f64; 2]],
) -> Result<SurfaceOperators, FemError> {
    let n = curve.len();
    if w_curve.len() != n || u_gamma.len() != n {
        return Err(FemError::DimensionMismatch {
            context: format!(
                "curve {} vs w {} vs u_gamma {}",
                n,
                w_curve.len(),
                u_gamma.len()
            ),
        });
    }
    let pattern = curve_pattern(n);
    let mut mass = SparseMatrix::zeros(pattern.clone());
    let mut stiffness = SparseMatrix::zeros(pattern.clone());
    let mut advection = SparseMatrix::zeros(pattern.clone());

    // nodal tangential speed of the mesh relative to the material
    let theta: Vec<f64> = (0..n)
        .map(|i| {
            let dw = [
                w_curve[i][0] - u_gamma[i][0],
                w_curve[i][1] - u_gamma[i][1],
            ];
            dw[0] * curve.tangents[i][0] + dw[1] * curve.tangents[i][1]
        })
        .collect();

    for i in 0..n {
        let j = (i + 1) % n;
        let pi = curve.positions[i];
        let pj = curve.positions[j];
        let len = ((pj[0] - pi[0]).powi(2) + (pj[1] - pi[1]).powi(2)).sqrt();
        if len == 0.0 {
            return Err(FemError::ZeroLengthSegment { segment: i });
        }
        // mass (len/6) [[2,1],[1,2]], stiffness (d/len) [[1,-1],[-1,1]]
        mass.add_to(i, i, len / 3.0);
        mass.add_to(j, j, len / 3.0);
        mass.add_to(i, j, len / 6.0);
        mass.add_to(j, i, len / 6.0);
        stiffness.add_to(i, i, d / len);
        stiffness.add_to(j, j, d / len);
        stiffness.add_to(i, j, -d / len);
        stiffness.add_to(j, i, -d / len);
        // advection: 2-point Gauss of (phi_mu theta)' phi_nu; the length
        // cancels between the arclength derivative and the measure.
        let th = [theta[i], theta[j]];
        let mut local = [[0.0f64; 2]; 2];
        for (s, wq) in SEG_GAUSS2 {
            let phi = [1.0 - s, s];
            // d/ds of phi_mu * theta_h, times len (theta_h = th0 + (th1-th0) s)
            let dth = th[1] - th[0];
            let dprod = [
                -(th[0] + dth * s) + (1.0 - s) * dth,
                (th[0] + dth * s) + s * dth,
            ];
            for lnu in 0..2 {
                for lmu in 0..2 {
                    local[lnu][lmu] += wq * dprod[lmu] * phi[lnu];
                }
            }
        }
        let idx = [i, j];
        for lnu in 0..2 {
            for lmu in 0..2 {
                advection.add_to(idx[lnu], idx[lmu], local[lnu][lmu]);
            }
        }
    }
    Ok(SurfaceOperators {
        mass,
        stiffness,
        advection,
    })
}

/// Quadrature degree for load assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadDegree {
    Two,
    Five,
}

/// Bulk load vector [F]_nu = int f(x, fields(x)) phi_nu dx.
///
/// `fields` are nodal vectors interpolated to quadrature points and passed
/// to the callback, so nonlinear kinetics are evaluated pointwise.
pub fn assemble_load(
    tri: &Triangulation,
    positions: &[[f64; 2]],
    fields: &[&[f64]],
    degree: QuadDegree,
    f: &mut dyn FnMut([f64; 2], &[f64]) -> f64,
) -> Result<Vec<f64>, FemError> {
    let mut out = vec![0.0; positions.len()];
    let rule: &[([f64; 3], f64)] = match degree {
        QuadDegree::Two => &TRI_DEGREE2,
        QuadDegree::Five => &TRI_DEGREE5,
    };
    let mut vals = vec![0.0; fields.len()];
    for e in 0..tri.triangles.len() {
        let (nodes, p, two_a) = tri_geometry(tri, positions, e)?;
        let area = 0.5 * two_a;
        for &(bary, wq) in rule {
            let x = [
                bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
                bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
            ];
            for (fi, field) in fields.iter().enumerate() {
                vals[fi] = bary[0] * field[nodes[0]]
                    + bary[1] * field[nodes[1]]
                    + bary[2] * field[nodes[2]];
            }
            let fv = f(x, &vals);
            for l in 0..3 {
                out[nodes[l]] += wq * area * fv * bary[l];
            }
        }
    }
    Ok(out)
}

/// Curve load vector with 2-point Gauss per segment.
pub fn assemble_surface_load(
    curve: &CurveState,
    fields: &[&[f64]],
    f: &mut dyn FnMut([f64; 2], &[f64]) -> f64,
) -> Result<Vec<f64>, FemError> {
    let n = curve.len();
    let mut out = vec![0.0; n];
    let mut vals = vec![0.0; fields.len()];
    for i in 0..n {
        let j = (i + 1) % n;
        let pi = curve.positions[i];
        let pj = curve.positions[j];
        let len = ((pj[0] - pi[0]).powi(2) + (pj[1] - pi[1]).powi(2)).sqrt();
        if len == 0.0 {
            return Err(FemError::ZeroLengthSegment { segment: i });
        }
        for (s, wq) in SEG_GAUSS2 {
            let phi = [1.0 - s, s];
            let x = [
                phi[0] * pi[0] + phi[1] * pj[0],
                phi[0] * pi[1] + phi[1] * pj[1],
            ];
            for (fi, field) in fields.iter().enumerate() {
                vals[fi] = phi[0] * field[i] + phi[1] * field[j];
            }
            let fv = f(x, &vals);
            out[i] += wq * len * fv * phi[0];
            out[j] += wq * len * fv * phi[1];
        }
    }
    Ok(out)
}
