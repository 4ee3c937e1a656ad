//! Fitted triangular meshes: generation, validation, IO and the shared
//! membrane curve.

mod delaunay;
mod distmesh;
mod io;

pub use delaunay::triangulate as delaunay_triangulate;
pub use distmesh::{generate_annulus_mesh, generate_circle_mesh, generate_star_mesh, star_radius};
pub use io::{read_mesh, write_mesh};

use crate::curve::CurveState;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("triangle {element} has non-positive signed area {area:.6e}")]
    InvertedElement { element: usize, area: f64 },
    #[error("boundary loop is not closed at position {position}")]
    OpenLoop { position: usize },
    #[error("boundary edge ({a}, {b}) is shared by {count} triangles")]
    NonManifoldBoundary { a: usize, b: usize, count: usize },
    #[error("mesh generation did not converge after {iterations} relaxation iterations")]
    NonConvergence { iterations: usize },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("mesh file {path}: {message}")]
    MalformedFile { path: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("interior and exterior meshes disagree on the shared curve at loop position {position}")]
    SharedCurveMismatch { position: usize },
}

/// Fitted triangulation of one region. Triangles are counter-clockwise.
/// `inner_boundary_loop` is the membrane curve; `outer_boundary_loop` is
/// non-empty only for the exterior annulus.
#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    pub node_coords: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub inner_boundary_loop: Vec<usize>,
    pub outer_boundary_loop: Vec<usize>,
}

impl Triangulation {
    pub fn node_count(&self) -> usize {
        self.node_coords.len()
    }

    pub fn element_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn signed_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.triangles[e];
        let p = &self.node_coords;
        0.5 * ((p[b][0] - p[a][0]) * (p[c][1] - p[a][1])
            - (p[c][0] - p[a][0]) * (p[b][1] - p[a][1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|e| self.signed_area(e)).sum()
    }

    /// Longest edge over all elements.
    pub fn max_diameter(&self) -> f64 {
        let mut h = 0.0f64;
        for t in &self.triangles {
            for k in 0..3 {
                let p = self.node_coords[t[k]];
                let q = self.node_coords[t[(k + 1) % 3]];
                h = h.max(((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt());
            }
        }
        h
    }

    pub fn min_edge(&self) -> f64 {
        let mut h = f64::INFINITY;
        for t in &self.triangles {
            for k in 0..3 {
                let p = self.node_coords[t[k]];
                let q = self.node_coords[t[(k + 1) % 3]];
                h = h.min(((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt());
            }
        }
        h
    }

    /// Signed area enclosed by a node loop (positive for CCW).
    pub fn loop_area(&self, loop_nodes: &[usize]) -> f64 {
        polygon_area(loop_nodes.iter().map(|&i| self.node_coords[i]))
    }

    /// Structural validation of the spec invariants: positive element
    /// areas, manifold boundary edges, closed simple loops, Euler formula.
    pub fn validate(&self) -> Result<(), MeshError> {
        for e in 0..self.triangles.len() {
            let a = self.signed_area(e);
            if !(a > 0.0) || !a.is_finite() {
                return Err(MeshError::InvertedElement { element: e, area: a });
            }
        }
        // edge incidence counts
        let mut edges = std::collections::HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *edges.entry(key).or_insert(0usize) += 1;
            }
        }
        let mut boundary_edges = std::collections::HashSet::new();
        for (&(a, b), &count) in &edges {
            if count > 2 {
                return Err(MeshError::NonManifoldBoundary { a, b, count });
            }
            if count == 1 {
                boundary_edges.insert((a, b));
            }
        }
        let mut check_loop = |nodes: &[usize]| -> Result<(), MeshError> {
            if nodes.is_empty() {
                return Ok(());
            }
            let mut seen = std::collections::HashSet::new();
            for (pos, window) in (0..nodes.len()).map(|i| (i, (nodes[i], nodes[(i + 1) % nodes.len()]))) {
                let (a, b) = window;
                if !seen.insert(a) {
                    return Err(MeshError::OpenLoop { position: pos });
                }
                let key = (a.min(b), a.max(b));
                if !boundary_edges.remove(&key) {
                    return Err(MeshError::OpenLoop { position: pos });
                }
            }
            Ok(())
        };
        check_loop(&self.inner_boundary_loop)?;
        check_loop(&self.outer_boundary_loop)?;
        if !boundary_edges.is_empty() {
            let (a, b) = *boundary_edges.iter().next().unwrap();
            return Err(MeshError::NonManifoldBoundary { a, b, count: 1 });
        }
        // Euler characteristic: disk = 1, annulus = 0
        let v = self.node_count() as i64;
        let e = edges.len() as i64;
        let f = self.element_count() as i64;
        let expect = if self.outer_boundary_loop.is_empty() { 1 } else { 0 };
        if v - e + f != expect {
            return Err(MeshError::InvalidGeometry(format!(
                "Euler characteristic {} (expected {expect})",
                v - e + f
            )));
        }
        Ok(())
    }
}

pub fn polygon_area(points: impl IntoIterator<Item = [f64; 2]>) -> f64 {
    let pts: Vec<[f64; 2]> = points.into_iter().collect();
    let n = pts.len();
    let mut acc = 0.0;
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        acc += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * acc
}

/// Interior and exterior meshes around one membrane curve.
///
/// `shared_curve_map[k]` is the exterior node index of the k-th node of the
/// interior boundary loop; the two copies must coincide bitwise.
#[derive(Debug, Clone)]
pub struct DomainPair {
    pub interior: Triangulation,
    pub exterior: Option<Triangulation>,
    pub shared_curve_map: Vec<usize>,
}

impl DomainPair {
    pub fn interior_only(interior: Triangulation) -> Self {
        Self {
            interior,
            exterior: None,
            shared_curve_map: Vec::new(),
        }
    }

    pub fn coupled(interior: Triangulation, exterior: Triangulation) -> Result<Self, MeshError> {
        let n = interior.inner_boundary_loop.len();
        if exterior.inner_boundary_loop.len() != n {
            return Err(MeshError::SharedCurveMismatch { position: 0 });
        }
        let mut map = Vec::with_capacity(n);
        for k in 0..n {
            let pi = interior.node_coords[interior.inner_boundary_loop[k]];
            let pe = exterior.node_coords[exterior.inner_boundary_loop[k]];
            if pi[0].to_bits() != pe[0].to_bits() || pi[1].to_bits() != pe[1].to_bits() {
                return Err(MeshError::SharedCurveMismatch { position: k });
            }
            map.push(exterior.inner_boundary_loop[k]);
        }
        Ok(Self {
            interior,
            exterior: Some(exterior),
            shared_curve_map: map,
        })
    }
}

/// Element quality summary.
#[derive(Debug, Clone, Copy)]
pub struct MeshQualityReport {
    pub min_angle_deg: f64,
    pub min_signed_area: f64,
    pub max_aspect_ratio: f64,
    pub element_count: usize,
    pub node_count: usize,
    pub boundary_node_count: usize,
}

/// Quality metrics: minimum corner angle, minimum signed area, and the
/// worst longest-edge to inscribed-diameter ratio (normalised so an
/// equilateral triangle scores 1).
pub fn mesh_quality(tri: &Triangulation) -> MeshQualityReport {
    let mut min_angle = f64::INFINITY;
    let mut min_area = f64::INFINITY;
    let mut max_ar = 0.0f64;
    for e in 0..tri.triangles.len() {
        let [a, b, c] = tri.triangles[e];
        let p = [tri.node_coords[a], tri.node_coords[b], tri.node_coords[c]];
        let area = tri.signed_area(e);
        min_area = min_area.min(area);
        let mut lengths = [0.0f64; 3];
        for k in 0..3 {
            let u = p[(k + 1) % 3];
            let v = p[(k + 2) % 3];
            lengths[k] = ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2)).sqrt();
        }
        for k in 0..3 {
            // angle at vertex k is opposite edge k
            let (la, lb, lc) = (lengths[k], lengths[(k + 1) % 3], lengths[(k + 2) % 3]);
            let cosv = ((lb * lb + lc * lc - la * la) / (2.0 * lb * lc)).clamp(-1.0, 1.0);
            min_angle = min_angle.min(cosv.acos().to_degrees());
        }
        if area > 0.0 {
            let s = 0.5 * (lengths[0] + lengths[1] + lengths[2]);
            let inradius = area / s;
            let longest = lengths.iter().fold(0.0f64, |m, &l| m.max(l));
            max_ar = max_ar.max(longest / (2.0 * 3.0f64.sqrt() * inradius));
        }
    }
    MeshQualityReport {
        min_angle_deg: min_angle,
        min_signed_area: min_area,
        max_aspect_ratio: max_ar,
        element_count: tri.element_count(),
        node_count: tri.node_count(),
        boundary_node_count: tri.inner_boundary_loop.len() + tri.outer_boundary_loop.len(),
    }
}

/// Extract the membrane curve from a mesh's inner boundary loop, oriented
/// counter-clockwise (positive enclosed area), with nodal geometry computed.
pub fn extract_curve(tri: &Triangulation) -> Result<CurveState, MeshError> {
    if tri.inner_boundary_loop.is_empty() {
        return Err(MeshError::InvalidGeometry(
            "mesh has no inner boundary loop".into(),
        ));
    }
    let mut loop_nodes = tri.inner_boundary_loop.clone();
    if tri.loop_area(&loop_nodes) < 0.0 {
        loop_nodes.reverse();
    }
    // closure check: consecutive loop nodes must be joined by mesh edges
    let mut edge_set = std::collections::HashSet::new();
    for t in &tri.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            edge_set.insert((a.min(b), a.max(b)));
        }
    }
    for i in 0..loop_nodes.len() {
        let a = loop_nodes[i];
        let b = loop_nodes[(i + 1) % loop_nodes.len()];
        if !edge_set.contains(&(a.min(b), a.max(b))) {
            return Err(MeshError::OpenLoop { position: i });
        }
    }
    let positions: Vec<[f64; 2]> = loop_nodes.iter().map(|&i| tri.node_coords[i]).collect();
    Ok(CurveState::from_positions(positions))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_right_triangle() -> Triangulation {
        Triangulation {
            node_coords: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            triangles: vec![[0, 1, 2]],
            inner_boundary_loop: vec![0, 1, 2],
            outer_boundary_loop: vec![],
        }
    }

    #[test]
    fn right_triangle_quality() {
        let tri = unit_right_triangle();
        tri.validate().unwrap();
        let q = mesh_quality(&tri);
        assert!((q.min_angle_deg - 45.0).abs() < 1e-12);
        assert!((q.min_signed_area - 0.5).abs() < 1e-15);
        assert_eq!(q.element_count, 1);
    }

    #[test]
    fn inverted_triangle_is_rejected() {
        let mut tri = unit_right_triangle();
        tri.triangles[0] = [0, 2, 1];
        let q = mesh_quality(&tri);
        assert!(q.min_signed_area < 0.0);
        match tri.validate() {
            Err(MeshError::InvertedElement { element: 0, .. }) => {}
            other => panic!("expected inverted element, got {other:?}"),
        }
    }

    #[test]
    fn polygon_area_unit_square() {
        let a = polygon_area([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
        assert!((a - 1.0).abs() < 1e-15);
    }
}
