//! Moving-mesh PDE: bulk node motion by a backward-Euler P1 solve of the
//! gradient-flow equations, with explicitly lagged coefficients recovered
//! to continuous nodal fields by patch averaging.
//!
//! The computational mesh is the initial triangulation; physical positions
//! are unknowns per node. One step solves, for each coordinate component,
//!
//!   (tau_hat/dt) M_p x + K_a x + K_c x + K_b x - C_de x = (tau_hat/dt) M_p x_n
//!
//! with Dirichlet rows pinned to the supplied boundary positions. The
//! monitor function defaults to one (no adaptivity), which zeroes the d and
//! e coefficients.

use crate::fem::quadrature::TRI_DEGREE2;
use crate::fem::{bulk_pattern, SparseMatrix};
use crate::mesh::Triangulation;
use crate::solver::{LuFactor, SolveError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MmpdeError {
    #[error("mesh map is tangled: element {element} has Jacobian {jacobian:.6e}")]
    Tangled { element: usize, jacobian: f64 },
    #[error("node {node} has no adjacent elements")]
    IsolatedNode { node: usize },
    #[error("dirichlet data missing for boundary node {node}")]
    MissingDirichlet { node: usize },
    #[error("mmpde linear solve failed: {0}")]
    Solve(#[from] SolveError),
}

/// Relaxation time, step size, and the (disabled by default) monitor and
/// balancing hooks.
pub struct MmpdeParams {
    pub tau_hat: f64,
    pub dt: f64,
    /// Nodal monitor values on the computational mesh; `None` means M = 1.
    pub monitor: Option<Vec<f64>>,
    /// Nodal balancing values p_hat = 1 / P_hat; `None` means 1.
    pub balancing: Option<Vec<f64>>,
}

impl MmpdeParams {
    pub fn new(tau_hat: f64, dt: f64) -> Self {
        assert!(tau_hat > 0.0, "mesh relaxation time must be positive");
        assert!(dt > 0.0);
        Self {
            tau_hat,
            dt,
            monitor: None,
            balancing: None,
        }
    }

    /// Spec default: 0.1 times the squared domain diameter.
    pub fn default_tau_hat(domain_diameter: f64) -> f64 {
        0.1 * domain_diameter * domain_diameter
    }
}

/// Piecewise-constant MMPDE coefficients and map Jacobian per element.
#[derive(Debug, Clone)]
pub struct MmpdeCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub jacobian: Vec<f64>,
}

/// P1 derivatives of the map (x, y)(xi, eta) per element of the
/// computational mesh, then the coefficient formulas
/// a = (x_eta^2 + y_eta^2) / (M J^2), b = -2 (x_xi x_eta + y_xi y_eta) / (M J^2),
/// c = (x_xi^2 + y_xi^2) / (M J^2), and the monitor-gradient terms d, e.
pub fn compute_coefficients(
    comp: &Triangulation,
    phys: &[[f64; 2]],
    monitor: Option<&[f64]>,
) -> Result<MmpdeCoefficients, MmpdeError> {
    let ne = comp.triangles.len();
    let mut out = MmpdeCoefficients {
        a: vec![0.0; ne],
        b: vec![0.0; ne],
        c: vec![0.0; ne],
        d: vec![0.0; ne],
        e: vec![0.0; ne],
        jacobian: vec![0.0; ne],
    };
    for el in 0..ne {
        let nodes = comp.triangles[el];
        let grads = comp_gradients(comp, el);
        let mut x_xi = 0.0;
        let mut x_eta = 0.0;
        let mut y_xi = 0.0;
        let mut y_eta = 0.0;
        for (k, &nk) in nodes.iter().enumerate() {
            x_xi += phys[nk][0] * grads[k][0];
            x_eta += phys[nk][0] * grads[k][1];
            y_xi += phys[nk][1] * grads[k][0];
            y_eta += phys[nk][1] * grads[k][1];
        }
        let j = x_xi * y_eta - x_eta * y_xi;
        if !(j > 0.0) {
            return Err(MmpdeError::Tangled {
                element: el,
                jacobian: j,
            });
        }
        let (m_val, m_xi, m_eta) = match monitor {
            None => (1.0, 0.0, 0.0),
            Some(mv) => {
                let val = (mv[nodes[0]] + mv[nodes[1]] + mv[nodes[2]]) / 3.0;
                let mut mx = 0.0;
                let mut me = 0.0;
                for (k, &nk) in nodes.iter().enumerate() {
                    mx += mv[nk] * grads[k][0];
                    me += mv[nk] * grads[k][1];
                }
                (val, mx, me)
            }
        };
        let j2 = j * j;
        out.a[el] = (x_eta * x_eta + y_eta * y_eta) / (m_val * j2);
        out.b[el] = -2.0 * (x_xi * x_eta + y_xi * y_eta) / (m_val * j2);
        out.c[el] = (x_xi * x_xi + y_xi * y_xi) / (m_val * j2);
        let m2 = m_val * m_val;
        out.d[el] = (m_xi * (x_eta * x_eta + y_eta * y_eta)
            - m_eta * (x_xi * x_eta + y_xi * y_eta))
            / (m2 * j2);
        out.e[el] = (m_eta * (x_xi * x_xi + y_xi * y_xi)
            - m_xi * (x_xi * x_eta + y_xi * y_eta))
            / (m2 * j2);
        out.jacobian[el] = j;
    }
    Ok(out)
}

/// P1 basis gradients with respect to the computational coordinates.
fn comp_gradients(comp: &Triangulation, el: usize) -> [[f64; 2]; 3] {
    let [i, j, k] = comp.triangles[el];
    let p = [
        comp.node_coords[i],
        comp.node_coords[j],
        comp.node_coords[k],
    ];
    let two_a = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    [
        [(p[1][1] - p[2][1]) / two_a, (p[2][0] - p[1][0]) / two_a],
        [(p[2][1] - p[0][1]) / two_a, (p[0][0] - p[2][0]) / two_a],
        [(p[0][1] - p[1][1]) / two_a, (p[1][0] - p[0][0]) / two_a],
    ]
}

/// Area-weighted patch averaging of an elementwise field to a continuous
/// nodal P1 field on the computational mesh.
pub fn recover_coefficients(
    values: &[f64],
    comp: &Triangulation,
) -> Result<Vec<f64>, MmpdeError> {
    let n = comp.node_coords.len();
    let mut acc = vec![0.0f64; n];
    let mut weight = vec![0.0f64; n];
    for (el, t) in comp.triangles.iter().enumerate() {
        let area = comp_area(comp, el);
        for &node in t {
            acc[node] += area * values[el];
            weight[node] += area;
        }
    }
    for i in 0..n {
        if weight[i] == 0.0 {
            return Err(MmpdeError::IsolatedNode { node: i });
        }
        acc[i] /= weight[i];
    }
    Ok(acc)
}

fn comp_area(comp: &Triangulation, el: usize) -> f64 {
    let [i, j, k] = comp.triangles[el];
    let p = [
        comp.node_coords[i],
        comp.node_coords[j],
        comp.node_coords[k],
    ];
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

/// One backward-Euler step of the mesh equations.
///
/// `dirichlet` supplies the physical position at t^{n+1} for every node of
/// both boundary loops. Returns the new positions, or an error if the
/// updated map is tangled (callers can retry with a smaller step).
pub fn mmpde_step(
    comp: &Triangulation,
    phys_n: &[[f64; 2]],
    dirichlet: &[(usize, [f64; 2])],
    params: &MmpdeParams,
) -> Result<Vec<[f64; 2]>, MmpdeError> {
    let pattern = bulk_pattern(comp);
    let ordering = crate::solver::BandOrdering::for_pattern(&pattern);
    mmpde_step_cached(comp, phys_n, dirichlet, params, &pattern, &ordering)
}

/// The step with a caller-cached pattern and band ordering (they depend
/// only on the fixed mesh connectivity).
pub fn mmpde_step_cached(
    comp: &Triangulation,
    phys_n: &[[f64; 2]],
    dirichlet: &[(usize, [f64; 2])],
    params: &MmpdeParams,
    pattern: &std::sync::Arc<crate::fem::SparsityPattern>,
    ordering: &crate::solver::BandOrdering,
) -> Result<Vec<[f64; 2]>, MmpdeError> {
    let n = comp.node_coords.len();
    let coeffs = compute_coefficients(comp, phys_n, params.monitor.as_deref())?;
    let a_nodal = recover_coefficients(&coeffs.a, comp)?;
    let b_nodal = recover_coefficients(&coeffs.b, comp)?;
    let c_nodal = recover_coefficients(&coeffs.c, comp)?;
    let d_nodal = recover_coefficients(&coeffs.d, comp)?;
    let e_nodal = recover_coefficients(&coeffs.e, comp)?;

    let is_boundary = {
        let mut flags = vec![false; n];
        for &i in comp
            .inner_boundary_loop
            .iter()
            .chain(comp.outer_boundary_loop.iter())
        {
            flags[i] = true;
        }
        flags
    };
    let mut dirichlet_pos: Vec<Option<[f64; 2]>> = vec![None; n];
    for &(i, p) in dirichlet {
        dirichlet_pos[i] = Some(p);
    }
    for i in 0..n {
        if is_boundary[i] && dirichlet_pos[i].is_none() {
            return Err(MmpdeError::MissingDirichlet { node: i });
        }
    }

    let mut a_mat = SparseMatrix::zeros(pattern.clone());
    let mut mass_p = SparseMatrix::zeros(pattern.clone());
    let scale_t = params.tau_hat / params.dt;

    for el in 0..comp.triangles.len() {
        let nodes = comp.triangles[el];
        let grads = comp_gradients(comp, el);
        let area = comp_area(comp, el);
        // nodal values on this element
        let av = nodes.map(|i| a_nodal[i]);
        let bv = nodes.map(|i| b_nodal[i]);
        let cv = nodes.map(|i| c_nodal[i]);
        let dv = nodes.map(|i| d_nodal[i]);
        let ev = nodes.map(|i| e_nodal[i]);
        let pv = nodes.map(|i| {
            params
                .balancing
                .as_ref()
                .map(|f| f[i])
                .unwrap_or(1.0)
        });
        // P1 gradients of the coefficient fields (constant per element)
        let grad_of = |vals: [f64; 3]| {
            let mut g = [0.0f64; 2];
            for k in 0..3 {
                g[0] += vals[k] * grads[k][0];
                g[1] += vals[k] * grads[k][1];
            }
            g
        };
        let ga = grad_of(av);
        let gb = grad_of(bv);
        let gc = grad_of(cv);

        let mut local = [[0.0f64; 3]; 3];
        let mut local_m = [[0.0f64; 3]; 3];
        for (bary, wq) in TRI_DEGREE2 {
            let interp = |vals: [f64; 3]| bary[0] * vals[0] + bary[1] * vals[1] + bary[2] * vals[2];
            let aq = interp(av);
            let bq = interp(bv);
            let cq = interp(cv);
            let dq = interp(dv);
            let eq = interp(ev);
            let pq = interp(pv);
            for nu in 0..3 {
                let phi_nu = bary[nu];
                let g_nu = grads[nu];
                // (a v)_xi = a_xi phi + a phi_xi, same for the others
                let av_xi = ga[0] * phi_nu + aq * g_nu[0];
                let cv_eta = gc[1] * phi_nu + cq * g_nu[1];
                let bv_xi = gb[0] * phi_nu + bq * g_nu[0];
                let bv_eta = gb[1] * phi_nu + bq * g_nu[1];
                for mu in 0..3 {
                    let g_mu = grads[mu];
                    let mut val = g_mu[0] * av_xi + g_mu[1] * cv_eta;
                    val += 0.5 * (g_mu[0] * bv_eta + g_mu[1] * bv_xi);
                    // move the first-order terms to the left-hand side
                    val -= (dq * g_mu[0] + eq * g_mu[1]) * phi_nu;
                    local[nu][mu] += wq * area * val;
                    local_m[nu][mu] += wq * area * scale_t * pq * bary[mu] * phi_nu;
                }
            }
        }
        for (lnu, &nnu) in nodes.iter().enumerate() {
            for (lmu, &nmu) in nodes.iter().enumerate() {
                a_mat.add_to(nnu, nmu, local[lnu][lmu]);
                mass_p.add_to(nnu, nmu, local_m[lnu][lmu]);
            }
        }
    }

    // system matrix and rhs (same matrix for both components)
    let mut system = SparseMatrix::linear_combination(&[(1.0, &mass_p), (1.0, &a_mat)]);
    let mut rhs_x = vec![0.0f64; n];
    let mut rhs_y = vec![0.0f64; n];
    let xs: Vec<f64> = phys_n.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = phys_n.iter().map(|p| p[1]).collect();
    mass_p.matvec_acc(1.0, &xs, &mut rhs_x);
    mass_p.matvec_acc(1.0, &ys, &mut rhs_y);
    for i in 0..n {
        if let Some(p) = dirichlet_pos[i] {
            system.set_identity_row(i);
            rhs_x[i] = p[0];
            rhs_y[i] = p[1];
        }
    }

    let factor = LuFactor::with_ordering(&system, ordering)?;
    let sol_x = factor.solve(&rhs_x)?;
    let sol_y = factor.solve(&rhs_y)?;
    let phys_next: Vec<[f64; 2]> = (0..n).map(|i| [sol_x[i], sol_y[i]]).collect();

    // never return a tangled mesh
    let check = compute_coefficients(comp, &phys_next, None)?;
    debug_assert!(check.jacobian.iter().all(|&j| j > 0.0));
    Ok(phys_next)
}

/// Dirichlet data for the outer boundary of the exterior mesh: the outer
/// loop is rigidly translated by the centroid shift of the cell so the
/// interior region stays centred.
pub fn translate_exterior_frame(
    outer_positions: &[[f64; 2]],
    centroid_shift: [f64; 2],
) -> Vec<[f64; 2]> {
    outer_positions
        .iter()
        .map(|p| [p[0] + centroid_shift[0], p[1] + centroid_shift[1]])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_mesh(n: usize) -> Triangulation {
        // structured triangulation of the unit square
        let mut node_coords = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                node_coords.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut triangles = Vec::new();
        for j in 0..n {
            for i in 0..n {
                triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        let mut boundary = Vec::new();
        for i in 0..n {
            boundary.push(idx(i, 0));
        }
        for j in 0..n {
            boundary.push(idx(n, j));
        }
        for i in (1..=n).rev() {
            boundary.push(idx(i, n));
        }
        for j in (1..=n).rev() {
            boundary.push(idx(0, j));
        }
        Triangulation {
            node_coords,
            triangles,
            inner_boundary_loop: boundary,
            outer_boundary_loop: vec![],
        }
    }

    #[test]
    fn identity_map_coefficients() {
        let mesh = square_mesh(4);
        let coeffs = compute_coefficients(&mesh, &mesh.node_coords, None).unwrap();
        for el in 0..mesh.triangles.len() {
            assert!((coeffs.a[el] - 1.0).abs() < 1e-14);
            assert!((coeffs.c[el] - 1.0).abs() < 1e-14);
            assert!(coeffs.b[el].abs() < 1e-14);
            assert!(coeffs.d[el].abs() < 1e-14);
            assert!(coeffs.e[el].abs() < 1e-14);
            assert!((coeffs.jacobian[el] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn uniform_dilation_coefficients() {
        // x = 2 xi, y = 2 eta: J = 4, a = c = 4 / 16 = 0.25, b = 0
        let mesh = square_mesh(3);
        let phys: Vec<[f64; 2]> = mesh
            .node_coords
            .iter()
            .map(|p| [2.0 * p[0], 2.0 * p[1]])
            .collect();
        let coeffs = compute_coefficients(&mesh, &phys, None).unwrap();
        for el in 0..mesh.triangles.len() {
            assert!((coeffs.jacobian[el] - 4.0).abs() < 1e-13);
            assert!((coeffs.a[el] - 0.25).abs() < 1e-14);
            assert!((coeffs.c[el] - 0.25).abs() < 1e-14);
            assert!(coeffs.b[el].abs() < 1e-14);
        }
    }

    #[test]
    fn random_affine_map_has_constant_coefficients() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mesh = square_mesh(5);
        // random orientation-preserving affine map
        let (m11, m12, m21): (f64, f64, f64) =
            (1.0 + rng.gen::<f64>(), rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        let m22 = 1.0 + rng.gen::<f64>();
        let phys: Vec<[f64; 2]> = mesh
            .node_coords
            .iter()
            .map(|p| {
                [
                    m11 * p[0] + m12 * p[1] + 0.3,
                    m21 * p[0] + m22 * p[1] - 0.7,
                ]
            })
            .collect();
        let coeffs = compute_coefficients(&mesh, &phys, None).unwrap();
        for el in 1..mesh.triangles.len() {
            assert!((coeffs.a[el] - coeffs.a[0]).abs() < 1e-13);
            assert!((coeffs.b[el] - coeffs.b[0]).abs() < 1e-13);
            assert!((coeffs.c[el] - coeffs.c[0]).abs() < 1e-13);
        }
    }

    #[test]
    fn tangled_map_is_reported() {
        let mesh = square_mesh(2);
        let mut phys = mesh.node_coords.clone();
        // fold the centre node far outside
        phys[4] = [3.0, 3.0];
        match compute_coefficients(&mesh, &phys, None) {
            Err(MmpdeError::Tangled { .. }) => {}
            other => panic!("expected tangling, got {other:?}"),
        }
    }

    #[test]
    fn recovery_preserves_constants_and_averages() {
        let mesh = square_mesh(4);
        let ne = mesh.triangles.len();
        let constant = vec![2.5; ne];
        let nodal = recover_coefficients(&constant, &mesh).unwrap();
        for v in &nodal {
            assert!((v - 2.5).abs() < 1e-14);
        }
        // checkerboard +-1: interior nodal values strictly inside (-1, 1)
        let checker: Vec<f64> = (0..ne).map(|e| if e % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let nodal = recover_coefficients(&checker, &mesh).unwrap();
        let boundary: std::collections::HashSet<usize> =
            mesh.inner_boundary_loop.iter().copied().collect();
        for i in 0..mesh.node_count() {
            if !boundary.contains(&i) {
                assert!(nodal[i].abs() < 1.0, "node {i}: {}", nodal[i]);
            }
        }
    }

    #[test]
    fn relaxation_returns_perturbed_interior_to_identity() {
        use rand::{Rng, SeedableRng};
        let mesh = square_mesh(6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let boundary: std::collections::HashSet<usize> =
            mesh.inner_boundary_loop.iter().copied().collect();
        let mut phys = mesh.node_coords.clone();
        let h = 1.0 / 6.0;
        for (i, p) in phys.iter_mut().enumerate() {
            if !boundary.contains(&i) {
                p[0] += 0.2 * h * (rng.gen::<f64>() - 0.5);
                p[1] += 0.2 * h * (rng.gen::<f64>() - 0.5);
            }
        }
        let dirichlet: Vec<(usize, [f64; 2])> = mesh
            .inner_boundary_loop
            .iter()
            .map(|&i| (i, mesh.node_coords[i]))
            .collect();
        let params = MmpdeParams::new(0.01, 0.05);
        for _ in 0..300 {
            phys = mmpde_step(&mesh, &phys, &dirichlet, &params).unwrap();
        }
        let max_err = phys
            .iter()
            .zip(&mesh.node_coords)
            .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-6, "max displacement from identity {max_err}");
    }

    #[test]
    fn rigid_translation_equivariance() {
        let mesh = square_mesh(5);
        let shift = [0.37, -0.12];
        let dirichlet_id: Vec<(usize, [f64; 2])> = mesh
            .inner_boundary_loop
            .iter()
            .map(|&i| (i, mesh.node_coords[i]))
            .collect();
        let dirichlet_shifted: Vec<(usize, [f64; 2])> = dirichlet_id
            .iter()
            .map(|&(i, p)| (i, [p[0] + shift[0], p[1] + shift[1]]))
            .collect();
        let params = MmpdeParams::new(0.1, 0.01);
        let step_id = mmpde_step(&mesh, &mesh.node_coords, &dirichlet_id, &params).unwrap();
        let shifted_start: Vec<[f64; 2]> = mesh
            .node_coords
            .iter()
            .map(|p| [p[0] + shift[0], p[1] + shift[1]])
            .collect();
        let step_shifted =
            mmpde_step(&mesh, &shifted_start, &dirichlet_shifted, &params).unwrap();
        for i in 0..mesh.node_count() {
            assert!((step_shifted[i][0] - step_id[i][0] - shift[0]).abs() < 1e-12);
            assert!((step_shifted[i][1] - step_id[i][1] - shift[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_is_a_fixed_point() {
        let mesh = square_mesh(5);
        let dirichlet: Vec<(usize, [f64; 2])> = mesh
            .inner_boundary_loop
            .iter()
            .map(|&i| (i, mesh.node_coords[i]))
            .collect();
        let params = MmpdeParams::new(0.5, 0.01);
        let next = mmpde_step(&mesh, &mesh.node_coords, &dirichlet, &params).unwrap();
        for i in 0..mesh.node_count() {
            let d = ((next[i][0] - mesh.node_coords[i][0]).powi(2)
                + (next[i][1] - mesh.node_coords[i][1]).powi(2))
            .sqrt();
            assert!(d < 1e-12, "node {i} moved by {d}");
        }
    }

    #[test]
    fn exterior_frame_translation() {
        let outer = crate::curve::circle_polygon(10.0, 16, 0.0);
        let shifted = translate_exterior_frame(&outer, [1.0, 0.0]);
        for (p, q) in outer.iter().zip(&shifted) {
            assert_eq!(q[0], p[0] + 1.0);
            assert_eq!(q[1], p[1]);
        }
        let same = translate_exterior_frame(&outer, [0.0, 0.0]);
        assert_eq!(same, outer);
    }
}
