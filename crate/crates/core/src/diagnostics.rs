//! Mass ledgers, conservation errors, error norms against exact solutions,
//! convergence tables, and mesh telemetry.

use crate::fem::quadrature::TRI_DEGREE5;
use crate::fem::SparseMatrix;
use crate::mesh::Triangulation;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("dimension mismatch: matrix is {rows}x{cols}, vector has {len} entries")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        len: usize,
    },
}

/// Per-step mass totals of the interior system.
#[derive(Debug, Clone)]
pub struct MassLedger {
    pub time: f64,
    pub bulk_totals: Vec<f64>,
    pub surface_totals: Vec<f64>,
    pub grand_total: f64,
}

impl MassLedger {
    /// Grand total accumulated in a fixed order (bulk species first, then
    /// surface species) so repeated evaluation is bitwise reproducible.
    pub fn new(time: f64, bulk_totals: Vec<f64>, surface_totals: Vec<f64>) -> Self {
        let mut grand_total = 0.0;
        for v in &bulk_totals {
            grand_total += v;
        }
        for v in &surface_totals {
            grand_total += v;
        }
        Self {
            time,
            bulk_totals,
            surface_totals,
            grand_total,
        }
    }
}

/// Total amount e^T M C of a nodal field.
pub fn total_mass(m: &SparseMatrix, c: &[f64]) -> Result<f64, DiagnosticsError> {
    if c.len() != m.n_cols() || m.n_rows() != m.n_cols() {
        return Err(DiagnosticsError::DimensionMismatch {
            rows: m.n_rows(),
            cols: m.n_cols(),
            len: c.len(),
        });
    }
    Ok(total_mass_matrix(m, c))
}

/// Infallible form used internally where dimensions are known to agree.
pub fn total_mass_matrix(m: &SparseMatrix, c: &[f64]) -> f64 {
    let mut acc = 0.0;
    let row_ptr = m.row_ptr();
    let col_idx = m.col_idx();
    let values = m.values();
    for i in 0..m.n_rows() {
        for off in row_ptr[i]..row_ptr[i + 1] {
            acc += values[off] * c[col_idx[off]];
        }
    }
    acc
}

/// Absolute and relative drift between two consecutive ledgers.
pub fn conservation_error(prev: &MassLedger, next: &MassLedger) -> (f64, f64) {
    let abs = (next.grand_total - prev.grand_total).abs();
    let rel = if prev.grand_total != 0.0 {
        abs / prev.grand_total.abs()
    } else {
        abs
    };
    (abs, rel)
}

/// L2 and Linf errors of a P1 field against an exact solution.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub l2: Vec<f64>,
    pub linf: Vec<f64>,
    pub mesh_h: f64,
    pub dof: usize,
}

/// Gauss-point error norms with a degree-5 rule: L2 from the weighted
/// squares, Linf as the max over all quadrature points.
pub fn error_norms(
    comp: &Triangulation,
    positions: &[[f64; 2]],
    fields: &[&[f64]],
    time: f64,
    exact: &dyn Fn(usize, [f64; 2], f64) -> f64,
) -> ErrorReport {
    let mut l2 = vec![0.0f64; fields.len()];
    let mut linf = vec![0.0f64; fields.len()];
    for t in &comp.triangles {
        let p = [positions[t[0]], positions[t[1]], positions[t[2]]];
        let two_a = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
            - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let area = 0.5 * two_a;
        for (bary, wq) in TRI_DEGREE5 {
            let x = [
                bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
                bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
            ];
            for (s, field) in fields.iter().enumerate() {
                let fh = bary[0] * field[t[0]] + bary[1] * field[t[1]] + bary[2] * field[t[2]];
                let e = fh - exact(s, x, time);
                l2[s] += wq * area * e * e;
                linf[s] = linf[s].max(e.abs());
            }
        }
    }
    for v in &mut l2 {
        *v = v.sqrt();
    }
    let mut h = 0.0f64;
    for t in &comp.triangles {
        for k in 0..3 {
            let a = positions[t[k]];
            let b = positions[t[(k + 1) % 3]];
            h = h.max(((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt());
        }
    }
    ErrorReport {
        l2,
        linf,
        mesh_h: h,
        dof: positions.len(),
    }
}

/// One refinement level of a convergence study.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub h: f64,
    pub dof: usize,
    pub l2: f64,
    pub linf: f64,
    pub order_l2: f64,
    pub order_linf: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// False when an error sequence is not monotonically decreasing (orders
    /// are then unreliable).
    pub monotone: bool,
}

impl ConvergenceTable {
    /// Orders computed as log(e_i / e_{i+1}) / log(h_i / h_{i+1}); the first
    /// row carries NaN. Errors at the rounding floor (below 1e-13) mark the
    /// table non-monotone instead of producing spurious orders.
    pub fn from_errors(levels: &[(f64, usize, f64, f64)]) -> Self {
        let mut rows = Vec::with_capacity(levels.len());
        let mut monotone = true;
        for (i, &(h, dof, l2, linf)) in levels.iter().enumerate() {
            let (order_l2, order_linf) = if i == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let (hp, _, l2p, linfp) = levels[i - 1];
                if l2 >= l2p || linf >= linfp || l2 < 1e-13 || linf < 1e-13 {
                    monotone = false;
                }
                (
                    (l2p / l2).ln() / (hp / h).ln(),
                    (linfp / linf).ln() / (hp / h).ln(),
                )
            };
            rows.push(ConvergenceRow {
                h,
                dof,
                l2,
                linf,
                order_l2,
                order_linf,
            });
        }
        Self { rows, monotone }
    }
}

/// Worst-case results of the randomized operator identity suite.
#[derive(Debug, Clone, Copy)]
pub struct IdentityReport {
    pub cases: usize,
    /// max |e^T K| / |K|_max over bulk stiffness matrices
    pub stiffness_colsum_rel: f64,
    /// max |e^T B| / |B|_max over bulk advection matrices
    pub advection_colsum_rel: f64,
    /// max |e_s^T K_s| / |K_s|_max over surface stiffness matrices
    pub surface_stiffness_colsum_rel: f64,
    /// max |e_s^T B_s| / |B_s|_max over surface advection matrices
    pub surface_advection_colsum_rel: f64,
    /// max |A_Gamma|_max relative to the perimeter scale, for velocity
    /// fields with zero nodal normal slip
    pub a_gamma_tangential: f64,
    /// |e^T A e - perimeter| / perimeter for unit normal slip
    pub a_gamma_perimeter_err: f64,
    /// max relative error of e^T M e against the enclosed polygon area
    pub mass_partition_err: f64,
}

/// Assemble the time-dependent operators on randomized moving meshes and
/// random velocity fields, and measure the discrete conservation
/// identities: stiffness and advection column sums vanish, the boundary
/// advection matrix vanishes for tangential slip, and mass matrices
/// reproduce the domain measure.
pub fn operator_identity_suite(cases: usize, seed: u64) -> IdentityReport {
    use crate::curve::CurveState;
    use crate::fem::{
        assemble_advection_bulk_in, assemble_boundary_advection, assemble_mass_in,
        assemble_stiffness_in, assemble_surface_operators, bulk_pattern, BoundaryOrientation,
    };
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut report = IdentityReport {
        cases,
        stiffness_colsum_rel: 0.0,
        advection_colsum_rel: 0.0,
        surface_stiffness_colsum_rel: 0.0,
        surface_advection_colsum_rel: 0.0,
        a_gamma_tangential: 0.0,
        a_gamma_perimeter_err: 0.0,
        mass_partition_err: 0.0,
    };
    let base = crate::mesh::generate_circle_mesh(1.0, 24, 0.24).expect("base mesh");
    let pattern = bulk_pattern(&base);
    let interior: Vec<bool> = {
        let mut b = vec![true; base.node_count()];
        for &i in &base.inner_boundary_loop {
            b[i] = false;
        }
        b
    };
    let colsum_rel = |m: &crate::fem::SparseMatrix| -> f64 {
        let norm = m.max_abs();
        if norm == 0.0 {
            0.0
        } else {
            m.column_sums()
                .iter()
                .fold(0.0f64, |acc, v| acc.max(v.abs()))
                / norm
        }
    };
    for _ in 0..cases {
        // randomly perturbed positions (interior nodes only, keeps validity)
        let mut pos = base.node_coords.clone();
        for (i, p) in pos.iter_mut().enumerate() {
            if interior[i] {
                p[0] += 0.05 * (rng.gen::<f64>() - 0.5);
                p[1] += 0.05 * (rng.gen::<f64>() - 0.5);
            }
        }
        // random smooth nodal velocity fields
        let (a1, b1, c1, d1): (f64, f64, f64, f64) =
            (rng.gen(), rng.gen(), rng.gen(), rng.gen());
        let vel = |p: [f64; 2]| {
            [
                a1 * (2.0 * p[1]).sin() + b1 * p[0],
                c1 * (3.0 * p[0]).cos() - d1 * p[1],
            ]
        };
        let w: Vec<[f64; 2]> = pos.iter().map(|&p| vel(p)).collect();
        let u: Vec<[f64; 2]> = pos
            .iter()
            .map(|&p| {
                let v = vel([p[1], -p[0]]);
                [0.7 * v[1], 1.3 * v[0]]
            })
            .collect();

        let mass = assemble_mass_in(&pattern, &base, &pos).unwrap();
        let stiff = assemble_stiffness_in(&pattern, &base, &pos, 1.0 + rng.gen::<f64>()).unwrap();
        let adv = assemble_advection_bulk_in(&pattern, &base, &pos, &w, &u).unwrap();
        report.stiffness_colsum_rel = report.stiffness_colsum_rel.max(colsum_rel(&stiff));
        report.advection_colsum_rel = report.advection_colsum_rel.max(colsum_rel(&adv));

        // the boundary curve of this mesh
        let loop_pos: Vec<[f64; 2]> = base
            .inner_boundary_loop
            .iter()
            .map(|&i| pos[i])
            .collect();
        let curve = CurveState::from_positions(loop_pos);
        let n_curve = curve.len();
        let w_curve: Vec<[f64; 2]> = curve.positions.iter().map(|&p| vel(p)).collect();
        // material velocity with the same normal component, random slip
        let u_gamma: Vec<[f64; 2]> = (0..n_curve)
            .map(|i| {
                let wn = w_curve[i][0] * curve.normals[i][0]
                    + w_curve[i][1] * curve.normals[i][1];
                let slip: f64 = 2.0 * rng.gen::<f64>() - 1.0;
                [
                    wn * curve.normals[i][0] + slip * curve.tangents[i][0],
                    wn * curve.normals[i][1] + slip * curve.tangents[i][1],
                ]
            })
            .collect();
        let surf = assemble_surface_operators(&curve, 0.5 + rng.gen::<f64>(), &w_curve, &u_gamma)
            .unwrap();
        report.surface_stiffness_colsum_rel = report
            .surface_stiffness_colsum_rel
            .max(colsum_rel(&surf.stiffness));
        report.surface_advection_colsum_rel = report
            .surface_advection_colsum_rel
            .max(colsum_rel(&surf.advection));

        // A_Gamma vanishes for zero nodal normal slip
        let a_gamma = assemble_boundary_advection(
            &pattern,
            &base,
            &pos,
            &curve,
            &w,
            &u_gamma,
            BoundaryOrientation::InteriorOutward,
        )
        .unwrap();
        let perimeter = curve.perimeter();
        report.a_gamma_tangential = report
            .a_gamma_tangential
            .max(a_gamma.max_abs() / perimeter.max(1.0));

        // unit normal slip integrates to the perimeter
        let u_slip: Vec<[f64; 2]> = (0..n_curve)
            .map(|i| {
                [
                    w_curve[i][0] - curve.normals[i][0],
                    w_curve[i][1] - curve.normals[i][1],
                ]
            })
            .collect();
        let a_unit = assemble_boundary_advection(
            &pattern,
            &base,
            &pos,
            &curve,
            &w_curve,
            &u_slip,
            BoundaryOrientation::InteriorOutward,
        )
        .unwrap();
        let total: f64 = a_unit.values().iter().sum();
        report.a_gamma_perimeter_err = report
            .a_gamma_perimeter_err
            .max(((total - perimeter) / perimeter).abs());

        // partition of unity: e^T M e = polygon area of the boundary loop
        let area = crate::mesh::polygon_area(curve.positions.iter().copied());
        let total_mass: f64 = mass.values().iter().sum();
        report.mass_partition_err = report
            .mass_partition_err
            .max(((total_mass - area) / area).abs());
    }
    report
}

/// Spatial convergence study: run a problem with an exact solution on a
/// ladder of meshes (target spacing halved per level) at a fixed time step
/// and collect the final-time error norms.
pub fn convergence_study(
    kind: crate::models::ProblemKind,
    levels: usize,
    dt_override: Option<f64>,
    mmpde_tau_hat: Option<f64>,
) -> Result<ConvergenceTable, crate::stepper::StepError> {
    use crate::stepper::{advance, SchemeConfig, SystemState};
    let mut rows = Vec::with_capacity(levels);
    for level in 0..levels {
        let mesh_spec = kind.default_mesh().refined(level as u32);
        let domain = mesh_spec.build()?;
        let model = kind.build(&domain);
        if model.exact_c.is_none() {
            return Err(crate::stepper::StepError::Inconsistent(format!(
                "problem {} has no exact solution",
                model.name
            )));
        }
        let mut cfg = SchemeConfig::for_system(&model);
        if let Some(dt) = dt_override {
            cfg.dt = dt;
        }
        if let Some(tau) = mmpde_tau_hat {
            cfg.mmpde_tau_hat = tau;
        }
        let mut state = SystemState::new(domain, &model)?;
        let steps = (cfg.t_end / cfg.dt).round() as usize;
        for _ in 0..steps {
            advance(&mut state, &model, &cfg)?;
        }
        let exact = model.exact_c.as_ref().unwrap();
        let report = error_norms(
            &state.interior_comp,
            &state.interior_pos,
            &[&state.c[0]],
            state.time,
            &|_s, x, t| exact(x, t),
        );
        rows.push((report.mesh_h, report.dof, report.l2[0], report.linf[0]));
    }
    Ok(ConvergenceTable::from_errors(&rows))
}

/// Mesh-health telemetry of a bulk region at given positions.
#[derive(Debug, Clone, Copy)]
pub struct MeshTelemetry {
    pub min_signed_area: f64,
    pub min_angle_deg: f64,
    pub curve_equidistribution: f64,
    pub centroid: [f64; 2],
}

pub fn mesh_telemetry(
    comp: &Triangulation,
    positions: &[[f64; 2]],
    curve: &crate::curve::CurveState,
) -> MeshTelemetry {
    let mut min_area = f64::INFINITY;
    let mut min_angle = f64::INFINITY;
    for t in &comp.triangles {
        let p = [positions[t[0]], positions[t[1]], positions[t[2]]];
        let area = 0.5
            * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
        min_area = min_area.min(area);
        let mut lengths = [0.0f64; 3];
        for k in 0..3 {
            let u = p[(k + 1) % 3];
            let v = p[(k + 2) % 3];
            lengths[k] = ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2)).sqrt();
        }
        for k in 0..3 {
            let (la, lb, lc) = (lengths[k], lengths[(k + 1) % 3], lengths[(k + 2) % 3]);
            let cosv = ((lb * lb + lc * lc - la * la) / (2.0 * lb * lc)).clamp(-1.0, 1.0);
            min_angle = min_angle.min(cosv.acos().to_degrees());
        }
    }
    MeshTelemetry {
        min_signed_area: min_area,
        min_angle_deg: min_angle,
        curve_equidistribution: curve.equidistribution_ratio(),
        centroid: curve.centroid(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_right_triangle() -> (Triangulation, Vec<[f64; 2]>) {
        let t = Triangulation {
            node_coords: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            triangles: vec![[0, 1, 2]],
            inner_boundary_loop: vec![0, 1, 2],
            outer_boundary_loop: vec![],
        };
        let pos = t.node_coords.clone();
        (t, pos)
    }

    #[test]
    fn total_mass_of_ones_is_area_and_zero_of_zeros() {
        let (tri, pos) = unit_right_triangle();
        let m = crate::fem::assemble_mass(&tri, &pos).unwrap();
        let total = total_mass(&m, &[1.0, 1.0, 1.0]).unwrap();
        assert!((total - 0.5).abs() < 1e-15);
        assert_eq!(total_mass(&m, &[0.0, 0.0, 0.0]).unwrap(), 0.0);
        // linear field x: exact integral over the triangle is 1/6
        let xs: Vec<f64> = pos.iter().map(|p| p[0]).collect();
        let total_x = total_mass(&m, &xs).unwrap();
        assert!((total_x - 1.0 / 6.0).abs() < 1e-14);
        // dimension mismatch is an error
        assert!(total_mass(&m, &[1.0]).is_err());
    }

    #[test]
    fn total_mass_of_ones_equals_sum_of_entries() {
        let (tri, pos) = unit_right_triangle();
        let m = crate::fem::assemble_mass(&tri, &pos).unwrap();
        let sum: f64 = m.values().iter().sum();
        let total = total_mass(&m, &[1.0; 3]).unwrap();
        assert!(((total - sum) / sum).abs() < 1e-15);
    }

    #[test]
    fn conservation_error_of_identical_ledgers_is_zero() {
        let a = MassLedger::new(0.0, vec![1.0, 2.0], vec![0.5]);
        let b = a.clone();
        let (abs, rel) = conservation_error(&a, &b);
        assert_eq!(abs, 0.0);
        assert_eq!(rel, 0.0);
        // ledger additivity
        assert_eq!(a.grand_total, 3.5);
    }

    #[test]
    fn error_norms_of_exact_interpolant_vanish_for_linears() {
        let (tri, pos) = unit_right_triangle();
        let field: Vec<f64> = pos.iter().map(|p| 2.0 * p[0] - p[1] + 0.3).collect();
        let report = error_norms(&tri, &pos, &[&field], 0.0, &|_s, x, _t| {
            2.0 * x[0] - x[1] + 0.3
        });
        assert!(report.l2[0] < 1e-14);
        assert!(report.linf[0] < 1e-14);
    }

    #[test]
    fn constant_offset_gives_predictable_norms() {
        let (tri, pos) = unit_right_triangle();
        let eta = 0.37;
        let field: Vec<f64> = pos.iter().map(|p| p[0] + eta).collect();
        let report = error_norms(&tri, &pos, &[&field], 0.0, &|_s, x, _t| x[0]);
        // L2 = eta sqrt(area), Linf = eta
        assert!((report.l2[0] - eta * 0.5f64.sqrt()).abs() < 1e-14);
        assert!((report.linf[0] - eta).abs() < 1e-14);
    }

    #[test]
    fn convergence_orders_and_degenerate_handling() {
        let levels = [
            (0.4, 100, 1.6e-2, 3.2e-2),
            (0.2, 400, 4.0e-3, 8.0e-3),
            (0.1, 1600, 1.0e-3, 2.0e-3),
        ];
        let table = ConvergenceTable::from_errors(&levels);
        assert!(table.monotone);
        assert!((table.rows[1].order_l2 - 2.0).abs() < 1e-12);
        assert!((table.rows[2].order_linf - 2.0).abs() < 1e-12);
        // machine-floor errors flag the table
        let degenerate = [(0.4, 100, 1e-15, 1e-15), (0.2, 400, 2e-15, 5e-16)];
        let table = ConvergenceTable::from_errors(&degenerate);
        assert!(!table.monotone);
    }
}
