//! One step of the coupled bulk-surface ALE scheme: curve evolution, mesh
//! motion, operator assembly, surface predictor, bulk Crank-Nicolson (or
//! IMEX Euler), surface corrector, diagnostics.
//!
//! Operators live on two time levels per step. Both levels use the same
//! interval mesh velocity w = (x^{n+1} - x^n) / dt, evaluated on the old
//! and new positions respectively, so the trapezoidal rule sees the
//! piecewise-constant-in-time ALE velocity of the interval it integrates.
//! The nodal material velocity of the curve is constructed so that its
//! normal component equals the normal component of w at each level
//! (Assumption-3 enforcement); the boundary advection matrix A_Gamma then
//! vanishes identically and the fully discrete total of interior bulk plus
//! surface mass is conserved independent of mesh motion, predictor output
//! and step size.

use crate::curve::{
    cortical_tension_step, evolve_curve, geometry_update, membrane_velocity_law, CortexState,
    CurveError, CurveMotionParams, CurveState,
};
use crate::diagnostics::{total_mass_matrix, MassLedger};
use crate::fem::{
    assemble_advection_bulk_in, assemble_boundary_advection, assemble_load, assemble_mass_in,
    assemble_stiffness_in, assemble_surface_load, assemble_surface_operators, bulk_pattern,
    BoundaryOrientation, FemError, QuadDegree, SparseMatrix, SparsityPattern,
};
use crate::mesh::{DomainPair, MeshError, Triangulation};
use crate::mmpde::{MmpdeError, MmpdeParams};
use crate::models::{BulkMotion, CurveMotionSpec, OuterBc, RDSystem, SchemeKind};
use crate::solver::{BandOrdering, LuFactor, SolveError};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StepError {
    #[error("curve evolution: {0}")]
    Curve(#[from] CurveError),
    #[error("mesh movement ({region}): {source}")]
    Mmpde {
        region: &'static str,
        source: MmpdeError,
    },
    #[error("operator assembly: {0}")]
    Fem(#[from] FemError),
    #[error("linear solve ({stage}): {source}")]
    Solve {
        stage: &'static str,
        source: SolveError,
    },
    #[error(
        "Picard iteration did not converge after {iterations} iterations (update norm {delta:.3e})"
    )]
    PicardNonConvergence { iterations: usize, delta: f64 },
    #[error("mesh setup: {0}")]
    Mesh(#[from] MeshError),
    #[error("inconsistent state: {0}")]
    Inconsistent(String),
}

/// Which values the bulk step receives as the predicted surface solution.
/// `UsePreviousSurface` deliberately skips the predictor solve and feeds the
/// previous-step values, probing that conservation does not depend on the
/// prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorMode {
    Normal,
    UsePreviousSurface,
}

/// Scheme parameters for a run.
#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub dt: f64,
    pub t_end: f64,
    pub bulk_scheme: SchemeKind,
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    pub conservation_check: bool,
    /// Tangential relaxation time of the curve mesh (membrane-law motion).
    pub curve_tau: f64,
    /// Relaxation time of the bulk moving-mesh equations.
    pub mmpde_tau_hat: f64,
    pub predictor_mode: PredictorMode,
    /// Amplitude (fraction of the local node gap) of a tangential mesh
    /// redistribution applied each step on top of the prescribed motion;
    /// exercises conservation independence of the ALE velocity.
    pub mesh_jiggle: Option<f64>,
}

impl SchemeConfig {
    pub fn for_system(sys: &RDSystem) -> Self {
        let diameter = match sys.defaults.mesh {
            crate::models::MeshSpec::Disk { radius, .. } => 2.0 * radius,
            crate::models::MeshSpec::Star { .. } => 0.61,
            crate::models::MeshSpec::DiskWithAnnulus { radius, .. } => 2.0 * radius,
        };
        Self {
            dt: sys.defaults.dt,
            t_end: sys.defaults.t_end,
            bulk_scheme: sys.defaults.scheme,
            picard_tol: 1e-10,
            picard_max_iters: 50,
            conservation_check: true,
            curve_tau: 1.0,
            mmpde_tau_hat: MmpdeParams::default_tau_hat(diameter),
            predictor_mode: PredictorMode::Normal,
            mesh_jiggle: None,
        }
    }
}

/// Position-only operators of one region at one time level (reused as the
/// old level of the next step).
struct RegionPosOps {
    mass: SparseMatrix,
    stiff1: SparseMatrix,
}

struct SurfacePosOps {
    mass: SparseMatrix,
    stiff1: SparseMatrix,
}

struct PosOps {
    interior: RegionPosOps,
    exterior: Option<RegionPosOps>,
    surface: SurfacePosOps,
}

/// Point-source controller state (chemotaxis).
#[derive(Debug, Clone)]
pub struct PointSourceState {
    pub position: [f64; 2],
    pub next_corner: usize,
}

/// Per-step diagnostics record.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub time: f64,
    pub ledger: MassLedger,
    pub cons_err_abs: f64,
    /// Absolute drift over the step divided by the initial grand total.
    pub cons_err_rel: f64,
    pub min_signed_area: f64,
    pub min_angle_deg: f64,
    pub lambda: f64,
    pub centroid: [f64; 2],
    pub equidistribution_ratio: f64,
    pub picard_iterations: usize,
    /// Largest column sum of any stiffness/advection matrix relative to its
    /// max norm (only computed when `conservation_check` is on).
    pub max_column_sum_rel: f64,
    /// Max-norm of the assembled boundary advection matrices.
    pub a_gamma_max: f64,
    pub source_position: Option<[f64; 2]>,
}

/// Full simulation state between steps.
pub struct SystemState {
    pub time: f64,
    pub step_index: usize,
    pub interior_comp: Triangulation,
    pub interior_pos: Vec<[f64; 2]>,
    pub exterior_comp: Option<Triangulation>,
    pub exterior_pos: Option<Vec<[f64; 2]>>,
    /// curve node k -> exterior mesh node index
    pub exterior_curve_map: Vec<usize>,
    pub curve: CurveState,
    pub c: Vec<Vec<f64>>,
    pub cs: Vec<Vec<f64>>,
    pub l: Vec<Vec<f64>>,
    pub ls: Vec<Vec<f64>>,
    pub cortex: Option<CortexState>,
    pub source: Option<PointSourceState>,
    pub initial_total: f64,
    prev_total: f64,
    interior_pattern: Arc<SparsityPattern>,
    exterior_pattern: Option<Arc<SparsityPattern>>,
    interior_ordering: BandOrdering,
    exterior_ordering: Option<BandOrdering>,
    pos_ops: PosOps,
}

impl SystemState {
    pub fn new(domain: DomainPair, model: &RDSystem) -> Result<Self, StepError> {
        let DomainPair {
            interior,
            exterior,
            shared_curve_map,
        } = domain;
        interior.validate()?;
        if let Some(ext) = &exterior {
            ext.validate()?;
        }
        if model.n_l > 0 && exterior.is_none() {
            return Err(StepError::Inconsistent(format!(
                "model {} has exterior species but no exterior mesh",
                model.name
            )));
        }
        let curve_positions: Vec<[f64; 2]> = interior
            .inner_boundary_loop
            .iter()
            .map(|&i| interior.node_coords[i])
            .collect();
        let curve = CurveState::from_positions(curve_positions);
        if curve.enclosed_area() <= 0.0 {
            return Err(StepError::Inconsistent(
                "interior boundary loop is not counter-clockwise".into(),
            ));
        }

        let interior_pos = interior.node_coords.clone();
        let exterior_pos = exterior.as_ref().map(|e| e.node_coords.clone());

        let eval_ic = |ic: &Option<crate::models::InitialCondition>,
                       n_species: usize,
                       points: &[[f64; 2]]| {
            (0..n_species)
                .map(|s| {
                    points
                        .iter()
                        .map(|&x| ic.as_ref().map(|f| f(s, x)).unwrap_or(0.0))
                        .collect::<Vec<f64>>()
                })
                .collect::<Vec<Vec<f64>>>()
        };
        let c = eval_ic(&model.ic_c, model.n_c, &interior_pos);
        let cs = eval_ic(&model.ic_cs, model.n_cs, &curve.positions);
        let l = match &exterior_pos {
            Some(pos) => eval_ic(&model.ic_l, model.n_l, pos),
            None => vec![],
        };
        let ls = eval_ic(&model.ic_ls, model.n_ls, &curve.positions);

        let cortex = model.membrane.map(|m| CortexState {
            lambda: m.lambda0,
            lambda0: m.lambda0,
            a0: curve.enclosed_area(),
            upsilon: m.upsilon,
            beta_relax: m.beta_relax,
        });
        let source = model.point_source.as_ref().map(|s| PointSourceState {
            position: s.initial_position,
            next_corner: 0,
        });

        let interior_pattern = bulk_pattern(&interior);
        let exterior_pattern = exterior.as_ref().map(bulk_pattern);
        let interior_ordering = BandOrdering::for_pattern(&interior_pattern);
        let exterior_ordering = exterior_pattern
            .as_ref()
            .map(|p| BandOrdering::for_pattern(p));

        let zero_curve = vec![[0.0, 0.0]; curve.len()];
        let surf0 = assemble_surface_operators(&curve, 1.0, &zero_curve, &zero_curve)?;
        let pos_ops = PosOps {
            interior: RegionPosOps {
                mass: assemble_mass_in(&interior_pattern, &interior, &interior_pos)?,
                stiff1: assemble_stiffness_in(&interior_pattern, &interior, &interior_pos, 1.0)?,
            },
            exterior: match (&exterior, &exterior_pos, &exterior_pattern) {
                (Some(mesh), Some(pos), Some(pat)) => Some(RegionPosOps {
                    mass: assemble_mass_in(pat, mesh, pos)?,
                    stiff1: assemble_stiffness_in(pat, mesh, pos, 1.0)?,
                }),
                _ => None,
            },
            surface: SurfacePosOps {
                mass: surf0.mass,
                stiff1: surf0.stiffness,
            },
        };

        let mut state = Self {
            time: 0.0,
            step_index: 0,
            interior_comp: interior,
            interior_pos,
            exterior_comp: exterior,
            exterior_pos,
            exterior_curve_map: shared_curve_map,
            curve,
            c,
            cs,
            l,
            ls,
            cortex,
            source,
            initial_total: 0.0,
            prev_total: 0.0,
            interior_pattern,
            exterior_pattern,
            interior_ordering,
            exterior_ordering,
            pos_ops,
        };
        let ledger = state.mass_ledger();
        state.initial_total = ledger.grand_total;
        state.prev_total = ledger.grand_total;
        Ok(state)
    }

    /// Interior bulk plus interior surface totals with the current mass
    /// matrices (the same matrices the scheme uses).
    pub fn mass_ledger(&self) -> MassLedger {
        let bulk: Vec<f64> = self
            .c
            .iter()
            .map(|ci| total_mass_matrix(&self.pos_ops.interior.mass, ci))
            .collect();
        let surface: Vec<f64> = self
            .cs
            .iter()
            .map(|qi| total_mass_matrix(&self.pos_ops.surface.mass, qi))
            .collect();
        MassLedger::new(self.time, bulk, surface)
    }

    /// Species values at the curve nodes (interior bulk restriction).
    fn c_at_curve(&self) -> Vec<Vec<f64>> {
        self.c
            .iter()
            .map(|ci| {
                self.interior_comp
                    .inner_boundary_loop
                    .iter()
                    .map(|&n| ci[n])
                    .collect()
            })
            .collect()
    }

    fn l_at_curve(&self) -> Vec<Vec<f64>> {
        self.l
            .iter()
            .map(|li| self.exterior_curve_map.iter().map(|&n| li[n]).collect())
            .collect()
    }
}

fn motion_field(motion: BulkMotion, w: &[[f64; 2]]) -> Vec<[f64; 2]> {
    match motion {
        BulkMotion::Zero => vec![[0.0, 0.0]; w.len()],
        BulkMotion::Constant(u) => vec![u; w.len()],
        BulkMotion::EqualsMesh => w.to_vec(),
    }
}

/// Nodal material velocity of the curve at one level, constructed so that
/// the assembled normal slip vanishes (Assumption-3 enforcement).
fn curve_material_velocity(
    motion: CurveMotionSpec,
    w_curve: &[[f64; 2]],
    curve: &CurveState,
) -> Vec<[f64; 2]> {
    match motion {
        CurveMotionSpec::Translate(u) => vec![u; w_curve.len()],
        CurveMotionSpec::MembraneLaw {
            material_equals_mesh: true,
        } => w_curve.to_vec(),
        // static or normal-motion-only: project the mesh velocity onto the
        // nodal normal
        _ => w_curve
            .iter()
            .zip(&curve.normals)
            .map(|(w, n)| {
                let wn = w[0] * n[0] + w[1] * n[1];
                [wn * n[0], wn * n[1]]
            })
            .collect(),
    }
}

/// Curve-indexed coupling vectors for one time level: per interior bulk
/// species the loads of (r + r_hat), per interior surface species the loads
/// of r_hat_s, assembled from the same quadrature pass.
struct InteriorCoupling {
    bulk: Vec<Vec<f64>>,
    surf: Vec<Vec<f64>>,
}

fn interior_coupling(
    model: &RDSystem,
    curve: &CurveState,
    t: f64,
    c_at: &[Vec<f64>],
    cs: &[Vec<f64>],
    ls: &[Vec<f64>],
) -> Result<InteriorCoupling, FemError> {
    let mut fields: Vec<&[f64]> = Vec::new();
    for v in c_at {
        fields.push(v);
    }
    for v in cs {
        fields.push(v);
    }
    for v in ls {
        fields.push(v);
    }
    let nc = model.n_c;
    let ncs = model.n_cs;
    let bulk = (0..nc)
        .map(|p| {
            assemble_surface_load(curve, &fields, &mut |x, vals| {
                let (cv, rest) = vals.split_at(nc);
                let (csv, lsv) = rest.split_at(ncs);
                let mut total = 0.0;
                if let Some(r) = &model.r {
                    total += r(p, x, t, cv);
                }
                if let Some(rh) = &model.r_hat {
                    total += rh(p, x, t, cv, csv, lsv);
                }
                total
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let surf = (0..ncs)
        .map(|q| {
            assemble_surface_load(curve, &fields, &mut |x, vals| {
                let (cv, rest) = vals.split_at(nc);
                let (csv, lsv) = rest.split_at(ncs);
                match &model.r_hat_s {
                    Some(rhs) => rhs(q, x, t, cv, csv, lsv),
                    None => 0.0,
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(InteriorCoupling { bulk, surf })
}

/// Same for the exterior pair: loads of (g + g_hat) and of g_hat_s.
struct ExteriorCoupling {
    bulk: Vec<Vec<f64>>,
    surf: Vec<Vec<f64>>,
}

fn exterior_coupling(
    model: &RDSystem,
    curve: &CurveState,
    t: f64,
    l_at: &[Vec<f64>],
    ls: &[Vec<f64>],
) -> Result<ExteriorCoupling, FemError> {
    let mut fields: Vec<&[f64]> = Vec::new();
    for v in l_at {
        fields.push(v);
    }
    for v in ls {
        fields.push(v);
    }
    let nl = model.n_l;
    let bulk = (0..nl)
        .map(|i| {
            assemble_surface_load(curve, &fields, &mut |x, vals| {
                let (lv, lsv) = vals.split_at(nl);
                let mut total = 0.0;
                if let Some(g) = &model.g {
                    total += g(i, x, t, lv);
                }
                if let Some(gh) = &model.g_hat {
                    total += gh(i, x, t, lv, lsv);
                }
                total
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let surf = (0..model.n_ls)
        .map(|j| {
            assemble_surface_load(curve, &fields, &mut |x, vals| {
                let (lv, lsv) = vals.split_at(nl);
                match &model.g_hat_s {
                    Some(ghs) => ghs(j, x, t, lv, lsv),
                    None => 0.0,
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExteriorCoupling { bulk, surf })
}

fn scatter_to_bulk(curve_vec: &[f64], loop_nodes: &[usize], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (k, &node) in loop_nodes.iter().enumerate() {
        out[node] = curve_vec[k];
    }
    out
}

/// Replace Dirichlet rows by identity and move their columns to the
/// right-hand side.
fn apply_dirichlet(a: &mut SparseMatrix, rhs: &mut [f64], is_dirichlet: &[bool], value: f64) {
    let n = a.n_rows();
    for i in 0..n {
        if is_dirichlet[i] {
            a.set_identity_row(i);
            rhs[i] = value;
        } else {
            let (lo, hi) = (a.row_ptr()[i], a.row_ptr()[i + 1]);
            for off in lo..hi {
                let j = a.col_idx()[off];
                if is_dirichlet[j] {
                    rhs[i] -= a.values()[off] * value;
                    a.values_mut()[off] = 0.0;
                }
            }
        }
    }
}

fn vmax(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Affine extraction of the interior boundary coupling for species `p`:
/// matrix Q (bulk pattern) with entries from the slope of (r + r_hat) in
/// the own species, and the offset load vector (bulk-indexed).
#[allow(clippy::too_many_arguments)]
fn affine_boundary_terms(
    model: &RDSystem,
    p: usize,
    pattern: &Arc<SparsityPattern>,
    loop_nodes: &[usize],
    curve: &CurveState,
    t: f64,
    cs: &[Vec<f64>],
    ls: &[Vec<f64>],
) -> Result<(SparseMatrix, Vec<f64>), FemError> {
    debug_assert_eq!(model.n_c, 1, "affine fold-in assumes a single bulk species");
    let n = curve.len();
    let mut q = SparseMatrix::zeros(pattern.clone());
    let mut offset = vec![0.0; pattern.n_rows];
    let eval = |x: [f64; 2], cval: f64, csv: &[f64], lsv: &[f64]| -> f64 {
        let cv = [cval];
        let mut total = 0.0;
        if let Some(r) = &model.r {
            total += r(p, x, t, &cv);
        }
        if let Some(rh) = &model.r_hat {
            total += rh(p, x, t, &cv, csv, lsv);
        }
        total
    };
    let mut csv = vec![0.0; cs.len()];
    let mut lsv = vec![0.0; ls.len()];
    for i in 0..n {
        let j = (i + 1) % n;
        let pi = curve.positions[i];
        let pj = curve.positions[j];
        let len = ((pj[0] - pi[0]).powi(2) + (pj[1] - pi[1]).powi(2)).sqrt();
        if len == 0.0 {
            return Err(FemError::ZeroLengthSegment { segment: i });
        }
        let (bi, bj) = (loop_nodes[i], loop_nodes[j]);
        for (s, wq) in crate::fem::quadrature::SEG_GAUSS2 {
            let phi = [1.0 - s, s];
            let x = [
                phi[0] * pi[0] + phi[1] * pj[0],
                phi[0] * pi[1] + phi[1] * pj[1],
            ];
            for (k, f) in cs.iter().enumerate() {
                csv[k] = phi[0] * f[i] + phi[1] * f[j];
            }
            for (k, f) in ls.iter().enumerate() {
                lsv[k] = phi[0] * f[i] + phi[1] * f[j];
            }
            let f0 = eval(x, 0.0, &csv, &lsv);
            let slope = eval(x, 1.0, &csv, &lsv) - f0;
            offset[bi] += wq * len * f0 * phi[0];
            offset[bj] += wq * len * f0 * phi[1];
            let idx = [bi, bj];
            for (a, &ia) in idx.iter().enumerate() {
                for (b, &ib) in idx.iter().enumerate() {
                    q.add_to(ia, ib, wq * len * slope * phi[b] * phi[a]);
                }
            }
        }
    }
    Ok((q, offset))
}

/// Affine extraction of bulk kinetics f(p) over the bulk mesh.
fn affine_bulk_terms(
    model: &RDSystem,
    p: usize,
    pattern: &Arc<SparsityPattern>,
    comp: &Triangulation,
    positions: &[[f64; 2]],
    t: f64,
) -> Result<Option<(SparseMatrix, Vec<f64>)>, FemError> {
    let f = match &model.f_c {
        Some(f) => f,
        None => return Ok(None),
    };
    debug_assert_eq!(model.n_c, 1, "affine fold-in assumes a single bulk species");
    let mut q = SparseMatrix::zeros(pattern.clone());
    let mut offset = vec![0.0; pattern.n_rows];
    for e in 0..comp.triangles.len() {
        let nodes = comp.triangles[e];
        let pts = [
            positions[nodes[0]],
            positions[nodes[1]],
            positions[nodes[2]],
        ];
        let two_a = (pts[1][0] - pts[0][0]) * (pts[2][1] - pts[0][1])
            - (pts[2][0] - pts[0][0]) * (pts[1][1] - pts[0][1]);
        if !(two_a > 0.0) {
            return Err(FemError::DegenerateElement {
                element: e,
                area: 0.5 * two_a,
            });
        }
        let area = 0.5 * two_a;
        for (bary, wq) in crate::fem::quadrature::TRI_DEGREE2 {
            let x = [
                bary[0] * pts[0][0] + bary[1] * pts[1][0] + bary[2] * pts[2][0],
                bary[0] * pts[0][1] + bary[1] * pts[1][1] + bary[2] * pts[2][1],
            ];
            let f0 = f(p, x, t, &[0.0]);
            let slope = f(p, x, t, &[1.0]) - f0;
            for a in 0..3 {
                offset[nodes[a]] += wq * area * f0 * bary[a];
                for b in 0..3 {
                    q.add_to(nodes[a], nodes[b], wq * area * slope * bary[b] * bary[a]);
                }
            }
        }
    }
    Ok(Some((q, offset)))
}

/// Advance the state by one step; returns the per-step diagnostics.
pub fn advance(
    state: &mut SystemState,
    model: &RDSystem,
    cfg: &SchemeConfig,
) -> Result<StepDiagnostics, StepError> {
    let dt = cfg.dt;
    let t_n = state.time;
    let t_np1 = t_n + dt;
    let n_curve = state.curve.len();
    let loop_nodes = state.interior_comp.inner_boundary_loop.clone();

    // (0) point-source controller
    if let (Some(spec), Some(src)) = (&model.point_source, state.source.as_mut()) {
        let dmin = state
            .curve
            .positions
            .iter()
            .map(|p| {
                ((p[0] - src.position[0]).powi(2) + (p[1] - src.position[1]).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        if dmin < spec.trigger_distance && !spec.path.is_empty() {
            src.position = spec.path[src.next_corner % spec.path.len()];
            src.next_corner += 1;
        }
    }

    // (1) curve evolution
    let curve_n = state.curve.clone();
    let mut curve_np1 = match model.curve_motion {
        CurveMotionSpec::Static => curve_n.clone(),
        CurveMotionSpec::Translate(u) => {
            let positions = curve_n
                .positions
                .iter()
                .map(|p| [p[0] + dt * u[0], p[1] + dt * u[1]])
                .collect();
            let mut c = CurveState {
                positions,
                normals: curve_n.normals.clone(),
                tangents: curve_n.tangents.clone(),
                curvatures: curve_n.curvatures.clone(),
            };
            geometry_update(&mut c)?;
            c
        }
        CurveMotionSpec::MembraneLaw { .. } => {
            let membrane = model.membrane.as_ref().ok_or_else(|| {
                StepError::Inconsistent("membrane-law motion without membrane parameters".into())
            })?;
            let cortex = state.cortex.as_ref().ok_or_else(|| {
                StepError::Inconsistent("membrane-law motion without cortex state".into())
            })?;
            let cs0 = state.cs.first().ok_or_else(|| {
                StepError::Inconsistent("membrane law requires a surface species".into())
            })?;
            let law = membrane_velocity_law(cs0, membrane.k_prot, cortex);
            let params = CurveMotionParams::new(cfg.curve_tau, dt);
            evolve_curve(&curve_n, &law, &params, t_n)?
        }
    };
    // optional tangential redistribution on top of the prescribed motion
    if let Some(amp) = cfg.mesh_jiggle {
        let phase = 0.8 * state.step_index as f64;
        let mut positions = curve_np1.positions.clone();
        for i in 0..n_curve {
            let prev = curve_np1.positions[(i + n_curve - 1) % n_curve];
            let next = curve_np1.positions[(i + 1) % n_curve];
            let gap = 0.5
                * (((next[0] - prev[0]).powi(2) + (next[1] - prev[1]).powi(2)).sqrt());
            let s = amp
                * gap
                * (2.0 * std::f64::consts::PI * 3.0 * i as f64 / n_curve as f64 + phase).sin();
            let t = curve_np1.tangents[i];
            positions[i][0] += s * t[0];
            positions[i][1] += s * t[1];
        }
        curve_np1.positions = positions;
        geometry_update(&mut curve_np1)?;
    }

    // (2) cortical tension update (uses this step's area change)
    let mut lambda_out = 0.0;
    if let Some(cortex) = state.cortex.as_mut() {
        let a_n = curve_n.enclosed_area();
        let a_np1 = curve_np1.enclosed_area();
        *cortex = cortical_tension_step(cortex, a_n, (a_np1 - a_n) / dt, dt);
        lambda_out = cortex.lambda;
    }

    // (3) bulk mesh movement, curve positions as Dirichlet data
    let mmpde_params = MmpdeParams::new(cfg.mmpde_tau_hat, dt);
    let mut int_pos_np1 = {
        let dirichlet: Vec<(usize, [f64; 2])> = loop_nodes
            .iter()
            .copied()
            .zip(curve_np1.positions.iter().copied())
            .collect();
        crate::mmpde::mmpde_step_cached(
            &state.interior_comp,
            &state.interior_pos,
            &dirichlet,
            &mmpde_params,
            &state.interior_pattern,
            &state.interior_ordering,
        )
        .map_err(|source| StepError::Mmpde {
            region: "interior",
            source,
        })?
    };
    for (k, &node) in loop_nodes.iter().enumerate() {
        int_pos_np1[node] = curve_np1.positions[k];
    }

    let ext_pos_np1 = match (&state.exterior_comp, &state.exterior_pos) {
        (Some(comp), Some(pos)) => {
            let c_old = curve_n.centroid();
            let c_new = curve_np1.centroid();
            let shift = [c_new[0] - c_old[0], c_new[1] - c_old[1]];
            let outer_now: Vec<[f64; 2]> = comp
                .outer_boundary_loop
                .iter()
                .map(|&i| pos[i])
                .collect();
            let outer_next = crate::mmpde::translate_exterior_frame(&outer_now, shift);
            let mut dirichlet: Vec<(usize, [f64; 2])> = state
                .exterior_curve_map
                .iter()
                .copied()
                .zip(curve_np1.positions.iter().copied())
                .collect();
            dirichlet.extend(
                comp.outer_boundary_loop
                    .iter()
                    .copied()
                    .zip(outer_next.iter().copied()),
            );
            let mut new_pos = crate::mmpde::mmpde_step_cached(
                comp,
                pos,
                &dirichlet,
                &mmpde_params,
                state.exterior_pattern.as_ref().unwrap(),
                state.exterior_ordering.as_ref().unwrap(),
            )
            .map_err(|source| StepError::Mmpde {
                region: "exterior",
                source,
            })?;
            for (&node, p) in state.exterior_curve_map.iter().zip(&curve_np1.positions) {
                new_pos[node] = *p;
            }
            for (&node, p) in comp.outer_boundary_loop.iter().zip(&outer_next) {
                new_pos[node] = *p;
            }
            Some(new_pos)
        }
        _ => None,
    };

    // (4) interval ALE velocities
    let w_int: Vec<[f64; 2]> = state
        .interior_pos
        .iter()
        .zip(&int_pos_np1)
        .map(|(p, q)| [(q[0] - p[0]) / dt, (q[1] - p[1]) / dt])
        .collect();
    let w_ext: Option<Vec<[f64; 2]>> = match (&state.exterior_pos, &ext_pos_np1) {
        (Some(old), Some(new)) => Some(
            old.iter()
                .zip(new)
                .map(|(p, q)| [(q[0] - p[0]) / dt, (q[1] - p[1]) / dt])
                .collect(),
        ),
        _ => None,
    };
    let w_curve: Vec<[f64; 2]> = curve_n
        .positions
        .iter()
        .zip(&curve_np1.positions)
        .map(|(p, q)| [(q[0] - p[0]) / dt, (q[1] - p[1]) / dt])
        .collect();

    // (5) material velocities at both levels
    let u_gamma_n = curve_material_velocity(model.curve_motion, &w_curve, &curve_n);
    let u_gamma_np1 = curve_material_velocity(model.curve_motion, &w_curve, &curve_np1);
    let u_int = motion_field(model.u_omega, &w_int);
    let u_ext = w_ext
        .as_ref()
        .map(|w| motion_field(model.u_xi, w));

    // (6) operators: old level (B, A, B_s on old positions with interval w)
    let int_pat = state.interior_pattern.clone();
    let b_int_n = assemble_advection_bulk_in(
        &int_pat,
        &state.interior_comp,
        &state.interior_pos,
        &w_int,
        &u_int,
    )?;
    let a_int_n = assemble_boundary_advection(
        &int_pat,
        &state.interior_comp,
        &state.interior_pos,
        &curve_n,
        &w_int,
        &u_gamma_n,
        BoundaryOrientation::InteriorOutward,
    )?;
    let surf_n_ops = assemble_surface_operators(&curve_n, 1.0, &w_curve, &u_gamma_n)?;
    let b_surf_n = surf_n_ops.advection;

    let (b_ext_n, a_ext_n) = match (&state.exterior_comp, &state.exterior_pos, &w_ext, &u_ext) {
        (Some(comp), Some(pos), Some(w), Some(u)) => {
            let pat = state.exterior_pattern.as_ref().unwrap();
            let b = assemble_advection_bulk_in(pat, comp, pos, w, u)?;
            let a = assemble_boundary_advection(
                pat,
                comp,
                pos,
                &curve_n,
                w,
                &u_gamma_n,
                BoundaryOrientation::ExteriorOutward,
            )?;
            (Some(b), Some(a))
        }
        _ => (None, None),
    };

    // new level: everything on new positions with interval w
    let mass_int_np1 = assemble_mass_in(&int_pat, &state.interior_comp, &int_pos_np1)?;
    let stiff_int_np1 = assemble_stiffness_in(&int_pat, &state.interior_comp, &int_pos_np1, 1.0)?;
    let b_int_np1 =
        assemble_advection_bulk_in(&int_pat, &state.interior_comp, &int_pos_np1, &w_int, &u_int)?;
    let a_int_np1 = assemble_boundary_advection(
        &int_pat,
        &state.interior_comp,
        &int_pos_np1,
        &curve_np1,
        &w_int,
        &u_gamma_np1,
        BoundaryOrientation::InteriorOutward,
    )?;
    let surf_np1_ops = assemble_surface_operators(&curve_np1, 1.0, &w_curve, &u_gamma_np1)?;
    let (mass_surf_np1, stiff_surf_np1, b_surf_np1) = (
        surf_np1_ops.mass,
        surf_np1_ops.stiffness,
        surf_np1_ops.advection,
    );

    let ext_np1 = match (&state.exterior_comp, &ext_pos_np1, &w_ext, &u_ext) {
        (Some(comp), Some(pos), Some(w), Some(u)) => {
            let pat = state.exterior_pattern.as_ref().unwrap().clone();
            let mass = assemble_mass_in(&pat, comp, pos)?;
            let stiff = assemble_stiffness_in(&pat, comp, pos, 1.0)?;
            let b = assemble_advection_bulk_in(&pat, comp, pos, w, u)?;
            let a = assemble_boundary_advection(
                &pat,
                comp,
                pos,
                &curve_np1,
                w,
                &u_gamma_np1,
                BoundaryOrientation::ExteriorOutward,
            )?;
            Some((mass, stiff, b, a))
        }
        _ => None,
    };

    // (7) level-n load and coupling vectors at the current solution values
    let c_at_curve_n = state.c_at_curve();
    let l_at_curve_n = state.l_at_curve();
    let int_coupling_n = interior_coupling(
        model,
        &curve_n,
        t_n,
        &c_at_curve_n,
        &state.cs,
        &state.ls,
    )?;
    let ext_coupling_n = exterior_coupling(model, &curve_n, t_n, &l_at_curve_n, &state.ls)?;

    let f_bulk_n: Vec<Vec<f64>> = match &model.f_c {
        Some(f) => {
            let fields: Vec<&[f64]> = state.c.iter().map(|v| v.as_slice()).collect();
            (0..model.n_c)
                .map(|p| {
                    assemble_load(
                        &state.interior_comp,
                        &state.interior_pos,
                        &fields,
                        QuadDegree::Two,
                        &mut |x, vals| f(p, x, t_n, vals),
                    )
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        None => vec![vec![0.0; state.interior_pos.len()]; model.n_c],
    };
    let f_surf_n: Vec<Vec<f64>> = match &model.f_cs {
        Some(f) => {
            let fields: Vec<&[f64]> = state.cs.iter().map(|v| v.as_slice()).collect();
            (0..model.n_cs)
                .map(|q| {
                    assemble_surface_load(&curve_n, &fields, &mut |x, vals| f(q, x, t_n, vals))
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        None => vec![vec![0.0; n_curve]; model.n_cs],
    };
    let f_ls_n: Vec<Vec<f64>> = match &model.f_ls {
        Some(f) => {
            let fields: Vec<&[f64]> = state.ls.iter().map(|v| v.as_slice()).collect();
            (0..model.n_ls)
                .map(|j| {
                    assemble_surface_load(&curve_n, &fields, &mut |x, vals| f(j, x, t_n, vals))
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        None => vec![vec![0.0; n_curve]; model.n_ls],
    };
    // exterior bulk source: explicit callback plus the ligand point source
    let assemble_f_l = |positions: &[[f64; 2]],
                        l_values: &[Vec<f64>],
                        t: f64|
     -> Result<Vec<Vec<f64>>, FemError> {
        let comp = state.exterior_comp.as_ref().unwrap();
        let fields: Vec<&[f64]> = l_values.iter().map(|v| v.as_slice()).collect();
        (0..model.n_l)
            .map(|i| {
                let src = state.source.as_ref().map(|s| s.position);
                assemble_load(comp, positions, &fields, QuadDegree::Two, &mut |x, vals| {
                    let mut total = 0.0;
                    if let Some(f) = &model.f_l {
                        total += f(i, x, t, vals);
                    }
                    if let (Some(spec), Some(pos)) = (&model.point_source, src) {
                        total += spec.evaluate(pos, x);
                    }
                    total
                })
            })
            .collect()
    };
    let f_l_n: Vec<Vec<f64>> = if model.n_l > 0 {
        assemble_f_l(state.exterior_pos.as_ref().unwrap(), &state.l, t_n)?
    } else {
        vec![]
    };

    // (8) surface predictors: implicit diffusion/advection, explicit rest
    let predictor = |d: f64,
                     x_n: &[f64],
                     mass_n: &SparseMatrix,
                     coupling_n: &[f64],
                     forcing_n: &[f64]|
     -> Result<Vec<f64>, StepError> {
        let lhs = SparseMatrix::linear_combination(&[
            (1.0, &mass_surf_np1),
            (dt * d, &stiff_surf_np1),
            (-dt, &b_surf_np1),
        ]);
        let mut rhs = vec![0.0; n_curve];
        mass_n.matvec_acc(1.0, x_n, &mut rhs);
        for i in 0..n_curve {
            rhs[i] -= dt * (coupling_n[i] - forcing_n[i]);
        }
        let factor = LuFactor::new(&lhs).map_err(|source| StepError::Solve {
            stage: "surface predictor",
            source,
        })?;
        factor.solve(&rhs).map_err(|source| StepError::Solve {
            stage: "surface predictor",
            source,
        })
    };

    let ls_tilde: Vec<Vec<f64>> = match cfg.predictor_mode {
        PredictorMode::UsePreviousSurface => state.ls.clone(),
        PredictorMode::Normal => (0..model.n_ls)
            .map(|j| {
                predictor(
                    model.d_ls[j],
                    &state.ls[j],
                    &state.pos_ops.surface.mass,
                    &ext_coupling_n.surf[j],
                    &f_ls_n[j],
                )
            })
            .collect::<Result<Vec<_>, _>>()?,
    };
    let cs_tilde: Vec<Vec<f64>> = match cfg.predictor_mode {
        PredictorMode::UsePreviousSurface => state.cs.clone(),
        PredictorMode::Normal => (0..model.n_cs)
            .map(|q| {
                predictor(
                    model.d_cs[q],
                    &state.cs[q],
                    &state.pos_ops.surface.mass,
                    &int_coupling_n.surf[q],
                    &f_surf_n[q],
                )
            })
            .collect::<Result<Vec<_>, _>>()?,
    };

    // (9) exterior bulk solve
    let mut picard_iterations = 0usize;
    let mut l_np1: Vec<Vec<f64>> = Vec::new();
    if model.n_l > 0 {
        let comp = state.exterior_comp.as_ref().unwrap();
        let (mass_np1, stiff_np1, b_np1, a_np1) = ext_np1.as_ref().unwrap();
        let mass_n = &state.pos_ops.exterior.as_ref().unwrap().mass;
        let stiff_n = &state.pos_ops.exterior.as_ref().unwrap().stiff1;
        let b_n = b_ext_n.as_ref().unwrap();
        let a_n = a_ext_n.as_ref().unwrap();
        let n_ext = comp.node_count();
        let mut is_dirichlet = vec![false; n_ext];
        let dirichlet_value = match model.outer_bc {
            OuterBc::Dirichlet(v) => {
                for &i in &comp.outer_boundary_loop {
                    is_dirichlet[i] = true;
                }
                v
            }
            OuterBc::ZeroFlux => 0.0,
        };
        // predicted exterior load at the new level (source at new positions)
        let f_l_np1 = assemble_f_l(ext_pos_np1.as_ref().unwrap(), &state.l, t_np1)?;
        for i in 0..model.n_l {
            let d = model.d_l[i];
            let (lhs_base, mut rhs) = match cfg.bulk_scheme {
                SchemeKind::CrankNicolson => {
                    let lhs = SparseMatrix::linear_combination(&[
                        (1.0, mass_np1),
                        (0.5 * dt, b_np1),
                        (-0.5 * dt, a_np1),
                        (0.5 * dt * d, stiff_np1),
                    ]);
                    let rhs_mat = SparseMatrix::linear_combination(&[
                        (1.0, mass_n),
                        (-0.5 * dt, b_n),
                        (0.5 * dt, a_n),
                        (-0.5 * dt * d, stiff_n),
                    ]);
                    let mut rhs = rhs_mat.matvec(&state.l[i]);
                    let g_n = scatter_to_bulk(
                        &ext_coupling_n.bulk[i],
                        &state.exterior_curve_map,
                        n_ext,
                    );
                    for k in 0..n_ext {
                        rhs[k] += 0.5 * dt * (g_n[k] + f_l_n[i][k] + f_l_np1[i][k]);
                    }
                    (lhs, rhs)
                }
                SchemeKind::ImexEuler => {
                    let lhs = SparseMatrix::linear_combination(&[
                        (1.0, mass_np1),
                        (dt, b_np1),
                        (-dt, a_np1),
                        (dt * d, stiff_np1),
                    ]);
                    let mut rhs = mass_n.matvec(&state.l[i]);
                    let g_n = scatter_to_bulk(
                        &ext_coupling_n.bulk[i],
                        &state.exterior_curve_map,
                        n_ext,
                    );
                    for k in 0..n_ext {
                        rhs[k] += dt * (g_n[k] + f_l_n[i][k]);
                    }
                    (lhs, rhs)
                }
            };
            let solved = match cfg.bulk_scheme {
                SchemeKind::ImexEuler => {
                    let mut lhs = lhs_base;
                    apply_dirichlet(&mut lhs, &mut rhs, &is_dirichlet, dirichlet_value);
                    let factor = LuFactor::with_ordering(
                        &lhs,
                        state.exterior_ordering.as_ref().unwrap(),
                    )
                    .map_err(|source| StepError::Solve {
                        stage: "exterior bulk",
                        source,
                    })?;
                    factor.solve(&rhs).map_err(|source| StepError::Solve {
                        stage: "exterior bulk",
                        source,
                    })?
                }
                SchemeKind::CrankNicolson => {
                    // g_hat at the new level, affine in l
                    if model.exterior_affine {
                        let (q, offset) = affine_exterior_terms(
                            model,
                            i,
                            state.exterior_pattern.as_ref().unwrap(),
                            &state.exterior_curve_map,
                            &curve_np1,
                            t_np1,
                            &ls_tilde,
                        )?;
                        let mut lhs =
                            SparseMatrix::linear_combination(&[(1.0, &lhs_base), (-0.5 * dt, &q)]);
                        for k in 0..n_ext {
                            rhs[k] += 0.5 * dt * offset[k];
                        }
                        apply_dirichlet(&mut lhs, &mut rhs, &is_dirichlet, dirichlet_value);
                        let factor = LuFactor::with_ordering(
                            &lhs,
                            state.exterior_ordering.as_ref().unwrap(),
                        )
                        .map_err(|source| StepError::Solve {
                            stage: "exterior bulk",
                            source,
                        })?;
                        factor.solve(&rhs).map_err(|source| StepError::Solve {
                            stage: "exterior bulk",
                            source,
                        })?
                    } else {
                        return Err(StepError::Inconsistent(
                            "Picard exterior coupling is not used by any bundled model".into(),
                        ));
                    }
                }
            };
            l_np1.push(solved);
        }
    }

    // (10) interior bulk solve
    let n_int = state.interior_pos.len();
    let mut c_np1: Vec<Vec<f64>> = Vec::with_capacity(model.n_c);
    {
        let mass_n = &state.pos_ops.interior.mass;
        let stiff_n = &state.pos_ops.interior.stiff1;
        match cfg.bulk_scheme {
            SchemeKind::ImexEuler => {
                for p in 0..model.n_c {
                    let d = model.d_c[p];
                    let lhs = SparseMatrix::linear_combination(&[
                        (1.0, &mass_int_np1),
                        (dt, &b_int_np1),
                        (-dt, &a_int_np1),
                        (dt * d, &stiff_int_np1),
                    ]);
                    let mut rhs = mass_n.matvec(&state.c[p]);
                    let r_n = scatter_to_bulk(&int_coupling_n.bulk[p], &loop_nodes, n_int);
                    for k in 0..n_int {
                        rhs[k] += dt * (r_n[k] + f_bulk_n[p][k]);
                    }
                    let factor = LuFactor::with_ordering(&lhs, &state.interior_ordering)
                        .map_err(|source| StepError::Solve {
                            stage: "interior bulk",
                            source,
                        })?;
                    c_np1.push(factor.solve(&rhs).map_err(|source| StepError::Solve {
                        stage: "interior bulk",
                        source,
                    })?);
                    picard_iterations = picard_iterations.max(1);
                }
            }
            SchemeKind::CrankNicolson => {
                // per-species base matrices and right-hand sides
                let mut base_rhs: Vec<Vec<f64>> = Vec::with_capacity(model.n_c);
                let mut lhs_base: Vec<SparseMatrix> = Vec::with_capacity(model.n_c);
                for p in 0..model.n_c {
                    let d = model.d_c[p];
                    lhs_base.push(SparseMatrix::linear_combination(&[
                        (1.0, &mass_int_np1),
                        (0.5 * dt, &b_int_np1),
                        (-0.5 * dt, &a_int_np1),
                        (0.5 * dt * d, &stiff_int_np1),
                    ]));
                    let rhs_mat = SparseMatrix::linear_combination(&[
                        (1.0, mass_n),
                        (-0.5 * dt, &b_int_n),
                        (0.5 * dt, &a_int_n),
                        (-0.5 * dt * d, stiff_n),
                    ]);
                    let mut rhs = rhs_mat.matvec(&state.c[p]);
                    let r_n = scatter_to_bulk(&int_coupling_n.bulk[p], &loop_nodes, n_int);
                    for k in 0..n_int {
                        rhs[k] += 0.5 * dt * (r_n[k] + f_bulk_n[p][k]);
                    }
                    base_rhs.push(rhs);
                }
                if model.interior_affine {
                    // fold the (affine) new-level coupling and kinetics into
                    // the matrix: one solve per species
                    for p in 0..model.n_c {
                        let (qb, off_b) = affine_boundary_terms(
                            model,
                            p,
                            &int_pat,
                            &loop_nodes,
                            &curve_np1,
                            t_np1,
                            &cs_tilde,
                            &ls_tilde,
                        )?;
                        let mut terms: Vec<(f64, &SparseMatrix)> =
                            vec![(1.0, &lhs_base[p]), (-0.5 * dt, &qb)];
                        let fold_f = affine_bulk_terms(
                            model,
                            p,
                            &int_pat,
                            &state.interior_comp,
                            &int_pos_np1,
                            t_np1,
                        )?;
                        if let Some((qf, _)) = &fold_f {
                            terms.push((-0.5 * dt, qf));
                        }
                        let lhs = SparseMatrix::linear_combination(&terms);
                        let mut rhs = base_rhs[p].clone();
                        for k in 0..n_int {
                            rhs[k] += 0.5 * dt * off_b[k];
                        }
                        if let Some((_, off_f)) = &fold_f {
                            for k in 0..n_int {
                                rhs[k] += 0.5 * dt * off_f[k];
                            }
                        }
                        let factor = LuFactor::with_ordering(&lhs, &state.interior_ordering)
                            .map_err(|source| StepError::Solve {
                                stage: "interior bulk",
                                source,
                            })?;
                        c_np1.push(factor.solve(&rhs).map_err(|source| StepError::Solve {
                            stage: "interior bulk",
                            source,
                        })?);
                    }
                    picard_iterations = picard_iterations.max(1);
                } else {
                    // classic Picard: new-level coupling and kinetics on the
                    // right-hand side, iterated to stagnation
                    let factors: Vec<LuFactor> = lhs_base
                        .iter()
                        .map(|m| LuFactor::with_ordering(m, &state.interior_ordering))
                        .collect::<Result<_, _>>()
                        .map_err(|source| StepError::Solve {
                            stage: "interior bulk",
                            source,
                        })?;
                    let mut snapshot: Vec<Vec<f64>> = state.c.clone();
                    let scale = 1.0 + snapshot.iter().map(|v| vmax(v)).fold(0.0, f64::max);
                    let mut prev_delta = f64::INFINITY;
                    let mut converged = false;
                    for iter in 1..=cfg.picard_max_iters {
                        picard_iterations = iter;
                        // new-level vectors from the common snapshot
                        let snap_at_curve: Vec<Vec<f64>> = snapshot
                            .iter()
                            .map(|ci| loop_nodes.iter().map(|&nd| ci[nd]).collect())
                            .collect();
                        let coup = interior_coupling(
                            model,
                            &curve_np1,
                            t_np1,
                            &snap_at_curve,
                            &cs_tilde,
                            &ls_tilde,
                        )?;
                        let f_np1: Vec<Vec<f64>> = match &model.f_c {
                            Some(f) => {
                                let fields: Vec<&[f64]> =
                                    snapshot.iter().map(|v| v.as_slice()).collect();
                                (0..model.n_c)
                                    .map(|p| {
                                        assemble_load(
                                            &state.interior_comp,
                                            &int_pos_np1,
                                            &fields,
                                            QuadDegree::Two,
                                            &mut |x, vals| f(p, x, t_np1, vals),
                                        )
                                    })
                                    .collect::<Result<Vec<_>, _>>()?
                            }
                            None => vec![vec![0.0; n_int]; model.n_c],
                        };
                        let mut next: Vec<Vec<f64>> = Vec::with_capacity(model.n_c);
                        for p in 0..model.n_c {
                            let mut rhs = base_rhs[p].clone();
                            let r_np1 = scatter_to_bulk(&coup.bulk[p], &loop_nodes, n_int);
                            for k in 0..n_int {
                                rhs[k] += 0.5 * dt * (r_np1[k] + f_np1[p][k]);
                            }
                            next.push(factors[p].solve(&rhs).map_err(|source| {
                                StepError::Solve {
                                    stage: "interior bulk",
                                    source,
                                }
                            })?);
                        }
                        let delta = next
                            .iter()
                            .zip(&snapshot)
                            .map(|(a, b)| {
                                a.iter()
                                    .zip(b.iter())
                                    .map(|(x, y)| (x - y).abs())
                                    .fold(0.0f64, f64::max)
                            })
                            .fold(0.0f64, f64::max);
                        snapshot = next;
                        if delta <= 1e-14 * scale {
                            converged = true;
                            break;
                        }
                        if delta >= 0.9 * prev_delta {
                            // stagnated at rounding level or failing
                            if delta <= cfg.picard_tol * scale {
                                converged = true;
                                break;
                            }
                            return Err(StepError::PicardNonConvergence {
                                iterations: iter,
                                delta,
                            });
                        }
                        prev_delta = delta;
                    }
                    if !converged && prev_delta > cfg.picard_tol * scale {
                        return Err(StepError::PicardNonConvergence {
                            iterations: cfg.picard_max_iters,
                            delta: prev_delta,
                        });
                    }
                    c_np1 = snapshot;
                }
            }
        }
    }

    // (11) surface correctors, trapezoidal with predicted values in the
    // nonlinear terms
    let c_np1_at_curve: Vec<Vec<f64>> = c_np1
        .iter()
        .map(|ci| loop_nodes.iter().map(|&nd| ci[nd]).collect())
        .collect();
    let l_np1_at_curve: Vec<Vec<f64>> = l_np1
        .iter()
        .map(|li| state.exterior_curve_map.iter().map(|&nd| li[nd]).collect())
        .collect();
    let int_coupling_np1 = interior_coupling(
        model,
        &curve_np1,
        t_np1,
        &c_np1_at_curve,
        &cs_tilde,
        &ls_tilde,
    )?;
    let ext_coupling_np1 =
        exterior_coupling(model, &curve_np1, t_np1, &l_np1_at_curve, &ls_tilde)?;
    let f_surf_np1: Vec<Vec<f64>> = match &model.f_cs {
        Some(f) => {
            let fields: Vec<&[f64]> = cs_tilde.iter().map(|v| v.as_slice()).collect();
            (0..model.n_cs)
                .map(|q| {
                    assemble_surface_load(&curve_np1, &fields, &mut |x, vals| f(q, x, t_np1, vals))
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        None => vec![vec![0.0; n_curve]; model.n_cs],
    };
    let f_ls_np1: Vec<Vec<f64>> = match &model.f_ls {
        Some(f) => {
            let fields: Vec<&[f64]> = ls_tilde.iter().map(|v| v.as_slice()).collect();
            (0..model.n_ls)
                .map(|j| {
                    assemble_surface_load(&curve_np1, &fields, &mut |x, vals| f(j, x, t_np1, vals))
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        None => vec![vec![0.0; n_curve]; model.n_ls],
    };

    let corrector = |d: f64,
                     x_n: &[f64],
                     coupling_n: &[f64],
                     coupling_np1: &[f64],
                     forcing_n: &[f64],
                     forcing_np1: &[f64]|
     -> Result<Vec<f64>, StepError> {
        let lhs = SparseMatrix::linear_combination(&[
            (1.0, &mass_surf_np1),
            (0.5 * dt * d, &stiff_surf_np1),
            (-0.5 * dt, &b_surf_np1),
        ]);
        let rhs_mat = SparseMatrix::linear_combination(&[
            (1.0, &state.pos_ops.surface.mass),
            (-0.5 * dt * d, &state.pos_ops.surface.stiff1),
            (0.5 * dt, &b_surf_n),
        ]);
        let mut rhs = rhs_mat.matvec(x_n);
        for i in 0..n_curve {
            rhs[i] += 0.5 * dt * (forcing_np1[i] + forcing_n[i]);
            rhs[i] -= 0.5 * dt * (coupling_np1[i] + coupling_n[i]);
        }
        let factor = LuFactor::new(&lhs).map_err(|source| StepError::Solve {
            stage: "surface corrector",
            source,
        })?;
        factor.solve(&rhs).map_err(|source| StepError::Solve {
            stage: "surface corrector",
            source,
        })
    };

    let ls_np1: Vec<Vec<f64>> = (0..model.n_ls)
        .map(|j| {
            corrector(
                model.d_ls[j],
                &state.ls[j],
                &ext_coupling_n.surf[j],
                &ext_coupling_np1.surf[j],
                &f_ls_n[j],
                &f_ls_np1[j],
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let cs_np1: Vec<Vec<f64>> = (0..model.n_cs)
        .map(|q| {
            corrector(
                model.d_cs[q],
                &state.cs[q],
                &int_coupling_n.surf[q],
                &int_coupling_np1.surf[q],
                &f_surf_n[q],
                &f_surf_np1[q],
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    // (12) debug identities
    let mut max_column_sum_rel = 0.0f64;
    let mut a_gamma_max = 0.0f64;
    if cfg.conservation_check {
        let rel_colsum = |m: &SparseMatrix| -> f64 {
            let norm = m.max_abs();
            if norm == 0.0 {
                return 0.0;
            }
            vmax(&m.column_sums()) / norm
        };
        for m in [&stiff_int_np1, &b_int_n, &b_int_np1, &stiff_surf_np1, &b_surf_n, &b_surf_np1] {
            max_column_sum_rel = max_column_sum_rel.max(rel_colsum(m));
        }
        a_gamma_max = a_int_n.max_abs().max(a_int_np1.max_abs());
        if let Some((_, _, _, a)) = &ext_np1 {
            a_gamma_max = a_gamma_max.max(a.max_abs());
        }
    }

    // commit the new state
    state.time = t_np1;
    state.step_index += 1;
    state.interior_pos = int_pos_np1;
    if let Some(pos) = ext_pos_np1 {
        state.exterior_pos = Some(pos);
    }
    state.curve = curve_np1;
    state.c = c_np1;
    state.cs = cs_np1;
    if model.n_l > 0 {
        state.l = l_np1;
    }
    state.ls = ls_np1;
    state.pos_ops = PosOps {
        interior: RegionPosOps {
            mass: mass_int_np1,
            stiff1: stiff_int_np1,
        },
        exterior: ext_np1.map(|(mass, stiff, _, _)| RegionPosOps {
            mass,
            stiff1: stiff,
        }),
        surface: SurfacePosOps {
            mass: mass_surf_np1,
            stiff1: stiff_surf_np1,
        },
    };

    // ledger and telemetry
    let ledger = state.mass_ledger();
    let cons_err_abs = (ledger.grand_total - state.prev_total).abs();
    let cons_err_rel = if state.initial_total != 0.0 {
        cons_err_abs / state.initial_total.abs()
    } else {
        cons_err_abs
    };
    state.prev_total = ledger.grand_total;

    let (mut min_area, mut min_angle) = region_quality(&state.interior_comp, &state.interior_pos);
    if let (Some(comp), Some(pos)) = (&state.exterior_comp, &state.exterior_pos) {
        let (a, ang) = region_quality(comp, pos);
        min_area = min_area.min(a);
        min_angle = min_angle.min(ang);
    }

    Ok(StepDiagnostics {
        time: state.time,
        cons_err_abs,
        cons_err_rel,
        min_signed_area: min_area,
        min_angle_deg: min_angle,
        lambda: lambda_out,
        centroid: state.curve.centroid(),
        equidistribution_ratio: state.curve.equidistribution_ratio(),
        picard_iterations,
        max_column_sum_rel,
        a_gamma_max,
        source_position: state.source.as_ref().map(|s| s.position),
        ledger,
    })
}

/// Affine extraction of the exterior boundary coupling (g + g_hat) for
/// species `i`, affine in the own bulk species l.
fn affine_exterior_terms(
    model: &RDSystem,
    i: usize,
    pattern: &Arc<SparsityPattern>,
    curve_map: &[usize],
    curve: &CurveState,
    t: f64,
    ls_tilde: &[Vec<f64>],
) -> Result<(SparseMatrix, Vec<f64>), FemError> {
    debug_assert_eq!(model.n_l, 1, "affine fold-in assumes a single bulk species");
    let n = curve.len();
    let mut q = SparseMatrix::zeros(pattern.clone());
    let mut offset = vec![0.0; pattern.n_rows];
    let eval = |x: [f64; 2], lval: f64, lsv: &[f64]| -> f64 {
        let lv = [lval];
        let mut total = 0.0;
        if let Some(g) = &model.g {
            total += g(i, x, t, &lv);
        }
        if let Some(gh) = &model.g_hat {
            total += gh(i, x, t, &lv, lsv);
        }
        total
    };
    let mut lsv = vec![0.0; ls_tilde.len()];
    for k in 0..n {
        let k2 = (k + 1) % n;
        let pi = curve.positions[k];
        let pj = curve.positions[k2];
        let len = ((pj[0] - pi[0]).powi(2) + (pj[1] - pi[1]).powi(2)).sqrt();
        if len == 0.0 {
            return Err(FemError::ZeroLengthSegment { segment: k });
        }
        let (bi, bj) = (curve_map[k], curve_map[k2]);
        for (s, wq) in crate::fem::quadrature::SEG_GAUSS2 {
            let phi = [1.0 - s, s];
            let x = [
                phi[0] * pi[0] + phi[1] * pj[0],
                phi[0] * pi[1] + phi[1] * pj[1],
            ];
            for (m, f) in ls_tilde.iter().enumerate() {
                lsv[m] = phi[0] * f[k] + phi[1] * f[k2];
            }
            let f0 = eval(x, 0.0, &lsv);
            let slope = eval(x, 1.0, &lsv) - f0;
            offset[bi] += wq * len * f0 * phi[0];
            offset[bj] += wq * len * f0 * phi[1];
            let idx = [bi, bj];
            for (a, &ia) in idx.iter().enumerate() {
                for (b, &ib) in idx.iter().enumerate() {
                    q.add_to(ia, ib, wq * len * slope * phi[b] * phi[a]);
                }
            }
        }
    }
    Ok((q, offset))
}

/// Minimum signed element area and minimum corner angle at the current
/// positions.
fn region_quality(comp: &Triangulation, positions: &[[f64; 2]]) -> (f64, f64) {
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
    (min_area, min_angle)
}

/// Run a model from its initial state to `cfg.t_end`, collecting per-step
/// diagnostics.
pub fn run_to_end(
    state: &mut SystemState,
    model: &RDSystem,
    cfg: &SchemeConfig,
) -> Result<Vec<StepDiagnostics>, StepError> {
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    let mut records = Vec::with_capacity(steps);
    for _ in 0..steps {
        records.push(advance(state, model, cfg)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_circle_mesh;
    use crate::models::{problem_moving_diffusion, MeshSpec, ProblemDefaults, RDSystem};

    fn heat_only_system(d: f64) -> RDSystem {
        let defaults = ProblemDefaults {
            dt: 1e-3,
            t_end: 0.1,
            scheme: SchemeKind::CrankNicolson,
            mesh: MeshSpec::Disk {
                radius: 1.0,
                n_boundary: 32,
                target_h: 0.2,
            },
        };
        let mut sys = RDSystem::blank("heat", defaults);
        sys.n_c = 1;
        sys.n_cs = 1;
        sys.d_c = vec![d];
        sys.d_cs = vec![0.5];
        sys.ic_c = Some(Box::new(|_s, _x| 2.0));
        sys.ic_cs = Some(Box::new(|_s, _x| 1.5));
        sys
    }

    #[test]
    fn static_zero_kinetics_preserves_constants() {
        let sys = heat_only_system(1.0);
        let domain = sys.defaults.mesh.build().unwrap();
        let mut state = SystemState::new(domain, &sys).unwrap();
        let mut cfg = SchemeConfig::for_system(&sys);
        cfg.dt = 1e-3;
        for _ in 0..100 {
            let diag = advance(&mut state, &sys, &cfg).unwrap();
            assert!(diag.cons_err_rel < 1e-13);
        }
        for v in &state.c[0] {
            assert!((v - 2.0).abs() < 1e-13);
        }
        for v in &state.cs[0] {
            assert!((v - 1.5).abs() < 1e-13);
        }
    }

    #[test]
    fn translating_circle_conserves_mass_every_step() {
        let sys = problem_moving_diffusion();
        let mesh = generate_circle_mesh(1.0, 40, 0.15).unwrap();
        let mut state =
            SystemState::new(crate::mesh::DomainPair::interior_only(mesh), &sys).unwrap();
        let mut cfg = SchemeConfig::for_system(&sys);
        cfg.dt = 1e-3;
        cfg.mmpde_tau_hat = 0.02;
        for _ in 0..50 {
            let diag = advance(&mut state, &sys, &cfg).unwrap();
            assert!(
                diag.cons_err_rel < 1e-12,
                "step {}: drift {}",
                state.step_index,
                diag.cons_err_rel
            );
            assert!(diag.a_gamma_max < 1e-13, "A_Gamma = {}", diag.a_gamma_max);
            assert!(diag.min_signed_area > 0.0);
        }
        // the mesh actually followed the boundary
        let c = state.curve.centroid();
        assert!((c[0] - 0.05).abs() < 1e-6, "centroid {c:?}");
    }
}
