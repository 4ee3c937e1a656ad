//! Truss-relaxation mesh generation with fixed, equidistributed boundary
//! nodes.
//!
//! Interior points are seeded on a hexagonal lattice (rejection-sampled by
//! the sizing function), then relaxed under repulsive bar forces with
//! Delaunay retriangulation every few iterations until the maximum node
//! displacement per iteration falls below 1e-3 of the reference spacing.
//! Boundary nodes never move, so generated meshes reuse the supplied
//! boundary positions bitwise.

use super::delaunay;
use super::{MeshError, Triangulation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FSCALE: f64 = 1.2;
const DELTAT: f64 = 0.2;
const RETRI_EVERY: usize = 20;
const DPTOL: f64 = 1e-3;
const SEED_MARGIN: f64 = 0.7;
const MAX_ITER: usize = 2000;

struct Domain<'a> {
    fd: &'a dyn Fn([f64; 2]) -> f64,
    /// relative target edge length, 1.0 at the finest region
    fh: &'a dyn Fn([f64; 2]) -> f64,
    h0: f64,
    bbox: ([f64; 2], [f64; 2]),
}

fn grad_fd(fd: &dyn Fn([f64; 2]) -> f64, p: [f64; 2], h0: f64) -> [f64; 2] {
    let d = 1e-6 * h0;
    let gx = (fd([p[0] + d, p[1]]) - fd([p[0] - d, p[1]])) / (2.0 * d);
    let gy = (fd([p[0], p[1] + d]) - fd([p[0], p[1] - d])) / (2.0 * d);
    [gx, gy]
}

fn seed_interior(dom: &Domain, seed: u64) -> Vec<[f64; 2]> {
    let (lo, hi) = dom.bbox;
    let dy = dom.h0 * 3.0f64.sqrt() / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::new();
    let mut row = 0usize;
    let mut y = lo[1];
    while y <= hi[1] {
        let offset = if row % 2 == 1 { dom.h0 / 2.0 } else { 0.0 };
        let mut x = lo[0] + offset;
        while x <= hi[0] {
            let p = [x, y];
            let fh = (dom.fh)(p);
            if (dom.fd)(p) < -SEED_MARGIN * dom.h0 * fh {
                // thin out where the target size is coarser
                let keep = 1.0 / (fh * fh);
                if keep >= 1.0 || rng.gen::<f64>() < keep {
                    pts.push(p);
                }
            }
            x += dom.h0;
        }
        y += dy;
        row += 1;
    }
    pts
}

fn relax(
    dom: &Domain,
    fixed: &[[f64; 2]],
    free: Vec<[f64; 2]>,
) -> Result<(Vec<[f64; 2]>, Vec<[usize; 3]>), MeshError> {
    let nf = fixed.len();
    let geps = 1e-3 * dom.h0;
    let mut points: Vec<[f64; 2]> = fixed.iter().chain(free.iter()).copied().collect();
    let mut tris: Vec<[usize; 3]> = Vec::new();
    let mut since_tri = f64::INFINITY; // force initial triangulation
    let mut deltat = DELTAT;

    for iter in 0..MAX_ITER {
        // fixed retriangulation cadence, plus a movement trigger as a guard
        // against large early displacements
        if iter % RETRI_EVERY == 0 || since_tri > 0.2 * dom.h0 {
            let raw = delaunay::triangulate(&points)
                .map_err(|e| MeshError::InvalidGeometry(format!("delaunay: {e}")))?;
            tris = raw
                .into_iter()
                .filter(|t| {
                    let c = [
                        (points[t[0]][0] + points[t[1]][0] + points[t[2]][0]) / 3.0,
                        (points[t[0]][1] + points[t[1]][1] + points[t[2]][1]) / 3.0,
                    ];
                    (dom.fd)(c) < -geps
                })
                .collect();
            since_tri = 0.0;
        }
        // unique bars
        let mut bars: Vec<(usize, usize)> = Vec::with_capacity(3 * tris.len());
        for t in &tris {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                bars.push((a.min(b), a.max(b)));
            }
        }
        bars.sort_unstable();
        bars.dedup();

        let mut l2_sum = 0.0;
        let mut h2_sum = 0.0;
        let mut lengths = Vec::with_capacity(bars.len());
        let mut sizes = Vec::with_capacity(bars.len());
        for &(a, b) in &bars {
            let d = [points[b][0] - points[a][0], points[b][1] - points[a][1]];
            let l = (d[0] * d[0] + d[1] * d[1]).sqrt();
            let mid = [
                0.5 * (points[a][0] + points[b][0]),
                0.5 * (points[a][1] + points[b][1]),
            ];
            let h = (dom.fh)(mid);
            l2_sum += l * l;
            h2_sum += h * h;
            lengths.push(l);
            sizes.push(h);
        }
        let scale = FSCALE * (l2_sum / h2_sum).sqrt();

        let mut force = vec![[0.0f64; 2]; points.len()];
        for (bi, &(a, b)) in bars.iter().enumerate() {
            let l = lengths[bi];
            let l0 = sizes[bi] * scale;
            let f = (l0 - l).max(0.0);
            if f > 0.0 && l > 0.0 {
                let d = [points[b][0] - points[a][0], points[b][1] - points[a][1]];
                let fv = [f * d[0] / l, f * d[1] / l];
                force[a][0] -= fv[0];
                force[a][1] -= fv[1];
                force[b][0] += fv[0];
                force[b][1] += fv[1];
            }
        }

        let mut max_disp = 0.0f64; // relative to the local target size
        let mut max_disp_abs = 0.0f64;
        for i in nf..points.len() {
            let p_old = points[i];
            points[i][0] += deltat * force[i][0];
            points[i][1] += deltat * force[i][1];
            // pull escapees back inside
            let fh = (dom.fh)(points[i]);
            if (dom.fd)(points[i]) > -0.2 * dom.h0 * fh {
                let target = -0.5 * dom.h0 * fh;
                let mut p = points[i];
                for _ in 0..3 {
                    let v = (dom.fd)(p) - target;
                    let g = grad_fd(dom.fd, p, dom.h0);
                    let g2 = (g[0] * g[0] + g[1] * g[1]).max(1e-30);
                    p = [p[0] - v * g[0] / g2, p[1] - v * g[1] / g2];
                }
                points[i] = p;
            }
            let moved =
                ((points[i][0] - p_old[0]).powi(2) + (points[i][1] - p_old[1]).powi(2)).sqrt();
            max_disp = max_disp.max(moved / (dom.h0 * fh));
            max_disp_abs = max_disp_abs.max(moved);
        }
        since_tri += max_disp_abs;

        if iter > MAX_ITER * 3 / 5 {
            deltat = DELTAT * 0.5;
        }
        if max_disp < DPTOL && iter > 0 {
            let raw = delaunay::triangulate(&points)
                .map_err(|e| MeshError::InvalidGeometry(format!("delaunay: {e}")))?;
            let tris = raw
                .into_iter()
                .filter(|t| {
                    let c = [
                        (points[t[0]][0] + points[t[1]][0] + points[t[2]][0]) / 3.0,
                        (points[t[0]][1] + points[t[1]][1] + points[t[2]][1]) / 3.0,
                    ];
                    (dom.fd)(c) < -geps
                })
                .collect();
            return Ok((points, tris));
        }
    }
    Err(MeshError::NonConvergence {
        iterations: MAX_ITER,
    })
}

/// Drop nodes unused by `tris`, preserving the first `nf` (fixed) nodes.
fn compact(
    points: Vec<[f64; 2]>,
    tris: Vec<[usize; 3]>,
    nf: usize,
) -> (Vec<[f64; 2]>, Vec<[usize; 3]>) {
    let mut used = vec![false; points.len()];
    for i in 0..nf {
        used[i] = true;
    }
    for t in &tris {
        for &v in t {
            used[v] = true;
        }
    }
    let mut remap = vec![usize::MAX; points.len()];
    let mut out_pts = Vec::with_capacity(points.len());
    for (i, &u) in used.iter().enumerate() {
        if u {
            remap[i] = out_pts.len();
            out_pts.push(points[i]);
        }
    }
    let out_tris = tris
        .into_iter()
        .map(|t| [remap[t[0]], remap[t[1]], remap[t[2]]])
        .collect();
    (out_pts, out_tris)
}

fn build(
    dom: &Domain,
    fixed: Vec<[f64; 2]>,
    inner_loop_len: usize,
    outer_loop_len: usize,
    seed: u64,
) -> Result<Triangulation, MeshError> {
    let mut last_err = None;
    for attempt in 0..3 {
        let free = seed_interior(dom, seed.wrapping_add(attempt));
        match relax(dom, &fixed, free) {
            Ok((points, tris)) => {
                let (points, tris) = compact(points, tris, fixed.len());
                let mesh = Triangulation {
                    node_coords: points,
                    triangles: tris,
                    inner_boundary_loop: (0..inner_loop_len).collect(),
                    outer_boundary_loop: (inner_loop_len..inner_loop_len + outer_loop_len)
                        .collect(),
                };
                match mesh.validate() {
                    Ok(()) => return Ok(mesh),
                    Err(e) => last_err = Some(e),
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap())
}

/// Quasi-uniform mesh of a disk with exactly `n_boundary` equally spaced
/// boundary nodes on the circle.
pub fn generate_circle_mesh(
    radius: f64,
    n_boundary: usize,
    target_h: f64,
) -> Result<Triangulation, MeshError> {
    if !(radius > 0.0) {
        return Err(MeshError::InvalidGeometry(format!(
            "radius must be positive, got {radius}"
        )));
    }
    if n_boundary < 8 {
        return Err(MeshError::InvalidGeometry(format!(
            "need at least 8 boundary nodes, got {n_boundary}"
        )));
    }
    if !(target_h > 0.0) {
        return Err(MeshError::InvalidGeometry(format!(
            "target_h must be positive, got {target_h}"
        )));
    }
    let fixed = crate::curve::circle_polygon(radius, n_boundary, 0.0);
    let fd = move |p: [f64; 2]| (p[0] * p[0] + p[1] * p[1]).sqrt() - radius;
    let fh = |_p: [f64; 2]| 1.0;
    let dom = Domain {
        fd: &fd,
        fh: &fh,
        h0: target_h,
        bbox: ([-radius, -radius], [radius, radius]),
    };
    build(&dom, fixed, n_boundary, 0, 7)
}

/// Graded annulus between a given inner loop and a circle of
/// `outer_radius`. The inner loop positions are reused bitwise; the target
/// edge length grows linearly from the inner spacing to `grading` times it
/// at the outer circle.
pub fn generate_annulus_mesh(
    inner_loop: &[[f64; 2]],
    outer_radius: f64,
    grading: f64,
) -> Result<Triangulation, MeshError> {
    let n_in = inner_loop.len();
    if n_in < 8 {
        return Err(MeshError::InvalidGeometry(format!(
            "inner loop needs at least 8 nodes, got {n_in}"
        )));
    }
    if !(grading >= 1.0) {
        return Err(MeshError::InvalidGeometry(format!(
            "grading must be >= 1, got {grading}"
        )));
    }
    let r_max = inner_loop
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt())
        .fold(0.0f64, f64::max);
    if !(outer_radius > r_max) {
        return Err(MeshError::InvalidGeometry(format!(
            "outer radius {outer_radius} does not contain the inner loop (max radius {r_max})"
        )));
    }
    // mean inner spacing sets the fine scale
    let mut h_inner = 0.0;
    for i in 0..n_in {
        let p = inner_loop[i];
        let q = inner_loop[(i + 1) % n_in];
        h_inner += ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
    }
    h_inner /= n_in as f64;

    let h_outer = grading * h_inner;
    let n_outer = ((2.0 * std::f64::consts::PI * outer_radius / h_outer).round() as usize).max(8);
    let outer: Vec<[f64; 2]> = crate::curve::circle_polygon(outer_radius, n_outer, 0.0);

    let inner_owned: Vec<[f64; 2]> = inner_loop.to_vec();
    let r_mean = inner_loop
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt())
        .sum::<f64>()
        / n_in as f64;
    // distance to the inner loop; cheap radial form away from the loop
    let far = r_max + 4.0 * h_inner;
    let inner_distance = {
        let inner = inner_owned.clone();
        move |p: [f64; 2]| {
            let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
            if rho > far {
                rho - r_mean
            } else {
                polygon_signed_distance(&inner, p)
            }
        }
    };
    let fd = {
        let d_in = inner_distance.clone();
        move |p: [f64; 2]| {
            let d_out = (p[0] * p[0] + p[1] * p[1]).sqrt() - outer_radius;
            d_out.max(-d_in(p))
        }
    };
    let span = outer_radius - r_mean;
    let fh = {
        let d_in = inner_distance;
        move |p: [f64; 2]| {
            let s = (d_in(p).max(0.0) / span).clamp(0.0, 1.0);
            1.0 + (grading - 1.0) * s
        }
    };
    let mut fixed = inner_owned.clone();
    fixed.extend_from_slice(&outer);
    let dom = Domain {
        fd: &fd,
        fh: &fh,
        h0: h_inner,
        bbox: (
            [-outer_radius, -outer_radius],
            [outer_radius, outer_radius],
        ),
    };
    build(&dom, fixed, n_in, n_outer, 11)
}

/// Boundary radius of the four-lobed test domain, measured about (0.5, 0.5).
pub fn star_radius(theta: f64) -> f64 {
    0.234 - 0.0702 * (4.0 * theta).sin()
}

/// Fitted quasi-uniform mesh of the four-lobed domain with boundary nodes
/// equidistributed in arclength on the exact boundary curve.
pub fn generate_star_mesh(h: f64) -> Result<Triangulation, MeshError> {
    if !(h > 0.0) {
        return Err(MeshError::InvalidGeometry(format!(
            "h must be positive, got {h}"
        )));
    }
    let center = [0.5, 0.5];
    // cumulative arclength table
    let m = 200_000usize;
    let dth = 2.0 * std::f64::consts::PI / m as f64;
    let speed = |th: f64| {
        let r = star_radius(th);
        let dr = -0.2808 * (4.0 * th).cos();
        (r * r + dr * dr).sqrt()
    };
    let mut cum = Vec::with_capacity(m + 1);
    cum.push(0.0);
    for k in 0..m {
        let th0 = k as f64 * dth;
        let th1 = th0 + dth;
        cum.push(cum[k] + 0.5 * (speed(th0) + speed(th1)) * dth);
    }
    let total = *cum.last().unwrap();
    let n_b = (total / h).round().max(16.0) as usize;
    if n_b < 32 {
        return Err(MeshError::InvalidGeometry(format!(
            "h = {h} too coarse to resolve the lobes ({n_b} boundary nodes)"
        )));
    }
    let mut fixed = Vec::with_capacity(n_b);
    let mut idx = 0usize;
    for k in 0..n_b {
        let s = k as f64 * total / n_b as f64;
        while idx + 1 < cum.len() && cum[idx + 1] < s {
            idx += 1;
        }
        let t = if cum[idx + 1] > cum[idx] {
            (s - cum[idx]) / (cum[idx + 1] - cum[idx])
        } else {
            0.0
        };
        let th = (idx as f64 + t) * dth;
        let r = star_radius(th);
        fixed.push([center[0] + r * th.cos(), center[1] + r * th.sin()]);
    }
    let fd = move |p: [f64; 2]| {
        let dx = p[0] - center[0];
        let dy = p[1] - center[1];
        let th = dy.atan2(dx);
        (dx * dx + dy * dy).sqrt() - star_radius(th)
    };
    let fh = |_p: [f64; 2]| 1.0;
    let dom = Domain {
        fd: &fd,
        fh: &fh,
        h0: h,
        bbox: ([0.5 - 0.32, 0.5 - 0.32], [0.5 + 0.32, 0.5 + 0.32]),
    };
    let mesh = build(&dom, fixed, n_b, 0, 13)?;
    let report = super::mesh_quality(&mesh);
    if report.min_angle_deg < 10.0 {
        return Err(MeshError::InvalidGeometry(format!(
            "h = {h} too coarse: min angle {:.2} deg",
            report.min_angle_deg
        )));
    }
    Ok(mesh)
}

/// Signed distance to a closed polygon: negative inside.
pub fn polygon_signed_distance(poly: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let n = poly.len();
    let mut dist2 = f64::INFINITY;
    let mut inside = false;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        // distance to segment
        let ab = [b[0] - a[0], b[1] - a[1]];
        let ap = [p[0] - a[0], p[1] - a[1]];
        let len2 = ab[0] * ab[0] + ab[1] * ab[1];
        let t = if len2 > 0.0 {
            ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
        dist2 = dist2.min(d2);
        // crossing test
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x_int = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x_int {
                inside = !inside;
            }
        }
    }
    let d = dist2.sqrt();
    if inside {
        -d
    } else {
        d
    }
}
