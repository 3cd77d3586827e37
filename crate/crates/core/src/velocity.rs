//! Interface velocity: gradient smoothing, Stefan speed, fast extension.
//!
//! The Stefan balance ρL v·n_Γ = I·n_Γ − k∇T·n_Γ determines how fast the
//! melt front eats into the material. Three stages recover a velocity
//! field the level-set transport can use everywhere:
//!
//! 1. a stabilized L² projection smooths the elementwise-constant ∇T_h
//!    into a nodal vector field G_T (mass matrix over Ω_h plus a small
//!    ghost penalty per component),
//! 2. the normal speed v_n = H(P_γ(T))·[(k G_T − I)·n_Γ/(ρL) − θ₁(T−T_m)/(γρL)]
//!    is projected onto P1 over the active mesh Ω*, with the Heaviside
//!    gate applied pointwise so only hot interface regions remove
//!    material, and
//! 3. fast marching extends v_n off the interface: nodes of cut cells get
//!    the value at their closest interface point, the far field fills in
//!    by upwind value transport ordered by distance, truncated at a band
//!    of width 8h; outside the band the speed is zero.
//!
//! The vector field v_ext = v_n^ext·n̂ then lives on background vertices.

use crate::cut::CutGeometry;
use crate::fem::assemble;
use crate::fem::quadrature::{seg_rule, tri_rule};
use crate::fem::sparse::{solve_sparse, solve_spd_many, CsrMatrix, TripletList};
use crate::fem::{ElementMap, FeField, P1ActiveSpace};
use crate::fmm::{fast_march, Seed};
use crate::geom::{point_segment_projection, Vec2};
use crate::laser::BeamSource;
use crate::levelset::NormalField;
use crate::mesh::BackgroundMesh;
use crate::stefan::{p_gamma, MaterialParams, NitscheParams};
use crate::{Error, Result};
use std::collections::HashMap;

/// Default band width factor: marching stops 8h away from the interface.
pub const BAND_FACTOR: f64 = 8.0;

/// Extended interface velocity on the background vertices.
#[derive(Debug, Clone)]
pub struct VelocityField {
    /// Extended normal speed v_n^ext; zero outside the marching band.
    pub v_n_ext: Vec<f64>,
    /// Vector velocity v_ext = v_n^ext·n̂ per background vertex.
    pub v_ext: Vec<Vec2>,
    /// Band width used by the extension.
    pub band: f64,
}

impl VelocityField {
    /// Identically zero field (no interface, or before the first step).
    pub fn zeros(mesh: &BackgroundMesh) -> Self {
        VelocityField {
            v_n_ext: vec![0.0; mesh.vertices.len()],
            v_ext: vec![Vec2::ZERO; mesh.vertices.len()],
            band: 0.0,
        }
    }

    /// P1 interpolation of the vector velocity on a background cell.
    pub fn eval(&self, tri: &[usize; 3], lambda: [f64; 3]) -> Vec2 {
        self.v_ext[tri[0]] * lambda[0]
            + self.v_ext[tri[1]] * lambda[1]
            + self.v_ext[tri[2]] * lambda[2]
    }

    /// Largest nodal speed, for CFL reporting.
    pub fn max_speed(&self) -> f64 {
        self.v_ext.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Stabilized L² projection of ∇T_h onto nodal P1 vectors:
/// (G_T, δG)_Ωh + s_GT(G_T, δG) = (∇T_h, δG)_Ωh, one component at a time.
pub fn smooth_gradient(
    mesh: &BackgroundMesh,
    cut: &CutGeometry,
    space: &P1ActiveSpace,
    t: &FeField,
    gamma_gt: f64,
) -> Result<(FeField, FeField)> {
    let n = space.n_dofs();
    let mut trip = TripletList::new(n, n);
    assemble::bulk_matrix(mesh, cut, space, 1.0, 0.0, &mut trip);
    assemble::ghost_penalty(mesh, cut, space, gamma_gt * mesh.h_max, &mut trip);
    let a = CsrMatrix::from_triplets(&trip);

    let rule = tri_rule(2);
    let mut bx = vec![0.0; n];
    let mut by = vec![0.0; n];
    for piece in &cut.pieces {
        let tri = &mesh.triangles[piece.parent];
        let map = ElementMap::from_mesh(&mesh.vertices, tri);
        let dofs = space.cell_dofs(tri);
        let grad = map.p1_gradient(t.cell_values(space, tri));
        let area = piece.area();
        for (q, &lq) in rule.points.iter().enumerate() {
            let x = piece.verts[0] * lq[0] + piece.verts[1] * lq[1] + piece.verts[2] * lq[2];
            let lam = map.barycentric(x);
            let w = rule.weights[q] * area;
            for i in 0..3 {
                bx[dofs[i]] += w * grad.x * lam[i];
                by[dofs[i]] += w * grad.y * lam[i];
            }
        }
    }
    // one factorization serves both components; the system is SPD (mass plus
    // ghost penalty), and the iterative path tends to stagnate on
    // sliver-dominated cut mass matrices anyway
    let mut sols = solve_spd_many(&a, &[&bx, &by])?;
    let gy = sols.pop().expect("two solutions");
    let gx = sols.pop().expect("two solutions");
    Ok((FeField { values: gx }, FeField { values: gy }))
}

/// Projects the gated Stefan speed onto P1 over the active mesh Ω*:
/// (v_n, δv)_Ω* = H(P_γ(T))·[((k G_T − I)·n̂/(ρL), δv)_Ω* − (θ₁/(γρL))(T − T_m, δv)_Γh].
///
/// The Heaviside gate is evaluated pointwise at quadrature points, using
/// the smoothed gradient and the projected unit normal; with θ₁ = 0 the
/// interface correction term is skipped entirely.
#[allow(clippy::too_many_arguments)]
pub fn normal_velocity(
    mesh: &BackgroundMesh,
    cut: &CutGeometry,
    space: &P1ActiveSpace,
    t: &FeField,
    g: (&FeField, &FeField),
    normals: &NormalField,
    beam: &dyn BeamSource,
    time: f64,
    material: &MaterialParams,
    nitsche: &NitscheParams,
) -> Result<FeField> {
    let n = space.n_dofs();
    let gamma = nitsche.gamma(mesh.h_max);
    let theta = nitsche.variant.theta();
    let rho_l = material.rho * material.latent_heat;
    let k = material.k;
    let t_m = material.t_melt;

    // exact P1 mass matrix over the full triangles of all active cells
    let mut trip = TripletList::new(n, n);
    for &cell in &cut.active_cells {
        let tri = &mesh.triangles[cell];
        let map = ElementMap::from_mesh(&mesh.vertices, tri);
        let dofs = space.cell_dofs(tri);
        for i in 0..3 {
            for j in 0..3 {
                let m = if i == j { map.area / 6.0 } else { map.area / 12.0 };
                trip.push(dofs[i], dofs[j], m);
            }
        }
    }
    let a = CsrMatrix::from_triplets(&trip);

    let rule = tri_rule(4);
    let mut rhs = vec![0.0; n];
    for &cell in &cut.active_cells {
        let tri = &mesh.triangles[cell];
        let map = ElementMap::from_mesh(&mesh.vertices, tri);
        let dofs = space.cell_dofs(tri);
        let tv = t.cell_values(space, tri);
        let gxv = g.0.cell_values(space, tri);
        let gyv = g.1.cell_values(space, tri);
        for (q, &lam) in rule.points.iter().enumerate() {
            let x = map.point(lam);
            let n_unit = normals.unit_at(tri, lam);
            let gq = Vec2::new(
                ElementMap::p1_value(gxv, lam),
                ElementMap::p1_value(gyv, lam),
            );
            let flux = beam.flux(x, n_unit, time);
            let i_dot_n = flux.dot(n_unit);
            let t_val = ElementMap::p1_value(tv, lam);
            let p = p_gamma(t_val, gq.dot(n_unit), i_dot_n, k, gamma, t_m);
            if p <= 0.0 {
                continue;
            }
            let speed = (k * gq - flux).dot(n_unit) / rho_l;
            let w = rule.weights[q] * map.area * speed;
            for i in 0..3 {
                rhs[dofs[i]] += w * lam[i];
            }
        }
    }
    if theta.0 != 0.0 {
        let srule = seg_rule(5);
        for seg in &cut.segments {
            let tri = &mesh.triangles[seg.parent];
            let map = ElementMap::from_mesh(&mesh.vertices, tri);
            let dofs = space.cell_dofs(tri);
            let tv = t.cell_values(space, tri);
            let gxv = g.0.cell_values(space, tri);
            let gyv = g.1.cell_values(space, tri);
            for (q, &s) in srule.points.iter().enumerate() {
                let x = seg.a.lerp(seg.b, s);
                let lam = map.barycentric(x);
                let n_unit = normals.unit_at(tri, lam);
                let gq = Vec2::new(
                    ElementMap::p1_value(gxv, lam),
                    ElementMap::p1_value(gyv, lam),
                );
                let flux = beam.flux(x, n_unit, time);
                let t_val = ElementMap::p1_value(tv, lam);
                let p = p_gamma(t_val, gq.dot(n_unit), flux.dot(n_unit), k, gamma, t_m);
                if p <= 0.0 {
                    continue;
                }
                let w = srule.weights[q] * seg.length;
                let c = w * theta.0 / (gamma * rho_l) * (t_val - t_m);
                for i in 0..3 {
                    rhs[dofs[i]] -= c * lam[i];
                }
            }
        }
    }
    let (v, _) = solve_sparse(&a, &rhs)?;
    Ok(FeField { values: v })
}

/// Closest interface segment to a point, via expanding-ring search over
/// the background squares that contain segments.
struct SegmentLocator<'a> {
    mesh: &'a BackgroundMesh,
    cut: &'a CutGeometry,
    by_square: HashMap<(i64, i64), Vec<u32>>,
}

impl<'a> SegmentLocator<'a> {
    fn new(mesh: &'a BackgroundMesh, cut: &'a CutGeometry) -> Self {
        let mut by_square: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (si, seg) in cut.segments.iter().enumerate() {
            let square = seg.parent / 2;
            let key = ((square % mesh.nx) as i64, (square / mesh.nx) as i64);
            by_square.entry(key).or_default().push(si as u32);
        }
        SegmentLocator { mesh, cut, by_square }
    }

    fn square_of(&self, p: Vec2) -> (i64, i64) {
        let d = &self.mesh.domain;
        let hx = (d.x1 - d.x0) / self.mesh.nx as f64;
        let hy = (d.y1 - d.y0) / self.mesh.ny as f64;
        let ix = (((p.x - d.x0) / hx).floor() as i64).clamp(0, self.mesh.nx as i64 - 1);
        let iy = (((p.y - d.y0) / hy).floor() as i64).clamp(0, self.mesh.ny as i64 - 1);
        (ix, iy)
    }

    /// Returns (segment index, distance, parameter in [0,1]) of the
    /// closest point on the interface polyline.
    fn closest(&self, p: Vec2) -> (usize, f64, f64) {
        let (ix0, iy0) = self.square_of(p);
        let d = &self.mesh.domain;
        let h_min = ((d.x1 - d.x0) / self.mesh.nx as f64).min((d.y1 - d.y0) / self.mesh.ny as f64);
        let max_ring = self.mesh.nx.max(self.mesh.ny) as i64 + 1;
        let mut best: Option<(usize, f64, f64)> = None;
        for ring in 0..=max_ring {
            if let Some((_, bd, _)) = best {
                // any segment in a farther ring is at least this far away
                if (ring - 1).max(0) as f64 * h_min > bd {
                    break;
                }
            }
            for dy in -ring..=ring {
                for dx in -ring..=ring {
                    if dx.abs().max(dy.abs()) != ring {
                        continue;
                    }
                    let Some(ids) = self.by_square.get(&(ix0 + dx, iy0 + dy)) else {
                        continue;
                    };
                    for &si in ids {
                        let seg = &self.cut.segments[si as usize];
                        let (dist, s) = point_segment_projection(p, seg.a, seg.b);
                        if best.is_none_or(|(_, bd, _)| dist < bd) {
                            best = Some((si as usize, dist, s));
                        }
                    }
                }
            }
        }
        best.expect("nonempty interface: some ring contains a segment")
    }
}

/// Extends the interface speed to the background vertices by fast
/// marching within `band` of the interface.
pub fn fast_march_extend(
    mesh: &BackgroundMesh,
    cut: &CutGeometry,
    space: &P1ActiveSpace,
    v_n: &FeField,
    band: f64,
) -> Result<Vec<f64>> {
    if cut.segments.is_empty() {
        return Err(Error::Solver(
            "velocity extension needs a nonempty interface".into(),
        ));
    }
    let locator = SegmentLocator::new(mesh, cut);
    // near field: nodes of cut cells carry the speed at their closest
    // interface point
    let mut seed_verts: Vec<usize> = cut
        .cut_cells
        .iter()
        .flat_map(|&c| mesh.triangles[c])
        .collect();
    seed_verts.sort_unstable();
    seed_verts.dedup();
    let mut seeds = Vec::with_capacity(seed_verts.len());
    for &v in &seed_verts {
        let (si, dist, s) = locator.closest(mesh.vertices[v]);
        let seg = &cut.segments[si];
        let tri = &mesh.triangles[seg.parent];
        let map = ElementMap::from_mesh(&mesh.vertices, tri);
        let lam = map.barycentric(seg.a.lerp(seg.b, s));
        let value = ElementMap::p1_value(v_n.cell_values(space, tri), lam);
        seeds.push(Seed { vertex: v, dist, value });
    }
    let march = fast_march(
        &mesh.vertices,
        &mesh.triangles,
        &mesh.topo.vertex_tris,
        &seeds,
        band,
    );
    Ok(march.value)
}

/// Nodal product v_ext = v_n^ext·n̂ with the normalized projected normal.
pub fn vectorize(v_n_ext: &[f64], normals: &NormalField) -> Vec<Vec2> {
    v_n_ext
        .iter()
        .zip(&normals.values)
        .map(|(&s, n)| n.normalized_or(Vec2::ZERO) * s)
        .collect()
}

/// Runs the full pipeline: smoothing, Stefan speed, extension, vector.
#[allow(clippy::too_many_arguments)]
pub fn velocity_pipeline(
    mesh: &BackgroundMesh,
    cut: &CutGeometry,
    space: &P1ActiveSpace,
    t: &FeField,
    normals: &NormalField,
    beam: &dyn BeamSource,
    time: f64,
    material: &MaterialParams,
    nitsche: &NitscheParams,
) -> Result<VelocityField> {
    let clock = std::time::Instant::now();
    let g = smooth_gradient(mesh, cut, space, t, nitsche.gamma_gt)?;
    let t_smooth = clock.elapsed();
    let v_n = normal_velocity(
        mesh, cut, space, t, (&g.0, &g.1), normals, beam, time, material, nitsche,
    )?;
    let t_project = clock.elapsed();
    let band = BAND_FACTOR * mesh.h_max;
    let v_n_ext = fast_march_extend(mesh, cut, space, &v_n, band)?;
    let v_ext = vectorize(&v_n_ext, normals);
    log::debug!(
        "velocity pipeline: smoothing {:.1} ms, projection {:.1} ms, extension {:.1} ms",
        1e3 * t_smooth.as_secs_f64(),
        1e3 * (t_project - t_smooth).as_secs_f64(),
        1e3 * (clock.elapsed() - t_project).as_secs_f64(),
    );
    Ok(VelocityField { v_n_ext, v_ext, band })
}
