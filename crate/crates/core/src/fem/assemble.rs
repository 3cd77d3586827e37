//! Assembly kernels for the cut heat problem.
//!
//! Bulk terms integrate over the volume pieces of the cut decomposition
//! (inside cells contribute their full triangle), interface terms over the
//! segment polyline with the exact per-segment normals, boundary terms
//! over the material parts of the box boundary, and ghost penalties over
//! the marked interior faces. All loops run in fixed index order and push
//! into a shared triplet list, so the compressed matrix is reproducible
//! bit for bit. The Nitsche interface block always pushes its full 3×3
//! pattern, even for variants where it vanishes, because the Newton
//! tangent later needs those matrix positions.

use crate::cut::{BoundaryPiece, CutGeometry, InterfaceSegment};
use crate::fem::quadrature::{seg_rule, tri_rule};
use crate::fem::sparse::TripletList;
use crate::fem::{ElementMap, FeField, P1ActiveSpace};
use crate::geom::Vec2;
use crate::mesh::BackgroundMesh;

/// Adds `c_mass (T, δT) + c_stiff (∇T, ∇δT)` over the material domain.
pub fn bulk_matrix(
    mesh: &BackgroundMesh,
    cut: &CutGeometry,
    space: &P1ActiveSpace,
    c_mass: f64,
    c_stiff: f64,
    out: &mut TripletList,
) {
    let rule = tri_rule(2);
    for piece in &cut.pieces {
        let tri = &mesh.triangles[piece.parent];
        let map = ElementMap::from_mesh(&mesh.vertices, tri);
        let dofs = space.cell_dofs(tri);
        let area = piece.area();
        let mut block = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                block[i][j] = c_stiff * area * map.grad_lambda[i].dot(map.grad_lambda[j]);
            }
        }
        if c_mass != 0.0 {
            for (q, &lq) in rule.points.iter().enumerate() {
                let x = piece.verts[0] * lq[0] + piece.verts[1] * lq[1] + piece.verts[2] * lq[2];
                let lam = map.barycentric(x);
                let w = c_mass * rule.weights[q] * area;
                for i in 0..3 {
                    for j in 0..3 {
                        block[i][j] += w * lam[i] * lam[j];
                    }
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                out.push(dofs[i], dofs[j], block[i][j]);
            }
        }
    }
}

/// Adds `coeff (T_prev, δT)` over the material domain to the load vector.
pub fn bulk_mass_rhs(
    mesh: &BackgroundMesh,
    cut: &CutGeometry,
    space: &P1ActiveSpace,
    prev: &FeField,
    coeff: f64,
    out: &mut [f64],
) {
    let rule = tri_rule(2);
    for piece in &cut.pieces {
        let tri = &mesh.triangles[piece.parent];
        let map = ElementMap::from_mesh(&mesh.vertices, tri);
        let dofs = space.cell_dofs(tri);
        let vals = [prev.values[dofs[0]], prev.values[dofs[1]], prev.values[dofs[2]]];
        let area = piece.area();
        for (q, &lq) in rule.points.iter().enumerate() {
            let x = piece.verts[0] * lq[0] + piece.verts[1] * lq[1] + piece.verts[2] * lq[2];
            let lam = map.barycentric(x);
            let w = coeff * rule.weights[q] * area;
            let u = ElementMap::p1_value(vals, lam);
            for i in 0..3 {
                out[dofs[i]] += w * u * lam[i];
            }
        }
    }
}

/// Adds `(f, δT)` over the material domain to the load vector.
pub fn source_rhs(
    mesh: &BackgroundMesh,
    cut: &CutGeometry,
    space: &P1ActiveSpace,
    f: impl Fn(Vec2) -> f64,
    out: &mut [f64],
) {
    let rule = tri_rule(4);
    for piece in &cut.pieces {
        let tri = &mesh.triangles[piece.parent];
        let map = ElementMap::from_mesh(&mesh.vertices, tri);
        let dofs = space.cell_dofs(tri);
        let area = piece.area();
        for (q, &lq) in rule.points.iter().enumerate() {
            let x = piece.verts[0] * lq[0] + piece.verts[1] * lq[1] + piece.verts[2] * lq[2];
            let lam = map.barycentric(x);
            let w = rule.weights[q] * area * f(x);
            for i in 0..3 {
                out[dofs[i]] += w * lam[i];
            }
        }
    }
}

/// Adds `coeff Σ_F |F| (⟦∇T⟧·n_F)(⟦∇δT⟧·n_F)` over the ghost faces.
///
/// The caller supplies the full coefficient (γ_T·k·h for the temperature,
/// γ_{G_T}·h for gradient smoothing).
pub fn ghost_penalty(
    mesh: &BackgroundMesh,
    cut: &CutGeometry,
    space: &P1ActiveSpace,
    coefficient: f64,
    out: &mut TripletList,
) {
    for &e in &cut.ghost_faces {
        let (kp, km, n) = mesh
            .face_jump_pairs(e)
            .expect("ghost faces are interior by construction");
        let len = mesh.edges[e].length;
        let tri_p = &mesh.triangles[kp];
        let tri_m = &mesh.triangles[km];
        let map_p = ElementMap::from_mesh(&mesh.vertices, tri_p);
        let map_m = ElementMap::from_mesh(&mesh.vertices, tri_m);
        // union of the two cells' vertices: the shared pair plus one
        // opposite vertex on each side
        let mut dofs: Vec<usize> = Vec::with_capacity(4);
        let mut jumps: Vec<f64> = Vec::with_capacity(4);
        for (local, v) in tri_p.iter().enumerate() {
            dofs.push(space.vertex_to_dof[*v]);
            jumps.push(map_p.grad_lambda[local].dot(n));
        }
        for (local, v) in tri_m.iter().enumerate() {
            let grad = map_m.grad_lambda[local].dot(n);
            if let Some(pos) = tri_p.iter().position(|u| u == v) {
                jumps[pos] -= grad;
            } else {
                dofs.push(space.vertex_to_dof[*v]);
                jumps.push(-grad);
            }
        }
        for i in 0..dofs.len() {
            for j in 0..dofs.len() {
                out.push(dofs[i], dofs[j], coefficient * len * jumps[i] * jumps[j]);
            }
        }
    }
}

/// Element block of the Nitsche Dirichlet form on one boundary piece:
/// −(k∇T·n)δT − (k∇δT·n)T + (kγ_b/h) T δT.
pub(crate) fn dirichlet_edge_block(
    map: &ElementMap,
    a: Vec2,
    b: Vec2,
    n: Vec2,
    k: f64,
    penalty: f64,
) -> [[f64; 3]; 3] {
    let rule = seg_rule(5);
    let len = a.distance(b);
    let dn = [
        map.grad_lambda[0].dot(n),
        map.grad_lambda[1].dot(n),
        map.grad_lambda[2].dot(n),
    ];
    let mut block = [[0.0f64; 3]; 3];
    for (q, &s) in rule.points.iter().enumerate() {
        let x = a.lerp(b, s);
        let lam = map.barycentric(x);
        let w = rule.weights[q] * len;
        for i in 0..3 {
            for j in 0..3 {
                block[i][j] +=
                    w * (-k * dn[j] * lam[i] - k * dn[i] * lam[j] + penalty * lam[i] * lam[j]);
            }
        }
    }
    block
}

pub(crate) fn dirichlet_edge_rhs(
    map: &ElementMap,
    a: Vec2,
    b: Vec2,
    n: Vec2,
    k: f64,
    penalty: f64,
    t_d: impl Fn(Vec2) -> f64,
) -> [f64; 3] {
    let rule = seg_rule(5);
    let len = a.distance(b);
    let dn = [
        map.grad_lambda[0].dot(n),
        map.grad_lambda[1].dot(n),
        map.grad_lambda[2].dot(n),
    ];
    let mut rhs = [0.0f64; 3];
    for (q, &s) in rule.points.iter().enumerate() {
        let x = a.lerp(b, s);
        let lam = map.barycentric(x);
        let w = rule.weights[q] * len * t_d(x);
        for i in 0..3 {
            rhs[i] += w * (-k * dn[i] + penalty * lam[i]);
        }
    }
    rhs
}

/// Adds the Nitsche Dirichlet matrix terms on the selected boundary pieces.
pub fn dirichlet_matrix(
    mesh: &BackgroundMesh,
    cut: &CutGeometry,
    space: &P1ActiveSpace,
    k: f64,
    gamma_b: f64,
    selected: impl Fn(&BoundaryPiece) -> bool,
    out: &mut TripletList,
) {
    let penalty = k * gamma_b / mesh.h_max;
    for bp in &cut.boundary_pieces {
        if !selected(bp) {
            continue;
        }
        let tri = &mesh.triangles[bp.parent];
        let map = ElementMap::from_mesh(&mesh.vertices, tri);
        let dofs = space.cell_dofs(tri);
        let block = dirichlet_edge_block(&map, bp.a, bp.b, bp.normal, k, penalty);
        for i in 0..3 {
            for j in 0..3 {
                out.push(dofs[i], dofs[j], block[i][j]);
            }
        }
    }
}

/// Adds the Nitsche Dirichlet load terms on the selected boundary pieces.
pub fn dirichlet_rhs(
    mesh: &BackgroundMesh,
    cut: &CutGeometry,
    space: &P1ActiveSpace,
    k: f64,
    gamma_b: f64,
    selected: impl Fn(&BoundaryPiece) -> bool,
    t_d: impl Fn(Vec2) -> f64,
    out: &mut [f64],
) {
    let penalty = k * gamma_b / mesh.h_max;
    for bp in &cut.boundary_pieces {
        if !selected(bp) {
            continue;
        }
        let tri = &mesh.triangles[bp.parent];
        let map = ElementMap::from_mesh(&mesh.vertices, tri);
        let dofs = space.cell_dofs(tri);
        let rhs = dirichlet_edge_rhs(&map, bp.a, bp.b, bp.normal, k, penalty, &t_d);
        for i in 0..3 {
            out[dofs[i]] += rhs[i];
        }
    }
}

/// Adds `(q_N, δT)` over the selected boundary pieces.
pub fn neumann_rhs(
    mesh: &BackgroundMesh,
    cut: &CutGeometry,
    space: &P1ActiveSpace,
    selected: impl Fn(&BoundaryPiece) -> bool,
    q_n: impl Fn(Vec2) -> f64,
    out: &mut [f64],
) {
    let rule = seg_rule(5);
    for bp in &cut.boundary_pieces {
        if !selected(bp) {
            continue;
        }
        let tri = &mesh.triangles[bp.parent];
        let map = ElementMap::from_mesh(&mesh.vertices, tri);
        let dofs = space.cell_dofs(tri);
        for (q, &s) in rule.points.iter().enumerate() {
            let x = bp.a.lerp(bp.b, s);
            let lam = map.barycentric(x);
            let w = rule.weights[q] * bp.length * q_n(x);
            for i in 0..3 {
                out[dofs[i]] += w * lam[i];
            }
        }
    }
}

/// Test factor P^δ_{θγ}(N_i) − N_i at one quadrature point.
fn pdelta_minus_test(
    lam_i: f64,
    dn_i: f64,
    k: f64,
    gamma: f64,
    theta: (f64, f64),
) -> f64 {
    theta.0 * lam_i - gamma * theta.1 * k * dn_i - lam_i
}

/// Element block of the linear interface term
/// (k∇T·n_Γ, P^δ_{θγ}(δT) − δT) on one segment.
pub(crate) fn seg_linear_block(
    map: &ElementMap,
    seg: &InterfaceSegment,
    k: f64,
    gamma: f64,
    theta: (f64, f64),
) -> [[f64; 3]; 3] {
    let rule = seg_rule(5);
    let dn = [
        map.grad_lambda[0].dot(seg.normal),
        map.grad_lambda[1].dot(seg.normal),
        map.grad_lambda[2].dot(seg.normal),
    ];
    let mut block = [[0.0f64; 3]; 3];
    for (q, &s) in rule.points.iter().enumerate() {
        let x = seg.a.lerp(seg.b, s);
        let lam = map.barycentric(x);
        let w = rule.weights[q] * seg.length;
        for i in 0..3 {
            let test = pdelta_minus_test(lam[i], dn[i], k, gamma, theta);
            for j in 0..3 {
                block[i][j] += w * k * dn[j] * test;
            }
        }
    }
    block
}

/// Adds the linear interface matrix term over all segments.
///
/// The full 3×3 block is pushed even where it is identically zero so that
/// the sparsity pattern matches the Newton tangent.
pub fn interface_linear_matrix(
    mesh: &BackgroundMesh,
    cut: &CutGeometry,
    space: &P1ActiveSpace,
    k: f64,
    gamma: f64,
    theta: (f64, f64),
    out: &mut TripletList,
) {
    for seg in &cut.segments {
        let tri = &mesh.triangles[seg.parent];
        let map = ElementMap::from_mesh(&mesh.vertices, tri);
        let dofs = space.cell_dofs(tri);
        let block = seg_linear_block(&map, seg, k, gamma, theta);
        for i in 0..3 {
            for j in 0..3 {
                out.push(dofs[i], dofs[j], block[i][j]);
            }
        }
    }
}

/// Element vector of (I·n_Γ, P^δ_{θγ}(δT) − δT) on one segment.
pub(crate) fn seg_pdelta_extra_rhs(
    map: &ElementMap,
    seg: &InterfaceSegment,
    k: f64,
    gamma: f64,
    theta: (f64, f64),
    i_dot_n: impl Fn(Vec2) -> f64,
) -> [f64; 3] {
    let rule = seg_rule(5);
    let dn = [
        map.grad_lambda[0].dot(seg.normal),
        map.grad_lambda[1].dot(seg.normal),
        map.grad_lambda[2].dot(seg.normal),
    ];
    let mut rhs = [0.0f64; 3];
    for (q, &s) in rule.points.iter().enumerate() {
        let x = seg.a.lerp(seg.b, s);
        let lam = map.barycentric(x);
        let w = rule.weights[q] * seg.length * i_dot_n(x);
        for i in 0..3 {
            rhs[i] += w * pdelta_minus_test(lam[i], dn[i], k, gamma, theta);
        }
    }
    rhs
}

/// Adds (I·n_Γ, δT) over all segments (part of the basic load form).
pub fn interface_plain_rhs(
    mesh: &BackgroundMesh,
    cut: &CutGeometry,
    space: &P1ActiveSpace,
    i_dot_n: impl Fn(&InterfaceSegment, Vec2) -> f64,
    out: &mut [f64],
) {
    let rule = seg_rule(5);
    for seg in &cut.segments {
        let tri = &mesh.triangles[seg.parent];
        let map = ElementMap::from_mesh(&mesh.vertices, tri);
        let dofs = space.cell_dofs(tri);
        for (q, &s) in rule.points.iter().enumerate() {
            let x = seg.a.lerp(seg.b, s);
            let lam = map.barycentric(x);
            let w = rule.weights[q] * seg.length * i_dot_n(seg, x);
            for i in 0..3 {
                out[dofs[i]] += w * lam[i];
            }
        }
    }
}

/// Adds (I·n_Γ, P^δ_{θγ}(δT) − δT) over all segments.
pub fn interface_pdelta_extra_rhs(
    mesh: &BackgroundMesh,
    cut: &CutGeometry,
    space: &P1ActiveSpace,
    k: f64,
    gamma: f64,
    theta: (f64, f64),
    i_dot_n: impl Fn(&InterfaceSegment, Vec2) -> f64,
    out: &mut [f64],
) {
    for seg in &cut.segments {
        let tri = &mesh.triangles[seg.parent];
        let map = ElementMap::from_mesh(&mesh.vertices, tri);
        let dofs = space.cell_dofs(tri);
        let rhs = seg_pdelta_extra_rhs(&map, seg, k, gamma, theta, |x| i_dot_n(seg, x));
        for i in 0..3 {
            out[dofs[i]] += rhs[i];
        }
    }
}
