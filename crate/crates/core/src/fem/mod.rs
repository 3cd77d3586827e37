//! Finite element basics: reference maps, P1/P2 bases, active dof spaces.
//!
//! Temperature lives in the P1 space restricted to the active mesh (all
//! background cells that intersect the physical domain); the level set is
//! a P2 function whose dofs coincide with the vertices of the once-refined
//! companion mesh. Both bases are evaluated in barycentric coordinates so
//! gradients come from a single affine map per triangle.

pub mod assemble;
pub mod quadrature;
pub mod sparse;

use crate::geom::Vec2;
use crate::mesh::BackgroundMesh;

/// Affine map data for one triangle: vertex positions, barycentric
/// gradients and area.
#[derive(Debug, Clone, Copy)]
pub struct ElementMap {
    pub verts: [Vec2; 3],
    /// ∇λ_k, constant over the triangle.
    pub grad_lambda: [Vec2; 3],
    pub area: f64,
}

impl ElementMap {
    pub fn new(a: Vec2, b: Vec2, c: Vec2) -> Self {
        let det = (b - a).cross(c - a);
        let area = 0.5 * det.abs();
        debug_assert!(det > 0.0, "triangles must be counter-clockwise");
        // ∇λ₀ is the inward normal of edge bc scaled by 1/(2|K|), etc.
        let g = |p: Vec2, q: Vec2| Vec2::new(p.y - q.y, q.x - p.x) / det;
        ElementMap { verts: [a, b, c], grad_lambda: [g(b, c), g(c, a), g(a, b)], area }
    }

    pub fn from_mesh(mesh_verts: &[Vec2], tri: &[usize; 3]) -> Self {
        ElementMap::new(mesh_verts[tri[0]], mesh_verts[tri[1]], mesh_verts[tri[2]])
    }

    /// Physical point for barycentric coordinates λ.
    pub fn point(&self, lambda: [f64; 3]) -> Vec2 {
        self.verts[0] * lambda[0] + self.verts[1] * lambda[1] + self.verts[2] * lambda[2]
    }

    /// Barycentric coordinates of a physical point (exact for affine map).
    pub fn barycentric(&self, p: Vec2) -> [f64; 3] {
        let l1 = (p - self.verts[0]).dot(self.grad_lambda[1]);
        let l2 = (p - self.verts[0]).dot(self.grad_lambda[2]);
        [1.0 - l1 - l2, l1, l2]
    }

    /// Gradient of the P1 interpolant with vertex values `u`.
    pub fn p1_gradient(&self, u: [f64; 3]) -> Vec2 {
        self.grad_lambda[0] * u[0] + self.grad_lambda[1] * u[1] + self.grad_lambda[2] * u[2]
    }

    /// P1 value at barycentric coordinates.
    pub fn p1_value(u: [f64; 3], lambda: [f64; 3]) -> f64 {
        u[0] * lambda[0] + u[1] * lambda[1] + u[2] * lambda[2]
    }
}

/// P2 shape functions at barycentric coordinates, dof order
/// (vertex 0, 1, 2, midpoint opposite 0, opposite 1, opposite 2).
pub fn p2_basis(lambda: [f64; 3]) -> [f64; 6] {
    let [l0, l1, l2] = lambda;
    [
        l0 * (2.0 * l0 - 1.0),
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        4.0 * l1 * l2,
        4.0 * l2 * l0,
        4.0 * l0 * l1,
    ]
}

/// Gradients of the P2 shape functions at barycentric coordinates.
pub fn p2_basis_gradients(map: &ElementMap, lambda: [f64; 3]) -> [Vec2; 6] {
    let [l0, l1, l2] = lambda;
    let [g0, g1, g2] = map.grad_lambda;
    [
        g0 * (4.0 * l0 - 1.0),
        g1 * (4.0 * l1 - 1.0),
        g2 * (4.0 * l2 - 1.0),
        g1 * (4.0 * l2) + g2 * (4.0 * l1),
        g2 * (4.0 * l0) + g0 * (4.0 * l2),
        g0 * (4.0 * l1) + g1 * (4.0 * l0),
    ]
}

/// P1 dof space over the active part of the background mesh.
///
/// Dofs are the background vertices touched by at least one active cell,
/// numbered in increasing vertex order so the dof layout is reproducible.
#[derive(Debug, Clone)]
pub struct P1ActiveSpace {
    /// Background vertex id for each dof, strictly increasing.
    pub dof_to_vertex: Vec<usize>,
    /// Dof id for each background vertex (`NO_DOF` when inactive).
    pub vertex_to_dof: Vec<usize>,
}

pub const NO_DOF: usize = usize::MAX;

impl P1ActiveSpace {
    pub fn from_active_cells(mesh: &BackgroundMesh, active_cells: &[usize]) -> Self {
        let mut used = vec![false; mesh.vertices.len()];
        for &t in active_cells {
            for &v in &mesh.triangles[t] {
                used[v] = true;
            }
        }
        let mut dof_to_vertex = Vec::new();
        let mut vertex_to_dof = vec![NO_DOF; mesh.vertices.len()];
        for (v, &u) in used.iter().enumerate() {
            if u {
                vertex_to_dof[v] = dof_to_vertex.len();
                dof_to_vertex.push(v);
            }
        }
        P1ActiveSpace { dof_to_vertex, vertex_to_dof }
    }

    /// Rebuilds the space from a strictly increasing active-vertex list
    /// (used when restoring serialized states).
    pub fn from_vertex_list(n_mesh_vertices: usize, vertices: Vec<usize>) -> Self {
        let mut vertex_to_dof = vec![NO_DOF; n_mesh_vertices];
        for (dof, &v) in vertices.iter().enumerate() {
            vertex_to_dof[v] = dof;
        }
        P1ActiveSpace { dof_to_vertex: vertices, vertex_to_dof }
    }

    pub fn n_dofs(&self) -> usize {
        self.dof_to_vertex.len()
    }

    /// Dof ids for the three vertices of a triangle; panics if the
    /// triangle is not in the active mesh.
    pub fn cell_dofs(&self, tri: &[usize; 3]) -> [usize; 3] {
        let d = [
            self.vertex_to_dof[tri[0]],
            self.vertex_to_dof[tri[1]],
            self.vertex_to_dof[tri[2]],
        ];
        debug_assert!(d.iter().all(|&k| k != NO_DOF), "cell has inactive vertices");
        d
    }
}

/// Scalar field on the active P1 space: one value per dof.
#[derive(Debug, Clone)]
pub struct FeField {
    pub values: Vec<f64>,
}

impl FeField {
    pub fn zeros(space: &P1ActiveSpace) -> Self {
        FeField { values: vec![0.0; space.n_dofs()] }
    }

    pub fn from_fn(space: &P1ActiveSpace, verts: &[Vec2], f: impl Fn(Vec2) -> f64) -> Self {
        FeField {
            values: space.dof_to_vertex.iter().map(|&v| f(verts[v])).collect(),
        }
    }

    pub fn cell_values(&self, space: &P1ActiveSpace, tri: &[usize; 3]) -> [f64; 3] {
        let d = space.cell_dofs(tri);
        [self.values[d[0]], self.values[d[1]], self.values[d[2]]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Rect;

    #[test]
    fn barycentric_coordinates_satisfy_delta_property() {
        let map = ElementMap::new(Vec2::new(0.2, 0.1), Vec2::new(1.3, 0.4), Vec2::new(0.5, 1.7));
        for j in 0..3 {
            let lam = map.barycentric(map.verts[j]);
            for (i, &l) in lam.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((l - expected).abs() < 1e-12, "λ_{i} at vertex {j}: {l}");
            }
        }
    }

    #[test]
    fn barycentric_roundtrip() {
        let map = ElementMap::new(Vec2::new(-0.3, 0.0), Vec2::new(0.9, 0.2), Vec2::new(0.1, 1.1));
        let lam = [0.2, 0.5, 0.3];
        let p = map.point(lam);
        let back = map.barycentric(p);
        for k in 0..3 {
            assert!((back[k] - lam[k]).abs() < 1e-13, "coordinate {k}");
        }
    }

    #[test]
    fn p1_gradient_reproduces_linear_function() {
        let map = ElementMap::new(Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.3), Vec2::new(0.4, 1.5));
        let f = |p: Vec2| 3.0 * p.x - 2.0 * p.y + 1.0;
        let u = [f(map.verts[0]), f(map.verts[1]), f(map.verts[2])];
        let g = map.p1_gradient(u);
        assert!((g.x - 3.0).abs() < 1e-12 && (g.y + 2.0).abs() < 1e-12, "gradient {g:?}");
    }

    #[test]
    fn p2_basis_partition_of_unity_and_delta() {
        let nodes = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.5, 0.5],
            [0.5, 0.0, 0.5],
            [0.5, 0.5, 0.0],
        ];
        for (j, &lam) in nodes.iter().enumerate() {
            let vals = p2_basis(lam);
            for (i, &v) in vals.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((v - expected).abs() < 1e-14, "N_{i} at node {j}: {v}");
            }
        }
        let vals = p2_basis([0.3, 0.45, 0.25]);
        let sum: f64 = vals.iter().sum();
        assert!((sum - 1.0).abs() < 1e-14, "partition of unity: {sum}");
    }

    #[test]
    fn p2_gradient_reproduces_quadratic() {
        let map = ElementMap::new(Vec2::new(0.1, 0.0), Vec2::new(1.2, 0.1), Vec2::new(0.3, 1.4));
        let f = |p: Vec2| p.x * p.x + 2.0 * p.x * p.y - p.y * p.y + p.x - 0.5;
        let grad_f = |p: Vec2| Vec2::new(2.0 * p.x + 2.0 * p.y + 1.0, 2.0 * p.x - 2.0 * p.y);
        // dof values at vertices and edge midpoints
        let mids = [
            (map.verts[1] + map.verts[2]) * 0.5,
            (map.verts[2] + map.verts[0]) * 0.5,
            (map.verts[0] + map.verts[1]) * 0.5,
        ];
        let dofs = [
            f(map.verts[0]), f(map.verts[1]), f(map.verts[2]),
            f(mids[0]), f(mids[1]), f(mids[2]),
        ];
        let lam = [0.25, 0.35, 0.4];
        let p = map.point(lam);
        let basis = p2_basis(lam);
        let grads = p2_basis_gradients(&map, lam);
        let val: f64 = (0..6).map(|i| dofs[i] * basis[i]).sum();
        let mut grad = Vec2::ZERO;
        for i in 0..6 {
            grad += grads[i] * dofs[i];
        }
        assert!((val - f(p)).abs() < 1e-12, "value {val} vs {}", f(p));
        let ge = grad_f(p);
        assert!((grad - ge).norm() < 1e-11, "gradient {grad:?} vs {ge:?}");
    }

    #[test]
    fn active_space_numbers_dofs_by_vertex_order() {
        let mesh = BackgroundMesh::build_structured(
            Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 }, 2, 2,
        ).unwrap();
        // activate the two triangles of the lower-left square only
        let space = P1ActiveSpace::from_active_cells(&mesh, &[0, 1]);
        assert_eq!(space.dof_to_vertex, vec![0, 1, 3, 4]);
        assert_eq!(space.vertex_to_dof[4], 3);
        assert_eq!(space.vertex_to_dof[2], NO_DOF);
        let d = space.cell_dofs(&mesh.triangles[0]);
        assert!(d.iter().all(|&k| k < 4));
    }
}
