//! P2 level-set storage, projected normals and redistancing.
//!
//! The level set φ is a P2 function on the background mesh; its dofs are
//! the vertices of the refined companion mesh. A smooth normal field
//! n_h = Π₁(∇φ/|∇φ|) is obtained by L² projection onto the P1 background
//! space, reusing one mass-matrix factorization for the whole run; it
//! feeds the velocity direction and the absorption angle, while the
//! interface quadrature keeps the exact per-segment normals. When
//! transport distorts φ away from a distance function, it is rebuilt from
//! its own zero set: crossing ratios on cut edges are preserved exactly by
//! scaling each interface component with its mean gradient, and the far
//! field is re-marched.

use crate::cut::CutGeometry;
use crate::fem::sparse::{CsrMatrix, SparseLu, TripletList};
use crate::fem::{p2_basis, p2_basis_gradients, ElementMap};
use crate::fmm::{fast_march, Seed};
use crate::geom::Vec2;
use crate::mesh::BackgroundMesh;
use crate::Result;

/// P2 level-set function; one value per refined vertex (= P2 dof).
#[derive(Debug, Clone)]
pub struct LevelSet {
    pub values: Vec<f64>,
}

impl LevelSet {
    pub fn from_fn(mesh: &BackgroundMesh, f: impl Fn(Vec2) -> f64) -> Self {
        LevelSet { values: mesh.refined.vertices.iter().map(|&p| f(p)).collect() }
    }

    /// P2 value on background cell `cell` at barycentric coordinates λ.
    pub fn eval(&self, mesh: &BackgroundMesh, cell: usize, lambda: [f64; 3]) -> f64 {
        let dofs = mesh.p2_dofs(cell);
        let basis = p2_basis(lambda);
        (0..6).map(|i| self.values[dofs[i]] * basis[i]).sum()
    }

    /// P2 gradient on background cell `cell` at barycentric coordinates λ.
    pub fn gradient(
        &self,
        mesh: &BackgroundMesh,
        map: &ElementMap,
        cell: usize,
        lambda: [f64; 3],
    ) -> Vec2 {
        let dofs = mesh.p2_dofs(cell);
        let grads = p2_basis_gradients(map, lambda);
        let mut g = Vec2::ZERO;
        for i in 0..6 {
            g += grads[i] * self.values[dofs[i]];
        }
        g
    }
}

/// P1 vector field on the background vertices (not normalized nodally).
#[derive(Debug, Clone)]
pub struct NormalField {
    pub values: Vec<Vec2>,
}

impl NormalField {
    /// P1 interpolation on a background cell.
    pub fn eval(&self, tri: &[usize; 3], lambda: [f64; 3]) -> Vec2 {
        self.values[tri[0]] * lambda[0]
            + self.values[tri[1]] * lambda[1]
            + self.values[tri[2]] * lambda[2]
    }

    /// Normalized value, with a zero fallback where the projection vanishes.
    pub fn unit_at(&self, tri: &[usize; 3], lambda: [f64; 3]) -> Vec2 {
        self.eval(tri, lambda).normalized_or(Vec2::ZERO)
    }

    /// P1 value at a refined vertex: the vertex itself or an edge midpoint.
    pub fn at_refined_vertex(&self, mesh: &BackgroundMesh, rv: usize) -> Vec2 {
        let nv = mesh.vertices.len();
        if rv < nv {
            self.values[rv]
        } else {
            let [a, b] = mesh.edges[rv - nv].verts;
            (self.values[a] + self.values[b]) * 0.5
        }
    }
}

/// L² projector onto the background P1 space with a cached factorization.
pub struct NormalProjector {
    lu: SparseLu,
}

impl NormalProjector {
    pub fn new(mesh: &BackgroundMesh) -> Result<Self> {
        let n = mesh.vertices.len();
        let mut t = TripletList::new(n, n);
        for tri in &mesh.triangles {
            let area = crate::mesh::triangle_area([
                mesh.vertices[tri[0]],
                mesh.vertices[tri[1]],
                mesh.vertices[tri[2]],
            ]);
            for i in 0..3 {
                for j in 0..3 {
                    let m = if i == j { area / 6.0 } else { area / 12.0 };
                    t.push(tri[i], tri[j], m);
                }
            }
        }
        let mass = CsrMatrix::from_triplets(&t);
        Ok(NormalProjector { lu: mass.factorize()? })
    }

    /// Projects ∇φ/|∇φ| onto the P1 background space.
    pub fn project(&self, mesh: &BackgroundMesh, phi: &LevelSet) -> NormalField {
        let n = mesh.vertices.len();
        let rule = crate::fem::quadrature::tri_rule(4);
        let mut bx = vec![0.0; n];
        let mut by = vec![0.0; n];
        for (cell, tri) in mesh.triangles.iter().enumerate() {
            let map = ElementMap::from_mesh(&mesh.vertices, tri);
            for (q, &lambda) in rule.points.iter().enumerate() {
                let w = rule.weights[q] * map.area;
                let u = phi.gradient(mesh, &map, cell, lambda).normalized_or(Vec2::ZERO);
                for i in 0..3 {
                    bx[tri[i]] += w * lambda[i] * u.x;
                    by[tri[i]] += w * lambda[i] * u.y;
                }
            }
        }
        let sols = self.lu.solve_many(&[&bx, &by]);
        let values = sols[0].iter().zip(&sols[1]).map(|(&x, &y)| Vec2::new(x, y)).collect();
        NormalField { values }
    }
}

/// True when ŵ has drifted far from a unit gradient on the cut band.
pub fn needs_redistance(mesh: &BackgroundMesh, cut: &CutGeometry) -> bool {
    let rm = &mesh.refined;
    cut.cut_refined_tris.iter().any(|&rt| {
        let tri = rm.triangles[rt];
        let map = ElementMap::from_mesh(&rm.vertices, &tri);
        let g = map.p1_gradient([cut.w[tri[0]], cut.w[tri[1]], cut.w[tri[2]]]);
        (g.norm() - 1.0).abs() > 0.5
    })
}

/// Rebuilds φ as a signed distance to its own zero set.
///
/// Cut triangles are grouped into interface components (connected through
/// crossed refined edges); values on each component's vertices are scaled
/// by the component's mean gradient magnitude, which leaves every crossing
/// ratio unchanged, and the far field is recomputed by fast marching.
pub fn redistance(mesh: &BackgroundMesh, cut: &CutGeometry) -> LevelSet {
    let rm = &mesh.refined;
    let tris = &cut.cut_refined_tris;
    let index_of = |rt: usize| tris.binary_search(&rt).expect("cut triangle");

    // union-find over cut refined triangles
    let mut parent: Vec<usize> = (0..tris.len()).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for (ti, &rt) in tris.iter().enumerate() {
        for k in 0..3 {
            let e = rm.topo.tri_edges[rt][k];
            let [a, b] = rm.topo.edges[e];
            if (cut.w[a] > 0.0) == (cut.w[b] > 0.0) {
                continue;
            }
            let [tp, tm] = rm.topo.edge_tris[e];
            if tm == crate::mesh::NO_TRI {
                continue;
            }
            let other = if tp == rt { tm } else { tp };
            let (ra, rb) = (find(&mut parent, ti), find(&mut parent, index_of(other)));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }

    // mean gradient magnitude per component
    let mut grad_sum = vec![0.0; tris.len()];
    let mut count = vec![0usize; tris.len()];
    for (ti, &rt) in tris.iter().enumerate() {
        let tri = rm.triangles[rt];
        let map = ElementMap::from_mesh(&rm.vertices, &tri);
        let g = map.p1_gradient([cut.w[tri[0]], cut.w[tri[1]], cut.w[tri[2]]]).norm();
        let r = find(&mut parent, ti);
        grad_sum[r] += g;
        count[r] += 1;
    }

    // band seeds: |w| / g_component, minimized over touching components
    let mut seeds = Vec::new();
    for (ti, &rt) in tris.iter().enumerate() {
        let r = find(&mut parent, ti);
        let g = grad_sum[r] / count[r] as f64;
        debug_assert!(g > 0.0, "cut component with zero mean gradient");
        for &v in &rm.triangles[rt] {
            seeds.push(Seed { vertex: v, dist: cut.w[v].abs() / g, value: 0.0 });
        }
    }

    let march = fast_march(&rm.vertices, &rm.triangles, &rm.topo.vertex_tris, &seeds, f64::INFINITY);
    let values = (0..rm.vertices.len())
        .map(|v| {
            debug_assert!(march.dist[v].is_finite(), "march must reach vertex {v}");
            march.dist[v].copysign(cut.w[v])
        })
        .collect();
    LevelSet { values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Rect;

    fn disk_mesh() -> BackgroundMesh {
        BackgroundMesh::build_structured(
            Rect { x0: -1.0, x1: 1.0, y0: -1.0, y1: 1.0 },
            24,
            24,
        )
        .unwrap()
    }

    #[test]
    fn p2_eval_reproduces_quadratics() {
        let mesh = disk_mesh();
        let f = |p: Vec2| 0.5 * p.x * p.x - p.x * p.y + 2.0 * p.y + 0.3;
        let grad_f = |p: Vec2| Vec2::new(p.x - p.y, -p.x + 2.0);
        let phi = LevelSet::from_fn(&mesh, f);
        let cell = 301;
        let tri = mesh.triangles[cell];
        let map = ElementMap::from_mesh(&mesh.vertices, &tri);
        let lambda = [0.22, 0.31, 0.47];
        let p = map.point(lambda);
        assert!((phi.eval(&mesh, cell, lambda) - f(p)).abs() < 1e-13);
        let g = phi.gradient(&mesh, &map, cell, lambda);
        assert!((g - grad_f(p)).norm() < 1e-12, "gradient {g:?} vs {:?}", grad_f(p));
    }

    #[test]
    fn projector_is_exact_for_constant_direction() {
        let mesh = disk_mesh();
        let phi = LevelSet::from_fn(&mesh, |p| 3.0 * (p.y - 0.2));
        let proj = NormalProjector::new(&mesh).unwrap();
        let nf = proj.project(&mesh, &phi);
        for (v, n) in nf.values.iter().enumerate() {
            assert!(
                (*n - Vec2::new(0.0, 1.0)).norm() < 1e-9,
                "vertex {v}: projected normal {n:?} should be (0, 1)"
            );
        }
    }

    #[test]
    fn projector_recovers_radial_directions() {
        let mesh = disk_mesh();
        let phi = LevelSet::from_fn(&mesh, |p| p.norm() - 0.6);
        let proj = NormalProjector::new(&mesh).unwrap();
        let nf = proj.project(&mesh, &phi);
        for (v, &p) in mesh.vertices.iter().enumerate() {
            if p.norm() < 0.3 || p.norm() > 0.95 {
                continue;
            }
            let radial = p.normalized_or(Vec2::ZERO);
            let n = nf.values[v].normalized_or(Vec2::ZERO);
            assert!(
                n.dot(radial) > 0.995,
                "vertex at {p:?}: normal {n:?} should be nearly radial"
            );
        }
    }

    #[test]
    fn refined_vertex_values_interpolate_edges() {
        let mesh = disk_mesh();
        let nf = NormalField {
            values: mesh.vertices.iter().map(|p| Vec2::new(p.x, 2.0 * p.y)).collect(),
        };
        for (rv, &p) in mesh.refined.vertices.iter().enumerate() {
            let v = nf.at_refined_vertex(&mesh, rv);
            assert!(
                (v - Vec2::new(p.x, 2.0 * p.y)).norm() < 1e-13,
                "linear field must interpolate exactly at refined vertex {rv}"
            );
        }
    }

    #[test]
    fn redistance_detection_reacts_to_gradient_drift() {
        let mesh = disk_mesh();
        let good = CutGeometry::build(&mesh, &LevelSet::from_fn(&mesh, |p| p.norm() - 0.6).values)
            .unwrap();
        assert!(!needs_redistance(&mesh, &good), "unit gradient needs no rebuild");
        let bad = CutGeometry::build(
            &mesh,
            &LevelSet::from_fn(&mesh, |p| 5.0 * (p.norm() - 0.6)).values,
        )
        .unwrap();
        assert!(needs_redistance(&mesh, &bad), "slope 5 must trigger a rebuild");
    }

    #[test]
    fn redistance_preserves_crossings_and_restores_slope() {
        let mesh = disk_mesh();
        let phi0 = LevelSet::from_fn(&mesh, |p| 2.0 * (p.norm() - 0.6));
        let cut0 = CutGeometry::build(&mesh, &phi0.values).unwrap();
        let phi1 = redistance(&mesh, &cut0);
        let cut1 = CutGeometry::build(&mesh, &phi1.values).unwrap();

        // same cut topology and bit-comparable crossing ratios
        assert_eq!(cut0.cut_refined_tris, cut1.cut_refined_tris);
        let rm = &mesh.refined;
        for &rt in &cut0.cut_refined_tris {
            for k in 0..3 {
                let [a, b] = rm.topo.edges[rm.topo.tri_edges[rt][k]];
                if (cut0.w[a] > 0.0) == (cut0.w[b] > 0.0) {
                    continue;
                }
                let s0 = cut0.w[a] / (cut0.w[a] - cut0.w[b]);
                let s1 = cut1.w[a] / (cut1.w[a] - cut1.w[b]);
                assert!(
                    (s0 - s1).abs() < 1e-12,
                    "crossing ratio moved: {s0} -> {s1} on edge ({a}, {b})"
                );
            }
        }
        // gradient magnitude back near one on the band
        assert!(!needs_redistance(&mesh, &cut1));
        // far field close to the true distance
        for (v, &p) in rm.vertices.iter().enumerate() {
            let exact = p.norm() - 0.6;
            assert!(
                (phi1.values[v] - exact).abs() < 0.06,
                "vertex at {p:?}: {} vs {exact}",
                phi1.values[v]
            );
        }
    }
}
