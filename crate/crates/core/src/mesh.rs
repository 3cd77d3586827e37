//! Structured background triangulations and their once-refined companions.
//!
//! The solver never remeshes: a fixed rectangle is triangulated once (each
//! grid square split along the same diagonal, counterclockwise triangles) and
//! all moving-interface geometry is derived from level-set values on the
//! companion mesh obtained by one uniform refinement (each triangle split
//! into four congruent children through its edge midpoints). The refined
//! vertices coincide with the P2 Lagrange nodes of the parent mesh: vertex k
//! keeps index k, the midpoint of edge e gets index nv + e.

use crate::geom::Vec2;
use crate::{Error, Result};

/// Sentinel for "no neighbouring triangle" on boundary edges.
pub const NO_TRI: usize = usize::MAX;

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// An edge of a triangulation with its adjacent triangles.
///
/// `verts` is sorted ascending. For interior edges `tris = [K⁺, K⁻]` with
/// K⁺ the lower triangle index and `normal` the unit normal pointing from K⁺
/// into K⁻; for boundary edges `tris[1] == NO_TRI` and `normal` points out of
/// the mesh.
#[derive(Debug, Clone, Copy)]
pub struct Edge {
    pub verts: [usize; 2],
    pub tris: [usize; 2],
    pub normal: Vec2,
    pub length: f64,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.tris[1] == NO_TRI
    }
}

/// Compressed adjacency lists (per-vertex neighbours or incident triangles).
#[derive(Debug, Clone, Default)]
pub struct Adjacency {
    offsets: Vec<usize>,
    data: Vec<usize>,
}

impl Adjacency {
    pub fn of(&self, v: usize) -> &[usize] {
        &self.data[self.offsets[v]..self.offsets[v + 1]]
    }

    pub(crate) fn from_pairs(n: usize, pairs: &mut Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        let mut offsets = vec![0usize; n + 1];
        for &(a, _) in pairs.iter() {
            offsets[a + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let data = pairs.iter().map(|&(_, b)| b).collect();
        Adjacency { offsets, data }
    }
}

/// Plain triangulation topology shared by the background and refined meshes.
#[derive(Debug, Clone, Default)]
pub struct Topology {
    /// Edge endpoint pairs, sorted ascending, in deterministic order.
    pub edges: Vec<[usize; 2]>,
    /// Adjacent triangles per edge, `[K⁺, K⁻]` with K⁺ < K⁻ (or NO_TRI).
    pub edge_tris: Vec<[usize; 2]>,
    /// Per triangle, the edge index opposite each local vertex.
    pub tri_edges: Vec<[usize; 3]>,
    /// Vertex → sorted neighbouring vertices.
    pub vertex_neighbors: Adjacency,
    /// Vertex → sorted incident triangles.
    pub vertex_tris: Adjacency,
}

fn build_topology(n_verts: usize, triangles: &[[usize; 3]]) -> Topology {
    // local edge k is opposite local vertex k
    let mut keyed: Vec<(usize, usize, usize, usize)> = Vec::with_capacity(3 * triangles.len());
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let a = tri[(k + 1) % 3];
            let b = tri[(k + 2) % 3];
            keyed.push((a.min(b), a.max(b), t, k));
        }
    }
    keyed.sort_unstable();
    let mut edges = Vec::new();
    let mut edge_tris = Vec::new();
    let mut tri_edges = vec![[usize::MAX; 3]; triangles.len()];
    let mut i = 0;
    while i < keyed.len() {
        let (a, b, _, _) = keyed[i];
        let e = edges.len();
        edges.push([a, b]);
        let mut adj = [NO_TRI; 2];
        let mut n_adj = 0;
        while i < keyed.len() && keyed[i].0 == a && keyed[i].1 == b {
            let (_, _, t, k) = keyed[i];
            tri_edges[t][k] = e;
            adj[n_adj.min(1)] = t;
            n_adj += 1;
            i += 1;
        }
        debug_assert!(n_adj <= 2, "edge shared by more than two triangles");
        if n_adj == 2 && adj[0] > adj[1] {
            adj.swap(0, 1);
        }
        edge_tris.push(adj);
    }
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(2 * edges.len());
    for e in &edges {
        pairs.push((e[0], e[1]));
        pairs.push((e[1], e[0]));
    }
    let vertex_neighbors = Adjacency::from_pairs(n_verts, &mut pairs);
    let mut tpairs: Vec<(usize, usize)> = Vec::with_capacity(3 * triangles.len());
    for (t, tri) in triangles.iter().enumerate() {
        for &v in tri {
            tpairs.push((v, t));
        }
    }
    let vertex_tris = Adjacency::from_pairs(n_verts, &mut tpairs);
    Topology { edges, edge_tris, tri_edges, vertex_neighbors, vertex_tris }
}

/// Once-refined companion mesh; vertices are the parent's P2 nodes.
#[derive(Debug, Clone)]
pub struct RefinedMesh {
    pub vertices: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
    /// Parent background cell of each refined triangle (= index / 4).
    pub parent: Vec<usize>,
    pub topo: Topology,
}

/// Fixed structured triangulation of a rectangle.
#[derive(Debug, Clone)]
pub struct BackgroundMesh {
    pub domain: Rect,
    pub nx: usize,
    pub ny: usize,
    pub vertices: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// Per triangle, edge index opposite each local vertex.
    pub tri_edges: Vec<[usize; 3]>,
    pub topo: Topology,
    /// Diameter of the largest triangle (the longest edge in the mesh).
    pub h_max: f64,
    pub refined: RefinedMesh,
}

impl BackgroundMesh {
    /// Builds the uniform triangulation with `nx × ny` squares, each split
    /// along the lower-left to upper-right diagonal.
    pub fn build_structured(domain: Rect, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Mesh(format!("subdivision counts must be positive, got {nx}×{ny}")));
        }
        if !(domain.x1 > domain.x0) || !(domain.y1 > domain.y0) {
            return Err(Error::Mesh(format!(
                "degenerate domain [{}, {}] × [{}, {}]",
                domain.x0, domain.x1, domain.y0, domain.y1
            )));
        }
        let hx = domain.width() / nx as f64;
        let hy = domain.height() / ny as f64;
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                // exact endpoints keep boundary predicates robust
                let x = if i == nx { domain.x1 } else { domain.x0 + i as f64 * hx };
                let y = if j == ny { domain.y1 } else { domain.y0 + j as f64 * hy };
                vertices.push(Vec2::new(x, y));
            }
        }
        let vid = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (v00, v10) = (vid(i, j), vid(i + 1, j));
                let (v01, v11) = (vid(i, j + 1), vid(i + 1, j + 1));
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        let topo = build_topology(vertices.len(), &triangles);
        let mut edges = Vec::with_capacity(topo.edges.len());
        for (e, (&verts, &tris)) in topo.edges.iter().zip(&topo.edge_tris).enumerate() {
            let t = tris[0];
            debug_assert!(t != NO_TRI, "edge {e} has no adjacent triangle");
            // directed traversal of the edge within K⁺ (counterclockwise)
            let tri = triangles[t];
            let mut dir = Vec2::ZERO;
            for k in 0..3 {
                let (p, q) = (tri[k], tri[(k + 1) % 3]);
                if (p == verts[0] && q == verts[1]) || (p == verts[1] && q == verts[0]) {
                    dir = vertices[q] - vertices[p];
                }
            }
            let length = dir.norm();
            // rotate the CCW traversal by −90°: points out of K⁺
            let normal = Vec2::new(dir.y, -dir.x) / length;
            edges.push(Edge { verts, tris, normal, length });
        }
        let h_max = triangles
            .iter()
            .map(|t| {
                let [a, b, c] = [vertices[t[0]], vertices[t[1]], vertices[t[2]]];
                a.distance(b).max(b.distance(c)).max(c.distance(a))
            })
            .fold(0.0, f64::max);
        let tri_edges = topo.tri_edges.clone();
        let refined = Self::refine(&vertices, &triangles, &topo);
        Ok(BackgroundMesh {
            domain,
            nx,
            ny,
            vertices,
            triangles,
            edges,
            tri_edges,
            topo,
            h_max,
            refined,
        })
    }

    fn refine(vertices: &[Vec2], triangles: &[[usize; 3]], topo: &Topology) -> RefinedMesh {
        let nv = vertices.len();
        let mut rv = Vec::with_capacity(nv + topo.edges.len());
        rv.extend_from_slice(vertices);
        for e in &topo.edges {
            rv.push(vertices[e[0]].lerp(vertices[e[1]], 0.5));
        }
        let mut rt = Vec::with_capacity(4 * triangles.len());
        let mut parent = Vec::with_capacity(4 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = *tri;
            let m_bc = nv + topo.tri_edges[t][0];
            let m_ca = nv + topo.tri_edges[t][1];
            let m_ab = nv + topo.tri_edges[t][2];
            rt.push([a, m_ab, m_ca]);
            rt.push([m_ab, b, m_bc]);
            rt.push([m_ca, m_bc, c]);
            rt.push([m_ab, m_bc, m_ca]);
            parent.extend_from_slice(&[t, t, t, t]);
        }
        let topo_r = build_topology(rv.len(), &rt);
        RefinedMesh { vertices: rv, triangles: rt, parent, topo: topo_r }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn tri_coords(&self, t: usize) -> [Vec2; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Number of P2 Lagrange dofs (vertices plus edge midpoints).
    pub fn n_p2_dofs(&self) -> usize {
        self.n_vertices() + self.n_edges()
    }

    /// P2 dofs of cell `t` in local order: three vertices, then the midpoint
    /// opposite each vertex.
    pub fn p2_dofs(&self, t: usize) -> [usize; 6] {
        let [a, b, c] = self.triangles[t];
        let nv = self.n_vertices();
        let e = self.tri_edges[t];
        [a, b, c, nv + e[0], nv + e[1], nv + e[2]]
    }

    /// K⁺, K⁻ and the fixed face normal for an interior edge.
    pub fn face_jump_pairs(&self, edge: usize) -> Option<(usize, usize, Vec2)> {
        let e = &self.edges[edge];
        if e.is_boundary() {
            None
        } else {
            Some((e.tris[0], e.tris[1], e.normal))
        }
    }
}

pub fn triangle_area(p: [Vec2; 3]) -> f64 {
    0.5 * (p[1] - p[0]).cross(p[2] - p[0])
}
