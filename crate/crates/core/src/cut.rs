//! Geometric decomposition of the background mesh against the interface.
//!
//! The P2 level set φ is read through its nodal values on the refined
//! companion mesh, where it becomes a piecewise linear function ŵ. Cells
//! are classified against the sign of ŵ (material occupies ŵ < 0), cut
//! cells are decomposed into triangular volume pieces, and the zero set of
//! ŵ becomes a polyline of interface segments. Crossing points on refined
//! edges are computed once per edge in global vertex order, so neighbouring
//! cells share bit-identical geometry. Nodal values closer to zero than the
//! snapping tolerance are pushed to the material side, which removes
//! zero-measure pieces without perturbing the geometry beyond O(tol).

use crate::fem::ElementMap;
use crate::geom::Vec2;
use crate::mesh::{BackgroundMesh, NO_TRI};
use crate::{Error, Result};

/// Relative snapping tolerance; the absolute tolerance is `SNAP_REL · h_max`.
pub const SNAP_REL: f64 = 1e-10;

/// Classification of a background cell against the material domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    /// Entirely in the material (ŵ < 0 on every refined child).
    Inside,
    /// Crossed by the interface.
    Cut,
    /// Entirely in the void.
    Outside,
}

/// A triangle of the volume decomposition, in physical coordinates.
///
/// Pieces of an inside cell coincide with the cell itself; pieces of a cut
/// cell tile its material part. All pieces are counter-clockwise.
#[derive(Debug, Clone, Copy)]
pub struct VolumePiece {
    pub parent: usize,
    pub verts: [Vec2; 3],
}

impl VolumePiece {
    pub fn area(&self) -> f64 {
        let [a, b, c] = self.verts;
        0.5 * (b - a).cross(c - a)
    }
}

/// One straight segment of the interface polyline.
#[derive(Debug, Clone, Copy)]
pub struct InterfaceSegment {
    /// Background cell containing the segment.
    pub parent: usize,
    pub a: Vec2,
    pub b: Vec2,
    /// Unit normal pointing out of the material (toward ŵ > 0).
    pub normal: Vec2,
    pub length: f64,
}

impl InterfaceSegment {
    pub fn midpoint(&self) -> Vec2 {
        (self.a + self.b) * 0.5
    }
}

/// Material part of a boundary edge of the box domain.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryPiece {
    /// Background cell owning the boundary edge.
    pub parent: usize,
    /// Background edge id.
    pub edge: usize,
    pub a: Vec2,
    pub b: Vec2,
    /// Outward unit normal of the box boundary.
    pub normal: Vec2,
    pub length: f64,
}

/// Full cut decomposition for one level-set snapshot.
#[derive(Debug, Clone)]
pub struct CutGeometry {
    pub snap_tol: f64,
    /// Snapped level-set values per refined vertex.
    pub w: Vec<f64>,
    /// Per background cell.
    pub status: Vec<CellStatus>,
    /// Inside and cut cells, ascending.
    pub active_cells: Vec<usize>,
    /// Cut cells only, ascending.
    pub cut_cells: Vec<usize>,
    /// Volume pieces sorted by parent cell.
    pub pieces: Vec<VolumePiece>,
    /// Interface segments sorted by parent cell.
    pub segments: Vec<InterfaceSegment>,
    /// Background edge ids carrying ghost penalties, ascending.
    pub ghost_faces: Vec<usize>,
    /// Material parts of the box boundary, sorted by edge id.
    pub boundary_pieces: Vec<BoundaryPiece>,
    /// Refined triangles crossed by the interface, ascending.
    pub cut_refined_tris: Vec<usize>,
}

impl CutGeometry {
    /// Decomposes the mesh against level-set values `w_raw` given on the
    /// refined vertices (equivalently, the P2 dofs of the background mesh).
    pub fn build(mesh: &BackgroundMesh, w_raw: &[f64]) -> Result<CutGeometry> {
        let rm = &mesh.refined;
        if w_raw.len() != rm.vertices.len() {
            return Err(Error::Mesh(format!(
                "level set has {} values, refined mesh has {} vertices",
                w_raw.len(),
                rm.vertices.len()
            )));
        }
        let snap_tol = SNAP_REL * mesh.h_max;
        let w: Vec<f64> = w_raw
            .iter()
            .map(|&v| if v.abs() < snap_tol { -snap_tol } else { v })
            .collect();

        // Crossing points, one per refined edge, parametrized from the
        // lower vertex id so shared edges reproduce identical bits.
        let crossing = |lo: usize, hi: usize| -> Vec2 {
            debug_assert!(lo < hi && (w[lo] > 0.0) != (w[hi] > 0.0));
            let s = w[lo] / (w[lo] - w[hi]);
            rm.vertices[lo].lerp(rm.vertices[hi], s)
        };
        let mut edge_crossing: Vec<Option<Vec2>> = vec![None; rm.topo.edges.len()];
        let mut crossing_cached = |e: usize| -> Vec2 {
            if let Some(p) = edge_crossing[e] {
                return p;
            }
            let [lo, hi] = rm.topo.edges[e];
            let p = crossing(lo, hi);
            edge_crossing[e] = Some(p);
            p
        };

        let n_cells = mesh.triangles.len();
        let mut status = vec![CellStatus::Outside; n_cells];
        let mut pieces = Vec::new();
        let mut segments = Vec::new();
        let mut cut_refined_tris = Vec::new();
        let mut active_cells = Vec::new();
        let mut cut_cells = Vec::new();

        for cell in 0..n_cells {
            let mut any_cut = false;
            let mut all_inside = true;
            let mut cell_pieces: Vec<VolumePiece> = Vec::new();
            for child in 4 * cell..4 * cell + 4 {
                let tri = rm.triangles[child];
                let wv = [w[tri[0]], w[tri[1]], w[tri[2]]];
                let pos = [rm.vertices[tri[0]], rm.vertices[tri[1]], rm.vertices[tri[2]]];
                let neg = [wv[0] < 0.0, wv[1] < 0.0, wv[2] < 0.0];
                if neg.iter().all(|&n| n) {
                    cell_pieces.push(VolumePiece { parent: cell, verts: pos });
                } else if neg.iter().all(|&n| !n) {
                    all_inside = false;
                } else {
                    any_cut = true;
                    all_inside = false;
                    cut_refined_tris.push(child);
                    // lone vertex: the one whose sign differs from the others
                    let lone = if neg[0] == neg[1] {
                        2
                    } else if neg[0] == neg[2] {
                        1
                    } else {
                        0
                    };
                    let p = (lone + 1) % 3;
                    let q = (lone + 2) % 3;
                    // edge (lone, p) is opposite q in the local edge numbering
                    let x = crossing_cached(rm.topo.tri_edges[child][q]);
                    let y = crossing_cached(rm.topo.tri_edges[child][p]);
                    if neg[lone] {
                        cell_pieces.push(ccw(cell, [pos[lone], x, y]));
                    } else {
                        // material part is the quad (p, q, y, x); split it
                        // along the shorter diagonal
                        let quad = [pos[p], pos[q], y, x];
                        if quad[0].distance(quad[2]) <= quad[1].distance(quad[3]) {
                            cell_pieces.push(ccw(cell, [quad[0], quad[1], quad[2]]));
                            cell_pieces.push(ccw(cell, [quad[0], quad[2], quad[3]]));
                        } else {
                            cell_pieces.push(ccw(cell, [quad[1], quad[2], quad[3]]));
                            cell_pieces.push(ccw(cell, [quad[1], quad[3], quad[0]]));
                        }
                    }
                    let map = ElementMap::new(pos[0], pos[1], pos[2]);
                    let grad = map.p1_gradient(wv);
                    segments.push(InterfaceSegment {
                        parent: cell,
                        a: x,
                        b: y,
                        normal: grad.normalized_or(Vec2::ZERO),
                        length: x.distance(y),
                    });
                }
            }
            status[cell] = if any_cut {
                CellStatus::Cut
            } else if all_inside {
                CellStatus::Inside
            } else {
                CellStatus::Outside
            };
            match status[cell] {
                CellStatus::Inside => {
                    // integrate inside cells directly on the parent triangle
                    let t = mesh.triangles[cell];
                    pieces.push(VolumePiece {
                        parent: cell,
                        verts: [mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]],
                    });
                    active_cells.push(cell);
                }
                CellStatus::Cut => {
                    pieces.extend_from_slice(&cell_pieces);
                    active_cells.push(cell);
                    cut_cells.push(cell);
                }
                CellStatus::Outside => {}
            }
        }
        if active_cells.is_empty() {
            return Err(Error::EmptyDomain);
        }

        let mut ghost_faces = Vec::new();
        for (e, edge) in mesh.edges.iter().enumerate() {
            let [tp, tm] = edge.tris;
            if tm == NO_TRI {
                continue;
            }
            let active = |t: usize| status[t] != CellStatus::Outside;
            let cut = |t: usize| status[t] == CellStatus::Cut;
            if active(tp) && active(tm) && (cut(tp) || cut(tm)) {
                ghost_faces.push(e);
            }
        }

        let nv = mesh.vertices.len();
        let mut boundary_pieces = Vec::new();
        for (e, edge) in mesh.edges.iter().enumerate() {
            if edge.tris[1] != NO_TRI {
                continue;
            }
            let [va, vb] = edge.verts;
            let mid = nv + e;
            for (p, q) in [(va, mid), (mid, vb)] {
                let (wp, wq) = (w[p], w[q]);
                let (pa, pb) = (rm.vertices[p], rm.vertices[q]);
                let piece = if wp < 0.0 && wq < 0.0 {
                    Some((pa, pb))
                } else if wp < 0.0 {
                    Some((pa, crossing(p.min(q), p.max(q))))
                } else if wq < 0.0 {
                    Some((crossing(p.min(q), p.max(q)), pb))
                } else {
                    None
                };
                if let Some((a, b)) = piece {
                    debug_assert!(status[edge.tris[0]] != CellStatus::Outside);
                    boundary_pieces.push(BoundaryPiece {
                        parent: edge.tris[0],
                        edge: e,
                        a,
                        b,
                        normal: edge.normal,
                        length: a.distance(b),
                    });
                }
            }
        }

        Ok(CutGeometry {
            snap_tol,
            w,
            status,
            active_cells,
            cut_cells,
            pieces,
            segments,
            ghost_faces,
            boundary_pieces,
            cut_refined_tris,
        })
    }

    pub fn is_active(&self, cell: usize) -> bool {
        self.status[cell] != CellStatus::Outside
    }

    /// Total material area, summed over pieces.
    pub fn material_area(&self) -> f64 {
        self.pieces.iter().map(|p| p.area()).sum()
    }

    /// Total interface length.
    pub fn interface_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }
}

fn ccw(parent: usize, verts: [Vec2; 3]) -> VolumePiece {
    let [a, b, c] = verts;
    if (b - a).cross(c - a) < 0.0 {
        VolumePiece { parent, verts: [a, c, b] }
    } else {
        VolumePiece { parent, verts }
    }
}
