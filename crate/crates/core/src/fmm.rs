//! Fast marching on a triangulation, with optional value transport.
//!
//! Distances grow outward from seed vertices by accepting the closest
//! trial vertex and re-solving the local eikonal update on its incident
//! triangles. The update from an accepted edge (a, b) to a vertex c
//! minimizes (1−s)d_a + s d_b + |c − ((1−s)a + s b)| over s ∈ [0, 1],
//! which reduces to a quadratic in s; the endpoints cover the one-point
//! updates. A value carried by the seeds is propagated with the same
//! barycentric weights, which extends interface data along characteristics
//! of the distance field. Ties in the queue break on vertex id, so the
//! march is deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geom::Vec2;
use crate::mesh::Adjacency;

/// One seed: vertex id, initial distance and carried value.
#[derive(Debug, Clone, Copy)]
pub struct Seed {
    pub vertex: usize,
    pub dist: f64,
    pub value: f64,
}

/// Result of a march: `dist[v]` is `f64::INFINITY` (and `value[v]` zero)
/// beyond the band or unreachable from the seeds.
#[derive(Debug, Clone)]
pub struct MarchResult {
    pub dist: Vec<f64>,
    pub value: Vec<f64>,
}

struct HeapItem {
    dist: f64,
    vertex: usize,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap, we pop the smallest distance
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

/// Marches distances (and seed values) outward until `band` is exceeded.
pub fn fast_march(
    vertices: &[Vec2],
    triangles: &[[usize; 3]],
    vertex_tris: &Adjacency,
    seeds: &[Seed],
    band: f64,
) -> MarchResult {
    let n = vertices.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut value = vec![0.0; n];
    let mut accepted = vec![false; n];
    let mut heap = BinaryHeap::new();

    for s in seeds {
        if s.dist < dist[s.vertex] {
            dist[s.vertex] = s.dist;
            value[s.vertex] = s.value;
        }
    }
    for s in seeds {
        heap.push(HeapItem { dist: dist[s.vertex], vertex: s.vertex });
    }

    let mut last_accepted = f64::NEG_INFINITY;
    while let Some(HeapItem { dist: d, vertex: v }) = heap.pop() {
        if accepted[v] || d > dist[v] {
            continue;
        }
        if d > band {
            break;
        }
        assert!(
            d >= last_accepted,
            "fast marching accepted distances must be nondecreasing: {d} after {last_accepted}"
        );
        last_accepted = d;
        accepted[v] = true;
        // re-solve the local update on every non-accepted vertex sharing
        // a triangle with v
        for &t in vertex_tris.of(v) {
            for &c in &triangles[t] {
                if accepted[c] {
                    continue;
                }
                if let Some((dc, vc)) =
                    local_update(c, vertices, &dist, &value, vertex_tris, triangles, &accepted)
                {
                    if dc < dist[c] {
                        dist[c] = dc;
                        value[c] = vc;
                        heap.push(HeapItem { dist: dc, vertex: c });
                    }
                }
            }
        }
    }

    for v in 0..n {
        if !accepted[v] {
            dist[v] = f64::INFINITY;
            value[v] = 0.0;
        }
    }
    MarchResult { dist, value }
}

/// Best eikonal update for `c` over all its incident triangles.
fn local_update(
    c: usize,
    vertices: &[Vec2],
    dist: &[f64],
    value: &[f64],
    vertex_tris: &Adjacency,
    triangles: &[[usize; 3]],
    accepted: &[bool],
) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    let mut consider = |cand: Option<(f64, f64)>| {
        if let Some((d, _)) = cand {
            if best.map_or(true, |(bd, _)| d < bd) {
                best = cand;
            }
        }
    };
    for &t in vertex_tris.of(c) {
        let tri = triangles[t];
        let (a, b) = if tri[0] == c {
            (tri[1], tri[2])
        } else if tri[1] == c {
            (tri[2], tri[0])
        } else {
            (tri[0], tri[1])
        };
        match (accepted[a], accepted[b]) {
            (true, true) => consider(edge_update(
                vertices[c],
                vertices[a],
                vertices[b],
                dist[a],
                dist[b],
                value[a],
                value[b],
            )),
            (true, false) => consider(Some((
                dist[a] + vertices[c].distance(vertices[a]),
                value[a],
            ))),
            (false, true) => consider(Some((
                dist[b] + vertices[c].distance(vertices[b]),
                value[b],
            ))),
            (false, false) => {}
        }
    }
    best
}

/// Minimizes (1−s)d_a + s d_b + |c − ((1−s)a + s b)| over s ∈ [0, 1].
fn edge_update(
    c: Vec2,
    a: Vec2,
    b: Vec2,
    da: f64,
    db: f64,
    va: f64,
    vb: f64,
) -> Option<(f64, f64)> {
    let u = b - a;
    let e = c - a;
    let delta = db - da;
    // stationary points of f(s) = da + s δ + |e − s u| solve
    // δ |e − s u| = (e − s u)·u, a quadratic in s
    let big_a = e.norm_sq();
    let big_b = e.dot(u);
    let big_c = u.norm_sq();
    let qa = delta * delta * big_c - big_c * big_c;
    let qb = 2.0 * big_b * (big_c - delta * delta);
    let qc = delta * delta * big_a - big_b * big_b;
    let mut candidates = [0.0, 1.0, f64::NAN, f64::NAN];
    if qa.abs() > 1e-300 {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            candidates[2] = (-qb + sq) / (2.0 * qa);
            candidates[3] = (-qb - sq) / (2.0 * qa);
        }
    } else if qb.abs() > 1e-300 {
        candidates[2] = -qc / qb;
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for s in candidates {
        if !(0.0..=1.0).contains(&s) {
            continue;
        }
        let f = da + s * delta + (e - u * s).norm();
        if best.map_or(true, |(bf, _, _)| f < bf) {
            best = Some((f, s, (1.0 - s) * va + s * vb));
        }
    }
    best.map(|(f, _, val)| (f, val))
}
