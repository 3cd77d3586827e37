//! Legacy ASCII VTK artifacts for cut-cell states.
//!
//! The natural visualization object of a cut discretization is the physical
//! sub-triangulation {K ∩ {φ < 0} : K active}: every volume piece becomes one
//! VTK triangle, so a viewer shows exactly the material region Ω(t) including
//! the partial cells along Γ.  `write_vtk` emits that grid with cell data
//! (parent background cell, cut flag) and point data (temperature T, level set
//! φ, extended normal speed v_n) evaluated at the piece corners, and
//! `write_interface_vtk` stores Γ_h as polydata line segments.  Numbers are
//! printed with 17 significant digits, enough for an exact f64 round trip,
//! which `read_vtk` exercises by parsing the geometry sections back.

use std::fmt::Write as _;
use std::path::Path;

use crate::cut::{CellStatus, CutGeometry};
use crate::fem::{ElementMap, NO_DOF};
use crate::geom::Vec2;
use crate::mesh::BackgroundMesh;
use crate::sim::StefanState;
use crate::{Error, Result};

/// Geometry sections parsed back from a legacy ASCII VTK file.
#[derive(Debug, Clone, PartialEq)]
pub struct VtkGrid {
    /// Point coordinates in file order.
    pub points: Vec<[f64; 3]>,
    /// Connectivity of each cell (`CELLS`) or line (`LINES`), in file order.
    pub cells: Vec<Vec<usize>>,
}

/// Writes the physical sub-triangulation as a VTK unstructured grid with
/// temperature, level-set, and normal-speed point data.
///
/// `cut` must be built from `state.phi`, and `state.space` must cover every
/// active cell of `cut`; transfer the temperature onto the output geometry
/// first when it still lives on the space of an earlier step.
pub fn write_vtk(
    mesh: &BackgroundMesh,
    cut: &CutGeometry,
    state: &StefanState,
    path: &Path,
) -> Result<()> {
    let n = cut.pieces.len();
    let mut points = Vec::with_capacity(3 * n);
    let mut temperature = Vec::with_capacity(3 * n);
    let mut phi = Vec::with_capacity(3 * n);
    let mut normal_speed = Vec::with_capacity(3 * n);
    for piece in &cut.pieces {
        let tri = &mesh.triangles[piece.parent];
        for &v in tri {
            if state.space.vertex_to_dof[v] == NO_DOF {
                return Err(Error::Vtk(format!(
                    "temperature space misses vertex {v} of active cell {}; \
                     transfer the field onto the output geometry first",
                    piece.parent
                )));
            }
        }
        let t_vals = state.temperature.cell_values(&state.space, tri);
        let map = ElementMap::from_mesh(&mesh.vertices, tri);
        for corner in piece.verts {
            let lam = map.barycentric(corner);
            points.push(corner);
            temperature.push(lam[0] * t_vals[0] + lam[1] * t_vals[1] + lam[2] * t_vals[2]);
            phi.push(state.phi.eval(mesh, piece.parent, lam));
            normal_speed.push(
                lam[0] * state.v_ext.v_n_ext[tri[0]]
                    + lam[1] * state.v_ext.v_n_ext[tri[1]]
                    + lam[2] * state.v_ext.v_n_ext[tri[2]],
            );
        }
    }

    let mut text = String::with_capacity(220 * n + 512);
    header(&mut text, &format!("physical sub-triangulation, t = {:.17e}, step = {}", state.t, state.step));
    text.push_str("DATASET UNSTRUCTURED_GRID\n");
    write_points(&mut text, &points);
    let _ = writeln!(text, "CELLS {n} {}", 4 * n);
    for k in 0..n {
        let _ = writeln!(text, "3 {} {} {}", 3 * k, 3 * k + 1, 3 * k + 2);
    }
    let _ = writeln!(text, "CELL_TYPES {n}");
    for _ in 0..n {
        text.push_str("5\n");
    }
    let _ = writeln!(text, "CELL_DATA {n}");
    text.push_str("SCALARS parent_cell int 1\nLOOKUP_TABLE default\n");
    for piece in &cut.pieces {
        let _ = writeln!(text, "{}", piece.parent);
    }
    text.push_str("SCALARS cut_flag int 1\nLOOKUP_TABLE default\n");
    for piece in &cut.pieces {
        let flag = i32::from(cut.status[piece.parent] == CellStatus::Cut);
        let _ = writeln!(text, "{flag}");
    }
    let _ = writeln!(text, "POINT_DATA {}", 3 * n);
    scalar_section(&mut text, "temperature", &temperature);
    scalar_section(&mut text, "phi", &phi);
    scalar_section(&mut text, "normal_speed", &normal_speed);
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes the interface Γ_h as VTK polydata, one two-point line per segment.
///
/// An empty interface yields a valid file with zero points and zero lines.
pub fn write_interface_vtk(cut: &CutGeometry, t: f64, path: &Path) -> Result<()> {
    let m = cut.segments.len();
    let mut points = Vec::with_capacity(2 * m);
    for seg in &cut.segments {
        points.push(seg.a);
        points.push(seg.b);
    }
    let mut text = String::with_capacity(120 * m + 256);
    header(&mut text, &format!("interface polyline, t = {t:.17e}"));
    text.push_str("DATASET POLYDATA\n");
    write_points(&mut text, &points);
    let _ = writeln!(text, "LINES {m} {}", 3 * m);
    for k in 0..m {
        let _ = writeln!(text, "2 {} {}", 2 * k, 2 * k + 1);
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Parses the `POINTS` and `CELLS`/`LINES` sections of a legacy ASCII VTK
/// file; all other sections are skipped.
pub fn read_vtk(path: &Path) -> Result<VtkGrid> {
    let text = std::fs::read_to_string(path)?;
    let at = |msg: &str| Error::Vtk(format!("{}: {msg}", path.display()));
    let mut tokens = text.split_ascii_whitespace();
    let mut grid = VtkGrid { points: Vec::new(), cells: Vec::new() };
    while let Some(tok) = tokens.next() {
        match tok {
            "POINTS" => {
                let n: usize = next_parsed(&mut tokens, "point count", &at)?;
                tokens.next().ok_or_else(|| at("missing point data type"))?;
                for _ in 0..n {
                    let mut p = [0.0; 3];
                    for c in &mut p {
                        *c = next_parsed(&mut tokens, "point coordinate", &at)?;
                    }
                    grid.points.push(p);
                }
            }
            "CELLS" | "LINES" => {
                let n: usize = next_parsed(&mut tokens, "cell count", &at)?;
                let _total: usize = next_parsed(&mut tokens, "cell index total", &at)?;
                for _ in 0..n {
                    let len: usize = next_parsed(&mut tokens, "cell length", &at)?;
                    let mut ids = Vec::with_capacity(len);
                    for _ in 0..len {
                        ids.push(next_parsed(&mut tokens, "cell index", &at)?);
                    }
                    grid.cells.push(ids);
                }
            }
            _ => {}
        }
    }
    for (k, cell) in grid.cells.iter().enumerate() {
        if let Some(&bad) = cell.iter().find(|&&id| id >= grid.points.len()) {
            return Err(at(&format!("cell {k} references point {bad} of {}", grid.points.len())));
        }
    }
    Ok(grid)
}

/// Writes the common three-line legacy VTK preamble.
fn header(text: &mut String, title: &str) {
    let _ = writeln!(text, "# vtk DataFile Version 3.0\nstefan2d {title}\nASCII");
}

/// Writes a `POINTS` section with a zero third coordinate.
fn write_points(text: &mut String, points: &[Vec2]) {
    let _ = writeln!(text, "POINTS {} double", points.len());
    for p in points {
        let _ = writeln!(text, "{:.17e} {:.17e} 0", p.x, p.y);
    }
}

/// Writes one named `SCALARS` point-data section.
fn scalar_section(text: &mut String, name: &str, values: &[f64]) {
    let _ = writeln!(text, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for v in values {
        let _ = writeln!(text, "{v:.17e}");
    }
}

/// Parses the next whitespace token as `T` with a located error message.
fn next_parsed<'a, T: std::str::FromStr>(
    tokens: &mut impl Iterator<Item = &'a str>,
    what: &str,
    at: &impl Fn(&str) -> Error,
) -> Result<T> {
    let tok = tokens.next().ok_or_else(|| at(&format!("unexpected end of file, expected {what}")))?;
    tok.parse().map_err(|_| at(&format!("invalid {what} `{tok}`")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{FeField, P1ActiveSpace};
    use crate::levelset::LevelSet;
    use crate::mesh::Rect;
    use crate::velocity::VelocityField;

    /// A 10×10 unit-square mesh cut by a tilted half-plane through the center.
    fn tilted_setup() -> (BackgroundMesh, CutGeometry, StefanState) {
        let mesh = BackgroundMesh::build_structured(
            Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 },
            10,
            10,
        )
        .expect("mesh");
        let phi = LevelSet::from_fn(&mesh, |p| (p.x - 0.5) + 0.37 * (p.y - 0.5));
        let cut = CutGeometry::build(&mesh, &phi.values).expect("cut");
        let space = P1ActiveSpace::from_active_cells(&mesh, &cut.active_cells);
        let temperature = FeField::from_fn(&space, &mesh.vertices, |p| p.x + 2.0 * p.y);
        let mut v_ext = VelocityField::zeros(&mesh);
        for (v, p) in mesh.vertices.iter().enumerate() {
            v_ext.v_n_ext[v] = 0.25 * p.x;
        }
        let state = StefanState { t: 0.125, step: 4, phi, space, temperature, v_ext };
        (mesh, cut, state)
    }

    #[test]
    fn half_plane_grid_matches_cut_geometry() {
        let (mesh, cut, state) = tilted_setup();
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("state.vtk");
        write_vtk(&mesh, &cut, &state, &path).expect("write");
        let grid = read_vtk(&path).expect("parse back");
        assert_eq!(
            grid.cells.len(),
            cut.pieces.len(),
            "one VTK triangle per physical sub-triangle"
        );
        assert!(grid.cells.iter().all(|c| c.len() == 3), "every cell is a triangle");
        let mut area = 0.0;
        for cell in &grid.cells {
            let [a, b, c] = [grid.points[cell[0]], grid.points[cell[1]], grid.points[cell[2]]];
            area += 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs();
        }
        // any straight cut through the center bisects the square exactly
        assert!(
            (area - 0.5).abs() <= 1e-12,
            "half-plane through the center must leave half the area, got {area}"
        );
        assert!(
            (area - cut.material_area()).abs() <= 1e-12,
            "file area {} must match the cut geometry {}",
            area,
            cut.material_area()
        );
    }

    #[test]
    fn round_trip_recovers_exact_coordinates_and_affine_data() {
        let (mesh, cut, state) = tilted_setup();
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("state.vtk");
        write_vtk(&mesh, &cut, &state, &path).expect("write");
        let grid = read_vtk(&path).expect("parse back");
        assert_eq!(grid.points.len(), 3 * cut.pieces.len(), "three points per triangle");
        for (k, piece) in cut.pieces.iter().enumerate() {
            for (i, corner) in piece.verts.iter().enumerate() {
                let q = grid.points[3 * k + i];
                assert_eq!(corner.x.to_bits(), q[0].to_bits(), "x round trip, piece {k}");
                assert_eq!(corner.y.to_bits(), q[1].to_bits(), "y round trip, piece {k}");
                assert_eq!(q[2], 0.0, "planar grid has zero third coordinate");
            }
            assert_eq!(grid.cells[k], vec![3 * k, 3 * k + 1, 3 * k + 2], "connectivity order");
        }
        // the P1 interpolant of an affine field is exact, so the emitted
        // temperatures must reproduce x + 2y at the parsed points
        let text = std::fs::read_to_string(&path).expect("reread");
        let mut toks = text.split_ascii_whitespace().skip_while(|t| *t != "temperature");
        for skip in ["temperature", "double", "1", "LOOKUP_TABLE", "default"] {
            assert_eq!(toks.next(), Some(skip), "temperature section layout");
        }
        for (k, p) in grid.points.iter().enumerate() {
            let written: f64 = toks.next().expect("temperature value").parse().expect("float");
            let exact = p[0] + 2.0 * p[1];
            assert!(
                (written - exact).abs() <= 1e-12,
                "temperature at point {k}: wrote {written}, interpolant gives {exact}"
            );
        }
    }

    #[test]
    fn interface_polyline_matches_segments() {
        let (_, cut, _) = tilted_setup();
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("interface.vtk");
        write_interface_vtk(&cut, 0.125, &path).expect("write");
        let grid = read_vtk(&path).expect("parse back");
        assert_eq!(grid.cells.len(), cut.segments.len(), "one line per interface segment");
        let mut length = 0.0;
        for (k, seg) in cut.segments.iter().enumerate() {
            let [a, b] = [grid.points[grid.cells[k][0]], grid.points[grid.cells[k][1]]];
            assert_eq!(seg.a.x.to_bits(), a[0].to_bits(), "segment {k} start");
            assert_eq!(seg.b.y.to_bits(), b[1].to_bits(), "segment {k} end");
            length += ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        }
        assert!(
            (length - cut.interface_length()).abs() <= 1e-12,
            "polyline length {} must match interface length {}",
            length,
            cut.interface_length()
        );
    }

    #[test]
    fn empty_interface_writes_a_valid_file() {
        let mesh = BackgroundMesh::build_structured(
            Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 },
            4,
            4,
        )
        .expect("mesh");
        let phi = LevelSet::from_fn(&mesh, |_| -1.0);
        let cut = CutGeometry::build(&mesh, &phi.values).expect("cut");
        assert!(cut.segments.is_empty(), "uncut domain has no interface");
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("interface.vtk");
        write_interface_vtk(&cut, 0.0, &path).expect("write");
        let grid = read_vtk(&path).expect("parse back");
        assert!(grid.points.is_empty(), "no interface points");
        assert!(grid.cells.is_empty(), "no interface lines");
    }

    #[test]
    fn stale_space_is_rejected() {
        let (mesh, _, state) = tilted_setup();
        // a shifted interface activates cells the old space never covered
        let phi = LevelSet::from_fn(&mesh, |p| (p.x - 0.8) + 0.37 * (p.y - 0.5));
        let cut = CutGeometry::build(&mesh, &phi.values).expect("cut");
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("state.vtk");
        let err = write_vtk(&mesh, &cut, &state, &path)
            .err()
            .expect("mismatched space must be rejected");
        assert!(
            matches!(err, Error::Vtk(ref msg) if msg.contains("transfer")),
            "error should point at the missing transfer, got: {err}"
        );
    }
}
