//! Acceptance suite: one test per advertised guarantee, each ending in a
//! single `criterion N: PASS/FAIL (...)` line with the measured numbers.
//!
//! The manufactured convergence studies dominate the runtime (tens of
//! minutes on one core), so they are shared across criteria through lazy
//! fixtures; every expensive run happens exactly once per process. Run
//!
//! ```text
//! cargo test --test acceptance -- --test-threads=1 --nocapture
//! ```
//!
//! to watch the lines appear as the criteria complete.

use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stefan2d::benchmark::{
    fit_order, run_manufactured, temperature_l2_difference, ManufacturedCase, ManufacturedRun,
};
use stefan2d::config::RunConfig;
use stefan2d::cut::CutGeometry;
use stefan2d::fem::assemble::{bulk_matrix, ghost_penalty, interface_linear_matrix};
use stefan2d::fem::quadrature::{seg_rule, tri_rule};
use stefan2d::fem::sparse::{CsrMatrix, TripletList};
use stefan2d::fem::{ElementMap, FeField, P1ActiveSpace, NO_DOF};
use stefan2d::geom::Vec2;
use stefan2d::laser::{BeamSpec, FocalPath};
use stefan2d::levelset::LevelSet;
use stefan2d::mesh::{BackgroundMesh, Rect};
use stefan2d::sim::Simulation;
use stefan2d::stefan::{signorini_kkt_equivalence_check, NitscheParams, NitscheVariant};
use stefan2d::transport::tau_sd;
use stefan2d::velocity::{fast_march_extend, smooth_gradient};

/// Time step of the spatial study and finest step of the temporal study.
const STUDY_DT: f64 = 1.0e-4;
/// Simulated window [0, 0.1] for every manufactured run.
const STUDY_T_END: f64 = 0.1;
/// Background subdivisions for h = 1/20, 1/40, 1/80 on the 3×3 box.
const SPATIAL_NX: [usize; 3] = [60, 120, 240];

/// Prints the per-criterion verdict line and fails the test on FAIL.
fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion}: {verdict} ({detail})");
    assert!(pass, "criterion {criterion} failed: {detail}");
}

/// Population standard deviation (the roughness measure for cavity floors).
fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

struct SpatialStudy {
    runs: Vec<ManufacturedRun>,
    seconds_per_mesh: Vec<f64>,
}

static SPATIAL: OnceLock<SpatialStudy> = OnceLock::new();

/// h ∈ {1/20, 1/40, 1/80} runs at Δt = 1e-4, shared by criteria 1, 2, 3, 7.
fn spatial_study() -> &'static SpatialStudy {
    SPATIAL.get_or_init(|| {
        let mut runs = Vec::new();
        let mut seconds_per_mesh = Vec::new();
        for &nx in &SPATIAL_NX {
            eprintln!("[fixture] manufactured run nx = {nx}, dt = {STUDY_DT:.0e}");
            let clock = Instant::now();
            let run =
                run_manufactured(nx, STUDY_DT, STUDY_T_END, NitscheParams::default(), 0.5)
                    .unwrap_or_else(|e| panic!("manufactured run nx = {nx} failed: {e}"));
            seconds_per_mesh.push(clock.elapsed().as_secs_f64());
            runs.push(run);
        }
        SpatialStudy { runs, seconds_per_mesh }
    })
}

static TEMPORAL: OnceLock<Vec<ManufacturedRun>> = OnceLock::new();

/// Extra Δt ∈ {4e-4, 2e-4} runs on the finest mesh; the Δt = 1e-4 point is
/// shared with the spatial study.
fn temporal_extra_runs() -> &'static [ManufacturedRun] {
    TEMPORAL.get_or_init(|| {
        [4.0e-4, 2.0e-4]
            .iter()
            .map(|&dt| {
                let nx = SPATIAL_NX[2];
                eprintln!("[fixture] manufactured run nx = {nx}, dt = {dt:.0e}");
                run_manufactured(nx, dt, STUDY_T_END, NitscheParams::default(), 0.5)
                    .unwrap_or_else(|e| panic!("manufactured run dt = {dt} failed: {e}"))
            })
            .collect()
    })
}

static VARIANTS: OnceLock<Vec<(NitscheVariant, ManufacturedRun)>> = OnceLock::new();

/// Symmetric, skew, and penalty-only runs at h = 1/40; the penalty-free run
/// is shared with the spatial study.
fn variant_extra_runs() -> &'static [(NitscheVariant, ManufacturedRun)] {
    VARIANTS.get_or_init(|| {
        [NitscheVariant::Symmetric, NitscheVariant::Skew, NitscheVariant::Penalty]
            .iter()
            .map(|&variant| {
                let nx = SPATIAL_NX[1];
                eprintln!("[fixture] manufactured run nx = {nx}, variant = {}", variant.as_str());
                let nitsche = NitscheParams { variant, ..NitscheParams::default() };
                let run = run_manufactured(nx, STUDY_DT, STUDY_T_END, nitsche, 0.5)
                    .unwrap_or_else(|e| {
                        panic!("manufactured run variant {} failed: {e}", variant.as_str())
                    });
                (variant, run)
            })
            .collect()
    })
}

#[test]
fn criterion1_spatial_convergence_orders() {
    let study = spatial_study();
    let h: Vec<f64> = study.runs.iter().map(|r| r.h).collect();
    let order = |err: Vec<f64>| fit_order(&h, &err);
    let l2 = order(study.runs.iter().map(|r| r.temp_l2).collect());
    let h1 = order(study.runs.iter().map(|r| r.temp_h1).collect());
    let radius = order(study.runs.iter().map(|r| r.radius_l2).collect());
    let velocity = order(study.runs.iter().map(|r| r.velocity_l2).collect());
    let pass = (l2 - 2.0).abs() <= 0.3
        && (h1 - 1.0).abs() <= 0.3
        && (radius - 2.0).abs() <= 0.4
        && (velocity - 2.0).abs() <= 0.4;
    let times: Vec<String> =
        study.seconds_per_mesh.iter().map(|s| format!("{:.0} s", s)).collect();
    report(
        1,
        pass,
        &format!(
            "temperature orders L² {l2:.2} [2.0±0.3], H¹ {h1:.2} [1.0±0.3]; \
             interface orders radius {radius:.2}, velocity {velocity:.2} [2.0±0.4]; \
             runtimes {}",
            times.join(", ")
        ),
    );
}

#[test]
fn criterion2_temporal_convergence_order() {
    let extra = temporal_extra_runs();
    let fine = &spatial_study().runs[2];
    let dt: Vec<f64> = vec![extra[0].dt, extra[1].dt, fine.dt];
    let err: Vec<f64> = vec![extra[0].temp_l2, extra[1].temp_l2, fine.temp_l2];
    let order = fit_order(&dt, &err);
    let pass = (order - 1.0).abs() <= 0.3;
    report(
        2,
        pass,
        &format!(
            "temperature L² order in Δt {order:.2} [1.0±0.3] at h = 1/80 \
             (errors {:.3e}, {:.3e}, {:.3e})",
            err[0], err[1], err[2]
        ),
    );
}

#[test]
fn criterion3_interface_tracking() {
    let runs = &spatial_study().runs;
    let r_errs: Vec<f64> = runs.iter().map(|r| r.max_r_avg_err).collect();
    let bound = r_errs[2] <= 5.0e-3;
    let monotone = r_errs[0] >= r_errs[1] && r_errs[1] >= r_errs[2];
    let v_coarse = runs[0].max_v_avg_err;
    let v_fine = runs[2].max_v_avg_err;
    let tracks = v_fine < v_coarse;
    let pass = bound && monotone && tracks;
    report(
        3,
        pass,
        &format!(
            "max |r_avg − R| = {:.2e} at h = 1/80 [≤ 5e-3], per-mesh {:.2e} ≥ {:.2e} ≥ {:.2e} \
             (monotone {monotone}); max |v_avg − v_exact| {v_coarse:.2e} → {v_fine:.2e} \
             (improves {tracks})",
            r_errs[2], r_errs[0], r_errs[1], r_errs[2]
        ),
    );
}

#[test]
fn criterion4_signorini_kkt_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(20260823);
    let total = 10_000;
    let mut failures = 0usize;
    for _ in 0..total {
        let t_minus_tm = rng.gen_range(-3.0..3.0);
        let sigma = rng.gen_range(-3.0..3.0);
        let gamma = rng.gen_range(1.0e-3..3.0);
        if !signorini_kkt_equivalence_check(t_minus_tm, sigma, gamma) {
            failures += 1;
        }
    }
    report(
        4,
        failures == 0,
        &format!("{failures} of {total} random (T − T_m, σ, γ) triples broke the equivalence"),
    );
}

/// Rayleigh-quotient condition estimate of a symmetric matrix: power
/// iteration for the largest |λ|, inverse iteration for the smallest.
fn symmetric_condition_estimate(a: &CsrMatrix) -> f64 {
    let n = a.n_rows;
    let seed = |i: usize| 1.0 + (0.7 * i as f64).sin();
    let normalize = |v: &mut Vec<f64>| {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut x: Vec<f64> = (0..n).map(seed).collect();
    normalize(&mut x);
    let mut lam_max = 0.0;
    for _ in 0..400 {
        let mut y = a.matvec(&x);
        lam_max = dot(&x, &y);
        normalize(&mut y);
        x = y;
    }

    let lu = a.factorize().expect("condition estimate needs an invertible matrix");
    let mut x: Vec<f64> = (0..n).map(seed).collect();
    normalize(&mut x);
    let mut lam_min = 0.0;
    for _ in 0..400 {
        let mut y = lu.solve(&x);
        normalize(&mut y);
        lam_min = dot(&y, &a.matvec(&y));
        x = y;
    }
    (lam_max / lam_min).abs()
}

/// Adds the classical symmetric Nitsche Dirichlet block over the interface:
/// (γ_D k/h)∫ u v − ∫ k ∂ₙu v − ∫ k ∂ₙv u on every segment.
fn nitsche_dirichlet_matrix(
    mesh: &BackgroundMesh,
    cut: &CutGeometry,
    space: &P1ActiveSpace,
    k: f64,
    gamma_d: f64,
    out: &mut TripletList,
) {
    let rule = seg_rule(5);
    let penalty = gamma_d * k / mesh.h_max;
    for seg in &cut.segments {
        let tri = &mesh.triangles[seg.parent];
        let map = ElementMap::from_mesh(&mesh.vertices, tri);
        let dofs = space.cell_dofs(tri);
        let dn: Vec<f64> = map.grad_lambda.iter().map(|g| g.dot(seg.normal)).collect();
        for (&s, &w_q) in rule.points.iter().zip(rule.weights) {
            let lam = map.barycentric(seg.a.lerp(seg.b, s));
            let w = w_q * seg.length;
            for i in 0..3 {
                for j in 0..3 {
                    let val = penalty * lam[i] * lam[j]
                        - k * dn[j] * lam[i]
                        - k * dn[i] * lam[j];
                    out.push(dofs[i], dofs[j], w * val);
                }
            }
        }
    }
}

/// Condition numbers of the symmetric flat-interface Poisson matrix as the
/// interface sweeps through one cell row, with or without ghost penalty.
fn condition_sweep(with_ghost: bool) -> Vec<f64> {
    let mesh = BackgroundMesh::build_structured(
        Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 },
        20,
        20,
    )
    .expect("structured mesh");
    let h = 0.05;
    let k = 1.0;
    let ghost_coefficient = NitscheParams::default().gamma_t * k * mesh.h_max;
    [0.0, 0.1, 0.25, 0.49]
        .iter()
        .map(|&delta| {
            // the material occupies y < y_line; δ slides the line from the
            // mid-height of the row [0.5, 0.55] down toward its bottom edge,
            // leaving slivers of relative thickness 0.5 − δ in the cut cells
            let y_line = 0.525 - delta * h;
            let phi = LevelSet::from_fn(&mesh, |p| p.y - y_line);
            let cut = CutGeometry::build(&mesh, &phi.values).expect("cut geometry");
            let space = P1ActiveSpace::from_active_cells(&mesh, &cut.active_cells);
            let n = space.n_dofs();
            let mut trip = TripletList::new(n, n);
            bulk_matrix(&mesh, &cut, &space, 0.0, k, &mut trip);
            nitsche_dirichlet_matrix(&mesh, &cut, &space, k, 10.0, &mut trip);
            if with_ghost {
                ghost_penalty(&mesh, &cut, &space, ghost_coefficient, &mut trip);
            }
            symmetric_condition_estimate(&CsrMatrix::from_triplets(&trip))
        })
        .collect()
}

#[test]
fn criterion5_ghost_penalty_conditioning() {
    let with_ghost = condition_sweep(true);
    let without = condition_sweep(false);
    let spread = |kappa: &[f64]| {
        kappa.iter().cloned().fold(f64::MIN, f64::max)
            / kappa.iter().cloned().fold(f64::MAX, f64::min)
    };
    let s_ghost = spread(&with_ghost);
    let s_bare = spread(&without);
    let pass = s_ghost <= 10.0 && s_bare >= 1.0e2 * s_ghost;
    let fmt = |kappa: &[f64]| {
        kappa.iter().map(|k| format!("{k:.2e}")).collect::<Vec<_>>().join(", ")
    };
    report(
        5,
        pass,
        &format!(
            "κ with ghost [{}] spread {s_ghost:.2} [≤ 10]; \
             κ without [{}] spread {s_bare:.2e} [≥ 100× {s_ghost:.2}]",
            fmt(&with_ghost),
            fmt(&without)
        ),
    );
}

struct PulsedOutcome {
    depth: f64,
    roughness: f64,
    halved_steps: usize,
}

/// Runs a committed pulsed-ablation preset to completion and measures the
/// cavity floor. Panics (test failure) if any step fails outright.
fn run_pulsed_preset(file_name: &str) -> PulsedOutcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(file_name);
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
    let run = RunConfig::from_toml(&text)
        .and_then(|c| c.validate())
        .unwrap_or_else(|e| panic!("validating {file_name}: {e}"));
    let mesh = BackgroundMesh::build_structured(run.domain, run.nx, run.ny)
        .expect("preset mesh");
    let sim = Simulation::new(mesh, run.spec, run.transport_theta).expect("simulation");
    let mut state = sim.initial_state(&*run.phi0).expect("initial state");
    let dt = sim.spec.dt;
    let tf = sim.spec.tf;
    let mut halved_steps = 0usize;
    while tf - state.t > 1.0e-9 * dt {
        let dt_step = dt.min(tf - state.t);
        let (next, info) = sim.step_with_dt(&state, dt_step).unwrap_or_else(|e| {
            panic!("pulsed preset {file_name} failed at t = {:.4}: {e}", state.t)
        });
        halved_steps += usize::from(info.halved);
        state = next;
    }

    let cut = CutGeometry::build(&sim.mesh, &state.phi.values).expect("final cut");
    let domain = sim.mesh.domain;
    let columns = sim.mesh.nx;
    let width = domain.width() / columns as f64;
    let mut floor = vec![f64::INFINITY; columns];
    let mut lowest = f64::INFINITY;
    for seg in &cut.segments {
        for p in [seg.a, seg.midpoint(), seg.b] {
            lowest = lowest.min(p.y);
            let col = (((p.x - domain.x0) / width) as usize).min(columns - 1);
            floor[col] = floor[col].min(p.y);
        }
    }
    // roughness is measured away from the raster turnaround points
    let heights: Vec<f64> = (0..columns)
        .filter(|&c| {
            let center = domain.x0 + (c as f64 + 0.5) * width;
            (0.8..=2.2).contains(&center) && floor[c].is_finite()
        })
        .map(|c| floor[c])
        .collect();
    // the flat initial surface sits at y = 1
    PulsedOutcome { depth: 1.0 - lowest, roughness: std_dev(&heights), halved_steps }
}

#[test]
fn criterion6_pulsed_ablation_scenarios() {
    eprintln!("[fixture] pulsed preset P0 = 0.1");
    let slow = run_pulsed_preset("pulsed_0p1.toml");
    eprintln!("[fixture] pulsed preset P0 = 0.01");
    let fast = run_pulsed_preset("pulsed_0p01.toml");
    let no_failures = slow.halved_steps == 0 && fast.halved_steps == 0;
    let depth_gap = (slow.depth - fast.depth).abs() / slow.depth.max(fast.depth);
    let depths_close = depth_gap <= 0.10;
    let rougher = slow.roughness >= 2.0 * fast.roughness;
    let pass = no_failures && depths_close && rougher;
    report(
        6,
        pass,
        &format!(
            "halved steps {} and {} [0 each]; depths {:.3} vs {:.3} (gap {:.1}% [≤ 10%]); \
             roughness {:.2e} vs {:.2e} (ratio {:.2} [≥ 2])",
            slow.halved_steps,
            fast.halved_steps,
            slow.depth,
            fast.depth,
            100.0 * depth_gap,
            slow.roughness,
            fast.roughness,
            slow.roughness / fast.roughness
        ),
    );
}

/// Absolute final-time L² temperature error of a manufactured run,
/// integrated over the final material region.
fn final_absolute_l2(run: &ManufacturedRun) -> f64 {
    let case = ManufacturedCase;
    let mesh = BackgroundMesh::build_structured(case.domain(), run.nx, run.nx)
        .expect("manufactured mesh");
    let cut = CutGeometry::build(&mesh, &run.final_phi.values).expect("final cut");
    let rule = tri_rule(5);
    let mut sum = 0.0;
    for piece in &cut.pieces {
        let tri = &mesh.triangles[piece.parent];
        if space_misses_cell(&run.final_space, tri) {
            continue;
        }
        let values = run.final_temperature.cell_values(&run.final_space, tri);
        let parent_map = ElementMap::from_mesh(&mesh.vertices, tri);
        let piece_map = ElementMap::new(piece.verts[0], piece.verts[1], piece.verts[2]);
        let area = piece.area();
        for (lam, w) in rule.points.iter().zip(rule.weights) {
            let p = piece_map.point(*lam);
            let t_h = ElementMap::p1_value(values, parent_map.barycentric(p));
            let diff = t_h - case.temperature(p, STUDY_T_END);
            sum += w * area * diff * diff;
        }
    }
    sum.sqrt()
}

fn space_misses_cell(space: &P1ActiveSpace, tri: &[usize; 3]) -> bool {
    space.cell_dofs(tri).iter().any(|&d| d == NO_DOF)
}

#[test]
fn criterion7_nitsche_variant_agreement() {
    let base = &spatial_study().runs[1];
    let extras = variant_extra_runs();
    let mut labelled: Vec<(&str, &ManufacturedRun)> =
        vec![(NitscheVariant::PenaltyFree.as_str(), base)];
    for (variant, run) in extras {
        labelled.push((variant.as_str(), run));
    }
    let reference = final_absolute_l2(&spatial_study().runs[2]);
    let mut worst = 0.0f64;
    let mut worst_pair = String::new();
    for i in 0..labelled.len() {
        for j in i + 1..labelled.len() {
            let diff = temperature_l2_difference(labelled[i].1, labelled[j].1)
                .expect("variant comparison");
            if diff > worst {
                worst = diff;
                worst_pair = format!("{} vs {}", labelled[i].0, labelled[j].0);
            }
        }
    }
    let pass = worst <= 3.0 * reference;
    report(
        7,
        pass,
        &format!(
            "max pairwise final-time L² difference {worst:.3e} ({worst_pair}) \
             [≤ 3 × finest-mesh error = {:.3e}]",
            3.0 * reference
        ),
    );
}

/// ∫ λ₀^a λ₁^b λ₂^c over the reference triangle of area 1/2.
fn exact_bary_moment(a: u32, b: u32, c: u32) -> f64 {
    let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
    fact(a) * fact(b) * fact(c) / fact(a + b + c + 2)
}

fn quadrature_exactness_ok() -> bool {
    let mut ok = true;
    for &degree in &[2usize, 4, 5] {
        let rule = tri_rule(degree);
        for a in 0..=degree as u32 {
            for b in 0..=(degree as u32 - a) {
                let c = degree as u32 - a - b;
                let numeric: f64 = 0.5
                    * rule
                        .points
                        .iter()
                        .zip(rule.weights)
                        .map(|(p, w)| {
                            w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32)
                        })
                        .sum::<f64>();
                ok &= (numeric - exact_bary_moment(a, b, c)).abs() <= 1.0e-14;
            }
        }
    }
    for &degree in &[3usize, 5] {
        let rule = seg_rule(degree);
        for k in 0..=degree as u32 {
            let numeric: f64 = rule
                .points
                .iter()
                .zip(rule.weights)
                .map(|(x, w)| w * x.powi(k as i32))
                .sum();
            ok &= (numeric - 1.0 / (k as f64 + 1.0)).abs() <= 1.0e-14;
        }
    }
    ok
}

fn gradient_and_ghost_ok() -> bool {
    let mesh = BackgroundMesh::build_structured(
        Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 },
        12,
        12,
    )
    .expect("structured mesh");
    let center = Vec2::new(0.5, 0.5);
    let phi = LevelSet::from_fn(&mesh, |p| (p - center).norm() - 0.31);
    let cut = CutGeometry::build(&mesh, &phi.values).expect("cut geometry");
    let space = P1ActiveSpace::from_active_cells(&mesh, &cut.active_cells);
    let affine = |p: Vec2| 0.7 * p.x - 1.3 * p.y + 0.25;
    let t = FeField::from_fn(&space, &mesh.vertices, affine);

    let (gx, gy) = smooth_gradient(&mesh, &cut, &space, &t, 1.0e-3).expect("smoothed gradient");
    let grad_ok = gx.values.iter().all(|&g| (g - 0.7).abs() <= 1.0e-8)
        && gy.values.iter().all(|&g| (g + 1.3).abs() <= 1.0e-8);

    let n = space.n_dofs();
    let mut trip = TripletList::new(n, n);
    ghost_penalty(&mesh, &cut, &space, 1.0, &mut trip);
    let a = CsrMatrix::from_triplets(&trip);
    let residual = a.matvec(&t.values);
    let ghost_ok = residual.iter().all(|&r| r.abs() <= 1.0e-10);

    grad_ok && ghost_ok
}

fn fmm_constant_extension_ok() -> bool {
    let mesh = BackgroundMesh::build_structured(
        Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 },
        10,
        10,
    )
    .expect("structured mesh");
    let phi = LevelSet::from_fn(&mesh, |p| p.y - 0.53);
    let cut = CutGeometry::build(&mesh, &phi.values).expect("cut geometry");
    let space = P1ActiveSpace::from_active_cells(&mesh, &cut.active_cells);
    let v_n = FeField::from_fn(&space, &mesh.vertices, |_| 2.25);
    // the band covers the whole unit square (max distance 0.53 < 0.8)
    let extended = fast_march_extend(&mesh, &cut, &space, &v_n, 0.8).expect("extension");
    extended.len() == mesh.vertices.len()
        && extended.iter().all(|&v| (v - 2.25).abs() <= 1.0e-10)
}

fn tau_sd_limits_ok() -> bool {
    let stagnant = (tau_sd(0.0, 0.25, 0.7) - 0.5).abs() <= 1.0e-15;
    let advective = (tau_sd(25.0, 1.0e9, 0.5) - 0.2).abs() <= 1.0e-12;
    let transient = (tau_sd(25.0, 1.0e-9, 0.5) - 2.0e-9).abs() <= 1.0e-21;
    let mut monotone = true;
    let mut previous = f64::INFINITY;
    for i in 0..50 {
        let tau = tau_sd(0.5 * i as f64, 0.01, 0.1);
        monotone &= tau <= previous && tau > 0.0;
        previous = tau;
    }
    stagnant && advective && transient && monotone
}

fn absorption_bounds_ok() -> bool {
    let mut ok = true;
    for &epsilon in &[0.05, 0.25, 1.0, 4.0] {
        let beam = BeamSpec {
            sigma: 0.1,
            a_amp: 2.0,
            e_ray: Vec2::new(0.0, -1.0),
            path: FocalPath::Fixed(Vec2::new(0.5, 1.0)),
            pulse_period: 0.1,
            epsilon,
            window: (0.0, 1.6),
        }
        .validated()
        .expect("beam spec");
        for i in 0..720 {
            let angle = 2.0 * std::f64::consts::PI * i as f64 / 720.0;
            let a = beam.absorption(Vec2::new(angle.cos(), angle.sin()));
            ok &= (0.0..=1.0).contains(&a);
        }
    }
    ok
}

#[test]
fn criterion8_property_suite_within_budget() {
    let clock = Instant::now();
    let checks = [
        ("quadrature exactness", quadrature_exactness_ok()),
        ("gradient smoothing and ghost-penalty affine reproduction", gradient_and_ghost_ok()),
        ("fast-marching constant extension", fmm_constant_extension_ok()),
        ("τ_SD limit behavior", tau_sd_limits_ok()),
        ("absorptivity bounds", absorption_bounds_ok()),
    ];
    let elapsed = clock.elapsed().as_secs_f64();
    let failed: Vec<&str> =
        checks.iter().filter(|(_, ok)| !ok).map(|(name, _)| *name).collect();
    let pass = failed.is_empty() && elapsed <= 120.0;
    let summary = if failed.is_empty() {
        format!("all {} property groups passed", checks.len())
    } else {
        format!("failed groups: {}", failed.join("; "))
    };
    report(8, pass, &format!("{summary}; runtime {elapsed:.1} s [≤ 120 s]"));
}
