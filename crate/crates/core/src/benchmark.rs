//! Manufactured verification problem and error measurement tools.
//!
//! The manufactured solution lives on the square (−1.5, 1.5)² with the
//! material outside a circle of radius R(t) = log α(t) that grows with
//! α(t) = 3/(2 − 3t). With ρ = c = k = L = 1 and T_m = −0.01 the field
//!
//!   T(r, t) = −eʳ + cos(π r / (2R)) + T_m + α
//!
//! satisfies T = T_m on r = R exactly (since e^R = α and the cosine
//! vanishes), and a radial beam intensity I = A(t) r̂ with
//! A = −(2α + π/(2R)) balances the melting flux so that the interface
//! velocity is v·n_Γ = −α, matching Ṙ = α with the inward normal
//! n_Γ = −r̂. The body source f = ρc ∂T/∂t − k ΔT is given in closed
//! form and double-checked here against finite differences of T.
//!
//! The module also provides the error norms used by the convergence
//! studies: relative L² and H¹ seminorms over the material region,
//! L² norms along the reconstructed interface, interface averages, and
//! a log-log least-squares slope fit.

use crate::cut::{CutGeometry, InterfaceSegment};
use crate::fem::quadrature::{seg_rule, tri_rule};
use crate::fem::{ElementMap, FeField, P1ActiveSpace, NO_DOF};
use crate::geom::Vec2;
use crate::laser::BeamSource;
use crate::levelset::LevelSet;
use crate::mesh::{BackgroundMesh, Rect};
use crate::sim::Simulation;
use crate::stefan::{MaterialParams, NitscheParams, ProblemSpec, SideBc};
use crate::velocity::VelocityField;
use crate::{Error, Result};

/// Melting temperature of the manufactured problem.
pub const MANUFACTURED_T_MELT: f64 = -0.01;

/// Closed forms of the manufactured Stefan-Signorini solution.
#[derive(Debug, Clone, Copy, Default)]
pub struct ManufacturedCase;

impl ManufacturedCase {
    /// Interface scale α(t) = 3/(2 − 3t); valid for t < 2/3.
    pub fn alpha(&self, t: f64) -> f64 {
        3.0 / (2.0 - 3.0 * t)
    }

    /// Exact interface radius R(t) = log α(t).
    pub fn radius(&self, t: f64) -> f64 {
        self.alpha(t).ln()
    }

    fn beta(&self, t: f64) -> f64 {
        std::f64::consts::PI / (2.0 * self.radius(t))
    }

    /// Exact temperature.
    pub fn temperature(&self, p: Vec2, t: f64) -> f64 {
        let r = p.norm();
        -r.exp() + (self.beta(t) * r).cos() + MANUFACTURED_T_MELT + self.alpha(t)
    }

    /// Exact temperature gradient (radial).
    pub fn temperature_gradient(&self, p: Vec2, t: f64) -> Vec2 {
        let r = p.norm();
        let beta = self.beta(t);
        let t_r = -r.exp() - beta * (beta * r).sin();
        p.normalized_or(Vec2::ZERO) * t_r
    }

    /// Closed-form body source f = ρc ∂T/∂t − k ΔT (2D radial Laplacian).
    pub fn source(&self, p: Vec2, t: f64) -> f64 {
        let r = p.norm();
        let alpha = self.alpha(t);
        let big_r = self.radius(t);
        let beta = self.beta(t);
        let pi = std::f64::consts::PI;
        (pi * alpha * r / (2.0 * big_r * big_r)) * (beta * r).sin()
            + alpha * alpha
            + r.exp() * (1.0 + 1.0 / r)
            + beta * beta * (beta * r).cos()
            + (beta / r) * (beta * r).sin()
    }

    /// Signed beam amplitude A(t) = −((ρL + 1)α + π/(2R)).
    pub fn beam_amplitude(&self, t: f64) -> f64 {
        -(2.0 * self.alpha(t) + std::f64::consts::PI / (2.0 * self.radius(t)))
    }

    /// Exact normal velocity v·n_Γ = −α (the circle grows, n_Γ = −r̂).
    pub fn normal_speed(&self, t: f64) -> f64 {
        -self.alpha(t)
    }

    /// Initial level set φ(x, 0) = R(0) − |x| (material outside the circle).
    pub fn initial_phi(&self, p: Vec2) -> f64 {
        self.radius(0.0) - p.norm()
    }

    /// Background box of the benchmark.
    pub fn domain(&self) -> Rect {
        Rect { x0: -1.5, x1: 1.5, y0: -1.5, y1: 1.5 }
    }

    /// Unit material parameters with T_m = −0.01.
    pub fn material(&self) -> MaterialParams {
        MaterialParams { rho: 1.0, c: 1.0, k: 1.0, latent_heat: 1.0, t_melt: MANUFACTURED_T_MELT }
    }

    /// Full problem description for a run over [t0, tf].
    pub fn problem_spec(&self, nitsche: NitscheParams, dt: f64, t0: f64, tf: f64) -> ProblemSpec {
        let case = *self;
        ProblemSpec {
            material: self.material(),
            nitsche,
            f: Box::new(move |p, t| case.source(p, t)),
            q_n: Box::new(|_, _| 0.0),
            t_d: Box::new(move |p, t| case.temperature(p, t)),
            beam: Box::new(ManufacturedBeam { case }),
            t_0: Box::new(move |p| case.temperature(p, t0)),
            dirichlet: SideBc::all_dirichlet(),
            dt,
            t0,
            tf,
        }
    }
}

/// Radial beam I(x, t) = A(t) x̂ reproducing the manufactured flux balance.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedBeam {
    case: ManufacturedCase,
}

impl BeamSource for ManufacturedBeam {
    fn flux(&self, x: Vec2, _n_gamma: Vec2, t: f64) -> Vec2 {
        x.normalized_or(Vec2::ZERO) * self.case.beam_amplitude(t)
    }
}

/// Absolute and relative L²/H¹-seminorm errors over the material region.
#[derive(Debug, Clone, Copy)]
pub struct ErrorNorms {
    pub l2: f64,
    pub l2_rel: f64,
    pub h1_semi: f64,
    pub h1_semi_rel: f64,
}

/// Measures `field − exact` over the material volume pieces.
pub fn error_norms(
    mesh: &BackgroundMesh,
    cut: &CutGeometry,
    space: &P1ActiveSpace,
    field: &FeField,
    exact: impl Fn(Vec2) -> f64,
    exact_grad: impl Fn(Vec2) -> Vec2,
) -> ErrorNorms {
    let rule = tri_rule(4);
    let (mut err2, mut nrm2, mut herr2, mut hnrm2) = (0.0, 0.0, 0.0, 0.0);
    for piece in &cut.pieces {
        let tri = &mesh.triangles[piece.parent];
        let vals = field.cell_values(space, tri);
        let parent_map = ElementMap::from_mesh(&mesh.vertices, tri);
        let grad_h = parent_map.p1_gradient(vals);
        let piece_map = ElementMap::new(piece.verts[0], piece.verts[1], piece.verts[2]);
        for (q, &lam) in rule.points.iter().enumerate() {
            let w = rule.weights[q] * piece_map.area;
            let p = piece_map.point(lam);
            let u_h = ElementMap::p1_value(vals, parent_map.barycentric(p));
            let u_ex = exact(p);
            let g_ex = exact_grad(p);
            err2 += w * (u_h - u_ex) * (u_h - u_ex);
            nrm2 += w * u_ex * u_ex;
            herr2 += w * (grad_h - g_ex).norm_sq();
            hnrm2 += w * g_ex.norm_sq();
        }
    }
    ErrorNorms {
        l2: err2.sqrt(),
        l2_rel: (err2 / nrm2).sqrt(),
        h1_semi: herr2.sqrt(),
        h1_semi_rel: (herr2 / hnrm2).sqrt(),
    }
}

/// L² norm of `value − exact` along the interface segments; returns
/// (absolute, relative) where relative divides by ‖exact‖_{L²(Γh)}.
pub fn segment_l2(
    segments: &[InterfaceSegment],
    value: impl Fn(&InterfaceSegment, Vec2) -> f64,
    exact: impl Fn(Vec2) -> f64,
) -> (f64, f64) {
    let rule = seg_rule(5);
    let (mut err2, mut nrm2) = (0.0, 0.0);
    for seg in segments {
        for (q, &s) in rule.points.iter().enumerate() {
            let w = rule.weights[q] * seg.length;
            let p = seg.a.lerp(seg.b, s);
            let d = value(seg, p) - exact(p);
            let e = exact(p);
            err2 += w * d * d;
            nrm2 += w * e * e;
        }
    }
    (err2.sqrt(), (err2 / nrm2).sqrt())
}

/// Length-weighted interface average (∫_Γh f ds) / (∫_Γh ds); the closure
/// also receives the segment so cell-local fields can be interpolated.
pub fn interface_average(
    segments: &[InterfaceSegment],
    f: impl Fn(&InterfaceSegment, Vec2) -> f64,
) -> f64 {
    let rule = seg_rule(5);
    let (mut num, mut den) = (0.0, 0.0);
    for seg in segments {
        for (q, &s) in rule.points.iter().enumerate() {
            let w = rule.weights[q] * seg.length;
            num += w * f(seg, seg.a.lerp(seg.b, s));
            den += w;
        }
    }
    num / den
}

/// Relative errors sampled after one time step, measured at t_{n+1}.
///
/// Temperature errors live on the geometry the solve used (cut at φⁿ);
/// interface radius quantities live on the advected geometry (cut at
/// φ^{n+1}); the velocity is compared on the solve interface where the
/// extension originated.
#[derive(Debug, Clone, Copy)]
pub struct StepErrors {
    pub t: f64,
    /// Relative L²(Ω_h) temperature error.
    pub temp_l2: f64,
    /// Relative H¹(Ω_h) seminorm temperature error.
    pub temp_h1: f64,
    /// Relative L²(Γ_h) temperature error.
    pub temp_interface: f64,
    /// Relative L²(Γ_h) error of the point radius |x| against R(t).
    pub radius: f64,
    /// Relative L²(Γ_h) error of v_n^ext against −α(t).
    pub velocity: f64,
    /// Averaged interface radius.
    pub r_avg: f64,
    /// Averaged extended normal velocity on the interface.
    pub v_avg: f64,
}

/// Full error record of one manufactured-solution run.
#[derive(Debug, Clone)]
pub struct ManufacturedRun {
    pub nx: usize,
    /// Cell size 3/nx of the background box.
    pub h: f64,
    pub dt: f64,
    pub steps: Vec<StepErrors>,
    pub halved_steps: usize,
    pub redistanced_steps: usize,
    pub max_newton_iterations: usize,
    /// l²-in-time aggregates (√ of the mean square over steps).
    pub temp_l2: f64,
    pub temp_h1: f64,
    pub temp_interface: f64,
    pub radius_l2: f64,
    pub velocity_l2: f64,
    pub max_r_avg_err: f64,
    pub max_v_avg_err: f64,
    /// Final fields for cross-run comparisons.
    pub final_phi: LevelSet,
    pub final_space: P1ActiveSpace,
    pub final_temperature: FeField,
}

/// P1 interpolation of an active-space field at a point of a given cell.
fn p1_at(
    mesh: &BackgroundMesh,
    space: &P1ActiveSpace,
    field: &FeField,
    parent: usize,
    p: Vec2,
) -> f64 {
    let tri = &mesh.triangles[parent];
    let map = ElementMap::from_mesh(&mesh.vertices, tri);
    ElementMap::p1_value(field.cell_values(space, tri), map.barycentric(p))
}

/// P1 interpolation of the extended normal speed at an interface point.
fn vn_at(mesh: &BackgroundMesh, v: &VelocityField, parent: usize, p: Vec2) -> f64 {
    let tri = &mesh.triangles[parent];
    let map = ElementMap::from_mesh(&mesh.vertices, tri);
    let lam = map.barycentric(p);
    tri.iter().zip(lam).map(|(&vtx, l)| v.v_n_ext[vtx] * l).sum()
}

/// Runs the manufactured problem on an nx×nx background mesh over
/// [0, t_end] and collects per-step and aggregated errors.
pub fn run_manufactured(
    nx: usize,
    dt: f64,
    t_end: f64,
    nitsche: NitscheParams,
    transport_theta: f64,
) -> Result<ManufacturedRun> {
    let case = ManufacturedCase;
    let mesh = BackgroundMesh::build_structured(case.domain(), nx, nx)?;
    let spec = case.problem_spec(nitsche, dt, 0.0, t_end);
    let sim = Simulation::new(mesh, spec, transport_theta)?;
    let mut state = sim.initial_state(&|p| case.initial_phi(p))?;

    let mut steps: Vec<StepErrors> = Vec::new();
    let (mut halved_steps, mut redistanced_steps, mut max_newton) = (0, 0, 0);
    let step_budget = 10 + 10 * ((t_end / dt).ceil() as usize);
    while t_end - state.t > 1e-9 * dt {
        if state.step >= step_budget {
            return Err(Error::Solver(format!(
                "manufactured run exceeded the step budget at t = {}",
                state.t
            )));
        }
        let dt_step = (t_end - state.t).min(dt);
        let (next, report) = sim.step_with_dt(&state, dt_step)?;
        halved_steps += report.halved as usize;
        redistanced_steps += report.redistanced as usize;
        max_newton = max_newton.max(report.newton.iterations);

        let t = next.t;
        let norms = error_norms(
            &sim.mesh,
            &report.cut_solve,
            &next.space,
            &next.temperature,
            |p| case.temperature(p, t),
            |p| case.temperature_gradient(p, t),
        );
        let (_, temp_interface) = segment_l2(
            &report.cut_solve.segments,
            |seg, p| p1_at(&sim.mesh, &next.space, &next.temperature, seg.parent, p),
            |p| case.temperature(p, t),
        );
        let (_, radius) = segment_l2(
            &report.cut_next.segments,
            |_, p| p.norm(),
            |_| case.radius(t),
        );
        let (_, velocity) = segment_l2(
            &report.cut_solve.segments,
            |seg, p| vn_at(&sim.mesh, &next.v_ext, seg.parent, p),
            |_| case.normal_speed(t),
        );
        let r_avg = interface_average(&report.cut_next.segments, |_, p| p.norm());
        let v_avg = interface_average(&report.cut_solve.segments, |seg, p| {
            vn_at(&sim.mesh, &next.v_ext, seg.parent, p)
        });
        steps.push(StepErrors {
            t,
            temp_l2: norms.l2_rel,
            temp_h1: norms.h1_semi_rel,
            temp_interface,
            radius,
            velocity,
            r_avg,
            v_avg,
        });
        state = next;
    }

    let agg = |pick: fn(&StepErrors) -> f64| -> f64 {
        (steps.iter().map(|s| pick(s) * pick(s)).sum::<f64>() / steps.len() as f64).sqrt()
    };
    let max_err = |f: &dyn Fn(&StepErrors) -> f64| -> f64 {
        steps.iter().map(|s| f(s)).fold(0.0, f64::max)
    };
    Ok(ManufacturedRun {
        nx,
        h: 3.0 / nx as f64,
        dt,
        halved_steps,
        redistanced_steps,
        max_newton_iterations: max_newton,
        temp_l2: agg(|s| s.temp_l2),
        temp_h1: agg(|s| s.temp_h1),
        temp_interface: agg(|s| s.temp_interface),
        radius_l2: agg(|s| s.radius),
        velocity_l2: agg(|s| s.velocity),
        max_r_avg_err: max_err(&|s| (s.r_avg - case.radius(s.t)).abs()),
        max_v_avg_err: max_err(&|s| (s.v_avg - case.normal_speed(s.t)).abs()),
        final_phi: state.phi,
        final_space: state.space,
        final_temperature: state.temperature,
        steps,
    })
}

/// L² difference of two runs' final temperature fields on the first
/// run's final material region (cells inactive in either run are
/// skipped; both runs must share the mesh resolution).
pub fn temperature_l2_difference(a: &ManufacturedRun, b: &ManufacturedRun) -> Result<f64> {
    if a.nx != b.nx {
        return Err(Error::Solver(format!(
            "cannot compare runs on different meshes ({} vs {})",
            a.nx, b.nx
        )));
    }
    let case = ManufacturedCase;
    let mesh = BackgroundMesh::build_structured(case.domain(), a.nx, a.nx)?;
    let cut = CutGeometry::build(&mesh, &a.final_phi.values)?;
    let rule = tri_rule(4);
    let mut diff2 = 0.0;
    for piece in &cut.pieces {
        let tri = &mesh.triangles[piece.parent];
        let active_in_both = tri
            .iter()
            .all(|&v| a.final_space.vertex_to_dof[v] != NO_DOF && b.final_space.vertex_to_dof[v] != NO_DOF);
        if !active_in_both {
            continue;
        }
        let va = a.final_temperature.cell_values(&a.final_space, tri);
        let vb = b.final_temperature.cell_values(&b.final_space, tri);
        let parent_map = ElementMap::from_mesh(&mesh.vertices, tri);
        let piece_map = ElementMap::new(piece.verts[0], piece.verts[1], piece.verts[2]);
        for (q, &lam) in rule.points.iter().enumerate() {
            let w = rule.weights[q] * piece_map.area;
            let lam_parent = parent_map.barycentric(piece_map.point(lam));
            let d = ElementMap::p1_value(va, lam_parent) - ElementMap::p1_value(vb, lam_parent);
            diff2 += w * d * d;
        }
    }
    Ok(diff2.sqrt())
}

/// Least-squares slope of log e against log h: the observed order.
pub fn fit_order(h: &[f64], err: &[f64]) -> f64 {
    assert!(h.len() == err.len() && h.len() >= 2, "need matching samples to fit an order");
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    sxy / sxx
}
