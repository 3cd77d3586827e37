//! Per-step Stefan-Signorini-Nitsche solver.
//!
//! The interface conditions T − T_m ≤ 0, σ ≤ 0, σ·(T − T_m) = 0 with
//! σ = k∇T·n_Γ − I·n_Γ are equivalent to the projection identity
//! σ = −(1/γ)[P_γ(T)]₊ where P_γ(T) = (T − T_m) − γ(k∇T·n_Γ − I·n_Γ).
//! That turns the inequality constraints into one nonlinear Nitsche term
//! 𝒩(T, δT) = (1/γ)([P_γ(T)]₊, P^δ_θγ(δT))_Γ with the variant-dependent
//! test factor P^δ_θγ(δT) = θ₁ δT − γ θ₂ k∇δT·n_Γ. A backward Euler step
//! on the domain frozen at t_n then reads A_♯(T, δT) + 𝒩(T, δT) = L_♯(δT),
//! solved with a semi-smooth Newton method: the Heaviside H(P_γ) of the
//! current iterate selects the active set, and on a fixed active set the
//! problem is affine, so Newton terminates in one extra solve once the set
//! stops changing.

use crate::cut::{BoundaryPiece, CutGeometry};
use crate::fem::assemble;
use crate::fem::sparse::{solve_sparse, CsrMatrix, TripletList};
use crate::fem::{ElementMap, FeField, P1ActiveSpace};
use crate::geom::Vec2;
use crate::laser::BeamSource;
use crate::levelset::NormalField;
use crate::mesh::BackgroundMesh;
use crate::{Error, Result};

/// Absolute Newton residual tolerance.
pub const NEWTON_ATOL: f64 = 1e-11;
/// Relative Newton residual tolerance (against the initial residual).
pub const NEWTON_RTOL: f64 = 1e-9;
/// Newton iteration cap; exceeding it is a step failure.
pub const NEWTON_MAX_ITER: usize = 30;

/// Physical constants of the material.
#[derive(Debug, Clone, Copy)]
pub struct MaterialParams {
    /// Mass density ρ.
    pub rho: f64,
    /// Heat capacity c.
    pub c: f64,
    /// Thermal conductivity k.
    pub k: f64,
    /// Latent heat L.
    pub latent_heat: f64,
    /// Melting temperature T_m.
    pub t_melt: f64,
}

impl MaterialParams {
    /// Collects invariant violations as config messages.
    pub fn validate(&self, errors: &mut Vec<String>) {
        for (name, v) in [
            ("material.rho", self.rho),
            ("material.c", self.c),
            ("material.k", self.k),
            ("material.latent_heat", self.latent_heat),
        ] {
            if !(v > 0.0) {
                errors.push(format!("{name}: must be positive, got {v}"));
            }
        }
        if !self.t_melt.is_finite() {
            errors.push(format!("material.t_melt: must be finite, got {}", self.t_melt));
        }
    }
}

/// The four Nitsche interface variants (θ₁, θ₂).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NitscheVariant {
    /// θ₁ = 1, θ₂ = 1: symmetric.
    Symmetric,
    /// θ₁ = 1, θ₂ = −1: skew-symmetric.
    Skew,
    /// θ₁ = 1, θ₂ = 0: penalty-type.
    Penalty,
    /// θ₁ = 0, θ₂ = −1: penalty-free non-symmetric (default).
    PenaltyFree,
}

impl NitscheVariant {
    /// All variants in a fixed order.
    pub const ALL: [NitscheVariant; 4] = [
        NitscheVariant::Symmetric,
        NitscheVariant::Skew,
        NitscheVariant::Penalty,
        NitscheVariant::PenaltyFree,
    ];

    /// The (θ₁, θ₂) pair.
    pub fn theta(self) -> (f64, f64) {
        match self {
            NitscheVariant::Symmetric => (1.0, 1.0),
            NitscheVariant::Skew => (1.0, -1.0),
            NitscheVariant::Penalty => (1.0, 0.0),
            NitscheVariant::PenaltyFree => (0.0, -1.0),
        }
    }

    /// Stable config-file name.
    pub fn as_str(self) -> &'static str {
        match self {
            NitscheVariant::Symmetric => "symmetric",
            NitscheVariant::Skew => "skew",
            NitscheVariant::Penalty => "penalty",
            NitscheVariant::PenaltyFree => "penalty-free",
        }
    }

    /// Parses a config-file name.
    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

/// Stabilization and penalty parameters of the Nitsche formulation.
#[derive(Debug, Clone, Copy)]
pub struct NitscheParams {
    pub variant: NitscheVariant,
    /// γ̂ in γ = γ̂·h.
    pub gamma_hat: f64,
    /// Ghost-penalty coefficient γ_T for the temperature.
    pub gamma_t: f64,
    /// Dirichlet boundary penalty γ_b.
    pub gamma_b: f64,
    /// Ghost-penalty coefficient γ_{G_T} for gradient smoothing.
    pub gamma_gt: f64,
}

impl Default for NitscheParams {
    fn default() -> Self {
        NitscheParams {
            variant: NitscheVariant::PenaltyFree,
            gamma_hat: 1.0,
            gamma_t: 1e-1,
            gamma_b: 100.0,
            gamma_gt: 1e-3,
        }
    }
}

impl NitscheParams {
    /// Interface parameter γ = γ̂·h for the given mesh size.
    pub fn gamma(&self, h_max: f64) -> f64 {
        self.gamma_hat * h_max
    }

    /// Collects invariant violations as config messages.
    pub fn validate(&self, errors: &mut Vec<String>) {
        for (name, v) in [
            ("nitsche.gamma_hat", self.gamma_hat),
            ("nitsche.gamma_t", self.gamma_t),
            ("nitsche.gamma_b", self.gamma_b),
            ("nitsche.gamma_gt", self.gamma_gt),
        ] {
            if !(v > 0.0) {
                errors.push(format!("{name}: must be positive, got {v}"));
            }
        }
    }
}

/// Which sides of the background box carry Dirichlet data (the rest are
/// Neumann with flux `q_n`).
#[derive(Debug, Clone, Copy, Default)]
pub struct SideBc {
    pub left: bool,
    pub right: bool,
    pub bottom: bool,
    pub top: bool,
}

impl SideBc {
    /// Dirichlet on every side.
    pub fn all_dirichlet() -> Self {
        SideBc { left: true, right: true, bottom: true, top: true }
    }

    /// Classifies a boundary piece by its outward normal.
    pub fn is_dirichlet(&self, bp: &BoundaryPiece) -> bool {
        if bp.normal.x < -0.5 {
            self.left
        } else if bp.normal.x > 0.5 {
            self.right
        } else if bp.normal.y < -0.5 {
            self.bottom
        } else {
            self.top
        }
    }
}

/// A scalar function of space and time.
pub type SpaceTimeFn = Box<dyn Fn(Vec2, f64) -> f64>;

/// Complete data of one Stefan-Signorini problem.
pub struct ProblemSpec {
    pub material: MaterialParams,
    pub nitsche: NitscheParams,
    /// Volumetric heat source f(x, t).
    pub f: SpaceTimeFn,
    /// Neumann flux q_N(x, t) on non-Dirichlet box sides.
    pub q_n: SpaceTimeFn,
    /// Dirichlet data T_D(x, t) on the Dirichlet box sides.
    pub t_d: SpaceTimeFn,
    /// Interface heat flux I(x, t).
    pub beam: Box<dyn BeamSource>,
    /// Initial temperature, evaluable on the whole fictitious domain.
    pub t_0: Box<dyn Fn(Vec2) -> f64>,
    /// Dirichlet side selection.
    pub dirichlet: SideBc,
    /// Time step Δt.
    pub dt: f64,
    /// Start and end times.
    pub t0: f64,
    pub tf: f64,
}

impl ProblemSpec {
    /// Validates the scalar parameters; closure data is not inspectable.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        self.material.validate(&mut errors);
        self.nitsche.validate(&mut errors);
        if !(self.dt > 0.0) {
            errors.push(format!("dt: must be positive, got {}", self.dt));
        }
        // tf == t0 is legal: it asks for the initial state and no steps
        if !(self.t0 <= self.tf) {
            errors.push(format!("time window: t0 = {} must not exceed tf = {}", self.t0, self.tf));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

/// P_γ(T) = (T − T_m) − γ(k·∂T/∂n − I·n).
pub fn p_gamma(t_val: f64, dtdn: f64, i_dot_n: f64, k: f64, gamma: f64, t_melt: f64) -> f64 {
    (t_val - t_melt) - gamma * (k * dtdn - i_dot_n)
}

/// Property-test oracle for the Signorini reformulation: the KKT triple
/// (T − T_m ≤ 0, σ ≤ 0, σ·(T − T_m) = 0) holds exactly when the projection
/// identity σ = −(1/γ)[(T − T_m) − γσ]₊ holds. Returns true when the two
/// judgments agree (both hold or both fail).
pub fn signorini_kkt_equivalence_check(t_minus_tm: f64, sigma: f64, gamma: f64) -> bool {
    let u = t_minus_tm;
    let tol = 1e-10 * (1.0 + u.abs() + sigma.abs());
    let kkt = u <= tol && sigma <= tol && (sigma * u).abs() <= tol;
    let projected = -(u - gamma * sigma).max(0.0) / gamma;
    let identity = (sigma - projected).abs() <= tol * (1.0 + 1.0 / gamma);
    kkt == identity
}

/// Convergence record of one Newton solve.
#[derive(Debug, Clone)]
pub struct NewtonReport {
    /// Number of linear solves performed.
    pub iterations: usize,
    /// ‖r‖₂ before any solve and after each update (length iterations+1).
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// Number of interface quadrature points whose Heaviside flag flipped
    /// at each update (length iterations).
    pub active_set_changes: Vec<usize>,
    /// max(0, T − T_m) over interface quadrature points at the final
    /// iterate (weak Signorini feasibility violation).
    pub max_feasibility_violation: f64,
    /// Whether the residual contracted by ≥ 10× per iteration once the
    /// active set had been stable for two consecutive iterations.
    pub quadratic_like: bool,
    /// Number of active interface quadrature points at the final iterate.
    pub active_points: usize,
}

/// Everything a single backward Euler step needs besides the problem data.
pub struct StepInputs<'a> {
    pub mesh: &'a BackgroundMesh,
    pub cut: &'a CutGeometry,
    pub space: &'a P1ActiveSpace,
    /// Smoothed normal field; only used for the beam incidence angle.
    pub normals: &'a NormalField,
    /// T^n on the current active space.
    pub t_prev: &'a FeField,
    /// Time t_{n+1} at which the unknown (and the beam) lives.
    pub t_next: f64,
    /// Time step Δt = t_{n+1} − t_n.
    pub dt: f64,
}

/// Per-quadrature-point interface data frozen during one Newton solve.
struct SegQp {
    segment: usize,
    dofs: [usize; 3],
    /// Quadrature weight times segment length.
    w: f64,
    lam: [f64; 3],
    /// ∇N_i·n_Γ (constant over the parent cell).
    dn: [f64; 3],
    /// Beam flux against the geometric segment normal.
    i_dot_n: f64,
    /// Test factors P^δ_θγ(N_i) = θ₁N_i − γθ₂k ∇N_i·n_Γ.
    pd_test: [f64; 3],
    /// Trial factors N_i − γk ∇N_i·n_Γ of the semi-smooth tangent.
    trial: [f64; 3],
}

/// The assembled linear part of one step plus the frozen interface data.
struct StepSystem {
    a_lin: CsrMatrix,
    rhs_lin: Vec<f64>,
    qps: Vec<SegQp>,
    /// CSR value positions of each segment's 3×3 interface block.
    positions: Vec<[usize; 9]>,
    gamma: f64,
}

fn build_step_system(inputs: &StepInputs, spec: &ProblemSpec) -> Result<StepSystem> {
    let (mesh, cut, space) = (inputs.mesh, inputs.cut, inputs.space);
    let (normals, t_prev) = (inputs.normals, inputs.t_prev);
    let (t_next, dt) = (inputs.t_next, inputs.dt);
    let m = &spec.material;
    let gamma = spec.nitsche.gamma(mesh.h_max);
    let theta = spec.nitsche.variant.theta();
    let n = space.n_dofs();

    let mut trip = TripletList::new(n, n);
    assemble::bulk_matrix(mesh, cut, space, m.rho * m.c / dt, m.k, &mut trip);
    assemble::ghost_penalty(mesh, cut, space, spec.nitsche.gamma_t * m.k * mesh.h_max, &mut trip);
    assemble::dirichlet_matrix(mesh, cut, space, m.k, spec.nitsche.gamma_b, |bp| {
        spec.dirichlet.is_dirichlet(bp)
    }, &mut trip);
    assemble::interface_linear_matrix(mesh, cut, space, m.k, gamma, theta, &mut trip);
    let a_lin = CsrMatrix::from_triplets(&trip);

    let mut rhs = vec![0.0; n];
    assemble::bulk_mass_rhs(mesh, cut, space, t_prev, m.rho * m.c / dt, &mut rhs);
    assemble::source_rhs(mesh, cut, space, |x| (spec.f)(x, t_next), &mut rhs);
    assemble::dirichlet_rhs(
        mesh,
        cut,
        space,
        m.k,
        spec.nitsche.gamma_b,
        |bp| spec.dirichlet.is_dirichlet(bp),
        |x| (spec.t_d)(x, t_next),
        &mut rhs,
    );
    assemble::neumann_rhs(
        mesh,
        cut,
        space,
        |bp| !spec.dirichlet.is_dirichlet(bp),
        |x| (spec.q_n)(x, t_next),
        &mut rhs,
    );

    // interface quadrature data: beam flux and basis factors per point
    let rule = crate::fem::quadrature::seg_rule(5);
    let mut qps = Vec::with_capacity(cut.segments.len() * rule.points.len());
    let mut positions = Vec::with_capacity(cut.segments.len());
    for (si, seg) in cut.segments.iter().enumerate() {
        let tri = &mesh.triangles[seg.parent];
        let map = ElementMap::from_mesh(&mesh.vertices, tri);
        let dofs = space.cell_dofs(tri);
        let dn = [
            map.grad_lambda[0].dot(seg.normal),
            map.grad_lambda[1].dot(seg.normal),
            map.grad_lambda[2].dot(seg.normal),
        ];
        let mut pd_test = [0.0; 3];
        let mut trial = [0.0; 3];
        for i in 0..3 {
            pd_test[i] = -gamma * theta.1 * m.k * dn[i];
            trial[i] = -gamma * m.k * dn[i];
        }
        let mut pos = [0usize; 9];
        for i in 0..3 {
            for j in 0..3 {
                pos[3 * i + j] = a_lin.value_index(dofs[i], dofs[j]).ok_or_else(|| {
                    Error::Solver(format!("missing interface matrix entry at segment {si}"))
                })?;
            }
        }
        positions.push(pos);
        for (q, &s) in rule.points.iter().enumerate() {
            let x = seg.a.lerp(seg.b, s);
            let lam = map.barycentric(x);
            let n_hint = normals.eval(tri, lam);
            let flux = spec.beam.flux(x, n_hint, t_next);
            let i_dot_n = flux.dot(seg.normal);
            if !i_dot_n.is_finite() {
                return Err(Error::Solver(format!(
                    "non-finite beam flux {i_dot_n} at segment {si}, quadrature point {q}"
                )));
            }
            let w = rule.weights[q] * seg.length;
            // the basic load form carries (I·n, δT) and the reformulated
            // flux adds (I·n, P^δ(δT) − δT)
            for i in 0..3 {
                rhs[dofs[i]] += w * i_dot_n * lam[i];
                rhs[dofs[i]] += w * i_dot_n * (theta.0 * lam[i] + pd_test[i] - lam[i]);
            }
            qps.push(SegQp {
                segment: si,
                dofs,
                w,
                lam,
                dn,
                i_dot_n,
                pd_test: [
                    theta.0 * lam[0] + pd_test[0],
                    theta.0 * lam[1] + pd_test[1],
                    theta.0 * lam[2] + pd_test[2],
                ],
                trial,
            });
        }
    }
    if let Some(i) = rhs.iter().position(|v| !v.is_finite()) {
        return Err(Error::Solver(format!(
            "non-finite load entry at dof {i} (vertex {})",
            space.dof_to_vertex[i]
        )));
    }
    Ok(StepSystem { a_lin, rhs_lin: rhs, qps, positions, gamma })
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One semi-smooth Newton solve for T^{n+1} given T^n and the cut
/// geometry frozen at t_n.
pub fn newton_solve(inputs: &StepInputs, spec: &ProblemSpec) -> Result<(FeField, NewtonReport)> {
    let sys = build_step_system(inputs, spec)?;
    let m = &spec.material;
    let gamma = sys.gamma;
    let inv_gamma = 1.0 / gamma;
    let n = inputs.space.n_dofs();

    let mut t_iter = inputs.t_prev.clone();
    let mut residual = vec![0.0; n];
    let mut active: Vec<bool> = vec![false; sys.qps.len()];
    let mut residual_history = Vec::new();
    let mut active_set_changes = Vec::new();

    // evaluates P_γ at every interface point, updates the active flags,
    // and returns (#flips, residual ℓ₂ norm)
    let eval_residual = |t: &FeField, active: &mut Vec<bool>, residual: &mut Vec<f64>| -> (usize, f64) {
        sys.a_lin.matvec_into(&t.values, residual);
        for (r, l) in residual.iter_mut().zip(&sys.rhs_lin) {
            *r = l - *r;
        }
        let mut flips = 0;
        for (qi, qp) in sys.qps.iter().enumerate() {
            let vals = [t.values[qp.dofs[0]], t.values[qp.dofs[1]], t.values[qp.dofs[2]]];
            let t_val = ElementMap::p1_value(vals, qp.lam);
            let dtdn = vals[0] * qp.dn[0] + vals[1] * qp.dn[1] + vals[2] * qp.dn[2];
            let p = p_gamma(t_val, dtdn, qp.i_dot_n, m.k, gamma, m.t_melt);
            let is_active = p > 0.0;
            if is_active != active[qi] {
                flips += 1;
                active[qi] = is_active;
            }
            if is_active {
                let c = qp.w * inv_gamma * p;
                for i in 0..3 {
                    residual[qp.dofs[i]] -= c * qp.pd_test[i];
                }
            }
        }
        (flips, l2_norm(residual))
    };

    let (initial_flips, mut res_norm) = eval_residual(&t_iter, &mut active, &mut residual);
    let _ = initial_flips; // the initial classification is not a "change"
    residual_history.push(res_norm);
    if !res_norm.is_finite() {
        return Err(Error::Solver("initial Newton residual is non-finite".into()));
    }
    let tol = NEWTON_ATOL.max(NEWTON_RTOL * res_norm);

    let mut iterations = 0;
    let mut converged = res_norm <= tol;
    let mut jac_values: Vec<f64>;
    while !converged && iterations < NEWTON_MAX_ITER {
        // tangent = linear part + Heaviside-gated interface linearization
        jac_values = sys.a_lin.values.clone();
        for (qi, qp) in sys.qps.iter().enumerate() {
            if !active[qi] {
                continue;
            }
            let pos = &sys.positions[qp.segment];
            let c = qp.w * inv_gamma;
            for i in 0..3 {
                let test = c * qp.pd_test[i];
                for j in 0..3 {
                    jac_values[pos[3 * i + j]] += test * (qp.lam[j] + qp.trial[j]);
                }
            }
        }
        let jac = sys.a_lin.with_values(jac_values);
        let (delta, _report) = solve_sparse(&jac, &residual)?;
        for (t, d) in t_iter.values.iter_mut().zip(&delta) {
            *t += d;
        }
        iterations += 1;

        let (flips, norm) = eval_residual(&t_iter, &mut active, &mut residual);
        res_norm = norm;
        residual_history.push(res_norm);
        active_set_changes.push(flips);
        if !res_norm.is_finite() {
            return Err(Error::Solver(format!(
                "Newton residual became non-finite at iteration {iterations}"
            )));
        }
        converged = res_norm <= tol;
    }

    // quadratic-like contraction after the active set has been stable for
    // two consecutive iterations (the problem is affine on a fixed set)
    let last_change = active_set_changes.iter().rposition(|&c| c > 0);
    let stable_from = last_change.map_or(0, |i| i + 1);
    let mut quadratic_like = true;
    for j in (stable_from + 2)..residual_history.len() {
        let prev = residual_history[j - 1];
        if prev > 100.0 * NEWTON_ATOL && residual_history[j] > 0.1 * prev {
            quadratic_like = false;
        }
    }

    // weak feasibility: max(T − T_m)₊ over interface quadrature points
    let mut violation = 0.0f64;
    let mut active_points = 0;
    for (qi, qp) in sys.qps.iter().enumerate() {
        let vals = [
            t_iter.values[qp.dofs[0]],
            t_iter.values[qp.dofs[1]],
            t_iter.values[qp.dofs[2]],
        ];
        let t_val = ElementMap::p1_value(vals, qp.lam);
        violation = violation.max(t_val - m.t_melt);
        active_points += usize::from(active[qi]);
    }

    let report = NewtonReport {
        iterations,
        residual_history,
        converged,
        active_set_changes,
        max_feasibility_violation: violation.max(0.0),
        quadratic_like,
        active_points,
    };
    if !report.converged {
        return Err(Error::NewtonDiverged {
            iterations: report.iterations,
            residual: res_norm,
        });
    }
    Ok((t_iter, report))
}
