//! Run configuration: TOML schema, exhaustive validation, and assembly
//! of a ready-to-run problem description.
//!
//! A configuration file describes one ablation simulation: background
//! box and resolution, time grid, material and Nitsche parameters, beam,
//! boundary conditions, level-set initializer, and output cadence.
//! Scalar data entering the PDE (initial temperature, source, boundary
//! data) are arithmetic expressions in x, y, t so scenario files stay
//! self-contained. Validation collects every problem in one pass and
//! reports them with field paths; nothing is computed until the whole
//! file is sound.

use std::path::PathBuf;

use serde::Deserialize;

use crate::expr::Expr;
use crate::geom::Vec2;
use crate::laser::{BeamSpec, FocalPath};
use crate::mesh::Rect;
use crate::stefan::{MaterialParams, NitscheParams, NitscheVariant, ProblemSpec, SideBc};
use crate::{Error, Result};

/// Top-level TOML schema. Unknown keys are rejected so typos surface
/// as parse errors with their location instead of silent defaults.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub time: TimeConfig,
    pub material: MaterialConfig,
    #[serde(default)]
    pub nitsche: NitscheConfig,
    #[serde(default)]
    pub transport: TransportConfig,
    pub levelset: LevelSetConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub source: SourceConfig,
    pub boundary: BoundaryConfig,
    pub beam: BeamConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t0: f64,
    pub tf: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub rho: f64,
    pub c: f64,
    pub k: f64,
    pub latent_heat: f64,
    pub t_melt: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NitscheConfig {
    /// One of "symmetric", "skew", "penalty", "penalty-free".
    pub variant: String,
    pub gamma_hat: f64,
    pub gamma_t: f64,
    pub gamma_b: f64,
    pub gamma_gt: f64,
}

impl Default for NitscheConfig {
    fn default() -> Self {
        let d = NitscheParams::default();
        NitscheConfig {
            variant: d.variant.as_str().to_string(),
            gamma_hat: d.gamma_hat,
            gamma_t: d.gamma_t,
            gamma_b: d.gamma_b,
            gamma_gt: d.gamma_gt,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportConfig {
    /// θ-scheme parameter in [0, 1].
    pub theta: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig { theta: 0.5 }
    }
}

/// Initial interface shape; the material occupies φ < 0.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
pub enum LevelSetConfig {
    /// φ = n·x − offset with the material on the n·x < offset side.
    Plane { normal: [f64; 2], offset: f64 },
    /// φ = ±(radius − |x − center|); "outside" puts the material outside.
    Circle {
        center: [f64; 2],
        radius: f64,
        material: String,
    },
    /// φ given by an expression in x, y.
    Expression { formula: String },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Initial temperature, an expression in x, y (evaluated at t = t0).
    pub temperature: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    /// Volumetric heat source f(x, y, t).
    pub f: String,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig { f: "0".to_string() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    /// Subset of "left", "right", "bottom", "top" carrying Dirichlet data.
    pub dirichlet: Vec<String>,
    /// Dirichlet temperature T_D(x, y, t).
    #[serde(default = "zero_expr")]
    pub t_d: String,
    /// Neumann flux q_N(x, y, t) on the remaining sides.
    #[serde(default = "zero_expr")]
    pub q_n: String,
}

fn zero_expr() -> String {
    "0".to_string()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    pub sigma: f64,
    pub a_amp: f64,
    pub e_ray: [f64; 2],
    /// Pulse period P₀; 0 means a continuous beam.
    #[serde(default)]
    pub pulse_period: f64,
    /// Absorption material constant ε.
    #[serde(default = "one")]
    pub epsilon: f64,
    /// Active time window; defaults to the whole run.
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    pub path: PathConfig,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
pub enum PathConfig {
    Fixed { point: [f64; 2] },
    Raster {
        start: [f64; 2],
        velocity: [f64; 2],
        t_change: f64,
    },
    Waypoints { points: Vec<[f64; 3]> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Output directory; created on demand.
    pub directory: PathBuf,
    /// Write artifacts every N steps (the final step is always written).
    pub every: usize,
    /// Emit VTK files of the physical sub-triangulation and interface.
    pub write_vtk: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: PathBuf::from("out"), every: 10, write_vtk: true }
    }
}

/// Everything needed to start a run, produced by a successful validation.
pub struct ValidatedRun {
    pub domain: Rect,
    pub nx: usize,
    pub ny: usize,
    pub spec: ProblemSpec,
    pub transport_theta: f64,
    pub phi0: Box<dyn Fn(Vec2) -> f64>,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Parses TOML text; syntax and unknown-key errors carry positions.
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    /// Checks every field and assembles the runnable problem. All
    /// problems found are reported together, prefixed by field paths.
    pub fn validate(&self) -> Result<ValidatedRun> {
        let mut errors: Vec<String> = Vec::new();

        let d = &self.domain;
        if !(d.x1 > d.x0) {
            errors.push(format!("domain: x1 ({}) must exceed x0 ({})", d.x1, d.x0));
        }
        if !(d.y1 > d.y0) {
            errors.push(format!("domain: y1 ({}) must exceed y0 ({})", d.y1, d.y0));
        }
        if d.nx == 0 || d.ny == 0 {
            errors.push("domain: nx and ny must be positive".to_string());
        }

        let t = &self.time;
        if !(t.dt > 0.0) {
            errors.push(format!("time.dt: must be positive, got {}", t.dt));
        }
        if !(t.tf >= t.t0) {
            errors.push(format!("time: tf ({}) must not precede t0 ({})", t.tf, t.t0));
        }

        let material = MaterialParams {
            rho: self.material.rho,
            c: self.material.c,
            k: self.material.k,
            latent_heat: self.material.latent_heat,
            t_melt: self.material.t_melt,
        };
        material.validate(&mut errors);

        let variant = match NitscheVariant::parse(&self.nitsche.variant) {
            Some(v) => v,
            None => {
                errors.push(format!(
                    "nitsche.variant: unknown variant '{}' (expected symmetric, \
                     skew, penalty, or penalty-free)",
                    self.nitsche.variant
                ));
                NitscheVariant::PenaltyFree
            }
        };
        let nitsche = NitscheParams {
            variant,
            gamma_hat: self.nitsche.gamma_hat,
            gamma_t: self.nitsche.gamma_t,
            gamma_b: self.nitsche.gamma_b,
            gamma_gt: self.nitsche.gamma_gt,
        };
        nitsche.validate(&mut errors);

        if !(0.0..=1.0).contains(&self.transport.theta) {
            errors.push(format!(
                "transport.theta: must lie in [0, 1], got {}",
                self.transport.theta
            ));
        }

        let phi0 = self.build_phi0(&mut errors);

        let parse_expr = |field: &str, text: &str, errors: &mut Vec<String>| -> Option<Expr> {
            match Expr::parse(text) {
                Ok(e) => Some(e),
                Err(err) => {
                    errors.push(format!("{field}: {err}"));
                    None
                }
            }
        };
        let t_init = parse_expr("initial.temperature", &self.initial.temperature, &mut errors);
        let f_expr = parse_expr("source.f", &self.source.f, &mut errors);
        let t_d_expr = parse_expr("boundary.t_d", &self.boundary.t_d, &mut errors);
        let q_n_expr = parse_expr("boundary.q_n", &self.boundary.q_n, &mut errors);

        let mut dirichlet = SideBc { left: false, right: false, bottom: false, top: false };
        for side in &self.boundary.dirichlet {
            match side.as_str() {
                "left" => dirichlet.left = true,
                "right" => dirichlet.right = true,
                "bottom" => dirichlet.bottom = true,
                "top" => dirichlet.top = true,
                other => errors.push(format!(
                    "boundary.dirichlet: unknown side '{other}' (expected left, \
                     right, bottom, or top)"
                )),
            }
        }

        let beam = self.build_beam(&mut errors);

        if self.output.every == 0 {
            errors.push("output.every: must be at least 1".to_string());
        }

        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        let (t_init, f_expr, t_d_expr, q_n_expr) = (
            t_init.expect("validated"),
            f_expr.expect("validated"),
            t_d_expr.expect("validated"),
            q_n_expr.expect("validated"),
        );
        let t0 = t.t0;
        let spec = ProblemSpec {
            material,
            nitsche,
            f: Box::new(move |p, time| f_expr.eval(p.x, p.y, time)),
            q_n: Box::new(move |p, time| q_n_expr.eval(p.x, p.y, time)),
            t_d: Box::new(move |p, time| t_d_expr.eval(p.x, p.y, time)),
            beam: Box::new(beam.expect("validated")),
            t_0: Box::new(move |p| t_init.eval(p.x, p.y, t0)),
            dirichlet,
            dt: t.dt,
            t0: t.t0,
            tf: t.tf,
        };
        // the spec re-checks its own invariants; config errors above
        // should have caught everything user-visible already
        spec.validate()?;
        Ok(ValidatedRun {
            domain: Rect { x0: d.x0, x1: d.x1, y0: d.y0, y1: d.y1 },
            nx: d.nx,
            ny: d.ny,
            spec,
            transport_theta: self.transport.theta,
            phi0: phi0.expect("validated"),
            output: self.output.clone(),
        })
    }

    fn build_phi0(&self, errors: &mut Vec<String>) -> Option<Box<dyn Fn(Vec2) -> f64>> {
        match &self.levelset {
            LevelSetConfig::Plane { normal, offset } => {
                let n = Vec2::new(normal[0], normal[1]);
                if n.norm() < 1e-12 {
                    errors.push("levelset.normal: must be nonzero".to_string());
                    return None;
                }
                let offset = *offset;
                Some(Box::new(move |p: Vec2| p.dot(n) - offset))
            }
            LevelSetConfig::Circle { center, radius, material } => {
                let c = Vec2::new(center[0], center[1]);
                let r = *radius;
                if !(r > 0.0) {
                    errors.push(format!("levelset.radius: must be positive, got {r}"));
                }
                match material.as_str() {
                    "outside" => Some(Box::new(move |p: Vec2| r - p.distance(c))),
                    "inside" => Some(Box::new(move |p: Vec2| p.distance(c) - r)),
                    other => {
                        errors.push(format!(
                            "levelset.material: expected 'inside' or 'outside', got '{other}'"
                        ));
                        None
                    }
                }
            }
            LevelSetConfig::Expression { formula } => match Expr::parse(formula) {
                Ok(e) => Some(Box::new(move |p: Vec2| e.eval(p.x, p.y, 0.0))),
                Err(err) => {
                    errors.push(format!("levelset.formula: {err}"));
                    None
                }
            },
        }
    }

    fn build_beam(&self, errors: &mut Vec<String>) -> Option<BeamSpec> {
        let b = &self.beam;
        let path = match &b.path {
            PathConfig::Fixed { point } => FocalPath::Fixed(Vec2::new(point[0], point[1])),
            PathConfig::Raster { start, velocity, t_change } => FocalPath::Raster {
                start: Vec2::new(start[0], start[1]),
                velocity: Vec2::new(velocity[0], velocity[1]),
                t_change: *t_change,
            },
            PathConfig::Waypoints { points } => FocalPath::Waypoints(
                points
                    .iter()
                    .map(|&[t, x, y]| (t, Vec2::new(x, y)))
                    .collect(),
            ),
        };
        let window = match b.window {
            Some([w0, w1]) => (w0, w1),
            None => (self.time.t0, self.time.tf),
        };
        let spec = BeamSpec {
            sigma: b.sigma,
            a_amp: b.a_amp,
            e_ray: Vec2::new(b.e_ray[0], b.e_ray[1]),
            path,
            pulse_period: b.pulse_period,
            epsilon: b.epsilon,
            window,
        };
        match spec.validated() {
            Ok(s) => Some(s),
            Err(Error::Config(list)) => {
                errors.extend(list.into_iter().map(|m| format!("beam: {m}")));
                None
            }
            Err(other) => {
                errors.push(format!("beam: {other}"));
                None
            }
        }
    }
}
