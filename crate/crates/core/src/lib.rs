//! Cut finite element solver for one-phase Stefan-Signorini problems in 2D.
//!
//! A fixed background triangulation carries all fields; the melt interface
//! Γ(t) is the zero set of a P2 level-set function φ and moves through the
//! mesh, so the heat equation ρc ∂T/∂t − kΔT = f is discretized on the
//! active submesh cut by Γ. The Signorini conditions at the interface
//! (T − T_m ≤ 0, σ ≤ 0, σ·(T − T_m) = 0 with σ = k∇T·n_Γ − I·n_Γ) are
//! reformulated as a Nitsche-type nonlinear boundary term and solved with a
//! semi-smooth Newton method; ghost penalties stabilize the cut cells. The
//! interface velocity follows from the Stefan balance ρL v·n = I·n − k∇T·n,
//! is extended off Γ by fast marching, and transports φ with a SUPG scheme.

pub mod benchmark;
pub mod config;
pub mod cut;
pub mod expr;
pub mod fem;
pub mod fmm;
pub mod geom;
pub mod laser;
pub mod levelset;
pub mod mesh;
pub mod sim;
pub mod stefan;
pub mod transport;
pub mod velocity;
pub mod vtk;

/// Errors surfaced by mesh construction, assembly, solvers and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("active domain is empty: level set is nonnegative on every cell")]
    EmptyDomain,
    #[error("linear solver failed: {0}")]
    Solver(String),
    #[error("Newton did not converge after {iterations} iterations (residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error("invalid expression: {0}")]
    Expr(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error("vtk: {0}")]
    Vtk(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
