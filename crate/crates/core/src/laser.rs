//! Prescribed heat-flux beam: Gaussian profile, absorption, pulsing, path.
//!
//! The beam delivers the flux vector I(x,t) = −A_p(θ) f(x,t) e_ray, where
//! f(x,t) = A_amp (2πσ²)^{−1/2} exp(−‖p‖²/2σ²) f_t(t) is a Gaussian in the
//! transverse offset p = (x − F(t)) − ((x − F(t))·e_ray) e_ray from the beam
//! axis, A_p is an incidence-angle absorption factor with
//! cos θ = −n_Γ·e_ray, and f_t gates the pulse train (on during the first
//! half of each period). The focal point F(t) follows a fixed point, a
//! reversing raster sweep, or a piecewise-linear waypoint schedule.

use crate::geom::Vec2;

/// A source of interface heat flux I(x,t).
///
/// `n_gamma` is the interface normal used for the incidence angle; it does
/// not need to be exactly unit length.
pub trait BeamSource {
    /// Flux vector I at position `x`, time `t`.
    fn flux(&self, x: Vec2, n_gamma: Vec2, t: f64) -> Vec2;
}

/// Focal-point trajectory F(t).
#[derive(Debug, Clone, PartialEq)]
pub enum FocalPath {
    /// Stationary focal point.
    Fixed(Vec2),
    /// Constant-speed sweep from `start` along `velocity`, reversing
    /// direction every `t_change` (a triangle wave over the segment
    /// [start, start + velocity·t_change]).
    Raster {
        start: Vec2,
        velocity: Vec2,
        t_change: f64,
    },
    /// Piecewise-linear interpolation through (time, point) knots with
    /// strictly increasing times; clamped outside the knot range.
    Waypoints(Vec<(f64, Vec2)>),
}

/// Beam parameters.
#[derive(Debug, Clone)]
pub struct BeamSpec {
    /// Gaussian beam width σ > 0.
    pub sigma: f64,
    /// Amplitude A_amp.
    pub a_amp: f64,
    /// Unit ray direction (constant in time).
    pub e_ray: Vec2,
    /// Focal-point trajectory.
    pub path: FocalPath,
    /// Pulse period P₀ ≥ 0; zero means a continuous beam.
    pub pulse_period: f64,
    /// Absorption material constant ε > 0.
    pub epsilon: f64,
    /// Enabled time window [t0, tf]; the beam is dark outside it.
    pub window: (f64, f64),
}

impl BeamSpec {
    /// Validates the invariants; returns self for chaining.
    pub fn validated(self) -> crate::Result<Self> {
        if !(self.sigma > 0.0) {
            return Err(crate::Error::Config(vec![format!(
                "beam sigma must be positive, got {}",
                self.sigma
            )]));
        }
        if (self.e_ray.norm() - 1.0).abs() > 1e-12 {
            return Err(crate::Error::Config(vec![format!(
                "beam e_ray must be unit length, got |e_ray| = {}",
                self.e_ray.norm()
            )]));
        }
        if !(self.pulse_period >= 0.0) {
            return Err(crate::Error::Config(vec![format!(
                "beam pulse period must be nonnegative, got {}",
                self.pulse_period
            )]));
        }
        if !(self.epsilon > 0.0) {
            return Err(crate::Error::Config(vec![format!(
                "beam epsilon must be positive, got {}",
                self.epsilon
            )]));
        }
        if let FocalPath::Waypoints(knots) = &self.path {
            if knots.is_empty() {
                return Err(crate::Error::Config(vec![
                    "beam waypoint path needs at least one knot".into(),
                ]));
            }
            if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(crate::Error::Config(vec![
                    "beam waypoint times must be strictly increasing".into(),
                ]));
            }
        }
        Ok(self)
    }

    /// Focal point F(t), clamped to the path's defined range.
    pub fn focal_point(&self, t: f64) -> Vec2 {
        match &self.path {
            FocalPath::Fixed(p) => *p,
            FocalPath::Raster {
                start,
                velocity,
                t_change,
            } => {
                let elapsed = (t.clamp(self.window.0, self.window.1) - self.window.0).max(0.0);
                if *t_change <= 0.0 {
                    return *start;
                }
                let m = elapsed.rem_euclid(2.0 * t_change);
                let s = if m <= *t_change { m } else { 2.0 * t_change - m };
                *start + *velocity * s
            }
            FocalPath::Waypoints(knots) => {
                let first = knots.first().expect("validated: nonempty");
                let last = knots.last().expect("validated: nonempty");
                if t <= first.0 {
                    return first.1;
                }
                if t >= last.0 {
                    return last.1;
                }
                let i = knots.partition_point(|k| k.0 <= t);
                let (ta, pa) = knots[i - 1];
                let (tb, pb) = knots[i];
                pa.lerp(pb, (t - ta) / (tb - ta))
            }
        }
    }

    /// Pulse gate f_t(t) ∈ {0, 1}: on during the first half of each period
    /// (boundary counts as on); continuous when P₀ = 0. Dark outside the
    /// enabled window.
    pub fn pulse(&self, t: f64) -> f64 {
        if t < self.window.0 || t > self.window.1 {
            return 0.0;
        }
        if self.pulse_period <= 0.0 {
            return 1.0;
        }
        let phase = t - (t / self.pulse_period).floor() * self.pulse_period;
        if phase <= 0.5 * self.pulse_period {
            1.0
        } else {
            0.0
        }
    }

    /// Gaussian intensity f(x,t) including the pulse gate.
    pub fn spatial_profile(&self, x: Vec2, t: f64) -> f64 {
        let gate = self.pulse(t);
        if gate == 0.0 {
            return 0.0;
        }
        let d = x - self.focal_point(t);
        let p = d - self.e_ray * d.dot(self.e_ray);
        let s2 = self.sigma * self.sigma;
        gate * self.a_amp / (2.0 * std::f64::consts::PI * s2).sqrt()
            * (-p.norm_sq() / (2.0 * s2)).exp()
    }

    /// Incidence absorption A_p(θ) ∈ [0,1] with cos θ = −n̂_Γ·e_ray.
    pub fn absorption(&self, n_gamma: Vec2) -> f64 {
        let n = n_gamma.normalized_or(Vec2::ZERO);
        let c = (-n.dot(self.e_ray)).clamp(-1.0, 1.0);
        if c <= 0.0 {
            return 0.0;
        }
        let e = self.epsilon;
        1.0 - (2.0 * c * c - 2.0 * e * c + e * e) / (2.0 * c * c + 2.0 * e * c + e * e)
    }
}

impl BeamSource for BeamSpec {
    fn flux(&self, x: Vec2, n_gamma: Vec2, t: f64) -> Vec2 {
        let f = self.spatial_profile(x, t);
        if f == 0.0 {
            return Vec2::ZERO;
        }
        self.e_ray * (-self.absorption(n_gamma) * f)
    }
}
