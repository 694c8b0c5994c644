//! Physical model in natural units (ħ = m = Δ = 1): the Gaussian wave packet,
//! the double-slit barrier and the slit-closing schedule.
//!
//! The slits sit at x = ±1 because lengths are measured in units of the half
//! inter-slit separation Δ, so Δ never appears as a runtime parameter.

use std::f64::consts::PI;

use crate::error::ValidationError;

/// Reduced Planck constant in J·s.
pub const HBAR_SI: f64 = 1.054_571_817e-34;

/// Conversion between SI quantities and the dimensionless simulation units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaturalUnits {
    /// Particle mass in kg.
    pub mass_si: f64,
    /// Half inter-slit separation Δ in m.
    pub delta_si: f64,
}

impl NaturalUnits {
    pub fn new(mass_si: f64, delta_si: f64) -> Result<Self, ValidationError> {
        if !(mass_si > 0.0 && mass_si.is_finite()) {
            return Err(ValidationError::new("units.mass_si", "must be > 0"));
        }
        if !(delta_si > 0.0 && delta_si.is_finite()) {
            return Err(ValidationError::new("units.delta_si", "must be > 0"));
        }
        Ok(Self { mass_si, delta_si })
    }

    /// Metastable helium (4.0026 u) with Δ = 4 µm.
    pub fn helium_kpm() -> Self {
        Self {
            mass_si: 4.002_602 * 1.660_539_066_60e-27,
            delta_si: 4.0e-6,
        }
    }

    /// Time unit m·Δ²/ħ in seconds.
    pub fn time_unit(&self) -> f64 {
        self.mass_si * self.delta_si * self.delta_si / HBAR_SI
    }

    pub fn length_to_si(&self, length: f64) -> f64 {
        length * self.delta_si
    }

    pub fn time_to_si(&self, time: f64) -> f64 {
        time * self.time_unit()
    }

    /// Velocity unit ħ/(mΔ) in m/s.
    pub fn velocity_to_si(&self, velocity: f64) -> f64 {
        velocity * HBAR_SI / (self.mass_si * self.delta_si)
    }
}

/// Normalized Gaussian G(ξ) = π^(−1/4)·exp(−ξ²/2).
#[inline]
pub fn gauss(xi: f64) -> f64 {
    PI.powf(-0.25) * (-0.5 * xi * xi).exp()
}

/// Parameters of the initial Gaussian wave packet centred at (−x0, −z0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketParams {
    pub k_x: f64,
    pub k_z: f64,
    pub x0: f64,
    pub z0: f64,
    pub sigma_x: f64,
    pub sigma_z: f64,
    /// Kept for bookkeeping only; the y-motion separates and is not simulated.
    pub sigma_y: f64,
}

impl PacketParams {
    pub fn validate(&self) -> Result<(), ValidationError> {
        let all = [
            self.k_x,
            self.k_z,
            self.x0,
            self.z0,
            self.sigma_x,
            self.sigma_z,
            self.sigma_y,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ValidationError::new("packet", "all values must be finite"));
        }
        if self.sigma_x <= 0.0 {
            return Err(ValidationError::new("packet.sigma_x", "must be > 0"));
        }
        if self.sigma_z <= 0.0 {
            return Err(ValidationError::new("packet.sigma_z", "must be > 0"));
        }
        if self.sigma_y <= 0.0 {
            return Err(ValidationError::new("packet.sigma_y", "must be > 0"));
        }
        if self.z0 <= 0.0 {
            return Err(ValidationError::new(
                "packet.z0",
                "must be > 0 (packet starts behind the barrier)",
            ));
        }
        if self.k_z <= 0.0 {
            return Err(ValidationError::new(
                "packet.k_z",
                "must be > 0 (motion towards the detector)",
            ));
        }
        Ok(())
    }

    /// Packet centre (x, z).
    pub fn center(&self) -> (f64, f64) {
        (-self.x0, -self.z0)
    }

    /// ψ(x, z, 0) of the 2D packet.
    pub fn amplitude(&self, x: f64, z: f64) -> num_complex::Complex64 {
        let envelope = gauss((x + self.x0) / self.sigma_x) * gauss((z + self.z0) / self.sigma_z)
            / (self.sigma_x * self.sigma_z).sqrt();
        num_complex::Complex64::from_polar(envelope, self.k_x * x + self.k_z * z)
    }
}

/// Time dependence of the left slit (centred at x = −1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlitSchedule {
    /// Constant opening factor f ∈ [0, 1].
    Static { f: f64 },
    /// f(t) = (1 + tanh(γ(t_c − t)))/2.
    Dynamic { gamma: f64, t_c: f64 },
}

impl SlitSchedule {
    pub fn validate(&self) -> Result<(), ValidationError> {
        match *self {
            SlitSchedule::Static { f } => {
                if !(0.0..=1.0).contains(&f) {
                    return Err(ValidationError::new("barrier.f", "must lie in [0, 1]"));
                }
            }
            SlitSchedule::Dynamic { gamma, t_c } => {
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return Err(ValidationError::new("barrier.gamma", "must be > 0"));
                }
                if !(t_c > 0.0 && t_c.is_finite()) {
                    return Err(ValidationError::new("barrier.t_c", "must be > 0"));
                }
            }
        }
        Ok(())
    }

    pub fn is_static(&self) -> bool {
        matches!(self, SlitSchedule::Static { .. })
    }
}

/// Double-slit barrier parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierParams {
    pub v0: f64,
    pub sigma_b: f64,
    pub sigma_s: f64,
    pub schedule: SlitSchedule,
}

impl BarrierParams {
    /// Barrier with v0 = 0 is allowed so the free packet can share the code path.
    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.v0 >= 0.0 && self.v0.is_finite()) {
            return Err(ValidationError::new("barrier.v0", "must be >= 0"));
        }
        if !(self.sigma_b > 0.0 && self.sigma_b.is_finite()) {
            return Err(ValidationError::new("barrier.sigma_b", "must be > 0"));
        }
        if !(self.sigma_s > 0.0 && self.sigma_s.is_finite()) {
            return Err(ValidationError::new("barrier.sigma_s", "must be > 0"));
        }
        if self.sigma_s >= 2.0 {
            return Err(ValidationError::new(
                "barrier.sigma_s",
                "must be < 2 so the slits do not overlap",
            ));
        }
        self.schedule.validate()
    }

    /// The barrier profile along z vanishes (below f64 resolution of V0) for
    /// |z| beyond this distance.
    pub fn support_half_width(&self) -> f64 {
        // G(ξ) < 1e-18 for |ξ| > 9.
        9.0 * self.sigma_b
    }
}

/// Aperture function S(ξ) = 1/(1 + ξ¹⁶).
#[inline]
pub fn aperture(xi: f64) -> f64 {
    let xi2 = xi * xi;
    let xi4 = xi2 * xi2;
    let xi8 = xi4 * xi4;
    1.0 / (1.0 + xi8 * xi8)
}

/// Opening factor of the left slit at time t.
#[inline]
pub fn slit_factor(t: f64, schedule: &SlitSchedule) -> f64 {
    match *schedule {
        SlitSchedule::Static { f } => f,
        SlitSchedule::Dynamic { gamma, t_c } => 0.5 * (1.0 + (gamma * (t_c - t)).tanh()),
    }
}

/// Barrier profile split into the part that never changes and the part
/// multiplied by the left-slit factor: V = z_profile·(1 − right − f·left).
#[inline]
pub(crate) fn potential_parts(x: f64, z: f64, barrier: &BarrierParams) -> (f64, f64, f64) {
    let profile = barrier.v0 * gauss(z / barrier.sigma_b);
    let right = aperture((x - 1.0) / barrier.sigma_s);
    let left = aperture((x + 1.0) / barrier.sigma_s);
    (profile, right, left)
}

/// V(x, z, t) of the double-slit barrier.
#[inline]
pub fn potential(x: f64, z: f64, t: f64, barrier: &BarrierParams) -> f64 {
    let f = slit_factor(t, &barrier.schedule);
    potential_with_factor(x, z, f, barrier)
}

/// V for a given left-slit factor f.
#[inline]
pub fn potential_with_factor(x: f64, z: f64, f: f64, barrier: &BarrierParams) -> f64 {
    let (profile, right, left) = potential_parts(x, z, barrier);
    if f == 1.0 {
        // Written as a symmetric sum so V(x) == V(−x) holds bit for bit.
        profile * (1.0 - (right + left))
    } else {
        profile * (1.0 - right - f * left)
    }
}

/// ∇V = (∂V/∂x, ∂V/∂z) for a given left-slit factor.
pub fn potential_gradient(x: f64, z: f64, f: f64, barrier: &BarrierParams) -> (f64, f64) {
    let s = barrier.sigma_s;
    let (profile, right, left) = potential_parts(x, z, barrier);
    let bracket = 1.0 - right - f * left;
    let d_aperture = |xi: f64| {
        let a = aperture(xi);
        -16.0 * xi.powi(15) * a * a
    };
    let d_right = d_aperture((x - 1.0) / s) / s;
    let d_left = d_aperture((x + 1.0) / s) / s;
    let dv_dx = profile * (-d_right - f * d_left);
    let dv_dz = -z / (barrier.sigma_b * barrier.sigma_b) * profile * bracket;
    (dv_dx, dv_dz)
}
