//! Phase-space SDEs of a collapse-model tracer.
//!
//! Position follows `dx = [D_S(x) + V]dt + √(2ν)dW₁`, where `D_S` is the
//! deterministic drift of the initial Gaussian packet and `V` the velocity
//! accumulated from the collapse noise. `V` is either read off an explicit
//! [`NoiseLattice`] (field mode) or carried as a scalar Brownian velocity with
//! variance rate 2αλν² (effective mode). Momentum follows either the exact
//! lattice equation or the random-force approximation `dp = ħ√(αλ/2)·dW`.
//!
//! All noise amplitudes are state independent once the kernel is evaluated at
//! the current position, so Itô and Stratonovich readings coincide; the
//! integrators here are written in the Itô convention.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{
    csl_velocity, csl_velocity_increment, FractionalNoiseSpec, GaussianKernel, NoiseLattice,
};
use crate::params::CslParameters;

/// Displacement from the starting point, in localization lengths, beyond
/// which the frozen-kernel approximation is no longer trusted.
pub const LOCALITY_LIMIT: f64 = 0.1;

/// Gaussian initial wave packet. `var_x` and `var_p` are variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialWavePacket {
    pub x_mean: f64,
    pub p_mean: f64,
    pub var_x: f64,
    pub var_p: f64,
}

impl InitialWavePacket {
    pub fn new(
        x_mean: f64,
        p_mean: f64,
        var_x: f64,
        var_p: f64,
        params: &CslParameters,
    ) -> Result<Self> {
        let packet = InitialWavePacket {
            x_mean,
            p_mean,
            var_x,
            var_p,
        };
        packet.validate(params)?;
        Ok(packet)
    }

    /// Minimum-uncertainty packet: var_p = ħ²/(4·var_x).
    pub fn minimal(x_mean: f64, p_mean: f64, var_x: f64, params: &CslParameters) -> Result<Self> {
        let var_p = params.hbar * params.hbar / (4.0 * var_x);
        Self::new(x_mean, p_mean, var_x, var_p, params)
    }

    pub fn validate(&self, params: &CslParameters) -> Result<()> {
        for (name, v) in [("var_x", self.var_x), ("var_p", self.var_p)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be > 0, got {v:e}")));
            }
        }
        if !(self.x_mean.is_finite() && self.p_mean.is_finite()) {
            return Err(Error::param("x_mean", "packet means must be finite"));
        }
        let bound = 0.25 * params.hbar * params.hbar;
        if self.var_x * self.var_p < bound * (1.0 - 1e-12) {
            return Err(Error::param(
                "var_p",
                format!(
                    "var_x·var_p = {:e} violates the uncertainty bound ħ²/4 = {bound:e}",
                    self.var_x * self.var_p
                ),
            ));
        }
        Ok(())
    }

    /// √(var_x·var_p − ħ²/4), the phase-curvature (chirp) numerator.
    pub fn excess_uncertainty(&self, params: &CslParameters) -> f64 {
        (self.var_x * self.var_p - 0.25 * params.hbar * params.hbar)
            .max(0.0)
            .sqrt()
    }
}

/// D_S(x) = (⟨x⟩ − x)[ν/Δx − √(ΔxΔp − ħ²/4)/(MΔx)] + ⟨p⟩/M.
pub fn deterministic_drift(packet: &InitialWavePacket, params: &CslParameters, x: f64) -> f64 {
    let slope = params.nu() / packet.var_x
        - packet.excess_uncertainty(params) / (params.mass * packet.var_x);
    (packet.x_mean - x) * slope + packet.p_mean / params.mass
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    ExactGaussian,
    /// Colored-noise integration; for integrated-white velocity noise this is
    /// the exact Gaussian update.
    FoxColored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    Field,
    Effective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentumModel {
    Full,
    RandomForce,
}

/// Which part of the packet drift enters the position equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    /// The full packet drift D_S(x).
    Packet,
    /// Only the uniform translation ⟨p⟩/M.
    Kinetic,
    /// No deterministic term at all.
    DriftFree,
}

macro_rules! name_enum {
    ($ty:ty { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(<$ty>::$variant),)+
                    other => Err(Error::param(
                        stringify!($ty),
                        format!("unknown value `{other}`"),
                    )),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(<$ty>::$variant => $name,)+ })
            }
        }
    };
}

name_enum!(Scheme {
    EulerMaruyama => "euler_maruyama",
    ExactGaussian => "exact_gaussian",
    FoxColored => "fox_colored",
});
name_enum!(NoiseMode { Field => "field", Effective => "effective" });
name_enum!(MomentumModel { Full => "full", RandomForce => "random_force" });
name_enum!(DriftMode {
    Packet => "packet",
    Kinetic => "kinetic",
    DriftFree => "drift_free",
});

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSpec {
    pub scheme: Scheme,
    pub dt: f64,
    pub mode: NoiseMode,
    pub momentum: MomentumModel,
    pub drift: DriftMode,
    /// Drive the random-force momentum with the same Wiener increment as the
    /// position noise.
    pub shared_noise: bool,
    /// Abort when the tracer leaves the frozen-kernel neighbourhood.
    pub locality_check: bool,
}

impl IntegratorSpec {
    pub fn new(scheme: Scheme, dt: f64, mode: NoiseMode) -> Self {
        IntegratorSpec {
            scheme,
            dt,
            mode,
            momentum: MomentumModel::Full,
            drift: DriftMode::Packet,
            shared_noise: true,
            locality_check: true,
        }
    }

    pub fn with_momentum(mut self, momentum: MomentumModel) -> Self {
        self.momentum = momentum;
        self
    }

    pub fn with_drift(mut self, drift: DriftMode) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_shared_noise(mut self, shared: bool) -> Self {
        self.shared_noise = shared;
        self
    }

    pub fn with_locality_check(mut self, check: bool) -> Self {
        self.locality_check = check;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param(
                "dt",
                format!("must be > 0, got {:e}", self.dt),
            ));
        }
        if self.mode == NoiseMode::Field && self.scheme != Scheme::EulerMaruyama {
            return Err(Error::SchemeMismatch(format!(
                "{} requires effective noise mode",
                self.scheme
            )));
        }
        Ok(())
    }

    /// True when the velocity process shares its Wiener increments with the
    /// position noise.
    pub fn shares_noise(&self) -> bool {
        self.momentum == MomentumModel::RandomForce && self.shared_noise
    }

    fn drift(&self, packet: &InitialWavePacket, params: &CslParameters, x: f64) -> f64 {
        match self.drift {
            DriftMode::Packet => deterministic_drift(packet, params, x),
            DriftMode::Kinetic => packet.p_mean / params.mass,
            DriftMode::DriftFree => 0.0,
        }
    }
}

/// Phase-space state of one tracer.
#[derive(Debug, Clone, PartialEq)]
pub struct TracerState {
    pub x: f64,
    pub p: f64,
    pub t: f64,
    /// Collapse velocity at the current position.
    pub velocity: f64,
    x_start: f64,
    lattice: Option<NoiseLattice>,
}

impl TracerState {
    /// Tracer sitting at the packet centre with the mean momentum.
    pub fn new(
        packet: &InitialWavePacket,
        params: &CslParameters,
        spec: &IntegratorSpec,
        stream: u64,
    ) -> Self {
        let lattice = match spec.mode {
            NoiseMode::Field => Some(NoiseLattice::centered(
                packet.x_mean,
                &GaussianKernel::from_params(params),
                stream,
            )),
            NoiseMode::Effective => None,
        };
        TracerState {
            x: packet.x_mean,
            p: packet.p_mean,
            t: 0.0,
            velocity: 0.0,
            x_start: packet.x_mean,
            lattice,
        }
    }

    pub fn lattice(&self) -> Option<&NoiseLattice> {
        self.lattice.as_ref()
    }

    pub fn displacement(&self) -> f64 {
        self.x - self.x_start
    }

    fn check_mode(&self, spec: &IntegratorSpec) -> Result<()> {
        match (spec.mode, &self.lattice) {
            (NoiseMode::Field, Some(_)) | (NoiseMode::Effective, None) => Ok(()),
            _ => Err(Error::SchemeMismatch(format!(
                "state was not built for {} mode",
                spec.mode
            ))),
        }
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Advances the tracer by one step of `spec.dt`.
pub fn step<R: Rng + ?Sized>(
    state: &mut TracerState,
    packet: &InitialWavePacket,
    params: &CslParameters,
    spec: &IntegratorSpec,
    rng: &mut R,
) -> Result<()> {
    advance(state, packet, params, spec, None, rng)
}

/// As [`step`] with every white-noise increment replaced by a fractional one
/// of variance t^(A−1)·dt.
pub fn step_fractional<R: Rng + ?Sized>(
    state: &mut TracerState,
    packet: &InitialWavePacket,
    params: &CslParameters,
    spec: &IntegratorSpec,
    fractional: &FractionalNoiseSpec,
    rng: &mut R,
) -> Result<()> {
    advance(state, packet, params, spec, Some(fractional), rng)
}

/// Lattice momentum update dp = 2Mν√γ·Σ_j ΔB_j·(−α(x − z_j))·G(x − z_j)·dz,
/// advancing the lattice so that the same increments feed the velocity.
pub fn step_momentum_full<R: Rng + ?Sized>(
    state: &mut TracerState,
    params: &CslParameters,
    dt: f64,
    rng: &mut R,
) -> Result<()> {
    momentum_full(state, params, dt, 1.0, rng)
}

/// Random-force momentum update dp = ħ√(αλ/2)·√dt·ξ. Pass the standard normal
/// already used by the position channel to share noise, or `None` to draw an
/// independent one.
pub fn step_momentum_random_force<R: Rng + ?Sized>(
    state: &mut TracerState,
    params: &CslParameters,
    dt: f64,
    rng: &mut R,
    shared: Option<f64>,
) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::param("dt", format!("must be > 0, got {dt:e}")));
    }
    let xi = shared.unwrap_or_else(|| normal(rng));
    state.p += params.random_force_amplitude() * dt.sqrt() * xi;
    Ok(())
}

fn momentum_full<R: Rng + ?Sized>(
    state: &mut TracerState,
    params: &CslParameters,
    dt: f64,
    intensity: f64,
    rng: &mut R,
) -> Result<()> {
    let kernel = GaussianKernel::from_params(params);
    let x = state.x;
    let lattice = state.lattice.as_mut().ok_or_else(|| {
        Error::SchemeMismatch("full momentum update needs a noise lattice (field mode)".into())
    })?;
    lattice.advance_scaled(dt, intensity, rng)?;
    let dv = csl_velocity_increment(lattice, &kernel, params, x)?;
    state.p += params.mass * dv;
    Ok(())
}

fn advance<R: Rng + ?Sized>(
    state: &mut TracerState,
    packet: &InitialWavePacket,
    params: &CslParameters,
    spec: &IntegratorSpec,
    fractional: Option<&FractionalNoiseSpec>,
    rng: &mut R,
) -> Result<()> {
    spec.validate()?;
    state.check_mode(spec)?;
    let dt = spec.dt;
    let intensity = fractional.map_or(1.0, |f| f.intensity(state.t, dt));
    let scale = intensity.sqrt();
    let drift = spec.drift(packet, params, state.x);
    let diffusion = (2.0 * params.nu()).sqrt();

    match spec.mode {
        NoiseMode::Effective => {
            let s = params.velocity_diffusion().sqrt();
            let root_dt = dt.sqrt();
            let dw1 = root_dt * scale * normal(rng);
            let (dwv, integral) = match spec.scheme {
                Scheme::EulerMaruyama => {
                    let dwv = if spec.shares_noise() {
                        dw1
                    } else {
                        root_dt * scale * normal(rng)
                    };
                    (dwv, dwv * dt)
                }
                Scheme::ExactGaussian | Scheme::FoxColored => {
                    // (W(dt), ∫₀^dt W du) is jointly Gaussian with
                    // variances dt, dt³/3 and covariance dt²/2.
                    let dwv = if spec.shares_noise() {
                        dw1
                    } else {
                        root_dt * scale * normal(rng)
                    };
                    let bridge = (dt * dt * dt / 12.0).sqrt() * scale * normal(rng);
                    (dwv, 0.5 * dt * dwv + bridge)
                }
            };
            // Euler-Maruyama uses the left-point velocity, V·dt; the exact
            // update adds s·∫W over the step.
            let collapse = match spec.scheme {
                Scheme::EulerMaruyama => 0.0,
                _ => s * integral,
            };
            state.x += (drift + state.velocity) * dt + collapse + diffusion * dw1;
            state.velocity += s * dwv;
            state.p += params.mass * s * dwv;
        }
        NoiseMode::Field => {
            let kernel = GaussianKernel::from_params(params);
            let xi1 = normal(rng);
            let dw1 = dt.sqrt() * scale * xi1;
            let v = {
                let lattice = state.lattice.as_ref().expect("checked mode");
                csl_velocity(lattice, &kernel, params, state.x)?
            };
            let x_old = state.x;
            match spec.momentum {
                MomentumModel::Full => momentum_full(state, params, dt, intensity, rng)?,
                MomentumModel::RandomForce => {
                    let lattice = state.lattice.as_mut().expect("checked mode");
                    lattice.advance_scaled(dt, intensity, rng)?;
                    let xi = if spec.shared_noise { xi1 } else { normal(rng) };
                    state.p += params.random_force_amplitude() * dt.sqrt() * scale * xi;
                }
            }
            state.x = x_old + (drift + v) * dt + diffusion * dw1;
            if spec.locality_check {
                check_locality(state, params)?;
            }
            let lattice = state.lattice.as_ref().expect("checked mode");
            state.velocity = csl_velocity(lattice, &kernel, params, state.x)?;
        }
    }
    state.t += dt;
    if spec.locality_check {
        check_locality(state, params)?;
    }
    Ok(())
}

fn check_locality(state: &TracerState, params: &CslParameters) -> Result<()> {
    let limit = LOCALITY_LIMIT / params.alpha.sqrt();
    let displacement = state.displacement().abs();
    if displacement > limit || !displacement.is_finite() {
        return Err(Error::LocalityViolated {
            displacement,
            limit,
        });
    }
    Ok(())
}
