//! Stochastic Burgers flow on a periodic line, its Hopf-Cole partner
//! (a heat equation with multiplicative noise) and the growth surface h.
//!
//! With Z > 0, v = −2ν Z'/Z and h = 2ν ln Z (so v = −h'), the heat equation
//! ∂Z/∂t = ν Z'' + (φ/2ν) Z maps onto ∂v/∂t + v v' = ν v'' − φ'. A Burgers
//! run forced with f = +φ' is therefore partnered by a heat run driven by −φ.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::CslParameters;
use crate::rng::{substream, Domain};

/// Advective Courant limit max|v|·dt/dx.
pub const MAX_COURANT: f64 = 0.5;
/// Viscous limit ν·dt/dx².
pub const MAX_VISCOUS: f64 = 0.25;
/// Relative size of negative covariance eigenvalues tolerated as roundoff.
pub const SPECTRUM_TOLERANCE: f64 = 1e-10;

/// Samples of a periodic field on x_i = i·L/n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field1D {
    pub length: f64,
    pub values: Vec<f64>,
}

impl Field1D {
    pub fn new(length: f64, values: Vec<f64>) -> Result<Self> {
        let f = Field1D { length, values };
        f.validate()?;
        Ok(f)
    }

    pub fn from_fn(grid: &SpectralGrid, f: impl Fn(f64) -> f64) -> Self {
        Field1D {
            length: grid.length,
            values: grid.positions().into_iter().map(f).collect(),
        }
    }

    pub fn constant(grid: &SpectralGrid, c: f64) -> Self {
        Field1D {
            length: grid.length,
            values: vec![c; grid.n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.values.len();
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::param(
                "n_grid",
                format!("must be even and >= 8, got {n}"),
            ));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::param("length", "must be positive"));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(
                "values",
                format!("non-finite value at index {i}"),
            ));
        }
        Ok(())
    }

    pub fn n_grid(&self) -> usize {
        self.values.len()
    }

    pub fn dx(&self) -> f64 {
        self.length / self.values.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// max_i |self_i − other_i|.
    pub fn linf_distance(&self, other: &Field1D) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    fn with_values(&self, values: Vec<f64>) -> Field1D {
        Field1D {
            length: self.length,
            values,
        }
    }

    fn require_positive(&self) -> Result<()> {
        match self.values.iter().position(|v| !(*v > 0.0)) {
            Some(index) => Err(Error::NonPositive {
                index,
                value: self.values[index],
            }),
            None => Ok(()),
        }
    }
}

/// FFT plans and wavenumbers for one periodic grid.
#[derive(Clone)]
pub struct SpectralGrid {
    n: usize,
    length: f64,
    k: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl SpectralGrid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        Field1D::new(length, vec![0.0; n])?;
        let mut planner = FftPlanner::new();
        let k = (0..n)
            .map(|j| {
                let m = if j <= n / 2 {
                    j as f64
                } else {
                    j as f64 - n as f64
                };
                2.0 * std::f64::consts::PI * m / length
            })
            .collect();
        Ok(SpectralGrid {
            n,
            length,
            k,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n).map(|i| i as f64 * self.dx()).collect()
    }

    /// Angular wavenumbers in FFT order; the Nyquist entry is +π/dx.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    fn check(&self, f: &Field1D) -> Result<()> {
        f.validate()?;
        if f.n_grid() != self.n || (f.length - self.length).abs() > 1e-12 * self.length {
            return Err(Error::param("field", "does not live on this grid"));
        }
        Ok(())
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    /// Inverse transform including the 1/n factor; returns the real part.
    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inv.process(&mut spec);
        let s = 1.0 / self.n as f64;
        spec.iter().map(|c| c.re * s).collect()
    }

    fn derivative_spectrum(&self, spec: &mut [Complex64]) {
        for (j, c) in spec.iter_mut().enumerate() {
            *c = if j == self.n / 2 {
                Complex64::new(0.0, 0.0)
            } else {
                *c * Complex64::new(0.0, self.k[j])
            };
        }
    }

    /// Spectral first derivative (Nyquist mode dropped).
    pub fn derivative(&self, f: &Field1D) -> Field1D {
        let mut spec = self.forward(&f.values);
        self.derivative_spectrum(&mut spec);
        f.with_values(self.inverse(spec))
    }

    /// Mean-free antiderivative (the mean and Nyquist modes are dropped).
    pub fn antiderivative(&self, f: &Field1D) -> Field1D {
        let mut spec = self.forward(&f.values);
        for (j, c) in spec.iter_mut().enumerate() {
            *c = if j == 0 || j == self.n / 2 {
                Complex64::new(0.0, 0.0)
            } else {
                *c / Complex64::new(0.0, self.k[j])
            };
        }
        f.with_values(self.inverse(spec))
    }

    fn dealiased(&self, j: usize) -> bool {
        let m = if j <= self.n / 2 { j } else { self.n - j };
        3 * m > self.n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialGradientSign {
    /// f = +∇φ.
    #[default]
    Plus,
    /// f = −∇φ.
    Minus,
}

impl PotentialGradientSign {
    pub fn value(&self) -> f64 {
        match self {
            PotentialGradientSign::Plus => 1.0,
            PotentialGradientSign::Minus => -1.0,
        }
    }
}

impl std::str::FromStr for PotentialGradientSign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+1" | "1" | "plus" => Ok(PotentialGradientSign::Plus),
            "-1" | "minus" => Ok(PotentialGradientSign::Minus),
            other => Err(Error::param(
                "potential_gradient_sign",
                format!("expected +1 or -1, got `{other}`"),
            )),
        }
    }
}

/// f = ±∂φ/∂x.
pub fn force_from_potential(
    grid: &SpectralGrid,
    phi: &Field1D,
    sign: PotentialGradientSign,
) -> Result<Field1D> {
    grid.check(phi)?;
    let mut f = grid.derivative(phi);
    if sign == PotentialGradientSign::Minus {
        f.values.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(f)
}

/// White-in-time forcing with ⟨φ(x,t)φ(x',t')⟩ = εΔ²N·δ(t−t')·exp(−(x−x')²/(2NΔ²)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcingSpec {
    pub epsilon: f64,
    pub delta: f64,
    pub n_dim: u32,
}

impl ForcingSpec {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::param("epsilon", "must be >= 0"));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::param("delta", "must be positive"));
        }
        Ok(ForcingSpec {
            epsilon,
            delta,
            n_dim: 1,
        })
    }

    /// ε = 2ν²αλ and Δ = √(2/α).
    pub fn from_params(params: &CslParameters) -> Result<Self> {
        let d = crate::params::derive(params);
        Self::new(d.epsilon_inj, d.delta_inj)
    }

    /// Potential covariance per step of length dt at separation d.
    pub fn potential_covariance(&self, d: f64, dt: f64) -> f64 {
        let n = self.n_dim as f64;
        self.epsilon
            * self.delta
            * self.delta
            * n
            * (-d * d / (2.0 * n * self.delta * self.delta)).exp()
            / dt
    }

    /// Force covariance −∂²/∂d² of the potential covariance:
    /// ε(1 − d²/Δ²)·exp(−d²/2Δ²)/dt in one dimension.
    pub fn force_covariance(&self, d: f64, dt: f64) -> f64 {
        let r = d * d / (self.delta * self.delta);
        self.epsilon * (1.0 - r) * (-0.5 * r).exp() / dt
    }

    /// Mean energy injected per unit time and mass, ⟨f²⟩·dt/2 = ε/2.
    pub fn injection_rate(&self) -> f64 {
        0.5 * self.epsilon
    }
}

/// Circulant-embedding sampler for the forcing potential on one grid.
#[derive(Debug, Clone)]
pub struct ForcingSampler {
    spec: ForcingSpec,
    grid: SpectralGrid,
    /// √(eigenvalue/n) of the unit-time covariance, in FFT order.
    amplitude: Vec<f64>,
    eigenvalues: Vec<f64>,
}

impl ForcingSampler {
    pub fn new(spec: ForcingSpec, grid: &SpectralGrid) -> Result<Self> {
        if !(spec.delta < grid.length / 4.0) {
            return Err(Error::param(
                "delta",
                format!(
                    "Δ = {:e} must be below L/4 = {:e}",
                    spec.delta,
                    grid.length / 4.0
                ),
            ));
        }
        let n = grid.n;
        let l = grid.length;
        // Periodized covariance; the images are negligible once Δ ≤ L/8.
        let c: Vec<f64> = (0..n)
            .map(|j| {
                let d = j as f64 * grid.dx();
                (-3..=3)
                    .map(|m| spec.potential_covariance(d + m as f64 * l, 1.0))
                    .sum()
            })
            .collect();
        let eigenvalues: Vec<f64> = grid.forward(&c).iter().map(|z| z.re).collect();
        let top = eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
        if let Some(bad) = eigenvalues.iter().find(|v| **v < -SPECTRUM_TOLERANCE * top) {
            return Err(Error::NegativeSpectrum(*bad));
        }
        let amplitude = eigenvalues
            .iter()
            .map(|v| (v.max(0.0) / n as f64).sqrt())
            .collect();
        Ok(ForcingSampler {
            spec,
            grid: grid.clone(),
            amplitude,
            eigenvalues,
        })
    }

    pub fn spec(&self) -> &ForcingSpec {
        &self.spec
    }

    /// Eigenvalues of the unit-time covariance matrix, in FFT order.
    pub fn spectrum(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// One potential sample for a step of length `dt` (variance ∝ 1/dt).
    pub fn sample_potential<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> Field1D {
        let n = self.grid.n;
        if self.spec.epsilon == 0.0 {
            return Field1D::constant(&self.grid, 0.0);
        }
        let mut buf: Vec<Complex64> = self
            .amplitude
            .iter()
            .map(|a| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * *a
            })
            .collect();
        self.grid.fwd.process(&mut buf);
        let s = 1.0 / dt.sqrt();
        debug_assert_eq!(buf.len(), n);
        Field1D {
            length: self.grid.length,
            values: buf.iter().map(|z| z.re * s).collect(),
        }
    }
}

fn check_stability(grid: &SpectralGrid, vmax: f64, nu: f64, dt: f64) -> Result<()> {
    let dx = grid.dx();
    let courant = vmax * dt / dx;
    let viscous = nu * dt / (dx * dx);
    if !(dt > 0.0) || courant > MAX_COURANT || viscous > MAX_VISCOUS {
        return Err(Error::StepRejected(format!(
            "dt = {dt:e}: Courant {courant:.3} (limit {MAX_COURANT}), viscous {viscous:.3} (limit {MAX_VISCOUS})"
        )));
    }
    Ok(())
}

/// Largest dt allowed by both stability limits, times `safety`.
pub fn stable_dt(grid: &SpectralGrid, vmax: f64, nu: f64, safety: f64) -> f64 {
    let dx = grid.dx();
    let a = if vmax > 0.0 {
        MAX_COURANT * dx / vmax
    } else {
        f64::INFINITY
    };
    let b = if nu > 0.0 {
        MAX_VISCOUS * dx * dx / nu
    } else {
        f64::INFINITY
    };
    safety * a.min(b)
}

/// One step of v_t + (v²/2)_x = ν v_xx + f: exact viscous factor, explicit
/// Euler for the 2/3-dealiased advection and the forcing.
pub fn step_burgers(
    grid: &SpectralGrid,
    v: &Field1D,
    nu: f64,
    f: &Field1D,
    dt: f64,
) -> Result<Field1D> {
    grid.check(v)?;
    grid.check(f)?;
    check_stability(grid, v.max_abs(), nu, dt)?;
    let half_sq: Vec<f64> = v.values.iter().map(|u| 0.5 * u * u).collect();
    let mut adv = grid.forward(&half_sq);
    grid.derivative_spectrum(&mut adv);
    let vh = grid.forward(&v.values);
    let fh = grid.forward(&f.values);
    let out = (0..grid.n)
        .map(|j| {
            let nl = if grid.dealiased(j) {
                Complex64::new(0.0, 0.0)
            } else {
                adv[j]
            };
            (vh[j] + (fh[j] - nl) * dt) * (-nu * grid.k[j] * grid.k[j] * dt).exp()
        })
        .collect();
    Field1D::new(v.length, grid.inverse(out))
}

/// One split step of Z_t = ν Z_xx + (φ/2ν) Z: exact spectral diffusion, then
/// Z ← Z·exp(φ dt/2ν).
pub fn step_heat_multiplicative(
    grid: &SpectralGrid,
    z: &Field1D,
    nu: f64,
    phi: &Field1D,
    dt: f64,
) -> Result<Field1D> {
    grid.check(z)?;
    grid.check(phi)?;
    z.require_positive()?;
    check_stability(grid, 0.0, nu, dt)?;
    let mut spec = grid.forward(&z.values);
    for (c, k) in spec.iter_mut().zip(&grid.k) {
        *c *= (-nu * k * k * dt).exp();
    }
    let values = grid
        .inverse(spec)
        .into_iter()
        .zip(&phi.values)
        .map(|(zz, p)| zz * (p * dt / (2.0 * nu)).exp())
        .collect();
    let out = Field1D::new(z.length, values)?;
    out.require_positive()?;
    Ok(out)
}

/// v = −2ν Z'/Z.
pub fn hopf_cole(grid: &SpectralGrid, z: &Field1D, nu: f64) -> Result<Field1D> {
    grid.check(z)?;
    z.require_positive()?;
    let dz = grid.derivative(z);
    Ok(z.with_values(
        dz.values
            .iter()
            .zip(&z.values)
            .map(|(d, zz)| -2.0 * nu * d / zz)
            .collect(),
    ))
}

/// h = 2ν ln Z shifted to zero mean.
pub fn surface_from(z: &Field1D, nu: f64) -> Result<Field1D> {
    z.validate()?;
    z.require_positive()?;
    let mut h: Vec<f64> = z.values.iter().map(|v| 2.0 * nu * v.ln()).collect();
    let m = h.iter().sum::<f64>() / h.len() as f64;
    h.iter_mut().for_each(|v| *v -= m);
    Ok(z.with_values(h))
}

/// Mean-zero surface h with v = −h' (v must have zero mean).
pub fn surface_from_velocity(grid: &SpectralGrid, v: &Field1D) -> Result<Field1D> {
    grid.check(v)?;
    let mut h = grid.antiderivative(v);
    h.values.iter_mut().for_each(|x| *x = -*x);
    Ok(h)
}

/// Z = exp((h − max h)/2ν), the Hopf-Cole field normalized to unit maximum.
/// Entries underflow to zero when h varies by more than ~1400ν.
pub fn partner_from_surface(h: &Field1D, nu: f64) -> Field1D {
    let top = h.values.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x));
    h.with_values(
        h.values
            .iter()
            .map(|x| ((x - top) / (2.0 * nu)).exp())
            .collect(),
    )
}

/// Deterministic Burgers-vs-heat comparison over a sequence of grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementConfig {
    pub length: f64,
    pub nu: f64,
    /// Initial surface is h₀ = amplitude·cos(2πx/L).
    pub amplitude: f64,
    pub t_final: f64,
    pub grids: Vec<usize>,
    /// Step count on the coarsest grid; scaled by (n/n₀)² so that dt ∝ dx².
    pub base_steps: usize,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            length: 2.0 * std::f64::consts::PI,
            nu: 0.1,
            amplitude: 0.5,
            t_final: 1.0,
            grids: vec![64, 128, 256],
            base_steps: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub grids: Vec<usize>,
    pub dt: Vec<f64>,
    /// L∞ distance between the Burgers velocity and hopf_cole of the heat
    /// solution at t_final.
    pub discrepancy: Vec<f64>,
    /// Least-squares slope of ln(discrepancy) against ln(dx).
    pub order: f64,
}

/// Evolves v₀ = hopf_cole(Z₀) by [`step_burgers`] and Z₀ by
/// [`step_heat_multiplicative`] (φ = 0) on each grid.
pub fn refinement_study(config: &RefinementConfig) -> Result<RefinementReport> {
    if config.grids.len() < 2 {
        return Err(Error::param("grids", "need at least two grids"));
    }
    let n0 = config.grids[0] as f64;
    let mut dts = Vec::new();
    let mut errs = Vec::new();
    for &n in &config.grids {
        let grid = SpectralGrid::new(n, config.length)?;
        let kx = 2.0 * std::f64::consts::PI / config.length;
        let z0 = Field1D::from_fn(&grid, |x| {
            (config.amplitude * (kx * x).cos() / (2.0 * config.nu)).exp()
        });
        let steps = (config.base_steps as f64 * (n as f64 / n0).powi(2)).round() as usize;
        let dt = config.t_final / steps as f64;
        let zero = Field1D::constant(&grid, 0.0);
        let mut v = hopf_cole(&grid, &z0, config.nu)?;
        let mut z = z0;
        for _ in 0..steps {
            v = step_burgers(&grid, &v, config.nu, &zero, dt)?;
            z = step_heat_multiplicative(&grid, &z, config.nu, &zero, dt)?;
        }
        dts.push(dt);
        errs.push(v.linf_distance(&hopf_cole(&grid, &z, config.nu)?));
    }
    let xs: Vec<f64> = config
        .grids
        .iter()
        .map(|n| (config.length / *n as f64).ln())
        .collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(RefinementReport {
        grids: config.grids.clone(),
        dt: dts,
        discrepancy: errs,
        order: sxy / sxx,
    })
}

/// Forced Burgers run from rest. The surface h and the Hopf-Cole field Z
/// are derived from v at each snapshot rather than evolved, since at large
/// Reynolds number exp(h/2ν) is not representable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcedRunConfig {
    pub n_grid: usize,
    pub length: f64,
    pub nu: f64,
    pub forcing: ForcingSpec,
    pub sign: PotentialGradientSign,
    pub dt: f64,
    /// Steps discarded before averaging.
    pub burn_in_steps: usize,
    pub n_steps: usize,
    /// Snapshot and dissipation sampling interval in steps.
    pub sample_every: usize,
    pub master_seed: u64,
    /// Independent realization index (selects the random stream).
    pub realization: u64,
}

impl ForcedRunConfig {
    /// Dictionary defaults: ν, ε and Δ from the parameters, L = 16Δ, 128
    /// points and dt at a quarter of the stability limit for a velocity
    /// scale √(ε·Δ²/ν).
    pub fn from_params(params: &CslParameters, master_seed: u64) -> Result<Self> {
        let forcing = ForcingSpec::from_params(params)?;
        let nu = params.nu();
        let length = 16.0 * forcing.delta;
        let grid = SpectralGrid::new(128, length)?;
        let vscale = (forcing.epsilon * forcing.delta * forcing.delta / nu).sqrt();
        Ok(ForcedRunConfig {
            n_grid: 128,
            length,
            nu,
            forcing,
            sign: PotentialGradientSign::Plus,
            dt: stable_dt(&grid, vscale, nu, 0.25),
            burn_in_steps: 0,
            n_steps: 2000,
            sample_every: 200,
            master_seed,
            realization: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_every == 0 {
            return Err(Error::param("sample_every", "must be positive"));
        }
        if !(self.nu > 0.0) {
            return Err(Error::param("nu", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurgersSnapshot {
    pub t: f64,
    pub v: Field1D,
    pub z: Field1D,
    pub h: Field1D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcedRun {
    pub snapshots: Vec<BurgersSnapshot>,
    /// ν⟨(∂v/∂x)²⟩ averaged over space and the sampled times after burn-in.
    pub dissipation: f64,
    /// Standard error of `dissipation` from ten batch means.
    pub dissipation_stderr: f64,
    pub injection: f64,
}

/// Runs the forced Burgers equation from rest, sampling the dissipation
/// every step after burn-in.
pub fn run_forced(config: &ForcedRunConfig) -> Result<ForcedRun> {
    config.validate()?;
    let grid = SpectralGrid::new(config.n_grid, config.length)?;
    let sampler = ForcingSampler::new(config.forcing, &grid)?;
    let mut rng = substream(config.master_seed, Domain::Forcing, config.realization);
    let mut v = Field1D::constant(&grid, 0.0);
    let mut snapshots = Vec::new();
    let mut samples = Vec::new();
    let snapshot = |t: f64, v: &Field1D| -> Result<BurgersSnapshot> {
        let h = surface_from_velocity(&grid, v)?;
        Ok(BurgersSnapshot {
            t,
            v: v.clone(),
            z: partner_from_surface(&h, config.nu),
            h,
        })
    };
    let total = config.burn_in_steps + config.n_steps;
    snapshots.push(snapshot(0.0, &v)?);
    for step in 1..=total {
        let phi = sampler.sample_potential(config.dt, &mut rng);
        let f = force_from_potential(&grid, &phi, config.sign)?;
        v = step_burgers(&grid, &v, config.nu, &f, config.dt)?;
        if step > config.burn_in_steps {
            let dv = grid.derivative(&v);
            samples.push(config.nu * dv.values.iter().map(|d| d * d).sum::<f64>() / grid.n as f64);
        }
        if step % config.sample_every == 0 {
            snapshots.push(snapshot(step as f64 * config.dt, &v)?);
        }
    }
    let n = samples.len();
    let dissipation = samples.iter().sum::<f64>() / n.max(1) as f64;
    let batches = 10;
    let dissipation_stderr = if n >= batches * 2 {
        let size = n / batches;
        let means: Vec<f64> = (0..batches)
            .map(|b| samples[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
            .collect();
        let m = means.iter().sum::<f64>() / batches as f64;
        (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / ((batches - 1) * batches) as f64)
            .sqrt()
    } else {
        f64::NAN
    };
    Ok(ForcedRun {
        snapshots,
        dissipation,
        dissipation_stderr,
        injection: config.forcing.injection_rate(),
    })
}
