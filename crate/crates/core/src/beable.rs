//! Beable dynamics on a 1D lattice.
//!
//! A free Gaussian packet ψ = R e^{iS/ħ} is sampled on sites x_n = x₀ + a·n.
//! Its probability flow J drives walkers through Bell's minimal rates, and an
//! optional homogeneous term T⁰ with zero net flow adds jumps that reproduce
//! Nelson's osmotic velocity in the continuum limit.
//!
//! Index convention throughout: `T_mn` is the rate of jumping from site n to
//! site m, and `J_mn = T_mn P_n − T_nm P_m` is the net flow from n into m, so
//! that dP_m/dt = Σ_n J_mn.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::params::CslParameters;
use crate::rng::{substream, Domain};
use crate::tracer::InitialWavePacket;

/// Densities below this are treated as numerically dead.
pub const DEAD_FLOOR: f64 = 1e-300;
/// Required half-width of the lattice in packet standard deviations.
pub const COVERAGE_SIGMAS: f64 = 8.0;
/// Largest allowed jump probability per step.
pub const MAX_JUMP_PROBABILITY: f64 = 0.1;
/// Walkers sharing one random stream.
pub const WALKER_CHUNK: usize = 4096;

/// Sites x_n = origin + spacing·n for n in 0..n_sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeGeometry {
    pub spacing: f64,
    pub n_sites: usize,
    pub origin: f64,
}

impl LatticeGeometry {
    pub fn new(spacing: f64, n_sites: usize, origin: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::param("spacing", "must be positive"));
        }
        if n_sites < 2 {
            return Err(Error::param("n_sites", "need at least two sites"));
        }
        Ok(LatticeGeometry {
            spacing,
            n_sites,
            origin,
        })
    }

    /// Lattice symmetric about `center`.
    pub fn centered(center: f64, spacing: f64, n_sites: usize) -> Result<Self> {
        Self::new(
            spacing,
            n_sites,
            center - 0.5 * (n_sites as f64 - 1.0) * spacing,
        )
    }

    pub fn x(&self, n: usize) -> f64 {
        self.origin + self.spacing * n as f64
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.n_sites - 1)
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_sites).map(|n| self.x(n)).collect()
    }
}

/// Closed-form free evolution of a Gaussian packet,
/// ψ ∝ exp(−a(t)(x − x_c)² + i p₀ x/ħ) with 1/a(t) = 1/a(0) + 2iħt/M.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreePacket {
    x0: f64,
    p0: f64,
    a0: Complex64,
    hbar: f64,
    mass: f64,
}

impl FreePacket {
    pub fn new(packet: &InitialWavePacket, params: &CslParameters) -> Result<Self> {
        packet.validate(params)?;
        let chirp = packet.excess_uncertainty(params) / packet.var_x;
        Ok(FreePacket {
            x0: packet.x_mean,
            p0: packet.p_mean,
            a0: Complex64::new(0.25 / packet.var_x, -0.5 * chirp / params.hbar),
            hbar: params.hbar,
            mass: params.mass,
        })
    }

    fn width(&self, t: f64) -> Complex64 {
        1.0 / (1.0 / self.a0 + Complex64::new(0.0, 2.0 * self.hbar * t / self.mass))
    }

    pub fn center(&self, t: f64) -> f64 {
        self.x0 + self.p0 * t / self.mass
    }

    pub fn variance(&self, t: f64) -> f64 {
        0.25 / self.width(t).re
    }

    /// ∂ ln R/∂x.
    pub fn log_amplitude_gradient(&self, x: f64, t: f64) -> f64 {
        -2.0 * self.width(t).re * (x - self.center(t))
    }

    /// S(x, t) up to an x-independent constant.
    pub fn phase(&self, x: f64, t: f64) -> f64 {
        let d = x - self.center(t);
        -self.hbar * self.width(t).im * d * d + self.p0 * x
    }

    /// ∂S/∂x.
    pub fn phase_gradient(&self, x: f64, t: f64) -> f64 {
        -2.0 * self.hbar * self.width(t).im * (x - self.center(t)) + self.p0
    }
}

/// Polar form of ψ sampled on the lattice. P is a density: Σ P_n·a = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeWave {
    pub geometry: LatticeGeometry,
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
}

impl LatticeWave {
    /// Builds a wave from densities and phases, normalizing P.
    pub fn from_density(
        geometry: LatticeGeometry,
        p: Vec<f64>,
        s: Vec<f64>,
        t: f64,
    ) -> Result<Self> {
        if p.len() != geometry.n_sites || s.len() != geometry.n_sites {
            return Err(Error::param("p", "length must equal n_sites"));
        }
        if let Some((index, &value)) = p.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::NonPositive { index, value });
        }
        let norm: f64 = p.iter().sum::<f64>() * geometry.spacing;
        if !(norm > 0.0) {
            return Err(Error::param("p", "density has zero mass"));
        }
        let p: Vec<f64> = p.into_iter().map(|v| v / norm).collect();
        let r = p.iter().map(|v| v.sqrt()).collect();
        Ok(LatticeWave {
            geometry,
            r,
            s,
            p,
            t,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.geometry.n_sites
    }

    pub fn spacing(&self) -> f64 {
        self.geometry.spacing
    }

    /// Site probabilities P_n·a.
    pub fn probabilities(&self) -> Vec<f64> {
        self.p.iter().map(|v| v * self.spacing()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.p.iter().sum::<f64>() * self.spacing()
    }

    pub fn mean(&self) -> f64 {
        let a = self.spacing();
        self.p
            .iter()
            .enumerate()
            .map(|(n, v)| v * a * self.geometry.x(n))
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let a = self.spacing();
        let m = self.mean();
        self.p
            .iter()
            .enumerate()
            .map(|(n, v)| {
                let d = self.geometry.x(n) - m;
                v * a * d * d
            })
            .sum()
    }
}

/// Samples the analytically evolved packet at time `t`.
pub fn free_packet_wave(
    packet: &InitialWavePacket,
    params: &CslParameters,
    t: f64,
    geometry: LatticeGeometry,
) -> Result<LatticeWave> {
    let fp = FreePacket::new(packet, params)?;
    free_packet_wave_from(&fp, t, geometry)
}

pub fn free_packet_wave_from(
    fp: &FreePacket,
    t: f64,
    geometry: LatticeGeometry,
) -> Result<LatticeWave> {
    let xc = fp.center(t);
    let var = fp.variance(t);
    let reach = COVERAGE_SIGMAS * var.sqrt();
    if xc - reach < geometry.origin || xc + reach > geometry.x_max() {
        return Err(Error::LatticeTooSmall(format!(
            "packet spans [{:e}, {:e}] at t = {t:e}, lattice covers [{:e}, {:e}]",
            xc - reach,
            xc + reach,
            geometry.origin,
            geometry.x_max()
        )));
    }
    let xs = geometry.positions();
    let p = xs
        .iter()
        .map(|&x| (-(x - xc) * (x - xc) / (2.0 * var)).exp())
        .collect();
    let s = xs.iter().map(|&x| fp.phase(x, t)).collect();
    LatticeWave::from_density(geometry, p, s, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseGradient {
    /// (S_{n+1} − S_{n−1})/2a.
    #[default]
    Centered,
    /// (S_{n+1} − S_n)/a, the literal first-order stencil.
    Forward,
}

impl std::str::FromStr for PhaseGradient {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centered" => Ok(PhaseGradient::Centered),
            "forward" => Ok(PhaseGradient::Forward),
            other => Err(Error::param(
                "phase_gradient",
                format!("unknown stencil `{other}`"),
            )),
        }
    }
}

/// Antisymmetric nearest-neighbour flow matrix, stored as the flows
/// `up[n] = J_{n+1,n} = −J_{n,n+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceMatrix {
    pub up: Vec<f64>,
}

impl SourceMatrix {
    pub fn n_sites(&self) -> usize {
        self.up.len() + 1
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        if m == n + 1 {
            self.up[n]
        } else if n == m + 1 {
            -self.up[m]
        } else {
            0.0
        }
    }

    /// Row-major dense copy.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.n_sites();
        (0..n)
            .map(|m| (0..n).map(|k| self.get(m, k)).collect())
            .collect()
    }

    /// dP_m/dt = Σ_n J_mn.
    pub fn rate_of_change(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_sites()];
        for (n, f) in self.up.iter().enumerate() {
            d[n + 1] += f;
            d[n] -= f;
        }
        d
    }
}

/// Discrete Schrödinger flow: the literal stencil J_{n+1,n} = S'_n P_n/(Ma)
/// antisymmetrized, i.e. `up[n] = (S'_n P_n + S'_{n+1} P_{n+1})/(2Ma)`.
pub fn source_matrix(
    wave: &LatticeWave,
    params: &CslParameters,
    gradient: PhaseGradient,
) -> SourceMatrix {
    let n = wave.n_sites();
    let a = wave.spacing();
    let s = &wave.s;
    let sp: Vec<f64> = (0..n)
        .map(|i| match gradient {
            PhaseGradient::Forward if i + 1 < n => (s[i + 1] - s[i]) / a,
            PhaseGradient::Centered if i > 0 && i + 1 < n => (s[i + 1] - s[i - 1]) / (2.0 * a),
            _ if i + 1 < n => (s[i + 1] - s[i]) / a,
            _ => (s[i] - s[i - 1]) / a,
        })
        .collect();
    let g: Vec<f64> = sp
        .iter()
        .zip(&wave.p)
        .map(|(d, p)| d * p / (params.mass * a))
        .collect();
    SourceMatrix {
        up: g.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect(),
    }
}

/// Banded jump-rate matrix. Row n holds the rates out of site n to sites
/// n + k for k in −band..=band (the k = 0 slot is always zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandedRates {
    n_sites: usize,
    band: usize,
    data: Vec<f64>,
    /// Sites excluded because their density is below [`DEAD_FLOOR`].
    pub dead_sites: Vec<usize>,
}

impl BandedRates {
    pub fn zeros(n_sites: usize, band: usize) -> Self {
        BandedRates {
            n_sites,
            band,
            data: vec![0.0; n_sites * (2 * band + 1)],
            dead_sites: Vec::new(),
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn band(&self) -> usize {
        self.band
    }

    fn slot(&self, m: usize, n: usize) -> Option<usize> {
        let k = m as isize - n as isize;
        (m < self.n_sites && n < self.n_sites && k.unsigned_abs() <= self.band)
            .then(|| n * (2 * self.band + 1) + (k + self.band as isize) as usize)
    }

    /// T_mn, the rate from n to m.
    pub fn get(&self, m: usize, n: usize) -> f64 {
        if m == n {
            return 0.0;
        }
        self.slot(m, n).map_or(0.0, |i| self.data[i])
    }

    pub fn set(&mut self, m: usize, n: usize, rate: f64) {
        if m == n {
            return;
        }
        let i = self
            .slot(m, n)
            .unwrap_or_else(|| panic!("({m}, {n}) outside band {}", self.band));
        self.data[i] = rate;
    }

    /// Rates out of `n`, indexed by k + band.
    pub fn row(&self, n: usize) -> &[f64] {
        let w = 2 * self.band + 1;
        &self.data[n * w..(n + 1) * w]
    }

    pub fn exit_rate(&self, n: usize) -> f64 {
        self.row(n).iter().sum()
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.n_sites)
            .map(|n| self.exit_rate(n))
            .fold(0.0, f64::max)
    }

    pub fn sum(&self, other: &BandedRates) -> Result<BandedRates> {
        if self.n_sites != other.n_sites {
            return Err(Error::param("rates", "site counts differ"));
        }
        let mut out = BandedRates::zeros(self.n_sites, self.band.max(other.band));
        for src in [self, other] {
            for n in 0..src.n_sites {
                let lo = n.saturating_sub(src.band);
                let hi = (n + src.band).min(src.n_sites - 1);
                for m in lo..=hi {
                    let v = src.get(m, n);
                    if v != 0.0 {
                        out.set(m, n, out.get(m, n) + v);
                    }
                }
            }
        }
        let mut dead: Vec<usize> = self
            .dead_sites
            .iter()
            .chain(&other.dead_sites)
            .copied()
            .collect();
        dead.sort_unstable();
        dead.dedup();
        out.dead_sites = dead;
        Ok(out)
    }

    /// T_mn P_n − T_nm P_m.
    pub fn net_flow(&self, m: usize, n: usize, p: &[f64]) -> f64 {
        self.get(m, n) * p[n] - self.get(n, m) * p[m]
    }

    /// Right-hand side of the master equation, dP_m/dt.
    pub fn master_rhs(&self, p: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.n_sites];
        for n in 0..self.n_sites {
            for (i, r) in self.row(n).iter().enumerate() {
                if *r != 0.0 {
                    let m = n + i - self.band;
                    d[m] += r * p[n];
                    d[n] -= r * p[n];
                }
            }
        }
        d
    }

    /// Expected velocity Σ_m (x_m − x_n)·T_mn of a walker at each site.
    pub fn expected_drift(&self, spacing: f64) -> Vec<f64> {
        self.jump_moment(spacing, 1)
    }

    /// Σ_m (x_m − x_n)²·T_mn, the local mean-square displacement rate.
    pub fn second_moment_rate(&self, spacing: f64) -> Vec<f64> {
        self.jump_moment(spacing, 2)
    }

    fn jump_moment(&self, spacing: f64, power: i32) -> Vec<f64> {
        (0..self.n_sites)
            .map(|n| {
                self.row(n)
                    .iter()
                    .enumerate()
                    .map(|(i, r)| r * ((i as f64 - self.band as f64) * spacing).powi(power))
                    .sum()
            })
            .collect()
    }
}

fn dead_sites(p: &[f64]) -> Vec<usize> {
    p.iter()
        .enumerate()
        .filter(|(_, v)| **v < DEAD_FLOOR)
        .map(|(i, _)| i)
        .collect()
}

/// Bell's choice: T_mn = J_mn/P_n where J_mn > 0, zero otherwise.
pub fn bell_transitions(j: &SourceMatrix, p: &[f64]) -> BandedRates {
    let mut t = BandedRates::zeros(j.n_sites(), 1);
    for (n, &f) in j.up.iter().enumerate() {
        if p[n] < DEAD_FLOOR || p[n + 1] < DEAD_FLOOR {
            continue;
        }
        if f > 0.0 {
            t.set(n + 1, n, f / p[n]);
        } else if f < 0.0 {
            t.set(n, n + 1, -f / p[n + 1]);
        }
    }
    t.dead_sites = dead_sites(p);
    t
}

/// Width σ and overall rate of the homogeneous term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousSpec {
    pub sigma: f64,
    pub rate_scale: f64,
}

impl HomogeneousSpec {
    pub fn new(sigma: f64, rate_scale: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param("sigma", "must be positive"));
        }
        if !(rate_scale >= 0.0 && rate_scale.is_finite()) {
            return Err(Error::param("rate_scale", "must be non-negative"));
        }
        Ok(HomogeneousSpec { sigma, rate_scale })
    }

    /// Rate scale giving a mean-square jump rate of 2ν, so that the
    /// continuum limit is Nelson's diffusion.
    pub fn nelson(params: &CslParameters, spacing: f64, sigma: f64) -> Result<Self> {
        let s = Self::new(sigma, 1.0)?;
        Self::new(
            sigma,
            2.0 * params.nu() / (spacing * spacing * s.kernel_moment(2)),
        )
    }

    /// Rate scale giving a uniform-density jump probability `target` per step.
    pub fn per_step(sigma: f64, dt: f64, target: f64) -> Result<Self> {
        let s = Self::new(sigma, 1.0)?;
        Self::new(sigma, target / (dt * s.kernel_moment(0)))
    }

    pub fn band(&self) -> usize {
        (6.0 * self.sigma.sqrt()).ceil() as usize
    }

    /// Σ_{0<|k|≤band} k^power·e^{−k²/2σ}.
    fn kernel_moment(&self, power: i32) -> f64 {
        let b = self.band() as i64;
        (-b..=b)
            .filter(|k| *k != 0)
            .map(|k| (k as f64).powi(power) * (-(k * k) as f64 / (2.0 * self.sigma)).exp())
            .sum()
    }

    /// βσa²: the mean-square jump rate on a uniform density.
    pub fn beta_sigma_a2(&self, spacing: f64) -> f64 {
        self.rate_scale * spacing * spacing * self.kernel_moment(2)
    }
}

/// T⁰_mn = rate_scale·exp{−[k − 2σ ln(P_m/P_n)/(4k)]²/(2σ)}, k = m − n,
/// within |k| ≤ ceil(6√σ). Sites with P below [`DEAD_FLOOR`] neither send nor
/// receive.
pub fn homogeneous_transitions(p: &[f64], spec: &HomogeneousSpec) -> Result<BandedRates> {
    if let Some((index, &value)) = p.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NonPositive { index, value });
    }
    let n_sites = p.len();
    let band = spec.band();
    let sigma = spec.sigma;
    let mut t = BandedRates::zeros(n_sites, band);
    for n in 0..n_sites {
        if p[n] < DEAD_FLOOR {
            continue;
        }
        let lo = n.saturating_sub(band);
        let hi = (n + band).min(n_sites - 1);
        for m in lo..=hi {
            if m == n || p[m] < DEAD_FLOOR {
                continue;
            }
            let k = m as f64 - n as f64;
            let arg = k - 2.0 * sigma * (p[m] / p[n]).ln() / (4.0 * k);
            t.set(m, n, spec.rate_scale * (-arg * arg / (2.0 * sigma)).exp());
        }
    }
    t.dead_sites = dead_sites(p);
    Ok(t)
}

/// Walker drift v = (βσa²)·R'/R + S'/M of the analytic packet at time `t`.
pub fn nelson_drift(
    packet: &InitialWavePacket,
    params: &CslParameters,
    x: f64,
    t: f64,
    beta_sigma_a2: f64,
) -> Result<f64> {
    let fp = FreePacket::new(packet, params)?;
    Ok(nelson_drift_from(&fp, params, x, t, beta_sigma_a2))
}

pub fn nelson_drift_from(
    fp: &FreePacket,
    params: &CslParameters,
    x: f64,
    t: f64,
    beta_sigma_a2: f64,
) -> f64 {
    beta_sigma_a2 * fp.log_amplitude_gradient(x, t) + fp.phase_gradient(x, t) / params.mass
}

/// Population of lattice walkers. Walkers are grouped in chunks of
/// [`WALKER_CHUNK`], each chunk owning one random stream, so results do not
/// depend on the thread count.
#[derive(Debug, Clone)]
pub struct WalkerEnsemble {
    sites: Vec<usize>,
    n_sites: usize,
    streams: Vec<ChaCha8Rng>,
}

impl WalkerEnsemble {
    fn streams(n_walkers: usize, master_seed: u64) -> Vec<ChaCha8Rng> {
        (0..n_walkers.div_ceil(WALKER_CHUNK))
            .map(|c| substream(master_seed, Domain::Walker, c as u64))
            .collect()
    }

    /// All walkers on one site.
    pub fn at_site(
        site: usize,
        n_walkers: usize,
        n_sites: usize,
        master_seed: u64,
    ) -> Result<Self> {
        if site >= n_sites {
            return Err(Error::param("site", "outside the lattice"));
        }
        Ok(WalkerEnsemble {
            sites: vec![site; n_walkers],
            n_sites,
            streams: Self::streams(n_walkers, master_seed),
        })
    }

    /// Independent draws from the site probabilities `probs` (any positive
    /// scale).
    pub fn sample(probs: &[f64], n_walkers: usize, master_seed: u64) -> Result<Self> {
        if let Some((index, &value)) = probs.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::NonPositive { index, value });
        }
        let mut cdf: Vec<f64> = probs
            .iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect();
        let total = *cdf.last().ok_or_else(|| Error::param("probs", "empty"))?;
        if !(total > 0.0) {
            return Err(Error::param("probs", "zero total weight"));
        }
        cdf.iter_mut().for_each(|c| *c /= total);
        let mut streams = Self::streams(n_walkers, master_seed);
        let mut sites = vec![0; n_walkers];
        sites
            .par_chunks_mut(WALKER_CHUNK)
            .zip(streams.par_iter_mut())
            .for_each(|(chunk, rng)| {
                for s in chunk {
                    let u: f64 = rng.random();
                    *s = cdf.partition_point(|c| *c <= u).min(probs.len() - 1);
                }
            });
        Ok(WalkerEnsemble {
            sites,
            n_sites: probs.len(),
            streams,
        })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn histogram(&self) -> Vec<u64> {
        let mut h = vec![0u64; self.n_sites];
        for &s in &self.sites {
            h[s] += 1;
        }
        h
    }

    pub fn mean(&self, geometry: &LatticeGeometry) -> f64 {
        self.sites.iter().map(|&s| geometry.x(s)).sum::<f64>() / self.len() as f64
    }

    pub fn variance(&self, geometry: &LatticeGeometry) -> f64 {
        let m = self.mean(geometry);
        self.sites
            .iter()
            .map(|&s| (geometry.x(s) - m).powi(2))
            .sum::<f64>()
            / self.len() as f64
    }
}

fn check_step(walkers: &WalkerEnsemble, rates: &BandedRates, dt: f64) -> Result<()> {
    if rates.n_sites() != walkers.n_sites {
        return Err(Error::param(
            "rates",
            "site count differs from the walker lattice",
        ));
    }
    let p = rates.max_exit_rate() * dt;
    if !(dt > 0.0) || p > MAX_JUMP_PROBABILITY {
        return Err(Error::StepRejected(format!(
            "jump probability {p:.3} per step exceeds {MAX_JUMP_PROBABILITY} (dt = {dt:e})"
        )));
    }
    Ok(())
}

fn jump<R: Rng + ?Sized>(site: usize, rates: &BandedRates, dt: f64, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, r) in rates.row(site).iter().enumerate() {
        acc += r * dt;
        if u < acc {
            return site + i - rates.band();
        }
    }
    site
}

/// One first-order step of the master equation: a walker at n moves to m
/// with probability T_mn·dt.
pub fn evolve_walkers(walkers: &mut WalkerEnsemble, rates: &BandedRates, dt: f64) -> Result<()> {
    check_step(walkers, rates, dt)?;
    walkers
        .sites
        .par_chunks_mut(WALKER_CHUNK)
        .zip(walkers.streams.par_iter_mut())
        .for_each(|(chunk, rng)| {
            for s in chunk {
                *s = jump(*s, rates, dt, rng);
            }
        });
    Ok(())
}

/// Binned jump statistics under frozen rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftField {
    /// Bin centres.
    pub x: Vec<f64>,
    /// Mean displacement per unit time.
    pub drift: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Mean squared displacement per unit time.
    pub msd_rate: Vec<f64>,
    /// Walker-steps recorded in each bin.
    pub counts: Vec<u64>,
}

#[derive(Clone, Default)]
struct BinAcc {
    n: Vec<u64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

/// Evolves the walkers `n_steps` times under fixed `rates`, recording each
/// displacement against the starting site, binned `bin_sites` at a time.
pub fn estimate_drift_field(
    walkers: &mut WalkerEnsemble,
    rates: &BandedRates,
    geometry: &LatticeGeometry,
    dt: f64,
    n_steps: usize,
    bin_sites: usize,
) -> Result<DriftField> {
    check_step(walkers, rates, dt)?;
    if bin_sites == 0 {
        return Err(Error::param("bin_sites", "must be positive"));
    }
    let n_bins = walkers.n_sites.div_ceil(bin_sites);
    let a = geometry.spacing;
    let partials: Vec<BinAcc> = walkers
        .sites
        .par_chunks_mut(WALKER_CHUNK)
        .zip(walkers.streams.par_iter_mut())
        .map(|(chunk, rng)| {
            let mut acc = BinAcc {
                n: vec![0; n_bins],
                s1: vec![0.0; n_bins],
                s2: vec![0.0; n_bins],
            };
            for _ in 0..n_steps {
                for s in chunk.iter_mut() {
                    let from = *s;
                    *s = jump(from, rates, dt, rng);
                    let d = (*s as f64 - from as f64) * a;
                    let b = from / bin_sites;
                    acc.n[b] += 1;
                    acc.s1[b] += d;
                    acc.s2[b] += d * d;
                }
            }
            acc
        })
        .collect();
    let mut tot = BinAcc {
        n: vec![0; n_bins],
        s1: vec![0.0; n_bins],
        s2: vec![0.0; n_bins],
    };
    for p in &partials {
        for b in 0..n_bins {
            tot.n[b] += p.n[b];
            tot.s1[b] += p.s1[b];
            tot.s2[b] += p.s2[b];
        }
    }
    let mut out = DriftField {
        x: Vec::with_capacity(n_bins),
        drift: Vec::with_capacity(n_bins),
        stderr: Vec::with_capacity(n_bins),
        msd_rate: Vec::with_capacity(n_bins),
        counts: tot.n.clone(),
    };
    for b in 0..n_bins {
        let first = b * bin_sites;
        let last = ((b + 1) * bin_sites).min(walkers.n_sites) - 1;
        out.x.push(0.5 * (geometry.x(first) + geometry.x(last)));
        let n = tot.n[b] as f64;
        if tot.n[b] == 0 {
            out.drift.push(f64::NAN);
            out.stderr.push(f64::NAN);
            out.msd_rate.push(f64::NAN);
            continue;
        }
        let m1 = tot.s1[b] / n;
        let m2 = tot.s2[b] / n;
        out.drift.push(m1 / dt);
        out.msd_rate.push(m2 / dt);
        out.stderr.push(if tot.n[b] > 1 {
            ((m2 - m1 * m1).max(0.0) / (n - 1.0)).sqrt() / dt
        } else {
            f64::NAN
        });
    }
    Ok(out)
}

/// Pearson chi-square of a histogram against expected probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareCheck {
    pub statistic: f64,
    pub dof: usize,
    /// 99% quantile of the chi-square law with `dof` degrees of freedom.
    pub quantile_99: f64,
}

impl ChiSquareCheck {
    pub fn passed(&self) -> bool {
        self.statistic <= self.quantile_99
    }
}

/// Expected counts below this are pooled with their neighbours.
pub const MIN_EXPECTED: f64 = 5.0;

/// Compares `counts` against `probs` (normalized internally). Consecutive
/// sites are pooled until each bin expects at least [`MIN_EXPECTED`] walkers;
/// a short tail is merged into the last bin.
pub fn chi_square_check(counts: &[u64], probs: &[f64]) -> Result<ChiSquareCheck> {
    if counts.len() != probs.len() {
        return Err(Error::param("counts", "length differs from probabilities"));
    }
    let n: u64 = counts.iter().sum();
    let total: f64 = probs.iter().sum();
    if n == 0 || !(total > 0.0) {
        return Err(Error::param("counts", "empty histogram or distribution"));
    }
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut e, mut o) = (0.0, 0.0);
    for (c, p) in counts.iter().zip(probs) {
        e += n as f64 * p / total;
        o += *c as f64;
        if e >= MIN_EXPECTED {
            bins.push((o, e));
            e = 0.0;
            o = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => bins.push((o, e)),
        }
    }
    if bins.len() < 2 {
        return Err(Error::param("counts", "fewer than two bins after pooling"));
    }
    let statistic = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len() - 1;
    let law = ChiSquared::new(dof as f64).map_err(|e| Error::param("dof", e.to_string()))?;
    Ok(ChiSquareCheck {
        statistic,
        dof,
        quantile_99: law.inverse_cdf(0.99),
    })
}

/// Co-evolution of an analytic packet and a walker population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeableConfig {
    pub geometry: LatticeGeometry,
    pub n_walkers: usize,
    pub t_final: f64,
    pub dt: f64,
    /// Number of equally spaced snapshots after t = 0.
    pub checkpoints: usize,
    pub gradient: PhaseGradient,
    pub homogeneous: Option<HomogeneousSpec>,
    pub master_seed: u64,
}

impl BeableConfig {
    /// Default setup for a packet: spacing of one eighth of the initial
    /// width, 512 sites, three spreading times τ = 2M·var_x/ħ, dt = τ/2000,
    /// and the Nelson-matched homogeneous term with σ = 1.
    pub fn for_packet(
        packet: &InitialWavePacket,
        params: &CslParameters,
        master_seed: u64,
    ) -> Result<Self> {
        packet.validate(params)?;
        let sd = packet.var_x.sqrt();
        let spacing = sd / 8.0;
        let tau = spreading_time(packet, params);
        Ok(BeableConfig {
            geometry: LatticeGeometry::centered(packet.x_mean, spacing, 512)?,
            n_walkers: 100_000,
            t_final: 3.0 * tau,
            dt: tau / 2000.0,
            checkpoints: 6,
            gradient: PhaseGradient::Centered,
            homogeneous: Some(HomogeneousSpec::nelson(params, spacing, 1.0)?),
            master_seed,
        })
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round().max(1.0) as usize
    }

    /// Step indices at which snapshots are taken (always includes 0).
    pub fn checkpoint_steps(&self) -> Vec<usize> {
        let n = self.n_steps();
        let c = self.checkpoints.max(1);
        let mut v: Vec<usize> = (0..=c).map(|i| i * n / c).collect();
        v.dedup();
        v
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_walkers == 0 {
            return Err(Error::param("n_walkers", "must be positive"));
        }
        if !(self.dt > 0.0 && self.t_final > 0.0) {
            return Err(Error::param("dt", "dt and t_final must be positive"));
        }
        Ok(())
    }
}

/// τ = 2M·var_x/ħ, the time over which a minimal packet's width grows by √2.
pub fn spreading_time(packet: &InitialWavePacket, params: &CslParameters) -> f64 {
    2.0 * params.mass * packet.var_x / params.hbar
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeableSnapshot {
    pub t: f64,
    pub histogram: Vec<u64>,
    /// Site probabilities P_n·a of the packet.
    pub probabilities: Vec<f64>,
    pub chi_square: ChiSquareCheck,
    pub walker_variance: f64,
    pub wave_variance: f64,
}

/// Total rates at time `t`: Bell's term plus the optional homogeneous term.
pub fn transition_rates(
    fp: &FreePacket,
    params: &CslParameters,
    config: &BeableConfig,
    t: f64,
) -> Result<BandedRates> {
    let wave = free_packet_wave_from(fp, t, config.geometry)?;
    let j = source_matrix(&wave, params, config.gradient);
    let bell = bell_transitions(&j, &wave.p);
    match &config.homogeneous {
        Some(h) => bell.sum(&homogeneous_transitions(&wave.p, h)?),
        None => Ok(bell),
    }
}

/// Draws walkers from P_n(0) and evolves them with rates taken from the
/// packet at each step's midpoint.
pub fn run_equivariance(
    config: &BeableConfig,
    packet: &InitialWavePacket,
    params: &CslParameters,
) -> Result<Vec<BeableSnapshot>> {
    config.validate()?;
    let fp = FreePacket::new(packet, params)?;
    let g = config.geometry;
    let wave0 = free_packet_wave_from(&fp, 0.0, g)?;
    let mut walkers =
        WalkerEnsemble::sample(&wave0.probabilities(), config.n_walkers, config.master_seed)?;
    let n_steps = config.n_steps();
    let dt = config.t_final / n_steps as f64;
    let checkpoints = config.checkpoint_steps();
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    for step in 0..=n_steps {
        if next < checkpoints.len() && checkpoints[next] == step {
            let t = step as f64 * dt;
            let wave = free_packet_wave_from(&fp, t, g)?;
            let probabilities = wave.probabilities();
            let histogram = walkers.histogram();
            out.push(BeableSnapshot {
                t,
                chi_square: chi_square_check(&histogram, &probabilities)?,
                histogram,
                probabilities,
                walker_variance: walkers.variance(&g),
                wave_variance: wave.variance(),
            });
            next += 1;
        }
        if step < n_steps {
            let rates = transition_rates(&fp, params, config, (step as f64 + 0.5) * dt)?;
            evolve_walkers(&mut walkers, &rates, dt)?;
        }
    }
    Ok(out)
}
