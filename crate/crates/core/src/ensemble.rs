//! Trajectory ensembles, moment time series and scaling-law analysis.
//!
//! Trajectories run in parallel, each on its own random substream. Samples
//! are gathered per record point in trajectory order and reduced two-pass,
//! so results are bit-identical for any worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::FractionalNoiseSpec;
use crate::params::CslParameters;
use crate::rng::{substream, Domain};
use crate::tracer::{step, step_fractional, InitialWavePacket, IntegratorSpec, TracerState};

pub use crate::params::crossover_time;

/// Trajectories simulated by one parallel task.
const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub t_final: f64,
    pub record_every: usize,
    pub master_seed: u64,
    pub integrator: IntegratorSpec,
    pub fractional_a: Option<f64>,
}

impl EnsembleConfig {
    pub fn new(n_traj: usize, t_final: f64, integrator: IntegratorSpec) -> Self {
        EnsembleConfig {
            n_traj,
            t_final,
            record_every: 1,
            master_seed: crate::rng::DEFAULT_MASTER_SEED,
            integrator,
            fractional_a: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn with_fractional(mut self, a: f64) -> Self {
        self.fractional_a = Some(a);
        self
    }

    pub fn dt(&self) -> f64 {
        self.integrator.dt
    }

    /// Number of integration steps needed to reach `t_final`.
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.integrator.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.integrator.validate()?;
        if self.n_traj == 0 {
            return Err(Error::param("n_traj", "need at least one trajectory"));
        }
        if !(self.t_final.is_finite() && self.t_final >= self.integrator.dt) {
            return Err(Error::param("t_final", "must be finite and >= dt"));
        }
        if self.record_every == 0 {
            return Err(Error::param("record_every", "must be >= 1"));
        }
        if let Some(a) = self.fractional_a {
            FractionalNoiseSpec::new(a)?;
        }
        Ok(())
    }

    /// Step indices at which moments are recorded (always includes 0 and the
    /// final step).
    pub fn record_steps(&self) -> Vec<usize> {
        let n = self.n_steps();
        let mut steps: Vec<usize> = (0..=n).step_by(self.record_every).collect();
        if steps.last() != Some(&n) {
            steps.push(n);
        }
        steps
    }
}

/// Ensemble moments with standard errors. Standard errors are NaN when
/// fewer than two trajectories were run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSeries {
    pub n_traj: usize,
    pub times: Vec<f64>,
    pub mean_x: Vec<f64>,
    pub var_x: Vec<f64>,
    pub mean_p: Vec<f64>,
    pub var_p: Vec<f64>,
    pub cov_xp: Vec<f64>,
    pub se_mean_x: Vec<f64>,
    pub se_var_x: Vec<f64>,
    pub se_mean_p: Vec<f64>,
    pub se_var_p: Vec<f64>,
    pub se_cov_xp: Vec<f64>,
}

/// Column selector for [`MomentSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moment {
    MeanX,
    VarX,
    MeanP,
    VarP,
    CovXp,
}

impl Moment {
    pub const ALL: [Moment; 5] = [
        Moment::MeanX,
        Moment::MeanP,
        Moment::VarX,
        Moment::VarP,
        Moment::CovXp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Moment::MeanX => "mean_x",
            Moment::VarX => "var_x",
            Moment::MeanP => "mean_p",
            Moment::VarP => "var_p",
            Moment::CovXp => "cov_xp",
        }
    }
}

impl MomentSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn values(&self, m: Moment) -> &[f64] {
        match m {
            Moment::MeanX => &self.mean_x,
            Moment::VarX => &self.var_x,
            Moment::MeanP => &self.mean_p,
            Moment::VarP => &self.var_p,
            Moment::CovXp => &self.cov_xp,
        }
    }

    pub fn stderr(&self, m: Moment) -> &[f64] {
        match m {
            Moment::MeanX => &self.se_mean_x,
            Moment::VarX => &self.se_var_x,
            Moment::MeanP => &self.se_mean_p,
            Moment::VarP => &self.se_var_p,
            Moment::CovXp => &self.se_cov_xp,
        }
    }

    fn from_samples(times: Vec<f64>, samples: &[Vec<[f64; 2]>]) -> Self {
        let n_traj = samples.first().map_or(0, Vec::len);
        let mut s = MomentSeries {
            n_traj,
            times,
            mean_x: Vec::new(),
            var_x: Vec::new(),
            mean_p: Vec::new(),
            var_p: Vec::new(),
            cov_xp: Vec::new(),
            se_mean_x: Vec::new(),
            se_var_x: Vec::new(),
            se_mean_p: Vec::new(),
            se_var_p: Vec::new(),
            se_cov_xp: Vec::new(),
        };
        for record in samples {
            let st = PointStats::new(record);
            s.mean_x.push(st.mean[0]);
            s.mean_p.push(st.mean[1]);
            s.var_x.push(st.var[0]);
            s.var_p.push(st.var[1]);
            s.cov_xp.push(st.cov);
            s.se_mean_x.push(st.se_mean[0]);
            s.se_mean_p.push(st.se_mean[1]);
            s.se_var_x.push(st.se_var[0]);
            s.se_var_p.push(st.se_var[1]);
            s.se_cov_xp.push(st.se_cov);
        }
        s
    }
}

/// Two-pass moments of (x, p) samples at one record point.
struct PointStats {
    mean: [f64; 2],
    var: [f64; 2],
    cov: f64,
    se_mean: [f64; 2],
    se_var: [f64; 2],
    se_cov: f64,
}

impl PointStats {
    fn new(samples: &[[f64; 2]]) -> Self {
        let n = samples.len() as f64;
        let mut mean = [0.0; 2];
        for s in samples {
            mean[0] += s[0];
            mean[1] += s[1];
        }
        mean = [mean[0] / n, mean[1] / n];
        // central moments: second, fourth, and the mixed (1,1) and (2,2)
        let (mut m2, mut m4, mut m11, mut m22) = ([0.0; 2], [0.0; 2], 0.0, 0.0);
        for s in samples {
            let d = [s[0] - mean[0], s[1] - mean[1]];
            for k in 0..2 {
                let d2 = d[k] * d[k];
                m2[k] += d2;
                m4[k] += d2 * d2;
            }
            m11 += d[0] * d[1];
            m22 += d[0] * d[0] * d[1] * d[1];
        }
        if samples.len() < 2 {
            return PointStats {
                mean,
                var: [f64::NAN; 2],
                cov: f64::NAN,
                se_mean: [f64::NAN; 2],
                se_var: [f64::NAN; 2],
                se_cov: f64::NAN,
            };
        }
        let var = [m2[0] / (n - 1.0), m2[1] / (n - 1.0)];
        let cov = m11 / (n - 1.0);
        let se_var = |k: usize| {
            let mu4 = m4[k] / n;
            let s2 = m2[k] / n;
            ((mu4 - s2 * s2) / n).max(0.0).sqrt()
        };
        let c = m11 / n;
        PointStats {
            mean,
            var,
            cov,
            se_mean: [(var[0] / n).sqrt(), (var[1] / n).sqrt()],
            se_var: [se_var(0), se_var(1)],
            se_cov: ((m22 / n - c * c) / n).max(0.0).sqrt(),
        }
    }
}

/// Positions and momenta of one trajectory at the record points.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub index: usize,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

/// Simulates `config.n_traj` independent tracers and returns their moments.
pub fn run_ensemble(
    config: &EnsembleConfig,
    packet: &InitialWavePacket,
    params: &CslParameters,
) -> Result<MomentSeries> {
    run_ensemble_with_paths(config, packet, params, 0).map(|(s, _)| s)
}

/// As [`run_ensemble`], also returning the first `n_paths` sample paths.
pub fn run_ensemble_with_paths(
    config: &EnsembleConfig,
    packet: &InitialWavePacket,
    params: &CslParameters,
    n_paths: usize,
) -> Result<(MomentSeries, Vec<SamplePath>)> {
    config.validate()?;
    packet.validate(params)?;
    params.validate()?;
    let fractional = config
        .fractional_a
        .map(FractionalNoiseSpec::new)
        .transpose()?;
    let record_steps = config.record_steps();
    let n_chunks = config.n_traj.div_ceil(CHUNK);

    let chunks: Vec<Vec<Vec<[f64; 2]>>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let range = c * CHUNK..((c + 1) * CHUNK).min(config.n_traj);
            range
                .map(|i| {
                    trajectory(
                        config,
                        packet,
                        params,
                        fractional.as_ref(),
                        &record_steps,
                        i,
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut samples = vec![Vec::with_capacity(config.n_traj); record_steps.len()];
    let mut paths = Vec::new();
    for (i, traj) in chunks.into_iter().flatten().enumerate() {
        if i < n_paths {
            paths.push(SamplePath {
                index: i,
                x: traj.iter().map(|s| s[0]).collect(),
                p: traj.iter().map(|s| s[1]).collect(),
            });
        }
        for (r, s) in traj.into_iter().enumerate() {
            samples[r].push(s);
        }
    }
    let times = record_steps
        .iter()
        .map(|&k| k as f64 * config.dt())
        .collect();
    Ok((MomentSeries::from_samples(times, &samples), paths))
}

fn trajectory(
    config: &EnsembleConfig,
    packet: &InitialWavePacket,
    params: &CslParameters,
    fractional: Option<&FractionalNoiseSpec>,
    record_steps: &[usize],
    index: usize,
) -> Result<Vec<[f64; 2]>> {
    let mut rng = substream(config.master_seed, Domain::Tracer, index as u64);
    let spec = &config.integrator;
    let mut state = TracerState::new(packet, params, spec, index as u64);
    let mut out = Vec::with_capacity(record_steps.len());
    let mut next = record_steps.iter().peekable();
    for k in 0..=config.n_steps() {
        if next.peek() == Some(&&k) {
            out.push([state.x, state.p]);
            next.next();
        }
        if k == config.n_steps() {
            break;
        }
        match fractional {
            None => step(&mut state, packet, params, spec, &mut rng)?,
            Some(f) => step_fractional(&mut state, packet, params, spec, f, &mut rng)?,
        }
    }
    Ok(out)
}

/// ⟨x²⟩ = 2νt + (2/3)αλν²t³, the mean-square displacement without packet drift.
pub fn msd_theory(t: f64, params: &CslParameters) -> f64 {
    let nu = params.nu();
    2.0 * nu * t + 2.0 / 3.0 * params.alpha * params.lambda * nu * nu * t.powi(3)
}

/// Log-log least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub stderr: f64,
    /// Fitted value at t = 1.
    pub prefactor: f64,
    pub n_points: usize,
}

/// Fits value ∝ t^k over record points with t in [t_lo, t_hi].
pub fn fit_scaling_exponent(
    moment: Moment,
    series: &MomentSeries,
    t_lo: f64,
    t_hi: f64,
) -> Result<ScalingFit> {
    let (t, v): (Vec<f64>, Vec<f64>) = series
        .times
        .iter()
        .zip(series.values(moment))
        .filter(|(&t, _)| t >= t_lo && t <= t_hi && t > 0.0)
        .map(|(&t, &v)| (t, v))
        .unzip();
    fit_power_law(&t, &v)
}

/// Least-squares slope of ln(value) against ln(t), with the residual-based
/// standard error.
pub fn fit_power_law(times: &[f64], values: &[f64]) -> Result<ScalingFit> {
    if times.len() != values.len() {
        return Err(Error::FitWindow("times and values differ in length".into()));
    }
    if times.len() < 5 {
        return Err(Error::FitWindow(format!(
            "need at least 5 points, window holds {}",
            times.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::FitWindow(format!(
            "non-positive value {v:e} in window"
        )));
    }
    if let Some(t) = times.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::FitWindow(format!(
            "non-positive time {t:e} in window"
        )));
    }
    let lx: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::FitWindow("all times identical".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(ScalingFit {
        exponent: slope,
        stderr: (rss / (n - 2.0) / sxx).sqrt(),
        prefactor: intercept.exp(),
        n_points: lx.len(),
    })
}

/// Σ z² / N over record points with a positive standard error, where
/// z = (empirical − theory)/stderr.
pub fn reduced_chi_square(
    series: &MomentSeries,
    moment: Moment,
    theory: impl Fn(f64) -> f64,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((&t, &v), &se) in series
        .times
        .iter()
        .zip(series.values(moment))
        .zip(series.stderr(moment))
    {
        if se > 0.0 {
            sum += ((v - theory(t)) / se).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::SeriesMismatch(
            "no record point has a standard error".into(),
        ));
    }
    Ok(sum / count as f64)
}

/// Euclidean and fractal dimension of the intermittent support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntermittencySpec {
    pub euclidean_dim: u32,
    pub fractal_dim: f64,
}

impl IntermittencySpec {
    pub fn new(euclidean_dim: u32, fractal_dim: f64) -> Result<Self> {
        let spec = IntermittencySpec {
            euclidean_dim,
            fractal_dim,
        };
        let mu = spec.codimension();
        if !(0.0..4.0).contains(&mu) {
            return Err(Error::param(
                "fractal_dim",
                format!("codimension μ = E − df must lie in [0, 4), got {mu}"),
            ));
        }
        Ok(spec)
    }

    /// μ = E − df.
    pub fn codimension(&self) -> f64 {
        self.euclidean_dim as f64 - self.fractal_dim
    }
}

/// A = 1 + 3μ/(4 − μ).
pub fn intermittency_a(spec: &IntermittencySpec) -> Result<f64> {
    let mu = spec.codimension();
    if !(0.0..4.0).contains(&mu) {
        return Err(Error::param("mu", format!("must lie in [0, 4), got {mu}")));
    }
    Ok(1.0 + 3.0 * mu / (4.0 - mu))
}
