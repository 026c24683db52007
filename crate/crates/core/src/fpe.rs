//! First and second phase-space moments of the random-force Fokker-Planck
//! equation
//!
//! ```text
//! ∂P/∂t = −(p/M)∂P/∂x + [ (ħ/2M)∂²/∂x² + √(ħ³αλ/2M)∂²/∂x∂p + (ħ²αλ/4)∂²/∂p² ] P
//! ```
//!
//! The moment hierarchy closes at second order and is solved exactly as a
//! polynomial in t. The printed form of the kinetic term carries ⟨p⟩ instead
//! of p; [`Kinetic::Literal`] reproduces that reading for comparison.

use serde::{Deserialize, Serialize};

use crate::ensemble::{Moment, MomentSeries};
use crate::error::{Error, Result};
use crate::params::CslParameters;

/// Central phase-space moments of P(x, p, t).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MomentState {
    pub mean_x: f64,
    pub mean_p: f64,
    pub m_xx: f64,
    pub m_xp: f64,
    pub m_pp: f64,
}

impl MomentState {
    pub fn new(mean_x: f64, mean_p: f64, m_xx: f64, m_xp: f64, m_pp: f64) -> Result<Self> {
        let s = MomentState {
            mean_x,
            mean_p,
            m_xx,
            m_xp,
            m_pp,
        };
        s.validate()?;
        Ok(s)
    }

    /// Point mass at (x, p).
    pub fn point(x: f64, p: f64) -> Self {
        MomentState {
            mean_x: x,
            mean_p: p,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m_xx >= 0.0 && self.m_pp >= 0.0) {
            return Err(Error::param("m_xx", "second moments must be non-negative"));
        }
        if self.m_xp * self.m_xp > self.m_xx * self.m_pp * (1.0 + 1e-12) {
            return Err(Error::param("m_xp", "violates m_xp² ≤ m_xx·m_pp"));
        }
        Ok(())
    }

    pub fn get(&self, m: Moment) -> f64 {
        match m {
            Moment::MeanX => self.mean_x,
            Moment::MeanP => self.mean_p,
            Moment::VarX => self.m_xx,
            Moment::VarP => self.m_pp,
            Moment::CovXp => self.m_xp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kinetic {
    /// Drift −(p/M)∂P/∂x: position responds to the fluctuating momentum.
    Full,
    /// Drift −(⟨p⟩/M)∂P/∂x as printed: a rigid translation only.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FpeOptions {
    pub kinetic: Kinetic,
    /// Include the ∂²/∂x∂p cross-diffusion (present when position and
    /// momentum share their noise).
    pub shared_noise: bool,
}

impl Default for FpeOptions {
    fn default() -> Self {
        FpeOptions {
            kinetic: Kinetic::Full,
            shared_noise: true,
        }
    }
}

/// The three diffusion coefficients as moment growth rates:
/// (d m_xx, d m_xp, d m_pp)/dt contributions ħ/M, √(ħ³αλ/2M), ħ²αλ/2.
pub fn diffusion_rates(params: &CslParameters, shared_noise: bool) -> (f64, f64, f64) {
    let h = params.hbar;
    let al = params.alpha * params.lambda;
    let cross = if shared_noise {
        (h * h * h * al / (2.0 * params.mass)).sqrt()
    } else {
        0.0
    };
    (h / params.mass, cross, 0.5 * h * h * al)
}

/// Exact moments at time `t` starting from `state0`.
pub fn evolve_moments(
    state0: &MomentState,
    params: &CslParameters,
    t: f64,
    options: FpeOptions,
) -> Result<MomentState> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::param("t", format!("must be >= 0, got {t:e}")));
    }
    state0.validate()?;
    let m = params.mass;
    let (d_xx, d_xp, d_pp) = diffusion_rates(params, options.shared_noise);
    let s = state0;
    let m_pp = s.m_pp + d_pp * t;
    let (m_xp, m_xx) = match options.kinetic {
        Kinetic::Full => {
            // m_xp' = m_pp/M + d_xp ; m_xx' = 2 m_xp/M + d_xx
            let m_xp = s.m_xp + (s.m_pp * t + 0.5 * d_pp * t * t) / m + d_xp * t;
            let m_xx = s.m_xx
                + d_xx * t
                + 2.0 / m
                    * (s.m_xp * t
                        + (0.5 * s.m_pp * t * t + d_pp * t * t * t / 6.0) / m
                        + 0.5 * d_xp * t * t);
            (m_xp, m_xx)
        }
        Kinetic::Literal => (s.m_xp + d_xp * t, s.m_xx + d_xx * t),
    };
    Ok(MomentState {
        mean_x: s.mean_x + s.mean_p / m * t,
        mean_p: s.mean_p,
        m_xx,
        m_xp,
        m_pp,
    })
}

/// Contribution √(ħ³αλ/2M)·t²/M of the shared-noise cross term to m_xx, the
/// only difference between the full-coupling m_xx from a point start and the
/// two-term mean-square-displacement law.
pub fn cross_term_msd(params: &CslParameters, t: f64) -> f64 {
    diffusion_rates(params, true).1 * t * t / params.mass
}

/// z-scores (empirical − analytic)/stderr of one moment at each record point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentZ {
    pub moment: Moment,
    pub times: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub per_moment: Vec<MomentZ>,
    pub max_abs_z: f64,
    /// Record points that entered the comparison.
    pub checkpoints: usize,
}

/// Compares an ensemble against the analytic moment solution. Record points
/// at t = 0 or whose standard error is zero or undefined are skipped.
pub fn compare_to_ensemble(
    series: &MomentSeries,
    params: &CslParameters,
    state0: &MomentState,
    options: FpeOptions,
) -> Result<ComparisonReport> {
    if series.n_traj < 2 {
        return Err(Error::SeriesMismatch(format!(
            "need at least two trajectories, series has {}",
            series.n_traj
        )));
    }
    if series.is_empty() {
        return Err(Error::SeriesMismatch("series has no record points".into()));
    }
    let analytic = series
        .times
        .iter()
        .map(|&t| evolve_moments(state0, params, t, options))
        .collect::<Result<Vec<_>>>()?;
    let mut per_moment = Vec::new();
    let mut max_abs_z: f64 = 0.0;
    let mut checkpoints = 0;
    for m in Moment::ALL {
        let mut times = Vec::new();
        let mut z = Vec::new();
        for (i, (&v, &se)) in series.values(m).iter().zip(series.stderr(m)).enumerate() {
            if series.times[i] > 0.0 && se > 0.0 && se.is_finite() {
                let zi = (v - analytic[i].get(m)) / se;
                max_abs_z = max_abs_z.max(zi.abs());
                times.push(series.times[i]);
                z.push(zi);
            }
        }
        checkpoints = checkpoints.max(times.len());
        per_moment.push(MomentZ {
            moment: m,
            times,
            z,
        });
    }
    Ok(ComparisonReport {
        per_moment,
        max_abs_z,
        checkpoints,
    })
}
