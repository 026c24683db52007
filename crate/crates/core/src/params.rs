//! Physical constants, GRW presets and the turbulence/collapse dictionary.
//!
//! Everything is CGS: lengths in cm, masses in g, times in s, action in erg·s.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::ConfigMap;
use crate::error::{Error, Result};

/// Reduced Planck constant in erg·s used unless a config overrides it.
pub const HBAR_CGS: f64 = 1.0545887e-27;

/// Localization constant shared by both GRW presets, cm⁻².
pub const GRW_ALPHA: f64 = 1e10;

/// Config keys understood by [`CslParameters::from_config`].
pub const PARAM_KEYS: &[&str] = &["preset", "alpha", "lambda", "mass", "hbar"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    GrwMicro,
    GrwMacro,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grw_micro" => Ok(Preset::GrwMicro),
            "grw_macro" => Ok(Preset::GrwMacro),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::GrwMicro => "grw_micro",
            Preset::GrwMacro => "grw_macro",
        })
    }
}

/// Collapse-model constants.
///
/// `lambda = 0` is accepted and switches the collapse noise off; the other
/// three constants must be strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CslParameters {
    /// Inverse squared localization length, cm⁻².
    pub alpha: f64,
    /// Collapse rate, s⁻¹.
    pub lambda: f64,
    /// Particle mass, g.
    pub mass: f64,
    /// Reduced Planck constant, erg·s.
    pub hbar: f64,
}

impl CslParameters {
    pub fn new(alpha: f64, lambda: f64, mass: f64, hbar: f64) -> Result<Self> {
        let p = CslParameters {
            alpha,
            lambda,
            mass,
            hbar,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn preset(preset: Preset) -> Self {
        let (lambda, mass) = match preset {
            Preset::GrwMicro => (1e-16, 1e-23),
            Preset::GrwMacro => (1e7, 1.0),
        };
        CslParameters {
            alpha: GRW_ALPHA,
            lambda,
            mass,
            hbar: HBAR_CGS,
        }
    }

    /// Looks a preset up by its config name.
    pub fn from_preset_name(name: &str) -> Result<Self> {
        Ok(Self::preset(name.parse()?))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(
                    name,
                    format!("must be finite and > 0, got {v:e}"),
                ))
            }
        };
        positive("alpha", self.alpha)?;
        positive("mass", self.mass)?;
        positive("hbar", self.hbar)?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::param(
                "lambda",
                format!("must be finite and >= 0, got {:e}", self.lambda),
            ));
        }
        Ok(())
    }

    /// Same constants with a different collapse rate.
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    /// ν = ħ/2M, cm²/s.
    pub fn nu(&self) -> f64 {
        self.hbar / (2.0 * self.mass)
    }

    /// γ = λ√(4π/α).
    pub fn gamma(&self) -> f64 {
        self.lambda * (4.0 * std::f64::consts::PI / self.alpha).sqrt()
    }

    /// Variance rate 2αλν² of the collapse-induced tracer velocity, cm²/s³.
    pub fn velocity_diffusion(&self) -> f64 {
        let nu = self.nu();
        2.0 * self.alpha * self.lambda * nu * nu
    }

    /// Amplitude ħ√(αλ/2) of the random-force momentum noise.
    pub fn random_force_amplitude(&self) -> f64 {
        self.hbar * (self.alpha * self.lambda / 2.0).sqrt()
    }

    /// Builds parameters from a config map: an optional `preset` supplies
    /// defaults and any of `alpha`, `lambda`, `mass`, `hbar` override it.
    /// Without a preset all of alpha, lambda and mass must be given.
    pub fn from_config(cfg: &ConfigMap) -> Result<Self> {
        let base = match cfg.raw("preset") {
            Some(name) => Some(Self::from_preset_name(name)?),
            None => None,
        };
        let field = |key: &'static str, fallback: Option<f64>| -> Result<f64> {
            cfg.get::<f64>(key)?
                .or(fallback)
                .ok_or_else(|| Error::param(key, "missing (no preset given)"))
        };
        let p = CslParameters {
            alpha: field("alpha", base.map(|b| b.alpha))?,
            lambda: field("lambda", base.map(|b| b.lambda))?,
            mass: field("mass", base.map(|b| b.mass))?,
            hbar: cfg.get::<f64>("hbar")?.unwrap_or(HBAR_CGS),
        };
        p.validate()?;
        Ok(p)
    }

    /// Serializes to config lines that parse back to identical values.
    pub fn to_config_text(&self) -> String {
        format!(
            "alpha = {:e}\nlambda = {:e}\nmass = {:e}\nhbar = {:e}\n",
            self.alpha, self.lambda, self.mass, self.hbar
        )
    }
}

/// Dictionary quantities derived from [`CslParameters`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    /// Diffusivity ħ/2M, cm²/s.
    pub nu: f64,
    /// Collapse coupling λ√(4π/α).
    pub gamma: f64,
    /// Injection length √(2/α), cm.
    pub delta_inj: f64,
    /// Injected energy rate 2ν²αλ, cm²/s³.
    pub epsilon_inj: f64,
    /// Reynolds number (8λ/αν)^(1/3).
    pub reynolds: f64,
    /// Time at which Brownian and enhanced diffusion contribute equally, s.
    pub t_enh: f64,
}

pub fn derive(params: &CslParameters) -> DerivedQuantities {
    let nu = params.nu();
    let (alpha, lambda) = (params.alpha, params.lambda);
    DerivedQuantities {
        nu,
        gamma: params.gamma(),
        delta_inj: (2.0 / alpha).sqrt(),
        epsilon_inj: 2.0 * nu * nu * alpha * lambda,
        reynolds: (8.0 * lambda / (alpha * nu)).cbrt(),
        t_enh: crossover_time(params),
    }
}

/// √(3/(αλν)): root of 2νt = (2/3)αλν²t³. Infinite when λ = 0.
pub fn crossover_time(params: &CslParameters) -> f64 {
    (3.0 / (params.alpha * params.lambda * params.nu())).sqrt()
}

impl DerivedQuantities {
    /// (name, value, unit) rows in a fixed order for tabular output.
    pub fn rows(&self) -> [(&'static str, f64, &'static str); 6] {
        [
            ("nu", self.nu, "cm^2/s"),
            ("gamma", self.gamma, "cm/s"),
            ("delta_inj", self.delta_inj, "cm"),
            ("epsilon_inj", self.epsilon_inj, "cm^2/s^3"),
            ("reynolds", self.reynolds, "1"),
            ("t_enh", self.t_enh, "s"),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn presets_match_grw_constants() {
        let macro_ = CslParameters::preset(Preset::GrwMacro);
        assert_eq!((macro_.alpha, macro_.lambda, macro_.mass), (1e10, 1e7, 1.0));
        let micro = CslParameters::preset(Preset::GrwMicro);
        assert_eq!(
            (micro.alpha, micro.lambda, micro.mass),
            (1e10, 1e-16, 1e-23)
        );
        assert_eq!(micro.hbar, 1.0545887e-27);
        assert!(matches!(
            "bogus".parse::<Preset>(),
            Err(Error::UnknownPreset(_))
        ));
    }

    #[test]
    fn derived_values_for_presets() {
        let macro_ = derive(&CslParameters::preset(Preset::GrwMacro));
        let micro = derive(&CslParameters::preset(Preset::GrwMicro));
        // ħ/2M by hand: 1.0545887e-27 / 2
        assert_relative_eq!(macro_.nu, 5.2729435e-28, max_relative = 1e-12);
        assert_relative_eq!(
            macro_.delta_inj,
            1.4142135623730951e-5,
            max_relative = 1e-12
        );
        assert_relative_eq!(macro_.t_enh, 2.39e5, max_relative = 0.01);
        assert_relative_eq!(micro.t_enh, macro_.t_enh, max_relative = 1e-12);
        assert_relative_eq!(macro_.reynolds, 2.48e8, max_relative = 0.01);
        assert_relative_eq!(micro.reynolds, 1.15e-7, max_relative = 0.01);
    }

    #[test]
    fn crossover_scaling() {
        let p = CslParameters::preset(Preset::GrwMacro);
        let t = crossover_time(&p);
        assert_relative_eq!(
            crossover_time(&p.with_lambda(4.0 * p.lambda)),
            t / 2.0,
            max_relative = 1e-12
        );
        assert!(crossover_time(&p.with_lambda(0.0)).is_infinite());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(CslParameters::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(CslParameters::new(1.0, -1.0, 1.0, 1.0).is_err());
        assert!(CslParameters::new(1.0, 1.0, f64::NAN, 1.0).is_err());
        assert!(CslParameters::new(1.0, 0.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn config_with_preset_and_override() {
        let cfg = ConfigMap::parse("preset = grw_macro\nlambda = 2e7", PARAM_KEYS).unwrap();
        let p = CslParameters::from_config(&cfg).unwrap();
        assert_eq!(p.lambda, 2e7);
        assert_eq!(p.mass, 1.0);
        let cfg = ConfigMap::parse("alpha = 1e10", PARAM_KEYS).unwrap();
        assert!(CslParameters::from_config(&cfg).is_err());
    }

    proptest! {
        #[test]
        fn dictionary_invariants(
            la in -5.0f64..15.0, ll in -20.0f64..10.0, lm in -25.0f64..3.0, lh in -28.0f64..-26.0
        ) {
            let p = CslParameters::new(10f64.powf(la), 10f64.powf(ll), 10f64.powf(lm), 10f64.powf(lh)).unwrap();
            let d = derive(&p);
            let rel = |a: f64, b: f64| ((a - b) / b).abs();
            prop_assert!(rel(d.nu, p.hbar / (2.0 * p.mass)) < 1e-12);
            prop_assert!(rel(d.reynolds, (8.0 * p.lambda / (p.alpha * d.nu)).cbrt()) < 1e-12);
            prop_assert!(rel(d.t_enh, (3.0 / (p.alpha * p.lambda * d.nu)).sqrt()) < 1e-12);
            let lhs = d.epsilon_inj * d.delta_inj.powi(4) / d.nu.powi(3);
            prop_assert!(rel(lhs, d.reynolds.powi(3)) < 1e-12);
            // crossover is where both diffusion terms coincide
            let brown = 2.0 * d.nu * d.t_enh;
            let enhanced = 2.0 / 3.0 * p.alpha * p.lambda * d.nu * d.nu * d.t_enh.powi(3);
            prop_assert!(rel(enhanced, brown) < 1e-12);
        }

        #[test]
        fn config_round_trip(la in -5.0f64..15.0, ll in -20.0f64..10.0, lm in -25.0f64..3.0) {
            let p = CslParameters::new(10f64.powf(la), 10f64.powf(ll), 10f64.powf(lm), HBAR_CGS).unwrap();
            let cfg = ConfigMap::parse(&p.to_config_text(), PARAM_KEYS).unwrap();
            prop_assert_eq!(CslParameters::from_config(&cfg).unwrap(), p);
        }
    }
}
