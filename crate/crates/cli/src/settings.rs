//! Resolution of a run's configuration from config file, preset, seed and
//! `--set` overrides into one flat key/value map.

use std::collections::BTreeMap;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use csl_turb::config::ConfigMap;
use csl_turb::params::PARAM_KEYS;
use csl_turb::rng::DEFAULT_MASTER_SEED;
use csl_turb::CslParameters;

/// Value marking a key whose default is computed from other settings.
pub const AUTO: &str = "auto";

pub type KeyTable = &'static [(&'static str, &'static str)];

/// Sources of configuration in increasing precedence.
#[derive(Debug, Clone, Default)]
pub struct Sources {
    pub config_text: Option<String>,
    pub preset: Option<String>,
    pub overrides: Vec<String>,
    pub seed: Option<String>,
    /// Values set by command-specific flags such as `--A`.
    pub flags: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    map: BTreeMap<String, String>,
    seed: u64,
}

pub fn parse_seed(s: &str) -> Result<u64> {
    let s = s.trim();
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.with_context(|| format!("invalid seed `{s}`"))
}

impl Settings {
    /// Merges the sources and fills command defaults. Returns the settings
    /// and the physical parameters they describe.
    pub fn resolve(keys: KeyTable, sources: &Sources) -> Result<(Settings, CslParameters)> {
        let mut allowed: Vec<&str> = PARAM_KEYS.to_vec();
        allowed.push("master_seed");
        allowed.extend(keys.iter().map(|(k, _)| *k));
        let mut cfg = ConfigMap::parse(sources.config_text.as_deref().unwrap_or(""), &allowed)?;
        if let Some(p) = &sources.preset {
            cfg.set("preset", p.as_str());
        }
        for o in &sources.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| anyhow!("override `{o}` is not key=value"))?;
            let (k, v) = (k.trim(), v.trim());
            if !allowed.contains(&k) {
                bail!("unknown key `{k}` in override");
            }
            if v.is_empty() {
                bail!("empty value for `{k}` in override");
            }
            cfg.set(k, v);
        }
        for (k, v) in &sources.flags {
            cfg.set(k, v.as_str());
        }
        if let Some(s) = &sources.seed {
            cfg.set("master_seed", s.as_str());
        }
        let params = CslParameters::from_config(&cfg)?;
        let seed = match cfg.raw("master_seed") {
            Some(s) => parse_seed(s)?,
            None => DEFAULT_MASTER_SEED,
        };

        let mut map = BTreeMap::new();
        if let Some(p) = cfg.raw("preset") {
            map.insert("preset".to_string(), p.to_string());
        }
        for (k, v) in [
            ("alpha", params.alpha),
            ("lambda", params.lambda),
            ("mass", params.mass),
            ("hbar", params.hbar),
        ] {
            map.insert(k.to_string(), format!("{v:e}"));
        }
        map.insert("master_seed".to_string(), format!("{seed:#x}"));
        for (k, default) in keys {
            let v = cfg.raw(k).unwrap_or(default);
            map.insert(k.to_string(), v.to_string());
        }
        Ok((Settings { map, seed }, params))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn map(&self) -> &BTreeMap<String, String> {
        &self.map
    }

    pub fn raw(&self, key: &str) -> Result<&str> {
        self.map
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| anyhow!("no setting `{key}`"))
    }

    pub fn get<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key)?;
        raw.parse::<T>()
            .map_err(|e| anyhow!("setting `{key}` = `{raw}`: {e}"))
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.raw(key)? {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => bail!("setting `{key}` = `{other}`: expected true or false"),
        }
    }

    /// Reads `key`; `auto` resolves to `compute()` and the resolved number is
    /// stored back so the manifest records what actually ran.
    pub fn f64_or(&mut self, key: &str, compute: impl FnOnce() -> Result<f64>) -> Result<f64> {
        if self.raw(key)? == AUTO {
            let v = compute()?;
            self.map.insert(key.to_string(), format!("{v:e}"));
            Ok(v)
        } else {
            self.get(key)
        }
    }

    pub fn usize_or(
        &mut self,
        key: &str,
        compute: impl FnOnce() -> Result<usize>,
    ) -> Result<usize> {
        if self.raw(key)? == AUTO {
            let v = compute()?;
            self.map.insert(key.to_string(), v.to_string());
            Ok(v)
        } else {
            self.get(key)
        }
    }

    /// `none` (or `off`) is `None`.
    pub fn optional_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key)? {
            "none" | "off" => Ok(None),
            _ => self.get(key).map(Some),
        }
    }
}
