//! Subcommand bodies. Each returns the files to write and the checks to
//! record; nothing touches the filesystem here.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use csl_turb::beable::{
    estimate_drift_field, free_packet_wave_from, nelson_drift_from, run_equivariance,
    spreading_time, transition_rates, BeableConfig, FreePacket, HomogeneousSpec, LatticeGeometry,
    PhaseGradient, WalkerEnsemble,
};
use csl_turb::burgers::{
    refinement_study, run_forced, stable_dt, ForcedRunConfig, ForcingSpec, PotentialGradientSign,
    RefinementConfig, SpectralGrid,
};
use csl_turb::ensemble::{
    fit_power_law, msd_theory, reduced_chi_square, run_ensemble, run_ensemble_with_paths,
    EnsembleConfig, Moment, MomentSeries,
};
use csl_turb::fpe::{
    compare_to_ensemble, cross_term_msd, evolve_moments, FpeOptions, Kinetic, MomentState,
};
use csl_turb::params::{crossover_time, derive};
use csl_turb::tracer::{
    DriftMode, InitialWavePacket, IntegratorSpec, MomentumModel, NoiseMode, Scheme,
};
use csl_turb::CslParameters;

use crate::csv::{Cell, Table};
use crate::manifest::Check;
use crate::settings::{KeyTable, Settings, AUTO};

pub const PARAMS_KEYS: KeyTable = &[];

pub const SIMULATE_KEYS: KeyTable = &[
    ("x_mean", "0"),
    ("p_mean", "0"),
    ("var_x", "1e-20"),
    ("var_p", AUTO),
    ("n_traj", "5000"),
    ("dt", "1e4"),
    ("t_final", "1e6"),
    ("record_every", "1"),
    ("scheme", "exact_gaussian"),
    ("noise_mode", "effective"),
    ("momentum", "full"),
    ("drift", "drift_free"),
    ("shared_noise", "true"),
    ("locality_check", "true"),
    ("fractional_a", "none"),
    ("n_paths", "4"),
];

pub const SCALING_KEYS: KeyTable = &[
    ("x_mean", "0"),
    ("p_mean", "0"),
    ("var_x", "1e-20"),
    ("var_p", AUTO),
    ("n_traj", "10000"),
    ("dt", "1e5"),
    ("t_final", "1e7"),
    ("record_every", "1"),
    ("scheme", "exact_gaussian"),
    ("noise_mode", "effective"),
    ("momentum", "full"),
    ("drift", "drift_free"),
    ("shared_noise", "true"),
    ("locality_check", "true"),
    ("fractional_a", "1"),
    ("p_fit_lo", AUTO),
    ("p_fit_hi", AUTO),
    ("x_fit_lo", AUTO),
    ("x_fit_hi", AUTO),
];

pub const FPE_KEYS: KeyTable = &[
    ("x_mean", "0"),
    ("p_mean", "1e-13"),
    ("var_x", "1e-20"),
    ("var_p", AUTO),
    ("n_traj", "10000"),
    ("dt", "2e4"),
    ("t_final", "6e5"),
    ("record_every", "1"),
    ("scheme", "exact_gaussian"),
    ("noise_mode", "effective"),
    ("momentum", "random_force"),
    ("drift", "kinetic"),
    ("shared_noise", "true"),
    ("locality_check", "true"),
    ("kinetic", "full"),
];

pub const BEABLE_KEYS: KeyTable = &[
    ("x_mean", "0"),
    ("p_mean", "0"),
    ("var_x", "1e-20"),
    ("var_p", AUTO),
    ("n_sites", "512"),
    ("spacing", AUTO),
    ("n_walkers", "100000"),
    ("t_final", AUTO),
    ("dt", AUTO),
    ("checkpoints", "6"),
    ("phase_gradient", "centered"),
    ("homogeneous", "true"),
    ("sigma", "1"),
    ("rate_scale", AUTO),
    ("drift_steps", "400"),
    ("drift_bin", "2"),
    ("drift_window", "2"),
];

pub const BURGERS_KEYS: KeyTable = &[
    ("n_grid", "128"),
    ("length", AUTO),
    ("nu", AUTO),
    ("epsilon", AUTO),
    ("delta", AUTO),
    ("dt", AUTO),
    ("burn_in_steps", "0"),
    ("n_steps", "2000"),
    ("sample_every", "200"),
    ("sign", "+1"),
    ("realization", "0"),
    ("refine_nu", "0.1"),
    ("refine_amplitude", "0.5"),
    ("refine_t_final", "1"),
    ("refine_base_steps", "50"),
];

/// Largest |z| accepted by the moment comparison.
pub const MAX_Z: f64 = 4.0;
/// Fewest comparison points accepted.
pub const MIN_CHECKPOINTS: usize = 20;
pub const MAX_REDUCED_CHI2: f64 = 2.0;
pub const MAX_DRIFT_RMS: f64 = 0.1;
pub const ORDER_RANGE: (f64, f64) = (1.8, 2.2);
pub const P_EXPONENT_TOL: f64 = 0.05;
pub const X_EXPONENT_TOL: f64 = 0.1;

#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(String, String)>,
    pub checks: Vec<Check>,
    pub diagnostics: BTreeMap<String, f64>,
    pub summary: Vec<String>,
}

impl Outcome {
    fn file(&mut self, name: &str, table: Table) {
        self.files.push((name.to_string(), table.render()));
    }

    fn note(&mut self, key: &str, value: f64) {
        self.diagnostics.insert(key.to_string(), value);
    }
}

fn unit(m: Moment) -> &'static str {
    match m {
        Moment::MeanX => "cm",
        Moment::VarX => "cm^2",
        Moment::MeanP => "g*cm/s",
        Moment::VarP => "(g*cm/s)^2",
        Moment::CovXp => "g*cm^2/s",
    }
}

fn packet(s: &mut Settings, params: &CslParameters) -> Result<InitialWavePacket> {
    let var_x: f64 = s.get("var_x")?;
    let var_p = s.f64_or("var_p", || Ok(params.hbar * params.hbar / (4.0 * var_x)))?;
    Ok(InitialWavePacket::new(
        s.get("x_mean")?,
        s.get("p_mean")?,
        var_x,
        var_p,
        params,
    )?)
}

fn integrator(s: &Settings) -> Result<IntegratorSpec> {
    Ok(IntegratorSpec::new(
        s.get::<Scheme>("scheme")?,
        s.get("dt")?,
        s.get::<NoiseMode>("noise_mode")?,
    )
    .with_momentum(s.get::<MomentumModel>("momentum")?)
    .with_drift(s.get::<DriftMode>("drift")?)
    .with_shared_noise(s.flag("shared_noise")?)
    .with_locality_check(s.flag("locality_check")?))
}

fn ensemble_config(s: &Settings) -> Result<EnsembleConfig> {
    let mut cfg = EnsembleConfig::new(s.get("n_traj")?, s.get("t_final")?, integrator(s)?)
        .with_seed(s.seed())
        .with_record_every(s.get("record_every")?);
    if s.map().contains_key("fractional_a") {
        if let Some(a) = s.optional_f64("fractional_a")? {
            cfg = cfg.with_fractional(a);
        }
    }
    Ok(cfg)
}

fn moments_table(series: &MomentSeries, params: &CslParameters) -> Table {
    let mut cols: Vec<(String, String)> = vec![("t".into(), "s".into())];
    for m in Moment::ALL {
        cols.push((m.name().to_string(), unit(m).to_string()));
        cols.push((format!("se_{}", m.name()), unit(m).to_string()));
    }
    cols.push(("msd_theory".into(), "cm^2".into()));
    let refs: Vec<(&str, &str)> = cols.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let mut table = Table::new(&refs);
    for (i, &t) in series.times.iter().enumerate() {
        let mut row: Vec<Cell> = vec![t.into()];
        for m in Moment::ALL {
            row.push(series.values(m)[i].into());
            row.push(series.stderr(m)[i].into());
        }
        row.push(msd_theory(t, params).into());
        table.push(&row);
    }
    table
}

struct FitRow {
    label: &'static str,
    moment: Moment,
    lo: f64,
    hi: f64,
    expected: f64,
    exponent: f64,
    stderr: f64,
    n_points: usize,
}

fn fit_window(
    series: &MomentSeries,
    label: &'static str,
    moment: Moment,
    lo: f64,
    hi: f64,
    expected: f64,
) -> FitRow {
    let (t, v): (Vec<f64>, Vec<f64>) = series
        .times
        .iter()
        .zip(series.values(moment))
        .filter(|(&t, _)| t > 0.0 && t >= lo && t <= hi)
        .map(|(&t, &v)| (t, v))
        .unzip();
    let (exponent, stderr) = match fit_power_law(&t, &v) {
        Ok(f) => (f.exponent, f.stderr),
        Err(_) => (f64::NAN, f64::NAN),
    };
    FitRow {
        label,
        moment,
        lo,
        hi,
        expected,
        exponent,
        stderr,
        n_points: t.len(),
    }
}

fn fits_table(rows: &[FitRow]) -> Table {
    let mut table = Table::new(&[
        ("window", "-"),
        ("moment", "-"),
        ("t_lo", "s"),
        ("t_hi", "s"),
        ("n_points", "1"),
        ("exponent", "1"),
        ("stderr", "1"),
        ("expected", "1"),
    ]);
    for r in rows {
        table.push(&[
            r.label.into(),
            r.moment.name().into(),
            r.lo.into(),
            r.hi.into(),
            r.n_points.into(),
            r.exponent.into(),
            r.stderr.into(),
            r.expected.into(),
        ]);
    }
    table
}

pub fn params(_s: &mut Settings, params: &CslParameters) -> Result<Outcome> {
    let d = derive(params);
    let mut out = Outcome::default();
    let mut cols = vec![
        ("alpha", "cm^-2"),
        ("lambda", "1/s"),
        ("mass", "g"),
        ("hbar", "erg*s"),
    ];
    cols.extend(d.rows().iter().map(|(n, _, u)| (*n, *u)));
    let mut table = Table::new(&cols);
    let mut row: Vec<Cell> = vec![
        params.alpha.into(),
        params.lambda.into(),
        params.mass.into(),
        params.hbar.into(),
    ];
    row.extend(d.rows().iter().map(|(_, v, _)| Cell::Float(*v)));
    table.push(&row);
    out.file("derived.csv", table);
    for (name, value, unit) in d.rows() {
        out.summary
            .push(format!("{name:<12} {value:>14.6e}  {unit}"));
        out.note(name, value);
    }
    Ok(out)
}

pub fn simulate(s: &mut Settings, params: &CslParameters) -> Result<Outcome> {
    let packet = packet(s, params)?;
    let cfg = ensemble_config(s)?;
    let n_paths: usize = s.get("n_paths")?;
    let (series, paths) = run_ensemble_with_paths(&cfg, &packet, params, n_paths)?;
    let mut out = Outcome::default();
    out.file("moments.csv", moments_table(&series, params));

    let mut table = Table::new(&[("path", "1"), ("t", "s"), ("x", "cm"), ("p", "g*cm/s")]);
    for path in &paths {
        for ((t, x), p) in series.times.iter().zip(&path.x).zip(&path.p) {
            table.push(&[path.index.into(), (*t).into(), (*x).into(), (*p).into()]);
        }
    }
    out.file("paths.csv", table);

    let t_enh = crossover_time(params);
    let dt = cfg.dt();
    let fits = [
        fit_window(&series, "brownian", Moment::VarX, dt, t_enh / 3.0, 1.0),
        fit_window(
            &series,
            "richardson",
            Moment::VarX,
            3.0 * t_enh,
            cfg.t_final,
            3.0,
        ),
    ];
    for f in &fits {
        out.note(&format!("{}_exponent", f.label), f.exponent);
    }
    out.file("fits.csv", fits_table(&fits));

    let i = &cfg.integrator;
    let law_applies = i.drift == DriftMode::DriftFree
        && i.scheme != Scheme::EulerMaruyama
        && !i.shares_noise()
        && cfg.fractional_a.is_none()
        && packet.x_mean == 0.0;
    if law_applies && series.n_traj >= 2 {
        let chi2 = reduced_chi_square(&series, Moment::VarX, |t| msd_theory(t, params))?;
        out.checks.push(Check::at_most(
            "var_x_reduced_chi_square",
            chi2,
            MAX_REDUCED_CHI2,
        ));
    }
    let last = series.len() - 1;
    out.note("var_x_final", series.var_x[last]);
    out.note("msd_theory_final", msd_theory(series.times[last], params));
    out.summary.push(format!(
        "var_x({:e} s) = {:e} cm^2, theory {:e} cm^2",
        series.times[last],
        series.var_x[last],
        msd_theory(series.times[last], params)
    ));
    Ok(out)
}

pub fn scaling(s: &mut Settings, params: &CslParameters) -> Result<Outcome> {
    let packet = packet(s, params)?;
    let cfg = ensemble_config(s)?;
    let a = cfg.fractional_a.unwrap_or(1.0);
    let t_final = cfg.t_final;
    let dt = cfg.dt();
    let p_lo = s.f64_or("p_fit_lo", || Ok(dt))?;
    let p_hi = s.f64_or("p_fit_hi", || Ok(t_final))?;
    let x_lo = s.f64_or("x_fit_lo", || Ok(0.2 * t_final))?;
    let x_hi = s.f64_or("x_fit_hi", || Ok(t_final))?;
    let series = run_ensemble(&cfg, &packet, params)?;
    let fits = [
        fit_window(&series, "momentum", Moment::VarP, p_lo, p_hi, a),
        fit_window(&series, "enhanced", Moment::VarX, x_lo, x_hi, a + 2.0),
    ];
    let mut out = Outcome::default();
    out.file("moments.csv", moments_table(&series, params));
    out.file("fits.csv", fits_table(&fits));
    out.checks.push(Check::within(
        "var_p_exponent",
        fits[0].exponent,
        a,
        P_EXPONENT_TOL,
    ));
    out.checks.push(Check::within(
        "var_x_exponent",
        fits[1].exponent,
        a + 2.0,
        X_EXPONENT_TOL,
    ));
    for f in &fits {
        out.summary.push(format!(
            "{} exponent {:.4} +/- {:.4} (expected {})",
            f.moment.name(),
            f.exponent,
            f.stderr,
            f.expected
        ));
    }
    Ok(out)
}

fn parse_kinetic(s: &str) -> Result<Kinetic> {
    match s {
        "full" => Ok(Kinetic::Full),
        "literal" => Ok(Kinetic::Literal),
        other => bail!("setting `kinetic` = `{other}`: expected full or literal"),
    }
}

pub fn fpe(s: &mut Settings, params: &CslParameters, compare: bool) -> Result<Outcome> {
    let packet = packet(s, params)?;
    let cfg = ensemble_config(s)?;
    cfg.validate()?;
    let options = FpeOptions {
        kinetic: parse_kinetic(s.raw("kinetic")?)?,
        shared_noise: cfg.integrator.shares_noise(),
    };
    let state0 = MomentState::point(packet.x_mean, packet.p_mean);
    let dt = cfg.dt();
    let times: Vec<f64> = cfg.record_steps().iter().map(|&k| k as f64 * dt).collect();

    let mut out = Outcome::default();
    let mut cols: Vec<(&str, &str)> = vec![("t", "s")];
    cols.extend(Moment::ALL.iter().map(|&m| (m.name(), unit(m))));
    cols.push(("msd_theory", "cm^2"));
    cols.push(("cross_term", "cm^2"));
    let mut table = Table::new(&cols);
    for &t in &times {
        let m = evolve_moments(&state0, params, t, options)?;
        let mut row: Vec<Cell> = vec![t.into()];
        row.extend(Moment::ALL.iter().map(|&k| Cell::Float(m.get(k))));
        row.push(msd_theory(t, params).into());
        row.push(cross_term_msd(params, t).into());
        table.push(&row);
    }
    out.file("analytic.csv", table);

    if compare {
        let series = run_ensemble(&cfg, &packet, params)?;
        let report = compare_to_ensemble(&series, params, &state0, options)?;
        out.file("moments.csv", moments_table(&series, params));
        let mut cols: Vec<(String, String)> = vec![("t".into(), "s".into())];
        cols.extend(
            Moment::ALL
                .iter()
                .map(|m| (format!("z_{}", m.name()), "1".to_string())),
        );
        let refs: Vec<(&str, &str)> = cols.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let mut table = Table::new(&refs);
        for &t in &series.times {
            let mut row: Vec<Cell> = vec![t.into()];
            for mz in &report.per_moment {
                let z = mz
                    .times
                    .iter()
                    .position(|&u| u == t)
                    .map_or(f64::NAN, |i| mz.z[i]);
                row.push(z.into());
            }
            table.push(&row);
        }
        out.file("zscores.csv", table);
        out.checks
            .push(Check::at_most("max_abs_z", report.max_abs_z, MAX_Z));
        out.checks.push(Check::new(
            "checkpoints",
            report.checkpoints >= MIN_CHECKPOINTS,
            report.checkpoints as f64,
            format!(">= {MIN_CHECKPOINTS}"),
        ));
        out.summary.push(format!(
            "max |z| = {:.3} over {} checkpoints",
            report.max_abs_z, report.checkpoints
        ));
    }
    Ok(out)
}

pub fn beable(s: &mut Settings, params: &CslParameters) -> Result<Outcome> {
    let packet = packet(s, params)?;
    let tau = spreading_time(&packet, params);
    let sd = packet.var_x.sqrt();
    let spacing = s.f64_or("spacing", || Ok(sd / 8.0))?;
    let geometry = LatticeGeometry::centered(packet.x_mean, spacing, s.get("n_sites")?)?;
    let homogeneous = if s.flag("homogeneous")? {
        let sigma: f64 = s.get("sigma")?;
        let rate_scale = s.f64_or("rate_scale", || {
            Ok(HomogeneousSpec::nelson(params, spacing, sigma)?.rate_scale)
        })?;
        Some(HomogeneousSpec::new(sigma, rate_scale)?)
    } else {
        None
    };
    let config = BeableConfig {
        geometry,
        n_walkers: s.get("n_walkers")?,
        t_final: s.f64_or("t_final", || Ok(3.0 * tau))?,
        dt: s.f64_or("dt", || Ok(tau / 2000.0))?,
        checkpoints: s.get("checkpoints")?,
        gradient: s.get::<PhaseGradient>("phase_gradient")?,
        homogeneous,
        master_seed: s.seed(),
    };
    let snapshots = run_equivariance(&config, &packet, params)?;

    let mut out = Outcome::default();
    let positions = geometry.positions();
    let mut table = Table::new(&[
        ("t", "s"),
        ("x", "cm"),
        ("probability", "1"),
        ("walker_fraction", "1"),
    ]);
    for snap in &snapshots {
        let n: u64 = snap.histogram.iter().sum();
        for ((x, p), c) in positions
            .iter()
            .zip(&snap.probabilities)
            .zip(&snap.histogram)
        {
            table.push(&[
                snap.t.into(),
                (*x).into(),
                (*p).into(),
                (*c as f64 / n as f64).into(),
            ]);
        }
    }
    out.file("snapshots.csv", table);

    let mut table = Table::new(&[
        ("t", "s"),
        ("chi_square", "1"),
        ("dof", "1"),
        ("quantile_99", "1"),
        ("passed", "1"),
        ("walker_variance", "cm^2"),
        ("wave_variance", "cm^2"),
    ]);
    let mut worst = 0.0f64;
    let mut all_in_band = true;
    for snap in &snapshots {
        let c = &snap.chi_square;
        table.push(&[
            snap.t.into(),
            c.statistic.into(),
            c.dof.into(),
            c.quantile_99.into(),
            (c.passed() as u64).into(),
            snap.walker_variance.into(),
            snap.wave_variance.into(),
        ]);
        worst = worst.max(c.statistic / c.quantile_99);
        all_in_band &= c.passed();
    }
    out.file("checks.csv", table);
    out.checks.push(Check::new(
        "chi_square_in_99_band",
        all_in_band,
        worst,
        "statistic / quantile_99 <= 1 at every checkpoint",
    ));

    // Drift field at t = 0 under frozen rates, on an independent walker
    // population.
    let fp = FreePacket::new(&packet, params)?;
    let rates = transition_rates(&fp, params, &config, 0.0)?;
    let wave0 = free_packet_wave_from(&fp, 0.0, geometry)?;
    let mut walkers = WalkerEnsemble::sample(
        &wave0.probabilities(),
        config.n_walkers,
        s.seed().wrapping_add(1),
    )?;
    let bin: usize = s.get("drift_bin")?;
    let field = estimate_drift_field(
        &mut walkers,
        &rates,
        &geometry,
        config.dt,
        s.get("drift_steps")?,
        bin,
    )
    .context("drift field")?;
    let bsa2 = homogeneous.map_or(0.0, |h| h.beta_sigma_a2(spacing));
    let expected = rates.expected_drift(spacing);
    let window: f64 = s.get("drift_window")?;
    let mut table = Table::new(&[
        ("x", "cm"),
        ("drift", "cm/s"),
        ("stderr", "cm/s"),
        ("rate_drift", "cm/s"),
        ("nelson", "cm/s"),
        ("counts", "1"),
    ]);
    let (mut num, mut den, mut num_rates) = (0.0, 0.0, 0.0);
    for b in 0..field.x.len() {
        let x = field.x[b];
        let nelson = nelson_drift_from(&fp, params, x, 0.0, bsa2);
        let sites = &expected[b * bin..((b + 1) * bin).min(expected.len())];
        let rate_drift = sites.iter().sum::<f64>() / sites.len() as f64;
        table.push(&[
            x.into(),
            field.drift[b].into(),
            field.stderr[b].into(),
            rate_drift.into(),
            nelson.into(),
            field.counts[b].into(),
        ]);
        if (x - packet.x_mean).abs() <= window * sd {
            num += (field.drift[b] - nelson).powi(2);
            num_rates += (rate_drift - nelson).powi(2);
            den += nelson * nelson;
        }
    }
    out.file("drift.csv", table);
    let rms = (num / den).sqrt();
    out.note("drift_rms_rates", (num_rates / den).sqrt());
    out.checks
        .push(Check::at_most("drift_relative_rms", rms, MAX_DRIFT_RMS));
    out.summary.push(format!(
        "worst chi-square/quantile {worst:.3}, drift relative RMS {rms:.4}"
    ));
    Ok(out)
}

pub fn burgers(s: &mut Settings, params: &CslParameters, deterministic: bool) -> Result<Outcome> {
    let mut out = Outcome::default();
    if deterministic {
        let base = RefinementConfig::default();
        let config = RefinementConfig {
            nu: s.get("refine_nu")?,
            amplitude: s.get("refine_amplitude")?,
            t_final: s.get("refine_t_final")?,
            base_steps: s.get("refine_base_steps")?,
            ..base
        };
        let report = refinement_study(&config)?;
        let mut table = Table::new(&[
            ("n_grid", "1"),
            ("dx", "cm"),
            ("dt", "s"),
            ("discrepancy", "cm/s"),
        ]);
        for ((n, dt), e) in report.grids.iter().zip(&report.dt).zip(&report.discrepancy) {
            table.push(&[
                (*n).into(),
                (config.length / *n as f64).into(),
                (*dt).into(),
                (*e).into(),
            ]);
        }
        out.file("refinement.csv", table);
        let (lo, hi) = ORDER_RANGE;
        out.checks.push(Check::new(
            "convergence_order",
            report.order >= lo && report.order <= hi,
            report.order,
            format!("[{lo}, {hi}]"),
        ));
        out.summary
            .push(format!("convergence order {:.4}", report.order));
        return Ok(out);
    }

    let dict = ForcedRunConfig::from_params(params, s.seed())?;
    let n_grid: usize = s.get("n_grid")?;
    let epsilon = s.f64_or("epsilon", || Ok(dict.forcing.epsilon))?;
    let delta = s.f64_or("delta", || Ok(dict.forcing.delta))?;
    let nu = s.f64_or("nu", || Ok(dict.nu))?;
    let length = s.f64_or("length", || Ok(16.0 * delta))?;
    let grid = SpectralGrid::new(n_grid, length)?;
    let dt = s.f64_or("dt", || {
        Ok(stable_dt(
            &grid,
            (epsilon * delta * delta / nu).sqrt(),
            nu,
            0.25,
        ))
    })?;
    let config = ForcedRunConfig {
        n_grid,
        length,
        nu,
        forcing: ForcingSpec::new(epsilon, delta)?,
        sign: s.get::<PotentialGradientSign>("sign")?,
        dt,
        burn_in_steps: s.get("burn_in_steps")?,
        n_steps: s.get("n_steps")?,
        sample_every: s.get("sample_every")?,
        master_seed: s.seed(),
        realization: s.get("realization")?,
    };
    let run = run_forced(&config)?;

    let positions = grid.positions();
    let mut table = Table::new(&[
        ("t", "s"),
        ("x", "cm"),
        ("v", "cm/s"),
        ("z", "1"),
        ("h", "cm^2/s"),
    ]);
    for snap in &run.snapshots {
        for (i, x) in positions.iter().enumerate() {
            table.push(&[
                snap.t.into(),
                (*x).into(),
                snap.v.values[i].into(),
                snap.z.values[i].into(),
                snap.h.values[i].into(),
            ]);
        }
    }
    out.file("fields.csv", table);

    // Time-averaged energy spectrum over the snapshots after t = 0.
    let half = n_grid / 2;
    let mut energy = vec![0.0; half + 1];
    let later: Vec<_> = run.snapshots.iter().filter(|s| s.t > 0.0).collect();
    for snap in &later {
        let spec = grid.forward(&snap.v.values);
        for (k, e) in energy.iter_mut().enumerate() {
            let mut c = spec[k].norm_sqr() / (n_grid * n_grid) as f64;
            if k != 0 && k != half {
                c *= 2.0;
            }
            *e += 0.5 * c / later.len().max(1) as f64;
        }
    }
    let mut table = Table::new(&[("k", "1/cm"), ("energy", "cm^2/s^2")]);
    for (k, e) in energy.iter().enumerate() {
        table.push(&[grid.wavenumbers()[k].abs().into(), (*e).into()]);
    }
    out.file("spectrum.csv", table);

    out.note("dissipation", run.dissipation);
    out.note("dissipation_stderr", run.dissipation_stderr);
    out.note("injection", run.injection);
    let finite = run
        .snapshots
        .iter()
        .all(|s| s.v.values.iter().all(|v| v.is_finite()));
    out.checks.push(Check::new(
        "velocity_finite",
        finite,
        finite as u64 as f64,
        "all values finite",
    ));
    out.summary.push(format!(
        "dissipation {:e} +/- {:e}, injection {:e} cm^2/s^3",
        run.dissipation, run.dissipation_stderr, run.injection
    ));
    Ok(out)
}
