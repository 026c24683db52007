//! End-to-end acceptance checks. Runs the `csl-turb` binary for each
//! scenario, recomputes the quantity of interest from the emitted CSV with
//! formulas written out here, and prints one PASS/FAIL line per criterion.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use csl_turb::burgers::{ForcingSampler, ForcingSpec, SpectralGrid};
use csl_turb::rng::{substream, Domain};
use csl_turb::{CslParameters, Preset};
use csl_turb_cli::csv;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const HBAR: f64 = 1.0545887e-27;
const ALPHA: f64 = 1e10;
const MACRO_LAMBDA: f64 = 1e7;
const MACRO_MASS: f64 = 1.0;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

struct Run {
    dir: PathBuf,
    status: i32,
}

/// Runs the binary into a fresh subdirectory of `out` and returns the run
/// directory it created.
fn cli(out: &Path, threads: usize, args: &[&str]) -> Run {
    let before: Vec<PathBuf> = list(out);
    let output = Command::new(env!("CARGO_BIN_EXE_csl-turb"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("THREADS", threads.to_string())
        .output()
        .expect("spawn csl-turb");
    if !output.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&output.stderr));
    }
    let created: Vec<PathBuf> = list(out)
        .into_iter()
        .filter(|p| !before.contains(p))
        .collect();
    assert_eq!(
        created.len(),
        1,
        "expected one new run directory for {args:?}"
    );
    Run {
        dir: created[0].clone(),
        status: output.status.code().unwrap_or(-1),
    }
}

fn list(dir: &Path) -> Vec<PathBuf> {
    std::fs::create_dir_all(dir).unwrap();
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    v.sort();
    v
}

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Csv {
    fn read(path: &Path) -> Csv {
        let text =
            std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let (header, rows) = csv::parse(&text).unwrap();
        Csv { header, rows }
    }

    fn col(&self, name: &str) -> Vec<f64> {
        let i = self
            .header
            .iter()
            .position(|h| h == name)
            .unwrap_or_else(|| panic!("no column {name}"));
        self.rows.iter().map(|r| r[i]).collect()
    }
}

fn nu(mass: f64) -> f64 {
    HBAR / (2.0 * mass)
}

/// 2νt + (2/3)αλν²t³.
fn msd(t: f64, lambda: f64, mass: f64) -> f64 {
    let n = nu(mass);
    2.0 * n * t + 2.0 / 3.0 * ALPHA * lambda * n * n * t.powi(3)
}

fn t_enh(lambda: f64, mass: f64) -> f64 {
    (3.0 / (ALPHA * lambda * nu(mass))).sqrt()
}

/// Ordinary least-squares slope of ln y on ln x.
fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn window(t: &[f64], y: &[f64], lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    t.iter()
        .zip(y)
        .filter(|(&t, _)| t > 0.0 && t >= lo && t <= hi)
        .map(|(&t, &y)| (t, y))
        .unzip()
}

fn criterion_1(out: &Path) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for preset in ["grw_macro", "grw_micro"] {
        let run = cli(out, 1, &["params", "--preset", preset]);
        let t = Csv::read(&run.dir.join("derived.csv")).col("t_enh")[0];
        let good = run.status == 0 && ((t / 2.39e5) - 1.0).abs() <= 0.01;
        ok &= good;
        parts.push(format!("{preset} t_enh={t:.4e}"));
    }
    outcome(ok, parts.join(", "))
}

const SIMULATE: &[&str] = &[
    "simulate",
    "--preset",
    "grw_macro",
    "--set",
    "n_traj=5000",
    "--set",
    "dt=1e4",
    "--set",
    "t_final=1e6",
    "--set",
    "drift=drift_free",
    "--set",
    "scheme=exact_gaussian",
];

fn criterion_2(dir: &Path) -> Outcome {
    let m = Csv::read(&dir.join("moments.csv"));
    let (t, v, se) = (m.col("t"), m.col("var_x"), m.col("se_var_x"));
    let mut sum = 0.0;
    let mut k = 0;
    for i in 0..t.len() {
        if se[i] > 0.0 {
            sum += ((v[i] - msd(t[i], MACRO_LAMBDA, MACRO_MASS)) / se[i]).powi(2);
            k += 1;
        }
    }
    let chi2 = sum / k as f64;
    let theory = msd(1e6, MACRO_LAMBDA, MACRO_MASS);
    let ok = chi2 <= 2.0 && format!("{theory:.2e}") == "1.96e-20" && k >= 100;
    outcome(
        ok,
        format!("reduced chi2={chi2:.3} over {k} checkpoints, theory(1e6 s)={theory:.4e} cm^2"),
    )
}

fn criterion_3(dir: &Path) -> Outcome {
    let m = Csv::read(&dir.join("moments.csv"));
    let (t, v) = (m.col("t"), m.col("var_x"));
    let te = t_enh(MACRO_LAMBDA, MACRO_MASS);
    let (tr, vr) = window(&t, &v, 3.0 * te, 1e6);
    let (tb, vb) = window(&t, &v, 1e4, te / 3.0);
    let (kr, kb) = (loglog_slope(&tr, &vr), loglog_slope(&tb, &vb));
    let ok = (kr - 3.0).abs() <= 0.1 && (kb - 1.0).abs() <= 0.1;
    outcome(
        ok,
        format!(
            "richardson {kr:.4} ({} pts), brownian {kb:.4} ({} pts)",
            tr.len(),
            tb.len()
        ),
    )
}

fn scaling_args(a: &'static str) -> Vec<&'static str> {
    vec![
        "scaling",
        "--preset",
        "grw_macro",
        "--A",
        a,
        "--set",
        "n_traj=10000",
    ]
}

fn criterion_4(dirs: &[(f64, PathBuf)]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (a, dir) in dirs {
        let m = Csv::read(&dir.join("moments.csv"));
        let t = m.col("t");
        let t_final = *t.last().unwrap();
        let (tp, vp) = window(&t, &m.col("var_p"), t[1], t_final);
        let (tx, vx) = window(&t, &m.col("var_x"), 0.2 * t_final, t_final);
        let (kp, kx) = (loglog_slope(&tp, &vp), loglog_slope(&tx, &vx));
        ok &= (kp - a).abs() <= 0.05
            && (kx - (a + 2.0)).abs() <= 0.1
            && m.rows.len() > 1
            && t_final > 0.0;
        parts.push(format!("A={a}: p {kp:.4}, x {kx:.4}"));
    }
    outcome(ok, parts.join("; "))
}

const FPE: &[&str] = &["fpe", "--preset", "grw_macro", "--compare"];

/// Closed-form moments from a point start (x₀, p₀) with kinetic coupling
/// and shared noise: diffusion rates ħ/M, √(ħ³αλ/2M), ħ²αλ/2.
fn fpe_oracle(t: f64, x0: f64, p0: f64) -> [f64; 5] {
    let (m, al) = (MACRO_MASS, ALPHA * MACRO_LAMBDA);
    let (dxx, dxp, dpp) = (
        HBAR / m,
        (HBAR.powi(3) * al / (2.0 * m)).sqrt(),
        HBAR * HBAR * al / 2.0,
    );
    let m_pp = dpp * t;
    let m_xp = dpp * t * t / (2.0 * m) + dxp * t;
    let m_xx = dxx * t + 2.0 / m * (dpp * t.powi(3) / (6.0 * m) + dxp * t * t / 2.0);
    [x0 + p0 / m * t, m_xx, p0, m_pp, m_xp]
}

fn criterion_5(dir: &Path) -> Outcome {
    let m = Csv::read(&dir.join("moments.csv"));
    let t = m.col("t");
    let names = ["mean_x", "var_x", "mean_p", "var_p", "cov_xp"];
    let cols: Vec<(Vec<f64>, Vec<f64>)> = names
        .iter()
        .map(|n| (m.col(n), m.col(&format!("se_{n}"))))
        .collect();
    let mut max_z: f64 = 0.0;
    let mut checkpoints = 0;
    for i in 0..t.len() {
        if t[i] <= 0.0 {
            continue;
        }
        let want = fpe_oracle(t[i], 0.0, 1e-13);
        let mut all = true;
        for (k, (v, se)) in cols.iter().enumerate() {
            if se[i] > 0.0 {
                max_z = max_z.max(((v[i] - want[k]) / se[i]).abs());
            } else {
                all = false;
            }
        }
        checkpoints += all as usize;
    }
    outcome(
        max_z <= 4.0 && checkpoints >= 20,
        format!("max |z|={max_z:.3} over {checkpoints} checkpoints"),
    )
}

fn criterion_6(out: &Path) -> Outcome {
    let var_x = 1e-20;
    let run = cli(
        out,
        1,
        &[
            "beable",
            "--preset",
            "grw_macro",
            "--set",
            "n_walkers=100000",
            "--set",
            "n_sites=512",
            "--set",
            "var_x=1e-20",
        ],
    );
    let tau = 2.0 * MACRO_MASS * var_x / HBAR;
    let checks = Csv::read(&run.dir.join("checks.csv"));
    let t = checks.col("t");
    let mut band_ok = t
        .last()
        .is_some_and(|&t| (t / (3.0 * tau) - 1.0).abs() < 1e-9);
    let mut worst: f64 = 0.0;
    for ((stat, dof), _) in checks
        .col("chi_square")
        .iter()
        .zip(checks.col("dof"))
        .zip(&t)
    {
        let q = ChiSquared::new(dof).unwrap().inverse_cdf(0.99);
        worst = worst.max(stat / q);
        band_ok &= *stat <= q;
    }
    let drift = Csv::read(&run.dir.join("drift.csv"));
    let (x, d) = (drift.col("x"), drift.col("drift"));
    let sd = var_x.sqrt();
    let (mut num, mut den) = (0.0, 0.0);
    for (x, d) in x.iter().zip(&d) {
        if x.abs() <= 2.0 * sd {
            // Forward drift of a minimal packet at rest at t = 0 with
            // diffusivity ν: ν ∂ₓ ln P = −ν x / var_x.
            let want = -nu(MACRO_MASS) * x / var_x;
            num += (d - want).powi(2);
            den += want * want;
        }
    }
    let rms = (num / den).sqrt();
    outcome(
        band_ok && rms <= 0.1,
        format!(
            "{} checkpoints, worst chi2/q99={worst:.3}, drift RMS={:.2}%",
            t.len(),
            rms * 100.0
        ),
    )
}

fn criterion_7(out: &Path) -> Outcome {
    let run = cli(
        out,
        1,
        &[
            "burgers",
            "--preset",
            "grw_macro",
            "--deterministic-hopfcole",
        ],
    );
    let r = Csv::read(&run.dir.join("refinement.csv"));
    let grids = r.col("n_grid");
    let order = loglog_slope(&r.col("dx"), &r.col("discrepancy"));
    let ok = grids == [64.0, 128.0, 256.0] && (1.8..=2.2).contains(&order);
    outcome(ok, format!("order {order:.4} on grids {grids:?}"))
}

fn criterion_8() -> Outcome {
    let params = CslParameters::preset(Preset::GrwMacro);
    let n_mass = nu(MACRO_MASS);
    let epsilon = 2.0 * n_mass * n_mass * ALPHA * MACRO_LAMBDA;
    let delta = (2.0 / ALPHA).sqrt();
    let spec = ForcingSpec::from_params(&params).unwrap();
    let n = 128;
    let grid = SpectralGrid::new(n, 16.0 * delta).unwrap();
    let sampler = ForcingSampler::new(spec, &grid).unwrap();
    let dt = 1.0;
    let samples = 10_000;
    let mut rng = substream(0xC510, Domain::Forcing, 0);
    let lags = [0usize, 8, 16];
    let mut stats = vec![Vec::with_capacity(samples); lags.len()];
    for _ in 0..samples {
        let phi = sampler.sample_potential(dt, &mut rng);
        for (k, &lag) in lags.iter().enumerate() {
            let c = (0..n)
                .map(|i| phi.values[i] * phi.values[(i + lag) % n])
                .sum::<f64>()
                / n as f64;
            stats[k].push(c);
        }
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, &lag) in lags.iter().enumerate() {
        let d = lag as f64 * grid.dx();
        let want = epsilon * delta * delta * (-d * d / (2.0 * delta * delta)).exp() / dt;
        let s = &stats[k];
        let mean = s.iter().sum::<f64>() / samples as f64;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
        let z = (mean - want) / (var / samples as f64).sqrt();
        ok &= z.abs() <= 5.0;
        parts.push(format!("lag {}Δ z={z:.2}", lag / 8));
    }
    outcome(ok, parts.join(", "))
}

/// Every CSV in the two run directories must match byte for byte.
fn same_csvs(a: &Path, b: &Path) -> Result<usize, String> {
    let mut n = 0;
    for p in list(a) {
        if p.extension().is_some_and(|e| e == "csv") {
            let name = p.file_name().unwrap();
            let x = std::fs::read(&p).unwrap();
            let y = std::fs::read(b.join(name)).map_err(|e| format!("{name:?}: {e}"))?;
            if x != y {
                return Err(format!("{} differs", p.display()));
            }
            n += 1;
        }
    }
    Ok(n)
}

fn main() -> ExitCode {
    let root = tempfile::tempdir().expect("temporary directory");
    let one = root.path().join("threads1");
    let eight = root.path().join("threads8");
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();

    results.push((
        1,
        "crossover time for both presets",
        criterion_1(&root.path().join("params")),
    ));

    let sim = cli(&one, 1, SIMULATE);
    results.push((2, "msd law at reference settings", criterion_2(&sim.dir)));
    results.push((
        3,
        "Brownian and Richardson exponents",
        criterion_3(&sim.dir),
    ));

    let scaling: Vec<(f64, Run)> = [("1.2", 1.2), ("1.5", 1.5)]
        .into_iter()
        .map(|(s, a)| (a, cli(&one, 1, &scaling_args(s))))
        .collect();
    let dirs: Vec<(f64, PathBuf)> = scaling.iter().map(|(a, r)| (*a, r.dir.clone())).collect();
    results.push((4, "intermittency exponents", criterion_4(&dirs)));

    let fpe = cli(&one, 1, FPE);
    results.push((5, "moment equations vs ensemble", criterion_5(&fpe.dir)));

    results.push((
        6,
        "beable equivariance and drift",
        criterion_6(&root.path().join("beable")),
    ));
    results.push((
        7,
        "Hopf-Cole refinement order",
        criterion_7(&root.path().join("burgers")),
    ));
    results.push((8, "forcing potential covariance", criterion_8()));

    let mut det_ok = true;
    let mut compared = 0;
    let mut detail = Vec::new();
    let mut pairs: Vec<(Vec<&str>, &Path)> =
        vec![(SIMULATE.to_vec(), &sim.dir), (FPE.to_vec(), &fpe.dir)];
    let scaling_a = [scaling_args("1.2"), scaling_args("1.5")];
    for (args, (_, run)) in scaling_a.iter().zip(&scaling) {
        pairs.push((args.clone(), &run.dir));
    }
    for (args, dir) in pairs {
        let other = cli(&eight, 8, &args);
        match same_csvs(dir, &other.dir) {
            Ok(n) => compared += n,
            Err(e) => {
                det_ok = false;
                detail.push(e);
            }
        }
    }
    detail.insert(
        0,
        format!("{compared} CSV files identical across THREADS=1/8"),
    );
    results.push((
        9,
        "thread-count determinism",
        outcome(det_ok && compared >= 10, detail.join("; ")),
    ));

    let mut failed = 0;
    for (n, name, o) in &results {
        println!(
            "{} criterion {n}: {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += !o.passed as usize;
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
