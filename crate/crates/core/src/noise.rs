//! Stochastic inputs: the Gaussian localization kernel, the accumulated
//! white-noise lattice B(z, t) behind the nonlocal collapse velocity, its
//! scalar Brownian reduction, and fractional (affine) noise increments.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::params::CslParameters;

/// Lattice half-width in localization lengths 1/√α.
pub const LATTICE_HALF_WIDTH: f64 = 8.0;
/// Lattice points per localization length.
pub const POINTS_PER_LENGTH: f64 = 8.0;
/// Kernel support that must stay inside the lattice, in localization lengths.
pub const KERNEL_SUPPORT: f64 = 6.0;

/// G(x − z) = √(α/2π)·exp(−α(x − z)²/2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernel {
    alpha: f64,
    norm: f64,
}

impl GaussianKernel {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::param("alpha", format!("must be > 0, got {alpha:e}")));
        }
        Ok(GaussianKernel {
            alpha,
            norm: (alpha / (2.0 * std::f64::consts::PI)).sqrt(),
        })
    }

    pub fn from_params(params: &CslParameters) -> Self {
        // CslParameters already guarantees alpha > 0.
        Self::new(params.alpha).expect("validated alpha")
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Localization length 1/√α.
    pub fn length(&self) -> f64 {
        self.alpha.sqrt().recip()
    }

    pub fn value(&self, x: f64, z: f64) -> f64 {
        let d = x - z;
        self.norm * (-0.5 * self.alpha * d * d).exp()
    }

    /// −α(x − z)·G(x − z), the x-derivative of [`value`](Self::value).
    pub fn gradient(&self, x: f64, z: f64) -> f64 {
        -self.alpha * (x - z) * self.value(x, z)
    }
}

/// Time-integrated white noise B_j = ∫₀ᵗ w(z_j, t′) dt′ on a uniform grid.
///
/// Each site is an independent Brownian motion with variance rate 1/dz, the
/// lattice discretization of δ(z − z′).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseLattice {
    z_min: f64,
    dz: f64,
    sites: Vec<f64>,
    increments: Vec<f64>,
    last_dt: f64,
    t_accum: f64,
    stream: u64,
}

impl NoiseLattice {
    pub fn new(z_min: f64, z_max: f64, dz: f64, stream: u64) -> Result<Self> {
        if !(dz.is_finite() && dz > 0.0) {
            return Err(Error::param("dz", format!("must be > 0, got {dz:e}")));
        }
        if !(z_max > z_min) {
            return Err(Error::param("z_max", "must exceed z_min"));
        }
        let n = ((z_max - z_min) / dz).round() as usize + 1;
        Ok(NoiseLattice {
            z_min,
            dz,
            sites: vec![0.0; n],
            increments: vec![0.0; n],
            last_dt: 0.0,
            t_accum: 0.0,
            stream,
        })
    }

    /// Lattice covering x0 ± 8/√α at eight points per localization length.
    pub fn centered(x0: f64, kernel: &GaussianKernel, stream: u64) -> Self {
        let ell = kernel.length();
        let half = LATTICE_HALF_WIDTH * ell;
        Self::new(x0 - half, x0 + half, ell / POINTS_PER_LENGTH, stream)
            .expect("positive kernel length")
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    pub fn z_min(&self) -> f64 {
        self.z_min
    }

    pub fn z_max(&self) -> f64 {
        self.z(self.sites.len() - 1)
    }

    pub fn z(&self, j: usize) -> f64 {
        self.z_min + j as f64 * self.dz
    }

    pub fn sites(&self) -> &[f64] {
        &self.sites
    }

    /// Increments ΔB_j drawn by the most recent advance.
    pub fn last_increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn t_accum(&self) -> f64 {
        self.t_accum
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Adds an independent N(0, dt/dz) increment to every site.
    pub fn advance<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) -> Result<&[f64]> {
        self.advance_scaled(dt, 1.0, rng)
    }

    /// As [`advance`](Self::advance) with the variance multiplied by `intensity`
    /// (fractional noise uses t^(A−1) here).
    pub fn advance_scaled<R: Rng + ?Sized>(
        &mut self,
        dt: f64,
        intensity: f64,
        rng: &mut R,
    ) -> Result<&[f64]> {
        check_dt(dt)?;
        let sd = (intensity * dt / self.dz).sqrt();
        for (b, inc) in self.sites.iter_mut().zip(self.increments.iter_mut()) {
            let xi: f64 = rng.sample(StandardNormal);
            *inc = sd * xi;
            *b += *inc;
        }
        self.last_dt = dt;
        self.t_accum += dt;
        Ok(&self.increments)
    }

    /// Positions where the kernel support lies inside the lattice.
    pub fn supported_window(&self, kernel: &GaussianKernel) -> (f64, f64) {
        let margin = KERNEL_SUPPORT * kernel.length();
        (self.z_min + margin, self.z_max() - margin)
    }

    fn check_support(&self, kernel: &GaussianKernel, x: f64) -> Result<()> {
        let (lo, hi) = self.supported_window(kernel);
        if x < lo || x > hi || !x.is_finite() {
            return Err(Error::OutOfDomain { x, lo, hi });
        }
        Ok(())
    }

    fn gradient_sum(&self, values: &[f64], kernel: &GaussianKernel, x: f64) -> f64 {
        values
            .iter()
            .enumerate()
            .map(|(j, b)| b * kernel.gradient(x, self.z(j)))
            .sum::<f64>()
            * self.dz
    }

    fn value_sum(&self, values: &[f64], kernel: &GaussianKernel, x: f64) -> f64 {
        values
            .iter()
            .enumerate()
            .map(|(j, b)| b * kernel.value(x, self.z(j)))
            .sum::<f64>()
            * self.dz
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::param("dt", format!("must be > 0, got {dt:e}")))
    }
}

/// Nonlocal collapse velocity 2ν√γ·Σ_j B_j·(−α(x − z_j))·G(x − z_j)·dz.
pub fn csl_velocity(
    lattice: &NoiseLattice,
    kernel: &GaussianKernel,
    params: &CslParameters,
    x: f64,
) -> Result<f64> {
    lattice.check_support(kernel, x)?;
    let coupling = 2.0 * params.nu() * params.gamma().sqrt();
    Ok(coupling * lattice.gradient_sum(&lattice.sites, kernel, x))
}

/// Change of [`csl_velocity`] at fixed x produced by the last lattice advance.
pub fn csl_velocity_increment(
    lattice: &NoiseLattice,
    kernel: &GaussianKernel,
    params: &CslParameters,
    x: f64,
) -> Result<f64> {
    lattice.check_support(kernel, x)?;
    let coupling = 2.0 * params.nu() * params.gamma().sqrt();
    Ok(coupling * lattice.gradient_sum(&lattice.increments, kernel, x))
}

/// Potential φ(x) = 2ν√γ·Σ_j (ΔB_j/dt)·G(x − z_j)·dz of the last advance.
///
/// Its covariance between two probe points is 4ν²λ·exp(−α(x − x′)²/4)/dt.
pub fn collapse_potential(
    lattice: &NoiseLattice,
    kernel: &GaussianKernel,
    params: &CslParameters,
    x: f64,
) -> Result<f64> {
    lattice.check_support(kernel, x)?;
    if lattice.last_dt <= 0.0 {
        return Ok(0.0);
    }
    let coupling = 2.0 * params.nu() * params.gamma().sqrt();
    Ok(coupling * lattice.value_sum(&lattice.increments, kernel, x) / lattice.last_dt)
}

/// Increment of the scalar velocity process equivalent in law to
/// [`csl_velocity`] at a fixed point: N(0, 2αλν²·dt).
pub fn effective_velocity_increment<R: Rng + ?Sized>(
    params: &CslParameters,
    dt: f64,
    rng: &mut R,
) -> Result<f64> {
    check_dt(dt)?;
    let xi: f64 = rng.sample(StandardNormal);
    Ok((params.velocity_diffusion() * dt).sqrt() * xi)
}

/// Fractional Brownian noise ⟨w w′⟩ = t^(A−1)·δ(t − t′).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalNoiseSpec {
    a: f64,
}

impl FractionalNoiseSpec {
    pub fn new(a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::param("A", format!("must be > 0, got {a:e}")));
        }
        Ok(FractionalNoiseSpec { a })
    }

    pub fn exponent(&self) -> f64 {
        self.a
    }

    /// Variance multiplier for the step [t, t + dt], evaluated at the midpoint.
    pub fn intensity(&self, t: f64, dt: f64) -> f64 {
        (t + 0.5 * dt).powf(self.a - 1.0)
    }
}

/// Centered Gaussian with variance (t + dt/2)^(A−1)·dt.
pub fn fractional_increment<R: Rng + ?Sized>(
    spec: &FractionalNoiseSpec,
    t: f64,
    dt: f64,
    rng: &mut R,
) -> Result<f64> {
    check_dt(dt)?;
    if !(t >= 0.0) {
        return Err(Error::param("t", format!("must be >= 0, got {t:e}")));
    }
    let xi: f64 = rng.sample(StandardNormal);
    Ok((spec.intensity(t, dt) * dt).sqrt() * xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Preset;
    use crate::rng::{substream, Domain};
    use approx::assert_relative_eq;

    fn macro_params() -> CslParameters {
        CslParameters::preset(Preset::GrwMacro)
    }

    /// Sample variance and its standard error (normal-theory, 2σ⁴/(n−1)).
    fn var_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (v, v * (2.0 / (n - 1.0)).sqrt())
    }

    #[test]
    fn kernel_peak_and_tail() {
        let k = GaussianKernel::new(1e10).unwrap();
        // √(1e10/2π)
        assert_relative_eq!(k.value(0.3, 0.3), 39894.22804014327, max_relative = 1e-12);
        assert_eq!(k.value(0.0, 1.0), 0.0);
        assert_eq!(k.value(1e-5, 0.0), k.value(0.0, 1e-5));
        assert!(GaussianKernel::new(0.0).is_err());
    }

    #[test]
    fn kernel_integrates_to_one() {
        let k = GaussianKernel::new(1e10).unwrap();
        let ell = k.length();
        let n = 4000;
        let (lo, hi) = (-12.0 * ell, 12.0 * ell);
        let h = (hi - lo) / n as f64;
        let mut sum = 0.5 * (k.value(0.0, lo) + k.value(0.0, hi));
        for i in 1..n {
            sum += k.value(0.0, lo + i as f64 * h);
        }
        assert!((sum * h - 1.0).abs() < 1e-6);
    }

    #[test]
    fn kernel_gradient_matches_finite_difference() {
        let k = GaussianKernel::new(1e10).unwrap();
        let ell = k.length();
        assert_eq!(k.gradient(2.0, 2.0), 0.0);
        for &x in &[ell, -ell] {
            let h = 1e-4 * ell;
            let fd = (k.value(x + h, 0.0) - k.value(x - h, 0.0)) / (2.0 * h);
            assert_relative_eq!(k.gradient(x, 0.0), fd, max_relative = 1e-6);
            assert_eq!(k.gradient(x, 0.0), -k.gradient(0.0, x));
        }
    }

    #[test]
    fn lattice_geometry() {
        let k = GaussianKernel::new(1e10).unwrap();
        let lat = NoiseLattice::centered(0.0, &k, 0);
        assert_eq!(lat.len(), 129);
        assert_relative_eq!(lat.z_max(), 8e-5, max_relative = 1e-12);
        assert!(NoiseLattice::new(0.0, 1.0, 0.0, 0).is_err());
        let (lo, hi) = lat.supported_window(&k);
        assert_relative_eq!(lo, -2e-5, max_relative = 1e-9);
        assert_relative_eq!(hi, 2e-5, max_relative = 1e-9);
    }

    #[test]
    fn lattice_rejects_bad_dt_and_is_deterministic() {
        let k = GaussianKernel::new(1e10).unwrap();
        let mut a = NoiseLattice::centered(0.0, &k, 5);
        let mut b = a.clone();
        let mut ra = substream(1, Domain::Lattice, 5);
        let mut rb = substream(1, Domain::Lattice, 5);
        assert!(a.advance(0.0, &mut ra).is_err());
        assert!(a.sites().iter().all(|&v| v == 0.0));
        for _ in 0..10 {
            a.advance(3.0, &mut ra).unwrap();
            b.advance(3.0, &mut rb).unwrap();
        }
        assert_eq!(a, b);
        assert_eq!(a.t_accum(), 30.0);
    }

    #[test]
    fn lattice_site_variance() {
        let k = GaussianKernel::new(1e10).unwrap();
        let mut lat = NoiseLattice::centered(0.0, &k, 0);
        let mut rng = substream(2, Domain::Lattice, 0);
        let mut samples = Vec::new();
        let (steps, dt) = (20, 0.5);
        for _ in 0..200 {
            lat = NoiseLattice::centered(0.0, &k, 0);
            for _ in 0..steps {
                lat.advance(dt, &mut rng).unwrap();
            }
            samples.extend_from_slice(lat.sites());
        }
        let (v, se) = var_and_se(&samples);
        let expect = steps as f64 * dt / lat.dz();
        assert!(
            (v - expect).abs() < 5.0 * se,
            "{v:e} vs {expect:e} ± {se:e}"
        );
    }

    #[test]
    fn fresh_lattice_has_no_velocity() {
        let p = macro_params();
        let k = GaussianKernel::from_params(&p);
        let lat = NoiseLattice::centered(0.0, &k, 0);
        assert_eq!(csl_velocity(&lat, &k, &p, 0.0).unwrap(), 0.0);
        assert!(matches!(
            csl_velocity(&lat, &k, &p, 5e-5),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn velocity_is_continuous_in_x() {
        let p = macro_params();
        let k = GaussianKernel::from_params(&p);
        let mut lat = NoiseLattice::centered(0.0, &k, 0);
        let mut rng = substream(3, Domain::Lattice, 0);
        lat.advance(1.0, &mut rng).unwrap();
        let v0 = csl_velocity(&lat, &k, &p, 0.0).unwrap();
        let mut prev = f64::INFINITY;
        for e in 1..6 {
            let d = 10f64.powi(-6 - e);
            let dv = (csl_velocity(&lat, &k, &p, d).unwrap() - v0).abs();
            assert!(dv <= prev);
            prev = dv;
        }
        assert!(prev < 1e-3 * v0.abs().max(1e-300));
    }

    /// ⟨v²⟩ = 4ν²γt·α²∫z²G(z)²dz; the quadrature must reduce to 2αλν²t.
    #[test]
    fn velocity_variance_quadrature_identity() {
        let p = macro_params();
        let k = GaussianKernel::from_params(&p);
        let ell = k.length();
        let n = 20000;
        let h = 24.0 * ell / n as f64;
        let integral: f64 = (0..=n)
            .map(|i| {
                let z = -12.0 * ell + i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * k.gradient(z, 0.0).powi(2)
            })
            .sum::<f64>()
            * h;
        let nu = p.nu();
        assert_relative_eq!(
            4.0 * nu * nu * p.gamma() * integral,
            p.velocity_diffusion(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn field_and_effective_velocity_agree_in_law() {
        let p = macro_params();
        let k = GaussianKernel::from_params(&p);
        let (steps, dt, n) = (10, 1e4, 2000);
        let mut field = Vec::with_capacity(n);
        let mut effective = Vec::with_capacity(n);
        for i in 0..n as u64 {
            let mut rng = substream(9, Domain::Lattice, i);
            let mut lat = NoiseLattice::centered(0.0, &k, i);
            let mut v = 0.0;
            for _ in 0..steps {
                lat.advance(dt, &mut rng).unwrap();
                v += effective_velocity_increment(&p, dt, &mut rng).unwrap();
            }
            field.push(csl_velocity(&lat, &k, &p, 1e-6).unwrap());
            effective.push(v);
        }
        let t = steps as f64 * dt;
        let expect = p.velocity_diffusion() * t;
        let (vf, sf) = var_and_se(&field);
        let (ve, se) = var_and_se(&effective);
        assert!((vf - expect).abs() < 5.0 * sf, "field {vf:e} vs {expect:e}");
        assert!(
            (ve - expect).abs() < 5.0 * se,
            "effective {ve:e} vs {expect:e}"
        );
        assert!((vf - ve).abs() < 3.0 * (sf * sf + se * se).sqrt());
    }

    #[test]
    fn potential_covariance_matches_gaussian_correlation() {
        let p = macro_params();
        let k = GaussianKernel::from_params(&p);
        let ell = k.length();
        let dt = 2.0;
        let mut lat = NoiseLattice::centered(0.0, &k, 0);
        let mut rng = substream(4, Domain::Lattice, 0);
        let probes = [-ell, -0.5 * ell, 0.0, ell];
        let n = 4000;
        let mut data = vec![Vec::with_capacity(n); probes.len()];
        for _ in 0..n {
            lat.advance(dt, &mut rng).unwrap();
            for (d, &x) in data.iter_mut().zip(&probes) {
                d.push(collapse_potential(&lat, &k, &p, x).unwrap());
            }
        }
        let nu = p.nu();
        for (i, &x) in probes.iter().enumerate() {
            let prods: Vec<f64> = data[0].iter().zip(&data[i]).map(|(a, b)| a * b).collect();
            let m = prods.iter().sum::<f64>() / n as f64;
            let sd = (prods.iter().map(|q| (q - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
            let se = sd / (n as f64).sqrt();
            let lag = x - probes[0];
            let expect = 4.0 * nu * nu * p.lambda * (-p.alpha * lag * lag / 4.0).exp() / dt;
            assert!(
                (m - expect).abs() < 5.0 * se,
                "lag {x:e}: {m:e} vs {expect:e} ± {se:e}"
            );
        }
    }

    #[test]
    fn effective_increment_properties() {
        let p = macro_params();
        let mut rng = substream(5, Domain::Tracer, 0);
        assert!(effective_velocity_increment(&p, -1.0, &mut rng).is_err());
        assert_eq!(
            effective_velocity_increment(&p.with_lambda(0.0), 1.0, &mut rng).unwrap(),
            0.0
        );
        let draw = |s| {
            let mut r = substream(5, Domain::Tracer, s);
            (0..4)
                .map(|_| effective_velocity_increment(&p, 1.0, &mut r).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(1), draw(1));
        let (n, steps, dt) = (4000, 20, 10.0);
        let vs: Vec<f64> = (0..n)
            .map(|_| {
                (0..steps)
                    .map(|_| effective_velocity_increment(&p, dt, &mut rng).unwrap())
                    .sum()
            })
            .collect();
        let (v, se) = var_and_se(&vs);
        let expect = p.velocity_diffusion() * steps as f64 * dt;
        assert!((v - expect).abs() < 5.0 * se);
    }

    #[test]
    fn fractional_increments() {
        assert!(FractionalNoiseSpec::new(0.0).is_err());
        let white = FractionalNoiseSpec::new(1.0).unwrap();
        assert_eq!(white.intensity(123.0, 0.1), 1.0);
        let two = FractionalNoiseSpec::new(2.0).unwrap();
        // midpoint of the first step is dt/2
        assert_eq!(two.intensity(0.0, 0.2) * 0.2, 0.1 * 0.2);
        let mut rng = substream(6, Domain::Tracer, 0);
        assert!(fractional_increment(&two, 0.0, 0.0, &mut rng).is_err());

        for &a in &[0.7, 1.5] {
            let spec = FractionalNoiseSpec::new(a).unwrap();
            let (n, steps, dt) = (3000, 200, 0.05);
            let total = steps as f64 * dt;
            let sums: Vec<f64> = (0..n)
                .map(|_| {
                    (0..steps)
                        .map(|i| {
                            fractional_increment(&spec, i as f64 * dt, dt, &mut rng)
                                .unwrap()
                                .powi(2)
                        })
                        .sum()
                })
                .collect();
            let m = sums.iter().sum::<f64>() / n as f64;
            let sd = (sums.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
            let expect = total.powf(a) / a;
            // midpoint rule carries an O(dt^A) bias from the first step
            let bias = (0.5 * dt).powf(a - 1.0) * dt - dt.powf(a) / a;
            assert!(
                (m - expect - bias).abs() < 5.0 * sd / (n as f64).sqrt(),
                "A={a}: {m} vs {expect}"
            );
        }
    }
}
