//! Feynman-Kac kernel by Monte Carlo over rescaled Brownian bridges.
//!
//! A path from `(y,s)` to `(x,t)` is written as
//! `omega(tau) = (1-u) y + u x + sqrt(t-s) alpha(u)`, `u = (tau-s)/(t-s)`,
//! where `alpha` is a bridge pinned to 0 at `u = 0` and `u = 1`. The
//! kernel is the heat kernel times the mean of `exp(-int c(omega, tau))`.
//! The bridge belongs to the Brownian motion generated by the Laplacian,
//! so its covariance is `2 (min(u,v) - u v)`.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{heat_matrix, heat_unchecked, KernelMatrix, KernelMethod, KernelSpec, Potential};
use crate::error::{FkError, Result};
use crate::numerics::{Grid, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOptions {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub stream_id: u64,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            n_steps: 64,
            seed: 0,
            stream_id: 0,
        }
    }
}

impl MonteCarloOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 100 {
            return Err(FkError::config("kernel.n_paths", "need at least 100 paths"));
        }
        if self.n_steps < 2 {
            return Err(FkError::config("kernel.n_steps", "need at least 2 steps"));
        }
        Ok(())
    }

    pub fn rng(&self) -> RngStream {
        RngStream::new(self.seed, self.stream_id)
    }
}

/// Bridge values at the midpoints `u_k = (k + 1/2) / n_steps`, sampled by
/// the forward conditional-Gaussian recursion from `alpha(0) = 0` with the
/// pin `alpha(1) = 0`.
fn sample_bridge(rng: &RngStream, n_steps: usize) -> Vec<f64> {
    let mut r = rng.rng();
    let mut out = Vec::with_capacity(n_steps);
    let mut u_prev = 0.0;
    let mut a_prev = 0.0;
    for k in 0..n_steps {
        let u = (k as f64 + 0.5) / n_steps as f64;
        let rest_prev = 1.0 - u_prev;
        let rest = 1.0 - u;
        let mean = a_prev * rest / rest_prev;
        let var = 2.0 * (u - u_prev) * rest / rest_prev;
        let z: f64 = r.sample(StandardNormal);
        let a = mean + var.sqrt() * z;
        out.push(a);
        u_prev = u;
        a_prev = a;
    }
    out
}

/// Running mean and variance (Welford); identical samples leave the mean
/// bit-exact and the variance exactly zero.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    fn stderr(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        (self.m2 / (self.count - 1) as f64).sqrt() / (self.count as f64).sqrt()
    }
}

/// `exp(-int_s^t c(omega(tau), tau) dtau)` by the midpoint rule.
#[inline]
fn path_weight(
    pot: &dyn Potential,
    y: f64,
    x: f64,
    s: f64,
    dt: f64,
    bridge: &[f64],
) -> Result<f64> {
    let n = bridge.len();
    let h = dt / n as f64;
    let scale = dt.sqrt();
    let mut sum = 0.0;
    for (k, a) in bridge.iter().enumerate() {
        let u = (k as f64 + 0.5) / n as f64;
        let tau = s + u * dt;
        let pos = (1.0 - u) * y + u * x + scale * a;
        let c = pot.eval(pos, tau);
        if !c.is_finite() {
            return Err(FkError::numeric(format!(
                "potential {} is not finite along a bridge at (x={pos}, t={tau})",
                pot.name()
            )));
        }
        sum += c;
    }
    Ok((-h * sum).exp())
}

fn check_args(s: f64, t: f64, n_paths: usize, n_steps: usize) -> Result<()> {
    if !(t > s) {
        return Err(FkError::domain(format!("kernel needs t > s, got s={s}, t={t}")));
    }
    if n_paths < 100 {
        return Err(FkError::domain(format!("need n_paths >= 100, got {n_paths}")));
    }
    if n_steps < 2 {
        return Err(FkError::domain(format!("need n_steps >= 2, got {n_steps}")));
    }
    Ok(())
}

/// Point estimate of `k(y,s,x,t)` with its standard error.
#[allow(clippy::too_many_arguments)]
pub fn fk_kernel_mc(
    pot: &dyn Potential,
    y: f64,
    s: f64,
    x: f64,
    t: f64,
    n_paths: usize,
    n_steps: usize,
    rng: RngStream,
) -> Result<(f64, f64)> {
    check_args(s, t, n_paths, n_steps)?;
    let dt = t - s;
    let weights: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let bridge = sample_bridge(&rng.child(p as u64), n_steps);
            path_weight(pot, y, x, s, dt, &bridge)
        })
        .collect::<Result<_>>()?;
    let mut acc = Welford::default();
    for w in weights {
        acc.push(w);
    }
    let k0 = heat_unchecked(y, x, dt);
    Ok((k0 * acc.mean, k0 * acc.stderr()))
}

/// Full matrix with one shared set of bridges for every `(y, x)` pair, so
/// entries are correlated but individually unbiased.
pub fn monte_carlo_matrix(
    pot: &dyn Potential,
    grid: &Grid,
    s: f64,
    t: f64,
    opts: &MonteCarloOptions,
) -> Result<KernelMatrix> {
    check_args(s, t, opts.n_paths, opts.n_steps)?;
    let dt = t - s;
    let rng = opts.rng();
    let bridges: Vec<Vec<f64>> = (0..opts.n_paths)
        .into_par_iter()
        .map(|p| sample_bridge(&rng.child(p as u64), opts.n_steps))
        .collect();
    let pts = grid.points();
    let n = grid.n();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![Welford::default(); n];
            for bridge in &bridges {
                for (j, a) in acc.iter_mut().enumerate() {
                    a.push(path_weight(pot, pts[i], pts[j], s, dt, bridge)?);
                }
            }
            Ok((
                acc.iter().map(|a| a.mean).collect(),
                acc.iter().map(|a| a.stderr()).collect(),
            ))
        })
        .collect::<Result<_>>()?;
    let heat = heat_matrix(grid, dt);
    let mut values = Array2::zeros((n, n));
    let mut stderr = Array2::zeros((n, n));
    for (i, (mean, se)) in rows.into_iter().enumerate() {
        for j in 0..n {
            values[[i, j]] = heat[[i, j]] * mean[j];
            stderr[[i, j]] = heat[[i, j]] * se[j];
        }
    }
    let k = KernelMatrix {
        grid: grid.clone(),
        s,
        t,
        values,
        method: KernelMethod::MonteCarlo,
        stderr: Some(stderr),
        spec: KernelSpec::MonteCarlo(*opts),
        potential: pot.name(),
    };
    k.ensure_positive()?;
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{
        heat_kernel, kernel_matrix, ConstantPotential, QuantumPotential, ZeroPotential,
    };
    use crate::numerics::make_uniform_grid;

    #[test]
    fn zero_potential_is_exact() {
        let rng = RngStream::new(11, 0);
        let (v, se) = fk_kernel_mc(&ZeroPotential, 0.3, 0.0, -0.4, 0.6, 500, 16, rng).unwrap();
        assert_eq!(v, heat_kernel(0.3, 0.0, -0.4, 0.6).unwrap());
        assert_eq!(se, 0.0);

        let g = make_uniform_grid(-2.0, 2.0, 9).unwrap();
        let opts = MonteCarloOptions {
            n_paths: 200,
            n_steps: 8,
            seed: 3,
            stream_id: 0,
        };
        let mc = kernel_matrix(&ZeroPotential, &g, 0.0, 1.0, &KernelSpec::MonteCarlo(opts)).unwrap();
        let heat = kernel_matrix(&ZeroPotential, &g, 0.0, 1.0, &KernelSpec::Heat).unwrap();
        assert_eq!(mc.values, heat.values);
        assert!(mc.stderr.unwrap().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn constant_potential_is_path_independent() {
        let rng = RngStream::new(5, 1);
        let (v, se) =
            fk_kernel_mc(&ConstantPotential { value: 1.0 }, 0.0, 0.0, 0.0, 1.0, 1000, 64, rng)
                .unwrap();
        let exact = heat_kernel(0.0, 0.0, 0.0, 1.0).unwrap() * (-1.0f64).exp();
        assert_eq!(se, 0.0);
        assert!((v - exact).abs() <= 4.0 * f64::EPSILON * exact);
    }

    #[test]
    fn bridge_has_laplacian_covariance() {
        // Var alpha(u) = 2 u (1 - u) at the midpoints
        let n_steps = 4;
        let paths = 20_000;
        let root = RngStream::new(99, 0);
        let mut m2 = vec![0.0; n_steps];
        for p in 0..paths {
            let b = sample_bridge(&root.child(p), n_steps);
            for (k, a) in b.iter().enumerate() {
                m2[k] += a * a;
            }
        }
        for (k, acc) in m2.iter().enumerate() {
            let u = (k as f64 + 0.5) / n_steps as f64;
            let var = acc / paths as f64;
            let exact = 2.0 * u * (1.0 - u);
            // relative sampling error of a variance ~ sqrt(2/N)
            assert!((var - exact).abs() < 4.0 * exact * (2.0 / paths as f64).sqrt());
        }
    }

    #[test]
    fn estimates_are_reproducible() {
        let rng = RngStream::new(7, 2);
        let a = fk_kernel_mc(&QuantumPotential, 0.1, 0.0, 0.5, 0.5, 300, 16, rng).unwrap();
        let b = fk_kernel_mc(&QuantumPotential, 0.1, 0.0, 0.5, 0.5, 300, 16, rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn argument_checks() {
        let rng = RngStream::new(0, 0);
        assert!(fk_kernel_mc(&ZeroPotential, 0.0, 1.0, 0.0, 1.0, 100, 4, rng).is_err());
        assert!(fk_kernel_mc(&ZeroPotential, 0.0, 0.0, 0.0, 1.0, 99, 4, rng).is_err());
        assert!(fk_kernel_mc(&ZeroPotential, 0.0, 0.0, 0.0, 1.0, 100, 1, rng).is_err());
    }

    #[test]
    fn non_finite_potential_is_reported() {
        #[derive(Debug)]
        struct Blowup;
        impl Potential for Blowup {
            fn name(&self) -> String {
                "blowup".into()
            }
            fn eval(&self, x: f64, _t: f64) -> f64 {
                if x > 0.0 {
                    f64::NAN
                } else {
                    0.0
                }
            }
            fn lower_bound(&self) -> f64 {
                0.0
            }
            fn local_upper_bound(&self, _: f64, _: f64, _: f64) -> f64 {
                0.0
            }
            fn is_time_dependent(&self) -> bool {
                false
            }
        }
        let err = fk_kernel_mc(&Blowup, 1.0, 0.0, 1.0, 1.0, 100, 4, RngStream::new(0, 0))
            .unwrap_err();
        assert!(matches!(err, FkError::Numeric(ref m) if m.contains("x=")));
    }
}
