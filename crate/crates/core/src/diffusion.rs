//! The interpolating process as a diffusion with generator `Laplacian + b d/dx`:
//! drift from the backward field, Euler-Maruyama paths, and quadrature
//! estimators of its local characteristics.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bridge::{TransitionBuilder, TransitionDensity};
use crate::error::{FkError, Result};
use crate::numerics::{gradient, interp_unchecked, quad, quad_interval, Grid, RngStream};

/// Diffusion coefficient of the process (the generator is `Laplacian`).
pub const DIFFUSION_COEFFICIENT: f64 = 2.0;

/// Default radius of the ball in the local-characteristic estimators.
pub const DEFAULT_EPSILON: f64 = 0.5;

/// Default refining time-step ladder for the estimators and diagnostics.
pub const DEFAULT_DT_LADDER: [f64; 5] = [0.1, 0.05, 0.02, 0.01, 0.005];

/// Fraction of paths allowed to touch the grid boundary before the grid is
/// considered too narrow.
pub const BOUNDARY_HIT_LIMIT: f64 = 0.01;

/// `b(x,t) = 2 d/dx ln g(x,t)` on the time mesh of a bridge solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftField {
    pub grid: Grid,
    pub time_mesh: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Where the field came from, e.g. `bridge:quantum/parametrix`.
    pub provenance: String,
}

impl DriftField {
    /// A drift that is zero everywhere on `[t0, t1]`.
    pub fn zero(grid: &Grid, t0: f64, t1: f64) -> Self {
        Self {
            grid: grid.clone(),
            time_mesh: vec![t0, t1],
            values: vec![vec![0.0; grid.n()]; 2],
            provenance: "zero".into(),
        }
    }

    /// A drift sampled from a closed form on the given mesh.
    pub fn from_fn(grid: &Grid, time_mesh: &[f64], b: impl Fn(f64, f64) -> f64, provenance: &str) -> Self {
        let values = time_mesh
            .iter()
            .map(|&t| grid.points().iter().map(|&x| b(x, t)).collect())
            .collect();
        Self {
            grid: grid.clone(),
            time_mesh: time_mesh.to_vec(),
            values,
            provenance: provenance.into(),
        }
    }

    /// Index of the mesh time nearest to `t`.
    pub fn nearest_time(&self, t: f64) -> usize {
        let m = &self.time_mesh;
        match m.binary_search_by(|v| v.partial_cmp(&t).expect("finite mesh")) {
            Ok(k) => k,
            Err(0) => 0,
            Err(k) if k == m.len() => m.len() - 1,
            Err(k) => {
                if t - m[k - 1] <= m[k] - t {
                    k - 1
                } else {
                    k
                }
            }
        }
    }

    /// `b(x, t)`: linear in `x`, nearest mesh time in `t`; `x` is clamped to
    /// the grid.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let k = self.nearest_time(t);
        let x = x.clamp(self.grid.lo(), self.grid.hi());
        interp_unchecked(&self.grid, &self.values[k], x)
    }

    fn min_step(&self) -> f64 {
        self.time_mesh
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Drift of the bridge process from its propagated backward field.
pub fn drift_field(sol: &crate::bridge::BridgeSolution) -> Result<DriftField> {
    if !sol.has_fields() {
        return Err(FkError::domain("solution has no propagated fields"));
    }
    let mut values = Vec::with_capacity(sol.time_mesh.len());
    for (k, g) in sol.g_field.iter().enumerate() {
        if let Some(i) = g.iter().position(|&v| !(v > 0.0)) {
            return Err(FkError::numeric(format!(
                "g({}, {}) = {} is not positive; the drift 2 d/dx ln g is undefined",
                sol.grid.points()[i],
                sol.time_mesh[k],
                g[i]
            )));
        }
        let ln_g: Vec<f64> = g.iter().map(|v| v.ln()).collect();
        let b: Vec<f64> = gradient(&sol.grid, &ln_g)?
            .into_iter()
            .map(|d| DIFFUSION_COEFFICIENT * d)
            .collect();
        if let Some(i) = b.iter().position(|v| !v.is_finite()) {
            return Err(FkError::numeric(format!(
                "drift is not finite at x={}, t={}",
                sol.grid.points()[i],
                sol.time_mesh[k]
            )));
        }
        values.push(b);
    }
    Ok(DriftField {
        grid: sol.grid.clone(),
        time_mesh: sol.time_mesh.clone(),
        values,
        provenance: "bridge".into(),
    })
}

/// Simulated trajectories recorded at the drift mesh times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub n_paths: usize,
    pub time_mesh: Vec<f64>,
    /// `states[p][k]` is path `p` at `time_mesh[k]`.
    pub states: Vec<Vec<f64>>,
    pub rng: RngStream,
    pub dt: f64,
    pub drift_provenance: String,
    /// Paths that touched the grid boundary at least once.
    pub boundary_hits: usize,
    pub warnings: Vec<String>,
}

impl PathEnsemble {
    /// States of every path at recorded index `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.states.iter().map(|row| row[k]).collect()
    }

    pub fn final_states(&self) -> Vec<f64> {
        self.column(self.time_mesh.len() - 1)
    }

    pub fn boundary_hit_fraction(&self) -> f64 {
        self.boundary_hits as f64 / self.n_paths as f64
    }
}

/// Options of the path sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerOptions {
    /// Fail instead of warning when more than [`BOUNDARY_HIT_LIMIT`] of the
    /// paths touch the grid boundary.
    pub strict: bool,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self { strict: true }
    }
}

/// Inverse-CDF sampler for a density that is linear between grid nodes.
struct GridSampler<'a> {
    grid: &'a Grid,
    rho: &'a [f64],
    cdf: Vec<f64>,
}

impl<'a> GridSampler<'a> {
    fn new(grid: &'a Grid, rho: &'a [f64]) -> Result<Self> {
        if rho.len() != grid.n() {
            return Err(FkError::domain(format!(
                "initial density has {} values, grid has {}",
                rho.len(),
                grid.n()
            )));
        }
        if let Some(v) = rho.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(FkError::domain(format!("initial density must be nonnegative, got {v}")));
        }
        let h = grid.spacing();
        let mut cdf = Vec::with_capacity(grid.n());
        cdf.push(0.0);
        for w in rho.windows(2) {
            let last = *cdf.last().expect("seeded");
            cdf.push(last + 0.5 * h * (w[0] + w[1]));
        }
        let mass = *cdf.last().expect("non-empty");
        if !(mass > 0.0) {
            return Err(FkError::domain("initial density has zero mass"));
        }
        if ((quad(grid, rho)? - 1.0).abs()) > 1e-6 {
            return Err(FkError::domain(format!(
                "initial density must be normalized on the grid, has mass {mass}"
            )));
        }
        Ok(Self { grid, rho, cdf })
    }

    fn sample(&self, u: f64) -> f64 {
        let target = u * self.cdf.last().expect("non-empty");
        let cell = match self
            .cdf
            .binary_search_by(|v| v.partial_cmp(&target).expect("finite cdf"))
        {
            Ok(k) => k.min(self.cdf.len() - 2),
            Err(k) => k.saturating_sub(1).min(self.cdf.len() - 2),
        };
        let h = self.grid.spacing();
        let (a, b) = (self.rho[cell], self.rho[cell + 1]);
        let r = target - self.cdf[cell];
        // solve a s + (b - a) s^2 / (2h) = r for s in [0, h]
        let slope = (b - a) / h;
        let s = if slope.abs() < 1e-14 * (a + b).max(1e-300) / h {
            if a > 0.0 {
                r / a
            } else {
                0.5 * h
            }
        } else {
            let disc = (a * a + 2.0 * slope * r).max(0.0);
            2.0 * r / (a + disc.sqrt())
        };
        let x0 = self.grid.points()[cell];
        (x0 + s.clamp(0.0, h)).min(self.grid.hi())
    }
}

enum Start<'a> {
    Density(GridSampler<'a>),
    Point(f64),
}

/// Paths of `dX = b dt + sqrt(2) dW` over the span of the drift mesh,
/// started from `rho0`.
pub fn sample_paths(
    drift: &DriftField,
    rho0: &[f64],
    n_paths: usize,
    dt: f64,
    rng: RngStream,
    opts: SamplerOptions,
) -> Result<PathEnsemble> {
    let start = Start::Density(GridSampler::new(&drift.grid, rho0)?);
    let t0 = drift.time_mesh[0];
    let t1 = *drift.time_mesh.last().expect("non-empty mesh");
    simulate(drift, start, t0, t1, n_paths, dt, rng, opts)
}

/// Paths started at the point `x0` at time `s` and run to `t`.
#[allow(clippy::too_many_arguments)]
pub fn sample_paths_from_point(
    drift: &DriftField,
    x0: f64,
    s: f64,
    t: f64,
    n_paths: usize,
    dt: f64,
    rng: RngStream,
    opts: SamplerOptions,
) -> Result<PathEnsemble> {
    if !drift.grid.contains(x0) {
        return Err(FkError::domain(format!("start point {x0} is outside the grid")));
    }
    simulate(drift, Start::Point(x0), s, t, n_paths, dt, rng, opts)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    drift: &DriftField,
    start: Start<'_>,
    t0: f64,
    t1: f64,
    n_paths: usize,
    dt: f64,
    rng: RngStream,
    opts: SamplerOptions,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(FkError::domain("need at least one path"));
    }
    if !(dt > 0.0) {
        return Err(FkError::domain(format!("time step must be positive, got {dt}")));
    }
    if !(t1 > t0) {
        return Err(FkError::domain(format!("need t1 > t0, got [{t0}, {t1}]")));
    }
    if drift.time_mesh.len() > 1 && dt > drift.min_step() * (1.0 + 1e-9) {
        return Err(FkError::domain(format!(
            "time step {dt} exceeds the drift mesh spacing {}",
            drift.min_step()
        )));
    }
    let n_steps = ((t1 - t0) / dt).round() as usize;
    if n_steps == 0 || ((n_steps as f64 * dt) - (t1 - t0)).abs() > 1e-9 * (t1 - t0).max(1.0) {
        return Err(FkError::domain(format!(
            "time step {dt} does not divide the interval [{t0}, {t1}]"
        )));
    }

    // recording schedule: t0, mesh times strictly inside, t1
    let mut record_times = vec![t0];
    record_times.extend(drift.time_mesh.iter().copied().filter(|&m| m > t0 + 0.5 * dt && m < t1 - 0.5 * dt));
    record_times.push(t1);
    let record_steps: Vec<usize> = record_times
        .iter()
        .map(|&tau| ((tau - t0) / dt).round() as usize)
        .collect();
    let time_mesh: Vec<f64> = record_steps.iter().map(|&k| t0 + k as f64 * dt).collect();
    let mesh_index: Vec<usize> = (0..n_steps)
        .map(|k| drift.nearest_time(t0 + k as f64 * dt))
        .collect();

    let grid = &drift.grid;
    let (lo, hi) = (grid.lo(), grid.hi());
    let noise = (DIFFUSION_COEFFICIENT * dt).sqrt();
    let results: Vec<(Vec<f64>, bool)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut r = rng.child(p as u64).rng();
            let mut x = match &start {
                Start::Density(sampler) => sampler.sample(r.gen::<f64>()),
                Start::Point(x0) => *x0,
            };
            let mut states = Vec::with_capacity(record_steps.len());
            let mut next_record = 0;
            let mut hit = false;
            for (k, &m) in mesh_index.iter().enumerate() {
                while next_record < record_steps.len() && record_steps[next_record] == k {
                    states.push(x);
                    next_record += 1;
                }
                let b = interp_unchecked(grid, &drift.values[m], x);
                let z: f64 = r.sample(StandardNormal);
                x += b * dt + noise * z;
                // reflect; a step longer than the grid would reflect twice
                loop {
                    if x > hi {
                        x = 2.0 * hi - x;
                        hit = true;
                    } else if x < lo {
                        x = 2.0 * lo - x;
                        hit = true;
                    } else {
                        break;
                    }
                }
            }
            while next_record < record_steps.len() {
                states.push(x);
                next_record += 1;
            }
            (states, hit)
        })
        .collect();

    let boundary_hits = results.iter().filter(|(_, h)| *h).count();
    let states: Vec<Vec<f64>> = results.into_iter().map(|(s, _)| s).collect();
    let fraction = boundary_hits as f64 / n_paths as f64;
    let mut warnings = Vec::new();
    if fraction > BOUNDARY_HIT_LIMIT {
        let msg = format!(
            "{:.2}% of paths touched the grid boundary (limit {:.0}%); the grid is too narrow",
            100.0 * fraction,
            100.0 * BOUNDARY_HIT_LIMIT
        );
        if opts.strict {
            return Err(FkError::numeric(msg));
        }
        warnings.push(msg);
    }
    Ok(PathEnsemble {
        n_paths,
        time_mesh,
        states,
        rng,
        dt,
        drift_provenance: drift.provenance.clone(),
        boundary_hits,
        warnings,
    })
}

/// Something that yields transition densities `p(., s, ., t)`.
pub trait TransitionSource {
    fn transition(&self, s: f64, t: f64) -> Result<Arc<TransitionDensity>>;
    fn grid(&self) -> &Grid;
}

/// A [`TransitionBuilder`] that remembers the densities it has built, so
/// estimators at several probe points share kernel constructions.
pub struct CachedTransitions {
    builder: TransitionBuilder,
    cache: Mutex<HashMap<(u64, u64), Arc<TransitionDensity>>>,
}

impl CachedTransitions {
    pub fn new(builder: TransitionBuilder) -> Self {
        Self {
            builder,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn builder(&self) -> &TransitionBuilder {
        &self.builder
    }
}

impl TransitionSource for CachedTransitions {
    fn transition(&self, s: f64, t: f64) -> Result<Arc<TransitionDensity>> {
        let key = (s.to_bits(), t.to_bits());
        if let Some(p) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(p));
        }
        let p = Arc::new(self.builder.transition(s, t)?);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, Arc::clone(&p));
        Ok(p)
    }

    fn grid(&self) -> &Grid {
        self.builder.grid()
    }
}

impl TransitionSource for TransitionBuilder {
    fn transition(&self, s: f64, t: f64) -> Result<Arc<TransitionDensity>> {
        TransitionBuilder::transition(self, s, t).map(Arc::new)
    }

    fn grid(&self) -> &Grid {
        TransitionBuilder::grid(self)
    }
}

/// Ladders of the small-time moment estimators at one start point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalCharacteristics {
    pub x0: f64,
    pub s: f64,
    pub epsilon: f64,
    pub dt_ladder: Vec<f64>,
    pub b_hat: Vec<f64>,
    pub a_hat: Vec<f64>,
    pub tail: Vec<f64>,
}

fn check_ladder(dt_ladder: &[f64]) -> Result<()> {
    if dt_ladder.is_empty() {
        return Err(FkError::domain("dt ladder is empty"));
    }
    if dt_ladder.iter().any(|&d| !(d > 0.0)) {
        return Err(FkError::domain("dt ladder entries must be positive"));
    }
    if dt_ladder.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(FkError::domain("dt ladder must be strictly decreasing"));
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) {
        return Err(FkError::domain(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}

/// `b_hat = (1/dt) int_{|x-x0|<=eps} (x-x0) p`, `a_hat` likewise with
/// `(x-x0)^2`, and `tail = (1/dt) int_{|x-x0|>eps} p`, for every `dt`.
pub fn estimate_local_characteristics(
    source: &dyn TransitionSource,
    x0: f64,
    s: f64,
    epsilon: f64,
    dt_ladder: &[f64],
) -> Result<LocalCharacteristics> {
    check_epsilon(epsilon)?;
    check_ladder(dt_ladder)?;
    let grid = source.grid().clone();
    if !grid.contains(x0) {
        return Err(FkError::domain(format!("x0={x0} is outside the grid")));
    }
    let mut out = LocalCharacteristics {
        x0,
        s,
        epsilon,
        dt_ladder: dt_ladder.to_vec(),
        b_hat: Vec::new(),
        a_hat: Vec::new(),
        tail: Vec::new(),
    };
    let (a, b) = (x0 - epsilon, x0 + epsilon);
    for &dt in dt_ladder {
        let p = source.transition(s, s + dt)?;
        let row = p.row_at(x0)?;
        let first: Vec<f64> = grid.points().iter().zip(&row).map(|(x, v)| (x - x0) * v).collect();
        let second: Vec<f64> = grid
            .points()
            .iter()
            .zip(&row)
            .map(|(x, v)| (x - x0).powi(2) * v)
            .collect();
        let escaped = quad_interval(&grid, &row, grid.lo(), a)? + quad_interval(&grid, &row, b, grid.hi())?;
        out.b_hat.push(quad_interval(&grid, &first, a, b)? / dt);
        out.a_hat.push(quad_interval(&grid, &second, a, b)? / dt);
        out.tail.push((escaped / dt).clamp(0.0, 1.0 / dt));
    }
    Ok(out)
}

/// For each `dt`: the largest escape rate `(1/dt) int_{|x-y|>eps} p(y,s,x,s+dt) dx`
/// over grid points `y` in `[k_lo, k_hi]`.
pub fn dynkin_diagnostic(
    source: &dyn TransitionSource,
    s: f64,
    k_lo: f64,
    k_hi: f64,
    epsilon: f64,
    dt_ladder: &[f64],
) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    check_ladder(dt_ladder)?;
    let grid = source.grid().clone();
    if !(k_lo <= k_hi && grid.contains(k_lo) && grid.contains(k_hi)) {
        return Err(FkError::domain(format!(
            "compact set [{k_lo}, {k_hi}] must lie inside the grid"
        )));
    }
    let rows: Vec<usize> = (0..grid.n())
        .filter(|&i| {
            let y = grid.points()[i];
            y >= k_lo - 1e-12 && y <= k_hi + 1e-12
        })
        .collect();
    let mut out = Vec::with_capacity(dt_ladder.len());
    for &dt in dt_ladder {
        let p = source.transition(s, s + dt)?;
        let mut worst: f64 = 0.0;
        for &i in &rows {
            worst = worst.max(p.escape_mass(i, epsilon)?.max(0.0) / dt);
        }
        out.push(worst);
    }
    Ok(out)
}

/// For each `dt`: `int rho_s(y) int_{|x-y|>=eps} p(y,s,x,s+dt) dx dy`.
pub fn stochastic_continuity_diagnostic(
    source: &dyn TransitionSource,
    s: f64,
    rho_s: &[f64],
    epsilon: f64,
    dt_ladder: &[f64],
) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    check_ladder(dt_ladder)?;
    let grid = source.grid().clone();
    if rho_s.len() != grid.n() {
        return Err(FkError::domain(format!(
            "density has {} values, grid has {}",
            rho_s.len(),
            grid.n()
        )));
    }
    let mut out = Vec::with_capacity(dt_ladder.len());
    for &dt in dt_ladder {
        let p = source.transition(s, s + dt)?;
        let escaped: Vec<f64> = (0..grid.n())
            .map(|i| p.escape_mass(i, epsilon).map(|m| rho_s[i] * m.max(0.0)))
            .collect::<Result<_>>()?;
        out.push(quad(&grid, &escaped)?);
    }
    Ok(out)
}

/// Constants of a Gaussian lower bound `v(y) >= c1 exp(-c2 y^2)` fitted on
/// the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundFit {
    pub t: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Fits `ln v ~ ln c1 - c2 y^2` by least squares, then lowers `c1` until
/// the bound holds at every grid point.
pub fn fit_gaussian_lower_bound(grid: &Grid, v: &[f64], t: f64) -> Result<LowerBoundFit> {
    if v.len() != grid.n() {
        return Err(FkError::domain("field does not match the grid"));
    }
    if v.iter().any(|&x| !(x > 0.0)) {
        return Err(FkError::numeric("field is not strictly positive"));
    }
    let xs: Vec<f64> = grid.points().iter().map(|y| y * y).collect();
    let ys: Vec<f64> = v.iter().map(|x| x.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let c2 = (-sxy / sxx).max(0.0);
    let ln_c1 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y + c2 * x)
        .fold(f64::INFINITY, f64::min);
    Ok(LowerBoundFit {
        t,
        c1: ln_c1.exp(),
        c2,
    })
}
