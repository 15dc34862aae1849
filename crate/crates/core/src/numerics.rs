//! Uniform grids, trapezoid quadrature, finite differences, interpolation
//! and the seeded random-stream contract shared by the stochastic code.
//!
//! Every field in the toolkit lives on one [`Grid`]; kernels are stored as
//! matrices over `Grid x Grid`, so integrals against a kernel row reduce to
//! a weighted dot product with [`Grid::weights`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FkError, Result};

/// Uniform 1-D mesh with trapezoid quadrature weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid {
    lo: f64,
    hi: f64,
    points: Vec<f64>,
    weights: Vec<f64>,
    spacing: f64,
}

/// Serialized form of a [`Grid`]: the points and weights are derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl TryFrom<GridSpec> for Grid {
    type Error = FkError;

    fn try_from(spec: GridSpec) -> Result<Self> {
        make_uniform_grid(spec.lo, spec.hi, spec.n)
    }
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> Self {
        g.spec()
    }
}

/// Builds a uniform grid on `[lo, hi]` with `n` points.
pub fn make_uniform_grid(lo: f64, hi: f64, n: usize) -> Result<Grid> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(FkError::domain(format!(
            "grid endpoints must be finite, got [{lo}, {hi}]"
        )));
    }
    if lo >= hi {
        return Err(FkError::domain(format!(
            "grid requires lo < hi, got lo={lo}, hi={hi}"
        )));
    }
    if n < 3 {
        return Err(FkError::domain(format!("grid requires n >= 3, got n={n}")));
    }
    let spacing = (hi - lo) / (n - 1) as f64;
    let points: Vec<f64> = (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + i as f64 * spacing
            }
        })
        .collect();
    let mut weights = vec![spacing; n];
    weights[0] = 0.5 * spacing;
    weights[n - 1] = 0.5 * spacing;
    Ok(Grid {
        lo,
        hi,
        points,
        weights,
        spacing,
    })
}

impl Grid {
    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            lo: self.lo,
            hi: self.hi,
            n: self.n(),
        }
    }

    /// Two grids are interchangeable when they were built from the same
    /// `(lo, hi, n)`.
    pub fn same_as(&self, other: &Grid) -> bool {
        self.spec() == other.spec()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Index of the grid point closest to `x` (clamped to the grid).
    pub fn nearest_index(&self, x: f64) -> usize {
        let k = ((x - self.lo) / self.spacing).round();
        k.clamp(0.0, (self.n() - 1) as f64) as usize
    }

    /// Unchecked trapezoid sum; callers guarantee the length.
    pub(crate) fn dot(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n());
        self.weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum()
    }

    fn check_len(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.n() {
            return Err(FkError::domain(format!(
                "expected {} values on the grid, got {}",
                self.n(),
                values.len()
            )));
        }
        Ok(())
    }
}

/// Trapezoid approximation of the integral of `values` over the grid.
pub fn quad(grid: &Grid, values: &[f64]) -> Result<f64> {
    grid.check_len(values)?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(FkError::numeric(format!(
            "non-finite integrand {} at x={}",
            values[i],
            grid.points()[i]
        )));
    }
    Ok(grid.dot(values))
}

/// Derivative by central differences in the interior and second-order
/// one-sided differences at the two ends.
pub fn gradient(grid: &Grid, values: &[f64]) -> Result<Vec<f64>> {
    grid.check_len(values)?;
    let n = grid.n();
    let h = grid.spacing();
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (values[i + 1] - values[i - 1]) / (2.0 * h);
    }
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
    out[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h);
    Ok(out)
}

/// Piecewise-linear interpolation; no extrapolation outside `[lo, hi]`.
pub fn interp_linear(grid: &Grid, values: &[f64], x: f64) -> Result<f64> {
    grid.check_len(values)?;
    if !grid.contains(x) {
        return Err(FkError::domain(format!(
            "x={x} lies outside the grid [{}, {}]",
            grid.lo(),
            grid.hi()
        )));
    }
    Ok(interp_unchecked(grid, values, x))
}

pub(crate) fn interp_unchecked(grid: &Grid, values: &[f64], x: f64) -> f64 {
    let n = grid.n();
    let u = (x - grid.lo()) / grid.spacing();
    let i = (u.floor() as isize).clamp(0, n as isize - 2) as usize;
    let frac = u - i as f64;
    if frac == 0.0 {
        return values[i];
    }
    if frac == 1.0 {
        return values[i + 1];
    }
    values[i] + frac * (values[i + 1] - values[i])
}

/// Integral of `values` over `[a, b]` (clipped to the grid) using the
/// piecewise cubic through four neighbouring nodes on every cell.
///
/// Unlike [`quad`] this handles region boundaries that fall between nodes,
/// and it is fourth-order accurate for smooth integrands, which matters
/// for the tail and moment integrals of narrow transition densities.
pub fn quad_interval(grid: &Grid, values: &[f64], a: f64, b: f64) -> Result<f64> {
    grid.check_len(values)?;
    let a = a.max(grid.lo());
    let b = b.min(grid.hi());
    if a >= b {
        return Ok(0.0);
    }
    let n = grid.n();
    let h = grid.spacing();
    let lo = grid.lo();
    let first = (((a - lo) / h).floor() as usize).min(n - 2);
    let last = (((b - lo) / h).ceil() as usize).clamp(1, n - 1);
    let mut total = 0.0;
    for cell in first..last {
        let x0 = lo + cell as f64 * h;
        let ua = ((a - x0) / h).clamp(0.0, 1.0);
        let ub = ((b - x0) / h).clamp(0.0, 1.0);
        if ub <= ua {
            continue;
        }
        // stencil start so that the cell sits in the middle where possible
        let start = cell.saturating_sub(1).min(n - 4);
        let offset = cell as f64 - start as f64;
        let f = [
            values[start],
            values[start + 1],
            values[start + 2],
            values[start + 3],
        ];
        total += h * (cubic_antiderivative(&f, offset + ub) - cubic_antiderivative(&f, offset + ua));
    }
    Ok(total)
}

/// Antiderivative (from 0) of the cubic interpolating `f` at nodes 0..3.
fn cubic_antiderivative(f: &[f64; 4], u: f64) -> f64 {
    // Lagrange basis in the local coordinate u, nodes 0,1,2,3, expanded in
    // monomials and integrated term by term.
    let l0 = [1.0, -11.0 / 6.0, 1.0, -1.0 / 6.0];
    let l1 = [0.0, 3.0, -5.0 / 2.0, 1.0 / 2.0];
    let l2 = [0.0, -3.0 / 2.0, 2.0, -1.0 / 2.0];
    let l3 = [0.0, 1.0 / 3.0, -1.0 / 2.0, 1.0 / 6.0];
    let mut coef = [0.0; 4];
    for k in 0..4 {
        coef[k] = f[0] * l0[k] + f[1] * l1[k] + f[2] * l2[k] + f[3] * l3[k];
    }
    let mut acc = 0.0;
    let mut p = u;
    for (k, c) in coef.iter().enumerate() {
        acc += c * p / (k as f64 + 1.0);
        p *= u;
    }
    acc
}

/// Identifier of a reproducible pseudorandom stream.
///
/// A stream is a ChaCha8 keystream: `seed` fixes the key and `stream_id`
/// the nonce, so equal pairs replay identical draws on any thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Independent child stream, e.g. one per sample path.
    ///
    /// The child key mixes the parent's seed and stream id, and the child
    /// stream id is `index`.
    pub fn child(&self, index: u64) -> RngStream {
        RngStream {
            seed: splitmix64(self.seed ^ splitmix64(self.stream_id.wrapping_add(0x9e37_79b9))),
            stream_id: index,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
