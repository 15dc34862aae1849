use std::sync::Arc;

use super::{
    compose, default_margin, heat_unchecked, kernel_matrix, KernelMatrix, KernelSpec, Potential,
    TimeReversed,
};
use crate::error::{FkError, Result};
use crate::numerics::Grid;

/// Relative sup residual of `int k(y,s,z,r) k(z,r,x,t) dz = k(y,s,x,t)`
/// over the interior window given by [`default_margin`] of `t - s`.
///
/// Near the grid ends the quadrature over `z` misses the part of the
/// bridge that leaves the grid, so only points farther than the margin
/// from either end are compared.
pub fn chapman_kolmogorov_residual(
    k_sr: &KernelMatrix,
    k_rt: &KernelMatrix,
    k_st: &KernelMatrix,
) -> Result<f64> {
    chapman_kolmogorov_residual_in(k_sr, k_rt, k_st, default_margin(k_st.dt()))
}

/// As [`chapman_kolmogorov_residual`] with an explicit edge margin.
pub fn chapman_kolmogorov_residual_in(
    k_sr: &KernelMatrix,
    k_rt: &KernelMatrix,
    k_st: &KernelMatrix,
    margin: f64,
) -> Result<f64> {
    if !(k_sr.grid.same_as(&k_rt.grid) && k_sr.grid.same_as(&k_st.grid)) {
        return Err(FkError::domain("Chapman-Kolmogorov check needs one shared grid"));
    }
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs());
    if !(close(k_sr.t, k_rt.s) && close(k_sr.s, k_st.s) && close(k_rt.t, k_st.t)) {
        return Err(FkError::domain(format!(
            "time mismatch: [{}, {}] o [{}, {}] vs [{}, {}]",
            k_sr.s, k_sr.t, k_rt.s, k_rt.t, k_st.s, k_st.t
        )));
    }
    let idx = k_st.interior_indices(margin);
    if idx.is_empty() {
        return Err(FkError::domain(format!(
            "edge margin {margin} leaves no interior points on the grid"
        )));
    }
    let composed = compose(k_sr, k_rt)?;
    Ok(super::max_relative_deviation(&composed.values, &k_st.values, &idx))
}

/// Checks `k >= (1/2) k_0 exp(-(t-s) C)` with `C` the local upper bound of
/// `c_+` on `[-r_box, r_box] x [s, t]`.
///
/// Entries within [`default_margin`] of the grid ends (where the truncated
/// kernel loses mass) and entries whose baseline underflows are skipped.
/// Monte Carlo entries are allowed three standard errors of slack.
pub fn positivity_bound_check(k: &KernelMatrix, pot: &dyn Potential, r_box: f64) -> bool {
    let c = pot.local_upper_bound(r_box, k.s, k.t);
    let dt = k.dt();
    let factor = 0.5 * (-dt * c).exp();
    let p = k.grid.points();
    let idx = k.interior_indices(default_margin(dt));
    for &i in &idx {
        for &j in &idx {
            let base = heat_unchecked(p[i], p[j], dt);
            if base < super::UNDERFLOW_FLOOR {
                continue;
            }
            let slack = k.stderr.as_ref().map_or(0.0, |e| 3.0 * e[[i, j]]);
            if !(k.values[[i, j]] + slack >= factor * base) {
                return false;
            }
        }
    }
    true
}

/// Result of comparing a kernel with the kernel of the time-reversed
/// potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReversalReport {
    /// `max |K[i][j] - k[j][i]| / k[j][i]`.
    pub max_relative: f64,
    /// Largest deviation in units of the combined standard error, for
    /// Monte Carlo kernels.
    pub max_z: Option<f64>,
}

/// Compares `K(y,0,x,T)` built from `c(x, T - t)` with `k(x,0,y,T)` built
/// from `c(x, t)`, both by the construction in `spec`, over the interior
/// window given by [`default_margin`] of `T`.
pub fn time_reversal_residual(
    pot: Arc<dyn Potential>,
    grid: &Grid,
    horizon: f64,
    spec: &KernelSpec,
) -> Result<ReversalReport> {
    time_reversal_residual_in(pot, grid, horizon, spec, default_margin(horizon))
}

/// As [`time_reversal_residual`] with an explicit edge margin; a margin of
/// zero compares every resolvable entry.
pub fn time_reversal_residual_in(
    pot: Arc<dyn Potential>,
    grid: &Grid,
    horizon: f64,
    spec: &KernelSpec,
    margin: f64,
) -> Result<ReversalReport> {
    let forward = kernel_matrix(pot.as_ref(), grid, 0.0, horizon, spec)?;
    let reversed_pot = TimeReversed {
        inner: pot,
        horizon,
    };
    // independent draws for the reversed construction
    let rev_spec = match *spec {
        KernelSpec::MonteCarlo(mut o) => {
            o.stream_id = o.stream_id.wrapping_add(1);
            KernelSpec::MonteCarlo(o)
        }
        other => other,
    };
    let reversed = kernel_matrix(&reversed_pot, grid, 0.0, horizon, &rev_spec)?;
    reversal_report(&forward, &reversed, margin)
}

pub(crate) fn reversal_report(
    forward: &KernelMatrix,
    reversed: &KernelMatrix,
    margin: f64,
) -> Result<ReversalReport> {
    let idx = forward.interior_indices(margin);
    if idx.is_empty() {
        return Err(FkError::domain(format!(
            "edge margin {margin} leaves no interior points on the grid"
        )));
    }
    let mut max_relative: f64 = 0.0;
    let mut max_z: Option<f64> = None;
    for &i in &idx {
        for &j in &idx {
            if !forward.resolvable(j, i) {
                continue;
            }
            let a = reversed.values[[i, j]];
            let b = forward.values[[j, i]];
            max_relative = max_relative.max((a - b).abs() / b);
            if let (Some(ea), Some(eb)) = (&reversed.stderr, &forward.stderr) {
                let se = (ea[[i, j]].powi(2) + eb[[j, i]].powi(2)).sqrt();
                let z = if se > 0.0 {
                    (a - b).abs() / se
                } else if a == b {
                    0.0
                } else {
                    f64::INFINITY
                };
                max_z = Some(max_z.unwrap_or(0.0).max(z));
            }
        }
    }
    Ok(ReversalReport {
        max_relative,
        max_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{
        ConstantPotential, MonteCarloOptions, ParametrixOptions, QuantumPotential, ZeroPotential,
    };
    use crate::numerics::make_uniform_grid;

    fn heat(g: &Grid, s: f64, t: f64) -> KernelMatrix {
        kernel_matrix(&ZeroPotential, g, s, t, &KernelSpec::Heat).unwrap()
    }

    #[test]
    fn heat_kernels_compose() {
        let g = make_uniform_grid(-10.0, 10.0, 401).unwrap();
        let r = chapman_kolmogorov_residual(&heat(&g, 0.0, 0.5), &heat(&g, 0.5, 1.0), &heat(&g, 0.0, 1.0))
            .unwrap();
        assert!(r < 1e-6, "{r}");
    }

    #[test]
    fn constant_parametrix_kernels_compose() {
        let g = make_uniform_grid(-10.0, 10.0, 401).unwrap();
        let pot = ConstantPotential { value: 1.0 };
        let spec = KernelSpec::Parametrix(ParametrixOptions::default());
        let a = kernel_matrix(&pot, &g, 0.0, 0.5, &spec).unwrap();
        let b = kernel_matrix(&pot, &g, 0.5, 1.0, &spec).unwrap();
        let c = kernel_matrix(&pot, &g, 0.0, 1.0, &spec).unwrap();
        let r = chapman_kolmogorov_residual(&a, &b, &c).unwrap();
        assert!(r < 1e-4, "{r}");
    }

    #[test]
    fn residual_shrinks_under_refinement() {
        let mut last = f64::INFINITY;
        for n in [41, 61, 81] {
            let g = make_uniform_grid(-6.0, 6.0, n).unwrap();
            let r = chapman_kolmogorov_residual_in(
                &heat(&g, 0.0, 0.05),
                &heat(&g, 0.05, 0.1),
                &heat(&g, 0.0, 0.1),
                2.0,
            )
            .unwrap();
            assert!(r < last, "{n}: {r} !< {last}");
            last = r;
        }
    }

    #[test]
    fn mismatches_are_domain_errors() {
        let g = make_uniform_grid(-2.0, 2.0, 21).unwrap();
        let h = make_uniform_grid(-2.0, 2.0, 23).unwrap();
        let err = chapman_kolmogorov_residual(&heat(&g, 0.0, 0.5), &heat(&h, 0.5, 1.0), &heat(&g, 0.0, 1.0));
        assert!(matches!(err, Err(FkError::Domain(_))));
        let err = chapman_kolmogorov_residual(&heat(&g, 0.0, 0.4), &heat(&g, 0.5, 1.0), &heat(&g, 0.0, 1.0));
        assert!(matches!(err, Err(FkError::Domain(_))));
    }

    #[test]
    fn positivity_bound() {
        let g = make_uniform_grid(-6.0, 6.0, 121).unwrap();
        let k = heat(&g, 0.0, 0.5);
        assert!(positivity_bound_check(&k, &ZeroPotential, 6.0));

        let pot = ConstantPotential { value: 1.0 };
        let spec = KernelSpec::Parametrix(ParametrixOptions::default());
        let k = kernel_matrix(&pot, &g, 0.0, 0.5, &spec).unwrap();
        assert!(positivity_bound_check(&k, &pot, 6.0));

        let mut bad = k.clone();
        let c = g.nearest_index(0.0);
        bad.values[[c, c + 1]] = 0.0;
        assert!(!positivity_bound_check(&bad, &pot, 6.0));
    }

    #[test]
    fn reversal_of_time_independent_potentials() {
        let g = make_uniform_grid(-4.0, 4.0, 41).unwrap();
        let r = time_reversal_residual_in(Arc::new(ZeroPotential), &g, 1.0, &KernelSpec::Heat, 0.0)
            .unwrap();
        assert!(r.max_relative < 1e-12);
        let r = time_reversal_residual_in(
            Arc::new(ConstantPotential { value: 0.5 }),
            &g,
            0.6,
            &KernelSpec::Parametrix(ParametrixOptions::default()),
            0.0,
        )
        .unwrap();
        assert!(r.max_relative < 1e-12, "{r:?}");
    }

    #[test]
    fn reversal_of_quantum_potential_parametrix() {
        let g = make_uniform_grid(-6.0, 6.0, 121).unwrap();
        let r = time_reversal_residual_in(
            Arc::new(QuantumPotential),
            &g,
            1.0,
            &KernelSpec::Parametrix(ParametrixOptions::default()),
            2.0,
        )
        .unwrap();
        assert!(r.max_relative < 1e-3, "{r:?}");
    }

    #[test]
    fn reversal_of_quantum_potential_mc() {
        let g = make_uniform_grid(-1.0, 1.0, 3).unwrap();
        let spec = KernelSpec::MonteCarlo(MonteCarloOptions {
            n_paths: 20_000,
            n_steps: 32,
            seed: 17,
            stream_id: 0,
        });
        let r = time_reversal_residual_in(Arc::new(QuantumPotential), &g, 1.0, &spec, 0.0).unwrap();
        assert!(r.max_z.unwrap() < 3.0, "{r:?}");
    }
}
