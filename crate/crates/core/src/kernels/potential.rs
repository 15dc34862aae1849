use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{FkError, Result};
use crate::example;
use crate::numerics::Grid;

/// A Feynman-Kac potential `c(x,t) = c_+(x,t) - c_-(x,t)` with `c_-`
/// bounded and `c_+` bounded on compact boxes.
pub trait Potential: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    fn eval(&self, x: f64, t: f64) -> f64;

    /// `M` with `c(x,t) >= -M` everywhere.
    fn lower_bound(&self) -> f64;

    /// Upper bound of `c_+` on the box `[-r, r] x [t_lo, t_hi]`.
    fn local_upper_bound(&self, r: f64, t_lo: f64, t_hi: f64) -> f64;

    fn is_time_dependent(&self) -> bool;

    /// Bound on `|c|` over the box.
    fn sup_abs(&self, r: f64, t_lo: f64, t_hi: f64) -> f64 {
        self.local_upper_bound(r, t_lo, t_hi).max(self.lower_bound())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPotential;

impl Potential for ZeroPotential {
    fn name(&self) -> String {
        "zero".into()
    }
    fn eval(&self, _x: f64, _t: f64) -> f64 {
        0.0
    }
    fn lower_bound(&self) -> f64 {
        0.0
    }
    fn local_upper_bound(&self, _r: f64, _t_lo: f64, _t_hi: f64) -> f64 {
        0.0
    }
    fn is_time_dependent(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantPotential {
    pub value: f64,
}

impl Potential for ConstantPotential {
    fn name(&self) -> String {
        format!("constant({})", self.value)
    }
    fn eval(&self, _x: f64, _t: f64) -> f64 {
        self.value
    }
    fn lower_bound(&self) -> f64 {
        (-self.value).max(0.0)
    }
    fn local_upper_bound(&self, _r: f64, _t_lo: f64, _t_hi: f64) -> f64 {
        self.value.max(0.0)
    }
    fn is_time_dependent(&self) -> bool {
        false
    }
}

/// `c(x,t) = x^2 / 2(1+t^2)^2 - 1/(1+t^2)` of the Gaussian wave packet.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuantumPotential;

impl Potential for QuantumPotential {
    fn name(&self) -> String {
        "quantum".into()
    }
    fn eval(&self, x: f64, t: f64) -> f64 {
        example::c_quantum(x, t)
    }
    fn lower_bound(&self) -> f64 {
        example::QUANTUM_LOWER_BOUND
    }
    fn local_upper_bound(&self, r: f64, t_lo: f64, t_hi: f64) -> f64 {
        let t_min = if t_lo <= 0.0 && t_hi >= 0.0 {
            0.0
        } else {
            t_lo.abs().min(t_hi.abs())
        };
        let t_max = t_lo.abs().max(t_hi.abs());
        let s_min = 1.0 + t_min * t_min;
        let s_max = 1.0 + t_max * t_max;
        (r * r / (2.0 * s_min * s_min) - 1.0 / s_max).max(0.0)
    }
    fn is_time_dependent(&self) -> bool {
        true
    }
}

/// `c(x, T - t)`: the potential seen by the time-reversed process.
#[derive(Debug, Clone)]
pub struct TimeReversed {
    pub inner: Arc<dyn Potential>,
    pub horizon: f64,
}

impl Potential for TimeReversed {
    fn name(&self) -> String {
        format!("reversed({}, T={})", self.inner.name(), self.horizon)
    }
    fn eval(&self, x: f64, t: f64) -> f64 {
        self.inner.eval(x, self.horizon - t)
    }
    fn lower_bound(&self) -> f64 {
        self.inner.lower_bound()
    }
    fn local_upper_bound(&self, r: f64, t_lo: f64, t_hi: f64) -> f64 {
        self.inner
            .local_upper_bound(r, self.horizon - t_hi, self.horizon - t_lo)
    }
    fn is_time_dependent(&self) -> bool {
        self.inner.is_time_dependent()
    }
}

/// Named potentials selectable from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum PotentialSpec {
    Zero,
    Constant { value: f64 },
    Quantum,
}

impl PotentialSpec {
    pub fn build(&self) -> Arc<dyn Potential> {
        match *self {
            PotentialSpec::Zero => Arc::new(ZeroPotential),
            PotentialSpec::Constant { value } => Arc::new(ConstantPotential { value }),
            PotentialSpec::Quantum => Arc::new(QuantumPotential),
        }
    }

    pub fn parse(name: &str, value: Option<f64>) -> Result<Self> {
        match name {
            "zero" => Ok(PotentialSpec::Zero),
            "quantum" => Ok(PotentialSpec::Quantum),
            "constant" => value
                .filter(|v| v.is_finite())
                .map(|value| PotentialSpec::Constant { value })
                .ok_or_else(|| {
                    FkError::config("potential.value", "constant potential needs a finite value")
                }),
            other => Err(FkError::config(
                "potential.name",
                format!("unknown potential `{other}` (expected zero, constant, quantum)"),
            )),
        }
    }
}

/// Spot-checks the declared bounds of `pot` on the grid at the given times.
pub fn check_potential(pot: &dyn Potential, grid: &Grid, times: &[f64]) -> Result<()> {
    let m = pot.lower_bound();
    let r = grid.lo().abs().max(grid.hi().abs());
    let (t_lo, t_hi) = times
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)));
    let upper = pot.local_upper_bound(r, t_lo, t_hi);
    for &t in times {
        for &x in grid.points() {
            let c = pot.eval(x, t);
            if !c.is_finite() {
                return Err(FkError::numeric(format!(
                    "potential {} is not finite at (x={x}, t={t})",
                    pot.name()
                )));
            }
            if c < -m * (1.0 + 1e-12) - 1e-300 {
                return Err(FkError::domain(format!(
                    "potential {} violates its lower bound -{m} at (x={x}, t={t}): c={c}",
                    pot.name()
                )));
            }
            if c.max(0.0) > upper * (1.0 + 1e-12) + 1e-300 {
                return Err(FkError::domain(format!(
                    "potential {} exceeds its local upper bound {upper} at (x={x}, t={t}): c={c}",
                    pot.name()
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_uniform_grid;

    #[test]
    fn built_in_bounds_hold_on_grid() {
        let g = make_uniform_grid(-8.0, 8.0, 161).unwrap();
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.05).collect();
        for spec in [
            PotentialSpec::Zero,
            PotentialSpec::Constant { value: 1.0 },
            PotentialSpec::Constant { value: -2.0 },
            PotentialSpec::Quantum,
        ] {
            check_potential(spec.build().as_ref(), &g, &times).unwrap();
        }
        let rev = TimeReversed {
            inner: Arc::new(QuantumPotential),
            horizon: 1.0,
        };
        check_potential(&rev, &g, &times).unwrap();
        assert_eq!(rev.eval(0.3, 0.2), QuantumPotential.eval(0.3, 0.8));
    }

    #[test]
    fn quantum_upper_bound_is_tight_at_origin_time() {
        let b = QuantumPotential.local_upper_bound(8.0, 0.0, 0.05);
        assert!((b - (32.0 - 1.0 / 1.0025)).abs() < 1e-12);
        assert_eq!(QuantumPotential.local_upper_bound(0.5, 0.0, 0.0), 0.0);
    }

    #[test]
    fn bad_bounds_are_reported() {
        #[derive(Debug)]
        struct Liar;
        impl Potential for Liar {
            fn name(&self) -> String {
                "liar".into()
            }
            fn eval(&self, x: f64, _t: f64) -> f64 {
                x
            }
            fn lower_bound(&self) -> f64 {
                0.0
            }
            fn local_upper_bound(&self, r: f64, _: f64, _: f64) -> f64 {
                r
            }
            fn is_time_dependent(&self) -> bool {
                false
            }
        }
        let g = make_uniform_grid(-1.0, 1.0, 5).unwrap();
        assert!(matches!(check_potential(&Liar, &g, &[0.0]), Err(FkError::Domain(_))));
    }

    #[test]
    fn parse_names() {
        assert_eq!(PotentialSpec::parse("zero", None).unwrap(), PotentialSpec::Zero);
        assert!(PotentialSpec::parse("constant", None).is_err());
        assert!(matches!(
            PotentialSpec::parse("coulomb", None),
            Err(FkError::Config { .. })
        ));
    }
}
