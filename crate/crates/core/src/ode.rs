//! Integration of `dx/dt = f(x, t)` over `t ∈ [0, 1]`: fixed-step explicit
//! Euler and adaptive Dormand–Prince 5(4).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    Euler,
    Dopri5,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: SolverMethod,
    pub euler_steps: usize,
    pub rtol: f64,
    pub atol: f64,
    /// Cap on attempted (accepted + rejected) steps.
    pub max_steps: usize,
    pub record_trajectory: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolverMethod::Dopri5,
            euler_steps: 10,
            rtol: 1e-3,
            atol: 1e-3,
            max_steps: 10_000,
            record_trajectory: false,
        }
    }
}

impl SolverConfig {
    pub fn euler(steps: usize) -> Self {
        Self {
            method: SolverMethod::Euler,
            euler_steps: steps,
            ..Self::default()
        }
    }

    pub fn dopri5(rtol: f64, atol: f64) -> Self {
        Self {
            method: SolverMethod::Dopri5,
            rtol,
            atol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.euler_steps == 0 {
            return Err(Error::InvalidArgument("euler_steps must be ≥ 1".into()));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidArgument("rtol and atol must be > 0".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One row per entry of `times`.
    pub states: Matrix,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x1: Vec<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub trajectory: Option<Trajectory>,
}

struct Recorder {
    on: bool,
    times: Vec<f64>,
    states: Vec<f64>,
}

impl Recorder {
    fn new(on: bool, x0: &[f64]) -> Self {
        let mut r = Self {
            on,
            times: Vec::new(),
            states: Vec::new(),
        };
        r.push(0.0, x0);
        r
    }

    fn push(&mut self, t: f64, x: &[f64]) {
        if self.on {
            self.times.push(t);
            self.states.extend_from_slice(x);
        }
    }

    fn finish(self, d: usize, accepted: usize, rejected: usize) -> Option<Trajectory> {
        self.on.then(|| Trajectory {
            states: Matrix::from_vec(self.times.len(), d, self.states).expect("recorded shape"),
            times: self.times,
            accepted_steps: accepted,
            rejected_steps: rejected,
        })
    }
}

fn finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Integrates from `t = 0` to `t = 1`.
///
/// Field errors and non-finite states are reported as
/// [`Error::Diverged`] carrying the time at which they occurred.
pub fn integrate<F>(mut field: F, x0: &[f64], config: &SolverConfig) -> Result<Solution>
where
    F: FnMut(&[f64], f64) -> Result<Vec<f64>>,
{
    config.validate()?;
    if !finite(x0) {
        return Err(Error::Diverged(0.0));
    }
    let mut eval = |x: &[f64], t: f64| -> Result<Vec<f64>> {
        match field(x, t) {
            Ok(v) if finite(&v) => Ok(v),
            Ok(_) => Err(Error::Diverged(t)),
            Err(e) if e.is_numerical() => Err(e),
            Err(Error::NonFinite(_)) => Err(Error::Diverged(t)),
            Err(e) => Err(e),
        }
    };
    match config.method {
        SolverMethod::Euler => euler(&mut eval, x0, config),
        SolverMethod::Dopri5 => dopri5(&mut eval, x0, config),
    }
}

fn euler<F>(field: &mut F, x0: &[f64], config: &SolverConfig) -> Result<Solution>
where
    F: FnMut(&[f64], f64) -> Result<Vec<f64>>,
{
    let steps = config.euler_steps;
    if steps > config.max_steps {
        return Err(Error::StepLimit {
            steps: config.max_steps,
            t: 0.0,
        });
    }
    let h = 1.0 / steps as f64;
    let mut x = x0.to_vec();
    let mut rec = Recorder::new(config.record_trajectory, x0);
    for i in 0..steps {
        let t = i as f64 / steps as f64;
        let v = field(&x, t)?;
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi += h * vi;
        }
        let t_next = (i + 1) as f64 / steps as f64;
        if !finite(&x) {
            return Err(Error::Diverged(t_next));
        }
        rec.push(t_next, &x);
    }
    Ok(Solution {
        trajectory: rec.finish(x0.len(), steps, 0),
        x1: x,
        accepted_steps: steps,
        rejected_steps: 0,
    })
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];
const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const INITIAL_STEP: f64 = 0.01;

fn dopri5<F>(field: &mut F, x0: &[f64], config: &SolverConfig) -> Result<Solution>
where
    F: FnMut(&[f64], f64) -> Result<Vec<f64>>,
{
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut t = 0.0f64;
    let mut h = INITIAL_STEP;
    let mut accepted = 0;
    let mut rejected = 0;
    let mut rec = Recorder::new(config.record_trajectory, x0);
    let mut k: Vec<Vec<f64>> = vec![Vec::new(); 7];
    k[0] = field(&x, t)?;
    let mut stage = vec![0.0; d];

    while t < 1.0 {
        if accepted + rejected >= config.max_steps {
            return Err(Error::StepLimit {
                steps: config.max_steps,
                t,
            });
        }
        let last = t + h >= 1.0;
        if last {
            h = 1.0 - t;
        }
        for s in 1..7 {
            for (j, st) in stage.iter_mut().enumerate() {
                let incr: f64 = (0..s).map(|r| A[s][r] * k[r][j]).sum();
                *st = x[j] + h * incr;
            }
            k[s] = field(&stage, t + C[s] * h)?;
        }
        // Stage 7 was evaluated at the fifth-order solution, now in `stage`.
        let x_new = stage.clone();
        let mut sum = 0.0;
        for j in 0..d {
            let err_j = h * (0..7).map(|r| E[r] * k[r][j]).sum::<f64>();
            let sc = config.atol + config.rtol * x[j].abs().max(x_new[j].abs());
            sum += (err_j / sc) * (err_j / sc);
        }
        let err = if d == 0 { 0.0 } else { (sum / d as f64).sqrt() };
        if !err.is_finite() {
            return Err(Error::Diverged(t));
        }
        let factor = if err == 0.0 {
            MAX_FACTOR
        } else {
            (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
        };
        if err <= 1.0 {
            t = if last { 1.0 } else { t + h };
            x = x_new;
            k.swap(0, 6);
            accepted += 1;
            rec.push(t, &x);
            h *= factor;
        } else {
            rejected += 1;
            h *= factor.min(1.0);
        }
    }
    Ok(Solution {
        trajectory: rec.finish(d, accepted, rejected),
        x1: x,
        accepted_steps: accepted,
        rejected_steps: rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_is_stationary() {
        let x0 = [1.5, -2.0];
        let sol = integrate(|x, _| Ok(vec![0.0; x.len()]), &x0, &SolverConfig::default()).unwrap();
        assert_eq!(sol.x1, x0.to_vec());
        assert!(sol.accepted_steps >= 1);
        assert_eq!(sol.rejected_steps, 0);
    }

    #[test]
    fn exponential_growth() {
        let sol = integrate(|x, _| Ok(x.to_vec()), &[1.0], &SolverConfig::default()).unwrap();
        assert!((sol.x1[0] - std::f64::consts::E).abs() < 5e-3);
    }

    #[test]
    fn euler_exact_on_constant_field() {
        for steps in [1, 2, 8, 64] {
            let sol = integrate(|_, _| Ok(vec![0.5, -0.25]), &[1.0, 2.0], &SolverConfig::euler(steps)).unwrap();
            assert_eq!(sol.x1, vec![1.5, 1.75]);
        }
        // Non-dyadic step sizes are exact up to accumulated rounding.
        for steps in [3, 10, 37] {
            let sol = integrate(|_, _| Ok(vec![0.5, -0.25]), &[1.0, 2.0], &SolverConfig::euler(steps)).unwrap();
            assert!((sol.x1[0] - 1.5).abs() < 1e-14 && (sol.x1[1] - 1.75).abs() < 1e-14);
        }
    }

    #[test]
    fn divergence_reports_time() {
        // x' = x² from x = 2 blows up at t = 0.5.
        let err = integrate(|x, _| Ok(vec![x[0] * x[0]]), &[2.0], &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Diverged(_) | Error::StepLimit { .. }), "{err}");
        let err = integrate(
            |_, t| Ok(vec![if t > 0.35 { f64::NAN } else { 1.0 }]),
            &[0.0],
            &SolverConfig::euler(10),
        )
        .unwrap_err();
        match err {
            Error::Diverged(t) => assert!((t - 0.4).abs() < 1e-12),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn step_limit() {
        let cfg = SolverConfig {
            max_steps: 3,
            ..SolverConfig::dopri5(1e-10, 1e-10)
        };
        let err = integrate(|x, _| Ok(x.to_vec()), &[1.0], &cfg).unwrap_err();
        assert!(matches!(err, Error::StepLimit { steps: 3, .. }));
    }

    #[test]
    fn trajectory_shape() {
        let cfg = SolverConfig {
            record_trajectory: true,
            ..SolverConfig::default()
        };
        let sol = integrate(|x, _| Ok(vec![-x[0], 1.0]), &[1.0, 0.0], &cfg).unwrap();
        let tr = sol.trajectory.unwrap();
        assert_eq!(tr.times[0], 0.0);
        assert_eq!(*tr.times.last().unwrap(), 1.0);
        assert!(tr.times.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(tr.states.rows(), tr.times.len());
        assert_eq!(tr.states.row(tr.times.len() - 1), sol.x1.as_slice());
    }
}
