//! Central-cut ellipsoid method for maximizing a concave, possibly
//! nonsmooth function, optionally restricted to the nonnegative orthant.
//!
//! The ellipsoid is `{x : (x − c)ᵀ P⁻¹ (x − c) ≤ 1}`. A supergradient `s` at
//! the centre keeps the half-space `sᵀ(x − c) ≥ 0`, which contains every
//! maximizer. Each objective evaluation also yields the upper bound
//! `g(c) + sqrt(sᵀ P s) ≥ max g` over the current ellipsoid, so the gap
//! between the best value and the smallest such bound is a certificate.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::real;
use crate::scalar::Scalar;

/// Centre, shape matrix and iteration counter of the current ellipsoid.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidState<T> {
    center: Vec<T>,
    shape: Vec<T>,
    iteration: usize,
}

impl<T: Scalar> EllipsoidState<T> {
    /// Ellipsoid with explicit centre and symmetric positive definite shape
    /// (row-major).
    pub fn new(center: Vec<T>, shape: Vec<T>) -> Result<Self> {
        let n = center.len();
        if n == 0 {
            return Err(domain("ellipsoid needs at least one dimension"));
        }
        if shape.len() != n * n {
            return Err(Error::Dimension {
                expected: n * n,
                found: shape.len(),
            });
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(domain("ellipsoid centre must be finite"));
        }
        if real::cholesky(&shape, n).is_none() {
            return Err(domain("shape matrix must be symmetric positive definite"));
        }
        Ok(Self {
            center,
            shape,
            iteration: 0,
        })
    }

    /// Ball `‖x − center‖ ≤ radius`.
    pub fn ball(center: Vec<T>, radius: T) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(domain("ball radius must be positive"));
        }
        let n = center.len();
        let mut shape = vec![T::zero(); n * n];
        for i in 0..n {
            shape[i * n + i] = radius * radius;
        }
        Self::new(center, shape)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[T] {
        &self.center
    }

    pub fn shape(&self) -> &[T] {
        &self.shape
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// `ln det P`; the ellipsoid volume is proportional to `exp(½ ln det P)`.
    pub fn ln_det_shape(&self) -> Option<T> {
        real::ln_det(&self.shape, self.dim())
    }

    /// `sqrt(sᵀ P s)`, the half-width of the ellipsoid along `s`.
    pub fn width_along(&self, s: &[T]) -> T {
        let ps = real::mat_vec(&self.shape, self.dim(), s);
        real::dot(s, &ps).max(T::zero()).sqrt()
    }

    /// Central cut keeping `{x : sᵀ(x − c) ≥ 0}`.
    pub fn cut(&mut self, s: &[T]) -> Result<()> {
        let n = self.dim();
        if s.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: s.len(),
            });
        }
        let ps = real::mat_vec(&self.shape, n, s);
        let sps = real::dot(s, &ps);
        if !(sps > T::zero()) || !sps.is_finite() {
            return Err(Error::NumericalFailure {
                context: format!("ellipsoid cut direction has sᵀPs = {sps}"),
                iteration: self.iteration,
                trace: Vec::new(),
            });
        }
        let root = sps.sqrt();
        let b: Vec<T> = ps.iter().map(|v| *v / root).collect();
        if n == 1 {
            // Interval halving; the general formula degenerates at n = 1.
            self.center[0] += b[0] / T::lit(2.0);
            self.shape[0] = self.shape[0] / T::lit(4.0);
        } else {
            let nf = T::lit(n as f64);
            let step = T::one() / (nf + T::one());
            let scale = nf * nf / (nf * nf - T::one());
            let shrink = T::lit(2.0) / (nf + T::one());
            for (c, bi) in self.center.iter_mut().zip(&b) {
                *c += step * *bi;
            }
            for i in 0..n {
                for j in i..n {
                    let v = scale * (self.shape[i * n + j] - shrink * b[i] * b[j]);
                    self.shape[i * n + j] = v;
                    self.shape[j * n + i] = v;
                }
            }
        }
        self.iteration += 1;
        if self.center.iter().any(|c| !c.is_finite()) || real::cholesky(&self.shape, n).is_none() {
            return Err(Error::NumericalFailure {
                context: "ellipsoid shape matrix lost positive definiteness".into(),
                iteration: self.iteration,
                trace: Vec::new(),
            });
        }
        Ok(())
    }
}

/// Answer of a cutting-plane oracle at a query point.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleAnswer<T> {
    /// Objective value and a supergradient at a feasible point.
    Value { value: T, supergradient: Vec<T> },
    /// The point is infeasible; `normal` points toward the feasible set.
    Infeasible { normal: Vec<T> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidSettings<T> {
    /// Stop once `upper − best ≤ rel_tol·|best| + abs_tol`.
    pub rel_tol: T,
    pub abs_tol: T,
    pub max_iter: usize,
    /// Restrict the search to `x ≥ 0` with coordinate cuts.
    pub nonnegative: bool,
}

impl<T: Scalar> EllipsoidSettings<T> {
    pub fn relative(rel_tol: T, max_iter: usize) -> Self {
        Self {
            rel_tol,
            abs_tol: T::zero(),
            max_iter,
            nonnegative: true,
        }
    }
}

/// Snapshot handed to a monitor after every objective evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Progress<'a, T> {
    pub iteration: usize,
    pub point: &'a [T],
    pub value: T,
    pub best_value: T,
    pub best_point: &'a [T],
    pub upper_bound: T,
    /// Ellipsoid in which `point` is the centre.
    pub state: &'a EllipsoidState<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub best_value: f64,
    pub upper_bound: f64,
}

#[derive(Debug, Clone)]
pub struct EllipsoidOutcome<T> {
    pub argmax: Vec<T>,
    pub value: T,
    /// Smallest certified upper bound on the maximum.
    pub upper_bound: T,
    /// Number of cuts performed.
    pub iterations: usize,
    /// Whether the gap criterion was met (or the monitor stopped the run).
    pub converged: bool,
    pub trace: Vec<TracePoint>,
    pub final_state: EllipsoidState<T>,
}

impl<T: Scalar> EllipsoidOutcome<T> {
    pub fn gap(&self) -> T {
        self.upper_bound - self.value
    }
}

/// Maximizes a concave function with the ellipsoid method.
pub fn ellipsoid_maximize<T, F>(
    oracle: F,
    initial: EllipsoidState<T>,
    settings: &EllipsoidSettings<T>,
) -> Result<EllipsoidOutcome<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<OracleAnswer<T>>,
{
    ellipsoid_maximize_with(oracle, initial, settings, |_| Control::Continue)
}

/// As [`ellipsoid_maximize`], with a monitor that may stop the run early.
pub fn ellipsoid_maximize_with<T, F, M>(
    mut oracle: F,
    initial: EllipsoidState<T>,
    settings: &EllipsoidSettings<T>,
    mut monitor: M,
) -> Result<EllipsoidOutcome<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<OracleAnswer<T>>,
    M: FnMut(&Progress<'_, T>) -> Control,
{
    let n = initial.dim();
    let mut state = initial;
    let mut best_value = T::neg_infinity();
    let mut best_point = state.center.clone();
    let mut upper = T::infinity();
    let mut trace = Vec::new();
    let with_trace = |e: Error, trace: &[TracePoint]| match e {
        Error::NumericalFailure {
            context, iteration, ..
        } => Error::NumericalFailure {
            context,
            iteration,
            trace: trace.iter().map(|t| t.best_value).collect(),
        },
        other => other,
    };

    loop {
        let outside = settings.nonnegative && state.center.iter().any(|c| *c < T::zero());
        let direction = if outside {
            let k = (0..n)
                .min_by(|&a, &b| {
                    state.center[a]
                        .partial_cmp(&state.center[b])
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(0);
            let mut e = vec![T::zero(); n];
            e[k] = T::one();
            e
        } else {
            match oracle(&state.center)? {
                OracleAnswer::Infeasible { normal } => normal,
                OracleAnswer::Value {
                    value,
                    supergradient,
                } => {
                    if supergradient.len() != n {
                        return Err(Error::Dimension {
                            expected: n,
                            found: supergradient.len(),
                        });
                    }
                    if !value.is_finite() || supergradient.iter().any(|s| !s.is_finite()) {
                        return Err(with_trace(
                            Error::NumericalFailure {
                                context: "oracle returned a non-finite value or supergradient"
                                    .into(),
                                iteration: state.iteration,
                                trace: Vec::new(),
                            },
                            &trace,
                        ));
                    }
                    if value > best_value {
                        best_value = value;
                        best_point.clone_from(&state.center);
                    }
                    let bound = value + state.width_along(&supergradient);
                    if bound < upper {
                        upper = bound;
                    }
                    trace.push(TracePoint {
                        iteration: state.iteration,
                        best_value: best_value.as_f64(),
                        upper_bound: upper.as_f64(),
                    });
                    let progress = Progress {
                        iteration: state.iteration,
                        point: &state.center,
                        value,
                        best_value,
                        best_point: &best_point,
                        upper_bound: upper,
                        state: &state,
                    };
                    let stop = monitor(&progress) == Control::Stop;
                    let certified = upper - best_value
                        <= settings.rel_tol * best_value.abs() + settings.abs_tol;
                    if stop || certified || supergradient.iter().all(|s| *s == T::zero()) {
                        return Ok(EllipsoidOutcome {
                            argmax: best_point,
                            value: best_value,
                            upper_bound: if supergradient.iter().all(|s| *s == T::zero()) {
                                best_value.max(value)
                            } else {
                                upper
                            },
                            iterations: state.iteration,
                            converged: true,
                            trace,
                            final_state: state,
                        });
                    }
                    supergradient
                }
            }
        };
        if state.iteration >= settings.max_iter {
            return Ok(EllipsoidOutcome {
                argmax: best_point,
                value: best_value,
                upper_bound: upper,
                iterations: state.iteration,
                converged: false,
                trace,
                final_state: state,
            });
        }
        state.cut(&direction).map_err(|e| with_trace(e, &trace))?;
    }
}
