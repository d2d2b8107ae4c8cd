//! Smooth concave maximization over `x ≥ 0`.
//!
//! Projected Newton in the style of Bertsekas: coordinates sitting at the
//! boundary with an outward-pointing gradient are treated as active and
//! moved by a scaled gradient step, the rest take a (regularized) Newton
//! step, and an Armijo search runs along the projection arc. When no
//! curvature is available, or the Newton arc fails, a projected-gradient
//! step is used instead.

use crate::error::{Error, Result};
use crate::linalg::real;
use crate::scalar::{pos, Scalar};

/// How much of the local model an evaluation must return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<T> {
    pub value: T,
    /// Present for `Order::Gradient` and above.
    pub gradient: Vec<T>,
    /// Row-major `n × n`, present only for `Order::Hessian` when available.
    pub hessian: Option<Vec<T>>,
}

/// Concave, differentiable objective on the nonnegative orthant.
pub trait SmoothConcave<T: Scalar> {
    fn dim(&self) -> usize;
    fn evaluate(&mut self, x: &[T], order: Order) -> Result<Evaluation<T>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthantSettings<T> {
    /// Stop when the projected gradient's ∞-norm is at most this.
    pub tolerance: T,
    pub max_iter: usize,
    /// Use curvature when the objective supplies it.
    pub newton: bool,
}

impl<T: Scalar> Default for OrthantSettings<T> {
    fn default() -> Self {
        Self {
            tolerance: T::lit(1e-9),
            max_iter: 500,
            newton: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthantOutcome<T> {
    pub x: Vec<T>,
    pub value: T,
    pub projected_gradient_norm: T,
    pub iterations: usize,
    /// Line search could not improve the value any further (the iterate is
    /// optimal to working precision).
    pub stalled: bool,
}

/// `‖P(x + g) − x‖∞`, zero exactly at KKT points of `max f, x ≥ 0`.
fn projected_gradient_norm<T: Scalar>(x: &[T], g: &[T]) -> T {
    x.iter()
        .zip(g)
        .map(|(xi, gi)| (pos(*xi + *gi) - *xi).abs())
        .fold(T::zero(), T::max)
}

fn check_finite<T: Scalar>(e: &Evaluation<T>, iteration: usize) -> Result<()> {
    let bad = !e.value.is_finite()
        || e.gradient.iter().any(|g| !g.is_finite())
        || e.hessian
            .as_ref()
            .is_some_and(|h| h.iter().any(|v| !v.is_finite()));
    if bad {
        return Err(Error::NumericalFailure {
            context: "objective returned a non-finite value or gradient".into(),
            iteration,
            trace: Vec::new(),
        });
    }
    Ok(())
}

/// Maximizes `f` over `x ≥ 0` starting from the projection of `start`.
pub fn maximize_concave_orthant<T, F>(
    f: &mut F,
    start: &[T],
    settings: &OrthantSettings<T>,
) -> Result<OrthantOutcome<T>>
where
    T: Scalar,
    F: SmoothConcave<T> + ?Sized,
{
    let n = f.dim();
    if start.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: start.len(),
        });
    }
    let sigma = T::lit(1e-4);
    let half = T::lit(0.5);
    let order = if settings.newton {
        Order::Hessian
    } else {
        Order::Gradient
    };
    let mut x: Vec<T> = start.iter().map(|v| pos(*v)).collect();
    let mut eval = f.evaluate(&x, order)?;
    check_finite(&eval, 0)?;
    let mut grad_step = T::one();
    let mut trace = vec![eval.value.as_f64()];
    let mut flat_steps = 0;

    for iter in 0..=settings.max_iter {
        let g = &eval.gradient;
        let pg = projected_gradient_norm(&x, g);
        if pg <= settings.tolerance {
            return Ok(OrthantOutcome {
                x,
                value: eval.value,
                projected_gradient_norm: pg,
                iterations: iter,
                stalled: false,
            });
        }
        if iter == settings.max_iter {
            break;
        }

        // Active set: at (or near) the boundary with the gradient pushing out.
        let eps_b = pg.min(T::lit(1e-3));
        let active: Vec<bool> = (0..n).map(|i| x[i] <= eps_b && g[i] < T::zero()).collect();
        let mut accepted = None;

        if let Some(h) = eval.hessian.as_ref() {
            if let Some(d) = newton_direction(&x, h, g, &active, n) {
                accepted = arc_search(
                    f,
                    &x,
                    eval.value,
                    g,
                    |t| (0..n).map(|i| pos(x[i] + t * d[i])).collect(),
                    sigma,
                    half,
                    T::one(),
                )?;
            }
        }
        if accepted.is_none() {
            let start_t = grad_step * T::lit(4.0);
            accepted = arc_search(
                f,
                &x,
                eval.value,
                g,
                |t| (0..n).map(|i| pos(x[i] + t * g[i])).collect(),
                sigma,
                half,
                start_t,
            )?;
            if let Some((t, _, _)) = accepted.as_ref() {
                grad_step = *t;
            }
        }
        let Some((_, x_new, _)) = accepted else {
            return Ok(OrthantOutcome {
                x,
                value: eval.value,
                projected_gradient_norm: pg,
                iterations: iter,
                stalled: true,
            });
        };
        x = x_new;
        let previous = eval.value;
        eval = f.evaluate(&x, order)?;
        check_finite(&eval, iter + 1)?;
        trace.push(eval.value.as_f64());
        // Several accepted steps without a representable gain: optimal to
        // working precision.
        let resolution = T::lit(8.0) * T::epsilon() * previous.abs().max(T::min_positive_value());
        flat_steps = if eval.value - previous <= resolution {
            flat_steps + 1
        } else {
            0
        };
        if flat_steps >= 3 {
            let pg = projected_gradient_norm(&x, &eval.gradient);
            return Ok(OrthantOutcome {
                x,
                value: eval.value,
                projected_gradient_norm: pg,
                iterations: iter + 1,
                stalled: true,
            });
        }
    }
    Err(Error::NumericalFailure {
        context: format!(
            "projected Newton did not reach tolerance {} in {} iterations",
            settings.tolerance, settings.max_iter
        ),
        iteration: settings.max_iter,
        trace,
    })
}

/// Newton direction on the free coordinates, scaled-gradient on the active
/// ones. `None` when the reduced Hessian cannot be made negative definite.
fn newton_direction<T: Scalar>(
    x: &[T],
    h: &[T],
    g: &[T],
    active: &[bool],
    n: usize,
) -> Option<Vec<T>> {
    let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
    let m = free.len();
    let mut d = vec![T::zero(); n];
    for i in 0..n {
        if active[i] {
            let c = (-h[i * n + i]).max(T::lit(1e-12));
            // Reach the boundary at unit step.
            d[i] = (g[i] / c).min(-x[i]);
        }
    }
    if m == 0 {
        return Some(d);
    }
    // Solve (−H_FF + μI) d_F = g_F, raising μ until the factorization succeeds.
    let scale = free
        .iter()
        .map(|&i| h[i * n + i].abs())
        .fold(T::zero(), T::max)
        .max(T::min_positive_value());
    let mut mu = T::zero();
    for _ in 0..12 {
        let mut a = vec![T::zero(); m * m];
        for (r, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate() {
                a[r * m + c] = -h[i * n + j];
            }
            a[r * m + r] += mu;
        }
        if let Some(l) = real::cholesky(&a, m) {
            let rhs: Vec<T> = free.iter().map(|&i| g[i]).collect();
            let sol = real::cholesky_solve(&l, m, &rhs);
            if sol.iter().all(|v| v.is_finite()) {
                for (r, &i) in free.iter().enumerate() {
                    d[i] = sol[r];
                }
                return Some(d);
            }
        }
        mu = if mu == T::zero() {
            scale * T::lit(1e-10)
        } else {
            mu * T::lit(100.0)
        };
    }
    None
}

/// Armijo backtracking along `t ↦ path(t)`, accepting when
/// `f(x(t)) ≥ f(x) + σ gᵀ(x(t) − x)` with positive predicted increase.
#[allow(clippy::too_many_arguments)]
fn arc_search<T, F, P>(
    f: &mut F,
    x: &[T],
    fx: T,
    g: &[T],
    path: P,
    sigma: T,
    shrink: T,
    t0: T,
) -> Result<Option<(T, Vec<T>, T)>>
where
    T: Scalar,
    F: SmoothConcave<T> + ?Sized,
    P: Fn(T) -> Vec<T>,
{
    let mut t = t0;
    for _ in 0..60 {
        let xt = path(t);
        let predicted = real::dot(
            g,
            &xt.iter().zip(x).map(|(a, b)| *a - *b).collect::<Vec<_>>(),
        );
        if !(predicted > T::zero()) {
            if xt.iter().zip(x).all(|(a, b)| a == b) {
                return Ok(None);
            }
            t = t * shrink;
            continue;
        }
        let ft = f.evaluate(&xt, Order::Value)?.value;
        if ft.is_finite() && ft >= fx + sigma * predicted {
            return Ok(Some((t, xt, ft)));
        }
        t = t * shrink;
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// f(x) = −Σ w_i (x_i − c_i)² + coupling·x_0·x_1 (concave for small coupling).
    struct Quadratic {
        c: Vec<f64>,
        w: Vec<f64>,
        coupling: f64,
        curvature: bool,
    }

    impl SmoothConcave<f64> for Quadratic {
        fn dim(&self) -> usize {
            self.c.len()
        }
        fn evaluate(&mut self, x: &[f64], order: Order) -> Result<Evaluation<f64>> {
            let n = self.dim();
            let mut value = self.coupling * x[0] * x[1];
            for i in 0..n {
                value -= self.w[i] * (x[i] - self.c[i]).powi(2);
            }
            let mut gradient = Vec::new();
            let mut hessian = None;
            if order >= Order::Gradient {
                gradient = (0..n)
                    .map(|i| -2.0 * self.w[i] * (x[i] - self.c[i]))
                    .collect();
                gradient[0] += self.coupling * x[1];
                gradient[1] += self.coupling * x[0];
            }
            if order == Order::Hessian && self.curvature {
                let mut h = vec![0.0; n * n];
                for i in 0..n {
                    h[i * n + i] = -2.0 * self.w[i];
                }
                h[1] += self.coupling;
                h[n] += self.coupling;
                hessian = Some(h);
            }
            Ok(Evaluation {
                value,
                gradient,
                hessian,
            })
        }
    }

    #[test]
    fn interior_optimum_is_found_with_and_without_curvature() {
        for curvature in [true, false] {
            let mut f = Quadratic {
                c: vec![1.0, 1.0, 1.0],
                w: vec![1.0, 1.0, 1.0],
                coupling: 0.0,
                curvature,
            };
            let out =
                maximize_concave_orthant(&mut f, &[0.0; 3], &OrthantSettings::default()).unwrap();
            for xi in &out.x {
                assert!((xi - 1.0).abs() < 1e-8, "{:?}", out.x);
            }
        }
    }

    #[test]
    fn pure_descent_stays_at_origin() {
        struct Linear;
        impl SmoothConcave<f64> for Linear {
            fn dim(&self) -> usize {
                3
            }
            fn evaluate(&mut self, x: &[f64], _: Order) -> Result<Evaluation<f64>> {
                Ok(Evaluation {
                    value: -x.iter().sum::<f64>(),
                    gradient: vec![-1.0; 3],
                    hessian: Some(vec![0.0; 9]),
                })
            }
        }
        let out =
            maximize_concave_orthant(&mut Linear, &[2.0, 0.5, 0.0], &OrthantSettings::default())
                .unwrap();
        assert_eq!(out.x, vec![0.0; 3]);
    }

    #[test]
    fn mixed_active_set_with_coupling() {
        // Coordinate 1 wants to be negative and must be clamped at zero.
        let mut f = Quadratic {
            c: vec![2.0, -1.0, 0.5],
            w: vec![1.0, 3.0, 0.5],
            coupling: 0.5,
            curvature: true,
        };
        let out = maximize_concave_orthant(&mut f, &[5.0, 5.0, 5.0], &OrthantSettings::default())
            .unwrap();
        assert_eq!(out.x[1], 0.0);
        assert!((out.x[0] - 2.0).abs() < 1e-8 && (out.x[2] - 0.5).abs() < 1e-8);
        assert!(out.projected_gradient_norm <= 1e-9);
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        struct Bad;
        impl SmoothConcave<f64> for Bad {
            fn dim(&self) -> usize {
                1
            }
            fn evaluate(&mut self, _: &[f64], _: Order) -> Result<Evaluation<f64>> {
                Ok(Evaluation {
                    value: 0.0,
                    gradient: vec![f64::NAN],
                    hessian: None,
                })
            }
        }
        let err =
            maximize_concave_orthant(&mut Bad, &[1.0], &OrthantSettings::default()).unwrap_err();
        assert!(matches!(err, Error::NumericalFailure { .. }));
    }

    #[test]
    fn log_barrier_like_objective() {
        // f(x) = ln(1 + x0 + 2x1) − 0.3(x0 + x1): optimum on the x1 axis.
        struct LogSum;
        impl SmoothConcave<f64> for LogSum {
            fn dim(&self) -> usize {
                2
            }
            fn evaluate(&mut self, x: &[f64], order: Order) -> Result<Evaluation<f64>> {
                let s = 1.0 + x[0] + 2.0 * x[1];
                let a = [1.0, 2.0];
                Ok(Evaluation {
                    value: s.ln() - 0.3 * (x[0] + x[1]),
                    gradient: (0..2).map(|i| a[i] / s - 0.3).collect(),
                    hessian: (order == Order::Hessian)
                        .then(|| (0..4).map(|k| -a[k / 2] * a[k % 2] / (s * s)).collect()),
                })
            }
        }
        let out = maximize_concave_orthant(&mut LogSum, &[1.0, 1.0], &OrthantSettings::default())
            .unwrap();
        // Stationarity in x1: 2/(1 + 2x1) = 0.3.
        assert_eq!(out.x[0], 0.0);
        assert!(
            (out.x[1] - (2.0 / 0.3 - 1.0) / 2.0).abs() < 1e-7,
            "{:?}",
            out.x
        );
    }
}
