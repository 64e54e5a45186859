use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::Transform;

use super::chain::KinematicChain;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkWeights {
    pub pos: f64,
    pub ori: f64,
    pub reg: f64,
    pub smooth: f64,
}

impl Default for IkWeights {
    fn default() -> Self {
        Self {
            pos: 1.0,
            ori: 0.5,
            reg: 1e-3,
            smooth: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Gradient-norm tolerance.
    pub tolerance: f64,
    pub mu_initial: f64,
    pub mu_final: f64,
    pub mu_factor: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-9,
            mu_initial: 1e-4,
            mu_final: 1e-12,
            mu_factor: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkProblem<'a> {
    pub chain: &'a KinematicChain,
    pub target: Transform,
    pub weights: IkWeights,
    pub q_ref: Vec<f64>,
    pub q_prev: Vec<f64>,
    pub settings: SolverSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkResult {
    pub q_star: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl<'a> IkProblem<'a> {
    pub fn new(chain: &'a KinematicChain, target: Transform, q_ref: Vec<f64>, q_prev: Vec<f64>) -> Self {
        Self {
            chain,
            target,
            weights: IkWeights::default(),
            q_ref,
            q_prev,
            settings: SolverSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.chain.dof();
        for (what, v) in [("q_ref", &self.q_ref), ("q_prev", &self.q_prev)] {
            if v.len() != n {
                return Err(Error::dims(what, n, v.len()));
            }
            if !self.chain.within_limits(v) {
                return Err(Error::InvalidInput(format!("{what} violates joint limits")));
            }
        }
        let w = self.weights;
        if [w.pos, w.ori, w.reg, w.smooth].iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidInput("IK weights must be non-negative".into()));
        }
        if !(w.pos > 0.0 || w.ori > 0.0) {
            return Err(Error::InvalidInput("one of the tracking weights must be positive".into()));
        }
        Ok(())
    }

    /// Position error norm and geodesic orientation error at `q`.
    pub fn tracking_error(&self, q: &[f64]) -> Result<(f64, f64)> {
        let t = self.chain.forward_kinematics(q)?;
        Ok((
            (t.translation - self.target.translation).norm(),
            t.rotation.angle_to(&self.target.rotation),
        ))
    }
}

struct Eval {
    cost: f64,
    grad: DVector<f64>,
    /// Gauss-Newton curvature of the tracking and quadratic terms.
    hess: DMatrix<f64>,
}

fn evaluate(p: &IkProblem, q: &[f64], want_hess: bool) -> Result<Eval> {
    let n = q.len();
    let w = p.weights;
    let f = p.chain.frames(q)?;
    let pos_err = f.ee.translation - p.target.translation;
    // World-frame rotation vector of R(q) R*^T; d|phi|^2/dq_i = 2 phi . axis_i.
    let phi = f.ee.rotation.compose(&p.target.rotation.inverse()).log();
    let mut cost = w.pos * pos_err.norm_squared() + w.ori * phi.norm_squared();
    let mut grad = DVector::zeros(n);
    let mut jp = DMatrix::zeros(3, n);
    let mut jw = DMatrix::zeros(3, n);
    for i in 0..n {
        let lin = f.axes[i].cross(&(f.ee.translation - f.origins[i]));
        grad[i] = 2.0 * w.pos * pos_err.dot(&lin) + 2.0 * w.ori * phi.dot(&f.axes[i]);
        for r in 0..3 {
            jp[(r, i)] = lin[r];
            jw[(r, i)] = f.axes[i][r];
        }
    }
    for i in 0..n {
        let dr = q[i] - p.q_ref[i];
        let ds = q[i] - p.q_prev[i];
        cost += w.reg * dr * dr + w.smooth * ds * ds;
        grad[i] += 2.0 * w.reg * dr + 2.0 * w.smooth * ds;
    }
    let hess = if want_hess {
        let mut h = jp.transpose() * &jp * (2.0 * w.pos) + jw.transpose() * &jw * (2.0 * w.ori);
        for i in 0..n {
            h[(i, i)] += 2.0 * (w.reg + w.smooth);
        }
        h
    } else {
        DMatrix::zeros(0, 0)
    };
    Ok(Eval { cost, grad, hess })
}

/// Objective value and analytic gradient.
pub fn ik_cost(problem: &IkProblem, q: &[f64]) -> Result<(f64, Vec<f64>)> {
    if q.len() != problem.chain.dof() || problem.q_ref.len() != q.len() || problem.q_prev.len() != q.len() {
        return Err(Error::dims("ik_cost joint vector", problem.chain.dof(), q.len()));
    }
    let e = evaluate(problem, q, false)?;
    Ok((e.cost, e.grad.iter().copied().collect()))
}

fn barrier(q: &[f64], lo: &[f64], hi: &[f64], mu: f64) -> f64 {
    q.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&v, (&l, &h))| -mu * ((v - l).ln() + (h - v).ln()))
        .sum()
}

/// Norm of the projected-gradient step `P(q - grad) - q`: zero exactly at
/// first-order stationary points of the box-constrained cost.
fn projected_gradient_norm(q: &[f64], grad: &DVector<f64>, lo: &[f64], hi: &[f64]) -> f64 {
    q.iter()
        .enumerate()
        .map(|(i, &v)| {
            let d = (v - grad[i]).clamp(lo[i], hi[i]) - v;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// One accepted iterate of the barrier homotopy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub mu: f64,
    pub barrier_objective: f64,
    pub cost: f64,
}

pub fn solve_ik(problem: &IkProblem, q_init: &[f64]) -> Result<IkResult> {
    solve_ik_traced(problem, q_init).map(|(r, _)| r)
}

/// Local solves from `q_init` and then from up to `restarts` seeded random
/// interior configurations; returns the lowest-cost result. Stops early once
/// the cost drops below `good_enough`.
pub fn solve_ik_restarts(
    problem: &IkProblem,
    q_init: &[f64],
    restarts: usize,
    good_enough: f64,
    seed: u64,
) -> Result<IkResult> {
    use rand::Rng;
    let mut best = solve_ik(problem, q_init)?;
    let (lo, hi) = (problem.chain.lower(), problem.chain.upper());
    let mut rng = crate::rng::seeded(seed);
    for _ in 0..restarts {
        if best.cost < good_enough {
            break;
        }
        let start: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(&l, &h)| {
                let pad = 0.05 * (h - l);
                rng.random_range(l + pad..h - pad)
            })
            .collect();
        let r = solve_ik(problem, &start)?;
        if r.cost < best.cost {
            best = r;
        }
    }
    Ok(best)
}

/// Bound-constrained minimization by a log-barrier homotopy.
///
/// For each barrier weight `mu` (decreased geometrically), a
/// Levenberg-damped Gauss-Newton inner loop minimizes
/// `cost(q) - mu * sum(ln(q - lo) + ln(hi - q))` with a fraction-to-boundary
/// rule and Armijo backtracking, so every iterate stays strictly inside the
/// limits and the barrier objective never increases within a stage.
pub fn solve_ik_traced(problem: &IkProblem, q_init: &[f64]) -> Result<(IkResult, Vec<TraceStep>)> {
    problem.validate()?;
    let chain = problem.chain;
    let n = chain.dof();
    if q_init.len() != n {
        return Err(Error::dims("q_init", n, q_init.len()));
    }
    let lo = chain.lower();
    let hi = chain.upper();
    let s = problem.settings;
    // Strict interior start.
    let mut q: Vec<f64> = q_init
        .iter()
        .zip(lo.iter().zip(&hi))
        .map(|(&v, (&l, &h))| {
            let m = 1e-6 * (h - l);
            v.clamp(l + m, h - m)
        })
        .collect();

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut e = evaluate(problem, &q, true)?;
    if projected_gradient_norm(&q, &e.grad, &lo, &hi) < s.tolerance {
        return Ok((
            IkResult {
                q_star: q,
                cost: e.cost,
                iterations,
                converged: true,
            },
            trace,
        ));
    }

    let mut mu = s.mu_initial;
    let mut lambda = 1e-3;
    let mut converged = false;
    'stages: loop {
        let final_stage = mu <= s.mu_final;
        let stage_tol = if final_stage { s.tolerance } else { s.tolerance.max(mu.sqrt()) };
        loop {
            let phi = e.cost + barrier(&q, &lo, &hi, mu);
            let mut g = e.grad.clone();
            let mut h = e.hess.clone();
            for i in 0..n {
                let a = q[i] - lo[i];
                let b = hi[i] - q[i];
                g[i] += -mu / a + mu / b;
                h[(i, i)] += mu / (a * a) + mu / (b * b);
            }
            if g.norm() < stage_tol {
                if final_stage {
                    converged = true;
                }
                break;
            }
            if final_stage && projected_gradient_norm(&q, &e.grad, &lo, &hi) < s.tolerance {
                converged = true;
                break;
            }
            if iterations >= s.max_iterations {
                break 'stages;
            }
            let mut accepted = false;
            while lambda < 1e10 {
                let mut damped = h.clone();
                for i in 0..n {
                    damped[(i, i)] += lambda * (1.0 + h[(i, i)]);
                }
                let Some(chol) = damped.cholesky() else {
                    lambda *= 10.0;
                    continue;
                };
                let step = chol.solve(&(-&g));
                let slope = g.dot(&step);
                // Largest step keeping 0.5% of the distance to each bound.
                let mut alpha: f64 = 1.0;
                for i in 0..n {
                    if step[i] < 0.0 {
                        alpha = alpha.min(-0.995 * (q[i] - lo[i]) / step[i]);
                    } else if step[i] > 0.0 {
                        alpha = alpha.min(0.995 * (hi[i] - q[i]) / step[i]);
                    }
                }
                for _ in 0..30 {
                    let cand: Vec<f64> = q.iter().zip(step.iter()).map(|(v, d)| v + alpha * d).collect();
                    let ce = evaluate(problem, &cand, true)?;
                    let cphi = ce.cost + barrier(&cand, &lo, &hi, mu);
                    if cphi.is_finite() && cphi <= phi + 1e-4 * alpha * slope {
                        q = cand;
                        e = ce;
                        trace.push(TraceStep {
                            mu,
                            barrier_objective: cphi,
                            cost: e.cost,
                        });
                        accepted = true;
                        break;
                    }
                    alpha *= 0.5;
                }
                if accepted {
                    lambda = (lambda * 0.3).max(1e-12);
                    break;
                }
                lambda *= 10.0;
            }
            if !accepted {
                // No descent possible at this barrier weight.
                if final_stage {
                    converged = projected_gradient_norm(&q, &e.grad, &lo, &hi) < s.tolerance.max(1e-6);
                }
                break;
            }
            iterations += 1;
            if projected_gradient_norm(&q, &e.grad, &lo, &hi) < s.tolerance {
                converged = true;
                break 'stages;
            }
        }
        if final_stage {
            break;
        }
        mu = (mu * s.mu_factor).max(s.mu_final);
        lambda = lambda.max(1e-6);
    }
    Ok((
        IkResult {
            q_star: q,
            cost: e.cost,
            iterations,
            converged,
        },
        trace,
    ))
}
