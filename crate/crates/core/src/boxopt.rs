//! Box-constrained minimization with finite-difference gradients.
//!
//! The solver is a projected limited-memory quasi-Newton method: search
//! directions come from an L-BFGS two-loop recursion over the variables that
//! are not held at a bound, and every trial point is projected onto the box.
//! Iterates are therefore always feasible and the objective trace is
//! non-increasing.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("objective is not finite at {x:?}")]
    NonFiniteObjective { x: Vec<f64> },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid bounds at index {index}: lower {lower} > upper {upper}")]
    InvalidBounds { index: usize, lower: f64, upper: f64 },
    #[error("solver options must be positive")]
    InvalidOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, OptimError> {
        if lower.len() != upper.len() {
            return Err(OptimError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (index, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo <= hi) {
                return Err(OptimError::InvalidBounds {
                    index,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(Bounds { lower, upper })
    }

    pub fn uniform(n: usize, lower: f64, upper: f64) -> Result<Self, OptimError> {
        Self::new(vec![lower; n], vec![upper; n])
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for ((xi, &lo), &hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *xi = xi.clamp(lo, hi);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.len()
            && x.iter()
                .zip(&self.lower)
                .zip(&self.upper)
                .all(|((&xi, &lo), &hi)| lo <= xi && xi <= hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Central-difference step.
    pub gradient_step: f64,
    /// Converged once the next step would lower the objective by less than
    /// this; that step is not taken.
    pub objective_tolerance: f64,
    /// Converged once the projected gradient's infinity norm drops below this.
    pub step_tolerance: f64,
    /// Number of curvature pairs kept.
    pub memory: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 100,
            gradient_step: 1e-6,
            objective_tolerance: 1e-8,
            step_tolerance: 1e-9,
            memory: 8,
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<(), OptimError> {
        let ok = self.max_iterations > 0
            && self.gradient_step > 0.0
            && self.objective_tolerance > 0.0
            && self.step_tolerance > 0.0
            && self.memory > 0;
        if ok {
            Ok(())
        } else {
            Err(OptimError::InvalidOptions)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the start point and after every accepted step.
    pub history: Vec<f64>,
}

fn checked<F>(f: &mut F, x: &[f64]) -> Result<f64, OptimError>
where
    F: FnMut(&[f64]) -> f64,
{
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(OptimError::NonFiniteObjective { x: x.to_vec() })
    }
}

fn gradient_into<F>(f: &mut F, x: &[f64], step: f64, scratch: &mut Vec<f64>, out: &mut [f64]) -> Result<(), OptimError>
where
    F: FnMut(&[f64]) -> f64,
{
    scratch.clear();
    scratch.extend_from_slice(x);
    for k in 0..x.len() {
        scratch[k] = x[k] + step;
        let fp = checked(f, scratch)?;
        scratch[k] = x[k] - step;
        let fm = checked(f, scratch)?;
        scratch[k] = x[k];
        out[k] = (fp - fm) / (2.0 * step);
    }
    Ok(())
}

/// Central-difference gradient `(f(x + h e_k) - f(x - h e_k)) / 2h`.
pub fn finite_diff_gradient<F>(mut f: F, x: &[f64], step: f64) -> Result<Vec<f64>, OptimError>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut out = vec![0.0; x.len()];
    let mut scratch = Vec::with_capacity(x.len());
    gradient_into(&mut f, x, step, &mut scratch, &mut out)?;
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Infinity norm of `x - P(x - g)`.
fn projected_gradient_norm(x: &[f64], g: &[f64], bounds: &Bounds) -> f64 {
    x.iter()
        .zip(g)
        .zip(bounds.lower.iter().zip(&bounds.upper))
        .map(|((&xi, &gi), (&lo, &hi))| (xi - (xi - gi).clamp(lo, hi)).abs())
        .fold(0.0, f64::max)
}

struct Curvature {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Minimizes `f` over the box. `x0` is clamped into the box first.
pub fn minimize<F>(f: F, x0: &[f64], bounds: &Bounds, opts: &SolveOptions) -> Result<SolveResult, OptimError>
where
    F: FnMut(&[f64]) -> f64,
{
    minimize_observed(f, x0, bounds, opts, |_, _, _| {})
}

/// [`minimize`] with a callback invoked with `(iteration, x, f(x))` for the
/// start point and every accepted iterate.
pub fn minimize_observed<F, O>(
    mut f: F,
    x0: &[f64],
    bounds: &Bounds,
    opts: &SolveOptions,
    mut observe: O,
) -> Result<SolveResult, OptimError>
where
    F: FnMut(&[f64]) -> f64,
    O: FnMut(usize, &[f64], f64),
{
    opts.validate()?;
    let n = bounds.len();
    if x0.len() != n {
        return Err(OptimError::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(OptimError::NonFiniteObjective { x: x0.to_vec() });
    }

    let mut x = x0.to_vec();
    bounds.clamp(&mut x);
    let mut fx = checked(&mut f, &x)?;
    let mut history = vec![fx];
    observe(0, &x, fx);
    if n == 0 {
        return Ok(SolveResult {
            x,
            objective: fx,
            iterations: 0,
            converged: true,
            history,
        });
    }

    let mut scratch = Vec::with_capacity(n);
    let mut g = vec![0.0; n];
    gradient_into(&mut f, &x, opts.gradient_step, &mut scratch, &mut g)?;

    let mut memory: VecDeque<Curvature> = VecDeque::with_capacity(opts.memory);
    let mut d = vec![0.0; n];
    let mut alpha_buf = vec![0.0; opts.memory];
    let mut trial = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut free = vec![true; n];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        if projected_gradient_norm(&x, &g, bounds) < opts.step_tolerance {
            converged = true;
            break;
        }

        // Variables sitting on a bound with the gradient pushing outward stay put.
        for i in 0..n {
            free[i] = !((x[i] <= bounds.lower[i] && g[i] > 0.0) || (x[i] >= bounds.upper[i] && g[i] < 0.0));
        }

        let accepted = loop {
            let steepest = memory.is_empty();
            search_direction(&g, &free, &memory, &mut alpha_buf, &mut d);
            let mut slope = dot(&d, &g);
            if !(slope < 0.0) {
                memory.clear();
                search_direction(&g, &free, &memory, &mut alpha_buf, &mut d);
                slope = dot(&d, &g);
                if !(slope < 0.0) {
                    break None;
                }
            }
            let mut alpha = if memory.is_empty() {
                // Without curvature information, aim for a 0.1 move in the
                // largest free component.
                let gmax = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                0.1 / gmax
            } else {
                1.0
            };
            let mut found = None;
            for _ in 0..50 {
                for i in 0..n {
                    trial[i] = (x[i] + alpha * d[i]).clamp(bounds.lower[i], bounds.upper[i]);
                }
                let predicted: f64 = (0..n).map(|i| g[i] * (trial[i] - x[i])).sum();
                if predicted < 0.0 {
                    let ft = checked(&mut f, &trial)?;
                    if ft <= fx + 1e-4 * predicted {
                        found = Some(ft);
                        break;
                    }
                } else if trial == x {
                    break;
                }
                alpha *= 0.5;
            }
            match found {
                Some(ft) => break Some(ft),
                None if !steepest => memory.clear(),
                None => break None,
            }
        };

        let Some(ft) = accepted else {
            // No descent possible at working precision.
            converged = true;
            break;
        };

        // A step that gains less than the tolerance is not taken: the current
        // point is as good, and warm starts at a previous solution return it
        // unchanged.
        if fx - ft < opts.objective_tolerance {
            converged = true;
            break;
        }
        gradient_into(&mut f, &trial, opts.gradient_step, &mut scratch, &mut g_new)?;
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back(Curvature { s, y, rho: 1.0 / sy });
        }

        x.copy_from_slice(&trial);
        g.copy_from_slice(&g_new);
        fx = ft;
        iterations += 1;
        history.push(fx);
        observe(iterations, &x, fx);
    }

    Ok(SolveResult {
        x,
        objective: fx,
        iterations,
        converged,
        history,
    })
}

/// Two-loop recursion restricted to the free variables.
fn search_direction(g: &[f64], free: &[bool], memory: &VecDeque<Curvature>, alpha: &mut [f64], d: &mut [f64]) {
    for i in 0..g.len() {
        d[i] = if free[i] { -g[i] } else { 0.0 };
    }
    for (k, c) in memory.iter().enumerate().rev() {
        let a = c.rho * dot(&c.s, d);
        alpha[k] = a;
        for i in 0..d.len() {
            d[i] -= a * c.y[i];
        }
    }
    if let Some(last) = memory.back() {
        let gamma = 1.0 / (last.rho * dot(&last.y, &last.y));
        d.iter_mut().for_each(|v| *v *= gamma);
    }
    for (k, c) in memory.iter().enumerate() {
        let b = c.rho * dot(&c.y, d);
        for i in 0..d.len() {
            d[i] += (alpha[k] - b) * c.s[i];
        }
    }
    for i in 0..d.len() {
        if !free[i] {
            d[i] = 0.0;
        }
    }
}
