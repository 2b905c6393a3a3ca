use handmap_core::boxopt::{minimize, Bounds, SolveOptions};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Convex quadratic `0.5 xᵀAx + bᵀx` on a box.
#[derive(Debug, Clone)]
struct BoxQp {
    a: DMatrix<f64>,
    b: DVector<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxQp {
    fn random(rng: &mut impl Rng, n: usize) -> Self {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let a = &m * m.transpose() + DMatrix::identity(n, n) * 0.2;
        let b = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..0.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.1..2.0)).collect();
        BoxQp { a, b, lo, hi }
    }

    fn value(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&self.a * &x)) + self.b.dot(&x)
    }

    /// Exact minimizer by enumerating every assignment of variables to
    /// lower bound, upper bound or free, and keeping the KKT point.
    fn active_set_oracle(&self) -> Vec<f64> {
        let n = self.b.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for code in 0..3usize.pow(n as u32) {
            let state: Vec<usize> = (0..n).map(|i| code / 3usize.pow(i as u32) % 3).collect();
            let mut x = vec![0.0; n];
            let free: Vec<usize> = (0..n).filter(|&i| state[i] == 0).collect();
            for i in 0..n {
                match state[i] {
                    1 => x[i] = self.lo[i],
                    2 => x[i] = self.hi[i],
                    _ => {}
                }
            }
            if !free.is_empty() {
                let aff = DMatrix::from_fn(free.len(), free.len(), |r, c| self.a[(free[r], free[c])]);
                let rhs = DVector::from_fn(free.len(), |r, _| {
                    let i = free[r];
                    -self.b[i] - (0..n).filter(|j| state[*j] != 0).map(|j| self.a[(i, j)] * x[j]).sum::<f64>()
                });
                let sol = aff.cholesky().expect("positive definite").solve(&rhs);
                for (r, &i) in free.iter().enumerate() {
                    x[i] = sol[r];
                }
            }
            let tol = 1e-12;
            if (0..n).any(|i| x[i] < self.lo[i] - tol || x[i] > self.hi[i] + tol) {
                continue;
            }
            let g = &self.a * DVector::from_column_slice(&x) + &self.b;
            let kkt = (0..n).all(|i| match state[i] {
                1 => g[i] >= -1e-12,
                2 => g[i] <= 1e-12,
                _ => true,
            });
            if kkt {
                let v = self.value(&x);
                if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                    best = Some((v, x));
                }
            }
        }
        best.expect("a convex box QP has a KKT point").1
    }
}

fn tight() -> SolveOptions {
    SolveOptions {
        objective_tolerance: 1e-15,
        step_tolerance: 1e-10,
        max_iterations: 500,
        ..Default::default()
    }
}

#[test]
fn convex_quadratics_match_active_set_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..300 {
        let n = rng.random_range(1..=4);
        let qp = BoxQp::random(&mut rng, n);
        let bounds = Bounds::new(qp.lo.clone(), qp.hi.clone()).unwrap();
        let start: Vec<f64> = (0..n).map(|i| rng.random_range(qp.lo[i]..=qp.hi[i])).collect();
        let r = minimize(|x| qp.value(x), &start, &bounds, &tight()).unwrap();
        let oracle = qp.active_set_oracle();
        let err = r.x.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
        assert!(err < 1e-6, "{qp:?}\nsolver {:?}\noracle {oracle:?}", r.x);
    }
    println!("worst deviation from oracle: {worst:.3e}");
}

#[test]
fn rosenbrock_reaches_minimum() {
    let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
    let b = Bounds::uniform(2, -2.0, 2.0).unwrap();
    for start in [[-1.2, 1.0], [0.0, 0.0], [1.8, -1.5]] {
        let r = minimize(f, &start, &b, &tight()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] - 1.0).abs() < 1e-3, "{start:?}: {r:?}");
    }
}

fn nonconvex(x: &[f64]) -> f64 {
    x.iter().enumerate().map(|(i, v)| (3.0 * v + i as f64).sin() + 0.3 * v * v).sum::<f64>()
        + x.windows(2).map(|w| (w[0] * w[1]).cos()).sum::<f64>()
}

#[test]
fn thousand_random_problems_stay_feasible_and_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..1000 {
        let n = rng.random_range(1..=9);
        let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..1.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.0..3.0)).collect();
        let bounds = Bounds::new(lo, hi).unwrap();
        let start: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut feasible = true;
        let r = if case % 2 == 0 {
            let qp = BoxQp::random(&mut rng, n);
            handmap_core::boxopt::minimize_observed(|x| qp.value(x), &start, &bounds, &SolveOptions::default(), |_, x, _| {
                feasible &= bounds.contains(x)
            })
        } else {
            handmap_core::boxopt::minimize_observed(nonconvex, &start, &bounds, &SolveOptions::default(), |_, x, _| {
                feasible &= bounds.contains(x)
            })
        }
        .unwrap();
        assert!(feasible && bounds.contains(&r.x), "case {case}");
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]), "case {case}: {:?}", r.history);
        assert_eq!(*r.history.last().unwrap(), r.objective);
    }
}

proptest! {
    #[test]
    fn result_is_feasible_and_no_worse_than_start(
        lo in prop::collection::vec(-2.0f64..0.5, 1..6),
        widths in prop::collection::vec(0.0f64..2.0, 6),
        start in prop::collection::vec(-4.0f64..4.0, 6),
        shift in -1.0f64..1.0,
    ) {
        let n = lo.len();
        let hi: Vec<f64> = lo.iter().zip(&widths).map(|(l, w)| l + w).collect();
        let bounds = Bounds::new(lo.clone(), hi).unwrap();
        let f = |x: &[f64]| nonconvex(x) + shift * x.iter().sum::<f64>();
        let r = minimize(f, &start[..n], &bounds, &SolveOptions::default()).unwrap();
        prop_assert!(bounds.contains(&r.x));
        let mut clamped = start[..n].to_vec();
        bounds.clamp(&mut clamped);
        prop_assert!(r.objective <= f(&clamped));
        prop_assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }
}
