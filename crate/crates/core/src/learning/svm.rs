//! Dual coordinate descent for the margin problem
//! `min 1/2 |b|^2 + C sum_n max(0, 1 - y_n (b . x_n))`.

use crate::real::Real;

/// Solver output: the weight vector, the dual variables, and the negated dual
/// objective after each epoch (non-increasing under exact coordinate ascent).
#[derive(Debug, Clone)]
pub struct SvmSolution<T> {
    pub beta: Vec<T>,
    pub alphas: Vec<T>,
    pub objective_trace: Vec<T>,
    pub epochs_run: usize,
    pub converged: bool,
}

/// One labeled feature vector.
pub struct SvmExample<'a, T> {
    pub features: &'a [T],
    pub positive: bool,
}

/// Solve by coordinate descent on the dual, sweeping examples in order each
/// epoch. `concave_slots` lists coordinates projected to <= `concave_bound`
/// after every epoch (placement spring curvatures must stay negative).
pub fn dual_coordinate_descent<T: Real>(
    examples: &[SvmExample<'_, T>],
    c: T,
    max_epochs: usize,
    tolerance: T,
    concave_slots: &[usize],
    concave_bound: T,
) -> SvmSolution<T> {
    let targets = vec![T::one(); examples.len()];
    dual_coordinate_descent_with_targets(examples, &targets, c, max_epochs, tolerance, concave_slots, concave_bound)
}

/// Variant with per-example margin targets `t_n`: constraints
/// `y_n (b . x_n) >= t_n - xi_n`. Used when part of the score is fixed
/// (residual learning): `t_n = 1 - y_n * fixed_n`.
pub fn dual_coordinate_descent_with_targets<T: Real>(
    examples: &[SvmExample<'_, T>],
    targets: &[T],
    c: T,
    max_epochs: usize,
    tolerance: T,
    concave_slots: &[usize],
    concave_bound: T,
) -> SvmSolution<T> {
    assert!(!examples.is_empty());
    assert_eq!(examples.len(), targets.len());
    let dim = examples[0].features.len();
    let n = examples.len();
    let mut beta = vec![T::zero(); dim];
    let mut alphas = vec![T::zero(); n];
    let q: Vec<T> = examples.iter().map(|e| e.features.iter().map(|&v| v * v).sum()).collect();
    let mut trace = Vec::with_capacity(max_epochs);
    let mut converged = false;
    let mut epochs_run = 0;
    for _ in 0..max_epochs {
        epochs_run += 1;
        for i in 0..n {
            if q[i] <= T::zero() {
                continue;
            }
            let ex = &examples[i];
            let y = if ex.positive { T::one() } else { -T::one() };
            let mut dot = T::zero();
            for (b, &x) in beta.iter().zip(ex.features.iter()) {
                dot += *b * x;
            }
            let g = y * dot - targets[i];
            let pg = if alphas[i] <= T::zero() {
                g.min(T::zero())
            } else if alphas[i] >= c {
                g.max(T::zero())
            } else {
                g
            };
            if pg.abs() <= T::of(1e-14) {
                continue;
            }
            let new_alpha = (alphas[i] - g / q[i]).max(T::zero()).min(c);
            let delta = new_alpha - alphas[i];
            if delta != T::zero() {
                for (b, &x) in beta.iter_mut().zip(ex.features.iter()) {
                    *b += delta * y * x;
                }
                alphas[i] = new_alpha;
            }
        }
        for &s in concave_slots {
            beta[s] = beta[s].min(concave_bound);
        }
        // Negated dual objective: 1/2 |b|^2 - sum(alpha_n t_n); monotone
        // non-increasing when no projection is active.
        let norm2: T = beta.iter().map(|&b| b * b).sum();
        let asum: T = alphas.iter().zip(targets.iter()).map(|(&a, &t)| a * t).sum();
        trace.push(norm2 * T::of(0.5) - asum);
        // Duality gap against the primal of the current weights.
        let mut hinge = T::zero();
        for (ex, &t) in examples.iter().zip(targets.iter()) {
            let y = if ex.positive { T::one() } else { -T::one() };
            let mut dot = T::zero();
            for (b, &x) in beta.iter().zip(ex.features.iter()) {
                dot += *b * x;
            }
            hinge += (t - y * dot).max(T::zero());
        }
        let primal = norm2 * T::of(0.5) + c * hinge;
        let dual = asum - norm2 * T::of(0.5);
        if primal - dual <= tolerance * primal.abs().max(T::one()) {
            converged = true;
            break;
        }
    }
    SvmSolution { beta, alphas, objective_trace: trace, epochs_run, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve_plain(xs: &[(Vec<f64>, bool)], c: f64, epochs: usize) -> SvmSolution<f64> {
        let examples: Vec<SvmExample<'_, f64>> = xs
            .iter()
            .map(|(f, p)| SvmExample { features: f, positive: *p })
            .collect();
        dual_coordinate_descent(&examples, c, epochs, 1e-9, &[], -1e-3)
    }

    /// Separable 1D toy: positives at +2, negatives at -2. The max-margin
    /// solution is beta = 0.5 with zero slack.
    #[test]
    fn one_dimensional_analytic_solution() {
        let xs = vec![(vec![2.0], true), (vec![-2.0], false)];
        let sol = solve_plain(&xs, 1.0, 200);
        assert!((sol.beta[0] - 0.5).abs() < 1e-3, "beta = {}", sol.beta[0]);
        assert!(sol.converged);
        for (f, p) in &xs {
            let y = if *p { 1.0 } else { -1.0 };
            assert!(y * sol.beta[0] * f[0] >= 1.0 - 1e-6, "margin satisfied, zero slack");
        }
        for &a in &sol.alphas {
            assert!((0.0..=1.0).contains(&a));
        }
    }

    /// Duplicating the training set while halving C leaves the solution
    /// unchanged.
    #[test]
    fn duplicated_set_with_scaled_c() {
        let xs = vec![
            (vec![1.5, 0.3], true),
            (vec![0.8, -1.1], true),
            (vec![-1.0, 0.2], false),
            (vec![-0.4, -0.9], false),
            (vec![0.2, 0.1], false),
        ];
        let sol1 = solve_plain(&xs, 0.7, 4000);
        let doubled: Vec<(Vec<f64>, bool)> = [xs.clone(), xs.clone()].concat();
        let sol2 = solve_plain(&doubled, 0.35, 4000);
        for (a, b) in sol1.beta.iter().zip(sol2.beta.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn objective_non_increasing_and_duals_boxed() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let xs: Vec<(Vec<f64>, bool)> = (0..40)
            .map(|i| {
                let pos = i % 2 == 0;
                let center = if pos { 1.0 } else { -1.0 };
                let f = (0..6).map(|_| center + rng.random_range(-1.2..1.2)).collect();
                (f, pos)
            })
            .collect();
        let c = 0.25;
        let sol = solve_plain(&xs, c, 100);
        for w in sol.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "objective increased: {} -> {}", w[0], w[1]);
        }
        for &a in &sol.alphas {
            assert!((-1e-12..=c + 1e-12).contains(&a), "alpha {a} outside [0, C]");
        }
    }

    #[test]
    fn concave_slots_projected() {
        let xs = vec![(vec![1.0, 2.0], true), (vec![-1.0, -0.5], false)];
        let examples: Vec<SvmExample<'_, f64>> =
            xs.iter().map(|(f, p)| SvmExample { features: f, positive: *p }).collect();
        let sol = dual_coordinate_descent(&examples, 1.0, 50, 1e-9, &[1], -1e-3);
        assert!(sol.beta[1] <= -1e-3);
    }
}
