//! 1D generalized distance transform for concave-quadratic message passing.

use crate::real::Real;

/// For each query position `x_p = p + shift` (p in 0..out.len()), compute
/// `max_q f[q] + a (q - x_p)^2` together with the argmax index. Requires
/// `a < 0` (downward parabolas); runs in O(n) via the upper envelope.
pub(crate) fn gdt_max_1d<T: Real>(f: &[T], a: T, shift: T, out: &mut [T], args: &mut [usize]) {
    debug_assert!(a < T::zero());
    let n = f.len();
    debug_assert!(n > 0);
    // Upper envelope with c = -a > 0 on negated values: equivalent to the
    // classic lower-envelope transform of -f.
    let c = -a;
    let two_c = c + c;
    let mut hull: Vec<usize> = Vec::with_capacity(n);
    let mut bounds: Vec<T> = Vec::with_capacity(n + 1);
    hull.push(0);
    bounds.push(T::neg_infinity());
    bounds.push(T::infinity());
    let g = |q: usize| -> T { -f[q] + c * T::of_usize(q) * T::of_usize(q) };
    for q in 1..n {
        let gq = g(q);
        loop {
            let v = *hull.last().unwrap();
            let s = (gq - g(v)) / (two_c * (T::of_usize(q) - T::of_usize(v)));
            let k = hull.len() - 1;
            if s <= bounds[k] {
                hull.pop();
                bounds.pop();
                if hull.is_empty() {
                    hull.push(q);
                    bounds.push(T::neg_infinity());
                    bounds.push(T::infinity());
                    break;
                }
            } else {
                hull.push(q);
                *bounds.last_mut().unwrap() = s;
                bounds.push(T::infinity());
                break;
            }
        }
    }
    let mut k = 0usize;
    for p in 0..out.len() {
        let x = T::of_usize(p) + shift;
        while bounds[k + 1] < x {
            k += 1;
        }
        let v = hull[k];
        let d = x - T::of_usize(v);
        out[p] = f[v] + a * d * d;
        args[p] = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(f: &[f64], a: f64, x: f64) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (q, &v) in f.iter().enumerate() {
            let d = q as f64 - x;
            let s = v + a * d * d;
            if s > best.0 {
                best = (s, q);
            }
        }
        best
    }

    #[test]
    fn matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let n = rng.random_range(1..40usize);
            let f: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let a = -rng.random_range(0.001..3.0);
            let shift = rng.random_range(-5.0..5.0);
            let m = rng.random_range(1..40usize);
            let mut out = vec![0.0; m];
            let mut args = vec![0usize; m];
            gdt_max_1d(&f, a, shift, &mut out, &mut args);
            for p in 0..m {
                let x = p as f64 + shift;
                let (bv, _) = brute(&f, a, x);
                assert!((out[p] - bv).abs() < 1e-9, "query {p}: {} vs {bv}", out[p]);
                let d = args[p] as f64 - x;
                let via_arg = f[args[p]] + a * d * d;
                assert!((via_arg - bv).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sentinel_values_never_win() {
        let f = vec![-1e30, 2.0, -1e30, 1.0];
        let mut out = vec![0.0; 4];
        let mut args = vec![0usize; 4];
        gdt_max_1d(&f, -0.5, 0.0, &mut out, &mut args);
        for p in 0..4 {
            assert!(args[p] == 1 || args[p] == 3);
            assert!(out[p] > -1e20);
        }
    }
}
