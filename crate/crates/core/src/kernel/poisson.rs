//! Poisson probabilities used for uniformization cut-offs and wrap bounds.

use statrs::function::gamma::ln_gamma;

/// `P(N = n)` for `N ~ Pois(lambda)`, computed in log space.
pub fn poisson_pmf(lambda: f64, n: u64) -> f64 {
    if lambda == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    (-lambda + nf * lambda.ln() - ln_gamma(nf + 1.0)).exp()
}

/// `Pois(lambda)([r, ∞))`.
pub fn poisson_tail(lambda: f64, r: i64) -> f64 {
    assert!(
        lambda >= 0.0 && lambda.is_finite(),
        "lambda must be finite and >= 0, got {lambda}"
    );
    if r <= 0 {
        return 1.0;
    }
    if lambda == 0.0 {
        return 0.0;
    }
    let r = r as u64;
    if (r as f64) > lambda {
        // terms decrease from r onwards; sum until they stop contributing
        let mut term = poisson_pmf(lambda, r);
        let mut sum = 0.0;
        let mut n = r;
        while term > 0.0 {
            sum += term;
            n += 1;
            term *= lambda / n as f64;
            if term < sum * 1e-18 {
                // geometric remainder bound: ratio <= lambda / (n + 1) < 1
                let ratio = lambda / (n + 1) as f64;
                sum += term / (1.0 - ratio);
                break;
            }
        }
        sum.min(1.0)
    } else {
        let head: f64 = (0..r).map(|n| poisson_pmf(lambda, n)).sum();
        (1.0 - head).clamp(0.0, 1.0)
    }
}

/// Chernoff-type bound check: `Pois(lambda)([r, ∞)) <= e^{−r + 7 lambda}`.
/// Meaningful for `r > 7 lambda`.
pub fn chernoff_check(lambda: f64, r: f64) -> bool {
    poisson_tail(lambda, r.ceil() as i64) <= (-r + 7.0 * lambda).exp()
}

/// Poisson weights `w_0..=w_{n_max}` and the omitted mass `P(N > n_max)`, with
/// `n_max` the smallest index whose omitted mass is at most `tol`.
pub fn truncated_weights(t: f64, tol: f64) -> (Vec<f64>, f64) {
    if t == 0.0 {
        return (vec![1.0], 0.0);
    }
    let n = cutoff(t, tol);
    let w: Vec<f64> = (0..=n).map(|k| poisson_pmf(t, k as u64)).collect();
    (w, poisson_tail(t, n as i64 + 1))
}

/// Smallest `n` with `Pois(t)([n + 1, ∞)) <= tol`.
pub fn cutoff(t: f64, tol: f64) -> usize {
    if t == 0.0 {
        return 0;
    }
    // the tail is monotone in n: bisect between the mean and a safe upper end
    let mut lo = 0usize;
    let mut hi = (t + 20.0 * t.sqrt() + 60.0 - tol.ln()).ceil() as usize;
    while poisson_tail(t, hi as i64 + 1) > tol {
        hi *= 2;
    }
    if poisson_tail(t, 1) <= tol {
        return 0;
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if poisson_tail(t, mid as i64 + 1) <= tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Smallest even torus side `L >= 4` with `Pois(t)([L/2, ∞)) <= tol`.
pub fn torus_size_for(t: f64, tol: f64) -> usize {
    let mut half = 2usize;
    while poisson_tail(t, half as i64) > tol {
        half += 1;
    }
    2 * half
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent tail by straightforward summation of the mass function
    /// with the recurrence `pmf(n+1) = pmf(n) λ / (n+1)`.
    fn naive_tail(lambda: f64, r: u64) -> f64 {
        let mut pmf = (-lambda).exp();
        let mut below = 0.0;
        for n in 0..r {
            below += pmf;
            pmf *= lambda / (n + 1) as f64;
        }
        let mut above = 0.0;
        let mut n = r;
        let mut term = pmf;
        while n < r + 2000 {
            above += term;
            n += 1;
            term *= lambda / n as f64;
        }
        if r as f64 > lambda {
            above
        } else {
            1.0 - below
        }
    }

    #[test]
    fn tails_match_naive() {
        for &lambda in &[0.3, 1.0, 2.0, 4.0, 17.5, 60.0] {
            for r in [0u64, 1, 2, 5, 10, 30, 80] {
                let a = poisson_tail(lambda, r as i64);
                let b = naive_tail(lambda, r);
                assert!(
                    (a - b).abs() <= 1e-13 + 1e-10 * b,
                    "lambda {lambda} r {r}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn tail_examples() {
        assert_eq!(poisson_tail(0.0, 1), 0.0);
        let t = poisson_tail(2.0, 15);
        assert!(t <= (-1.0f64).exp());
        assert!(chernoff_check(2.0, 15.0));
        let mut prev = 1.0;
        for r in 0..40 {
            let v = poisson_tail(3.3, r);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn torus_size_minimality() {
        assert_eq!(torus_size_for(0.0, 1e-3), 4);
        for &(t, tol) in &[(4.0, 1e-12), (1.0, 1e-6), (16.0, 1e-10), (50.0, 1e-8)] {
            let l = torus_size_for(t, tol);
            assert!(l.is_multiple_of(2) && l >= 4);
            assert!(poisson_tail(t, (l / 2) as i64) <= tol);
            if l > 4 {
                assert!(poisson_tail(t, (l / 2 - 1) as i64) > tol);
            }
        }
        // t = 4, tol = 1e-12: r is the smallest integer with Pois(4)([r,∞)) <= 1e-12
        let r = (1..100).find(|&r| naive_tail(4.0, r) <= 1e-12).unwrap();
        assert_eq!(torus_size_for(4.0, 1e-12), 2 * r as usize);
    }

    #[test]
    fn cutoff_is_minimal() {
        for &(t, tol) in &[(0.5, 1e-12), (8.0, 1e-10), (128.0, 1e-10), (1000.0, 1e-8)] {
            let n = cutoff(t, tol);
            assert!(poisson_tail(t, n as i64 + 1) <= tol);
            assert!(n == 0 || poisson_tail(t, n as i64) > tol);
        }
        let (w, omitted) = truncated_weights(3.0, 1e-12);
        assert!((w.iter().sum::<f64>() + omitted - 1.0).abs() < 1e-14);
    }
}
