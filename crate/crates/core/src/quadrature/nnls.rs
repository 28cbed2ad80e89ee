//! Lawson-Hanson active-set nonnegative least squares.

use nalgebra::{DMatrix, DVector};

/// Solves `min ||a x - b||` subject to `x >= 0`.
///
/// A feasible `warm` start seeds the passive set with its positive entries;
/// it is ignored when that set has more columns than `a` has rows.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, warm: Option<&[f64]>) -> DVector<f64> {
    let (rows, cols) = a.shape();
    let mut x = DVector::zeros(cols);
    let mut passive = vec![false; cols];
    let scale = a.amax().max(1.0) * b.amax().max(1.0);
    let tol = 1e-14 * scale * rows.max(cols) as f64;

    if let Some(w) = warm {
        let count = w.iter().filter(|&&v| v > 0.0).count();
        if count <= rows && count > 0 {
            for (j, &v) in w.iter().enumerate() {
                if v > 0.0 {
                    passive[j] = true;
                    x[j] = v;
                }
            }
            restore_feasibility(a, b, &mut x, &mut passive);
        }
    }

    let max_outer = 3 * cols + 10;
    for _ in 0..max_outer {
        let grad = a.tr_mul(&(b - a * &x));
        let mut best = None;
        let mut best_val = tol;
        for j in 0..cols {
            if !passive[j] && grad[j] > best_val {
                best_val = grad[j];
                best = Some(j);
            }
        }
        let Some(t) = best else { break };
        if passive.iter().filter(|&&p| p).count() >= rows {
            break;
        }
        passive[t] = true;
        let before = x.clone();
        restore_feasibility(a, b, &mut x, &mut passive);
        if !passive[t] && (&x - &before).amax() == 0.0 {
            // column t could not enter; further progress would cycle
            break;
        }
    }
    x
}

// Inner Lawson-Hanson loop: solve on the passive set and step back toward
// feasibility until the unconstrained solution is strictly positive.
fn restore_feasibility(a: &DMatrix<f64>, b: &DVector<f64>, x: &mut DVector<f64>, passive: &mut [bool]) {
    let cols = a.ncols();
    for _ in 0..=cols {
        let idx: Vec<usize> = (0..cols).filter(|&j| passive[j]).collect();
        if idx.is_empty() {
            return;
        }
        let s = match solve_subset(a, b, &idx) {
            Some(s) => s,
            None => {
                // dependent columns: drop the newest to keep the basis independent
                let last = *idx.last().expect("nonempty");
                passive[last] = false;
                x[last] = 0.0;
                continue;
            }
        };
        if s.iter().all(|&v| v > 0.0) {
            for (k, &j) in idx.iter().enumerate() {
                x[j] = s[k];
            }
            return;
        }
        let mut alpha = f64::INFINITY;
        for (k, &j) in idx.iter().enumerate() {
            if s[k] <= 0.0 {
                let denom = x[j] - s[k];
                if denom > 0.0 {
                    alpha = alpha.min(x[j] / denom);
                } else {
                    alpha = 0.0;
                }
            }
        }
        let alpha = alpha.clamp(0.0, 1.0);
        for (k, &j) in idx.iter().enumerate() {
            x[j] += alpha * (s[k] - x[j]);
        }
        for (k, &j) in idx.iter().enumerate() {
            if x[j] <= 1e-300 || (s[k] <= 0.0 && x[j] <= f64::EPSILON * x.amax()) {
                passive[j] = false;
                x[j] = 0.0;
            }
        }
    }
}

fn solve_subset(a: &DMatrix<f64>, b: &DVector<f64>, idx: &[usize]) -> Option<DVector<f64>> {
    let sub = a.select_columns(idx);
    if sub.ncols() > sub.nrows() {
        return None;
    }
    let qr = sub.qr();
    let r = qr.r();
    let diag_max = r.diagonal().amax();
    if r.diagonal().iter().any(|d| d.abs() <= 1e-12 * diag_max) {
        return None;
    }
    let qtb = qr.q().tr_mul(b);
    r.solve_upper_triangular(&qtb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unconstrained_optimum_when_positive() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = nnls(&a, &b, None);
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn clamps_negative_component() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![-1.0, 2.0]);
        let x = nnls(&a, &b, None);
        assert_eq!(x[0], 0.0);
        assert_abs_diff_eq!(x[1], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn warm_start_matches_cold_start() {
        let a = DMatrix::from_fn(6, 4, |i, j| ((i + 1) as f64).powi(j as i32) / 10f64.powi(j as i32));
        let b = DVector::from_fn(6, |i, _| (i as f64 * 0.7).sin());
        let cold = nnls(&a, &b, None);
        let warm = nnls(&a, &b, Some(&[0.1, 0.1, 0.1, 0.1]));
        let (rc, rw) = ((&a * &cold - &b).norm(), (&a * &warm - &b).norm());
        assert_abs_diff_eq!(rc, rw, epsilon = 1e-10);
        assert!(cold.iter().chain(warm.iter()).all(|&v| v >= 0.0));
    }

    #[test]
    fn satisfies_kkt_on_random_problem() {
        use rand::Rng;
        let mut rng = crate::gaussmix::seeded_rng(3);
        let a = DMatrix::from_fn(12, 20, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
        let x = nnls(&a, &b, None);
        let g = a.tr_mul(&(&b - &a * &x));
        for j in 0..20 {
            assert!(x[j] >= 0.0);
            assert!(g[j] <= 1e-9, "gradient {j} = {}", g[j]);
            if x[j] > 0.0 {
                assert!(g[j].abs() <= 1e-9);
            }
        }
    }
}
