use super::{check_dims, Simulator};
use crate::error::Result;

/// Two design variables on `[-1, 1]^2` with additive noise:
/// objective `3(x1+xi1) + (x2+xi2)`, `g1 = (x1+xi1)^2 - (x2+xi2)`,
/// `g2 = (x1+xi1)^2 + (x2+xi2)`, both constrained to `<= 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Synthetic;

impl Simulator for Synthetic {
    fn design_bounds(&self) -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0); 2]
    }

    fn noise_dim(&self) -> usize {
        2
    }

    fn metric_names(&self) -> Vec<String> {
        vec!["objective".into(), "g1".into(), "g2".into()]
    }

    fn simulate(&self, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        check_dims(x, xi, 2, 2)?;
        let a = x[0] + xi[0];
        let b = x[1] + xi[1];
        Ok(vec![3.0 * a + b, a * a - b, a * a + b])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn direct_values() {
        let s = Synthetic;
        assert_eq!(s.simulate(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(s.simulate(&[0.9999, 0.0], &[0.0, 0.0]).unwrap()[0], 2.9997, epsilon = 1e-12);
        let g = s.simulate(&[1.0, 0.1], &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(g[2], 1.1, epsilon = 1e-12);
        assert!(g[2] > 1.0);
        assert!(s.simulate(&[1.0], &[0.0, 0.0]).is_err());
    }
}
