//! Orthonormal polynomial bases: tensor Legendre over the design box and
//! Gram-Schmidt polynomials against a Gaussian-mixture measure.

mod gram_schmidt;
mod legendre;
mod multi_index;
mod product;

pub use gram_schmidt::GramSchmidtBasis;
pub use legendre::LegendreBasis;
pub use multi_index::{basis_size, MultiIndexSet};
pub use product::ProductBasis;

use crate::error::{Error, Result};

/// A finite polynomial basis whose functions are ordered like its [`MultiIndexSet`].
pub trait PolynomialBasis: Send + Sync {
    fn indices(&self) -> &MultiIndexSet;

    fn dim(&self) -> usize {
        self.indices().dim()
    }

    fn len(&self) -> usize {
        self.indices().len()
    }

    /// Writes all basis values at `point` into `out` (length [`len`](Self::len)).
    fn evaluate_into(&self, point: &[f64], out: &mut [f64]);

    /// Values plus gradients; `grad[k * dim + i]` is `d basis_k / d point_i`.
    fn gradient_into(&self, point: &[f64], values: &mut [f64], grad: &mut [f64]);

    fn evaluate(&self, point: &[f64]) -> Result<Vec<f64>> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: point.len(),
            });
        }
        let mut out = vec![0.0; self.len()];
        self.evaluate_into(point, &mut out);
        Ok(out)
    }
}
