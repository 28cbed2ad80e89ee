use super::{GramSchmidtBasis, LegendreBasis, MultiIndexSet, PolynomialBasis};
use crate::error::{Error, Result};

/// `Phi_alpha(x) Psi_beta(xi)` for every joint index `(alpha, beta)` with
/// `|alpha| + |beta| <= order`, ordered graded-lex over the concatenated
/// exponent vector. Either block may be absent.
#[derive(Debug, Clone)]
pub struct ProductBasis {
    design: Option<LegendreBasis>,
    noise: Option<GramSchmidtBasis>,
    indices: MultiIndexSet,
    // (design index, noise index) per joint function
    pairs: Vec<(usize, usize)>,
}

impl ProductBasis {
    pub fn new(design: Option<&LegendreBasis>, noise: Option<&GramSchmidtBasis>, order: usize) -> Result<Self> {
        let design = design.map(|b| b.with_order(order));
        let noise = match noise {
            Some(b) if b.order() == order => Some(b.clone()),
            Some(b) => Some(b.with_order(order)?),
            None => None,
        };
        let d1 = design.as_ref().map_or(0, |b| b.dim());
        let d2 = noise.as_ref().map_or(0, |b| b.dim());
        if d1 + d2 == 0 {
            return Err(Error::invalid("product basis needs at least one block"));
        }
        let indices = MultiIndexSet::total_order(d1 + d2, order)?;
        let pairs = indices
            .iter()
            .map(|joint| {
                let a = design
                    .as_ref()
                    .map_or(0, |b| b.indices().position(&joint[..d1]).expect("alpha in set"));
                let n = noise
                    .as_ref()
                    .map_or(0, |b| b.indices().position(&joint[d1..]).expect("beta in set"));
                (a, n)
            })
            .collect();
        Ok(Self {
            design,
            noise,
            indices,
            pairs,
        })
    }

    pub fn design(&self) -> Option<&LegendreBasis> {
        self.design.as_ref()
    }

    pub fn noise(&self) -> Option<&GramSchmidtBasis> {
        self.noise.as_ref()
    }

    pub fn design_dim(&self) -> usize {
        self.design.as_ref().map_or(0, |b| b.dim())
    }

    pub fn noise_dim(&self) -> usize {
        self.noise.as_ref().map_or(0, |b| b.dim())
    }

    /// `(design index, noise index)` for joint function `k`.
    pub fn pair(&self, k: usize) -> (usize, usize) {
        self.pairs[k]
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

impl PolynomialBasis for ProductBasis {
    fn indices(&self) -> &MultiIndexSet {
        &self.indices
    }

    fn evaluate_into(&self, point: &[f64], out: &mut [f64]) {
        let d1 = self.design_dim();
        let dv = match &self.design {
            Some(b) => {
                let mut v = vec![0.0; b.len()];
                b.evaluate_into(&point[..d1], &mut v);
                v
            }
            None => vec![1.0],
        };
        let nv = match &self.noise {
            Some(b) => {
                let mut v = vec![0.0; b.len()];
                b.evaluate_into(&point[d1..], &mut v);
                v
            }
            None => vec![1.0],
        };
        for (o, &(a, n)) in out.iter_mut().zip(&self.pairs) {
            *o = dv[a] * nv[n];
        }
    }

    fn gradient_into(&self, point: &[f64], values: &mut [f64], grad: &mut [f64]) {
        let d1 = self.design_dim();
        let d2 = self.noise_dim();
        let d = d1 + d2;
        let (dv, dg) = match &self.design {
            Some(b) => {
                let mut v = vec![0.0; b.len()];
                let mut g = vec![0.0; b.len() * d1];
                b.gradient_into(&point[..d1], &mut v, &mut g);
                (v, g)
            }
            None => (vec![1.0], vec![]),
        };
        let (nv, ng) = match &self.noise {
            Some(b) => {
                let mut v = vec![0.0; b.len()];
                let mut g = vec![0.0; b.len() * d2];
                b.gradient_into(&point[d1..], &mut v, &mut g);
                (v, g)
            }
            None => (vec![1.0], vec![]),
        };
        for (k, &(a, n)) in self.pairs.iter().enumerate() {
            values[k] = dv[a] * nv[n];
            for i in 0..d1 {
                grad[k * d + i] = dg[a * d1 + i] * nv[n];
            }
            for i in 0..d2 {
                grad[k * d + d1 + i] = dv[a] * ng[n * d2 + i];
            }
        }
    }
}
