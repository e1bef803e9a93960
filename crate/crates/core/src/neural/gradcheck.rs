//! Finite-difference verification of analytic gradients.

use ndarray::Array2;
use rand::Rng as _;

use super::graph::{Graph, Var};
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::treebank_ops::Rng;

/// Norms below this are treated as zero; central differences with small
/// steps leave noise around 1e-10 on gradients that are exactly zero.
const ZERO: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// Relative error per parameter array, in registration order.
    pub errors: Vec<(String, f64)>,
}

impl GradCheck {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().map(|e| e.1).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&str> {
        self.errors
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|e| e.0.as_str())
    }
}

/// `‖a − n‖ / (‖a‖ + ‖n‖)`, or 0 when both gradients vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let denom = norm(analytic) + norm(numeric);
    if denom < ZERO {
        0.0
    } else {
        norm(&diff) / denom
    }
}

/// Compare the tape's gradients of the scalar built by `loss` against
/// central differences with step `h`, one parameter array at a time.
pub fn check_gradients<F>(params: &ParamStore, h: f64, loss: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let eval = |p: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(p);
        let l = loss(&mut g)?;
        if g.shape(l) != (1, 1) {
            return Err(Error::Shape(format!("loss has shape {:?}", g.shape(l))));
        }
        Ok(g.scalar(l))
    };
    let analytic = {
        let mut g = Graph::new(params);
        let l = loss(&mut g)?;
        g.backward(l)
    };
    let mut work = params.clone();
    let mut errors = Vec::new();
    for id in params.ids() {
        let len = params.get(id).len();
        let mut numeric = Vec::with_capacity(len);
        for k in 0..len {
            let orig = params.get(id).as_slice_memory_order().unwrap()[k];
            work.get_mut(id).as_slice_memory_order_mut().unwrap()[k] = orig + h;
            let up = eval(&work)?;
            work.get_mut(id).as_slice_memory_order_mut().unwrap()[k] = orig - h;
            let down = eval(&work)?;
            work.get_mut(id).as_slice_memory_order_mut().unwrap()[k] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
        let a = analytic.get(id).as_slice_memory_order().unwrap().to_vec();
        errors.push((params.name(id).to_owned(), relative_error(&a, &numeric)));
    }
    Ok(GradCheck { errors })
}

/// A fixed random projection of `out` to a scalar, `Σ R ⊙ out`, so every
/// output element contributes a distinct weight to the gradient.
pub fn random_projection(g: &mut Graph<'_>, out: Var, rng: &mut Rng) -> Var {
    let r = Array2::from_shape_simple_fn(g.shape(out), || rng.random_range(-1.0..1.0));
    let weighted = g.mul_const(out, r);
    g.sum(weighted)
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;
    use crate::treebank_ops::seeded_rng;

    #[test]
    fn relative_error_edge_cases() {
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
        assert_eq!(relative_error(&[1.0], &[1.0]), 0.0);
        assert!((relative_error(&[1.0], &[-1.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn catches_a_wrong_gradient() {
        let mut store = ParamStore::new();
        let w = store.add("w", array![[0.5, -0.2], [0.1, 0.3]]).unwrap();
        let ok = check_gradients(&store, 1e-5, |g| {
            let p = g.param(w);
            let t = g.tanh(p);
            let m = g.mul(t, p);
            Ok(g.sum(m))
        })
        .unwrap();
        assert!(ok.max_error() < 1e-8);

        // A constant mask hides part of the dependency from the tape.
        let bad = check_gradients(&store, 1e-5, |g| {
            let p = g.param(w);
            let frozen = g.params().get(w).clone();
            let c = g.mul_const(p, frozen);
            Ok(g.sum(c))
        })
        .unwrap();
        assert!(bad.max_error() > 0.1);
        assert_eq!(bad.worst(), Some("w"));
    }

    #[test]
    fn projection_is_scalar() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.input(array![[1.0, 2.0]]);
        let mut rng = seeded_rng(0);
        let l = random_projection(&mut g, x, &mut rng);
        assert_eq!(g.shape(l), (1, 1));
    }
}
