//! Minimal tensors, reverse-mode autodiff and optimizers for the
//! feature-extractor, predictor and discriminator networks.

mod graph;
mod optim;
mod params;
mod tensor;

pub use graph::{Gradients, Graph, Var, PROB_EPSILON};
pub use optim::{Optimizer, OptimizerConfig};
pub use params::{ParamId, ParamSet};
pub use tensor::Tensor;

use crate::error::Result;

/// Worst relative error between analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
}

/// Compares the analytic gradient of `f` at `x` against central differences
/// with step `h`. `f` builds its scalar from the leaf it is handed.
pub fn grad_check<F>(x: &Tensor, h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let leaf = g.leaf(x.clone());
    let out = f(&mut g, leaf)?;
    let analytic = g
        .backward(out)?
        .wrt(leaf)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape()));

    let eval = |t: Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let leaf = g.leaf(t);
        let out = f(&mut g, leaf)?;
        Ok(g.value(out).item())
    };
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
    };
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * h);
        let a = analytic.data()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        if rel > worst.max_rel_error {
            worst = GradCheck {
                max_rel_error: rel,
                worst_index: i,
            };
        }
    }
    Ok(worst)
}
