use gasp_autodiff::check::{max_relative_error, numeric_gradient};
use gasp_autodiff::{Graph, Tensor, Var};
use gasp_core::rng::{self, Rng};

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }

    /// Folds a fallible check into a failing outcome with the error text.
    pub fn from_result(r: Result<Outcome, String>) -> Self {
        r.unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")))
    }
}

pub fn uniform(rng: &mut Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, rng::uniform_vec(rng, n, bound)).unwrap()
}

/// Reverse-mode gradients of `sum(w ⊙ f(inputs))` against central
/// differences with step `step`; returns the worst relative error.
pub fn gradient_error(
    f: &dyn for<'g> Fn(&'g Graph, &[Var<'g>]) -> Var<'g>,
    inputs: &[Tensor],
    rng: &mut Rng,
    step: f64,
) -> f64 {
    let probe = Graph::new();
    let vars: Vec<_> = inputs.iter().map(|t| probe.constant(t.clone())).collect();
    let weights = uniform(rng, &f(&probe, &vars).shape(), 1.0);

    let loss = |ts: &[Tensor]| {
        let g = Graph::new();
        let vars: Vec<_> = ts.iter().map(|t| g.constant(t.clone())).collect();
        f(&g, &vars).mul(g.constant(weights.clone())).unwrap().sum().unwrap().item().unwrap()
    };
    let numeric = numeric_gradient(loss, inputs, step);

    let g = Graph::new();
    let vars: Vec<_> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&g, &vars).mul(g.constant(weights)).unwrap().sum().unwrap();
    let grads: Vec<Tensor> = g.backward(out, &vars, false).unwrap().iter().map(Var::value).collect();
    max_relative_error(&grads, &numeric)
}
