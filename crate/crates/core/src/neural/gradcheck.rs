use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;
use super::params::ParamSet;
use super::tape::{Tape, Var};

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameter name and element index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Relative error with a small absolute floor so that entries whose true
/// gradient is ~0 are judged on absolute terms.
fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares reverse-mode gradients of `L = sum(R ⊙ f(params))` against
/// central differences (step 1e-5) over every parameter element. `R` is a
/// fixed random weighting drawn from `seed`.
pub fn gradient_check<F>(params: &ParamSet<f64>, seed: u64, f: F) -> GradCheck
where
    F: Fn(&mut Tape<'_, f64>) -> Var,
{
    const H: f64 = 1e-5;
    let (weights, analytic) = {
        let mut t = Tape::new(params);
        let out = f(&mut t);
        let (r, c) = t.value(out).shape();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
        let g = t.backward(out, w.clone());
        (w, g.params)
    };
    let loss = |p: &ParamSet<f64>| {
        let mut t = Tape::new(p);
        let out = f(&mut t);
        t.value(out)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a * b)
            .sum::<f64>()
    };
    let mut work = params.clone();
    let mut result = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for (pi, name) in params.names().iter().enumerate() {
        for e in 0..params.values()[pi].data().len() {
            let orig = work.values()[pi].data()[e];
            work.values_mut()[pi].data_mut()[e] = orig + H;
            let up = loss(&work);
            work.values_mut()[pi].data_mut()[e] = orig - H;
            let down = loss(&work);
            work.values_mut()[pi].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * H);
            let err = rel_error(analytic.grads[pi].data()[e], numeric);
            result.checked += 1;
            if err > result.max_rel_error {
                result.max_rel_error = err;
                result.worst = Some((name.clone(), e));
            }
        }
    }
    result
}
