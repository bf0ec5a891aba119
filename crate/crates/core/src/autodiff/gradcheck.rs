//! Central finite-difference oracle for reverse-mode gradients.

use super::tape::{Tape, Tensor, Var};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Worst `|analytic - numeric| / max(|analytic|, |numeric|, abs_floor)`.
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Compares reverse-mode gradients of a scalar function of `inputs` against
/// central differences with step `h`. `build` must be deterministic.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, abs_floor: f64, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.constant(t.clone())).collect();
        let out = build(&mut tape, &vars)?;
        Ok(tape.value(out)[0])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    tape.backward(loss)?;

    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut probe = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = tape.grad(*var).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        for i in 0..inputs[k].len() {
            let orig = inputs[k].data[i];
            probe[k].data[i] = orig + h;
            let up = eval(&probe)?;
            probe[k].data[i] = orig - h;
            let down = eval(&probe)?;
            probe[k].data[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let denom = analytic[i].abs().max(numeric.abs()).max(abs_floor);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
            checked += 1;
        }
    }
    Ok(GradCheck {
        max_rel_error: worst,
        checked,
    })
}
