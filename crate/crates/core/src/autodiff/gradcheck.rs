//! Central finite-difference gradient checks against the tape.

use rand::Rng;

use super::tape::{Tape, Var};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::rng::{seeded, SeededRng};

pub const STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Largest relative error between tape gradients and central differences.
pub fn max_rel_error<'a, F>(inputs: &[Matrix<f64>], build: F, floor: f64) -> f64
where
    F: Fn(&Tape<'a, f64>, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Matrix<f64>]| {
        let tape: Tape<'a, f64> = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|m| tape.param(m.clone())).collect();
        let out = build(&tape, &vars).unwrap();
        tape.item(out)
    };
    let tape: Tape<'a, f64> = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.param(m.clone())).collect();
    let out = build(&tape, &vars).unwrap();
    let grads = tape.backward(out).unwrap();
    let mut worst: f64 = 0.0;
    for (k, (v, m)) in vars.iter().zip(inputs).enumerate() {
        let analytic = grads.get_or_zeros(*v, m);
        for idx in 0..m.len() {
            let mut plus = inputs.to_vec();
            plus[k].as_mut_slice()[idx] += STEP;
            let mut minus = inputs.to_vec();
            minus[k].as_mut_slice()[idx] -= STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic.as_slice()[idx], numeric, floor));
        }
    }
    worst
}

/// Weights that turn a matrix output into a scalar with a non-trivial gradient.
pub fn projector(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    random_matrix(rows, cols, &mut seeded(seed))
}
