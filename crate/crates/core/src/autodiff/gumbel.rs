use rand::Rng;

use super::tape::{argmax, Axis, Tape, Var};
use super::tensor::Tensor;
use crate::error::{GspError, Result};

/// Standard Gumbel draw via inverse CDF. `u` is kept away from 0 so the
/// double log stays finite.
pub fn sample_gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    -(-u.ln()).ln()
}

pub fn gumbel_noise<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| sample_gumbel(rng)).collect();
    Tensor::from_parts(rows, cols, data)
}

/// Row-wise Gumbel-Softmax over `logits` with fresh noise from `rng`.
pub fn gumbel_softmax<R: Rng + ?Sized>(
    tape: &mut Tape,
    logits: Var,
    temperature: f64,
    hard: bool,
    rng: &mut R,
) -> Result<Var> {
    let (r, c) = {
        let t = tape.value(logits);
        (t.rows(), t.cols())
    };
    let noise = gumbel_noise(r, c, rng);
    gumbel_softmax_with_noise(tape, logits, temperature, hard, &noise)
}

/// Gumbel-Softmax with caller-supplied noise. Soft mode returns
/// `softmax((logits + noise) / temperature)`; hard mode returns its one-hot
/// argmax while gradients follow the soft output.
pub fn gumbel_softmax_with_noise(
    tape: &mut Tape,
    logits: Var,
    temperature: f64,
    hard: bool,
    noise: &Tensor,
) -> Result<Var> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(GspError::InvalidArgument(format!(
            "gumbel-softmax temperature must be positive, got {temperature}"
        )));
    }
    let noise = tape.constant(noise.clone());
    let perturbed = tape.add(logits, noise)?;
    let scaled = tape.scale(perturbed, 1.0 / temperature);
    let soft = tape.softmax(scaled, Axis::Cols);
    Ok(if hard { tape.straight_through(soft) } else { soft })
}

/// Index of a hard Gumbel sample for one logit row. Equivalent to the
/// argmax of the hard Gumbel-Softmax output for any positive temperature.
pub fn sample_category<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> usize {
    let perturbed: Vec<f64> = logits.iter().map(|&l| l + sample_gumbel(rng)).collect();
    argmax(&perturbed)
}
