//! Dense layers and parameter plumbing shared by the embedding and heads.

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Tensor::matrix(fan_in, fan_out, data).expect("glorot sizes agree")
}

/// Fixed-order access to every trainable tensor of a component. The order of
/// `params`, `params_mut` and the vars produced by registration must agree.
pub trait Parameters {
    fn params(&self) -> Vec<(String, &Tensor)>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `[in, out]`
    pub weight: Tensor,
    /// `[1, out]`
    pub bias: Tensor,
}

/// Feed-forward stack: LeakyReLU after every hidden layer, raw output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub slope: f64,
}

#[derive(Clone, Debug)]
pub struct MlpVars {
    layers: Vec<(Var, Var)>,
    slope: f64,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: &[usize], output: usize, rng: &mut R) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        let layers = dims
            .windows(2)
            .map(|w| Dense {
                weight: glorot(w[0], w[1], rng),
                bias: Tensor::zeros(1, w[1]),
            })
            .collect();
        Mlp {
            layers,
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.cols())
    }

    pub fn output_layer_mut(&mut self) -> &mut Dense {
        self.layers.last_mut().expect("mlp has an output layer")
    }

    pub fn register(&self, tape: &mut Tape) -> MlpVars {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())))
                .collect(),
            slope: self.slope,
        }
    }
}

impl Parameters for Mlp {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("{i}.weight"), &l.weight));
            out.push((format!("{i}.bias"), &l.bias));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

impl MlpVars {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = tape.matmul(h, w)?;
            h = tape.add_row(z, b)?;
            if i < last {
                h = tape.leaky_relu(h, self.slope);
            }
        }
        Ok(h)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn glorot_respects_bound_and_seed() {
        let a = glorot(10, 6, &mut ChaCha8Rng::seed_from_u64(1));
        let b = glorot(10, 6, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        let bound = (6.0f64 / 16.0).sqrt();
        assert!(a.data().iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn mlp_shapes_and_param_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut mlp = Mlp::new(8, &[4, 3], 2, &mut rng);
        assert_eq!((mlp.input_dim(), mlp.output_dim()), (8, 2));
        let names: Vec<String> = mlp.params().into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            ["0.weight", "0.bias", "1.weight", "1.bias", "2.weight", "2.bias"]
        );
        assert_eq!(mlp.params_mut().len(), 6);

        let mut tape = Tape::new();
        let vars = mlp.register(&mut tape);
        let x = tape.constant(Tensor::zeros(5, 8));
        let y = vars.forward(&mut tape, x).unwrap();
        assert_eq!(tape.value(y).shape(), &[5, 2]);
        assert_eq!(vars.vars().len(), 6);
    }
}
