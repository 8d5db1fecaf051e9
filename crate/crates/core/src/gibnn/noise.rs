use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Open01, StandardNormal};

use crate::numcore::Tensor;

/// Seeded source of every random draw made by a forward pass.
///
/// The number of draws never depends on parameter values, so reseeding
/// reproduces the exact same noise for perturbed parameters.
#[derive(Clone, Debug)]
pub struct Noise {
    rng: ChaCha8Rng,
}

impl Noise {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn from_rng(rng: ChaCha8Rng) -> Self {
        Self { rng }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.sample(Open01)
    }

    pub fn normal(&mut self, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.sample(StandardNormal)).collect();
        Tensor::new(shape.to_vec(), data).expect("sized buffer")
    }

    /// Standard Gumbel draws `-ln E` with `E ~ Exp(1)`.
    pub fn gumbel(&mut self, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let e: f64 = self.rng.sample(Exp1);
                -e.max(f64::MIN_POSITIVE).ln()
            })
            .collect();
        Tensor::new(shape.to_vec(), data).expect("sized buffer")
    }

    /// Logistic draws `ln U - ln(1 - U)`.
    pub fn logistic(&mut self, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let u = self.uniform();
                u.ln() - (-u).ln_1p()
            })
            .collect();
        Tensor::new(shape.to_vec(), data).expect("sized buffer")
    }

    /// Inverted-dropout mask: entries are `0` with probability `p`, else `1/(1-p)`.
    pub fn dropout_mask(&mut self, shape: &[usize], p: f64) -> Tensor {
        let n = shape.iter().product();
        let keep = 1.0 / (1.0 - p);
        let data = (0..n)
            .map(|_| if self.uniform() < p { 0.0 } else { keep })
            .collect();
        Tensor::new(shape.to_vec(), data).expect("sized buffer")
    }
}
