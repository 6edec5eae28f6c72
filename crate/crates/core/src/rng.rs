use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniformly distributed unit vector in dimension `d`.
pub fn unit_vector(rng: &mut Rng, d: usize) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-12 {
            return x.into_iter().map(|c| c / n).collect();
        }
    }
}

pub fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}
