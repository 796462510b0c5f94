use super::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Deterministic random stream keyed by `(seed, stream_id)`. Identical keys
/// reproduce identical draws bit-exactly; concurrent workers must each derive
/// their own stream id rather than share one stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    seed: u64,
    stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream { rng, seed, stream_id }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn standard_normal_vec(&mut self, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| self.standard_normal()).collect()
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn uniform_usize(&mut self, bound: usize) -> usize {
        self.rng.random_range(0..bound)
    }
}

/// Draws `mean + chol * z` with `z` i.i.d. standard normal from `rng`.
pub fn gauss_sample(rng: &mut RngStream, mean: &[f64], chol: &Matrix) -> Vec<f64> {
    assert_eq!(mean.len(), chol.rows(), "mean/chol dimension mismatch");
    let z = rng.standard_normal_vec(chol.cols());
    let mut out = mean.to_vec();
    for i in 0..chol.rows() {
        let row = chol.row(i);
        let mut acc = 0.0;
        // Lower-triangular factor: only the first i+1 entries contribute.
        for j in 0..=i.min(chol.cols() - 1) {
            acc += row[j] * z[j];
        }
        out[i] += acc;
    }
    out
}
