//! Sources of i.i.d. samples, one per data sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

pub trait SampleStream: Send {
    fn dim(&self) -> usize;

    /// Next sample, or `None` once the stream is exhausted.
    fn next_sample(&mut self) -> Option<Vec<f64>>;
}

impl<S: SampleStream + ?Sized> SampleStream for Box<S> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn next_sample(&mut self) -> Option<Vec<f64>> {
        (**self).next_sample()
    }
}

/// RNG for sequence `index` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// `N(mean, variance · I)`.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    mean: Vec<f64>,
    sd: f64,
    rng: ChaCha8Rng,
}

impl GaussianStream {
    pub fn new(mean: Vec<f64>, variance: f64, rng: ChaCha8Rng) -> Self {
        Self {
            mean,
            sd: variance.max(0.0).sqrt(),
            rng,
        }
    }
}

impl SampleStream for GaussianStream {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn next_sample(&mut self) -> Option<Vec<f64>> {
        Some(
            self.mean
                .iter()
                .map(|&m| {
                    let z: f64 = self.rng.sample(StandardNormal);
                    m + self.sd * z
                })
                .collect(),
        )
    }
}

/// Uniform draws with replacement from a finite pool.
#[derive(Debug, Clone)]
pub struct PoolStream {
    pool: Arc<Vec<Vec<f64>>>,
    rng: ChaCha8Rng,
}

impl PoolStream {
    pub fn new(pool: Arc<Vec<Vec<f64>>>, rng: ChaCha8Rng) -> Self {
        assert!(!pool.is_empty(), "empty sample pool");
        Self { pool, rng }
    }
}

impl SampleStream for PoolStream {
    fn dim(&self) -> usize {
        self.pool[0].len()
    }

    fn next_sample(&mut self) -> Option<Vec<f64>> {
        let i = self.rng.gen_range(0..self.pool.len());
        Some(self.pool[i].clone())
    }
}

/// Replays a fixed list once, then reports exhaustion.
#[derive(Debug, Clone)]
pub struct ReplayStream {
    samples: Vec<Vec<f64>>,
    next: usize,
    dim: usize,
}

impl ReplayStream {
    pub fn new(samples: Vec<Vec<f64>>, dim: usize) -> Self {
        Self {
            samples,
            next: 0,
            dim,
        }
    }
}

impl SampleStream for ReplayStream {
    fn dim(&self) -> usize {
        self.dim
    }

    fn next_sample(&mut self) -> Option<Vec<f64>> {
        let s = self.samples.get(self.next).cloned();
        self.next += 1;
        s
    }
}

/// Always returns the same point.
#[derive(Debug, Clone)]
pub struct ConstantStream(pub Vec<f64>);

impl SampleStream for ConstantStream {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn next_sample(&mut self) -> Option<Vec<f64>> {
        Some(self.0.clone())
    }
}
