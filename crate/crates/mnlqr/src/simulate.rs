//! Disturbance samplers and dataset generation.
//!
//! Randomness comes from [`SeededRng`], a ChaCha8 generator identified by a
//! `(seed, stream)` pair. Parallel repeats use the same seed with distinct
//! stream numbers, so every repeat draws an independent and reproducible
//! sequence regardless of how work is scheduled across threads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::identify::{Dataset, DatasetMeta, Generation, Transition};
use crate::model::{step, ModeTensor};
use crate::symm::SymMat;

/// State norm above which a simulated trajectory is reported as blown up.
pub const BLOWUP_CAP: f64 = 1e12;

/// ChaCha8 stream with a recorded seed and stream number.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl SeededRng {
    /// Generator for `(seed, stream)`.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        SeededRng { seed, stream, rng }
    }

    /// Seed.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream number.
    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Uniform sample from the unit ball in `ℝⁿ`: Gaussian direction, radius `u^{1/n}`.
pub fn sample_unit_ball<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    if n == 0 {
        return DVector::zeros(0);
    }
    loop {
        let g = DVector::from_fn(n, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut *rng));
        let norm = g.norm();
        if norm > 0.0 {
            let u: f64 = rng.random();
            return g * (u.powf(1.0 / n as f64) / norm);
        }
    }
}

/// Uniform sample from the ball `{w : ‖w − center‖ ≤ radius}`.
pub fn sample_ball<R: Rng + ?Sized>(center: &DVector<f64>, radius: f64, rng: &mut R) -> DVector<f64> {
    center + sample_unit_ball(center.len(), rng) * radius
}

/// Disturbance distributions used by the experiments.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceSampler {
    /// Uniform on a solid ball.
    UniformBall {
        /// Center `μ`.
        center: DVector<f64>,
        /// Radius `r`.
        radius: f64,
    },
    /// `w = (1, w̃)` with `w̃` uniform on the ellipsoid whose second moment is
    /// `diag(scales[1..])`; `scales[0]` must be one.
    FixedFirstCoordEllipsoid {
        /// Diagonal of `E[w wᵀ]`.
        scales: DVector<f64>,
    },
}

impl DisturbanceSampler {
    /// Uniform ball sampler; the radius must be nonnegative.
    pub fn uniform_ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidArgument("radius must be nonnegative".into()));
        }
        Ok(DisturbanceSampler::UniformBall { center, radius })
    }

    /// Degenerate ellipsoid sampler with fixed first coordinate.
    pub fn fixed_first_coord(scales: DVector<f64>) -> Result<Self> {
        if scales.is_empty() || (scales[0] - 1.0).abs() > 1e-12 || scales.iter().any(|s| *s < 0.0) {
            return Err(Error::InvalidArgument("scales must start with 1 and be nonnegative".into()));
        }
        Ok(DisturbanceSampler::FixedFirstCoordEllipsoid { scales })
    }

    /// Dimension of the samples.
    pub fn dim(&self) -> usize {
        match self {
            DisturbanceSampler::UniformBall { center, .. } => center.len(),
            DisturbanceSampler::FixedFirstCoordEllipsoid { scales } => scales.len(),
        }
    }

    /// Draws one sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            DisturbanceSampler::UniformBall { center, radius } => sample_ball(center, *radius, rng),
            DisturbanceSampler::FixedFirstCoordEllipsoid { scales } => {
                let n = scales.len() - 1;
                let u = sample_unit_ball(n, rng);
                let mut w = DVector::zeros(n + 1);
                w[0] = 1.0;
                for k in 0..n {
                    w[k + 1] = (scales[k + 1] * (n as f64 + 2.0)).sqrt() * u[k];
                }
                w
            }
        }
    }

    /// Almost-sure norm bound `r_w`.
    pub fn r_w(&self) -> f64 {
        match self {
            DisturbanceSampler::UniformBall { center, radius } => center.norm() + radius,
            DisturbanceSampler::FixedFirstCoordEllipsoid { scales } => {
                let n = scales.len() - 1;
                let smax = scales.iter().skip(1).fold(0.0_f64, |a, &b| a.max(b));
                (1.0 + smax * (n as f64 + 2.0)).sqrt()
            }
        }
    }

    /// Mean `E[w]`.
    pub fn mean(&self) -> DVector<f64> {
        match self {
            DisturbanceSampler::UniformBall { center, .. } => center.clone(),
            DisturbanceSampler::FixedFirstCoordEllipsoid { scales } => {
                let mut m = DVector::zeros(scales.len());
                m[0] = 1.0;
                m
            }
        }
    }

    /// Analytic second moment `E[w wᵀ]`.
    ///
    /// For the uniform ball in `ℝⁿ`, `E[(w−μ)(w−μ)ᵀ] = r² I/(n+2)`.
    pub fn second_moment(&self) -> SymMat {
        match self {
            DisturbanceSampler::UniformBall { center, radius } => {
                let n = center.len();
                let cov = DMatrix::identity(n, n) * (radius * radius / (n as f64 + 2.0));
                SymMat::symmetrize(cov + center * center.transpose())
            }
            DisturbanceSampler::FixedFirstCoordEllipsoid { scales } => {
                SymMat::from_diagonal(scales.as_slice())
            }
        }
    }
}

fn full_disturbance(truth: &ModeTensor, v: DVector<f64>) -> DVector<f64> {
    if truth.is_structured() {
        let mut w = DVector::zeros(v.len() + 1);
        w[0] = 1.0;
        w.rows_mut(1, v.len()).copy_from(&v);
        w
    } else {
        v
    }
}

fn check_sampler(truth: &ModeTensor, sampler: &DisturbanceSampler) -> Result<()> {
    let expect = if truth.is_structured() { truth.nw() - 1 } else { truth.nw() };
    if sampler.dim() != expect {
        return Err(Error::DimensionMismatch(format!(
            "sampler draws vectors of length {}, model expects {expect}",
            sampler.dim()
        )));
    }
    Ok(())
}

/// `N` independent transitions from `z` uniform on the ball of radius `z_radius`.
///
/// Structured truths receive `w = (1, w̃)` with `w̃` from the sampler.
pub fn gen_repeated_init(
    truth: &ModeTensor,
    sampler: &DisturbanceSampler,
    z_radius: f64,
    n: usize,
    rng: &mut SeededRng,
) -> Result<Dataset> {
    check_sampler(truth, sampler)?;
    let mut transitions = Vec::with_capacity(n);
    for _ in 0..n {
        let z = sample_unit_ball(truth.nz(), rng) * z_radius;
        let w = full_disturbance(truth, sampler.sample(rng));
        let x_next = step(truth, &z, &w)?;
        transitions.push(Transition { z, x_next });
    }
    Dataset::new(
        transitions,
        DatasetMeta { r_w: sampler.r_w(), r_z: Some(z_radius), generation: Generation::RepeatedInit, seed: rng.seed() },
    )
}

fn excite<R: Rng + ?Sized>(
    x: &DVector<f64>,
    k_exc: &DMatrix<f64>,
    delta_radius: f64,
    rng: &mut R,
) -> DVector<f64> {
    let nx = x.len();
    let nu = k_exc.nrows();
    let u = k_exc * x + sample_unit_ball(nu, rng) * delta_radius;
    let mut z = DVector::zeros(nx + nu);
    z.rows_mut(0, nx).copy_from(x);
    z.rows_mut(nx, nu).copy_from(&u);
    z
}

fn check_rollout_args(truth: &ModeTensor, sampler: &DisturbanceSampler, x0: &DVector<f64>, k_exc: &DMatrix<f64>) -> Result<()> {
    check_sampler(truth, sampler)?;
    if x0.len() != truth.nx() || k_exc.shape() != (truth.nu(), truth.nx()) {
        return Err(Error::DimensionMismatch("initial state or excitation gain has the wrong shape".into()));
    }
    Ok(())
}

/// `N` independent rollouts of length `horizon` with inputs `u_t = K x_t + δ_t`,
/// `δ_t` uniform on the ball of radius `delta_radius`; only the last
/// transition `((x_{T−1}, u_{T−1}), x_T)` of each rollout is kept.
#[allow(clippy::too_many_arguments)]
pub fn gen_rollout(
    truth: &ModeTensor,
    sampler: &DisturbanceSampler,
    x0: &DVector<f64>,
    k_exc: &DMatrix<f64>,
    delta_radius: f64,
    horizon: usize,
    n: usize,
    rng: &mut SeededRng,
) -> Result<Dataset> {
    if horizon < 2 {
        return Err(Error::InvalidArgument("rollout horizon must be at least 2".into()));
    }
    check_rollout_args(truth, sampler, x0, k_exc)?;
    let mut transitions = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = x0.clone();
        let mut last = None;
        for _ in 0..horizon {
            let z = excite(&x, k_exc, delta_radius, rng);
            let w = full_disturbance(truth, sampler.sample(rng));
            let x_next = step(truth, &z, &w)?;
            let norm = x_next.norm();
            if !(norm <= BLOWUP_CAP) {
                return Err(Error::TrajectoryBlowup(norm));
            }
            x = x_next.clone();
            last = Some(Transition { z, x_next });
        }
        transitions.push(last.expect("horizon is positive"));
    }
    Dataset::new(
        transitions,
        DatasetMeta { r_w: sampler.r_w(), r_z: None, generation: Generation::Rollout { horizon }, seed: rng.seed() },
    )
}

/// One trajectory of length `N`, all consecutive transitions kept.
pub fn gen_single_trajectory(
    truth: &ModeTensor,
    sampler: &DisturbanceSampler,
    x0: &DVector<f64>,
    k_exc: &DMatrix<f64>,
    delta_radius: f64,
    n: usize,
    rng: &mut SeededRng,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("trajectory length must be at least 1".into()));
    }
    check_rollout_args(truth, sampler, x0, k_exc)?;
    let mut transitions = Vec::with_capacity(n);
    let mut x = x0.clone();
    for _ in 0..n {
        let z = excite(&x, k_exc, delta_radius, rng);
        let w = full_disturbance(truth, sampler.sample(rng));
        let x_next = step(truth, &z, &w)?;
        let norm = x_next.norm();
        if !(norm <= BLOWUP_CAP) {
            return Err(Error::TrajectoryBlowup(norm));
        }
        x = x_next.clone();
        transitions.push(Transition { z, x_next });
    }
    Dataset::new(
        transitions,
        DatasetMeta { r_w: sampler.r_w(), r_z: None, generation: Generation::SingleTrajectory, seed: rng.seed() },
    )
}
