//! Experiment configuration, Monte Carlo sweeps and CSV output.
//!
//! An [`ExperimentConfig`] names a true system, a disturbance distribution,
//! the model basis used for identification, a data-generation method and a
//! sweep over sample counts. [`run_identify`] and [`run_synthesize`] repeat
//! identification (and synthesis) for every `(N, repeat)` pair and return
//! [`SweepRecord`]s, which [`write_records`] stores as CSV.
//!
//! Every repeat draws from its own ChaCha8 stream derived from `(N, repeat)`,
//! so output does not depend on the number of worker threads.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concentration::check_delta;
use crate::error::{Error, Result};
use crate::identify::{
    second_moment_ambiguity, structured_ambiguity_split, AmbiguitySet, Dataset,
};
use crate::linalg::spectral_norm;
use crate::model::{moment_dynamics, translate_second_moment, translation_matrix, model_free_basis, ModeTensor};
use crate::simulate::{gen_repeated_init, gen_rollout, gen_single_trajectory, DisturbanceSampler, SeededRng};
use crate::symm::{matrix_from_rows, SymMat};
use crate::synthesis::{dr_synthesize, relative_suboptimality_to, riccati_fixed_point, LqrSpec, RiccatiOptions, SynthesisResult};

/// Version tag written as the first line of sweep CSV files.
pub const SWEEP_CSV_VERSION: &str = "# mnlqr-sweep v1";

/// Second header line describing how consumers should summarize the records.
pub const SWEEP_CSV_NOTE: &str = "# bands: central q-mass quantile band around the median (q=0.1 gives the 0.45 and 0.55 quantiles), \
linear interpolation between order statistics; infeasible repeats have feasible=0, no rel_subopt row, and are excluded from quantiles";

/// Metric names that may appear in a [`SweepRecord`].
pub const METRIC_NAMES: [&str; 7] = ["w_err", "op_rel_err", "beta_w", "rel_subopt", "mu_err", "beta_mu", "feasible"];

/// Disturbance distribution of the true system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceConfig {
    /// Uniform on a solid ball.
    UniformBall {
        /// Center.
        center: Vec<f64>,
        /// Radius.
        radius: f64,
    },
    /// `(1, w̃)` with `w̃` uniform on an ellipsoid with second moment `diag(scales[1..])`.
    FixedFirstCoord {
        /// Diagonal of the second moment, starting with one.
        scales: Vec<f64>,
    },
}

impl DisturbanceConfig {
    fn sampler(&self) -> Result<DisturbanceSampler> {
        match self {
            DisturbanceConfig::UniformBall { center, radius } => {
                DisturbanceSampler::uniform_ball(DVector::from_column_slice(center), *radius)
            }
            DisturbanceConfig::FixedFirstCoord { scales } => {
                DisturbanceSampler::fixed_first_coord(DVector::from_column_slice(scales))
            }
        }
    }
}

/// Basis in which the disturbance moment is identified.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "basis", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelBasis {
    /// The true modes.
    #[default]
    True,
    /// `n_w = n_x n_z` with identity 3-mode matricization.
    ModelFree,
    /// A user-supplied mode tensor.
    Custom {
        /// The model modes.
        tensor: ModeTensor,
    },
}

/// True system and identification model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// True modes `𝓥`.
    pub truth: ModeTensor,
    /// Distribution of the true disturbance (of `ṽ` for structured truths).
    pub disturbance: DisturbanceConfig,
    /// Identification basis.
    #[serde(default)]
    pub model: ModelBasis,
}

/// Data-generation method and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum GenerationConfig {
    /// Independent transitions from `z` uniform on a ball.
    RepeatedInit {
        /// Radius of the ball `z` is drawn from.
        #[serde(default = "default_z_radius")]
        z_radius: f64,
    },
    /// Last transition of independent excited rollouts.
    Rollout {
        /// Initial state.
        x0: Vec<f64>,
        /// Excitation gain, row-major.
        gain: Vec<Vec<f64>>,
        /// Radius of the excitation ball.
        delta_radius: f64,
        /// Rollout length.
        horizon: usize,
    },
    /// Consecutive transitions of one excited trajectory.
    SingleTrajectory {
        /// Initial state.
        x0: Vec<f64>,
        /// Excitation gain, row-major.
        gain: Vec<Vec<f64>>,
        /// Radius of the excitation ball.
        delta_radius: f64,
    },
}

fn default_z_radius() -> f64 {
    1.0
}

fn default_beta_scale() -> f64 {
    1.0
}

/// Experiment description read from JSON; unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Identifier written into every record.
    pub experiment_id: String,
    /// True system and identification basis.
    pub system: SystemConfig,
    /// Sample counts, positive and strictly ascending.
    pub sweep: Vec<usize>,
    /// Repeats per sample count.
    pub repeats: usize,
    /// Failure probability of the ambiguity set.
    pub delta: f64,
    /// LQR weights, required by `synthesize`.
    #[serde(default)]
    pub lqr: Option<LqrSpec>,
    /// Data-generation method.
    pub generation: GenerationConfig,
    /// Default output path.
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    /// Base seed.
    #[serde(default)]
    pub seed: u64,
    /// Multiplier applied to every radius before synthesis; zero gives the
    /// certainty-equivalent controller.
    #[serde(default = "default_beta_scale")]
    pub beta_scale: f64,
}

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::ConfigInvalid { path: path.to_string(), message: message.into() }
}

impl ExperimentConfig {
    /// Parses JSON, reporting the path of the offending field on failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(&path, e.into_inner().to_string())
        })
    }

    /// Reads and parses a JSON file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err("", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Validates the configuration and precomputes the ground truth in model coordinates.
    pub fn prepare(&self) -> Result<Experiment> {
        if self.experiment_id.is_empty() || self.experiment_id.contains(['\n', ',', '"']) {
            return Err(config_err("experiment_id", "must be nonempty without commas, quotes or newlines"));
        }
        if self.sweep.is_empty() {
            return Err(config_err("sweep", "must list at least one sample count"));
        }
        if self.sweep[0] == 0 || self.sweep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("sweep", "sample counts must be positive and strictly ascending"));
        }
        if self.repeats == 0 {
            return Err(config_err("repeats", "must be at least 1"));
        }
        check_delta(self.delta).map_err(|e| config_err("delta", e.to_string()))?;
        if !(self.beta_scale >= 0.0) || !self.beta_scale.is_finite() {
            return Err(config_err("beta_scale", "must be finite and nonnegative"));
        }
        let truth = self.system.truth.clone();
        let sampler = self.system.disturbance.sampler().map_err(|e| config_err("system.disturbance", e.to_string()))?;
        let v_dim = if truth.is_structured() { truth.nw() - 1 } else { truth.nw() };
        if sampler.dim() != v_dim {
            return Err(config_err(
                "system.disturbance",
                format!("draws vectors of length {}, truth expects {v_dim}", sampler.dim()),
            ));
        }
        let model = match &self.system.model {
            ModelBasis::True => truth.clone(),
            ModelBasis::ModelFree => {
                if truth.is_structured() {
                    return Err(config_err("system.model", "the model-free basis needs an unstructured truth"));
                }
                model_free_basis(truth.nx(), truth.nu())
            }
            ModelBasis::Custom { tensor } => tensor.clone(),
        };
        if model.nx() != truth.nx() || model.nu() != truth.nu() {
            return Err(config_err("system.model", "state and input dimensions differ from the truth"));
        }
        if model.is_structured() != truth.is_structured() {
            return Err(config_err("system.model", "model and truth must agree on the structured flag"));
        }
        let v_moment = full_truth_moment(&truth, &sampler);
        let t = translation_matrix(&model, &truth).map_err(|e| config_err("system.model", e.to_string()))?;
        let w_full = translate_second_moment(&model, &truth, &v_moment)?;
        let (w_star, mu_star, r_w) = if truth.is_structured() {
            let n = model.nw() - 1;
            let tt = t.view((1, 1), (n, t.ncols() - 1)).into_owned();
            let block = w_full.as_matrix().view((1, 1), (n, n)).into_owned();
            let mu = w_full.as_matrix().view((1, 0), (n, 1)).column(0).into_owned();
            (SymMat::symmetrize(block), Some(mu), spectral_norm(&tt) * sampler.r_w())
        } else {
            (w_full.clone(), None, spectral_norm(&t) * sampler.r_w())
        };
        let true_op = moment_dynamics(&truth, &v_moment)?.op_matrix().clone();
        let lqr = match &self.lqr {
            Some(spec) => {
                if spec.q().dim() != truth.nx() || spec.r().dim() != truth.nu() {
                    return Err(config_err("lqr", "weights do not match the system dimensions"));
                }
                Some(spec.clone())
            }
            None => None,
        };
        let generation = match &self.generation {
            GenerationConfig::RepeatedInit { z_radius } => {
                if !(*z_radius > 0.0) {
                    return Err(config_err("generation.z_radius", "must be positive"));
                }
                GenerationConfig::RepeatedInit { z_radius: *z_radius }
            }
            g @ (GenerationConfig::Rollout { x0, gain, .. } | GenerationConfig::SingleTrajectory { x0, gain, .. }) => {
                let k = matrix_from_rows(gain).map_err(|e| config_err("generation.gain", e.to_string()))?;
                if x0.len() != truth.nx() || k.shape() != (truth.nu(), truth.nx()) {
                    return Err(config_err("generation", "x0 or gain has the wrong shape"));
                }
                if let GenerationConfig::Rollout { horizon, .. } = g {
                    if *horizon < 2 {
                        return Err(config_err("generation.horizon", "must be at least 2"));
                    }
                }
                g.clone()
            }
        };
        Ok(Experiment {
            id: self.experiment_id.clone(),
            truth,
            sampler,
            model,
            v_moment,
            w_star,
            mu_star,
            w_full,
            r_w,
            true_op,
            lqr,
            generation,
            sweep: self.sweep.clone(),
            repeats: self.repeats,
            delta: self.delta,
            seed: self.seed,
            beta_scale: self.beta_scale,
        })
    }
}

/// Second moment of the full true disturbance (with the leading one for structured truths).
fn full_truth_moment(truth: &ModeTensor, sampler: &DisturbanceSampler) -> SymMat {
    let s = sampler.second_moment();
    if !truth.is_structured() {
        return s;
    }
    let n = s.dim();
    let mu = sampler.mean();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m[(0, 0)] = 1.0;
    m.view_mut((1, 0), (n, 1)).copy_from(&mu);
    m.view_mut((0, 1), (1, n)).copy_from(&mu.transpose());
    m.view_mut((1, 1), (n, n)).copy_from(s.as_matrix());
    SymMat::symmetrize(m)
}

/// A validated experiment with its ground truth expressed in model coordinates.
#[derive(Debug, Clone)]
pub struct Experiment {
    /// Identifier.
    pub id: String,
    /// True modes.
    pub truth: ModeTensor,
    /// True disturbance sampler.
    pub sampler: DisturbanceSampler,
    /// Identification model.
    pub model: ModeTensor,
    /// Full true second moment in the truth basis.
    pub v_moment: SymMat,
    /// Target of `Ŵ` in model coordinates (the `w̃` block for structured models).
    pub w_star: SymMat,
    /// Target of `μ̂` for structured models.
    pub mu_star: Option<DVector<f64>>,
    /// Full second moment in model coordinates.
    pub w_full: SymMat,
    /// Disturbance bound in model coordinates.
    pub r_w: f64,
    /// Operator matrix of the true moment dynamics.
    pub true_op: DMatrix<f64>,
    /// LQR weights.
    pub lqr: Option<LqrSpec>,
    /// Generation method.
    pub generation: GenerationConfig,
    /// Sample counts.
    pub sweep: Vec<usize>,
    /// Repeats per sample count.
    pub repeats: usize,
    /// Failure probability.
    pub delta: f64,
    /// Base seed.
    pub seed: u64,
    /// Radius multiplier applied before synthesis.
    pub beta_scale: f64,
}

/// Stream number of the repeat `repeat` at sample count `n`.
pub fn stream_id(n: usize, repeat: usize) -> u64 {
    ((n as u64) << 24) | repeat as u64
}

impl Experiment {
    /// Generates `n` transitions from the truth; the dataset carries the model-basis bound `r_w`.
    pub fn generate(&self, n: usize, rng: &mut SeededRng) -> Result<Dataset> {
        let data = match &self.generation {
            GenerationConfig::RepeatedInit { z_radius } => gen_repeated_init(&self.truth, &self.sampler, *z_radius, n, rng)?,
            GenerationConfig::Rollout { x0, gain, delta_radius, horizon } => gen_rollout(
                &self.truth,
                &self.sampler,
                &DVector::from_column_slice(x0),
                &matrix_from_rows(gain)?,
                *delta_radius,
                *horizon,
                n,
                rng,
            )?,
            GenerationConfig::SingleTrajectory { x0, gain, delta_radius } => gen_single_trajectory(
                &self.truth,
                &self.sampler,
                &DVector::from_column_slice(x0),
                &matrix_from_rows(gain)?,
                *delta_radius,
                n,
                rng,
            )?,
        };
        data.with_r_w(self.r_w)
    }

    /// Ambiguity set identified from `data` in the model basis.
    pub fn identify(&self, data: &Dataset) -> Result<AmbiguitySet> {
        if self.model.is_structured() {
            structured_ambiguity_split(&self.model, data, self.delta)
        } else {
            second_moment_ambiguity(&self.model, data, self.delta)
        }
    }

    /// Identification metrics of one ambiguity set, in a fixed order.
    pub fn identify_metrics(&self, amb: &AmbiguitySet) -> Result<Vec<(&'static str, f64)>> {
        let w_err = spectral_norm(&(amb.w_hat.as_matrix() - self.w_star.as_matrix()));
        let op_hat = moment_dynamics(&self.model, &amb.full_moment_estimate())?;
        let op_rel_err = spectral_norm(&(op_hat.op_matrix() - &self.true_op)) / spectral_norm(&self.true_op);
        let mut out = vec![("w_err", w_err), ("op_rel_err", op_rel_err), ("beta_w", amb.beta_w)];
        if let (Some(s), Some(mu)) = (&amb.structured, &self.mu_star) {
            let mu_hat = DVector::from_column_slice(&s.mu_hat);
            out.push(("mu_err", (mu_hat - mu).norm()));
            out.push(("beta_mu", s.beta_mu));
        }
        Ok(out)
    }

    fn lqr(&self) -> Result<&LqrSpec> {
        self.lqr.as_ref().ok_or_else(|| config_err("lqr", "synthesis requires LQR weights"))
    }

    /// Optimal controller for the true system.
    pub fn true_optimum(&self, opts: RiccatiOptions) -> Result<SynthesisResult> {
        riccati_fixed_point(&self.truth, &self.v_moment, self.lqr()?, opts)
    }

    /// Synthesizes a robust controller from `amb` and scores it on the true system.
    ///
    /// Returns `None` when synthesis reports that the set admits no
    /// stabilizing controller. A controller that destabilizes the true
    /// system scores `+∞`.
    pub fn synthesize_score(&self, amb: &AmbiguitySet, optimum: &SynthesisResult, opts: RiccatiOptions) -> Result<Option<f64>> {
        let spec = self.lqr()?;
        let scaled = scale_radii(amb, self.beta_scale);
        let k = match dr_synthesize(&self.model, &scaled, spec, opts) {
            Ok(res) => res.k,
            Err(e) if is_infeasible(&e) => return Ok(None),
            Err(e) => return Err(e),
        };
        match relative_suboptimality_to(&self.truth, &self.v_moment, &k, spec, optimum) {
            Ok(v) => Ok(Some(v)),
            Err(Error::UnstableClosedLoop(_)) => Ok(Some(f64::INFINITY)),
            Err(e) => Err(e),
        }
    }

    /// Ambiguity set implied by the norm bound alone.
    ///
    /// Unstructured models use `Ŵ = 0`, `β_W = r_w²`. Structured models bound
    /// the full disturbance `(1, w̃)` by `√(1 + r_w²)` and use the same form.
    pub fn trivial_ambiguity(&self) -> AmbiguitySet {
        let r = if self.model.is_structured() { (1.0 + self.r_w * self.r_w).sqrt() } else { self.r_w };
        AmbiguitySet::trivial(self.model.nw(), r, self.delta)
    }
}

/// Multiplies every confidence radius of `amb` by `scale`.
pub fn scale_radii(amb: &AmbiguitySet, scale: f64) -> AmbiguitySet {
    let mut out = amb.with_beta(amb.beta_w * scale);
    if let Some(s) = out.structured.as_mut() {
        s.beta_mu *= scale;
        s.beta_sigma *= scale;
    }
    out
}

/// Synthesis outcomes recorded as infeasible rather than propagated.
pub fn is_infeasible(e: &Error) -> bool {
    matches!(
        e,
        Error::Diverged { .. } | Error::NotConverged { .. } | Error::UnstableClosedLoop(_) | Error::WBarNotPsd(_)
    )
}

/// One row of sweep output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    /// Experiment identifier.
    pub experiment_id: String,
    /// Sample count (zero for rows that use no data).
    #[serde(rename = "N")]
    pub n: usize,
    /// Repeat index.
    pub repeat_index: usize,
    /// One of [`METRIC_NAMES`].
    pub metric_name: String,
    /// Metric value.
    pub value: f64,
}

impl SweepRecord {
    fn new(id: &str, n: usize, repeat_index: usize, metric: &str, value: f64) -> Self {
        SweepRecord { experiment_id: id.to_string(), n, repeat_index, metric_name: metric.to_string(), value }
    }
}

/// Worker-pool settings and seed override.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    /// Replaces the configured seed.
    pub seed: Option<u64>,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
    /// Runs on a single thread.
    pub deterministic: bool,
}

fn with_pool<T: Send>(opts: &RunOptions, f: impl FnOnce() -> T + Send) -> Result<T> {
    let threads = if opts.deterministic { Some(1) } else { opts.threads };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::InvalidArgument("thread count must be positive".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(pool.install(f))
}

fn tasks(exp: &Experiment) -> Vec<(usize, usize)> {
    exp.sweep.iter().flat_map(|&n| (0..exp.repeats).map(move |r| (n, r))).collect()
}

fn sort_records(records: &mut [SweepRecord]) {
    records.sort_by(|a, b| {
        (&a.experiment_id, a.n, a.repeat_index, &a.metric_name).cmp(&(&b.experiment_id, b.n, b.repeat_index, &b.metric_name))
    });
}

/// Identification sweep: `w_err`, `op_rel_err`, `beta_w` (plus `mu_err`,
/// `beta_mu` for structured models) for every `(N, repeat)`.
pub fn run_identify(exp: &Experiment, opts: &RunOptions) -> Result<Vec<SweepRecord>> {
    let seed = opts.seed.unwrap_or(exp.seed);
    let work = tasks(exp);
    let rows: Result<Vec<Vec<SweepRecord>>> = with_pool(opts, || {
        work.par_iter()
            .map(|&(n, r)| {
                let mut rng = SeededRng::new(seed, stream_id(n, r));
                let data = exp.generate(n, &mut rng)?;
                let amb = exp.identify(&data)?;
                Ok(exp
                    .identify_metrics(&amb)?
                    .into_iter()
                    .map(|(name, v)| SweepRecord::new(&exp.id, n, r, name, v))
                    .collect())
            })
            .collect()
    })?;
    let mut records: Vec<SweepRecord> = rows?.into_iter().flatten().collect();
    sort_records(&mut records);
    Ok(records)
}

/// Synthesis sweep: `feasible`, `beta_w` and, for feasible repeats,
/// `rel_subopt` on the true system. Adds `feasible` and `rel_subopt` rows for
/// the trivial ambiguity set under the id `<id>-trivial` with `N = 0`.
pub fn run_synthesize(exp: &Experiment, opts: &RunOptions) -> Result<Vec<SweepRecord>> {
    let ropts = RiccatiOptions::default();
    let optimum = exp.true_optimum(ropts)?;
    let seed = opts.seed.unwrap_or(exp.seed);
    let work = tasks(exp);
    let rows: Result<Vec<Vec<SweepRecord>>> = with_pool(opts, || {
        work.par_iter()
            .map(|&(n, r)| {
                let mut rng = SeededRng::new(seed, stream_id(n, r));
                let data = exp.generate(n, &mut rng)?;
                let mut out = Vec::with_capacity(3);
                let amb = match exp.identify(&data) {
                    Ok(a) => a,
                    Err(Error::InsufficientSamples { .. } | Error::RankDeficientData { .. }) => {
                        out.push(SweepRecord::new(&exp.id, n, r, "feasible", 0.0));
                        return Ok(out);
                    }
                    Err(e) => return Err(e),
                };
                out.push(SweepRecord::new(&exp.id, n, r, "beta_w", amb.beta_w));
                match exp.synthesize_score(&amb, &optimum, ropts)? {
                    Some(v) => {
                        out.push(SweepRecord::new(&exp.id, n, r, "feasible", 1.0));
                        out.push(SweepRecord::new(&exp.id, n, r, "rel_subopt", v));
                    }
                    None => out.push(SweepRecord::new(&exp.id, n, r, "feasible", 0.0)),
                }
                Ok(out)
            })
            .collect()
    })?;
    let mut records: Vec<SweepRecord> = rows?.into_iter().flatten().collect();
    let trivial_id = format!("{}-trivial", exp.id);
    match exp.synthesize_score(&exp.trivial_ambiguity(), &optimum, ropts)? {
        Some(v) => {
            records.push(SweepRecord::new(&trivial_id, 0, 0, "feasible", 1.0));
            records.push(SweepRecord::new(&trivial_id, 0, 0, "rel_subopt", v));
        }
        None => records.push(SweepRecord::new(&trivial_id, 0, 0, "feasible", 0.0)),
    }
    sort_records(&mut records);
    Ok(records)
}

/// Generates one dataset of `n` transitions from repeat stream zero.
pub fn run_simulate(exp: &Experiment, n: usize, opts: &RunOptions) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let seed = opts.seed.unwrap_or(exp.seed);
    let mut rng = SeededRng::new(seed, stream_id(n, 0));
    exp.generate(n, &mut rng)
}

/// Renders records as versioned CSV text.
pub fn records_to_csv(records: &[SweepRecord]) -> Result<String> {
    let mut buf = Vec::new();
    writeln!(buf, "{SWEEP_CSV_VERSION}")?;
    writeln!(buf, "{SWEEP_CSV_NOTE}")?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in records {
            w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
    }
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

/// Writes records as versioned CSV.
pub fn write_records(path: &Path, records: &[SweepRecord]) -> Result<()> {
    fs::write(path, records_to_csv(records)?)?;
    Ok(())
}

/// Reads records written by [`write_records`].
pub fn read_records(path: &Path) -> Result<Vec<SweepRecord>> {
    let text = fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or_default();
    if first != SWEEP_CSV_VERSION {
        return Err(Error::Io(format!("unsupported sweep CSV header {first:?}")));
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    rdr.deserialize().map(|r| r.map_err(|e| Error::Io(e.to_string()))).collect()
}

/// Quantile with linear interpolation between order statistics of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Central `q`-mass band around the median: the `0.5 − q/2`, `0.5` and
/// `0.5 + q/2` quantiles with linear interpolation.
pub fn quantile_band(values: &[f64], q: f64) -> Result<(f64, f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("band mass must lie in (0, 1), got {q}")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("values contain NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((quantile_sorted(&sorted, 0.5 - q / 2.0), quantile_sorted(&sorted, 0.5), quantile_sorted(&sorted, 0.5 + q / 2.0)))
}

/// Quantile band of one metric at one sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSummary {
    /// Experiment identifier.
    pub experiment_id: String,
    /// Sample count.
    pub n: usize,
    /// Metric name.
    pub metric_name: String,
    /// Lower band edge.
    pub lo: f64,
    /// Median.
    pub median: f64,
    /// Upper band edge.
    pub hi: f64,
    /// Number of values summarized.
    pub count: usize,
}

/// Bands for every `(experiment_id, N, metric)` group, sorted by key.
pub fn summarize(records: &[SweepRecord], q: f64) -> Result<Vec<BandSummary>> {
    let mut groups: std::collections::BTreeMap<(String, usize, String), Vec<f64>> = Default::default();
    for r in records {
        groups.entry((r.experiment_id.clone(), r.n, r.metric_name.clone())).or_default().push(r.value);
    }
    groups
        .into_iter()
        .map(|((experiment_id, n, metric_name), vals)| {
            let (lo, median, hi) = quantile_band(&vals, q)?;
            Ok(BandSummary { experiment_id, n, metric_name, lo, median, hi, count: vals.len() })
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidArgument("need at least two paired points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("x values must not all coincide".into()));
    }
    Ok(sxy / sxx)
}
