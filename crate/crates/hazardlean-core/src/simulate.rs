//! Synthetic data generators.
//!
//! Two families of designs are provided:
//!
//! * a Cox-type hazard driven by a *historical functional linear* covariate
//!   model — the covariate path `Z` feeds both the exposure `X` and a latent
//!   process through kernel integrals, and the hazard multiplies a Weibull
//!   baseline `beta1 * t^2` by `exp(beta2 * Z_t + latent_t + (rho0/sqrt(n)) X_t)`,
//!   so `rho0 = 0` makes the exposure locally uninformative while keeping it
//!   correlated with everything else;
//! * two additive-hazard designs with hazard `2t * (1 + X + f(Z))` and
//!   time-constant covariates, where `f` is linear with Dirichlet weights
//!   (`Lin`) or a Gaussian bump of the first covariate (`Par`). Their
//!   cumulative hazard has the closed form `t^2 (1 + X + f(Z))`, which the
//!   sampler uses exactly.
//!
//! Event times are drawn by the inverse-hazard method (`T` is the last grid
//! point where the cumulative hazard stays below an Exp(1) draw) and snapped
//! to the grid; everything is administratively censored at `t = 1`. All
//! randomness flows through per-subject counter streams, so datasets are
//! bitwise reproducible and subject outputs are independent of generation
//! order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{SubjectPath, SurvivalSample, TimeGrid};
use crate::rng::{derive_seed, subject_stream, substream, DATASET_STREAM};
use crate::scalar::Real;

/// Interaction kernel `rho(s, t)` for historical functional linear terms,
/// defined on `s <= t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistKernel {
    /// `rho = 0`: no historical influence.
    Zero,
    /// `rho = 1`: plain running integral.
    Constant,
    /// `rho = exp(-2 (t - s)^2)`: recent past dominates.
    Gaussian,
    /// `rho = sin(4t - 20s)`: oscillating influence.
    Sine,
}

impl HistKernel {
    /// Evaluates the kernel at `(s, t)`.
    pub fn eval<T: Real>(&self, s: T, t: T) -> T {
        match self {
            HistKernel::Zero => T::zero(),
            HistKernel::Constant => T::one(),
            HistKernel::Gaussian => (-(T::of(2.0)) * (t - s) * (t - s)).exp(),
            HistKernel::Sine => (T::of(4.0) * t - T::of(20.0) * s).sin(),
        }
    }

    /// Parses a CLI-facing kernel name.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "zero" => Ok(HistKernel::Zero),
            "constant" => Ok(HistKernel::Constant),
            "gaussian" => Ok(HistKernel::Gaussian),
            "sine" => Ok(HistKernel::Sine),
            other => Err(Error::Usage(format!(
                "unknown kernel '{other}'; expected zero, constant, gaussian or sine"
            ))),
        }
    }

    /// Canonical name, inverse of [`HistKernel::parse`].
    pub fn name(&self) -> &'static str {
        match self {
            HistKernel::Zero => "zero",
            HistKernel::Constant => "constant",
            HistKernel::Gaussian => "gaussian",
            HistKernel::Sine => "sine",
        }
    }
}

/// Gaussian bump `phi(t) = exp(-2 t^2)` used by the `Par` additive design.
pub fn phi<T: Real>(t: T) -> T {
    (-(T::of(2.0)) * t * t).exp()
}

/// Configuration of the Cox-type generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxSimConfig {
    /// Subject count.
    pub n: usize,
    /// Covariate dimension; this design uses a single covariate process.
    pub d: usize,
    /// Grid size.
    pub q: usize,
    /// Kernel feeding the exposure path.
    pub kernel_x: HistKernel,
    /// Kernel feeding the latent path.
    pub kernel_y: HistKernel,
    /// Sign of the covariate effect in the hazard; must be -1 or +1.
    pub beta2: f64,
    /// Local-alternative strength; the hazard carries `(rho0/sqrt(n)) X_t`.
    pub rho0: f64,
    /// Weibull scale of the baseline hazard `beta1 * t^2`; must be positive
    /// and large enough that at least `(q-1)/q` of subjects have events
    /// (see [`calibrate_beta1`]).
    pub beta1: f64,
    /// Master seed for the dataset.
    pub seed: u64,
}

impl CoxSimConfig {
    /// Builds and validates a configuration.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        q: usize,
        kernel_x: HistKernel,
        kernel_y: HistKernel,
        beta2: f64,
        rho0: f64,
        beta1: f64,
        seed: u64,
    ) -> Result<Self> {
        let cfg = Self {
            n,
            d: 1,
            q,
            kernel_x,
            kernel_y,
            beta2,
            rho0,
            beta1,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks all field invariants.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("subject count must be positive".into()));
        }
        if self.d != 1 {
            return Err(Error::Config(
                "the Cox design carries a single covariate process (d = 1)".into(),
            ));
        }
        if self.q < 2 {
            return Err(Error::Config("grid needs at least 2 points".into()));
        }
        if self.beta2 != -1.0 && self.beta2 != 1.0 {
            return Err(Error::Config(format!(
                "beta2 must be -1 or +1, got {}",
                self.beta2
            )));
        }
        if !(self.rho0 >= 0.0) {
            return Err(Error::Config(format!(
                "rho0 must be nonnegative, got {}",
                self.rho0
            )));
        }
        if !(self.beta1 > 0.0) {
            return Err(Error::Config(format!(
                "beta1 must be positive, got {}",
                self.beta1
            )));
        }
        Ok(())
    }
}

/// Additive-hazard design family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcmSetting {
    /// Uniform covariates, linear `f(z) = beta' z` with Dirichlet weights on
    /// the first four coordinates.
    Lin,
    /// Gaussian covariates, `f(z) = phi(z_1)`.
    Par,
}

impl AcmSetting {
    /// Canonical engine name used in metadata and CLI flags.
    pub fn name(&self) -> &'static str {
        match self {
            AcmSetting::Lin => "acm-lin",
            AcmSetting::Par => "acm-par",
        }
    }
}

/// Configuration of the additive-hazard generators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcmSimConfig {
    /// Design family.
    pub setting: AcmSetting,
    /// Subject count.
    pub n: usize,
    /// Covariate dimension; `Lin` needs at least 4.
    pub d: usize,
    /// Grid size.
    pub q: usize,
    /// Master seed for the dataset.
    pub seed: u64,
}

impl AcmSimConfig {
    /// Builds and validates a configuration.
    pub fn new(setting: AcmSetting, n: usize, d: usize, q: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            setting,
            n,
            d,
            q,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks all field invariants.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("subject count must be positive".into()));
        }
        if self.q < 2 {
            return Err(Error::Config("grid needs at least 2 points".into()));
        }
        match self.setting {
            AcmSetting::Lin if self.d < 4 => Err(Error::Config(format!(
                "the linear additive design needs d >= 4 (weights live on four coordinates), got d = {}",
                self.d
            ))),
            _ if self.d == 0 => Err(Error::Config("covariate dimension must be positive".into())),
            _ => Ok(()),
        }
    }
}

/// Per-dataset metadata recorded next to the sample so oracles and
/// replication manifests can be evaluated later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// Engine name: `cox`, `acm-lin` or `acm-par`.
    pub engine: String,
    /// Master seed the dataset was drawn from.
    pub seed: u64,
    /// Calibrated Weibull scale (Cox engine only).
    pub beta1: Option<f64>,
    /// Per-dataset linear weights, length `d` with zeros past index 3
    /// (`Lin` engine only).
    pub beta: Option<Vec<f64>>,
}

/// A generated dataset: the sample plus its metadata.
#[derive(Debug, Clone)]
pub struct SimulatedDataset<T> {
    /// The subject paths.
    pub sample: SurvivalSample<T>,
    /// Engine metadata (calibration results, per-dataset parameters).
    pub meta: DatasetMeta,
}

/// Per-subject diagnostics the Cox engine can expose for validation: the
/// full-hazard cumulative path of every subject. The latent process itself
/// stays internal.
#[derive(Debug, Clone)]
pub struct CoxDiagnostics<T> {
    /// `cumhaz[j][i]` is subject `j`'s cumulative full hazard at grid index `i`.
    pub cumhaz: Vec<Vec<T>>,
}

/// Draws one covariate path `Z_t = xi_1 + xi_2 t + sin(2 pi xi_3 t) + W_t`,
/// where `xi ~ N(0, I_3)` and `W` is a Gaussian random walk started at 0
/// with increment variance `1/q` (so `Var(W_{t_i}) = i/q`).
pub fn sample_z_process<T: Real>(grid: &TimeGrid<T>, rng: &mut ChaCha8Rng) -> Vec<T> {
    let xi1: f64 = rng.sample(StandardNormal);
    let xi2: f64 = rng.sample(StandardNormal);
    let xi3: f64 = rng.sample(StandardNormal);
    let walk = random_walk(grid, rng);
    let two_pi_xi3 = T::of(2.0 * std::f64::consts::PI * xi3);
    grid.points()
        .iter()
        .zip(&walk)
        .map(|(&t, &w)| T::of(xi1) + T::of(xi2) * t + (two_pi_xi3 * t).sin() + w)
        .collect()
}

/// Gaussian random walk on the grid, started at 0, increment variance `1/q`.
pub fn random_walk<T: Real>(grid: &TimeGrid<T>, rng: &mut ChaCha8Rng) -> Vec<T> {
    let q = grid.q();
    let sd = T::of(1.0 / (q as f64)).sqrt();
    let mut walk = Vec::with_capacity(q);
    let mut acc = T::zero();
    walk.push(acc);
    for _ in 1..q {
        let inc: f64 = rng.sample(StandardNormal);
        acc += sd * T::of(inc);
        walk.push(acc);
    }
    walk
}

/// Historical functional linear term plus noise:
/// `out[i] = step * sum_{j < i} z[j] * rho(t_j, t_i) + noise[i]`.
pub fn historical_linear<T: Real>(
    z_path: &[T],
    kernel: HistKernel,
    noise_path: &[T],
    grid: &TimeGrid<T>,
) -> Vec<T> {
    assert_eq!(z_path.len(), grid.q(), "z path must match the grid");
    assert_eq!(noise_path.len(), grid.q(), "noise path must match the grid");
    let q = grid.q();
    let mut out = Vec::with_capacity(q);
    for i in 0..q {
        let ti = grid.point(i);
        let mut s = T::zero();
        for j in 0..i {
            s += z_path[j] * kernel.eval(grid.point(j), ti);
        }
        out.push(s * grid.step() + noise_path[i]);
    }
    out
}

/// Precomputed kernel matrix: `rho[i * q + j] = rho(t_j, t_i)` for `j < i`.
/// Lets the engines amortise transcendental evaluations across subjects
/// while reproducing [`historical_linear`] bit for bit (same summation
/// order, scale by the step after the sum).
struct KernelMatrix<T> {
    rho: Vec<T>,
    q: usize,
}

impl<T: Real> KernelMatrix<T> {
    fn new(kernel: HistKernel, grid: &TimeGrid<T>) -> Self {
        let q = grid.q();
        let mut rho = vec![T::zero(); q * q];
        for i in 0..q {
            let ti = grid.point(i);
            for j in 0..i {
                rho[i * q + j] = kernel.eval(grid.point(j), ti);
            }
        }
        Self { rho, q }
    }

    fn apply(&self, z_path: &[T], noise_path: &[T], grid: &TimeGrid<T>, out: &mut Vec<T>) {
        out.clear();
        for i in 0..self.q {
            let row = &self.rho[i * self.q..i * self.q + i];
            let mut s = T::zero();
            for (zj, rj) in z_path[..i].iter().zip(row) {
                s += *zj * *rj;
            }
            out.push(s * grid.step() + noise_path[i]);
        }
    }
}

/// Inverse-hazard event sampler: draws `E ~ Exp(1)` and returns the index
/// of the last grid point where `cumhaz < E`, together with the event
/// indicator (false if the cumulative hazard never reaches `E` on the grid).
///
/// Requires a non-decreasing path starting at 0; a decreasing step is a
/// domain error.
pub fn sample_survival_inverse_hazard<T: Real>(
    cumhaz_path: &[T],
    rng: &mut ChaCha8Rng,
) -> Result<(usize, bool)> {
    if cumhaz_path.is_empty() {
        return Err(Error::Dimension("cumulative hazard path is empty".into()));
    }
    if cumhaz_path[0] != T::zero() {
        return Err(Error::Domain(format!(
            "cumulative hazard must start at 0, got {}",
            cumhaz_path[0]
        )));
    }
    for i in 1..cumhaz_path.len() {
        if cumhaz_path[i] < cumhaz_path[i - 1] {
            return Err(Error::Domain(format!(
                "cumulative hazard decreases at index {i}"
            )));
        }
    }
    let e_draw: f64 = rng.sample(Exp1);
    let e = T::of(e_draw);
    // Number of strictly-below entries; the path is sorted so this is the
    // crossing point. Index 0 is always below (E > 0 almost surely).
    let below = cumhaz_path.partition_point(|&v| v < e);
    let last = cumhaz_path.len() - 1;
    if below == cumhaz_path.len() {
        Ok((last, false))
    } else {
        Ok((below.saturating_sub(1), true))
    }
}

/// Calibrates the Weibull scale `beta1` by doubling search on a pilot
/// sample: starting from 1, `beta1` doubles until the pilot event fraction
/// clears the `(q-1)/q` requirement with a tenfold safety margin on the
/// survivor mass, so that real datasets of the configured size essentially
/// never trip the event-fraction check. The pilot draws from a seed derived
/// from the config seed and is independent of dataset substreams.
pub fn calibrate_beta1<T: Real>(config: &CoxSimConfig) -> Result<f64> {
    config.validate()?;
    let pilot_n = 4000usize;
    let grid: TimeGrid<T> = TimeGrid::new(config.q)?;
    let kx = KernelMatrix::new(config.kernel_x, &grid);
    let ky = KernelMatrix::new(config.kernel_y, &grid);
    let pilot_seed = derive_seed(config.seed, 0xCA11);
    // Per-subject terminal cumulative hazard at beta1 = 1, and the Exp(1)
    // draw; events(beta1) = #{ beta1 * a_j >= e_j } is monotone in beta1.
    let mut terminal = Vec::with_capacity(pilot_n);
    let mut exp_draws = Vec::with_capacity(pilot_n);
    let mut x_buf = Vec::new();
    let mut y_buf = Vec::new();
    for j in 0..pilot_n {
        let mut rng = substream(pilot_seed, subject_stream(0, j as u64));
        let (log_rel, _z) = cox_log_relative_hazard(config, &grid, &kx, &ky, &mut rng, &mut x_buf, &mut y_buf);
        let mut lambda_terminal = T::zero();
        for i in 0..(config.q - 1) {
            let t = grid.point(i);
            lambda_terminal += t * t * log_rel[i].exp() * grid.step();
        }
        terminal.push(lambda_terminal.to_f64_lossy());
        let e: f64 = rng.sample(Exp1);
        exp_draws.push(e);
    }
    // Allowed survivor mass with the safety margin.
    let allowed = pilot_n as f64 / (config.q as f64 * 10.0);
    let mut beta1 = 1.0f64;
    for _ in 0..64 {
        let survivors = terminal
            .iter()
            .zip(&exp_draws)
            .filter(|&(&a, &e)| beta1 * a < e)
            .count();
        if (survivors as f64) <= allowed {
            return Ok(beta1);
        }
        beta1 *= 2.0;
    }
    Err(Error::Calibration(
        "doubling search exhausted 64 steps without reaching the target event fraction".into(),
    ))
}

/// Draws the per-subject log relative hazard `beta2 Z_t + latent_t +
/// (rho0/sqrt(n)) X_t` along with the covariate path; fills `x_buf` with
/// the exposure path. Draw order per subject: xi (3), Z-walk (q-1),
/// exposure-noise walk (q-1), latent-noise walk (q-1).
fn cox_log_relative_hazard<T: Real>(
    config: &CoxSimConfig,
    grid: &TimeGrid<T>,
    kx: &KernelMatrix<T>,
    ky: &KernelMatrix<T>,
    rng: &mut ChaCha8Rng,
    x_buf: &mut Vec<T>,
    y_buf: &mut Vec<T>,
) -> (Vec<T>, Vec<T>) {
    let z = sample_z_process(grid, rng);
    let v = random_walk(grid, rng);
    let w = random_walk(grid, rng);
    kx.apply(&z, &v, grid, x_buf);
    ky.apply(&z, &w, grid, y_buf);
    let beta2 = T::of(config.beta2);
    let local = T::of(config.rho0 / (config.n as f64).sqrt());
    let log_rel: Vec<T> = (0..grid.q())
        .map(|i| beta2 * z[i] + y_buf[i] + local * x_buf[i])
        .collect();
    (log_rel, z)
}

/// Generates a Cox-design dataset. Equivalent to
/// [`simulate_cox_dataset_with_diagnostics`] without the diagnostics.
pub fn simulate_cox_dataset<T: Real>(config: &CoxSimConfig) -> Result<SimulatedDataset<T>> {
    simulate_cox_dataset_with_diagnostics(config).map(|(d, _)| d)
}

/// Generates a Cox-design dataset and per-subject cumulative-hazard
/// diagnostics (used by distributional validation; the latent process is
/// consumed internally and never stored).
pub fn simulate_cox_dataset_with_diagnostics<T: Real>(
    config: &CoxSimConfig,
) -> Result<(SimulatedDataset<T>, CoxDiagnostics<T>)> {
    let streams: Vec<u64> = (0..config.n).map(|j| subject_stream(0, j as u64)).collect();
    simulate_cox_dataset_with_streams(config, &streams)
}

/// Generates a Cox-design dataset with an explicit per-subject stream
/// assignment (replication hook: permuting the assignment permutes the
/// output subjects).
pub fn simulate_cox_dataset_with_streams<T: Real>(
    config: &CoxSimConfig,
    streams: &[u64],
) -> Result<(SimulatedDataset<T>, CoxDiagnostics<T>)> {
    config.validate()?;
    if streams.len() != config.n {
        return Err(Error::Dimension(format!(
            "stream assignment covers {} subjects, config says {}",
            streams.len(),
            config.n
        )));
    }
    let grid: TimeGrid<T> = TimeGrid::new(config.q)?;
    let kx = KernelMatrix::new(config.kernel_x, &grid);
    let ky = KernelMatrix::new(config.kernel_y, &grid);
    let beta1 = T::of(config.beta1);
    let mut subjects = Vec::with_capacity(config.n);
    let mut cumhaz_diag = Vec::with_capacity(config.n);
    let mut x_buf = Vec::new();
    let mut y_buf = Vec::new();
    for &stream in streams {
        let mut rng = substream(config.seed, stream);
        let (log_rel, z) =
            cox_log_relative_hazard(config, &grid, &kx, &ky, &mut rng, &mut x_buf, &mut y_buf);
        // Left-endpoint Riemann cumulative hazard of beta1 t^2 exp(log_rel).
        let mut cumhaz = Vec::with_capacity(config.q);
        let mut acc = T::zero();
        cumhaz.push(acc);
        for i in 0..(config.q - 1) {
            let t = grid.point(i);
            acc += beta1 * t * t * log_rel[i].exp() * grid.step();
            cumhaz.push(acc);
        }
        let (event_index, delta) = sample_survival_inverse_hazard(&cumhaz, &mut rng)?;
        subjects.push(SubjectPath::new(
            z,
            x_buf.clone(),
            1,
            event_index,
            delta,
        )?);
        cumhaz_diag.push(cumhaz);
    }
    let sample = SurvivalSample::new(grid, subjects, 1)?;
    let events = sample.event_count();
    let required = (config.q as f64 - 1.0) / config.q as f64 * config.n as f64;
    if (events as f64) < required - 1e-9 {
        return Err(Error::Calibration(format!(
            "only {events} of {} subjects had events before t = 1, need at least {required:.2}; \
             increase beta1 (e.g. via the doubling calibration)",
            config.n
        )));
    }
    Ok((
        SimulatedDataset {
            sample,
            meta: DatasetMeta {
                engine: "cox".into(),
                seed: config.seed,
                beta1: Some(config.beta1),
                beta: None,
            },
        },
        CoxDiagnostics {
            cumhaz: cumhaz_diag,
        },
    ))
}

/// Per-dataset weights of the `Lin` additive design: Dirichlet(1,1,1,1) on
/// the first four coordinates (normalised iid Exp(1) draws), zero beyond.
fn draw_lin_weights(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut raw = [0.0f64; 4];
    let mut total = 0.0;
    for r in raw.iter_mut() {
        let e: f64 = rng.sample(Exp1);
        *r = e;
        total += e;
    }
    let mut beta = vec![0.0; d];
    for (i, r) in raw.iter().enumerate() {
        beta[i] = r / total;
    }
    beta
}

/// Reproduces the per-dataset design weights an additive configuration
/// draws: the `Lin` weights for the linear response, or an empty vector
/// for the bump design (which has no weights). Deterministic in the seed,
/// byte-identical to the weights [`simulate_acm_dataset`] records.
pub fn acm_design_weights(config: &AcmSimConfig) -> Vec<f64> {
    match config.setting {
        AcmSetting::Lin => {
            let mut dataset_rng = substream(config.seed, DATASET_STREAM);
            draw_lin_weights(config.d, &mut dataset_rng)
        }
        AcmSetting::Par => Vec::new(),
    }
}

/// Generates an additive-hazard dataset (`Lin` or `Par` design).
pub fn simulate_acm_dataset<T: Real>(config: &AcmSimConfig) -> Result<SimulatedDataset<T>> {
    let streams: Vec<u64> = (0..config.n).map(|j| subject_stream(0, j as u64)).collect();
    simulate_acm_dataset_with_streams(config, &streams)
}

/// Generates an additive-hazard dataset with an explicit per-subject stream
/// assignment (replication hook, see the Cox counterpart).
pub fn simulate_acm_dataset_with_streams<T: Real>(
    config: &AcmSimConfig,
    streams: &[u64],
) -> Result<SimulatedDataset<T>> {
    config.validate()?;
    if streams.len() != config.n {
        return Err(Error::Dimension(format!(
            "stream assignment covers {} subjects, config says {}",
            streams.len(),
            config.n
        )));
    }
    let grid: TimeGrid<T> = TimeGrid::new(config.q)?;
    let beta = match config.setting {
        AcmSetting::Lin => Some(acm_design_weights(config)),
        AcmSetting::Par => None,
    };
    let mut subjects = Vec::with_capacity(config.n);
    for &stream in streams {
        let mut rng = substream(config.seed, stream);
        let mut z = vec![T::zero(); config.d];
        for zj in z.iter_mut() {
            let draw: f64 = match config.setting {
                AcmSetting::Lin => rng.random::<f64>(),
                AcmSetting::Par => rng.sample(StandardNormal),
            };
            *zj = T::of(draw);
        }
        let u: f64 = rng.random();
        let (x, f_z) = match config.setting {
            AcmSetting::Lin => {
                let b = beta.as_ref().expect("lin design has weights");
                let f: T = z
                    .iter()
                    .zip(b)
                    .map(|(&zj, &bj)| zj * T::of(bj))
                    .sum();
                (z[0] + T::of(u), f)
            }
            AcmSetting::Par => (phi(z[0]) + T::of(u), phi(z[0])),
        };
        // Closed-form cumulative hazard t^2 (1 + X + f(Z)).
        let scale = T::one() + x + f_z;
        let cumhaz: Vec<T> = grid.points().iter().map(|&t| t * t * scale).collect();
        let (event_index, delta) = sample_survival_inverse_hazard(&cumhaz, &mut rng)?;
        // Covariates are constant in time: tile the row across the grid.
        let mut z_path = Vec::with_capacity(config.q * config.d);
        for _ in 0..config.q {
            z_path.extend_from_slice(&z);
        }
        subjects.push(SubjectPath::new(
            z_path,
            vec![x; config.q],
            config.d,
            event_index,
            delta,
        )?);
    }
    let sample = SurvivalSample::new(grid, subjects, config.d)?;
    Ok(SimulatedDataset {
        sample,
        meta: DatasetMeta {
            engine: config.setting.name().into(),
            seed: config.seed,
            beta1: None,
            beta,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kernel_values_match_their_definitions() {
        assert_eq!(HistKernel::Zero.eval(0.3f64, 0.9), 0.0);
        assert_eq!(HistKernel::Constant.eval(0.3f64, 0.9), 1.0);
        assert_abs_diff_eq!(
            HistKernel::Gaussian.eval(0.25f64, 0.75),
            (-0.5f64).exp(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            HistKernel::Sine.eval(0.1f64, 0.5),
            (0.0f64).sin(),
            epsilon = 1e-15
        );
        for name in ["zero", "constant", "gaussian", "sine"] {
            assert_eq!(HistKernel::parse(name).unwrap().name(), name);
        }
        assert!(HistKernel::parse("cubic").is_err());
    }

    #[test]
    fn historical_linear_reduces_to_noise_under_zero_kernel() {
        let grid: TimeGrid<f64> = TimeGrid::new(9).unwrap();
        let z = vec![3.0; 9];
        let noise: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let out = historical_linear(&z, HistKernel::Zero, &noise, &grid);
        assert_eq!(out, noise);
    }

    #[test]
    fn historical_linear_constant_kernel_is_a_running_integral() {
        let grid: TimeGrid<f64> = TimeGrid::new(101).unwrap();
        let z = vec![1.0; 101];
        let noise = vec![0.0; 101];
        let out = historical_linear(&z, HistKernel::Constant, &noise, &grid);
        for i in 0..101 {
            // Left-Riemann sum of 1 over [0, t_i] is exactly t_i.
            assert_abs_diff_eq!(out[i], grid.point(i), epsilon = 1e-12);
        }
    }

    #[test]
    fn kernel_matrix_reproduces_the_public_operation() {
        let grid: TimeGrid<f64> = TimeGrid::new(33).unwrap();
        let mut rng = substream(41, 0);
        let z = sample_z_process(&grid, &mut rng);
        let noise = random_walk(&grid, &mut rng);
        let naive = historical_linear(&z, HistKernel::Sine, &noise, &grid);
        let km = KernelMatrix::new(HistKernel::Sine, &grid);
        let mut fast = Vec::new();
        km.apply(&z, &noise, &grid, &mut fast);
        assert_eq!(naive, fast);
    }

    #[test]
    fn inverse_hazard_sampler_respects_the_crossing_definition() {
        let cumhaz: Vec<f64> = (0..50).map(|i| i as f64 * 0.05).collect();
        for s in 0..200u64 {
            let mut rng = substream(9, s);
            let (idx, delta) = sample_survival_inverse_hazard(&cumhaz, &mut rng).unwrap();
            // Reproduce the draw to check the crossing inequalities.
            let mut rng2 = substream(9, s);
            let e: f64 = rng2.sample(Exp1);
            assert!(cumhaz[idx] < e);
            if delta {
                assert!(cumhaz[idx + 1] >= e);
            } else {
                assert_eq!(idx, cumhaz.len() - 1);
            }
        }
    }

    #[test]
    fn inverse_hazard_sampler_never_fires_on_flat_zero_hazard() {
        let cumhaz = vec![0.0f64; 16];
        for s in 0..20u64 {
            let mut rng = substream(3, s);
            let (idx, delta) = sample_survival_inverse_hazard(&cumhaz, &mut rng).unwrap();
            assert_eq!((idx, delta), (15, false));
        }
    }

    #[test]
    fn inverse_hazard_sampler_rejects_bad_paths() {
        let mut rng = substream(1, 0);
        assert!(sample_survival_inverse_hazard(&[0.0f64, 0.5, 0.4], &mut rng).is_err());
        assert!(sample_survival_inverse_hazard(&[0.1f64, 0.5], &mut rng).is_err());
        assert!(sample_survival_inverse_hazard(&[] as &[f64], &mut rng).is_err());
    }

    #[test]
    fn cox_configs_reject_invalid_fields() {
        let ok = CoxSimConfig::new(10, 8, HistKernel::Gaussian, HistKernel::Gaussian, 1.0, 0.0, 100.0, 1);
        assert!(ok.is_ok());
        assert!(
            CoxSimConfig::new(10, 8, HistKernel::Zero, HistKernel::Zero, 0.5, 0.0, 1.0, 1).is_err()
        );
        assert!(
            CoxSimConfig::new(10, 8, HistKernel::Zero, HistKernel::Zero, 1.0, -0.1, 1.0, 1).is_err()
        );
        assert!(
            CoxSimConfig::new(0, 8, HistKernel::Zero, HistKernel::Zero, 1.0, 0.0, 1.0, 1).is_err()
        );
    }

    #[test]
    fn acm_configs_enforce_dimension_rules() {
        assert!(AcmSimConfig::new(AcmSetting::Lin, 5, 3, 8, 1).is_err());
        assert!(AcmSimConfig::new(AcmSetting::Lin, 5, 4, 8, 1).is_ok());
        assert!(AcmSimConfig::new(AcmSetting::Par, 5, 1, 8, 1).is_ok());
        assert!(AcmSimConfig::new(AcmSetting::Par, 5, 0, 8, 1).is_err());
    }

    #[test]
    fn lin_weights_live_on_the_simplex() {
        let mut rng = substream(77, DATASET_STREAM);
        let beta = draw_lin_weights(7, &mut rng);
        assert_eq!(beta.len(), 7);
        assert!(beta.iter().all(|&b| b >= 0.0));
        assert_abs_diff_eq!(beta.iter().take(4).sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(beta[4..].iter().all(|&b| b == 0.0));
    }
}
