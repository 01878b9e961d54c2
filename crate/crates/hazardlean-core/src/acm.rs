//! Normalised local covariance estimation: residuals are divided by the
//! at-risk second-moment path, which turns the estimand into the
//! cumulative exposure coefficient under a partially additive hazard.
//!
//! The module provides the clipped second-moment estimate, single-split
//! and cross-fitted estimators, a variance estimator (flagged as
//! surmised: its consistency proof is an open question), a classical
//! additive least-squares baseline, and a Monte-Carlo oracle for the
//! estimand on the built-in designs.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FoldPlan, SurvivalSample, TimeGrid};
use crate::integrate::stieltjes_integrate;
use crate::lcm::FoldPiece;
use crate::linalg::solve_spd_in_place;
use crate::nuisance::{NuisanceFit, PiModel};
use crate::rng::{derive_seed, subject_stream, substream};
use crate::scalar::Real;
use crate::simulate::{
    acm_design_weights, historical_linear, phi, random_walk, sample_z_process, AcmSetting,
    AcmSimConfig, CoxSimConfig,
};

/// Default clipping constant for the second-moment path.
pub const DEFAULT_CLIP: f64 = 0.005;

/// Marker attached to every variance path this module produces: the
/// estimator's consistency proof is an open problem, so downstream
/// consumers can tell these intervals apart from proven ones.
pub const VARIANCE_NOTE: &str = "surmised";

/// How to choose the clipping constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClipRule {
    /// A fixed constant (reporting default 0.005).
    Fixed(f64),
    /// `n2^(-1/3)` with `n2` the evaluation-fold size: shrinks to zero,
    /// but slower than `n2^(-1/2)`.
    Theory,
}

impl ClipRule {
    /// The clip constant for an evaluation fold of the given size.
    pub fn constant(&self, n2: usize) -> f64 {
        match self {
            ClipRule::Fixed(c) => *c,
            ClipRule::Theory => (n2.max(1) as f64).powf(-1.0 / 3.0),
        }
    }
}

impl Default for ClipRule {
    fn default() -> Self {
        ClipRule::Fixed(DEFAULT_CLIP)
    }
}

/// The at-risk second-moment path of the residual, raw and clipped.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoEstimate<T> {
    /// Raw path: mean over subjects of `Y_t (X_t - pi_hat_t)^2`.
    pub rho_tilde: Vec<T>,
    /// Clipped path: `max(rho_tilde, clip_constant)`.
    pub rho_hat: Vec<T>,
    /// The clip constant in force.
    pub clip_constant: T,
    /// True exactly where the raw path is at least the clip constant
    /// (i.e. where clipping does not bind).
    pub valid_mask: Vec<bool>,
}

impl<T: Real> RhoEstimate<T> {
    /// First grid index where the mask binds; later report values are
    /// undefined from here on.
    pub fn first_invalid(&self) -> Option<usize> {
        self.valid_mask.iter().position(|&v| !v)
    }
}

/// Computes the clipped second-moment path of the residual over an
/// evaluation set, with the projection evaluated per subject.
pub fn empirical_rho<T: Real>(
    sample: &SurvivalSample<T>,
    eval_idx: &[usize],
    pi: &dyn PiModel<T>,
    clip: ClipRule,
) -> Result<RhoEstimate<T>> {
    if eval_idx.is_empty() {
        return Err(Error::Config("evaluation set must be nonempty".into()));
    }
    let q = sample.grid().q();
    let n = sample.subjects().len();
    let mut rho_tilde = vec![T::zero(); q];
    for &j in eval_idx {
        if j >= n {
            return Err(Error::Config(format!(
                "evaluation index {j} out of range for {n} subjects"
            )));
        }
        let subject = &sample.subjects()[j];
        let pi_path = pi.pi_path(subject);
        if pi_path.len() != q {
            return Err(Error::Dimension(format!(
                "projection path must have grid length {q}, got {}",
                pi_path.len()
            )));
        }
        for i in 0..q {
            if subject.at_risk(i) {
                let dev = subject.x()[i] - pi_path[i];
                rho_tilde[i] += dev * dev;
            }
        }
    }
    let m_t = T::from_usize(eval_idx.len()).expect("subject count fits scalar");
    for v in rho_tilde.iter_mut() {
        *v /= m_t;
    }
    let c = T::of(clip.constant(eval_idx.len()));
    let rho_hat: Vec<T> = rho_tilde.iter().map(|&v| v.max(c)).collect();
    let valid_mask: Vec<bool> = rho_tilde.iter().map(|&v| v >= c).collect();
    Ok(RhoEstimate {
        rho_tilde,
        rho_hat,
        clip_constant: c,
        valid_mask,
    })
}

/// One evaluated split of the normalised estimator.
#[derive(Debug, Clone)]
pub struct AcmFoldPiece<T> {
    /// Estimated path using the clipped second moment everywhere.
    pub gamma_hat: Vec<T>,
    /// Surmised variance path for this fold.
    pub var_hat: Vec<T>,
    /// The fold's second-moment estimate (carries the validity mask).
    pub rho: RhoEstimate<T>,
    /// Subjects the empirical means run over.
    pub eval_idx: Vec<usize>,
    /// Description of the nuisances used.
    pub nuisance_meta: String,
}

/// Cross-fitted normalised estimate with per-fold masks.
#[derive(Debug, Clone)]
pub struct AcmFit<T> {
    /// Aggregated path: the exact arithmetic mean of the fold paths
    /// (computed with clipped second moments everywhere).
    pub gamma_check: Vec<T>,
    /// Aggregated surmised variance path.
    pub var_hat: Vec<T>,
    /// Reporting mask: true while every fold's second moment clears the
    /// clip constant; once any fold fails, all later times are false.
    pub report_mask: Vec<bool>,
    /// Per-fold second-moment estimates, in fold order.
    pub rho_by_fold: Vec<RhoEstimate<T>>,
    /// Per-fold estimates, in fold order.
    pub fold_pieces: Vec<AcmFoldPiece<T>>,
    /// Total number of subjects entering the empirical means.
    pub n_eff: usize,
    /// Number of folds (1 means the no-splitting mode).
    pub k: usize,
    /// True when the fit trained and evaluated on the same subjects.
    pub no_split: bool,
    /// Always [`VARIANCE_NOTE`]: the variance estimator lacks a proof.
    pub variance_note: &'static str,
}

impl<T: Real> AcmFit<T> {
    /// The estimated path with undefined (masked) entries as NaN.
    pub fn reported_gamma(&self) -> Vec<T> {
        self.gamma_check
            .iter()
            .zip(&self.report_mask)
            .map(|(&g, &ok)| if ok { g } else { T::nan() })
            .collect()
    }

    /// The estimate at a grid index, or `None` when masked.
    pub fn value_at(&self, index: usize) -> Option<T> {
        if *self.report_mask.get(index)? {
            Some(self.gamma_check[index])
        } else {
            None
        }
    }
}

/// The default reporting index: the grid point closest to 67/127 of the
/// horizon (the latest time at which all estimators stayed well defined
/// in the reference experiments).
pub fn default_report_index(q: usize) -> usize {
    ((q - 1) * 67 * 2 + 127) / (127 * 2)
}

/// Surmised variance estimator: the empirical second moment of
/// `int_0^t G dM - int_0^t E G dgamma` over the evaluation subjects,
/// where `E` is the unnormalised at-risk residual and `dgamma` the
/// increments of the estimated path. No consistency proof exists; paths
/// from this function are labelled [`VARIANCE_NOTE`].
pub fn acm_variance<T: Real>(
    sample: &SurvivalSample<T>,
    eval_idx: &[usize],
    g_paths: &[Vec<T>],
    e_paths: &[Vec<T>],
    hazard_paths: &[Vec<T>],
    gamma_hat: &[T],
) -> Result<Vec<T>> {
    let q = sample.grid().q();
    let m = eval_idx.len();
    if g_paths.len() != m || e_paths.len() != m || hazard_paths.len() != m {
        return Err(Error::Dimension(format!(
            "per-subject paths must match the evaluation set: got {}, {}, {} for {m} subjects",
            g_paths.len(),
            e_paths.len(),
            hazard_paths.len()
        )));
    }
    if gamma_hat.len() != q {
        return Err(Error::Dimension(format!(
            "estimate path must have grid length {q}, got {}",
            gamma_hat.len()
        )));
    }
    let mut var_sum = vec![T::zero(); q];
    for (pos, &j) in eval_idx.iter().enumerate() {
        let subject = &sample.subjects()[j];
        let g = &g_paths[pos];
        let e = &e_paths[pos];
        let martingale_part = stieltjes_integrate(g, subject, &hazard_paths[pos], sample.grid())?;
        // Same increment convention as every other integral: interval l
        // carries the step gamma_hat[l] - gamma_hat[l-1].
        let mut drift_part = T::zero();
        for i in 0..q {
            if i > 0 {
                drift_part += e[i] * g[i] * (gamma_hat[i] - gamma_hat[i - 1]);
            }
            let dev = martingale_part[i] - drift_part;
            var_sum[i] += dev * dev;
        }
    }
    let m_t = T::from_usize(m.max(1)).expect("subject count fits scalar");
    Ok(var_sum.into_iter().map(|v| v / m_t).collect())
}

/// Single-split normalised estimator: residuals `Y (X - pi_hat) / rho_hat`
/// integrated against the estimated martingale, averaged over the
/// evaluation set, with the surmised variance path.
///
/// The second-moment estimate must come from the same evaluation fold.
/// Train/eval overlap rules match the unnormalised estimator.
pub fn acm_single_split<T: Real>(
    sample: &SurvivalSample<T>,
    train_idx: &[usize],
    eval_idx: &[usize],
    nuisance: &NuisanceFit<T>,
    rho: &RhoEstimate<T>,
    allow_overlap: bool,
) -> Result<AcmFoldPiece<T>> {
    if eval_idx.is_empty() {
        return Err(Error::Config("evaluation set must be nonempty".into()));
    }
    if !allow_overlap {
        let overlap_declared = eval_idx.iter().filter(|j| train_idx.contains(j)).count();
        let overlap_trained = eval_idx
            .iter()
            .filter(|j| nuisance.trained_on().contains(j))
            .count();
        let overlap = overlap_declared.max(overlap_trained);
        if overlap > 0 {
            return Err(Error::Usage(format!(
                "training and evaluation sets share {overlap} subject(s); \
                 pass the explicit no-splitting mode to evaluate in-sample"
            )));
        }
    }
    let q = sample.grid().q();
    if rho.rho_hat.len() != q {
        return Err(Error::Dimension(format!(
            "second-moment path must have grid length {q}, got {}",
            rho.rho_hat.len()
        )));
    }
    let n = sample.subjects().len();
    let mut g_paths = Vec::with_capacity(eval_idx.len());
    let mut e_paths = Vec::with_capacity(eval_idx.len());
    let mut hazard_paths = Vec::with_capacity(eval_idx.len());
    for &j in eval_idx {
        if j >= n {
            return Err(Error::Config(format!(
                "evaluation index {j} out of range for {n} subjects"
            )));
        }
        let subject = &sample.subjects()[j];
        let pi_path = nuisance.pi_path(subject);
        let h = nuisance.hazard_path(subject);
        if pi_path.len() != q || h.len() != q {
            return Err(Error::Dimension(format!(
                "nuisance paths must have grid length {q}, got {} and {}",
                pi_path.len(),
                h.len()
            )));
        }
        let mut g = Vec::with_capacity(q);
        let mut e = Vec::with_capacity(q);
        for i in 0..q {
            if subject.at_risk(i) {
                let dev = subject.x()[i] - pi_path[i];
                e.push(dev);
                g.push(dev / rho.rho_hat[i]);
            } else {
                e.push(T::zero());
                g.push(T::zero());
            }
        }
        g_paths.push(g);
        e_paths.push(e);
        hazard_paths.push(h);
    }
    let m_t = T::from_usize(eval_idx.len()).expect("subject count fits scalar");
    let mut gamma_sum = vec![T::zero(); q];
    for (pos, &j) in eval_idx.iter().enumerate() {
        let subject = &sample.subjects()[j];
        let integral = stieltjes_integrate(&g_paths[pos], subject, &hazard_paths[pos], sample.grid())?;
        for i in 0..q {
            gamma_sum[i] += integral[i];
        }
    }
    let gamma_hat: Vec<T> = gamma_sum.into_iter().map(|v| v / m_t).collect();
    let var_hat = acm_variance(sample, eval_idx, &g_paths, &e_paths, &hazard_paths, &gamma_hat)?;
    Ok(AcmFoldPiece {
        gamma_hat,
        var_hat,
        rho: rho.clone(),
        eval_idx: eval_idx.to_vec(),
        nuisance_meta: nuisance.metadata().to_string(),
    })
}

/// Cross-fitted normalised estimator: balanced folds, nuisances trained
/// on each complement, the second moment estimated on each held-out fold,
/// fold estimates averaged exactly. `k = 1` is the no-splitting mode.
pub fn acm_crossfit<T, F>(
    sample: &SurvivalSample<T>,
    k: usize,
    factory: F,
    clip: ClipRule,
) -> Result<AcmFit<T>>
where
    T: Real,
    F: Fn(&SurvivalSample<T>, &[usize]) -> Result<NuisanceFit<T>> + Sync,
{
    let n = sample.subjects().len();
    if k == 0 {
        return Err(Error::Config("fold count must be at least 1".into()));
    }
    if n < k {
        return Err(Error::Config(format!(
            "cannot split {n} subjects into {k} folds"
        )));
    }
    let plan = FoldPlan::balanced(n, k)?;
    let fold_sets: Vec<(Vec<usize>, Vec<usize>)> = (0..k)
        .map(|fold| {
            let eval = plan.fold_indices(fold);
            let train = plan.train_indices(fold);
            if eval.is_empty() || train.is_empty() {
                return Err(Error::Plan(format!(
                    "fold {fold} has an empty training or evaluation set"
                )));
            }
            Ok((train, eval))
        })
        .collect::<Result<_>>()?;

    let fold_pieces: Vec<AcmFoldPiece<T>> = fold_sets
        .par_iter()
        .map(|(train, eval)| {
            let nuisance = factory(sample, train)?;
            let rho = empirical_rho(sample, eval, nuisance.pi_model().as_ref(), clip)?;
            acm_single_split(sample, train, eval, &nuisance, &rho, k == 1)
        })
        .collect::<Result<_>>()?;

    let q = sample.grid().q();
    let k_t = T::from_usize(k).expect("fold count fits scalar");
    let mut gamma_check = vec![T::zero(); q];
    let mut var_hat = vec![T::zero(); q];
    for piece in &fold_pieces {
        for i in 0..q {
            gamma_check[i] += piece.gamma_hat[i];
            var_hat[i] += piece.var_hat[i];
        }
    }
    for i in 0..q {
        gamma_check[i] /= k_t;
        var_hat[i] /= k_t;
    }
    // The report is valid up to the first time any fold's mask binds.
    let cut = fold_pieces
        .iter()
        .filter_map(|p| p.rho.first_invalid())
        .min()
        .unwrap_or(q);
    let report_mask: Vec<bool> = (0..q).map(|i| i < cut).collect();
    let rho_by_fold = fold_pieces.iter().map(|p| p.rho.clone()).collect();
    let n_eff = fold_pieces.iter().map(|p| p.eval_idx.len()).sum();
    Ok(AcmFit {
        gamma_check,
        var_hat,
        report_mask,
        rho_by_fold,
        fold_pieces,
        n_eff,
        k,
        no_split: k == 1,
        variance_note: VARIANCE_NOTE,
    })
}

/// Converts an [`AcmFoldPiece`] into the unnormalised fold-piece shape,
/// for consumers that aggregate both estimator families uniformly.
impl<T: Real> AcmFoldPiece<T> {
    /// The piece with its surmised variance path in the common shape.
    pub fn as_fold_piece(&self) -> FoldPiece<T> {
        FoldPiece {
            gamma_hat: self.gamma_hat.clone(),
            var_hat: self.var_hat.clone(),
            eval_idx: self.eval_idx.clone(),
            nuisance_meta: self.nuisance_meta.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Classical additive least-squares baseline.
// ---------------------------------------------------------------------------

/// Cumulative coefficient paths of the additive least-squares fit.
#[derive(Debug, Clone)]
pub struct AalenFit<T> {
    /// One cumulative path per design column, each of grid length.
    pub cumulative: Vec<Vec<T>>,
    /// True while every increment so far was well defined; false from the
    /// first masked increment onward.
    pub valid: Vec<bool>,
    /// Design column names, aligned with `cumulative`.
    pub columns: Vec<String>,
}

impl<T: Real> AalenFit<T> {
    /// The cumulative value of one column at a grid index, or `None` when
    /// an earlier increment was masked.
    pub fn value_at(&self, column: usize, index: usize) -> Option<T> {
        if *self.valid.get(index)? {
            Some(self.cumulative[column][index])
        } else {
            None
        }
    }
}

fn aalen_fit_impl<T: Real>(
    sample: &SurvivalSample<T>,
    eval_idx: &[usize],
    design_row: &dyn Fn(&crate::grid::SubjectPath<T>, usize, &mut Vec<T>),
    p: usize,
    columns: Vec<String>,
) -> Result<AalenFit<T>> {
    if eval_idx.is_empty() {
        return Err(Error::Config("evaluation set must be nonempty".into()));
    }
    let q = sample.grid().q();
    let n = sample.subjects().len();
    for &j in eval_idx {
        if j >= n {
            return Err(Error::Config(format!(
                "evaluation index {j} out of range for {n} subjects"
            )));
        }
    }
    let mut cumulative = vec![vec![T::zero(); q]; p];
    let mut valid = vec![true; q];
    let mut row = vec![T::zero(); p];
    let mut acc = vec![T::zero(); p];
    let mut masked = false;
    for l in 0..q {
        let mut gram = vec![T::zero(); p * p];
        let mut rhs = vec![T::zero(); p];
        let mut at_risk_count = 0usize;
        let mut events = 0usize;
        for &j in eval_idx {
            let subject = &sample.subjects()[j];
            if !subject.at_risk(l) {
                continue;
            }
            at_risk_count += 1;
            design_row(subject, l, &mut row);
            for a in 0..p {
                for b in a..p {
                    gram[a * p + b] += row[a] * row[b];
                }
            }
            if subject.n_increment(l) {
                events += 1;
                for a in 0..p {
                    rhs[a] += row[a];
                }
            }
        }
        if events > 0 {
            // An increment must actually be solved for; insufficient or
            // collinear at-risk rows make it undefined.
            if at_risk_count < p {
                masked = true;
            } else {
                for a in 0..p {
                    for b in 0..a {
                        gram[a * p + b] = gram[b * p + a];
                    }
                }
                match solve_spd_in_place(&mut gram, p, &mut rhs) {
                    Ok(()) => {
                        for a in 0..p {
                            acc[a] += rhs[a];
                        }
                    }
                    Err(_) => {
                        masked = true;
                    }
                }
            }
        }
        if masked {
            valid[l] = false;
        }
        for a in 0..p {
            cumulative[a][l] = acc[a];
        }
    }
    Ok(AalenFit {
        cumulative,
        valid,
        columns,
    })
}

/// Additive least-squares fit with design `(1, X, Z_1, ..., Z_d)`:
/// coefficient increments solve the at-risk normal equations against the
/// event increments; the cumulative paths estimate the integrated
/// intercept, exposure, and covariate effects.
///
/// Times whose increment needs solving but has a rank-deficient or
/// undersized at-risk design are masked (and all later times with them),
/// not treated as hard errors.
pub fn aalen_additive_fit<T: Real>(
    sample: &SurvivalSample<T>,
    eval_idx: &[usize],
) -> Result<AalenFit<T>> {
    let d = sample.d();
    let p = 2 + d;
    let mut columns = vec!["intercept".to_string(), "x".to_string()];
    for r in 0..d {
        columns.push(format!("z_{}", r + 1));
    }
    aalen_fit_impl(
        sample,
        eval_idx,
        &|subject, l, row| {
            row[0] = T::one();
            row[1] = subject.x()[l];
            for r in 0..subject.d() {
                row[2 + r] = subject.z_at(l, r);
            }
        },
        p,
        columns,
    )
}

/// Intercept-only additive fit: the cumulative intercept is the classical
/// occurrence/at-risk cumulative hazard estimator.
pub fn aalen_intercept_only<T: Real>(
    sample: &SurvivalSample<T>,
    eval_idx: &[usize],
) -> Result<AalenFit<T>> {
    aalen_fit_impl(
        sample,
        eval_idx,
        &|_subject, _l, row| {
            row[0] = T::one();
        },
        1,
        vec!["intercept".to_string()],
    )
}

// ---------------------------------------------------------------------------
// Monte-Carlo oracle.
// ---------------------------------------------------------------------------

/// Which generative design the oracle evaluates.
pub enum OracleDesign<'a> {
    /// An additive design; the estimand is the cumulative exposure
    /// coefficient.
    Additive(&'a AcmSimConfig),
    /// The Cox-type design with an explicit signed exposure coefficient
    /// `beta_x` in the log hazard (replacing the local-alternative scaling
    /// of the generator).
    CoxDirection {
        /// Base design parameters (kernels, covariate-effect sign,
        /// baseline scale, seed).
        config: &'a CoxSimConfig,
        /// Signed exposure coefficient.
        beta_x: f64,
    },
}

/// Oracle output: the estimand path with a per-grid-point Monte-Carlo
/// standard error.
#[derive(Debug, Clone)]
pub struct AcmOracle<T> {
    /// The estimand path over the grid.
    pub gamma: Vec<T>,
    /// Monte-Carlo standard error per grid point (zero when the design
    /// makes the integrand ratio exact).
    pub se: Vec<T>,
}

/// Evaluates the normalised estimand by covariate-only Monte Carlo.
///
/// The representation integrated here is the expected normalised residual
/// times the full-history hazard, with the at-risk probability entering
/// as the exact survival factor of each drawn covariate configuration.
/// No event sampling is involved, so on partially additive designs the
/// per-point ratio is exact and the standard error collapses to zero.
pub fn acm_oracle<T: Real>(design: &OracleDesign, mc_size: usize) -> Result<AcmOracle<T>> {
    if mc_size == 0 {
        return Err(Error::Config("Monte-Carlo size must be positive".into()));
    }
    match design {
        OracleDesign::Additive(config) => {
            config.validate()?;
            let grid: TimeGrid<T> = TimeGrid::new(config.q)?;
            let beta = acm_design_weights(config);
            let seed = derive_seed(config.seed, 0x0AC3);
            oracle_two_pass(&grid, mc_size, |j, r_path, num_path| {
                let mut rng = substream(seed, subject_stream(0, j as u64));
                let mut z = vec![0.0f64; config.d];
                for zj in z.iter_mut() {
                    *zj = match config.setting {
                        AcmSetting::Lin => rng.random::<f64>(),
                        AcmSetting::Par => rng.sample::<f64, _>(rand_distr::StandardNormal),
                    };
                }
                let u: f64 = rng.random();
                let (a, f) = match config.setting {
                    AcmSetting::Lin => {
                        let f: f64 = z.iter().zip(&beta).map(|(&zj, &bj)| zj * bj).sum();
                        (z[0], f)
                    }
                    AcmSetting::Par => {
                        let p = phi(z[0]);
                        (p, p)
                    }
                };
                let x = a + u;
                for (i, &t) in grid.points().iter().enumerate() {
                    let t64 = t.to_f64_lossy();
                    let cumhaz = t64 * t64 * (1.0 + x + f);
                    let surv = (-cumhaz).exp();
                    let pi_t =
                        a + crate::nuisance::uniform_tilt_mean(t64 * t64);
                    let dev = x - pi_t;
                    let r = surv * dev * dev;
                    r_path[i] = r;
                    // Full-history minus observed-history hazard is
                    // 2 t (x - pi_t); the residual picks the same factor.
                    num_path[i] = 2.0 * t64 * r;
                }
            })
        }
        OracleDesign::CoxDirection { config, beta_x } => {
            config.validate()?;
            let grid: TimeGrid<f64> = TimeGrid::new(config.q)?;
            let grid_t: TimeGrid<T> = TimeGrid::new(config.q)?;
            let seed = derive_seed(config.seed, 0x0AC3);
            let q = config.q;
            let beta1 = config.beta1;
            let beta2 = config.beta2;
            let beta_x = *beta_x;
            oracle_two_pass(&grid_t, mc_size, move |j, r_path, num_path| {
                let mut rng = substream(seed, subject_stream(0, j as u64));
                let z = sample_z_process::<f64>(&grid, &mut rng);
                let v = random_walk::<f64>(&grid, &mut rng);
                let w = random_walk::<f64>(&grid, &mut rng);
                let zero = vec![0.0f64; q];
                let pi = historical_linear(&z, config.kernel_x, &zero, &grid);
                let x: Vec<f64> = pi.iter().zip(&v).map(|(&p, &n)| p + n).collect();
                let hist_y = historical_linear(&z, config.kernel_y, &zero, &grid);
                let mut cumhaz = 0.0f64;
                for i in 0..q {
                    let t = grid.point(i);
                    let lam = beta1
                        * t
                        * t
                        * (beta2 * z[i] + hist_y[i] + w[i] + beta_x * x[i]).exp();
                    let surv = (-cumhaz).exp();
                    let dev = x[i] - pi[i];
                    r_path[i] = surv * dev * dev;
                    num_path[i] = surv * dev * lam;
                    // Left-endpoint accumulation, matching the generator.
                    cumhaz += lam * grid.step();
                }
            })
        }
    }
}

/// Shared Monte-Carlo engine: pass one accumulates the mean residual
/// second moment and mean numerator per grid point; pass two accumulates
/// the influence of each draw on the cumulative ratio path, giving the
/// standard error. The integrand is integrated by the trapezoid rule.
fn oracle_two_pass<T: Real>(
    grid: &TimeGrid<T>,
    mc_size: usize,
    fill: impl Fn(usize, &mut [f64], &mut [f64]) + Sync,
) -> Result<AcmOracle<T>> {
    let q = grid.q();
    let step = grid.step().to_f64_lossy();
    let mc_f = mc_size as f64;

    // Pass 1: means.
    let (r_mean, num_mean) = (0..mc_size)
        .into_par_iter()
        .fold(
            || (vec![0.0f64; q], vec![0.0f64; q], vec![0.0f64; q], vec![0.0f64; q]),
            |(mut racc, mut nacc, mut rbuf, mut nbuf), j| {
                fill(j, &mut rbuf, &mut nbuf);
                for i in 0..q {
                    racc[i] += rbuf[i];
                    nacc[i] += nbuf[i];
                }
                (racc, nacc, rbuf, nbuf)
            },
        )
        .map(|(racc, nacc, _, _)| (racc, nacc))
        .reduce(
            || (vec![0.0f64; q], vec![0.0f64; q]),
            |(mut ra, mut na), (rb, nb)| {
                for i in 0..q {
                    ra[i] += rb[i];
                    na[i] += nb[i];
                }
                (ra, na)
            },
        );
    let r_mean: Vec<f64> = r_mean.into_iter().map(|v| v / mc_f).collect();
    let num_mean: Vec<f64> = num_mean.into_iter().map(|v| v / mc_f).collect();

    // Ratio path; a vanishing denominator (terminal extinction) carries
    // the last finite ratio forward, which only matters for reporting.
    let mut ratio = vec![0.0f64; q];
    let mut last = 0.0f64;
    for i in 0..q {
        if r_mean[i] > 0.0 {
            last = num_mean[i] / r_mean[i];
        }
        ratio[i] = last;
    }
    let mut gamma = vec![0.0f64; q];
    for i in 1..q {
        gamma[i] = gamma[i - 1] + 0.5 * (ratio[i - 1] + ratio[i]) * step;
    }

    // Pass 2: influence second moments for the standard error.
    let infl_sq = (0..mc_size)
        .into_par_iter()
        .fold(
            || (vec![0.0f64; q], vec![0.0f64; q], vec![0.0f64; q]),
            |(mut acc, mut rbuf, mut nbuf), j| {
                fill(j, &mut rbuf, &mut nbuf);
                let mut cum = 0.0f64;
                let mut prev_core = 0.0f64;
                for i in 0..q {
                    let core = if r_mean[i] > 0.0 {
                        (nbuf[i] - ratio[i] * rbuf[i]) / r_mean[i]
                    } else {
                        0.0
                    };
                    if i > 0 {
                        cum += 0.5 * (prev_core + core) * step;
                    }
                    acc[i] += cum * cum;
                    prev_core = core;
                }
                (acc, rbuf, nbuf)
            },
        )
        .map(|(acc, _, _)| acc)
        .reduce(
            || vec![0.0f64; q],
            |mut a, b| {
                for i in 0..q {
                    a[i] += b[i];
                }
                a
            },
        );
    let se: Vec<T> = infl_sq
        .into_iter()
        .map(|s| T::of((s / mc_f / mc_f).sqrt()))
        .collect();
    let gamma: Vec<T> = gamma.into_iter().map(T::of).collect();
    Ok(AcmOracle { gamma, se })
}
