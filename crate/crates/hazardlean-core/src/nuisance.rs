//! Nuisance learners: the predictable projection of the exposure and the
//! event intensity given the observed history, plus exact oracles for the
//! built-in designs.
//!
//! Every fitted object evaluates per `(subject, grid index)` and reads only
//! path entries at or before the queried index (strictly before, for
//! projections), so evaluations are predictable. Learners train on an
//! explicit subject subset and predict for any subject, which is what
//! cross-fitting needs.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{SubjectPath, SurvivalSample, TimeGrid};
use crate::linalg::{cholesky_in_place, cholesky_solve_leading, solve_spd_in_place};
use crate::rng::{derive_seed, subject_stream, substream};
use crate::scalar::Real;
use crate::simulate::{
    historical_linear, phi, random_walk, sample_survival_inverse_hazard, sample_z_process,
    AcmSetting, CoxSimConfig, HistKernel,
};

/// Hazard predictions are clipped to this cap, implementing the bounded-
/// intensity assumption with a cap large enough to be inactive in practice.
pub const HAZARD_CAP: f64 = 50.0;

/// Default ridge penalty for the per-time projection regressions.
pub const PROJECTION_PENALTY: f64 = 0.001;

/// Default penalty for the pooled log-linear hazard fit.
pub const HAZARD_PENALTY: f64 = 1e-4;

/// Default number of points in the projection grid of the pooled
/// exposure regression.
pub const PI_GRID_SIZE: usize = 20;

/// Predictable-projection model: returns the projection path of a subject.
/// Entry `i` may depend only on covariate entries at indices `< i`.
pub trait PiModel<T: Real>: Send + Sync {
    /// Projection path over the full grid.
    fn pi_path(&self, subject: &SubjectPath<T>) -> Vec<T>;
    /// Human-readable model description.
    fn describe(&self) -> String;
}

/// Conditional-hazard model: returns the intensity path of a subject.
/// Entry `i` may depend on covariate entries at indices `<= i` (the hazard
/// at `t` reads the left-continuous covariate value at `t`).
pub trait HazardModel<T: Real>: Send + Sync {
    /// Nonnegative hazard path over the full grid.
    fn hazard_path(&self, subject: &SubjectPath<T>) -> Vec<T>;
    /// Human-readable model description.
    fn describe(&self) -> String;
}

/// A paired set of fitted nuisances with training provenance.
#[derive(Clone)]
pub struct NuisanceFit<T> {
    pi: Arc<dyn PiModel<T>>,
    hazard: Arc<dyn HazardModel<T>>,
    trained_on: Vec<usize>,
    metadata: String,
}

impl<T: Real> NuisanceFit<T> {
    /// Combines a projection model and a hazard model.
    pub fn new(
        pi: Arc<dyn PiModel<T>>,
        hazard: Arc<dyn HazardModel<T>>,
        trained_on: Vec<usize>,
    ) -> Self {
        let metadata = format!("pi: {}; hazard: {}", pi.describe(), hazard.describe());
        Self {
            pi,
            hazard,
            trained_on,
            metadata,
        }
    }

    /// Pointwise projection evaluator.
    pub fn pi_hat(&self, subject: &SubjectPath<T>, i: usize) -> T {
        self.pi.pi_path(subject)[i]
    }

    /// Pointwise hazard evaluator (always nonnegative).
    pub fn hazard_hat(&self, subject: &SubjectPath<T>, i: usize) -> T {
        self.hazard.hazard_path(subject)[i]
    }

    /// Full projection path.
    pub fn pi_path(&self, subject: &SubjectPath<T>) -> Vec<T> {
        self.pi.pi_path(subject)
    }

    /// Full hazard path.
    pub fn hazard_path(&self, subject: &SubjectPath<T>) -> Vec<T> {
        self.hazard.hazard_path(subject)
    }

    /// Indices of the subjects the models were trained on (empty for
    /// oracles).
    pub fn trained_on(&self) -> &[usize] {
        &self.trained_on
    }

    /// Description of both models.
    pub fn metadata(&self) -> &str {
        &self.metadata
    }

    /// The projection model.
    pub fn pi_model(&self) -> &Arc<dyn PiModel<T>> {
        &self.pi
    }

    /// The hazard model.
    pub fn hazard_model(&self) -> &Arc<dyn HazardModel<T>> {
        &self.hazard
    }
}

// ---------------------------------------------------------------------------
// Ridge projection: per-time historical least squares.
// ---------------------------------------------------------------------------

/// Per-grid-time ridge regression of the exposure on the strict covariate
/// history, sharing one Gram factorisation across all target times.
pub struct RidgeProjection<T> {
    grid: TimeGrid<T>,
    d: usize,
    col_mean: Vec<T>,
    col_scale: Vec<T>,
    intercepts: Vec<T>,
    weights: Vec<Vec<T>>,
    penalty: f64,
}

impl<T: Real> PiModel<T> for RidgeProjection<T> {
    fn pi_path(&self, subject: &SubjectPath<T>) -> Vec<T> {
        let q = self.grid.q();
        assert_eq!(subject.q(), q, "subject grid must match the fitted grid");
        assert_eq!(subject.d(), self.d, "covariate dimension must match");
        // Standardise the subject's history once, then take partial dot
        // products: weights for target i use exactly the first i*d columns.
        let p = (q - 1) * self.d;
        let mut zs = vec![T::zero(); p];
        for j in 0..(q - 1) {
            for r in 0..self.d {
                let c = j * self.d + r;
                zs[c] = (subject.z_at(j, r) - self.col_mean[c]) / self.col_scale[c];
            }
        }
        (0..q)
            .map(|i| {
                let mut acc = self.intercepts[i];
                for (c, w) in self.weights[i].iter().enumerate() {
                    acc += *w * zs[c];
                }
                acc
            })
            .collect()
    }

    fn describe(&self) -> String {
        format!(
            "per-time ridge on strict covariate history (penalty {})",
            self.penalty
        )
    }
}

/// Fits the per-time ridge projection: for every grid time `i`, the
/// exposure `X_{t_i}` is regressed on the standardised covariate history
/// `(Z_{t_j})_{j < i}` with an unpenalised intercept; at `i = 0` the fit is
/// the training mean of `X_0`.
///
/// Fails with a numeric error advising a positive penalty when the normal
/// equations are singular and `penalty = 0`.
pub fn fit_projection_ridge<T: Real>(
    sample: &SurvivalSample<T>,
    train_idx: &[usize],
    penalty: f64,
) -> Result<RidgeProjection<T>> {
    if train_idx.len() < 2 {
        return Err(Error::Config(format!(
            "projection needs at least 2 training subjects, got {}",
            train_idx.len()
        )));
    }
    if !(penalty >= 0.0) {
        return Err(Error::Config(format!(
            "penalty must be nonnegative, got {penalty}"
        )));
    }
    let q = sample.grid().q();
    let d = sample.d();
    let p = (q - 1) * d;
    let m = train_idx.len();
    let m_t = T::from_usize(m).expect("train size fits scalar");

    // Column moments over the training subjects.
    let mut col_mean = vec![T::zero(); p];
    let mut col_scale = vec![T::zero(); p];
    for &j in train_idx {
        let s = &sample.subjects()[j];
        for jj in 0..(q - 1) {
            for r in 0..d {
                col_mean[jj * d + r] += s.z_at(jj, r);
            }
        }
    }
    for c in 0..p {
        col_mean[c] /= m_t;
    }
    for &j in train_idx {
        let s = &sample.subjects()[j];
        for jj in 0..(q - 1) {
            for r in 0..d {
                let c = jj * d + r;
                let dev = s.z_at(jj, r) - col_mean[c];
                col_scale[c] += dev * dev;
            }
        }
    }
    for c in 0..p {
        let var = col_scale[c] / m_t;
        col_scale[c] = if var > T::zero() { var.sqrt() } else { T::one() };
    }

    // Gram of standardised columns and cross products with every target.
    let mut gram = vec![T::zero(); p * p];
    let mut cross = vec![T::zero(); p * q];
    let mut x_mean = vec![T::zero(); q];
    let mut zs = vec![T::zero(); p];
    for &j in train_idx {
        let s = &sample.subjects()[j];
        for i in 0..q {
            x_mean[i] += s.x()[i];
        }
    }
    for i in 0..q {
        x_mean[i] /= m_t;
    }
    for &j in train_idx {
        let s = &sample.subjects()[j];
        for jj in 0..(q - 1) {
            for r in 0..d {
                let c = jj * d + r;
                zs[c] = (s.z_at(jj, r) - col_mean[c]) / col_scale[c];
            }
        }
        for a in 0..p {
            let za = zs[a];
            let row = &mut gram[a * p..(a + 1) * p];
            for (b, zb) in zs.iter().enumerate() {
                row[b] += za * *zb;
            }
            let crow = &mut cross[a * q..(a + 1) * q];
            for i in 0..q {
                crow[i] += za * (s.x()[i] - x_mean[i]);
            }
        }
    }
    let pen = T::of(penalty);
    for a in 0..p {
        for b in 0..p {
            gram[a * p + b] /= m_t;
        }
        gram[a * p + a] += pen;
    }
    for v in cross.iter_mut() {
        *v /= m_t;
    }
    cholesky_in_place(&mut gram, p).map_err(|_| {
        Error::Numeric(
            "singular normal equations in the projection fit; use a positive penalty".into(),
        )
    })?;

    let mut weights = Vec::with_capacity(q);
    weights.push(Vec::new());
    for i in 1..q {
        let k = i * d;
        let mut rhs: Vec<T> = (0..k).map(|c| cross[c * q + i]).collect();
        cholesky_solve_leading(&gram, p, k, &mut rhs);
        weights.push(rhs);
    }

    Ok(RidgeProjection {
        grid: sample.grid().clone(),
        d,
        col_mean,
        col_scale,
        intercepts: x_mean,
        weights,
        penalty,
    })
}

// ---------------------------------------------------------------------------
// Hazard feature bases.
// ---------------------------------------------------------------------------

/// Feature basis for the pooled hazard learners. All bases start with an
/// intercept and time transforms; the covariate blocks differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HazardBasis {
    /// `{1}`: occurrence/exposure rate only.
    InterceptOnly,
    /// `{1, log(t + step)}`: isolates a power-law time slope.
    LogTime,
    /// `{1, t, t^2, log(t + step)}` plus, per covariate dimension: the
    /// current value, the running mean of the past, and exponentially
    /// lagged history integrals with decay 1 and 4. Suited to time-varying
    /// covariate paths.
    Historical,
    /// `{1, t, t^2, log(t + step)}` plus, per covariate dimension: the
    /// current value, its square, and Gaussian bumps centred at -1, 0, 1.
    /// Suited to time-constant covariates with nonlinear effects.
    Dictionary,
}

impl HazardBasis {
    /// Feature count including the intercept.
    pub fn width(&self, d: usize) -> usize {
        match self {
            HazardBasis::InterceptOnly => 1,
            HazardBasis::LogTime => 2,
            HazardBasis::Historical => 4 + 4 * d,
            HazardBasis::Dictionary => 4 + 5 * d,
        }
    }

    /// Canonical name for metadata.
    pub fn name(&self) -> &'static str {
        match self {
            HazardBasis::InterceptOnly => "intercept-only",
            HazardBasis::LogTime => "log-time",
            HazardBasis::Historical => "historical",
            HazardBasis::Dictionary => "dictionary",
        }
    }

    /// Fills the feature matrix (`q` rows by `width` columns, row-major)
    /// for one subject. Row `i` reads covariate entries at indices `<= i`.
    fn fill_features<T: Real>(
        &self,
        subject: &SubjectPath<T>,
        grid: &TimeGrid<T>,
        out: &mut Vec<T>,
    ) {
        let q = grid.q();
        let d = subject.d();
        let p = self.width(d);
        out.clear();
        out.resize(q * p, T::zero());
        let step = grid.step();
        match self {
            HazardBasis::InterceptOnly => {
                for i in 0..q {
                    out[i * p] = T::one();
                }
            }
            HazardBasis::LogTime => {
                for i in 0..q {
                    let t = grid.point(i);
                    out[i * p] = T::one();
                    out[i * p + 1] = (t + step).ln();
                }
            }
            HazardBasis::Historical => {
                // Running sums and exponential lags via O(1) recursions.
                let decay1 = (-step).exp();
                let decay4 = (-(T::of(4.0)) * step).exp();
                let mut run_sum = vec![T::zero(); d];
                let mut lag1 = vec![T::zero(); d];
                let mut lag4 = vec![T::zero(); d];
                for i in 0..q {
                    let t = grid.point(i);
                    let row = &mut out[i * p..(i + 1) * p];
                    row[0] = T::one();
                    row[1] = t;
                    row[2] = t * t;
                    row[3] = (t + step).ln();
                    for r in 0..d {
                        let z = subject.z_at(i, r);
                        row[4 + 4 * r] = z;
                        row[5 + 4 * r] = if i == 0 {
                            T::zero()
                        } else {
                            run_sum[r] / T::from_usize(i).expect("index fits scalar")
                        };
                        row[6 + 4 * r] = lag1[r];
                        row[7 + 4 * r] = lag4[r];
                    }
                    for r in 0..d {
                        let z = subject.z_at(i, r);
                        run_sum[r] += z;
                        lag1[r] = decay1 * (lag1[r] + step * z);
                        lag4[r] = decay4 * (lag4[r] + step * z);
                    }
                }
            }
            HazardBasis::Dictionary => {
                for i in 0..q {
                    let t = grid.point(i);
                    let row = &mut out[i * p..(i + 1) * p];
                    row[0] = T::one();
                    row[1] = t;
                    row[2] = t * t;
                    row[3] = (t + step).ln();
                    for r in 0..d {
                        let z = subject.z_at(i, r);
                        row[4 + 5 * r] = z;
                        row[5 + 5 * r] = z * z;
                        row[6 + 5 * r] = (-(z + T::one()) * (z + T::one())).exp();
                        row[7 + 5 * r] = (-z * z).exp();
                        row[8 + 5 * r] = (-(z - T::one()) * (z - T::one())).exp();
                    }
                }
            }
        }
    }
}

/// Person-period training rows: at-risk (subject, index >= 1) pairs with
/// features, event increments, and shared exposure `step`.
struct PersonPeriodRows<T> {
    feats: Vec<T>,
    events: Vec<bool>,
    n_rows: usize,
    p: usize,
    total_events: usize,
}

fn build_person_period_rows<T: Real>(
    sample: &SurvivalSample<T>,
    train_idx: &[usize],
    basis: HazardBasis,
) -> PersonPeriodRows<T> {
    let q = sample.grid().q();
    let p = basis.width(sample.d());
    let mut feats = Vec::new();
    let mut events = Vec::new();
    let mut buf = Vec::new();
    let mut total_events = 0usize;
    for &j in train_idx {
        let s = &sample.subjects()[j];
        basis.fill_features(s, sample.grid(), &mut buf);
        for l in 1..q {
            if s.at_risk(l) {
                feats.extend_from_slice(&buf[l * p..(l + 1) * p]);
                let ev = s.n_increment(l);
                events.push(ev);
                total_events += ev as usize;
            }
        }
    }
    let n_rows = events.len();
    PersonPeriodRows {
        feats,
        events,
        n_rows,
        p,
        total_events,
    }
}

/// Column moments (skipping the intercept) for feature standardisation.
fn standardise_rows<T: Real>(rows: &mut PersonPeriodRows<T>) -> (Vec<T>, Vec<T>) {
    let p = rows.p;
    let n = rows.n_rows;
    let n_t = T::from_usize(n.max(1)).expect("row count fits scalar");
    let mut mean = vec![T::zero(); p];
    let mut scale = vec![T::one(); p];
    for row in 0..n {
        for c in 1..p {
            mean[c] += rows.feats[row * p + c];
        }
    }
    for c in 1..p {
        mean[c] /= n_t;
    }
    let mut var = vec![T::zero(); p];
    for row in 0..n {
        for c in 1..p {
            let dev = rows.feats[row * p + c] - mean[c];
            var[c] += dev * dev;
        }
    }
    for c in 1..p {
        let v = var[c] / n_t;
        scale[c] = if v > T::zero() { v.sqrt() } else { T::one() };
    }
    for row in 0..n {
        for c in 1..p {
            rows.feats[row * p + c] = (rows.feats[row * p + c] - mean[c]) / scale[c];
        }
    }
    (mean, scale)
}

/// Pooled log-linear hazard fit: `log h = coef . features` maximising the
/// grid Poisson likelihood over at-risk person-period rows.
#[derive(Debug)]
pub struct PooledHazardFit<T> {
    grid: TimeGrid<T>,
    d: usize,
    basis: HazardBasis,
    coef: Vec<T>,
    feat_mean: Vec<T>,
    feat_scale: Vec<T>,
    penalty: f64,
    cap: T,
}

impl<T: Real> HazardModel<T> for PooledHazardFit<T> {
    fn hazard_path(&self, subject: &SubjectPath<T>) -> Vec<T> {
        assert_eq!(subject.q(), self.grid.q(), "subject grid must match");
        assert_eq!(subject.d(), self.d, "covariate dimension must match");
        let p = self.basis.width(self.d);
        let mut buf = Vec::new();
        self.basis.fill_features(subject, &self.grid, &mut buf);
        (0..self.grid.q())
            .map(|i| {
                let mut eta = self.coef[0];
                for c in 1..p {
                    let zs = (buf[i * p + c] - self.feat_mean[c]) / self.feat_scale[c];
                    eta += self.coef[c] * zs;
                }
                eta.exp().min(self.cap)
            })
            .collect()
    }

    fn describe(&self) -> String {
        format!(
            "pooled log-linear hazard, {} basis (penalty {})",
            self.basis.name(),
            self.penalty
        )
    }
}

impl<T: Real> PooledHazardFit<T> {
    /// Fitted coefficients on the standardised feature scale (intercept
    /// first).
    pub fn coefficients(&self) -> &[T] {
        &self.coef
    }
}

/// Fits the pooled log-linear hazard by penalised Newton iteration.
///
/// The intercept is never penalised, so the fitted model satisfies the
/// exact score identity: summed martingale residuals over the training
/// rows are zero. Convergence failure reports the gradient norm.
pub fn fit_hazard_pooled<T: Real>(
    sample: &SurvivalSample<T>,
    train_idx: &[usize],
    basis: HazardBasis,
    penalty: f64,
) -> Result<PooledHazardFit<T>> {
    if train_idx.is_empty() {
        return Err(Error::Config("hazard fit needs training subjects".into()));
    }
    if !(penalty >= 0.0) {
        return Err(Error::Config(format!(
            "penalty must be nonnegative, got {penalty}"
        )));
    }
    let mut rows = build_person_period_rows(sample, train_idx, basis);
    if rows.total_events == 0 {
        return Err(Error::Numeric(
            "no events in the training data; the hazard likelihood is unbounded below".into(),
        ));
    }
    let (feat_mean, feat_scale) = standardise_rows(&mut rows);
    let p = rows.p;
    let n = rows.n_rows;
    let step = sample.grid().step();
    let pen = T::of(2.0 * penalty);

    let mut coef = vec![T::zero(); p];
    let exposure = step * T::from_usize(n).expect("rows fit scalar");
    coef[0] = (T::from_usize(rows.total_events).expect("events fit scalar") / exposure).ln();

    let loglik = |beta: &[T]| -> T {
        let mut ll = T::zero();
        for row in 0..n {
            let mut eta = T::zero();
            for c in 0..p {
                eta += beta[c] * rows.feats[row * p + c];
            }
            if rows.events[row] {
                ll += eta;
            }
            ll -= eta.exp() * step;
        }
        for c in 1..p {
            ll -= T::of(penalty) * beta[c] * beta[c];
        }
        ll
    };

    let mut grad = vec![T::zero(); p];
    let mut hess = vec![T::zero(); p * p];
    let mut ll_old = loglik(&coef);
    let max_iter = 60;
    let mut converged = false;
    let tol = T::of(1e-7) * (T::one() + T::from_usize(rows.total_events).expect("fits"));
    for _ in 0..max_iter {
        for g in grad.iter_mut() {
            *g = T::zero();
        }
        for h in hess.iter_mut() {
            *h = T::zero();
        }
        for row in 0..n {
            let feat = &rows.feats[row * p..(row + 1) * p];
            let mut eta = T::zero();
            for c in 0..p {
                eta += coef[c] * feat[c];
            }
            let w = eta.exp() * step;
            let resid = if rows.events[row] { T::one() - w } else { -w };
            for a in 0..p {
                grad[a] += feat[a] * resid;
                let fa_w = feat[a] * w;
                let hrow = &mut hess[a * p..(a + 1) * p];
                for (b, fb) in feat.iter().enumerate().skip(a) {
                    hrow[b] += fa_w * *fb;
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[a * p + b] = hess[b * p + a];
            }
        }
        for c in 1..p {
            grad[c] -= pen * coef[c];
            hess[c * p + c] += pen;
        }
        let gnorm = grad.iter().fold(T::zero(), |acc, g| acc.max(g.abs()));
        if gnorm < tol {
            converged = true;
            break;
        }
        let mut dir = grad.clone();
        solve_spd_in_place(&mut hess, p, &mut dir).map_err(|_| {
            Error::Numeric("hazard fit produced a non-positive-definite curvature matrix".into())
        })?;
        // Step halving keeps the iteration inside the well-behaved region.
        let mut stepsize = T::one();
        let mut advanced = false;
        for _ in 0..40 {
            let trial: Vec<T> = coef
                .iter()
                .zip(&dir)
                .map(|(&c, &s)| c + stepsize * s)
                .collect();
            let ll_new = loglik(&trial);
            if ll_new.is_finite() && ll_new > ll_old - T::of(1e-14) {
                coef = trial;
                ll_old = ll_new;
                advanced = true;
                break;
            }
            stepsize /= T::of(2.0);
        }
        if !advanced {
            return Err(Error::Numeric(format!(
                "hazard fit stalled; gradient max-norm {gnorm}"
            )));
        }
    }
    if !converged {
        // One final gradient check: accept if the last step landed close.
        let gnorm = {
            let mut g = vec![T::zero(); p];
            for row in 0..n {
                let feat = &rows.feats[row * p..(row + 1) * p];
                let mut eta = T::zero();
                for c in 0..p {
                    eta += coef[c] * feat[c];
                }
                let w = eta.exp() * step;
                let resid = if rows.events[row] { T::one() - w } else { -w };
                for a in 0..p {
                    g[a] += feat[a] * resid;
                }
            }
            for c in 1..p {
                g[c] -= pen * coef[c];
            }
            g.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
        };
        if gnorm >= tol {
            return Err(Error::Numeric(format!(
                "hazard fit did not converge in {max_iter} iterations; gradient max-norm {gnorm}"
            )));
        }
    }

    Ok(PooledHazardFit {
        grid: sample.grid().clone(),
        d: sample.d(),
        basis,
        coef,
        feat_mean,
        feat_scale,
        penalty,
        cap: T::of(HAZARD_CAP),
    })
}

// ---------------------------------------------------------------------------
// Gradient-boosted shallow trees (shared engine for hazard and regression).
// Depth 1 is the regression-stump configuration.
// ---------------------------------------------------------------------------

/// A shallow regression tree with axis-aligned splits, stored as a flat node
/// array with the root at index 0. Leaf values already include the learning
/// rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ShallowTree<T> {
    nodes: Vec<TreeNode<T>>,
}

#[derive(Debug, Clone, PartialEq)]
enum TreeNode<T> {
    /// Rows with `feature <= threshold` continue at `left`, the rest at
    /// `right`.
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf { value: T },
}

impl<T: Real> ShallowTree<T> {
    /// Routes one feature row to its leaf value.
    fn value_for_row(&self, feat: &[T]) -> T {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if feat[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
                TreeNode::Leaf { value } => return *value,
            }
        }
    }
}

/// Tuning constants for the tree boosters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    /// Number of boosting rounds.
    pub rounds: usize,
    /// Shrinkage applied to each tree.
    pub learning_rate: f64,
    /// Number of quantile-based split candidates per feature.
    pub bins: usize,
    /// Newton leaf values are clipped to this magnitude.
    pub leaf_clip: f64,
    /// Maximum interaction depth of each tree; depth 1 fits stumps.
    #[serde(default = "default_tree_depth")]
    pub depth: usize,
}

fn default_tree_depth() -> usize {
    1
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            rounds: 100,
            learning_rate: 0.1,
            bins: 16,
            leaf_clip: 2.0,
            depth: 1,
        }
    }
}

/// Quantile-bucketed feature matrix for fast split scans.
struct BucketedFeatures<T> {
    thresholds: Vec<Vec<T>>,
    bucket: Vec<u8>,
    n_rows: usize,
    n_feats: usize,
}

impl<T: Real> BucketedFeatures<T> {
    /// `feats` is row-major `n_rows x n_feats`.
    fn new(feats: &[T], n_rows: usize, n_feats: usize, bins: usize) -> Self {
        assert!(bins >= 2 && bins <= 250, "bin count must fit in a byte");
        let mut thresholds = Vec::with_capacity(n_feats);
        for f in 0..n_feats {
            let mut vals: Vec<T> = (0..n_rows).map(|r| feats[r * n_feats + f]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).expect("features must be comparable"));
            let mut cand = Vec::new();
            for k in 1..bins {
                let pos = k * (n_rows - 1) / bins;
                let v = vals[pos];
                if cand.last().map_or(true, |&last: &T| v > last) {
                    cand.push(v);
                }
            }
            thresholds.push(cand);
        }
        let mut bucket = vec![0u8; n_rows * n_feats];
        for r in 0..n_rows {
            for f in 0..n_feats {
                let v = feats[r * n_feats + f];
                // Bucket b means: v <= thresholds[b], with the last bucket
                // holding everything above the top threshold.
                let b = thresholds[f].partition_point(|&thr| thr < v);
                bucket[r * n_feats + f] = b as u8;
            }
        }
        Self {
            thresholds,
            bucket,
            n_rows,
            n_feats,
        }
    }
}

/// Finds the best single Newton split for the rows in `idx`: returns the
/// feature, threshold index, and gain, or `None` when no split improves the
/// objective. Empty sides score zero gain and are never selected.
fn best_split<T: Real>(
    bf: &BucketedFeatures<T>,
    idx: &[usize],
    g: &[T],
    h: &[T],
) -> Option<(usize, usize, T)> {
    let eps = T::of(1e-6);
    let mut g_tot = T::zero();
    let mut h_tot = T::zero();
    for &r in idx {
        g_tot += g[r];
        h_tot += h[r];
    }
    let base = g_tot * g_tot / (h_tot + eps);
    let mut best: Option<(usize, usize, T)> = None;
    let mut best_gain = T::of(1e-12);
    let max_bins = bf.thresholds.iter().map(|t| t.len() + 1).max()?.max(1);
    let mut gb = vec![T::zero(); max_bins];
    let mut hb = vec![T::zero(); max_bins];
    for f in 0..bf.n_feats {
        let n_thr = bf.thresholds[f].len();
        if n_thr == 0 {
            continue;
        }
        for b in 0..=n_thr {
            gb[b] = T::zero();
            hb[b] = T::zero();
        }
        for &r in idx {
            let b = bf.bucket[r * bf.n_feats + f] as usize;
            gb[b] += g[r];
            hb[b] += h[r];
        }
        let mut gl = T::zero();
        let mut hl = T::zero();
        for thr in 0..n_thr {
            gl += gb[thr];
            hl += hb[thr];
            let gr = g_tot - gl;
            let hr = h_tot - hl;
            let gain = gl * gl / (hl + eps) + gr * gr / (hr + eps) - base;
            if gain > best_gain {
                best_gain = gain;
                best = Some((f, thr, gain));
            }
        }
    }
    best
}

/// Grows the subtree for the rows in `idx`, appending nodes to `nodes` and
/// returning the subtree's root index. Splits greedily while `depth_left`
/// allows and a gainful split exists; otherwise emits a Newton leaf clipped
/// to `leaf_clip` and scaled by `lr`.
fn grow_node<T: Real>(
    bf: &BucketedFeatures<T>,
    g: &[T],
    h: &[T],
    idx: Vec<usize>,
    depth_left: usize,
    leaf_clip: T,
    lr: T,
    nodes: &mut Vec<TreeNode<T>>,
) -> usize {
    if depth_left > 0 {
        if let Some((f, thr_idx, _gain)) = best_split(bf, &idx, g, h) {
            let mut left_rows = Vec::new();
            let mut right_rows = Vec::new();
            for &r in &idx {
                if bf.bucket[r * bf.n_feats + f] as usize <= thr_idx {
                    left_rows.push(r);
                } else {
                    right_rows.push(r);
                }
            }
            let slot = nodes.len();
            nodes.push(TreeNode::Leaf { value: T::zero() });
            let left = grow_node(bf, g, h, left_rows, depth_left - 1, leaf_clip, lr, nodes);
            let right = grow_node(bf, g, h, right_rows, depth_left - 1, leaf_clip, lr, nodes);
            nodes[slot] = TreeNode::Split {
                feature: f,
                threshold: bf.thresholds[f][thr_idx],
                left,
                right,
            };
            return slot;
        }
    }
    let eps = T::of(1e-6);
    let mut g_tot = T::zero();
    let mut h_tot = T::zero();
    for &r in &idx {
        g_tot += g[r];
        h_tot += h[r];
    }
    let value = lr * (g_tot / (h_tot + eps)).clamp(-leaf_clip, leaf_clip);
    nodes.push(TreeNode::Leaf { value });
    nodes.len() - 1
}

/// One boosting round: grows a tree of at most `depth` levels for gradient
/// `g` and curvature `h`; `None` when the root has no gainful split, which
/// stops the boosting loop.
fn grow_tree<T: Real>(
    bf: &BucketedFeatures<T>,
    g: &[T],
    h: &[T],
    depth: usize,
    leaf_clip: T,
    lr: T,
) -> Option<ShallowTree<T>> {
    let mut nodes = Vec::new();
    let root_rows: Vec<usize> = (0..bf.n_rows).collect();
    grow_node(bf, g, h, root_rows, depth, leaf_clip, lr, &mut nodes);
    if nodes.len() == 1 {
        // The root degenerated to a leaf: no split clears the gain bar.
        return None;
    }
    Some(ShallowTree { nodes })
}

/// Gradient-boosted tree hazard: `log h = f0 + sum of shallow trees` over
/// the same feature basis as the pooled fit, trained by Poisson boosting.
pub struct BoostedHazardFit<T> {
    grid: TimeGrid<T>,
    d: usize,
    basis: HazardBasis,
    f0: T,
    trees: Vec<ShallowTree<T>>,
    cap: T,
    params: BoostParams,
}

impl<T: Real> HazardModel<T> for BoostedHazardFit<T> {
    fn hazard_path(&self, subject: &SubjectPath<T>) -> Vec<T> {
        assert_eq!(subject.q(), self.grid.q(), "subject grid must match");
        assert_eq!(subject.d(), self.d, "covariate dimension must match");
        let p = self.basis.width(self.d);
        let mut buf = Vec::new();
        self.basis.fill_features(subject, &self.grid, &mut buf);
        (0..self.grid.q())
            .map(|i| {
                // Tree features skip the intercept column.
                let feat = &buf[i * p + 1..(i + 1) * p];
                let mut fval = self.f0;
                for tree in &self.trees {
                    fval += tree.value_for_row(feat);
                }
                fval.exp().min(self.cap)
            })
            .collect()
    }

    fn describe(&self) -> String {
        format!(
            "boosted tree hazard, {} basis (depth {}, {} rounds, lr {})",
            self.basis.name(),
            self.params.depth,
            self.params.rounds,
            self.params.learning_rate
        )
    }
}

/// Fits the boosted tree hazard on at-risk person-period rows.
pub fn fit_hazard_boosted<T: Real>(
    sample: &SurvivalSample<T>,
    train_idx: &[usize],
    basis: HazardBasis,
    params: BoostParams,
) -> Result<BoostedHazardFit<T>> {
    if train_idx.is_empty() {
        return Err(Error::Config("hazard fit needs training subjects".into()));
    }
    if params.depth == 0 {
        return Err(Error::Config("boosting depth must be at least 1".into()));
    }
    let rows = build_person_period_rows(sample, train_idx, basis);
    if rows.total_events == 0 {
        return Err(Error::Numeric(
            "no events in the training data; the hazard likelihood is unbounded below".into(),
        ));
    }
    let p = rows.p;
    let n = rows.n_rows;
    let step = sample.grid().step();
    // Drop the intercept column: tree leaves carry their own offsets.
    let pf = p - 1;
    let mut feats = vec![T::zero(); n * pf];
    for r in 0..n {
        feats[r * pf..(r + 1) * pf].copy_from_slice(&rows.feats[r * p + 1..(r + 1) * p]);
    }
    let bf = BucketedFeatures::new(&feats, n, pf, params.bins);
    let exposure = step * T::from_usize(n).expect("rows fit scalar");
    let f0 = (T::from_usize(rows.total_events).expect("events fit scalar") / exposure).ln();
    let lr = T::of(params.learning_rate);
    let clip = T::of(params.leaf_clip);

    let mut fvals = vec![f0; n];
    let mut g = vec![T::zero(); n];
    let mut h = vec![T::zero(); n];
    let mut trees = Vec::with_capacity(params.rounds);
    for _ in 0..params.rounds {
        for r in 0..n {
            let w = fvals[r].exp() * step;
            g[r] = if rows.events[r] { T::one() - w } else { -w };
            h[r] = w;
        }
        let Some(tree) = grow_tree(&bf, &g, &h, params.depth, clip, lr) else {
            break;
        };
        for r in 0..n {
            fvals[r] += tree.value_for_row(&feats[r * pf..(r + 1) * pf]);
        }
        trees.push(tree);
    }

    Ok(BoostedHazardFit {
        grid: sample.grid().clone(),
        d: sample.d(),
        basis,
        f0,
        trees,
        cap: T::of(HAZARD_CAP),
        params,
    })
}

// ---------------------------------------------------------------------------
// Pooled grid regression for the projection (time-constant covariates).
// ---------------------------------------------------------------------------

/// Row-matrix regression interface used by the pooled projection learner.
pub trait HistoricalRegressor<T: Real>: Send + Sync {
    /// Fits on a row-major `n_rows x n_cols` matrix with responses `y`.
    fn fit(&self, rows: &[T], n_rows: usize, n_cols: usize, y: &[T])
        -> Result<Box<dyn RowPredictor<T>>>;
    /// Human-readable description.
    fn describe(&self) -> String;
}

/// Fitted row predictor.
pub trait RowPredictor<T: Real>: Send + Sync {
    /// Predicts the response for one feature row.
    fn predict_row(&self, row: &[T]) -> T;
}

/// Ordinary least squares with intercept.
pub struct OlsRegressor;

struct OlsPredictor<T> {
    intercept: T,
    coef: Vec<T>,
}

impl<T: Real> RowPredictor<T> for OlsPredictor<T> {
    fn predict_row(&self, row: &[T]) -> T {
        let mut acc = self.intercept;
        for (c, &w) in self.coef.iter().enumerate() {
            acc += w * row[c];
        }
        acc
    }
}

impl<T: Real> HistoricalRegressor<T> for OlsRegressor {
    fn fit(
        &self,
        rows: &[T],
        n_rows: usize,
        n_cols: usize,
        y: &[T],
    ) -> Result<Box<dyn RowPredictor<T>>> {
        if n_rows < n_cols + 1 {
            return Err(Error::Config(format!(
                "least squares needs more rows ({n_rows}) than columns ({n_cols})"
            )));
        }
        let p = n_cols + 1;
        let n_t = T::from_usize(n_rows).expect("rows fit scalar");
        let mut xtx = vec![T::zero(); p * p];
        let mut xty = vec![T::zero(); p];
        let mut feat = vec![T::one(); p];
        for r in 0..n_rows {
            feat[1..p].copy_from_slice(&rows[r * n_cols..(r + 1) * n_cols]);
            for a in 0..p {
                xty[a] += feat[a] * y[r];
                for b in a..p {
                    xtx[a * p + b] += feat[a] * feat[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtx[a * p + b] = xtx[b * p + a];
            }
        }
        // Tiny jitter keeps duplicated constant columns from aborting the
        // solve while leaving well-posed problems untouched.
        for a in 0..p {
            xtx[a * p + a] += T::of(1e-10) * n_t;
        }
        solve_spd_in_place(&mut xtx, p, &mut xty)
            .map_err(|_| Error::Numeric("singular least-squares system in grid regression".into()))?;
        Ok(Box::new(OlsPredictor {
            intercept: xty[0],
            coef: xty[1..].to_vec(),
        }))
    }

    fn describe(&self) -> String {
        "ordinary least squares".into()
    }
}

/// Gradient-boosted shallow trees with squared-error loss.
pub struct BoostedRegressor {
    /// Boosting constants.
    pub params: BoostParams,
}

impl Default for BoostedRegressor {
    fn default() -> Self {
        Self {
            params: BoostParams::default(),
        }
    }
}

struct BoostedPredictor<T> {
    f0: T,
    trees: Vec<ShallowTree<T>>,
}

impl<T: Real> RowPredictor<T> for BoostedPredictor<T> {
    fn predict_row(&self, row: &[T]) -> T {
        let mut acc = self.f0;
        for tree in &self.trees {
            acc += tree.value_for_row(row);
        }
        acc
    }
}

impl<T: Real> HistoricalRegressor<T> for BoostedRegressor {
    fn fit(
        &self,
        rows: &[T],
        n_rows: usize,
        n_cols: usize,
        y: &[T],
    ) -> Result<Box<dyn RowPredictor<T>>> {
        if n_rows == 0 {
            return Err(Error::Config("boosted regression needs rows".into()));
        }
        if self.params.depth == 0 {
            return Err(Error::Config("boosting depth must be at least 1".into()));
        }
        let bf = BucketedFeatures::new(rows, n_rows, n_cols, self.params.bins);
        let n_t = T::from_usize(n_rows).expect("rows fit scalar");
        let f0 = y.iter().copied().sum::<T>() / n_t;
        let lr = T::of(self.params.learning_rate);
        let clip = T::of(self.params.leaf_clip);
        let mut fvals = vec![f0; n_rows];
        let mut g = vec![T::zero(); n_rows];
        let h = vec![T::one(); n_rows];
        let mut trees = Vec::with_capacity(self.params.rounds);
        for _ in 0..self.params.rounds {
            for r in 0..n_rows {
                g[r] = y[r] - fvals[r];
            }
            let Some(tree) = grow_tree(&bf, &g, &h, self.params.depth, clip, lr) else {
                break;
            };
            for r in 0..n_rows {
                fvals[r] += tree.value_for_row(&rows[r * n_cols..(r + 1) * n_cols]);
            }
            trees.push(tree);
        }
        Ok(Box::new(BoostedPredictor { f0, trees }))
    }

    fn describe(&self) -> String {
        format!(
            "boosted trees (depth {}, {} rounds, lr {})",
            self.params.depth, self.params.rounds, self.params.learning_rate
        )
    }
}

/// Pooled projection fit over a coarse time grid: one regression of the
/// exposure on `(time, covariates)` rows, predictions extended to the main
/// grid by left-step evaluation.
pub struct GridRegressionPi<T> {
    grid: TimeGrid<T>,
    d: usize,
    pi_times: Vec<T>,
    effective_time: Vec<usize>,
    floor_map: Vec<usize>,
    at_risk_only: bool,
    predictor: Box<dyn RowPredictor<T>>,
    description: String,
}

impl<T: Real> PiModel<T> for GridRegressionPi<T> {
    fn pi_path(&self, subject: &SubjectPath<T>) -> Vec<T> {
        assert_eq!(subject.q(), self.grid.q(), "subject grid must match");
        assert_eq!(subject.d(), self.d, "covariate dimension must match");
        let event_time = self.grid.point(subject.event_index());
        let n_m = self.pi_times.len();
        let mut preds = Vec::with_capacity(n_m);
        let mut row = Vec::new();
        for m in 0..n_m {
            let t_eff = self.pi_times[self.effective_time[m]];
            row.clear();
            row.push(t_eff);
            if !self.at_risk_only {
                let at_risk = event_time >= self.pi_times[m];
                row.push(if at_risk { T::one() } else { T::zero() });
            }
            // Covariates are time-constant in this learner's setting; read
            // the first grid row, which predicts correctly at every time.
            for r in 0..self.d {
                row.push(subject.z_at(0, r));
            }
            preds.push(self.predictor.predict_row(&row));
        }
        (0..self.grid.q())
            .map(|i| preds[self.floor_map[i]])
            .collect()
    }

    fn describe(&self) -> String {
        self.description.clone()
    }
}

/// Fits the pooled grid regression of the exposure.
///
/// Rows are (subject, coarse-grid time) pairs with features
/// `(t, covariates)`; with `at_risk_only` (the default used by the
/// estimators) only at-risk pairs enter and the fit directly targets the
/// at-risk projection. Without it, the at-risk indicator joins the features
/// and all pairs enter. A coarse-grid time whose at-risk training set is
/// empty inherits the previous time's fit.
pub fn fit_pi_grid_regression<T: Real>(
    sample: &SurvivalSample<T>,
    train_idx: &[usize],
    regressor: &dyn HistoricalRegressor<T>,
    pi_grid_size: usize,
    at_risk_only: bool,
) -> Result<GridRegressionPi<T>> {
    if train_idx.is_empty() {
        return Err(Error::Config("projection fit needs training subjects".into()));
    }
    if pi_grid_size < 2 {
        return Err(Error::Config(format!(
            "projection grid needs at least 2 points, got {pi_grid_size}"
        )));
    }
    let d = sample.d();
    let grid = sample.grid().clone();
    let n_m = pi_grid_size;
    let pi_times: Vec<T> = (0..n_m)
        .map(|k| {
            T::from_usize(k).expect("grid index fits scalar")
                / T::from_usize(n_m - 1).expect("grid size fits scalar")
        })
        .collect();
    let n_cols = if at_risk_only { 1 + d } else { 2 + d };
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut at_risk_count = vec![0usize; n_m];
    for &j in train_idx {
        let s = &sample.subjects()[j];
        let event_time = grid.point(s.event_index());
        for (m, &tm) in pi_times.iter().enumerate() {
            let at_risk = event_time >= tm;
            if at_risk {
                at_risk_count[m] += 1;
            }
            if at_risk_only && !at_risk {
                continue;
            }
            rows.push(tm);
            if !at_risk_only {
                rows.push(if at_risk { T::one() } else { T::zero() });
            }
            for r in 0..d {
                rows.push(s.z_at(0, r));
            }
            y.push(s.x()[0]);
        }
    }
    let n_rows = y.len();
    let predictor = regressor.fit(&rows, n_rows, n_cols, &y)?;

    // Coarse-grid times with an empty at-risk training set inherit the
    // previous time's fit (relevant in the at-risk-only mode).
    let mut effective_time = Vec::with_capacity(n_m);
    let mut last_valid = 0usize;
    for (m, &cnt) in at_risk_count.iter().enumerate() {
        if cnt > 0 || !at_risk_only {
            last_valid = m;
        }
        effective_time.push(last_valid);
    }

    let floor_map: Vec<usize> = (0..grid.q())
        .map(|i| {
            let t = grid.point(i);
            // Largest coarse-grid point <= t; both grids start at 0.
            pi_times.partition_point(|&tm| tm <= t).saturating_sub(1)
        })
        .collect();

    let description = format!(
        "grid regression on {} coarse times ({}, {})",
        n_m,
        regressor.describe(),
        if at_risk_only {
            "at-risk rows"
        } else {
            "all rows with at-risk feature"
        }
    );
    Ok(GridRegressionPi {
        grid,
        d,
        pi_times,
        effective_time,
        floor_map,
        at_risk_only,
        predictor,
        description,
    })
}

// ---------------------------------------------------------------------------
// Oracles.
// ---------------------------------------------------------------------------

/// Predictable projection of a binary exposure under a multiplicative
/// hazard `(X theta_t + 1) phi_t(Z)`: with baseline probability `pi0` and
/// cumulative interaction `i_t = int_0^t theta_s phi_s(Z) ds`,
///
/// `pi_t = pi0 / (pi0 + (1 - pi0) e^{i_t})`.
pub fn oracle_pi_logistic<T: Real>(pi0: T, i_t: T) -> Result<T> {
    if !(pi0 > T::zero() && pi0 < T::one()) {
        return Err(Error::Domain(format!(
            "baseline probability must lie strictly inside (0, 1), got {pi0}"
        )));
    }
    Ok(pi0 / (pi0 + (T::one() - pi0) * i_t.exp()))
}

/// Exact projection for the Cox design: the kernel integral of the
/// covariate history (the exposure noise has mean zero and is independent
/// of everything in the history).
pub struct OracleCoxPi<T> {
    grid: TimeGrid<T>,
    kernel_x: HistKernel,
}

impl<T: Real> PiModel<T> for OracleCoxPi<T> {
    fn pi_path(&self, subject: &SubjectPath<T>) -> Vec<T> {
        assert_eq!(subject.d(), 1, "the Cox design carries one covariate");
        let q = self.grid.q();
        let z: Vec<T> = (0..q).map(|i| subject.z_at(i, 0)).collect();
        let zero = vec![T::zero(); q];
        historical_linear(&z, self.kernel_x, &zero, &self.grid)
    }

    fn describe(&self) -> String {
        format!("oracle kernel projection ({})", self.kernel_x.name())
    }
}

/// Oracle hazard for the Cox design under local independence: the baseline
/// selection term `log E[e^{W_t} | T >= t]` is estimated once by
/// large-sample Monte Carlo; everything else is exact.
pub struct OracleCoxHazard<T> {
    grid: TimeGrid<T>,
    kernel_y: HistKernel,
    beta1: T,
    beta2: T,
    log_selection: Vec<T>,
}

impl<T: Real> HazardModel<T> for OracleCoxHazard<T> {
    fn hazard_path(&self, subject: &SubjectPath<T>) -> Vec<T> {
        assert_eq!(subject.d(), 1, "the Cox design carries one covariate");
        let q = self.grid.q();
        let z: Vec<T> = (0..q).map(|i| subject.z_at(i, 0)).collect();
        let zero = vec![T::zero(); q];
        let hist = historical_linear(&z, self.kernel_y, &zero, &self.grid);
        (0..q)
            .map(|i| {
                let t = self.grid.point(i);
                self.beta1
                    * t
                    * t
                    * (self.beta2 * z[i] + hist[i] + self.log_selection[i]).exp()
            })
            .collect()
    }

    fn describe(&self) -> String {
        "oracle hazard (Monte-Carlo baseline selection term)".into()
    }
}

/// Builds oracle nuisances for the Cox design under local independence
/// (`rho0 = 0`). `mc_size` controls the Monte-Carlo sample behind the
/// baseline selection term; 200000 gives sub-permille accuracy.
pub fn oracle_nuisances_cox<T: Real>(
    config: &CoxSimConfig,
    mc_size: usize,
) -> Result<NuisanceFit<T>> {
    config.validate()?;
    if config.rho0 != 0.0 {
        return Err(Error::Config(
            "the oracle hazard is implemented for the locally independent case rho0 = 0".into(),
        ));
    }
    if mc_size == 0 {
        return Err(Error::Config("Monte-Carlo size must be positive".into()));
    }
    let grid: TimeGrid<T> = TimeGrid::new(config.q)?;
    let q = config.q;
    let seed = derive_seed(config.seed, 0x0AC1E);
    let beta1 = T::of(config.beta1);
    let beta2 = T::of(config.beta2);
    let mut num = vec![0.0f64; q];
    let mut den = vec![0.0f64; q];
    let zero = vec![T::zero(); q];
    for j in 0..mc_size {
        let mut rng = substream(seed, subject_stream(0, j as u64));
        let z = sample_z_process::<T>(&grid, &mut rng);
        let _v = random_walk::<T>(&grid, &mut rng);
        let w = random_walk::<T>(&grid, &mut rng);
        let hist_y = historical_linear(&z, config.kernel_y, &zero, &grid);
        let mut cumhaz = Vec::with_capacity(q);
        let mut acc = T::zero();
        cumhaz.push(acc);
        for i in 0..(q - 1) {
            let t = grid.point(i);
            acc += beta1 * t * t * (beta2 * z[i] + hist_y[i] + w[i]).exp() * grid.step();
            cumhaz.push(acc);
        }
        let (event_index, _delta) = sample_survival_inverse_hazard(&cumhaz, &mut rng)?;
        for i in 0..=event_index {
            num[i] += w[i].to_f64_lossy().exp();
            den[i] += 1.0;
        }
    }
    let mut log_selection = Vec::with_capacity(q);
    let mut last = 0.0f64;
    for i in 0..q {
        if den[i] > 0.0 {
            last = (num[i] / den[i]).ln();
        }
        log_selection.push(T::of(last));
    }
    let pi = Arc::new(OracleCoxPi {
        grid: grid.clone(),
        kernel_x: config.kernel_x,
    });
    let hazard = Arc::new(OracleCoxHazard {
        grid,
        kernel_y: config.kernel_y,
        beta1,
        beta2,
        log_selection,
    });
    Ok(NuisanceFit::new(pi, hazard, Vec::new()))
}

/// Survival-tilted mean of a standard uniform: for tilt `u >= 0`,
/// `g(u) = E[U e^{-uU}] / E[e^{-uU}]`, the conditional mean shift of the
/// uniform exposure component among subjects still at risk.
pub fn uniform_tilt_mean<T: Real>(u: T) -> T {
    if u < T::of(1e-3) {
        // Series: 1/2 - u/12 + O(u^3).
        return T::of(0.5) - u / T::of(12.0);
    }
    let e = (-u).exp();
    (T::one() - e * (T::one() + u)) / (u * (T::one() - e))
}

/// Exact at-risk projection for the additive designs:
/// `pi_t(Z) = a(Z) + g(t^2)` with `a` the lower endpoint of the uniform
/// exposure and `g` the survival-tilted uniform mean.
pub struct OracleAcmPi<T> {
    grid: TimeGrid<T>,
    setting: AcmSetting,
}

impl<T: Real> OracleAcmPi<T> {
    fn lower_endpoint(&self, subject: &SubjectPath<T>) -> T {
        match self.setting {
            AcmSetting::Lin => subject.z_at(0, 0),
            AcmSetting::Par => phi(subject.z_at(0, 0)),
        }
    }
}

impl<T: Real> PiModel<T> for OracleAcmPi<T> {
    fn pi_path(&self, subject: &SubjectPath<T>) -> Vec<T> {
        let a = self.lower_endpoint(subject);
        self.grid
            .points()
            .iter()
            .map(|&t| a + uniform_tilt_mean(t * t))
            .collect()
    }

    fn describe(&self) -> String {
        "oracle additive-design projection (tilted uniform mean)".into()
    }
}

/// Exact observed-history hazard for the additive designs:
/// `h_t(Z) = 2t (1 + pi_t(Z) + f(Z))`.
pub struct OracleAcmHazard<T> {
    grid: TimeGrid<T>,
    setting: AcmSetting,
    beta: Vec<T>,
}

impl<T: Real> HazardModel<T> for OracleAcmHazard<T> {
    fn hazard_path(&self, subject: &SubjectPath<T>) -> Vec<T> {
        let a = match self.setting {
            AcmSetting::Lin => subject.z_at(0, 0),
            AcmSetting::Par => phi(subject.z_at(0, 0)),
        };
        let f = match self.setting {
            AcmSetting::Lin => {
                let mut acc = T::zero();
                for (r, &b) in self.beta.iter().enumerate() {
                    acc += b * subject.z_at(0, r);
                }
                acc
            }
            AcmSetting::Par => phi(subject.z_at(0, 0)),
        };
        self.grid
            .points()
            .iter()
            .map(|&t| {
                let pi_t = a + uniform_tilt_mean(t * t);
                T::of(2.0) * t * (T::one() + pi_t + f)
            })
            .collect()
    }

    fn describe(&self) -> String {
        "oracle additive-design hazard (projected exposure)".into()
    }
}

/// Builds oracle nuisances for an additive design. `beta` must be the
/// dataset's recorded weights for the linear setting and is ignored for
/// the bump setting.
pub fn oracle_nuisances_acm<T: Real>(
    setting: AcmSetting,
    beta: Option<&[f64]>,
    grid: &TimeGrid<T>,
) -> Result<NuisanceFit<T>> {
    let beta_t: Vec<T> = match setting {
        AcmSetting::Lin => {
            let b = beta.ok_or_else(|| {
                Error::Config("the linear additive oracle needs the dataset weights".into())
            })?;
            b.iter().map(|&x| T::of(x)).collect()
        }
        AcmSetting::Par => Vec::new(),
    };
    let pi = Arc::new(OracleAcmPi {
        grid: grid.clone(),
        setting,
    });
    let hazard = Arc::new(OracleAcmHazard {
        grid: grid.clone(),
        setting,
        beta: beta_t,
    });
    Ok(NuisanceFit::new(pi, hazard, Vec::new()))
}

/// The zero projection: leaves the exposure unresidualised. Plug-in
/// estimation composes this with a hazard model.
pub struct ZeroProjection;

impl<T: Real> PiModel<T> for ZeroProjection {
    fn pi_path(&self, subject: &SubjectPath<T>) -> Vec<T> {
        vec![T::zero(); subject.q()]
    }

    fn describe(&self) -> String {
        "zero projection (plug-in)".into()
    }
}
