//! Local covariance estimation and the associated test of conditional
//! local independence.
//!
//! The target is the path `gamma_t = E int_0^t G_s dM_s`, where `G` is the
//! exposure minus its predictable projection and `M` is the counting-
//! process martingale. Under conditional local independence the path is
//! identically zero; the test statistic compares the estimated path
//! against the supremum of reflected Brownian motion.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{FoldPlan, SurvivalSample};
use crate::integrate::stieltjes_integrate;
use crate::nuisance::{HazardModel, NuisanceFit, ZeroProjection};
use crate::scalar::Real;
use crate::stats::normal_two_sided_pvalue;
use crate::supbm::SupBmDist;

/// One evaluated split: the estimated path, its variance path, and the
/// subjects that entered the empirical means.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPiece<T> {
    /// Estimated local-covariance path over the grid; entry 0 is zero.
    pub gamma_hat: Vec<T>,
    /// Empirical variance path: mean over subjects of the squared residual
    /// summed at event times up to each grid point.
    pub var_hat: Vec<T>,
    /// Subjects the empirical means run over.
    pub eval_idx: Vec<usize>,
    /// Description of the nuisances used.
    pub nuisance_meta: String,
}

/// A fitted local-covariance estimate, possibly cross-fitted.
#[derive(Debug, Clone)]
pub struct LcmFit<T> {
    /// Aggregated path: the exact arithmetic mean of the fold paths.
    pub gamma_hat: Vec<T>,
    /// Aggregated variance path: the mean of the fold variance paths.
    pub var_hat: Vec<T>,
    /// Total number of subjects entering the empirical means.
    pub n_eff: usize,
    /// Per-fold estimates, in fold order.
    pub fold_pieces: Vec<FoldPiece<T>>,
    /// Number of folds (1 means the no-splitting mode).
    pub k: usize,
    /// True when the fit deliberately trained and evaluated on the same
    /// subjects; such fits reproduce the biased no-splitting columns.
    pub no_split: bool,
    /// Supremum test statistic, when the variance at the endpoint is
    /// positive.
    pub t_stat: Option<T>,
    /// Asymptotic p-value of the supremum statistic.
    pub p_value: Option<T>,
}

/// Which test statistic to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LctStatistic {
    /// Supremum of the standardised absolute path over the grid; the
    /// reference distribution is the supremum of reflected Brownian
    /// motion on the unit interval.
    Sup,
    /// The standardised endpoint value with a two-sided normal reference.
    Endpoint,
}

impl LctStatistic {
    /// Canonical name for CLI and metadata use.
    pub fn name(&self) -> &'static str {
        match self {
            LctStatistic::Sup => "sup",
            LctStatistic::Endpoint => "endpoint",
        }
    }

    /// Parses a CLI-facing statistic name.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "sup" => Ok(LctStatistic::Sup),
            "endpoint" => Ok(LctStatistic::Endpoint),
            other => Err(Error::Usage(format!(
                "unknown statistic '{other}'; expected sup or endpoint"
            ))),
        }
    }
}

/// Outcome of the local covariance test.
#[derive(Debug, Clone)]
pub struct LctResult<T> {
    /// The underlying (cross-)fit.
    pub fit: LcmFit<T>,
    /// The computed statistic value.
    pub t_stat: T,
    /// Its asymptotic p-value.
    pub p_value: T,
    /// The significance level the decision used.
    pub alpha: f64,
    /// Which statistic was computed.
    pub statistic: LctStatistic,
    /// True when `p_value < alpha`.
    pub reject: bool,
}

/// Builds a fold piece from explicit residual and hazard paths. This is
/// the shared computational core: the local-covariance estimators call it
/// with `X - pi_hat`, the normalised variants with `(X - pi_hat)/rho_hat`.
///
/// The path value at grid index `i` accumulates, over intervals labelled
/// `1..=i`, the residual at each event minus the at-risk compensator
/// `residual * hazard * step`. The variance path accumulates squared
/// residuals at event indices (including an event recorded at index 0,
/// which the integral itself cannot see).
pub fn fold_piece_from_residuals<T: Real>(
    sample: &SurvivalSample<T>,
    eval_idx: &[usize],
    residual_paths: &[Vec<T>],
    hazard_paths: &[Vec<T>],
    nuisance_meta: String,
) -> Result<FoldPiece<T>> {
    if eval_idx.is_empty() {
        return Err(Error::Config("evaluation set must be nonempty".into()));
    }
    if residual_paths.len() != eval_idx.len() || hazard_paths.len() != eval_idx.len() {
        return Err(Error::Dimension(format!(
            "paths per subject: got {} residual and {} hazard paths for {} subjects",
            residual_paths.len(),
            hazard_paths.len(),
            eval_idx.len()
        )));
    }
    let q = sample.grid().q();
    let n = sample.subjects().len();
    let m_t = T::from_usize(eval_idx.len()).expect("subject count fits scalar");
    let mut gamma_sum = vec![T::zero(); q];
    let mut var_sum = vec![T::zero(); q];
    for (pos, &j) in eval_idx.iter().enumerate() {
        if j >= n {
            return Err(Error::Config(format!(
                "evaluation index {j} out of range for {n} subjects"
            )));
        }
        let subject = &sample.subjects()[j];
        let g = &residual_paths[pos];
        let h = &hazard_paths[pos];
        let integral = stieltjes_integrate(g, subject, h, sample.grid())?;
        for i in 0..q {
            gamma_sum[i] += integral[i];
        }
        if subject.delta() {
            let e = subject.event_index();
            let ge2 = g[e] * g[e];
            for i in e..q {
                var_sum[i] += ge2;
            }
        }
    }
    let gamma_hat: Vec<T> = gamma_sum.into_iter().map(|v| v / m_t).collect();
    let var_hat: Vec<T> = var_sum.into_iter().map(|v| v / m_t).collect();
    Ok(FoldPiece {
        gamma_hat,
        var_hat,
        eval_idx: eval_idx.to_vec(),
        nuisance_meta,
    })
}

/// Evaluates fitted nuisances on an evaluation set: residuals are the
/// exposure minus the projection.
fn evaluate_nuisances<T: Real>(
    sample: &SurvivalSample<T>,
    eval_idx: &[usize],
    nuisance: &NuisanceFit<T>,
) -> Result<FoldPiece<T>> {
    let q = sample.grid().q();
    let n = sample.subjects().len();
    let mut residuals = Vec::with_capacity(eval_idx.len());
    let mut hazards = Vec::with_capacity(eval_idx.len());
    for &j in eval_idx {
        if j >= n {
            return Err(Error::Config(format!(
                "evaluation index {j} out of range for {n} subjects"
            )));
        }
        let subject = &sample.subjects()[j];
        let pi = nuisance.pi_path(subject);
        let h = nuisance.hazard_path(subject);
        if pi.len() != q || h.len() != q {
            return Err(Error::Dimension(format!(
                "nuisance paths must have grid length {q}, got {} and {}",
                pi.len(),
                h.len()
            )));
        }
        let g: Vec<T> = (0..q).map(|i| subject.x()[i] - pi[i]).collect();
        residuals.push(g);
        hazards.push(h);
    }
    fold_piece_from_residuals(
        sample,
        eval_idx,
        &residuals,
        &hazards,
        nuisance.metadata().to_string(),
    )
}

/// Single-split estimator: evaluates nuisances trained on `train_idx`
/// over the disjoint `eval_idx`.
///
/// Train/eval overlap is a usage error unless `allow_overlap` explicitly
/// requests the degenerate no-splitting plan. The check also covers the
/// nuisances' own training provenance.
pub fn lcm_sample_split<T: Real>(
    sample: &SurvivalSample<T>,
    train_idx: &[usize],
    eval_idx: &[usize],
    nuisance: &NuisanceFit<T>,
    allow_overlap: bool,
) -> Result<FoldPiece<T>> {
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
    evaluate_nuisances(sample, eval_idx, nuisance)
}

/// Plug-in estimator: uses the exposure directly, without residualising.
/// Equivalent to a split evaluation with the zero projection.
pub fn lcm_plugin<T: Real>(
    sample: &SurvivalSample<T>,
    eval_idx: &[usize],
    hazard: Arc<dyn HazardModel<T>>,
) -> Result<FoldPiece<T>> {
    let nuisance = NuisanceFit::new(Arc::new(ZeroProjection), hazard, Vec::new());
    evaluate_nuisances(sample, eval_idx, &nuisance)
}

/// Empirical variance path from explicit residual paths: the mean over
/// subjects of squared residuals summed at event indices up to each grid
/// point. Non-decreasing, jumps only at events.
pub fn variance_estimate<T: Real>(
    sample: &SurvivalSample<T>,
    eval_idx: &[usize],
    residual_paths: &[Vec<T>],
) -> Result<Vec<T>> {
    if residual_paths.len() != eval_idx.len() {
        return Err(Error::Dimension(format!(
            "got {} residual paths for {} subjects",
            residual_paths.len(),
            eval_idx.len()
        )));
    }
    let q = sample.grid().q();
    let n = sample.subjects().len();
    let mut var_sum = vec![T::zero(); q];
    for (pos, &j) in eval_idx.iter().enumerate() {
        if j >= n {
            return Err(Error::Config(format!(
                "evaluation index {j} out of range for {n} subjects"
            )));
        }
        let subject = &sample.subjects()[j];
        let g = &residual_paths[pos];
        if g.len() != q {
            return Err(Error::Dimension(format!(
                "residual path must have grid length {q}, got {}",
                g.len()
            )));
        }
        if subject.delta() {
            let e = subject.event_index();
            let ge2 = g[e] * g[e];
            for i in e..q {
                var_sum[i] += ge2;
            }
        }
    }
    let m_t = T::from_usize(eval_idx.len().max(1)).expect("subject count fits scalar");
    Ok(var_sum.into_iter().map(|v| v / m_t).collect())
}

/// Cross-fitted estimator: balanced folds, nuisances trained on each
/// fold's complement, fold estimates averaged exactly.
///
/// `k = 1` is the deliberate no-splitting mode (train and evaluation both
/// cover the full sample); the result is flagged accordingly.
pub fn lcm_crossfit<T, F>(sample: &SurvivalSample<T>, k: usize, factory: F) -> Result<LcmFit<T>>
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

    let fold_pieces: Vec<FoldPiece<T>> = fold_sets
        .par_iter()
        .map(|(train, eval)| {
            let nuisance = factory(sample, train)?;
            lcm_sample_split(sample, train, eval, &nuisance, k == 1)
        })
        .collect::<Result<_>>()?;

    aggregate_fold_pieces(sample, fold_pieces, k == 1)
}

/// Averages fold pieces into the final fit and computes the supremum
/// statistic when the endpoint variance is positive. The reduction is a
/// plain in-order sum, so it is deterministic for a fixed fold order.
pub fn aggregate_fold_pieces<T: Real>(
    sample: &SurvivalSample<T>,
    fold_pieces: Vec<FoldPiece<T>>,
    no_split: bool,
) -> Result<LcmFit<T>> {
    if fold_pieces.is_empty() {
        return Err(Error::Plan("no fold pieces to aggregate".into()));
    }
    let q = sample.grid().q();
    let k = fold_pieces.len();
    let k_t = T::from_usize(k).expect("fold count fits scalar");
    let mut gamma_hat = vec![T::zero(); q];
    let mut var_hat = vec![T::zero(); q];
    for piece in &fold_pieces {
        if piece.gamma_hat.len() != q || piece.var_hat.len() != q {
            return Err(Error::Dimension(
                "fold piece paths must have grid length".into(),
            ));
        }
        for i in 0..q {
            gamma_hat[i] += piece.gamma_hat[i];
            var_hat[i] += piece.var_hat[i];
        }
    }
    for i in 0..q {
        gamma_hat[i] /= k_t;
        var_hat[i] /= k_t;
    }
    let n_eff = fold_pieces.iter().map(|p| p.eval_idx.len()).sum();
    let mut fit = LcmFit {
        gamma_hat,
        var_hat,
        n_eff,
        fold_pieces,
        k,
        no_split,
        t_stat: None,
        p_value: None,
    };
    let v1 = fit.var_hat[q - 1];
    if v1 > T::zero() {
        let t = sup_statistic(&fit);
        let p = SupBmDist::default().pvalue(t);
        fit.t_stat = Some(t);
        fit.p_value = Some(p);
    }
    Ok(fit)
}

fn sup_statistic<T: Real>(fit: &LcmFit<T>) -> T {
    let v1 = fit.var_hat[fit.var_hat.len() - 1];
    let sup = fit
        .gamma_hat
        .iter()
        .fold(T::zero(), |acc, g| acc.max(g.abs()));
    T::from_usize(fit.n_eff).expect("subject count fits scalar").sqrt() * sup / v1.sqrt()
}

fn endpoint_statistic<T: Real>(fit: &LcmFit<T>) -> T {
    let q = fit.gamma_hat.len();
    let v1 = fit.var_hat[q - 1];
    T::from_usize(fit.n_eff).expect("subject count fits scalar").sqrt() * fit.gamma_hat[q - 1]
        / v1.sqrt()
}

/// Computes the requested statistic and decision from an existing fit.
///
/// Fails with a degenerate-variance error when the endpoint variance is
/// not strictly positive (no events, or residuals identically zero).
pub fn lct_from_fit<T: Real>(
    fit: LcmFit<T>,
    alpha: f64,
    statistic: LctStatistic,
) -> Result<LctResult<T>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie strictly inside (0, 1), got {alpha}"
        )));
    }
    let q = fit.gamma_hat.len();
    let v1 = fit.var_hat[q - 1];
    if !(v1 > T::zero()) {
        return Err(Error::DegenerateVariance(format!(
            "variance at the terminal time is {v1}; the standardised statistic is undefined \
             (no events in the evaluation sets, or residuals identically zero)"
        )));
    }
    let (t_stat, p_value) = match statistic {
        LctStatistic::Sup => {
            let t = sup_statistic(&fit);
            (t, SupBmDist::default().pvalue(t))
        }
        LctStatistic::Endpoint => {
            let z = endpoint_statistic(&fit);
            (z, normal_two_sided_pvalue(z))
        }
    };
    let reject = p_value.to_f64_lossy() < alpha;
    Ok(LctResult {
        fit,
        t_stat,
        p_value,
        alpha,
        statistic,
        reject,
    })
}

/// The cross-fitted local covariance test: fits `k` folds with the given
/// nuisance factory and tests the zero-path hypothesis at level `alpha`.
pub fn lct_test<T, F>(
    sample: &SurvivalSample<T>,
    k: usize,
    factory: F,
    alpha: f64,
    statistic: LctStatistic,
) -> Result<LctResult<T>>
where
    T: Real,
    F: Fn(&SurvivalSample<T>, &[usize]) -> Result<NuisanceFit<T>> + Sync,
{
    let fit = lcm_crossfit(sample, k, factory)?;
    lct_from_fit(fit, alpha, statistic)
}
