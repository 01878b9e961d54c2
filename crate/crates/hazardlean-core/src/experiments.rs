//! Monte-Carlo study drivers and deterministic reproduction presets.
//!
//! A [`StudySpec`] names one of four study kinds, an engine configuration
//! (which data-generating settings to cross), a sample-size list, a
//! replication count and a nuisance choice. Running a study yields a
//! [`StudyResult`]: per-replicate records, a summary table recomputable from
//! those records, a failure log, and runtime metadata.
//!
//! Execution is embarrassingly parallel over replicates. Every replicate
//! draws its data from a seed derived from `(master seed, setting, n,
//! replicate)`, so records are byte-identical across runs and independent of
//! the thread count. A replicate that errors or produces a non-finite metric
//! goes to the failure log and never reaches the records or the summary;
//! more than 5% failures aborts the study. Replicates whose reported time
//! point is masked (normalisation clipped to invalidity) are dropped and
//! counted separately.
//!
//! [`reproduce`] pins preset specs for five standing figures at `desk`
//! (reduced replication) or `full` scale, runs them, writes the CSV
//! artifacts, and emits a byte-stable manifest with seeds and content
//! hashes. Measured wall times go to a separate runtime sidecar so the
//! manifest itself is deterministic.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acm::{aalen_additive_fit, acm_crossfit, acm_oracle, AcmOracle, ClipRule, OracleDesign};
use crate::acm::default_report_index;
use crate::error::{Error, Result};
use crate::grid::{SurvivalSample, TimeGrid};
use crate::io::{fnv1a64, fnv1a64_hex, to_json_string, write_json_file};
use crate::lcm::{lcm_crossfit, lcm_plugin, lct_from_fit, lct_test, LctStatistic};
use crate::nuisance::{
    fit_hazard_boosted, fit_hazard_pooled, fit_pi_grid_regression, fit_projection_ridge,
    oracle_nuisances_acm, oracle_nuisances_cox, BoostParams, BoostedRegressor, HazardBasis,
    HazardModel, NuisanceFit, OlsRegressor, HAZARD_PENALTY, PI_GRID_SIZE, PROJECTION_PENALTY,
};
use crate::rng::derive_seed;
use crate::scalar::Real;
use crate::simulate::{
    acm_design_weights, calibrate_beta1, simulate_acm_dataset, simulate_cox_dataset, AcmSetting,
    AcmSimConfig, CoxSimConfig, DatasetMeta, HistKernel,
};
use crate::stats::{ks_uniform, mean, sample_sd};

/// Default grid size for all studies.
pub const DEFAULT_Q: usize = 128;
/// Default significance level.
pub const DEFAULT_ALPHA: f64 = 0.05;
/// Default Monte-Carlo size behind the closed-form-plus-selection oracle
/// hazard used when a study requests oracle nuisances.
pub const DEFAULT_ORACLE_MC: usize = 200_000;
/// Failure fraction beyond which a study aborts instead of summarising.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

/// The four batch studies the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    /// Null-hypothesis p-value distributions across settings.
    H0Pvalues,
    /// Rejection rates under local alternatives.
    PowerCurve,
    /// Root-mean-square error of the normalised estimators at the report
    /// time against the design oracle.
    AcmRmse,
    /// Estimator-strategy comparison under the null: plug-in versus
    /// no-split versus cross-fitted endpoints and paths, plus the supremum
    /// and endpoint statistics computed from one cross-fit.
    EndpointVsSup,
}

impl StudyKind {
    /// Canonical kebab-case name.
    pub fn name(&self) -> &'static str {
        match self {
            StudyKind::H0Pvalues => "h0-pvalues",
            StudyKind::PowerCurve => "power-curve",
            StudyKind::AcmRmse => "acm-rmse",
            StudyKind::EndpointVsSup => "endpoint-vs-sup",
        }
    }

    /// Parses a kebab-case name.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "h0-pvalues" => Ok(StudyKind::H0Pvalues),
            "power-curve" => Ok(StudyKind::PowerCurve),
            "acm-rmse" => Ok(StudyKind::AcmRmse),
            "endpoint-vs-sup" => Ok(StudyKind::EndpointVsSup),
            other => Err(Error::Usage(format!(
                "unknown study '{other}'; valid: h0-pvalues, power-curve, acm-rmse, \
                 endpoint-vs-sup"
            ))),
        }
    }
}

/// Which nuisance learners a study (or the CLI) plugs into the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuisanceChoice {
    /// Per-time ridge projection plus pooled log-linear hazard on the
    /// history basis. The hazard-family default.
    RidgePooled,
    /// Per-time ridge projection plus boosted-stump hazard. Exposes the
    /// overfitting channel that sample splitting is designed to remove.
    RidgeBoosted,
    /// Coarse-grid boosted-stump projection plus pooled log-linear hazard
    /// on the dictionary basis. The additive-design default.
    GridBoosted,
    /// Coarse-grid least-squares projection plus pooled log-linear hazard
    /// on the dictionary basis.
    GridLinear,
    /// Closed-form design nuisances (requires a known engine config).
    Oracle,
}

impl NuisanceChoice {
    /// Canonical kebab-case name.
    pub fn name(&self) -> &'static str {
        match self {
            NuisanceChoice::RidgePooled => "ridge-pooled",
            NuisanceChoice::RidgeBoosted => "ridge-boosted",
            NuisanceChoice::GridBoosted => "grid-boosted",
            NuisanceChoice::GridLinear => "grid-linear",
            NuisanceChoice::Oracle => "oracle",
        }
    }

    /// Parses a name; accepts `ridge+pooled` as an alias of `ridge-pooled`.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "ridge-pooled" | "ridge+pooled" => Ok(NuisanceChoice::RidgePooled),
            "ridge-boosted" | "ridge+boosted" => Ok(NuisanceChoice::RidgeBoosted),
            "grid-boosted" | "grid-gb" => Ok(NuisanceChoice::GridBoosted),
            "grid-linear" | "grid-lin" => Ok(NuisanceChoice::GridLinear),
            "oracle" => Ok(NuisanceChoice::Oracle),
            other => Err(Error::Usage(format!(
                "unknown nuisance choice '{other}'; valid: ridge-pooled, ridge-boosted, \
                 grid-boosted, grid-linear, oracle"
            ))),
        }
    }

    /// The data-driven factory behind this choice. The oracle choice has
    /// no learner; it needs a generating config (see
    /// [`DatasetSidecar::oracle_factory`]).
    pub fn learner_factory<T: Real>(&self) -> Result<PreparedFactory<T>> {
        match self {
            NuisanceChoice::RidgePooled => Ok(PreparedFactory::RidgePooled),
            NuisanceChoice::RidgeBoosted => Ok(PreparedFactory::RidgeBoosted {
                params: BoostParams::default(),
            }),
            NuisanceChoice::GridBoosted => Ok(PreparedFactory::GridBoosted),
            NuisanceChoice::GridLinear => Ok(PreparedFactory::GridLinear),
            NuisanceChoice::Oracle => Err(Error::Usage(
                "oracle nuisances need the dataset's generating config; pass the \
                 simulation sidecar as oracle:<sidecar.json>"
                    .into(),
            )),
        }
    }
}

/// The data-generating settings a study crosses with its sample-size list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "engine")]
pub enum EngineSettings {
    /// Hazard-family designs driven by historical kernels.
    Cox {
        /// Kernels; each drives both the exposure and the latent path.
        kernels: Vec<HistKernel>,
        /// Covariate effect signs (each must be -1 or +1).
        beta2_list: Vec<f64>,
        /// Local-alternative strengths. Must be `[0]` for the level and
        /// estimator-comparison studies.
        rho0_list: Vec<f64>,
    },
    /// Additive-hazard designs with a known effect path.
    Additive {
        /// Design families to include.
        settings: Vec<AcmSetting>,
        /// Covariate dimensions to include.
        d_list: Vec<usize>,
    },
}

/// Fault-injection target: poisons the named replicate's first metric with
/// a NaN after computation, to exercise failure isolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoisonTarget {
    /// Setting label as it appears in records.
    pub setting: String,
    /// Sample size of the target cell.
    pub n: usize,
    /// Replicate index within the cell.
    pub replicate: usize,
}

/// Complete description of a batch study.
///
/// Kolmogorov-Smirnov summaries are only meaningful from about 50
/// replications upward; acceptance runs use at least that many. Smaller
/// counts are allowed for smoke tests and still produce the full schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    /// Which study to run.
    pub study: StudyKind,
    /// Data-generating settings to cross.
    pub engine: EngineSettings,
    /// Sample sizes to cross with the settings.
    pub n_list: Vec<usize>,
    /// Replications per (setting, n) cell.
    pub replications: usize,
    /// Fold count for cross-fitting.
    pub k: usize,
    /// Nuisance learners.
    pub nuisance: NuisanceChoice,
    /// Significance level for rejection decisions.
    pub alpha: f64,
    /// Grid size.
    pub q: usize,
    /// Master seed; every replicate seed is derived from it.
    pub seed: u64,
    /// Normalisation clipping rule (additive study only).
    pub clip: ClipRule,
    /// Monte-Carlo size for the oracle hazard's selection term.
    pub oracle_mc: usize,
    /// Overrides the boosted-hazard capacity (rounds, learning rate) for
    /// the ridge-boosted choice; `None` keeps the library default.
    #[serde(default)]
    pub boost: Option<BoostParams>,
    /// Output directory for the artifact writers.
    pub out_dir: Option<PathBuf>,
    /// Optional fault injection for testing failure isolation.
    pub poison: Option<PoisonTarget>,
}

impl StudySpec {
    /// Builds a spec with default level, grid, folds and clipping: `K = 5`
    /// for the hazard-family studies and `K = 4` for the additive study.
    pub fn new(
        study: StudyKind,
        engine: EngineSettings,
        n_list: Vec<usize>,
        replications: usize,
        seed: u64,
    ) -> Self {
        let k = match study {
            StudyKind::AcmRmse => 4,
            _ => 5,
        };
        Self {
            study,
            engine,
            n_list,
            replications,
            k,
            nuisance: match study {
                StudyKind::AcmRmse => NuisanceChoice::GridBoosted,
                _ => NuisanceChoice::RidgePooled,
            },
            alpha: DEFAULT_ALPHA,
            q: DEFAULT_Q,
            seed,
            clip: ClipRule::default(),
            oracle_mc: DEFAULT_ORACLE_MC,
            boost: None,
            out_dir: None,
            poison: None,
        }
    }

    /// Checks study/engine compatibility and field ranges.
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::Config("n-list must be nonempty".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("fold count must be at least 1".into()));
        }
        if let Some(&n) = self.n_list.iter().find(|&&n| n < self.k) {
            return Err(Error::Config(format!(
                "sample size {n} is smaller than the fold count {}",
                self.k
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie strictly inside (0, 1), got {}",
                self.alpha
            )));
        }
        if self.q < 2 {
            return Err(Error::Config("grid needs at least 2 points".into()));
        }
        match (&self.study, &self.engine) {
            (StudyKind::AcmRmse, EngineSettings::Additive { settings, d_list }) => {
                if settings.is_empty() || d_list.is_empty() {
                    return Err(Error::Config(
                        "the additive study needs at least one setting and one dimension".into(),
                    ));
                }
                Ok(())
            }
            (StudyKind::AcmRmse, _) => Err(Error::Config(
                "the acm-rmse study needs additive engine settings".into(),
            )),
            (
                _,
                EngineSettings::Cox {
                    kernels,
                    beta2_list,
                    rho0_list,
                },
            ) => {
                if kernels.is_empty() || beta2_list.is_empty() || rho0_list.is_empty() {
                    return Err(Error::Config(
                        "the hazard-family studies need at least one kernel, one beta2 and \
                         one rho0"
                            .into(),
                    ));
                }
                let h0_only = matches!(
                    self.study,
                    StudyKind::H0Pvalues | StudyKind::EndpointVsSup
                );
                if h0_only && rho0_list.iter().any(|&r| r != 0.0) {
                    return Err(Error::Config(format!(
                        "the {} study simulates under local independence; rho0 must be 0",
                        self.study.name()
                    )));
                }
                if self.nuisance == NuisanceChoice::Oracle
                    && rho0_list.iter().any(|&r| r != 0.0)
                {
                    return Err(Error::Config(
                        "oracle nuisances cover the locally independent case only (rho0 = 0)"
                            .into(),
                    ));
                }
                Ok(())
            }
            (_, EngineSettings::Additive { .. }) => Err(Error::Config(format!(
                "the {} study needs hazard-family engine settings",
                self.study.name()
            ))),
        }
    }
}

/// One completed replicate: its cell, its derived seed, and an ordered list
/// of named metric values (all finite).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    /// Setting label (engine parameters, without `n`).
    pub setting: String,
    /// Sample size.
    pub n: usize,
    /// Replicate index within the cell.
    pub replicate: usize,
    /// Seed the replicate's dataset was drawn from.
    pub seed: u64,
    /// Named metric values in a fixed per-study order.
    pub metrics: Vec<(String, f64)>,
}

impl ReplicateRecord {
    /// Looks up a metric by name.
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|(m, _)| m == name)
            .map(|&(_, v)| v)
    }
}

/// A replicate that failed or was dropped, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    /// Setting label.
    pub setting: String,
    /// Sample size.
    pub n: usize,
    /// Replicate index within the cell.
    pub replicate: usize,
    /// Seed the replicate's dataset was drawn from.
    pub seed: u64,
    /// Error or drop reason.
    pub message: String,
}

/// One summary value for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    /// Setting label.
    pub setting: String,
    /// Sample size.
    pub n: usize,
    /// Summary metric name.
    pub metric: String,
    /// Summary value.
    pub value: f64,
}

/// Wall-clock and completion counts for a study run. Excluded from the
/// deterministic manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeMeta {
    /// Total wall time in seconds.
    pub wall_seconds: f64,
    /// Scheduled replicates.
    pub total: usize,
    /// Replicates that produced a record.
    pub completed: usize,
    /// Replicates in the failure log.
    pub failed: usize,
    /// Replicates dropped because the report time was masked.
    pub dropped: usize,
    /// Worker threads available to the run.
    pub threads: usize,
}

/// Output of a batch study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    /// Which study produced this.
    pub study: StudyKind,
    /// Per-replicate records in deterministic cell-major order.
    pub records: Vec<ReplicateRecord>,
    /// Failed replicates (errors and injected non-finite metrics).
    pub failures: Vec<FailureRecord>,
    /// Dropped replicates (masked report time).
    pub dropped: Vec<FailureRecord>,
    /// Summary table; exactly [`compute_summary`] of the records.
    pub summary: Vec<SummaryRow>,
    /// Wall time and counts.
    pub runtime: RuntimeMeta,
}

/// A point of the per-cell empirical distribution of p-values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfRow {
    /// Setting label.
    pub setting: String,
    /// Sample size.
    pub n: usize,
    /// Sorted p-value.
    pub p: f64,
    /// Empirical CDF at that p-value, `rank / m`.
    pub ecdf: f64,
}

impl StudyResult {
    /// Per-cell empirical distribution of the `p_value` metric, sorted
    /// ascending within each cell.
    pub fn pvalue_ecdf(&self) -> Vec<EcdfRow> {
        let mut rows = Vec::new();
        for (key, cell) in group_by_cell(&self.records) {
            let mut ps: Vec<f64> = cell
                .iter()
                .filter_map(|r| r.metric("p_value"))
                .collect();
            if ps.is_empty() {
                continue;
            }
            ps.sort_by(|a, b| a.partial_cmp(b).expect("finite p-values"));
            let m = ps.len() as f64;
            for (i, p) in ps.into_iter().enumerate() {
                rows.push(EcdfRow {
                    setting: key.0.clone(),
                    n: key.1,
                    p,
                    ecdf: (i + 1) as f64 / m,
                });
            }
        }
        rows
    }
}

/// Groups records by (setting, n), preserving first-appearance order.
fn group_by_cell(records: &[ReplicateRecord]) -> Vec<((String, usize), Vec<&ReplicateRecord>)> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    let mut groups: Vec<Vec<&ReplicateRecord>> = Vec::new();
    for r in records {
        let key = (r.setting.clone(), r.n);
        match keys.iter().position(|k| *k == key) {
            Some(i) => groups[i].push(r),
            None => {
                keys.push(key);
                groups.push(vec![r]);
            }
        }
    }
    keys.into_iter().zip(groups).collect()
}

fn metric_column(cell: &[&ReplicateRecord], name: &str) -> Vec<f64> {
    cell.iter().filter_map(|r| r.metric(name)).collect()
}

fn push_row(rows: &mut Vec<SummaryRow>, key: &(String, usize), metric: &str, value: f64) {
    rows.push(SummaryRow {
        setting: key.0.clone(),
        n: key.1,
        metric: metric.to_string(),
        value,
    });
}

/// Recomputes the summary table from records alone. The stored summary of
/// a [`StudyResult`] equals this exactly; cells without records contribute
/// no rows.
pub fn compute_summary(study: StudyKind, records: &[ReplicateRecord]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for (key, cell) in group_by_cell(records) {
        match study {
            StudyKind::H0Pvalues => {
                let ps = metric_column(&cell, "p_value");
                let rejects = metric_column(&cell, "reject");
                push_row(&mut rows, &key, "rejection_rate", mean(&rejects));
                push_row(&mut rows, &key, "ks_uniform", ks_uniform(&ps));
                push_row(&mut rows, &key, "mean_p", mean(&ps));
                push_row(&mut rows, &key, "n_records", cell.len() as f64);
            }
            StudyKind::PowerCurve => {
                let rejects = metric_column(&cell, "reject");
                push_row(&mut rows, &key, "rejection_rate", mean(&rejects));
                push_row(&mut rows, &key, "n_records", cell.len() as f64);
            }
            StudyKind::EndpointVsSup => {
                for (suffix, reject_name, p_name) in [
                    ("sup", "reject_sup", "p_sup"),
                    ("endpoint", "reject_endpoint", "p_endpoint"),
                ] {
                    let rejects = metric_column(&cell, reject_name);
                    let ps = metric_column(&cell, p_name);
                    push_row(
                        &mut rows,
                        &key,
                        &format!("rejection_rate_{suffix}"),
                        mean(&rejects),
                    );
                    push_row(&mut rows, &key, &format!("ks_uniform_{suffix}"), ks_uniform(&ps));
                }
                for est in ["plugin", "nosplit", "xlcm"] {
                    let vals = metric_column(&cell, &format!("gamma1_{est}"));
                    push_row(&mut rows, &key, &format!("mean_gamma1_{est}"), mean(&vals));
                    push_row(&mut rows, &key, &format!("sd_gamma1_{est}"), sample_sd(&vals));
                }
                push_row(&mut rows, &key, "n_records", cell.len() as f64);
            }
            StudyKind::AcmRmse => {
                let oracle = metric_column(&cell, "oracle");
                for est in ["xacm", "nacm", "aalen"] {
                    let vals = metric_column(&cell, est);
                    let mse = vals
                        .iter()
                        .zip(oracle.iter())
                        .map(|(v, o)| (v - o) * (v - o))
                        .sum::<f64>()
                        / vals.len().max(1) as f64;
                    let rmse = mse.sqrt();
                    push_row(&mut rows, &key, &format!("rmse_{est}"), rmse);
                    push_row(
                        &mut rows,
                        &key,
                        &format!("sqrt_n_rmse_{est}"),
                        (key.1 as f64).sqrt() * rmse,
                    );
                }
                push_row(&mut rows, &key, "n_records", cell.len() as f64);
            }
        }
    }
    rows
}

// ---------------------------------------------------------------------------
// Nuisance factories
// ---------------------------------------------------------------------------

/// A nuisance strategy prepared for one study cell. Data-independent
/// (oracle) fits are built once and shared; learners fit per call.
pub enum PreparedFactory<T: Real> {
    /// Ridge projection + pooled log-linear hazard (history basis).
    RidgePooled,
    /// Ridge projection + boosted-stump hazard (history basis).
    RidgeBoosted {
        /// Booster capacity.
        params: BoostParams,
    },
    /// Coarse-grid boosted projection + pooled log-linear hazard
    /// (dictionary basis).
    GridBoosted,
    /// Coarse-grid least-squares projection + pooled log-linear hazard
    /// (dictionary basis).
    GridLinear,
    /// A fixed, data-independent fit (closed-form design nuisances).
    Prebuilt(Arc<NuisanceFit<T>>),
    /// Closed-form additive-design nuisances, rebuilt per dataset from the
    /// recorded design weights.
    AdditiveOracle {
        /// Design family.
        setting: AcmSetting,
        /// Linear-design weights (empty for the bump design).
        weights: Vec<f64>,
    },
}

impl<T: Real> PreparedFactory<T> {
    /// Fits (or returns) the nuisances for one training index set.
    pub fn fit(&self, sample: &SurvivalSample<T>, train: &[usize]) -> Result<NuisanceFit<T>> {
        match self {
            PreparedFactory::RidgePooled => {
                let pi = fit_projection_ridge(sample, train, PROJECTION_PENALTY)?;
                let hz = fit_hazard_pooled(sample, train, HazardBasis::Historical, HAZARD_PENALTY)?;
                Ok(NuisanceFit::new(
                    Arc::new(pi),
                    Arc::new(hz),
                    train.to_vec(),
                ))
            }
            PreparedFactory::RidgeBoosted { params } => {
                let pi = fit_projection_ridge(sample, train, PROJECTION_PENALTY)?;
                let hz = fit_hazard_boosted(sample, train, HazardBasis::Historical, *params)?;
                Ok(NuisanceFit::new(
                    Arc::new(pi),
                    Arc::new(hz),
                    train.to_vec(),
                ))
            }
            PreparedFactory::GridBoosted => {
                let pi = fit_pi_grid_regression(
                    sample,
                    train,
                    &BoostedRegressor::default(),
                    PI_GRID_SIZE,
                    true,
                )?;
                let hz = fit_hazard_pooled(sample, train, HazardBasis::Dictionary, HAZARD_PENALTY)?;
                Ok(NuisanceFit::new(
                    Arc::new(pi),
                    Arc::new(hz),
                    train.to_vec(),
                ))
            }
            PreparedFactory::GridLinear => {
                let pi =
                    fit_pi_grid_regression(sample, train, &OlsRegressor, PI_GRID_SIZE, true)?;
                let hz = fit_hazard_pooled(sample, train, HazardBasis::Dictionary, HAZARD_PENALTY)?;
                Ok(NuisanceFit::new(
                    Arc::new(pi),
                    Arc::new(hz),
                    train.to_vec(),
                ))
            }
            PreparedFactory::Prebuilt(fit) => Ok(NuisanceFit::new(
                fit.pi_model().clone(),
                fit.hazard_model().clone(),
                Vec::new(),
            )),
            PreparedFactory::AdditiveOracle { setting, weights } => {
                let beta = if weights.is_empty() {
                    None
                } else {
                    Some(weights.as_slice())
                };
                oracle_nuisances_acm(*setting, beta, sample.grid())
            }
        }
    }

    /// Fits only the hazard side (for the plug-in estimator).
    pub fn fit_hazard_only(
        &self,
        sample: &SurvivalSample<T>,
        train: &[usize],
    ) -> Result<Arc<dyn HazardModel<T>>> {
        match self {
            PreparedFactory::RidgePooled => Ok(Arc::new(fit_hazard_pooled(
                sample,
                train,
                HazardBasis::Historical,
                HAZARD_PENALTY,
            )?)),
            PreparedFactory::RidgeBoosted { params } => Ok(Arc::new(fit_hazard_boosted(
                sample,
                train,
                HazardBasis::Historical,
                *params,
            )?)),
            PreparedFactory::GridBoosted | PreparedFactory::GridLinear => {
                Ok(Arc::new(fit_hazard_pooled(
                    sample,
                    train,
                    HazardBasis::Dictionary,
                    HAZARD_PENALTY,
                )?))
            }
            PreparedFactory::Prebuilt(fit) => Ok(fit.hazard_model().clone()),
            PreparedFactory::AdditiveOracle { .. } => {
                Ok(self.fit(sample, train)?.hazard_model().clone())
            }
        }
    }
}

/// Prepares the factory for a hazard-family cell, building the oracle once
/// if requested.
fn prepare_cox_factory<T: Real>(
    choice: NuisanceChoice,
    template: &CoxSimConfig,
    oracle_mc: usize,
    boost: Option<BoostParams>,
) -> Result<PreparedFactory<T>> {
    Ok(match choice {
        NuisanceChoice::RidgePooled => PreparedFactory::RidgePooled,
        NuisanceChoice::RidgeBoosted => PreparedFactory::RidgeBoosted {
            params: boost.unwrap_or_default(),
        },
        NuisanceChoice::GridBoosted => PreparedFactory::GridBoosted,
        NuisanceChoice::GridLinear => PreparedFactory::GridLinear,
        NuisanceChoice::Oracle => {
            PreparedFactory::Prebuilt(Arc::new(oracle_nuisances_cox(template, oracle_mc)?))
        }
    })
}

// ---------------------------------------------------------------------------
// Replicate executor
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Task {
    setting_idx: usize,
    setting: String,
    n: usize,
    replicate: usize,
    seed: u64,
}

enum TaskValue {
    Metrics(Vec<(String, f64)>),
    Dropped(String),
}

/// Builds the deterministic task list for a list of cells.
fn build_tasks(cells: &[(String, u64)], n_by_cell: &[usize], replications: usize) -> Vec<Task> {
    let mut tasks = Vec::with_capacity(cells.len() * replications);
    for (idx, ((label, cell_seed), &n)) in cells.iter().zip(n_by_cell).enumerate() {
        for r in 0..replications {
            tasks.push(Task {
                setting_idx: idx,
                setting: label.clone(),
                n,
                replicate: r,
                seed: derive_seed(*cell_seed, r as u64),
            });
        }
    }
    tasks
}

/// Runs all tasks in parallel, isolates failures and drops, applies the
/// optional poison injection, and enforces the failure-fraction abort.
fn run_tasks<F>(
    tasks: &[Task],
    poison: Option<&PoisonTarget>,
    run_one: F,
) -> Result<(
    Vec<ReplicateRecord>,
    Vec<FailureRecord>,
    Vec<FailureRecord>,
)>
where
    F: Fn(&Task) -> Result<TaskValue> + Sync,
{
    let outcomes: Vec<Result<TaskValue>> = tasks.par_iter().map(&run_one).collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut dropped = Vec::new();
    for (task, outcome) in tasks.iter().zip(outcomes) {
        let fail = |message: String| FailureRecord {
            setting: task.setting.clone(),
            n: task.n,
            replicate: task.replicate,
            seed: task.seed,
            message,
        };
        match outcome {
            Ok(TaskValue::Metrics(mut metrics)) => {
                if let Some(p) = poison {
                    if p.setting == task.setting && p.n == task.n && p.replicate == task.replicate
                    {
                        match metrics.first_mut() {
                            Some((_, v)) => *v = f64::NAN,
                            None => metrics.push(("poisoned".to_string(), f64::NAN)),
                        }
                    }
                }
                match metrics.iter().find(|(_, v)| !v.is_finite()) {
                    Some((name, value)) => {
                        failures.push(fail(format!("non-finite metric {name} = {value}")));
                    }
                    None => records.push(ReplicateRecord {
                        setting: task.setting.clone(),
                        n: task.n,
                        replicate: task.replicate,
                        seed: task.seed,
                        metrics,
                    }),
                }
            }
            Ok(TaskValue::Dropped(message)) => dropped.push(fail(message)),
            Err(e) => failures.push(fail(e.to_string())),
        }
    }

    let total = tasks.len();
    if total > 0 && failures.len() as f64 > MAX_FAILURE_FRACTION * total as f64 {
        let preview = failures
            .iter()
            .take(3)
            .map(|f| f.message.as_str())
            .collect::<Vec<_>>()
            .join(" | ");
        return Err(Error::Numeric(format!(
            "{} of {} replicates failed (> {:.0}%); first failures: {preview}",
            failures.len(),
            total,
            MAX_FAILURE_FRACTION * 100.0
        )));
    }
    Ok((records, failures, dropped))
}

fn seal(
    spec: &StudySpec,
    records: Vec<ReplicateRecord>,
    failures: Vec<FailureRecord>,
    dropped: Vec<FailureRecord>,
    total: usize,
    started: Instant,
) -> StudyResult {
    let summary = compute_summary(spec.study, &records);
    StudyResult {
        study: spec.study,
        runtime: RuntimeMeta {
            wall_seconds: started.elapsed().as_secs_f64(),
            total,
            completed: records.len(),
            failed: failures.len(),
            dropped: dropped.len(),
            threads: rayon::current_num_threads(),
        },
        records,
        failures,
        dropped,
        summary,
    }
}

fn cell_seed_for(master: u64, label: &str, n: usize) -> u64 {
    derive_seed(derive_seed(master, fnv1a64(label.as_bytes())), n as u64)
}

// ---------------------------------------------------------------------------
// Hazard-family studies
// ---------------------------------------------------------------------------

struct CoxCell<T: Real> {
    template: CoxSimConfig,
    factory: PreparedFactory<T>,
}

/// Prepares the hazard-family cells: one per (kernel, beta2, rho0, n), with
/// the baseline scale calibrated once per cell and the oracle (if chosen)
/// built once per cell.
fn prepare_cox_cells<T: Real>(
    spec: &StudySpec,
    include_rho0: bool,
) -> Result<(Vec<(String, u64)>, Vec<usize>, Vec<CoxCell<T>>)> {
    let (kernels, beta2_list, rho0_list) = match &spec.engine {
        EngineSettings::Cox {
            kernels,
            beta2_list,
            rho0_list,
        } => (kernels, beta2_list, rho0_list),
        EngineSettings::Additive { .. } => {
            return Err(Error::Config(
                "hazard-family study needs hazard-family engine settings".into(),
            ))
        }
    };
    let mut labels = Vec::new();
    let mut n_by_cell = Vec::new();
    let mut cells = Vec::new();
    for &kernel in kernels {
        for &beta2 in beta2_list {
            for &rho0 in rho0_list {
                for &n in &spec.n_list {
                    let label = if include_rho0 {
                        format!("kernel={},beta2={},rho0={}", kernel.name(), beta2, rho0)
                    } else {
                        format!("kernel={},beta2={}", kernel.name(), beta2)
                    };
                    let cell_seed = cell_seed_for(spec.seed, &label, n);
                    let mut template = CoxSimConfig {
                        n,
                        d: 1,
                        q: spec.q,
                        kernel_x: kernel,
                        kernel_y: kernel,
                        beta2,
                        rho0,
                        beta1: 1.0,
                        seed: cell_seed,
                    };
                    template.validate()?;
                    template.beta1 = calibrate_beta1::<T>(&template)?;
                    let factory =
                        prepare_cox_factory(spec.nuisance, &template, spec.oracle_mc, spec.boost)?;
                    labels.push((label, cell_seed));
                    n_by_cell.push(n);
                    cells.push(CoxCell { template, factory });
                }
            }
        }
    }
    Ok((labels, n_by_cell, cells))
}

fn expect_study(spec: &StudySpec, kind: StudyKind) -> Result<()> {
    if spec.study != kind {
        return Err(Error::Usage(format!(
            "this driver runs the {} study, the spec names {}",
            kind.name(),
            spec.study.name()
        )));
    }
    spec.validate()
}

/// Simulates null-hypothesis hazard-family data across kernels and sample
/// sizes, runs the cross-fitted test on each replicate, and collects
/// p-values. Summaries report per-cell rejection rates and the
/// Kolmogorov-Smirnov distance of the p-values to uniformity; the empirical
/// p-value distribution itself is available via
/// [`StudyResult::pvalue_ecdf`].
pub fn run_h0_study<T: Real>(spec: &StudySpec) -> Result<StudyResult> {
    expect_study(spec, StudyKind::H0Pvalues)?;
    let started = Instant::now();
    let (labels, n_by_cell, cells) = prepare_cox_cells::<T>(spec, false)?;
    let tasks = build_tasks(&labels, &n_by_cell, spec.replications);
    let (records, failures, dropped) = run_tasks(&tasks, spec.poison.as_ref(), |task| {
        let cell = &cells[task.setting_idx];
        let mut config = cell.template.clone();
        config.seed = task.seed;
        let dataset = simulate_cox_dataset::<T>(&config)?;
        let res = lct_test(
            &dataset.sample,
            spec.k,
            |s, idx| cell.factory.fit(s, idx),
            spec.alpha,
            LctStatistic::Sup,
        )?;
        Ok(TaskValue::Metrics(vec![
            ("p_value".to_string(), res.p_value.to_f64_lossy()),
            ("t_stat".to_string(), res.t_stat.to_f64_lossy()),
            ("reject".to_string(), if res.reject { 1.0 } else { 0.0 }),
        ]))
    })?;
    Ok(seal(spec, records, failures, dropped, tasks.len(), started))
}

/// Runs the cross-fitted test under local alternatives and reports
/// per-cell rejection rates by (kernel, beta2, rho0, n).
pub fn run_power_study<T: Real>(spec: &StudySpec) -> Result<StudyResult> {
    expect_study(spec, StudyKind::PowerCurve)?;
    let started = Instant::now();
    let (labels, n_by_cell, cells) = prepare_cox_cells::<T>(spec, true)?;
    let tasks = build_tasks(&labels, &n_by_cell, spec.replications);
    let (records, failures, dropped) = run_tasks(&tasks, spec.poison.as_ref(), |task| {
        let cell = &cells[task.setting_idx];
        let mut config = cell.template.clone();
        config.seed = task.seed;
        let dataset = simulate_cox_dataset::<T>(&config)?;
        let res = lct_test(
            &dataset.sample,
            spec.k,
            |s, idx| cell.factory.fit(s, idx),
            spec.alpha,
            LctStatistic::Sup,
        )?;
        Ok(TaskValue::Metrics(vec![
            ("p_value".to_string(), res.p_value.to_f64_lossy()),
            ("reject".to_string(), if res.reject { 1.0 } else { 0.0 }),
        ]))
    })?;
    Ok(seal(spec, records, failures, dropped, tasks.len(), started))
}

/// Grid indices at which the estimator-comparison study snapshots the full
/// estimate path: every sixteenth of the grid plus the endpoint.
pub fn snapshot_indices(q: usize) -> Vec<usize> {
    let stride = ((q - 1) / 16).max(1);
    let mut idx: Vec<usize> = (0..q).step_by(stride).collect();
    if *idx.last().expect("nonempty grid") != q - 1 {
        idx.push(q - 1);
    }
    idx
}

/// Under the null, compares three estimation strategies on each replicate -
/// plug-in (hazard fit on the full sample, no residualisation), no-split
/// double (residualised, nuisances fit in-sample), and cross-fitted - and
/// computes both the supremum and endpoint statistics from the cross-fit.
/// Records carry the three endpoint estimates, coarse path snapshots of all
/// three estimate paths, and both p-values.
pub fn run_endpoint_vs_sup_study<T: Real>(spec: &StudySpec) -> Result<StudyResult> {
    expect_study(spec, StudyKind::EndpointVsSup)?;
    let started = Instant::now();
    let (labels, n_by_cell, cells) = prepare_cox_cells::<T>(spec, false)?;
    let tasks = build_tasks(&labels, &n_by_cell, spec.replications);
    let snapshots = snapshot_indices(spec.q);
    let (records, failures, dropped) = run_tasks(&tasks, spec.poison.as_ref(), |task| {
        let cell = &cells[task.setting_idx];
        let mut config = cell.template.clone();
        config.seed = task.seed;
        let dataset = simulate_cox_dataset::<T>(&config)?;
        let sample = &dataset.sample;
        let q = sample.grid().q();
        let all_idx: Vec<usize> = (0..sample.n()).collect();

        let crossfit = lcm_crossfit(sample, spec.k, |s, idx| cell.factory.fit(s, idx))?;
        let nosplit = lcm_crossfit(sample, 1, |s, idx| cell.factory.fit(s, idx))?;
        let hazard_full = cell.factory.fit_hazard_only(sample, &all_idx)?;
        let plugin = lcm_plugin(sample, &all_idx, hazard_full)?;

        let sup = lct_from_fit(crossfit.clone(), spec.alpha, LctStatistic::Sup)?;
        let endpoint = lct_from_fit(crossfit.clone(), spec.alpha, LctStatistic::Endpoint)?;

        let mut metrics = vec![
            ("p_sup".to_string(), sup.p_value.to_f64_lossy()),
            ("t_sup".to_string(), sup.t_stat.to_f64_lossy()),
            (
                "reject_sup".to_string(),
                if sup.reject { 1.0 } else { 0.0 },
            ),
            ("p_endpoint".to_string(), endpoint.p_value.to_f64_lossy()),
            ("z_endpoint".to_string(), endpoint.t_stat.to_f64_lossy()),
            (
                "reject_endpoint".to_string(),
                if endpoint.reject { 1.0 } else { 0.0 },
            ),
            (
                "gamma1_plugin".to_string(),
                plugin.gamma_hat[q - 1].to_f64_lossy(),
            ),
            (
                "gamma1_nosplit".to_string(),
                nosplit.gamma_hat[q - 1].to_f64_lossy(),
            ),
            (
                "gamma1_xlcm".to_string(),
                crossfit.gamma_hat[q - 1].to_f64_lossy(),
            ),
        ];
        for &i in &snapshots {
            metrics.push((format!("plugin@{i}"), plugin.gamma_hat[i].to_f64_lossy()));
            metrics.push((format!("nosplit@{i}"), nosplit.gamma_hat[i].to_f64_lossy()));
            metrics.push((format!("xlcm@{i}"), crossfit.gamma_hat[i].to_f64_lossy()));
        }
        Ok(TaskValue::Metrics(metrics))
    })?;
    Ok(seal(spec, records, failures, dropped, tasks.len(), started))
}

// ---------------------------------------------------------------------------
// Additive study
// ---------------------------------------------------------------------------

struct AcmCell<T: Real> {
    template: AcmSimConfig,
    oracle: AcmOracle<T>,
}

/// Simulates additive-design datasets, runs the cross-fitted and no-split
/// normalised estimators plus the additive least-squares baseline, and
/// reports each estimator's value at the default report time against the
/// design oracle. Replicates whose report time is masked (clipped
/// normalisation or a rank-deficient baseline) are dropped with a count.
pub fn run_acm_study<T: Real>(spec: &StudySpec) -> Result<StudyResult> {
    expect_study(spec, StudyKind::AcmRmse)?;
    let started = Instant::now();
    let (settings, d_list) = match &spec.engine {
        EngineSettings::Additive { settings, d_list } => (settings, d_list),
        EngineSettings::Cox { .. } => {
            return Err(Error::Config(
                "the additive study needs additive engine settings".into(),
            ))
        }
    };
    let t_idx = default_report_index(spec.q);

    let mut labels = Vec::new();
    let mut n_by_cell = Vec::new();
    let mut cells: Vec<AcmCell<T>> = Vec::new();
    for &setting in settings {
        for &d in d_list {
            for &n in &spec.n_list {
                let label = format!("setting={},d={}", setting.name(), d);
                let cell_seed = cell_seed_for(spec.seed, &label, n);
                let template = AcmSimConfig::new(setting, n, d, spec.q, cell_seed)?;
                // The oracle effect path of these designs does not depend on
                // the per-dataset weights, so one evaluation per cell covers
                // every replicate.
                let oracle = acm_oracle::<T>(&OracleDesign::Additive(&template), 4_000)?;
                labels.push((label, cell_seed));
                n_by_cell.push(n);
                cells.push(AcmCell { template, oracle });
            }
        }
    }

    let tasks = build_tasks(&labels, &n_by_cell, spec.replications);
    let (records, failures, dropped) = run_tasks(&tasks, spec.poison.as_ref(), |task| {
        let cell = &cells[task.setting_idx];
        let mut config = cell.template.clone();
        config.seed = task.seed;
        let dataset = simulate_acm_dataset::<T>(&config)?;
        let sample = &dataset.sample;

        let factory: PreparedFactory<T> = match spec.nuisance {
            NuisanceChoice::Oracle => PreparedFactory::AdditiveOracle {
                setting: config.setting,
                weights: acm_design_weights(&config),
            },
            learner => learner.learner_factory()?,
        };

        let xfit = acm_crossfit(sample, spec.k, |s, idx| factory.fit(s, idx), spec.clip)?;
        let nfit = acm_crossfit(sample, 1, |s, idx| factory.fit(s, idx), spec.clip)?;
        let all_idx: Vec<usize> = (0..sample.n()).collect();
        let aalen = aalen_additive_fit(sample, &all_idx)?;

        let lookups = [
            ("cross-fitted estimate", xfit.value_at(t_idx)),
            ("no-split estimate", nfit.value_at(t_idx)),
            ("additive least-squares baseline", aalen.value_at(1, t_idx)),
        ];
        if let Some((what, _)) = lookups.iter().find(|(_, v)| v.is_none()) {
            return Ok(TaskValue::Dropped(format!(
                "{what} masked at report index {t_idx}"
            )));
        }
        let [x_val, n_val, a_val] =
            lookups.map(|(_, v)| v.expect("all lookups checked above"));
        Ok(TaskValue::Metrics(vec![
            ("xacm".to_string(), x_val.to_f64_lossy()),
            ("nacm".to_string(), n_val.to_f64_lossy()),
            ("aalen".to_string(), a_val.to_f64_lossy()),
            ("oracle".to_string(), cell.oracle.gamma[t_idx].to_f64_lossy()),
        ]))
    })?;
    Ok(seal(spec, records, failures, dropped, tasks.len(), started))
}

/// Dispatches a spec to its study driver.
pub fn run_study<T: Real>(spec: &StudySpec) -> Result<StudyResult> {
    match spec.study {
        StudyKind::H0Pvalues => run_h0_study::<T>(spec),
        StudyKind::PowerCurve => run_power_study::<T>(spec),
        StudyKind::AcmRmse => run_acm_study::<T>(spec),
        StudyKind::EndpointVsSup => run_endpoint_vs_sup_study::<T>(spec),
    }
}

// ---------------------------------------------------------------------------
// Artifact writers
// ---------------------------------------------------------------------------

/// Name and content hash of one emitted file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    /// File name relative to the output directory.
    pub name: String,
    /// 64-bit FNV-1a hash of the file bytes, 16 hex digits.
    pub fnv1a64: String,
}

fn format_value(v: f64) -> String {
    format!("{v}")
}

fn csv_to_string(build: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut writer = csv::Writer::from_writer(&mut buf);
        build(&mut writer)?;
        writer.flush()?;
    }
    Ok(buf)
}

fn records_csv(result: &StudyResult) -> Result<Vec<u8>> {
    csv_to_string(|w| {
        w.write_record(["setting", "n", "replicate", "seed", "metric", "value"])?;
        for r in &result.records {
            for (name, value) in &r.metrics {
                w.write_record([
                    r.setting.as_str(),
                    &r.n.to_string(),
                    &r.replicate.to_string(),
                    &r.seed.to_string(),
                    name,
                    &format_value(*value),
                ])?;
            }
        }
        Ok(())
    })
}

fn summary_csv(result: &StudyResult) -> Result<Vec<u8>> {
    csv_to_string(|w| {
        w.write_record(["setting", "n", "metric", "value"])?;
        for row in &result.summary {
            w.write_record([
                row.setting.as_str(),
                &row.n.to_string(),
                row.metric.as_str(),
                &format_value(row.value),
            ])?;
        }
        Ok(())
    })
}

fn failures_csv(result: &StudyResult) -> Result<Vec<u8>> {
    csv_to_string(|w| {
        w.write_record(["kind", "setting", "n", "replicate", "seed", "message"])?;
        for (kind, list) in [("failed", &result.failures), ("dropped", &result.dropped)] {
            for f in list {
                w.write_record([
                    kind,
                    f.setting.as_str(),
                    &f.n.to_string(),
                    &f.replicate.to_string(),
                    &f.seed.to_string(),
                    f.message.as_str(),
                ])?;
            }
        }
        Ok(())
    })
}

fn ecdf_csv(result: &StudyResult) -> Result<Vec<u8>> {
    csv_to_string(|w| {
        w.write_record(["setting", "n", "p", "ecdf"])?;
        for row in result.pvalue_ecdf() {
            w.write_record([
                row.setting.as_str(),
                &row.n.to_string(),
                &format_value(row.p),
                &format_value(row.ecdf),
            ])?;
        }
        Ok(())
    })
}

/// Writes the study's CSV artifacts (`records`, `summary`, `failures`, and
/// for the null study `pvalue_ecdf`) under `dir` with the given file
/// prefix. Returns the emitted names with content hashes, in a fixed
/// order.
pub fn write_study_outputs(
    result: &StudyResult,
    dir: &Path,
    prefix: &str,
) -> Result<Vec<FileHash>> {
    std::fs::create_dir_all(dir)?;
    let mut planned: Vec<(String, Vec<u8>)> = vec![
        (format!("{prefix}_records.csv"), records_csv(result)?),
        (format!("{prefix}_summary.csv"), summary_csv(result)?),
        (format!("{prefix}_failures.csv"), failures_csv(result)?),
    ];
    if result.study == StudyKind::H0Pvalues {
        planned.push((format!("{prefix}_pvalue_ecdf.csv"), ecdf_csv(result)?));
    }
    let mut hashes = Vec::with_capacity(planned.len());
    for (name, bytes) in planned {
        std::fs::write(dir.join(&name), &bytes)?;
        hashes.push(FileHash {
            fnv1a64: fnv1a64_hex(&bytes),
            name,
        });
    }
    Ok(hashes)
}

// ---------------------------------------------------------------------------
// Reproduction presets
// ---------------------------------------------------------------------------

/// Scale of a reproduction run: `desk` shrinks the replication counts and
/// setting lists to minutes of runtime; `full` mirrors the standing
/// studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReproScale {
    /// Reduced replication and setting lists.
    Desk,
    /// Full replication.
    Full,
}

impl ReproScale {
    /// Canonical name.
    pub fn name(&self) -> &'static str {
        match self {
            ReproScale::Desk => "desk",
            ReproScale::Full => "full",
        }
    }

    /// Parses a name.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(ReproScale::Desk),
            "full" => Ok(ReproScale::Full),
            other => Err(Error::Usage(format!(
                "unknown scale '{other}'; valid: desk, full"
            ))),
        }
    }
}

/// The figure identifiers [`reproduce`] accepts.
pub const FIGURE_IDS: [&str; 5] = ["fig2.1", "fig2.2", "fig2.4", "fig2.5", "fig4.1"];

/// Builds the pinned study spec behind one figure identifier.
///
/// * `fig2.1` - endpoint histograms of the three estimator strategies under
///   the null (constant kernel, n = 500).
/// * `fig2.2` - path-distribution extension of `fig2.1`.
/// * `fig2.4` - null p-value distributions across kernels and sample sizes.
/// * `fig2.5` - rejection rates under local alternatives.
/// * `fig4.1` - scaled RMSE of the normalised estimators and the additive
///   least-squares baseline across additive designs.
pub fn preset_spec(figure_id: &str, scale: ReproScale, seed: u64) -> Result<StudySpec> {
    let desk = scale == ReproScale::Desk;
    let fig_seed = derive_seed(seed, fnv1a64(figure_id.as_bytes()));
    let spec = match figure_id {
        "fig2.1" | "fig2.2" => {
            let mut s = StudySpec::new(
                StudyKind::EndpointVsSup,
                EngineSettings::Cox {
                    kernels: vec![HistKernel::Constant],
                    beta2_list: vec![-1.0],
                    rho0_list: vec![0.0],
                },
                vec![500],
                if desk {
                    if figure_id == "fig2.1" {
                        300
                    } else {
                        200
                    }
                } else {
                    1000
                },
                fig_seed,
            );
            s.nuisance = NuisanceChoice::RidgeBoosted;
            s
        }
        "fig2.4" => {
            let mut s = StudySpec::new(
                StudyKind::H0Pvalues,
                EngineSettings::Cox {
                    kernels: vec![
                        HistKernel::Zero,
                        HistKernel::Constant,
                        HistKernel::Gaussian,
                        HistKernel::Sine,
                    ],
                    beta2_list: if desk { vec![-1.0] } else { vec![-1.0, 1.0] },
                    rho0_list: vec![0.0],
                },
                if desk {
                    vec![100, 500]
                } else {
                    vec![100, 500, 1000, 2000]
                },
                if desk { 200 } else { 400 },
                fig_seed,
            );
            s.nuisance = NuisanceChoice::RidgePooled;
            s
        }
        "fig2.5" => {
            let mut s = StudySpec::new(
                StudyKind::PowerCurve,
                EngineSettings::Cox {
                    kernels: if desk {
                        vec![HistKernel::Constant]
                    } else {
                        vec![
                            HistKernel::Zero,
                            HistKernel::Constant,
                            HistKernel::Gaussian,
                            HistKernel::Sine,
                        ]
                    },
                    beta2_list: if desk { vec![-1.0] } else { vec![-1.0, 1.0] },
                    rho0_list: vec![0.0, 5.0, 10.0],
                },
                if desk {
                    vec![1000]
                } else {
                    vec![100, 500, 1000, 2000]
                },
                if desk { 200 } else { 400 },
                fig_seed,
            );
            s.nuisance = NuisanceChoice::RidgePooled;
            s
        }
        "fig4.1" => StudySpec::new(
            StudyKind::AcmRmse,
            EngineSettings::Additive {
                settings: vec![AcmSetting::Lin, AcmSetting::Par],
                d_list: if desk { vec![4] } else { vec![4, 16] },
            },
            vec![200, 600, 1800],
            if desk { 200 } else { 500 },
            fig_seed,
        ),
        other => {
            return Err(Error::Usage(format!(
                "unknown figure id '{other}'; valid: {}",
                FIGURE_IDS.join(", ")
            )))
        }
    };
    Ok(spec)
}

/// Deterministic description of one reproduction run: the preset spec, the
/// emitted files with content hashes, and the package version. Byte-stable
/// across reruns with the same seed; measured wall times live in the
/// separate runtime sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproManifest {
    /// Figure identifier.
    pub figure: String,
    /// Scale name.
    pub scale: String,
    /// Master seed that every replicate seed derives from.
    pub seed: u64,
    /// Package version that produced the run.
    pub package_version: String,
    /// FNV-1a hash of the serialised spec (the run's full input).
    pub spec_hash: String,
    /// The pinned study spec (output directory stripped).
    pub spec: StudySpec,
    /// Emitted CSV files with content hashes.
    pub files: Vec<FileHash>,
}

/// Runs a study spec and writes its artifacts plus the manifest and
/// runtime sidecar under `dir` with the given prefix. The manifest is
/// byte-stable for a fixed spec-with-seed; the runtime sidecar carries the
/// measured wall time and is excluded from the manifest.
pub fn run_and_write<T: Real>(
    spec: &StudySpec,
    figure: &str,
    scale: &str,
    dir: &Path,
    prefix: &str,
) -> Result<(ReproManifest, StudyResult)> {
    let result = run_study::<T>(spec)?;
    let files = write_study_outputs(&result, dir, prefix)?;
    let mut spec_echo = spec.clone();
    spec_echo.out_dir = None;
    let spec_hash = fnv1a64_hex(to_json_string(&spec_echo)?.as_bytes());
    let manifest = ReproManifest {
        figure: figure.to_string(),
        scale: scale.to_string(),
        seed: spec.seed,
        package_version: env!("CARGO_PKG_VERSION").to_string(),
        spec_hash,
        spec: spec_echo,
        files,
    };
    write_json_file(&manifest, dir.join(format!("{prefix}_manifest.json")))?;
    write_json_file(&result.runtime, dir.join(format!("{prefix}_runtime.json")))?;
    Ok((manifest, result))
}

/// Runs one figure preset at the given scale, writing CSVs, a manifest and
/// a runtime sidecar into `out_dir`. Unknown figure identifiers produce a
/// usage error listing the valid ones.
pub fn reproduce<T: Real>(
    figure_id: &str,
    scale: ReproScale,
    seed: u64,
    out_dir: &Path,
) -> Result<ReproManifest> {
    let mut spec = preset_spec(figure_id, scale, seed)?;
    spec.out_dir = Some(out_dir.to_path_buf());
    let prefix = figure_id.replace('.', "-");
    let (manifest, _result) =
        run_and_write::<T>(&spec, figure_id, scale.name(), out_dir, &prefix)?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// Dataset sidecar shared with the CLI
// ---------------------------------------------------------------------------

/// The engine configuration echoed next to a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "family")]
pub enum SimConfigEcho {
    /// Hazard-family design.
    Cox(CoxSimConfig),
    /// Additive design.
    Additive(AcmSimConfig),
}

/// JSON sidecar written next to a simulated dataset: the full generating
/// configuration plus the engine metadata, enough to rebuild oracle
/// nuisances later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    /// The generating configuration.
    pub config: SimConfigEcho,
    /// Engine metadata (calibration results, per-dataset weights).
    pub meta: DatasetMeta,
}

impl DatasetSidecar {
    /// Builds the prepared oracle factory this sidecar describes.
    pub fn oracle_factory<T: Real>(
        &self,
        grid: &TimeGrid<T>,
        oracle_mc: usize,
    ) -> Result<PreparedFactory<T>> {
        match &self.config {
            SimConfigEcho::Cox(config) => {
                if config.q != grid.q() {
                    return Err(Error::Dimension(format!(
                        "sidecar grid has {} points, dataset has {}",
                        config.q,
                        grid.q()
                    )));
                }
                Ok(PreparedFactory::Prebuilt(Arc::new(oracle_nuisances_cox(
                    config, oracle_mc,
                )?)))
            }
            SimConfigEcho::Additive(config) => {
                if config.q != grid.q() {
                    return Err(Error::Dimension(format!(
                        "sidecar grid has {} points, dataset has {}",
                        config.q,
                        grid.q()
                    )));
                }
                Ok(PreparedFactory::AdditiveOracle {
                    setting: config.setting,
                    weights: acm_design_weights(config),
                })
            }
        }
    }
}
