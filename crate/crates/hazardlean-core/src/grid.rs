//! Time grid, per-subject path containers, samples, and fold plans.
//!
//! All estimators in this crate work on one shared equidistant grid over
//! [0, 1]. A subject is a covariate path `Z` (dimension `d`), an exposure
//! path `X`, and a right-censored event time snapped to the grid. The
//! at-risk and counting-process paths are derived, never stored.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Equidistant grid `t_i = i/(q-1)` on [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid<T> {
    q: usize,
    points: Vec<T>,
    step: T,
}

impl<T: Real> TimeGrid<T> {
    /// Builds the unit grid with `q >= 2` points.
    pub fn new(q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::Config(format!(
                "time grid needs at least 2 points, got {q}"
            )));
        }
        let qm1 = T::from_usize(q - 1).expect("grid size fits scalar");
        let points = (0..q)
            .map(|i| T::from_usize(i).expect("grid index fits scalar") / qm1)
            .collect();
        Ok(Self {
            q,
            points,
            step: T::one() / qm1,
        })
    }

    /// Number of grid points.
    pub fn q(&self) -> usize {
        self.q
    }

    /// The grid points, strictly increasing from 0 to 1.
    pub fn points(&self) -> &[T] {
        &self.points
    }

    /// The grid point at index `i`.
    pub fn point(&self, i: usize) -> T {
        self.points[i]
    }

    /// The mesh width `1/(q-1)`.
    pub fn step(&self) -> T {
        self.step
    }

    /// Index of the largest grid point `<= t`; `t` must lie in [0, 1].
    pub fn floor_index(&self, t: T) -> Result<usize> {
        if !(t >= T::zero() && t <= T::one()) {
            return Err(Error::Domain(format!(
                "time {t} lies outside the grid span [0, 1]"
            )));
        }
        // Guard against floating-point overshoot at t = 1.
        let raw = (t / self.step).to_usize().unwrap_or(0);
        let mut i = raw.min(self.q - 1);
        // Rounding in the division can land one index high or low; correct.
        while i > 0 && self.points[i] > t {
            i -= 1;
        }
        while i + 1 < self.q && self.points[i + 1] <= t {
            i += 1;
        }
        Ok(i)
    }
}

/// One subject: covariate path, exposure path, and observed event data.
///
/// Paths after the event index are frozen at their value at the event
/// (`X_t = X_T`, `Z_t = Z_T` for `t >= T`); the constructor enforces this,
/// so every stored path carries the invariant by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectPath<T> {
    z: Vec<T>,
    x: Vec<T>,
    d: usize,
    q: usize,
    event_index: usize,
    delta: bool,
}

impl<T: Real> SubjectPath<T> {
    /// Builds a subject from a row-major `q x d` covariate path, a length-`q`
    /// exposure path, the grid index of the observed time, and the event
    /// indicator. Values after `event_index` are overwritten with the value
    /// at the event (stopped-process convention).
    pub fn new(
        mut z: Vec<T>,
        mut x: Vec<T>,
        d: usize,
        event_index: usize,
        delta: bool,
    ) -> Result<Self> {
        let q = x.len();
        if q == 0 || d == 0 {
            return Err(Error::Dimension(
                "subject needs a nonempty grid and d >= 1".into(),
            ));
        }
        if z.len() != q * d {
            return Err(Error::Dimension(format!(
                "covariate path has {} entries, expected q*d = {}",
                z.len(),
                q * d
            )));
        }
        if event_index >= q {
            return Err(Error::Dimension(format!(
                "event index {event_index} outside grid of {q} points"
            )));
        }
        if !delta && event_index != q - 1 {
            return Err(Error::Config(
                "censored subjects carry event_index = q-1 (administrative censoring at 1)".into(),
            ));
        }
        for i in (event_index + 1)..q {
            x[i] = x[event_index];
            for j in 0..d {
                z[i * d + j] = z[event_index * d + j];
            }
        }
        Ok(Self {
            z,
            x,
            d,
            q,
            event_index,
            delta,
        })
    }

    /// Grid length of the stored paths.
    pub fn q(&self) -> usize {
        self.q
    }

    /// Covariate dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Exposure path, length `q`.
    pub fn x(&self) -> &[T] {
        &self.x
    }

    /// Covariate row at grid index `i` (length `d`).
    pub fn z_row(&self, i: usize) -> &[T] {
        &self.z[i * self.d..(i + 1) * self.d]
    }

    /// Covariate `j` at grid index `i`.
    pub fn z_at(&self, i: usize, j: usize) -> T {
        self.z[i * self.d + j]
    }

    /// Grid index of the observed time (event or administrative censoring).
    pub fn event_index(&self) -> usize {
        self.event_index
    }

    /// Event indicator: true if the observed time is an event.
    pub fn delta(&self) -> bool {
        self.delta
    }

    /// At-risk indicator `Y_{t_i} = 1(T >= t_i)`.
    pub fn at_risk(&self, i: usize) -> bool {
        i <= self.event_index
    }

    /// Counting-process increment over `(t_{i-1}, t_i]` (also 1 for an event
    /// exactly at index 0).
    pub fn n_increment(&self, i: usize) -> bool {
        self.delta && i == self.event_index
    }

    /// Counting-process value `N_{t_i} = 1(T <= t_i, delta = 1)`.
    pub fn n_at(&self, i: usize) -> bool {
        self.delta && i >= self.event_index
    }
}

/// A sample of subjects sharing one grid and covariate dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSample<T> {
    grid: TimeGrid<T>,
    subjects: Vec<SubjectPath<T>>,
    d: usize,
}

impl<T: Real> SurvivalSample<T> {
    /// Builds a sample, checking that every subject matches the grid and
    /// covariate dimension and that the sample is nonempty.
    pub fn new(grid: TimeGrid<T>, subjects: Vec<SubjectPath<T>>, d: usize) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::Config("a sample needs at least one subject".into()));
        }
        for (i, s) in subjects.iter().enumerate() {
            if s.q() != grid.q() {
                return Err(Error::Dimension(format!(
                    "subject {i} has {} grid points, sample grid has {}",
                    s.q(),
                    grid.q()
                )));
            }
            if s.d() != d {
                return Err(Error::Dimension(format!(
                    "subject {i} has covariate dimension {}, sample says {d}",
                    s.d()
                )));
            }
        }
        Ok(Self { grid, subjects, d })
    }

    /// The shared grid.
    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    /// All subjects in order.
    pub fn subjects(&self) -> &[SubjectPath<T>] {
        &self.subjects
    }

    /// Subject count.
    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    /// Covariate dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of subjects with an observed event.
    pub fn event_count(&self) -> usize {
        self.subjects.iter().filter(|s| s.delta()).count()
    }
}

/// Assignment of subjects to cross-validation folds.
///
/// The degenerate plan `k = 1` puts every subject in the single fold, which
/// estimators interpret as "train and evaluate on the full sample"
/// (no-sample-splitting mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    k: usize,
    assignment: Vec<usize>,
}

impl FoldPlan {
    /// Validates an explicit assignment: labels in `0..k`, every fold
    /// nonempty, fold sizes differing by at most one.
    pub fn new(k: usize, assignment: Vec<usize>) -> Result<Self> {
        if k == 0 {
            return Err(Error::Plan("fold count must be at least 1".into()));
        }
        if assignment.is_empty() {
            return Err(Error::Plan("fold plan covers no subjects".into()));
        }
        let mut sizes = vec![0usize; k];
        for (i, &label) in assignment.iter().enumerate() {
            if label >= k {
                return Err(Error::Plan(format!(
                    "subject {i} carries fold label {label}, but k = {k}"
                )));
            }
            sizes[label] += 1;
        }
        let lo = *sizes.iter().min().expect("k >= 1");
        let hi = *sizes.iter().max().expect("k >= 1");
        if lo == 0 {
            return Err(Error::Plan("every fold must contain a subject".into()));
        }
        if hi - lo > 1 {
            return Err(Error::Plan(format!(
                "fold sizes must differ by at most 1, got min {lo} / max {hi}"
            )));
        }
        Ok(Self { k, assignment })
    }

    /// Deterministic balanced plan: subject `i` goes to fold `i mod k`.
    pub fn balanced(n: usize, k: usize) -> Result<Self> {
        if k == 0 || n < k {
            return Err(Error::Plan(format!(
                "cannot split {n} subjects into {k} nonempty folds"
            )));
        }
        Self::new(k, (0..n).map(|i| i % k).collect())
    }

    /// Fold count.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Per-subject fold labels.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Number of subjects covered by the plan.
    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    /// Subject indices in fold `fold`.
    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == fold)
            .map(|(i, _)| i)
            .collect()
    }

    /// Subject indices used to *train* nuisances for fold `fold`: the
    /// complement of the fold, except under `k = 1` where training and
    /// evaluation both use the full sample.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        if self.k == 1 {
            return (0..self.assignment.len()).collect();
        }
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != fold)
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unit_grid_endpoints_and_step() {
        let g: TimeGrid<f64> = TimeGrid::new(128).unwrap();
        assert_eq!(g.q(), 128);
        assert_eq!(g.point(0), 0.0);
        assert_eq!(g.point(127), 1.0);
        assert_abs_diff_eq!(g.step(), 1.0 / 127.0, epsilon = 1e-16);
        for i in 1..128 {
            assert!(g.point(i) > g.point(i - 1));
            assert_abs_diff_eq!(g.point(i) - g.point(i - 1), g.step(), epsilon = 1e-15);
        }
    }

    #[test]
    fn grid_rejects_singleton() {
        assert!(TimeGrid::<f64>::new(1).is_err());
    }

    #[test]
    fn floor_index_handles_interior_and_boundary_times() {
        let g: TimeGrid<f64> = TimeGrid::new(3).unwrap();
        assert_eq!(g.floor_index(0.0).unwrap(), 0);
        assert_eq!(g.floor_index(0.5).unwrap(), 1);
        assert_eq!(g.floor_index(0.7).unwrap(), 1);
        assert_eq!(g.floor_index(1.0).unwrap(), 2);
        assert!(g.floor_index(-0.1).is_err());
        assert!(g.floor_index(1.1).is_err());
    }

    #[test]
    fn subject_paths_freeze_after_event() {
        let z = vec![0.0, 1.0, 2.0, 3.0];
        let x = vec![10.0, 11.0, 12.0, 13.0];
        let s = SubjectPath::new(z, x, 1, 1, true).unwrap();
        assert_eq!(s.x(), &[10.0, 11.0, 11.0, 11.0]);
        assert_eq!(s.z_at(3, 0), 1.0);
        assert!(s.at_risk(1));
        assert!(!s.at_risk(2));
        assert!(s.n_increment(1));
        assert!(!s.n_increment(2));
        assert!(s.n_at(3));
    }

    #[test]
    fn censored_subject_must_sit_at_horizon() {
        let err = SubjectPath::new(vec![0.0; 4], vec![0.0; 4], 1, 2, false).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let ok = SubjectPath::new(vec![0.0; 4], vec![0.0; 4], 1, 3, false).unwrap();
        assert!(ok.at_risk(3));
        assert!(!ok.n_at(3));
    }

    #[test]
    fn balanced_fold_plan_sizes_differ_by_at_most_one() {
        let p = FoldPlan::balanced(10, 4).unwrap();
        let sizes: Vec<usize> = (0..4).map(|f| p.fold_indices(f).len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 10);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn degenerate_plan_trains_and_evaluates_on_everything() {
        let p = FoldPlan::balanced(5, 1).unwrap();
        assert_eq!(p.fold_indices(0), vec![0, 1, 2, 3, 4]);
        assert_eq!(p.train_indices(0), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn unbalanced_or_empty_plans_are_rejected() {
        assert!(FoldPlan::new(2, vec![0, 0, 0, 1, 1, 0]).is_err());
        assert!(FoldPlan::new(2, vec![0, 0, 0]).is_err());
        assert!(FoldPlan::balanced(2, 3).is_err());
    }
}
