//! Grid-level stochastic integration and predictable step evaluation.
//!
//! The integral of a weight path against a compensated counting process is
//! the basic primitive behind every estimator in this crate: increments are
//! `dN - Y * hazard * dt`, accumulated from the left so that the value at
//! index `i` depends only on entries up to `i`.

use crate::error::{Error, Result};
use crate::grid::{SubjectPath, TimeGrid};
use crate::scalar::Real;

/// Integrates a weight path against a subject's compensated counting
/// process: returns the path
///
/// `out[i] = sum_{1 <= l <= i} g[l] * (dN[l] - Y[l] * hazard[l] * step)`
///
/// with `out[0] = 0`. `dN[l]` is the subject's counting increment at grid
/// index `l` and `Y[l]` the at-risk indicator.
///
/// Fails with a dimension error if path lengths disagree with the grid, and
/// with a domain error if the hazard is negative anywhere the subject is at
/// risk (negative values off the at-risk region are ignored: they never
/// enter the sum).
pub fn stieltjes_integrate<T: Real>(
    g_path: &[T],
    subject: &SubjectPath<T>,
    hazard_path: &[T],
    grid: &TimeGrid<T>,
) -> Result<Vec<T>> {
    let q = grid.q();
    if g_path.len() != q || hazard_path.len() != q || subject.q() != q {
        return Err(Error::Dimension(format!(
            "integrand ({}), hazard ({}) and subject ({}) must all match the grid ({q})",
            g_path.len(),
            hazard_path.len(),
            subject.q()
        )));
    }
    let step = grid.step();
    let mut out = Vec::with_capacity(q);
    out.push(T::zero());
    let mut acc = T::zero();
    for l in 1..q {
        if subject.at_risk(l) {
            let h = hazard_path[l];
            if h < T::zero() {
                return Err(Error::Domain(format!(
                    "negative hazard {h} at at-risk index {l}"
                )));
            }
            acc -= g_path[l] * h * step;
        }
        if subject.n_increment(l) {
            acc += g_path[l];
        }
        out.push(acc);
    }
    Ok(out)
}

/// Evaluates a grid path as a left-continuous step function at time `t`:
/// the value at the largest grid point `<= t`. Never reads entries beyond
/// that index, so the evaluation is predictable.
pub fn left_step_eval<T: Real>(path: &[T], grid: &TimeGrid<T>, t: T) -> Result<T> {
    if path.len() != grid.q() {
        return Err(Error::Dimension(format!(
            "path length {} does not match grid with {} points",
            path.len(),
            grid.q()
        )));
    }
    Ok(path[grid.floor_index(t)?])
}
