//! Projection and proximal operators used by the alternating updates.

use crate::error::{Result, SibError};

const DEGENERATE_NORM: f64 = 1e-12;

/// Rescales `v` to unit Euclidean norm. A (near) zero vector maps to the
/// first standard basis vector so the update stays total.
pub fn project_unit_norm(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    normalize_in_place(&mut out)?;
    Ok(out)
}

pub(crate) fn normalize_in_place(v: &mut [f64]) -> Result<()> {
    if v.is_empty() {
        return Err(SibError::InvalidInput("cannot normalize an empty vector".into()));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < DEGENERATE_NORM || !norm.is_finite() {
        v.iter_mut().for_each(|x| *x = 0.0);
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(())
}

/// Euclidean projection onto the probability simplex
/// `{w : w_k >= 0, sum_k w_k = 1}` by the sort-and-threshold method.
pub fn project_simplex(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    project_simplex_in_place(&mut out)?;
    Ok(out)
}

pub(crate) fn project_simplex_in_place(v: &mut [f64]) -> Result<()> {
    if v.is_empty() {
        return Err(SibError::InvalidInput("cannot project an empty vector onto the simplex".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(SibError::InvalidInput("simplex projection of a non-finite vector".into()));
    }
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    // largest rho with u_rho + (1 - sum_{i<=rho} u_i) / rho > 0
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (idx, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (idx + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
    Ok(())
}

/// Soft-thresholding `S(z, lambda)`, the proximal map of `lambda * |.|`.
pub fn soft_threshold(z: f64, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(SibError::InvalidInput(format!("soft threshold needs lambda >= 0, got {lambda}")));
    }
    Ok(shrink(z, lambda))
}

#[inline]
pub(crate) fn shrink(z: f64, lambda: f64) -> f64 {
    if z >= lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}
