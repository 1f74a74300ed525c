use nalgebra::{Matrix2, Matrix2x4};
use serde::{Deserialize, Serialize};

use super::GainMatrix;

/// Components below this magnitude are skipped when fixing the sign of a
/// right singular vector.
const SIGN_TOL: f64 = 1e-12;

/// `G^T = u * diag(sigma) * v_rows`. Column `j` of `u` is the control-space
/// direction produced by the unit feature direction `v_rows[j]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvdDecomp {
    /// Row-major 2x2.
    pub u: [[f64; 2]; 2],
    /// Descending and non-negative.
    pub sigma: [f64; 2],
    pub v_rows: [[f64; 4]; 2],
}

impl SvdDecomp {
    pub fn u_column(&self, j: usize) -> [f64; 2] {
        [self.u[0][j], self.u[1][j]]
    }

    pub fn reconstruct(&self) -> [[f64; 4]; 2] {
        let mut out = [[0.0; 4]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (0..2).map(|j| self.u[r][j] * self.sigma[j] * self.v_rows[j][c]).sum();
            }
        }
        out
    }
}

/// Singular value decomposition with descending `sigma` and the first
/// significant component of every `v_rows[j]` made positive; `u` columns flip
/// with their `v` rows so the product is unchanged.
pub fn svd_gains(gain: &GainMatrix) -> SvdDecomp {
    let m = Matrix2x4::from_fn(|r, c| gain.entries[r][c]);
    let svd = m.svd(true, true);
    let u: Matrix2<f64> = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let s = svd.singular_values;

    let mut order = [0usize, 1];
    if s[1] > s[0] {
        order.swap(0, 1);
    }
    let mut out = SvdDecomp { u: [[0.0; 2]; 2], sigma: [0.0; 2], v_rows: [[0.0; 4]; 2] };
    for (j, &k) in order.iter().enumerate() {
        let mut v: [f64; 4] = std::array::from_fn(|c| v_t[(k, c)]);
        let mut col = [u[(0, k)], u[(1, k)]];
        if v.iter().find(|x| x.abs() > SIGN_TOL).is_some_and(|x| *x < 0.0) {
            v = v.map(|x| -x);
            col = col.map(|x| -x);
        }
        out.sigma[j] = s[k].max(0.0);
        out.v_rows[j] = v;
        out.u[0][j] = col[0];
        out.u[1][j] = col[1];
    }
    out
}
