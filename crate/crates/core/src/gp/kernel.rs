use nalgebra::DMatrix;

use super::{Hyperparams, KernelSpec};
use crate::error::{Error, Result};

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub(crate) fn se(x: &[f64], y: &[f64], lengthscale: f64) -> f64 {
    (-sq_dist(x, y) / (2.0 * lengthscale * lengthscale)).exp()
}

/// Kernel value without argument checks, for inner loops over validated data.
#[inline]
pub(crate) fn eval_unchecked(spec: KernelSpec, theta: &Hyperparams, x: &[f64], y: &[f64]) -> f64 {
    match spec {
        KernelSpec::Linear => dot(x, y),
        KernelSpec::SquaredExp => se(x, y, theta.lengthscale),
        KernelSpec::Combined => dot(x, y) + theta.beta * se(x, y, theta.lengthscale),
    }
}

pub fn kernel_eval(spec: KernelSpec, theta: &Hyperparams, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "kernel arguments differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite kernel argument"));
    }
    theta.validate()?;
    Ok(eval_unchecked(spec, theta, x, y))
}

/// Gram matrix over the rows of `inputs`. Only the upper triangle is evaluated
/// and mirrored, so the result is exactly symmetric.
pub fn gram_matrix(spec: KernelSpec, theta: &Hyperparams, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite kernel argument"));
    }
    theta.validate()?;
    Ok(gram_unchecked(spec, theta, &rows_of(inputs)))
}

pub(crate) fn rows_of(inputs: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..inputs.nrows())
        .map(|i| inputs.row(i).iter().copied().collect())
        .collect()
}

pub(crate) fn gram_unchecked(spec: KernelSpec, theta: &Hyperparams, rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = eval_unchecked(spec, theta, &rows[i], &rows[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn theta(beta: f64, l: f64) -> Hyperparams {
        Hyperparams::new(beta, l, 0.0).unwrap()
    }

    #[test]
    fn combined_closed_forms() {
        let z = [0.0; 4];
        assert_eq!(kernel_eval(KernelSpec::Combined, &theta(1.0, 1.0), &z, &z).unwrap(), 1.0);
        let e1 = [1.0, 0.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 0.0, 0.0];
        assert_eq!(kernel_eval(KernelSpec::Combined, &theta(1.0, 1.0), &e1, &e1).unwrap(), 2.0);
        let v = kernel_eval(KernelSpec::Combined, &theta(2.0, 1.0), &e1, &e2).unwrap();
        assert_abs_diff_eq!(v, 2.0 * (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.735759, epsilon = 1e-6);
    }

    #[test]
    fn squared_exp_ignores_beta() {
        let e1 = [1.0, 0.0, 0.0, 0.0];
        let a = kernel_eval(KernelSpec::SquaredExp, &theta(5.0, 1.0), &e1, &e1).unwrap();
        assert_eq!(a, 1.0);
    }

    #[test]
    fn non_finite_argument_is_rejected() {
        let bad = [f64::NAN, 0.0, 0.0, 0.0];
        let ok = [0.0; 4];
        assert!(matches!(
            kernel_eval(KernelSpec::Linear, &theta(1.0, 1.0), &bad, &ok),
            Err(Error::InvalidArgument(_))
        ));
        let x = DMatrix::from_row_slice(1, 4, &[f64::INFINITY, 0.0, 0.0, 0.0]);
        assert!(gram_matrix(KernelSpec::Combined, &theta(1.0, 1.0), &x).is_err());
    }

    #[test]
    fn gram_examples() {
        let x = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let k = gram_matrix(KernelSpec::Linear, &theta(1.0, 1.0), &x).unwrap();
        assert_eq!(k, DMatrix::identity(2, 2));

        let same = DMatrix::from_row_slice(2, 4, &[0.3, -0.2, 0.1, 0.9, 0.3, -0.2, 0.1, 0.9]);
        for l in [0.05, 1.0, 7.0] {
            let k = gram_matrix(KernelSpec::SquaredExp, &theta(1.0, l), &same).unwrap();
            assert_eq!(k, DMatrix::from_element(2, 2, 1.0));
        }

        let k = gram_matrix(KernelSpec::Combined, &theta(1.0, 1.0), &x).unwrap();
        let e = (-1.0f64).exp();
        assert_eq!(k[(0, 0)], 2.0);
        assert_eq!(k[(1, 1)], 2.0);
        assert_abs_diff_eq!(k[(0, 1)], e, epsilon = 1e-15);
        assert_eq!(k[(0, 1)], k[(1, 0)]);
    }
}
