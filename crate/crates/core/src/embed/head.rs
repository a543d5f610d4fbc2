//! One-vs-rest logistic heads.

use serde::{Deserialize, Serialize};

use crate::scalar::{sigmoid, Scalar};

/// A per-label classifier over the embedding. Labels whose training targets
/// are all equal get a constant head.
#[derive(Debug, Clone, PartialEq)]
pub enum Head<T: Scalar> {
    Constant(bool),
    Logistic { weights: Vec<T>, bias: T },
}

impl<T: Scalar> Head<T> {
    pub fn probability(&self, x: &[T]) -> T {
        match self {
            Head::Constant(v) => {
                if *v {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Head::Logistic { weights, bias } => sigmoid(weights.iter().zip(x).map(|(&w, &v)| w * v).sum::<T>() + *bias),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Head::Constant(_))
    }
}

/// Serialised form; weights are stored as f64, which is exact for f32 too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub(crate) enum HeadFile {
    Constant {
        label: String,
        value: bool,
    },
    Logistic {
        label: String,
        weights: Vec<f64>,
        bias: f64,
    },
}

impl HeadFile {
    pub fn from_head<T: Scalar>(label: &str, head: &Head<T>) -> Self {
        match head {
            Head::Constant(v) => HeadFile::Constant {
                label: label.into(),
                value: *v,
            },
            Head::Logistic { weights, bias } => HeadFile::Logistic {
                label: label.into(),
                weights: weights.iter().map(|w| w.as_f64()).collect(),
                bias: bias.as_f64(),
            },
        }
    }

    pub fn label(&self) -> &str {
        match self {
            HeadFile::Constant { label, .. } | HeadFile::Logistic { label, .. } => label,
        }
    }

    pub fn into_head<T: Scalar>(self) -> Head<T> {
        match self {
            HeadFile::Constant { value, .. } => Head::Constant(value),
            HeadFile::Logistic { weights, bias, .. } => Head::Logistic {
                weights: weights.into_iter().map(T::lit).collect(),
                bias: T::lit(bias),
            },
        }
    }
}

/// L2-regularised logistic regression with an unpenalised intercept,
/// minimising `0.5·|w|² + c·Σ logloss`, solved by damped Newton steps.
pub fn fit_head<T: Scalar>(xs: &[Vec<T>], ys: &[bool], c: f64) -> Head<T> {
    assert_eq!(xs.len(), ys.len());
    assert!(!xs.is_empty());
    if ys.iter().all(|&y| y == ys[0]) {
        return Head::Constant(ys[0]);
    }
    let d = xs[0].len();
    let x: Vec<Vec<f64>> = xs
        .iter()
        .map(|r| r.iter().map(|v| v.as_f64()).chain([1.0]).collect())
        .collect();
    let y: Vec<f64> = ys.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let objective = |theta: &[f64]| -> f64 {
        let reg: f64 = theta[..d].iter().map(|w| w * w).sum::<f64>() * 0.5;
        let ll: f64 = x
            .iter()
            .zip(&y)
            .map(|(xi, &yi)| {
                let z: f64 = xi.iter().zip(theta).map(|(a, b)| a * b).sum();
                // log(1 + e^z) - y z, computed stably
                z.max(0.0) + (-z.abs()).exp().ln_1p() - yi * z
            })
            .sum();
        reg + c * ll
    };
    let mut theta = vec![0.0; d + 1];
    for _ in 0..100 {
        let mut grad = vec![0.0; d + 1];
        let mut hess = vec![0.0; (d + 1) * (d + 1)];
        for j in 0..d {
            grad[j] = theta[j];
            hess[j * (d + 1) + j] = 1.0;
        }
        hess[d * (d + 1) + d] = 1e-10;
        for (xi, &yi) in x.iter().zip(&y) {
            let z: f64 = xi.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let p = sigmoid(z);
            let w = c * p * (1.0 - p);
            for a in 0..=d {
                grad[a] += c * (p - yi) * xi[a];
                for b in 0..=d {
                    hess[a * (d + 1) + b] += w * xi[a] * xi[b];
                }
            }
        }
        let Some(step) = cholesky_solve(&hess, &grad, d + 1) else {
            break;
        };
        let f0 = objective(&theta);
        let slope: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
        let mut t = 1.0;
        let mut next: Vec<f64>;
        loop {
            next = theta.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            if objective(&next) <= f0 - 1e-4 * t * slope || t < 1e-8 {
                break;
            }
            t *= 0.5;
        }
        let moved = step.iter().map(|s| (t * s).abs()).fold(0.0, f64::max);
        theta = next;
        if moved < 1e-10 {
            break;
        }
    }
    Head::Logistic {
        weights: theta[..d].iter().map(|&w| T::lit(w)).collect(),
        bias: T::lit(theta[d]),
    }
}

/// Solve `A x = b` for symmetric positive definite `A` (row-major, `n × n`).
fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let v = a[i * n + i] - s;
                if v <= 0.0 {
                    return None;
                }
                l[i * n + i] = v.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    Some(x)
}
