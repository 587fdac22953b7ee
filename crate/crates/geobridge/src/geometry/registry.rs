//! Built-in charts, addressable by name from scenario configs.

use nalgebra::{DMatrix, DVector};

use super::ChartManifold;
use crate::error::{GeoError, Result};

/// Euclidean chart with quadratic potential `V(q) = q' A q / 2`.
/// `a = None` means `V == 0` (the geodesic case).
pub fn euclidean_quadratic(n: usize, a: Option<DMatrix<f64>>) -> ChartManifold {
    let a = a.unwrap_or_else(|| DMatrix::zeros(n, n));
    assert_eq!(a.nrows(), n);
    assert_eq!(a.ncols(), n);
    let a2 = a.clone();
    let a3 = a.clone();
    ChartManifold::new(
        n,
        move |_q: &DVector<f64>| DMatrix::identity(n, n),
        move |q: &DVector<f64>| 0.5 * (q.transpose() * &a * q)[(0, 0)],
    )
    .with_dv(move |q| &a2 * q)
    .with_hess_v(move |_q| a3.clone())
    .with_d_metric_inv(move |_q| vec![DMatrix::zeros(n, n); n])
}

/// Euclidean chart with linear potential `V(q) = f . q`.
///
/// Satisfies both constancy assumptions but its Hessian is identically
/// zero, so the Hopf-Cole hypotheses fail: the transformation must refuse.
pub fn linear_potential(f: DVector<f64>) -> ChartManifold {
    let n = f.len();
    let f2 = f.clone();
    ChartManifold::new(
        n,
        move |_q: &DVector<f64>| DMatrix::identity(n, n),
        move |q: &DVector<f64>| f.dot(q),
    )
    .with_dv(move |_q| f2.clone())
    .with_hess_v(move |_q| DMatrix::zeros(n, n))
    .with_d_metric_inv(move |_q| vec![DMatrix::zeros(n, n); n])
}

/// One-dimensional cone chart: `g^{11}(q) = q` on q > 0, potential
/// `V(q) = c q + d ln q`.
///
/// The potential derivative `c + d/q` continues smoothly across q < 0, which
/// the Hopf-Cole variables use; hence the wider potential guard.
pub fn cone_entropy(c: f64, d: f64) -> ChartManifold {
    ChartManifold::new(
        1,
        |q: &DVector<f64>| DMatrix::from_element(1, 1, q[0]),
        move |q: &DVector<f64>| c * q[0] + d * q[0].abs().ln(),
    )
    .with_dv(move |q| DVector::from_element(1, c + d / q[0]))
    .with_hess_v(move |q| DMatrix::from_element(1, 1, -d / (q[0] * q[0])))
    .with_d_metric_inv(|_q| vec![DMatrix::from_element(1, 1, 1.0)])
    .with_domain_guard(|q| q[0] > 0.0)
    .with_potential_guard(|q| q[0].abs() > 1e-12)
}

/// Polar chart of the 2-sphere: `g = diag(1, sin^2 q1)` on 0 < q1 < pi,
/// with `V(q) = |q|^2 / 2`.
///
/// `∂_1 g^{22} = -2 cos q1 / sin^3 q1` is not constant, so the metric
/// constancy assumption fails; the chart is the built-in negative case.
pub fn sphere_polar() -> ChartManifold {
    ChartManifold::new(
        2,
        |q: &DVector<f64>| {
            let s = q[0].sin();
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0 / (s * s)]))
        },
        |q: &DVector<f64>| 0.5 * q.dot(q),
    )
    .with_dv(|q| q.clone())
    .with_hess_v(|_q| DMatrix::identity(2, 2))
    .with_d_metric_inv(|q| {
        let s = q[0].sin();
        let mut d1 = DMatrix::zeros(2, 2);
        d1[(1, 1)] = -2.0 * q[0].cos() / (s * s * s);
        vec![d1, DMatrix::zeros(2, 2)]
    })
    .with_domain_guard(|q| q[0] > 1e-6 && q[0] < std::f64::consts::PI - 1e-6)
}

/// Resolve a chart by registry name with numeric parameters.
///
/// Names: "euclidean" (n, optional diagonal coefficient `a` for
/// `V = a |q|^2 / 2`), "cone-entropy" (c, d), "linear-potential" (f vector),
/// "sphere-polar".
pub fn by_name(name: &str, n: usize, params: &[f64]) -> Result<ChartManifold> {
    match name {
        "euclidean" => {
            let a = match params {
                [] => None,
                [a] => Some(DMatrix::identity(n, n) * *a),
                _ => {
                    if params.len() != n * n {
                        return Err(GeoError::Config(format!(
                            "euclidean chart expects 0, 1 or {} parameters, got {}",
                            n * n,
                            params.len()
                        )));
                    }
                    Some(DMatrix::from_row_slice(n, n, params))
                }
            };
            Ok(euclidean_quadratic(n, a))
        }
        "cone-entropy" => {
            if params.len() != 2 {
                return Err(GeoError::Config("cone-entropy expects params [c, d]".into()));
            }
            Ok(cone_entropy(params[0], params[1]))
        }
        "linear-potential" => {
            if params.len() != n {
                return Err(GeoError::Config(format!(
                    "linear-potential expects an f-vector of length {n}"
                )));
            }
            Ok(linear_potential(DVector::from_row_slice(params)))
        }
        "sphere-polar" => {
            if n != 2 {
                return Err(GeoError::Config("sphere-polar is two-dimensional".into()));
            }
            Ok(sphere_polar())
        }
        other => Err(GeoError::Config(format!("unknown chart: {other}"))),
    }
}
