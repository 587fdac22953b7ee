//! Euler-Lagrange flow of the control problem in `(q, phi)` variables,
//! gradient flows of the potential, action functionals and the conserved
//! Hamiltonian.
//!
//! The covector equation is
//! `phi_i' = -1/2 (∂_i g^{jk}) phi_j phi_k + ∂_i(g^{jk} ∂_j V) phi_k`
//! and the velocity is `q'^j = g^{jl} (phi_l - ∂_l V)`. The control and the
//! mechanical velocity are derived views: `b = sharp(phi)`, `v = b - ∇V(q)`.

use nalgebra::DVector;

use crate::error::{GeoError, Result};
use crate::geometry::ChartManifold;

/// One point of the Euler-Lagrange flow: time, coordinates and covector.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub t: f64,
    pub q: DVector<f64>,
    pub phi: DVector<f64>,
}

/// States on a uniform time grid over [0, 1].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<PhaseState>,
    pub h: f64,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn first(&self) -> &PhaseState {
        &self.states[0]
    }

    pub fn last(&self) -> &PhaseState {
        self.states.last().expect("trajectory is nonempty")
    }

    /// Control components `b^j = g^{jk} phi_k` at node `i`.
    pub fn control_at(&self, m: &ChartManifold, i: usize) -> Result<DVector<f64>> {
        let s = &self.states[i];
        let (_, g_upper) = m.metric_pair(&s.q)?;
        Ok(&g_upper * &s.phi)
    }

    /// Velocity components `v = b - ∇V(q)` at node `i`.
    pub fn velocity_at(&self, m: &ChartManifold, i: usize) -> Result<DVector<f64>> {
        Ok(self.control_at(m, i)? - m.grad_potential(&self.states[i].q)?)
    }

    /// Sup-norm distance between the q-paths of two trajectories on the
    /// same grid.
    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        assert_eq!(self.states.len(), other.states.len());
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (&a.q - &b.q).amax())
            .fold(0.0, f64::max)
    }
}

/// Right-hand side of the Euler-Lagrange system: `(dq, dphi)`.
pub fn el_vector_field(m: &ChartManifold, s: &PhaseState) -> Result<(DVector<f64>, DVector<f64>)> {
    if !m.is_admissible(&s.q) {
        return Err(GeoError::outside(&s.q));
    }
    let n = m.dim();
    let g_upper = m.metric_inv_raw(&s.q);
    let dv = m.dv(&s.q)?;
    let dq = &g_upper * (&s.phi - &dv);

    let dg = m.d_metric_inv(&s.q)?;
    let coupling = m.potential_coupling(&s.q)?;
    let mut dphi = DVector::zeros(n);
    for i in 0..n {
        let quad = (s.phi.transpose() * &dg[i] * &s.phi)[(0, 0)];
        let mut lin = 0.0;
        for k in 0..n {
            lin += coupling[(i, k)] * s.phi[k];
        }
        dphi[i] = -0.5 * quad + lin;
    }
    Ok((dq, dphi))
}

fn rk4_step<F>(f: &F, t: f64, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &(y + &k1 * (0.5 * h)))?;
    let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)))?;
    let k4 = f(t + h, &(y + &k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

fn pack(q: &DVector<f64>, phi: &DVector<f64>) -> DVector<f64> {
    let n = q.len();
    let mut y = DVector::zeros(2 * n);
    y.rows_mut(0, n).copy_from(q);
    y.rows_mut(n, n).copy_from(phi);
    y
}

fn unpack(y: &DVector<f64>, n: usize) -> (DVector<f64>, DVector<f64>) {
    (y.rows(0, n).into_owned(), y.rows(n, n).into_owned())
}

/// Classical 4th-order integration of the Euler-Lagrange flow from
/// `(q0, phi0)` over [0, 1] with `N` uniform steps.
pub fn integrate_el(
    m: &ChartManifold,
    q0: &DVector<f64>,
    phi0: &DVector<f64>,
    n_steps: usize,
) -> Result<Trajectory> {
    assert!(n_steps >= 2, "need at least two steps");
    let n = m.dim();
    let rhs = |_t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let (q, phi) = unpack(y, n);
        let (dq, dphi) = el_vector_field(m, &PhaseState { t: 0.0, q, phi })?;
        Ok(pack(&dq, &dphi))
    };
    let h = 1.0 / n_steps as f64;
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(PhaseState { t: 0.0, q: q0.clone(), phi: phi0.clone() });
    let mut y = pack(q0, phi0);
    for k in 0..n_steps {
        let t = k as f64 * h;
        y = rk4_step(&rhs, t, &y, h).map_err(|e| match e {
            GeoError::OutsideDomain { .. } | GeoError::DegenerateMetric { .. } => {
                GeoError::BlowUp { t, reason: e.to_string() }
            }
            other => other,
        })?;
        let (q, phi) = unpack(&y, n);
        if !q.iter().chain(phi.iter()).all(|x| x.is_finite()) || !m.is_admissible(&q) {
            return Err(GeoError::BlowUp {
                t: t + h,
                reason: "state left the admissible domain".into(),
            });
        }
        states.push(PhaseState { t: (k + 1) as f64 * h, q, phi });
    }
    Ok(Trajectory { states, h })
}

/// Integrates `x' = sign * ∇V(x)` over [0, 1]; returns the node values.
///
/// Runs on the potential domain, so Hopf-Cole companion curves may leave the
/// metric-positive part of the chart.
pub fn gradient_flow(
    m: &ChartManifold,
    x0: &DVector<f64>,
    sign: f64,
    n_steps: usize,
) -> Result<Vec<DVector<f64>>> {
    assert!(sign == 1.0 || sign == -1.0);
    if !m.is_potential_admissible(x0) {
        return Err(GeoError::outside(x0));
    }
    let rhs =
        |_t: f64, x: &DVector<f64>| -> Result<DVector<f64>> { Ok(m.grad_potential(x)? * sign) };
    let h = 1.0 / n_steps as f64;
    let mut path = Vec::with_capacity(n_steps + 1);
    path.push(x0.clone());
    let mut x = x0.clone();
    for k in 0..n_steps {
        let t = k as f64 * h;
        x = rk4_step(&rhs, t, &x, h)
            .map_err(|e| GeoError::BlowUp { t, reason: e.to_string() })?;
        if !x.iter().all(|v| v.is_finite()) || !m.is_potential_admissible(&x) {
            return Err(GeoError::BlowUp {
                t: t + h,
                reason: "gradient flow left the domain".into(),
            });
        }
        path.push(x.clone());
    }
    Ok(path)
}

/// Trapezoid quadrature of the control action `∫ |b|^2/2 dt` and the
/// mechanical action `∫ |v|^2/2 + |∇V(q)|^2/2 dt` along a trajectory.
pub fn actions_along(m: &ChartManifold, tr: &Trajectory) -> Result<(f64, f64)> {
    let mut oc = Vec::with_capacity(tr.states.len());
    let mut mech = Vec::with_capacity(tr.states.len());
    for s in tr.states.iter() {
        let (g_lower, g_upper) = m.metric_pair(&s.q)?;
        let b = &g_upper * &s.phi;
        let grad_v = m.grad_potential(&s.q)?;
        let v = &b - &grad_v;
        oc.push(0.5 * (s.phi.dot(&b)));
        let v2 = (v.transpose() * &g_lower * &v)[(0, 0)];
        let w2 = (grad_v.transpose() * &g_lower * &grad_v)[(0, 0)];
        mech.push(0.5 * v2 + 0.5 * w2);
    }
    Ok((trapezoid(&oc, tr.h), trapezoid(&mech, tr.h)))
}

pub(crate) fn trapezoid(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let interior: f64 = values[1..values.len() - 1].iter().sum();
    h * (0.5 * values[0] + interior + 0.5 * values[values.len() - 1])
}

/// Conserved energy of the flow: `H = g^{jk} phi_j phi_k / 2 - g^{jk} ∂_j V phi_k`.
/// Equals `|v|^2/2 - |∇V|^2/2` for `v = sharp(phi) - ∇V`.
pub fn hamiltonian(m: &ChartManifold, s: &PhaseState) -> Result<f64> {
    let g_upper = m.metric_inv_raw(&s.q);
    let dv = m.dv(&s.q)?;
    let quad = (s.phi.transpose() * &g_upper * &s.phi)[(0, 0)];
    let lin = (dv.transpose() * &g_upper * &s.phi)[(0, 0)];
    Ok(0.5 * quad - lin)
}

/// Max Hamiltonian deviation from its initial value along a trajectory.
pub fn hamiltonian_drift(m: &ChartManifold, tr: &Trajectory) -> Result<f64> {
    let h0 = hamiltonian(m, tr.first())?;
    let mut worst: f64 = 0.0;
    for s in &tr.states {
        worst = worst.max((hamiltonian(m, s)? - h0).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::registry;
    use approx::assert_relative_eq;
    use nalgebra::{dvector, DMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quadratic_1d() -> ChartManifold {
        registry::euclidean_quadratic(1, Some(DMatrix::identity(1, 1)))
    }

    /// Closed-form solution of the quadratic bridge: with V = q^2/2 the flow
    /// is phi(t) = phi0 e^t, q(t) = eta0 e^t + eta0* e^{-t} where
    /// eta0 = phi0/2 and eta0* = q0 - eta0. The bridge y -> z solves the
    /// 2x2 system eta0 + eta0* = y, eta0 e + eta0*/e = z.
    fn quadratic_oracle(y: f64, z: f64) -> (f64, f64) {
        let e = std::f64::consts::E;
        let eta0 = (z - y / e) / (e - 1.0 / e);
        let eta0_star = y - eta0;
        (eta0, eta0_star)
    }

    #[test]
    fn el_field_examples() {
        let m = quadratic_1d();
        let s = PhaseState { t: 0.0, q: dvector![1.0], phi: dvector![1.3888] };
        let (dq, dphi) = el_vector_field(&m, &s).unwrap();
        assert_relative_eq!(dq[0], 0.3888, epsilon = 1e-12);
        assert_relative_eq!(dphi[0], 1.3888, epsilon = 1e-12);

        // rest point: phi = 0, V == 0
        let m0 = registry::euclidean_quadratic(2, None);
        let s = PhaseState { t: 0.0, q: dvector![0.3, 0.7], phi: dvector![0.0, 0.0] };
        let (dq, dphi) = el_vector_field(&m0, &s).unwrap();
        assert!(dq.amax() < 1e-15 && dphi.amax() < 1e-15);

        // cone c = d = 1 at (q, phi) = (1, 4): dq = 2, dphi = -4
        let m = registry::cone_entropy(1.0, 1.0);
        let s = PhaseState { t: 0.0, q: dvector![1.0], phi: dvector![4.0] };
        let (dq, dphi) = el_vector_field(&m, &s).unwrap();
        assert_relative_eq!(dq[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(dphi[0], -4.0, epsilon = 1e-12);
    }

    #[test]
    fn integrate_el_quadratic_closed_form() {
        let m = quadratic_1d();
        let (eta0, eta0_star) = quadratic_oracle(1.0, 2.0);
        let phi0 = 2.0 * eta0;
        let tr = integrate_el(&m, &dvector![1.0], &dvector![phi0], 1000).unwrap();
        assert!((tr.last().q[0] - 2.0).abs() < 1e-6);
        // whole path against the closed form
        for s in &tr.states {
            let exact = eta0 * s.t.exp() + eta0_star * (-s.t).exp();
            assert!((s.q[0] - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn geodesic_is_straight_line() {
        let m = registry::euclidean_quadratic(2, None);
        let y = dvector![0.0, 1.0];
        let z = dvector![1.0, -1.0];
        let tr = integrate_el(&m, &y, &(&z - &y), 100).unwrap();
        for s in &tr.states {
            let exact = &y + (&z - &y) * s.t;
            assert!((&s.q - exact).amax() < 1e-12);
        }
    }

    #[test]
    fn hamiltonian_examples_and_drift() {
        let m = quadratic_1d();
        let s = PhaseState { t: 0.0, q: dvector![1.0], phi: dvector![1.3888] };
        let h = hamiltonian(&m, &s).unwrap();
        assert_relative_eq!(h, 0.5 * 1.3888f64.powi(2) - 1.3888, epsilon = 1e-12);
        assert!((h + 0.424420).abs() < 1e-5);
        // cross-check against mechanical energy |v|^2/2 - |grad V|^2/2
        let v = 0.3888;
        assert_relative_eq!(h, 0.5 * v * v - 0.5, epsilon = 1e-10);

        // phi = 0 gives H = 0 for any V
        let s0 = PhaseState { t: 0.0, q: dvector![0.7], phi: dvector![0.0] };
        assert_eq!(hamiltonian(&m, &s0).unwrap(), 0.0);

        let tr = integrate_el(&m, &dvector![1.0], &dvector![1.3888], 1000).unwrap();
        assert!(hamiltonian_drift(&m, &tr).unwrap() < 1e-8);
        let m = registry::cone_entropy(1.0, 1.0);
        let tr = integrate_el(&m, &dvector![1.0], &dvector![3.0], 1000).unwrap();
        assert!(hamiltonian_drift(&m, &tr).unwrap() < 1e-8);
    }

    #[test]
    fn gradient_flow_closed_forms() {
        // cone c = d = 1: grad V = q + 1, x(1) = 2e - 1
        let m = registry::cone_entropy(1.0, 1.0);
        let path = gradient_flow(&m, &dvector![1.0], 1.0, 1000).unwrap();
        assert!((path.last().unwrap()[0] - (2.0 * std::f64::consts::E - 1.0)).abs() < 1e-6);

        // V == 0: constant path
        let m0 = registry::euclidean_quadratic(1, None);
        let path = gradient_flow(&m0, &dvector![0.4], 1.0, 50).unwrap();
        assert!(path.iter().all(|x| x[0] == 0.4));

        // Euclidean V = q^2/2 backward: x(1) = 1/e
        let m = quadratic_1d();
        let path = gradient_flow(&m, &dvector![1.0], -1.0, 1000).unwrap();
        assert!((path.last().unwrap()[0] - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn actions_examples() {
        // straight line, V == 0: both actions are |z - y|^2 / 2
        let m0 = registry::euclidean_quadratic(1, None);
        let tr = integrate_el(&m0, &dvector![1.0], &dvector![1.0], 200).unwrap();
        let (a_oc, a_m) = actions_along(&m0, &tr).unwrap();
        assert_relative_eq!(a_oc, 0.5, epsilon = 1e-12);
        assert_relative_eq!(a_m, 0.5, epsilon = 1e-12);

        // quadratic optimum: A_oc - A_m = V(2) - V(1) = 1.5
        let m = quadratic_1d();
        let (eta0, _) = quadratic_oracle(1.0, 2.0);
        let tr = integrate_el(&m, &dvector![1.0], &dvector![2.0 * eta0], 1000).unwrap();
        let (a_oc, a_m) = actions_along(&m, &tr).unwrap();
        assert!((a_oc - a_m - 1.5).abs() < 1e-6);
    }

    /// The change-of-variables identity holds pointwise on arbitrary states:
    /// |b|^2/2 - |v|^2/2 - |∇V|^2/2 - <dV, dq> = 0.
    #[test]
    fn pointwise_change_of_variables() {
        let m = registry::cone_entropy(1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let q = dvector![rng.gen_range(0.4..3.0)];
            let phi = dvector![rng.gen_range(-2.0..4.0)];
            let s = PhaseState { t: 0.0, q: q.clone(), phi: phi.clone() };
            let (dq, _) = el_vector_field(&m, &s).unwrap();
            let (g_lower, g_upper) = m.metric_pair(&q).unwrap();
            let b = &g_upper * &phi;
            let grad_v = m.grad_potential(&q).unwrap();
            let v = &b - &grad_v;
            let dv = m.dv(&q).unwrap();
            let b2 = (b.transpose() * &g_lower * &b)[(0, 0)];
            let v2 = (v.transpose() * &g_lower * &v)[(0, 0)];
            let w2 = (grad_v.transpose() * &g_lower * &grad_v)[(0, 0)];
            let resid = 0.5 * b2 - 0.5 * v2 - 0.5 * w2 - dv.dot(&dq);
            assert!(resid.abs() < 1e-10, "residual {resid}");
        }
    }

    /// Flipping V -> -V and shifting phi0 -> phi0 - 2 dV(q0) gives the same
    /// q-path (the b <-> b* change of variables).
    #[test]
    fn sign_flip_symmetry() {
        let a = DMatrix::identity(1, 1);
        let m_plus = registry::euclidean_quadratic(1, Some(a.clone()));
        let m_minus = registry::euclidean_quadratic(1, Some(-a));
        let q0 = dvector![1.0];
        let phi0 = dvector![1.5];
        let shifted = &phi0 - m_plus.dv(&q0).unwrap() * 2.0;
        let tr_plus = integrate_el(&m_plus, &q0, &phi0, 500).unwrap();
        let tr_minus = integrate_el(&m_minus, &q0, &shifted, 500).unwrap();
        assert!(tr_plus.sup_distance(&tr_minus) < 1e-8);
    }

    /// Halving h cuts the endpoint error by about 2^4.
    #[test]
    fn integrator_order_is_four() {
        let m = quadratic_1d();
        let (eta0, eta0_star) = quadratic_oracle(1.0, 2.0);
        let phi0 = dvector![2.0 * eta0];
        let exact = eta0 * 1.0f64.exp() + eta0_star * (-1.0f64).exp();
        let err = |n: usize| {
            let tr = integrate_el(&m, &dvector![1.0], &phi0, n).unwrap();
            (tr.last().q[0] - exact).abs()
        };
        let ratio = err(8) / err(16);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn blow_up_reports_time() {
        // Riccati blow-up on the cone for strongly negative phi0: q' < 0
        // drives q to the chart boundary.
        let m = registry::cone_entropy(1.0, 1.0);
        match integrate_el(&m, &dvector![0.2], &dvector![-30.0], 100) {
            Err(GeoError::BlowUp { t, .. }) => assert!((0.0..=1.0).contains(&t)),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }
}
