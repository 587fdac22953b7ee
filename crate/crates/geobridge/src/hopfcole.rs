//! The geometric Hopf-Cole transformation and its hypotheses.
//!
//! When `∂_i g^{jk}` and `∂_i (g^{jk} ∂_k V)` are constant over the chart,
//! the change of variables `2 dV(η) = φ`, `-2 dV(η*) = φ - 2 dV(q)`
//! uncouples the Euler-Lagrange system into a backward and a forward
//! gradient flow of `V`: `η' = ∇V(η)`, `η*' = -∇V(η*)`. This module checks
//! the hypotheses on sample points ([`check_assumptions`]), applies the
//! transformation node-wise along a trajectory ([`hopf_cole_forward`]),
//! inverts it ([`reconstruct`]), and solves the bridge problem by a
//! fixed-point iteration on the flow endpoints ([`schrodinger_fixed_point`]),
//! the geometric analogue of the Schrödinger system of entropic optimal
//! transport.

use nalgebra::{DMatrix, DVector};

use crate::bvp::{BridgeSolution, BridgeSpec};
use crate::dynamics::{self, PhaseState, Trajectory};
use crate::error::{GeoError, Result};
use crate::geometry::ChartManifold;

/// Sample-based verdict on the transformation's hypotheses.
///
/// `metric_ok` / `potential_ok` cover the two coordinate-constancy
/// assumptions; `dv_invertible` and `hessian_injective` cover the
/// change-of-variables hypotheses.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub metric_ok: bool,
    /// Max entrywise spread of `∂_i g^{jk}` across the sample.
    pub metric_deviation: f64,
    pub potential_ok: bool,
    /// Max entrywise spread of `∂_i (g^{jk} ∂_k V)` across the sample.
    pub potential_deviation: f64,
    /// Newton inversion of `dV` recovered every sample point.
    pub dv_invertible: bool,
    pub hessian_injective: bool,
    /// Min singular value of `∂²_{ij} V` over the sample.
    pub min_hessian_sv: f64,
    pub sample_points: Vec<DVector<f64>>,
    pub tol: f64,
}

impl AssumptionReport {
    /// All four hypotheses hold.
    pub fn pass(&self) -> bool {
        self.metric_ok && self.potential_ok && self.dv_invertible && self.hessian_injective
    }
}

/// Newton tolerance for `dV` inversions (supports 1e-10 roundtrips).
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 60;

/// Damped Newton solve of `dV(x) = target`, starting from `x0` and falling
/// back to reflected/shifted starts — `dV` may be branch-wise monotone
/// (e.g. `c + d/q`), and Newton cannot cross a pole.
///
/// Runs on the potential domain (not the metric-positive part of the
/// chart), so companion curves may continue across metric degeneracies.
fn invert_dv(
    m: &ChartManifold,
    target: &DVector<f64>,
    x0: &DVector<f64>,
    at_time: Option<f64>,
) -> Result<DVector<f64>> {
    let starts = [
        x0.clone(),
        -x0,
        x0.map(|v| v + 1.0),
        x0.map(|v| v - 1.0),
        x0 * 0.25,
        x0 * -0.25,
    ];
    let mut last = GeoError::NewtonFailure {
        at_time,
        reason: "no feasible start for dV inversion".into(),
    };
    for s in &starts {
        match invert_dv_from(m, target, s, at_time) {
            Ok(x) => return Ok(x),
            Err(e) => last = e,
        }
    }
    Err(last)
}

fn invert_dv_from(
    m: &ChartManifold,
    target: &DVector<f64>,
    x0: &DVector<f64>,
    at_time: Option<f64>,
) -> Result<DVector<f64>> {
    let fail = |reason: String| GeoError::NewtonFailure { at_time, reason };
    if !m.is_potential_admissible(x0) {
        return Err(fail(format!("infeasible start {x0:?}")));
    }
    let mut x = x0.clone();
    let mut r = m.dv(&x)? - target;
    for _ in 0..NEWTON_MAX_ITER {
        if r.amax() <= NEWTON_TOL {
            return Ok(x);
        }
        let hess = m.hess_v(&x)?;
        let delta = hess
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| fail("singular Hessian in dV inversion".into()))?;
        let mut step = 1.0;
        let mut advanced = false;
        for _ in 0..40 {
            let cand = &x + &delta * step;
            if m.is_potential_admissible(&cand) {
                if let Ok(rc) = m.dv(&cand).map(|d| d - target) {
                    if rc.amax() < r.amax() {
                        x = cand;
                        r = rc;
                        advanced = true;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if !advanced {
            return Err(fail(format!("dV inversion stalled at residual {:.3e}", r.amax())));
        }
    }
    if r.amax() <= NEWTON_TOL {
        Ok(x)
    } else {
        Err(fail(format!("dV inversion did not converge, residual {:.3e}", r.amax())))
    }
}

/// Max entrywise spread (max minus min per entry) of a matrix sample.
fn spread(mats: &[DMatrix<f64>]) -> f64 {
    let (r, c) = mats[0].shape();
    let mut dev: f64 = 0.0;
    for i in 0..r {
        for j in 0..c {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for m in mats {
                lo = lo.min(m[(i, j)]);
                hi = hi.max(m[(i, j)]);
            }
            dev = dev.max(hi - lo);
        }
    }
    dev
}

/// Evaluates the transformation hypotheses on `sample` (at least 10
/// admissible points). With `tol = None` the threshold defaults to 1e-8
/// when analytic derivative callbacks are installed and 1e-4 with
/// finite-difference fallbacks.
pub fn check_assumptions(
    m: &ChartManifold,
    sample: &[DVector<f64>],
    tol: Option<f64>,
) -> Result<AssumptionReport> {
    assert!(sample.len() >= 10, "need at least 10 sample points");
    let tol = tol.unwrap_or(if m.has_analytic_derivatives() { 1e-8 } else { 1e-4 });
    let n = m.dim();

    // Assumption on the metric: stack the n slice matrices side by side so
    // one spread over the sample covers every (i, j, k).
    let mut dg_flat = Vec::with_capacity(sample.len());
    let mut coupling = Vec::with_capacity(sample.len());
    for q in sample {
        if !m.is_admissible(q) {
            return Err(GeoError::outside(q));
        }
        let slices = m.d_metric_inv(q)?;
        let mut flat = DMatrix::zeros(n, n * n);
        for (i, s) in slices.iter().enumerate() {
            flat.view_mut((0, i * n), (n, n)).copy_from(s);
        }
        dg_flat.push(flat);
        coupling.push(m.potential_coupling(q)?);
    }
    let metric_deviation = spread(&dg_flat);
    let potential_deviation = spread(&coupling);

    // dV invertibility: recover each sample point from a perturbed start.
    let mut dv_invertible = true;
    let mut min_hessian_sv = f64::INFINITY;
    for q in sample {
        let sv = m.hess_v(q)?.singular_values();
        min_hessian_sv = min_hessian_sv.min(sv[sv.len() - 1]);
        let start = q.map(|v| v + 0.05 * v.abs().max(1.0));
        let recovered = match m.dv(q).and_then(|t| invert_dv(m, &t, &start, None)) {
            Ok(x) => (x - q).amax() <= 1e-6,
            Err(_) => false,
        };
        dv_invertible = dv_invertible && recovered;
    }

    Ok(AssumptionReport {
        metric_ok: metric_deviation <= tol,
        metric_deviation,
        potential_ok: potential_deviation <= tol,
        potential_deviation,
        dv_invertible,
        hessian_injective: min_hessian_sv > 1e-8,
        min_hessian_sv,
        sample_points: sample.to_vec(),
        tol,
    })
}

/// The transformed pair of companion curves with their gradient-flow
/// residuals (centered finite differences in time against `±∇V`).
#[derive(Debug, Clone)]
pub struct HopfColePair {
    pub eta: Vec<DVector<f64>>,
    pub eta_star: Vec<DVector<f64>>,
    pub h: f64,
    /// `max_t |η' - ∇V(η)|` over interior nodes.
    pub eta_residual: f64,
    /// `max_t |η*' + ∇V(η*)|` over interior nodes.
    pub eta_star_residual: f64,
}

impl HopfColePair {
    pub fn flow_residual(&self) -> f64 {
        self.eta_residual.max(self.eta_star_residual)
    }
}

/// FD residual of `x' = sign * ∇V(x)` along a node path.
fn flow_residual(m: &ChartManifold, path: &[DVector<f64>], h: f64, sign: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 1..path.len() - 1 {
        let deriv = (&path[k + 1] - &path[k - 1]) / (2.0 * h);
        let grad = m.grad_potential(&path[k])?;
        worst = worst.max((deriv - grad * sign).amax());
    }
    Ok(worst)
}

/// Sample points for the hypothesis check of a trajectory: its q-nodes,
/// thinned to about 16 and padded with midpoints when the grid is tiny.
fn trajectory_sample(tr: &Trajectory) -> Vec<DVector<f64>> {
    let qs: Vec<&DVector<f64>> = tr.states.iter().map(|s| &s.q).collect();
    let stride = (qs.len() / 16).max(1);
    let mut sample: Vec<DVector<f64>> = qs.iter().step_by(stride).map(|q| (*q).clone()).collect();
    let last = qs[qs.len() - 1];
    if (&sample[sample.len() - 1] - last).amax() > 0.0 {
        sample.push(last.clone());
    }
    let mut k = 0;
    while sample.len() < 10 {
        let mid = (&sample[k] + &sample[k + 1]) * 0.5;
        sample.insert(k + 1, mid);
        k += 2;
    }
    sample
}

/// Applies the transformation node-wise along `tr` after verifying the
/// hypotheses on the trajectory's own q-nodes; refuses with a
/// [`GeoError::HypothesisViolation`] when they fail.
pub fn hopf_cole_forward(m: &ChartManifold, tr: &Trajectory) -> Result<HopfColePair> {
    let report = check_assumptions(m, &trajectory_sample(tr), None)?;
    if !report.pass() {
        return Err(GeoError::HypothesisViolation(format!(
            "metric_ok={} potential_ok={} dv_invertible={} hessian_injective={}",
            report.metric_ok, report.potential_ok, report.dv_invertible, report.hessian_injective
        )));
    }
    hopf_cole_forward_unchecked(m, tr)
}

/// Same as [`hopf_cole_forward`] but without the hypothesis check; used to
/// demonstrate that the gradient-flow reduction genuinely fails (bounded
/// residuals away from zero) on charts violating the assumptions.
pub fn hopf_cole_forward_unchecked(m: &ChartManifold, tr: &Trajectory) -> Result<HopfColePair> {
    let mut eta = Vec::with_capacity(tr.states.len());
    let mut eta_star = Vec::with_capacity(tr.states.len());
    for s in &tr.states {
        // 2 dV(η) = φ, started from q
        let e = invert_dv(m, &(&s.phi * 0.5), &s.q, Some(s.t))?;
        // -2 dV(η*) = φ - 2 dV(q), started from the flat-chart guess q - ♯φ/2
        let target = m.dv(&s.q)? - &s.phi * 0.5;
        let guess = &s.q - m.metric_inv_raw(&s.q) * &s.phi * 0.5;
        let start = if m.is_potential_admissible(&guess) { guess } else { s.q.clone() };
        let es = invert_dv(m, &target, &start, Some(s.t))?;
        eta.push(e);
        eta_star.push(es);
    }
    let eta_residual = flow_residual(m, &eta, tr.h, 1.0)?;
    let eta_star_residual = flow_residual(m, &eta_star, tr.h, -1.0)?;
    Ok(HopfColePair { eta, eta_star, h: tr.h, eta_residual, eta_star_residual })
}

/// Inverts the transformation at one node: solves `dV(q) = dV(η) + dV(η*)`
/// and returns `(q, φ)` with `φ = 2 dV(η)`.
pub fn reconstruct(
    m: &ChartManifold,
    eta: &DVector<f64>,
    eta_star: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let dv_eta = m.dv(eta)?;
    let target = &dv_eta + m.dv(eta_star)?;
    let start = eta + eta_star;
    let start = if m.is_potential_admissible(&start) { start } else { eta.clone() };
    let q = invert_dv(m, &target, &start, None)?;
    Ok((q, dv_eta * 2.0))
}

/// Knobs for [`schrodinger_fixed_point`].
#[derive(Debug, Clone)]
pub struct SchrodingerOptions {
    pub max_iter: usize,
    /// Stop when the fixed-point residual `|g(η*₀) - η*₀|` (max norm) —
    /// equivalently the move of successive iterates — falls below this.
    pub tol: f64,
    /// Damping factor in (0, 1] on the `η*₀` update.
    pub omega: f64,
}

impl Default for SchrodingerOptions {
    fn default() -> Self {
        SchrodingerOptions { max_iter: 200, tol: 1e-12, omega: 1.0 }
    }
}

/// Solves the bridge problem by alternating flows and boundary couplings:
///
/// 1. flow `η*` forward by `-∇V` from `η*₀`;
/// 2. couple at `t = 1`: solve `dV(η₁) = dV(z) - dV(η*₁)`;
/// 3. flow `η` backward by `∇V` from `η₁` (as a forward flow of
///    `ζ(s) = η(1-s)`);
/// 4. couple at `t = 0`: solve `dV(η*₀) = dV(y) - dV(η₀)`;
///
/// until the fixed-point residual of the `η*₀` sweep settles. The physical
/// fixed point can repel plain Picard sweeps (on the cone chart the sweep
/// has slope > 1 there and drifts to a spurious solution through a `dV`
/// pole), so the root of `g(η*₀) - η*₀` is found by a damped Newton with a
/// finite-difference Jacobian instead; `omega` scales the Newton step. The
/// returned solution carries the trajectory reconstructed node-wise from
/// the converged pair; when the iteration hits `max_iter` it is returned
/// with `converged = false`.
pub fn schrodinger_fixed_point(
    spec: &BridgeSpec,
    opts: &SchrodingerOptions,
) -> Result<(HopfColePair, BridgeSolution)> {
    let m = &spec.manifold;
    let n_steps = spec.n_steps;
    let report = check_assumptions(
        m,
        &trajectory_sample(&line_trajectory(&spec.y, &spec.z, n_steps)),
        None,
    )?;
    if !report.pass() {
        return Err(GeoError::HypothesisViolation(
            "fixed-point solver requires the gradient-flow reduction".into(),
        ));
    }

    let dv_y = m.dv(&spec.y)?;
    let dv_z = m.dv(&spec.z)?;
    // one sweep of the four steps: η*₀ -> (η*₀ sweep image, both paths)
    type Paths = (Vec<DVector<f64>>, Vec<DVector<f64>>);
    let sweep = |x: &DVector<f64>| -> Result<(DVector<f64>, Paths)> {
        let eta_star_path = dynamics::gradient_flow(m, x, -1.0, n_steps)?;
        let eta_star1 = eta_star_path.last().unwrap();
        let eta1 = invert_dv(m, &(&dv_z - m.dv(eta_star1)?), &spec.z, Some(1.0))?;
        let zeta = dynamics::gradient_flow(m, &eta1, -1.0, n_steps)?;
        let eta_path: Vec<DVector<f64>> = zeta.into_iter().rev().collect();
        let image = invert_dv(m, &(&dv_y - m.dv(&eta_path[0])?), x, Some(0.0))?;
        Ok((image, (eta_path, eta_star_path)))
    };

    // initial η*₀ from the flat-chart guess with the chord covector
    let (g_lower, _) = m.metric_pair(&spec.y)?;
    let phi_chord = &g_lower * (&spec.z - &spec.y) + &dv_y;
    let guess = &spec.y - m.metric_inv_raw(&spec.y) * &phi_chord * 0.5;
    let mut x = if m.is_potential_admissible(&guess) { guess } else { spec.y.clone() };

    let n = m.dim();
    let (image, mut paths) = sweep(&x)?;
    let mut resid = image - &x;
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        if resid.amax() <= opts.tol {
            converged = true;
            break;
        }
        // finite-difference Jacobian of x -> g(x) - x
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = 1e-6 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            xp[j] += h;
            let col = match sweep(&xp) {
                Ok((gp, _)) => (gp - &xp - &resid) / h,
                Err(_) => {
                    let mut xm = x.clone();
                    xm[j] -= h;
                    let (gm, _) = sweep(&xm)?;
                    (&resid - (gm - xm)) / h
                }
            };
            jac.set_column(j, &col);
        }
        let delta = jac.lu().solve(&(-&resid)).ok_or_else(|| GeoError::NewtonFailure {
            at_time: Some(0.0),
            reason: "singular Jacobian in fixed-point solve".into(),
        })?;
        let mut advanced = false;
        let mut step = opts.omega;
        for _ in 0..30 {
            let cand = &x + &delta * step;
            if let Ok((gc, pc)) = sweep(&cand) {
                let rc = &gc - &cand;
                if rc.amax() < resid.amax() {
                    x = cand;
                    paths = pc;
                    resid = rc;
                    advanced = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !advanced {
            break;
        }
    }
    let (eta_path, eta_star_path) = paths;

    // reconstruct the trajectory node by node
    let h = 1.0 / n_steps as f64;
    let mut states = Vec::with_capacity(n_steps + 1);
    for k in 0..=n_steps {
        let (q, phi) = reconstruct(m, &eta_path[k], &eta_star_path[k])?;
        states.push(PhaseState { t: k as f64 * h, q, phi });
    }
    let tr = Trajectory { states, h };
    let (a_oc, a_m) = dynamics::actions_along(m, &tr)?;
    let h0 = dynamics::hamiltonian(m, tr.first())?;
    let residual = (&tr.last().q - &spec.z).amax();
    let phi0 = tr.first().phi.clone();
    let eta_residual = flow_residual(m, &eta_path, h, 1.0)?;
    let eta_star_residual = flow_residual(m, &eta_star_path, h, -1.0)?;
    let pair = HopfColePair {
        eta: eta_path,
        eta_star: eta_star_path,
        h,
        eta_residual,
        eta_star_residual,
    };
    let sol = BridgeSolution { trajectory: tr, phi0, a_oc, a_m, h0, converged, residual, iterations };
    Ok((pair, sol))
}

/// Straight chart line from `y` to `z` as a (φ = 0) trajectory; used only
/// to harvest sample points for hypothesis checks.
fn line_trajectory(y: &DVector<f64>, z: &DVector<f64>, n_steps: usize) -> Trajectory {
    let h = 1.0 / n_steps as f64;
    let states = (0..=n_steps)
        .map(|k| {
            let t = k as f64 * h;
            PhaseState { t, q: y * (1.0 - t) + z * t, phi: DVector::zeros(y.len()) }
        })
        .collect();
    Trajectory { states, h }
}

/// Max spread of the covector equation's right-hand side over base points
/// at a fixed covector — zero exactly when the equation does not depend
/// on q, the coordinate form of the uncoupling property.
pub fn covector_rhs_spread(
    m: &ChartManifold,
    phi: &DVector<f64>,
    sample: &[DVector<f64>],
) -> Result<f64> {
    let mut rhs = Vec::with_capacity(sample.len());
    for q in sample {
        let s = PhaseState { t: 0.0, q: q.clone(), phi: phi.clone() };
        let (_, dphi) = dynamics::el_vector_field(m, &s)?;
        rhs.push(DMatrix::from_column_slice(m.dim(), 1, dphi.as_slice()));
    }
    Ok(spread(&rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvp;
    use crate::geometry::registry;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_1d(lo: f64, hi: f64, n: usize) -> Vec<DVector<f64>> {
        (0..n).map(|k| dvector![lo + (hi - lo) * k as f64 / (n - 1) as f64]).collect()
    }

    #[test]
    fn assumptions_quadratic_and_cone_pass() {
        let m = registry::euclidean_quadratic(1, Some(DMatrix::identity(1, 1)));
        let rep = check_assumptions(&m, &sample_1d(-2.0, 2.0, 12), None).unwrap();
        assert!(rep.pass(), "{rep:?}");
        assert!(rep.metric_deviation < 1e-12 && rep.potential_deviation < 1e-12);

        // g^{11} = q, V = cq + d ln q: d g^{11} = 1, ∂(g^{11} V') = c
        let m = registry::cone_entropy(1.0, 1.0);
        let rep = check_assumptions(&m, &sample_1d(0.5, 3.0, 12), None).unwrap();
        assert!(rep.pass(), "{rep:?}");
    }

    #[test]
    fn assumptions_sphere_fails_metric() {
        let m = registry::sphere_polar();
        let sample: Vec<_> =
            (0..12).map(|k| dvector![0.5 + 0.15 * k as f64, 0.3 + 0.1 * k as f64]).collect();
        let rep = check_assumptions(&m, &sample, None).unwrap();
        assert!(!rep.metric_ok);
        assert!(rep.metric_deviation > 1e-2);
        assert!(!rep.pass());
    }

    #[test]
    fn assumptions_linear_potential_has_flat_hessian() {
        let m = registry::linear_potential(dvector![1.0, -0.5]);
        let sample: Vec<_> =
            (0..12).map(|k| dvector![k as f64 * 0.3 - 1.5, 0.2 * k as f64]).collect();
        let rep = check_assumptions(&m, &sample, None).unwrap();
        assert!(rep.metric_ok && rep.potential_ok);
        assert!(!rep.hessian_injective && !rep.dv_invertible);
        assert!(rep.min_hessian_sv < 1e-12);
    }

    #[test]
    fn forward_quadratic_matches_closed_form() {
        let m = registry::euclidean_quadratic(1, Some(DMatrix::identity(1, 1)));
        let spec = bvp::BridgeSpec::new(m.clone(), dvector![1.0], dvector![2.0], 1000);
        let sol = bvp::solve_shooting(&spec).unwrap();
        let pair = hopf_cole_forward(&m, &sol.trajectory).unwrap();

        let e = std::f64::consts::E;
        let eta0 = (2.0 - 1.0 / e) / (e - 1.0 / e);
        for (k, s) in sol.trajectory.states.iter().enumerate() {
            let exact_eta = eta0 * s.t.exp();
            let exact_star = (1.0 - eta0) * (-s.t).exp();
            assert!((pair.eta[k][0] - exact_eta).abs() < 1e-6);
            assert!((pair.eta_star[k][0] - exact_star).abs() < 1e-6);
        }
        assert!(pair.flow_residual() < 1e-6, "residual {}", pair.flow_residual());
    }

    #[test]
    fn forward_cone_algebraic_inversion() {
        // 2(c + d/η) = φ  ⇒  η = 2d / (φ - 2c)
        let (c, d) = (1.0, 1.0);
        let m = registry::cone_entropy(c, d);
        let spec = bvp::BridgeSpec::new(m.clone(), dvector![1.0], dvector![3.0], 1000);
        let sol = bvp::solve_shooting(&spec).unwrap();
        let pair = hopf_cole_forward(&m, &sol.trajectory).unwrap();
        for (k, s) in sol.trajectory.states.iter().enumerate() {
            let exact = 2.0 * d / (s.phi[0] - 2.0 * c);
            assert!((pair.eta[k][0] - exact).abs() < 1e-9);
        }
        assert!(pair.flow_residual() < 1e-5, "residual {}", pair.flow_residual());
    }

    #[test]
    fn forward_refuses_flat_potential() {
        let m = registry::euclidean_quadratic(1, None); // V == 0
        let spec = bvp::BridgeSpec::new(m.clone(), dvector![0.0], dvector![1.0], 50);
        let sol = bvp::solve_shooting(&spec).unwrap();
        let err = hopf_cole_forward(&m, &sol.trajectory).unwrap_err();
        assert!(matches!(err, GeoError::HypothesisViolation(_)), "{err}");
    }

    #[test]
    fn sphere_reduction_genuinely_fails() {
        let m = registry::sphere_polar();
        let spec = bvp::BridgeSpec::new(m.clone(), dvector![0.6, 0.4], dvector![1.1, 1.0], 400);
        let sol = bvp::solve_shooting(&spec).unwrap();
        assert!(sol.converged);
        assert!(matches!(
            hopf_cole_forward(&m, &sol.trajectory),
            Err(GeoError::HypothesisViolation(_))
        ));
        let pair = hopf_cole_forward_unchecked(&m, &sol.trajectory).unwrap();
        assert!(pair.flow_residual() >= 1e-2, "residual {}", pair.flow_residual());
    }

    #[test]
    fn reconstruct_hand_examples() {
        // V = q²/2: dV(q) = q, so q = η + η*
        let m = registry::euclidean_quadratic(1, Some(DMatrix::identity(1, 1)));
        let (q, phi) = reconstruct(&m, &dvector![0.6944], &dvector![0.3056]).unwrap();
        assert!((q[0] - 1.0).abs() < 1e-12);
        assert!((phi[0] - 1.3888).abs() < 1e-12);

        // cone c = d = 1: 1 + 1/q = 2 (1 + 1/2)  ⇒  q = 1/2, φ = 3
        let m = registry::cone_entropy(1.0, 1.0);
        let (q, phi) = reconstruct(&m, &dvector![2.0], &dvector![2.0]).unwrap();
        assert!((q[0] - 0.5).abs() < 1e-10);
        assert!((phi[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn roundtrip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cases: Vec<(ChartManifold, f64, f64)> = vec![
            (registry::euclidean_quadratic(1, Some(DMatrix::identity(1, 1))), -2.0, 2.0),
            (registry::cone_entropy(1.0, 1.0), 0.4, 3.0),
        ];
        for (m, lo, hi) in cases {
            for _ in 0..20 {
                let q = dvector![rng.gen_range(lo..hi)];
                let phi = dvector![rng.gen_range(-1.0..4.0)];
                let tr = Trajectory {
                    states: vec![
                        PhaseState { t: 0.0, q: q.clone(), phi: phi.clone() },
                        PhaseState { t: 1.0, q: q.clone(), phi: phi.clone() },
                    ],
                    h: 1.0,
                };
                let pair = match hopf_cole_forward_unchecked(&m, &tr) {
                    Ok(p) => p,
                    // cone chart: some random (q, φ) land outside the
                    // invertible branch; skip those draws
                    Err(_) => continue,
                };
                let (q2, phi2) = reconstruct(&m, &pair.eta[0], &pair.eta_star[0]).unwrap();
                assert!((q2 - &q).amax() < 1e-10);
                assert!((phi2 - &phi).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn fixed_point_quadratic_matches_shooting() {
        let m = registry::euclidean_quadratic(1, Some(DMatrix::identity(1, 1)));
        let spec = bvp::BridgeSpec::new(m, dvector![1.0], dvector![2.0], 1000);
        let shoot = bvp::solve_shooting(&spec).unwrap();
        let (pair, sol) = schrodinger_fixed_point(&spec, &SchrodingerOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(
            sol.trajectory.sup_distance(&shoot.trajectory) < 1e-6,
            "gap {}",
            sol.trajectory.sup_distance(&shoot.trajectory)
        );
        assert!(pair.flow_residual() < 1e-6);
    }

    #[test]
    fn fixed_point_symmetric_endpoint_is_stationary() {
        let m = registry::euclidean_quadratic(1, Some(DMatrix::identity(1, 1)));
        let spec = bvp::BridgeSpec::new(m, dvector![0.0], dvector![0.0], 100);
        let (pair, sol) = schrodinger_fixed_point(&spec, &SchrodingerOptions::default()).unwrap();
        assert!(sol.converged);
        for k in 0..pair.eta.len() {
            assert!(pair.eta[k].amax() < 1e-12 && pair.eta_star[k].amax() < 1e-12);
            assert!(sol.trajectory.states[k].q.amax() < 1e-12);
        }
    }

    #[test]
    fn fixed_point_cone_matches_shooting() {
        let m = registry::cone_entropy(1.0, 1.0);
        let spec = bvp::BridgeSpec::new(m, dvector![1.0], dvector![3.0], 1000);
        let shoot = bvp::solve_shooting(&spec).unwrap();
        let (_, sol) = schrodinger_fixed_point(&spec, &SchrodingerOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(
            sol.trajectory.sup_distance(&shoot.trajectory) < 1e-5,
            "gap {}",
            sol.trajectory.sup_distance(&shoot.trajectory)
        );
    }

    #[test]
    fn covector_equation_is_q_independent_when_assumptions_hold() {
        let m = registry::euclidean_quadratic(1, Some(DMatrix::identity(1, 1)));
        let spread = covector_rhs_spread(&m, &dvector![0.7], &sample_1d(-2.0, 2.0, 10)).unwrap();
        assert!(spread < 1e-6, "spread {spread}");

        let m = registry::cone_entropy(1.0, 1.0);
        let spread = covector_rhs_spread(&m, &dvector![0.7], &sample_1d(0.5, 3.0, 10)).unwrap();
        assert!(spread < 1e-6, "spread {spread}");

        // and is genuinely q-dependent on the sphere chart
        let m = registry::sphere_polar();
        let sample: Vec<_> =
            (0..10).map(|k| dvector![0.5 + 0.2 * k as f64, 0.4 + 0.1 * k as f64]).collect();
        let spread = covector_rhs_spread(&m, &dvector![0.3, 0.5], &sample).unwrap();
        assert!(spread > 1e-2, "spread {spread}");
    }
}
