//! Coordinate-chart manifolds with a potential.
//!
//! A [`ChartManifold`] is the triple `(M, g, V)` seen through a single global
//! chart: the user supplies the *inverse* metric `g^{jk}(q)` and the scalar
//! potential `V(q)` as callbacks. Everything else (the metric `g_{ij}`,
//! Christoffel symbols, gradients, musical isomorphisms, derivative tensors)
//! is derived here, using analytic callbacks when given and central finite
//! differences otherwise.
//!
//! ```
//! use geobridge::geometry::registry;
//!
//! // cone chart: n = 1, inverse metric g^{11}(q) = q, V(q) = q + ln q
//! let m = registry::cone_entropy(1.0, 1.0);
//! let q = nalgebra::dvector![2.0];
//! let (g_lower, g_upper) = m.metric_pair(&q).unwrap();
//! assert_eq!(g_upper[(0, 0)], 2.0);
//! assert!((g_lower[(0, 0)] - 0.5).abs() < 1e-14);
//! // Riemannian gradient: g^{11} V'(q) = 2 * (1 + 1/2) = 3
//! assert!((m.grad_potential(&q).unwrap()[0] - 3.0).abs() < 1e-12);
//! ```

pub mod registry;

use nalgebra::{DMatrix, DVector};

use crate::error::{GeoError, Result};

use std::sync::Arc;

pub type ScalarFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
pub type VectorFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
pub type MatrixFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
pub type TensorFn = dyn Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync;
pub type GuardFn = dyn Fn(&DVector<f64>) -> bool + Send + Sync;

/// A tangent vector at a base point, components `b^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub base: DVector<f64>,
    pub comps: DVector<f64>,
}

/// A cotangent vector at a base point, components `phi_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cotangent {
    pub base: DVector<f64>,
    pub comps: DVector<f64>,
}

/// A manifold-with-potential presented in one global coordinate chart.
///
/// Immutable after construction; all operations are pure.
#[derive(Clone)]
pub struct ChartManifold {
    dim: usize,
    metric_inv: Arc<MatrixFn>,
    potential: Arc<ScalarFn>,
    dv: Option<Arc<VectorFn>>,
    hess_v: Option<Arc<MatrixFn>>,
    d_metric_inv: Option<Arc<TensorFn>>,
    domain_guard: Arc<GuardFn>,
    /// Multiplier applied to the potential (used for V -> -V flips and
    /// the shooting homotopy in potential strength).
    v_scale: f64,
    /// Region where `V` and `dV` make sense; the gradient flows of the
    /// Hopf-Cole variables may leave the metric-positive part of the chart
    /// (the cone chart continues `c q + d/q` across q < 0) so this guard can
    /// be wider than `domain_guard`.
    potential_guard: Option<Arc<GuardFn>>,
}

impl ChartManifold {
    pub fn new<G, P>(dim: usize, metric_inv: G, potential: P) -> Self
    where
        G: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        P: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        assert!(dim >= 1, "dimension must be positive");
        ChartManifold {
            dim,
            metric_inv: Arc::new(metric_inv),
            potential: Arc::new(potential),
            dv: None,
            hess_v: None,
            d_metric_inv: None,
            domain_guard: Arc::new(|_| true),
            v_scale: 1.0,
            potential_guard: None,
        }
    }

    pub fn with_dv<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.dv = Some(Arc::new(f));
        self
    }

    pub fn with_hess_v<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.hess_v = Some(Arc::new(f));
        self
    }

    pub fn with_d_metric_inv<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        self.d_metric_inv = Some(Arc::new(f));
        self
    }

    pub fn with_domain_guard<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> bool + Send + Sync + 'static,
    {
        self.domain_guard = Arc::new(f);
        self
    }

    pub fn with_potential_guard<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> bool + Send + Sync + 'static,
    {
        self.potential_guard = Some(Arc::new(f));
        self
    }

    /// A copy of the manifold with the potential multiplied by `scale`
    /// (composes with any existing scale). `scale = -1` gives the
    /// sign-flipped control problem.
    pub fn with_potential_scale(&self, scale: f64) -> Self {
        let mut m = self.clone();
        m.v_scale = self.v_scale * scale;
        m
    }

    pub fn potential_scale(&self) -> f64 {
        self.v_scale
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when analytic first and second potential derivatives and the
    /// metric derivative tensor were all supplied.
    pub fn has_analytic_derivatives(&self) -> bool {
        self.dv.is_some() && self.hess_v.is_some() && self.d_metric_inv.is_some()
    }

    pub fn is_admissible(&self, q: &DVector<f64>) -> bool {
        q.len() == self.dim && q.iter().all(|x| x.is_finite()) && (self.domain_guard)(q)
    }

    /// Admissibility for potential evaluations (gradient flows, Hopf-Cole
    /// variables). Falls back to the chart guard.
    pub fn is_potential_admissible(&self, q: &DVector<f64>) -> bool {
        if q.len() != self.dim || q.iter().any(|x| !x.is_finite()) {
            return false;
        }
        match &self.potential_guard {
            Some(g) => g(q),
            None => (self.domain_guard)(q),
        }
    }

    fn guard(&self, q: &DVector<f64>) -> Result<()> {
        if self.is_admissible(q) {
            Ok(())
        } else {
            Err(GeoError::outside(q))
        }
    }

    fn guard_potential(&self, q: &DVector<f64>) -> Result<()> {
        if self.is_potential_admissible(q) {
            Ok(())
        } else {
            Err(GeoError::outside(q))
        }
    }

    /// Raw inverse-metric evaluation, no positivity check. Used by gradient
    /// flows that may run outside the metric-positive region.
    pub fn metric_inv_raw(&self, q: &DVector<f64>) -> DMatrix<f64> {
        (self.metric_inv)(q)
    }

    /// `(g_lower, g_upper)` at `q`: the inverse metric from the callback and
    /// the metric obtained by inverting it. Errors if `g_upper` is not
    /// symmetric positive-definite.
    pub fn metric_pair(&self, q: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.guard(q)?;
        let g_upper = (self.metric_inv)(q);
        let scale = g_upper.amax().max(1.0);
        if !g_upper.iter().all(|x| x.is_finite()) {
            return Err(GeoError::degenerate(q));
        }
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                if (g_upper[(i, j)] - g_upper[(j, i)]).abs() > 1e-10 * scale {
                    return Err(GeoError::degenerate(q));
                }
            }
        }
        let chol = g_upper
            .clone()
            .cholesky()
            .ok_or_else(|| GeoError::degenerate(q))?;
        let mut g_lower = chol.inverse();
        // symmetrize against roundoff
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let s = 0.5 * (g_lower[(i, j)] + g_lower[(j, i)]);
                g_lower[(i, j)] = s;
                g_lower[(j, i)] = s;
            }
        }
        Ok((g_lower, g_upper))
    }

    pub fn potential_value(&self, q: &DVector<f64>) -> Result<f64> {
        self.guard_potential(q)?;
        Ok(self.v_scale * (self.potential)(q))
    }

    fn fd_step(x: f64) -> f64 {
        1e-5 * x.abs().max(1.0)
    }

    /// The differential `dV(q)`, components `∂_i V`.
    pub fn dv(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.guard_potential(q)?;
        if let Some(f) = &self.dv {
            return Ok(f(q) * self.v_scale);
        }
        let mut out = DVector::zeros(self.dim);
        for i in 0..self.dim {
            let h = Self::fd_step(q[i]);
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            out[i] = ((self.potential)(&qp) - (self.potential)(&qm)) / (2.0 * h);
        }
        Ok(out * self.v_scale)
    }

    /// The Hessian `∂²_{ij} V`.
    pub fn hess_v(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.guard_potential(q)?;
        if let Some(f) = &self.hess_v {
            return Ok(f(q) * self.v_scale);
        }
        let mut out = DMatrix::zeros(self.dim, self.dim);
        if let Some(dv) = &self.dv {
            for i in 0..self.dim {
                let h = Self::fd_step(q[i]);
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[i] += h;
                qm[i] -= h;
                let col = (dv(&qp) - dv(&qm)) / (2.0 * h);
                for j in 0..self.dim {
                    out[(j, i)] = col[j];
                }
            }
            // exact Hessians are symmetric; FD of dV is not quite
            for i in 0..self.dim {
                for j in (i + 1)..self.dim {
                    let s = 0.5 * (out[(i, j)] + out[(j, i)]);
                    out[(i, j)] = s;
                    out[(j, i)] = s;
                }
            }
            return Ok(out * self.v_scale);
        }
        // second-order central differences of V itself
        let v0 = (self.potential)(q);
        for i in 0..self.dim {
            let hi = Self::fd_step(q[i]).sqrt() * 1e-2; // larger step for 2nd diffs
            let hi = hi.max(1e-4 * q[i].abs().max(1.0));
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += hi;
            qm[i] -= hi;
            out[(i, i)] = ((self.potential)(&qp) - 2.0 * v0 + (self.potential)(&qm)) / (hi * hi);
            for j in (i + 1)..self.dim {
                let hj = 1e-4 * q[j].abs().max(1.0);
                let mut qpp = q.clone();
                let mut qpm = q.clone();
                let mut qmp = q.clone();
                let mut qmm = q.clone();
                qpp[i] += hi;
                qpp[j] += hj;
                qpm[i] += hi;
                qpm[j] -= hj;
                qmp[i] -= hi;
                qmp[j] += hj;
                qmm[i] -= hi;
                qmm[j] -= hj;
                let mixed = ((self.potential)(&qpp) - (self.potential)(&qpm)
                    - (self.potential)(&qmp)
                    + (self.potential)(&qmm))
                    / (4.0 * hi * hj);
                out[(i, j)] = mixed;
                out[(j, i)] = mixed;
            }
        }
        Ok(out * self.v_scale)
    }

    /// The tensor `∂_i g^{jk}`, returned as one matrix per derivative index i.
    pub fn d_metric_inv(&self, q: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        self.guard(q)?;
        if let Some(f) = &self.d_metric_inv {
            return Ok(f(q));
        }
        let mut out = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let h = Self::fd_step(q[i]);
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            out.push(((self.metric_inv)(&qp) - (self.metric_inv)(&qm)) / (2.0 * h));
        }
        Ok(out)
    }

    /// Riemannian gradient `(∇V)^j = g^{jk} ∂_k V`.
    ///
    /// Uses the raw inverse metric so it stays meaningful on the extended
    /// potential domain (where the chart metric may not be positive).
    pub fn grad_potential(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.guard_potential(q)?;
        let g_upper = (self.metric_inv)(q);
        if !g_upper.iter().all(|x| x.is_finite()) {
            return Err(GeoError::degenerate(q));
        }
        Ok(&g_upper * self.dv(q)?)
    }

    /// The matrix `C_{ik} = ∂_i ( g^{jk} ∂_j V )`, the potential-coupling
    /// term of the Euler-Lagrange covector equation.
    pub fn potential_coupling(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.guard_potential(q)?;
        if self.has_analytic_derivatives() {
            let dg = self.d_metric_inv(q)?;
            let hv = self.hess_v(q)?;
            let dv = self.dv(q)?;
            let g_upper = (self.metric_inv)(q);
            let mut out = DMatrix::zeros(self.dim, self.dim);
            for i in 0..self.dim {
                for k in 0..self.dim {
                    let mut s = 0.0;
                    for j in 0..self.dim {
                        s += dg[i][(j, k)] * dv[j] + g_upper[(j, k)] * hv[(i, j)];
                    }
                    out[(i, k)] = s;
                }
            }
            return Ok(out);
        }
        // finite differences of the map q -> g^{jk}(q) ∂_j V(q)
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            let h = Self::fd_step(q[i]);
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            let wp = (self.metric_inv)(&qp).transpose() * self.dv(&qp)?;
            let wm = (self.metric_inv)(&qm).transpose() * self.dv(&qm)?;
            let row = (wp - wm) / (2.0 * h);
            for k in 0..self.dim {
                out[(i, k)] = row[k];
            }
        }
        Ok(out)
    }

    /// Christoffel symbols of the second kind; `result[k][(i, j)] = Γ^k_{ij}`.
    pub fn christoffels(&self, q: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        let (g_lower, g_upper) = self.metric_pair(q)?;
        let dg_up = self.d_metric_inv(q)?;
        // ∂_i g_{jl} = -(g ∂_i g^{..} g)_{jl}
        let dg_low: Vec<DMatrix<f64>> =
            dg_up.iter().map(|d| -(&g_lower * d * &g_lower)).collect();
        let n = self.dim;
        let mut gamma = vec![DMatrix::zeros(n, n); n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += g_upper[(k, l)]
                            * (dg_low[i][(j, l)] + dg_low[j][(i, l)] - dg_low[l][(i, j)]);
                    }
                    gamma[k][(i, j)] = 0.5 * s;
                }
            }
        }
        Ok(gamma)
    }

    /// Index lowering: `phi_i = g_{ij} b^j`.
    pub fn flat(&self, b: &Tangent) -> Result<Cotangent> {
        let (g_lower, _) = self.metric_pair(&b.base)?;
        Ok(Cotangent { base: b.base.clone(), comps: &g_lower * &b.comps })
    }

    /// Index raising: `b^j = g^{jk} phi_k`.
    pub fn sharp(&self, phi: &Cotangent) -> Result<Tangent> {
        let (_, g_upper) = self.metric_pair(&phi.base)?;
        Ok(Tangent { base: phi.base.clone(), comps: &g_upper * &phi.comps })
    }
}

impl std::fmt::Debug for ChartManifold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChartManifold")
            .field("dim", &self.dim)
            .field("analytic_derivatives", &self.has_analytic_derivatives())
            .finish()
    }
}
