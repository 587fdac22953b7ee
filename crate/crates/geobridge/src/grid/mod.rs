//! Entropic bridges on a 1-D periodic grid.
//!
//! The Eulerian counterpart of the chart-manifold solvers: a discrete heat
//! semigroup `P_t = exp(tγL)` (L the periodic second-difference Laplacian),
//! Sinkhorn/IPFP solution of the Schrödinger system, entropic interpolation
//! `ρ_t = (P_{1-t}η₁) ⊙ (P_tη*₀)`, and evaluation of the three equivalent
//! actions — forward control (SB), backward control (SB*) and the
//! time-symmetric kinetic-plus-Fisher form (Y) — together with their
//! continuity-equation residuals. Using the semigroup of the discrete
//! Laplacian (rather than a sampled Gaussian kernel) makes mass
//! conservation, the semigroup identity and the forward/backward heat
//! equations exact at the discrete level.

mod porous;

pub use porous::{porous_direct, PorousOptions, PorousProblem, PorousSolution};

use nalgebra::{DMatrix, DVector};

use crate::error::{GeoError, Result};

/// Uniform periodic grid on [0, 1) with diffusion coefficient γ.
#[derive(Debug, Clone, Copy)]
pub struct PeriodicGrid {
    pub n_cells: usize,
    pub gamma: f64,
}

impl PeriodicGrid {
    pub fn new(n_cells: usize, gamma: f64) -> Result<Self> {
        if n_cells < 8 {
            return Err(GeoError::Config(format!("n_cells = {n_cells} < 8")));
        }
        if !(gamma >= 0.01) {
            return Err(GeoError::Config(format!(
                "gamma = {gamma} out of range (>= 0.01 required at float64 desk scale)"
            )));
        }
        Ok(PeriodicGrid { n_cells, gamma })
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    /// Cell centers `(i + 1/2) Δx`.
    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| (i as f64 + 0.5) * self.dx()).collect()
    }

    /// The periodic second-difference Laplacian, scaled by `1/Δx²`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n_cells;
        let s = 1.0 / (self.dx() * self.dx());
        let mut l = DMatrix::zeros(n, n);
        for i in 0..n {
            l[(i, i)] = -2.0 * s;
            l[(i, (i + 1) % n)] = s;
            l[(i, (i + n - 1) % n)] = s;
        }
        l
    }

    /// Centered periodic gradient `(f_{i+1} - f_{i-1}) / (2Δx)`.
    pub fn gradient(&self, f: &DVector<f64>) -> DVector<f64> {
        let n = self.n_cells;
        let s = 1.0 / (2.0 * self.dx());
        DVector::from_fn(n, |i, _| (f[(i + 1) % n] - f[(i + n - 1) % n]) * s)
    }
}

/// Heat semigroup `P_t = exp(tγL)`, symmetric and doubly stochastic.
///
/// Computed spectrally: `L` is symmetric, so one eigendecomposition gives
/// `exp(tγL)` for every `t` with the semigroup identity holding to
/// roundoff. (A scaling-and-squaring exponential would work as well but
/// makes `P_s P_t = P_{s+t}` only approximately consistent across calls.)
pub fn heat_semigroup(grid: &PeriodicGrid, t: f64) -> DMatrix<f64> {
    assert!(t >= 0.0, "negative time in heat semigroup");
    let n = grid.n_cells;
    let eig = grid.laplacian().symmetric_eigen();
    let mut p = DMatrix::zeros(n, n);
    for k in 0..n {
        let w = (t * grid.gamma * eig.eigenvalues[k]).exp();
        let v = eig.eigenvectors.column(k);
        for i in 0..n {
            for j in 0..n {
                p[(i, j)] += w * v[i] * v[j];
            }
        }
    }
    // symmetrize against roundoff
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = s;
            p[(j, i)] = s;
        }
    }
    p
}

/// The Gaussian heat kernel of the continuum problem, wrapped onto the
/// periodic domain and row-normalized; offered for comparison runs against
/// the discrete semigroup (they agree as Δx → 0).
pub fn gaussian_kernel(grid: &PeriodicGrid, t: f64) -> DMatrix<f64> {
    assert!(t > 0.0, "gaussian kernel needs t > 0");
    let n = grid.n_cells;
    let xs = grid.centers();
    let var = 2.0 * grid.gamma * t;
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for wrap in -3..=3 {
                let d = xs[i] - xs[j] + wrap as f64;
                s += (-d * d / (2.0 * var)).exp();
            }
            k[(i, j)] = s;
        }
    }
    for i in 0..n {
        let row_sum: f64 = k.row(i).sum();
        for j in 0..n {
            k[(i, j)] /= row_sum;
        }
    }
    k
}

/// A probability distribution by cell mass.
#[derive(Debug, Clone)]
pub struct GridDensity {
    pub mass: DVector<f64>,
}

impl GridDensity {
    /// Wraps a mass vector; entries must be nonnegative and sum to 1
    /// within 1e-12.
    pub fn from_mass(mass: DVector<f64>) -> Result<Self> {
        for (i, &v) in mass.iter().enumerate() {
            if !(v >= 0.0) {
                return Err(GeoError::NonPositiveDensity { cell: i, value: v });
            }
        }
        let total: f64 = mass.sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(GeoError::Config(format!("mass sums to {total}, expected 1")));
        }
        Ok(GridDensity { mass })
    }

    /// Normalizes a nonnegative weight vector to total mass 1.
    pub fn normalized(weights: DVector<f64>) -> Result<Self> {
        for (i, &v) in weights.iter().enumerate() {
            if !(v >= 0.0) {
                return Err(GeoError::NonPositiveDensity { cell: i, value: v });
            }
        }
        let total: f64 = weights.sum();
        if total <= 0.0 {
            return Err(GeoError::Config("zero total mass".into()));
        }
        Ok(GridDensity { mass: weights / total })
    }

    pub fn uniform(n: usize) -> Self {
        GridDensity { mass: DVector::from_element(n, 1.0 / n as f64) }
    }

    /// Wrapped Gaussian with the given center and standard deviation.
    pub fn wrapped_gaussian(grid: &PeriodicGrid, center: f64, sigma: f64) -> Result<Self> {
        if sigma <= 0.0 {
            return Err(GeoError::Config(format!("sigma = {sigma} must be positive")));
        }
        let w = DVector::from_iterator(
            grid.n_cells,
            grid.centers().iter().map(|&x| {
                (-3..=3)
                    .map(|wrap| {
                        let d = x - center + wrap as f64;
                        (-d * d / (2.0 * sigma * sigma)).exp()
                    })
                    .sum::<f64>()
            }),
        );
        Self::normalized(w)
    }

    /// Parses `index,mass` lines (header line optional); masses are
    /// normalized to total 1.
    pub fn from_csv(n_cells: usize, text: &str) -> Result<Self> {
        let mut mass = DVector::zeros(n_cells);
        let mut seen = vec![false; n_cells];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let (a, b) = (parts.next(), parts.next());
            let (Some(a), Some(b)) = (a, b) else {
                return Err(GeoError::Config(format!("line {}: expected index,mass", lineno + 1)));
            };
            let Ok(idx) = a.parse::<usize>() else {
                if lineno == 0 {
                    continue; // header
                }
                return Err(GeoError::Config(format!("line {}: bad index {a:?}", lineno + 1)));
            };
            let value: f64 = b
                .parse()
                .map_err(|_| GeoError::Config(format!("line {}: bad mass {b:?}", lineno + 1)))?;
            if idx >= n_cells {
                return Err(GeoError::Config(format!("line {}: index {idx} out of range", lineno + 1)));
            }
            if seen[idx] {
                return Err(GeoError::Config(format!("line {}: duplicate index {idx}", lineno + 1)));
            }
            seen[idx] = true;
            mass[idx] = value;
        }
        Self::normalized(mass)
    }

    /// Strictly positive everywhere (logs may be taken).
    pub fn strictly_positive(&self) -> Result<()> {
        for (i, &v) in self.mass.iter().enumerate() {
            if v < 1e-300 {
                return Err(GeoError::NonPositiveDensity { cell: i, value: v });
            }
        }
        Ok(())
    }

    /// Entropy `S(ρ) = γ ∫ ρ ln ρ dx = γ Σ m_i ln(m_i / Δx)`.
    pub fn entropy(&self, grid: &PeriodicGrid) -> f64 {
        let dx = grid.dx();
        grid.gamma
            * self
                .mass
                .iter()
                .map(|&m| if m > 0.0 { m * (m / dx).ln() } else { 0.0 })
                .sum::<f64>()
    }
}

/// A solved Schrödinger system on the grid.
#[derive(Debug, Clone)]
pub struct GridBridgeSolution {
    pub grid: PeriodicGrid,
    pub mu: GridDensity,
    pub nu: GridDensity,
    /// Potential `η*₀` (strictly positive).
    pub eta0_star: DVector<f64>,
    /// Potential `η₁` (strictly positive).
    pub eta1: DVector<f64>,
    pub iterations: usize,
    /// `‖η*₀ ⊙ P₁η₁ − μ‖₁ + ‖η₁ ⊙ P₁η*₀ − ν‖₁` at the last iterate.
    pub marginal_err: f64,
    pub converged: bool,
}

impl GridBridgeSolution {
    /// `η_t = P_{1-t} η₁` (backward heat).
    pub fn eta_at(&self, t: f64) -> DVector<f64> {
        if t == 1.0 {
            return self.eta1.clone();
        }
        heat_semigroup(&self.grid, 1.0 - t) * &self.eta1
    }

    /// `η*_t = P_t η*₀` (forward heat).
    pub fn eta_star_at(&self, t: f64) -> DVector<f64> {
        if t == 0.0 {
            return self.eta0_star.clone();
        }
        heat_semigroup(&self.grid, t) * &self.eta0_star
    }

    /// Entropic interpolation `ρ_t = η_t ⊙ η*_t`; total mass is exactly
    /// `⟨η*₀, P₁ η₁⟩ = 1` by the semigroup identity.
    pub fn interpolate(&self, t: f64) -> GridDensity {
        GridDensity { mass: self.eta_at(t).component_mul(&self.eta_star_at(t)) }
    }

    /// SB velocity potential `φ_t = 2γ ln η_t`, defined up to an additive
    /// constant (apply [`zero_mean`] for the reporting gauge).
    pub fn phi_at(&self, t: f64) -> DVector<f64> {
        self.eta_at(t).map(|v| 2.0 * self.grid.gamma * v.ln())
    }

    /// Yasue potential `ψ_t = φ_t − γ ln ρ_t = γ ln(η_t / η*_t)`, up to the
    /// same additive gauge as `φ`.
    pub fn psi_at(&self, t: f64) -> DVector<f64> {
        let rho = self.interpolate(t).mass;
        let mut psi = self.phi_at(t);
        for i in 0..psi.len() {
            psi[i] -= self.grid.gamma * rho[i].ln();
        }
        psi
    }
}

/// Shifts a potential to the `Σ v = 0` gauge.
pub fn zero_mean(v: &DVector<f64>) -> DVector<f64> {
    v.add_scalar(-v.mean())
}

/// Sinkhorn/IPFP for the Schrödinger system: alternately matches the two
/// marginals through the unit-time kernel `P₁`.
pub fn sinkhorn_solve(
    grid: &PeriodicGrid,
    mu: &GridDensity,
    nu: &GridDensity,
    tol: f64,
    max_iter: usize,
) -> Result<GridBridgeSolution> {
    mu.strictly_positive()?;
    nu.strictly_positive()?;
    let p1 = heat_semigroup(grid, 1.0);
    let mut eta1 = DVector::from_element(grid.n_cells, 1.0);
    let mut eta0_star = DVector::from_element(grid.n_cells, 1.0);

    let marginal_err = |e0: &DVector<f64>, e1: &DVector<f64>| -> f64 {
        let to_mu = e0.component_mul(&(&p1 * e1)) - &mu.mass;
        let to_nu = e1.component_mul(&(&p1 * e0)) - &nu.mass;
        to_mu.abs().sum() + to_nu.abs().sum()
    };

    let mut err = marginal_err(&eta0_star, &eta1);
    let mut iterations = 0;
    let mut converged = err <= tol;
    while !converged && iterations < max_iter {
        eta0_star = mu.mass.component_div(&(&p1 * &eta1));
        eta1 = nu.mass.component_div(&(&p1 * &eta0_star));
        debug_assert!(eta0_star.iter().chain(eta1.iter()).all(|&v| v > 0.0));
        iterations += 1;
        err = marginal_err(&eta0_star, &eta1);
        converged = err <= tol;
    }
    Ok(GridBridgeSolution {
        grid: *grid,
        mu: mu.clone(),
        nu: nu.clone(),
        eta0_star,
        eta1,
        iterations,
        marginal_err: err,
        converged,
    })
}

/// Action values and constraint residuals of the three bridge forms.
#[derive(Debug, Clone)]
pub struct GridActionReport {
    /// Forward control action `∫ Σ ½ b² ρ dt`, drift `b = ∇φ`.
    pub a_sb: f64,
    /// Backward control action, drift `b* = b − 2γ∇ln ρ`.
    pub a_sb_star: f64,
    /// Kinetic-plus-Fisher action `∫ Σ (½ v² + ½ w²) ρ dt`, `w = γ∇ln ρ`.
    pub a_y: f64,
    pub s_mu: f64,
    pub s_nu: f64,
    /// Max-norm residual of `∂_tρ + div(ρb) − γΔρ = 0`.
    pub residual_sb: f64,
    /// Max-norm residual of `∂_tρ + div(ρv) = 0`.
    pub residual_y: f64,
    /// Max-norm residual of `∂_tρ + div(ρb*) + γΔρ = 0`.
    pub residual_sb_star: f64,
    pub n_time_samples: usize,
}

/// Evaluates the three actions by trapezoid quadrature over
/// `n_time_samples` uniform times and the continuity residuals by centered
/// differences in space and time (interior times only).
pub fn bridge_actions(sol: &GridBridgeSolution, n_time_samples: usize) -> GridActionReport {
    assert!(n_time_samples >= 2);
    let grid = &sol.grid;
    let gamma = grid.gamma;
    let dt = 1.0 / n_time_samples as f64;
    let lap = grid.laplacian();
    let dx = grid.dx();

    // per-time slices
    let times: Vec<f64> = (0..=n_time_samples).map(|k| k as f64 * dt).collect();
    let rho: Vec<DVector<f64>> = times.iter().map(|&t| sol.interpolate(t).mass).collect();
    let mut kin_sb = Vec::new();
    let mut kin_sb_star = Vec::new();
    let mut kin_y = Vec::new();
    let mut b_all = Vec::new();
    let mut v_all = Vec::new();
    let mut b_star_all = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let b = grid.gradient(&sol.phi_at(t));
        // deep-tail cells can round to <= 0 through the spectral kernel;
        // floor the log argument there — the integrand carries a factor
        // rho, so floored cells contribute nothing measurable
        let log_rho = rho[k].map(|v| v.max(1e-300).ln());
        let w = grid.gradient(&log_rho) * gamma;
        let v = &b - &w;
        let b_star = &v - &w;
        let m = &rho[k];
        kin_sb.push(0.5 * b.component_mul(&b).dot(m));
        kin_sb_star.push(0.5 * b_star.component_mul(&b_star).dot(m));
        kin_y.push(0.5 * (v.component_mul(&v).dot(m) + w.component_mul(&w).dot(m)));
        b_all.push(b);
        v_all.push(v);
        b_star_all.push(b_star);
    }
    let trapezoid = |vals: &[f64]| -> f64 {
        let inner: f64 = vals[1..vals.len() - 1].iter().sum();
        dt * (0.5 * vals[0] + inner + 0.5 * vals[vals.len() - 1])
    };

    // continuity residuals in density units at interior times
    let mut residual_sb: f64 = 0.0;
    let mut residual_y: f64 = 0.0;
    let mut residual_sb_star: f64 = 0.0;
    for k in 1..n_time_samples {
        let r_dot = (&rho[k + 1] - &rho[k - 1]) / (2.0 * dt * dx);
        let r = &rho[k] / dx;
        let lr = &lap * &r;
        let div = |vel: &DVector<f64>| grid.gradient(&r.component_mul(vel));
        residual_sb = residual_sb.max((&r_dot + div(&b_all[k]) - &lr * gamma).amax());
        residual_y = residual_y.max((&r_dot + div(&v_all[k])).amax());
        residual_sb_star =
            residual_sb_star.max((&r_dot + div(&b_star_all[k]) + &lr * gamma).amax());
    }

    GridActionReport {
        a_sb: trapezoid(&kin_sb),
        a_sb_star: trapezoid(&kin_sb_star),
        a_y: trapezoid(&kin_y),
        s_mu: sol.mu.entropy(grid),
        s_nu: sol.nu.entropy(grid),
        residual_sb,
        residual_y,
        residual_sb_star,
        n_time_samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid64() -> PeriodicGrid {
        PeriodicGrid::new(64, 0.05).unwrap()
    }

    fn gaussian_pair(grid: &PeriodicGrid) -> (GridDensity, GridDensity) {
        let mu = GridDensity::wrapped_gaussian(grid, 0.25, 0.05).unwrap();
        let nu = GridDensity::wrapped_gaussian(grid, 0.75, 0.12).unwrap();
        (mu, nu)
    }

    #[test]
    fn semigroup_identity_and_stochasticity() {
        let grid = grid64();
        let p0 = heat_semigroup(&grid, 0.0);
        assert!((p0 - DMatrix::<f64>::identity(64, 64)).amax() < 1e-12);

        let p3 = heat_semigroup(&grid, 0.3);
        let p7 = heat_semigroup(&grid, 0.7);
        let p10 = heat_semigroup(&grid, 1.0);
        assert!((p3 * &p7 - &p10).amax() < 1e-12);

        for t in [0.1, 0.5, 1.0] {
            let p = heat_semigroup(&grid, t);
            for i in 0..64 {
                assert!((p.row(i).sum() - 1.0).abs() < 1e-12);
                assert!((p.column(i).sum() - 1.0).abs() < 1e-12);
            }
            assert!((&p - p.transpose()).amax() < 1e-13);
        }
    }

    #[test]
    fn gaussian_kernel_approaches_semigroup() {
        // fixed t and γ, refining the grid: kernels agree better and better
        let mut gaps = Vec::new();
        for n in [32usize, 64, 128] {
            let grid = PeriodicGrid::new(n, 0.05).unwrap();
            let a = heat_semigroup(&grid, 1.0);
            let b = gaussian_kernel(&grid, 1.0);
            // compare action on a fixed smooth density
            let rho = GridDensity::wrapped_gaussian(&grid, 0.5, 0.1).unwrap().mass;
            gaps.push((a * &rho - b * &rho).amax() * n as f64);
        }
        assert!(gaps[2] < gaps[0], "{gaps:?}");
    }

    #[test]
    fn sinkhorn_uniform_is_immediate() {
        let grid = grid64();
        let u = GridDensity::uniform(64);
        let sol = sinkhorn_solve(&grid, &u, &u, 1e-12, 100).unwrap();
        assert!(sol.converged && sol.iterations <= 1);
        let spreads: Vec<f64> = [0.0, 0.3, 1.0]
            .iter()
            .map(|&t| {
                let m = sol.interpolate(t).mass;
                m.max() - m.min()
            })
            .collect();
        assert!(spreads.iter().all(|&s| s < 1e-13), "{spreads:?}");
    }

    #[test]
    fn sinkhorn_gaussians_converge_monotonically() {
        let grid = grid64();
        let (mu, nu) = gaussian_pair(&grid);
        // run iteration counts 1..k and confirm the error never increases
        let mut prev = f64::INFINITY;
        for iters in [1usize, 2, 4, 8, 16, 32] {
            let sol = sinkhorn_solve(&grid, &mu, &nu, 0.0, iters).unwrap();
            assert!(sol.marginal_err <= prev + 1e-14, "{} > {}", sol.marginal_err, prev);
            prev = sol.marginal_err;
        }
        let sol = sinkhorn_solve(&grid, &mu, &nu, 1e-10, 500).unwrap();
        assert!(sol.converged, "err {}", sol.marginal_err);
        assert!(sol.marginal_err <= 1e-10);

        // boundary and mass invariants
        let rho0 = sol.interpolate(0.0).mass;
        let rho1 = sol.interpolate(1.0).mass;
        assert!((rho0 - &mu.mass).abs().sum() <= 1e-10);
        assert!((rho1 - &nu.mass).abs().sum() <= 1e-10);
        for &t in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            assert!((sol.interpolate(t).mass.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn time_reversal_symmetry() {
        let grid = grid64();
        let (mu, nu) = gaussian_pair(&grid);
        let fwd = sinkhorn_solve(&grid, &mu, &nu, 1e-12, 2000).unwrap();
        let bwd = sinkhorn_solve(&grid, &nu, &mu, 1e-12, 2000).unwrap();
        for &t in &[0.0, 0.2, 0.5, 0.8, 1.0] {
            let a = fwd.interpolate(t).mass;
            let b = bwd.interpolate(1.0 - t).mass;
            assert!((a - b).amax() < 1e-10);
        }
    }

    #[test]
    fn hopf_cole_consistency() {
        let grid = grid64();
        let (mu, nu) = gaussian_pair(&grid);
        let sol = sinkhorn_solve(&grid, &mu, &nu, 1e-12, 2000).unwrap();
        for &t in &[0.1, 0.5, 0.9] {
            let eta = sol.eta_at(t);
            let eta_star = sol.eta_star_at(t);
            let rho = sol.interpolate(t).mass;
            assert!((&rho - eta.component_mul(&eta_star)).amax() < 1e-12);
            let psi = sol.psi_at(t);
            let direct = DVector::from_fn(64, |i, _| grid.gamma * (eta[i] / eta_star[i]).ln());
            assert!((psi - direct).amax() < 1e-12);
        }
    }

    #[test]
    fn actions_uniform_are_zero() {
        let grid = grid64();
        let u = GridDensity::uniform(64);
        let sol = sinkhorn_solve(&grid, &u, &u, 1e-12, 100).unwrap();
        let rep = bridge_actions(&sol, 16);
        assert!(rep.a_sb.abs() < 1e-10 && rep.a_y.abs() < 1e-10 && rep.a_sb_star.abs() < 1e-10);
        assert!(rep.residual_sb < 1e-10 && rep.residual_y < 1e-10 && rep.residual_sb_star < 1e-10);
    }

    #[test]
    fn action_identities() {
        // marginals a few cells wider than the sinkhorn case: the identity
        // holds in the continuum, so the check needs the spatial
        // discretization error below the 5e-3 relative tolerance
        let grid = grid64();
        let mu = GridDensity::wrapped_gaussian(&grid, 0.25, 0.08).unwrap();
        let nu = GridDensity::wrapped_gaussian(&grid, 0.75, 0.14).unwrap();
        let sol = sinkhorn_solve(&grid, &mu, &nu, 1e-12, 2000).unwrap();
        let rep = bridge_actions(&sol, 128);
        // A_SB = A_Y + S(ν) − S(μ)
        let gap = rep.a_sb - rep.a_y - (rep.s_nu - rep.s_mu);
        assert!(gap.abs() <= 5e-3 * rep.a_sb, "gap {} a_sb {}", gap, rep.a_sb);
        // the same identity run backwards gives A_SB − A_SB* = 2(S(ν) − S(μ))
        let gap2 = rep.a_sb - rep.a_sb_star - 2.0 * (rep.s_nu - rep.s_mu);
        assert!(gap2.abs() <= 5e-3 * rep.a_sb.max(rep.a_sb_star), "gap2 {gap2}");

        // forward/backward equivalence: with equal-entropy marginals the
        // two control actions agree
        let mu = GridDensity::wrapped_gaussian(&grid, 0.25, 0.08).unwrap();
        let nu = GridDensity::wrapped_gaussian(&grid, 0.75, 0.08).unwrap();
        let sol = sinkhorn_solve(&grid, &mu, &nu, 1e-12, 2000).unwrap();
        let rep = bridge_actions(&sol, 128);
        assert!(
            (rep.a_sb - rep.a_sb_star).abs() <= 5e-3 * rep.a_sb.max(rep.a_sb_star),
            "a_sb {} a_sb* {}",
            rep.a_sb,
            rep.a_sb_star
        );
    }

    #[test]
    fn yasue_action_is_even_in_gamma() {
        // w = γ∇ln ρ enters squared and v = b − w is the physical velocity;
        // flipping the sign of w leaves the (Y) integrand unchanged
        let grid = grid64();
        let (mu, nu) = gaussian_pair(&grid);
        let sol = sinkhorn_solve(&grid, &mu, &nu, 1e-12, 2000).unwrap();
        let t = 0.4;
        let rho = sol.interpolate(t).mass;
        let b = grid.gradient(&sol.phi_at(t));
        let w = grid.gradient(&rho.map(f64::ln)) * grid.gamma;
        let v = &b - &w;
        let plus = 0.5 * (v.component_mul(&v).dot(&rho) + w.component_mul(&w).dot(&rho));
        let w_flip = -&w;
        let minus =
            0.5 * (v.component_mul(&v).dot(&rho) + w_flip.component_mul(&w_flip).dot(&rho));
        assert!((plus - minus).abs() < 1e-15);
    }

    #[test]
    fn continuity_residual_is_second_order() {
        // quartering Δx² (doubling n) reduces the (Y) residual ~4x
        let mut residuals = Vec::new();
        for n in [32usize, 64] {
            let grid = PeriodicGrid::new(n, 0.05).unwrap();
            let mu = GridDensity::wrapped_gaussian(&grid, 0.25, 0.08).unwrap();
            let nu = GridDensity::wrapped_gaussian(&grid, 0.75, 0.12).unwrap();
            let sol = sinkhorn_solve(&grid, &mu, &nu, 1e-12, 2000).unwrap();
            residuals.push(bridge_actions(&sol, 256).residual_y);
        }
        let ratio = residuals[0] / residuals[1];
        assert!(ratio > 2.5, "residuals {residuals:?}, ratio {ratio}");
    }

    #[test]
    fn density_constructors_and_csv() {
        let grid = grid64();
        let g = GridDensity::wrapped_gaussian(&grid, 0.5, 0.1).unwrap();
        assert!((g.mass.sum() - 1.0).abs() < 1e-12);
        assert!(g.strictly_positive().is_ok());

        let csv = "index,mass\n0,2.0\n1,1.0\n3,1.0\n";
        let d = GridDensity::from_csv(8, csv).unwrap();
        assert!((d.mass[0] - 0.5).abs() < 1e-15);
        assert!((d.mass[3] - 0.25).abs() < 1e-15);
        assert!(d.strictly_positive().is_err());

        assert!(GridDensity::from_csv(8, "0,1.0\n0,1.0\n").is_err());
        assert!(GridDensity::from_csv(8, "9,1.0\n").is_err());
        assert!(GridDensity::from_mass(DVector::from_element(4, 0.5)).is_err());
        assert!(PeriodicGrid::new(4, 0.05).is_err());
        assert!(PeriodicGrid::new(64, 0.001).is_err());
    }
}
