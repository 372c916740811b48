//! Discretized linearized operators around a boosted soliton and the
//! eigen-objects of Proposition 2.1, plus the coercivity constant of
//! Proposition 2.2.
//!
//! Operator conventions (see the build ledger for the sign resolution):
//!
//! ```text
//! L      = -d²/dy² + 1 - f'(Q)                       (scalar, y variable)
//! H_β    = [ -∂² + 1 - f'(Q_β)   -β∂x ]              (symmetric)
//!          [  β∂x                 Id  ]
//! J      = [ 0   Id ]          𝓗_β := -H_β J = [ -β∂x   ∂² - 1 + f'(Q_β) ]
//!          [ -Id  0 ]                           [  Id    -β∂x            ]
//! ```
//!
//! with `Q_β(x) := Q(γx)`. The kernel direction is
//! `Z0 = (+β ∂x(∂xQ_β), ∂xQ_β)` — the plus sign is forced by `𝓗_β Z0 = 0`
//! and `J Z0 = ∂x R_β`, both verified as diagnostics at build time.
//!
//! The eigenprofiles are exact in closed form: with `Y0` the unit-L² ground
//! mode of `L` and `μ_w = β√λ0`,
//!
//! ```text
//! Z_± (x) = e^{±μ_w y} ( γ(±√λ0 Y0(y) + β Y0'(y)),  Y0(y) ),   y = γx,
//! ```
//!
//! satisfies `𝓗_β Z_± = ±e_β Z_±` with `e_β = √λ0 / γ` (direct substitution
//! using `L Y0 = -λ0 Y0` and `γ²(1-β²) = 1`). `Y0` itself is known in closed
//! form for every power nonlinearity: `L(Q^m) = (1-m²) Q^m` at `m = (p+1)/2`,
//! so `λ0 = (p+3)(p-1)/4` and `Y0 ∝ Q^{(p+1)/2}`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{NlkgError, Result};
use crate::grid::{Fourier, GridSpec};
use crate::profiles::{
    apply_j, inner_state, FieldState, Nonlinearity, SampledProfile,
    SolitonSpec,
};

// ---------------------------------------------------------------------------
// Differentiation matrices
// ---------------------------------------------------------------------------

/// Dense spectral first-derivative matrix (periodic, even n). Built from the
/// closed-form circulant generator so it is antisymmetric *exactly*:
/// `D1[i][j] = (π/L) · g((i-j) mod n)` with `g(m) = ½(-1)^m cot(πm/n)`,
/// `g(0) = g(n/2) = 0`, and `g(n-m) = -g(m)` enforced bit-for-bit.
pub fn spectral_d1(grid: &GridSpec) -> DMatrix<f64> {
    let n = grid.n;
    let scale = PI / grid.half_width;
    let mut gen = vec![0.0f64; n];
    for m in 1..n / 2 {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let g = 0.5 * sign / (PI * m as f64 / n as f64).tan();
        gen[m] = scale * g;
        gen[n - m] = -scale * g;
    }
    DMatrix::from_fn(n, n, |i, j| gen[(n + i - j) % n])
}

/// Dense spectral second-derivative matrix (periodic, even n), symmetric
/// exactly by construction:
/// `g(0) = -(n²/12 + 1/6)`, `g(m) = -(-1)^m / (2 sin²(πm/n))`, in θ units,
/// scaled by `(π/L)²`.
pub fn spectral_d2(grid: &GridSpec) -> DMatrix<f64> {
    let n = grid.n;
    let scale = (PI / grid.half_width).powi(2);
    let mut gen = vec![0.0f64; n];
    gen[0] = -scale * (n as f64 * n as f64 / 12.0 + 1.0 / 6.0);
    for m in 1..=n / 2 {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let s = (PI * m as f64 / n as f64).sin();
        let g = -scale * sign / (2.0 * s * s);
        gen[m] = g;
        if m < n {
            gen[n - m] = g;
        }
    }
    DMatrix::from_fn(n, n, |i, j| gen[(n + i - j) % n])
}

// ---------------------------------------------------------------------------
// Operator assembly
// ---------------------------------------------------------------------------

/// Discretized `L = -∂² + 1 - f'(Q)` for given ground-state samples `q`.
pub fn build_l(nl: &Nonlinearity, q_profile: &[f64], grid: &GridSpec) -> DMatrix<f64> {
    assert_eq!(q_profile.len(), grid.n, "profile/grid size mismatch");
    let mut m = -spectral_d2(grid);
    for i in 0..grid.n {
        m[(i, i)] += 1.0 - nl.f_prime(q_profile[i]);
    }
    m
}

/// Boosted soliton profile samples `Q_β(x) = Q(γx)` centered at the origin.
fn q_beta_samples(nl: &Nonlinearity, grid: &GridSpec, gamma: f64) -> Vec<f64> {
    grid.points().iter().map(|&x| nl.q(gamma * x)).collect()
}

/// Discretized scalar reduction `𝔏_β = -(1-β²)∂² + 1 - f'(Q_β)`
/// (symmetric; kernel spanned by `∂x Q_β` in the continuum).
pub fn build_lbeta(nl: &Nonlinearity, grid: &GridSpec, beta: f64) -> DMatrix<f64> {
    let gamma = 1.0 / (1.0 - beta * beta).sqrt();
    let q = q_beta_samples(nl, grid, gamma);
    let mut m = spectral_d2(grid);
    m *= -(1.0 - beta * beta);
    for i in 0..grid.n {
        m[(i, i)] += 1.0 - nl.f_prime(q[i]);
    }
    m
}

/// Discretized `H_β` (2n × 2n, symmetric to machine precision by exact
/// antisymmetry of the D1 blocks). Potential centered at the origin.
pub fn build_h(nl: &Nonlinearity, grid: &GridSpec, beta: f64) -> DMatrix<f64> {
    let n = grid.n;
    let gamma = 1.0 / (1.0 - beta * beta).sqrt();
    let q = q_beta_samples(nl, grid, gamma);
    let d1 = spectral_d1(grid);
    let d2 = spectral_d2(grid);
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = -d2[(i, j)];
            m[(i, n + j)] = -beta * d1[(i, j)];
            m[(n + i, j)] = beta * d1[(i, j)];
        }
        m[(i, i)] += 1.0 - nl.f_prime(q[i]);
        m[(n + i, n + i)] = 1.0;
    }
    m
}

/// Discretized `𝓗_β = -H_β J` assembled directly from its block form.
pub fn build_script_h(nl: &Nonlinearity, grid: &GridSpec, beta: f64) -> DMatrix<f64> {
    let n = grid.n;
    let gamma = 1.0 / (1.0 - beta * beta).sqrt();
    let q = q_beta_samples(nl, grid, gamma);
    let d1 = spectral_d1(grid);
    let d2 = spectral_d2(grid);
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = -beta * d1[(i, j)];
            m[(i, n + j)] = d2[(i, j)];
            m[(n + i, n + j)] = -beta * d1[(i, j)];
        }
        m[(i, n + i)] += -1.0 + nl.f_prime(q[i]);
        m[(n + i, i)] = 1.0;
    }
    m
}

/// Dense symplectic matrix `J` (`J(v1,v2) = (v2, -v1)`).
pub fn j_matrix(n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, n + i)] = 1.0;
        m[(n + i, i)] = -1.0;
    }
    m
}

/// Matrix-free `H_β V` with the potential centered at `center`.
pub fn apply_h(
    nl: &Nonlinearity,
    grid: &GridSpec,
    beta: f64,
    center: f64,
    v: &FieldState,
    fourier: &mut Fourier,
) -> FieldState {
    let gamma = 1.0 / (1.0 - beta * beta).sqrt();
    let d2u1 = fourier.deriv(grid, &v.u1, 2);
    let du1 = fourier.deriv(grid, &v.u1, 1);
    let du2 = fourier.deriv(grid, &v.u2, 1);
    let mut out = FieldState::zeros(*grid, v.t);
    for (i, x) in grid.points().iter().enumerate() {
        let fp = nl.f_prime(nl.q(gamma * (x - center)));
        out.u1[i] = -d2u1[i] + (1.0 - fp) * v.u1[i] - beta * du2[i];
        out.u2[i] = beta * du1[i] + v.u2[i];
    }
    out
}

/// Matrix-free `𝓗_β V = -H_β J V` with the potential centered at `center`.
pub fn apply_script_h(
    nl: &Nonlinearity,
    grid: &GridSpec,
    beta: f64,
    center: f64,
    v: &FieldState,
    fourier: &mut Fourier,
) -> FieldState {
    let gamma = 1.0 / (1.0 - beta * beta).sqrt();
    let du1 = fourier.deriv(grid, &v.u1, 1);
    let du2 = fourier.deriv(grid, &v.u2, 1);
    let d2u2 = fourier.deriv(grid, &v.u2, 2);
    let mut out = FieldState::zeros(*grid, v.t);
    for (i, x) in grid.points().iter().enumerate() {
        let fp = nl.f_prime(nl.q(gamma * (x - center)));
        out.u1[i] = -beta * du1[i] + d2u2[i] + (fp - 1.0) * v.u2[i];
        out.u2[i] = v.u1[i] - beta * du2[i];
    }
    out
}

// ---------------------------------------------------------------------------
// Ground eigenpair: dense oracle and closed form
// ---------------------------------------------------------------------------

/// Closed-form ground eigenvalue of `L`: `λ0 = (p+3)(p-1)/4`
/// (from `L(Q^{(p+1)/2}) = (1 - ((p+1)/2)²) Q^{(p+1)/2}`).
pub fn lambda0_analytic(p: f64) -> f64 {
    (p + 3.0) * (p - 1.0) / 4.0
}

/// Closed-form unit-L² ground mode of `L`: `Y0 = c Q^m`, `m = (p+1)/2`,
/// normalized by discrete quadrature on `grid` so that grid pairings treat
/// it as exactly unit.
#[derive(Debug, Clone)]
pub struct AnalyticMode {
    nl: Nonlinearity,
    /// normalization constant (positive, so `Y0(0) > 0`)
    pub norm_c: f64,
    /// exponent `m = (p+1)/2`
    pub m: f64,
    pub lambda0: f64,
}

impl AnalyticMode {
    pub fn new(nl: &Nonlinearity, grid: &GridSpec) -> Self {
        let m = (nl.p + 1.0) / 2.0;
        let sum: f64 = grid
            .points()
            .iter()
            .map(|&x| nl.q(x).powf(2.0 * m))
            .sum();
        let norm_c = 1.0 / (grid.h() * sum).sqrt();
        AnalyticMode {
            nl: *nl,
            norm_c,
            m,
            lambda0: lambda0_analytic(nl.p),
        }
    }

    /// `Y0(y)`.
    pub fn y0(&self, y: f64) -> f64 {
        self.norm_c * self.nl.q(y).powf(self.m)
    }

    /// `Y0'(y) = c m Q^{m-1} Q'`.
    pub fn y0_prime(&self, y: f64) -> f64 {
        self.norm_c * self.m * self.nl.q(y).powf(self.m - 1.0) * self.nl.q_prime(y)
    }
}

/// Ground eigenpair of a discretized `L` by dense symmetric eigensolve:
/// returns `(λ0, Y0)` with `λ0 > 0` (`-λ0` is the smallest eigenvalue of
/// `L`) and `Y0` unit L²-norm (trapezoidal quadrature), sign fixed by
/// positivity at its extremum.
pub fn ground_eigenpair(l: &DMatrix<f64>, grid: &GridSpec) -> Result<(f64, Vec<f64>)> {
    let n = grid.n;
    if l.nrows() != n || l.ncols() != n {
        return Err(NlkgError::config("operator/grid size mismatch"));
    }
    let eig = nalgebra::SymmetricEigen::new(l.clone());
    let mut min_idx = 0;
    for i in 1..n {
        if eig.eigenvalues[i] < eig.eigenvalues[min_idx] {
            min_idx = i;
        }
    }
    let min_eig = eig.eigenvalues[min_idx];
    if min_eig >= 0.0 {
        return Err(NlkgError::numerical(format!(
            "ground eigenpair: no negative eigenvalue found (min = {min_eig:.3e}); \
             wrong profile or domain too small"
        )));
    }
    let lambda0 = -min_eig;
    let col = eig.eigenvectors.column(min_idx);
    // unit L² with h-quadrature, positive at the extremum
    let mut y0: Vec<f64> = col.iter().copied().collect();
    let norm = (grid.h() * y0.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let mut peak = 0;
    for (i, v) in y0.iter().enumerate() {
        if v.abs() > y0[peak].abs() {
            peak = i;
        }
    }
    let sign = if y0[peak] < 0.0 { -1.0 } else { 1.0 };
    for v in &mut y0 {
        *v *= sign / norm;
    }
    // relative eigen-residual gate (spec: ≤ 1e-8)
    let v = DVector::from_column_slice(&y0);
    let resid = (l * &v + lambda0 * &v).norm() / (lambda0 * v.norm());
    if resid > 1e-8 {
        return Err(NlkgError::numerical(format!(
            "ground eigenpair residual {resid:.3e} above 1e-8"
        )));
    }
    Ok((lambda0, y0))
}

/// The `k` smallest eigenvalues of a symmetric operator matrix (ascending).
pub fn low_eigenvalues(l: &DMatrix<f64>, k: usize) -> Vec<f64> {
    let eig = nalgebra::SymmetricEigen::new(l.clone());
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals.truncate(k);
    vals
}

// ---------------------------------------------------------------------------
// SpectralBundle
// ---------------------------------------------------------------------------

/// Which eigen-object of the bundle to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    ZPlus,
    ZMinus,
    YPlus,
    YMinus,
    Z0,
    /// `∂x R_β = J Z0` (translation direction).
    DxR,
}

/// How `Y0` is evaluated off-grid when profiles are re-centered.
#[derive(Debug, Clone)]
enum ModeSource {
    /// Closed form `Y0 ∝ Q^{(p+1)/2}` — exact at any point.
    Analytic(AnalyticMode),
    /// Fourier-refined cubic splines of caller-provided samples.
    Sampled {
        y0: SampledProfile,
        y0_prime: SampledProfile,
    },
}

/// Tail values of a *sampled* ground mode below this are treated as zero:
/// a dense eigensolve carries an absolute noise floor ~1e-13 in the far
/// tail, and the e^{±μ_w y} weight of Z± would amplify that noise by up to
/// e^{μ_w L} (orders of magnitude above the true, decayed contribution).
/// Clipping trades that amplified noise for an O(floor^{1-μ_w/m}) truncation
/// error, which is why the sampled path cannot certify residuals much below
/// ~1e-7; the closed-form path has no such floor.
const SAMPLED_MODE_FLOOR: f64 = 1e-13;

/// Residuals and pairings measured after assembly.
#[derive(Debug, Clone)]
pub struct BundleDiagnostics {
    /// `‖𝓗 Z± ∓ e_β Z±‖ / ‖Z±‖` (L², matrix-free spectral application)
    pub eig_residual_plus: f64,
    pub eig_residual_minus: f64,
    /// `‖𝓗 Z0‖ / ‖Z0‖`
    pub kernel_residual: f64,
    /// `⟨Y+, Z−⟩` and `⟨Y−, Z+⟩` (target 1)
    pub pair_yp_zm: f64,
    pub pair_ym_zp: f64,
    /// `⟨Y+, Z+⟩`, `⟨Y−, Z−⟩`, `⟨JZ0, Z±⟩` (target 0)
    pub pair_yp_zp: f64,
    pub pair_ym_zm: f64,
    pub pair_jz0_zp: f64,
    pub pair_jz0_zm: f64,
    /// `⟨JZ0, Y±⟩` — reported only. The flow-mode Y± carry an O(1) kernel
    /// pairing for β ≠ 0 (it vanishes at β = 0 by parity); see `assemble`.
    pub pair_jz0_yp: f64,
    pub pair_jz0_ym: f64,
    /// `‖J H_β Y± ± e_β Y±‖ / ‖Y±‖`: Y± are exponential solutions of the
    /// linearized flow (Y+ decays forward at e_β, Y− grows at e_β).
    pub flow_residual_plus: f64,
    pub flow_residual_minus: f64,
    /// `⟨Z+, Z−⟩` — documents the scale convention (not normatively fixed).
    pub zp_zm: f64,
    /// max |Z±| on the outermost grid points / max |Z±| overall.
    pub edge_ratio: f64,
}

/// Tolerances enforced at bundle assembly.
#[derive(Debug, Clone, Copy)]
pub struct BundleTols {
    pub eigen_residual: f64,
    pub orthogonality: f64,
    /// Edge-decay gate for the weighted profiles.
    pub edge_ratio: f64,
}

impl Default for BundleTols {
    fn default() -> Self {
        BundleTols {
            eigen_residual: 1e-8,
            orthogonality: 1e-10,
            edge_ratio: 1e-6,
        }
    }
}

/// Eigen-objects of Proposition 2.1 for one boosted soliton, plus the
/// coercivity constant of Proposition 2.2 (computed on demand).
///
/// All stored profiles are canonical: centered at the origin (`spec.x0` and
/// the drift enter only through [`SpectralBundle::profile_at`]).
#[derive(Debug, Clone)]
pub struct SpectralBundle {
    pub grid: GridSpec,
    pub nl: Nonlinearity,
    pub spec: SolitonSpec,
    pub lambda0: f64,
    pub e_beta: f64,
    /// Weight exponent per unit `y`: `μ_w = β √λ0`.
    pub weight: f64,
    /// Unit-L² ground mode samples of `L` on the grid (y variable).
    pub y0: Vec<f64>,
    pub z_plus: FieldState,
    pub z_minus: FieldState,
    /// Flow modes `Y± = J Z± / ⟨J Z±, Z∓⟩`: `e^{∓e_β t} Y±` (comoving)
    /// solves the linearized flow exactly; `⟨Y±, Z∓⟩ = 1`, `⟨Y±, Z±⟩ = 0`,
    /// `H_β Y± ∈ Span{Z±}`.
    pub y_plus: FieldState,
    pub y_minus: FieldState,
    /// Kernel direction `Z0 = (+β ∂x(∂xQ_β), ∂xQ_β)`.
    pub z0: FieldState,
    /// Coercivity constant (set by [`SpectralBundle::compute_mu`]).
    pub mu: Option<f64>,
    pub diagnostics: BundleDiagnostics,
    source: ModeSource,
}

impl SpectralBundle {
    /// Production constructor: closed-form ground mode, exact evaluation.
    pub fn build(nl: &Nonlinearity, grid: &GridSpec, spec: &SolitonSpec) -> Result<Self> {
        Self::build_with_tols(nl, grid, spec, &BundleTols::default())
    }

    pub fn build_with_tols(
        nl: &Nonlinearity,
        grid: &GridSpec,
        spec: &SolitonSpec,
        tols: &BundleTols,
    ) -> Result<Self> {
        let mode = AnalyticMode::new(nl, grid);
        let y0_samples: Vec<f64> = grid.points().iter().map(|&x| mode.y0(x)).collect();
        assemble(
            nl,
            grid,
            spec,
            mode.lambda0,
            y0_samples,
            ModeSource::Analytic(mode),
            tols,
        )
    }

    /// Spec-mandated constructor from a *sampled* eigenpair (e.g. the dense
    /// eigensolve oracle): interpolates the samples by Fourier-refined
    /// natural cubic spline.
    pub fn from_sampled_mode(
        lambda0: f64,
        y0: &[f64],
        nl: &Nonlinearity,
        spec: &SolitonSpec,
        grid: &GridSpec,
        tols: &BundleTols,
    ) -> Result<Self> {
        if y0.len() != grid.n {
            return Err(NlkgError::config("Y0 samples do not match grid"));
        }
        if lambda0 <= 0.0 {
            return Err(NlkgError::config("lambda0 must be positive"));
        }
        let mut fourier = Fourier::new(grid.n);
        let y0_prime_samples = fourier.deriv(grid, y0, 1);
        let refine = 16;
        let spline_y0 = SampledProfile::from_grid(grid, y0, refine)?;
        let spline_y0p = SampledProfile::from_grid(grid, &y0_prime_samples, refine)?;
        assemble(
            nl,
            grid,
            spec,
            lambda0,
            y0.to_vec(),
            ModeSource::Sampled {
                y0: spline_y0,
                y0_prime: spline_y0p,
            },
            tols,
        )
    }

    fn y0_at(&self, y: f64) -> f64 {
        match &self.source {
            ModeSource::Analytic(m) => m.y0(y),
            ModeSource::Sampled { y0, .. } => {
                let v = y0.eval(y);
                if v.abs() < SAMPLED_MODE_FLOOR {
                    0.0
                } else {
                    v
                }
            }
        }
    }

    fn y0_prime_at(&self, y: f64) -> f64 {
        match &self.source {
            ModeSource::Analytic(m) => m.y0_prime(y),
            ModeSource::Sampled { y0_prime, .. } => {
                let v = y0_prime.eval(y);
                if v.abs() < SAMPLED_MODE_FLOOR {
                    0.0
                } else {
                    v
                }
            }
        }
    }

    /// Evaluate `Z_s` (s = ±1) with the soliton centered at `center`.
    fn z_profile(&self, s: f64, center: f64, t: f64) -> FieldState {
        let gamma = self.spec.gamma();
        let beta = self.spec.beta;
        let sqrt_l0 = self.lambda0.sqrt();
        let mut state = FieldState::zeros(self.grid, t);
        for (i, x) in self.grid.points().iter().enumerate() {
            let y = gamma * (x - center);
            let w = (s * self.weight * y).exp();
            let y0 = self.y0_at(y);
            let y0p = self.y0_prime_at(y);
            state.u1[i] = w * gamma * (s * sqrt_l0 * y0 + beta * y0p);
            state.u2[i] = w * y0;
        }
        state
    }

    /// Evaluate `Z0` with the soliton centered at `center`.
    fn z0_profile(&self, center: f64, t: f64) -> FieldState {
        let gamma = self.spec.gamma();
        let beta = self.spec.beta;
        let mut state = FieldState::zeros(self.grid, t);
        for (i, x) in self.grid.points().iter().enumerate() {
            let y = gamma * (x - center);
            state.u1[i] = beta * gamma * gamma * self.nl.q_second(y);
            state.u2[i] = gamma * self.nl.q_prime(y);
        }
        state
    }

    /// Profile evaluated at time `t` (centered at `spec.center(t)`).
    /// Closed-form objects are re-evaluated exactly; `Y±` (grid solves) are
    /// translated by Fourier shift, exact for their band-limited samples.
    pub fn profile_at(&self, kind: ProfileKind, t: f64, fourier: &mut Fourier) -> FieldState {
        let c = self.spec.center(t);
        match kind {
            ProfileKind::ZPlus => self.z_profile(1.0, c, t),
            ProfileKind::ZMinus => self.z_profile(-1.0, c, t),
            ProfileKind::Z0 => self.z0_profile(c, t),
            ProfileKind::DxR => {
                let z0 = self.z0_profile(c, t);
                apply_j(&z0)
            }
            ProfileKind::YPlus | ProfileKind::YMinus => {
                let base = match kind {
                    ProfileKind::YPlus => &self.y_plus,
                    _ => &self.y_minus,
                };
                let u1 = fourier.shift(&self.grid, &base.u1, c);
                let u2 = fourier.shift(&self.grid, &base.u2, c);
                FieldState::from_components(self.grid, t, u1, u2)
            }
        }
    }

    /// Canonical (origin-centered) profile.
    pub fn centered(&self, kind: ProfileKind) -> &FieldState {
        match kind {
            ProfileKind::ZPlus => &self.z_plus,
            ProfileKind::ZMinus => &self.z_minus,
            ProfileKind::YPlus => &self.y_plus,
            ProfileKind::YMinus => &self.y_minus,
            ProfileKind::Z0 => &self.z0,
            ProfileKind::DxR => panic!("DxR is derived; use profile_at"),
        }
    }

    /// Compute and store the coercivity constant (Prop 2.2) on this bundle's
    /// grid. Dense (2n)³ work — intended for n ≤ 1024.
    pub fn compute_mu(&mut self) -> Result<f64> {
        let h_mat = build_h(&self.nl, &self.grid, self.spec.beta);
        let mu = coercivity_mu(self, &h_mat)?;
        self.mu = Some(mu);
        Ok(mu)
    }

    /// Serialize: JSON metadata + binary profile blocks (snapshot format).
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let d = &self.diagnostics;
        let meta = serde_json::json!({
            "p": self.nl.p,
            "coeff": self.nl.coeff,
            "beta": self.spec.beta,
            "x0": self.spec.x0,
            "half_width": self.grid.half_width,
            "n": self.grid.n,
            "lambda0": self.lambda0,
            "e_beta": self.e_beta,
            "weight": self.weight,
            "mu": self.mu,
            "norms": {
                "z_plus": self.z_plus.l2_norm(),
                "z_minus": self.z_minus.l2_norm(),
                "y_plus": self.y_plus.l2_norm(),
                "y_minus": self.y_minus.l2_norm(),
                "z0": self.z0.l2_norm(),
            },
            "residuals": {
                "eig_plus": d.eig_residual_plus,
                "eig_minus": d.eig_residual_minus,
                "kernel": d.kernel_residual,
                "flow_y_plus": d.flow_residual_plus,
                "flow_y_minus": d.flow_residual_minus,
            },
            "pairings": {
                "yp_zm": d.pair_yp_zm,
                "ym_zp": d.pair_ym_zp,
                "yp_zp": d.pair_yp_zp,
                "ym_zm": d.pair_ym_zm,
                "jz0_zp": d.pair_jz0_zp,
                "jz0_zm": d.pair_jz0_zm,
                "jz0_yp": d.pair_jz0_yp,
                "jz0_ym": d.pair_jz0_ym,
                "zp_zm": d.zp_zm,
            },
        });
        std::fs::write(
            dir.join("bundle.json"),
            serde_json::to_string_pretty(&meta).expect("json") + "\n",
        )?;
        crate::profiles::save_snapshot(&self.z_plus, &dir.join("z_plus.snap"))?;
        crate::profiles::save_snapshot(&self.z_minus, &dir.join("z_minus.snap"))?;
        crate::profiles::save_snapshot(&self.y_plus, &dir.join("y_plus.snap"))?;
        crate::profiles::save_snapshot(&self.y_minus, &dir.join("y_minus.snap"))?;
        crate::profiles::save_snapshot(&self.z0, &dir.join("z0.snap"))?;
        Ok(())
    }
}

/// Spec-surface alias: assemble a bundle from `(λ0, Y0)` samples.
///
/// The eigen-residual tolerance is relaxed to 1e-5 here (vs 1e-8 for the
/// closed-form path): a discrete eigenvector carries an absolute noise floor
/// ~1e-13, its spectral derivative ~k·1e-13, and the e^{μ_w y} weight
/// amplifies that tail noise to a few 1e-6 at moderate β regardless of grid
/// resolution (see [`SAMPLED_MODE_FLOOR`]). Production code uses
/// [`SpectralBundle::build`], which is noise-floor free.
pub fn boosted_pairs(
    lambda0: f64,
    y0: &[f64],
    nl: &Nonlinearity,
    spec: &SolitonSpec,
    grid: &GridSpec,
) -> Result<SpectralBundle> {
    let tols = BundleTols {
        eigen_residual: 1e-5,
        ..BundleTols::default()
    };
    SpectralBundle::from_sampled_mode(lambda0, y0, nl, spec, grid, &tols)
}

fn assemble(
    nl: &Nonlinearity,
    grid: &GridSpec,
    spec: &SolitonSpec,
    lambda0: f64,
    y0_samples: Vec<f64>,
    source: ModeSource,
    tols: &BundleTols,
) -> Result<SpectralBundle> {
    spec.validate()?;
    nl.validate()?;
    grid.validate()?;
    let beta = spec.beta;
    let gamma = spec.gamma();
    let e_beta = lambda0.sqrt() / gamma;
    let weight = beta * lambda0.sqrt();

    let mut bundle = SpectralBundle {
        grid: *grid,
        nl: *nl,
        spec: *spec,
        lambda0,
        e_beta,
        weight,
        y0: y0_samples,
        z_plus: FieldState::zeros(*grid, 0.0),
        z_minus: FieldState::zeros(*grid, 0.0),
        y_plus: FieldState::zeros(*grid, 0.0),
        y_minus: FieldState::zeros(*grid, 0.0),
        z0: FieldState::zeros(*grid, 0.0),
        mu: None,
        diagnostics: BundleDiagnostics {
            eig_residual_plus: f64::NAN,
            eig_residual_minus: f64::NAN,
            kernel_residual: f64::NAN,
            pair_yp_zm: f64::NAN,
            pair_ym_zp: f64::NAN,
            pair_yp_zp: f64::NAN,
            pair_ym_zm: f64::NAN,
            pair_jz0_zp: f64::NAN,
            pair_jz0_zm: f64::NAN,
            pair_jz0_yp: f64::NAN,
            pair_jz0_ym: f64::NAN,
            flow_residual_plus: f64::NAN,
            flow_residual_minus: f64::NAN,
            zp_zm: f64::NAN,
            edge_ratio: f64::NAN,
        },
        source,
    };

    bundle.z_plus = bundle.z_profile(1.0, 0.0, 0.0);
    bundle.z_minus = bundle.z_profile(-1.0, 0.0, 0.0);
    bundle.z0 = bundle.z0_profile(0.0, 0.0);
    let jz0 = apply_j(&bundle.z0);

    // Edge-decay gate: the e^{±μ_w y} weight must have died out by the seam.
    let n = grid.n;
    let mut edge = 0.0f64;
    let mut peak = 0.0f64;
    for z in [&bundle.z_plus, &bundle.z_minus] {
        for i in 0..n {
            let v = z.u1[i].abs().max(z.u2[i].abs());
            peak = peak.max(v);
            if i < 2 || i >= n - 2 {
                edge = edge.max(v);
            }
        }
    }
    let edge_ratio = edge / peak;
    if edge_ratio.is_nan() || edge_ratio > tols.edge_ratio {
        return Err(NlkgError::numerical(format!(
            "weighted eigen-profile has not decayed at the domain edge \
             (edge/peak = {edge_ratio:.3e}); increase half_width"
        )));
    }

    // Y±: the exponential solutions of the linearized flow, in closed form.
    // 𝓗_β Z± = ±e_β Z± with 𝓗_β = −H_β J gives H_β(J Z±) = ∓e_β Z±, hence
    // J H_β (J Z±) = ∓e_β (J Z±): the comoving state e^{∓e_β t} (J Z±) solves
    // ∂_t W = J H_β W exactly. Normalizing by ⟨J Z±, Z∓⟩ yields
    // H_β Y± ∈ Span{Z±} with ⟨Y±, Z∓⟩ = 1, and ⟨Y±, Z±⟩ = 0 for free
    // (antisymmetry of J).
    //
    // Prop 2.1 pins its representative with ⟨J Z0, Y±⟩ = 0 instead. The two
    // differ by an element of ker H_β = Span{J Z0} = Span{∂xR_β}, and that
    // kernel element is a *frozen* (zero-rate) solution of the linearized
    // flow: seeding the ⟨J Z0, ·⟩ = 0 representative leaves an
    // O(A e^{−e_β t}) translation residue against the fixed-center soliton,
    // which would break the O(e^{−2e_β t}) expansion of Theorem 1.4 that the
    // construction module and acceptance criteria 5/7 verify. We therefore
    // take the flow-mode representative; ⟨J Z0, Y±⟩ is reported as a
    // diagnostic but not gated (it vanishes only at β = 0, by parity). See
    // the build ledger for the measured evidence behind this choice.
    let mut fourier = Fourier::new(n);
    let flow_mode = |z: &FieldState, z_opp: &FieldState| -> Result<FieldState> {
        let mut y = apply_j(z);
        let c = inner_state(&y, z_opp);
        if c.abs() < 1e-12 * y.l2_norm() * z_opp.l2_norm() {
            return Err(NlkgError::numerical(
                "Y± normalization pairing ⟨J Z±, Z∓⟩ vanishes; grid cannot resolve the modes",
            ));
        }
        y.scale(1.0 / c);
        Ok(y)
    };
    bundle.y_plus = flow_mode(&bundle.z_plus, &bundle.z_minus)?;
    bundle.y_minus = flow_mode(&bundle.z_minus, &bundle.z_plus)?;

    // Diagnostics ----------------------------------------------------------
    let mut residual = |z: &FieldState, sign: f64| -> f64 {
        let hz = apply_script_h(nl, grid, beta, 0.0, z, &mut fourier);
        let mut r = hz;
        r.axpy(-sign * e_beta, z);
        r.l2_norm() / z.l2_norm()
    };
    let d = &mut bundle.diagnostics;
    d.eig_residual_plus = residual(&bundle.z_plus, 1.0);
    d.eig_residual_minus = residual(&bundle.z_minus, -1.0);
    let hz0 = apply_script_h(nl, grid, beta, 0.0, &bundle.z0, &mut fourier);
    d.kernel_residual = hz0.l2_norm() / bundle.z0.l2_norm();
    d.pair_yp_zm = inner_state(&bundle.y_plus, &bundle.z_minus);
    d.pair_ym_zp = inner_state(&bundle.y_minus, &bundle.z_plus);
    d.pair_yp_zp = inner_state(&bundle.y_plus, &bundle.z_plus);
    d.pair_ym_zm = inner_state(&bundle.y_minus, &bundle.z_minus);
    d.pair_jz0_zp = inner_state(&jz0, &bundle.z_plus);
    d.pair_jz0_zm = inner_state(&jz0, &bundle.z_minus);
    d.pair_jz0_yp = inner_state(&jz0, &bundle.y_plus);
    d.pair_jz0_ym = inner_state(&jz0, &bundle.y_minus);
    d.zp_zm = inner_state(&bundle.z_plus, &bundle.z_minus);
    d.edge_ratio = edge_ratio;
    let mut flow_residual = |y: &FieldState, rate: f64| -> f64 {
        let hy = apply_h(nl, grid, beta, 0.0, y, &mut fourier);
        let mut r = apply_j(&hy);
        r.axpy(-rate, y);
        r.l2_norm() / y.l2_norm()
    };
    d.flow_residual_plus = flow_residual(&bundle.y_plus, -e_beta);
    d.flow_residual_minus = flow_residual(&bundle.y_minus, e_beta);

    if d.eig_residual_plus > tols.eigen_residual
        || d.eig_residual_minus > tols.eigen_residual
        || d.kernel_residual > tols.eigen_residual
        || d.flow_residual_plus > tols.eigen_residual
        || d.flow_residual_minus > tols.eigen_residual
    {
        return Err(NlkgError::numerical(format!(
            "bundle eigen-residuals above {:.1e}: Z+ {:.3e}, Z- {:.3e}, Z0 {:.3e}, \
             flow Y+ {:.3e}, flow Y- {:.3e}",
            tols.eigen_residual,
            d.eig_residual_plus,
            d.eig_residual_minus,
            d.kernel_residual,
            d.flow_residual_plus,
            d.flow_residual_minus
        )));
    }
    let worst_orth = [
        d.pair_yp_zm - 1.0,
        d.pair_ym_zp - 1.0,
        d.pair_yp_zp,
        d.pair_ym_zm,
        d.pair_jz0_zp,
        d.pair_jz0_zm,
    ]
    .iter()
    .fold(0.0f64, |m, v| m.max(v.abs()));
    if worst_orth > tols.orthogonality {
        return Err(NlkgError::numerical(format!(
            "bundle pairing defect {worst_orth:.3e} above {:.1e}",
            tols.orthogonality
        )));
    }

    Ok(bundle)
}

// ---------------------------------------------------------------------------
// Coercivity (Prop 2.2)
// ---------------------------------------------------------------------------

/// Largest `μ` such that (a) the smallest Rayleigh quotient
/// `⟨H_β V, V⟩ / ‖V‖²_{H¹×L²}` over the discrete subspace L²-orthogonal to
/// `{Z+, Z−, J Z0}` is ≥ μ (projected dense eigensolve, exact Householder
/// reduction of the three constraints), and (b) the Prop 2.2 inequality
/// `⟨H_βV,V⟩ ≥ μ‖V‖² − (1/μ)(⟨V,Z+⟩² + ⟨V,Z−⟩² + ⟨V,JZ0⟩²)` holds on a
/// seeded 1000-vector ensemble (μ is halved until it does).
pub fn coercivity_mu(bundle: &SpectralBundle, h_beta: &DMatrix<f64>) -> Result<f64> {
    use rand::Rng;
    use rand::SeedableRng;

    let grid = &bundle.grid;
    let n = grid.n;
    if h_beta.nrows() != 2 * n || h_beta.ncols() != 2 * n {
        return Err(NlkgError::config("H_β matrix does not match bundle grid"));
    }
    let h = grid.h();

    let stack = |f: &FieldState| -> DVector<f64> {
        let mut v = DVector::zeros(2 * n);
        for i in 0..n {
            v[i] = f.u1[i];
            v[n + i] = f.u2[i];
        }
        v
    };
    let jz0 = apply_j(&bundle.z0);
    let constraints = [
        stack(&bundle.z_plus),
        stack(&bundle.z_minus),
        stack(&jz0),
    ];

    // H¹×L² Gram (coefficient form, common h factor dropped):
    // G = blockdiag(I − D2, I).
    let d2 = spectral_d2(grid);
    let mut g = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] = -d2[(i, j)];
        }
        g[(i, i)] += 1.0;
        g[(n + i, n + i)] = 1.0;
    }

    // Householder vectors that upper-triangularize the 2n×3 constraint
    // matrix; Q = H0 H1 H2 maps span{e_0,e_1,e_2} onto the constraint span.
    let mut c = DMatrix::zeros(2 * n, 3);
    for (k, v) in constraints.iter().enumerate() {
        c.set_column(k, v);
    }
    let mut reflectors: Vec<DVector<f64>> = Vec::new();
    for k in 0..3 {
        let mut v = DVector::zeros(2 * n);
        for i in k..2 * n {
            v[i] = c[(i, k)];
        }
        let norm = v.norm();
        if norm <= 1e-12 {
            return Err(NlkgError::numerical(
                "coercivity constraints are linearly dependent",
            ));
        }
        let alpha = if v[k] >= 0.0 { -norm } else { norm };
        v[k] -= alpha;
        let vnorm = v.norm();
        if vnorm > 0.0 {
            v /= vnorm;
            // apply to remaining columns of C
            for col in k..3 {
                let mut dot = 0.0;
                for i in 0..2 * n {
                    dot += v[i] * c[(i, col)];
                }
                for i in 0..2 * n {
                    c[(i, col)] -= 2.0 * dot * v[i];
                }
            }
        }
        if c[(k, k)].abs() <= 1e-12 {
            return Err(NlkgError::numerical(
                "coercivity constraints are linearly dependent",
            ));
        }
        reflectors.push(v);
    }

    let reflect_sym = |m: &mut DMatrix<f64>, v: &DVector<f64>| {
        // m ← (I − 2vvᵀ) m (I − 2vvᵀ)
        let mv = &*m * v; // 2n
        let vmv = v.dot(&mv);
        // m − 2 v (mv)ᵀ − 2 (mv) vᵀ + 4 vmv v vᵀ
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                m[(i, j)] += -2.0 * v[i] * mv[j] - 2.0 * mv[i] * v[j]
                    + 4.0 * vmv * v[i] * v[j];
            }
        }
    };

    let mut h_red = h_beta.clone();
    let mut g_red = g.clone();
    for v in &reflectors {
        reflect_sym(&mut h_red, v);
        reflect_sym(&mut g_red, v);
    }
    let dim = 2 * n - 3;
    let h_sub = h_red.view((3, 3), (dim, dim)).into_owned();
    let g_sub = g_red.view((3, 3), (dim, dim)).into_owned();

    // generalized eigenproblem via Cholesky of the reduced Gram
    let chol = g_sub
        .clone()
        .cholesky()
        .ok_or_else(|| NlkgError::numerical("reduced H¹×L² Gram not positive definite"))?;
    let l = chol.l();
    let b = l
        .solve_lower_triangular(&h_sub)
        .ok_or_else(|| NlkgError::numerical("triangular solve failed"))?;
    let a_t = l
        .solve_lower_triangular(&b.transpose())
        .ok_or_else(|| NlkgError::numerical("triangular solve failed"))?;
    let a = 0.5 * (&a_t + a_t.transpose());
    let eig = nalgebra::SymmetricEigen::new(a);
    let mut mu = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if mu.is_nan() || mu <= 0.0 {
        return Err(NlkgError::numerical(format!(
            "projected operator not positive (min Rayleigh quotient {mu:.3e}); grid too coarse"
        )));
    }

    // Prop 2.2 inequality on a deterministic ensemble; halve μ until it holds.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x6e6c6b67);
    let mut fourier = Fourier::new(n);
    let mut samples: Vec<DVector<f64>> = Vec::with_capacity(1000);
    for _ in 0..1000 {
        // smooth random field: white noise low-passed to the bottom quarter
        // of the spectrum, plus random constraint-direction admixtures
        let mut v = DVector::zeros(2 * n);
        for half in 0..2 {
            let noise: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut modes = fourier.to_modes(&noise);
            for (j, m) in modes.iter_mut().enumerate() {
                let idx = if j <= n / 2 { j } else { n - j };
                if idx > n / 8 {
                    *m *= 0.0;
                }
            }
            let smooth = fourier.to_values(modes);
            for i in 0..n {
                v[half * n + i] = smooth[i];
            }
        }
        for cvec in &constraints {
            let amp: f64 = rng.gen_range(-2.0..2.0);
            let cnorm = cvec.norm();
            v += cvec * (amp / cnorm);
        }
        samples.push(v);
    }
    'outer: for _halving in 0..30 {
        for v in &samples {
            let quad = h * v.dot(&(h_beta * v));
            let norm_b = h * v.dot(&(&g * v));
            let penalty: f64 = constraints
                .iter()
                .map(|cvec| {
                    let pr = h * cvec.dot(v);
                    pr * pr
                })
                .sum();
            if quad < mu * norm_b - penalty / mu - 1e-12 {
                mu *= 0.5;
                continue 'outer;
            }
        }
        return Ok(mu);
    }
    Err(NlkgError::numerical(
        "coercivity constant collapsed during Prop 2.2 verification",
    ))
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::ground_state;

    fn nl3() -> Nonlinearity {
        Nonlinearity::new(3.0, 1.0).unwrap()
    }

    #[test]
    fn d1_matches_fft_derivative_and_is_antisymmetric() {
        let grid = GridSpec::new(10.0, 64).unwrap();
        let d1 = spectral_d1(&grid);
        for i in 0..64 {
            for j in 0..64 {
                assert_eq!(d1[(i, j)], -d1[(j, i)], "exact antisymmetry");
            }
        }
        let k = grid.wavenumber(3);
        let f: Vec<f64> = grid.points().iter().map(|x| (k * x).sin()).collect();
        let mut fourier = Fourier::new(64);
        let dfft = fourier.deriv(&grid, &f, 1);
        let fv = DVector::from_column_slice(&f);
        let dmat = &d1 * &fv;
        for i in 0..64 {
            assert!((dmat[i] - dfft[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn d2_matches_fft_derivative_and_is_symmetric() {
        let grid = GridSpec::new(10.0, 64).unwrap();
        let d2 = spectral_d2(&grid);
        for i in 0..64 {
            for j in 0..64 {
                assert_eq!(d2[(i, j)], d2[(j, i)], "exact symmetry");
            }
        }
        let k = grid.wavenumber(5);
        let f: Vec<f64> = grid.points().iter().map(|x| (k * x).cos()).collect();
        let mut fourier = Fourier::new(64);
        let dfft = fourier.deriv(&grid, &f, 2);
        let fv = DVector::from_column_slice(&f);
        let dmat = &d2 * &fv;
        for i in 0..64 {
            assert!((dmat[i] - dfft[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn free_operator_ground_eigenvalue_is_one() {
        let grid = GridSpec::new(20.0, 256).unwrap();
        let nl = nl3();
        let zeros = vec![0.0; grid.n];
        let l = build_l(&nl, &zeros, &grid);
        let vals = low_eigenvalues(&l, 1);
        assert!((vals[0] - 1.0).abs() < 1e-10, "got {}", vals[0]);
    }

    #[test]
    fn ground_eigenpair_matches_poschl_teller() {
        let grid = GridSpec::new(20.0, 512).unwrap();
        let nl = nl3();
        let gs = ground_state(&nl, &grid).unwrap();
        let l = build_l(&nl, &gs.q, &grid);
        let (lambda0, y0) = ground_eigenpair(&l, &grid).unwrap();
        assert!((lambda0 - 3.0).abs() < 1e-6, "lambda0 = {lambda0}");
        // cosine similarity against sech² ≥ 1 − 1e−8
        let target: Vec<f64> = grid
            .points()
            .iter()
            .map(|&x| (1.0 / x.cosh()).powi(2))
            .collect();
        let dot = crate::grid::inner(&grid, &y0, &target);
        let cos = dot / (crate::grid::norm_l2(&grid, &y0) * crate::grid::norm_l2(&grid, &target));
        assert!(cos > 1.0 - 1e-8, "cosine similarity {cos}");
        // kernel: second-smallest eigenvalue ≈ 0
        let vals = low_eigenvalues(&l, 2);
        assert!(vals[1].abs() < 1e-6, "second eigenvalue {}", vals[1]);
    }

    #[test]
    fn analytic_mode_matches_dense_eigensolve() {
        let grid = GridSpec::new(20.0, 512).unwrap();
        let nl = nl3();
        let gs = ground_state(&nl, &grid).unwrap();
        let l = build_l(&nl, &gs.q, &grid);
        let (lambda0, y0) = ground_eigenpair(&l, &grid).unwrap();
        let mode = AnalyticMode::new(&nl, &grid);
        assert!((lambda0 - mode.lambda0).abs() < 1e-8);
        let mut diff = 0.0f64;
        for (i, &x) in grid.points().iter().enumerate() {
            diff = diff.max((y0[i] - mode.y0(x)).abs());
        }
        assert!(diff < 1e-7, "max pointwise gap {diff}");
    }

    #[test]
    fn script_h_equals_minus_h_times_j() {
        let grid = GridSpec::new(20.0, 128).unwrap();
        let nl = nl3();
        let beta = 0.6;
        let direct = build_script_h(&nl, &grid, beta);
        let h = build_h(&nl, &grid, beta);
        let j = j_matrix(grid.n);
        let product = -(&h * &j);
        let diff = (&direct - &product).abs().max();
        assert!(diff < 1e-12, "matrix mismatch {diff}");
        // H_β symmetry to machine precision
        let sym_defect = (&h - h.transpose()).abs().max();
        assert!(sym_defect == 0.0, "H_β not exactly symmetric: {sym_defect}");
    }

    #[test]
    fn bundle_invariants_at_rest() {
        // L = 30: Z0's kernel residual is limited by the seam tail of Q'
        // (~sech(L)) amplified by k_max² under the spectral Laplacian, so
        // L = 20 would sit at ~1e-6 while L = 30 reaches ~1e-10.
        let grid = GridSpec::new(30.0, 512).unwrap();
        let nl = nl3();
        let spec = SolitonSpec { beta: 0.0, x0: 0.0 };
        let bundle = SpectralBundle::build(&nl, &grid, &spec).unwrap();
        assert!((bundle.e_beta - 3.0f64.sqrt()).abs() < 1e-12);
        // At β = 0 the normalization is fully closed-form:
        // Y+ = ½(−Y0/√λ0, Y0), Y− = ½(+Y0/√λ0, Y0).
        let s3 = 3.0f64.sqrt();
        for i in 0..grid.n {
            let y0 = bundle.y0[i];
            assert!((bundle.y_plus.u1[i] + 0.5 * y0 / s3).abs() < 1e-9);
            assert!((bundle.y_plus.u2[i] - 0.5 * y0).abs() < 1e-9);
            assert!((bundle.y_minus.u1[i] - 0.5 * y0 / s3).abs() < 1e-9);
            assert!((bundle.y_minus.u2[i] - 0.5 * y0).abs() < 1e-9);
        }
    }

    #[test]
    fn bundle_invariants_fast_boost() {
        let grid = GridSpec::new(40.0, 1024).unwrap();
        let nl = nl3();
        let spec = SolitonSpec { beta: 0.8, x0: 0.0 };
        let bundle = SpectralBundle::build(&nl, &grid, &spec).unwrap();
        let d = &bundle.diagnostics;
        assert!((bundle.e_beta - (3.0f64 * 0.36).sqrt()).abs() < 1e-12);
        assert!(d.eig_residual_plus < 1e-8, "{}", d.eig_residual_plus);
        assert!(d.eig_residual_minus < 1e-8, "{}", d.eig_residual_minus);
        assert!(d.kernel_residual < 1e-8, "{}", d.kernel_residual);
        for v in [
            d.pair_yp_zm - 1.0,
            d.pair_ym_zp - 1.0,
            d.pair_yp_zp,
            d.pair_ym_zm,
            d.pair_jz0_zp,
            d.pair_jz0_zm,
        ] {
            assert!(v.abs() < 1e-10, "pairing defect {v:.3e}");
        }
        // Y± are genuine flow modes …
        assert!(d.flow_residual_plus < 1e-8, "{}", d.flow_residual_plus);
        assert!(d.flow_residual_minus < 1e-8, "{}", d.flow_residual_minus);
        // … and therefore carry an O(1) kernel pairing at β ≠ 0 (the Prop 2.1
        // representative would zero this but freeze an e^{−e_β t} translation
        // residue into the Theorem 1.4 expansion; see the assemble comment).
        assert!(d.pair_jz0_yp.abs() > 1e-3, "{}", d.pair_jz0_yp);
    }

    #[test]
    fn e_beta_half_is_exact() {
        let grid = GridSpec::new(30.0, 512).unwrap();
        let nl = nl3();
        let spec = SolitonSpec { beta: 0.5, x0: 0.0 };
        let bundle = SpectralBundle::build(&nl, &grid, &spec).unwrap();
        assert!((bundle.e_beta - 1.5).abs() < 1e-14, "e_β = {}", bundle.e_beta);
    }

    #[test]
    fn sampled_mode_path_agrees_with_closed_form() {
        let grid = GridSpec::new(30.0, 512).unwrap();
        let nl = nl3();
        let spec = SolitonSpec { beta: 0.5, x0: 0.0 };
        let gs = ground_state(&nl, &grid).unwrap();
        let l = build_l(&nl, &gs.q, &grid);
        let (lambda0, y0) = ground_eigenpair(&l, &grid).unwrap();
        let sampled = boosted_pairs(lambda0, &y0, &nl, &spec, &grid).unwrap();
        let exact = SpectralBundle::build(&nl, &grid, &spec).unwrap();
        let dz = sampled.z_plus.minus(&exact.z_plus).l2_norm();
        let dy = sampled.y_plus.minus(&exact.y_plus).l2_norm();
        // limited by eigensolver noise amplified in the weighted tails
        assert!(dz < 1e-5, "Z+ gap {dz}");
        assert!(dy < 1e-5, "Y+ gap {dy}");
    }

    #[test]
    fn kernel_direction_is_dx_r() {
        use crate::profiles::boost_dx;

        let grid = GridSpec::new(30.0, 512).unwrap();
        let nl = nl3();
        let spec = SolitonSpec { beta: 0.7, x0: 0.0 };
        let bundle = SpectralBundle::build(&nl, &grid, &spec).unwrap();
        let jz0 = apply_j(&bundle.z0);
        let dxr = boost_dx(&nl, &grid, &spec, 0.0).unwrap();
        // x0 = 0, t = 0 → centered; J Z0 must equal ∂xR_β identically
        let gap = jz0.minus(&dxr).l2_norm();
        assert!(gap < 1e-12, "J Z0 vs ∂xR gap {gap}");
    }

    #[test]
    fn profile_translation_matches_grid_roll() {
        let grid = GridSpec::new(30.0, 512).unwrap();
        let nl = nl3();
        let spec = SolitonSpec { beta: 0.5, x0: 0.0 };
        let bundle = SpectralBundle::build(&nl, &grid, &spec).unwrap();
        let mut fourier = Fourier::new(grid.n);
        // choose t so the center is exactly 3 grid cells
        let shift_cells = 3usize;
        let t = shift_cells as f64 * grid.h() / spec.beta;
        let moved = bundle.profile_at(ProfileKind::YPlus, t, &mut fourier);
        for i in 0..grid.n {
            let src = (grid.n + i - shift_cells) % grid.n;
            assert!((moved.u1[i] - bundle.y_plus.u1[src]).abs() < 1e-9);
            assert!((moved.u2[i] - bundle.y_plus.u2[src]).abs() < 1e-9);
        }
        // closed-form profiles: translated evaluation matches direct formula
        let zp = bundle.profile_at(ProfileKind::ZPlus, t, &mut fourier);
        let c = spec.center(t);
        let direct = bundle.z_profile(1.0, c, t);
        assert!(zp.minus(&direct).l2_norm() < 1e-14);
    }

    #[test]
    fn coercivity_constant_positive_and_stable() {
        // Coarse grids only need qualitatively correct profiles for μ, so
        // relax the assembly gates (seam/aliasing residuals ~1e-5 at n=128).
        let tols = BundleTols {
            eigen_residual: 1e-3,
            orthogonality: 1e-8,
            edge_ratio: 1e-6,
        };
        let nl = nl3();
        let spec = SolitonSpec { beta: 0.3, x0: 0.0 };
        let grid = GridSpec::new(20.0, 128).unwrap();
        let mut bundle = SpectralBundle::build_with_tols(&nl, &grid, &spec, &tols).unwrap();
        let mu = bundle.compute_mu().unwrap();
        assert!(mu > 0.0);
        let fine_grid = GridSpec::new(20.0, 256).unwrap();
        let mut fine = SpectralBundle::build_with_tols(&nl, &fine_grid, &spec, &tols).unwrap();
        let mu_fine = fine.compute_mu().unwrap();
        assert!(
            (mu - mu_fine).abs() < 0.2 * mu.max(mu_fine),
            "μ unstable under refinement: {mu} vs {mu_fine}"
        );
    }
}
