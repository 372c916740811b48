//! Ground states, Lorentz-boosted soliton profiles, multi-soliton sums,
//! sampled-profile interpolation, and field-state snapshots.
//!
//! Conventions (fixed throughout the crate):
//! - Nonlinearity `f(u) = a |u|^{p-1} u` with `a > 0`, `p > 1`.
//! - Ground state `Q(x) = C sech^{alpha}(kappa x)` with
//!   `alpha = 2/(p-1)`, `kappa = (p-1)/2`, `C = ((p+1)/(2a))^{1/(p-1)}`,
//!   solving `Q'' - Q + f(Q) = 0`.
//! - Boosted soliton at velocity `beta` (|beta| < 1), center `x0`:
//!   `R(t,x) = ( Q(y), -beta gamma Q'(y) )` with `y = gamma (x - x0 - beta t)`
//!   and `gamma = 1/sqrt(1-beta^2)` (Lorentz contraction of the profile).

use crate::error::{NlkgError, Result};
use crate::grid::{inner, Fourier, GridSpec};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Power nonlinearity `f(u) = a |u|^{p-1} u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    /// Exponent `p > 1`.
    pub p: f64,
    /// Coefficient `a > 0`.
    pub coeff: f64,
}

impl Nonlinearity {
    pub fn new(p: f64, coeff: f64) -> Result<Self> {
        let nl = Nonlinearity { p, coeff };
        nl.validate()?;
        Ok(nl)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p > 1.0) {
            return Err(NlkgError::config(format!(
                "nonlinearity exponent must satisfy p > 1, got {}",
                self.p
            )));
        }
        if !(self.coeff.is_finite() && self.coeff > 0.0) {
            return Err(NlkgError::config(format!(
                "nonlinearity coefficient must be positive, got {}",
                self.coeff
            )));
        }
        Ok(())
    }

    /// `f(u) = a |u|^{p-1} u` (with exact fast paths for p = 3 and p = 5).
    #[inline]
    pub fn f(&self, u: f64) -> f64 {
        if self.p == 3.0 {
            self.coeff * u * u * u
        } else if self.p == 5.0 {
            let u2 = u * u;
            self.coeff * u2 * u2 * u
        } else {
            self.coeff * u.abs().powf(self.p - 1.0) * u
        }
    }

    /// `f'(u) = a p |u|^{p-1}`.
    #[inline]
    pub fn f_prime(&self, u: f64) -> f64 {
        if self.p == 3.0 {
            3.0 * self.coeff * u * u
        } else if self.p == 5.0 {
            let u2 = u * u;
            5.0 * self.coeff * u2 * u2
        } else {
            self.coeff * self.p * u.abs().powf(self.p - 1.0)
        }
    }

    /// Antiderivative `F(u) = a |u|^{p+1} / (p+1)` (for the energy).
    #[inline]
    pub fn big_f(&self, u: f64) -> f64 {
        if self.p == 3.0 {
            let u2 = u * u;
            0.25 * self.coeff * u2 * u2
        } else {
            self.coeff * u.abs().powf(self.p + 1.0) / (self.p + 1.0)
        }
    }

    /// Ground-state amplitude `Q(0) = ((p+1)/(2a))^{1/(p-1)}`.
    pub fn ground_amplitude(&self) -> f64 {
        ((self.p + 1.0) / (2.0 * self.coeff)).powf(1.0 / (self.p - 1.0))
    }

    /// Profile shape exponent `alpha = 2/(p-1)`.
    pub fn alpha(&self) -> f64 {
        2.0 / (self.p - 1.0)
    }

    /// Profile width parameter `kappa = (p-1)/2` (so `alpha * kappa = 1`).
    pub fn kappa(&self) -> f64 {
        (self.p - 1.0) / 2.0
    }

    /// Pointwise ground state `Q(x) = C sech^alpha(kappa x)`.
    pub fn q(&self, x: f64) -> f64 {
        let s = 1.0 / (self.kappa() * x).cosh();
        self.ground_amplitude() * s.powf(self.alpha())
    }

    /// Pointwise `Q'(x) = -C sech^alpha(kappa x) tanh(kappa x)`
    /// (uses `alpha * kappa = 1`).
    pub fn q_prime(&self, x: f64) -> f64 {
        -self.q(x) * (self.kappa() * x).tanh()
    }

    /// Pointwise `Q''(x) = kappa^2 alpha Q (alpha - (alpha+1) sech^2(kappa x))`.
    pub fn q_second(&self, x: f64) -> f64 {
        let alpha = self.alpha();
        let kappa = self.kappa();
        let th = (kappa * x).tanh();
        let sech2 = 1.0 - th * th;
        self.q(x) * kappa * kappa * alpha * (alpha - (alpha + 1.0) * sech2)
    }
}

/// Ground state sampled on a grid, with its derivative.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub grid: GridSpec,
    pub nl: Nonlinearity,
    pub q: Vec<f64>,
    pub q_prime: Vec<f64>,
    /// Maximum of the discrete residual `|Q'' - Q + f(Q)|` measured with a
    /// second-order stencil (reported for refinement studies).
    pub fd2_residual: f64,
}

/// Sample the closed-form ground state on the grid, verify decay at the
/// domain edge and the discrete ODE residual (second-order stencil).
pub fn ground_state(nl: &Nonlinearity, grid: &GridSpec) -> Result<GroundState> {
    nl.validate()?;
    grid.validate()?;
    let c = nl.ground_amplitude();
    let points = grid.points();
    let q: Vec<f64> = points.iter().map(|&x| nl.q(x)).collect();
    let q_prime: Vec<f64> = points.iter().map(|&x| nl.q_prime(x)).collect();

    // Tail check: the profile must have decayed at the domain edge.
    let edge = nl.q(grid.half_width);
    if edge > 1e-8 * c {
        return Err(NlkgError::numerical(format!(
            "domain too small for ground-state decay: Q(L)/Q(0) = {:.3e} > 1e-8 \
             (increase half_width; decay rate is alpha*kappa = 1)",
            edge / c
        )));
    }

    // Second-order residual check (periodic stencil; tails are ~0 so the
    // wrap-around contributes nothing).
    let n = grid.n;
    let h2 = grid.h() * grid.h();
    let mut res_max: f64 = 0.0;
    for i in 0..n {
        let im = (i + n - 1) % n;
        let ip = (i + 1) % n;
        let lap = (q[im] - 2.0 * q[i] + q[ip]) / h2;
        let r = (lap - q[i] + nl.f(q[i])).abs();
        res_max = res_max.max(r);
    }
    // Gate: the second-order stencil error is ~(h^2/12) max|Q''''|; use a
    // generous constant so only genuinely under-resolved grids fail.
    let scale = c * (1.0 + nl.kappa().powi(4));
    let tol_res = 5.0 * h2 * scale;
    if res_max > tol_res {
        return Err(NlkgError::numerical(format!(
            "ground-state residual {res_max:.3e} exceeds tolerance {tol_res:.3e} \
             (grid too coarse for p = {})",
            nl.p
        )));
    }

    Ok(GroundState {
        grid: *grid,
        nl: *nl,
        q,
        q_prime,
        fd2_residual: res_max,
    })
}

/// One soliton of the family: velocity and initial center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonSpec {
    pub beta: f64,
    pub x0: f64,
}

impl SolitonSpec {
    pub fn gamma(&self) -> f64 {
        1.0 / (1.0 - self.beta * self.beta).sqrt()
    }

    /// Center position at time `t`.
    pub fn center(&self, t: f64) -> f64 {
        self.x0 + self.beta * t
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta.abs() < 1.0) {
            return Err(NlkgError::config(format!(
                "soliton velocity must satisfy |beta| < 1, got {}",
                self.beta
            )));
        }
        if !self.x0.is_finite() {
            return Err(NlkgError::config("soliton center must be finite".to_string()));
        }
        Ok(())
    }
}

/// Two-component field `(u1, u2) = (u, du/dt)` sampled on a grid at time `t`.
/// Also used for static two-component profiles (with `t = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub grid: GridSpec,
    pub t: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl FieldState {
    pub fn zeros(grid: GridSpec, t: f64) -> Self {
        FieldState {
            grid,
            t,
            u1: vec![0.0; grid.n],
            u2: vec![0.0; grid.n],
        }
    }

    pub fn from_components(grid: GridSpec, t: f64, u1: Vec<f64>, u2: Vec<f64>) -> Self {
        assert_eq!(u1.len(), grid.n);
        assert_eq!(u2.len(), grid.n);
        FieldState { grid, t, u1, u2 }
    }

    /// `self += c * other` (componentwise; grids must match).
    pub fn axpy(&mut self, c: f64, other: &FieldState) {
        debug_assert_eq!(self.grid, other.grid);
        for i in 0..self.u1.len() {
            self.u1[i] += c * other.u1[i];
            self.u2[i] += c * other.u2[i];
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in self.u1.iter_mut().chain(self.u2.iter_mut()) {
            *v *= c;
        }
    }

    /// `self - other` as a new state (keeps `self.t`).
    pub fn minus(&self, other: &FieldState) -> FieldState {
        debug_assert_eq!(self.grid, other.grid);
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// L2 x L2 norm of the pair.
    pub fn l2_norm(&self) -> f64 {
        inner_state(self, self).sqrt()
    }

    /// Energy norm: `(|u1|_{H^1}^2 + |u2|_{L^2}^2)^{1/2}` with the H^1 part
    /// computed spectrally.
    pub fn energy_norm(&self, fourier: &mut Fourier) -> f64 {
        let du1 = fourier.deriv(&self.grid, &self.u1, 1);
        (inner(&self.grid, &self.u1, &self.u1)
            + inner(&self.grid, &du1, &du1)
            + inner(&self.grid, &self.u2, &self.u2))
        .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.u1
            .iter()
            .chain(self.u2.iter())
            .fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.u1.iter().chain(self.u2.iter()).all(|v| v.is_finite())
    }
}

/// L2 x L2 inner product of two-component fields:
/// `<a, b> = <a1, b1> + <a2, b2>`. Nonnegative on the diagonal with
/// equality iff the field vanishes.
pub fn inner_state(a: &FieldState, b: &FieldState) -> f64 {
    debug_assert_eq!(a.grid, b.grid);
    inner(&a.grid, &a.u1, &b.u1) + inner(&a.grid, &a.u2, &b.u2)
}

/// Symplectic pairing `J a = (a2, -a1)`: returns a new profile.
pub fn apply_j(a: &FieldState) -> FieldState {
    let mut out = FieldState::zeros(a.grid, a.t);
    out.u1.copy_from_slice(&a.u2);
    for (o, v) in out.u2.iter_mut().zip(&a.u1) {
        *o = -v;
    }
    out
}

/// Boosted soliton `R(t, x)` evaluated from the closed-form ground state.
///
/// Emits a warning if the center is within 10% of the domain edge
/// (truncation of the tails starts to be visible in long runs).
pub fn boost(
    nl: &Nonlinearity,
    grid: &GridSpec,
    spec: &SolitonSpec,
    t: f64,
) -> Result<FieldState> {
    spec.validate()?;
    grid.validate()?;
    let gamma = spec.gamma();
    let center = spec.center(t);
    if center.abs() > 0.9 * grid.half_width {
        tracing::warn!(
            center,
            half_width = grid.half_width,
            beta = spec.beta,
            t,
            "soliton center within 10% of the domain edge; periodic truncation \
             may contaminate tails"
        );
    }
    let mut state = FieldState::zeros(*grid, t);
    for (i, x) in grid.points().iter().enumerate() {
        let y = gamma * (x - center);
        state.u1[i] = nl.q(y);
        state.u2[i] = -spec.beta * gamma * nl.q_prime(y);
    }
    Ok(state)
}

/// Spatial derivative of the boosted soliton profile, `d/dx R(t, x)`:
/// the target direction of the translation-mode pairing `J Z0`.
pub fn boost_dx(
    nl: &Nonlinearity,
    grid: &GridSpec,
    spec: &SolitonSpec,
    t: f64,
) -> Result<FieldState> {
    spec.validate()?;
    let gamma = spec.gamma();
    let center = spec.center(t);
    let mut state = FieldState::zeros(*grid, t);
    for (i, x) in grid.points().iter().enumerate() {
        let y = gamma * (x - center);
        state.u1[i] = gamma * nl.q_prime(y);
        state.u2[i] = -spec.beta * gamma * gamma * nl.q_second(y);
    }
    Ok(state)
}

/// Sum of boosted solitons at time `t`. Velocities must be distinct.
pub fn multi_profile(
    nl: &Nonlinearity,
    grid: &GridSpec,
    specs: &[SolitonSpec],
    t: f64,
) -> Result<FieldState> {
    if specs.is_empty() {
        return Err(NlkgError::config("multi_profile needs at least one soliton"));
    }
    for (i, a) in specs.iter().enumerate() {
        for b in specs.iter().skip(i + 1) {
            if a.beta == b.beta {
                return Err(NlkgError::config(format!(
                    "duplicate soliton velocities beta = {}",
                    a.beta
                )));
            }
        }
    }
    let mut sum = FieldState::zeros(*grid, t);
    for spec in specs {
        let r = boost(nl, grid, spec, t)?;
        sum.axpy(1.0, &r);
    }
    Ok(sum)
}

/// Uniformly sampled scalar profile with natural-cubic-spline evaluation.
/// Evaluation outside the sampled range returns 0 (profiles handled here
/// have exponentially decayed tails).
#[derive(Debug, Clone)]
pub struct SampledProfile {
    pub x0: f64,
    pub h: f64,
    pub values: Vec<f64>,
    second: Vec<f64>,
}

impl SampledProfile {
    /// Build from samples at `x0 + i h`.
    pub fn new(x0: f64, h: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 4 || !(h.is_finite() && h > 0.0) {
            return Err(NlkgError::config(
                "sampled profile needs at least 4 points and positive spacing",
            ));
        }
        let second = natural_spline_second_derivatives(&values, h);
        Ok(SampledProfile {
            x0,
            h,
            values,
            second,
        })
    }

    /// Build from grid samples, refining by zero-padded FFT first so that
    /// the spline error on analytic profiles is at the 1e-10 level.
    pub fn from_grid(
        grid: &GridSpec,
        values: &[f64],
        refine_factor: usize,
    ) -> Result<Self> {
        let mut fourier = Fourier::new(grid.n);
        let fine = fourier.refine(values, refine_factor);
        SampledProfile::new(
            -grid.half_width,
            grid.h() / refine_factor as f64,
            fine,
        )
    }

    pub fn eval(&self, x: f64) -> f64 {
        let s = (x - self.x0) / self.h;
        if s < 0.0 || s > (self.values.len() - 1) as f64 {
            return 0.0;
        }
        let i = (s.floor() as usize).min(self.values.len() - 2);
        let u = s - i as f64;
        let (ya, yb) = (self.values[i], self.values[i + 1]);
        let (ma, mb) = (self.second[i], self.second[i + 1]);
        let h2 = self.h * self.h;
        let a = 1.0 - u;
        ya * a + yb * u
            + h2 / 6.0 * ((a * a * a - a) * ma + (u * u * u - u) * mb)
    }
}

/// Second derivatives for a natural cubic spline on a uniform grid
/// (Thomas algorithm on the tridiagonal system).
fn natural_spline_second_derivatives(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let k = n - 2; // interior unknowns
    let mut diag = vec![4.0; k];
    let mut rhs = vec![0.0; k];
    let h2 = h * h;
    for i in 0..k {
        rhs[i] = 6.0 * (y[i] - 2.0 * y[i + 1] + y[i + 2]) / h2;
    }
    // Forward elimination (sub/super diagonals are all 1).
    for i in 1..k {
        let w = 1.0 / diag[i - 1];
        diag[i] -= w;
        rhs[i] -= w * rhs[i - 1];
    }
    // Back substitution.
    m[k] = rhs[k - 1] / diag[k - 1];
    for i in (1..k).rev() {
        m[i] = (rhs[i - 1] - m[i + 1]) / diag[i - 1];
    }
    m
}

// ---------------------------------------------------------------------------
// Snapshot format (binary, little-endian):
//   magic  b"NLKGSNAP" (8 bytes)
//   u32    version (currently 1)
//   u32    n
//   f64    half_width
//   f64    t
//   f64[n] u1
//   f64[n] u2
// ---------------------------------------------------------------------------

const SNAPSHOT_MAGIC: &[u8; 8] = b"NLKGSNAP";
const SNAPSHOT_VERSION: u32 = 1;

/// Serialize a field state to the binary snapshot format.
pub fn snapshot_bytes(state: &FieldState) -> Vec<u8> {
    let n = state.grid.n;
    let mut out = Vec::with_capacity(8 + 4 + 4 + 8 + 8 + 16 * n);
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&state.grid.half_width.to_le_bytes());
    out.extend_from_slice(&state.t.to_le_bytes());
    for v in state.u1.iter().chain(state.u2.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parse a binary snapshot.
pub fn snapshot_from_bytes(bytes: &[u8]) -> Result<FieldState> {
    let bad = |msg: &str| NlkgError::config(format!("invalid snapshot: {msg}"));
    if bytes.len() < 32 {
        return Err(bad("truncated header"));
    }
    if &bytes[0..8] != SNAPSHOT_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != SNAPSHOT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let half_width = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let t = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let expect = 32 + 16 * n;
    if bytes.len() != expect {
        return Err(bad(&format!(
            "length {} does not match n = {n} (expect {expect})",
            bytes.len()
        )));
    }
    let grid = GridSpec::new(half_width, n)?;
    let mut u1 = Vec::with_capacity(n);
    let mut u2 = Vec::with_capacity(n);
    for i in 0..n {
        let off = 32 + 8 * i;
        u1.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
    }
    for i in 0..n {
        let off = 32 + 8 * (n + i);
        u2.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
    }
    Ok(FieldState { grid, t, u1, u2 })
}

pub fn save_snapshot(state: &FieldState, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&snapshot_bytes(state))?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<FieldState> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    snapshot_from_bytes(&bytes)
}
