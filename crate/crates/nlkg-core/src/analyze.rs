//! Trajectory analysis: modulation decompositions, spectral projections,
//! localized Lyapunov functionals, monotonicity checks, rate fitting, and
//! amplitude extraction — the numerical counterparts of §§4–6 of the paper.
//!
//! Everything here is pure over immutable trajectory data; the only state
//! threaded through is an FFT scratch [`Fourier`].
//!
//! Conventions:
//! * `⟨·,·⟩` is the pair inner product `∫(u1 v1 + u2 v2)` ([`inner_state`]).
//! * Projections follow §3.2: `α_{±,k}(t) = ⟨W(t), Z_{±,k}(t)⟩`, so `α₊`
//!   grows forward at rate `e_k` and `α₋` grows backward.
//! * `η` is the permutation sorting solitons by increasing velocity β; the
//!   cutoff partitions `φ_k` and the χ plateaus are indexed in η-order.
//! * All time derivatives of tracked scalars use centered differences on
//!   the sampling grid ([`centered_derivative`]); functional series default
//!   to sampling every [`FUNCTIONAL_STRIDE`] solver steps.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NlkgError, Result};
use crate::grid::{Fourier, GridSpec};
use crate::profiles::{boost, boost_dx, inner_state, FieldState, Nonlinearity, SolitonSpec};
use crate::spectral::{ProfileKind, SpectralBundle};

/// Default sampling stride for functional series: every 4 solver steps.
pub const FUNCTIONAL_STRIDE: usize = 4;

// ---------------------------------------------------------------------------
// Rate fitting
// ---------------------------------------------------------------------------

/// Least-squares exponential fit `value ≈ e^{intercept + rate·t}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub intercept: f64,
    /// Coefficient of determination of the line on `(t, ln value)`.
    pub r2: f64,
    pub samples: usize,
}

/// Fit a line to `(t, ln value)` over all samples.
///
/// Errors on fewer than 5 samples, nonpositive values, or a degenerate
/// window (all abscissas equal).
pub fn fit_rate(times: &[f64], values: &[f64]) -> Result<RateFit> {
    if times.len() != values.len() {
        return Err(NlkgError::config("fit_rate: times/values length mismatch"));
    }
    if times.len() < 5 {
        return Err(NlkgError::numerical(format!(
            "fit_rate: window has {} samples, need at least 5",
            times.len()
        )));
    }
    let mut logs = Vec::with_capacity(values.len());
    for (&t, &v) in times.iter().zip(values) {
        if !v.is_finite() || v <= 0.0 {
            return Err(NlkgError::numerical(format!(
                "fit_rate: nonpositive value {v:.3e} at t = {t}"
            )));
        }
        logs.push(v.ln());
    }
    let n = times.len() as f64;
    let tbar = times.iter().sum::<f64>() / n;
    let ybar = logs.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    for (&t, &y) in times.iter().zip(&logs) {
        stt += (t - tbar) * (t - tbar);
        sty += (t - tbar) * (y - ybar);
    }
    if stt == 0.0 {
        return Err(NlkgError::numerical(
            "fit_rate: degenerate window (all sample times equal)",
        ));
    }
    let rate = sty / stt;
    let intercept = ybar - rate * tbar;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (&t, &y) in times.iter().zip(&logs) {
        let fit = intercept + rate * t;
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - ybar) * (y - ybar);
    }
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(RateFit {
        rate,
        intercept,
        r2,
        samples: times.len(),
    })
}

/// [`fit_rate`] restricted to samples with `t ∈ [t_lo, t_hi]`.
pub fn fit_rate_window(times: &[f64], values: &[f64], t_lo: f64, t_hi: f64) -> Result<RateFit> {
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t >= t_lo && t <= t_hi {
            ts.push(t);
            vs.push(v);
        }
    }
    fit_rate(&ts, &vs)
}

/// Centered differences on a (possibly nonuniform) sampling grid; one-sided
/// at the two ends. Requires ≥ 3 samples.
pub fn centered_derivative(times: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    let n = times.len();
    if n != values.len() || n < 3 {
        return Err(NlkgError::numerical(
            "centered_derivative: need at least 3 equal-length samples",
        ));
    }
    let mut d = vec![0.0; n];
    d[0] = (values[1] - values[0]) / (times[1] - times[0]);
    d[n - 1] = (values[n - 1] - values[n - 2]) / (times[n - 1] - times[n - 2]);
    for i in 1..n - 1 {
        d[i] = (values[i + 1] - values[i - 1]) / (times[i + 1] - times[i - 1]);
    }
    Ok(d)
}

// ---------------------------------------------------------------------------
// Projections and modulation
// ---------------------------------------------------------------------------

/// §3.2 projections `α_{±,k}(t) = ⟨W(t), Z_{±,k}(t)⟩` for every soliton:
/// `W = state − reference`, evaluated at `t = state.t`.
pub fn project_alphas(
    state: &FieldState,
    reference: &FieldState,
    bundles: &[SpectralBundle],
    fourier: &mut Fourier,
) -> Result<(Vec<f64>, Vec<f64>)> {
    state.grid.check_same(&reference.grid)?;
    let w = state.minus(reference);
    let t = state.t;
    let mut plus = Vec::with_capacity(bundles.len());
    let mut minus = Vec::with_capacity(bundles.len());
    for bundle in bundles {
        state.grid.check_same(&bundle.grid)?;
        let zp = bundle.profile_at(ProfileKind::ZPlus, t, fourier);
        let zm = bundle.profile_at(ProfileKind::ZMinus, t, fourier);
        plus.push(inner_state(&w, &zp));
        minus.push(inner_state(&w, &zm));
    }
    Ok((plus, minus))
}

/// Lemma 5.3 modulation: the center shift `c` such that
/// `⟨state − R_β(t, · − c), ∂x R_β(t, · − c)⟩ = 0`, found by Newton from
/// `c = 0`. The state must lie in the orbital neighborhood of the soliton.
pub fn modulate_center(
    state: &FieldState,
    nl: &Nonlinearity,
    spec: &SolitonSpec,
    fourier: &mut Fourier,
) -> Result<f64> {
    let grid = state.grid;
    let t = state.t;
    let scale = state.l2_norm().max(1.0);
    let mut c = 0.0f64;
    for _ in 0..50 {
        let shifted = SolitonSpec {
            beta: spec.beta,
            x0: spec.x0 + c,
        };
        let r = boost(nl, &grid, &shifted, t)?;
        let dxr = boost_dx(nl, &grid, &shifted, t)?;
        let w = state.minus(&r);
        let g = inner_state(&w, &dxr);
        let dxr_sq = inner_state(&dxr, &dxr);
        let tol = 1e-10 * scale * dxr_sq.sqrt();
        if g.abs() <= tol {
            return Ok(c);
        }
        // g'(c) = ‖∂xR‖² − ⟨W, ∂xxR⟩ (∂xxR via spectral derivative).
        let dxxr = FieldState::from_components(
            grid,
            t,
            fourier.deriv(&grid, &dxr.u1, 1),
            fourier.deriv(&grid, &dxr.u2, 1),
        );
        let gp = dxr_sq - inner_state(&w, &dxxr);
        if gp.abs() <= 1e-12 * dxr_sq {
            return Err(NlkgError::numerical(
                "modulate_center: orthogonality derivative vanishes",
            ));
        }
        c -= g / gp;
        if !c.is_finite() || c.abs() > 0.5 * grid.half_width {
            return Err(NlkgError::numerical(format!(
                "modulate_center: Newton diverged (shift {c:.3e}); state outside the orbital neighborhood"
            )));
        }
    }
    Err(NlkgError::numerical(
        "modulate_center: Newton did not converge in 50 iterations",
    ))
}

/// One sample of the Lemma 4.1 decomposition
/// `Z = Σ_i a_i ∂xR_i + Σ_i b_i Y_{+,i} + E` with
/// `⟨E, ∂xR_i⟩ = ⟨E, Z_{−,i}⟩ = 0` for every `i`.
#[derive(Debug, Clone)]
pub struct ModulationSample {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// The constrained remainder `E`.
    pub e: FieldState,
    /// Largest orthogonality residual `max_i(|⟨E,∂xR_i⟩|, |⟨E,Z_{−,i}⟩|)`.
    pub ortho_residual: f64,
}

/// Solve the 2N×2N Gram system of Lemma 4.1 at time `t = z.t`.
pub fn modulate_full(
    z: &FieldState,
    nl: &Nonlinearity,
    specs: &[SolitonSpec],
    bundles: &[SpectralBundle],
    fourier: &mut Fourier,
) -> Result<ModulationSample> {
    let n = specs.len();
    if n == 0 || bundles.len() != n {
        return Err(NlkgError::config(
            "modulate_full: specs and bundles must be nonempty and matched",
        ));
    }
    let grid = z.grid;
    let t = z.t;
    let mut basis = Vec::with_capacity(2 * n); // [∂xR_1..∂xR_N, Y+,1..Y+,N]
    for spec in specs {
        basis.push(boost_dx(nl, &grid, spec, t)?);
    }
    for bundle in bundles {
        grid.check_same(&bundle.grid)?;
        basis.push(bundle.profile_at(ProfileKind::YPlus, t, fourier));
    }
    // Constraint functionals: ⟨·, ∂xR_j⟩ and ⟨·, Z−,j⟩.
    let mut constraints = Vec::with_capacity(2 * n);
    for spec in specs {
        constraints.push(boost_dx(nl, &grid, spec, t)?);
    }
    for bundle in bundles {
        constraints.push(bundle.profile_at(ProfileKind::ZMinus, t, fourier));
    }
    let m = 2 * n;
    let gram = nalgebra::DMatrix::from_fn(m, m, |row, col| {
        inner_state(&basis[col], &constraints[row])
    });
    let rhs = nalgebra::DVector::from_fn(m, |row, _| inner_state(z, &constraints[row]));
    let coeffs = gram.lu().solve(&rhs).ok_or_else(|| {
        NlkgError::numerical("modulate_full: singular Gram matrix (solitons too close?)")
    })?;
    let mut e = z.clone();
    for (k, member) in basis.iter().enumerate() {
        e.axpy(-coeffs[k], member);
    }
    let ortho_residual = constraints
        .iter()
        .map(|c| inner_state(&e, c).abs())
        .fold(0.0f64, f64::max);
    Ok(ModulationSample {
        a: coeffs.as_slice()[..n].to_vec(),
        b: coeffs.as_slice()[n..].to_vec(),
        e,
        ortho_residual,
    })
}

/// Time series of the modulation decomposition along a trajectory
/// (Lemma 4.1 coefficients and §3.2 projections).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModulationTrack {
    pub times: Vec<f64>,
    /// Modulated center shift (single-soliton tracking; empty if unused).
    pub x: Vec<f64>,
    /// `a_i(t)` series, one inner vector per sample.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub alpha_plus: Vec<Vec<f64>>,
    pub alpha_minus: Vec<Vec<f64>>,
    pub ortho_residual: Vec<f64>,
}

impl ModulationTrack {
    /// Invariants: center shift continuous (jump ≤ one grid cell per
    /// sample) and orthogonality residuals below `tol` at every sample.
    pub fn validate(&self, grid: &GridSpec, tol: f64) -> Result<()> {
        for pair in self.x.windows(2) {
            if (pair[1] - pair[0]).abs() > grid.h() {
                return Err(NlkgError::numerical(format!(
                    "modulation track: center jump {:.3e} exceeds one grid cell",
                    (pair[1] - pair[0]).abs()
                )));
            }
        }
        if let Some(worst) = self
            .ortho_residual
            .iter()
            .cloned()
            .fold(None::<f64>, |acc, v| Some(acc.map_or(v, |a| a.max(v))))
        {
            if worst > tol {
                return Err(NlkgError::numerical(format!(
                    "modulation track: orthogonality residual {worst:.3e} exceeds {tol:.3e}"
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Cutoff profiles
// ---------------------------------------------------------------------------

/// §3.2.2 transition profile `ψ(x) = (2/π)·Arctan(e^{−x})`:
/// `ψ(−∞) = 1`, `ψ(0) = 1/2`, `ψ(+∞) = 0`.
pub fn psi(x: f64) -> f64 {
    std::f64::consts::FRAC_2_PI * (-x).exp().atan()
}

/// The permutation `η` sorting solitons by increasing velocity β.
pub fn velocity_order(specs: &[SolitonSpec]) -> Vec<usize> {
    let mut eta: Vec<usize> = (0..specs.len()).collect();
    eta.sort_by(|&i, &j| {
        specs[i]
            .beta
            .partial_cmp(&specs[j].beta)
            .expect("finite velocities")
    });
    eta
}

/// §3.2.2 Step 4 partition of unity: `φ_k = ψ_k − ψ_{k−1}` with
/// `ψ_k(t,x) = ψ((x − m_k t)/√t)` at the velocity midpoints
/// `m_k = (β_{η(k)} + β_{η(k+1)})/2`, `ψ_0 ≡ 0`, `ψ_N ≡ 1`.
///
/// Returns the profiles `φ_1..φ_N` (in η-order: `φ_k` localizes soliton
/// `η(k)`) together with `η`. `Σ_k φ_k ≡ 1` pointwise within 1e−14.
pub fn cutoff_phi(
    t: f64,
    grid: &GridSpec,
    specs: &[SolitonSpec],
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    if t.is_nan() || t <= 0.0 {
        return Err(NlkgError::config(format!(
            "cutoff_phi: t must be positive (got {t}); ψ_k's argument carries 1/√t"
        )));
    }
    if specs.is_empty() {
        return Err(NlkgError::config("cutoff_phi: need at least one soliton"));
    }
    let eta = velocity_order(specs);
    let n = specs.len();
    let points = grid.points();
    let sqrt_t = t.sqrt();
    // ψ_k rows for k = 0..N (constant 0 and 1 rows at the ends).
    let mut psik = Vec::with_capacity(n + 1);
    psik.push(vec![0.0; points.len()]);
    for k in 1..n {
        let m_k = 0.5 * (specs[eta[k - 1]].beta + specs[eta[k]].beta);
        psik.push(
            points
                .iter()
                .map(|&x| psi((x - m_k * t) / sqrt_t))
                .collect(),
        );
    }
    psik.push(vec![1.0; points.len()]);
    let phi = (1..=n)
        .map(|k| {
            psik[k]
                .iter()
                .zip(&psik[k - 1])
                .map(|(&hi, &lo)| hi - lo)
                .collect()
        })
        .collect();
    Ok((phi, eta))
}

/// δ default `min(0.1, gap/(4·max gap))` over consecutive sorted-β gaps
/// (0.1 for a single soliton) — guards the Prop 4.5 smallness requirement.
pub fn delta_default(specs: &[SolitonSpec]) -> f64 {
    let eta = velocity_order(specs);
    let gaps: Vec<f64> = eta
        .windows(2)
        .map(|w| specs[w[1]].beta - specs[w[0]].beta)
        .collect();
    if gaps.is_empty() {
        return 0.1;
    }
    let min_gap = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_gap = gaps.iter().cloned().fold(0.0f64, f64::max);
    (min_gap / (4.0 * max_gap)).min(0.1)
}

/// λ default `(1 + (α_fit − 1))/2`, the midpoint of the paper's admissible
/// interval `λ ∈ (1, α−1)`; requires `α_fit > 2` for the interval to be
/// nonempty with a margin.
pub fn lambda_default(alpha_fit: f64) -> Result<f64> {
    let lambda = 0.5 * (1.0 + (alpha_fit - 1.0));
    if lambda <= 1.0 {
        return Err(NlkgError::config(format!(
            "lambda_default: measured α = {alpha_fit} leaves no admissible λ ∈ (1, α−1)"
        )));
    }
    Ok(lambda)
}

/// γ default: half the §4.1.4 constraint ceiling `σ·δ·min gap`.
pub fn gamma_default(sigma: f64, delta: f64, specs: &[SolitonSpec]) -> f64 {
    let eta = velocity_order(specs);
    let min_gap = eta
        .windows(2)
        .map(|w| specs[w[1]].beta - specs[w[0]].beta)
        .fold(f64::INFINITY, f64::min);
    if min_gap.is_finite() {
        0.5 * sigma * delta * min_gap
    } else {
        0.5 * sigma * delta
    }
}

/// The §4.1.4 velocity profile χ(t, ·): plateaus `β_{η(i)}` around each
/// soliton ray, linear ramps of slope `1/((1−2δ)t)` on the transition set
/// Ω(t), constant beyond the extreme plateaus.
///
/// Plateau `i` is `[l̲_i t, l̄_i t]`; consecutive ramp endpoints satisfy
/// `l̲_{i+1} − l̄_i = (1−2δ)(β_{η(i+1)} − β_{η(i)})`, split symmetrically
/// about the velocity midpoint, which makes χ continuous with the stated
/// uniform ramp slope.
#[derive(Debug, Clone)]
pub struct ChiProfile {
    /// Sorted plateau velocities `β_{η(1)} < … < β_{η(N)}`.
    betas: Vec<f64>,
    /// Ramp intervals Ω(t)/t in velocity units: `(l̄_i, l̲_{i+1})`.
    ramps: Vec<(f64, f64)>,
    t: f64,
    delta: f64,
}

impl ChiProfile {
    pub fn new(t: f64, delta: f64, specs: &[SolitonSpec]) -> Result<Self> {
        if t.is_nan() || t <= 0.0 {
            return Err(NlkgError::config("chi profile: t must be positive"));
        }
        if !(delta > 0.0 && delta < 0.25) {
            return Err(NlkgError::config(format!(
                "chi profile: δ must lie in (0, 1/4), got {delta}"
            )));
        }
        let eta = velocity_order(specs);
        let betas: Vec<f64> = eta.iter().map(|&i| specs[i].beta).collect();
        let mut ramps = Vec::with_capacity(betas.len().saturating_sub(1));
        for pair in betas.windows(2) {
            let gap = pair[1] - pair[0];
            if gap <= 0.0 {
                return Err(NlkgError::config(
                    "chi profile: duplicate soliton velocities",
                ));
            }
            let mid = 0.5 * (pair[0] + pair[1]);
            let half_ramp = 0.5 * (1.0 - 2.0 * delta) * gap;
            ramps.push((mid - half_ramp, mid + half_ramp));
        }
        // Plateau i is [prev ramp end, next ramp start]; nonempty because
        // each ramp leaves a δ·gap margin on both sides. Overlap would mean
        // δ out of range for the given gaps.
        for w in ramps.windows(2) {
            if w[0].1 >= w[1].0 {
                return Err(NlkgError::config(
                    "chi profile: plateaus overlap; decrease δ for these velocity gaps",
                ));
            }
        }
        Ok(ChiProfile {
            betas,
            ramps,
            t,
            delta,
        })
    }

    /// χ(t, x).
    pub fn value(&self, x: f64) -> f64 {
        let v = x / self.t;
        // Left of the first ramp: β_{η(1)}; right of the last: β_{η(N)}.
        let mut chi = self.betas[0];
        for (i, &(lo, hi)) in self.ramps.iter().enumerate() {
            if v < lo {
                return chi;
            }
            if v <= hi {
                return self.betas[i] + (v - lo) / (1.0 - 2.0 * self.delta);
            }
            chi = self.betas[i + 1];
        }
        chi
    }

    /// Samples of χ(t, ·) on the grid.
    pub fn samples(&self, grid: &GridSpec) -> Vec<f64> {
        grid.points().iter().map(|&x| self.value(x)).collect()
    }

    /// The transition set Ω(t) in x-units: disjoint ordered intervals.
    pub fn omega(&self) -> Vec<(f64, f64)> {
        self.ramps
            .iter()
            .map(|&(lo, hi)| (lo * self.t, hi * self.t))
            .collect()
    }

    /// ∂xχ on ramps (`1/((1−2δ)t)`; zero elsewhere).
    pub fn ramp_slope(&self) -> f64 {
        1.0 / ((1.0 - 2.0 * self.delta) * self.t)
    }

    pub fn max_abs(&self) -> f64 {
        self.betas
            .iter()
            .map(|b| b.abs())
            .fold(0.0f64, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Lyapunov functionals
// ---------------------------------------------------------------------------

/// §3.2.2 localized functional
/// `𝓕_W = Σ_k ∫ (w1² + (∂xw1)² + w2² − f′(Q_{η(k)})w1² + 2β_{η(k)}∂xw1·w2)·φ_k`.
///
/// `specs_sorted` must be in η-order, matching `phi` from [`cutoff_phi`].
pub fn lyapunov_fw(
    w: &FieldState,
    nl: &Nonlinearity,
    specs_sorted: &[SolitonSpec],
    phi: &[Vec<f64>],
    fourier: &mut Fourier,
) -> Result<f64> {
    if specs_sorted.len() != phi.len() {
        return Err(NlkgError::config("lyapunov_fw: specs/phi length mismatch"));
    }
    let grid = w.grid;
    let dw1 = fourier.deriv(&grid, &w.u1, 1);
    let points = grid.points();
    let mut total = 0.0;
    for (spec, phik) in specs_sorted.iter().zip(phi) {
        let gamma = spec.gamma();
        let center = spec.center(w.t);
        let mut acc = 0.0;
        for i in 0..grid.n {
            let q = nl.q(gamma * (points[i] - center));
            let density = w.u1[i] * w.u1[i] + dw1[i] * dw1[i] + w.u2[i] * w.u2[i]
                - nl.f_prime(q) * w.u1[i] * w.u1[i]
                + 2.0 * spec.beta * dw1[i] * w.u2[i];
            acc += density * phik[i];
        }
        total += acc * grid.h();
    }
    Ok(total)
}

/// §4.1.4 functional
/// `𝓕 = ∫ (z_x² + z_t² + z² − f′(V)z²) + 2∫ χ·z_x·z_t`
/// for the pair `z = (z, z_t)` against the potential profile `V` (the
/// first component of the reference the deviation is taken from). Serves
/// both 𝓕_z and 𝓕_ε, which differ only in the pair supplied.
pub fn lyapunov_fz(
    z: &FieldState,
    chi: &[f64],
    v_profile: &[f64],
    nl: &Nonlinearity,
    fourier: &mut Fourier,
) -> Result<f64> {
    let grid = z.grid;
    if chi.len() != grid.n || v_profile.len() != grid.n {
        return Err(NlkgError::config("lyapunov_fz: sample length mismatch"));
    }
    let zx = fourier.deriv(&grid, &z.u1, 1);
    let mut acc = 0.0;
    for i in 0..grid.n {
        acc += zx[i] * zx[i] + z.u2[i] * z.u2[i] + z.u1[i] * z.u1[i]
            - nl.f_prime(v_profile[i]) * z.u1[i] * z.u1[i]
            + 2.0 * chi[i] * zx[i] * z.u2[i];
    }
    Ok(acc * grid.h())
}

/// Lemma 4.4 combination `𝓕_ε − 𝓕_z + 2Σ_i α_{−,i}α_{+,i}` (= 𝓖(t), bounded
/// by `c·e^{−γt}‖Z‖²` along tracked runs).
pub fn lemma44_gap(f_eps: f64, f_z: f64, alpha_plus: &[f64], alpha_minus: &[f64]) -> f64 {
    let cross: f64 = alpha_plus
        .iter()
        .zip(alpha_minus)
        .map(|(&p, &m)| p * m)
        .sum();
    f_eps - f_z + 2.0 * cross
}

/// Time series of the §4 functionals along a trajectory with the cutoff
/// parameters that produced them.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FunctionalTrack {
    pub times: Vec<f64>,
    pub f_w: Vec<f64>,
    pub f_z: Vec<f64>,
    pub f_eps: Vec<f64>,
    /// χ slope buffer δ ∈ (0, 1/4).
    pub delta: f64,
    /// Monotonicity exponent λ ∈ (1, α−1).
    pub lambda: f64,
    /// Ω(t) per sample: disjoint ordered intervals.
    pub omega: Vec<Vec<(f64, f64)>>,
}

impl FunctionalTrack {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 0.25) {
            return Err(NlkgError::config(format!(
                "functional track: δ = {} outside (0, 1/4)",
                self.delta
            )));
        }
        if self.lambda <= 1.0 {
            return Err(NlkgError::config(format!(
                "functional track: λ = {} must exceed 1",
                self.lambda
            )));
        }
        for intervals in &self.omega {
            for w in intervals.windows(2) {
                if w[0].1 >= w[1].0 {
                    return Err(NlkgError::numerical(
                        "functional track: Ω(t) intervals overlap or are unordered",
                    ));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Monotonicity (Prop 4.5 / Cor 4.6)
// ---------------------------------------------------------------------------

/// Result of the Cor 4.6 defect-envelope check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// Fitted nonnegative coefficient of `(1/t)Σα_{+,i}²`.
    pub c1: f64,
    /// Fitted nonnegative coefficient of `e^{−γt}‖Z‖² + ‖Z‖³`.
    pub c2: f64,
    /// Envelope multiple at which a sample counts as a violation.
    pub envelope_factor: f64,
    /// `(t, defect, allowed)` for every violating interior sample.
    pub violations: Vec<(f64, f64, f64)>,
    /// Largest defect/allowed ratio over interior samples.
    pub max_ratio: f64,
    pub pass: bool,
}

/// Check Cor 4.6: the defect `D(t) = −𝓕_ε′(t) − (λ/t)𝓕_ε(t)` stays below
/// `envelope_factor × (c₁(1/t)Σα_{+,i}² + c₂(e^{−γt}‖Z‖² + ‖Z‖³))` with
/// nonnegative c₁, c₂ fitted by least squares (negative fits are pinned to
/// zero and refitted). Derivatives are centered differences, so only
/// interior samples are judged.
#[allow(clippy::too_many_arguments)]
pub fn check_monotonicity(
    times: &[f64],
    f_eps: &[f64],
    alpha_plus: &[Vec<f64>],
    z_norms: &[f64],
    lambda: f64,
    gamma: f64,
    envelope_factor: f64,
) -> Result<MonotonicityReport> {
    let n = times.len();
    if n < 5 {
        return Err(NlkgError::numerical(format!(
            "check_monotonicity: {n} samples, need at least 5"
        )));
    }
    if f_eps.len() != n || alpha_plus.len() != n || z_norms.len() != n {
        return Err(NlkgError::config(
            "check_monotonicity: series length mismatch",
        ));
    }
    let dfe = centered_derivative(times, f_eps)?;
    let mut defect = Vec::with_capacity(n - 2);
    let mut g1 = Vec::with_capacity(n - 2);
    let mut g2 = Vec::with_capacity(n - 2);
    let mut ts = Vec::with_capacity(n - 2);
    for i in 1..n - 1 {
        let t = times[i];
        if t.is_nan() || t <= 0.0 {
            return Err(NlkgError::config(
                "check_monotonicity: sample times must be positive (1/t weights)",
            ));
        }
        let alpha_sq: f64 = alpha_plus[i].iter().map(|a| a * a).sum();
        defect.push(-dfe[i] - lambda / t * f_eps[i]);
        g1.push(alpha_sq / t);
        g2.push((-gamma * t).exp() * z_norms[i] * z_norms[i] + z_norms[i].powi(3));
        ts.push(t);
    }
    // Least squares D ≈ c1 g1 + c2 g2 on the positive part of D, with
    // nonnegativity by pin-and-refit.
    let dpos: Vec<f64> = defect.iter().map(|&d| d.max(0.0)).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let (a11, a12, a22) = (dot(&g1, &g1), dot(&g1, &g2), dot(&g2, &g2));
    let (r1, r2) = (dot(&g1, &dpos), dot(&g2, &dpos));
    let det = a11 * a22 - a12 * a12;
    let (mut c1, mut c2) = if det.abs() > 1e-300 {
        ((a22 * r1 - a12 * r2) / det, (a11 * r2 - a12 * r1) / det)
    } else {
        (0.0, 0.0)
    };
    if c1 < 0.0 {
        c1 = 0.0;
        c2 = if a22 > 0.0 { (r2 / a22).max(0.0) } else { 0.0 };
    } else if c2 < 0.0 {
        c2 = 0.0;
        c1 = if a11 > 0.0 { (r1 / a11).max(0.0) } else { 0.0 };
    }
    // Uncertainty floor of the checker's own derivative: roundoff plus the
    // centered-difference truncation |𝓕‴|·dt²/6, with 𝓕‴ estimated from
    // third differences (nearest interior stencil at the window edges).
    let f_scale = f_eps.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let dt_min = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let roundoff = 1e-13 * f_scale / dt_min.max(1e-300);
    let truncation = |i: usize| -> f64 {
        let c = i.clamp(2, n - 3);
        let dt_loc = 0.5 * (times[c + 1] - times[c - 1]);
        let f3 = (f_eps[c + 2] - 2.0 * f_eps[c + 1] + 2.0 * f_eps[c - 1] - f_eps[c - 2])
            / (2.0 * dt_loc.powi(3));
        f3.abs() * dt_loc * dt_loc / 6.0
    };
    let mut violations = Vec::new();
    let mut max_ratio = 0.0f64;
    for i in 0..defect.len() {
        let floor = roundoff + truncation(i + 1);
        let allowed = envelope_factor * (c1 * g1[i] + c2 * g2[i]) + floor;
        if allowed > 0.0 {
            max_ratio = max_ratio.max(defect[i] / allowed);
        }
        if defect[i] > allowed {
            violations.push((ts[i], defect[i], allowed));
        }
    }
    let pass = violations.is_empty();
    Ok(MonotonicityReport {
        c1,
        c2,
        envelope_factor,
        violations,
        max_ratio,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Amplitude extraction (§1.3 / Prop 4.12)
// ---------------------------------------------------------------------------

/// Plateau fit of `e^{e_j t}·α_{−,j}(t)` over the late third of a window.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlateauFit {
    pub value: f64,
    /// Max deviation from the fitted constant over the plateau window.
    pub error_bar: f64,
    /// Mean drift between the halves of the plateau window.
    pub drift: f64,
    pub window: (f64, f64),
}

/// Extract `A_j` as the plateau of `g(t) = e^{e_j t}·α_{−,j}(t)` over the
/// late third of the samples (§1.3, Prop 4.12). `noise_floor` is the
/// caller's estimate of the solver-noise level of `g` (values at or below
/// it are treated as consistent with A = 0, never as trends).
///
/// Errors when the series is still trending beyond tolerance: the drift
/// across the plateau window exceeds both half the plateau magnitude and
/// the noise floor.
pub fn extract_a(times: &[f64], alpha_minus_j: &[f64], e_j: f64, noise_floor: f64) -> Result<PlateauFit> {
    let n = times.len();
    if n != alpha_minus_j.len() || n < 6 {
        return Err(NlkgError::numerical(
            "extract_a: need at least 6 equal-length samples",
        ));
    }
    let g: Vec<f64> = times
        .iter()
        .zip(alpha_minus_j)
        .map(|(&t, &a)| (e_j * t).exp() * a)
        .collect();
    let start = n - n / 3;
    let window = &g[start..];
    let value = window.iter().sum::<f64>() / window.len() as f64;
    let error_bar = window
        .iter()
        .map(|v| (v - value).abs())
        .fold(0.0f64, f64::max);
    let half = window.len() / 2;
    let mean_lo = window[..half].iter().sum::<f64>() / half as f64;
    let mean_hi = window[half..].iter().sum::<f64>() / (window.len() - half) as f64;
    let drift = mean_hi - mean_lo;
    if drift.abs() > 0.5 * value.abs() && drift.abs() > noise_floor {
        return Err(NlkgError::numerical(format!(
            "extract_a: no plateau — e^{{e_j t}}α₋ still drifts by {drift:.3e} \
             against plateau value {value:.3e} (noise floor {noise_floor:.3e})"
        )));
    }
    Ok(PlateauFit {
        value,
        error_bar,
        drift,
        window: (times[start], times[n - 1]),
    })
}

// ---------------------------------------------------------------------------
// Appendix 7.3 verifier
// ---------------------------------------------------------------------------

/// One synthetic Lemma 7.3 trial: a positive series generated to satisfy
/// `|𝓐′ + ρ𝓐| ≤ ξ(t)·sup_{s≥t}𝓐(s)` with integrable ξ, and its fitted
/// late-window decay rate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Lemma73Case {
    pub rho: f64,
    pub xi0: f64,
    pub xi_decay: f64,
    pub fitted_rate: f64,
    /// `fitted_rate ≤ −ρ + tol`.
    pub pass: bool,
}

/// Generate a Lemma 7.3 series: panels of constant random sign-weight
/// `θ ∈ [−1, 1]` with `𝓐′ = (−ρ + θ·ξ(t))𝓐`, `ξ(t) = ξ0·e^{−κt}`
/// (integrable; `ξ0 < ρ` keeps 𝓐 strictly decreasing so the sup-tail is
/// 𝓐(t) itself and the hypothesis holds exactly). Panel products are
/// closed-form, so the series is exact up to roundoff.
pub fn lemma73_series(
    rho: f64,
    xi0: f64,
    xi_decay: f64,
    t_end: f64,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>) {
    let mut times = Vec::with_capacity(samples);
    let mut values = Vec::with_capacity(samples);
    let mut a = 1.0f64;
    let dt = t_end / (samples - 1) as f64;
    times.push(0.0);
    values.push(a);
    for i in 1..samples {
        let t0 = (i - 1) as f64 * dt;
        let t1 = i as f64 * dt;
        let theta: f64 = rng.gen_range(-1.0..1.0);
        // ∫_{t0}^{t1} ξ = ξ0 (e^{−κ t0} − e^{−κ t1})/κ, exact.
        let xi_int = xi0 * ((-xi_decay * t0).exp() - (-xi_decay * t1).exp()) / xi_decay;
        a *= (-rho * dt + theta * xi_int).exp();
        times.push(t1);
        values.push(a);
    }
    (times, values)
}

/// Run `count` seeded Lemma 7.3 trials and fit each late-window rate; a
/// trial passes when `rate ≤ −ρ + tol` (Appendix 7.3's conclusion
/// `|𝓐(t)| ≤ c·e^{−ρt}`).
pub fn appendix73_check(rho: f64, seed: u64, count: usize, tol: f64) -> Result<Vec<Lemma73Case>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_end = 30.0;
    let samples = 601;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let xi0 = rho * rng.gen_range(0.1..0.5);
        let xi_decay = rng.gen_range(0.3..1.0);
        let (times, values) = lemma73_series(rho, xi0, xi_decay, t_end, samples, &mut rng);
        let fit = fit_rate_window(&times, &values, 0.5 * t_end, t_end)?;
        out.push(Lemma73Case {
            rho,
            xi0,
            xi_decay,
            fitted_rate: fit.rate,
            pass: fit.rate <= -rho + tol,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Localized coercivity probe (discrete Prop 2.2 analog for 𝓕_W)
// ---------------------------------------------------------------------------

/// Smooth periodic random pair: a band-limited trigonometric sum with
/// Gaussian envelopes at the soliton centers (plus a small uniform floor so
/// the field is not compactly supported).
fn random_smooth_state(
    grid: &GridSpec,
    t: f64,
    centers: &[f64],
    rng: &mut ChaCha8Rng,
) -> FieldState {
    let n_modes = 24;
    let l = grid.half_width;
    let points = grid.points();
    let mut component = || -> Vec<f64> {
        let coeffs: Vec<(f64, f64, f64)> = (0..n_modes)
            .map(|m| {
                let k = std::f64::consts::PI * m as f64 / l;
                let damp = (-((m as f64 / 8.0).powi(2))).exp();
                (
                    k,
                    rng.gen_range(-1.0..1.0) * damp,
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        points
            .iter()
            .map(|&x| {
                let envelope = 0.2
                    + centers
                        .iter()
                        .map(|&c| (-((x - c) * (x - c)) / 25.0).exp())
                        .sum::<f64>();
                let wave: f64 = coeffs
                    .iter()
                    .map(|&(k, a, phase)| a * (k * x + phase).cos())
                    .sum();
                envelope * wave
            })
            .collect()
    };
    let u1 = component();
    let u2 = component();
    FieldState::from_components(*grid, t, u1, u2)
}

/// Measure the localized coercivity constant of 𝓕_W: for `count` random
/// smooth pairs projected orthogonal to every `{∂xR_k, Z_{+,k}, Z_{−,k}}`,
/// returns the minimum of `𝓕_W / ‖W‖²_{H¹×L²}` (Prop 2.2 discrete analog —
/// must come out positive on adequate grids at separated times).
#[allow(clippy::too_many_arguments)]
pub fn localized_coercivity(
    nl: &Nonlinearity,
    grid: &GridSpec,
    specs: &[SolitonSpec],
    bundles: &[SpectralBundle],
    t: f64,
    count: usize,
    seed: u64,
    fourier: &mut Fourier,
) -> Result<f64> {
    if specs.len() != bundles.len() || specs.is_empty() {
        return Err(NlkgError::config(
            "localized_coercivity: specs/bundles mismatch",
        ));
    }
    let (phi, eta) = cutoff_phi(t, grid, specs)?;
    let specs_sorted: Vec<SolitonSpec> = eta.iter().map(|&i| specs[i]).collect();
    // Constraint states: ∂xR_k, Z+,k, Z−,k for every soliton.
    let mut constraints = Vec::with_capacity(3 * specs.len());
    for spec in specs {
        constraints.push(boost_dx(nl, grid, spec, t)?);
    }
    for bundle in bundles {
        constraints.push(bundle.profile_at(ProfileKind::ZPlus, t, fourier));
        constraints.push(bundle.profile_at(ProfileKind::ZMinus, t, fourier));
    }
    let m = constraints.len();
    let gram = nalgebra::DMatrix::from_fn(m, m, |r, c| {
        inner_state(&constraints[r], &constraints[c])
    });
    let gram_lu = gram.lu();
    let centers: Vec<f64> = specs.iter().map(|s| s.center(t)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_ratio = f64::INFINITY;
    for _ in 0..count {
        let mut w = random_smooth_state(grid, t, &centers, &mut rng);
        let rhs = nalgebra::DVector::from_fn(m, |r, _| inner_state(&w, &constraints[r]));
        let coeffs = gram_lu.solve(&rhs).ok_or_else(|| {
            NlkgError::numerical("localized_coercivity: singular constraint Gram")
        })?;
        for (k, c) in constraints.iter().enumerate() {
            w.axpy(-coeffs[k], c);
        }
        let fw = lyapunov_fw(&w, nl, &specs_sorted, &phi, fourier)?;
        let norm = w.energy_norm(fourier);
        if norm > 1e-12 {
            min_ratio = min_ratio.min(fw / (norm * norm));
        }
    }
    if !min_ratio.is_finite() {
        return Err(NlkgError::numerical(
            "localized_coercivity: all samples degenerate",
        ));
    }
    Ok(min_ratio)
}
