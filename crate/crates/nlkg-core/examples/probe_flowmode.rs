use nlkg_core::evolve::{DeviationStepper, Scheme, SolverConfig};
use nlkg_core::grid::{Fourier, GridSpec};
use nlkg_core::profiles::{inner_state, FieldState, Nonlinearity, SolitonSpec};
use nlkg_core::spectral::{apply_h, ProfileKind, SpectralBundle};

fn apply_j(v: &FieldState) -> FieldState {
    let mut out = v.clone();
    out.u1.copy_from_slice(&v.u2);
    for (o, a) in out.u2.iter_mut().zip(v.u1.iter()) {
        *o = -a;
    }
    out
}

fn main() {
    let nl = Nonlinearity::new(3.0, 1.0).unwrap();
    let grid = GridSpec::new(30.0, 512).unwrap();
    let sp = SolitonSpec { beta: 0.5, x0: 0.0 };
    let bundle = SpectralBundle::build(&nl, &grid, &sp).unwrap();
    let mut fourier = Fourier::new(grid.n);
    let e = bundle.e_beta;

    let zp = bundle.profile_at(ProfileKind::ZPlus, 0.0, &mut fourier);
    let zm = bundle.profile_at(ProfileKind::ZMinus, 0.0, &mut fourier);
    let z0 = bundle.profile_at(ProfileKind::Z0, 0.0, &mut fourier);
    let yp = bundle.profile_at(ProfileKind::YPlus, 0.0, &mut fourier);

    // Candidate flow mode: M = J Z+, so that J H_β M = -e_β M.
    let m = apply_j(&zp);
    let c = inner_state(&m, &zm);
    println!("⟨JZ+, Z-⟩ = {c:.12e}");
    println!("⟨JZ+, Z+⟩ = {:.3e}", inner_state(&m, &zp));
    let jz0 = apply_j(&z0);
    println!("⟨JZ0, JZ+/c⟩ = {:.3e}", inner_state(&jz0, &m) / c);
    println!("⟨JZ0, Y+⟩   = {:.3e}", inner_state(&jz0, &yp));

    // Compare normalized flow mode against the bundle's Y+.
    let mut diff = m.clone();
    diff.scale(1.0 / c);
    diff.axpy(-1.0, &yp);
    let yn = yp.energy_norm(&mut fourier);
    println!(
        "‖JZ+/c − Y+‖/‖Y+‖ = {:.6e}  (‖Y+‖ = {yn:.4})",
        diff.energy_norm(&mut fourier) / yn
    );

    // Eigen-relation residuals under H_β.
    let hm = apply_h(&nl, &grid, sp.beta, 0.0, &m, &mut fourier);
    let mut r1 = hm.clone();
    r1.axpy(e, &zp);
    let zpn = zp.energy_norm(&mut fourier);
    println!("‖H(JZ+) + e Z+‖/‖Z+‖ = {:.3e}", r1.energy_norm(&mut fourier) / zpn);

    let hy = apply_h(&nl, &grid, sp.beta, 0.0, &yp, &mut fourier);
    let k = inner_state(&hy, &zp) / inner_state(&zp, &zp);
    let mut r2 = hy.clone();
    r2.axpy(-k, &zp);
    println!(
        "H Y+ = {k:.6} Z+ + resid, ‖resid‖/‖H Y+‖ = {:.3e}",
        r2.energy_norm(&mut fourier) / hy.energy_norm(&mut fourier)
    );

    // Backward-evolution check: seed coeff·(JZ+/c) and watch the tracked fraction.
    let cfg = SolverConfig {
        dt: 2e-4,
        scheme: Scheme::StrangSpectral,
        boundary: nlkg_core::evolve::Boundary::Periodic,
        cfl_safety: 0.5,
    };
    let mut stepper = DeviationStepper::new(nl, grid, cfg, &[sp]).unwrap();
    let s = 8.0;
    let amp = 1.0e-3 * (-e * s).exp();
    let m_s = apply_j(&bundle.profile_at(ProfileKind::ZPlus, s, &mut fourier));
    let m_norm = m_s.energy_norm(&mut fourier) / c;
    let mut w = FieldState::zeros(grid, s);
    w.axpy(amp / c, &m_s);
    print!("seed JZ+/c:");
    for step in 0..=(5.0f64 / cfg.dt) as usize {
        if step > 0 {
            stepper.step_back(&mut w);
        }
        let t = s - step as f64 * cfg.dt;
        if (t - t.round()).abs() < 1e-9 {
            let coeff = 1.0e-3 * (-e * t).exp();
            let mut rem = w.clone();
            let mt = apply_j(&bundle.profile_at(ProfileKind::ZPlus, t, &mut fourier));
            rem.axpy(-coeff / c, &mt);
            let frac = rem.energy_norm(&mut fourier) / (coeff * m_norm);
            let zmt = bundle.profile_at(ProfileKind::ZMinus, t, &mut fourier);
            let alpha = inner_state(&w, &zmt);
            print!("  t={t:.0}: frac={frac:.3e} α/c={:.6}", alpha / coeff);
        }
    }
    println!();
}
