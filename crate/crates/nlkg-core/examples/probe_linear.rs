use nlkg_core::evolve::{DeviationStepper, Scheme, SolverConfig};
use nlkg_core::grid::{Fourier, GridSpec};
use nlkg_core::profiles::{inner_state, FieldState, Nonlinearity, SolitonSpec};
use nlkg_core::spectral::{ProfileKind, SpectralBundle};

fn main() {
    let nl = Nonlinearity::new(3.0, 1.0).unwrap();
    let grid = GridSpec::new(30.0, 512).unwrap();
    let sp = SolitonSpec { beta: 0.5, x0: 0.0 };
    let bundle = SpectralBundle::build(&nl, &grid, &sp).unwrap();
    let mut fourier = Fourier::new(grid.n);
    let e = bundle.e_beta;
    let s = 8.0;
    for &eps in &[1.0e-6f64, 1.0e-3, 1.0] {
        let cfg = SolverConfig {
            dt: 2e-4,
            scheme: Scheme::StrangSpectral,
            boundary: nlkg_core::evolve::Boundary::Periodic,
            cfl_safety: 0.5,
        };
        let mut stepper = DeviationStepper::new(nl, grid, cfg, &[sp]).unwrap();
        let amp = eps * (-e * s).exp();
        let y = bundle.profile_at(ProfileKind::YPlus, s, &mut fourier);
        let y_norm = y.energy_norm(&mut fourier);
        let mut w = FieldState::zeros(grid, s);
        w.axpy(amp, &y);
        print!("eps={eps:.0e} (‖Y‖={y_norm:.4}):");
        for step in 0..=(5.0f64 / cfg.dt) as usize {
            if step > 0 {
                stepper.step_back(&mut w);
            }
            let t = s - step as f64 * cfg.dt;
            if (t - t.round()).abs() < 1e-9 {
                let coeff = eps * (-e * t).exp();
                let mut rem = w.clone();
                let yt = bundle.profile_at(ProfileKind::YPlus, t, &mut fourier);
                rem.axpy(-coeff, &yt);
                let frac = rem.energy_norm(&mut fourier) / (coeff * y_norm);
                // α₋ via Z₋ pairing: the mode coefficient the tube monitors.
                let zm = bundle.profile_at(ProfileKind::ZMinus, t, &mut fourier);
                let alpha = inner_state(&w, &zm);
                print!("  t={t:.0}: frac={frac:.3e} α/c={:.6}", alpha / coeff);
            }
        }
        println!();
    }
}
