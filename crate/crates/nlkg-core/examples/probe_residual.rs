use nlkg_core::construct::*;
use nlkg_core::grid::GridSpec;
use nlkg_core::profiles::{Nonlinearity, SolitonSpec};
use nlkg_core::spectral::SpectralBundle;

fn main() {
    let nl = Nonlinearity::new(3.0, 1.0).unwrap();
    let grid = GridSpec::new(30.0, 512).unwrap();
    let sp = SolitonSpec { beta: 0.5, x0: 0.0 };
    let bundle = SpectralBundle::build(&nl, &grid, &sp).unwrap();
    for &dt in &[4e-4, 2e-4, 1e-4] {
        let cfg = ConstructionConfig {
            schedule: vec![11.0],
            dt,
            ..ConstructionConfig::standard(vec![sp], vec![1.0], 3.0)
        };
        let out = construct_single(&nl, &grid, &sp, 1.0, &cfg, &bundle).unwrap();
        let series = &out.residuals[0];
        print!("dt={dt:.0e}:");
        for (t, v) in series.times.iter().zip(&series.values) {
            if (t - t.round()).abs() < 1e-9 && *t >= 3.0 {
                print!("  r({t:.0})={v:.3e}");
            }
        }
        println!();
        if let Some(fit) = out.rate_fit {
            println!("   fit on {:?}: rate={:.4} r2={:.6}", out.fit_window, fit.rate, fit.r2);
        }
    }
}
