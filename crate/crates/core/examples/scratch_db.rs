use qheat_core::bath::{BathLabel, BathSpec, SpectralDensity};
use qheat_core::fit::{fit_exponentials, FitOptions};
use qheat_core::hierarchy::InitialState;
use qheat_core::master::{propagate_perturbative, PerturbativeKind, PerturbativeSolver};
use qheat_core::tls::DrivenTls;

fn main() {
    let tls = DrivenTls::new(3.9, 0.0, 1.0).unwrap();
    let bath = BathSpec::new(
        SpectralDensity::bandgap(0.01, 4.0, 1.0).unwrap(),
        2.0,
        BathLabel::Fast,
    )
    .unwrap();
    let dec = fit_exponentials(&bath, 50.0, 1e-5, &FitOptions::default()).unwrap();
    println!("fit: K = {}, err = {:.2e}", dec.mode_count(), dec.certified_error);
    for m in &dec.modes {
        println!("  d = {:+.4e} {:+.4e}i   gamma = {:+.4} {:+.4}i", m.d.re, m.d.im, m.gamma.re, m.gamma.im);
    }
    let solver = PerturbativeSolver::new(tls, &[dec], PerturbativeKind::RedfieldPlus).unwrap();
    let mut state = solver.initial_state(InitialState::Ground);
    for stage in 1..=6 {
        propagate_perturbative(&solver, &mut state, 500.0 * stage as f64, 0.01).unwrap();
        let rho = state.rho();
        let p1 = rho.p1();
        let ratio = p1 / (1.0 - p1);
        println!(
            "t = {:6.0}  P1/P0 = {:.5}  (target {:.5})  herm = {:.2e}  tr-1 = {:+.2e}",
            state.t,
            ratio,
            (-3.9f64 / 2.0).exp(),
            rho.herm_defect(),
            rho.trace().re - 1.0
        );
    }
}
