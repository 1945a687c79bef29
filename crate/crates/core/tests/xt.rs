use boa_lab::grid::{smooth_random_state, NuclearGrid};
use boa_lab::harness::report::fit_loglog;
use boa_lab::models::ModelSpec;
use boa_lab::naip::verify_xt_representation;
use boa_lab::propagation::Backend;
use boa_lab::system::{AdiabaticSystem, Molecule};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn system(spec: ModelSpec, kappa: f64) -> AdiabaticSystem {
    let grid = NuclearGrid::new(1, 128, 12.0).unwrap();
    let mol = Molecule::new(&spec, &grid).unwrap();
    AdiabaticSystem::new(&mol, kappa, Backend::ExactDiag).unwrap()
}

fn probes(sys: &AdiabaticSystem) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..3).map(|_| smooth_random_state(sys.grid(), 1, &mut rng).into_data()).collect()
}

fn crossing(kappa: f64) -> AdiabaticSystem {
    system(ModelSpec::avoided_crossing(1.0, 0.5), kappa)
}

#[test]
fn residual_quarters_under_step_halving() {
    let sys = crossing(0.1);
    let p = probes(&sys);
    let r: Vec<f64> = [512.0, 1024.0, 2048.0]
        .iter()
        .map(|steps| verify_xt_representation(&sys, &p, 1.0, 1.0 / steps).unwrap().residual)
        .collect();
    for w in r.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.0..=5.0).contains(&ratio), "{r:?}");
    }
}

#[test]
fn residual_band_at_coarse_step() {
    let sys = crossing(0.1);
    let c = verify_xt_representation(&sys, &probes(&sys), 1.0, 1.0 / 512.0).unwrap();
    assert!(c.residual < 1e-6, "residual {:e} at Δt = 1/512", c.residual);
}

#[test]
fn coupling_part_is_first_order_in_kappa() {
    let kappas = [0.2, 0.1, 0.05, 0.025];
    let norms: Vec<f64> = kappas
        .iter()
        .map(|&k| {
            let sys = crossing(k);
            verify_xt_representation(&sys, &probes(&sys), 1.0, 1.0).unwrap().xt_norm
        })
        .collect();
    let fit = fit_loglog(&kappas, &norms).unwrap();
    assert!(fit.slope >= 0.9, "{norms:?} slope {}", fit.slope);
}

#[test]
fn trivial_cases_vanish() {
    let sys = system(ModelSpec::decoupled(vec![0.0, 1.0]), 0.1);
    let c = verify_xt_representation(&sys, &probes(&sys), 1.0, 1.0 / 64.0).unwrap();
    assert!(c.residual < 1e-12 && c.xt_norm < 1e-12, "{c:?}");
    let sys = crossing(0.1);
    let c = verify_xt_representation(&sys, &probes(&sys), 0.0, 1.0 / 64.0).unwrap();
    assert!(c.residual < 1e-13 && c.xt_norm < 1e-13, "{c:?}");
    assert!(verify_xt_representation(&sys, &probes(&sys), 1.0, 0.3).is_err());
}
