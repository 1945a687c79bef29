use boa_lab::grid::{embed, gaussian_packet, smooth_random_state, FiberedState, NuclearGrid};
use boa_lab::linalg::{self, CMat};
use boa_lab::models::ModelSpec;
use boa_lab::propagation::{sobolev_growth_probe, Backend, Propagator};
use boa_lab::system::{AdiabaticSystem, Molecule};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn crossing(n: usize, kappa: f64) -> AdiabaticSystem {
    let grid = NuclearGrid::new(1, n, 12.0).unwrap();
    let mol = Molecule::new(&ModelSpec::avoided_crossing(1.0, 0.5), &grid).unwrap();
    AdiabaticSystem::new(&mol, kappa, Backend::ExactDiag).unwrap()
}

fn dist(a: &[C64], b: &[C64]) -> f64 {
    linalg::vec_norm(&linalg::sub(a, b))
}

#[test]
fn projected_dynamics_factorizes() {
    let sys = crossing(256, 0.1);
    let kappa = sys.kappa;
    let gp = &sys.p * &sys.h * &sys.p;
    let gp = faer::Scale(C64::new(0.5, 0.0)) * (&gp + gp.adjoint());
    let up = Propagator::on_subspace(&gp, &sys.j, kappa, Backend::ExactDiag).unwrap();
    let heff = sys.effective(1).unwrap().dense_matrix();
    let heff_sym = faer::Scale(C64::new(0.5, 0.0)) * (&heff + heff.adjoint());
    let heff_prop = Propagator::new(&heff_sym, kappa, Backend::ExactDiag).unwrap();
    // Centered so the packet is periodic to rounding on the box.
    let f = gaussian_packet(sys.grid(), 0.0, 0.8, 1.0, kappa).into_data();
    let psi = sys.molecule.lift(&f);
    for t in [0.5, 1.0, 2.0] {
        let lhs = up.evolve(&psi, t).unwrap();
        let rhs = sys.molecule.lift(&heff_prop.evolve(&f, t).unwrap());
        let e = dist(&lhs, &rhs) / linalg::vec_norm(&psi);
        assert!(e < 1e-9, "t={t}: {e:e}");
    }
}

#[test]
fn unitarity_energy_and_projector_commutation() {
    let sys = crossing(128, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let psi = smooth_random_state(sys.grid(), 2, &mut rng).into_data();
    let n0 = linalg::vec_norm(&psi);
    let e0 = sys.full.energy(&psi).unwrap();
    let excited_psi = linalg::matvec(&sys.pbar, &psi);
    let ne = linalg::vec_norm(&excited_psi);
    let eb0 = sys.excited.energy(&excited_psi).unwrap();
    for k in 0..=16 {
        let t = 0.25 * k as f64;
        let out = sys.full.evolve(&psi, t).unwrap();
        assert!((linalg::vec_norm(&out) - n0).abs() < 1e-10 * n0);
        assert!((sys.full.energy(&out).unwrap() - e0).abs() < 1e-10 * e0.abs());
        let bar = sys.excited.evolve(&excited_psi, t).unwrap();
        assert!((linalg::vec_norm(&bar) - ne).abs() < 1e-10 * ne);
        assert!((sys.excited.energy(&bar).unwrap() - eb0).abs() < 1e-10 * eb0.abs());
        assert!(dist(&linalg::matvec(&sys.pbar, &bar), &bar) < 1e-10 * ne);
    }
    let back = sys.full.evolve(&sys.full.evolve(&psi, 1.3).unwrap(), -1.3).unwrap();
    assert!(dist(&back, &psi) < 1e-10 * n0);
    assert!(sys.excited.evolve(&psi, 1.0).is_err());
}

#[test]
fn duhamel_residual_is_small() {
    let sys = crossing(128, 0.1);
    let f = gaussian_packet(sys.grid(), -1.5, 0.8, 1.0, 0.1).into_data();
    let psi0 = sys.molecule.lift(&f);
    let eps = 1e-5;
    for t in [0.3, 1.0] {
        let plus = sys.full.evolve(&psi0, t + eps).unwrap();
        let minus = sys.full.evolve(&psi0, t - eps).unwrap();
        let mid = sys.full.evolve(&psi0, t).unwrap();
        let lhs: Vec<C64> = plus
            .iter()
            .zip(&minus)
            .map(|(a, b)| C64::new(0.0, sys.kappa) * (a - b) / (2.0 * eps))
            .collect();
        let rhs = linalg::matvec(&sys.h, &mid);
        assert!(dist(&lhs, &rhs) < 1e-6 * linalg::vec_norm(&rhs));
    }
}

#[test]
fn eigenvector_evolves_by_phase() {
    let sys = crossing(64, 0.2);
    let eig = sys.full.eigen().unwrap();
    let k = 5;
    let v: Vec<C64> = eig.vectors.col_as_slice(k).to_vec();
    let out = sys.full.evolve(&v, 0.7).unwrap();
    let phase = C64::new(0.0, -eig.values[k] * 0.7 / 0.2).exp();
    let expect: Vec<C64> = v.iter().map(|z| z * phase).collect();
    assert!(dist(&out, &expect) < 1e-12);
    assert_eq!(sys.full.evolve(&v, 0.0).unwrap(), v);
}

#[test]
fn krylov_backend_matches_exact_on_model() {
    let grid = NuclearGrid::new(1, 64, 12.0).unwrap();
    let mol = Molecule::new(&ModelSpec::avoided_crossing(1.0, 0.5), &grid).unwrap();
    let exact = AdiabaticSystem::new(&mol, 0.2, Backend::ExactDiag).unwrap();
    let kry = Propagator::new(&exact.h, 0.2, Backend::Krylov).unwrap();
    let psi = mol.lift(&gaussian_packet(&grid, 0.0, 0.8, 1.0, 0.2).into_data());
    let a = exact.full.evolve(&psi, 1.0).unwrap();
    let b = kry.evolve(&psi, 1.0).unwrap();
    assert!(dist(&a, &b) < 1e-9 * linalg::vec_norm(&a));
}

fn times() -> Vec<f64> {
    (0..=16).map(|k| 0.25 * k as f64).collect()
}

#[test]
fn sobolev_growth_bounds() {
    let sys = crossing(256, 0.1);
    let f = gaussian_packet(sys.grid(), -1.5, 0.8, 1.0, 0.1);
    let psi = embed(&sys.molecule.bundle.psi0, &f).unwrap();
    let l2 = sobolev_growth_probe(&sys.full, &psi, 0, &times()).unwrap();
    assert!(l2.ratios.iter().all(|r| (r - 1.0).abs() < 1e-10));
    let table = sobolev_growth_probe(&sys.full, &psi, 2, &times()).unwrap();
    assert!(table.poly_exponent <= 2.5, "{table:?}");
    assert!(table.poly_constant.is_finite());
    let excited = FiberedState::new(sys.grid(), 2, linalg::matvec(&sys.pbar, &smooth_random_state(sys.grid(), 2, &mut ChaCha8Rng::seed_from_u64(8)).into_data())).unwrap();
    let bar = sobolev_growth_probe(&sys.excited, &excited, 2, &times()).unwrap();
    assert!(bar.exp_constant.is_finite() && bar.exp_constant >= 1.0);
}

#[test]
fn decoupled_growth_is_flat() {
    let grid = NuclearGrid::new(1, 64, 12.0).unwrap();
    let mol = Molecule::new(&ModelSpec::decoupled(vec![-1.0, 0.5]), &grid).unwrap();
    let sys = AdiabaticSystem::new(&mol, 0.1, Backend::ExactDiag).unwrap();
    let psi = smooth_random_state(&grid, 2, &mut ChaCha8Rng::seed_from_u64(9));
    let table = sobolev_growth_probe(&sys.full, &psi, 2, &times()).unwrap();
    assert!(table.ratios.iter().all(|r| (r - 1.0).abs() < 1e-10));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn random_generators_are_unitary_groups(seed in any::<u64>(), t1 in -3.0f64..3.0, t2 in -3.0f64..3.0, kappa in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = linalg::random_hermitian(24, &mut rng);
        let x: Vec<C64> = linalg::random_hermitian(24, &mut rng).col_as_slice(0).to_vec();
        let p = Propagator::new(&h, kappa, Backend::ExactDiag).unwrap();
        let n = linalg::vec_norm(&x);
        let y = p.evolve(&x, t1).unwrap();
        prop_assert!((linalg::vec_norm(&y) - n).abs() < 1e-10 * n);
        let z = p.evolve(&y, t2).unwrap();
        prop_assert!(dist(&z, &p.evolve(&x, t1 + t2).unwrap()) < 1e-9 * n);
        let _ = CMat::zeros(1, 1);
    }
}
