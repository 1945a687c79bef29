use boa_lab::grid::{gaussian_packet, NuclearGrid};
use boa_lab::linalg::{self, CMat};
use boa_lab::memory::{
    exact_memory, reconstruct_qp, solve_nonlocal, ExpansionOperators, MemoryKernelCache, TimeGridPath,
};
use boa_lab::models::ModelSpec;
use boa_lab::propagation::Backend;
use boa_lab::system::{AdiabaticSystem, Molecule};
use num_complex::Complex64 as C64;

fn setup(spec: ModelSpec, n: usize, kappa: f64) -> (AdiabaticSystem, Vec<C64>) {
    let grid = NuclearGrid::new(1, n, 12.0).unwrap();
    let mol = Molecule::new(&spec, &grid).unwrap();
    let sys = AdiabaticSystem::new(&mol, kappa, Backend::ExactDiag).unwrap();
    let f0 = gaussian_packet(&grid, -1.5, 0.8, 1.0, kappa).into_data();
    (sys, f0)
}

fn l2(sys: &AdiabaticSystem, v: &[C64]) -> f64 {
    linalg::vec_norm(v) * sys.grid().weight().sqrt()
}

fn projected_path(sys: &AdiabaticSystem, f0: &[C64], tau: f64, steps: usize) -> (TimeGridPath, Vec<Vec<C64>>) {
    let psi0 = sys.molecule.lift(f0);
    let mut full = Vec::new();
    let path = TimeGridPath::sample(tau / steps as f64, steps, |t| {
        let psi = sys.full.evolve(&psi0, t)?;
        let f = sys.molecule.project(&psi);
        full.push(psi);
        Ok(f)
    })
    .unwrap();
    (path, full)
}

#[test]
fn solver_and_reconstruction_converge_to_full_dynamics() {
    let (sys, f0) = setup(ModelSpec::avoided_crossing(1.0, 0.5), 128, 0.1);
    let cache = MemoryKernelCache::new(&sys);
    assert!(cache.lag0_defect() < 1e-12);
    let h = sys.projected_generator();
    let psi_ref = sys.full.evolve(&sys.molecule.lift(&f0), 1.0).unwrap();
    let f_ref = sys.molecule.project(&psi_ref);
    let mut errs = Vec::new();
    for steps in [512, 1024, 2048] {
        let path = solve_nonlocal(&f0, 1.0, 1.0 / steps as f64, &h, &cache).unwrap();
        let ef = l2(&sys, &linalg::sub(path.last(), &f_ref));
        let eq = l2(&sys, &linalg::sub(&reconstruct_qp(&path, &sys, &cache), &psi_ref));
        eprintln!("{steps} {ef:e} {eq:e}");
        errs.push((ef, eq));
    }
    assert!(errs[0].0 < 1e-4 && errs[0].1 < 1e-4);
    for w in errs.windows(2) {
        let (r1, r2) = (w[0].0 / w[1].0, w[0].1 / w[1].1);
        assert!((3.0..=5.0).contains(&r1) && (3.0..=5.0).contains(&r2), "{r1} {r2}");
    }
}

#[test]
fn expansion_identity_holds_to_quadrature_accuracy() {
    let (sys, f0) = setup(ModelSpec::avoided_crossing(1.0, 0.5), 128, 0.1);
    let ops = ExpansionOperators::new(&sys);
    let kappa = sys.kappa;
    let mut resid = Vec::new();
    let mut rhs_all = Vec::new();
    for steps in [128, 256, 512] {
        let (path, full) = projected_path(&sys, &f0, 1.0, steps);
        let exact = exact_memory(&sys, full.last().unwrap());
        let rhs = ops.terms(&path, 2).unwrap().combined(kappa);
        let lead = ops.terms(&path, 1).unwrap().combined(kappa);
        let r = l2(&sys, &linalg::sub(&exact, &rhs));
        eprintln!("{steps} resid {r:e} lead {:e} |w| {:e}", l2(&sys, &linalg::sub(&exact, &lead)), l2(&sys, &exact));
        resid.push(r);
        rhs_all.push(rhs);
    }
    for k in 0..2 {
        let tol = l2(&sys, &linalg::sub(&rhs_all[k], &rhs_all[k + 1])) * 4.0 / 3.0;
        eprintln!("tol {tol:e}");
        assert!(resid[k] < 5.0 * tol);
    }
}

#[test]
fn memory_quadrature_is_second_order() {
    let (sys, f0) = setup(ModelSpec::avoided_crossing(1.0, 0.5), 128, 0.1);
    let cache = MemoryKernelCache::new(&sys);
    let mut errs = Vec::new();
    for steps in [256, 512] {
        let (path, full) = projected_path(&sys, &f0, 1.0, steps);
        let exact = exact_memory(&sys, full.last().unwrap());
        let w = cache.memory_w(&path, steps);
        let all = cache.memory_w_all(&path);
        assert!(l2(&sys, &linalg::sub(&w, all.last().unwrap())) < 1e-12 * l2(&sys, &w));
        assert_eq!(cache.memory_w(&path, 0).iter().map(|z| z.norm()).sum::<f64>(), 0.0);
        errs.push(l2(&sys, &linalg::sub(&w, &exact)));
    }
    let ratio = errs[0] / errs[1];
    eprintln!("memory ratio {ratio} {errs:?}");
    assert!((3.0..=5.0).contains(&ratio));
}

#[test]
fn decoupled_memory_vanishes() {
    let (sys, f0) = setup(ModelSpec::decoupled(vec![-1.0, 1.0]), 64, 0.1);
    let cache = MemoryKernelCache::new(&sys);
    let h = sys.projected_generator();
    let path = solve_nonlocal(&f0, 1.0, 1.0 / 256.0, &h, &cache).unwrap();
    let exact = linalg::hermitian_eigen(&h).unwrap().apply_fn(&f0, |mu| C64::new(0.0, -mu / 0.1).exp());
    assert!(l2(&sys, &linalg::sub(path.last(), &exact)) < 1e-8);
    assert!(l2(&sys, &cache.memory_w(&path, 256)) < 1e-14);
    let q = reconstruct_qp(&path, &sys, &cache);
    assert!(l2(&sys, &linalg::sub(&q, &sys.molecule.lift(path.last()))) < 1e-14);
    let terms = ExpansionOperators::new(&sys).terms(&path, 2).unwrap();
    assert!(l2(&sys, &terms.combined(0.1)) < 1e-14);
    let trivial = solve_nonlocal(&f0, 0.0, 1.0 / 256.0, &h, &cache).unwrap();
    assert_eq!(trivial.steps(), 0);
    let _ = CMat::zeros(1, 1);
}
