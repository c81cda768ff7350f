use std::f64::consts::PI;
use std::sync::OnceLock;

use fnls_core::functionals::*;
use fnls_core::potentials::*;
use fnls_core::solvers::*;
use fnls_core::spectral::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cheap() -> ProptestConfig {
    ProptestConfig { cases: 24, ..ProptestConfig::default() }
}

fn costly() -> ProptestConfig {
    ProptestConfig { cases: 4, ..ProptestConfig::default() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Sum of Gaussians with optional phase twist; smooth and well inside the box.
fn bumps(g: &Grid, spec: &[(f64, f64, f64)], twist: f64) -> Field {
    let side = g.side_length();
    Field::from_fn(g, |x| {
        let r2 = |c: f64| {
            let dx = x[0] - c * side / 8.0;
            let dy = if x.len() > 1 { x[1] + c * side / 16.0 } else { 0.0 };
            dx * dx + dy * dy
        };
        let amp: f64 = spec.iter().map(|(c, w, a)| a * (-r2(*c) / (w * w)).exp()).sum();
        Complex64::from_polar(amp, twist * x[0])
    })
}

fn bump_spec() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, 1.0..3.0f64, 0.3..1.5f64), 1..4)
}

fn raw_values(len: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), len)
}

fn complex_field(g: &Grid, raw: &[(f64, f64)]) -> Field {
    Field::from_values(g, raw.iter().map(|(a, b)| Complex64::new(*a, *b)).collect(), false).unwrap()
}

proptest! {
    #![proptest_config(cheap())]

    #[test]
    fn parseval_on_random_fields(raw in raw_values(64 * 64), two_d in any::<bool>(), side in 1.0..50.0f64) {
        let g = if two_d { Grid::new(2, 64, side).unwrap() } else { Grid::new(1, 4096, side).unwrap() };
        let u = complex_field(&g, &raw);
        let n_total = g.len() as f64;
        let weighted: f64 = u.spectrum().iter().map(|c| c.norm_sqr()).sum::<f64>() * g.cell_volume() / n_total;
        prop_assert!(rel(mass(&u), weighted) <= 1e-12);
    }

    #[test]
    fn frac_laplacian_is_self_adjoint(a in raw_values(256), b in raw_values(256), s in 0.05..0.95f64) {
        let g = Grid::new(1, 256, 20.0).unwrap();
        let (u, v) = (complex_field(&g, &a), complex_field(&g, &b));
        let lhs = inner(&frac_laplacian(&u, s).unwrap(), &v).unwrap();
        let rhs = inner(&u, &frac_laplacian(&v, s).unwrap()).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(rhs.norm()));
    }

    #[test]
    fn quadratic_form_is_real_and_matches_half_norm(a in raw_values(64 * 64), s in 0.05..0.95f64) {
        let g = Grid::new(2, 64, 10.0).unwrap();
        let u = complex_field(&g, &a);
        let q = inner(&u, &frac_laplacian(&u, s).unwrap()).unwrap();
        let h = half_frac_norm_sq(&u, s).unwrap();
        prop_assert!(q.im.abs() <= 1e-10 * q.norm());
        prop_assert!(rel(q.re, h) <= 1e-10);
    }

    #[test]
    fn single_mode_kinetic_is_monotone_in_s(m in 1usize..40, s1 in 0.05..0.9f64, ds in 0.01..0.09f64) {
        let g = Grid::new(1, 128, 2.0 * PI * 4.0).unwrap();
        let k0 = 2.0 * PI * m as f64 / g.side_length();
        let u = Field::from_fn(&g, |x| Complex64::from_polar(1.0, k0 * x[0]));
        let u = u.scaled(1.0 / mass(&u).sqrt());
        let (lo, hi) = (half_frac_norm_sq(&u, s1).unwrap(), half_frac_norm_sq(&u, s1 + ds).unwrap());
        if m == 4 {
            prop_assert!(rel(lo, hi) <= 1e-12);
        } else if k0 > 1.0 {
            prop_assert!(hi > lo);
        } else {
            prop_assert!(hi < lo);
        }
    }

    #[test]
    fn unit_dilation_and_shifts_preserve_mass(spec in bump_spec(), twist in -1.0..1.0f64, fx in -1.0..1.0f64, fy in -1.0..1.0f64) {
        for g in [Grid::new(1, 2048, 128.0).unwrap(), Grid::new(2, 256, 64.0).unwrap()] {
            let u = bumps(&g, &spec, twist);
            let offset = [fx * g.side_length() / 8.0, fy * g.side_length() / 8.0];
            let moved = shift(&u, &offset[..g.dim()]).unwrap();
            prop_assert!(rel(mass(&moved), mass(&u)) <= 1e-12);
            prop_assert!(rel(mass(&dilate(&u, 1.0).unwrap()), mass(&u)) <= 1e-12);
        }
    }

    #[test]
    fn modulus_does_not_raise_energy(spec in bump_spec(), twist in 0.1..2.0f64, s in 0.2..0.9f64, frac in 0.1..1.0f64) {
        let g = Grid::new(1, 2048, 64.0).unwrap();
        let u = bumps(&g, &spec, twist);
        let alpha = frac * sobolev_critical_exponent(1, s).min(6.0);
        let e = energy(&u, None, s, alpha).unwrap().total;
        let e_abs = energy(&u.modulus(), None, s, alpha).unwrap().total;
        prop_assert!(e_abs <= e + 1e-10 * e.abs());
    }

    #[test]
    fn energy_without_potential_is_translation_invariant(spec in bump_spec(), fx in -1.0..1.0f64, fy in -1.0..1.0f64) {
        for g in [Grid::new(1, 2048, 128.0).unwrap(), Grid::new(2, 256, 64.0).unwrap()] {
            let u = bumps(&g, &spec, 0.0);
            let offset = [fx * g.side_length() / 8.0, fy * g.side_length() / 8.0];
            let moved = shift(&u, &offset[..g.dim()]).unwrap();
            let alpha = mass_critical_exponent(g.dim(), 0.5);
            let (e0, e1) = (energy(&u, None, 0.5, alpha).unwrap(), energy(&moved, None, 0.5, alpha).unwrap());
            prop_assert!((e0.total - e1.total).abs() <= 1e-10 * e0.scale(), "{e0:?} vs {e1:?}");
        }
    }

    #[test]
    fn concentration_function_grows_with_radius(spec in bump_spec(), r1 in 0.0..20.0f64, dr in 0.0..10.0f64) {
        let g = Grid::new(1, 1024, 64.0).unwrap();
        let u = bumps(&g, &spec, 0.0);
        let small = concentration_function(&u, r1).unwrap();
        let large = concentration_function(&u, r1 + dr).unwrap();
        prop_assert!(large >= small);
    }

    #[test]
    fn dilation_scaling_laws(spec in bump_spec(), lambda in 0.8..1.5f64, s in 0.3..0.8f64) {
        // The lattice sum of |k|^{2s}|û|² carries an O((2π/L)^{1+2s}) error, so the box is wide.
        let g = Grid::new(1, 32768, 4096.0).unwrap();
        let u = bumps(&g, &spec, 0.0);
        let v = dilate(&u, lambda).unwrap();
        let alpha = mass_critical_exponent(1, s);
        prop_assert!(rel(mass(&v), mass(&u)) <= 1e-4);
        prop_assert!(rel(half_frac_norm_sq(&v, s).unwrap(), lambda.powf(2.0 * s) * half_frac_norm_sq(&u, s).unwrap()) <= 1e-4);
        prop_assert!(rel(v.lp_norm_pow(alpha + 2.0), lambda.powf(alpha / 2.0) * u.lp_norm_pow(alpha + 2.0)) <= 1e-4);
    }

    #[test]
    fn canonical_potential_is_nonnegative_with_exact_lattice_zeros(kappa in 0.1..5.0f64, p in 0.2..2.9f64, cell in 0usize..8, two_d in any::<bool>()) {
        let (dim, n, side) = if two_d { (2, 64, 8.0) } else { (1, 512, 16.0) };
        let g = Grid::new(dim, n, side).unwrap();
        // Multiples of 1/8 are grid points on both grids.
        let x0 = vec![cell as f64 / 8.0; dim];
        let v = sample_potential(&PotentialSpec::periodic_power(kappa, p, &x0), &g).unwrap();
        let values = v.field.real_parts();
        prop_assert!(values.iter().all(|x| *x >= 0.0));
        for (idx, val) in values.iter().enumerate() {
            let pos = g.position(idx);
            let on_lattice = (0..dim).all(|i| {
                let t = (pos[i] - x0[i]) / 1.0;
                (t - t.round()).abs() < 1e-9
            });
            prop_assert_eq!(on_lattice, *val == 0.0, "index {} value {}", idx, val);
        }
    }
}

fn bottom_cfg() -> SolverConfig {
    SolverConfig { tol_grad: 1e-11, ..SolverConfig::default() }
}

proptest! {
    #![proptest_config(costly())]

    #[test]
    fn spectral_bottom_shifts_with_constants(kappa in 0.2..3.0f64, p in 0.5..2.5f64, s in 0.3..0.8f64) {
        let g = Grid::new(1, 256, 8.0).unwrap();
        let v = sample_potential(&PotentialSpec::periodic_power(kappa, p, &[0.0]), &g).unwrap().field;
        let raised = Field::from_real(&g, v.real_parts().iter().map(|x| x + 1.0).collect()).unwrap();
        let b0 = spectral_bottom(&v, s, &bottom_cfg()).unwrap();
        let b1 = spectral_bottom(&raised, s, &bottom_cfg()).unwrap();
        prop_assert!(b0.converged && b1.converged);
        prop_assert!((b1.value - b0.value - 1.0).abs() <= 1e-8, "{} {}", b0.value, b1.value);
    }

    #[test]
    fn spectral_bottom_is_monotone_and_positive(kappa in 0.2..3.0f64, extra in 0.0..2.0f64, p in 0.5..2.5f64) {
        let g = Grid::new(1, 256, 8.0).unwrap();
        let lower = sample_potential(&PotentialSpec::periodic_power(kappa, p, &[0.0]), &g).unwrap().field;
        let upper = sample_potential(&PotentialSpec::periodic_power(kappa + extra, p, &[0.0]), &g).unwrap().field;
        let b_lo = spectral_bottom(&lower, 0.5, &bottom_cfg()).unwrap();
        let b_hi = spectral_bottom(&upper, 0.5, &bottom_cfg()).unwrap();
        prop_assert!(b_lo.value <= b_hi.value + 1e-8);
        for b in [&b_lo, &b_hi] {
            let vals = b.eigenfield.real_parts();
            let sign = vals[0].signum();
            prop_assert!(vals.iter().all(|x| x * sign > 0.0));
        }
    }

    #[test]
    fn flow_keeps_mass_and_passes_gradient_checks(a in 0.3..2.0f64, seed in any::<u64>(), p in 0.5..2.5f64) {
        let g = Grid::new(1, 512, 16.0).unwrap();
        let v = sample_potential(&PotentialSpec::periodic_power(1.0, p, &[0.0]), &g).unwrap().field;
        let functional = EnergyFunctional::new(&g, 0.5, 2.0, Some(&v)).unwrap();
        let start = random_smooth_field(&g, &mut ChaCha8Rng::seed_from_u64(seed), false);
        let cfg = SolverConfig { gradient_checks: true, max_iter: 400, ..SolverConfig::default() };
        let (u, rep) = flow_from(&functional, &start, a, &cfg).unwrap();
        prop_assert!(!rep.diverged, "{rep:?}");
        prop_assert!(rel(mass(&u), a) <= 1e-12);
        prop_assert!(rep.gradient_check.unwrap() <= 1e-6, "{rep:?}");
    }

    #[test]
    fn discrete_gradient_matches_central_differences(seed in any::<u64>(), s in 0.2..0.9f64, frac in 0.2..1.0f64) {
        let g = Grid::new(1, 512, 32.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = sample_potential(&PotentialSpec::periodic_power(1.0, 1.5, &[0.0]), &g).unwrap().field;
        let alpha = frac * mass_critical_exponent(1, s) * 2.0;
        let functional = EnergyFunctional::new(&g, s, alpha, Some(&v)).unwrap();
        let u = random_smooth_field(&g, &mut rng, false);
        let dirs: Vec<Field> = (0..5).map(|_| random_smooth_field(&g, &mut rng, true)).collect();
        prop_assert!(gradient_fd_check(&functional, &u, &dirs, 1e-5).unwrap() <= 1e-6);
    }
}

/// Closed-form soliton of `(-Δ)^{1/2} Q + Q = Q²` on the whole line.
fn lorentzian(g: &Grid) -> Field {
    Field::from_fn_real(g, |x| 2.0 / (1.0 + x[0] * x[0]))
}

fn critical_q() -> &'static Field {
    static Q: OnceLock<Field> = OnceLock::new();
    Q.get_or_init(|| {
        let g = Grid::new(1, 16384, 1024.0).unwrap();
        let (q, rep) = petviashvili(&g, 0.5, 2.0, &SolverConfig { tol_grad: 1e-11, ..SolverConfig::default() }).unwrap();
        assert!(rep.converged, "{rep:?}");
        q
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 50, ..ProptestConfig::default() })]

    #[test]
    fn gn_inequality_holds_for_random_fields(seed in any::<u64>(), signed in any::<bool>()) {
        // Exact Q for α = 1, s = 1/2 has ‖Q‖² = 2π.
        let (s, alpha) = (0.5, 1.0);
        let c_opt = gn_closed_form(1, s, alpha, 2.0 * PI);
        let g = Grid::new(1, 4096, 256.0).unwrap();
        let v = random_smooth_field(&g, &mut ChaCha8Rng::seed_from_u64(seed), signed);
        let lhs = v.lp_norm_pow(alpha + 2.0);
        let kin = half_frac_norm_sq(&v, s).unwrap();
        let rhs = c_opt * kin.powf(alpha / (4.0 * s)) * mass(&v).powf(0.5 * (alpha + 2.0 - alpha / (2.0 * s)));
        prop_assert!(lhs <= rhs * (1.0 + 1e-3), "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn ground_state_minimizes_weinstein(seed in any::<u64>()) {
        let q = critical_q();
        let v = random_smooth_field(q.grid(), &mut ChaCha8Rng::seed_from_u64(seed), false);
        prop_assert!(weinstein(q, 0.5, 2.0).unwrap() <= weinstein(&v, 0.5, 2.0).unwrap());
    }
}

#[test]
fn closed_form_soliton_is_near_optimal_for_gn() {
    let g = Grid::new(1, 8192, 256.0).unwrap();
    let q = lorentzian(&g);
    let j = weinstein(&q, 0.5, 1.0).unwrap();
    let c_opt = gn_closed_form(1, 0.5, 1.0, 2.0 * PI);
    assert!(rel(1.0 / j, c_opt) < 2e-2, "{} vs {}", 1.0 / j, c_opt);
}

#[test]
fn critical_energy_ratio_does_not_increase_with_mass() {
    // Small boxes let spread states undercut the whole-space bound, so the box is wide.
    let g = Grid::new(1, 4096, 64.0).unwrap();
    let pot = sample_potential(&PotentialSpec::periodic_power(1.0, 2.0, &[0.0]), &g).unwrap();
    let cfg = SolverConfig { init: InitSpec::LatticeMultistart { count: 2 }, ..SolverConfig::default() };
    let q = critical_q();
    let a_star = critical_mass(q);
    let mut ratios = Vec::new();
    for frac in [0.3, 0.5, 0.7, 0.8, 0.9] {
        let a = frac * a_star;
        let res = multistart_minimize(&g, 0.5, 2.0, Some(&pot), a, &cfg).unwrap();
        assert!(res.report.converged, "{:?}", res.report);
        let ratio = res.report.energy.total / a;
        assert!(ratio >= 0.5 * pot.min_value(), "{ratio}");
        for tau in [1.0, 2.0, 4.0] {
            let upper = test_function_energy(a, tau, &[0.0], q, &pot.field, 0.5, 2.0).unwrap().total;
            assert!(res.report.energy.total <= upper + 1e-10 * upper.abs(), "a {a} tau {tau}: {} > {upper}", res.report.energy.total);
        }
        ratios.push(ratio);
    }
    assert!(ratios.windows(2).all(|w| w[1] <= w[0] + 1e-6), "{ratios:?}");
}
