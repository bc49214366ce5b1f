use proptest::prelude::*;

use sharpness_core::eos::{
    bifurcation, find_period_orbit, manifold_lambda, manifold_map, BifurcationConfig, MapKind,
};
use sharpness_core::fixed_points::{eig2, fixed_points, jacobian_numeric, FixedPointKind};
use sharpness_core::portrait::{
    classify_region, nullcline_crossings, vector_field, GridSpec, Region,
};
use sharpness_core::signal::{detect_period_in_tail, power_spectrum, Period};
use sharpness_core::uv::{
    beta, is_forbidden, observe, sample_init, simulate, step_function_space, step_parameter_space,
    FunctionState, UvHyper,
};
use sharpness_core::{seed, DEFAULT_DIVERGENCE_THRESHOLD as THR};

fn unit_x(d: usize, rng: &mut seed::Rng) -> Vec<f64> {
    use rand::Rng;
    let mut x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= n);
    x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closure(seed_ in any::<u64>(), n_idx in 0usize..3, p in prop::sample::select(vec![0.0, 1.0]),
               y in 0.5f64..3.0, frac in 0.1f64..0.9) {
        let n = [1usize, 8, 64][n_idx];
        let mut rng = seed::rng(seed_);
        let x = unit_x(4, &mut rng);
        let w0 = sample_init::<f64, _>(&mut rng, n, p, 1.0, 4).unwrap();
        let s0 = observe(&w0, &x, y).unwrap();
        let probe = w0.hyper(&x, y, 1.0).unwrap();
        // below both the EoS onset and the catapult threshold 2/λ₀
        let eta = frac * (1.0 / (probe.k() * y)).min(2.0 / s0.lam);
        let h = probe.with_eta(eta);
        let (mut w, mut s) = (w0, s0);
        for _ in 0..200 {
            w = step_parameter_space(&w, &x, y, eta).unwrap();
            s = step_function_space(s, &h);
            let o = observe(&w, &x, y).unwrap();
            prop_assert!((o.delta_f - s.delta_f).abs() <= 1e-10 * s.delta_f.abs().max(y));
            prop_assert!((o.lam - s.lam).abs() <= 1e-10 * s.lam.abs());
        }
    }

    #[test]
    fn zero_loss_is_fixed(lam in 0.0f64..50.0, eta in 0.01f64..2.0, k in 0.2f64..3.0, y in -3.0f64..3.0) {
        let h = UvHyper::new(eta, k, 1.0, y).unwrap();
        let s = FunctionState::new(0.0, lam);
        prop_assert_eq!(step_function_space(s, &h), s);
    }

    #[test]
    fn beta_is_multiplicative(df in -3.0f64..3.0, lam in 0.0f64..10.0, eta in 0.05f64..1.0,
                              xn in 0.5f64..2.0, n_eff in 0.5f64..4.0, y in 0.0f64..3.0) {
        let h = UvHyper::new(eta, xn, n_eff, y).unwrap();
        let s = FunctionState::new(df, lam);
        let next = step_function_space(s, &h);
        let factor = (1.0 + eta * h.k() * df).powi(2);
        let lhs = beta(next, &h);
        let rhs = beta(s, &h) * factor;
        // β is a difference of two terms; compare against their magnitude
        let scale = (next.lam / (2.0 * h.k())).abs() + (next.delta_f + y).abs() + 1.0;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale * factor.max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn beta_sign_is_preserved(df in -3.0f64..3.0, b in 1e-6f64..5.0, eta in 0.05f64..0.9) {
        let h = UvHyper::new(eta, 1.0, 1.0, 2.0).unwrap();
        let lam = 2.0 * h.k() * (df + 2.0 + b);
        let traj = simulate(FunctionState::new(df, lam), &h, 200, THR);
        for (s, bt) in traj.states.iter().zip(&traj.betas) {
            // β decays geometrically toward the manifold; allow the rounding of
            // the difference λ/(2k) − (Δf + y)
            if !s.exceeds(1e6) {
                prop_assert!(*bt >= -1e-12 * (1.0 + s.lam.abs()));
            }
        }
    }

    #[test]
    fn y_zero_sharpness_never_increases(df in -3.0f64..3.0, lam in 0.1f64..10.0, r in 0.05f64..0.99) {
        let eta = r * 4.0 / lam;
        let h = UvHyper::new(eta, 1.0, 1.0, 0.0).unwrap();
        let traj = simulate(FunctionState::new(df, lam), &h, 500, THR);
        for w in traj.states.windows(2) {
            prop_assert!(w[1].lam <= w[0].lam);
        }
    }

    #[test]
    fn scale_covariance(df in -3.0f64..1.0, lam in 0.0f64..8.0, eta in 0.05f64..0.9,
                        a in 0.25f64..4.0, y in 0.5f64..2.5) {
        let h1 = UvHyper::new(eta, 1.0, 1.0, y).unwrap();
        let h2 = UvHyper::new(eta, a, a * a, y).unwrap();
        let (mut s1, mut s2) = (FunctionState::new(df, lam), FunctionState::new(df, lam));
        for _ in 0..20 {
            s1 = step_function_space(s1, &h1);
            s2 = step_function_space(s2, &h2);
            if s1.exceeds(1e6) { break; }
            prop_assert!((s1.delta_f - s2.delta_f).abs() <= 1e-12 * s1.delta_f.abs().max(1.0) * 1e2);
            prop_assert!((s1.lam - s2.lam).abs() <= 1e-12 * s1.lam.abs().max(1.0) * 1e2);
        }
    }

    #[test]
    fn fixed_point_eigenpairs(eta_frac in 0.02f64..0.98, xn in 0.5f64..2.0, n_eff in 0.5f64..4.0, y in 0.5f64..3.0) {
        let k = xn / n_eff.sqrt();
        let eta = eta_frac * 2.0 / (k * y);
        let h = UvHyper::new(eta, xn, n_eff, y).unwrap();
        let reports = fixed_points(&h, 2.0 * k * y * 1.1).unwrap();
        for r in &reports {
            let m = step_function_space(r.location, &h);
            let res = (m.delta_f - r.location.delta_f).abs().max((m.lam - r.location.lam).abs());
            prop_assert!(res <= 1e-12 * r.location.lam.abs().max(1.0), "{:?} residual {res}", r.kind);

            let j = jacobian_numeric(r.location, &h, 1e-5).unwrap();
            let e = eig2(&j);
            let mut want = r.eigenvalues;
            want.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for i in 0..2 {
                prop_assert!((e.re[i] - want[i]).abs() <= 1e-6 * want[i].abs().max(1.0),
                    "{:?}: numeric {:?} analytic {:?}", r.kind, e.re, want);
            }
            for (mu, u) in r.eigenvalues.iter().zip(r.eigenvectors) {
                let ju = j.mul_vec(u);
                let err = (ju[0] - mu * u[0]).hypot(ju[1] - mu * u[1]);
                prop_assert!(err <= 1e-6 * mu.abs().max(1.0), "{:?} eigvec err {err}", r.kind);
            }
        }
    }

    #[test]
    fn parseval_and_symmetry(x in prop::collection::vec(-100.0f64..100.0, 2..300)) {
        let p = power_spectrum(&x);
        let t = x.len() as f64;
        let energy = x.iter().map(|v| v * v).sum::<f64>() / t;
        let total: f64 = p.iter().sum();
        prop_assert!((total - energy).abs() <= 1e-9 * energy.max(1.0));
        for w in 1..x.len() {
            prop_assert!((p[w] - p[x.len() - w]).abs() <= 1e-12 * energy.max(1.0));
        }
    }

    #[test]
    fn period_stable_under_tail_doubling(p in 1usize..8, reps in 8usize..20, base in prop::collection::vec(-5.0f64..5.0, 8)) {
        let x: Vec<f64> = (0..p * reps * 4).map(|i| base[i % p]).collect();
        let tail = x.len() / 4;
        let a = detect_period_in_tail(&x, 16, 1e-9, tail);
        let b = detect_period_in_tail(&x, 16, 1e-9, 2 * tail);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn forbidden_region_never_entered_from_weights() {
    let y = 2.0_f64;
    for s in 0..100u64 {
        let mut rng = seed::rng(seed::derive_seed(17, s));
        let x = unit_x(3, &mut rng);
        let w = sample_init::<f64, _>(&mut rng, 16, 1.0, 1.0, 3).unwrap();
        let s0 = observe(&w, &x, y).unwrap();
        let probe = w.hyper(&x, y, 1.0).unwrap();
        let eta = 0.8 * (1.0 / (probe.k() * y)).min(2.0 / s0.lam);
        let traj = simulate(s0, &probe.with_eta(eta), 1000, THR);
        assert!(!traj.diverged());
        assert!(traj.states.iter().all(|st| !is_forbidden(*st, &probe)), "seed {s}");
    }
}

#[test]
fn merge_of_iii_into_ii_at_upper_rate() {
    let eta_upper = 1.0_f64;
    let h = UvHyper::new(eta_upper * (1.0 - 1e-8), 1.0, 1.0, 2.0).unwrap();
    let r = fixed_points(&h, 4.0).unwrap();
    let ii = r.iter().find(|r| r.kind == FixedPointKind::Origin).unwrap().location;
    let iii = r.iter().find(|r| r.kind == FixedPointKind::NegativeBranch).unwrap().location;
    let d = (ii.delta_f - iii.delta_f).hypot(ii.lam - iii.lam);
    assert!(d <= 1e-6, "distance {d}");
}

#[test]
fn nullcline_crossings_are_fixed_points() {
    let h = UvHyper::new(0.5, 1.0, 1.0, 2.0).unwrap();
    let samples: Vec<f64> = (0..=1000).map(|i| -8.0 + 16.0 * i as f64 / 1000.0).collect();
    let crossings = nullcline_crossings(&h, &samples);
    let fps = [(-4.0, 4.0), (4.0, 12.0), (-2.0, 0.0)];
    assert!(!crossings.is_empty());
    for c in &crossings {
        let near = fps.iter().any(|&(a, b)| (c.delta_f - a).abs() < 1e-6 && (c.lam - b).abs() < 1e-5);
        assert!(near, "crossing {c:?} is not a fixed point");
    }
    assert!(crossings.iter().any(|c| (c.delta_f + 4.0).abs() < 1e-6));
    assert!(crossings.iter().any(|c| (c.delta_f - 4.0).abs() < 1e-6));
}

#[test]
fn region_labels_stable_under_horizon_doubling() {
    let h = UvHyper::new(0.55, 1.0, 1.0, 2.0).unwrap();
    let spec = GridSpec {
        df_range: (-6.0, 6.0),
        lam_range: (0.0, 16.0),
        resolution: 100,
    };
    let mut a = vector_field(&spec, &h, 1).unwrap();
    let mut b = a.clone();
    a.classify(&h, 1000, THR);
    b.classify(&h, 2000, THR);
    let flips = a
        .cells
        .iter()
        .zip(&b.cells)
        .filter(|(x, y)| x.region != y.region)
        .count();
    assert!(flips as f64 <= 0.02 * a.cells.len() as f64, "{flips} flips");
    for c in &a.cells {
        if is_forbidden(c.state, &h) {
            assert_eq!(c.region.unwrap().region, Region::Forbidden);
        }
        if let Some(u) = c.unit_update {
            assert!((u[0].hypot(u[1]) - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn arrows_point_toward_stable_line() {
    // y = 1 keeps part of line I (λ ≥ 2) stable at η = 0.5 (λ < 4)
    let h = UvHyper::new(0.5, 1.0, 1.0, 1.0).unwrap();
    let spec = GridSpec {
        df_range: (-0.1, 0.1),
        lam_range: (2.2, 3.8),
        resolution: 20,
    };
    let g = vector_field(&spec, &h, 1).unwrap();
    for c in &g.cells {
        let df = c.state.delta_f;
        let u = c.unit_update.expect("off-line cells move");
        assert!(u[0] * df < 0.0, "cell {:?} arrow {u:?}", c.state);
    }
}

#[test]
fn region_of_reference_points() {
    let h = UvHyper::new(0.5, 1.0, 1.0, 2.0).unwrap();
    let lbl = |df, lam, h: &UvHyper<f64>| classify_region(FunctionState::new(df, lam), h, 1000, THR).region;
    assert_eq!(lbl(1.0, 1.0, &h), Region::Forbidden);
    assert_eq!(lbl(-2.0, 5.0, &h), Region::Sharpening);
    assert_eq!(lbl(-2.0, 2.0, &h.with_eta(1.5)), Region::Divergent);
}

#[test]
fn manifold_orbit_matches_full_model() {
    // expanding orbits amplify rounding in both iterations independently, so
    // chaotic rates are compared over a short horizon only
    for (eta, steps) in [(0.3_f64, 1000), (0.45, 1000), (0.55, 1000), (0.6, 1000), (0.7, 15), (0.8, 15)] {
        let h = UvHyper::new(eta, 1.0, 1.0, 2.0).unwrap();
        let mut x = -0.3;
        let mut s = FunctionState::new(x, manifold_lambda(x, &h));
        for t in 0..steps {
            x = manifold_map(x, &h);
            s = step_function_space(s, &h);
            let want = manifold_lambda(x, &h);
            assert!((s.lam - want).abs() <= 1e-10 * want.abs().max(1.0), "eta {eta} t {t}: {} vs {want}", s.lam);
        }
    }
}

#[test]
fn first_bifurcation_at_critical_rate() {
    let h = UvHyper::new(0.5_f64, 1.0, 1.0, 2.0).unwrap();
    let cfg = BifurcationConfig::new(MapKind::Manifold, (0.45, 0.55), 400);
    let d = bifurcation(&h, &cfg).unwrap();
    let switch = d
        .samples
        .windows(2)
        .find(|w| w[0].period == Some(Period::Periodic(1)) && w[1].period == Some(Period::Periodic(2)))
        .map(|w| w[1].eta)
        .expect("period 1 → 2 switch");
    assert!((switch - 0.5).abs() <= 0.005, "switch at {switch}");
}

#[test]
fn period_doubling_cascade_order() {
    let h = UvHyper::new(0.5, 1.0, 1.0, 2.0).unwrap();
    let mut cfg = BifurcationConfig::new(MapKind::Manifold, (0.4, 1.0), 300);
    cfg.transient = 20_000;
    let d = bifurcation(&h, &cfg).unwrap();
    let first = |p: usize| d.samples.iter().position(|s| s.period == Some(Period::Periodic(p)));
    let (p1, p2, p4) = (first(1).unwrap(), first(2).unwrap(), first(4).unwrap());
    assert!(p1 < p2 && p2 < p4);
    if let Some(div) = d.first_divergence() {
        assert!(d.samples[p4].eta < div);
    }
    for s in &d.samples {
        if let Some(Period::Periodic(p)) = s.period {
            assert_eq!(s.distinct.len() % p, 0, "eta {}", s.eta);
        }
    }
}

#[test]
fn found_orbits_are_closed() {
    let h = UvHyper::new(0.8, 1.0, 1.0, 2.0).unwrap();
    let guesses: Vec<_> = (-30..=20).map(|i| FunctionState::new(i as f64 * 0.1, 0.0)).collect();
    for period in [1, 2, 4] {
        let orbits = find_period_orbit(MapKind::Manifold, &h, period, &guesses).unwrap();
        for orbit in orbits {
            assert_eq!(orbit.len(), period);
            for i in 0..period {
                let next = manifold_map(orbit[i].delta_f, &h);
                let want = orbit[(i + 1) % period].delta_f;
                assert!((next - want).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn f32_map_tracks_f64_briefly() {
    let h64 = UvHyper::new(0.3, 1.0, 1.0, 2.0).unwrap();
    let h32 = UvHyper::new(0.3f32, 1.0, 1.0, 2.0).unwrap();
    let a = simulate(FunctionState::new(-2.0, 1.0), &h64, 50, THR).last();
    let b = simulate(FunctionState::new(-2.0f32, 1.0), &h32, 50, 1e8).last();
    assert!((a.lam - b.lam as f64).abs() < 1e-3);
}
