use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

use sharpness_core::seed;
use sharpness_core::uv::{observe, step_function_space, UvParams};
use sharpness_train::curvature::{hvp, sharpness, PowerIteration};
use sharpness_train::datasets::{
    make_power_law, make_random, make_single_example, make_teacher_student, normalize_inputs, singular_values,
    standardize, Dataset, InputScaling, PowerLawSpec, SingleInput,
};
use sharpness_train::network::{
    forward, grad_flat, init_network, loss, loss_and_grad, Activation, NetworkConfig, Parameterization, Params,
};
use sharpness_train::trainer::{train, weight_norms, LearningRate, TrainOptions};

fn net(depth: usize, width: usize, act: Activation, param: Parameterization, sigma_w2: f64) -> NetworkConfig {
    NetworkConfig {
        depth,
        width,
        activation: act,
        parameterization: param,
        sigma_w2,
    }
}

fn flat_loss(theta: &DVector<f64>, shapes: &[(usize, usize)], cfg: &NetworkConfig, d: &Dataset) -> f64 {
    loss(&Params::from_flat(theta, shapes).unwrap(), cfg, &d.x, &d.y).unwrap()
}

/// Dense Hessian from second differences of the loss alone.
fn dense_hessian(params: &Params, cfg: &NetworkConfig, d: &Dataset) -> DMatrix<f64> {
    let theta = params.flatten();
    let shapes = params.shapes();
    let n = theta.len();
    let h = 1e-4;
    let f = |i: usize, si: f64, j: usize, sj: f64| {
        let mut t = theta.clone();
        t[i] += si * h;
        t[j] += sj * h;
        flat_loss(&t, &shapes, cfg, d)
    };
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = (f(i, 1.0, j, 1.0) - f(i, 1.0, j, -1.0) - f(i, -1.0, j, 1.0) + f(i, -1.0, j, -1.0)) / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn dominant(m: &DMatrix<f64>) -> f64 {
    let e = SymmetricEigen::new(m.clone());
    e.eigenvalues.iter().copied().fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a })
}

fn small_problem(seed_: u64, depth: usize, act: Activation, width: usize) -> (NetworkConfig, Params, Dataset) {
    let mut rng = seed::rng(seed_);
    let cfg = net(depth, width, act, Parameterization::Interp { s: 0.5 }, 1.5);
    let data = make_random(6, 3, 2, &mut rng).unwrap();
    let data = normalize_inputs(&data, 1.0, InputScaling::PerExample);
    let p = init_network(&cfg, 3, 2, &mut rng).unwrap();
    (cfg, p, data)
}

#[test]
fn gradient_matches_finite_differences() {
    let mut cases = 0;
    for (i, depth) in [2usize, 3, 4].iter().cycle().take(20).enumerate() {
        let act = if i % 2 == 0 { Activation::Linear } else { Activation::Relu };
        let width = 4 + (i % 4) * 4;
        let (cfg, p, d) = small_problem(100 + i as u64, *depth, act, width);
        let theta = p.flatten();
        let shapes = p.shapes();
        let (_, g) = grad_flat(&theta, &shapes, &cfg, &d.x, &d.y).unwrap();
        let mut fd = DVector::zeros(theta.len());
        for k in 0..theta.len() {
            let h = 1e-6 * theta[k].abs().max(1.0);
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[k] += h;
            tm[k] -= h;
            fd[k] = (flat_loss(&tp, &shapes, &cfg, &d) - flat_loss(&tm, &shapes, &cfg, &d)) / (2.0 * h);
        }
        let rel = (&fd - &g).norm() / g.norm();
        assert!(rel <= 1e-5, "case {i}: relative error {rel}");
        cases += 1;
    }
    assert_eq!(cases, 20);
}

#[test]
fn hvp_matches_dense_hessian() {
    let mut rng = seed::rng(7);
    let cfg = net(2, 4, Activation::Linear, Parameterization::Sp, 1.0);
    let data = make_random(8, 3, 1, &mut rng).unwrap();
    let data = normalize_inputs(&data, 3.0, InputScaling::PerExample);
    let p = init_network(&cfg, 3, 1, &mut rng).unwrap();
    let hd = dense_hessian(&p, &cfg, &data);
    for k in 0..3 {
        let v = DVector::from_fn(p.len(), |i, _| ((i * 7 + k * 3) as f64).sin());
        let hv = hvp(&p, &cfg, &data.x, &data.y, &v).unwrap();
        let want = &hd * &v;
        assert!((&hv - &want).norm() <= 1e-4 * want.norm(), "{} vs {}", hv.norm(), want.norm());
    }

    // a null direction of the dense Hessian
    let e = SymmetricEigen::new(hd.clone());
    let (idx, _) = e
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .unwrap();
    let top = dominant(&hd).abs();
    let null = e.eigenvectors.column(idx).into_owned();
    let hv = hvp(&p, &cfg, &data.x, &data.y, &null).unwrap();
    assert!(hv.norm() <= 1e-3 * top, "‖Hv‖ = {} (top {top})", hv.norm());
}

#[test]
fn hvp_is_symmetric() {
    for s in 0..5u64 {
        let (cfg, p, d) = small_problem(200 + s, 3, Activation::Relu, 6);
        let u = DVector::from_fn(p.len(), |i, _| ((i as f64 + s as f64) * 0.7).cos());
        let v = DVector::from_fn(p.len(), |i, _| ((i as f64) * 1.3 + 0.2).sin());
        let a = v.dot(&hvp(&p, &cfg, &d.x, &d.y, &u).unwrap());
        let b = u.dot(&hvp(&p, &cfg, &d.x, &d.y, &v).unwrap());
        assert!((a - b).abs() <= 1e-4 * a.abs().max(b.abs()), "{a} vs {b}");
    }
}

#[test]
fn power_iteration_matches_dense_oracle() {
    for s in 0..10u64 {
        let act = if s % 2 == 0 { Activation::Linear } else { Activation::Relu };
        let depth = 2 + (s as usize % 2);
        let (cfg, p, d) = small_problem(300 + s, depth, act, 6);
        assert!(p.len() <= 200);
        let want = dominant(&dense_hessian(&p, &cfg, &d));
        let got = sharpness(&p, &cfg, &d.x, &d.y, PowerIteration::default(), &mut seed::rng(s)).unwrap();
        assert!((got.value - want).abs() <= 1e-4 * want.abs(), "seed {s}: {} vs {want}", got.value);
    }
}

#[test]
fn diagonal_toy_hessian() {
    // L = ½(w2·w1·x − y)²; with x = 1, w1 = 1, w2 = √3, y = 2√3 the residual
    // term cancels the off-diagonal and H = diag(3, 1)
    let r3 = 3f64.sqrt();
    let cfg = net(2, 1, Activation::Linear, Parameterization::Sp, 1.0);
    let p = Params {
        layers: vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, r3)],
    };
    let d = Dataset::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 2.0 * r3)).unwrap();
    let hd = dense_hessian(&p, &cfg, &d);
    assert!((hd[(0, 1)]).abs() < 1e-6 && (hd[(0, 0)] - 3.0).abs() < 1e-6 && (hd[(1, 1)] - 1.0).abs() < 1e-6);
    let est = sharpness(&p, &cfg, &d.x, &d.y, PowerIteration::default(), &mut seed::rng(0)).unwrap();
    assert!((est.value - 3.0).abs() < 1e-5, "{}", est.value);
}

#[test]
fn sharpness_non_negative_at_global_minimum() {
    let (cfg, p, mut d) = small_problem(9, 2, Activation::Relu, 5);
    d.y = forward(&p, &cfg, &d.x).unwrap();
    let est = sharpness(&p, &cfg, &d.x, &d.y, PowerIteration::default(), &mut seed::rng(1)).unwrap();
    assert!(est.value >= 0.0);
}

fn uv_from_net(p: &Params, n: usize, d_in: usize) -> UvParams<f64> {
    // W1 is n × d_in column-major; UV stores U row-major
    let w1 = &p.layers[0];
    let u: Vec<f64> = (0..n).flat_map(|i| (0..d_in).map(move |j| w1[(i, j)])).collect();
    let v: Vec<f64> = p.layers[1].iter().copied().collect();
    UvParams::new(u, v, n, d_in, 1.0, 1.0).unwrap()
}

#[test]
fn depth_two_mup_net_is_the_uv_model() {
    let n = 512;
    let cfg = net(2, n, Activation::Linear, Parameterization::Interp { s: 1.0 }, 1.0);
    let data = make_single_example(&SingleInput::Norm { norm: 1.0, dim: 3 }, 2.0).unwrap();
    let x = [1.0, 0.0, 0.0];
    let p = init_network(&cfg, 3, 1, &mut seed::rng(21)).unwrap();
    let uv = uv_from_net(&p, n, 3);
    let s0 = observe(&uv, &x, 2.0).unwrap();
    let eta = 0.8 / s0.lam;
    let h = uv.hyper(&x, 2.0, eta).unwrap();

    let mut opts = TrainOptions::new(LearningRate::Absolute(eta), 1);
    opts.measure_every = usize::MAX;
    let mut theta = p;
    let mut s = s0;
    for t in 0..1000 {
        let o = observe(&uv_from_net(&theta, n, 3), &x, 2.0).unwrap();
        let f = forward(&theta, &cfg, &data.x).unwrap()[(0, 0)];
        assert!((f - 2.0 - s.delta_f).abs() <= 1e-8 * s.delta_f.abs().max(2.0), "t {t}");
        assert!((o.lam - s.lam).abs() <= 1e-8 * s.lam, "t {t}");
        let (_, g) = loss_and_grad(&theta, &cfg, &data.x, &data.y).unwrap();
        theta = theta.axpy(-eta, &g);
        s = step_function_space(s, &h);
    }
    // the trainer's own loop takes the same steps
    let (log, _) = train(&init_network(&cfg, 3, 1, &mut seed::rng(21)).unwrap(), &cfg, &data, &opts, &mut seed::rng(0)).unwrap();
    let s1 = step_function_space(s0, &h);
    assert!((log.rows[1].loss - 0.5 * s1.delta_f * s1.delta_f).abs() <= 1e-10);
}

#[test]
fn mup_residual_at_init_matches_uv_moments() {
    let (n, trials, y) = (64usize, 10_000u64, 2.0);
    let cfg = net(2, n, Activation::Linear, Parameterization::Interp { s: 1.0 }, 1.0);
    let data = make_single_example(&SingleInput::Norm { norm: 1.0, dim: 3 }, y).unwrap();
    let r: Vec<f64> = (0..trials)
        .map(|s| {
            let p = init_network(&cfg, 3, 1, &mut seed::rng(seed::derive_seed(5, s))).unwrap();
            forward(&p, &cfg, &data.x).unwrap()[(0, 0)] - y
        })
        .collect();
    let m = r.iter().sum::<f64>() / trials as f64;
    let var = r.iter().map(|v| (v - m).powi(2)).sum::<f64>() / trials as f64;
    let m4 = r.iter().map(|v| (v - m).powi(4)).sum::<f64>() / trials as f64;
    let want_var = 1.0 / n as f64;
    assert!((m + y).abs() <= 3.0 * (want_var / trials as f64).sqrt(), "mean {m}");
    assert!((var - want_var).abs() <= 3.0 * ((m4 - var * var) / trials as f64).sqrt(), "var {var}");
}

#[test]
fn small_sigma_gives_near_zero_output() {
    let cfg = net(3, 16, Activation::Relu, Parameterization::Sp, 1e-12);
    let p = init_network(&cfg, 4, 2, &mut seed::rng(3)).unwrap();
    let x = DMatrix::from_element(2, 4, 1.0);
    assert!(forward(&p, &cfg, &x).unwrap().abs().max() < 1e-5);
}

#[test]
fn training_is_deterministic() {
    let (cfg, p, d) = small_problem(41, 3, Activation::Relu, 8);
    let opts = TrainOptions::new(LearningRate::Constant(1.5), 30);
    let a = train(&p, &cfg, &d, &opts, &mut seed::rng(3)).unwrap();
    let b = train(&p, &cfg, &d, &opts, &mut seed::rng(3)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn weight_norm_bounds_uv_trace() {
    for s in 0..20u64 {
        let n = 32;
        let cfg = net(2, n, Activation::Linear, Parameterization::Interp { s: 1.0 }, 1.0);
        let p = init_network(&cfg, 3, 1, &mut seed::rng(s)).unwrap();
        let uv = uv_from_net(&p, n, 3);
        let lam = observe(&uv, &[0.6, 0.8, 0.0], 1.0).unwrap().lam;
        let (total, _) = weight_norms(&p);
        assert!(lam <= total * total * (1.0 + 1e-12));
    }
}

#[test]
fn random_dataset_moments() {
    let d = make_random(1000, 50, 50, &mut seed::rng(13)).unwrap();
    let vals: Vec<f64> = d.x.iter().chain(d.y.iter()).copied().collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() <= 3.0 / n.sqrt());
    assert!((var - 1.0).abs() <= 3.0 * (2.0 / n).sqrt());
    let cross = d.x.transpose() * &d.y / 1000.0;
    assert!(cross.abs().max() <= 5.0 / 1000f64.sqrt());
    assert_eq!(d, make_random(1000, 50, 50, &mut seed::rng(13)).unwrap());
}

#[test]
fn linear_teacher_targets_have_bounded_rank() {
    let teacher = net(3, 2, Activation::Linear, Parameterization::Sp, 1.0);
    let d = make_teacher_student(&teacher, 40, 6, 5, &mut seed::rng(1), 77).unwrap();
    let s = singular_values(&d.y);
    assert!(s[2] <= 1e-10 * s[0], "{s:?}");

    let zero = net(2, 4, Activation::Relu, Parameterization::Sp, 0.0);
    let d0 = make_teacher_student(&zero, 10, 3, 1, &mut seed::rng(1), 5).unwrap();
    assert!(d0.y.iter().all(|v| *v == 0.0));

    let student_cfg = net(2, 8, Activation::Relu, Parameterization::Sp, 1.0);
    let d = make_teacher_student(&student_cfg, 10, 3, 1, &mut seed::rng(2), 99).unwrap();
    let student = init_network(&student_cfg, 3, 1, &mut seed::rng(99)).unwrap();
    assert_eq!(loss(&student, &student_cfg, &d.x, &d.y).unwrap(), 0.0);
}

#[test]
fn power_law_spectrum() {
    for (bx, by) in [(1.0, 1.0), (1.0, 0.0), (0.0, 1.0), (0.0, 0.0), (0.7, 2.0)] {
        let spec = PowerLawSpec {
            a_x: 1.3,
            b_x: bx,
            a_y: 0.8,
            b_y: by,
        };
        let d = make_power_law(40, 12, 6, &spec, &mut seed::rng(8)).unwrap();
        let raw = make_random(40, 12, 6, &mut seed::rng(8)).unwrap();
        for (got, base, a, b) in [(&d.x, &raw.x, 1.3, bx), (&d.y, &raw.y, 0.8, by)] {
            let sg = singular_values(got);
            let sb = singular_values(base);
            for k in 0..sb.len() {
                let want = a * sb[k] * ((k + 1) as f64).powf(-b);
                assert!((sg[k] - want).abs() <= 1e-8 * want, "k {k}: {} vs {want}", sg[k]);
            }
        }
    }
    let bad = PowerLawSpec {
        a_x: 0.0,
        b_x: 1.0,
        a_y: 1.0,
        b_y: 1.0,
    };
    assert!(make_power_law(4, 2, 1, &bad, &mut seed::rng(0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn standardize_is_idempotent(seed_ in any::<u64>(), p in 2usize..30, d in 1usize..6) {
        let data = make_random(p, d, 1, &mut seed::rng(seed_)).unwrap();
        let once = standardize(&data).data;
        let twice = standardize(&once).data;
        prop_assert!((&once.x - &twice.x).abs().max() <= 1e-12);
    }

    #[test]
    fn generators_are_seed_deterministic(seed_ in any::<u64>()) {
        let spec = PowerLawSpec { a_x: 1.0, b_x: 1.0, a_y: 1.0, b_y: 1.0 };
        let a = make_power_law(8, 4, 2, &spec, &mut seed::rng(seed_)).unwrap();
        let b = make_power_law(8, 4, 2, &spec, &mut seed::rng(seed_)).unwrap();
        prop_assert_eq!(a, b);
    }
}
