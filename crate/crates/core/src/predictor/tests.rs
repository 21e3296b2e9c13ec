use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::benchmarks::{gen_portfolio, Benchmark, Objective, PortfolioSource, PortfolioVariant, ProblemInstance};
use crate::error::Error;
use crate::polytope::Polytope;
use crate::solver::{project, SolverSettings};

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn small_net(seed: u64, obs: usize, hidden: &[usize], out: usize) -> MlpParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MlpParams::init(obs, hidden, out, 0.01, 1.0, 0.1, &mut rng).unwrap()
}

fn quad_bench(poly: Polytope, lambda: f64) -> Benchmark {
    Benchmark {
        name: "toy".into(),
        polytope: poly,
        objective: Objective::QuadraticPortfolio { lambda },
        dataset: vec![],
    }
}

fn inst(o: &[f64], w: &[f64]) -> ProblemInstance {
    let n = w.len();
    ProblemInstance { id: 0, o: v(o), w: v(w), q: Some(DMatrix::identity(n, n)) }
}

#[test]
fn zero_network_outputs_shift() {
    let p = MlpParams::zeros(3, &[4, 4], 2, 0.01, 1.0, 0.25).unwrap();
    assert_eq!(p.predict(&v(&[1.0, -2.0, 3.0])).unwrap(), v(&[0.25, 0.25]));
    let mut q = small_net(1, 3, &[4], 2);
    q.x_scale = 0.0;
    q.x_shift = -0.5;
    assert_eq!(q.predict(&v(&[9.0, 1.0, -4.0])).unwrap(), v(&[-0.5, -0.5]));
}

#[test]
fn toy_network_by_hand() {
    let l1 = Layer { weight: DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.5, 2.0]), bias: v(&[0.0, -1.0]) };
    let l2 = Layer { weight: DMatrix::from_row_slice(2, 2, &[2.0, 1.0, -1.0, 3.0]), bias: v(&[0.5, 0.0]) };
    let net = MlpParams::from_layers(vec![l1, l2], 0.1, 2.0, 1.0).unwrap();
    // o = (1, 2): z1 = (1 − 2, 0.5 + 4 − 1) = (−1, 3.5); a1 = (−0.1, 3.5)
    // y = (−0.2 + 3.5 + 0.5, 0.1 + 10.5) = (3.8, 10.6); ŵ = 2y + 1
    let w = net.predict(&v(&[1.0, 2.0])).unwrap();
    assert!((w[0] - 8.6).abs() < 1e-12 && (w[1] - 22.2).abs() < 1e-12, "{w}");
}

#[test]
fn backward_of_zero_is_zero() {
    let net = small_net(2, 3, &[5, 4], 2);
    let (_, cache) = net.forward(&v(&[0.3, -0.2, 0.9])).unwrap();
    let g = net.backward(&cache, &DVector::zeros(2)).unwrap();
    assert_eq!(g.norm(), 0.0);
}

#[test]
fn backward_matches_finite_differences() {
    let mut net = small_net(3, 3, &[5, 4], 2);
    net.x_scale = 0.7;
    let o = v(&[0.3, -0.2, 0.9]);
    let delta = v(&[0.6, -1.1]);
    let (_, cache) = net.forward(&o).unwrap();
    let g = net.backward(&cache, &delta).unwrap();
    let analytic: Vec<f64> = g.values().copied().collect();
    let n = net.n_params();
    let eps = 1e-6;
    for k in 0..n {
        let loss_at = |shift: f64| {
            let mut p = net.clone();
            *p.values_mut().nth(k).unwrap() += shift;
            delta.dot(&p.predict(&o).unwrap())
        };
        let fd = (loss_at(eps) - loss_at(-eps)) / (2.0 * eps);
        let scale = fd.abs().max(analytic[k].abs());
        if scale > 1e-8 {
            assert!((fd - analytic[k]).abs() <= 1e-4 * scale, "param {k}: {fd} vs {}", analytic[k]);
        } else {
            assert!((fd - analytic[k]).abs() <= 1e-9);
        }
    }
}

#[test]
fn backward_is_linear_in_delta() {
    let net = small_net(4, 3, &[6, 5], 3);
    let (_, cache) = net.forward(&v(&[1.0, 0.5, -0.25])).unwrap();
    let u = v(&[1.0, -2.0, 0.5]);
    let w = v(&[0.3, 0.1, -0.7]);
    let (a, b) = (1.5, -0.75);
    let lhs = net.backward(&cache, &(&u * a + &w * b)).unwrap();
    let mut rhs = net.backward(&cache, &u).unwrap();
    rhs.scale(a);
    rhs.axpy(b, &net.backward(&cache, &w).unwrap());
    for (x, y) in lhs.values().zip(rhs.values()) {
        assert!((x - y).abs() <= 1e-14 * (1.0 + x.abs()));
    }
}

#[test]
fn stale_cache_is_rejected() {
    let mut net = small_net(5, 2, &[3], 2);
    let (_, cache) = net.forward(&v(&[0.1, 0.2])).unwrap();
    *net.values_mut().next().unwrap() += 1.0;
    assert!(matches!(net.backward(&cache, &v(&[1.0, 0.0])), Err(Error::StaleCache { .. })));
    let (_, fresh) = net.forward(&v(&[0.1, 0.2])).unwrap();
    assert!(net.backward(&fresh, &v(&[1.0, 0.0])).is_ok());
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut net = small_net(6, 2, &[3], 1);
    let before: Vec<f64> = net.values().copied().collect();
    let mut adam = AdamState::new(&net, 1e-3);
    let mut g = MlpGradient::zeros_like(&net);
    for (k, x) in g.values_mut().enumerate() {
        *x = if k % 2 == 0 { 0.5 } else { -2.0 };
    }
    adam.adam_step(&mut net, &g).unwrap();
    for ((a, b), gk) in net.values().zip(&before).zip(g.values()) {
        assert!((a - b - 1e-3 * gk.signum()).abs() < 1e-10);
    }
    assert_eq!(adam.step, 1);
}

#[test]
fn adam_zero_gradient_keeps_parameters() {
    let mut net = small_net(7, 2, &[3], 1);
    let before = net.clone();
    let mut adam = AdamState::new(&net, 1e-3);
    adam.adam_step(&mut net, &MlpGradient::zeros_like(&before)).unwrap();
    assert_eq!(net, before);
    assert_eq!(adam.step, 1);
}

#[test]
fn adam_is_deterministic() {
    let net = small_net(8, 2, &[3], 2);
    let adam = AdamState::new(&net, 5e-5);
    let mut g = MlpGradient::zeros_like(&net);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    g.values_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
    let run = || {
        let (mut p, mut a) = (net.clone(), adam.clone());
        for _ in 0..3 {
            a.adam_step(&mut p, &g).unwrap();
        }
        (p, a)
    };
    assert_eq!(run(), run());
}

#[test]
fn collinear_smoothed_step_is_a_no_op() {
    let bench = quad_bench(Polytope::simplex(2).unwrap(), 0.0);
    let mut net = small_net(9, 2, &[4], 2);
    let o = v(&[0.4, -0.3]);
    let w_hat = net.predict(&o).unwrap();
    let cert = project(&bench.polytope, &w_hat, &SolverSettings::default()).unwrap();
    assert!(cert.internal_gradient.norm() > 1e-3);
    let i = ProblemInstance { id: 0, o, w: cert.internal_gradient * 0.7, q: Some(DMatrix::identity(2, 2)) };
    let cfg = MethodConfig::new(Method::SmoothedQp);
    let before = net.clone();
    let mut adam = AdamState::new(&net, 1e-3);
    let log = train_step(&mut net, &mut adam, &i, 0.0, &bench, &cfg, 0);
    assert!(!log.skipped);
    assert!(log.grad_norm <= 1e-12, "{}", log.grad_norm);
    for (a, b) in net.values().zip(before.values()) {
        assert!((a - b).abs() <= 1e-9);
    }
}

#[test]
fn interior_projection_passes_gradient_through() {
    let bench = quad_bench(Polytope::box_bounds(&[-5.0; 3], &[5.0; 3]).unwrap(), 0.3);
    let i = inst(&[0.0], &[0.2, -0.4, 1.0]);
    let w_hat = v(&[0.5, 1.0, -2.0]);
    let f_x = bench.objective_eval(&w_hat, &i).unwrap().1;
    for method in [Method::SmoothedQp, Method::ExactQp] {
        let d = prediction_direction(&MethodConfig::new(method), &bench, &w_hat, &i, 0).unwrap();
        assert!((d.delta_w - &f_x).amax() <= 1e-12);
    }
}

/// Recomputes one smoothed-QP step line by line with independent code.
#[test]
fn smoothed_step_matches_hand_trace() {
    let bench = quad_bench(Polytope::simplex(2).unwrap(), 0.5);
    let mut net = small_net(10, 2, &[3], 2);
    let o = v(&[0.8, -1.3]);
    let p = [0.9, -0.2];
    let i = inst(&[0.8, -1.3], &p);
    let (alpha, lr) = (0.1, 1e-3);

    // forward
    let l = net.layers().to_vec();
    let mut z1 = [0.0; 3];
    let mut a1 = [0.0; 3];
    for r in 0..3 {
        z1[r] = l[0].bias[r] + (0..2).map(|c| l[0].weight[(r, c)] * o[c]).sum::<f64>();
        a1[r] = if z1[r] > 0.0 { z1[r] } else { 0.01 * z1[r] };
    }
    let mut w_hat = [0.0; 2];
    for r in 0..2 {
        w_hat[r] = 0.1 + l[1].bias[r] + (0..3).map(|c| l[1].weight[(r, c)] * a1[c]).sum::<f64>();
    }
    // projection onto {x ≥ 0, x₁ + x₂ = 1}
    let t = ((1.0 + w_hat[0] - w_hat[1]) / 2.0).clamp(0.0, 1.0);
    let x = [t, 1.0 - t];
    let f_x = [p[0] - x[0], p[1] - x[1]];
    let fh = [2.0 * (w_hat[0] - x[0]), 2.0 * (w_hat[1] - x[1])];
    let fh2 = fh[0] * fh[0] + fh[1] * fh[1];
    let dot = f_x[0] * fh[0] + f_x[1] * fh[1];
    let dw: Vec<f64> = (0..2)
        .map(|k| f_x[k] - fh[k] * dot / fh2 + 2.0 * alpha * (x[k] - w_hat[k]))
        .collect();
    // backward
    let mut g_a1 = [0.0; 3];
    for c in 0..3 {
        g_a1[c] = (0..2).map(|r| l[1].weight[(r, c)] * dw[r]).sum::<f64>();
    }
    let g_z1: Vec<f64> = (0..3).map(|r| if z1[r] > 0.0 { g_a1[r] } else { 0.01 * g_a1[r] }).collect();
    let mut expected = l.clone();
    // Adam, first step: θ + η g/(|g| + ε)
    let upd = |theta: &mut f64, g: f64| *theta += lr * g / (g.abs() + 1e-8);
    for r in 0..3 {
        for c in 0..2 {
            upd(&mut expected[0].weight[(r, c)], g_z1[r] * o[c]);
        }
        upd(&mut expected[0].bias[r], g_z1[r]);
    }
    for r in 0..2 {
        for c in 0..3 {
            upd(&mut expected[1].weight[(r, c)], dw[r] * a1[c]);
        }
        upd(&mut expected[1].bias[r], dw[r]);
    }

    let mut cfg = MethodConfig::new(Method::SmoothedQp);
    cfg.smoothing.alpha_reg = alpha;
    let mut adam = AdamState::new(&net, lr);
    let log = train_step(&mut net, &mut adam, &i, 0.0, &bench, &cfg, 0);
    assert!(!log.skipped && log.failed == 0);
    for (got, want) in net.layers().iter().zip(&expected) {
        assert!((&got.weight - &want.weight).amax() <= 1e-12);
        assert!((&got.bias - &want.bias).amax() <= 1e-12);
    }
}

#[test]
fn mse_step_matches_loss_finite_differences() {
    let bench = quad_bench(Polytope::simplex(3).unwrap(), 0.2);
    let net = small_net(11, 2, &[4, 3], 3);
    let i = inst(&[0.5, -0.5], &[0.3, -0.1, 0.6]);
    let (w_hat, cache) = net.forward(&i.o).unwrap();
    let d = prediction_direction(&MethodConfig::new(Method::Mse), &bench, &w_hat, &i, 0).unwrap();
    let g = net.backward(&cache, &d.delta_w).unwrap();
    let analytic: Vec<f64> = g.values().copied().collect();
    let neg_loss = |p: &MlpParams| -(p.predict(&i.o).unwrap() - &i.w).norm_squared();
    let eps = 1e-6;
    for k in 0..net.n_params() {
        let mut hi = net.clone();
        *hi.values_mut().nth(k).unwrap() += eps;
        let mut lo = net.clone();
        *lo.values_mut().nth(k).unwrap() -= eps;
        let fd = (neg_loss(&hi) - neg_loss(&lo)) / (2.0 * eps);
        let scale = fd.abs().max(analytic[k].abs()).max(1e-6);
        assert!((fd - analytic[k]).abs() <= 1e-4 * scale, "param {k}: {fd} vs {}", analytic[k]);
    }
}

#[test]
fn smoothed_directions_do_not_decrease_linear_objective() {
    let bench = gen_portfolio(3, 6, 0.0, 60, PortfolioVariant::Standard, &PortfolioSource::Synthetic).unwrap();
    let net = small_net(12, 16, &[16], 6);
    let s = SolverSettings::default();
    let cfg = MethodConfig::new(Method::SmoothedQp);
    for i in &bench.dataset {
        let w_hat = net.predict(&i.o).unwrap();
        let d = prediction_direction(&cfg, &bench, &w_hat, i, 0).unwrap();
        let base = bench.objective_eval(&d.decision, i).unwrap().0;
        let moved = project(&bench.polytope, &(&w_hat + &d.delta_w * 1e-6), &s).unwrap();
        let after = bench.objective_eval(&moved.x_star, i).unwrap().0;
        assert!(after >= base - 1e-9, "{after} < {base}");
    }
}

#[test]
fn training_is_bitwise_deterministic() {
    let bench = gen_portfolio(1, 4, 0.1, 12, PortfolioVariant::Standard, &PortfolioSource::Synthetic).unwrap();
    let run = |method| {
        let mut net = small_net(13, 16, &[8], 4);
        let mut adam = AdamState::new(&net, 1e-3);
        let mut cfg = MethodConfig::new(method);
        cfg.smoothing.alpha_reg = 0.1;
        let logs: Vec<(f64, f64)> = bench
            .dataset
            .iter()
            .enumerate()
            .map(|(k, i)| {
                let l = train_step(&mut net, &mut adam, i, 0.0, &bench, &cfg, k as u64);
                (l.grad_norm, l.regret)
            })
            .collect();
        (net, adam, logs)
    };
    for m in [Method::SmoothedQp, Method::ExactQp, Method::TrueProblem, Method::Mse] {
        let (a, b) = (run(m), run(m));
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }
}

#[test]
fn failed_instances_are_skipped() {
    let bench = quad_bench(Polytope::simplex(2).unwrap(), 0.5);
    let mut net = small_net(14, 2, &[3], 2);
    let before = net.clone();
    let mut adam = AdamState::new(&net, 1e-3);
    let bad = ProblemInstance { id: 3, o: v(&[0.1, 0.2]), w: v(&[1.0, 1.0]), q: None };
    let log = train_step(&mut net, &mut adam, &bad, 0.0, &bench, &MethodConfig::new(Method::SmoothedQp), 0);
    assert!(log.skipped);
    assert_eq!(log.failed, 1);
    assert_eq!(net, before);
    assert_eq!(adam.step, 0);
}

#[test]
fn checkpoint_roundtrip() {
    let net = small_net(15, 3, &[5], 2);
    let mut adam = AdamState::new(&net, 5e-5);
    let mut moved = net.clone();
    let mut g = MlpGradient::zeros_like(&net);
    g.values_mut().enumerate().for_each(|(k, x)| *x = (k as f64 * 0.37).sin());
    adam.adam_step(&mut moved, &g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    rng.next_u64();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    Checkpoint::new(&moved, &adam, &rng).save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.params, moved);
    assert_eq!(back.adam, adam);
    let mut restored = back.rng.restore();
    assert_eq!(restored.next_u64(), rng.next_u64());
}

#[test]
fn method_names_roundtrip() {
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
        assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
    }
    assert!("spo".parse::<Method>().is_err());
}

#[test]
fn linear_only_methods_reject_quadratic_benchmarks() {
    let bench = gen_portfolio(0, 4, 1.0, 12, PortfolioVariant::Standard, &PortfolioSource::Synthetic).unwrap();
    for m in [Method::SpoPlus, Method::Perturbed, Method::IdentityProjection] {
        assert!(matches!(MethodConfig::new(m).check_compatible(&bench), Err(Error::Incompatible { .. })));
    }
    assert!(MethodConfig::new(Method::SmoothedQp).check_compatible(&bench).is_ok());
}
