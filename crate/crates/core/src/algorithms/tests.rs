use super::*;
use crate::compressors::Compressor;
use crate::objective::{solve_reference, ClientDataset, DataPoint, LossKind, SparseVector};
use crate::shuffling::SamplingPolicy;
use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn logistic(seed: u64, m: usize, n: usize, d: usize, lambda: f64) -> FiniteSumProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clients = (0..m)
        .map(|id| ClientDataset {
            client_id: id,
            points: (0..n)
                .map(|_| {
                    let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let y = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    DataPoint::new(SparseVector::from_dense(&a), y).unwrap()
                })
                .collect(),
        })
        .collect();
    FiniteSumProblem::new(clients, d, lambda, LossKind::Logistic).unwrap()
}

fn quadratic(centers: Vec<Vec<Vec<f64>>>) -> FiniteSumProblem {
    let d = centers[0][0].len();
    let clients = centers
        .into_iter()
        .enumerate()
        .map(|(id, cs)| ClientDataset {
            client_id: id,
            points: cs
                .into_iter()
                .map(|c| DataPoint::new(SparseVector::from_dense(&c), 1.0).unwrap())
                .collect(),
        })
        .collect();
    FiniteSumProblem::new(clients, d, 0.0, LossKind::Quadratic).unwrap()
}

fn trajectory(problem: &FiniteSumProblem, c: &Compressor, spec: MethodSpec, seed: u64, rounds: usize) -> Vec<Vec<f64>> {
    let mut sim = Simulation::new(problem, c, spec, seed).unwrap();
    (0..rounds)
        .map(|_| {
            sim.round().unwrap();
            sim.state().x.clone()
        })
        .collect()
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max)
}

#[test]
fn single_worker_identity_is_rr_sgd() {
    let p = logistic(1, 1, 5, 4, 0.1);
    let c = Compressor::identity(4);
    let gamma = 0.3;
    let mut sim = Simulation::new(&p, &c, MethodSpec::new(Method::Qrr, gamma), 7).unwrap();
    let x0 = vec![0.2, -0.1, 0.4, 0.0];
    sim.state_mut().x = x0.clone();
    sim.round().unwrap();
    let i = sim.state().last_plan().unwrap().schedules[0].batch(0)[0];
    let g = p.grad_summand(0, i, &x0).unwrap();
    for j in 0..4 {
        assert_eq!(sim.state().x[j], x0[j] - gamma * g[j]);
    }
}

#[test]
fn quadratic_two_step_closed_form() {
    let centers = vec![
        vec![vec![1.0, 0.0], vec![0.0, 2.0]],
        vec![vec![-1.0, 1.0], vec![3.0, -2.0]],
    ];
    let p = quadratic(centers.clone());
    let c = Compressor::identity(2);
    let gamma = 0.25;
    let mut sim = Simulation::new(&p, &c, MethodSpec::new(Method::Qrr, gamma), 3).unwrap();
    sim.run_epoch().unwrap();
    let plan = sim.state().last_plan().unwrap().clone();
    // x ← (1 − γ) x + γ · mean_m c_{m, π_m^i}
    let mut x = [0.0, 0.0];
    for i in 0..2 {
        for (j, xj) in x.iter_mut().enumerate() {
            let mean_c = (centers[0][plan.schedules[0].batch(i)[0]][j] + centers[1][plan.schedules[1].batch(i)[0]][j]) / 2.0;
            *xj = (1.0 - gamma) * *xj + gamma * mean_c;
        }
    }
    for j in 0..2 {
        assert_relative_eq!(sim.state().x[j], x[j], epsilon = 1e-15);
    }
}

#[test]
fn heterogeneity_moves_iterate_at_optimum() {
    let p = logistic(2, 3, 4, 3, 0.2);
    let x_star = solve_reference(&p, 1e-13).unwrap();
    let c = Compressor::identity(3);
    let mut sim = Simulation::with_start(&p, &c, MethodSpec::new(Method::Qrr, 0.1), 1, x_star.clone()).unwrap();
    sim.round().unwrap();
    let moved: f64 = sim.state().x.iter().zip(&x_star).map(|(a, b)| (a - b).abs()).sum();
    assert!(moved > 1e-6);
}

#[test]
fn reduction_lattice_bit_identical() {
    let p = logistic(4, 4, 8, 10, 0.05);
    let id = Compressor::identity(10);
    let rk = Compressor::rand_k(10, 2).unwrap();
    let rounds = 50;
    let g = 0.05;

    let qrr_id = trajectory(&p, &id, MethodSpec::new(Method::Qrr, g), 11, rounds);
    let rr = trajectory(&p, &id, MethodSpec::new(Method::Rr, g), 11, rounds);
    assert_eq!(max_abs_diff(&qrr_id, &rr), 0.0);

    let qrr = trajectory(&p, &rk, MethodSpec::new(Method::Qrr, g), 11, rounds);
    let diana_rr = trajectory(&p, &rk, MethodSpec::new(Method::DianaRr, g).with_alpha(0.0), 11, rounds);
    assert_eq!(max_abs_diff(&qrr, &diana_rr), 0.0);

    let qn = trajectory(&p, &rk, MethodSpec::new(Method::QNastya, g).with_eta(0.3), 11, 20);
    let dn = trajectory(&p, &rk, MethodSpec::new(Method::DianaNastya, g).with_eta(0.3).with_alpha(0.0), 11, 20);
    assert_eq!(max_abs_diff(&qn, &dn), 0.0);

    let qn_id = trajectory(&p, &id, MethodSpec::new(Method::QNastya, g).with_eta(0.3), 11, 20);
    let nastya = trajectory(&p, &id, MethodSpec::new(Method::Nastya, g).with_eta(0.3), 11, 20);
    assert_eq!(max_abs_diff(&qn_id, &nastya), 0.0);

    let qsgd = trajectory(&p, &rk, MethodSpec::new(Method::Qsgd, g), 11, rounds);
    let diana = trajectory(&p, &rk, MethodSpec::new(Method::Diana, g).with_alpha(0.0), 11, rounds);
    assert_eq!(max_abs_diff(&qsgd, &diana), 0.0);
}

#[test]
fn reductions_up_to_rounding() {
    let p = logistic(5, 4, 8, 10, 0.05);
    let id = Compressor::identity(10);
    let g = 0.05;
    let n = 8.0;
    // Identity compressor: the DIANA correction cancels.
    let dr = trajectory(&p, &id, MethodSpec::new(Method::DianaRr, g).with_alpha(1.0), 2, 50);
    let rr = trajectory(&p, &id, MethodSpec::new(Method::Rr, g), 2, 50);
    assert!(max_abs_diff(&dr, &rr) <= 1e-12);
    let dn = trajectory(&p, &id, MethodSpec::new(Method::DianaNastya, g).with_eta(0.2).with_alpha(1.0), 2, 20);
    let qn = trajectory(&p, &id, MethodSpec::new(Method::QNastya, g).with_eta(0.2), 2, 20);
    assert!(max_abs_diff(&dn, &qn) <= 1e-12);
    // η = γn turns Q-NASTYA into model averaging.
    let fed = trajectory(&p, &id, MethodSpec::new(Method::FedRr, g), 2, 20);
    let qn = trajectory(&p, &id, MethodSpec::new(Method::QNastya, g).with_eta(g * n), 2, 20);
    assert!(max_abs_diff(&fed, &qn) <= 1e-12);
}

#[test]
fn local_epoch_edge_cases() {
    let p = logistic(6, 2, 5, 3, 0.1);
    let sched = crate::shuffling::BatchSchedule::new(vec![3, 1, 4, 0, 2], 1);
    let x0 = vec![0.5, -0.5, 1.0];
    assert_eq!(run_local_epoch_rr(&p, 0, &sched, &x0, 0.0), x0);
    let one = crate::shuffling::BatchSchedule::new(vec![2], 1);
    let x1 = run_local_epoch_rr(&p, 1, &one, &x0, 0.4);
    let g = p.grad_summand(1, 2, &x0).unwrap();
    for j in 0..3 {
        assert_eq!(x1[j], x0[j] - 0.4 * g[j]);
    }
}

#[test]
fn local_epoch_affine_composition() {
    // x ← (1 − γ) x + γ c_j composes to (1 − γ)^n x0 + γ Σ_k (1 − γ)^{n−1−k} c_{π_k}.
    let cs = vec![vec![vec![1.0, 2.0], vec![-3.0, 0.5], vec![0.0, -1.0], vec![2.5, 2.5]]];
    let p = quadratic(cs.clone());
    let order = vec![2, 0, 3, 1];
    let sched = crate::shuffling::BatchSchedule::new(order.clone(), 1);
    let x0 = vec![0.7, -0.3];
    let gamma = 0.15;
    let got = run_local_epoch_rr(&p, 0, &sched, &x0, gamma);
    for j in 0..2 {
        let mut want = (1.0 - gamma).powi(4) * x0[j];
        for (k, &i) in order.iter().enumerate() {
            want += gamma * (1.0 - gamma).powi(3 - k as i32) * cs[0][i][j];
        }
        assert_relative_eq!(got[j], want, epsilon = 1e-12);
    }
}

#[test]
fn small_gamma_pseudo_gradient_is_client_gradient() {
    let p = logistic(7, 3, 6, 4, 0.1);
    let gamma = 1e-12;
    let sched = crate::shuffling::BatchSchedule::new((0..6).collect(), 1);
    for x in [vec![0.0; 4], vec![0.3, -0.2, 0.1, 0.5]] {
        for m in 0..3 {
            let xn = run_local_epoch_rr(&p, m, &sched, &x, gamma);
            let g: Vec<f64> = x.iter().zip(&xn).map(|(a, b)| (a - b) / (gamma * 6.0)).collect();
            let truth = p.grad_client(m, &x).unwrap();
            let err: f64 = g.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale: f64 = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(err <= 1e-4 * scale, "{err} vs {scale}");
        }
    }
}

#[test]
fn qsgd_full_batch_identity_is_gradient_descent() {
    // n = 1 per client, so every with-replacement draw picks the only sample.
    let p = logistic(8, 3, 1, 4, 0.1);
    let c = Compressor::identity(4);
    let mut sim = Simulation::new(&p, &c, MethodSpec::new(Method::Qsgd, 0.5), 1).unwrap();
    let x0 = vec![0.1, 0.2, -0.3, 0.4];
    sim.state_mut().x = x0.clone();
    sim.round().unwrap();
    let g = p.grad_full(&x0).unwrap();
    for j in 0..4 {
        assert_relative_eq!(sim.state().x[j], x0[j] - 0.5 * g[j], epsilon = 1e-15);
    }
}

#[test]
fn single_worker_sgd_by_hand() {
    // One sample a = (1, 0), y = 1, λ = 0: from x = 0 the gradient is (−½, 0).
    let pt = DataPoint::new(SparseVector::from_dense(&[1.0, 0.0]), 1.0).unwrap();
    let p = FiniteSumProblem::new(vec![ClientDataset { client_id: 0, points: vec![pt] }], 2, 0.0, LossKind::Logistic)
        .unwrap();
    let c = Compressor::identity(2);
    let mut sim = Simulation::new(&p, &c, MethodSpec::new(Method::Qsgd, 0.2), 0).unwrap();
    sim.round().unwrap();
    assert_eq!(sim.state().x, vec![0.1, 0.0]);
}

#[test]
fn communication_accounting() {
    let p = logistic(9, 4, 8, 10, 0.05);
    let rk = Compressor::rand_k(10, 2).unwrap();
    let bits = rk.bits_sent();
    let mut sim = Simulation::new(&p, &rk, MethodSpec::new(Method::Qrr, 0.01), 0).unwrap();
    sim.run_epoch().unwrap();
    assert_eq!(sim.state().bits_up, 8 * 4 * bits);
    assert_eq!(sim.state().rounds, 8);
    let mut sim = Simulation::new(&p, &rk, MethodSpec::new(Method::QNastya, 0.01).with_eta(0.1), 0).unwrap();
    sim.run_epoch().unwrap();
    assert_eq!(sim.state().bits_up, 4 * bits);
    assert_eq!(sim.state().rounds, 1);
    assert_eq!(sim.state().bits_down, 4 * 640);
}

#[test]
fn server_never_sees_client_data() {
    let src = include_str!("server.rs");
    for forbidden in ["FiniteSumProblem", "objective", "DataPoint", "ClientDataset", "grad"] {
        assert!(!src.contains(forbidden), "server code mentions {forbidden}");
    }
}

#[test]
fn runs_are_deterministic() {
    let p = logistic(10, 3, 6, 5, 0.05);
    let rk = Compressor::rand_k(5, 2).unwrap();
    for spec in [
        MethodSpec::new(Method::DianaRr, 0.05).with_alpha(0.3),
        MethodSpec::new(Method::DianaNastya, 0.05).with_eta(0.2).with_alpha(0.3),
        MethodSpec::new(Method::LocalSgdQ, 0.05).with_eta(0.2),
    ] {
        let a = trajectory(&p, &rk, spec.clone(), 99, 12);
        let b = trajectory(&p, &rk, spec.clone(), 99, 12);
        assert_eq!(a, b);
        let c = trajectory(&p, &rk, spec, 100, 12);
        assert_ne!(a, c);
    }
}

#[test]
fn divergence_is_reported() {
    let p = logistic(11, 2, 4, 3, 0.01);
    let c = Compressor::identity(3);
    let mut sim = Simulation::new(&p, &c, MethodSpec::new(Method::Rr, 1e14), 0).unwrap();
    sim.state_mut().x = vec![1.0, 1.0, 1.0];
    let mut err = None;
    for _ in 0..1000 {
        if let Err(e) = sim.round() {
            err = Some(e);
            break;
        }
    }
    assert!(matches!(err, Some(AlgorithmError::Diverged { round }) if round >= 1));
}

#[test]
fn configuration_errors() {
    let p = logistic(12, 2, 4, 3, 0.01);
    let c = Compressor::identity(3);
    assert!(Simulation::new(&p, &c, MethodSpec::new(Method::QNastya, 0.1), 0).is_err());
    assert!(Simulation::new(&p, &c, MethodSpec::new(Method::Qrr, 0.1).with_eta(1.0), 0).is_err());
    assert!(Simulation::new(&p, &c, MethodSpec::new(Method::DianaRr, 0.1), 0).is_err());
    assert!(Simulation::new(
        &p,
        &c,
        MethodSpec::new(Method::Qrr, 0.1).with_policy(SamplingPolicy::WithReplacement),
        0
    )
    .is_err());
    assert!(Simulation::new(&p, &Compressor::identity(4), MethodSpec::new(Method::Qrr, 0.1), 0).is_err());
    // Unequal local dataset sizes.
    let mut clients = p.clients().to_vec();
    clients[1].points.pop();
    let uneven = FiniteSumProblem::new(clients, 3, 0.01, LossKind::Logistic).unwrap();
    assert!(matches!(
        Simulation::new(&uneven, &c, MethodSpec::new(Method::Qrr, 0.1), 0),
        Err(AlgorithmError::Config(_))
    ));
    assert_eq!("fedpaq".parse::<Method>().unwrap(), Method::LocalSgdQ);
    assert!("sgd".parse::<Method>().is_err());
}

#[test]
fn missing_plan_is_a_state_error() {
    let p = logistic(13, 2, 4, 3, 0.01);
    let c = Compressor::identity(3);
    let ctx = Context::new(&p, &c, 0, SamplingPolicy::ShuffleEveryEpoch, BatchRule::Size(1)).unwrap();
    let mut st = AlgorithmState::new(vec![0.0; 3], ShiftLayout::None, &p).unwrap();
    assert!(matches!(step_qrr(&mut st, &ctx, 0.1), Err(AlgorithmError::State(_))));
    let mut st = AlgorithmState::new(vec![0.0; 3], ShiftLayout::None, &p).unwrap();
    begin_epoch(&mut st, &ctx);
    assert!(matches!(step_diana_rr(&mut st, &ctx, 0.1, 0.5), Err(AlgorithmError::State(_))));
}

#[test]
fn diana_rr_updates_only_visited_shifts() {
    let p = logistic(14, 2, 4, 3, 0.1);
    let c = Compressor::rand_k(3, 1).unwrap();
    let mut sim = Simulation::new(&p, &c, MethodSpec::new(Method::DianaRr, 0.1).with_alpha(0.5), 4).unwrap();
    sim.round().unwrap();
    let plan = sim.state().last_plan().unwrap().clone();
    if let ShiftStore::PerSample(h) = &sim.state().shifts {
        for (m, hm) in h.iter().enumerate() {
            let visited = plan.schedules[m].batch(0)[0];
            for (i, hi) in hm.iter().enumerate() {
                let nonzero = hi.iter().any(|v| *v != 0.0);
                if i != visited {
                    assert!(!nonzero);
                }
            }
        }
        assert_eq!(sim.state().server_shifts, sim.state().shifts);
    } else {
        panic!("wrong layout");
    }
}

#[test]
fn diana_rr_shifts_reach_optimal_gradients() {
    // Samples are identical within a client, so the shuffled iteration has no
    // within-epoch drift and the method converges to x* exactly.
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let d = 5;
    let clients = (0..2)
        .map(|id| {
            let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = if id == 0 { 1.0 } else { -1.0 };
            let pt = DataPoint::new(SparseVector::from_dense(&a), y).unwrap();
            ClientDataset {
                client_id: id,
                points: vec![pt; 4],
            }
        })
        .collect();
    let p = FiniteSumProblem::new(clients, d, 0.5, LossKind::Logistic).unwrap();
    let x_star = solve_reference(&p, 1e-14).unwrap();
    let c = Compressor::rand_k(d, 2).unwrap();
    let alpha = 1.0 / (1.0 + c.omega());
    let mut sim = Simulation::new(&p, &c, MethodSpec::new(Method::DianaRr, 0.1).with_alpha(alpha), 1).unwrap();
    for _ in 0..400 {
        sim.run_epoch().unwrap();
    }
    if let ShiftStore::PerSample(h) = &sim.state().shifts {
        for (m, hm) in h.iter().enumerate() {
            for (i, hi) in hm.iter().enumerate() {
                let g = p.grad_summand(m, i, &x_star).unwrap();
                let err = hi.iter().zip(&g).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(err <= 1e-6, "client {m} sample {i}: {err}");
            }
        }
    }
}

#[test]
fn minibatch_steps_per_epoch() {
    let p = logistic(16, 2, 10, 3, 0.1);
    let c = Compressor::identity(3);
    let sim = Simulation::new(&p, &c, MethodSpec::new(Method::Qrr, 0.1).with_batch(BatchRule::Fraction(0.3)), 0).unwrap();
    assert_eq!(sim.steps_per_epoch(), 3);
    assert_eq!(sim.rounds_per_epoch(), 3);
}
