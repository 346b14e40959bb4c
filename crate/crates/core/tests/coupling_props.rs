use fmsteer::coupling::{cost_matrix, make_pairing, sinkhorn, CouplingConfig, CouplingMode};
use fmsteer::dataio::{gen_scenario, Scenario, ScenarioSpec};
use fmsteer::numerics::{sample_standard_normal, Matrix, RngState};
use proptest::prelude::*;

fn random_cost(b: usize, seed: u64) -> Matrix {
    let mut rng = RngState::new(seed);
    let x = sample_standard_normal(&mut rng, b, 3);
    let y = sample_standard_normal(&mut rng, b, 3);
    cost_matrix(&x, &y).unwrap()
}

fn mean(c: &Matrix) -> f64 {
    c.data().iter().sum::<f64>() / c.data().len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn converged_plans_have_uniform_marginals(b in 2usize..12, seed in any::<u64>()) {
        let c = random_cost(b, seed);
        let tol = 1e-6;
        let plan = sinkhorn(&c, 0.1 * mean(&c), 2000, tol).unwrap();
        // Small epsilon can need more sweeps than the budget; the flag must say so.
        prop_assert_eq!(plan.converged, plan.marginal_error < tol);
        prop_assume!(plan.converged);
        let target = 1.0 / b as f64;
        for i in 0..b {
            let row: f64 = plan.plan.row(i).iter().sum();
            let col: f64 = plan.plan.column(i).iter().sum();
            prop_assert!((row - target).abs() < tol);
            prop_assert!((col - target).abs() < tol);
        }
    }

    #[test]
    fn scaling_cost_and_epsilon_together_keeps_plan(b in 2usize..10, seed in any::<u64>(), s in 0.01f64..100.0) {
        let c = random_cost(b, seed);
        let eps = 0.2 * mean(&c);
        let p1 = sinkhorn(&c, eps, 500, 1e-12).unwrap();
        let mut cs = c.clone();
        for v in cs.data_mut() {
            *v *= s;
        }
        let p2 = sinkhorn(&cs, eps * s, 500, 1e-12).unwrap();
        for (a, b) in p1.plan.data().iter().zip(p2.plan.data()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}

/// Expected transport cost `⟨P, C⟩` is monotone in epsilon. Row-argmax cost
/// is not: near-uniform plans can send several rows to one cheap column.
#[test]
fn sharper_epsilon_never_costs_more() {
    for seed in 0..20 {
        let c = random_cost(8, seed);
        let m = mean(&c);
        let costs: Vec<f64> = [1.0, 0.1, 0.01]
            .iter()
            .map(|f| {
                let p = sinkhorn(&c, f * m, 5000, 1e-9).unwrap();
                p.plan.data().iter().zip(c.data()).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        for w in costs.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "seed {seed}: {costs:?}");
        }
    }
}

#[test]
fn ot_pairing_shortens_conditional_velocities() {
    let spec = ScenarioSpec::new(Scenario::low_velocity(), 2, 2000, 8);
    let (s, t) = gen_scenario(&spec).unwrap();
    let mut rng = RngState::new(21);
    let config = CouplingConfig::default();
    let (mut ind, mut ot) = (0.0, 0.0);
    let batches = 60;
    for _ in 0..batches {
        let si: Vec<usize> = (0..32).map(|_| rng.index(s.len())).collect();
        let ti: Vec<usize> = (0..32).map(|_| rng.index(t.len())).collect();
        let b0 = s.data().select_rows(&si);
        let b1 = t.data().select_rows(&ti);
        for (mode, acc) in [
            (CouplingMode::Independent, &mut ind),
            (CouplingMode::OtSampled, &mut ot),
        ] {
            let p = make_pairing(&b0, &b1, mode, &config, &mut rng).unwrap();
            *acc += p
                .pairs
                .iter()
                .map(|&(i, j)| {
                    b0.row(i)
                        .iter()
                        .zip(b1.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .sum::<f64>();
        }
    }
    assert!(ot <= ind, "ot {ot} vs independent {ind}");
}
