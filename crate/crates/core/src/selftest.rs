//! Invariant checks that can run outside the test harness (`cartpole-rl selftest`).

use rand::{Rng, SeedableRng};

use crate::agent::{ddqn_targets, dqn_targets};
use crate::env::{integrate, Action, EnvParams, EnvState};
use crate::nn::{Head, Network, NetworkSpec};
use crate::replay::{PerParams, PrioritizedReplay, SumTree, Transition};
use crate::RunRng;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
    }
}

pub fn run_all(seed: u64) -> Vec<CheckResult> {
    vec![
        physics_step(),
        parameter_counts(),
        gradients(seed),
        sum_tree(seed),
        per_distribution(seed),
        double_dqn_degenerate(seed),
        dueling_identities(seed),
        polyak_contraction(seed),
    ]
}

fn physics_step() -> CheckResult {
    let p = EnvParams::default();
    let next = integrate(&p, &EnvState::default(), Action::Right);
    let temp = p.force_magnitude / (p.cart_mass + p.pole_mass);
    let theta_acc = -temp
        / (p.pole_half_length * (4.0 / 3.0 - p.pole_mass / (p.cart_mass + p.pole_mass)));
    let x_acc = temp - p.pole_mass * p.pole_half_length * theta_acc / (p.cart_mass + p.pole_mass);
    let expected = [0.0, p.time_step * x_acc, 0.0, p.time_step * theta_acc];
    let err = next
        .to_array()
        .iter()
        .zip(expected)
        .map(|(a, b)| if b == 0.0 { a.abs() } else { ((a - b) / b).abs() })
        .fold(0.0, f64::max);
    check("physics single step", err <= 1e-12, format!("max relative error {err:.2e}"))
}

fn parameter_counts() -> CheckResult {
    let small = NetworkSpec::cartpole().param_count();
    let large = NetworkSpec::cartpole_large_dueling().param_count();
    check(
        "parameter counts",
        small == 770 && large == 150_531,
        format!("4-24-24-2: {small}, 512-256-64 dueling: {large}"),
    )
}

/// Loss `½‖Q(x) − y‖²` evaluated by forward passes only.
fn half_squared_error(net: &Network, x: &[f64], y: &[f64]) -> f64 {
    net.predict(x)
        .expect("matching input")
        .iter()
        .zip(y)
        .map(|(q, t)| 0.5 * (q - t) * (q - t))
        .sum()
}

fn gradients(seed: u64) -> CheckResult {
    let mut rng = RunRng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for head in [Head::Plain, Head::DuelingMax, Head::DuelingMean] {
        for _ in 0..5 {
            let spec = NetworkSpec::new(4, vec![8], 2, head);
            let mut net = Network::build_with(&spec, &mut rng).expect("valid spec");
            net.params_mut().for_each(|p| *p += rng.gen_range(-0.1..0.1));
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (q, cache) = net.forward(&x).expect("matching input");
            let err: Vec<f64> = q.iter().zip(&y).map(|(q, t)| q - t).collect();
            let analytic: Vec<f64> = net.backward(&cache, &err).expect("shapes").params().copied().collect();
            for (i, &g) in analytic.iter().enumerate() {
                let mut plus = net.clone();
                *plus.params_mut().nth(i).expect("index") += h;
                let mut minus = net.clone();
                *minus.params_mut().nth(i).expect("index") -= h;
                let numeric = (half_squared_error(&plus, &x, &y) - half_squared_error(&minus, &x, &y)) / (2.0 * h);
                let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-2);
                worst = worst.max(rel);
            }
        }
    }
    check("gradient check", worst <= 1e-4, format!("worst relative error {worst:.2e}"))
}

fn sum_tree(seed: u64) -> CheckResult {
    let mut rng = RunRng::seed_from_u64(seed);
    let mut mismatches = 0;
    let mut worst_audit: f64 = 0.0;
    for _ in 0..100 {
        let cap = rng.gen_range(1..=256);
        let mut tree = SumTree::new(cap).expect("capacity >= 1");
        let mut leaves = Vec::new();
        for _ in 0..rng.gen_range(1..=2 * cap) {
            let p = rng.gen_range(0.0..10.0);
            let leaf = tree.add(p, ()).expect("valid priority");
            if leaf == leaves.len() {
                leaves.push(p);
            } else {
                leaves[leaf] = p;
            }
        }
        for _ in 0..cap {
            let leaf = rng.gen_range(0..leaves.len());
            leaves[leaf] = rng.gen_range(0.0..10.0);
            tree.update(leaf, leaves[leaf]).expect("valid leaf");
        }
        worst_audit = worst_audit.max(tree.audit());
        for _ in 0..50 {
            let s = rng.gen_range(0.0..tree.total());
            let mut acc = 0.0;
            let mut expected = leaves.len() - 1;
            for (i, &p) in leaves.iter().enumerate() {
                acc += p;
                if p > 0.0 && s <= acc {
                    expected = i;
                    break;
                }
            }
            if tree.find(s).expect("in range").0 != expected {
                mismatches += 1;
            }
        }
    }
    check(
        "sum tree vs prefix scan",
        mismatches == 0 && worst_audit <= 1e-9,
        format!("{mismatches} mismatches, worst parent-sum deviation {worst_audit:.1e}"),
    )
}

fn per_distribution(seed: u64) -> CheckResult {
    let mut rng = RunRng::seed_from_u64(seed);
    let params = PerParams {
        e: 1e-12,
        a: 1.0,
        ..PerParams::default()
    };
    let mut mem = PrioritizedReplay::new(4, params).expect("valid");
    let t = Transition {
        state: EnvState::default(),
        action: Action::Left,
        reward: 0.0,
        next_state: EnvState::default(),
        done: false,
    };
    for p in [1.0, 2.0, 3.0, 4.0] {
        mem.push(t, p - 1e-12).expect("valid");
    }
    let mut counts = [0usize; 4];
    let draws = 100_000;
    let batch = 4;
    for _ in 0..draws / batch {
        for leaf in mem.sample(batch, &mut rng).expect("enough entries").leaves {
            counts[leaf] += 1;
        }
    }
    let l1: f64 = counts
        .iter()
        .zip([0.1, 0.2, 0.3, 0.4])
        .map(|(&c, p)| (c as f64 / draws as f64 - p).abs())
        .sum();
    check("PER sampling distribution", l1 <= 0.02, format!("L1 distance {l1:.4}"))
}

fn random_state<R: Rng>(rng: &mut R) -> EnvState {
    EnvState::from_array(std::array::from_fn(|_| rng.gen_range(-2.0..2.0)))
}

fn double_dqn_degenerate(seed: u64) -> CheckResult {
    let mut rng = RunRng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..100 {
        let net = Network::build_with(&NetworkSpec::cartpole(), &mut rng).expect("valid");
        let batch: Vec<Transition> = (0..8)
            .map(|_| Transition {
                state: random_state(&mut rng),
                action: Action::random(&mut rng),
                reward: rng.gen_range(-1.0..1.0),
                next_state: random_state(&mut rng),
                done: rng.gen_bool(0.2),
            })
            .collect();
        let a = dqn_targets(&batch, &net, &net, 0.9).expect("valid");
        let b = ddqn_targets(&batch, &net, &net, 0.9).expect("valid");
        if a != b {
            mismatches += 1;
        }
    }
    check(
        "double DQN with shared weights",
        mismatches == 0,
        format!("{mismatches} differing batches"),
    )
}

fn dueling_identities(seed: u64) -> CheckResult {
    let mut rng = RunRng::seed_from_u64(seed);
    let mut failures = 0;
    for head in [Head::DuelingMean, Head::DuelingMax] {
        let net = Network::build_with(&NetworkSpec::new(4, vec![16, 16], 2, head), &mut rng).expect("valid");
        for _ in 0..1000 {
            let x = random_state(&mut rng).to_array();
            let (q, cache) = net.forward(&x).expect("valid");
            let agg = if head == Head::DuelingMean {
                (q[0] + q[1]) / 2.0
            } else {
                q[0].max(q[1])
            };
            // max head is bit-exact; the mean head is exact up to rounding of V + (A - mean A)
            let scale = cache.value().abs() + cache.advantages().iter().fold(0.0, |m: f64, a| m.max(a.abs()));
            let tol = if head == Head::DuelingMax { 0.0 } else { 4.0 * f64::EPSILON * scale };
            if (agg - cache.value()).abs() > tol {
                failures += 1;
            }
        }
    }
    check("dueling identities", failures == 0, format!("{failures} violations"))
}

fn polyak_contraction(seed: u64) -> CheckResult {
    let mut rng = RunRng::seed_from_u64(seed);
    let spec = NetworkSpec::cartpole();
    let online = Network::build_with(&spec, &mut rng).expect("valid");
    let mut target = Network::build_with(&spec, &mut rng).expect("valid");
    let before: Vec<f64> = target.params().zip(online.params()).map(|(t, o)| t - o).collect();
    target.blend_from(&online, 0.1);
    let worst = target
        .params()
        .zip(online.params())
        .zip(before)
        .map(|((t, o), d)| ((t - o) - 0.9 * d).abs())
        .fold(0.0, f64::max);
    check("Polyak contraction", worst <= 1e-12, format!("max deviation {worst:.1e}"))
}
