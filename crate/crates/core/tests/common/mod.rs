//! Oracles shared by the unit-level suites and the acceptance run.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shadow_rl::ddpg::{DdpgAgent, DdpgConfig, Transition};
use shadow_rl::env::Observation;
use shadow_rl::geometry::{segments_intersect, Point2, Segment2};
use shadow_rl::nn::{MlpNet, OutputActivation};

/// Naive forward pass written from scratch: loops over the flat parameter
/// layout `W (n_in x n_out) row-major, then b`.
pub fn naive_forward(net: &MlpNet, input: &[f64]) -> Vec<f64> {
    let sizes = net.sizes();
    let p = net.params();
    let mut x = input.to_vec();
    let mut off = 0;
    for l in 0..sizes.len() - 1 {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let mut y = vec![0.0; n_out];
        for j in 0..n_out {
            let mut acc = p[off + n_in * n_out + j];
            for i in 0..n_in {
                acc += x[i] * p[off + i * n_out + j];
            }
            y[j] = if l + 2 < sizes.len() {
                acc.max(0.0)
            } else if net.output_activation() == OutputActivation::Tanh {
                acc.tanh()
            } else {
                acc
            };
        }
        off += (n_in + 1) * n_out;
        x = y;
    }
    x
}

fn objective(net: &MlpNet, input: &[f64], w: &[f64]) -> f64 {
    naive_forward(net, input).iter().zip(w).map(|(a, b)| a * b).sum()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

/// Central differences with h = 1e-5 on every parameter and input
/// coordinate, compared by relative error with denominators floored at
/// 1e-6. Coordinates whose perturbation flips a ReLU are skipped: the
/// objective is not differentiable there. `max_params` bounds how many parameter coordinates are probed per point
/// (chosen at random); all input coordinates are always probed.
pub fn gradient_check(
    sizes: &[usize],
    output: OutputActivation,
    points: usize,
    max_params: usize,
    seed: u64,
) -> (f64, usize) {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..points {
        let net = MlpNet::new(sizes, output, &mut rng).unwrap();
        let input: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.5..1.5)).collect();
        let w: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = net.backward(&input, &w).unwrap();

        let coords: Vec<usize> = if net.param_count() <= max_params {
            (0..net.param_count()).collect()
        } else {
            (0..max_params).map(|_| rng.random_range(0..net.param_count())).collect()
        };
        for k in coords {
            let mut plus = net.clone();
            plus.params_mut()[k] += h;
            let mut minus = net.clone();
            minus.params_mut()[k] -= h;
            let fd = (objective(&plus, &input, &w) - objective(&minus, &input, &w)) / (2.0 * h);
            if kink_between(&plus, &minus, &input) {
                continue;
            }
            worst = worst.max(rel_err(fd, g.params[k]));
            checked += 1;
        }
        for k in 0..input.len() {
            let mut xp = input.clone();
            xp[k] += h;
            let mut xm = input.clone();
            xm[k] -= h;
            let fd = (objective(&net, &xp, &w) - objective(&net, &xm, &w)) / (2.0 * h);
            if hidden_signs(&net, &xp) != hidden_signs(&net, &xm) {
                continue;
            }
            worst = worst.max(rel_err(fd, g.input[k]));
            checked += 1;
        }
    }
    (worst, checked)
}

/// Whether any hidden pre-activation changes sign between two nets.
fn kink_between(a: &MlpNet, b: &MlpNet, input: &[f64]) -> bool {
    hidden_signs(a, input) != hidden_signs(b, input)
}

fn hidden_signs(net: &MlpNet, input: &[f64]) -> Vec<bool> {
    let sizes = net.sizes();
    let p = net.params();
    let mut x = input.to_vec();
    let mut signs = Vec::new();
    let mut off = 0;
    for l in 0..sizes.len() - 2 {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let mut y = vec![0.0; n_out];
        for j in 0..n_out {
            let mut acc = p[off + n_in * n_out + j];
            for i in 0..n_in {
                acc += x[i] * p[off + i * n_out + j];
            }
            signs.push(acc > 0.0);
            y[j] = acc.max(0.0);
        }
        off += (n_in + 1) * n_out;
        x = y;
    }
    signs
}

/// Actor and critic shapes for every switching rule at a given width.
pub fn shipped_architectures(hidden: usize) -> Vec<(Vec<usize>, OutputActivation)> {
    vec![
        (vec![8, hidden, hidden, 2], OutputActivation::Tanh),
        (vec![8, hidden, hidden, 3], OutputActivation::Tanh),
        (vec![10, hidden, hidden, 1], OutputActivation::Identity),
        (vec![11, hidden, hidden, 1], OutputActivation::Identity),
    ]
}

/// Worst relative error over all shipped architectures (hidden 64 and 256).
pub fn gradient_check_shipped() -> f64 {
    let mut worst = 0.0f64;
    for hidden in [64usize, 256] {
        let budget = if hidden == 64 { usize::MAX } else { 400 };
        for (sizes, out) in shipped_architectures(hidden) {
            let (w, checked) = gradient_check(&sizes, out, 20, budget, 31);
            assert!(checked > 20 * sizes[0]);
            worst = worst.max(w);
        }
    }
    worst
}

pub const SAMPLES: usize = 10_000;
pub const HIT: f64 = 1e-9;
pub const BAND: f64 = 1e-6;

fn lerp(a: (f64, f64), b: (f64, f64), t: f64) -> (f64, f64) {
    (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
}

/// Distance from a point to a segment by projection, written independently
/// of the library.
fn point_dist(c: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let t = (((c.0 - a.0) * dx + (c.1 - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    let p = lerp(a, b, t);
    ((c.0 - p.0).powi(2) + (c.1 - p.1).powi(2)).sqrt()
}

/// Minimum distance between segments: dense sampling along the first,
/// then golden-section refinement around the best sample. The distance
/// from a moving point on a line to a convex set is convex in the
/// parameter, so the refinement converges to the true minimum.
pub fn oracle_min_distance(a0: (f64, f64), a1: (f64, f64), b0: (f64, f64), b1: (f64, f64)) -> f64 {
    let f = |t: f64| point_dist(lerp(a0, a1, t), b0, b1);
    let mut best = (f64::INFINITY, 0usize);
    for i in 0..=SAMPLES {
        let d = f(i as f64 / SAMPLES as f64);
        if d < best.0 {
            best = (d, i);
        }
    }
    let step = 1.0 / SAMPLES as f64;
    let (mut lo, mut hi) = (
        (best.1 as f64 - 1.0).max(0.0) * step,
        (best.1 as f64 + 1.0).min(SAMPLES as f64) * step,
    );
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if f(m1) < f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    best.0.min(f(0.5 * (lo + hi)))
}

pub fn seg(a: (f64, f64), b: (f64, f64)) -> Segment2 {
    Segment2::new(Point2::new(a.0, a.1), Point2::new(b.0, b.1)).unwrap()
}

pub struct GeometryAgreement {
    pub pairs: usize,
    pub intersecting: usize,
    pub excluded: usize,
    pub disagreements: Vec<[(f64, f64); 4]>,
}

/// Compares `segments_intersect` with the oracle on `n` random pairs in
/// [0,10]^2. Every tenth pair is a short segment followed by one sharing its
/// endpoint.
pub fn geometry_agreement(n: usize, seed: u64) -> GeometryAgreement {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pt = |rng: &mut ChaCha8Rng| (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
    let mut report = GeometryAgreement { pairs: 0, intersecting: 0, excluded: 0, disagreements: Vec::new() };
    for i in 0..n {
        let a0 = pt(&mut rng);
        let b0 = pt(&mut rng);
        let (a1, b1) = if i % 10 == 0 {
            let near = |c: (f64, f64), rng: &mut ChaCha8Rng| {
                (c.0 + rng.random_range(-0.5..0.5), c.1 + rng.random_range(-0.5..0.5))
            };
            (near(a0, &mut rng), near(a0, &mut rng))
        } else {
            (pt(&mut rng), pt(&mut rng))
        };
        let b0 = if i % 10 == 0 { a1 } else { b0 };
        if a0 == a1 || b0 == b1 {
            continue;
        }
        report.pairs += 1;
        let truth = oracle_min_distance(a0, a1, b0, b1);
        if (HIT..=BAND).contains(&truth) {
            report.excluded += 1;
            continue;
        }
        let oracle = truth < HIT;
        report.intersecting += oracle as usize;
        if segments_intersect(&seg(a0, a1), &seg(b0, b1)) != oracle {
            report.disagreements.push([a0, a1, b0, b1]);
        }
    }
    report
}

/// Two states that alternate deterministically; reward R[s] - 0.1 |a|^2.
/// Q*(s, a) = R[s] - 0.1 |a|^2 + gamma V*(s'), computed by value iteration
/// over a grid of actions.
pub struct Chain {
    pub rewards: [f64; 2],
    pub gamma: f64,
}

impl Chain {
    pub fn state(s: usize) -> Observation {
        let v = if s == 0 { 2.0 } else { 8.0 };
        Observation {
            agent: Point2::new(v, v),
            goal: Point2::new(5.0, 5.0),
            obs_p: Point2::new(-1.0, -1.0),
            obs_q: Point2::new(-1.0, -1.0),
        }
    }

    pub fn reward(&self, s: usize, a: &[f64]) -> f64 {
        self.rewards[s] - 0.1 * (a[0] * a[0] + a[1] * a[1])
    }

    pub fn value_iteration(&self) -> [f64; 2] {
        let grid: Vec<f64> = (0..=40).map(|i| -1.0 + i as f64 * 0.05).collect();
        let mut v = [0.0f64; 2];
        for _ in 0..2000 {
            let mut next = [f64::NEG_INFINITY; 2];
            for (s, slot) in next.iter_mut().enumerate() {
                for &x in &grid {
                    for &y in &grid {
                        *slot = slot.max(self.reward(s, &[x, y]) + self.gamma * v[1 - s]);
                    }
                }
            }
            v = next;
        }
        v
    }
}

/// Max |learned Q - value-iteration Q| after 5000 updates on the chain.
pub fn chain_max_error() -> f64 {
    let chain = Chain { rewards: [1.0, 0.0], gamma: 0.9 };
    let v = chain.value_iteration();
    assert!((v[0] - 1.0 / 0.19).abs() < 1e-9);

    let config = DdpgConfig { gamma: chain.gamma, tau: 0.05, reward_scale: 0.1, ..DdpgConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut agent = DdpgAgent::new(config, 2, &mut rng).unwrap();
    let data: Vec<Transition> = (0..2000)
        .map(|i| {
            let s = i % 2;
            let a = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            Transition {
                state: Chain::state(s),
                reward: chain.reward(s, &a),
                action: a,
                next_state: Chain::state(1 - s),
                terminal: false,
            }
        })
        .collect();
    for _ in 0..5000 {
        let batch: Vec<&Transition> = (0..64).map(|_| &data[rng.random_range(0..data.len())]).collect();
        agent.update(&batch).unwrap();
    }

    let mut worst = 0.0f64;
    for s in 0..2 {
        for &(x, y) in &[(0.0, 0.0), (0.5, -0.5), (-1.0, 1.0), (0.25, 0.75), (-0.6, -0.2)] {
            let truth = chain.reward(s, &[x, y]) + chain.gamma * v[1 - s];
            let learned = agent.q_value(&Chain::state(s), &[x, y]).unwrap();
            worst = worst.max((learned - truth).abs());
        }
    }
    worst
}
