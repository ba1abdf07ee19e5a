//! Central-difference gradient checks for every tape primitive and loss.

use eenas::autodiff::{Tape, Tensor, Var};
use eenas::model::{decode_genome, place_exits, EennModel, ForwardMode, Genome, MAX_EXITS};
use eenas::train::{
    expected_cost_on, loss_acc, loss_cost_on, loss_joint, loss_peak, SupportMatrix,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const TRIALS: usize = 50;

type Build = dyn Fn(&mut Tape, &[Var]) -> Var;

/// `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂)`, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Projects the output of `build` onto a fixed random direction so every
/// primitive reduces to a scalar, then compares gradients for all inputs.
fn check(inputs: &[Tensor], build: &Build, rng: &mut ChaCha8Rng) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let y = build(&mut tape, &vars);
    let projection: Vec<f64> = (0..tape.value(y).len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let scalar = |tape: &mut Tape, y: Var| {
        let p = tape
            .constant(tape.shape(y).to_vec(), projection.clone())
            .unwrap();
        let m = tape.mul(y, p).unwrap();
        tape.sum(m).unwrap()
    };
    let loss = scalar(&mut tape, y);
    let grads = tape.backward(loss).unwrap();
    let mut analytic = Vec::new();
    for &v in &vars {
        analytic.extend_from_slice(grads.get(v).unwrap());
    }
    let eval = |inputs: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
        let y = build(&mut tape, &vars);
        let l = scalar(&mut tape, y);
        tape.item(l)
    };
    let mut numeric = Vec::new();
    let mut work = inputs.to_vec();
    for k in 0..inputs.len() {
        for j in 0..inputs[k].numel() {
            let x = inputs[k].data()[j];
            work[k].data_mut()[j] = x + STEP;
            let up = eval(&work);
            work[k].data_mut()[j] = x - STEP;
            let down = eval(&work);
            work[k].data_mut()[j] = x;
            numeric.push((up - down) / (2.0 * STEP));
        }
    }
    relative_error(&analytic, &numeric)
}

fn ext(rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(1..=8)
}

fn uniform(shape: Vec<usize>, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect())
        .unwrap()
        .requiring_grad()
}

/// Values bounded away from zero, so no relu kink lies within one step.
fn off_zero(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = uniform(shape, 0.01, 1.0, rng);
    for v in t.data_mut() {
        if rng.random::<bool>() {
            *v = -*v;
        }
    }
    t
}

/// Distinct values at least 0.04 apart, so every pooling window has a clear maximum.
fn spread(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n)
        .map(|k| k as f64 * 0.05 - 1.0 + rng.random_range(0.0..0.01))
        .collect();
    v.shuffle(rng);
    Tensor::new(shape, v).unwrap().requiring_grad()
}

/// Logits whose row maximum leads the runner-up by at least 1e-3, so
/// argmax-derived targets are constant under perturbation.
fn clear_logits(n: usize, classes: usize, rng: &mut ChaCha8Rng) -> Tensor {
    loop {
        let t = uniform(vec![n, classes], -2.0, 2.0, rng);
        let ok = t.data().chunks(classes).all(|row| {
            let mut s = row.to_vec();
            s.sort_by(|a, b| b.total_cmp(a));
            s.len() < 2 || s[0] - s[1] > 1e-3
        });
        if ok {
            return t;
        }
    }
}

fn labels(n: usize, classes: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}

/// Inputs and graph for one random instance of a named primitive.
fn primitive_case(name: &str, rng: &mut ChaCha8Rng) -> (Vec<Tensor>, Box<Build>) {
    let (n, c) = (ext(rng), ext(rng));
    match name {
        "conv2d" => {
            let k = rng.random_range(1..=3);
            let stride = rng.random_range(1..=2);
            let pad = rng.random_range(0..k);
            let h = rng.random_range(k..=8);
            let w = rng.random_range(k..=8);
            let (n, cin, cout) = (
                rng.random_range(1..=2),
                rng.random_range(1..=3),
                rng.random_range(1..=3),
            );
            let inputs = vec![
                uniform(vec![n, cin, h, w], -1.0, 1.0, rng),
                uniform(vec![cout, cin, k, k], -1.0, 1.0, rng),
                uniform(vec![cout], -1.0, 1.0, rng),
            ];
            (
                inputs,
                Box::new(move |t, v| t.conv2d(v[0], v[1], v[2], stride, pad).unwrap()),
            )
        }
        "dense" => {
            let out = ext(rng);
            let inputs = vec![
                uniform(vec![n, c], -1.0, 1.0, rng),
                uniform(vec![out, c], -1.0, 1.0, rng),
                uniform(vec![out], -1.0, 1.0, rng),
            ];
            (inputs, Box::new(|t, v| t.dense(v[0], v[1], v[2]).unwrap()))
        }
        "relu" => (
            vec![off_zero(vec![n, c], rng)],
            Box::new(|t, v| t.relu(v[0]).unwrap()),
        ),
        "sigmoid" => (
            vec![uniform(vec![n, c], -4.0, 4.0, rng)],
            Box::new(|t, v| t.sigmoid(v[0]).unwrap()),
        ),
        "maxpool2d" => {
            let window = rng.random_range(1..=3);
            let h = window * rng.random_range(1..=8 / window);
            let w = window * rng.random_range(1..=8 / window);
            let shape = vec![rng.random_range(1..=2), rng.random_range(1..=3), h, w];
            (
                vec![spread(shape, rng)],
                Box::new(move |t, v| t.maxpool2d(v[0], window).unwrap()),
            )
        }
        "flatten" => {
            let shape = vec![n, c, ext(rng), ext(rng)];
            (
                vec![uniform(shape, -1.0, 1.0, rng)],
                Box::new(|t, v| t.flatten(v[0]).unwrap()),
            )
        }
        "softmax" => (
            vec![uniform(vec![n, c], -3.0, 3.0, rng)],
            Box::new(|t, v| t.softmax(v[0]).unwrap()),
        ),
        "cross_entropy" => {
            let y = labels(n, c, rng);
            (
                vec![uniform(vec![n, c], -3.0, 3.0, rng)],
                Box::new(move |t, v| t.cross_entropy(v[0], &y).unwrap()),
            )
        }
        "add" | "sub" | "mul" | "mse" => {
            let inputs = vec![
                uniform(vec![n, c], -2.0, 2.0, rng),
                uniform(vec![n, c], -2.0, 2.0, rng),
            ];
            let build: Box<Build> = match name {
                "add" => Box::new(|t, v| t.add(v[0], v[1]).unwrap()),
                "sub" => Box::new(|t, v| t.sub(v[0], v[1]).unwrap()),
                "mul" => Box::new(|t, v| t.mul(v[0], v[1]).unwrap()),
                _ => Box::new(|t, v| t.mse(v[0], v[1]).unwrap()),
            };
            (inputs, build)
        }
        "affine" => {
            let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            (
                vec![uniform(vec![n, c], -2.0, 2.0, rng)],
                Box::new(move |t, v| t.affine(v[0], a, b).unwrap()),
            )
        }
        "scale_rows" => (
            vec![
                uniform(vec![n, c], -2.0, 2.0, rng),
                uniform(vec![n, 1], -2.0, 2.0, rng),
            ],
            Box::new(|t, v| t.scale_rows(v[0], v[1]).unwrap()),
        ),
        "mean" => (
            vec![uniform(vec![n, c], -2.0, 2.0, rng)],
            Box::new(|t, v| t.mean(v[0]).unwrap()),
        ),
        "sum" => (
            vec![uniform(vec![n, c], -2.0, 2.0, rng)],
            Box::new(|t, v| t.sum(v[0]).unwrap()),
        ),
        "bce" => {
            let targets: Vec<f64> = (0..n * c).map(|_| rng.random_range(0..2) as f64).collect();
            (
                vec![uniform(vec![n, c], 0.05, 0.95, rng)],
                Box::new(move |t, v| t.bce(v[0], &targets).unwrap()),
            )
        }
        other => panic!("unknown primitive {other}"),
    }
}

pub const PRIMITIVES: [&str; 17] = [
    "conv2d",
    "dense",
    "relu",
    "sigmoid",
    "maxpool2d",
    "flatten",
    "softmax",
    "cross_entropy",
    "add",
    "sub",
    "mul",
    "mse",
    "affine",
    "scale_rows",
    "mean",
    "sum",
    "bce",
];

/// Worst relative error of a primitive over [`TRIALS`] random instances.
pub fn primitive_worst(name: &str, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..TRIALS)
        .map(|_| {
            let (inputs, build) = primitive_case(name, &mut rng);
            check(&inputs, &*build, &mut rng)
        })
        .fold(0.0, f64::max)
}

/// Early-exit logits and pre-sigmoid confidence logits for `b` exits; the
/// final confidence is the constant 1.
fn exit_inputs(n: usize, classes: usize, b: usize, rng: &mut ChaCha8Rng) -> Vec<Tensor> {
    let mut v: Vec<Tensor> = (0..b).map(|_| clear_logits(n, classes, rng)).collect();
    v.extend((0..b - 1).map(|_| uniform(vec![n, 1], -2.5, 2.5, rng)));
    v
}

fn confidences(t: &mut Tape, v: &[Var], b: usize, n: usize) -> Vec<Var> {
    let mut c: Vec<Var> = v[b..].iter().map(|&z| t.sigmoid(z).unwrap()).collect();
    c.push(t.constant(vec![n, 1], vec![1.0; n]).unwrap());
    c
}

fn loss_case(name: &str, rng: &mut ChaCha8Rng) -> (Vec<Tensor>, Box<Build>) {
    let n = ext(rng);
    let classes = rng.random_range(2..=8);
    let b = rng.random_range(2..=MAX_EXITS);
    let y = labels(n, classes, rng);
    match name {
        "acc" | "acc_regularized" => {
            let reg = name == "acc_regularized";
            (
                exit_inputs(n, classes, b, rng),
                Box::new(move |t, v| {
                    let c = confidences(t, v, b, n);
                    loss_acc(t, &v[..b], &c, &y, reg).unwrap()
                }),
            )
        }
        "joint" => {
            let lambda = rng.random_range(0.1..2.0);
            (
                (0..b)
                    .map(|_| uniform(vec![n, classes], -2.0, 2.0, rng))
                    .collect(),
                Box::new(move |t, v| loss_joint(t, v, &y, lambda).unwrap()),
            )
        }
        "cost" => loop {
            let mut gamma: Vec<f64> = (0..b).map(|_| rng.random_range(0.1..5.0)).collect();
            gamma.sort_by(f64::total_cmp);
            let bound = rng.random_range(gamma[0]..gamma[b - 1]);
            let inputs: Vec<Tensor> = (0..b - 1)
                .map(|_| uniform(vec![n, 1], -2.5, 2.5, rng))
                .collect();
            // Keep γ̃_1 clear of the hinge at the bound.
            let mut tape = Tape::no_grad();
            let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x)).collect();
            let mut c: Vec<Var> = vars.iter().map(|&z| tape.sigmoid(z).unwrap()).collect();
            c.push(tape.constant(vec![n, 1], vec![1.0; n]).unwrap());
            let g = expected_cost_on(&mut tape, &c, &gamma).unwrap();
            if (tape.item(g) - bound).abs() < 1e-3 {
                continue;
            }
            let last = gamma[b - 1];
            return (
                inputs,
                Box::new(move |t, v| {
                    let mut c: Vec<Var> = v.iter().map(|&z| t.sigmoid(z).unwrap()).collect();
                    c.push(t.constant(vec![n, 1], vec![1.0; n]).unwrap());
                    let g = expected_cost_on(t, &c, &gamma).unwrap();
                    let l = loss_cost_on(t, g, bound, last).unwrap().unwrap();
                    t.add(l, g).unwrap()
                }),
            );
        },
        "peak" => {
            let targets: Vec<Vec<f64>> = (0..b - 1)
                .map(|_| (0..n).map(|_| rng.random()).collect())
                .collect();
            let inputs: Vec<Tensor> = (0..b - 1)
                .map(|_| uniform(vec![n, 1], -2.5, 2.5, rng))
                .collect();
            (
                inputs,
                Box::new(move |t, v| {
                    let c: Vec<Var> = v.iter().map(|&z| t.sigmoid(z).unwrap()).collect();
                    loss_peak(t, &c, &targets).unwrap()
                }),
            )
        }
        other => panic!("unknown loss {other}"),
    }
}

pub const LOSSES: [&str; 5] = ["acc", "acc_regularized", "joint", "cost", "peak"];

pub fn loss_worst(name: &str, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..TRIALS)
        .map(|_| {
            let (inputs, build) = loss_case(name, &mut rng);
            check(&inputs, &*build, &mut rng)
        })
        .fold(0.0, f64::max)
}

/// Full staged loss (accuracy with exit regularizer, cost hinge, peak term)
/// of a small early-exit network, differentiated with respect to its
/// weights on randomly sampled coordinates.
pub fn network_worst(seed: u64, trials: usize, coordinates: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let genome = Genome::parse("1-3-16,1-3-16,1-3-16,1-3-16/1111").unwrap();
        let backbone = decode_genome(&genome, [3, 8, 8], 4).unwrap();
        let spec = place_exits(&backbone, &genome.theta, MAX_EXITS).unwrap();
        let mut model = EennModel::init(spec, rng.random()).unwrap();
        let n = 3;
        let x = Tensor::new(
            vec![n, 3, 8, 8],
            (0..n * 192).map(|_| rng.random()).collect(),
        )
        .unwrap();
        let y = labels(n, 4, &mut rng);
        let sm = SupportMatrix {
            rows: (0..4)
                .map(|_| (0..model.spec.exit_count()).map(|_| rng.random()).collect())
                .collect(),
        };
        let gamma = model.spec.gamma.as_slice().to_vec();
        let bound = 0.5 * (gamma[0] + gamma[gamma.len() - 1]);
        let loss = |model: &EennModel, tape: &mut Tape| {
            let out = model.forward(tape, &x, ForwardMode::All).unwrap();
            let mut l = loss_acc(tape, &out.logits, &out.confidences, &y, true).unwrap();
            let g = expected_cost_on(tape, &out.confidences, &gamma).unwrap();
            let scaled = tape.affine(g, 1.0 / gamma[gamma.len() - 1], 0.0).unwrap();
            l = tape.add(l, scaled).unwrap();
            if let Some(lc) = loss_cost_on(tape, g, bound, gamma[gamma.len() - 1]).unwrap() {
                l = tape.add(l, lc).unwrap();
            }
            let early = out.confidences.len() - 1;
            let lp = loss_peak(tape, &out.confidences[..early], &sm.targets(&y)).unwrap();
            (tape.add(l, lp).unwrap(), out)
        };
        let mut tape = Tape::new();
        let (l, out) = loss(&model, &mut tape);
        let grads = tape.backward(l).unwrap();
        model.accumulate_grads(&grads, &out).unwrap();

        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for _ in 0..coordinates {
            let i = rng.random_range(0..model.params.len());
            let j = rng.random_range(0..model.params.tensor(i).numel());
            analytic.push(model.params.tensor(i).grad().map_or(0.0, |g| g[j]));
            let v = model.params.tensor(i).data()[j];
            let mut at = |value: f64| {
                model.params.tensor_mut(i).data_mut()[j] = value;
                let mut tape = Tape::no_grad();
                let (l, _) = loss(&model, &mut tape);
                tape.item(l)
            };
            let (up, down) = (at(v + STEP), at(v - STEP));
            model.params.tensor_mut(i).data_mut()[j] = v;
            numeric.push((up - down) / (2.0 * STEP));
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}
