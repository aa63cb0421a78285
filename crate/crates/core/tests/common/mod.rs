#![allow(dead_code)]

use pathseg::neural::loss::softmax_cross_entropy;
use pathseg::neural::{Layer, Mode, Tensor};
use pathseg::tree::entropy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let len = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Largest relative disagreement between analytic and central-difference
/// gradients of `sum(r * layer(x))`, over the input and every parameter.
pub fn gradcheck_layer(layer: &mut dyn Layer, x: &Tensor, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF00D);
    let y = layer.forward(x, Mode::Train).unwrap();
    let r = random_tensor(&mut rng, &y.shape);
    layer.zero_grad();
    let dx = layer.backward(&r).unwrap();
    let analytic: Vec<Vec<f64>> = layer.grads().iter().map(|g| g.data.clone()).collect();

    let objective = |layer: &mut dyn Layer, x: &Tensor| -> f64 {
        let y = layer.forward(x, Mode::Train).unwrap();
        y.data.iter().zip(&r.data).map(|(a, b)| a * b).sum()
    };

    let mut worst: f64 = 0.0;
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp.data[i];
        xp.data[i] = orig + FD_STEP;
        let up = objective(layer, &xp);
        xp.data[i] = orig - FD_STEP;
        let down = objective(layer, &xp);
        xp.data[i] = orig;
        worst = worst.max(rel_err(dx.data[i], (up - down) / (2.0 * FD_STEP)));
    }
    let n_params = layer.params().len();
    for p in 0..n_params {
        let len = layer.params()[p].len();
        for i in 0..len {
            let orig = layer.params()[p].data[i];
            layer.params_mut()[p].data[i] = orig + FD_STEP;
            let up = objective(layer, x);
            layer.params_mut()[p].data[i] = orig - FD_STEP;
            let down = objective(layer, x);
            layer.params_mut()[p].data[i] = orig;
            worst = worst.max(rel_err(analytic[p][i], (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

/// Same check for softmax cross entropy with respect to its logits.
pub fn gradcheck_cross_entropy(logits: &Tensor, labels: &[usize]) -> f64 {
    let (_, grad) = softmax_cross_entropy(logits, labels).unwrap();
    let mut z = logits.clone();
    let mut worst: f64 = 0.0;
    for i in 0..z.len() {
        let orig = z.data[i];
        z.data[i] = orig + FD_STEP;
        let up = softmax_cross_entropy(&z, labels).unwrap().0;
        z.data[i] = orig - FD_STEP;
        let down = softmax_cross_entropy(&z, labels).unwrap().0;
        z.data[i] = orig;
        worst = worst.max(rel_err(grad.data[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

/// Exhaustive split search: every feature and every midpoint between
/// distinct sorted values, scored from scratch.
pub fn brute_force_split(x: &[f64], n_features: usize, y: &[usize], n_classes: usize) -> Option<(usize, f64, f64)> {
    let n = y.len();
    let mut parent = vec![0usize; n_classes];
    y.iter().for_each(|&c| parent[c] += 1);
    let h_parent = entropy(&parent).unwrap();
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..n_features {
        let mut vals: Vec<f64> = (0..n).map(|r| x[r * n_features + f]).collect();
        vals.sort_by(|a, b| a.total_cmp(b));
        vals.dedup();
        for pair in vals.windows(2) {
            let t = (pair[0] + pair[1]) / 2.0;
            let mut left = vec![0usize; n_classes];
            let mut right = vec![0usize; n_classes];
            for r in 0..n {
                if x[r * n_features + f] <= t {
                    left[y[r]] += 1;
                } else {
                    right[y[r]] += 1;
                }
            }
            let nl: usize = left.iter().sum();
            let nr = n - nl;
            let gain = h_parent
                - (nl as f64 / n as f64) * entropy(&left).unwrap()
                - (nr as f64 / n as f64) * entropy(&right).unwrap();
            if best.is_none_or(|(_, _, g)| gain > g + 1e-12) {
                best = Some((f, t, gain));
            }
        }
    }
    best
}

/// One named gradient check: worst relative error and its tolerance.
pub struct GradCase {
    pub name: &'static str,
    pub error: f64,
    pub tolerance: f64,
}

/// Gradient checks for every trainable or routing layer at one seed.
pub fn gradcheck_suite(seed: u64) -> Vec<GradCase> {
    use pathseg::neural::conv::{Conv1d, Conv2d, Padding};
    use pathseg::neural::layers::{BatchNorm, Dense, GlobalAvgPool2d, MaxPool};
    use pathseg::neural::recurrent::{Bidirectional, Lstm};
    use pathseg::neural::Activation;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();
    let mut push = |name, error, tolerance| cases.push(GradCase { name, error, tolerance });

    let mut dense = Dense::init(&mut rng, 4, 5, Activation::Linear);
    let x = random_tensor(&mut rng, &[3, 4]);
    push("dense", gradcheck_layer(&mut dense, &x, seed), 1e-4);

    let mut dense_relu = Dense::init(&mut rng, 4, 3, Activation::Relu);
    let x = random_tensor(&mut rng, &[2, 5, 4]);
    push("dense_relu_per_step", gradcheck_layer(&mut dense_relu, &x, seed), 1e-4);

    let mut conv1 = Conv1d::init(&mut rng, 3, 4, 3, Activation::Linear);
    let x = random_tensor(&mut rng, &[2, 7, 3]);
    push("conv1d", gradcheck_layer(&mut conv1, &x, seed), 1e-4);

    let mut conv2 = Conv2d::init(&mut rng, 2, 3, (3, 2), Activation::Linear, Padding::Valid);
    let x = random_tensor(&mut rng, &[1, 6, 5, 2]);
    push("conv2d_valid", gradcheck_layer(&mut conv2, &x, seed), 1e-4);

    let mut conv2s = Conv2d::init(&mut rng, 2, 3, (3, 3), Activation::Linear, Padding::Same);
    let x = random_tensor(&mut rng, &[1, 6, 5, 2]);
    push("conv2d_same", gradcheck_layer(&mut conv2s, &x, seed), 1e-4);

    let mut pool = MaxPool::new(vec![3], 1).unwrap();
    let x = random_tensor(&mut rng, &[1, 8, 2]);
    push("maxpool1d", gradcheck_layer(&mut pool, &x, seed), 1e-4);

    let mut pool2 = MaxPool::new(vec![3, 3], 1).unwrap();
    let x = random_tensor(&mut rng, &[1, 5, 4, 2]);
    push("maxpool2d", gradcheck_layer(&mut pool2, &x, seed), 1e-4);

    let mut bn = BatchNorm::new(3);
    bn.gamma = random_tensor(&mut rng, &[3]);
    bn.beta = random_tensor(&mut rng, &[3]);
    let x = random_tensor(&mut rng, &[4, 3]);
    push("batchnorm", gradcheck_layer(&mut bn, &x, seed), 1e-4);

    let mut gap = GlobalAvgPool2d::new();
    let x = random_tensor(&mut rng, &[2, 3, 4, 2]);
    push("global_avg_pool", gradcheck_layer(&mut gap, &x, seed), 1e-4);

    let mut lstm = Lstm::init(&mut rng, 3, 5, true);
    let x = random_tensor(&mut rng, &[1, 4, 3]);
    push("lstm_sequences", gradcheck_layer(&mut lstm, &x, seed), 1e-3);

    let mut lstm_last = Lstm::init(&mut rng, 3, 5, false);
    let x = random_tensor(&mut rng, &[2, 4, 3]);
    push("lstm_last", gradcheck_layer(&mut lstm_last, &x, seed), 1e-3);

    let mut bi = Bidirectional::init(&mut rng, 2, 4, true);
    let x = random_tensor(&mut rng, &[1, 3, 2]);
    push("bidirectional", gradcheck_layer(&mut bi, &x, seed), 1e-3);

    let mut bi_last = Bidirectional::init(&mut rng, 2, 4, false);
    let x = random_tensor(&mut rng, &[1, 3, 2]);
    push("bidirectional_last", gradcheck_layer(&mut bi_last, &x, seed), 1e-3);

    let logits = random_tensor(&mut rng, &[3, 4]);
    let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..4)).collect();
    push("softmax_cross_entropy", gradcheck_cross_entropy(&logits, &labels), 1e-5);

    cases
}
