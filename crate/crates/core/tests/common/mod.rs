//! Brute-force reference implementations and numeric checks shared by the
//! integration tests. Written independently of the library code they check.

#![allow(dead_code)]

use firesynth::neural::DenseNet;
use firesynth::rng;
use ndarray::Array2;
use rand::Rng;

/// W1 as the integral of |F_a - F_b| over the merged support, with both
/// empirical CDFs evaluated by counting.
pub fn w1_oracle(a: &[f64], b: &[f64]) -> f64 {
    let mut z: Vec<f64> = a.iter().chain(b).copied().collect();
    z.sort_by(f64::total_cmp);
    z.dedup();
    let cdf = |s: &[f64], t: f64| s.iter().filter(|&&v| v <= t).count() as f64 / s.len() as f64;
    z.windows(2)
        .map(|w| (cdf(a, w[0]) - cdf(b, w[0])).abs() * (w[1] - w[0]))
        .sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

/// Unbiased MMD^2 by explicit double sums.
pub fn mmd_oracle(x: &Array2<f64>, y: &Array2<f64>, sigma: f64) -> f64 {
    let (x, y) = (rows(x), rows(y));
    let k = |a: &[f64], b: &[f64]| (-sq_dist(a, b) / (2.0 * sigma * sigma)).exp();
    let within = |s: &[Vec<f64>]| {
        let mut t = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if i != j {
                    t += k(&s[i], &s[j]);
                }
            }
        }
        t / (s.len() * (s.len() - 1)) as f64
    };
    let mut cross = 0.0;
    for a in &x {
        for b in &y {
            cross += k(a, b);
        }
    }
    within(&x) + within(&y) - 2.0 * cross / (x.len() * y.len()) as f64
}

/// `(precision, recall, density, coverage)` from full distance tables.
pub fn prdc_oracle(real: &Array2<f64>, fake: &Array2<f64>, k: usize) -> (f64, f64, f64, f64) {
    let (r, f) = (rows(real), rows(fake));
    let radii = |s: &[Vec<f64>]| -> Vec<f64> {
        s.iter()
            .enumerate()
            .map(|(i, p)| {
                let mut d: Vec<f64> = s
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, q)| sq_dist(p, q))
                    .collect();
                d.sort_by(f64::total_cmp);
                d[k - 1]
            })
            .collect()
    };
    let (rr, fr) = (radii(&r), radii(&f));
    let (m, n) = (f.len() as f64, r.len() as f64);
    let precision = f
        .iter()
        .filter(|q| r.iter().zip(&rr).any(|(p, &rad)| sq_dist(p, q) <= rad))
        .count() as f64
        / m;
    let recall = r
        .iter()
        .filter(|p| f.iter().zip(&fr).any(|(q, &rad)| sq_dist(p, q) <= rad))
        .count() as f64
        / n;
    let inside: usize = f
        .iter()
        .map(|q| {
            r.iter()
                .zip(&rr)
                .filter(|(p, &rad)| sq_dist(p, q) <= rad)
                .count()
        })
        .sum();
    let density = inside as f64 / (k as f64 * m);
    let coverage = r
        .iter()
        .zip(&rr)
        .filter(|(p, &rad)| {
            f.iter()
                .map(|q| sq_dist(p, q))
                .fold(f64::INFINITY, f64::min)
                <= rad
        })
        .count() as f64
        / n;
    (precision, recall, density, coverage)
}

fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|v| v * v.log2())
        .sum::<f64>()
}

/// JSD in bits x 100 as `H(M) - (H(P) + H(Q)) / 2`.
pub fn jsd_oracle(a: &[f64], b: &[f64]) -> f64 {
    let (ta, tb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    let p: Vec<f64> = a.iter().map(|v| v / ta).collect();
    let q: Vec<f64> = b.iter().map(|v| v / tb).collect();
    let m: Vec<f64> = p.iter().zip(&q).map(|(x, y)| 0.5 * (x + y)).collect();
    100.0 * (entropy_bits(&m) - 0.5 * entropy_bits(&p) - 0.5 * entropy_bits(&q))
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

pub struct GradientCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Coordinates where a step crossed a ReLU kink, so the difference
    /// quotient does not estimate the derivative.
    pub skipped: usize,
    pub hidden: Vec<usize>,
}

/// Smallest gradient magnitude used as the relative-error denominator. Exact
/// zeros (dead units) would otherwise turn rounding noise into error 1.
const GRADIENT_FLOOR: f64 = 1e-6;

/// Central differences with step `h` on every weight, bias and input of a
/// random MLP (widths at most 64) under `0.5 |f(x) - y|^2`.
pub fn gradient_check(seed: u64, h: f64) -> GradientCheck {
    let mut rng = rng::from_seed(seed);
    let inputs = rng.random_range(1..=16);
    let outputs = rng.random_range(1..=8);
    let hidden: Vec<usize> = (0..rng.random_range(1..=3))
        .map(|_| rng.random_range(1..=64))
        .collect();
    let batch = rng.random_range(1..=4);
    let mut net = DenseNet::mlp(inputs, &hidden, outputs, &mut rng);
    for p in net.parameters_mut() {
        for v in p.iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    let mut x = Array2::from_shape_fn((batch, inputs), |_| rng.random_range(-2.0..2.0));
    let y = Array2::from_shape_fn((batch, outputs), |_| rng.random_range(-1.0..1.0));

    let loss = |net: &DenseNet, x: &Array2<f64>| {
        0.5 * (&net.forward(x.view()).unwrap() - &y).mapv(|v| v * v).sum()
    };
    let out = net.forward(x.view()).unwrap();
    let grads = net.backward(x.view(), (&out - &y).view()).unwrap();
    let analytic: Vec<Vec<f64>> = grads.slices().into_iter().map(<[f64]>::to_vec).collect();
    let input_grad = grads.input.clone();

    let mut check = GradientCheck {
        max_relative_error: 0.0,
        checked: 0,
        skipped: 0,
        hidden,
    };
    let mut record = |a: f64, n_h: f64, n_half: f64| {
        if (n_h - n_half).abs() > 1e-6 * n_h.abs().max(1.0) {
            check.skipped += 1;
            return;
        }
        let rel = (a - n_h).abs() / a.abs().max(n_h.abs()).max(GRADIENT_FLOOR);
        check.max_relative_error = check.max_relative_error.max(rel);
        check.checked += 1;
    };

    let sizes = net.parameter_sizes();
    for (block, &size) in sizes.iter().enumerate() {
        for i in 0..size {
            let mut quotient = |step: f64| {
                let original = net.parameters_mut()[block][i];
                net.parameters_mut()[block][i] = original + step;
                let up = loss(&net, &x);
                net.parameters_mut()[block][i] = original - step;
                let down = loss(&net, &x);
                net.parameters_mut()[block][i] = original;
                (up - down) / (2.0 * step)
            };
            let (n_h, n_half) = (quotient(h), quotient(h / 2.0));
            record(analytic[block][i], n_h, n_half);
        }
    }
    for idx in 0..x.len() {
        let (r, c) = (idx / inputs, idx % inputs);
        let mut quotient = |step: f64| {
            let original = x[[r, c]];
            x[[r, c]] = original + step;
            let up = loss(&net, &x);
            x[[r, c]] = original - step;
            let down = loss(&net, &x);
            x[[r, c]] = original;
            (up - down) / (2.0 * step)
        };
        let (n_h, n_half) = (quotient(h), quotient(h / 2.0));
        record(input_grad[[r, c]], n_h, n_half);
    }
    check
}
