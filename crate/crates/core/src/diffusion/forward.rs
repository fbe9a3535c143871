use rand::Rng;

use super::schedule::NoiseSchedule;
use crate::{rng, Error, Result};

/// Closed-form Gaussian corruption `sqrt(abar_t) x0 + sqrt(1 - abar_t) noise`.
pub fn q_sample_continuous(
    x0: &[f64],
    t: usize,
    noise: &[f64],
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    if noise.len() != x0.len() {
        return Err(Error::Shape {
            context: "noise",
            expected: x0.len(),
            found: noise.len(),
        });
    }
    let ab = schedule.alpha_bar(t);
    let (signal, spread) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0
        .iter()
        .zip(noise)
        .map(|(x, e)| signal * x + spread * e)
        .collect())
}

/// Index of the hot entry; errors unless `v` is a one-hot over at least two
/// categories.
pub fn check_one_hot(v: &[f64]) -> Result<usize> {
    if v.len() < 2 {
        return Err(Error::arg(format!(
            "one-hot needs at least 2 categories, got {}",
            v.len()
        )));
    }
    let mut hot = None;
    for (i, &x) in v.iter().enumerate() {
        if x == 1.0 {
            if hot.is_some() {
                return Err(Error::arg("one-hot vector has several hot entries"));
            }
            hot = Some(i);
        } else if x != 0.0 {
            return Err(Error::arg(format!("one-hot entry {x} is neither 0 nor 1")));
        }
    }
    hot.ok_or_else(|| Error::arg("one-hot vector has no hot entry"))
}

/// `abar_t x0 + (1 - abar_t) / K`.
pub fn categorical_marginal(x0: &[f64], t: usize, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    let k = x0.len() as f64;
    let ab = schedule.alpha_bar(t);
    Ok(x0.iter().map(|&x| ab * x + (1.0 - ab) / k).collect())
}

/// Single transition `(1 - beta_t) x_{t-1} + beta_t / K`.
pub fn one_step_kernel(x_prev: &[f64], t: usize, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    let k = x_prev.len() as f64;
    let b = schedule.beta(t);
    Ok(x_prev.iter().map(|&x| (1.0 - b) * x + b / k).collect())
}

/// Probabilities of `x_{t-1}` given the current category and a distribution
/// over `x_0`, marginalising the exact posterior over `x_0`:
/// `theta_j = sum_i p_i q(x_{t-1} = j | x_t, x_0 = i)`.
///
/// With `A_j = alpha_t [j = x_t] + (1 - alpha_t)/K` and
/// `Z_i = q(x_t | x_0 = i) = abar_t [i = x_t] + (1 - abar_t)/K` this is
/// `A_j (abar_{t-1} p_j / Z_j + (1 - abar_{t-1})/K sum_i p_i / Z_i)`.
/// A one-hot `x0_probs` gives the usual `q(x_{t-1} | x_t, x_0)`.
pub fn categorical_posterior(
    current: usize,
    x0_probs: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
) -> Vec<f64> {
    let k = x0_probs.len() as f64;
    let a = schedule.alpha(t);
    let ab = schedule.alpha_bar(t);
    let ab_prev = schedule.alpha_bar(t - 1);
    let weights: Vec<f64> = x0_probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let z = if i == current { ab } else { 0.0 } + (1.0 - ab) / k;
            if z > 0.0 {
                p / z
            } else {
                0.0
            }
        })
        .collect();
    let spread: f64 = weights.iter().sum::<f64>() * (1.0 - ab_prev) / k;
    let mut theta: Vec<f64> = weights
        .iter()
        .enumerate()
        .map(|(j, &w)| {
            let likelihood = if j == current { a } else { 0.0 } + (1.0 - a) / k;
            likelihood * (ab_prev * w + spread)
        })
        .collect();
    let total: f64 = theta.iter().sum();
    if total > 0.0 {
        theta.iter_mut().for_each(|v| *v /= total);
    } else {
        theta.iter_mut().for_each(|v| *v = 1.0 / k);
    }
    theta
}

pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Draw from the closed-form t-step marginal.
pub fn q_sample_categorical<R: Rng + ?Sized>(
    x0: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_one_hot(x0)?;
    let probs = categorical_marginal(x0, t, schedule)?;
    let mut out = vec![0.0; x0.len()];
    out[sample_index(&probs, rng)] = 1.0;
    Ok(out)
}

pub fn q_sample_categorical_seeded(
    x0: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<Vec<f64>> {
    q_sample_categorical(x0, t, schedule, &mut rng::from_seed(seed))
}
