use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const BETA_START: f64 = 1e-4;
const BETA_END: f64 = 0.02;
const COSINE_OFFSET: f64 = 0.008;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// Betas evenly spaced from 1e-4 to 0.02, endpoints inclusive.
    Linear,
    /// Linear with both endpoints multiplied by `1000 / T` (capped below 1),
    /// so short chains still end close to pure noise.
    #[default]
    ScaledLinear,
    /// `abar_t = f(t) / f(0)` with `f(t) = cos^2(((t/T + s) / (1 + s)) pi/2)`,
    /// `s = 0.008`, betas capped at 0.999.
    Cosine,
}

/// Per-step noise rates `beta_t`, `t = 1..=T`, with cumulative retention
/// `abar_t = prod_{s<=t} (1 - beta_s)` and `abar_0 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRecord", into = "ScheduleRecord")]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

pub fn make_schedule(steps: usize, kind: ScheduleKind) -> Result<NoiseSchedule> {
    if steps < 1 {
        return Err(Error::arg("schedule needs at least one step"));
    }
    if kind == ScheduleKind::Cosine {
        let f = |t: usize| {
            let u = (t as f64 / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
            (u * std::f64::consts::FRAC_PI_2).cos().powi(2)
        };
        let betas = (1..=steps)
            .map(|t| (1.0 - f(t) / f(t - 1)).min(0.999))
            .collect();
        return NoiseSchedule::from_betas(betas);
    }
    let (start, end) = match kind {
        ScheduleKind::Linear | ScheduleKind::Cosine => (BETA_START, BETA_END),
        ScheduleKind::ScaledLinear => {
            let scale = 1000.0 / steps as f64;
            (
                (BETA_START * scale).min(0.999),
                (BETA_END * scale).min(0.999),
            )
        }
    };
    let betas = if steps == 1 {
        vec![start]
    } else {
        (0..steps)
            .map(|i| start + (end - start) * i as f64 / (steps - 1) as f64)
            .collect()
    };
    NoiseSchedule::from_betas(betas)
}

impl NoiseSchedule {
    /// Custom schedule; every beta must lie in `[0, 1)`.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::arg("schedule needs at least one step"));
        }
        if let Some(b) = betas.iter().find(|b| !(0.0..1.0).contains(*b)) {
            return Err(Error::arg(format!("beta {b} outside [0, 1)")));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(NoiseSchedule { betas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// `beta_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t - 1]
    }

    /// `abar_t` for `t` in `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub(crate) fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::arg(format!("step {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }

    /// Variance of the Gaussian posterior `q(x_{t-1} | x_t, x_0)`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        let denom = 1.0 - self.alpha_bar(t);
        if denom <= 0.0 {
            return 0.0;
        }
        self.beta(t) * (1.0 - self.alpha_bar(t - 1)) / denom
    }
}

#[derive(Serialize, Deserialize)]
struct ScheduleRecord {
    betas: Vec<f64>,
}

impl From<NoiseSchedule> for ScheduleRecord {
    fn from(s: NoiseSchedule) -> Self {
        ScheduleRecord { betas: s.betas }
    }
}

impl TryFrom<ScheduleRecord> for NoiseSchedule {
    type Error = Error;
    fn try_from(r: ScheduleRecord) -> Result<Self> {
        NoiseSchedule::from_betas(r.betas)
    }
}
