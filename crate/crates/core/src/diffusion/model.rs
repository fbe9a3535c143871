use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::{categorical_posterior, sample_index};
use super::schedule::{make_schedule, NoiseSchedule, ScheduleKind};
use crate::data::{
    argmax, Column, ColumnKind, DatasetSchema, EncodedLayout, EncodedMatrix, InterventionRecord,
};
use crate::neural::{AdamConfig, AdamState, DenseNet};
use crate::{rng, Error, RecordGenerator, Result};

/// Identifies the checkpoint layout; bump on incompatible changes.
pub const CHECKPOINT_FORMAT: &str = "firesynth-diffusion/1";

const SAMPLE_BLOCK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionMode {
    /// Every column is generated jointly.
    Unconditional,
    /// The target column is drawn from its empirical frequencies (or pinned)
    /// and fed to the denoiser through a learned embedding.
    Conditioned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub schedule: ScheduleKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Anneal the learning rate linearly to zero over training.
    #[serde(default)]
    pub lr_decay: bool,
    /// Decay of the exponential moving average of the weights used for
    /// sampling; 0 keeps the raw weights.
    #[serde(default)]
    pub ema_decay: f64,
    pub mode: DiffusionMode,
    pub target: Column,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub time_embedding: usize,
    pub target_embedding: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            schedule: ScheduleKind::ScaledLinear,
            epochs: 200,
            batch_size: 256,
            learning_rate: 1e-3,
            lr_decay: true,
            ema_decay: 0.999,
            mode: DiffusionMode::Conditioned,
            target: Column::Incident,
            seed: 0,
            hidden: vec![256, 256, 256],
            time_embedding: 32,
            target_embedding: 16,
        }
    }
}

/// A trained generator: schedule, denoiser, schema binding and, in
/// conditioned mode, the target embedding and frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionModel {
    pub format: String,
    pub schema_hash: String,
    pub schema: DatasetSchema,
    pub config: TrainConfig,
    pub schedule: NoiseSchedule,
    /// Layout of the generated part of a row (target excluded when conditioned).
    pub layout: EncodedLayout,
    pub denoiser: DenseNet,
    /// `categories x target_embedding`, row-major.
    pub target_embedding: Option<Vec<f64>>,
    pub target_frequencies: Option<Vec<f64>>,
    /// Largest absolute encoded continuous value seen in training; the
    /// sampler clips its x0 estimate to this range.
    #[serde(default)]
    pub x0_bound: Option<f64>,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
}

/// `[sin(t f_i), cos(t f_i)]` with `f_i = 10000^(-i / (dim/2))`.
pub fn sinusoidal_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        out[i] = (t as f64 * freq).sin();
        out[half + i] = (t as f64 * freq).cos();
    }
    out
}

struct Geometry<'a> {
    layout: &'a EncodedLayout,
    time_dim: usize,
    target_dim: usize,
}

impl Geometry<'_> {
    fn gen_width(&self) -> usize {
        self.layout.width()
    }

    fn input_width(&self) -> usize {
        self.gen_width() + self.time_dim + self.target_dim
    }

    /// Denoiser input rows: `[x_t | time embedding | target embedding]`.
    fn build_input(
        &self,
        x_t: ArrayView2<f64>,
        steps: &[usize],
        time_table: &Array2<f64>,
        targets: &[usize],
        embedding: Option<&[f64]>,
    ) -> Array2<f64> {
        let rows = x_t.nrows();
        let g = self.gen_width();
        let mut input = Array2::zeros((rows, self.input_width()));
        input.slice_mut(s![.., ..g]).assign(&x_t);
        for (r, &t) in steps.iter().enumerate() {
            input
                .slice_mut(s![r, g..g + self.time_dim])
                .assign(&time_table.row(t));
        }
        if let Some(table) = embedding {
            let d = self.target_dim;
            let base = g + self.time_dim;
            for (r, &k) in targets.iter().enumerate() {
                let src = &table[k * d..(k + 1) * d];
                for (j, &v) in src.iter().enumerate() {
                    input[[r, base + j]] = v;
                }
            }
        }
        input
    }
}

fn time_table(steps: usize, dim: usize) -> Array2<f64> {
    let mut table = Array2::zeros((steps + 1, dim));
    for t in 0..=steps {
        for (j, v) in sinusoidal_embedding(t, dim).into_iter().enumerate() {
            table[[t, j]] = v;
        }
    }
    table
}

impl DiffusionModel {
    /// Trains a denoiser on `matrix`, which must use `schema`'s layout.
    pub fn train(
        matrix: &EncodedMatrix,
        schema: &DatasetSchema,
        config: &TrainConfig,
    ) -> Result<Self> {
        let rows = matrix.values.nrows();
        if rows == 0 {
            return Err(Error::arg("cannot train on an empty matrix"));
        }
        if matrix.layout != schema.layout() {
            return Err(Error::Schema("matrix layout does not match schema".into()));
        }
        if config.epochs == 0 || config.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch size must be positive".into(),
            ));
        }
        if !config.time_embedding.is_multiple_of(2) {
            return Err(Error::Config("time embedding width must be even".into()));
        }
        let schedule = make_schedule(config.steps, config.schedule)?;
        let full = &matrix.layout;

        let (layout, target_block, frequencies) = match config.mode {
            DiffusionMode::Unconditional => (full.clone(), None, None),
            DiffusionMode::Conditioned => {
                let block = match schema.spec(config.target).map(|s| &s.kind) {
                    Some(ColumnKind::Categorical(_)) => full
                        .categorical
                        .iter()
                        .find(|b| b.column == config.target)
                        .copied()
                        .expect("categorical column has a block"),
                    _ => {
                        return Err(Error::Config(format!(
                            "conditioning target `{}` must be categorical",
                            config.target
                        )))
                    }
                };
                let mut counts = vec![0.0; block.width];
                for row in matrix.values.outer_iter() {
                    counts[argmax(
                        row.slice(s![block.offset..block.offset + block.width])
                            .iter()
                            .copied(),
                    )] += 1.0;
                }
                let freqs = counts.iter().map(|c| c / rows as f64).collect::<Vec<_>>();
                (full.without(config.target), Some(block), Some(freqs))
            }
        };

        let target_dim = if target_block.is_some() {
            config.target_embedding
        } else {
            0
        };
        let geometry = Geometry {
            layout: &layout,
            time_dim: config.time_embedding,
            target_dim,
        };
        let projection = full.projection(&layout);
        let x0_all = matrix.values.select(Axis(1), &projection);
        let x0_bound = (0..layout.continuous.len())
            .flat_map(|j| x0_all.column(j).to_vec())
            .fold(None, |m: Option<f64>, v| {
                Some(m.map_or(v.abs(), |m| m.max(v.abs())))
            });
        let targets_all: Vec<usize> = match target_block {
            Some(b) => matrix
                .values
                .outer_iter()
                .map(|row| argmax(row.slice(s![b.offset..b.offset + b.width]).iter().copied()))
                .collect(),
            None => vec![0; rows],
        };
        let block_truth: Vec<Vec<usize>> = layout
            .categorical
            .iter()
            .map(|b| {
                x0_all
                    .outer_iter()
                    .map(|row| argmax(row.slice(s![b.offset..b.offset + b.width]).iter().copied()))
                    .collect()
            })
            .collect();

        let mut init_rng = rng::stream(config.seed, 0);
        let mut denoiser = DenseNet::mlp(
            geometry.input_width(),
            &config.hidden,
            layout.width(),
            &mut init_rng,
        );
        let mut embedding = target_block.map(|b| {
            (0..b.width * target_dim)
                .map(|_| StandardNormal.sample(&mut init_rng))
                .collect::<Vec<f64>>()
        });
        let mut sizes = denoiser.parameter_sizes();
        if let Some(e) = &embedding {
            sizes.push(e.len());
        }
        let mut adam = AdamState::new(
            AdamConfig {
                learning_rate: config.learning_rate,
                ..AdamConfig::default()
            },
            sizes,
        );
        let times = time_table(schedule.steps(), config.time_embedding);
        let n_cont = layout.continuous.len();
        let mut order: Vec<usize> = (0..rows).collect();
        let mut loss_history = Vec::with_capacity(config.epochs);
        let mut ema_net = denoiser.clone();
        let mut ema_embedding = embedding.clone();
        let total_updates = (config.epochs * rows.div_ceil(config.batch_size)) as f64;
        let mut update = 0usize;

        for epoch in 0..config.epochs {
            let mut rng = rng::stream(config.seed, 1 + epoch as u64);
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(config.batch_size) {
                let b = chunk.len();
                let steps: Vec<usize> = (0..b)
                    .map(|_| rng.random_range(1..=schedule.steps()))
                    .collect();
                let mut x_t = x0_all.select(Axis(0), chunk);
                let mut noise = Array2::<f64>::zeros((b, n_cont));
                for (r, &t) in steps.iter().enumerate() {
                    let ab = schedule.alpha_bar(t);
                    let (signal, spread) = (ab.sqrt(), (1.0 - ab).sqrt());
                    for j in 0..n_cont {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        noise[[r, j]] = e;
                        x_t[[r, j]] = signal * x_t[[r, j]] + spread * e;
                    }
                    for (bi, block) in layout.categorical.iter().enumerate() {
                        let truth = block_truth[bi][chunk[r]];
                        let k = block.width as f64;
                        let probs: Vec<f64> = (0..block.width)
                            .map(|j| ab * if j == truth { 1.0 } else { 0.0 } + (1.0 - ab) / k)
                            .collect();
                        let pick = sample_index(&probs, &mut rng);
                        let mut row =
                            x_t.slice_mut(s![r, block.offset..block.offset + block.width]);
                        row.fill(0.0);
                        row[pick] = 1.0;
                    }
                }
                let targets: Vec<usize> = chunk.iter().map(|&i| targets_all[i]).collect();
                let input = geometry.build_input(
                    x_t.view(),
                    &steps,
                    &times,
                    &targets,
                    embedding.as_deref(),
                );
                let trace = denoiser.forward_trace(input.view())?;
                let out = &trace.output;

                let mut grad = Array2::<f64>::zeros(out.dim());
                let mut loss = 0.0;
                if n_cont > 0 {
                    let scale = 1.0 / (b * n_cont) as f64;
                    for r in 0..b {
                        for j in 0..n_cont {
                            let diff = out[[r, j]] - noise[[r, j]];
                            loss += diff * diff * scale;
                            grad[[r, j]] = 2.0 * diff * scale;
                        }
                    }
                }
                for (bi, block) in layout.categorical.iter().enumerate() {
                    for (r, &row_index) in chunk.iter().enumerate() {
                        let logits = out.slice(s![r, block.offset..block.offset + block.width]);
                        let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                        let z: f64 = logits.iter().map(|v| (v - max).exp()).sum();
                        let truth = block_truth[bi][row_index];
                        loss += -(logits[truth] - max - z.ln()) / b as f64;
                        for j in 0..block.width {
                            let p = (logits[j] - max).exp() / z;
                            let y = if j == truth { 1.0 } else { 0.0 };
                            grad[[r, block.offset + j]] = (p - y) / b as f64;
                        }
                    }
                }

                let grads = denoiser.backward_trace(&trace, grad.view())?;
                let embed_grad = embedding.as_ref().map(|table| {
                    let mut g = vec![0.0; table.len()];
                    let base = geometry.gen_width() + geometry.time_dim;
                    for (r, &k) in targets.iter().enumerate() {
                        for j in 0..target_dim {
                            g[k * target_dim + j] += grads.input[[r, base + j]];
                        }
                    }
                    g
                });
                let mut grad_slices = grads.slices();
                if let Some(g) = &embed_grad {
                    grad_slices.push(g);
                }
                let mut params = denoiser.parameters_mut();
                if let Some(e) = embedding.as_mut() {
                    params.push(e);
                }
                if config.lr_decay {
                    adam.config.learning_rate =
                        config.learning_rate * (1.0 - update as f64 / total_updates);
                }
                adam.step(&mut params, &grad_slices)?;
                update += 1;
                if config.ema_decay > 0.0 {
                    // warm-up so early averages are not dominated by the initialisation
                    let decay = config
                        .ema_decay
                        .min((1.0 + update as f64) / (10.0 + update as f64));
                    let mut averaged = ema_net.parameters_mut();
                    if let Some(e) = ema_embedding.as_mut() {
                        averaged.push(e);
                    }
                    for (avg, cur) in averaged.iter_mut().zip(params.iter()) {
                        for (a, c) in avg.iter_mut().zip(cur.iter()) {
                            *a = decay * *a + (1.0 - decay) * c;
                        }
                    }
                }

                epoch_loss += loss;
                batches += 1;
            }
            loss_history.push(epoch_loss / batches as f64);
        }

        if config.ema_decay > 0.0 {
            denoiser = ema_net;
            embedding = ema_embedding;
        }

        Ok(DiffusionModel {
            format: CHECKPOINT_FORMAT.to_string(),
            schema_hash: schema.hash(),
            schema: schema.clone(),
            config: config.clone(),
            schedule,
            layout,
            denoiser,
            target_embedding: embedding,
            target_frequencies: frequencies,
            x0_bound,
            loss_history,
        })
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss_history.last().copied()
    }

    fn target_codes(&self) -> Option<&[u32]> {
        match self.config.mode {
            DiffusionMode::Conditioned => self
                .schema
                .categorical(self.config.target)
                .map(|c| c.codes.as_slice()),
            DiffusionMode::Unconditional => None,
        }
    }

    /// Generates `n` records. `condition` pins the target category of every row
    /// (conditioned models only).
    pub fn sample(
        &self,
        n: usize,
        seed: u64,
        condition: Option<u32>,
    ) -> Result<Vec<InterventionRecord>> {
        let matrix = self.sample_encoded(n, seed, condition)?;
        self.schema.decode(&matrix)
    }

    /// Same as [`sample`](Self::sample) but stops before decoding. Rows are
    /// produced in blocks with independent seed streams, possibly in parallel.
    pub fn sample_encoded(
        &self,
        n: usize,
        seed: u64,
        condition: Option<u32>,
    ) -> Result<EncodedMatrix> {
        if n == 0 {
            return Err(Error::arg("sample size must be at least 1"));
        }
        let pinned = match (condition, self.target_codes()) {
            (None, _) => None,
            (Some(code), Some(codes)) => Some(
                codes
                    .binary_search(&code)
                    .map_err(|_| Error::arg(format!("unknown condition category {code}")))?,
            ),
            (Some(_), None) => return Err(Error::arg("condition requires a conditioned model")),
        };
        let blocks: Vec<usize> = (0..n.div_ceil(SAMPLE_BLOCK)).collect();
        let parts = blocks
            .par_iter()
            .map(|&i| {
                let rows = SAMPLE_BLOCK.min(n - i * SAMPLE_BLOCK);
                self.sample_block(rows, &mut rng::stream(seed, i as u64), pinned)
            })
            .collect::<Result<Vec<_>>>()?;
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        let values = ndarray::concatenate(Axis(0), &views).expect("blocks share width");
        Ok(EncodedMatrix {
            layout: self.schema.layout(),
            values,
        })
    }

    /// Full-layout encoded rows for one block.
    pub fn sample_block<R: Rng + ?Sized>(
        &self,
        rows: usize,
        rng: &mut R,
        pinned: Option<usize>,
    ) -> Result<Array2<f64>> {
        let layout = &self.layout;
        let target_dim = if self.target_embedding.is_some() {
            self.config.target_embedding
        } else {
            0
        };
        let geometry = Geometry {
            layout,
            time_dim: self.config.time_embedding,
            target_dim,
        };
        let targets: Vec<usize> = match (&self.target_frequencies, pinned) {
            (Some(_), Some(k)) => vec![k; rows],
            (Some(freqs), None) => (0..rows).map(|_| sample_index(freqs, rng)).collect(),
            (None, _) => vec![0; rows],
        };
        let n_cont = layout.continuous.len();
        let mut x = Array2::<f64>::zeros((rows, layout.width()));
        let mut current: Vec<Vec<usize>> = Vec::with_capacity(layout.categorical.len());
        for r in 0..rows {
            for j in 0..n_cont {
                x[[r, j]] = StandardNormal.sample(rng);
            }
        }
        for block in &layout.categorical {
            let picks: Vec<usize> = (0..rows)
                .map(|_| rng.random_range(0..block.width))
                .collect();
            for (r, &k) in picks.iter().enumerate() {
                x[[r, block.offset + k]] = 1.0;
            }
            current.push(picks);
        }

        let times = time_table(self.schedule.steps(), self.config.time_embedding);
        for t in (1..=self.schedule.steps()).rev() {
            let steps = vec![t; rows];
            let input = geometry.build_input(
                x.view(),
                &steps,
                &times,
                &targets,
                self.target_embedding.as_deref(),
            );
            let out = self.denoiser.forward(input.view())?;

            let beta = self.schedule.beta(t);
            let ab = self.schedule.alpha_bar(t);
            let ab_prev = self.schedule.alpha_bar(t - 1);
            let alpha = self.schedule.alpha(t);
            // Posterior mean written in terms of an x0 estimate, so the
            // estimate can be clipped to the training range first.
            let c0 = ab_prev.sqrt() * beta / (1.0 - ab);
            let ct = alpha.sqrt() * (1.0 - ab_prev) / (1.0 - ab);
            let bound = self.x0_bound.unwrap_or(f64::INFINITY);
            let sigma = self.schedule.posterior_variance(t).sqrt();
            for r in 0..rows {
                for j in 0..n_cont {
                    let xt = x[[r, j]];
                    let x0 =
                        ((xt - (1.0 - ab).sqrt() * out[[r, j]]) / ab.sqrt()).clamp(-bound, bound);
                    let mean = c0 * x0 + ct * xt;
                    x[[r, j]] = if t > 1 {
                        let z: f64 = StandardNormal.sample(rng);
                        mean + sigma * z
                    } else {
                        mean
                    };
                }
            }
            for (bi, block) in layout.categorical.iter().enumerate() {
                for r in 0..rows {
                    let logits = out.slice(s![r, block.offset..block.offset + block.width]);
                    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    let mut probs: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
                    let z: f64 = probs.iter().sum();
                    probs.iter_mut().for_each(|p| *p /= z);
                    let theta = categorical_posterior(current[bi][r], &probs, t, &self.schedule);
                    let pick = sample_index(&theta, rng);
                    x[[r, block.offset + current[bi][r]]] = 0.0;
                    x[[r, block.offset + pick]] = 1.0;
                    current[bi][r] = pick;
                }
            }
        }

        // Scatter generated columns and the target back into the full layout.
        let full = self.schema.layout();
        let mut values = Array2::<f64>::zeros((rows, full.width()));
        for (src, dst) in full.projection(layout).into_iter().enumerate() {
            values.column_mut(dst).assign(&x.column(src));
        }
        if self.target_frequencies.is_some() {
            let block = full
                .categorical
                .iter()
                .find(|b| b.column == self.config.target)
                .expect("target block");
            for (r, &k) in targets.iter().enumerate() {
                values[[r, block.offset + k]] = 1.0;
            }
        }
        Ok(values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let model: DiffusionModel = serde_json::from_reader(std::io::BufReader::new(file))?;
        if model.format != CHECKPOINT_FORMAT {
            return Err(Error::Schema(format!(
                "unsupported checkpoint format `{}`",
                model.format
            )));
        }
        if model.schema.hash() != model.schema_hash {
            return Err(Error::Schema("checkpoint schema hash mismatch".into()));
        }
        Ok(model)
    }
}

impl RecordGenerator for DiffusionModel {
    fn generate(&mut self, n: usize, seed: u64) -> Result<Vec<InterventionRecord>> {
        self.sample(n, seed, None)
    }
}
