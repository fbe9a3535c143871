//! Acceptance checks, one line per criterion:
//!
//! 1. metric/oracle equivalence
//! 2. self-comparison fixed points
//! 3. backpropagation against central differences
//! 4. diffusion fidelity on the surrogate
//! 5. baseline separation on a correlated pair
//! 6. quota sampler contract
//! 7. dispatch simulator invariants
//! 8. real-data figures (needs `FIRESYNTH_REAL_DATA`, skipped otherwise)
//!
//! Runs without the libtest harness so every line is printed; exits nonzero
//! if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use firesynth::baselines::{independent_sample, shuffle_sample, BaselineGenerator, BaselineKind};
use firesynth::data::{
    assign_area, fit_zones, load_csv, month_of_day, surrogate_dataset, Column, DatasetSchema,
    InterventionRecord, Normalization, WINTER_INCIDENT, WINTER_MONTHS,
};
use firesynth::diffusion::{DiffusionMode, DiffusionModel, ScheduleKind, TrainConfig};
use firesynth::dispatch::{
    load_resources, read_rules, read_stations, simulate, simulate_with_starts, start_times,
    Resources, SimConfig,
};
use firesynth::metrics::{
    cooccurrence, cosine_similarity, evaluate, jsd_percent, marginal_stats, mmd_permutation_null,
    mmd_rbf, prdc, wasserstein_1d, wasserstein_aggregate, BinnedFeature, MetricConfig, MmdConfig,
};
use firesynth::quota::{build_quota, oversample, QuotaMode, QuotaSpec, QuotaStatus, DEFAULT_BATCH};
use firesynth::rng;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

const REAL_DATA_ENV: &str = "FIRESYNTH_REAL_DATA";

enum Verdict {
    Pass(String),
    Fail(String),
    Skipped(String),
}

/// Collects sub-checks; the criterion passes only if all of them do.
#[derive(Default)]
struct Checks {
    failed: bool,
    log: String,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl AsRef<str>) {
        if !ok {
            self.failed = true;
        }
        let _ = write!(
            self.log,
            "\n    [{}] {}",
            if ok { "ok" } else { "FAILED" },
            what.as_ref()
        );
    }

    fn note(&mut self, what: impl AsRef<str>) {
        let _ = write!(self.log, "\n    note: {}", what.as_ref());
    }

    fn verdict(self) -> Verdict {
        if self.failed {
            Verdict::Fail(self.log)
        } else {
            Verdict::Pass(self.log)
        }
    }
}

/// Between `min_rows` and 64 rows of uniform values.
fn matrix(rng: &mut rng::Rng, min_rows: usize, cols: usize) -> Array2<f64> {
    let rows = rng.random_range(min_rows..=64);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-3.0..3.0))
}

fn criterion_1() -> Verdict {
    const INSTANCES: usize = 200;
    const TOL: f64 = 1e-9;
    let mut c = Checks::default();
    let mut rng = rng::from_seed(101);
    let (mut w, mut m, mut p, mut j) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..INSTANCES {
        let (na, nb) = (rng.random_range(1..=64), rng.random_range(1..=64));
        // Coarse grid so ties are common.
        let a: Vec<f64> = (0..na)
            .map(|_| rng.random_range(-20..20) as f64 * 0.5)
            .collect();
        let b: Vec<f64> = (0..nb)
            .map(|_| rng.random_range(-20..20) as f64 * 0.5)
            .collect();
        w = w.max((wasserstein_1d(&a, &b).unwrap() - common::w1_oracle(&a, &b)).abs());

        let d = rng.random_range(1..=6);
        let (x, y) = (matrix(&mut rng, 2, d), matrix(&mut rng, 2, d));
        let sigma = rng.random_range(0.2..4.0);
        let config = MmdConfig {
            bandwidth: Some(sigma),
            cap: 64,
            median_cap: 128,
            seed: 0,
        };
        m = m.max(
            (mmd_rbf(x.view(), y.view(), &config).unwrap().value
                - common::mmd_oracle(&x, &y, sigma))
            .abs(),
        );

        let (r, f) = (matrix(&mut rng, 3, d), matrix(&mut rng, 3, d));
        let got = prdc(r.view(), f.view(), 2).unwrap();
        let want = common::prdc_oracle(&r, &f, 2);
        for (g, o) in [got.precision, got.recall, got.density, got.coverage]
            .into_iter()
            .zip([want.0, want.1, want.2, want.3])
        {
            p = p.max((g - o).abs());
        }

        let bins = rng.random_range(1..=30);
        let mut ha: Vec<f64> = (0..bins)
            .map(|_| {
                if rng.random_bool(0.3) {
                    0.0
                } else {
                    rng.random_range(0..50) as f64
                }
            })
            .collect();
        let mut hb: Vec<f64> = (0..bins)
            .map(|_| {
                if rng.random_bool(0.3) {
                    0.0
                } else {
                    rng.random_range(0..50) as f64
                }
            })
            .collect();
        ha[0] += 1.0;
        hb[bins - 1] += 1.0;
        j = j.max((jsd_percent(&ha, &hb).unwrap() - common::jsd_oracle(&ha, &hb)).abs());
    }
    c.check(
        w <= TOL,
        format!("W1: max |diff| {w:.2e} over {INSTANCES} instances"),
    );
    c.check(
        m <= TOL,
        format!("MMD (fixed bandwidth): max |diff| {m:.2e} over {INSTANCES} instances"),
    );
    c.check(
        p <= TOL,
        format!("PRDC (k=2): max |diff| {p:.2e} over {INSTANCES} instances"),
    );
    c.check(
        j <= TOL,
        format!("JSD: max |diff| {j:.2e} over {INSTANCES} instances"),
    );
    c.verdict()
}

fn criterion_2() -> Verdict {
    const ROWS: usize = 5000;
    const PERMUTATIONS: usize = 200;
    let mut c = Checks::default();
    let data = surrogate_dataset(2, ROWS).unwrap();
    let schema = DatasetSchema::fit(&data, Normalization::Quantile).unwrap();
    let report = evaluate(&data, &data, &schema, &MetricConfig::default()).unwrap();
    c.check(
        report.wasserstein_mean == 0.0,
        format!("aggregate W1 = {}", report.wasserstein_mean),
    );
    let worst_jsd = report.jsd.values().fold(0.0f64, |a, &b| a.max(b.abs()));
    c.check(
        worst_jsd == 0.0,
        format!(
            "JSD = 0 on all {} features (max {worst_jsd})",
            report.jsd.len()
        ),
    );
    let varied: Vec<_> = report
        .variation
        .iter()
        .filter(|(_, v)| **v != (0.0, 0.0))
        .collect();
    c.check(
        varied.is_empty(),
        format!(
            "variation = (0, 0) on all {} features",
            report.variation.len()
        ),
    );
    let prdc = report.prdc;
    c.check(
        prdc.precision == 1.0 && prdc.recall == 1.0 && prdc.coverage == 1.0,
        format!(
            "precision {} recall {} coverage {}",
            prdc.precision, prdc.recall, prdc.coverage
        ),
    );

    let encoded = schema.encode(&data).unwrap();
    let config = MetricConfig::default().mmd();
    let null = mmd_permutation_null(
        encoded.values.view(),
        encoded.values.view(),
        &config,
        PERMUTATIONS,
    )
    .unwrap();
    let (lo, hi) = null.band(0.99);
    let value = null.estimate.value;
    c.check(
        null.within(0.99),
        format!("MMD_u {value:.4e} within the 99% permutation band [{lo:.4e}, {hi:.4e}] ({PERMUTATIONS} permutations)"),
    );
    let sd = null.std_dev();
    c.note(format!(
        "exact self-comparison puts MMD_u at -2(1 - mean off-diagonal kernel)/n, below almost every relabelling; \
         |MMD_u| = {:.2} null sd (within 3 sd: {})",
        value.abs() / sd,
        value.abs() <= 3.0 * sd
    ));
    c.verdict()
}

fn criterion_3() -> Verdict {
    const NETS: u64 = 100;
    const TOL: f64 = 1e-3;
    let mut c = Checks::default();
    let (mut worst, mut checked, mut skipped, mut widest) = (0.0f64, 0, 0, 0);
    for seed in 0..NETS {
        let g = common::gradient_check(1000 + seed, 1e-4);
        worst = worst.max(g.max_relative_error);
        checked += g.checked;
        skipped += g.skipped;
        widest = widest.max(g.hidden.iter().copied().max().unwrap_or(0));
    }
    c.check(
        worst < TOL,
        format!("max relative error {worst:.2e} over {NETS} nets, {checked} coordinates (widest layer {widest})"),
    );
    c.note(format!(
        "{skipped} coordinates skipped where the step crossed a ReLU kink"
    ));
    c.verdict()
}

fn train(
    matrix: &firesynth::data::EncodedMatrix,
    schema: &DatasetSchema,
    mode: DiffusionMode,
) -> DiffusionModel {
    let config = TrainConfig {
        steps: 100,
        schedule: ScheduleKind::Cosine,
        epochs: 200,
        batch_size: 256,
        learning_rate: 1e-3,
        mode,
        seed: 1,
        hidden: vec![256; 3],
        ..TrainConfig::default()
    };
    DiffusionModel::train(matrix, schema, &config).unwrap()
}

fn criterion_4() -> Verdict {
    const ROWS: usize = 5000;
    let mut c = Checks::default();
    let real = surrogate_dataset(1, ROWS).unwrap();
    let schema = DatasetSchema::fit(&real, Normalization::Quantile).unwrap();
    let encoded = schema.encode(&real).unwrap();
    let real_cooc = cooccurrence(&real, BinnedFeature::Incident, BinnedFeature::Month).unwrap();
    let codes = schema.categorical(Column::Incident).unwrap().codes.clone();

    let mut cosines = BTreeMap::new();
    for (name, mode) in [
        ("unconditional", DiffusionMode::Unconditional),
        ("conditioned", DiffusionMode::Conditioned),
    ] {
        let model = train(&encoded, &schema, mode);
        let fake = model.sample(ROWS, 2, None).unwrap();
        let mut worst = (0.0f64, Column::X);
        for col in Column::ALL
            .into_iter()
            .filter(|&col| schema.continuous(col).is_some())
        {
            let a: Vec<f64> = real.iter().map(|r| r.value(col)).collect();
            let b: Vec<f64> = fake.iter().map(|r| r.value(col)).collect();
            let d = common::ks(&a, &b);
            if d > worst.0 {
                worst = (d, col);
            }
        }
        c.check(
            worst.0 < 0.08,
            format!("{name}: max KS {:.4} ({}) < 0.08", worst.0, worst.1),
        );
        let share = |rs: &[InterventionRecord], k: u32| {
            rs.iter().filter(|r| r.incident == k).count() as f64 / rs.len() as f64
        };
        let dev = codes
            .iter()
            .map(|&k| (share(&real, k) - share(&fake, k)).abs())
            .fold(0.0f64, f64::max);
        c.check(
            dev <= 0.03,
            format!(
                "{name}: max incident frequency gap {:.2} pp <= 3 pp",
                100.0 * dev
            ),
        );
        let cooc = cooccurrence(&fake, BinnedFeature::Incident, BinnedFeature::Month).unwrap();
        cosines.insert(name, cosine_similarity(&real_cooc, &cooc));

        if mode == DiffusionMode::Conditioned {
            let pinned = model.sample(ROWS, 3, Some(WINTER_INCIDENT)).unwrap();
            let winter = pinned
                .iter()
                .filter(|r| WINTER_MONTHS.contains(&r.month))
                .count() as f64
                / ROWS as f64;
            c.check(
                winter >= 0.70,
                format!(
                    "conditioned, pinned to the winter category: {:.1}% in winter >= 70%",
                    100.0 * winter
                ),
            );
        }
    }
    let (u, k) = (cosines["unconditional"], cosines["conditioned"]);
    c.check(
        k > u,
        format!("incident x month cosine: conditioned {k:.4} > unconditional {u:.4}"),
    );
    c.verdict()
}

fn criterion_5() -> Verdict {
    const ROWS: usize = 10_000;
    let mut c = Checks::default();
    // y is an exact affine function of x.
    let mut data = surrogate_dataset(5, 2000).unwrap();
    for r in &mut data {
        r.y = 6_183_028.0 + 0.9 * (r.x - 492_349.0);
    }
    let xy = |rs: &[InterventionRecord]| -> (Vec<f64>, Vec<f64>) {
        rs.iter().map(|r| (r.x, r.y)).unzip()
    };
    let (a, b) = xy(&data);
    let source = common::pearson(&a, &b);
    let (a, b) = xy(&independent_sample(&data, ROWS, 6).unwrap());
    let independent = common::pearson(&a, &b);
    let (a, b) = xy(&shuffle_sample(&data, ROWS, 6).unwrap());
    let shuffled = common::pearson(&a, &b);
    c.check(
        source > 0.999_999,
        format!("source correlation {source:.6}"),
    );
    c.check(
        independent.abs() < 0.05,
        format!(
            "independent sampling: |rho| = {:.4} < 0.05",
            independent.abs()
        ),
    );
    c.check(
        shuffled > 0.95,
        format!("shuffle sampling: rho = {shuffled:.4} > 0.95"),
    );
    c.verdict()
}

fn criterion_6() -> Verdict {
    let mut c = Checks::default();
    let real = surrogate_dataset(6, 5000).unwrap();
    let zones = fit_zones(&real, 8, 6, 100).unwrap();
    let quota = build_quota(&real, &zones, QuotaMode::PerArea, 0.02, 3.0).unwrap();

    let mut shuffle = BaselineGenerator::new(BaselineKind::Shuffle, real.clone()).unwrap();
    let result = oversample(&mut shuffle, &quota, &zones, DEFAULT_BATCH, 7).unwrap();
    let within = result
        .per_area
        .iter()
        .zip(&quota.targets)
        .all(|(&got, &t)| got <= t && got >= (98 * t).div_ceil(100));
    c.check(
        result.status == QuotaStatus::Success && within,
        format!(
            "(a) shuffle: {:?} after {} draws, every area in [ceil(0.98 t), t]",
            result.status, result.draws
        ),
    );

    // Never produces a record in area 0.
    let outside: Vec<InterventionRecord> = real
        .iter()
        .filter(|r| assign_area(r.x, r.y, &zones) != 0)
        .cloned()
        .collect();
    let mut censored = BaselineGenerator::new(BaselineKind::Shuffle, outside).unwrap();
    let result = oversample(&mut censored, &quota, &zones, DEFAULT_BATCH, 8).unwrap();
    let budget = 3 * real.len() as u64;
    c.check(
        result.status == QuotaStatus::BudgetExhausted && result.draws == budget,
        format!(
            "(b) censored generator: {:?} after {} draws (B n = {budget})",
            result.status, result.draws
        ),
    );

    let spec = QuotaSpec::new(vec![53_467], 0.02, 3.0).unwrap();
    c.check(
        spec.required() == 53_467 && spec.budget() == 160_401,
        format!(
            "(c) n = {}: budget {} (expected 160401)",
            spec.required(),
            spec.budget()
        ),
    );
    c.verdict()
}

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn criterion_7() -> Verdict {
    let mut c = Checks::default();
    let resources = load_resources(
        fixture("synthetic_stations.csv"),
        fixture("synthetic_rules.csv"),
    )
    .unwrap();
    let records = surrogate_dataset(7, 3000).unwrap();
    let config = SimConfig {
        travel_speed: Some(600.0),
        seed: 3,
    };
    let report = simulate(&records, &resources, &config).unwrap();

    let conserved = report
        .trace
        .iter()
        .all(|e| e.busy + e.returned == e.dispatched);
    c.check(
        conserved,
        format!(
            "busy = dispatched - returned at all {} events",
            report.trace.len()
        ),
    );
    let peak = report.trace.iter().map(|e| e.busy).max().unwrap_or(0);
    c.check(
        peak <= report.fleet_size,
        format!("peak busy {peak} <= fleet {}", report.fleet_size),
    );
    c.note(format!(
        "{} requests unmet at the fixture fleet size",
        report.unmet.len()
    ));

    let again = simulate(&records, &resources, &config).unwrap();
    c.check(again == report, "same seed, identical report");

    let starts = start_times(&records, config.seed);
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut permuted_totals_match = true;
    for s in 0..5 {
        order.shuffle(&mut rng::from_seed(s));
        let rs: Vec<InterventionRecord> = order.iter().map(|&i| records[i]).collect();
        let ts: Vec<f64> = order.iter().map(|&i| starts[i]).collect();
        permuted_totals_match &= simulate_with_starts(&rs, &ts, &resources, &config)
            .unwrap()
            .totals
            == report.totals;
    }
    c.check(
        permuted_totals_match,
        "per-type totals unchanged under 5 input permutations",
    );

    let hand = Resources::new(
        read_stations("station_id,x,y,vehicle_type,count\nS1,0,0,VSAV,2\n".as_bytes()).unwrap(),
        read_rules("incident,vehicle_type,quantity\n1,VSAV,1\n".as_bytes()).unwrap(),
    )
    .unwrap();
    let rec = |hour| InterventionRecord {
        x: 0.0,
        y: 0.0,
        month: month_of_day(0),
        day: 0,
        hour,
        duration: 60,
        incident: 1,
        area: None,
    };
    let two = simulate_with_starts(
        &[rec(10), rec(10)],
        &[600.0, 630.0],
        &hand,
        &SimConfig::default(),
    )
    .unwrap();
    let samples: Vec<u64> = two.concurrency.iter().map(|s| s.busy).collect();
    c.check(
        samples == [0, 1] && two.totals == BTreeMap::from([("VSAV".to_string(), 2)]),
        format!(
            "hand example: concurrency {samples:?}, totals {:?}",
            two.totals
        ),
    );
    c.verdict()
}

fn criterion_8() -> Verdict {
    let Some(path) = std::env::var_os(REAL_DATA_ENV) else {
        return Verdict::Skipped(format!(
            "set {REAL_DATA_ENV} to the real intervention CSV to run"
        ));
    };
    let mut c = Checks::default();
    let (real, schema) = match load_csv(&path, None) {
        Ok(v) => v,
        Err(e) => {
            c.check(
                false,
                format!("loading {}: {e}", Path::new(&path).display()),
            );
            return c.verdict();
        }
    };
    let stats = marginal_stats(&real).unwrap();
    let get = |col: Column| stats.iter().find(|s| s.column == col).unwrap();
    let d = get(Column::Duration);
    let row = [d.mean, d.std, d.min, d.max].map(f64::round);
    c.check(
        row == [88.0, 58.0, 11.0, 1184.0],
        format!("duration mean/std/min/max {row:?} (expected [88, 58, 11, 1184])"),
    );
    let (x, y) = (get(Column::X).mean.round(), get(Column::Y).mean.round());
    c.check(
        x == 566_973.0 && y == 6_271_183.0,
        format!("coordinate means ({x}, {y}) (expected (566973, 6271183))"),
    );

    let independent = independent_sample(&real, real.len(), 0).unwrap();
    let w = wasserstein_aggregate(&real, &independent, false).unwrap();
    c.check(
        (w - 0.049).abs() <= 0.02,
        format!("random sampling aggregate W1 {w:.4} within 0.049 +/- 0.02"),
    );
    let shuffled = shuffle_sample(&real, real.len(), 0).unwrap();
    let report = evaluate(&real, &shuffled, &schema, &MetricConfig::default()).unwrap();
    let p = report.prdc.precision;
    c.check(
        (p - 0.997).abs() <= 0.01,
        format!("shuffle precision {p:.4} within 0.997 +/- 0.01"),
    );
    c.verdict()
}

fn main() {
    type Criterion = (u8, &'static str, Duration, fn() -> Verdict);
    let criteria: [Criterion; 8] = [
        (
            1,
            "metric/oracle equivalence",
            Duration::from_secs(30),
            criterion_1,
        ),
        (
            2,
            "self-comparison fixed points",
            Duration::from_secs(60),
            criterion_2,
        ),
        (
            3,
            "gradient correctness",
            Duration::from_secs(60),
            criterion_3,
        ),
        (
            4,
            "diffusion fidelity at desk scale",
            Duration::from_secs(15 * 60),
            criterion_4,
        ),
        (
            5,
            "baseline separation",
            Duration::from_secs(60),
            criterion_5,
        ),
        (
            6,
            "quota sampler contract",
            Duration::from_secs(60),
            criterion_6,
        ),
        (
            7,
            "dispatch simulator invariants",
            Duration::from_secs(10),
            criterion_7,
        ),
        (
            8,
            "real-data track",
            Duration::from_secs(30 * 60),
            criterion_8,
        ),
    ];
    let only: Option<u8> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failures = 0;
    for (id, name, budget, run) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Verdict::Fail(format!("\n    panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let timing = format!(
            "{:.1} s, budget {} s",
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        let (status, detail) = match verdict {
            Verdict::Pass(d) if elapsed <= budget => ("PASS", d),
            Verdict::Pass(d) => ("FAIL", format!("{d}\n    [FAILED] over the time budget")),
            Verdict::Fail(d) => ("FAIL", d),
            Verdict::Skipped(d) => ("SKIPPED", format!("\n    {d}")),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!("criterion {id} ({name}): {status} [{timing}]{detail}");
    }
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
}
