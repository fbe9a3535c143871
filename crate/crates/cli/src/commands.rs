use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use anyhow::{bail, Context};
use serde_json::json;

use firesynth::baselines::{BaselineGenerator, BaselineKind};
use firesynth::data::{
    assign_areas, fit_zones, load_csv, read_csv, read_zones, surrogate_dataset, write_csv,
    write_zones, Column, DatasetSchema, InterventionRecord, ZonePartition,
};
use firesynth::diffusion::{DiffusionMode, DiffusionModel, ScheduleKind, TrainConfig};
use firesynth::dispatch::{compare_reports, load_resources, simulate, SimConfig, SimReport};
use firesynth::metrics::{evaluate, FidelityReport, MetricConfig};
use firesynth::quota::{build_quota, oversample, read_targets, QuotaMode, QuotaSpec, QuotaStatus};
use firesynth::report::{emit_dispatch_report, emit_report};
use firesynth::{ExternalRecords, RecordGenerator};

use crate::manifest::Run;
use crate::*;

const ZONE_ITERATIONS: usize = 100;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("{}", path.display()))?,
    ))
}

fn read_records(path: &Path) -> anyhow::Result<Vec<InterventionRecord>> {
    read_csv(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn write_records(path: &Path, records: &[InterventionRecord]) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("{}", path.display()))?;
    write_csv(BufWriter::new(file), records)?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("{}", path.display()))
}

fn load_zones(path: &Path) -> anyhow::Result<ZonePartition> {
    read_zones(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn load_schema(path: &Path) -> anyhow::Result<DatasetSchema> {
    let schema: DatasetSchema =
        serde_json::from_reader(open(path)?).with_context(|| format!("{}", path.display()))?;
    schema.check()?;
    Ok(schema)
}

pub fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let arguments = serde_json::to_value(&cli.command)?;
    let config = cli.config.as_deref();
    let (run, outcome) = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Surrogate(a) => surrogate(a),
        Command::Train(a) => train(a),
        Command::Sample(a) => sample(a),
        Command::Oversample(a) => oversample_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Report(a) => report(a),
    }?;
    let manifest = run.finish(arguments, config)?;
    println!("manifest: {}", manifest.display());
    outcome
}

/// A finished run plus the status to exit with once the manifest is written.
type Outcome = anyhow::Result<(Run, anyhow::Result<()>)>;

fn ingest(a: IngestArgs) -> Outcome {
    let mut run = Run::new("ingest", a.output.out)?;
    let data = run.input(&a.data);
    let (mut records, schema) = load_csv(&data, None)?;
    let zones = match (&a.zones, a.zone_count) {
        (Some(path), _) => Some(load_zones(&run.input(path))?),
        (None, Some(k)) => {
            let zones = fit_zones(&records, k, a.seed, ZONE_ITERATIONS)?;
            run.seeds.insert("zones", a.seed);
            write_zones(File::create(run.output("zones.csv")?)?, &zones)?;
            Some(zones)
        }
        (None, None) => None,
    };
    if let Some(zones) = &zones {
        assign_areas(&mut records, zones);
    }
    write_records(&run.output("dataset.csv")?, &records)?;
    write_json(&run.output("schema.json")?, &schema)?;
    let categories = schema
        .categorical(Column::Incident)
        .map_or(0, |c| c.cardinality());
    println!(
        "ingested {} rows, {categories} incident categories",
        records.len()
    );
    run.summary = json!({ "rows": records.len(), "incident_categories": categories, "schema_hash": schema.hash() });
    Ok((run, Ok(())))
}

fn surrogate(a: SurrogateArgs) -> Outcome {
    let mut run = Run::new("surrogate", a.output.out)?;
    run.seeds.insert("surrogate", a.seed);
    let mut records = surrogate_dataset(a.seed, a.rows)?;
    if a.zone_count > 0 {
        let zones = fit_zones(&records, a.zone_count, a.seed, ZONE_ITERATIONS)?;
        assign_areas(&mut records, &zones);
        write_zones(File::create(run.output("zones.csv")?)?, &zones)?;
    }
    write_records(&run.output(&a.file)?, &records)?;
    println!("wrote {} surrogate rows", records.len());
    run.summary = json!({ "rows": records.len() });
    Ok((run, Ok(())))
}

fn train(a: TrainArgs) -> Outcome {
    let mut run = Run::new("train", a.output.out)?;
    let mode = match a.generator {
        GeneratorChoice::Tabdiff => DiffusionMode::Conditioned,
        GeneratorChoice::Tinydiff => DiffusionMode::Unconditional,
        other => {
            return Err(usage(format!(
                "`{}` is not trainable; use tabdiff or tinydiff",
                other.name()
            )))
        }
    };
    let target = Column::from_name(&a.target)
        .ok_or_else(|| usage(format!("unknown column `{}`", a.target)))?;
    let schema = a
        .schema
        .as_ref()
        .map(|p| load_schema(&run.input(p)))
        .transpose()?;
    let (records, schema) = load_csv(run.input(&a.data), schema.as_ref())?;
    let config = TrainConfig {
        steps: a.steps,
        schedule: match a.schedule {
            Schedule::Linear => ScheduleKind::Linear,
            Schedule::ScaledLinear => ScheduleKind::ScaledLinear,
            Schedule::Cosine => ScheduleKind::Cosine,
        },
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        lr_decay: !a.no_lr_decay,
        ema_decay: a.ema_decay,
        mode,
        target,
        seed: a.seed,
        hidden: a.hidden,
        time_embedding: a.time_embedding,
        target_embedding: a.target_embedding,
    };
    run.seeds.insert("train", a.seed);
    let model = DiffusionModel::train(&schema.encode(&records)?, &schema, &config)?;
    model.save(run.output(&a.file)?)?;
    println!(
        "trained {:?} model, final loss {:.4}",
        mode,
        model.final_loss().unwrap_or(f64::NAN)
    );
    run.summary = json!({ "rows": records.len(), "final_loss": model.final_loss(), "schema_hash": model.schema_hash });
    Ok((run, Ok(())))
}

enum Loaded {
    Diffusion(DiffusionModel),
    Baseline(BaselineGenerator),
    External(ExternalRecords),
}

impl RecordGenerator for Loaded {
    fn generate(&mut self, n: usize, seed: u64) -> firesynth::Result<Vec<InterventionRecord>> {
        match self {
            Loaded::Diffusion(m) => m.generate(n, seed),
            Loaded::Baseline(b) => b.generate(n, seed),
            Loaded::External(e) => e.generate(n, seed),
        }
    }
}

fn load_generator(g: &GeneratorArgs, run: &mut Run) -> anyhow::Result<Loaded> {
    let required = |p: &Option<std::path::PathBuf>, flag: &str| {
        p.clone().ok_or_else(|| {
            usage(format!(
                "--generator {} requires --{flag}",
                g.generator.name()
            ))
        })
    };
    Ok(match g.generator {
        GeneratorChoice::Tabdiff | GeneratorChoice::Tinydiff => {
            let model = DiffusionModel::load(run.input(&required(&g.model, "model")?))?;
            let expected = if g.generator == GeneratorChoice::Tabdiff {
                DiffusionMode::Conditioned
            } else {
                DiffusionMode::Unconditional
            };
            if model.config.mode != expected {
                bail!(
                    "checkpoint was trained as {:?}, not {}",
                    model.config.mode,
                    g.generator.name()
                );
            }
            Loaded::Diffusion(model)
        }
        GeneratorChoice::Shuffle | GeneratorChoice::Independent => {
            let kind = if g.generator == GeneratorChoice::Shuffle {
                BaselineKind::Shuffle
            } else {
                BaselineKind::Independent
            };
            let data = read_records(&run.input(&required(&g.data, "data")?))?;
            Loaded::Baseline(BaselineGenerator::new(kind, data)?)
        }
        GeneratorChoice::ExternalCsv => Loaded::External(ExternalRecords::new(read_records(
            &run.input(&required(&g.external, "external")?),
        )?)),
    })
}

fn sample(a: SampleArgs) -> Outcome {
    let mut run = Run::new("sample", a.output.out)?;
    let mut generator = load_generator(&a.generator, &mut run)?;
    run.seeds.insert("sample", a.seed);
    let mut records = match (&generator, a.condition) {
        (Loaded::Diffusion(m), Some(code)) if m.config.mode == DiffusionMode::Conditioned => {
            m.sample(a.rows, a.seed, Some(code))?
        }
        (_, Some(_)) => return Err(usage("--condition needs --generator tabdiff")),
        _ => generator.generate(a.rows, a.seed)?,
    };
    if records.len() < a.rows {
        bail!(
            "generator produced {} of {} requested rows",
            records.len(),
            a.rows
        );
    }
    if let Some(path) = &a.zones {
        assign_areas(&mut records, &load_zones(&run.input(path))?);
    }
    write_records(&run.output(&a.file)?, &records)?;
    println!(
        "sampled {} rows with {}",
        records.len(),
        a.generator.generator.name()
    );
    run.summary = json!({ "rows": records.len() });
    Ok((run, Ok(())))
}

fn oversample_cmd(a: OversampleArgs) -> Outcome {
    let mut run = Run::new("oversample", a.output.out)?;
    let zones = load_zones(&run.input(&a.zones))?;
    let quota = match &a.targets {
        Some(path) => {
            let targets = read_targets(open(&run.input(path))?, zones.len())?;
            QuotaSpec::new(targets, a.tolerance, a.budget_multiplier)?
        }
        None => {
            let real = a
                .real
                .as_ref()
                .or(a.generator.data.as_ref())
                .ok_or_else(|| {
                    usage("oversample needs --targets, --real or --data to set quotas")
                })?;
            let mode = match a.quota_mode {
                QuotaChoice::PerArea => QuotaMode::PerArea,
                QuotaChoice::Uniform => QuotaMode::Uniform,
            };
            build_quota(
                &read_records(&run.input(real))?,
                &zones,
                mode,
                a.tolerance,
                a.budget_multiplier,
            )?
        }
    };
    let mut generator = load_generator(&a.generator, &mut run)?;
    run.seeds.insert("oversample", a.seed);
    let result = oversample(&mut generator, &quota, &zones, a.batch_size, a.seed)?;
    write_records(&run.output(&a.file)?, &result.accepted)?;
    let summary = result.summary(&quota);
    write_json(&run.output("quota.json")?, &summary)?;
    println!(
        "{:?}: accepted {} of {} required after {} draws (budget {})",
        summary.status, summary.accepted, summary.required, summary.draws, summary.budget
    );
    run.summary = serde_json::to_value(&summary)?;
    let outcome = match result.status {
        QuotaStatus::Success => Ok(()),
        QuotaStatus::BudgetExhausted => Err(QuotaUnmet.into()),
    };
    Ok((run, outcome))
}

fn evaluate_cmd(a: EvaluateArgs) -> Outcome {
    let mut run = Run::new("evaluate", a.output.out)?;
    let schema = a
        .schema
        .as_ref()
        .map(|p| load_schema(&run.input(p)))
        .transpose()?;
    let (mut real, schema) = load_csv(run.input(&a.real), schema.as_ref())?;
    let mut fake = read_records(&run.input(&a.fake))?;
    if let Some(path) = &a.zones {
        let zones = load_zones(&run.input(path))?;
        assign_areas(&mut real, &zones);
        assign_areas(&mut fake, &zones);
    }
    let config = MetricConfig {
        seed: a.seed,
        prdc_k: a.prdc_k,
        prdc_cap: a.prdc_cap,
        mmd_cap: a.mmd_cap,
        mmd_median_cap: a.mmd_median_cap,
        mmd_bandwidth: a.mmd_bandwidth,
        include_categorical: a.include_categorical,
    };
    run.seeds.insert("metrics", a.seed);
    let report = evaluate(&real, &fake, &schema, &config)?;
    write_json(&run.output(format!("fidelity_{}.json", a.label))?, &report)?;
    let files = emit_report(
        std::slice::from_ref(&report),
        std::slice::from_ref(&a.label),
        &run.out.join(format!("tables_{}", a.label)),
    )?;
    run.outputs(files);
    println!(
        "{}: W1 {:.4}  MMD {:.3e}  precision {:.3}  recall {:.3}  density {:.3}  coverage {:.3}",
        a.label,
        report.wasserstein_mean,
        report.mmd.value,
        report.prdc.precision,
        report.prdc.recall,
        report.prdc.density,
        report.prdc.coverage
    );
    run.summary = json!({
        "wasserstein": report.wasserstein_mean,
        "mmd": report.mmd.value,
        "precision": report.prdc.precision,
        "recall": report.prdc.recall,
        "density": report.prdc.density,
        "coverage": report.prdc.coverage,
    });
    Ok((run, Ok(())))
}

fn warn(label: &str, report: &SimReport) {
    if !report.unmet.is_empty() {
        eprintln!(
            "warning: {label}: {} vehicle requests could not be met",
            report.unmet.len()
        );
    }
    if report.month_mismatches > 0 {
        eprintln!(
            "warning: {label}: {} records have a month that disagrees with their day",
            report.month_mismatches
        );
    }
    let unruled: u64 = report.unruled.values().sum();
    if unruled > 0 {
        eprintln!(
            "warning: {label}: {unruled} interventions have no dispatch rule and sent nothing"
        );
    }
}

fn simulate_cmd(a: SimulateArgs) -> Outcome {
    let mut run = Run::new("simulate", a.output.out)?;
    let resources = load_resources(run.input(&a.stations), run.input(&a.rules))?;
    let config = SimConfig {
        travel_speed: a.travel_speed,
        seed: a.seed,
    };
    run.seeds.insert("start_minutes", a.seed);

    let replay = |run: &mut Run, path: &Path, label: &str| -> anyhow::Result<SimReport> {
        let records = read_records(&run.input(path))?;
        let mut report = simulate(&records, &resources, &config)?;
        warn(label, &report);
        report.write_concurrency_csv(File::create(
            run.output(format!("concurrency_{label}.csv"))?,
        )?)?;
        report.write_totals_csv(File::create(run.output(format!("totals_{label}.csv"))?)?)?;
        if a.trace {
            write_json(&run.output(format!("trace_{label}.json"))?, &report.trace)?;
        }
        report.trace.clear();
        write_json(&run.output(format!("simulation_{label}.json"))?, &report)?;
        println!(
            "{label}: concurrency mean {:.2} std {:.2}, {} vehicles sent",
            report.concurrency_mean,
            report.concurrency_std,
            report.totals.values().sum::<u64>()
        );
        Ok(report)
    };
    let first = replay(&mut run, &a.data, &a.label)?;
    let mut summary = json!({ a.label.clone(): { "concurrency_mean": first.concurrency_mean, "totals": first.totals } });
    if let Some(other) = &a.compare {
        if a.compare_label == a.label {
            return Err(usage("--label and --compare-label must differ"));
        }
        let second = replay(&mut run, other, &a.compare_label)?;
        let comparison = compare_reports(&first, &second)?;
        let files = emit_dispatch_report(
            &comparison,
            [&a.label, &a.compare_label],
            a.log_scale,
            &run.out,
        )?;
        run.outputs(files);
        summary[&a.compare_label] =
            json!({ "concurrency_mean": second.concurrency_mean, "totals": second.totals });
    }
    run.summary = summary;
    Ok((run, Ok(())))
}

fn report(a: ReportArgs) -> Outcome {
    let mut run = Run::new("report", a.output.out)?;
    let mut labels = Vec::new();
    let mut reports = Vec::new();
    for spec in &a.inputs {
        let (label, path) = spec
            .split_once('=')
            .ok_or_else(|| usage(format!("`{spec}` is not label=path")))?;
        if label.is_empty() || labels.iter().any(|l| l == label) {
            return Err(usage(format!(
                "labels must be nonempty and distinct (`{label}`)"
            )));
        }
        let path = run.input(Path::new(path));
        let report: FidelityReport =
            serde_json::from_reader(open(&path)?).with_context(|| format!("{}", path.display()))?;
        labels.push(label.to_string());
        reports.push(report);
    }
    let files = emit_report(&reports, &labels, &run.out)?;
    println!(
        "wrote {} report files for {}",
        files.len(),
        labels.join(", ")
    );
    run.outputs(files);
    run.summary = json!({ "labels": labels });
    Ok((run, Ok(())))
}
