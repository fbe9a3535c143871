use firesynth::baselines::{shuffle_sample, BaselineGenerator, BaselineKind};
use firesynth::data::{
    assign_areas, fit_zones, load_csv, read_csv, surrogate_dataset, write_csv, DatasetSchema,
    Normalization,
};
use firesynth::diffusion::{DiffusionMode, DiffusionModel, ScheduleKind, TrainConfig};
use firesynth::metrics::{evaluate, MetricConfig};
use firesynth::quota::{build_quota, oversample, QuotaMode, QuotaStatus};
use firesynth::report::emit_report;
use firesynth::{ExternalRecords, RecordGenerator};

fn tiny(mode: DiffusionMode) -> TrainConfig {
    TrainConfig {
        steps: 20,
        schedule: ScheduleKind::Cosine,
        epochs: 3,
        batch_size: 64,
        mode,
        seed: 4,
        hidden: vec![32, 32],
        ..TrainConfig::default()
    }
}

#[test]
fn csv_round_trip_and_header_only_file() {
    let dir = tempfile::tempdir().unwrap();
    let rows = surrogate_dataset(3, 50).unwrap();
    let path = dir.path().join("rows.csv");
    write_csv(std::fs::File::create(&path).unwrap(), &rows).unwrap();
    let (back, _) = load_csv(&path, None).unwrap();
    assert_eq!(back, rows);

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "x,y,month,day,hour,duration,incident\n").unwrap();
    assert!(read_csv(std::fs::File::open(&empty).unwrap())
        .unwrap()
        .is_empty());
    assert!(load_csv(&empty, None).is_err());
}

#[test]
fn checkpoint_reload_samples_identically() {
    let dir = tempfile::tempdir().unwrap();
    let real = surrogate_dataset(8, 400).unwrap();
    let schema = DatasetSchema::fit(&real, Normalization::Quantile).unwrap();
    let matrix = schema.encode(&real).unwrap();
    for mode in [DiffusionMode::Unconditional, DiffusionMode::Conditioned] {
        let model = DiffusionModel::train(&matrix, &schema, &tiny(mode)).unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let back = DiffusionModel::load(&path).unwrap();
        assert_eq!(back, model);
        let a = model.sample(100, 9, None).unwrap();
        assert_eq!(a, back.sample(100, 9, None).unwrap());
        assert_eq!(a.len(), 100);
        schema.validate(&a).unwrap();
    }
}

#[test]
fn evaluation_feeds_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut real = surrogate_dataset(9, 800).unwrap();
    let zones = fit_zones(&real, 5, 1, 50).unwrap();
    assign_areas(&mut real, &zones);
    let schema = DatasetSchema::fit(&real, Normalization::Quantile).unwrap();
    let mut fake = shuffle_sample(&real, 800, 2).unwrap();
    assign_areas(&mut fake, &zones);
    let report = evaluate(&real, &fake, &schema, &MetricConfig::default()).unwrap();
    assert!(report.prdc.precision > 0.99);
    let files = emit_report(&[report], &["shuffle".to_string()], dir.path()).unwrap();
    let areas = std::fs::read_to_string(dir.path().join("figure_area_counts.csv")).unwrap();
    assert_eq!(areas.lines().count(), 6);
    assert!(files.len() >= 10);
}

#[test]
fn oversampling_any_generator() {
    let real = surrogate_dataset(10, 600).unwrap();
    let zones = fit_zones(&real, 4, 2, 50).unwrap();
    let uniform = build_quota(&real, &zones, QuotaMode::Uniform, 0.02, 3.0).unwrap();
    assert_eq!(uniform.targets, vec![150; 4]);

    let quota = build_quota(&real, &zones, QuotaMode::PerArea, 0.02, 3.0).unwrap();
    assert_eq!(quota.targets.iter().sum::<u64>(), 600);
    let mut shuffle = BaselineGenerator::new(BaselineKind::Shuffle, real.clone()).unwrap();
    let result = oversample(&mut shuffle, &quota, &zones, 256, 1).unwrap();
    assert_eq!(result.status, QuotaStatus::Success);
    assert!(quota.is_satisfied(&result.per_area));
    assert!(result.draws <= quota.budget());

    // Equal shares overshoot the dense zones and starve the sparse ones, but
    // the loop still stops at the budget.
    let result = oversample(&mut shuffle, &uniform, &zones, 256, 1).unwrap();
    assert!(result.draws <= uniform.budget() + 256);
    assert_eq!(
        result.status == QuotaStatus::Success,
        uniform.is_satisfied(&result.per_area)
    );

    // A finite external file: the same rows in order, then nothing.
    let mut external = ExternalRecords::new(real.clone());
    match oversample(&mut external, &quota, &zones, 256, 1) {
        Ok(r) => assert!(r.draws <= real.len() as u64),
        Err(e) => assert!(e.to_string().contains("generator")),
    }
    assert!(external.generate(10, 0).unwrap().len() <= 10);
}
