use std::fs;

use shapeboost::experiment::{model_sample, predict_data};
use shapeboost::report::{evaluate, report_maximizers};
use shapeboost::synthetic::{train_test, SyntheticConfig};
use shapeboost::{
    cross_validate, empirical_margin_loss, load_dataset, train_pipeline, BoostConfig, Data, DataFormat, DatasetSource,
    EnsembleModel, ExperimentGrid, KernelChoice, Label, LabelMapping, PipelineConfig, TimeSeries, WindowConfig,
};
use tempfile::TempDir;

fn ucr_text(series: &[TimeSeries]) -> String {
    series
        .iter()
        .map(|t| {
            let mut line = t.label.unwrap().to_string();
            for v in &t.values {
                line.push_str(&format!(" {v}"));
            }
            line + "\n"
        })
        .collect()
}

fn synthetic() -> (Vec<TimeSeries>, Vec<TimeSeries>) {
    train_test(&SyntheticConfig {
        per_class: 10,
        length: 40,
        window: 8,
        seed: 11,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

fn config() -> PipelineConfig {
    PipelineConfig {
        window: WindowConfig::fixed(8),
        kernel: KernelChoice::Gaussian { sigma: 0.05 },
        kmeans_k: Some(40),
        boost: BoostConfig {
            seed: 9,
            ..BoostConfig::default()
        },
        ..PipelineConfig::default()
    }
}

fn source(format: DataFormat, path: &std::path::Path) -> DatasetSource {
    DatasetSource {
        format,
        path: path.to_path_buf(),
        index: None,
        mapping: LabelMapping::Auto,
    }
}

#[test]
fn ucr_file_round_trip_through_model_json() {
    let dir = TempDir::new().unwrap();
    let (train, test) = synthetic();
    let path = dir.path().join("train.txt");
    fs::write(&path, ucr_text(&train)).unwrap();
    let loaded = load_dataset(&source(DataFormat::UcrTs, &path)).unwrap();
    assert_eq!(loaded.data.len(), train.len());
    assert_eq!(
        loaded.data.labels().unwrap(),
        train.iter().map(|t| t.label.unwrap()).collect::<Vec<_>>()
    );

    let model = train_pipeline(&loaded.data, None, &config()).unwrap().model;
    let reloaded = EnsembleModel::from_json(&model.to_json().unwrap(), None).unwrap();
    let test = Data::Series(test);
    let a = predict_data(&model, &test).unwrap();
    let b = predict_data(&reloaded, &test).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert_eq!(p.label, q.label);
        assert_eq!(p.margin.to_bits(), q.margin.to_bits());
    }
    assert_eq!(evaluate(&model, &test).unwrap(), evaluate(&reloaded, &test).unwrap());
}

#[test]
fn eval_accuracy_is_one_minus_zero_margin_loss() {
    let (train, test) = synthetic();
    let model = train_pipeline(&Data::Series(train), None, &config()).unwrap().model;
    let test = Data::Series(test);
    let report = evaluate(&model, &test).unwrap();
    assert_eq!(report.accuracy, report.correct as f64 / report.total as f64);
    let preds = predict_data(&model, &test).unwrap();
    if preds.iter().all(|p| p.margin != 0.0) {
        let loss = empirical_margin_loss(&model, &model_sample(&model, &test).unwrap(), 0.0).unwrap();
        assert!((report.accuracy - (1.0 - loss)).abs() < 1e-12);
    }
    let c = report.confusion;
    assert_eq!(c.true_positive + c.true_negative, report.correct);
    assert_eq!(
        c.true_positive + c.true_negative + c.false_positive + c.false_negative,
        report.total
    );
}

#[test]
fn maximizer_values_sum_to_margin() {
    let (train, test) = synthetic();
    let model = train_pipeline(&Data::Series(train), None, &config()).unwrap().model;
    let test = Data::Series(test);
    let preds = predict_data(&model, &test).unwrap();
    for (i, p) in preds.iter().enumerate().take(5) {
        let r = report_maximizers(&model, &test, i).unwrap();
        let sum: f64 = r.shapelets.iter().map(|s| s.value).sum();
        assert!((sum - p.margin).abs() <= 1e-9 * (1.0 + p.margin.abs()));
        assert_eq!(r.predicted, p.label);
        assert_eq!(r.shapelets.len(), model.shapelets.len());
    }
}

#[test]
fn bag_csv_groups_by_first_appearance() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bags.csv");
    fs::write(&path, "a,x,1,2\nb,y,3,4\na,x,5,6\n").unwrap();
    let ds = load_dataset(&source(DataFormat::BagCsv, &path)).unwrap();
    let Data::Bags(sample) = &ds.data else {
        panic!("expected bags");
    };
    let sizes: Vec<usize> = sample.bags().map(|b| b.len()).collect();
    assert_eq!(sizes, vec![2, 1]);
    assert_eq!(
        sample.labels().collect::<Vec<_>>(),
        vec![Label::Negative, Label::Positive]
    );
}

#[test]
fn ucr_spec_example() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("two.txt");
    fs::write(&path, "1 0.5 0.7\n-1 0.1 0.2").unwrap();
    let ds = load_dataset(&source(DataFormat::UcrTs, &path)).unwrap();
    assert_eq!(ds.data.labels().unwrap(), vec![Label::Positive, Label::Negative]);
}

#[test]
fn three_labels_rejected_without_mapping() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("three.txt");
    fs::write(&path, "1 0 1\n2 1 2\n3 2 3\n").unwrap();
    assert!(load_dataset(&source(DataFormat::UcrTs, &path)).is_err());
    let mut src = source(DataFormat::UcrTs, &path);
    src.mapping = LabelMapping::OneVsRest { positive: "2".into() };
    let ds = load_dataset(&src).unwrap();
    assert_eq!(
        ds.data.labels().unwrap(),
        vec![Label::Negative, Label::Positive, Label::Negative]
    );
}

#[test]
fn cross_validation_is_reproducible() {
    let (train, _) = synthetic();
    let data = Data::Series(train);
    let grid = ExperimentGrid {
        length_fractions: vec![0.2],
        nus: vec![0.2, 0.3],
        sigmas: vec![0.05],
        folds: 2,
        repeats: 2,
        seed: 4,
    };
    let cfg = PipelineConfig {
        kmeans_k: Some(20),
        ..config()
    };
    let a = cross_validate(&data, None, &cfg, &grid).unwrap();
    let b = cross_validate(&data, None, &cfg, &grid).unwrap();
    assert_eq!(a.table.len(), 2);
    assert_eq!(a.table, b.table);
    let best = a.table.iter().find(|r| r.cell == a.best).unwrap();
    assert!(a.table.iter().all(|r| r.mean <= best.mean));
    assert!(best.mean >= 0.9, "best cv accuracy {}", best.mean);
}
