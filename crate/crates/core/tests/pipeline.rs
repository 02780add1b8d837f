use aoi_core::nn::{DenseNet, ModelSpec};
use aoi_core::pipeline::{
    inspect, run_benchmark, score_boards, BenchmarkConfig, BoardOutcome, PipelineConfig, StageTimings,
};
use aoi_core::synthgen::{generate_board, render, template_layouts, write_dataset, DatasetSpec};
use aoi_core::{BoundingBox, DefectClass, Detection};

fn spec(seed: u64, angle: f64) -> DatasetSpec {
    DatasetSpec {
        boards_per_class: 1,
        templates: 1,
        seed,
        angle_range: (angle, angle),
        ..DatasetSpec::default()
    }
}

#[test]
fn identical_images_give_no_detections() {
    let s = spec(3, 0.0);
    let layout = &template_layouts(&s).unwrap()[0];
    let img = render(layout);
    let model = DenseNet::new(&ModelSpec::default(), 1).unwrap();
    let r = inspect(&img, &img, Some(&model), &PipelineConfig::default()).unwrap();
    assert!(r.detections.is_empty());
    let t = r.timings;
    for v in [t.registration, t.binaryzation, t.localization, t.classification] {
        assert!(v >= 0.0 && v <= t.total);
    }
    assert!(t.registration > 0.0);
}

#[test]
fn four_defects_rotated_fifteen_degrees() {
    let s = DatasetSpec {
        boards_per_class: 8,
        ..spec(21, 15.0)
    };
    let layouts = template_layouts(&s).unwrap();
    let board = (0..8)
        .map(|i| generate_board(&s, &layouts, DefectClass::MouseBite, i).unwrap())
        .find(|b| b.annotation.objects.len() == 4)
        .expect("some board carries four defects");
    assert_eq!(board.angle, 15.0);
    let template = render(&layouts[board.template - 1]);
    let model = DenseNet::new(&ModelSpec::default(), 2).unwrap();
    let r = inspect(&template, &board.rotated, Some(&model), &PipelineConfig::default()).unwrap();

    assert!(
        (r.transform.angle_degrees() + 15.0).abs() < 0.5,
        "{}",
        r.transform.angle_degrees()
    );
    assert_eq!(r.detections.len(), 4);
    let truth: Vec<BoundingBox> = board.annotation.objects.iter().map(|o| o.bbox).collect();
    let mut used = [false; 4];
    for d in &r.detections {
        let (k, iou) = truth
            .iter()
            .enumerate()
            .map(|(k, t)| (k, d.bbox.iou(t)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!(iou >= 0.33 && !used[k], "{:?} best IoU {iou:.2}", d.bbox);
        used[k] = true;
        // untrained weights: only check that every box went through the classifier
        let p = d.probabilities.expect("classified");
        assert!(d.class.is_some());
        assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-4);
    }
}

fn outcome(filename: &str, class: DefectClass, detections: Vec<Detection>) -> BoardOutcome {
    BoardOutcome {
        filename: filename.into(),
        class,
        detections,
        angle_error: None,
        timings: StageTimings::default(),
        error: None,
    }
}

fn det(bbox: BoundingBox, class: DefectClass) -> Detection {
    Detection {
        bbox,
        class: Some(class),
        score: bbox.area() as f64,
        probabilities: None,
    }
}

#[test]
fn duplicated_detection_left_out_of_classification() {
    let dir = tempfile::tempdir().unwrap();
    let s = DatasetSpec {
        classes: vec![DefectClass::Spur],
        ..spec(5, 0.0)
    };
    let m = write_dataset(&s, dir.path().join("d"), false).unwrap();
    let b = &m.boards[0];
    let mut dets: Vec<Detection> = b
        .annotation
        .objects
        .iter()
        .map(|o| det(o.bbox, DefectClass::Spur))
        .collect();
    // a second, wrongly labelled box over the first defect
    dets.push(det(b.annotation.objects[0].bbox, DefectClass::Short));
    let eval = score_boards(&m.boards, &[outcome(&b.filename, b.class, dets)], true, 0.33).unwrap();
    let spur = eval.detection_of(DefectClass::Spur).unwrap();
    assert_eq!(spur.actual, b.annotation.objects.len());
    assert_eq!(spur.unmatched, 1);
    assert_eq!(eval.precision_of(DefectClass::Spur).unwrap().precision, Some(100.0));
    assert_eq!(eval.precision_of(DefectClass::Short).unwrap().total, 0);
    assert_eq!(eval.average_precision, Some(100.0));
    assert_eq!(
        eval.confusion[DefectClass::Spur.ordinal()][DefectClass::Short.ordinal()],
        0
    );

    assert!(score_boards(&m.boards, &[], true, 0.33).is_err());
}

#[test]
fn benchmark_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let s = DatasetSpec {
        angle_range: (-30.0, 30.0),
        ..spec(9, 0.0)
    };
    let m = write_dataset(&s, dir.path().join("d"), false).unwrap();
    let model = DenseNet::new(&ModelSpec::default(), 3).unwrap();
    let cfg = BenchmarkConfig::default();
    let a = run_benchmark(&m, Some(&model), &cfg).unwrap();
    let b = run_benchmark(&m, Some(&model), &cfg).unwrap();
    assert_eq!(a.eval, b.eval);
    let dets =
        |r: &aoi_core::pipeline::BenchmarkResult| r.boards.iter().map(|o| o.detections.clone()).collect::<Vec<_>>();
    assert_eq!(dets(&a), dets(&b));
    assert_eq!(a.boards.len(), 6);
    assert!(a.boards.iter().all(|o| o.error.is_none()));
    for d in &a.eval.detection {
        assert_eq!(d.error_rate, Some(0.0), "{:?}", d);
    }
    assert!(a.max_abs_angle_error().unwrap() < 0.5);
}
