use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use aoi_core::io::{read_color_png, write_color_png};
use aoi_core::nn::{load_weights, predict_batch, save_weights, train_with, DenseNet};
use aoi_core::pipeline::{
    collect_defect_crops, draw_overlay, evaluate_classification, inspect as run_inspect, run_benchmark, split_defects,
    CropSplit, PipelineConfig,
};
use aoi_core::synthgen::{read_dataset, DatasetManifest, Nuisance};
use aoi_core::{ColorImage, DefectClass};
use serde::Serialize;

use crate::config::CliConfig;
use crate::tables::{classification_table, confusion_table, detection_table, timing_table};
use crate::{CliError, Command, PipelineArgs};

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_pipeline(p: &PipelineArgs, cfg: &mut PipelineConfig) {
    set(&mut cfg.threshold.blocksize, p.blocksize);
    set(&mut cfg.threshold.offset_c, p.offset_c);
    set(&mut cfg.localize.min_area, p.min_area);
    set(&mut cfg.localize.nms_iou, p.nms_iou);
    set(&mut cfg.crop_pad, p.crop_pad);
}

fn parse_classes(list: &str) -> Result<Vec<DefectClass>, CliError> {
    if list.trim() == "all" {
        return Ok(DefectClass::ALL.to_vec());
    }
    let mut out: Vec<DefectClass> = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let c: DefectClass = name
            .parse()
            .map_err(|e: aoi_core::Error| CliError::usage(e.to_string()))?;
        if !out.contains(&c) {
            out.push(c);
        }
    }
    if out.is_empty() {
        return Err(CliError::usage("--classes names no class"));
    }
    out.sort();
    Ok(out)
}

/// Folds subcommand flags into the configuration.
pub fn apply_flags(cmd: &Command, cfg: &mut CliConfig) -> Result<(), CliError> {
    match cmd {
        Command::Gen(a) => {
            let g = &mut cfg.gen;
            if let Some(list) = &a.classes {
                g.classes = parse_classes(list)?;
            }
            set(&mut g.boards_per_class, a.boards);
            set(&mut g.templates, a.templates);
            set(&mut g.seed, a.seed);
            set(&mut g.angle_range.0, a.angle_min);
            set(&mut g.angle_range.1, a.angle_max);
            if let Some(sigma) = a.noise {
                let n = g.nuisance.get_or_insert(Nuisance {
                    gradient: 0.0,
                    noise_sigma: 0.0,
                });
                n.noise_sigma = sigma;
            }
            if a.serial {
                g.parallel = false;
            }
        }
        Command::Inspect(a) => apply_pipeline(&a.pipeline, &mut cfg.bench.pipeline),
        Command::Train(a) => {
            set(&mut cfg.train.epochs, a.epochs);
            set(&mut cfg.train.lr, a.lr);
            set(&mut cfg.train.batch_size, a.batch_size);
            set(&mut cfg.train.seed, a.seed);
        }
        Command::Eval(_) => {}
        Command::Bench(a) => {
            apply_pipeline(&a.pipeline, &mut cfg.bench.pipeline);
            set(&mut cfg.bench.match_iou, a.match_iou);
            if a.straight {
                cfg.bench.rotated = false;
            }
        }
    }
    Ok(())
}

fn required<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    v.as_deref()
        .ok_or_else(|| CliError::usage(format!("--{flag} is required")))
}

fn existing<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    let p = required(v, flag)?;
    if !p.exists() {
        return Err(CliError::usage(format!("--{flag}: {} does not exist", p.display())));
    }
    Ok(p)
}

fn optional_existing<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<Option<&'a Path>, CliError> {
    v.as_ref().map(|_| existing(v, flag)).transpose()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path, cfg: &CliConfig) -> Result<DenseNet, CliError> {
    load_weights(path, &cfg.model).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn load_dataset(dir: &Path) -> Result<DatasetManifest, CliError> {
    read_dataset(dir).map_err(|e| CliError::usage(format!("dataset {}: {e}", dir.display())))
}

pub fn gen(a: &crate::GenArgs, cfg: &CliConfig) -> Result<(), CliError> {
    let out = required(&a.out, "out")?;
    let m = aoi_core::synthgen::write_dataset(&cfg.gen, out, a.overwrite)?;
    println!("wrote {} to {}", plural(m.boards.len(), "board"), m.root.display());
    println!("templates: {}", m.templates.len());
    for class in &cfg.gen.classes {
        let boards: Vec<_> = m.boards_of(*class).collect();
        let defects: usize = boards.iter().map(|b| b.annotation.objects.len()).sum();
        println!(
            "{:<16} {:>4} boards {:>5} defects",
            class.title(),
            boards.len(),
            defects
        );
    }
    Ok(())
}

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("{n} {word}")
    } else {
        format!("{n} {word}s")
    }
}

#[derive(Serialize)]
struct InspectOutput<'a> {
    template: &'a Path,
    test: &'a Path,
    #[serde(flatten)]
    report: &'a aoi_core::pipeline::InspectionReport,
}

pub fn inspect(a: &crate::InspectArgs, cfg: &CliConfig) -> Result<(), CliError> {
    let template_path = existing(&a.template, "template")?;
    let test_path = existing(&a.test, "test")?;
    let weights = optional_existing(&a.weights, "weights")?.or(cfg.bench.pipeline.weights.as_deref());
    let model = weights.map(|w| load_model(w, cfg)).transpose()?;
    let template = read_color_png(template_path).map_err(|e| CliError::usage(e.to_string()))?;
    let test = read_color_png(test_path).map_err(|e| CliError::usage(e.to_string()))?;
    let report = run_inspect(&template, &test, model.as_ref(), &cfg.bench.pipeline)?;

    println!("{} detected", plural(report.detections.len(), "defect"));
    for d in &report.detections {
        let b = d.bbox;
        let class = d.class.map_or("unclassified", |c| c.name());
        println!("  [{}, {}, {}, {}] {class}", b.xmin, b.ymin, b.xmax, b.ymax);
    }
    println!(
        "rotation {:.3} deg, {} inliers",
        -report.transform.angle_degrees(),
        report.inliers
    );
    print!("{}", timing_table(&report.timings));

    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
        let out = InspectOutput {
            template: template_path,
            test: test_path,
            report: &report,
        };
        write_json(&dir.join("report.json"), &out)?;
        let base: &ColorImage = report.registered.as_ref().unwrap_or(&test);
        write_color_png(dir.join("overlay.png"), &draw_overlay(base, &report.detections, 2))?;
    }
    Ok(())
}

fn crop_split(data: &Path, cfg: &CliConfig) -> Result<CropSplit, CliError> {
    let manifest = load_dataset(data)?;
    let defects = collect_defect_crops(&manifest, &cfg.augment)?;
    Ok(split_defects(
        &defects,
        (cfg.split.train, cfg.split.val),
        cfg.split.seed,
    )?)
}

pub fn train(a: &crate::TrainArgs, cfg: &CliConfig) -> Result<(), CliError> {
    let data = existing(&a.data, "data")?;
    let out = required(&a.out_weights, "out-weights")?;
    let log_path = a.log.clone().unwrap_or_else(|| out.with_extension("log"));
    let split = crop_split(data, cfg)?;
    println!(
        "crops: {} train, {} val, {} test",
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    let mut log = File::create(&log_path)
        .map(BufWriter::new)
        .map_err(|e| CliError::runtime(format!("{}: {e}", log_path.display())))?;
    let mut model = DenseNet::new(&cfg.model, cfg.model_seed)?;
    let mut io_err = None;
    let summary = train_with(&mut model, &split.train, &split.val, &cfg.train, |e| {
        let line = format!(
            "epoch {:>3} lr {:.6} loss {:.6} train_acc {:.4} val_acc {:.4}",
            e.epoch + 1,
            e.lr,
            e.train_loss,
            e.train_accuracy,
            e.val_accuracy
        );
        println!("{line}");
        if let Err(err) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            io_err.get_or_insert(err);
        }
    })?;
    if let Some(e) = io_err {
        return Err(CliError::runtime(format!("{}: {e}", log_path.display())));
    }
    save_weights(&model, out)?;
    println!(
        "best epoch {} (val accuracy {:.4}); weights written to {}",
        summary.best_epoch + 1,
        summary.best_val_accuracy,
        out.display()
    );
    Ok(())
}

pub fn eval(a: &crate::EvalArgs, cfg: &CliConfig) -> Result<(), CliError> {
    let data = existing(&a.data, "data")?;
    let model = load_model(existing(&a.weights, "weights")?, cfg)?;
    let split = crop_split(data, cfg)?;
    if split.test.is_empty() {
        return Err(CliError::usage("the test split is empty; generate more boards"));
    }
    let imgs: Vec<&ColorImage> = split.test.iter().map(|s| &s.image).collect();
    let preds: Vec<DefectClass> = predict_batch(&model, &imgs)?.into_iter().map(|(c, _)| c).collect();
    let labels: Vec<DefectClass> = split.test.iter().map(|s| s.class).collect();
    let result = evaluate_classification(&preds, &labels)?;
    println!("{} test crops", split.test.len());
    print!("{}", classification_table(&result, "Test data (P_c)"));
    println!();
    print!("{}", confusion_table(&result));
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(p) = &a.out {
        write_json(p, &result)?;
    }
    Ok(())
}

pub fn bench(a: &crate::BenchArgs, cfg: &CliConfig) -> Result<(), CliError> {
    let data = existing(&a.data, "data")?;
    let weights = optional_existing(&a.weights, "weights")?.or(cfg.bench.pipeline.weights.as_deref());
    let model = weights.map(|w| load_model(w, cfg)).transpose()?;
    let manifest = load_dataset(data)?;
    let result = run_benchmark(&manifest, model.as_ref(), &cfg.bench)?;

    println!("Defects detection ({} boards)", manifest.boards.len());
    print!("{}", detection_table(&result.eval));
    if model.is_some() {
        println!("\nDefects classification");
        print!("{}", classification_table(&result.eval, "All samples (P_c)"));
    }
    println!("\nTime consumption (mean per board)");
    print!("{}", timing_table(&result.mean_timings));
    if let Some(m) = result.max_abs_angle_error() {
        println!("\nworst rotation error {m:.3} deg");
    }
    for w in &result.eval.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(p) = &a.out {
        write_json(p, &result)?;
    }
    let failed = result.boards.iter().filter(|b| b.error.is_some()).count();
    if failed > 0 {
        return Err(CliError::runtime(format!("{} failed", plural(failed, "board"))));
    }
    Ok(())
}
