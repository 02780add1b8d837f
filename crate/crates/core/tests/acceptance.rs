//! Acceptance suite: one verdict line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Pass criterion numbers as
//! arguments to run a subset, e.g. `cargo test --test acceptance -- 1 5`.
//! A criterion listed in `KNOWN_FAILURES` prints FAIL without failing the
//! run; if it starts passing the run fails so the list gets updated.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use aoi_core::imgproc::{close, dilate, erode, open, to_grayscale, StructElem};
use aoi_core::nn::{accuracy, conv2d_forward, train_with, DenseNet, ModelSpec, Tensor, TrainConfig};
use aoi_core::pipeline::{
    augment_crops, average_precision, detection_error_rate, evaluate_classification, evaluate_detection, run_benchmark,
    split_defects, AugmentConfig, BenchmarkConfig, ImageBoxes,
};
use aoi_core::registration::{align, warp_image, RegistrationConfig};
use aoi_core::synthgen::{
    apply_nuisance, derive_seed, gen_template, generate_board, read_dataset, template_layouts, write_dataset,
    BoardConfig, DatasetSpec, Nuisance,
};
use aoi_core::{BinaryImage, BoundingBox, DefectClass, Point2, Raster, Similarity2D};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use common::{gradient_report, naive_conv, rand_tensor, rng};

/// Criteria expected to fail, with the reason printed next to the verdict.
const KNOWN_FAILURES: &[(u32, &str)] = &[(
    1,
    "printed per-class test-data precisions average to 97.715, outside 97.74 +/- 0.02",
)];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

// 1 -------------------------------------------------------------------------

fn metric_fidelity() -> Verdict {
    // (actual, detected, printed P_d) per class, in table order
    let det_table = [
        (497, 497, "0.0"),
        (492, 493, "0.2"),
        (482, 483, "0.2"),
        (491, 491, "0.0"),
        (488, 488, "0.0"),
        (503, 503, "0.0"),
    ];
    let mut det_ok = true;
    for &(a, d, printed) in &det_table {
        let r = detection_error_rate(d, a).unwrap();
        det_ok &= format!("{r:.1}") == printed;
    }
    // the same rates through the box-matching evaluator: one board per class,
    // `a` disjoint boxes, `d - a` extra detections
    let images: Vec<ImageBoxes> = det_table
        .iter()
        .zip(DefectClass::ALL)
        .map(|(&(a, d, _), class)| {
            let b = |i: usize| {
                let (x, y) = ((i % 40) as u32 * 20, (i / 40) as u32 * 20);
                BoundingBox::new(x, y, x + 10, y + 10).unwrap()
            };
            ImageBoxes {
                truth: (0..a).map(|i| (class, b(i))).collect(),
                detections: (0..d).map(|i| b(i.min(a - 1))).collect(),
            }
        })
        .collect();
    let eval = evaluate_detection(&images, 0.33).unwrap();
    for (row, &(_, _, printed)) in eval.detection.iter().zip(&det_table) {
        det_ok &= format!("{:.1}", row.error_rate.unwrap()) == printed;
    }

    let test_pc = [98.96, 97.94, 97.74, 99.48, 93.65, 98.52];
    let all_pc = [100.0, 99.6, 99.18, 99.39, 99.39, 98.80];
    let ap = |v: &[f64]| average_precision(&v.iter().map(|&x| Some(x)).collect::<Vec<_>>()).unwrap();
    let (ap_test, ap_all) = (ap(&test_pc), ap(&all_pc));
    let test_ok = (ap_test - 97.74).abs() <= 0.02;
    let all_ok = (ap_all - 99.40).abs() <= 0.02;

    // evaluate_classification on a confusion reproducing 1-correct-in-N rows
    let labels: Vec<DefectClass> = DefectClass::ALL
        .iter()
        .flat_map(|&c| std::iter::repeat_n(c, 4))
        .collect();
    let mut preds = labels.clone();
    preds[0] = DefectClass::Spur;
    let cls = evaluate_classification(&preds, &labels).unwrap();
    let cls_ok = (cls.average_precision.unwrap() - (75.0 + 500.0) / 6.0).abs() < 1e-9;

    verdict(
        det_ok && test_ok && all_ok && cls_ok,
        format!(
            "P_d table {}; AP_c test {ap_test:.3} vs 97.74 {}; AP_c all {ap_all:.3} vs 99.40 {}; evaluator {}",
            mark(det_ok),
            mark(test_ok),
            mark(all_ok),
            mark(cls_ok)
        ),
    )
}

// 2 -------------------------------------------------------------------------

fn end_to_end(dir: &Path) -> Verdict {
    let spec = DatasetSpec {
        boards_per_class: 10,
        angle_range: (-45.0, 45.0),
        ..Default::default()
    };
    let manifest = write_dataset(&spec, dir.join("e2e"), false).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let cfg = BenchmarkConfig::default();
    let t = Instant::now();
    let result = pool.install(|| run_benchmark(&manifest, None, &cfg)).unwrap();
    let wall_per_board = t.elapsed().as_secs_f64() / manifest.boards.len() as f64;

    let worst_pd = result
        .eval
        .detection
        .iter()
        .map(|d| d.error_rate.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    // coverage recomputed straight from the boxes
    let (mut covered, mut total) = (0usize, 0usize);
    for (b, o) in manifest.boards.iter().zip(&result.boards) {
        for gt in &b.annotation.objects {
            total += 1;
            covered += usize::from(o.detections.iter().any(|d| iou(&d.bbox, &gt.bbox) >= 0.33));
        }
    }
    let coverage = covered as f64 / total as f64;
    let slowest = result.boards.iter().map(|b| b.timings.total).fold(0.0, f64::max);
    let failures = result.boards.iter().filter(|b| b.error.is_some()).count();
    let ok = worst_pd <= 2.0 && coverage >= 0.98 && slowest <= 2.0 && wall_per_board <= 2.0 && failures == 0;
    verdict(
        ok,
        format!(
            "{} boards; worst P_d {worst_pd:.2}% (<= 2); coverage {covered}/{total} = {:.2}% (>= 98); slowest board {slowest:.2} s, mean wall {wall_per_board:.2} s (<= 2); registration failures {failures}",
            manifest.boards.len(),
            coverage * 100.0
        ),
    )
}

fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.xmax.min(b.xmax) as f64 - a.xmin.max(b.xmin) as f64).max(0.0);
    let iy = (a.ymax.min(b.ymax) as f64 - a.ymin.max(b.ymin) as f64).max(0.0);
    let inter = ix * iy;
    let area = |r: &BoundingBox| (r.xmax - r.xmin) as f64 * (r.ymax - r.ymin) as f64;
    inter / (area(a) + area(b) - inter)
}

// 3 -------------------------------------------------------------------------

const CLASSIFIER_BOARDS_PER_CLASS: usize = 64;
const CLASSIFIER_EPOCHS: usize = 8;

fn classifier() -> Verdict {
    let t = Instant::now();
    let spec = DatasetSpec::default();
    let layouts = template_layouts(&spec).unwrap();
    let aug = AugmentConfig::default();
    let mut defects = Vec::new();
    for class in DefectClass::ALL {
        for i in 0..CLASSIFIER_BOARDS_PER_CLASS {
            let b = generate_board(&spec, &layouts, class, i).unwrap();
            let seed = derive_seed(aug.seed, class.ordinal() as u64, i as u64);
            defects.extend(augment_crops(&b.image, &b.annotation, &aug, seed).unwrap());
        }
    }
    let split = split_defects(&defects, (0.62, 0.20), 11).unwrap();
    let min_train = DefectClass::ALL
        .iter()
        .map(|&c| split.train.iter().filter(|s| s.class == c).count())
        .min()
        .unwrap();

    let cfg = TrainConfig {
        epochs: CLASSIFIER_EPOCHS,
        ..Default::default()
    };
    let recipe = TrainConfig::default();
    let recipe_ok = (
        cfg.lr,
        cfg.lr_decay,
        cfg.decay_every,
        cfg.momentum,
        cfg.weight_decay,
        cfg.batch_size,
    ) == (0.01, 0.1, 7, 0.9, 1e-5, 8)
        && (recipe.lr, recipe.batch_size) == (cfg.lr, cfg.batch_size);
    let mut model = DenseNet::new(&ModelSpec::default(), 1).unwrap();
    let log = train_with(&mut model, &split.train, &split.val, &cfg, |e| {
        eprintln!(
            "    epoch {} lr {} loss {:.4} train {:.3} val {:.3} ({:.0} s)",
            e.epoch + 1,
            e.lr,
            e.train_loss,
            e.train_accuracy,
            e.val_accuracy,
            t.elapsed().as_secs_f64()
        )
    })
    .unwrap();
    let acc = accuracy(&model, &split.test).unwrap();
    let minutes = t.elapsed().as_secs_f64() / 60.0;
    let ok = recipe_ok && min_train >= 600 && acc >= 0.90 && minutes <= 30.0;
    verdict(
        ok,
        format!(
            "recipe {}; train/val/test {}/{}/{} crops, min {min_train} per class (>= 600); {} epochs, best val epoch {}; test accuracy {:.2}% (>= 90); {minutes:.1} min (<= 30)",
            mark(recipe_ok),
            split.train.len(),
            split.val.len(),
            split.test.len(),
            cfg.epochs,
            log.best_epoch + 1,
            acc * 100.0
        ),
    )
}

// 4 -------------------------------------------------------------------------

fn gradient_integrity() -> Verdict {
    let report = gradient_report(0xFD);
    let worst = report
        .iter()
        .cloned()
        .fold(("", 0.0f64), |a, b| if b.1 > a.1 { b } else { a });
    let grad_ok = report.iter().all(|(_, e)| *e <= 1e-4);

    let mut r = rng(5);
    let (mut conv_worst, mut conv_abs) = (0f64, 0f64);
    for &(n, c, h, o, k, s, p) in &[(2, 3, 8, 4, 3, 1, 1), (1, 3, 16, 4, 7, 2, 3), (2, 6, 9, 3, 1, 1, 0)] {
        let x = rand_tensor::<f32>(&[n, c, h, h], &mut r);
        let w = rand_tensor::<f32>(&[o, c, k, k], &mut r);
        let fast = conv2d_forward(&x, &w, s, p).unwrap();
        // loops run in f64 on the same f32 inputs, so only the kernel under
        // test contributes rounding; errors are scaled by the dot-product
        // magnitude sum |x||w|, which bounds any summation order
        let (xd, wd) = (x.cast::<f64>(), w.cast::<f64>());
        let exact = naive_conv(&xd, &wd, s, p);
        let scale = naive_conv(&xd.map(f64::abs), &wd.map(f64::abs), s, p);
        for ((a, b), m) in fast.data().iter().zip(exact.data()).zip(scale.data()) {
            let err = (*a as f64 - b).abs();
            conv_abs = conv_abs.max(err);
            conv_worst = conv_worst.max(err / m.max(1.0));
        }
    }
    let conv_ok = conv_worst <= 1e-6;
    verdict(
        grad_ok && conv_ok,
        format!(
            "{} layers x 5 shapes, worst rel err {:.2e} ({}) (<= 1e-4); conv vs f64 loops rel {conv_worst:.2e} (<= 1e-6), abs {conv_abs:.2e}",
            report.len(),
            worst.1,
            worst.0
        ),
    )
}

// 5 -------------------------------------------------------------------------

fn architecture() -> Verdict {
    let model = DenseNet::<f32>::new(&ModelSpec::default(), 0).unwrap();
    let trace = model.shape_trace(&Tensor::zeros(&[1, 3, 64, 64])).unwrap();
    let spatial: Vec<String> = trace
        .iter()
        .skip(1)
        .map(|(_, s)| {
            if s.len() == 4 {
                format!("{}x{}", s[2], s[3])
            } else {
                s[1].to_string()
            }
        })
        .collect();
    let expected = ["32x32", "16x16", "16x16", "8x8", "8x8", "1x1", "6", "6"];
    let trace_ok = spatial == expected;

    let blocks = model.dense_blocks();
    let mut law_ok = blocks.len() == 2;
    let mut edges = Vec::new();
    for b in &blocks {
        let k0 = b.layers[0].in_channels();
        for (l, layer) in b.layers.iter().enumerate() {
            law_ok &= layer.in_channels() == k0 + 32 * l;
        }
        law_ok &= b.layers.len() == 6 && b.out_channels() == k0 + 32 * 6;
        edges.push(b.connections().len());
    }
    let edges_ok = edges.iter().all(|&e| e == 21);
    verdict(
        trace_ok && law_ok && edges_ok,
        format!(
            "trace {} {}; channel law k0+32(l-1) {}; concatenation edges {edges:?} (21 each) {}",
            spatial.join(" -> "),
            mark(trace_ok),
            mark(law_ok),
            mark(edges_ok)
        ),
    )
}

// 6 -------------------------------------------------------------------------

fn random_binary(r: &mut ChaCha8Rng) -> BinaryImage {
    let density = r.random_range(0.05..0.95);
    let mut img = BinaryImage::new(32, 32);
    for y in 0..32 {
        for x in 0..32 {
            img.put(x, y, r.random_bool(density));
        }
    }
    img
}

/// Set-definition erosion/dilation over the element's cells; cells falling
/// outside the raster are skipped.
fn brute(a: &BinaryImage, e: &StructElem, erode: bool) -> BinaryImage {
    let (w, h) = (a.width() as isize, a.height() as isize);
    let (ew, eh) = (e.width() as isize, e.height() as isize);
    let mut out = BinaryImage::new(a.width(), a.height());
    for y in 0..h {
        for x in 0..w {
            let mut all = true;
            let mut any = false;
            for j in 0..eh {
                for i in 0..ew {
                    if !e.mask().get(i as usize, j as usize) {
                        continue;
                    }
                    let (dx, dy) = (i - ew / 2, j - eh / 2);
                    // erosion probes z + b, dilation z - b
                    let (sx, sy) = if erode { (x + dx, y + dy) } else { (x - dx, y - dy) };
                    if sx < 0 || sy < 0 || sx >= w || sy >= h {
                        continue;
                    }
                    let v = a.get(sx as usize, sy as usize);
                    all &= v;
                    any |= v;
                }
            }
            out.put(x as usize, y as usize, if erode { all } else { any });
        }
    }
    out
}

fn morphology_algebra() -> Verdict {
    let mut r = rng(0x6D0);
    let mut violations: BTreeMap<&str, usize> = BTreeMap::new();
    for _ in 0..1000 {
        let a = random_binary(&mut r);
        let (w, h) = (2 * r.random_range(0..4) + 1, 2 * r.random_range(0..4) + 1);
        let e = if r.random_bool(0.5) {
            StructElem::rect(w, h).unwrap()
        } else {
            StructElem::ellipse(w, h).unwrap()
        };
        let er = erode(&a, &e);
        let di = dilate(&a, &e);
        let op = open(&a, &e);
        let cl = close(&a, &e);
        let mut check = |name, ok: bool| {
            *violations.entry(name).or_default() += usize::from(!ok);
        };
        check("open idempotent", open(&op, &e) == op);
        check("close idempotent", close(&cl, &e) == cl);
        check(
            "erode/dilate duality",
            er.complement() == dilate(&a.complement(), &e.reflect()),
        );
        check(
            "open/close duality",
            op.complement() == close(&a.complement(), &e.reflect()),
        );
        check("open anti-extensive", op.is_subset_of(&a));
        check("close extensive", a.is_subset_of(&cl));
        check("erode anti-extensive", er.is_subset_of(&a));
        check("dilate extensive", a.is_subset_of(&di));
        check("erode = set definition", er == brute(&a, &e, true));
        check("dilate = set definition", di == brute(&a, &e, false));
    }
    let total: usize = violations.values().sum();
    let bad: Vec<String> = violations
        .iter()
        .filter(|(_, &v)| v > 0)
        .map(|(k, v)| format!("{k}: {v}"))
        .collect();
    verdict(
        total == 0,
        format!(
            "1000 random 32x32 images, {} properties; violations {total}{}",
            violations.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!(" ({})", bad.join(", "))
            }
        ),
    )
}

// 7 -------------------------------------------------------------------------

/// Planted template-to-test similarity: rotation about the center, then a
/// shift.
fn planted(r: &mut ChaCha8Rng, n: usize) -> Similarity2D {
    let c = (n as f64 - 1.0) / 2.0;
    let rot = Similarity2D::rotation_about(Point2::new(c, c), r.random_range(-45.0f64..=45.0).to_radians());
    let (len, dir) = (r.random_range(0.0..=40.0), r.random_range(0.0..std::f64::consts::TAU));
    let shift = Similarity2D::new(1.0, 0.0, len * dir.cos(), len * dir.sin()).unwrap();
    shift.compose(&rot)
}

fn registration() -> Verdict {
    let cfg = RegistrationConfig::default();
    let mut r = rng(0x5E6);
    let (mut clean_ang, mut clean_px, mut noisy_ang) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = 0;
    let mut deterministic = true;
    for k in 0..12 {
        let noisy = k >= 8;
        let (board, layout) = gen_template(derive_seed(0x5E6, 7, k), &BoardConfig::default()).unwrap();
        let n = board.width();
        let t = planted(&mut r, n);
        let fill = layout.palette.substrate;
        let mut test = warp_image(&board, &t, (n, n), &fill).unwrap();
        if noisy {
            let nuisance = Nuisance {
                gradient: 0.0,
                noise_sigma: 5.0,
            };
            apply_nuisance(&mut test, &nuisance, k);
        }
        let (tg, sg) = (to_grayscale(&board), to_grayscale(&test));
        let Ok(a) = align(&tg, &sg, &cfg) else {
            failures += 1;
            continue;
        };
        if k == 0 {
            deterministic = align(&tg, &sg, &cfg).map(|b| b == a).unwrap_or(false);
        }
        // recovered maps test -> template, so it should undo the plant
        let residual = a.transform.compose(&t);
        let ang = residual.angle.to_degrees().abs();
        let c = Point2::new((n as f64 - 1.0) / 2.0, (n as f64 - 1.0) / 2.0);
        let px = residual.apply(c).distance(&c);
        if noisy {
            noisy_ang = noisy_ang.max(ang);
        } else {
            clean_ang = clean_ang.max(ang);
            clean_px = clean_px.max(px);
        }
    }
    let ok = failures == 0 && clean_ang <= 0.5 && clean_px <= 1.0 && noisy_ang <= 1.0 && deterministic;
    verdict(
        ok,
        format!(
            "8 noiseless: worst {clean_ang:.3} deg (<= 0.5), {clean_px:.3} px (<= 1); 4 with noise sigma 5: worst {noisy_ang:.3} deg (<= 1.0); failures {failures}; repeat run identical {}",
            mark(deterministic)
        ),
    )
}

// 8 -------------------------------------------------------------------------

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn expected_xml(ann: &aoi_core::Annotation) -> String {
    let mut s = format!(
        "<annotation>\n\t<filename>{}</filename>\n\t<size>\n\t\t<width>{}</width>\n\t\t<height>{}</height>\n\t\t<depth>{}</depth>\n\t</size>\n",
        ann.filename, ann.width, ann.height, ann.depth
    );
    for o in &ann.objects {
        let b = o.bbox;
        s += &format!(
            "\t<object>\n\t\t<name>{}</name>\n\t\t<bndbox>\n\t\t\t<xmin>{}</xmin>\n\t\t\t<ymin>{}</ymin>\n\t\t\t<xmax>{}</xmax>\n\t\t\t<ymax>{}</ymax>\n\t\t</bndbox>\n\t</object>\n",
            o.class.name(),
            b.xmin,
            b.ymin,
            b.xmax,
            b.ymax
        );
    }
    s + "</annotation>\n"
}

fn dataset_contract(dir: &Path) -> Verdict {
    let spec = DatasetSpec {
        boards_per_class: 2,
        templates: 3,
        seed: 77,
        ..Default::default()
    };
    let serial = DatasetSpec {
        parallel: false,
        ..spec.clone()
    };
    let m1 = write_dataset(&spec, dir.join("a"), false).unwrap();
    let m2 = write_dataset(&spec, dir.join("b"), false).unwrap();
    let m3 = write_dataset(&serial, dir.join("c"), false).unwrap();
    let back = read_dataset(&m1.root).unwrap();
    let round_trip = back == m1;

    let (t1, t2, t3) = (tree(&m1.root), tree(&m2.root), tree(&m3.root));
    let same_seed = t1 == t2;
    let serial_ok = t1 == t3 && m1.boards == m3.boards;

    let mut xml_ok = true;
    for b in &m1.boards {
        let bytes = &t1[&m1
            .annotation_path(b)
            .strip_prefix(&m1.root)
            .unwrap()
            .to_string_lossy()
            .into_owned()];
        xml_ok &= std::str::from_utf8(bytes)
            .map(|s| s == expected_xml(&b.annotation))
            .unwrap_or(false);
    }
    let mut angles_ok = true;
    for class in DefectClass::ALL {
        let text = std::fs::read_to_string(m1.angles_path(class)).unwrap();
        let boards: Vec<_> = m1.boards_of(class).collect();
        angles_ok &= !text.contains('\r') && text.ends_with('\n') && text.lines().count() == boards.len();
        for (line, b) in text.lines().zip(&boards) {
            let mut parts = line.split(' ');
            let name = parts.next().unwrap_or_default();
            let angle = parts.next().and_then(|a| a.parse::<f64>().ok());
            angles_ok &= name == b.filename && parts.next().is_none() && angle == b.angle;
            angles_ok &= line[name.len() + 1..]
                .chars()
                .all(|c| c.is_ascii_digit() || c == '.' || c == '-');
        }
    }
    verdict(
        round_trip && same_seed && serial_ok && xml_ok && angles_ok,
        format!(
            "{} files; read-back {}; xml bytes {}; angles files {}; same seed identical {}; serial == parallel {}",
            t1.len(),
            mark(round_trip),
            mark(xml_ok),
            mark(angles_ok),
            mark(same_seed),
            mark(serial_ok)
        ),
    )
}

// ---------------------------------------------------------------------------

type Criterion<'a> = (u32, &'static str, Box<dyn Fn() -> Verdict + 'a>);

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let dir = tempfile::tempdir().unwrap();
    let criteria: Vec<Criterion> = vec![
        (1, "metric fidelity", Box::new(metric_fidelity)),
        (
            2,
            "desk-scale end-to-end detection",
            Box::new(|| end_to_end(dir.path())),
        ),
        (3, "classifier training", Box::new(classifier)),
        (4, "gradient integrity", Box::new(gradient_integrity)),
        (5, "architecture conformance", Box::new(architecture)),
        (6, "morphology algebra", Box::new(morphology_algebra)),
        (7, "registration accuracy", Box::new(registration)),
        (8, "dataset contract", Box::new(|| dataset_contract(dir.path()))),
    ];
    let mut unexpected = 0;
    for (id, name, run) in &criteria {
        if !selected.is_empty() && !selected.contains(id) {
            continue;
        }
        let t = Instant::now();
        let v = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|p| verdict(false, format!("panicked: {}", panic_text(&p))));
        let known = KNOWN_FAILURES.iter().find(|(k, _)| k == id).map(|(_, why)| *why);
        let label = match (v.pass, known) {
            (true, None) => "PASS".to_string(),
            (true, Some(_)) => {
                unexpected += 1;
                "PASS (unexpected, listed as known failure)".to_string()
            }
            (false, Some(why)) => format!("FAIL (known: {why})"),
            (false, None) => {
                unexpected += 1;
                "FAIL".to_string()
            }
        };
        println!(
            "criterion {id} {name}: {label} | {} [{:.1} s]",
            v.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} criterion verdict(s) differ from expectation");
        ExitCode::FAILURE
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "non-string payload".into())
}
