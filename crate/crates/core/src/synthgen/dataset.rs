//! On-disk dataset tree:
//!
//! ```text
//! <root>/PCB_USED/01.png ...
//! <root>/Images/<Class_folder>/<tt>_<class>_<kk>.png
//! <root>/Annotations/<Class_folder>/<tt>_<class>_<kk>.xml
//! <root>/rotation/<Class_folder>/<tt>_<class>_<kk>.png
//! <root>/rotation/<Class_folder>_angles.txt
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::annotation::{annotation_to_xml, read_annotation};
use super::defects::{inject_defects, DefectParams};
use super::layout::{gen_layout, render, BoardConfig, BoardLayout};
use super::{apply_nuisance, derive_seed, rotate_sample, Nuisance};
use crate::error::{Error, Result};
use crate::io::encode_color_png;
use crate::types::{Annotation, ColorImage, DefectClass};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub classes: Vec<DefectClass>,
    pub boards_per_class: usize,
    pub templates: usize,
    pub seed: u64,
    pub board: BoardConfig,
    pub defects: DefectParams,
    /// Rotation angles are drawn uniformly from `[lo, hi)` degrees.
    pub angle_range: (f64, f64),
    pub nuisance: Option<Nuisance>,
    pub parallel: bool,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            classes: DefectClass::ALL.to_vec(),
            boards_per_class: 10,
            templates: 10,
            seed: 2019,
            board: BoardConfig::default(),
            defects: DefectParams::default(),
            angle_range: (0.0, 360.0),
            nuisance: None,
            parallel: true,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() || self.boards_per_class == 0 {
            return Err(Error::InvalidArgument(
                "dataset needs at least one class and one board".into(),
            ));
        }
        if self.templates == 0 || self.templates > 99 || self.boards_per_class > 99 {
            return Err(Error::InvalidArgument(
                "templates must be in 1..=99 and boards_per_class <= 99".into(),
            ));
        }
        let (lo, hi) = self.angle_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidArgument(format!("angle_range ({lo}, {hi}) is invalid")));
        }
        self.board.validate()?;
        self.defects.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoardEntry {
    pub class: DefectClass,
    /// Image file name, shared by the straight and rotated copies.
    pub filename: String,
    /// Template file name inside `PCB_USED`.
    pub template: String,
    pub annotation: Annotation,
    /// Rotation applied to produce the rotated copy, degrees.
    pub angle: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub templates: Vec<String>,
    pub boards: Vec<BoardEntry>,
}

impl DatasetManifest {
    pub fn template_path(&self, name: &str) -> PathBuf {
        self.root.join("PCB_USED").join(name)
    }

    pub fn image_path(&self, b: &BoardEntry) -> PathBuf {
        self.root.join("Images").join(b.class.folder_name()).join(&b.filename)
    }

    pub fn annotation_path(&self, b: &BoardEntry) -> PathBuf {
        self.root
            .join("Annotations")
            .join(b.class.folder_name())
            .join(Path::new(&b.filename).with_extension("xml"))
    }

    pub fn rotated_path(&self, b: &BoardEntry) -> PathBuf {
        self.root.join("rotation").join(b.class.folder_name()).join(&b.filename)
    }

    pub fn angles_path(&self, class: DefectClass) -> PathBuf {
        self.root
            .join("rotation")
            .join(format!("{}_angles.txt", class.folder_name()))
    }

    pub fn boards_of(&self, class: DefectClass) -> impl Iterator<Item = &BoardEntry> {
        self.boards.iter().filter(move |b| b.class == class)
    }
}

pub fn board_filename(template: usize, class: DefectClass, k: usize) -> String {
    format!("{template:02}_{}_{k:02}.png", class.name())
}

pub fn template_filename(template: usize) -> String {
    format!("{template:02}.png")
}

/// One generated sample before it is written.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedBoard {
    pub class: DefectClass,
    /// 1-based template number.
    pub template: usize,
    pub image: ColorImage,
    pub rotated: ColorImage,
    pub angle: f64,
    pub annotation: Annotation,
}

const TEMPLATE_STREAM: u64 = 0x7E3A;
const RETRIES: u64 = 8;

/// Template layouts for a spec. A layout that cannot host the requested
/// defects of every class is regenerated with the next derived seed.
pub fn template_layouts(spec: &DatasetSpec) -> Result<Vec<BoardLayout>> {
    let build = |t: usize| -> Result<BoardLayout> {
        let mut last = None;
        for attempt in 0..RETRIES {
            let seed = derive_seed(spec.seed, TEMPLATE_STREAM + attempt, t as u64);
            let layout = gen_layout(seed, &spec.board)?;
            let ok = spec.classes.iter().all(|&c| {
                super::defects::plan_defects(&layout, c, seed, &spec.defects)
                    .map_err(|e| last = Some(e))
                    .is_ok()
            });
            if ok {
                return Ok(layout);
            }
        }
        Err(last.unwrap_or_else(|| Error::Infeasible("template generation failed".into())))
    };
    if spec.parallel {
        (0..spec.templates).into_par_iter().map(build).collect()
    } else {
        (0..spec.templates).map(build).collect()
    }
}

/// Generates board `index` (0-based) of `class`.
pub fn generate_board(
    spec: &DatasetSpec,
    layouts: &[BoardLayout],
    class: DefectClass,
    index: usize,
) -> Result<GeneratedBoard> {
    let t = index % layouts.len();
    let layout = &layouts[t];
    let seed = derive_seed(spec.seed, 1 + class.ordinal() as u64, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut result = Err(Error::Infeasible("no attempt made".into()));
    for attempt in 0..RETRIES {
        result = inject_defects(layout, class, derive_seed(seed, 0xDEF, attempt), &spec.defects);
        if result.is_ok() {
            break;
        }
    }
    let (mut image, mut annotation) = result?;
    annotation.filename = board_filename(t + 1, class, index + 1);

    let (lo, hi) = spec.angle_range;
    let raw = if hi > lo { rng.random_range(lo..hi) } else { lo };
    // the angle is stored with four decimals; rotate by exactly that value
    let angle: f64 = format!("{raw:.4}").parse().expect("formatted float parses");
    let fill = layout.palette.substrate;
    let mut rotated = rotate_sample(&image, angle, fill);
    if let Some(n) = &spec.nuisance {
        apply_nuisance(&mut image, n, derive_seed(seed, 0xA1, 0));
        apply_nuisance(&mut rotated, n, derive_seed(seed, 0xA1, 1));
    }
    Ok(GeneratedBoard {
        class,
        template: t + 1,
        image,
        rotated,
        angle,
        annotation,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Generates the full tree under `out_root`. Files are written to a sibling
/// staging directory which is renamed into place once complete; an existing
/// non-empty `out_root` is an error unless `overwrite` is set.
pub fn write_dataset(spec: &DatasetSpec, out_root: impl AsRef<Path>, overwrite: bool) -> Result<DatasetManifest> {
    spec.validate()?;
    let out_root = out_root.as_ref().to_path_buf();
    if out_root.exists() {
        let empty = std::fs::read_dir(&out_root)
            .map_err(|e| Error::io(&out_root, e))?
            .next()
            .is_none();
        if !empty && !overwrite {
            return Err(Error::InvalidArgument(format!(
                "{} exists and is not empty",
                out_root.display()
            )));
        }
    }
    let name = out_root
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no final component", out_root.display())))?
        .to_string_lossy()
        .into_owned();
    let staging = out_root.with_file_name(format!(".{name}.staging"));
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    let staged = DatasetManifest {
        root: staging.clone(),
        templates: Vec::new(),
        boards: Vec::new(),
    };

    let layouts = template_layouts(spec)?;
    create_dir(&staging.join("PCB_USED"))?;
    let mut templates = Vec::with_capacity(layouts.len());
    for (t, layout) in layouts.iter().enumerate() {
        let fname = template_filename(t + 1);
        write_file(&staged.template_path(&fname), &encode_color_png(&render(layout))?)?;
        templates.push(fname);
    }
    for &class in &spec.classes {
        for sub in ["Images", "Annotations", "rotation"] {
            create_dir(&staging.join(sub).join(class.folder_name()))?;
        }
    }

    let jobs: Vec<(DefectClass, usize)> = spec
        .classes
        .iter()
        .flat_map(|&c| (0..spec.boards_per_class).map(move |i| (c, i)))
        .collect();
    let job = |&(class, index): &(DefectClass, usize)| -> Result<BoardEntry> {
        let b = generate_board(spec, &layouts, class, index)?;
        let entry = BoardEntry {
            class,
            filename: b.annotation.filename.clone(),
            template: template_filename(b.template),
            annotation: b.annotation,
            angle: Some(b.angle),
        };
        write_file(&staged.image_path(&entry), &encode_color_png(&b.image)?)?;
        write_file(&staged.rotated_path(&entry), &encode_color_png(&b.rotated)?)?;
        write_file(
            &staged.annotation_path(&entry),
            annotation_to_xml(&entry.annotation).as_bytes(),
        )?;
        Ok(entry)
    };
    let boards: Vec<BoardEntry> = if spec.parallel {
        jobs.par_iter().map(job).collect::<Result<_>>()?
    } else {
        jobs.iter().map(job).collect::<Result<_>>()?
    };

    for &class in &spec.classes {
        let mut text = String::new();
        for b in boards.iter().filter(|b| b.class == class) {
            text.push_str(&format!("{} {:.4}\n", b.filename, b.angle.unwrap_or(0.0)));
        }
        write_file(&staged.angles_path(class), text.as_bytes())?;
    }

    if out_root.exists() {
        std::fs::remove_dir_all(&out_root).map_err(|e| Error::io(&out_root, e))?;
    }
    std::fs::rename(&staging, &out_root).map_err(|e| Error::io(&out_root, e))?;
    Ok(DatasetManifest {
        root: out_root,
        templates,
        boards,
    })
}

fn parse_angles(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let field = format!("{}:{}", path.display(), n + 1);
        let (name, angle) = line
            .rsplit_once(' ')
            .ok_or_else(|| Error::parse(&field, "expected `<filename> <angle>`"))?;
        let angle: f64 = angle
            .parse()
            .map_err(|_| Error::parse(&field, format!("bad angle `{angle}`")))?;
        if out.insert(name.to_string(), angle).is_some() {
            return Err(Error::parse(&field, format!("duplicate entry for {name}")));
        }
    }
    Ok(out)
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    files.sort();
    Ok(files)
}

/// Reconstructs the manifest of a dataset tree from its files.
pub fn read_dataset(root: impl AsRef<Path>) -> Result<DatasetManifest> {
    let root = root.as_ref().to_path_buf();
    let templates: Vec<String> = sorted_files(&root.join("PCB_USED"), "png")?
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let mut m = DatasetManifest {
        root,
        templates,
        boards: Vec::new(),
    };
    for class in DefectClass::ALL {
        let dir = m.root.join("Annotations").join(class.folder_name());
        if !dir.is_dir() {
            continue;
        }
        let angles_path = m.angles_path(class);
        let angles = if angles_path.exists() {
            parse_angles(&angles_path)?
        } else {
            BTreeMap::new()
        };
        for xml in sorted_files(&dir, "xml")? {
            let annotation = read_annotation(&xml)?;
            let filename = annotation.filename.clone();
            let prefix = filename.split('_').next().unwrap_or_default();
            let template = format!("{prefix}.png");
            if !m.templates.contains(&template) {
                return Err(Error::MissingTemplate {
                    class: class.name().into(),
                    detail: format!("{filename} refers to PCB_USED/{template}, which does not exist"),
                });
            }
            let entry = BoardEntry {
                class,
                angle: angles.get(&filename).copied(),
                filename,
                template,
                annotation,
            };
            let img = m.image_path(&entry);
            if !img.exists() {
                return Err(Error::io(img, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
            if entry.angle.is_some() && !m.rotated_path(&entry).exists() {
                return Err(Error::io(
                    m.rotated_path(&entry),
                    std::io::Error::from(std::io::ErrorKind::NotFound),
                ));
            }
            m.boards.push(entry);
        }
    }
    // generation order is class-major, index-minor; file order matches it
    // because the board number is the last field of the name
    m.boards.sort_by(|a, b| {
        a.class
            .ordinal()
            .cmp(&b.class.ordinal())
            .then_with(|| board_number(&a.filename).cmp(&board_number(&b.filename)))
    });
    Ok(m)
}

fn board_number(filename: &str) -> u32 {
    Path::new(filename)
        .file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.rsplit('_').next())
        .and_then(|n| n.parse().ok())
        .unwrap_or(0)
}
