//! Procedural board geometry: pads and Manhattan-routed traces on a jittered
//! grid, plus a hard-edged renderer.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ColorImage, Raster};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IPoint {
    pub x: i32,
    pub y: i32,
}

impl IPoint {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette {
    pub substrate: [u8; 3],
    pub copper: [u8; 3],
    pub hole: [u8; 3],
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            substrate: [30, 90, 40],
            copper: [200, 170, 90],
            hole: [20, 20, 20],
        }
    }
}

/// Axis-aligned polyline of constant width.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub points: Vec<IPoint>,
    pub width: u32,
}

impl Trace {
    pub fn segments(&self) -> impl Iterator<Item = (IPoint, IPoint)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pad {
    pub center: IPoint,
    pub radius: u32,
    pub hole_radius: u32,
    /// Index of the trace this pad terminates; `None` for a via.
    pub trace: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoardLayout {
    pub width: usize,
    pub height: usize,
    pub traces: Vec<Trace>,
    pub pads: Vec<Pad>,
    pub palette: Palette,
    /// Square all copper is confined to; it fits inside the inscribed circle
    /// so any rotation about the canvas center keeps the board on canvas.
    pub content: (IPoint, IPoint),
    pub pitch: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoardConfig {
    pub width: usize,
    pub height: usize,
    pub traces: usize,
    pub vias: usize,
    pub pitch: u32,
    pub jitter: u32,
    pub trace_width: (u32, u32),
    pub pad_radius: (u32, u32),
    pub hole_radius: (u32, u32),
    /// Probability that a trace gets a parallel neighbour one grid line away.
    pub bus_probability: f64,
    /// Longest straight run in grid steps.
    pub max_run: u32,
    pub palette: Palette,
}

impl Default for BoardConfig {
    fn default() -> Self {
        Self {
            width: 600,
            height: 600,
            traces: 14,
            vias: 12,
            pitch: 34,
            jitter: 2,
            trace_width: (14, 18),
            pad_radius: (13, 16),
            hole_radius: (5, 7),
            bus_probability: 0.5,
            max_run: 6,
            palette: Palette::default(),
        }
    }
}

impl BoardConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.width < 256 || self.height < 256 {
            return bad(format!(
                "canvas must be at least 256x256, got {}x{}",
                self.width, self.height
            ));
        }
        for (name, (lo, hi)) in [
            ("trace_width", self.trace_width),
            ("pad_radius", self.pad_radius),
            ("hole_radius", self.hole_radius),
        ] {
            if lo > hi {
                return bad(format!("{name} range is empty: ({lo}, {hi})"));
            }
        }
        if self.trace_width.0 < 3 {
            return bad("trace width must be >= 3 px".into());
        }
        if self.hole_radius.1 >= self.pad_radius.0 {
            return bad("hole radius must stay below pad radius".into());
        }
        // a pad next to a trace on the neighbouring grid line keeps a 2 px gap
        let clearance = self.pad_radius.1 + self.trace_width.1.div_ceil(2) + 2 * self.jitter + 2;
        if self.pitch <= clearance {
            return bad(format!(
                "pitch {} too small for the feature sizes (need > {clearance})",
                self.pitch
            ));
        }
        if !(0.0..=1.0).contains(&self.bus_probability) {
            return bad("bus_probability must be in [0, 1]".into());
        }
        if self.max_run < 2 {
            return bad("max_run must be >= 2".into());
        }
        Ok(())
    }
}

/// Centered square whose corners sit inside the inscribed circle.
pub(crate) fn content_square(width: usize, height: usize) -> (IPoint, IPoint) {
    let r = (width.min(height) as f64 - 1.0) / 2.0 - 4.0;
    let side = (2.0 * r / std::f64::consts::SQRT_2).floor() as i32;
    let x0 = (width as i32 - side) / 2;
    let y0 = (height as i32 - side) / 2;
    (IPoint::new(x0, y0), IPoint::new(x0 + side, y0 + side))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Cell {
    Free,
    Trace,
    Pad,
}

struct Grid {
    cols: i32,
    rows: i32,
    xs: Vec<i32>,
    ys: Vec<i32>,
    cells: Vec<Cell>,
}

impl Grid {
    fn at(&self, c: i32, r: i32) -> Option<Cell> {
        (c >= 0 && r >= 0 && c < self.cols && r < self.rows).then(|| self.cells[(r * self.cols + c) as usize])
    }

    fn set(&mut self, c: i32, r: i32, v: Cell) {
        self.cells[(r * self.cols + c) as usize] = v;
    }

    fn pad_adjacent(&self, c: i32, r: i32) -> bool {
        [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .iter()
            .any(|(dc, dr)| self.at(c + dc, r + dr) == Some(Cell::Pad))
    }

    fn pos(&self, (c, r): (i32, i32)) -> IPoint {
        IPoint::new(self.xs[c as usize], self.ys[r as usize])
    }
}

const DIRS: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Grid path through the given runs; corners appear once.
fn walk(start: (i32, i32), runs: &[((i32, i32), i32)]) -> Vec<(i32, i32)> {
    let mut nodes = vec![start];
    let mut cur = start;
    for &((dc, dr), len) in runs {
        for _ in 0..len {
            cur = (cur.0 + dc, cur.1 + dr);
            nodes.push(cur);
        }
    }
    nodes
}

/// Corner points of a node path.
fn corners(nodes: &[(i32, i32)]) -> Vec<(i32, i32)> {
    let mut out = vec![nodes[0]];
    for w in nodes.windows(3) {
        let d1 = (w[1].0 - w[0].0, w[1].1 - w[0].1);
        let d2 = (w[2].0 - w[1].0, w[2].1 - w[1].1);
        if d1 != d2 {
            out.push(w[1]);
        }
    }
    out.push(*nodes.last().unwrap());
    out
}

fn fits(grid: &Grid, nodes: &[(i32, i32)]) -> bool {
    let (first, last) = (nodes[0], *nodes.last().unwrap());
    nodes.iter().all(|&(c, r)| grid.at(c, r) == Some(Cell::Free))
        && !grid.pad_adjacent(first.0, first.1)
        && !grid.pad_adjacent(last.0, last.1)
}

/// Builds a random board; the same seed and config give the same board.
pub fn gen_layout(seed: u64, cfg: &BoardConfig) -> Result<BoardLayout> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let content = content_square(cfg.width, cfg.height);
    let inset = cfg.pad_radius.1.max(cfg.trace_width.1.div_ceil(2)) as i32 + cfg.jitter as i32 + 1;
    let span = content.1.x - content.0.x - 2 * inset;
    let pitch = cfg.pitch as i32;
    let n = span / pitch + 1;
    if n < 3 {
        return Err(Error::Infeasible("canvas too small for a routing grid".into()));
    }
    let slack = span - (n - 1) * pitch;
    let j = cfg.jitter as i32;
    let axis = |origin: i32, rng: &mut ChaCha8Rng| -> Vec<i32> {
        (0..n)
            .map(|i| origin + inset + slack / 2 + i * pitch + rng.random_range(-j..=j))
            .collect()
    };
    let xs = axis(content.0.x, &mut rng);
    let ys = axis(content.0.y, &mut rng);
    let mut grid = Grid {
        cols: n,
        rows: n,
        xs,
        ys,
        cells: vec![Cell::Free; (n * n) as usize],
    };

    let mut paths: Vec<Vec<(i32, i32)>> = Vec::new();
    let max_attempts = 400 * cfg.traces.max(1);
    let mut attempts = 0;
    while paths.len() < cfg.traces {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Infeasible(format!(
                "could only route {} of {} traces on a {n}x{n} grid",
                paths.len(),
                cfg.traces
            )));
        }
        let start = (rng.random_range(0..n), rng.random_range(0..n));
        let d1 = DIRS[rng.random_range(0..4)];
        let d2 = if d1.0 == 0 {
            [(1, 0), (-1, 0)][rng.random_range(0..2)]
        } else {
            [(0, 1), (0, -1)][rng.random_range(0..2)]
        };
        // fall back to short runs once the long ones stop fitting
        let cap = if attempts > max_attempts / 2 {
            2
        } else {
            cfg.max_run as i32
        };
        let run = |rng: &mut ChaCha8Rng| rng.random_range(2..=cap);
        let runs: Vec<((i32, i32), i32)> = match rng.random_range(0..3) {
            0 => vec![(d1, run(&mut rng) + 1)],
            1 => vec![(d1, run(&mut rng)), (d2, run(&mut rng))],
            _ => vec![(d1, run(&mut rng)), (d2, run(&mut rng)), (d1, run(&mut rng))],
        };
        let nodes = walk(start, &runs);
        if !fits(&grid, &nodes) {
            continue;
        }
        claim(&mut grid, &nodes);
        paths.push(nodes.clone());

        if paths.len() < cfg.traces && rng.random_bool(cfg.bus_probability) {
            let mut shifts = if runs.len() == 1 {
                vec![(d1.1, d1.0), (-d1.1, -d1.0)]
            } else {
                vec![(d1.0 - d2.0, d1.1 - d2.1), (d2.0 - d1.0, d2.1 - d1.1)]
            };
            shifts.shuffle(&mut rng);
            for (sc, sr) in shifts {
                let mut buddy: Vec<(i32, i32)> = nodes.iter().map(|&(c, r)| (c + sc, r + sr)).collect();
                if runs.len() == 1 {
                    // keep the two pad pairs diagonal rather than side by side
                    buddy = buddy[1..buddy.len() - 1].to_vec();
                }
                if fits(&grid, &buddy) {
                    claim(&mut grid, &buddy);
                    paths.push(buddy);
                    break;
                }
            }
        }
    }

    let mut traces = Vec::with_capacity(paths.len());
    let mut pads = Vec::new();
    let pad_for = |rng: &mut ChaCha8Rng, center: IPoint, trace: Option<usize>| {
        let radius = rng.random_range(cfg.pad_radius.0..=cfg.pad_radius.1);
        let hole_radius = rng.random_range(cfg.hole_radius.0..=cfg.hole_radius.1);
        Pad {
            center,
            radius,
            hole_radius,
            trace,
        }
    };
    for (i, nodes) in paths.iter().enumerate() {
        let width = rng.random_range(cfg.trace_width.0..=cfg.trace_width.1);
        let points: Vec<IPoint> = corners(nodes).into_iter().map(|p| grid.pos(p)).collect();
        pads.push(pad_for(&mut rng, points[0], Some(i)));
        pads.push(pad_for(&mut rng, *points.last().unwrap(), Some(i)));
        traces.push(Trace { points, width });
    }

    let mut free: Vec<(i32, i32)> = (0..n)
        .flat_map(|r| (0..n).map(move |c| (c, r)))
        .filter(|&(c, r)| grid.at(c, r) == Some(Cell::Free))
        .collect();
    free.shuffle(&mut rng);
    let mut placed = 0;
    for (c, r) in free {
        if placed == cfg.vias {
            break;
        }
        if grid.at(c, r) != Some(Cell::Free) || grid.pad_adjacent(c, r) {
            continue;
        }
        grid.set(c, r, Cell::Pad);
        pads.push(pad_for(&mut rng, grid.pos((c, r)), None));
        placed += 1;
    }

    Ok(BoardLayout {
        width: cfg.width,
        height: cfg.height,
        traces,
        pads,
        palette: cfg.palette,
        content,
        pitch: cfg.pitch,
    })
}

fn claim(grid: &mut Grid, nodes: &[(i32, i32)]) {
    for &(c, r) in nodes {
        grid.set(c, r, Cell::Trace);
    }
    let (a, b) = (nodes[0], *nodes.last().unwrap());
    grid.set(a.0, a.1, Cell::Pad);
    grid.set(b.0, b.1, Cell::Pad);
}

/// Half-open pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl Rect {
    pub fn contains(&self, x: i32, y: i32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// Pixel span `[c - w/2, c - w/2 + w)` of a stroke of width `w` centered on `c`.
pub(crate) fn stroke(c: i32, w: u32) -> (i32, i32) {
    let lo = c - (w / 2) as i32;
    (lo, lo + w as i32)
}

/// Rectangle covered by one trace segment, square caps included.
pub fn segment_rect(a: IPoint, b: IPoint, width: u32) -> Rect {
    let (xl, _) = stroke(a.x.min(b.x), width);
    let (_, xh) = stroke(a.x.max(b.x), width);
    let (yl, _) = stroke(a.y.min(b.y), width);
    let (_, yh) = stroke(a.y.max(b.y), width);
    Rect {
        x0: xl,
        y0: yl,
        x1: xh,
        y1: yh,
    }
}

pub(crate) fn fill_rect(img: &mut ColorImage, r: Rect, rgb: [u8; 3]) {
    fill_rect_if(img, r, rgb, |_, _| true)
}

pub(crate) fn fill_rect_if(img: &mut ColorImage, r: Rect, rgb: [u8; 3], keep: impl Fn(i32, i32) -> bool) {
    let (w, h) = (img.width() as i32, img.height() as i32);
    for y in r.y0.max(0)..r.y1.min(h) {
        for x in r.x0.max(0)..r.x1.min(w) {
            if keep(x, y) {
                img.put(x as usize, y as usize, rgb);
            }
        }
    }
}

/// Pixels whose center lies within `radius` of `c`.
pub(crate) fn fill_disc(img: &mut ColorImage, c: IPoint, radius: u32, rgb: [u8; 3]) {
    fill_disc_if(img, c, radius, rgb, |_, _| true)
}

pub(crate) fn fill_disc_if(
    img: &mut ColorImage,
    c: IPoint,
    radius: u32,
    rgb: [u8; 3],
    keep: impl Fn(i32, i32) -> bool,
) {
    let r = radius as i32;
    let r2 = r * r;
    fill_rect_if(
        img,
        Rect {
            x0: c.x - r,
            y0: c.y - r,
            x1: c.x + r + 1,
            y1: c.y + r + 1,
        },
        rgb,
        |x, y| (x - c.x).pow(2) + (y - c.y).pow(2) <= r2 && keep(x, y),
    )
}

/// Hard-edged render of the defect-free board.
pub fn render(layout: &BoardLayout) -> ColorImage {
    let pal = layout.palette;
    let mut img = ColorImage::new(layout.width, layout.height);
    for px in img.data_mut().chunks_exact_mut(3) {
        px.copy_from_slice(&pal.substrate);
    }
    for t in &layout.traces {
        for (a, b) in t.segments() {
            fill_rect(&mut img, segment_rect(a, b, t.width), pal.copper);
        }
    }
    for p in &layout.pads {
        fill_disc(&mut img, p.center, p.radius, pal.copper);
    }
    for p in &layout.pads {
        fill_disc(&mut img, p.center, p.hole_radius, pal.hole);
    }
    img
}

/// Generates and renders a defect-free template board.
pub fn gen_template(seed: u64, cfg: &BoardConfig) -> Result<(ColorImage, BoardLayout)> {
    let layout = gen_layout(seed, cfg)?;
    Ok((render(&layout), layout))
}
