//! Defect injection with exact ground-truth boxes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layout::{fill_disc_if, fill_rect_if, render, stroke, BoardLayout, IPoint, Rect};
use crate::error::{Error, Result};
use crate::types::{AnnotatedObject, Annotation, BoundingBox, ColorImage, DefectClass, Raster};

/// Size ranges (inclusive, px) and placement rules for injected defects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefectParams {
    pub count: (usize, usize),
    /// Margin added around the tight changed-pixel box in annotations.
    pub slack: u32,
    /// Minimum gap between the tight boxes of two defects on one board.
    pub separation: u32,
    pub bite_radius: (u32, u32),
    pub open_span: (u32, u32),
    pub short_width: (u32, u32),
    pub spur_width: (u32, u32),
    pub spur_length: (u32, u32),
    pub blob_radius: (u32, u32),
    /// Free substrate required around spurs and stray copper.
    pub clearance: u32,
    pub max_attempts: usize,
}

impl Default for DefectParams {
    fn default() -> Self {
        Self {
            count: (3, 5),
            slack: 2,
            separation: 40,
            bite_radius: (8, 11),
            open_span: (8, 12),
            short_width: (7, 10),
            spur_width: (7, 9),
            spur_length: (14, 18),
            blob_radius: (6, 9),
            clearance: 4,
            max_attempts: 4000,
        }
    }
}

impl DefectParams {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("count", (self.count.0 as u32, self.count.1 as u32)),
            ("bite_radius", self.bite_radius),
            ("open_span", self.open_span),
            ("short_width", self.short_width),
            ("spur_width", self.spur_width),
            ("spur_length", self.spur_length),
            ("blob_radius", self.blob_radius),
        ];
        for (name, (lo, hi)) in ranges {
            if lo == 0 || lo > hi {
                return Err(Error::InvalidArgument(format!("{name} range ({lo}, {hi}) is invalid")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    Pad(usize),
    Segment { trace: usize, segment: usize },
    Between { a: (usize, usize), b: (usize, usize) },
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Disc { center: IPoint, radius: u32 },
    Rect(Rect),
}

/// One defect: a shape painted in copper or substrate, optionally clipped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectSpec {
    pub class: DefectClass,
    pub anchor: Anchor,
    pub shape: Shape,
    pub clip: Option<Rect>,
    pub copper: bool,
}

impl DefectSpec {
    pub fn apply(&self, img: &mut ColorImage, layout: &BoardLayout) {
        let rgb = if self.copper {
            layout.palette.copper
        } else {
            layout.palette.substrate
        };
        let clip = self.clip;
        let keep = |x: i32, y: i32| clip.is_none_or(|c| c.contains(x, y));
        match self.shape {
            Shape::Disc { center, radius } => fill_disc_if(img, center, radius, rgb, keep),
            Shape::Rect(r) => fill_rect_if(img, r, rgb, keep),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlacedDefect {
    pub spec: DefectSpec,
    /// Tight box around the pixels the defect changed.
    pub tight: BoundingBox,
}

/// Tight box of the pixels that differ between two same-size images.
pub fn diff_box(a: &ColorImage, b: &ColorImage) -> Option<BoundingBox> {
    let w = a.width();
    let mut bb: Option<(usize, usize, usize, usize)> = None;
    for (i, (pa, pb)) in a.data().chunks_exact(3).zip(b.data().chunks_exact(3)).enumerate() {
        if pa != pb {
            let (x, y) = (i % w, i / w);
            bb = Some(match bb {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
    }
    bb.map(|(x0, y0, x1, y1)| BoundingBox {
        xmin: x0 as u32,
        ymin: y0 as u32,
        xmax: x1 as u32 + 1,
        ymax: y1 as u32 + 1,
    })
}

struct Seg {
    trace: usize,
    segment: usize,
    horizontal: bool,
    /// Fixed coordinate of the centerline.
    line: i32,
    lo: i32,
    hi: i32,
    width: u32,
}

fn segments(layout: &BoardLayout) -> Vec<Seg> {
    let mut out = Vec::new();
    for (ti, t) in layout.traces.iter().enumerate() {
        for (si, (a, b)) in t.segments().enumerate() {
            let horizontal = a.y == b.y;
            let (line, lo, hi) = if horizontal {
                (a.y, a.x.min(b.x), a.x.max(b.x))
            } else {
                (a.x, a.y.min(b.y), a.y.max(b.y))
            };
            out.push(Seg {
                trace: ti,
                segment: si,
                horizontal,
                line,
                lo,
                hi,
                width: t.width,
            });
        }
    }
    out
}

/// Rect from along-axis span `[a0, a1)` and across-axis span `[c0, c1)`.
fn oriented(horizontal: bool, a0: i32, a1: i32, c0: i32, c1: i32) -> Rect {
    if horizontal {
        Rect {
            x0: a0,
            y0: c0,
            x1: a1,
            y1: c1,
        }
    } else {
        Rect {
            x0: c0,
            y0: a0,
            x1: c1,
            y1: a1,
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (u32, u32)) -> u32 {
    rng.random_range(lo..=hi)
}

struct Planner<'a> {
    layout: &'a BoardLayout,
    params: &'a DefectParams,
    segs: Vec<Seg>,
    pad_reach: i32,
}

impl Planner<'_> {
    /// Position along `s` keeping `half` px of feature at least `margin`
    /// away from both end nodes.
    fn along(&self, rng: &mut ChaCha8Rng, s: &Seg, half: i32) -> Option<i32> {
        let lo = s.lo + self.pad_reach + half + 3;
        let hi = s.hi - self.pad_reach - half - 3;
        (lo <= hi).then(|| rng.random_range(lo..=hi))
    }

    fn pick_segment<'s>(&'s self, rng: &mut ChaCha8Rng) -> Option<&'s Seg> {
        (!self.segs.is_empty()).then(|| &self.segs[rng.random_range(0..self.segs.len())])
    }

    fn candidate(&self, class: DefectClass, rng: &mut ChaCha8Rng, clean: &ColorImage) -> Option<DefectSpec> {
        let p = self.params;
        let seg_anchor = |s: &Seg| Anchor::Segment {
            trace: s.trace,
            segment: s.segment,
        };
        match class {
            DefectClass::MissingHole => {
                if self.layout.pads.is_empty() {
                    return None;
                }
                let i = rng.random_range(0..self.layout.pads.len());
                let pad = &self.layout.pads[i];
                Some(DefectSpec {
                    class,
                    anchor: Anchor::Pad(i),
                    shape: Shape::Disc {
                        center: pad.center,
                        radius: pad.hole_radius,
                    },
                    clip: None,
                    copper: true,
                })
            }
            DefectClass::MouseBite => {
                let s = self.pick_segment(rng)?;
                let r = draw(rng, p.bite_radius).min(s.width.saturating_sub(3)).max(2);
                let at = self.along(rng, s, r as i32)?;
                let (c0, c1) = stroke(s.line, s.width);
                let edge = if rng.random_bool(0.5) { c0 } else { c1 - 1 };
                let center = if s.horizontal {
                    IPoint::new(at, edge)
                } else {
                    IPoint::new(edge, at)
                };
                Some(DefectSpec {
                    class,
                    anchor: seg_anchor(s),
                    shape: Shape::Disc { center, radius: r },
                    clip: Some(oriented(s.horizontal, s.lo, s.hi + 1, c0, c1)),
                    copper: false,
                })
            }
            DefectClass::OpenCircuit => {
                let s = self.pick_segment(rng)?;
                let span = draw(rng, p.open_span) as i32;
                let at = self.along(rng, s, span / 2 + 1)?;
                let (c0, c1) = stroke(s.line, s.width);
                let a0 = at - span / 2;
                Some(DefectSpec {
                    class,
                    anchor: seg_anchor(s),
                    shape: Shape::Rect(oriented(s.horizontal, a0, a0 + span, c0, c1)),
                    clip: None,
                    copper: false,
                })
            }
            DefectClass::Short => {
                let pairs = self.parallel_pairs();
                if pairs.is_empty() {
                    return None;
                }
                let (i, j, lo, hi) = pairs[rng.random_range(0..pairs.len())];
                let (s, t) = (&self.segs[i], &self.segs[j]);
                let w = draw(rng, p.short_width) as i32;
                let lo = lo + self.pad_reach + w + 3;
                let hi = hi - self.pad_reach - w - 3;
                if lo > hi {
                    return None;
                }
                let at = rng.random_range(lo..=hi);
                let (near, far) = if s.line < t.line { (s, t) } else { (t, s) };
                let (_, near_hi) = stroke(near.line, near.width);
                let (far_lo, _) = stroke(far.line, far.width);
                let a0 = at - w / 2;
                Some(DefectSpec {
                    class,
                    anchor: Anchor::Between {
                        a: (s.trace, s.segment),
                        b: (t.trace, t.segment),
                    },
                    shape: Shape::Rect(oriented(s.horizontal, a0, a0 + w, near_hi - 1, far_lo + 1)),
                    clip: None,
                    copper: true,
                })
            }
            DefectClass::Spur => {
                let s = self.pick_segment(rng)?;
                let w = draw(rng, p.spur_width) as i32;
                let len = draw(rng, p.spur_length) as i32;
                let at = self.along(rng, s, w)?;
                let (c0, c1) = stroke(s.line, s.width);
                let a0 = at - w / 2;
                let c = p.clearance as i32;
                let (body, guard) = if rng.random_bool(0.5) {
                    (
                        oriented(s.horizontal, a0, a0 + w, c0 - len, c0),
                        oriented(s.horizontal, a0 - c, a0 + w + c, c0 - len - c, c0),
                    )
                } else {
                    (
                        oriented(s.horizontal, a0, a0 + w, c1, c1 + len),
                        oriented(s.horizontal, a0 - c, a0 + w + c, c1, c1 + len + c),
                    )
                };
                if !all_substrate(clean, self.layout, guard) {
                    return None;
                }
                Some(DefectSpec {
                    class,
                    anchor: seg_anchor(s),
                    shape: Shape::Rect(body),
                    clip: None,
                    copper: true,
                })
            }
            DefectClass::SpuriousCopper => {
                let r = draw(rng, p.blob_radius) as i32;
                let reach = r + p.clearance as i32;
                let (lo, hi) = self.layout.content;
                if hi.x - lo.x <= 2 * reach + 2 {
                    return None;
                }
                let center = IPoint::new(
                    rng.random_range(lo.x + reach..hi.x - reach),
                    rng.random_range(lo.y + reach..hi.y - reach),
                );
                let guard = Rect {
                    x0: center.x - reach,
                    y0: center.y - reach,
                    x1: center.x + reach + 1,
                    y1: center.y + reach + 1,
                };
                if !all_substrate(clean, self.layout, guard) {
                    return None;
                }
                Some(DefectSpec {
                    class,
                    anchor: Anchor::Free,
                    shape: Shape::Disc {
                        center,
                        radius: r as u32,
                    },
                    clip: None,
                    copper: true,
                })
            }
        }
    }

    /// Parallel segments of different traces on neighbouring grid lines,
    /// with their shared along-axis extent.
    fn parallel_pairs(&self) -> Vec<(usize, usize, i32, i32)> {
        let pitch = self.layout.pitch as i32;
        let mut out = Vec::new();
        for (i, s) in self.segs.iter().enumerate() {
            for (j, t) in self.segs.iter().enumerate().skip(i + 1) {
                if s.trace == t.trace || s.horizontal != t.horizontal {
                    continue;
                }
                let gap = (s.line - t.line).abs();
                if gap < pitch / 2 || gap > pitch * 3 / 2 {
                    continue;
                }
                let (lo, hi) = (s.lo.max(t.lo), s.hi.min(t.hi));
                if hi > lo {
                    out.push((i, j, lo, hi));
                }
            }
        }
        out
    }
}

fn all_substrate(img: &ColorImage, layout: &BoardLayout, r: Rect) -> bool {
    let (lo, hi) = layout.content;
    if r.x0 < lo.x || r.y0 < lo.y || r.x1 > hi.x || r.y1 > hi.y {
        return false;
    }
    let sub = layout.palette.substrate;
    (r.y0..r.y1).all(|y| (r.x0..r.x1).all(|x| img.get(x as usize, y as usize) == sub))
}

fn inside_content(layout: &BoardLayout, b: &BoundingBox) -> bool {
    let (lo, hi) = layout.content;
    b.xmin as i32 >= lo.x && b.ymin as i32 >= lo.y && b.xmax as i32 <= hi.x && b.ymax as i32 <= hi.y
}

/// Chooses non-interacting defect sites for `class`.
pub fn plan_defects(
    layout: &BoardLayout,
    class: DefectClass,
    seed: u64,
    params: &DefectParams,
) -> Result<Vec<PlacedDefect>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(params.count.0..=params.count.1);
    let planner = Planner {
        layout,
        params,
        segs: segments(layout),
        pad_reach: layout.pads.iter().map(|p| p.radius as i32).max().unwrap_or(0),
    };
    let clean = render(layout);
    let mut placed: Vec<PlacedDefect> = Vec::with_capacity(count);
    let sep = params.separation;
    for _ in 0..params.max_attempts {
        if placed.len() == count {
            break;
        }
        let Some(spec) = planner.candidate(class, &mut rng, &clean) else {
            continue;
        };
        let mut probe = clean.clone();
        spec.apply(&mut probe, layout);
        let Some(tight) = diff_box(&clean, &probe) else {
            continue;
        };
        if !inside_content(layout, &tight) {
            continue;
        }
        let zone = BoundingBox {
            xmin: tight.xmin.saturating_sub(sep),
            ymin: tight.ymin.saturating_sub(sep),
            xmax: tight.xmax + sep,
            ymax: tight.ymax + sep,
        };
        if placed.iter().any(|d| zone.intersection(&d.tight).is_some()) {
            continue;
        }
        placed.push(PlacedDefect { spec, tight });
    }
    if placed.len() < count {
        return Err(Error::Infeasible(format!(
            "placed {} of {count} {} defects; the board has too few anchors",
            placed.len(),
            class.name()
        )));
    }
    Ok(placed)
}

/// Renders `layout` with 3 to 5 defects of one class and returns the image
/// with its annotation. The annotation filename is left empty.
pub fn inject_defects(
    layout: &BoardLayout,
    class: DefectClass,
    seed: u64,
    params: &DefectParams,
) -> Result<(ColorImage, Annotation)> {
    let placed = plan_defects(layout, class, seed, params)?;
    let mut img = render(layout);
    let mut objects = Vec::with_capacity(placed.len());
    for d in &placed {
        d.spec.apply(&mut img, layout);
        objects.push(AnnotatedObject {
            class,
            bbox: d.tight.expand_clamped(params.slack, layout.width, layout.height),
        });
    }
    Ok((
        img,
        Annotation {
            filename: String::new(),
            width: layout.width as u32,
            height: layout.height as u32,
            depth: 3,
            objects,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::super::layout::{gen_layout, BoardConfig};
    use super::*;

    #[test]
    fn every_class_places_three_to_five() {
        let layout = gen_layout(3, &BoardConfig::default()).unwrap();
        for class in DefectClass::ALL {
            for seed in 0..4 {
                let (img, ann) = inject_defects(&layout, class, seed, &DefectParams::default()).unwrap();
                assert!((3..=5).contains(&ann.objects.len()), "{class}");
                assert!(ann.objects.iter().all(|o| o.class == class));
                ann.validate().unwrap();
                assert_ne!(img, render(&layout));
            }
        }
    }

    #[test]
    fn missing_hole_fills_hole_with_copper() {
        let layout = gen_layout(4, &BoardConfig::default()).unwrap();
        let placed = plan_defects(&layout, DefectClass::MissingHole, 9, &DefectParams::default()).unwrap();
        let mut img = render(&layout);
        for d in &placed {
            d.spec.apply(&mut img, &layout);
            let Anchor::Pad(i) = d.spec.anchor else { panic!() };
            let c = layout.pads[i].center;
            assert_eq!(img.get(c.x as usize, c.y as usize), layout.palette.copper);
        }
    }

    #[test]
    fn diff_box_of_single_pixel() {
        let a = ColorImage::new(5, 4);
        let mut b = a.clone();
        b.put(3, 2, [1, 0, 0]);
        assert_eq!(diff_box(&a, &b), Some(BoundingBox::new(3, 2, 4, 3).unwrap()));
        assert_eq!(diff_box(&a, &a), None);
    }
}
