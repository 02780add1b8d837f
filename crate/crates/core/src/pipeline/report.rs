use crate::types::{ColorImage, DefectClass, Detection, Raster};

/// Outline color per class, in `DefectClass` order.
pub const CLASS_COLORS: [[u8; 3]; 6] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
];

const UNCLASSIFIED: [u8; 3] = [255, 255, 255];

pub fn class_color(class: Option<DefectClass>) -> [u8; 3] {
    class.map_or(UNCLASSIFIED, |c| CLASS_COLORS[c.ordinal()])
}

/// Copy of `img` with a `thickness`-pixel outline drawn inside each box.
pub fn draw_overlay(img: &ColorImage, dets: &[Detection], thickness: u32) -> ColorImage {
    let mut out = img.clone();
    let (w, h) = (img.width() as u32, img.height() as u32);
    for d in dets {
        let b = d.bbox;
        let (x1, y1) = (b.xmax.min(w), b.ymax.min(h));
        if b.xmin >= x1 || b.ymin >= y1 {
            continue;
        }
        let color = class_color(d.class);
        for y in b.ymin..y1 {
            for x in b.xmin..x1 {
                let edge =
                    x < b.xmin + thickness || x + thickness >= x1 || y < b.ymin + thickness || y + thickness >= y1;
                if edge {
                    out.put(x as usize, y as usize, color);
                }
            }
        }
    }
    out
}
