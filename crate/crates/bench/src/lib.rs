//! Shared fixtures for the benchmarks.

use aoi_core::synthgen::{generate_board, render, template_layouts, DatasetSpec};
use aoi_core::{ColorImage, DefectClass};

/// A template and one rotated defective board from the default generator.
pub struct BoardPair {
    pub template: ColorImage,
    pub test: ColorImage,
    /// Rotation applied to `test`, degrees.
    pub angle: f64,
}

pub fn board_pair(class: DefectClass, angle: f64) -> BoardPair {
    let spec = DatasetSpec {
        classes: vec![class],
        boards_per_class: 1,
        templates: 1,
        seed: 2019,
        angle_range: (angle, angle),
        ..DatasetSpec::default()
    };
    let layouts = template_layouts(&spec).expect("default spec is feasible");
    let board = generate_board(&spec, &layouts, class, 0).expect("default spec is feasible");
    BoardPair {
        template: render(&layouts[0]),
        test: board.rotated,
        angle: board.angle,
    }
}
