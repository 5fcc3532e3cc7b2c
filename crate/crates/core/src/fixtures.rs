//! Reference inputs shared by tests, examples and the CLI.

use crate::geometry::Polygon;

/// X coordinates of the "UH" outline, metres.
pub const UH_X: [f64; 30] = [
    100.0, 50.0, 100.0, 200.0, 275.0, 475.0, 550.0, 650.0, 700.0, 700.0, 875.0, 875.0, 1075.0,
    1075.0, 1250.0, 1250.0, 1075.0, 1075.0, 875.0, 875.0, 700.0, 700.0, 650.0, 475.0, 475.0,
    420.0, 330.0, 275.0, 275.0, 100.0,
];

/// Y coordinates of the "UH" outline, metres.
pub const UH_Y: [f64; 30] = [
    1000.0, 500.0, 200.0, 150.0, 100.0, 100.0, 150.0, 200.0, 400.0, 100.0, 100.0, 350.0, 350.0,
    100.0, 100.0, 1000.0, 1000.0, 650.0, 650.0, 1000.0, 1000.0, 600.0, 1000.0, 1000.0, 350.0,
    300.0, 300.0, 350.0, 1000.0, 1000.0,
];

/// Minimum loiter radius used with the UH outline.
pub const UH_LOITER_RADIUS: f64 = 80.0;

pub fn uh_polygon() -> Polygon {
    Polygon::from_xy(&UH_X, &UH_Y).expect("UH outline is a valid simple polygon")
}
