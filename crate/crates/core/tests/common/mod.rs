//! Fixtures shared by the integration tests.

#![allow(dead_code)]

use copscan_core::tube::AffineMap;
use copscan_core::{QuadricFamily, SphereDim, Verdict};

/// The generator zoo, in table order.
pub const ZOO: [&str; 9] = [
    "cylinder",
    "ellipsoid",
    "tube_hyperboloid",
    "convex_hyperboloid",
    "paraboloid",
    "cone",
    "twisted",
    "bent",
    "odd_perturbed",
];

pub const COP_FAMILIES: [&str; 6] = [
    "cylinder",
    "ellipsoid",
    "tube_hyperboloid",
    "convex_hyperboloid",
    "paraboloid",
    "cone",
];

pub fn expected(name: &str) -> Verdict {
    use QuadricFamily::*;
    let q = |family| Verdict::Quadric { family };
    match name {
        "cylinder" => Verdict::CylinderOverCentralOvaloid,
        "ellipsoid" => q(Ellipsoid),
        "tube_hyperboloid" => q(TubeHyperboloid),
        "convex_hyperboloid" => q(ConvexHyperboloid),
        "paraboloid" => q(Paraboloid),
        "cone" => q(Cone),
        "twisted" | "bent" | "odd_perturbed" => Verdict::NotCop,
        other => panic!("unknown family {other}"),
    }
}

pub fn map(
    dim: SphereDim,
    matrix: [[f64; 3]; 3],
    shear: [f64; 3],
    offset: [f64; 3],
    z_scale: f64,
    z_offset: f64,
) -> AffineMap {
    let k = dim.section_dim();
    AffineMap {
        matrix: (0..k).map(|i| matrix[i][..k].to_vec()).collect(),
        shear: shear[..k].to_vec(),
        offset: offset[..k].to_vec(),
        z_scale,
        z_offset,
    }
}

/// Identity, anisotropic scaling, shear along the axis, rotation with a
/// translation, and a general map that also rescales heights.
pub fn test_maps(dim: SphereDim) -> Vec<(&'static str, AffineMap)> {
    let (c, s) = (0.6f64.cos(), 0.6f64.sin());
    let eye = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    vec![
        ("identity", AffineMap::identity(dim)),
        (
            "anisotropic",
            map(
                dim,
                [[1.6, 0.0, 0.0], [0.0, 0.8, 0.0], [0.0, 0.0, 1.2]],
                [0.0; 3],
                [0.0; 3],
                1.0,
                0.0,
            ),
        ),
        ("shear", map(dim, eye, [0.4, -0.3, 0.2], [0.0; 3], 1.0, 0.0)),
        (
            "rotation",
            map(
                dim,
                [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
                [0.0; 3],
                [1.0, -2.0, 0.5],
                1.0,
                0.0,
            ),
        ),
        (
            "general",
            map(
                dim,
                [[1.2, 0.3, 0.1], [-0.2, 0.9, 0.0], [0.1, 0.2, 1.1]],
                [0.25, 0.1, -0.15],
                [0.3, 0.1, -0.2],
                1.7,
                0.4,
            ),
        ),
    ]
}
