//! Transversely convex tubes in standard position: generators, transverse
//! support extraction, rectification and the splitting test.
//!
//! A tube is described by its horizontal sections: at height `z` the section
//! is a convex body in `R^{d+1}` with support function `H(z, ·)`. All
//! generators are analytic; [`Family::Sampled`] interpolates user-supplied
//! sections in `z`.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex::{self, CENTRALITY_REL_TOL};
use crate::error::{Error, Result};
use crate::spharm::{self, Grid, SphereDim, SupportField};

/// Default number of heights in the transverse grid.
pub const DEFAULT_GRID: usize = 33;

/// Fraction of the half-window covered by the height grid.
const GRID_SHRINK: f64 = 0.9;

/// z-step of the finite-difference stencil, relative to the half-window.
const FD_STEP: f64 = 2e-3;

/// Generator families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Family {
    /// Cylinder over an ellipsoid, optionally with an even quartic bump (a
    /// central, non-ellipsoidal ovaloid) and an affine axis `c(z) = tilt·z`.
    Cylinder {
        semi_axes: Vec<f64>,
        #[serde(default)]
        axis_tilt: Vec<f64>,
        #[serde(default)]
        even_bump: f64,
    },
    /// Ellipsoid with `n` semi-axes; the last one is along the tube axis.
    Ellipsoid { lambda: Vec<f64> },
    /// One-sheeted hyperboloid: section scale `√(1 + z²/b²)`.
    TubeHyperboloid { semi_axes: Vec<f64>, b: f64 },
    /// One sheet of a two-sheeted hyperboloid: scale `√(((z - c0)/b)² - 1)`.
    ConvexHyperboloid {
        semi_axes: Vec<f64>,
        b: f64,
        center_offset: f64,
    },
    /// Elliptic paraboloid: scale `√((z - vertex)/p)`.
    Paraboloid {
        semi_axes: Vec<f64>,
        vertex: f64,
        p: f64,
    },
    /// Elliptic cone: scale `slope·|z - apex|`.
    Cone {
        semi_axes: Vec<f64>,
        slope: f64,
        apex: f64,
    },
    /// Cylinder whose elliptic section rotates by `ω z` about the last
    /// section axis (the plane of the first two axes).
    Twisted { semi_axes: Vec<f64>, omega: f64 },
    /// Cylinder over an ellipsoid translated along `c(z) = (κ z², 0, ...)`.
    Bent { semi_axes: Vec<f64>, curvature: f64 },
    /// Ellipsoidal cylinder plus a `z`-dependent odd cubic perturbation
    /// `amplitude·(1 + z)·g`.
    OddPerturbed { semi_axes: Vec<f64>, amplitude: f64 },
    /// User-supplied raw section support fields at increasing heights.
    Sampled {
        heights: Vec<f64>,
        sections: Vec<SupportField>,
    },
}

/// Names accepted by [`Family::default_for`].
pub const FAMILY_NAMES: [&str; 10] = [
    "cylinder",
    "ellipsoid",
    "tube_hyperboloid",
    "convex_hyperboloid",
    "paraboloid",
    "cone",
    "twisted",
    "bent",
    "odd_perturbed",
    "sampled",
];

impl Family {
    /// Default parameters for a family in dimension `dim`.
    pub fn default_for(name: &str, dim: SphereDim) -> Result<Family> {
        let d2 = dim.d() == 2;
        let axes = |a: &[f64], b: &[f64]| if d2 { b.to_vec() } else { a.to_vec() };
        let fam = match name {
            "cylinder" => Family::Cylinder {
                semi_axes: axes(&[1.0, 1.3], &[1.0, 1.2, 1.4]),
                axis_tilt: vec![0.0; dim.section_dim()],
                even_bump: 0.0,
            },
            "ellipsoid" => Family::Ellipsoid {
                lambda: axes(&[1.0, 1.3, 1.0], &[1.0, 1.2, 1.4, 1.0]),
            },
            "tube_hyperboloid" => Family::TubeHyperboloid {
                semi_axes: vec![1.0; dim.section_dim()],
                b: 1.0,
            },
            "convex_hyperboloid" => Family::ConvexHyperboloid {
                semi_axes: axes(&[1.0, 1.2], &[1.0, 1.2, 1.4]),
                b: 1.0,
                center_offset: -2.5,
            },
            "paraboloid" => Family::Paraboloid {
                semi_axes: axes(&[1.0, 1.2], &[1.0, 1.2, 1.4]),
                vertex: -1.5,
                p: 1.0,
            },
            "cone" => Family::Cone {
                semi_axes: axes(&[1.0, 1.2], &[1.0, 1.2, 1.4]),
                slope: 1.0,
                apex: 0.0,
            },
            "twisted" => Family::Twisted {
                semi_axes: axes(&[1.0, 1.5], &[1.0, 1.5, 1.2]),
                omega: 0.5,
            },
            "bent" => Family::Bent {
                semi_axes: axes(&[1.0, 1.3], &[1.0, 1.2, 1.4]),
                curvature: 1.0,
            },
            "odd_perturbed" => Family::OddPerturbed {
                semi_axes: axes(&[1.0, 1.3], &[1.0, 1.2, 1.4]),
                amplitude: 0.05,
            },
            "sampled" => {
                return Err(Error::Params {
                    family: "sampled".into(),
                    reason: "sampled tubes have no defaults; supply heights and sections".into(),
                })
            }
            other => {
                return Err(Error::Params {
                    family: other.into(),
                    reason: format!("unknown family; expected one of {FAMILY_NAMES:?}"),
                })
            }
        };
        Ok(fam)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Cylinder { .. } => "cylinder",
            Family::Ellipsoid { .. } => "ellipsoid",
            Family::TubeHyperboloid { .. } => "tube_hyperboloid",
            Family::ConvexHyperboloid { .. } => "convex_hyperboloid",
            Family::Paraboloid { .. } => "paraboloid",
            Family::Cone { .. } => "cone",
            Family::Twisted { .. } => "twisted",
            Family::Bent { .. } => "bent",
            Family::OddPerturbed { .. } => "odd_perturbed",
            Family::Sampled { .. } => "sampled",
        }
    }

    /// Height window used when none is given.
    pub fn default_window(&self) -> (f64, f64) {
        match self {
            Family::Cone { apex, .. } => (apex - 0.9, apex - 0.1),
            Family::Ellipsoid { lambda } => {
                let last = *lambda.last().unwrap_or(&1.0);
                (-last, last)
            }
            Family::Sampled { heights, .. } => (
                heights.first().copied().unwrap_or(-1.0),
                heights.last().copied().unwrap_or(1.0),
            ),
            _ => (-1.0, 1.0),
        }
    }
}

/// Affine map `(p, z) ↦ (M p + s z + b, α z + β)`, which keeps horizontal
/// hyperplanes horizontal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    /// Row-major `(d+1)×(d+1)` matrix `M`.
    pub matrix: Vec<Vec<f64>>,
    #[serde(default)]
    pub shear: Vec<f64>,
    #[serde(default)]
    pub offset: Vec<f64>,
    #[serde(default = "one")]
    pub z_scale: f64,
    #[serde(default)]
    pub z_offset: f64,
}

fn one() -> f64 {
    1.0
}

impl AffineMap {
    pub fn identity(dim: SphereDim) -> Self {
        let k = dim.section_dim();
        AffineMap {
            matrix: (0..k)
                .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            shear: vec![0.0; k],
            offset: vec![0.0; k],
            z_scale: 1.0,
            z_offset: 0.0,
        }
    }

    fn validate(&self, dim: SphereDim) -> Result<()> {
        let k = dim.section_dim();
        let bad = |reason: String| Error::Params {
            family: "transform".into(),
            reason,
        };
        if self.matrix.len() != k || self.matrix.iter().any(|r| r.len() != k) {
            return Err(bad(format!("matrix must be {k}×{k}")));
        }
        for (name, v) in [("shear", &self.shear), ("offset", &self.offset)] {
            if !v.is_empty() && v.len() != k {
                return Err(bad(format!("{name} must have {k} entries")));
            }
        }
        if self.m().determinant().abs() < 1e-12 {
            return Err(bad("matrix is singular".into()));
        }
        if self.z_scale.abs() < 1e-12 || !self.z_scale.is_finite() {
            return Err(bad("z_scale must be nonzero".into()));
        }
        Ok(())
    }

    fn m(&self) -> Matrix3<f64> {
        let mut m = Matrix3::identity();
        for (i, row) in self.matrix.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    fn vec3(v: &[f64]) -> Vector3<f64> {
        let mut out = Vector3::zeros();
        for (i, x) in v.iter().enumerate().take(3) {
            out[i] = *x;
        }
        out
    }

    /// Height in the original tube for a height in the transformed one.
    fn pull_z(&self, z: f64) -> f64 {
        (z - self.z_offset) / self.z_scale
    }

    fn push_z(&self, z: f64) -> f64 {
        self.z_scale * z + self.z_offset
    }

    /// Translation applied to the section at original height `z`.
    fn translation(&self, z0: f64) -> Vector3<f64> {
        Self::vec3(&self.shear) * z0 + Self::vec3(&self.offset)
    }
}

/// Geometry of one analytic horizontal section.
struct SectionGeom {
    /// Semi-axes after scaling.
    axes: Vector3<f64>,
    rotation: Matrix3<f64>,
    center: Vector3<f64>,
    odd: f64,
    even: f64,
}

/// A transversely convex tube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeSpec {
    pub dim: SphereDim,
    #[serde(flatten)]
    pub family: Family,
    pub z_range: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<AffineMap>,
}

fn params_err(family: &Family, reason: impl Into<String>) -> Error {
    Error::Params {
        family: family.name().into(),
        reason: reason.into(),
    }
}

impl TubeSpec {
    /// Builds and validates a tube. `window` defaults to the family's window.
    pub fn generate(dim: SphereDim, family: Family, window: Option<(f64, f64)>) -> Result<Self> {
        let (lo, hi) = window.unwrap_or_else(|| family.default_window());
        let spec = TubeSpec {
            dim,
            family,
            z_range: [lo, hi],
            transform: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Tube with default parameters for the named family.
    pub fn default_family(name: &str, dim: SphereDim) -> Result<Self> {
        Self::generate(dim, Family::default_for(name, dim)?, None)
    }

    /// Applies an affine map on top of any existing one.
    pub fn transformed(&self, map: &AffineMap) -> Result<Self> {
        map.validate(self.dim)?;
        let composed = match &self.transform {
            None => map.clone(),
            Some(inner) => {
                // outer ∘ inner on (p, z).
                let m = map.m() * inner.m();
                let s = map.m() * AffineMap::vec3(&inner.shear)
                    + AffineMap::vec3(&map.shear) * inner.z_scale;
                let b = map.m() * AffineMap::vec3(&inner.offset)
                    + AffineMap::vec3(&map.shear) * inner.z_offset
                    + AffineMap::vec3(&map.offset);
                let k = self.dim.section_dim();
                AffineMap {
                    matrix: (0..k)
                        .map(|i| (0..k).map(|j| m[(i, j)]).collect())
                        .collect(),
                    shear: s.iter().take(k).copied().collect(),
                    offset: b.iter().take(k).copied().collect(),
                    z_scale: map.z_scale * inner.z_scale,
                    z_offset: map.z_scale * inner.z_offset + map.z_offset,
                }
            }
        };
        let (a, b) = (map.push_z(self.z_range[0]), map.push_z(self.z_range[1]));
        let out = TubeSpec {
            dim: self.dim,
            family: self.family.clone(),
            z_range: [a.min(b), a.max(b)],
            transform: Some(composed),
        };
        out.validate()?;
        Ok(out)
    }

    /// Uniform rescaling of the whole tube by `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let k = self.dim.section_dim();
        self.transformed(&AffineMap {
            matrix: (0..k)
                .map(|i| (0..k).map(|j| if i == j { s } else { 0.0 }).collect())
                .collect(),
            shear: vec![0.0; k],
            offset: vec![0.0; k],
            z_scale: s,
            z_offset: 0.0,
        })
    }

    /// Height window `(lo, hi)`.
    pub fn window(&self) -> (f64, f64) {
        (self.z_range[0], self.z_range[1])
    }

    /// Uniform grid of `count` heights on the central 90% of the window.
    pub fn z_grid(&self, count: usize) -> Vec<f64> {
        z_grid(self.window(), count)
    }

    /// Checks parameter shapes, signs and the height window.
    pub fn validate(&self) -> Result<()> {
        let fam = &self.family;
        let k = self.dim.section_dim();
        let (lo, hi) = self.window();
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(params_err(fam, format!("invalid z_range [{lo}, {hi}]")));
        }
        if let Some(t) = &self.transform {
            t.validate(self.dim)?;
        }
        let (olo, ohi) = self.original_window();
        let check_axes = |a: &[f64]| -> Result<()> {
            if a.len() != k {
                return Err(params_err(
                    fam,
                    format!("semi_axes must have {k} entries, got {}", a.len()),
                ));
            }
            if a.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(params_err(fam, "semi-axes must be positive"));
            }
            Ok(())
        };
        let positive = |name: &str, v: f64| -> Result<()> {
            if !(v > 0.0) || !v.is_finite() {
                return Err(params_err(fam, format!("{name} must be positive, got {v}")));
            }
            Ok(())
        };
        match fam {
            Family::Cylinder {
                semi_axes,
                axis_tilt,
                even_bump,
            } => {
                check_axes(semi_axes)?;
                if !axis_tilt.is_empty() && axis_tilt.len() != k {
                    return Err(params_err(fam, format!("axis_tilt must have {k} entries")));
                }
                if !even_bump.is_finite() {
                    return Err(params_err(fam, "even_bump must be finite"));
                }
            }
            Family::Ellipsoid { lambda } => {
                if lambda.len() != k + 1 {
                    return Err(params_err(
                        fam,
                        format!(
                            "lambda must have n = {} entries, got {}",
                            k + 1,
                            lambda.len()
                        ),
                    ));
                }
                check_axes(&lambda[..k])?;
                positive("lambda_n", lambda[k])?;
                // Slack for rounding after an affine map has been undone.
                let slack = 1e-12 * lambda[k];
                if olo < -lambda[k] - slack || ohi > lambda[k] + slack {
                    return Err(Error::DegenerateSection(format!(
                        "ellipsoid window [{olo}, {ohi}] must lie inside [-{0}, {0}]",
                        lambda[k]
                    )));
                }
            }
            Family::TubeHyperboloid { semi_axes, b } => {
                check_axes(semi_axes)?;
                positive("b", *b)?;
            }
            Family::ConvexHyperboloid {
                semi_axes,
                b,
                center_offset,
            } => {
                check_axes(semi_axes)?;
                positive("b", *b)?;
                let (a0, a1) = (center_offset - b, center_offset + b);
                if ohi >= a0 && olo <= a1 {
                    return Err(Error::DegenerateSection(format!(
                        "window [{olo}, {ohi}] meets the gap [{a0}, {a1}] between the sheets"
                    )));
                }
            }
            Family::Paraboloid {
                semi_axes,
                vertex,
                p,
            } => {
                check_axes(semi_axes)?;
                positive("p", *p)?;
                if olo <= *vertex {
                    return Err(Error::DegenerateSection(format!(
                        "window [{olo}, {ohi}] reaches the vertex at {vertex}"
                    )));
                }
            }
            Family::Cone {
                semi_axes,
                slope,
                apex,
            } => {
                check_axes(semi_axes)?;
                positive("slope", *slope)?;
                if olo <= *apex && *apex <= ohi {
                    return Err(Error::DegenerateSection(format!(
                        "cone apex z = {apex} lies in the window [{olo}, {ohi}]"
                    )));
                }
            }
            Family::Twisted { semi_axes, omega } => {
                check_axes(semi_axes)?;
                if !omega.is_finite() {
                    return Err(params_err(fam, "omega must be finite"));
                }
            }
            Family::Bent {
                semi_axes,
                curvature,
            } => {
                check_axes(semi_axes)?;
                if !curvature.is_finite() {
                    return Err(params_err(fam, "curvature must be finite"));
                }
            }
            Family::OddPerturbed {
                semi_axes,
                amplitude,
            } => {
                check_axes(semi_axes)?;
                if !amplitude.is_finite() {
                    return Err(params_err(fam, "amplitude must be finite"));
                }
            }
            Family::Sampled { heights, sections } => {
                if heights.len() < 2 || heights.len() != sections.len() {
                    return Err(params_err(
                        fam,
                        "need at least two heights and one section per height",
                    ));
                }
                if heights.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(params_err(fam, "heights must be strictly increasing"));
                }
                if sections.iter().any(|s| s.dim() != self.dim) {
                    return Err(params_err(
                        fam,
                        "section dimension differs from tube dimension",
                    ));
                }
                if olo < heights[0] || ohi > heights[heights.len() - 1] {
                    return Err(params_err(fam, "z_range exceeds the sampled heights"));
                }
            }
        }
        Ok(())
    }

    /// Window in the coordinates of the untransformed family.
    fn original_window(&self) -> (f64, f64) {
        match &self.transform {
            None => self.window(),
            Some(t) => {
                let (a, b) = (t.pull_z(self.z_range[0]), t.pull_z(self.z_range[1]));
                (a.min(b), a.max(b))
            }
        }
    }

    fn geometry(&self, z: f64) -> Option<SectionGeom> {
        let k = self.dim.section_dim();
        let ax = |a: &[f64], s: f64| {
            let mut v = Vector3::zeros();
            for i in 0..k {
                v[i] = a[i] * s;
            }
            v
        };
        let plain = |a: &[f64], s: f64| SectionGeom {
            axes: ax(a, s),
            rotation: Matrix3::identity(),
            center: Vector3::zeros(),
            odd: 0.0,
            even: 0.0,
        };
        Some(match &self.family {
            Family::Cylinder {
                semi_axes,
                axis_tilt,
                even_bump,
            } => {
                let mut g = plain(semi_axes, 1.0);
                g.center = AffineMap::vec3(axis_tilt) * z;
                g.even = *even_bump;
                g
            }
            Family::Ellipsoid { lambda } => plain(
                &lambda[..k],
                (1.0 - (z / lambda[k]).powi(2)).max(0.0).sqrt(),
            ),
            Family::TubeHyperboloid { semi_axes, b } => {
                plain(semi_axes, (1.0 + (z / b).powi(2)).sqrt())
            }
            Family::ConvexHyperboloid {
                semi_axes,
                b,
                center_offset,
            } => plain(
                semi_axes,
                (((z - center_offset) / b).powi(2) - 1.0).max(0.0).sqrt(),
            ),
            Family::Paraboloid {
                semi_axes,
                vertex,
                p,
            } => plain(semi_axes, ((z - vertex) / p).max(0.0).sqrt()),
            Family::Cone {
                semi_axes,
                slope,
                apex,
            } => plain(semi_axes, slope * (z - apex).abs()),
            Family::Twisted { semi_axes, omega } => {
                let mut g = plain(semi_axes, 1.0);
                g.rotation = *Rotation3::from_axis_angle(&Vector3::z_axis(), omega * z).matrix();
                g
            }
            Family::Bent {
                semi_axes,
                curvature,
            } => {
                let mut g = plain(semi_axes, 1.0);
                g.center = Vector3::new(curvature * z * z, 0.0, 0.0);
                g
            }
            Family::OddPerturbed {
                semi_axes,
                amplitude,
            } => {
                let mut g = plain(semi_axes, 1.0);
                g.odd = amplitude * (1.0 + z);
                g
            }
            Family::Sampled { .. } => return None,
        })
    }

    /// Raw (uncentred) support function of the horizontal section at height
    /// `z`, evaluated at an arbitrary nonzero `x` by 1-homogeneity.
    pub fn support_at(&self, z: f64, x: &Vector3<f64>) -> f64 {
        match &self.transform {
            None => self.support_original(z, x),
            Some(t) => {
                let z0 = t.pull_z(z);
                self.support_original(z0, &(t.m().transpose() * x)) + x.dot(&t.translation(z0))
            }
        }
    }

    fn support_original(&self, z: f64, x: &Vector3<f64>) -> f64 {
        if let Family::Sampled { heights, sections } = &self.family {
            let f = interpolate_fields(heights, sections, z);
            let r = x.norm();
            if r == 0.0 {
                return 0.0;
            }
            return r * PointEval::value(&f, &(x / r));
        }
        let g = self.geometry(z).expect("analytic family");
        let y = g.rotation.transpose() * x;
        let mut h = g.axes.component_mul(&y).norm() + x.dot(&g.center);
        let r2 = x.norm_squared();
        if g.odd != 0.0 && r2 > 0.0 {
            h += g.odd * (x.x.powi(3) - 3.0 * x.x * x.y * x.y) / 3.0 / r2;
        }
        if g.even != 0.0 && r2 > 0.0 {
            let q = x.x.powi(4) - 6.0 * x.x * x.x * x.y * x.y + x.y.powi(4);
            h += g.even * q / 4.0 / (r2 * r2.sqrt());
        }
        h
    }

    /// Centre of the horizontal section at `z` as built by the generator.
    /// For central families this is the centre of symmetry.
    pub fn generator_center(&self, z: f64) -> Vector3<f64> {
        let (z0, base) = match &self.transform {
            None => (z, Vector3::zeros()),
            Some(t) => (t.pull_z(z), t.translation(t.pull_z(z))),
        };
        let c = match self.geometry(z0) {
            Some(g) => g.center,
            None => {
                let Family::Sampled { heights, sections } = &self.family else {
                    unreachable!()
                };
                convex::centrix_of(&interpolate_fields(heights, sections, z0)).mean_center
            }
        };
        match &self.transform {
            None => c,
            Some(t) => t.m() * c + base,
        }
    }

    /// Raw support field of the horizontal section at `z`, degree cap `l`.
    pub fn section_field(&self, z: f64, l: usize) -> Result<SupportField> {
        if let (Family::Sampled { heights, sections }, None) = (&self.family, &self.transform) {
            return Ok(interpolate_fields(heights, sections, z).with_degree_cap(l));
        }
        Ok(SupportField::from_fn(self.dim, l, |u| {
            self.support_at(z, u)
        }))
    }
}

struct PointEval;

impl PointEval {
    fn value(f: &SupportField, u: &Vector3<f64>) -> f64 {
        spharm::PointBasis::new(f.dim(), f.degree_cap(), u).value(f)
    }
}

/// Uniform grid of `count` heights on the central 90% of `window`.
pub fn z_grid(window: (f64, f64), count: usize) -> Vec<f64> {
    let mid = 0.5 * (window.0 + window.1);
    let half = 0.5 * (window.1 - window.0) * GRID_SHRINK;
    if count == 1 {
        return vec![mid];
    }
    (0..count)
        .map(|k| mid - half + 2.0 * half * k as f64 / (count - 1) as f64)
        .collect()
}

/// Lagrange weights for `value` (and, if `deriv`, the first derivative) at
/// `z` through the nodes `xs`.
pub(crate) fn lagrange_weights(xs: &[f64], z: f64, deriv: bool) -> Vec<f64> {
    let n = xs.len();
    let mut w = vec![0.0; n];
    for i in 0..n {
        if !deriv {
            let mut p = 1.0;
            for j in 0..n {
                if j != i {
                    p *= (z - xs[j]) / (xs[i] - xs[j]);
                }
            }
            w[i] = p;
        } else {
            let mut s = 0.0;
            for k in 0..n {
                if k == i {
                    continue;
                }
                let mut p = 1.0 / (xs[i] - xs[k]);
                for j in 0..n {
                    if j != i && j != k {
                        p *= (z - xs[j]) / (xs[i] - xs[j]);
                    }
                }
                s += p;
            }
            w[i] = s;
        }
    }
    w
}

/// Indices of the (at most) `k` nodes of a sorted array closest to `z`.
fn local_stencil(xs: &[f64], z: f64, k: usize) -> std::ops::Range<usize> {
    let k = k.min(xs.len());
    let pos = xs.partition_point(|x| *x < z);
    let start = pos.saturating_sub(k / 2).min(xs.len() - k);
    start..start + k
}

fn combine(fields: &[&SupportField], weights: &[f64]) -> SupportField {
    let l = fields.iter().map(|f| f.degree_cap()).max().unwrap_or(0);
    let mut out = SupportField::zeros(fields[0].dim(), l);
    for (f, w) in fields.iter().zip(weights) {
        out = out.axpy(*w, f).expect("same dimension");
    }
    out
}

/// Local six-point Lagrange interpolation of fields sampled at `heights`.
pub(crate) fn interpolate_fields(heights: &[f64], fields: &[SupportField], z: f64) -> SupportField {
    let r = local_stencil(heights, z, 6);
    let w = lagrange_weights(&heights[r.clone()], z, false);
    let refs: Vec<&SupportField> = fields[r].iter().collect();
    combine(&refs, &w)
}

/// Anything that can produce the raw support field of its horizontal
/// section at a height.
pub trait SectionSource: Sync {
    fn dim(&self) -> SphereDim;
    fn window(&self) -> (f64, f64);
    fn section_field(&self, z: f64, l: usize) -> Result<SupportField>;
}

impl SectionSource for TubeSpec {
    fn dim(&self) -> SphereDim {
        self.dim
    }
    fn window(&self) -> (f64, f64) {
        TubeSpec::window(self)
    }
    fn section_field(&self, z: f64, l: usize) -> Result<SupportField> {
        TubeSpec::section_field(self, z, l)
    }
}

/// Transverse support function `h(u, z)` of the centred sections on a grid
/// of heights, with its `z`-derivative and the section centres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransverseSupport {
    pub dim: SphereDim,
    #[serde(rename = "L")]
    pub l: usize,
    pub z_grid: Vec<f64>,
    /// Half-length of the tube's height window (the natural z scale).
    pub z_scale: f64,
    /// Centred section support fields.
    pub h: Vec<SupportField>,
    /// `∂h/∂z` of the centred fields.
    pub h_z: Vec<SupportField>,
    /// Centrix mean of each section, the samples of `c(z)`.
    pub centers: Vec<Vector3<f64>>,
    /// `c'(z)` at each height, from the same stencil as `h_z`.
    pub center_z: Vec<Vector3<f64>>,
    /// Centrix sup-deviation of each section divided by its diameter.
    pub centrality: Vec<f64>,
    /// Smallest principal radius of each section.
    pub margins: Vec<f64>,
}

/// Centred field, centre, relative centrality and margin of one section.
fn centred_section(raw: &SupportField) -> (SupportField, Vector3<f64>, f64) {
    let rep = convex::centrix_of(raw);
    let diam = convex::diameter(raw);
    let h = raw.translate(&(-rep.mean_center));
    (h, rep.mean_center, rep.sup_deviation / diam)
}

/// Extracts the transverse support of `src` at the heights `z_grid`.
pub fn transverse_support<S: SectionSource + ?Sized>(
    src: &S,
    z_grid: &[f64],
    l: usize,
) -> Result<TransverseSupport> {
    let (lo, hi) = src.window();
    let zs = 0.5 * (hi - lo);
    let delta = FD_STEP * zs;
    if let Some(z) = z_grid
        .iter()
        .find(|z| **z - 2.0 * delta <= lo || **z + 2.0 * delta >= hi)
    {
        return Err(Error::Domain(format!(
            "height {z} is too close to the window [{lo}, {hi}]"
        )));
    }
    let per_height: Vec<Result<_>> = z_grid
        .par_iter()
        .map(|&z| {
            let raw = src.section_field(z, l)?;
            let check = convex::ovaloid_check(&raw);
            if !check.ok {
                return Err(Error::InvalidTube {
                    z,
                    margin: check.margin,
                });
            }
            let (h, c, centrality) = centred_section(&raw);
            let weights = [
                -1.0 / (12.0 * delta),
                8.0 / (12.0 * delta),
                -8.0 / (12.0 * delta),
                1.0 / (12.0 * delta),
            ];
            let mut stencil = Vec::with_capacity(4);
            let mut c_z = Vector3::zeros();
            for (s, w) in [2.0, 1.0, -1.0, -2.0].into_iter().zip(weights) {
                let (hs, cs, _) = centred_section(&src.section_field(z + s * delta, l)?);
                stencil.push(hs);
                c_z += cs * w;
            }
            let h_z = combine(
                &[&stencil[0], &stencil[1], &stencil[2], &stencil[3]],
                &weights,
            );
            Ok((h, h_z, c, c_z, centrality, check.margin))
        })
        .collect();
    let mut ts = TransverseSupport {
        dim: src.dim(),
        l,
        z_grid: z_grid.to_vec(),
        z_scale: zs,
        h: Vec::new(),
        h_z: Vec::new(),
        centers: Vec::new(),
        center_z: Vec::new(),
        centrality: Vec::new(),
        margins: Vec::new(),
    };
    for r in per_height {
        let (h, h_z, c, c_z, centrality, margin) = r?;
        ts.h.push(h);
        ts.h_z.push(h_z);
        ts.centers.push(c);
        ts.center_z.push(c_z);
        ts.centrality.push(centrality);
        ts.margins.push(margin);
    }
    Ok(ts)
}

impl TransverseSupport {
    pub fn len(&self) -> usize {
        self.z_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z_grid.is_empty()
    }

    /// Index of the grid height closest to zero (the anchor of `r(z)`).
    pub fn anchor(&self) -> usize {
        self.z_grid
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).expect("finite heights"))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Whether every section is central at the default relative tolerance.
    pub fn all_central(&self) -> bool {
        self.centrality.iter().all(|c| *c <= CENTRALITY_REL_TOL)
    }

    /// The rectified tube: same sections with the central curve removed.
    pub fn rectified(&self) -> TransverseSupport {
        let mut out = self.clone();
        for c in out.centers.iter_mut().chain(out.center_z.iter_mut()) {
            *c = Vector3::zeros();
        }
        out
    }

    /// Writes `z,node,h` rows for every grid height and quadrature node.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["z", "node", "h"])?;
        let grid = Grid::get(self.dim, self.l);
        for (z, h) in self.z_grid.iter().zip(&self.h) {
            for (i, v) in grid.synthesize(h).iter().enumerate() {
                wr.write_record([format!("{z:.17e}"), i.to_string(), format!("{v:.17e}")])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

impl SectionSource for TransverseSupport {
    fn dim(&self) -> SphereDim {
        self.dim
    }
    fn window(&self) -> (f64, f64) {
        (self.z_grid[0], self.z_grid[self.z_grid.len() - 1])
    }
    fn section_field(&self, z: f64, l: usize) -> Result<SupportField> {
        let r = local_stencil(&self.z_grid, z, 6);
        let w = lagrange_weights(&self.z_grid[r.clone()], z, false);
        let refs: Vec<&SupportField> = self.h[r.clone()].iter().collect();
        let c = self.centers[r]
            .iter()
            .zip(&w)
            .fold(Vector3::zeros(), |acc, (c, w)| acc + c * *w);
        Ok(combine(&refs, &w).translate(&c).with_degree_cap(l))
    }
}

/// Result of [`split_test`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    /// Ratio `r(z_k)` per grid height.
    pub r: Vec<f64>,
    pub h0: SupportField,
    /// Grid index of the anchor height.
    pub anchor: usize,
    /// `max_k sup_u |h(u, z_k) - r_k h0(u)| / sup|h0|`.
    pub residual: f64,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite ratios"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Tests the separation `h(u, z) = r(z) h0(u)`.
pub fn split_test(ts: &TransverseSupport) -> Result<SplitResult> {
    if ts.len() < 3 {
        return Err(Error::Domain("split test needs at least 3 heights".into()));
    }
    let grid = Grid::get(ts.dim, ts.l);
    let anchor = ts.anchor();
    let h0 = grid.synthesize(&ts.h[anchor]);
    let sup0 = h0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut r = Vec::with_capacity(ts.len());
    let mut residual = 0.0f64;
    for h in &ts.h {
        let hk = grid.synthesize(h);
        let mut ratios: Vec<f64> = hk.iter().zip(&h0).map(|(a, b)| a / b).collect();
        let rk = median(&mut ratios);
        let dev = hk
            .iter()
            .zip(&h0)
            .map(|(a, b)| (a - rk * b).abs())
            .fold(0.0, f64::max);
        residual = residual.max(dev / sup0);
        r.push(rk);
    }
    Ok(SplitResult {
        r,
        h0: ts.h[anchor].clone(),
        anchor,
        residual,
    })
}
