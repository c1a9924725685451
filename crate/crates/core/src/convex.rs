//! Support functions of ovaloids: construction, validity, the support
//! parameterization, the centrix, even/odd decomposition and curvature
//! functionals.

use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spharm::{self, Grid, SphereDim, SupportField};

/// Default relative tolerance for central symmetry: deviation of the centrix
/// from its mean, divided by the diameter.
pub const CENTRALITY_REL_TOL: f64 = 1e-6;

/// Ellipsoid `R·diag(λ)·B + v` where `B` is the unit ball.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipsoidSpec {
    dim: SphereDim,
    lambda: Vec<f64>,
    rotation: Matrix3<f64>,
    center: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct EllipsoidJson {
    lambda: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rotation: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    center: Option<Vec<f64>>,
}

impl EllipsoidSpec {
    /// `lambda` has 2 entries (ellipse) or 3 (ellipsoid in R³). `rotation`
    /// and `center` are embedded in 3×3 / 3-vectors; for ellipses the third
    /// row/column must be trivial.
    pub fn new(lambda: &[f64], rotation: Matrix3<f64>, center: Vector3<f64>) -> Result<Self> {
        let dim = match lambda.len() {
            2 => SphereDim::CIRCLE,
            3 => SphereDim::SPHERE,
            k => {
                return Err(Error::Domain(format!(
                    "ellipsoid needs 2 or 3 semi-axes, got {k}"
                )))
            }
        };
        if let Some(bad) = lambda.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::Domain(format!(
                "semi-axis must be positive, got {bad}"
            )));
        }
        let orth = (rotation.transpose() * rotation - Matrix3::identity())
            .abs()
            .max();
        if orth > 1e-12 {
            return Err(Error::Domain(format!(
                "rotation is not orthogonal: |RᵀR - I| = {orth:.3e}"
            )));
        }
        if dim.d() == 1 {
            let leak = rotation[(0, 2)].abs()
                + rotation[(1, 2)].abs()
                + rotation[(2, 0)].abs()
                + rotation[(2, 1)].abs()
                + center.z.abs();
            if leak > 1e-12 {
                return Err(Error::Domain(
                    "planar ellipse with out-of-plane rotation or center".into(),
                ));
            }
        }
        Ok(EllipsoidSpec {
            dim,
            lambda: lambda.to_vec(),
            rotation,
            center,
        })
    }

    /// Axis-aligned, origin-centred ellipsoid.
    pub fn axis_aligned(lambda: &[f64]) -> Result<Self> {
        Self::new(lambda, Matrix3::identity(), Vector3::zeros())
    }

    pub fn dim(&self) -> SphereDim {
        self.dim
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn center(&self) -> &Vector3<f64> {
        &self.center
    }

    fn lam3(&self) -> Vector3<f64> {
        Vector3::new(
            self.lambda[0],
            self.lambda[1],
            self.lambda.get(2).copied().unwrap_or(0.0),
        )
    }

    /// Exact support function `|Λ Rᵀ x| + x·v`, valid for any `x`.
    pub fn support_exact(&self, x: &Vector3<f64>) -> f64 {
        self.lam3()
            .component_mul(&(self.rotation.transpose() * x))
            .norm()
            + x.dot(&self.center)
    }

    /// Exact support point `Γ(u) = R Λ² Rᵀ u / |Λ Rᵀ u| + v`.
    pub fn gamma_exact(&self, u: &Vector3<f64>) -> Vector3<f64> {
        let l = self.lam3();
        let y = l.component_mul(&(self.rotation.transpose() * u));
        self.rotation * l.component_mul(&y) / y.norm() + self.center
    }

    /// Quadratic form `B = R Λ² Rᵀ` with `h² = xᵀ B x` for the centred body.
    pub fn quadratic_form(&self) -> Matrix3<f64> {
        let l = self.lam3();
        self.rotation * Matrix3::from_diagonal(&l.component_mul(&l)) * self.rotation.transpose()
    }
}

impl Serialize for EllipsoidSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let k = self.dim.section_dim();
        let rotation = (0..k)
            .map(|i| (0..k).map(|j| self.rotation[(i, j)]).collect())
            .collect();
        EllipsoidJson {
            lambda: self.lambda.clone(),
            rotation: Some(rotation),
            center: Some(self.center.iter().take(k).copied().collect()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for EllipsoidSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = EllipsoidJson::deserialize(d)?;
        let k = raw.lambda.len();
        let mut rotation = Matrix3::identity();
        if let Some(rows) = raw.rotation {
            if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                return Err(D::Error::custom(format!("rotation must be {k}×{k}")));
            }
            for (i, row) in rows.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    rotation[(i, j)] = *v;
                }
            }
        }
        let mut center = Vector3::zeros();
        if let Some(c) = raw.center {
            if c.len() != k {
                return Err(D::Error::custom(format!("center must have {k} entries")));
            }
            for (i, v) in c.iter().enumerate() {
                center[i] = *v;
            }
        }
        EllipsoidSpec::new(&raw.lambda, rotation, center).map_err(D::Error::custom)
    }
}

/// An ovaloid described by its support function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ovaloid {
    pub h: SupportField,
    /// Sup-norm distance to the exact support function when the field is a
    /// band-limit projection (zero otherwise).
    pub projection_residual: f64,
    /// Set when the origin is not interior (`h ≤ 0` at some node).
    pub warning: Option<String>,
}

impl Ovaloid {
    /// Wraps a support field without validation.
    pub fn from_support(h: SupportField) -> Self {
        let warning = origin_warning(&h);
        Ovaloid {
            h,
            projection_residual: 0.0,
            warning,
        }
    }

    /// Wraps a support field after checking that it is an ovaloid.
    pub fn new(h: SupportField) -> Result<Self> {
        let check = ovaloid_check(&h);
        if !check.ok {
            return Err(Error::Domain(format!(
                "support field is not an ovaloid (margin {:.3e})",
                check.margin
            )));
        }
        Ok(Self::from_support(h))
    }

    pub fn dim(&self) -> SphereDim {
        self.h.dim()
    }

    /// Support parameterization at every grid node.
    pub fn gammas(&self) -> Vec<Vector3<f64>> {
        gammas(&self.h)
    }

    /// Maximal width `max_u h(u) + h(-u)`, which equals the diameter.
    pub fn diameter(&self) -> f64 {
        diameter(&self.h)
    }
}

fn origin_warning(h: &SupportField) -> Option<String> {
    let min = Grid::get(h.dim(), h.degree_cap())
        .synthesize(h)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    (min <= 0.0).then(|| format!("origin is not interior to the body (min h = {min:.3e})"))
}

/// `Γ = ∇h + h u` at every node of the field's grid.
pub fn gammas(h: &SupportField) -> Vec<Vector3<f64>> {
    let grid = Grid::get(h.dim(), h.degree_cap());
    grid.jets(h)
        .iter()
        .zip(grid.nodes())
        .map(|(j, u)| j.gamma(u))
        .collect()
}

/// Maximal width of the body with support function `h`.
pub fn diameter(h: &SupportField) -> f64 {
    let grid = Grid::get(h.dim(), h.degree_cap());
    let v = grid.synthesize(h);
    (0..v.len())
        .map(|i| v[i] + v[grid.antipode(i)])
        .fold(0.0, f64::max)
}

/// Band-limited support function of an ellipsoid. The projection residual is
/// measured on a finer, different grid.
pub fn ellipsoid_support(spec: &EllipsoidSpec, l: usize) -> Ovaloid {
    let h = SupportField::from_fn(spec.dim(), l, |u| spec.support_exact(u));
    let check = Grid::get(spec.dim(), l + 7);
    let vals = check.synthesize(&h);
    let projection_residual = check
        .nodes()
        .iter()
        .zip(vals)
        .map(|(u, v)| (v - spec.support_exact(u)).abs())
        .fold(0.0, f64::max);
    let warning = origin_warning(&h);
    Ovaloid {
        h,
        projection_residual,
        warning,
    }
}

/// Support parameterization `Γ(u) = ∇h(u) + h(u) u`.
pub fn support_parameterization(o: &Ovaloid, u: &Vector3<f64>) -> Result<Vector3<f64>> {
    Ok(spharm::point_jet(&o.h, u)?.gamma(u))
}

/// Result of [`ovaloid_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OvaloidCheck {
    pub ok: bool,
    /// Smallest eigenvalue of `∇²h + h·id` on tangent spaces over the nodes,
    /// i.e. the smallest principal radius of curvature.
    pub margin: f64,
}

/// Eigenvalues (ascending) of the reverse Weingarten map at one node.
fn weingarten_eigs(dim: SphereDim, u: &Vector3<f64>, w: &Matrix3<f64>) -> Vec<f64> {
    let frame = spharm::tangent_frame(dim, u);
    if dim.d() == 1 {
        return vec![frame[0].dot(&(w * frame[0]))];
    }
    let (a, b) = (frame[0], frame[1]);
    let m = Matrix2::new(
        a.dot(&(w * a)),
        a.dot(&(w * b)),
        b.dot(&(w * a)),
        b.dot(&(w * b)),
    );
    let m = (m + m.transpose()) * 0.5;
    let mut e: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    e
}

/// Principal radii of curvature at every node of the field's grid.
pub fn principal_radii(h: &SupportField) -> Vec<Vec<f64>> {
    let grid = Grid::get(h.dim(), h.degree_cap());
    grid.jets(h)
        .iter()
        .zip(grid.nodes())
        .map(|(j, u)| weingarten_eigs(h.dim(), u, &j.weingarten(u)))
        .collect()
}

/// Positivity test of the reverse Weingarten map.
pub fn ovaloid_check(h: &SupportField) -> OvaloidCheck {
    let margin = principal_radii(h)
        .iter()
        .flat_map(|r| r.iter().copied())
        .fold(f64::INFINITY, f64::min);
    OvaloidCheck {
        ok: margin > 0.0,
        margin,
    }
}

/// Sum of the principal radii of curvature, `Δh + (n-2) h`.
pub fn curvature_radii_sum(o: &Ovaloid, u: &Vector3<f64>) -> Result<f64> {
    let jet = spharm::point_jet(&o.h, u)?;
    let lap = spharm::synthesize(&spharm::laplace_beltrami(&o.h), u)?;
    Ok(lap + o.dim().d() as f64 * jet.value)
}

/// Centrix values at the nodes and their deviation from the mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentrixReport {
    pub nodes: Vec<Vector3<f64>>,
    pub values: Vec<Vector3<f64>>,
    pub mean_center: Vector3<f64>,
    pub sup_deviation: f64,
}

impl CentrixReport {
    /// Builds the report from support points sampled on a full grid.
    pub fn from_points(grid: &Grid, points: &[Vector3<f64>]) -> Self {
        let values: Vec<Vector3<f64>> = (0..points.len())
            .map(|i| (points[i] + points[grid.antipode(i)]) * 0.5)
            .collect();
        let total: f64 = grid.weights().iter().sum();
        let mean_center = values
            .iter()
            .zip(grid.weights())
            .fold(Vector3::zeros(), |acc, (c, w)| acc + c * *w)
            / total;
        let sup_deviation = values
            .iter()
            .map(|c| (c - mean_center).norm())
            .fold(0.0, f64::max);
        CentrixReport {
            nodes: grid.nodes().to_vec(),
            values,
            mean_center,
            sup_deviation,
        }
    }

    /// Central-symmetry decision at relative tolerance `rel_tol` of `diameter`.
    pub fn is_central(&self, diameter: f64, rel_tol: f64) -> bool {
        self.sup_deviation <= rel_tol * diameter
    }
}

/// Centrix `c(u) = (Γ(u) + Γ(-u))/2` at every node.
pub fn centrix(o: &Ovaloid) -> CentrixReport {
    centrix_of(&o.h)
}

/// [`centrix`] on a bare support field.
pub fn centrix_of(h: &SupportField) -> CentrixReport {
    let grid = Grid::get(h.dim(), h.degree_cap());
    CentrixReport::from_points(&grid, &gammas(h))
}

/// Even and odd parts of the support parameterization.
#[derive(Clone, Debug, PartialEq)]
pub struct OddEvenParts {
    /// `Γ⁺(u) = (Γ(u) + Γ(-u))/2` at the nodes (the centrix).
    pub gamma_plus: Vec<Vector3<f64>>,
    /// `Γ⁻(u) = (Γ(u) - Γ(-u))/2` at the nodes.
    pub gamma_minus: Vec<Vector3<f64>>,
    /// `h⁻(u) = u·Γ⁻(u)`, the support function of the body recentred at the
    /// centrix when the centrix is constant.
    pub h_minus: SupportField,
}

pub fn odd_even_parts(o: &Ovaloid) -> OddEvenParts {
    let grid = Grid::get(o.dim(), o.h.degree_cap());
    let g = o.gammas();
    let n = g.len();
    let gamma_plus: Vec<_> = (0..n).map(|i| (g[i] + g[grid.antipode(i)]) * 0.5).collect();
    let gamma_minus: Vec<_> = (0..n).map(|i| (g[i] - g[grid.antipode(i)]) * 0.5).collect();
    let samples: Vec<f64> = gamma_minus
        .iter()
        .zip(grid.nodes())
        .map(|(v, u)| v.dot(u))
        .collect();
    let h_minus = grid.analyze(&samples).expect("node count matches");
    OddEvenParts {
        gamma_plus,
        gamma_minus,
        h_minus,
    }
}

/// Odd harmonic perturbation `(x³ - 3xy²)/3`, scaled so that its support
/// parameterization has unit sup-norm on the circle.
pub fn odd_cubic(dim: SphereDim, l: usize) -> SupportField {
    SupportField::from_fn(dim, l.max(3), |u| {
        (u.x.powi(3) - 3.0 * u.x * u.y * u.y) / 3.0
    })
}

/// Even harmonic perturbation `(x⁴ - 6x²y² + y⁴)/4`.
pub fn even_quartic(dim: SphereDim, l: usize) -> SupportField {
    SupportField::from_fn(dim, l.max(4), |u| {
        (u.x.powi(4) - 6.0 * u.x * u.x * u.y * u.y + u.y.powi(4)) / 4.0
    })
}
