//! Cross-sections of a tube by tilted hyperplanes `z = ε (p·τ) + z0`.
//!
//! Near `z0` the support parameterization `Γ(u, z)` (centre included) is
//! interpolated in `z` through a few horizontal sections placed at Chebyshev
//! nodes. The height function is the fixed point of
//! `z ↦ z0 + ε τ·Γ(u, z)`; the projected section is the point family
//! `p(u) = Γ(u, z(ε, u))`, whose support parameterization is obtained by
//! inverting its Gauss map.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex::{self, CENTRALITY_REL_TOL};
use crate::error::{Error, Result};
use crate::spharm::{tangent_frame, Grid, PointBasis, SphereDim, SupportField};
use crate::tube::{lagrange_weights, SectionSource};

/// Default ε step of the finite-difference centrix derivative.
pub const DEFAULT_EPS_STEP: f64 = 1e-3;

/// Largest accepted `|ε|·sup|τ·∂Γ/∂z|`.
/// Sections in the default `z` stencil of a [`LocalTube`].
pub const DEFAULT_STENCIL: usize = 9;

pub const CONTRACTION_LIMIT: f64 = 0.5;

/// The hyperplane `{(p, z) : z = ε (p·τ) + z0}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltedPlane {
    pub tau: Vector3<f64>,
    pub z0: f64,
    pub eps: f64,
}

impl TiltedPlane {
    /// Validates that `τ` is a unit vector of the section space.
    pub fn new(dim: SphereDim, tau: Vector3<f64>, z0: f64, eps: f64) -> Result<Self> {
        if (tau.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "tilt direction must be a unit vector, |τ| = {}",
                tau.norm()
            )));
        }
        if dim.d() == 1 && tau.z != 0.0 {
            return Err(Error::Domain(
                "tilt direction must lie in the plane for d = 1".into(),
            ));
        }
        if !z0.is_finite() || !eps.is_finite() {
            return Err(Error::Domain("z0 and ε must be finite".into()));
        }
        Ok(TiltedPlane { tau, z0, eps })
    }

    /// Height of the plane above the section point `p`.
    pub fn height(&self, p: &Vector3<f64>) -> f64 {
        self.eps * p.dot(&self.tau) + self.z0
    }

    fn with_eps(&self, eps: f64) -> Self {
        TiltedPlane { eps, ..*self }
    }
}

/// Options controlling the discretization of a slice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceOptions {
    /// Degree cap of the horizontal sections.
    #[serde(rename = "L")]
    pub l: usize,
    /// Degree cap of the grid of normal directions `w` on which the section
    /// is reported; at least `l`.
    pub eval_l: usize,
    /// Number of horizontal sections in the `z` stencil.
    pub stencil: usize,
}

impl SliceOptions {
    pub fn new(l: usize) -> Self {
        SliceOptions {
            l,
            eval_l: l,
            stencil: DEFAULT_STENCIL,
        }
    }
}

/// Horizontal sections around `z0`, interpolated in `z`.
pub struct LocalTube {
    dim: SphereDim,
    l: usize,
    zs: Vec<f64>,
    fields: Vec<SupportField>,
    lo: f64,
    hi: f64,
}

/// `Γ`, its `u`-differential and `z`-derivative at one direction.
struct GammaJet {
    gamma: Vector3<f64>,
    w: Matrix3<f64>,
    gamma_z: Vector3<f64>,
}

/// Stencil data of all sections at one direction `u`.
pub struct DirectionData {
    gammas: Vec<Vector3<f64>>,
    ws: Vec<Matrix3<f64>>,
}

impl LocalTube {
    /// Sections at `stencil` Chebyshev nodes spanning `z0 ± half_width`.
    pub fn around<S: SectionSource + ?Sized>(
        src: &S,
        z0: f64,
        half_width: f64,
        stencil: usize,
        l: usize,
    ) -> Result<Self> {
        let (wlo, whi) = src.window();
        let (lo, hi) = (z0 - half_width, z0 + half_width);
        if lo <= wlo || hi >= whi {
            return Err(Error::TiltTooLarge {
                guard: half_width,
                limit: (z0 - wlo).min(whi - z0),
            });
        }
        let zs: Vec<f64> = if half_width == 0.0 {
            vec![z0]
        } else {
            let k = stencil.max(2);
            (0..k)
                .map(|i| {
                    z0 + half_width
                        * ((2 * i + 1) as f64 * std::f64::consts::PI / (2 * k) as f64).cos()
                })
                .collect()
        };
        let fields = zs
            .par_iter()
            .map(|z| src.section_field(*z, l))
            .collect::<Result<Vec<_>>>()?;
        Ok(LocalTube {
            dim: src.dim(),
            l,
            zs,
            fields,
            lo,
            hi,
        })
    }

    /// Local tube wide enough for the planes `|ε| ≤ eps` through `z0`.
    pub fn for_tilt<S: SectionSource + ?Sized>(
        src: &S,
        z0: f64,
        eps: f64,
        stencil: usize,
        l: usize,
    ) -> Result<Self> {
        let h = src.section_field(z0, l)?;
        let sup_gamma = convex::gammas(&h)
            .iter()
            .map(|g| g.norm())
            .fold(0.0, f64::max);
        Self::around(src, z0, 1.2 * eps.abs() * sup_gamma, stencil, l)
    }

    pub fn data(&self, u: &Vector3<f64>) -> DirectionData {
        let basis = PointBasis::new(self.dim, self.l, u);
        let mut gammas = Vec::with_capacity(self.fields.len());
        let mut ws = Vec::with_capacity(self.fields.len());
        for f in &self.fields {
            let j = basis.jet(f);
            gammas.push(j.gamma(u));
            ws.push(j.weingarten(u));
        }
        DirectionData { gammas, ws }
    }

    fn gamma_at(&self, d: &DirectionData, z: f64) -> Vector3<f64> {
        lagrange_weights(&self.zs, z, false)
            .iter()
            .zip(&d.gammas)
            .fold(Vector3::zeros(), |a, (w, g)| a + g * *w)
    }

    fn jet_at(&self, d: &DirectionData, z: f64) -> GammaJet {
        let w0 = lagrange_weights(&self.zs, z, false);
        let w1 = lagrange_weights(&self.zs, z, true);
        let mut out = GammaJet {
            gamma: Vector3::zeros(),
            w: Matrix3::zeros(),
            gamma_z: Vector3::zeros(),
        };
        for k in 0..self.zs.len() {
            out.gamma += d.gammas[k] * w0[k];
            out.gamma_z += d.gammas[k] * w1[k];
            out.w += d.ws[k] * w0[k];
        }
        out
    }

    /// `ε·sup_u |τ·∂Γ/∂z(u, z0)|` over the grid of the sections.
    pub fn contraction_guard(&self, plane: &TiltedPlane) -> f64 {
        if self.zs.len() < 2 {
            return 0.0;
        }
        let grid = Grid::get(self.dim, self.l);
        let w1 = lagrange_weights(&self.zs, plane.z0, true);
        let mut gz = vec![Vector3::zeros(); grid.len()];
        for (f, w) in self.fields.iter().zip(&w1) {
            for ((acc, j), u) in gz.iter_mut().zip(grid.jets(f)).zip(grid.nodes()) {
                *acc += j.gamma(u) * *w;
            }
        }
        let sup = gz
            .iter()
            .map(|g| g.dot(&plane.tau).abs())
            .fold(0.0, f64::max);
        plane.eps.abs() * sup
    }

    /// Fixed point of `z ↦ z0 + ε τ·Γ(u, z)` for prepared direction data.
    pub fn solve(&self, d: &DirectionData, plane: &TiltedPlane) -> Result<f64> {
        let mut z = plane.z0;
        if plane.eps == 0.0 {
            return Ok(z);
        }
        let tol = 1e-15 * (1.0 + z.abs());
        for _ in 0..200 {
            let next = plane.height(&self.gamma_at(d, z));
            if !(self.lo..=self.hi).contains(&next) {
                return Err(Error::TiltTooLarge {
                    guard: (next - plane.z0).abs(),
                    limit: self.hi - plane.z0,
                });
            }
            let step = (next - z).abs();
            z = next;
            if step <= tol {
                return Ok(z);
            }
        }
        Err(Error::TiltTooLarge {
            guard: f64::NAN,
            limit: CONTRACTION_LIMIT,
        })
    }

    /// Section point, height and outer unit normal at parameter `u`.
    fn section_point(
        &self,
        u: &Vector3<f64>,
        plane: &TiltedPlane,
    ) -> Result<(Vector3<f64>, f64, Vector3<f64>)> {
        let d = self.data(u);
        let z = self.solve(&d, plane)?;
        let j = self.jet_at(&d, z);
        let et = plane.eps * plane.tau;
        let denom = 1.0 - et.dot(&j.gamma_z);
        let dp = |x: &Vector3<f64>| {
            let wx = j.w * x;
            wx + j.gamma_z * (et.dot(&wx) / denom)
        };
        let frame = tangent_frame(self.dim, u);
        let n = if self.dim.d() == 1 {
            let t = dp(&frame[0]);
            Vector3::new(t.y, -t.x, 0.0)
        } else {
            dp(&frame[0]).cross(&dp(&frame[1]))
        };
        let norm = n.norm();
        if !(norm > 0.0) || n.dot(u) <= 0.0 {
            return Err(Error::SectionNotOvaloid(format!(
                "degenerate normal at u = ({:.4}, {:.4}, {:.4})",
                u.x, u.y, u.z
            )));
        }
        Ok((j.gamma, z, n / norm))
    }

    /// Parameter `u*` whose section normal is `w`, with its point and height.
    fn invert(
        &self,
        w: &Vector3<f64>,
        plane: &TiltedPlane,
    ) -> Result<(Vector3<f64>, Vector3<f64>, f64)> {
        if plane.eps == 0.0 {
            let d = self.data(w);
            return Ok((*w, self.gamma_at(&d, plane.z0), plane.z0));
        }
        if self.dim.d() == 1 {
            self.invert_circle(w, plane)
        } else {
            self.invert_sphere(w, plane)
        }
    }

    fn invert_circle(
        &self,
        w: &Vector3<f64>,
        plane: &TiltedPlane,
    ) -> Result<(Vector3<f64>, Vector3<f64>, f64)> {
        let psi = w.y.atan2(w.x);
        let at = |phi: f64| Vector3::new(phi.cos(), phi.sin(), 0.0);
        let g = |phi: f64| -> Result<f64> {
            let (_, _, n) = self.section_point(&at(phi), plane)?;
            // Angle of n relative to w, in (-π, π].
            Ok((w.x * n.y - w.y * n.x).atan2(w.dot(&n)))
        };
        let mut a = 0.05;
        let (mut lo, mut hi);
        loop {
            lo = psi - a;
            hi = psi + a;
            if g(lo)? < 0.0 && g(hi)? > 0.0 {
                break;
            }
            a *= 2.0;
            if a > std::f64::consts::FRAC_PI_2 {
                return Err(Error::SectionNotOvaloid(format!(
                    "normal angle not monotone near direction angle {psi:.6}"
                )));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let u = at(0.5 * (lo + hi));
        let (p, z, _) = self.section_point(&u, plane)?;
        Ok((u, p, z))
    }

    fn invert_sphere(
        &self,
        w: &Vector3<f64>,
        plane: &TiltedPlane,
    ) -> Result<(Vector3<f64>, Vector3<f64>, f64)> {
        let iterate =
            |start: Vector3<f64>, damping: f64, max_iter: usize| -> Result<Option<Vector3<f64>>> {
                let mut u = start;
                let mut best = f64::INFINITY;
                let mut stalls = 0;
                for _ in 0..max_iter {
                    let (_, _, n) = self.section_point(&u, plane)?;
                    let r = w - n;
                    let err = r.norm();
                    if err < 1e-15 {
                        return Ok(Some(u));
                    }
                    if err < best * 0.999 {
                        best = err;
                        stalls = 0;
                    } else {
                        stalls += 1;
                        if stalls >= 3 {
                            return Ok((best < 1e-12).then_some(u));
                        }
                    }
                    u = (u + r * damping).normalize();
                }
                Ok((best < 1e-12).then_some(u))
            };
        let u = match iterate(*w, 1.0, 100)? {
            Some(u) => u,
            None => {
                let grid = Grid::get(self.dim, self.l);
                let mut start = *w;
                let mut top = f64::NEG_INFINITY;
                for u in grid.nodes() {
                    if let Ok((_, _, n)) = self.section_point(u, plane) {
                        if n.dot(w) > top {
                            top = n.dot(w);
                            start = *u;
                        }
                    }
                }
                iterate(start, 0.5, 400)?.ok_or_else(|| {
                    Error::SectionNotOvaloid(format!(
                        "Gauss map inversion failed at w = ({:.4}, {:.4}, {:.4})",
                        w.x, w.y, w.z
                    ))
                })?
            }
        };
        let (p, z, _) = self.section_point(&u, plane)?;
        Ok((u, p, z))
    }
}

/// `z(ε, u)` for a single direction.
pub fn solve_height<S: SectionSource + ?Sized>(
    src: &S,
    plane: &TiltedPlane,
    u: &Vector3<f64>,
    opts: &SliceOptions,
) -> Result<f64> {
    let local = LocalTube::for_tilt(src, plane.z0, plane.eps, opts.stencil, opts.l)?;
    check_guard(&local, plane)?;
    local.solve(&local.data(u), plane)
}

fn check_guard(local: &LocalTube, plane: &TiltedPlane) -> Result<()> {
    let guard = local.contraction_guard(plane);
    if guard >= CONTRACTION_LIMIT {
        return Err(Error::TiltTooLarge {
            guard,
            limit: CONTRACTION_LIMIT,
        });
    }
    Ok(())
}

/// A tilted cross-section, reported on a grid of normal directions `w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionReport {
    pub plane: TiltedPlane,
    /// Normal directions `w` (the grid nodes).
    pub nodes: Vec<Vector3<f64>>,
    /// `θ_ε(w)`: the tube parameter whose section normal is `w`.
    pub theta: Vec<Vector3<f64>>,
    /// Heights `z(ε, θ_ε(w))`.
    pub heights: Vec<f64>,
    /// Projected section points `Γ_ε(w) = Γ(θ_ε(w), z(ε, θ_ε(w)))`.
    pub points: Vec<Vector3<f64>>,
    /// Support function of the projected section about `center`.
    pub support: SupportField,
    /// Centrix `(Γ_ε(w) + Γ_ε(-w))/2` at every node.
    pub centrix: Vec<Vector3<f64>>,
    pub center: Vector3<f64>,
    pub sup_deviation: f64,
    /// `sup_deviation` divided by the section's diameter.
    pub relative_deviation: f64,
    pub contraction_guard: f64,
}

impl SectionReport {
    /// Whether the section is central at relative tolerance `rel_tol`.
    pub fn is_central(&self, rel_tol: f64) -> bool {
        self.relative_deviation <= rel_tol
    }

    /// Central at the default tolerance.
    pub fn central(&self) -> bool {
        self.is_central(CENTRALITY_REL_TOL)
    }

    /// Writes `node,w_x,w_y,w_z,h_eps,c_x,c_y,c_z` rows.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["node", "w_x", "w_y", "w_z", "h_eps", "c_x", "c_y", "c_z"])?;
        let grid = Grid::get(self.support.dim(), self.support.degree_cap());
        let h = grid.synthesize(&self.support);
        for (i, (u, c)) in self.nodes.iter().zip(&self.centrix).enumerate() {
            let row = [u.x, u.y, u.z, h[i], c.x, c.y, c.z].map(|v| format!("{v:.17e}"));
            let mut rec = vec![i.to_string()];
            rec.extend(row);
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn section_on(local: &LocalTube, plane: &TiltedPlane, eval_l: usize) -> Result<SectionReport> {
    let grid = Grid::get(local.dim, eval_l.max(local.l));
    let solved = grid
        .nodes()
        .par_iter()
        .map(|w| local.invert(w, plane))
        .collect::<Result<Vec<_>>>()?;
    let theta: Vec<_> = solved.iter().map(|s| s.0).collect();
    let points: Vec<_> = solved.iter().map(|s| s.1).collect();
    let heights: Vec<_> = solved.iter().map(|s| s.2).collect();
    let rep = convex::CentrixReport::from_points(&grid, &points);
    let diameter = (0..grid.len())
        .map(|i| grid.nodes()[i].dot(&(points[i] - points[grid.antipode(i)])))
        .fold(0.0, f64::max);
    let samples: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(&points)
        .map(|(w, p)| w.dot(&(p - rep.mean_center)))
        .collect();
    let support = grid.analyze(&samples)?;
    Ok(SectionReport {
        plane: *plane,
        nodes: grid.nodes().to_vec(),
        theta,
        heights,
        points,
        support,
        centrix: rep.values,
        center: rep.mean_center,
        sup_deviation: rep.sup_deviation,
        relative_deviation: rep.sup_deviation / diameter,
        contraction_guard: local.contraction_guard(plane),
    })
}

/// The projected cross-section of `src` by `plane`.
pub fn cross_section<S: SectionSource + ?Sized>(
    src: &S,
    plane: &TiltedPlane,
    opts: &SliceOptions,
) -> Result<SectionReport> {
    let local = LocalTube::for_tilt(src, plane.z0, plane.eps, opts.stencil, opts.l)?;
    check_guard(&local, plane)?;
    section_on(&local, plane, opts.eval_l)
}

/// Finite-difference `∂_ε c_ε` at `ε = 0`, sampled at the nodes `w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentrixDerivative {
    pub tau: Vector3<f64>,
    pub z0: f64,
    pub eps_step: f64,
    pub richardson: bool,
    /// Degree cap of the node grid.
    #[serde(rename = "L")]
    pub eval_l: usize,
    pub nodes: Vec<Vector3<f64>>,
    pub field: Vec<Vector3<f64>>,
}

/// Central difference of the tilted centrix in `ε`; with `richardson` the
/// steps `ε` and `ε/2` are combined to fourth order.
pub fn centrix_eps_derivative<S: SectionSource + ?Sized>(
    src: &S,
    tau: &Vector3<f64>,
    z0: f64,
    eps_step: f64,
    richardson: bool,
    opts: &SliceOptions,
) -> Result<CentrixDerivative> {
    if !(eps_step > 0.0) {
        return Err(Error::Domain("ε step must be positive".into()));
    }
    let plane = TiltedPlane::new(src.dim(), *tau, z0, eps_step)?;
    let local = LocalTube::for_tilt(src, z0, eps_step, opts.stencil, opts.l)?;
    check_guard(&local, &plane)?;
    let diff = |e: f64| -> Result<Vec<Vector3<f64>>> {
        let plus = section_on(&local, &plane.with_eps(e), opts.eval_l)?;
        let minus = section_on(&local, &plane.with_eps(-e), opts.eval_l)?;
        Ok(plus
            .centrix
            .iter()
            .zip(&minus.centrix)
            .map(|(a, b)| (a - b) / (2.0 * e))
            .collect())
    };
    let d1 = diff(eps_step)?;
    let field = if richardson {
        let d2 = diff(0.5 * eps_step)?;
        d1.iter()
            .zip(&d2)
            .map(|(a, b)| (b * 4.0 - a) / 3.0)
            .collect()
    } else {
        d1
    };
    let grid = Grid::get(src.dim(), opts.eval_l.max(opts.l));
    Ok(CentrixDerivative {
        tau: *tau,
        z0,
        eps_step,
        richardson,
        eval_l: grid.degree_cap(),
        nodes: grid.nodes().to_vec(),
        field,
    })
}

impl CentrixDerivative {
    /// Spectral divergence of the derivative field on its node grid.
    pub fn divergence(&self, dim: SphereDim) -> Result<Vec<f64>> {
        let grid = Grid::get(dim, self.eval_l);
        Ok(grid.synthesize(&grid.divergence(&self.field)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obstruction::{centrix_derivative, obstruction_field_on, tau_sweep};
    use crate::tube::{transverse_support, Family, TubeSpec};

    fn opts(l: usize) -> SliceOptions {
        SliceOptions::new(l)
    }

    #[test]
    fn zero_tilt_is_the_horizontal_section() {
        for dim in [SphereDim::CIRCLE, SphereDim::SPHERE] {
            let t = TubeSpec::default_family("twisted", dim).unwrap();
            let tau = tau_sweep(dim, 3)[1];
            let plane = TiltedPlane::new(dim, tau, 0.2, 0.0).unwrap();
            let r = cross_section(&t, &plane, &opts(12)).unwrap();
            let h = t.section_field(0.2, 12).unwrap();
            let c = convex::centrix_of(&h);
            assert!(r.heights.iter().all(|z| *z == 0.2));
            assert!(r.support.translate(&r.center).sub(&h).unwrap().sup_norm() < 1e-12);
            assert!((r.center - c.mean_center).norm() < 1e-12);
        }
    }

    #[test]
    fn cylinder_height_is_closed_form() {
        let t = TubeSpec::default_family("cylinder", SphereDim::CIRCLE).unwrap();
        let tau = Vector3::new(0.6, 0.8, 0.0);
        let plane = TiltedPlane::new(t.dim, tau, 0.1, 0.05).unwrap();
        let h = t.section_field(0.0, 32).unwrap();
        for k in 0..8 {
            let a = k as f64 * 0.7;
            let u = Vector3::new(a.cos(), a.sin(), 0.0);
            let z = solve_height(&t, &plane, &u, &opts(32)).unwrap();
            let g = crate::spharm::point_jet(&h, &u).unwrap().gamma(&u);
            assert!((z - (0.1 + 0.05 * tau.dot(&g))).abs() < 1e-13);
        }
    }

    #[test]
    fn height_agrees_with_bisection() {
        let t = TubeSpec::default_family("ellipsoid", SphereDim::SPHERE).unwrap();
        let tau = Vector3::new(0.0, 0.6, 0.8);
        let plane = TiltedPlane::new(t.dim, tau, 0.2, 0.05).unwrap();
        for u in [
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 0.6, -0.8),
            Vector3::new(0.48, 0.6, 0.64),
        ] {
            let z = solve_height(&t, &plane, &u, &opts(32)).unwrap();
            // Bisection on G(z) = z - z0 - ε τ·Γ(u, z) with exact sections.
            let g = |z: f64| {
                let h = t.section_field(z, 32).unwrap();
                z - 0.2 - 0.05 * tau.dot(&crate::spharm::point_jet(&h, &u).unwrap().gamma(&u))
            };
            let (mut lo, mut hi) = (0.0, 0.4);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if g(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            assert!((z - 0.5 * (lo + hi)).abs() < 1e-10);
        }
    }

    #[test]
    fn points_lie_on_the_plane() {
        let t = TubeSpec::default_family("paraboloid", SphereDim::CIRCLE).unwrap();
        let plane = TiltedPlane::new(t.dim, Vector3::new(0.0, 1.0, 0.0), 0.0, 0.08).unwrap();
        let r = cross_section(&t, &plane, &opts(32)).unwrap();
        for (p, z) in r.points.iter().zip(&r.heights) {
            assert!((z - plane.height(p)).abs() < 1e-10);
        }
    }

    #[test]
    fn ellipsoid_sections_stay_central() {
        for dim in [SphereDim::CIRCLE, SphereDim::SPHERE] {
            let t = TubeSpec::default_family("ellipsoid", dim).unwrap();
            let tau = tau_sweep(dim, 5)[2];
            let plane = TiltedPlane::new(dim, tau, 0.1, 0.05).unwrap();
            let r = cross_section(&t, &plane, &opts(if dim.d() == 1 { 32 } else { 16 })).unwrap();
            assert!(r.sup_deviation < 1e-5, "{dim:?}: {}", r.sup_deviation);
        }
    }

    #[test]
    fn twisted_sections_are_not_central() {
        let t = TubeSpec::default_family("twisted", SphereDim::CIRCLE).unwrap();
        let tau = Vector3::new(1.0, 1.0, 0.0).normalize();
        let plane = TiltedPlane::new(t.dim, tau, 0.0, 0.05).unwrap();
        let r = cross_section(&t, &plane, &opts(32)).unwrap();
        assert!(r.sup_deviation > 1e-3, "{}", r.sup_deviation);
        assert!(!r.central());
    }

    #[test]
    fn large_tilt_is_rejected() {
        let t = TubeSpec::default_family("cone", SphereDim::CIRCLE).unwrap();
        let plane = TiltedPlane::new(t.dim, Vector3::new(1.0, 0.0, 0.0), -0.5, 2.0).unwrap();
        assert!(matches!(
            cross_section(&t, &plane, &opts(16)),
            Err(Error::TiltTooLarge { .. })
        ));
        assert!(TiltedPlane::new(t.dim, Vector3::new(1.0, 1.0, 0.0), 0.0, 0.1).is_err());
    }

    #[test]
    fn cylinder_centrix_derivative_vanishes() {
        let t = TubeSpec::default_family("cylinder", SphereDim::CIRCLE).unwrap();
        let d = centrix_eps_derivative(
            &t,
            &Vector3::new(0.6, 0.8, 0.0),
            0.0,
            DEFAULT_EPS_STEP,
            false,
            &opts(32),
        )
        .unwrap();
        assert!(d.field.iter().all(|v| v.norm() < 1e-6));
    }

    #[test]
    fn derivative_matches_closed_form() {
        for name in ["ellipsoid", "twisted", "bent"] {
            let t = TubeSpec::default_family(name, SphereDim::CIRCLE).unwrap();
            let tau = Vector3::new(0.6, -0.8, 0.0);
            let z0 = 0.3;
            let d =
                centrix_eps_derivative(&t, &tau, z0, DEFAULT_EPS_STEP, false, &opts(32)).unwrap();
            let ts = transverse_support(&t, &[z0], 32).unwrap();
            let grid = Grid::get(t.dim, 32);
            let closed = centrix_derivative(&ts, 0, &tau, &grid);
            let err = d
                .field
                .iter()
                .zip(&closed)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-4, "{name}: {err}");
        }
    }

    #[test]
    fn affine_axis_shows_constant_term() {
        let v = Vector3::new(0.3, -0.2, 0.0);
        let t = TubeSpec::generate(
            SphereDim::CIRCLE,
            Family::Cylinder {
                semi_axes: vec![1.0, 1.3],
                axis_tilt: vec![v.x, v.y],
                even_bump: 0.0,
            },
            None,
        )
        .unwrap();
        let tau = Vector3::new(0.0, 1.0, 0.0);
        let d = centrix_eps_derivative(&t, &tau, 0.5, DEFAULT_EPS_STEP, true, &opts(32)).unwrap();
        let expect = v * (tau.dot(&v) * 0.5);
        assert!(d.field.iter().all(|f| (f - expect).norm() < 1e-6));
        assert!(d.divergence(t.dim).unwrap().iter().all(|x| x.abs() < 1e-6));
    }

    #[test]
    fn divergence_oracle_on_twisted_circle_tube() {
        let t = TubeSpec::default_family("twisted", SphereDim::CIRCLE).unwrap();
        let z0 = 0.1;
        let ts = transverse_support(&t, &[z0], 32).unwrap();
        let o = SliceOptions {
            eval_l: 66,
            ..opts(32)
        };
        let f = obstruction_field_on(&ts, 66);
        for tau in tau_sweep(t.dim, 4) {
            let d = centrix_eps_derivative(&t, &tau, z0, DEFAULT_EPS_STEP, false, &o).unwrap();
            let div = d.divergence(t.dim).unwrap();
            let ft = f.f_tau(&tau);
            let err = div
                .iter()
                .zip(&ft[0])
                .map(|(a, b)| (a / f.scale - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-3, "{err}");
        }
    }

    #[test]
    fn theta_initial_derivative() {
        let t = TubeSpec::default_family("ellipsoid", SphereDim::CIRCLE).unwrap();
        let tau = Vector3::new(0.8, 0.6, 0.0);
        let (z0, e) = (0.3, 1e-4);
        let p =
            cross_section(&t, &TiltedPlane::new(t.dim, tau, z0, e).unwrap(), &opts(32)).unwrap();
        let m = cross_section(
            &t,
            &TiltedPlane::new(t.dim, tau, z0, -e).unwrap(),
            &opts(32),
        )
        .unwrap();
        let ts = transverse_support(&t, &[z0], 32).unwrap();
        let grid = Grid::get(t.dim, 32);
        let jz = grid.jets(&ts.h_z[0]);
        for (i, u) in grid.nodes().iter().enumerate() {
            let fd = (p.theta[i] - m.theta[i]) / (2.0 * e);
            let gamma_z = jz[i].gamma(u) + ts.center_z[0];
            let expect = (tau - u * tau.dot(u)) * u.dot(&gamma_z);
            assert!((fd - expect).norm() < 1e-4, "{fd:?} vs {expect:?}");
        }
    }
}
