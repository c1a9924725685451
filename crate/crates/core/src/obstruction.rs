//! Closed-form symmetry obstruction of a tube, its two PDE residuals, the
//! `q²` constancy check, the ellipsoid criterion and the affine-axis test.
//!
//! Every residual is reported relative to the natural size of its leading
//! term so that decisions do not depend on the scale of the tube.

use nalgebra::{DMatrix, DVector, Matrix3, Quaternion, SymmetricEigen, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spharm::{laplace_beltrami, tangent_projector, Grid, SphereDim, SupportField};
use crate::tube::TransverseSupport;

/// Number of tilt directions in the default sweep.
pub const DEFAULT_SWEEP: usize = 16;

/// `count` tilt directions spread over the unit sphere of the section space.
pub fn tau_sweep(dim: SphereDim, count: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| match dim.d() {
            1 => {
                let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                Vector3::new(a.cos(), a.sin(), 0.0)
            }
            _ => {
                let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * k as f64;
                Vector3::new(r * phi.cos(), r * phi.sin(), z)
            }
        })
        .collect()
}

/// [`tau_sweep`] turned by a rotation drawn from `seed`, so that repeated
/// runs with different seeds probe different directions.
pub fn seeded_tau_sweep(dim: SphereDim, count: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rot = if dim.d() == 1 {
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), a)
    } else {
        // Uniform random rotation from three uniforms.
        let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let tau = std::f64::consts::TAU;
        let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
        UnitQuaternion::from_quaternion(Quaternion::new(
            b * (tau * u3).cos(),
            a * (tau * u2).sin(),
            a * (tau * u2).cos(),
            b * (tau * u3).sin(),
        ))
    };
    tau_sweep(dim, count).iter().map(|t| rot * t).collect()
}

/// `Δh + d·h`, the sum of principal radii of curvature.
fn radii_sum(h: &SupportField) -> SupportField {
    laplace_beltrami(h)
        .axpy(h.dim().d() as f64, h)
        .expect("same dimension")
}

/// Natural size `sup|h|·sup|Δh + d h| / Z` of the PDE brackets.
pub fn residual_scale(ts: &TransverseSupport) -> f64 {
    let sup_h = ts.h.iter().map(|h| h.sup_norm()).fold(0.0, f64::max);
    let sup_y =
        ts.h.iter()
            .map(|h| radii_sum(h).sup_norm())
            .fold(0.0, f64::max);
    let s = sup_h * sup_y / ts.z_scale;
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Raw brackets `(V, S)` at the nodes of `grid` for grid height `k`.
fn brackets(ts: &TransverseSupport, k: usize, grid: &Grid) -> (Vec<Vector3<f64>>, Vec<f64>) {
    let h = &ts.h[k];
    let hz = &ts.h_z[k];
    let y = radii_sum(h);
    let yz = radii_sum(hz);
    let jh = grid.jets(h);
    let ghz = grid.gradients(hz);
    let hzv = grid.synthesize(hz);
    let gy = grid.gradients(&y);
    let yv = grid.synthesize(&y);
    let yzv = grid.synthesize(&yz);
    let mut v = Vec::with_capacity(grid.len());
    let mut s = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let j = &jh[i];
        v.push(gy[i] * hzv[i] + j.grad * yzv[i] + (ghz[i] * j.value + j.hess * ghz[i]) * 2.0);
        s.push(j.value * yzv[i] - yv[i] * hzv[i]);
    }
    (v, s)
}

/// Tangent bracket `V(u, z)` of the first PDE at every grid height.
pub fn pde1_residual(ts: &TransverseSupport) -> Vec<Vec<Vector3<f64>>> {
    let grid = Grid::get(ts.dim, ts.l);
    (0..ts.len())
        .into_par_iter()
        .map(|k| brackets(ts, k, &grid).0)
        .collect()
}

/// Scalar bracket `S(u, z)` of the second PDE at every grid height.
pub fn pde2_residual(ts: &TransverseSupport) -> Vec<Vec<f64>> {
    let grid = Grid::get(ts.dim, ts.l);
    (0..ts.len())
        .into_par_iter()
        .map(|k| brackets(ts, k, &grid).1)
        .collect()
}

/// Sup and L² norms of a residual, relative to [`residual_scale`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub v_sup: f64,
    pub v_l2: f64,
    pub s_sup: f64,
    pub s_l2: f64,
}

/// Normalized brackets `V`, `S` on `S^d × z_grid`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstructionField {
    pub dim: SphereDim,
    /// Degree cap of the evaluation grid.
    #[serde(rename = "L")]
    pub l: usize,
    pub z_grid: Vec<f64>,
    pub nodes: Vec<Vector3<f64>>,
    /// `V / scale`, indexed `[height][node]`.
    pub v: Vec<Vec<Vector3<f64>>>,
    /// `S / scale`, indexed `[height][node]`.
    pub s: Vec<Vec<f64>>,
    pub scale: f64,
    pub norms: Norms,
}

/// Location and size of the largest `|f_τ|` for one tilt direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauMax {
    pub tau: Vector3<f64>,
    pub value: f64,
    pub z: f64,
    pub u: Vector3<f64>,
}

/// Result of a τ-sweep over an [`ObstructionField`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub per_tau: Vec<TauMax>,
    /// The overall maximum (first maximizing τ on ties).
    pub max: TauMax,
}

/// Brackets evaluated on the transverse support's own grid.
pub fn obstruction_field(ts: &TransverseSupport) -> ObstructionField {
    obstruction_field_on(ts, ts.l)
}

/// Brackets evaluated on the grid of degree cap `eval_l ≥ ts.l`.
pub fn obstruction_field_on(ts: &TransverseSupport, eval_l: usize) -> ObstructionField {
    let grid = Grid::get(ts.dim, eval_l.max(ts.l));
    let scale = residual_scale(ts);
    let per: Vec<_> = (0..ts.len())
        .into_par_iter()
        .map(|k| brackets(ts, k, &grid))
        .collect();
    let area: f64 = grid.weights().iter().sum();
    let mut norms = Norms::default();
    let (mut v2, mut s2) = (0.0, 0.0);
    let mut v = Vec::with_capacity(per.len());
    let mut s = Vec::with_capacity(per.len());
    for (vk, sk) in per {
        let vk: Vec<Vector3<f64>> = vk.into_iter().map(|x| x / scale).collect();
        let sk: Vec<f64> = sk.into_iter().map(|x| x / scale).collect();
        for ((a, b), w) in vk.iter().zip(&sk).zip(grid.weights()) {
            norms.v_sup = norms.v_sup.max(a.norm());
            norms.s_sup = norms.s_sup.max(b.abs());
            v2 += w * a.norm_squared();
            s2 += w * b * b;
        }
        v.push(vk);
        s.push(sk);
    }
    let denom = area * ts.len().max(1) as f64;
    norms.v_l2 = (v2 / denom).sqrt();
    norms.s_l2 = (s2 / denom).sqrt();
    ObstructionField {
        dim: ts.dim,
        l: grid.degree_cap(),
        z_grid: ts.z_grid.clone(),
        nodes: grid.nodes().to_vec(),
        v,
        s,
        scale,
        norms,
    }
}

impl ObstructionField {
    /// `f_τ(u, z) = τ^⊤(u)·V + (τ·u) S`, normalized, `[height][node]`.
    pub fn f_tau(&self, tau: &Vector3<f64>) -> Vec<Vec<f64>> {
        self.v
            .iter()
            .zip(&self.s)
            .map(|(vk, sk)| {
                vk.iter()
                    .zip(sk)
                    .zip(&self.nodes)
                    .map(|((v, s), u)| assemble(tau, u, v, *s))
                    .collect()
            })
            .collect()
    }

    /// Largest `|f_τ|` over the grid for each τ and overall.
    pub fn sweep(&self, taus: &[Vector3<f64>]) -> SweepReport {
        let per_tau: Vec<TauMax> = taus
            .iter()
            .map(|tau| {
                let mut best = TauMax {
                    tau: *tau,
                    value: 0.0,
                    z: self.z_grid.first().copied().unwrap_or(0.0),
                    u: self.nodes[0],
                };
                for (k, fk) in self.f_tau(tau).iter().enumerate() {
                    for (i, f) in fk.iter().enumerate() {
                        if f.abs() > best.value {
                            best.value = f.abs();
                            best.z = self.z_grid[k];
                            best.u = self.nodes[i];
                        }
                    }
                }
                best
            })
            .collect();
        let max = per_tau
            .iter()
            .copied()
            .fold(None::<TauMax>, |acc, t| match acc {
                Some(a) if a.value >= t.value => Some(a),
                _ => Some(t),
            })
            .expect("at least one tilt direction");
        SweepReport { per_tau, max }
    }

    /// Writes `z,node,V_x,V_y,V_z,S,f_0,...` rows, one per grid point.
    pub fn write_csv<W: std::io::Write>(&self, w: W, taus: &[Vector3<f64>]) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["z", "node", "V_x", "V_y", "V_z", "S"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((0..taus.len()).map(|j| format!("f_{j}")));
        wr.write_record(&header)?;
        let fs: Vec<_> = taus.iter().map(|t| self.f_tau(t)).collect();
        for k in 0..self.z_grid.len() {
            for i in 0..self.nodes.len() {
                let v = self.v[k][i];
                let mut row = vec![
                    format!("{:.17e}", self.z_grid[k]),
                    i.to_string(),
                    format!("{:.17e}", v.x),
                    format!("{:.17e}", v.y),
                    format!("{:.17e}", v.z),
                    format!("{:.17e}", self.s[k][i]),
                ];
                row.extend(fs.iter().map(|f| format!("{:.17e}", f[k][i])));
                wr.write_record(&row)?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// `τ^⊤(u)·V + (τ·u) S` at one point.
pub fn assemble(tau: &Vector3<f64>, u: &Vector3<f64>, v: &Vector3<f64>, s: f64) -> f64 {
    let t_tan = tau - u * tau.dot(u);
    t_tan.dot(v) + tau.dot(u) * s
}

/// Closed-form `∂_ε c_ε` at grid height `k`, sampled on the nodes of
/// `grid`: `h_z W(τ^⊤) + (τ·c) c' + (τ·Γ⁻) Γ⁻_z`.
pub fn centrix_derivative(
    ts: &TransverseSupport,
    k: usize,
    tau: &Vector3<f64>,
    grid: &Grid,
) -> Vec<Vector3<f64>> {
    let jh = grid.jets(&ts.h[k]);
    let jz = grid.jets(&ts.h_z[k]);
    let axis = ts.center_z[k] * tau.dot(&ts.centers[k]);
    grid.nodes()
        .iter()
        .zip(jh.iter().zip(&jz))
        .map(|(u, (a, b))| {
            let t_tan = tangent_projector(u) * tau;
            let gamma = a.gamma(u);
            let gamma_z = b.gamma(u);
            a.weingarten(u) * t_tan * b.value + axis + gamma_z * tau.dot(&gamma)
        })
        .collect()
}

/// `q² = (Δh + d h)/h` per height and its variation in `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QSquared {
    /// Ratio at the nodes, `[height][node]`.
    pub values: Vec<Vec<f64>>,
    /// Spectral projection of the ratio at the anchor height.
    pub anchor_field: SupportField,
    pub anchor: usize,
    /// `sup_{u,k} |q²(u, z_k) - q²(u, z_anchor)|`.
    pub z_variation: f64,
}

pub fn q_squared(ts: &TransverseSupport) -> Result<QSquared> {
    let grid = Grid::get(ts.dim, ts.l);
    let mut values = Vec::with_capacity(ts.len());
    for (k, h) in ts.h.iter().enumerate() {
        let hv = grid.synthesize(h);
        if let Some(m) = hv.iter().copied().find(|v| !(*v > 0.0)) {
            return Err(Error::Domain(format!(
                "q² needs h > 0; found {m} at z = {}",
                ts.z_grid[k]
            )));
        }
        let yv = grid.synthesize(&radii_sum(h));
        values.push(yv.iter().zip(&hv).map(|(y, h)| y / h).collect::<Vec<f64>>());
    }
    let anchor = ts.anchor();
    let z_variation = values
        .iter()
        .flat_map(|vk| vk.iter().zip(&values[anchor]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    let anchor_field = grid.analyze(&values[anchor])?;
    Ok(QSquared {
        values,
        anchor_field,
        anchor,
        z_variation,
    })
}

/// Outcome of [`ellipsoid_criterion`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidTestReport {
    /// Mean of `F = Δ(h0²) + 2(d+1) h0²`; equals `2 Σ λ_i²` for ellipsoids.
    pub constant_value: f64,
    /// `sup|∇F| / sup h0²`.
    pub gradient_sup: f64,
    /// Fitted quadratic form with `h0²(x) ≈ xᵀ B x`.
    #[serde(rename = "B")]
    pub b: Matrix3<f64>,
    /// Square roots of the eigenvalues of `B`, ascending.
    pub semi_axes: Vec<f64>,
    /// Unit eigenvectors of `B` matching `semi_axes`.
    pub axes: Vec<Vector3<f64>>,
    /// `sup|h0² - xᵀBx| / sup h0²`.
    pub fit_residual: f64,
    pub accepted: bool,
}

/// Tests whether `h0` is the support function of an origin-centred
/// ellipsoid and recovers its quadratic form. Both the gradient and the fit
/// residual must be below `tol`.
pub fn ellipsoid_criterion(h0: &SupportField, tol: f64) -> Result<EllipsoidTestReport> {
    let dim = h0.dim();
    let k = dim.section_dim();
    let grid = Grid::get(dim, h0.degree_cap() + 2);
    // F and ∇F from jets of h0: Δ(h²) = 2hΔh + 2|∇h|² avoids squaring in
    // spectral space, whose high degrees would amplify roundoff in ∇F.
    let jets = grid.jets(h0);
    if let Some(j) = jets.iter().find(|j| !(j.value > 0.0)) {
        return Err(Error::Domain(format!(
            "ellipsoid criterion needs h0 > 0, found {}",
            j.value
        )));
    }
    let lap = laplace_beltrami(h0);
    let lapv = grid.synthesize(&lap);
    let glap = grid.gradients(&lap);
    let kf = k as f64;
    let h2: Vec<f64> = jets.iter().map(|j| j.value * j.value).collect();
    let sup_h2 = h2.iter().copied().fold(0.0, f64::max);
    let mut fv = Vec::with_capacity(grid.len());
    let mut gradient_sup = 0.0f64;
    for ((j, l), gl) in jets.iter().zip(&lapv).zip(&glap) {
        fv.push(2.0 * j.value * l + 2.0 * j.grad.norm_squared() + 2.0 * kf * j.value * j.value);
        let g = j.grad * (2.0 * l)
            + gl * (2.0 * j.value)
            + j.hess * j.grad * 4.0
            + j.grad * (4.0 * kf * j.value);
        gradient_sup = gradient_sup.max(g.norm());
    }
    let gradient_sup = gradient_sup / sup_h2;
    let area: f64 = grid.weights().iter().sum();
    let constant_value = grid.integrate(&fv) / area;

    let pairs: Vec<(usize, usize)> = if k == 2 {
        vec![(0, 0), (1, 1), (0, 1)]
    } else {
        vec![(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]
    };
    let monomial = |u: &Vector3<f64>, (i, j): (usize, usize)| {
        if i == j {
            u[i] * u[i]
        } else {
            2.0 * u[i] * u[j]
        }
    };
    let m = pairs.len();
    let mut gram = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for ((u, w), y) in grid.nodes().iter().zip(grid.weights()).zip(&h2) {
        let row: Vec<f64> = pairs.iter().map(|p| monomial(u, *p)).collect();
        for a in 0..m {
            rhs[a] += w * row[a] * y;
            for b in 0..m {
                gram[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    // Jacobi scaling keeps the normal equations well conditioned.
    let diag: Vec<f64> = (0..m).map(|a| gram[(a, a)].sqrt()).collect();
    for a in 0..m {
        rhs[a] /= diag[a];
        for b in 0..m {
            gram[(a, b)] /= diag[a] * diag[b];
        }
    }
    let sol = gram
        .cholesky()
        .ok_or_else(|| Error::Inconsistency("singular monomial Gram matrix".into()))?
        .solve(&rhs);
    let mut b = Matrix3::zeros();
    for (a, (i, j)) in pairs.iter().enumerate() {
        let c = sol[a] / diag[a];
        b[(*i, *j)] = c;
        b[(*j, *i)] = c;
    }
    let fit_residual = grid
        .nodes()
        .iter()
        .zip(&h2)
        .map(|(u, y)| (u.dot(&(b * u)) - y).abs())
        .fold(0.0, f64::max)
        / sup_h2;

    let block = b.view((0, 0), (k, k)).into_owned();
    let eig = SymmetricEigen::new(block);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|x, y| {
        eig.eigenvalues[*x]
            .partial_cmp(&eig.eigenvalues[*y])
            .expect("finite")
    });
    let min_eig = order.first().map(|i| eig.eigenvalues[*i]).unwrap_or(0.0);
    let max_eig = order.last().map(|i| eig.eigenvalues[*i]).unwrap_or(0.0);
    let positive = min_eig > 1e-12 * max_eig.abs();
    if !positive && fit_residual < tol {
        return Err(Error::Inconsistency(format!(
            "fitted quadratic form is indefinite (eigenvalue {min_eig}) despite residual {fit_residual}"
        )));
    }
    let semi_axes = order
        .iter()
        .map(|i| eig.eigenvalues[*i].max(0.0).sqrt())
        .collect();
    let axes = order
        .iter()
        .map(|i| {
            let mut v = Vector3::zeros();
            for r in 0..k {
                v[r] = eig.eigenvectors[(r, *i)];
            }
            v
        })
        .collect();
    Ok(EllipsoidTestReport {
        constant_value,
        gradient_sup,
        b,
        semi_axes,
        axes,
        fit_residual,
        accepted: positive && gradient_sup < tol && fit_residual < tol,
    })
}

/// Least-squares line `c(z) ≈ origin + z·direction`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedLine {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

/// Outcome of [`affine_test`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineReport {
    /// `max_k |c_{k+1} - 2c_k + c_{k-1}| / step²`.
    pub max_second_difference: f64,
    /// Height at which the maximum occurs.
    pub z_at_max: f64,
    /// `max_second_difference · Z² / D`, the quantity compared with the tolerance.
    pub relative: f64,
    pub is_affine: bool,
    pub line: FittedLine,
}

/// Linearity test of the central curve sampled on a uniform grid.
///
/// `length_scale` (`D`) and `z_scale` (`Z`) make the decision scale free.
pub fn affine_test(
    z: &[f64],
    centers: &[Vector3<f64>],
    length_scale: f64,
    z_scale: f64,
    tol: f64,
) -> Result<AffineReport> {
    if z.len() < 3 || z.len() != centers.len() {
        return Err(Error::Domain(
            "affine test needs at least 3 heights with centres".into(),
        ));
    }
    let step = z[1] - z[0];
    if z.windows(2)
        .any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * step.abs())
        || step <= 0.0
    {
        return Err(Error::Domain(
            "affine test needs a uniform increasing grid".into(),
        ));
    }
    let mut max_sd = 0.0;
    let mut z_at_max = z[1];
    for k in 1..z.len() - 1 {
        let sd = (centers[k + 1] - centers[k] * 2.0 + centers[k - 1]).norm() / (step * step);
        if sd > max_sd {
            max_sd = sd;
            z_at_max = z[k];
        }
    }
    let n = z.len() as f64;
    let zm = z.iter().sum::<f64>() / n;
    let cm = centers.iter().fold(Vector3::zeros(), |a, c| a + c) / n;
    let szz: f64 = z.iter().map(|v| (v - zm).powi(2)).sum();
    let direction = z
        .iter()
        .zip(centers)
        .fold(Vector3::zeros(), |a, (v, c)| a + (c - cm) * (v - zm))
        / szz;
    let relative = max_sd * z_scale * z_scale / length_scale;
    Ok(AffineReport {
        max_second_difference: max_sd,
        z_at_max,
        relative,
        is_affine: relative < tol,
        line: FittedLine {
            origin: cm - direction * zm,
            direction,
        },
    })
}

/// [`affine_test`] on the centres of a transverse support, with the largest
/// section size as length scale.
pub fn axis_test(ts: &TransverseSupport, tol: f64) -> Result<AffineReport> {
    let d = ts.h.iter().map(|h| h.sup_norm()).fold(0.0, f64::max);
    affine_test(&ts.z_grid, &ts.centers, d, ts.z_scale, tol)
}
