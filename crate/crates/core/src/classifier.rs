//! End-to-end decision procedure: a tube is either a cylinder over a central
//! ovaloid, a piece of a quadric, or not cop (with a witness).

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::obstruction::{
    axis_test, ellipsoid_criterion, obstruction_field, seeded_tau_sweep, tau_sweep, AffineReport,
    EllipsoidTestReport, DEFAULT_SWEEP,
};
use crate::spharm::{SphereDim, DEFAULT_L};
use crate::tube::{split_test, transverse_support, z_grid, SectionSource, DEFAULT_GRID};

/// Decision thresholds. All are relative to the natural scale of the
/// quantity they bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Centrix sup-deviation over section diameter.
    pub centrality: f64,
    /// Sup of the normalized obstruction `|f_τ|` over the sweep.
    pub pde: f64,
    /// Ellipsoid criterion gradient and quadratic-form fit residual.
    pub ellipsoid: f64,
    /// Axis second difference times `Z²/D`.
    pub axis: f64,
    /// Separation residual `sup|h - r h0| / sup|h0|`.
    pub split: f64,
    /// `max |r(z) - 1|` below which the profile counts as constant.
    pub cylinder: f64,
    /// Residual of the quadratic fit of `r²`.
    pub quadric_fit: f64,
    /// `|A|` (normalized) below which the profile is linear.
    pub linear: f64,
    /// Relative discriminant below which the profile has a double root.
    pub cone: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            centrality: 1e-6,
            pde: 1e-5,
            ellipsoid: 1e-5,
            axis: 1e-6,
            split: 1e-6,
            cylinder: 1e-6,
            quadric_fit: 1e-6,
            linear: 1e-6,
            cone: 1e-6,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("centrality", self.centrality),
            ("pde", self.pde),
            ("ellipsoid", self.ellipsoid),
            ("axis", self.axis),
            ("split", self.split),
            ("cylinder", self.cylinder),
            ("quadric_fit", self.quadric_fit),
            ("linear", self.linear),
            ("cone", self.cone),
        ];
        for (name, v) in all {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "threshold `{name}` must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Discretization and thresholds of one classification run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    #[serde(rename = "L")]
    pub l: usize,
    /// Number of heights in the transverse grid.
    pub grid: usize,
    /// Number of tilt directions in the obstruction sweep.
    pub sweep: usize,
    /// When set, the sweep directions are randomly rotated from this seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub thresholds: Thresholds,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            l: DEFAULT_L,
            grid: DEFAULT_GRID,
            sweep: DEFAULT_SWEEP,
            seed: None,
            thresholds: Thresholds::default(),
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        if self.l < 2 {
            return Err(Error::Config(format!(
                "L must be at least 2, got {}",
                self.l
            )));
        }
        if self.grid < 5 {
            return Err(Error::Config(format!(
                "grid must have at least 5 heights, got {}",
                self.grid
            )));
        }
        if self.sweep == 0 {
            return Err(Error::Config("sweep must be positive".into()));
        }
        self.thresholds.validate()
    }

    /// Tilt directions of the obstruction sweep.
    pub fn tau_sweep(&self, dim: SphereDim) -> Vec<Vector3<f64>> {
        match self.seed {
            None => tau_sweep(dim, self.sweep),
            Some(seed) => seeded_tau_sweep(dim, self.sweep, seed),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadricFamily {
    Ellipsoid,
    TubeHyperboloid,
    ConvexHyperboloid,
    Cone,
    Paraboloid,
}

impl QuadricFamily {
    pub fn name(self) -> &'static str {
        match self {
            QuadricFamily::Ellipsoid => "ellipsoid",
            QuadricFamily::TubeHyperboloid => "tube_hyperboloid",
            QuadricFamily::ConvexHyperboloid => "convex_hyperboloid",
            QuadricFamily::Cone => "cone",
            QuadricFamily::Paraboloid => "paraboloid",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Verdict {
    CylinderOverCentralOvaloid,
    Quadric { family: QuadricFamily },
    NotCop,
}

/// Evidence that a tube is not cop. Every variant carries a value that
/// exceeds its threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Witness {
    /// A horizontal section is not centrally symmetric.
    NonCentralSection { z: f64, deviation: f64 },
    /// The symmetry obstruction is nonzero at `(τ, z, u)`.
    Obstruction {
        tau: Vector3<f64>,
        z: f64,
        u: Vector3<f64>,
        value: f64,
    },
    /// The curve of section centres is not affine.
    AxisNotAffine { z: f64, second_difference: f64 },
    /// The sections do not separate as `r(z) h0`.
    NotSplit { residual: f64 },
    /// The section shape is not an ellipsoid although `r` varies.
    NotEllipsoidal {
        gradient_sup: f64,
        fit_residual: f64,
    },
    /// `r²` is not a quadratic polynomial in `z`.
    NotQuadric { residual: f64 },
}

/// Relative centrix deviation of the horizontal sections.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentralityStats {
    pub max_relative: f64,
    pub z_at_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstructionSummary {
    pub v_sup: f64,
    pub s_sup: f64,
    pub v_l2: f64,
    pub s_l2: f64,
    pub sweep_max: f64,
    pub sweep_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub residual: f64,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
}

/// Quadratic fit `r² ≈ A t² + B t + C` in the normalized height
/// `t = (z - z_mid)/Z`, with `r` normalized at the anchor height.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub residual: f64,
    /// `(B² - 4AC)/(B² + 4|AC|)`.
    pub relative_discriminant: f64,
    pub min_r2: f64,
    /// Distance of the deciding quantity from its nearest class boundary,
    /// in units of its threshold.
    pub confidence_margin: f64,
}

/// Spectral tail above which sections are likely under-resolved at the
/// chosen degree cap, so that verdicts near thresholds may be artefacts.
pub const SPECTRAL_TAIL_WARNING: f64 = 1e-10;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    /// Largest [`SupportField::spectral_tail`] over the centred sections.
    ///
    /// [`SupportField::spectral_tail`]: crate::spharm::SupportField::spectral_tail
    pub spectral_tail: Option<f64>,
    pub centrality: Option<CentralityStats>,
    pub obstruction: Option<ObstructionSummary>,
    pub axis: Option<AffineReport>,
    pub split: Option<SplitSummary>,
    pub ellipsoid: Option<EllipsoidTestReport>,
    pub profile: Option<ProfileFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    /// Ambient dimension `n`.
    pub n: usize,
    pub verdict: Verdict,
    pub certificates: Certificates,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    /// How section centres were chosen.
    pub center_method: String,
    pub config: Config,
}

impl Classification {
    pub fn is_cop(&self) -> bool {
        self.verdict != Verdict::NotCop
    }

    /// Process exit code: 0 for a cop verdict, 2 for not cop.
    /// Whether the sections carry enough high-degree content that the degree
    /// cap should be raised before trusting the verdict.
    pub fn under_resolved(&self) -> bool {
        self.certificates
            .spectral_tail
            .is_some_and(|t| t > SPECTRAL_TAIL_WARNING)
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_cop() {
            0
        } else {
            2
        }
    }
}

/// What the `r²` profile says about the tube.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileClass {
    /// Constant profile; decided by the split ratio instead.
    Cylinder,
    Quadric(QuadricFamily),
}

/// Least-squares fit of `r²` on normalized heights `t`.
pub fn fit_profile(t: &[f64], r2: &[f64]) -> Result<ProfileFit> {
    if t.len() < 3 || t.len() != r2.len() {
        return Err(Error::Domain("profile fit needs at least 3 samples".into()));
    }
    let mut m = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (t, y) in t.iter().zip(r2) {
        let row = Vector3::new(t * t, *t, 1.0);
        m += row * row.transpose();
        rhs += row * *y;
    }
    let sol = m
        .cholesky()
        .ok_or_else(|| Error::Inconsistency("degenerate height grid".into()))?
        .solve(&rhs);
    let (a, b, c) = (sol[0], sol[1], sol[2]);
    let sup = r2.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let residual = t
        .iter()
        .zip(r2)
        .map(|(t, y)| (a * t * t + b * t + c - y).abs())
        .fold(0.0, f64::max)
        / sup;
    let denom = b * b + 4.0 * (a * c).abs();
    let relative_discriminant = if denom > 0.0 {
        (b * b - 4.0 * a * c) / denom
    } else {
        0.0
    };
    Ok(ProfileFit {
        a,
        b,
        c,
        residual,
        relative_discriminant,
        min_r2: r2.iter().copied().fold(f64::INFINITY, f64::min),
        confidence_margin: 0.0,
    })
}

/// Names the quadric family of a fitted `r²` profile. The fit record gains
/// its confidence margin.
pub fn quadric_family(fit: &mut ProfileFit, th: &Thresholds) -> Result<ProfileClass> {
    if fit.residual > th.quadric_fit {
        return Err(Error::NotQuadric {
            residual: fit.residual,
            tolerance: th.quadric_fit,
        });
    }
    let scale = fit.a.abs() + fit.b.abs() + fit.c.abs();
    let (a, b) = (fit.a / scale, fit.b / scale);
    if a.abs() < th.linear {
        if b.abs() < th.linear {
            fit.confidence_margin = b.abs().max(a.abs()) / th.linear;
            return Ok(ProfileClass::Cylinder);
        }
        fit.confidence_margin = b.abs() / th.linear;
        return Ok(ProfileClass::Quadric(QuadricFamily::Paraboloid));
    }
    if a < 0.0 {
        fit.confidence_margin = a.abs() / th.linear;
        return Ok(ProfileClass::Quadric(QuadricFamily::Ellipsoid));
    }
    let rel = fit.relative_discriminant;
    fit.confidence_margin = (rel.abs() / th.cone).min(a.abs() / th.linear);
    Ok(ProfileClass::Quadric(if rel.abs() < th.cone {
        QuadricFamily::Cone
    } else if rel < 0.0 {
        QuadricFamily::TubeHyperboloid
    } else {
        QuadricFamily::ConvexHyperboloid
    }))
}

fn not_cop(
    n: usize,
    certificates: Certificates,
    witness: Witness,
    config: &Config,
) -> Classification {
    Classification {
        n,
        verdict: Verdict::NotCop,
        certificates,
        witness: Some(witness),
        center_method: CENTER_METHOD.into(),
        config: config.clone(),
    }
}

const CENTER_METHOD: &str = "centrix_mean";

/// Runs the full pipeline on a tube.
pub fn classify<S: SectionSource + ?Sized>(src: &S, config: &Config) -> Result<Classification> {
    config.validate()?;
    let th = &config.thresholds;
    let n = src.dim().n();
    let window = src.window();
    let ts = transverse_support(src, &z_grid(window, config.grid), config.l)?;
    let mut cert = Certificates {
        spectral_tail: Some(ts.h.iter().map(|h| h.spectral_tail()).fold(0.0, f64::max)),
        ..Certificates::default()
    };

    let (k_max, dev) = ts
        .centrality
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
    cert.centrality = Some(CentralityStats {
        max_relative: dev,
        z_at_max: ts.z_grid[k_max],
    });
    if dev > th.centrality {
        let z = ts.z_grid[k_max];
        return Ok(not_cop(
            n,
            cert,
            Witness::NonCentralSection { z, deviation: dev },
            config,
        ));
    }

    let field = obstruction_field(&ts);
    let sweep = field.sweep(&config.tau_sweep(ts.dim));
    cert.obstruction = Some(ObstructionSummary {
        v_sup: field.norms.v_sup,
        s_sup: field.norms.s_sup,
        v_l2: field.norms.v_l2,
        s_l2: field.norms.s_l2,
        sweep_max: sweep.max.value,
        sweep_count: config.sweep,
    });
    if sweep.max.value > th.pde {
        let m = sweep.max;
        let w = Witness::Obstruction {
            tau: m.tau,
            z: m.z,
            u: m.u,
            value: m.value,
        };
        return Ok(not_cop(n, cert, w, config));
    }

    let axis = axis_test(&ts, th.axis)?;
    cert.axis = Some(axis.clone());
    if !axis.is_affine {
        let w = Witness::AxisNotAffine {
            z: axis.z_at_max,
            second_difference: axis.max_second_difference,
        };
        return Ok(not_cop(n, cert, w, config));
    }

    let split = split_test(&ts)?;
    cert.split = Some(SplitSummary {
        residual: split.residual,
        z: ts.z_grid.clone(),
        r: split.r.clone(),
    });
    if split.residual > th.split {
        return Ok(not_cop(
            n,
            cert,
            Witness::NotSplit {
                residual: split.residual,
            },
            config,
        ));
    }
    let cop = |verdict, cert| Classification {
        n,
        verdict,
        certificates: cert,
        witness: None,
        center_method: CENTER_METHOD.into(),
        config: config.clone(),
    };
    let r_dev = split.r.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    if r_dev < th.cylinder {
        return Ok(cop(Verdict::CylinderOverCentralOvaloid, cert));
    }

    let ell = ellipsoid_criterion(&split.h0, th.ellipsoid)?;
    cert.ellipsoid = Some(ell.clone());
    if !ell.accepted {
        let w = Witness::NotEllipsoidal {
            gradient_sup: ell.gradient_sup,
            fit_residual: ell.fit_residual,
        };
        return Ok(not_cop(n, cert, w, config));
    }

    let mid = 0.5 * (window.0 + window.1);
    let t: Vec<f64> = ts.z_grid.iter().map(|z| (z - mid) / ts.z_scale).collect();
    let r2: Vec<f64> = split.r.iter().map(|r| r * r).collect();
    let mut fit = fit_profile(&t, &r2)?;
    let class = quadric_family(&mut fit, th);
    cert.profile = Some(fit);
    match class {
        Ok(ProfileClass::Cylinder) => Ok(cop(Verdict::CylinderOverCentralOvaloid, cert)),
        Ok(ProfileClass::Quadric(family)) => Ok(cop(Verdict::Quadric { family }, cert)),
        Err(Error::NotQuadric { residual, .. }) => {
            Ok(not_cop(n, cert, Witness::NotQuadric { residual }, config))
        }
        Err(e) => Err(e),
    }
}
