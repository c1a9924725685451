//! Command implementations. Each returns the process exit code.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use copscan_core::convex::centrix_of;
use copscan_core::io::{load_json, load_spec, to_json_string};
use copscan_core::obstruction::{
    ellipsoid_criterion, obstruction_field, EllipsoidTestReport, Norms, SweepReport,
};
use copscan_core::slicing::{cross_section, SectionReport, SliceOptions, TiltedPlane};
use copscan_core::tube::{transverse_support, AffineMap};
use copscan_core::{
    classify, Config, Error, Family, QuadricFamily, Result, SphereDim, Thresholds, TubeSpec,
    Verdict,
};
use nalgebra::Vector3;
use serde::Serialize;

use crate::args::{
    ClassifyArgs, Command, EllipsoidArgs, GenerateArgs, ObstructionArgs, RunArgs, SliceArgs,
};

pub fn run(command: Command) -> Result<u8> {
    match command {
        Command::Generate(a) => generate(&a),
        Command::Classify(a) => run_classify(&a),
        Command::Obstruction(a) => obstruction(&a),
        Command::Slice(a) => slice(&a),
        Command::Ellipsoid(a) => ellipsoid(&a),
    }
}

fn config(run: &RunArgs) -> Result<Config> {
    let mut c = Config::default();
    if let Some(path) = &run.thresholds {
        c.thresholds = load_json::<Thresholds>(path)?;
    }
    if let Some(l) = run.l {
        c.l = l;
    }
    if let Some(grid) = run.grid {
        c.grid = grid;
    }
    if let Some(sweep) = run.sweep {
        c.sweep = sweep;
    }
    c.seed = run.seed;
    c.validate()?;
    Ok(c)
}

/// Writes `text` to `path`, or to stdout when no path is given.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn usage(family: &str, reason: impl Into<String>) -> Error {
    Error::Params {
        family: family.into(),
        reason: reason.into(),
    }
}

fn infer_dim(a: &GenerateArgs) -> Result<SphereDim> {
    if let Some(d) = a.dim {
        return SphereDim::new(d);
    }
    let from_len = |len: usize, offset: usize| -> Result<SphereDim> {
        let d = len
            .checked_sub(offset)
            .filter(|d| (1..=2).contains(d))
            .ok_or_else(|| {
                usage(
                    &a.family,
                    format!("cannot infer the dimension from {len} entries"),
                )
            })?;
        SphereDim::new(d as u8)
    };
    if let Some(l) = &a.lambda {
        return from_len(l.len(), 2);
    }
    if let Some(s) = a.semi_axes.as_ref().or(a.axis_tilt.as_ref()) {
        return from_len(s.len(), 1);
    }
    Ok(SphereDim::SPHERE)
}

/// Default family parameters overridden by the flags that were given.
fn build_family(a: &GenerateArgs, dim: SphereDim) -> Result<Family> {
    let mut fam = Family::default_for(&a.family, dim)?;
    let mut used: Vec<&str> = Vec::new();
    fn set<T: Clone>(slot: &mut T, value: &Option<T>, name: &'static str, used: &mut Vec<&str>) {
        if let Some(v) = value {
            *slot = v.clone();
            used.push(name);
        }
    }
    let u = &mut used;
    match &mut fam {
        Family::Cylinder {
            semi_axes,
            axis_tilt,
            even_bump,
        } => {
            set(semi_axes, &a.semi_axes, "semi-axes", u);
            set(axis_tilt, &a.axis_tilt, "axis-tilt", u);
            set(even_bump, &a.even_bump, "even-bump", u);
        }
        Family::Ellipsoid { lambda } => set(lambda, &a.lambda, "lambda", u),
        Family::TubeHyperboloid { semi_axes, b } => {
            set(semi_axes, &a.semi_axes, "semi-axes", u);
            set(b, &a.b, "b", u);
        }
        Family::ConvexHyperboloid {
            semi_axes,
            b,
            center_offset,
        } => {
            set(semi_axes, &a.semi_axes, "semi-axes", u);
            set(b, &a.b, "b", u);
            set(center_offset, &a.center_offset, "center-offset", u);
        }
        Family::Paraboloid {
            semi_axes,
            vertex,
            p,
        } => {
            set(semi_axes, &a.semi_axes, "semi-axes", u);
            set(vertex, &a.vertex, "vertex", u);
            set(p, &a.p, "p", u);
        }
        Family::Cone {
            semi_axes,
            slope,
            apex,
        } => {
            set(semi_axes, &a.semi_axes, "semi-axes", u);
            set(slope, &a.slope, "slope", u);
            set(apex, &a.apex, "apex", u);
        }
        Family::Twisted { semi_axes, omega } => {
            set(semi_axes, &a.semi_axes, "semi-axes", u);
            set(omega, &a.omega, "omega", u);
        }
        Family::Bent {
            semi_axes,
            curvature,
        } => {
            set(semi_axes, &a.semi_axes, "semi-axes", u);
            set(curvature, &a.curvature, "curvature", u);
        }
        Family::OddPerturbed {
            semi_axes,
            amplitude,
        } => {
            set(semi_axes, &a.semi_axes, "semi-axes", u);
            set(amplitude, &a.amplitude, "amplitude", u);
        }
        Family::Sampled { .. } => unreachable!("sampled tubes have no defaults"),
    }
    let given = [
        ("lambda", a.lambda.is_some()),
        ("semi-axes", a.semi_axes.is_some()),
        ("omega", a.omega.is_some()),
        ("b", a.b.is_some()),
        ("center-offset", a.center_offset.is_some()),
        ("vertex", a.vertex.is_some()),
        ("p", a.p.is_some()),
        ("slope", a.slope.is_some()),
        ("apex", a.apex.is_some()),
        ("curvature", a.curvature.is_some()),
        ("amplitude", a.amplitude.is_some()),
        ("axis-tilt", a.axis_tilt.is_some()),
        ("even-bump", a.even_bump.is_some()),
    ];
    if let Some((name, _)) = given.iter().find(|(n, g)| *g && !used.contains(n)) {
        return Err(usage(
            &a.family,
            format!("--{name} does not apply to this family"),
        ));
    }
    Ok(fam)
}

fn generate(a: &GenerateArgs) -> Result<u8> {
    let dim = infer_dim(a)?;
    let family = build_family(a, dim)?;
    let window = match a.window.as_deref() {
        None => None,
        Some([lo, hi]) => Some((*lo, *hi)),
        Some(_) => return Err(usage(&a.family, "--window takes two values lo,hi")),
    };
    let mut spec = TubeSpec::generate(dim, family, window)?;
    if let Some(path) = &a.transform {
        spec = spec.transformed(&load_json::<AffineMap>(path)?)?;
    }
    let c = Config::default();
    let ts = transverse_support(&spec, &spec.z_grid(c.grid), c.l)?;
    let margin = ts.margins.iter().copied().fold(f64::INFINITY, f64::min);
    let centrality = ts.centrality.iter().copied().fold(0.0, f64::max);
    let (lo, hi) = spec.window();
    eprintln!(
        "{} (n = {}) on z in [{lo}, {hi}]: {} sections are ovaloids, min principal radius {margin:.3e}, max centrality deviation {centrality:.3e}",
        spec.family.name(),
        dim.n(),
        ts.len(),
    );
    emit(a.out.as_deref(), &to_json_string(&spec)?)?;
    Ok(0)
}

fn describe(v: &Verdict) -> String {
    match v {
        Verdict::CylinderOverCentralOvaloid => "cylinder over a central ovaloid".into(),
        Verdict::Quadric { family } => format!("quadric ({})", QuadricFamily::name(*family)),
        Verdict::NotCop => "not cop".into(),
    }
}

fn run_classify(a: &ClassifyArgs) -> Result<u8> {
    let spec = load_spec(&a.spec)?;
    let config = config(&a.run)?;
    let c = classify(&spec, &config)?;
    if c.under_resolved() {
        eprintln!(
            "warning: spectral tail {:.1e} at L = {}; sections may be under-resolved, consider a larger --L",
            c.certificates.spectral_tail.unwrap_or(0.0),
            config.l
        );
    }
    match &c.witness {
        Some(w) => eprintln!(
            "verdict: {}; witness {}",
            describe(&c.verdict),
            serde_json::to_string(w)?
        ),
        None => eprintln!("verdict: {}", describe(&c.verdict)),
    }
    emit(a.out.as_deref(), &to_json_string(&c)?)?;
    Ok(c.exit_code() as u8)
}

#[derive(Serialize)]
struct ObstructionReport<'a> {
    n: usize,
    #[serde(rename = "L")]
    l: usize,
    z_grid: &'a [f64],
    scale: f64,
    norms: Norms,
    taus: &'a [Vector3<f64>],
    max_abs_f: f64,
    sweep: &'a SweepReport,
}

fn obstruction(a: &ObstructionArgs) -> Result<u8> {
    let spec = load_spec(&a.spec)?;
    let config = config(&a.run)?;
    let ts = transverse_support(&spec, &spec.z_grid(config.grid), config.l)?;
    let field = obstruction_field(&ts);
    let taus = config.tau_sweep(spec.dim);
    let sweep = field.sweep(&taus);
    let report = ObstructionReport {
        n: spec.dim.n(),
        l: field.l,
        z_grid: &field.z_grid,
        scale: field.scale,
        norms: field.norms,
        taus: &taus,
        max_abs_f: sweep.max.value,
        sweep: &sweep,
    };
    let json = to_json_string(&report)?;
    eprintln!(
        "max |f_tau| = {:.3e} at z = {}, tau = {:?}",
        sweep.max.value,
        sweep.max.z,
        sweep.max.tau.as_slice()
    );
    match &a.out {
        Some(dir) => {
            create_dir(dir)?;
            let csv = BufWriter::new(File::create(dir.join("obstruction.csv"))?);
            field.write_csv(csv, &taus)?;
            std::fs::write(dir.join("obstruction.json"), json)?;
        }
        None => emit(None, &json)?,
    }
    Ok(0)
}

#[derive(Serialize)]
struct SliceEntry<'a> {
    central: bool,
    #[serde(flatten)]
    report: &'a SectionReport,
}

#[derive(Serialize)]
struct SliceOutput<'a> {
    n: usize,
    #[serde(rename = "L")]
    l: usize,
    centrality_tolerance: f64,
    sections: Vec<SliceEntry<'a>>,
}

fn tilt_direction(dim: SphereDim, tau: &[f64]) -> Result<Vector3<f64>> {
    let k = dim.section_dim();
    if tau.len() != k {
        return Err(Error::Domain(format!(
            "--tau needs {k} components for d = {}, got {}",
            dim.d(),
            tau.len()
        )));
    }
    let mut v = Vector3::zeros();
    v.as_mut_slice()[..k].copy_from_slice(tau);
    let norm = v.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Domain(
            "--tau must be a nonzero finite vector".into(),
        ));
    }
    Ok(v / norm)
}

fn slice(a: &SliceArgs) -> Result<u8> {
    let spec = load_spec(&a.spec)?;
    let config = config(&a.run)?;
    let tau = tilt_direction(spec.dim, &a.tau)?;
    let opts = SliceOptions::new(config.l);
    let reports = a
        .eps
        .iter()
        .map(|eps| cross_section(&spec, &TiltedPlane::new(spec.dim, tau, a.z0, *eps)?, &opts))
        .collect::<Result<Vec<_>>>()?;
    let tol = config.thresholds.centrality;
    for r in &reports {
        eprintln!(
            "eps = {}: {} (relative deviation {:.3e}, contraction {:.3e})",
            r.plane.eps,
            if r.is_central(tol) {
                "central"
            } else {
                "not central"
            },
            r.relative_deviation,
            r.contraction_guard
        );
    }
    let out = SliceOutput {
        n: spec.dim.n(),
        l: config.l,
        centrality_tolerance: tol,
        sections: reports
            .iter()
            .map(|report| SliceEntry {
                central: report.is_central(tol),
                report,
            })
            .collect(),
    };
    let json = to_json_string(&out)?;
    match &a.out {
        Some(dir) => {
            create_dir(dir)?;
            for (k, r) in reports.iter().enumerate() {
                r.write_csv(BufWriter::new(File::create(
                    dir.join(format!("slice_{k}.csv")),
                )?))?;
            }
            std::fs::write(dir.join("slice.json"), json)?;
        }
        None => emit(None, &json)?,
    }
    Ok(0)
}

#[derive(Serialize)]
struct EllipsoidOutput<'a> {
    z: f64,
    center: Vector3<f64>,
    #[serde(flatten)]
    report: &'a EllipsoidTestReport,
}

fn ellipsoid(a: &EllipsoidArgs) -> Result<u8> {
    let spec = load_spec(&a.spec)?;
    let config = config(&a.run)?;
    let z = match a.z {
        Some(z) => z,
        None => {
            let grid = spec.z_grid(config.grid);
            grid.iter()
                .copied()
                .fold(grid[0], |b, z| if z.abs() < b.abs() { z } else { b })
        }
    };
    let raw = spec.section_field(z, config.l)?;
    let center = centrix_of(&raw).mean_center;
    let report = ellipsoid_criterion(&raw.translate(&(-center)), config.thresholds.ellipsoid)?;
    eprintln!(
        "section at z = {z}: {} (gradient {:.3e}, fit residual {:.3e})",
        if report.accepted {
            "ellipsoid"
        } else {
            "not an ellipsoid"
        },
        report.gradient_sup,
        report.fit_residual
    );
    let out = EllipsoidOutput {
        z,
        center,
        report: &report,
    };
    emit(a.out.as_deref(), &to_json_string(&out)?)?;
    Ok(if report.accepted { 0 } else { 2 })
}
