//! Seeded ground-truth point clouds: planes, graphs, complex curves,
//! calibrated coordinate planes, Koch curves and noisy versions of these.
use crate::error::{Error, Result};
use crate::forms::{MultiIndex, StandardForm};
use crate::geometry::{lattice_offsets, PointCloud};
use crate::linalg::{self, gram_schmidt, normal_complement, spectral_norm_columns};
use crate::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Height function of a graph over the first `k` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphFunction {
    Zero,
    /// `f(u) = A u` with `A` given row-major, `(n - k) x k`.
    Linear { matrix: Vec<f64> },
    /// `f(u) = c |u|²` in the first normal coordinate.
    Quadratic { c: f64 },
    /// Lower cap of the sphere of the given radius, `R − sqrt(R² − |u|²)`.
    SphereCap { radius: f64 },
}

/// Replacement heights of a Koch construction, one per generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EtaSchedule {
    Constant { eta: f64 },
    /// `η_j = scale · ratio^j` for generations `j = 1, 2, …`.
    Geometric { scale: f64, ratio: f64 },
    List { etas: Vec<f64> },
}

impl EtaSchedule {
    pub fn eta(&self, generation: usize) -> f64 {
        match self {
            EtaSchedule::Constant { eta } => *eta,
            EtaSchedule::Geometric { scale, ratio } => scale * ratio.powi(generation as i32),
            EtaSchedule::List { etas } => etas.get(generation - 1).copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorKind {
    /// The coordinate plane `span(e_1, …, e_k)` in R^n.
    Plane { n: usize, k: usize },
    Graph { n: usize, k: usize, function: GraphFunction },
    /// `{(z, c z²)}` in C² with interleaved coordinates.
    ComplexCurve { c: f64 },
    /// The coordinate plane of one monomial (1-based indices, in the given
    /// order) in the ambient space of a standard form.
    CalibratedPlane { form: StandardForm, monomial: Vec<usize> },
    /// Koch curve in R² on the segment from `(-radius, 0)` to `(radius, 0)`.
    Koch { eta: EtaSchedule, depth: usize },
    /// Uniform noise in the normal ball of radius `noise` around every point.
    Perturbed { base: Box<GeneratorSpec>, noise: f64, seed: u64 },
}

/// A generator request: what to sample, how finely, and over which radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    /// Target resolution; the emitted cloud's resolution does not exceed it.
    pub h: f64,
    /// Parameter-domain radius (disk radius for planes and graphs, half the
    /// base length for Koch curves).
    pub radius: f64,
}

/// Koch-specific ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KochMetadata {
    pub etas: Vec<f64>,
    /// Per-generation length factors from one replacement on a unit segment.
    pub factors: Vec<f64>,
    pub base_length: f64,
    /// Summed length of the generated polyline.
    pub length: f64,
    pub length_factor: f64,
    pub segments: usize,
    /// Largest angle between a segment and the base direction.
    pub max_angle: f64,
    /// Polyline vertices, flat `(x, y)` pairs.
    #[serde(skip)]
    pub vertices: Vec<f64>,
}

/// Ground truth attached to a generated cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorMetadata {
    pub spec: GeneratorSpec,
    pub n: usize,
    pub k: usize,
    pub points: usize,
    pub resolution: f64,
    /// Closed-form k-measure of the whole generated set, where known.
    pub true_measure: Option<f64>,
    pub gradient_bound: Option<f64>,
    /// Smallest value of the coordinate volume form (or of the named form
    /// for calibrated planes) on the true tangent planes.
    pub predicted_min_calibration: Option<f64>,
    pub koch: Option<KochMetadata>,
}

/// A generated cloud with per-point true tangent frames (vector-major,
/// `k * n` entries per point).
#[derive(Debug, Clone)]
pub struct Generated {
    pub cloud: PointCloud,
    pub tangents: Vec<f64>,
    pub metadata: GeneratorMetadata,
}

impl Generated {
    pub fn tangent(&self, i: usize) -> &[f64] {
        let w = self.cloud.n() * self.cloud.k();
        &self.tangents[i * w..(i + 1) * w]
    }
}

/// Sup of `‖Df‖` over the sampled domain and the matching worst value
/// `1 / sqrt(det(I + DfᵀDf))` of the coordinate volume form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientBound {
    pub bound: f64,
    pub predicted_min_calibration: f64,
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}

impl GraphFunction {
    fn validate(&self, n: usize, k: usize, radius: f64) -> Result<()> {
        match self {
            GraphFunction::Linear { matrix } if matrix.len() != (n - k) * k => invalid(format!(
                "linear graph matrix has {} entries, expected {}",
                matrix.len(),
                (n - k) * k
            )),
            GraphFunction::SphereCap { radius: big } if !(*big > radius) => {
                invalid("sphere cap radius must exceed the domain radius")
            }
            _ => Ok(()),
        }
    }

    fn value(&self, u: &[f64], c: usize) -> Vec<f64> {
        let mut out = vec![0.0; c];
        match self {
            GraphFunction::Zero => {}
            GraphFunction::Linear { matrix } => {
                let k = u.len();
                for (a, o) in out.iter_mut().enumerate() {
                    *o = linalg::dot(&matrix[a * k..(a + 1) * k], u);
                }
            }
            GraphFunction::Quadratic { c: coef } => {
                if c > 0 {
                    out[0] = coef * linalg::dot(u, u);
                }
            }
            GraphFunction::SphereCap { radius } => {
                if c > 0 {
                    out[0] = radius - (radius * radius - linalg::dot(u, u)).sqrt();
                }
            }
        }
        out
    }

    /// `Df(u)` row-major, `c x k`.
    fn differential(&self, u: &[f64], c: usize) -> Vec<f64> {
        let k = u.len();
        let mut d = vec![0.0; c * k];
        match self {
            GraphFunction::Zero => {}
            GraphFunction::Linear { matrix } => d.copy_from_slice(matrix),
            GraphFunction::Quadratic { c: coef } => {
                if c > 0 {
                    for i in 0..k {
                        d[i] = 2.0 * coef * u[i];
                    }
                }
            }
            GraphFunction::SphereCap { radius } => {
                if c > 0 {
                    let s = (radius * radius - linalg::dot(u, u)).sqrt();
                    for i in 0..k {
                        d[i] = u[i] / s;
                    }
                }
            }
        }
        d
    }
}

/// Orthonormal frame of the graph tangent `span(e_i + Σ_a Df[a][i] e_{k+a})`.
fn graph_frame(df: &[f64], n: usize, k: usize) -> Vec<f64> {
    let c = n - k;
    let mut frame = vec![0.0; k * n];
    for i in 0..k {
        frame[i * n + i] = 1.0;
        for a in 0..c {
            frame[i * n + k + a] = df[a * k + i];
        }
    }
    gram_schmidt(&mut frame, n);
    frame
}

/// `(‖Df‖_op, 1/sqrt(det(I + DfᵀDf)))`.
fn graph_slope(df: &[f64], c: usize, k: usize) -> (f64, f64) {
    // columns of Df
    let mut cols = vec![0.0; k * c];
    for a in 0..c {
        for i in 0..k {
            cols[i * c + a] = df[a * k + i];
        }
    }
    let op = if c == 0 { 0.0 } else { spectral_norm_columns(&cols, c) };
    let mut g = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let mut v = if i == j { 1.0 } else { 0.0 };
            for a in 0..c {
                v += df[a * k + i] * df[a * k + j];
            }
            g[i * k + j] = v;
        }
    }
    (op, 1.0 / linalg::det(&g, k).sqrt())
}

type Differential = Box<dyn Fn(&[f64]) -> Vec<f64>>;

/// Samples `‖Df‖` on the parameter grid of the spec (which must be a graph,
/// plane or complex curve).
pub fn graph_gradient_bound(spec: &GeneratorSpec) -> Result<GradientBound> {
    let (k, c, df): (usize, usize, Differential) = match &spec.kind {
        GeneratorKind::Plane { n, k } => {
            let (n, k) = (*n, *k);
            (k, n - k, Box::new(move |_u: &[f64]| vec![0.0; (n - k) * k]))
        }
        GeneratorKind::Graph { n, k, function } => {
            let (n, k) = (*n, *k);
            function.validate(n, k, spec.radius)?;
            let f = function.clone();
            (k, n - k, Box::new(move |u: &[f64]| f.differential(u, n - k)))
        }
        GeneratorKind::ComplexCurve { c } => {
            let c = *c;
            (2, 2, Box::new(move |u: &[f64]| complex_curve_df(c, u)))
        }
        GeneratorKind::Perturbed { base, .. } => return graph_gradient_bound(base),
        _ => return invalid("gradient bound needs a graph-type generator"),
    };
    let spacing = grid_spacing(spec.radius, k);
    let mut worst = GradientBound {
        bound: 0.0,
        predicted_min_calibration: 1.0,
    };
    for u in lattice_offsets(k, spacing, spec.radius) {
        let (op, cal) = graph_slope(&df(&u), c, k);
        worst.bound = worst.bound.max(op);
        worst.predicted_min_calibration = worst.predicted_min_calibration.min(cal);
    }
    Ok(worst)
}

/// Grid used to sample gradients: at least 64 steps per radius.
/// Sampling steps are shrunk by this factor so rounding never pushes the
/// measured resolution above the requested `h`.
const SPACING_SAFETY: f64 = 1.0 - 1e-9;

fn grid_spacing(radius: f64, k: usize) -> f64 {
    radius / if k <= 2 { 64.0 } else { 16.0 }
}

/// `Df` of `z ↦ c z²` as a real 2x2 matrix in `(x, y)` coordinates.
fn complex_curve_df(c: f64, u: &[f64]) -> Vec<f64> {
    // derivative 2cz acts as multiplication by a + ib
    let (a, b) = (2.0 * c * u[0], 2.0 * c * u[1]);
    vec![a, -b, b, a]
}

/// Generates the cloud described by `spec`.
pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    if !(spec.h > 0.0) || !spec.h.is_finite() {
        return invalid("h must be positive");
    }
    if !(spec.radius > 0.0) || !spec.radius.is_finite() {
        return invalid("radius must be positive");
    }
    match &spec.kind {
        GeneratorKind::Plane { n, k } => {
            check_nk(*n, *k)?;
            graph_cloud(spec, *n, *k, &GraphFunction::Zero)
        }
        GeneratorKind::Graph { n, k, function } => {
            check_nk(*n, *k)?;
            function.validate(*n, *k, spec.radius)?;
            graph_cloud(spec, *n, *k, function)
        }
        GeneratorKind::ComplexCurve { c } => complex_curve(spec, *c),
        GeneratorKind::CalibratedPlane { form, monomial } => calibrated_plane(spec, form, monomial),
        GeneratorKind::Koch { eta, depth } => koch(spec, eta, *depth),
        GeneratorKind::Perturbed { base, noise, seed } => perturbed(spec, base, *noise, *seed),
    }
}

fn check_nk(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return invalid(format!("dimension k = {k} invalid for n = {n}"));
    }
    Ok(())
}

fn finish(
    spec: &GeneratorSpec,
    points: Vec<f64>,
    tangents: Vec<f64>,
    n: usize,
    k: usize,
    extra: impl FnOnce(&mut GeneratorMetadata),
) -> Result<Generated> {
    let cloud = PointCloud::new(points, n, k)?;
    let mut metadata = GeneratorMetadata {
        spec: spec.clone(),
        n,
        k,
        points: cloud.len(),
        resolution: cloud.resolution(),
        true_measure: None,
        gradient_bound: None,
        predicted_min_calibration: None,
        koch: None,
    };
    extra(&mut metadata);
    Ok(Generated {
        cloud,
        tangents,
        metadata,
    })
}

/// k-volume of the unit k-ball.
pub fn unit_ball_volume(k: usize) -> f64 {
    // ω_k = π^{k/2} / Γ(k/2 + 1) by the two-step recursion
    let pi = core::f64::consts::PI;
    match k {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(k - 2) * 2.0 * pi / k as f64,
    }
}

fn graph_cloud(spec: &GeneratorSpec, n: usize, k: usize, f: &GraphFunction) -> Result<Generated> {
    let c = n - k;
    let slope = graph_gradient_bound(&GeneratorSpec {
        kind: GeneratorKind::Graph {
            n,
            k,
            function: f.clone(),
        },
        h: spec.h,
        radius: spec.radius,
    })?;
    // neighbours at parameter distance g sit within g·sqrt(1 + L²) of each other
    let g = spec.h * SPACING_SAFETY / (1.0 + slope.bound * slope.bound).sqrt();
    let mut pts = Vec::new();
    let mut tangents = Vec::new();
    for u in lattice_offsets(k, g, spec.radius) {
        pts.extend_from_slice(&u);
        pts.extend(f.value(&u, c));
        tangents.extend(graph_frame(&f.differential(&u, c), n, k));
    }
    let measure = match f {
        GraphFunction::Zero => Some(unit_ball_volume(k) * spec.radius.powi(k as i32)),
        GraphFunction::Linear { matrix } => {
            let (_, cal) = graph_slope(matrix, c, k);
            Some(unit_ball_volume(k) * spec.radius.powi(k as i32) / cal)
        }
        GraphFunction::Quadratic { c: coef } if k == 1 => {
            // arc length of y = a x² on [-R, R]
            let a = 2.0 * coef;
            let s = |x: f64| 0.5 * x * (1.0 + a * a * x * x).sqrt() + (a * x).asinh() / (2.0 * a);
            Some(if *coef == 0.0 { 2.0 * spec.radius } else { 2.0 * s(spec.radius) })
        }
        GraphFunction::Quadratic { c: coef } if k == 2 => {
            // paraboloid area over the disk
            let pi = core::f64::consts::PI;
            let a = 4.0 * coef * coef;
            Some(if *coef == 0.0 {
                pi * spec.radius * spec.radius
            } else {
                2.0 * pi / (3.0 * a) * ((1.0 + a * spec.radius * spec.radius).powf(1.5) - 1.0)
            })
        }
        GraphFunction::SphereCap { radius } if k == 2 => {
            let pi = core::f64::consts::PI;
            let height = radius - (radius * radius - spec.radius * spec.radius).sqrt();
            Some(2.0 * pi * radius * height)
        }
        _ => None,
    };
    finish(spec, pts, tangents, n, k, |m| {
        m.true_measure = measure;
        m.gradient_bound = Some(slope.bound);
        m.predicted_min_calibration = Some(slope.predicted_min_calibration);
    })
}

fn complex_curve(spec: &GeneratorSpec, c: f64) -> Result<Generated> {
    let slope = graph_gradient_bound(spec)?;
    let g = spec.h * SPACING_SAFETY / (1.0 + slope.bound * slope.bound).sqrt();
    let mut pts = Vec::new();
    let mut tangents = Vec::new();
    for u in lattice_offsets(2, g, spec.radius) {
        let (x, y) = (u[0], u[1]);
        // c z² = c (x² − y²) + i 2cxy
        pts.extend([x, y, c * (x * x - y * y), 2.0 * c * x * y]);
        let df = complex_curve_df(c, &u);
        tangents.extend(graph_frame(&df, 4, 2));
    }
    let pi = core::f64::consts::PI;
    let r2 = spec.radius * spec.radius;
    finish(spec, pts, tangents, 4, 2, |m| {
        // area = ∫ (1 + |2cz|²) over the disk
        m.true_measure = Some(pi * r2 * (1.0 + 2.0 * c * c * r2));
        m.gradient_bound = Some(slope.bound);
        // complex tangents calibrate the Kähler form
        m.predicted_min_calibration = Some(1.0);
    })
}

fn calibrated_plane(spec: &GeneratorSpec, form: &StandardForm, monomial: &[usize]) -> Result<Generated> {
    let omega = form.build()?;
    let (n, k) = (omega.n(), omega.k());
    if monomial.len() != k {
        return invalid(format!("monomial has {} indices, form degree is {k}", monomial.len()));
    }
    let mut sorted: Vec<usize> = monomial.iter().map(|&i| i.wrapping_sub(1)).collect();
    let sign = crate::forms::sort_with_sign(&mut sorted).ok_or_else(|| Error::InvalidParameter("repeated index".into()))?;
    let idx = MultiIndex::new(sorted, n)?;
    let value = sign * omega.coeff(&idx);
    let mut frame = vec![0.0; k * n];
    for (i, &axis) in monomial.iter().enumerate() {
        frame[i * n + axis - 1] = 1.0;
    }
    let mut pts = Vec::new();
    let mut tangents = Vec::new();
    for u in lattice_offsets(k, spec.h * SPACING_SAFETY, spec.radius) {
        let mut p = vec![0.0; n];
        for (i, &ui) in u.iter().enumerate() {
            linalg::axpy(ui, &frame[i * n..(i + 1) * n], &mut p);
        }
        pts.extend(p);
        tangents.extend_from_slice(&frame);
    }
    finish(spec, pts, tangents, n, k, |m| {
        m.true_measure = Some(unit_ball_volume(k) * spec.radius.powi(k as i32));
        m.gradient_bound = Some(0.0);
        m.predicted_min_calibration = Some(value);
    })
}

/// One replacement step: `[a, b]` becomes four segments through the thirds
/// and an apex at height `η |b − a| / 3` to the left of the segment.
pub fn koch_step(vertices: &[f64], eta: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(vertices.len() * 4);
    let segments = vertices.len() / 2 - 1;
    for s in 0..segments {
        let (ax, ay, bx, by) = (vertices[2 * s], vertices[2 * s + 1], vertices[2 * s + 2], vertices[2 * s + 3]);
        let (dx, dy) = (bx - ax, by - ay);
        let (mx, my) = (ax + dx / 2.0, ay + dy / 2.0);
        out.extend([
            ax,
            ay,
            ax + dx / 3.0,
            ay + dy / 3.0,
            mx - eta * dy / 3.0,
            my + eta * dx / 3.0,
            ax + 2.0 * dx / 3.0,
            ay + 2.0 * dy / 3.0,
        ]);
    }
    out.extend_from_slice(&vertices[vertices.len() - 2..]);
    out
}

/// Length of a polyline given as flat `(x, y)` pairs.
pub fn polyline_length(vertices: &[f64]) -> f64 {
    vertices
        .windows(4)
        .step_by(2)
        .map(|w| ((w[2] - w[0]).powi(2) + (w[3] - w[1]).powi(2)).sqrt())
        .sum()
}

fn koch(spec: &GeneratorSpec, schedule: &EtaSchedule, depth: usize) -> Result<Generated> {
    if depth > 11 {
        return invalid("Koch depth above 11 is not supported");
    }
    let r = spec.radius;
    let mut vertices = vec![-r, 0.0, r, 0.0];
    let mut etas = Vec::with_capacity(depth);
    let mut factors = Vec::with_capacity(depth);
    for j in 1..=depth {
        let eta = schedule.eta(j);
        if !eta.is_finite() || eta < 0.0 {
            return invalid(format!("η_{j} = {eta} must be finite and nonnegative"));
        }
        etas.push(eta);
        factors.push(polyline_length(&koch_step(&[0.0, 0.0, 1.0, 0.0], eta)));
        vertices = koch_step(&vertices, eta);
    }
    let length = polyline_length(&vertices);
    let mut pts = Vec::new();
    let mut tangents = Vec::new();
    let mut max_angle: f64 = 0.0;
    let segments = vertices.len() / 2 - 1;
    for s in 0..segments {
        let (ax, ay, bx, by) = (vertices[2 * s], vertices[2 * s + 1], vertices[2 * s + 2], vertices[2 * s + 3]);
        let len = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
        let dir = [(bx - ax) / len, (by - ay) / len];
        max_angle = max_angle.max(dir[1].atan2(dir[0]).abs());
        let pieces = (len / (spec.h * SPACING_SAFETY)).ceil().max(1.0) as usize;
        for p in 0..pieces {
            let t = p as f64 / pieces as f64;
            pts.extend([ax + t * (bx - ax), ay + t * (by - ay)]);
            tangents.extend(dir);
        }
    }
    pts.extend_from_slice(&vertices[vertices.len() - 2..]);
    let last = tangents[tangents.len() - 2..].to_vec();
    tangents.extend(last);
    let base_length = 2.0 * r;
    finish(spec, pts, tangents, 2, 1, |m| {
        m.true_measure = Some(length);
        m.predicted_min_calibration = Some(max_angle.cos());
        m.koch = Some(KochMetadata {
            etas,
            factors,
            base_length,
            length,
            length_factor: length / base_length,
            segments,
            max_angle,
            vertices,
        });
    })
}

fn perturbed(spec: &GeneratorSpec, base: &GeneratorSpec, noise: f64, seed: u64) -> Result<Generated> {
    if !(noise >= 0.0) || !noise.is_finite() {
        return invalid("noise must be nonnegative");
    }
    // two points move apart by at most 2·noise
    let inner_h = spec.h.min(base.h) - 2.0 * noise;
    if !(inner_h > 0.0) {
        return invalid(format!("resolution h = {} cannot absorb noise {noise}", spec.h));
    }
    let inner = generate(&GeneratorSpec {
        h: inner_h,
        ..base.clone()
    })?;
    let (n, k) = (inner.cloud.n(), inner.cloud.k());
    let c = n - k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(inner.cloud.len() * n);
    for i in 0..inner.cloud.len() {
        let mut p = inner.cloud.point(i).to_vec();
        if c > 0 && noise > 0.0 {
            let normals = normal_complement(inner.tangent(i), n);
            // uniform in the normal ball: Gaussian direction, radius ∝ U^{1/c}
            let dir: Vec<f64> = (0..c).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let len = linalg::norm(&dir);
            let u: f64 = rng.random();
            let rad = noise * u.powf(1.0 / c as f64);
            if len > 0.0 {
                for (a, &d) in dir.iter().enumerate() {
                    linalg::axpy(rad * d / len, &normals[a * n..(a + 1) * n], &mut p);
                }
            }
        }
        pts.extend(p);
    }
    let base_meta = inner.metadata.clone();
    finish(spec, pts, inner.tangents, n, k, |m| {
        m.gradient_bound = base_meta.gradient_bound;
        m.predicted_min_calibration = base_meta.predicted_min_calibration;
        m.koch = base_meta.koch;
    })
}
