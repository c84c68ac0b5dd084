//! Point clouds, metric primitives and best-fit plane search.
use crate::error::{check_dim, Error, Result};
use crate::forms::{ConstantKForm, OrientedPlane};
use crate::kdtree::KdTree;
use crate::linalg::{self, dist, dot, gram_schmidt, symmetric_eigen};
use crate::optimize::{nelder_mead, NelderMeadOptions};
use crate::prelude::*;
use serde::{Deserialize, Serialize};

/// A finite sample set in R^n with its nearest-neighbour index.
///
/// `resolution` is the largest distance from a point to its nearest
/// distinct neighbour (0 for a cloud with a single distinct point).
#[derive(Debug, Clone)]
pub struct PointCloud {
    n: usize,
    k: usize,
    index: KdTree,
    resolution: f64,
}

impl PointCloud {
    /// `points` is a flat buffer of `len * n` coordinates; `k` is the
    /// asserted intrinsic dimension.
    pub fn new(points: Vec<f64>, n: usize, k: usize) -> Result<Self> {
        if n == 0 || !points.len().is_multiple_of(n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: points.len(),
                context: "point buffer length must be a multiple of n",
            });
        }
        if points.is_empty() {
            return Err(Error::EmptySet);
        }
        if k == 0 || k > n {
            return Err(Error::InvalidParameter(format!("intrinsic dimension {k} invalid for n = {n}")));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coordinate".into()));
        }
        let index = KdTree::new(&points, n);
        let mut cloud = PointCloud {
            n,
            k,
            index,
            resolution: 0.0,
        };
        cloud.resolution = cloud.measure_resolution();
        Ok(cloud)
    }

    pub fn from_rows(rows: &[Vec<f64>], k: usize) -> Result<Self> {
        let n = rows.first().map(|r| r.len()).ok_or(Error::EmptySet)?;
        let mut flat = Vec::with_capacity(rows.len() * n);
        for r in rows {
            check_dim(n, r.len(), "row length")?;
            flat.extend_from_slice(r);
        }
        Self::new(flat, n, k)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.index.point(i)
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    pub fn flat(&self) -> Vec<f64> {
        self.points().flat_map(|p| p.iter().copied()).collect()
    }

    pub fn index(&self) -> &KdTree {
        &self.index
    }

    /// Recomputes the resolution from scratch.
    pub fn measure_resolution(&self) -> f64 {
        let mut h: f64 = 0.0;
        for i in 0..self.len() {
            if let Some((_, d2)) = self.index.nearest_distinct(self.point(i)) {
                h = h.max(d2.sqrt());
            }
        }
        h
    }

    /// Indices of the points in the closed ball, ascending.
    pub fn in_ball(&self, ball: &Ball) -> Vec<usize> {
        self.index.within(&ball.center, ball.radius)
    }

    /// Applies `f` to every point, keeping the intrinsic dimension.
    pub fn map_points<F: Fn(&[f64]) -> Vec<f64>>(&self, f: F) -> Result<Self> {
        let mut flat = Vec::with_capacity(self.len() * self.n);
        for p in self.points() {
            flat.extend(f(p));
        }
        Self::new(flat, self.n, self.k)
    }

    /// Sub-cloud of the points satisfying `keep`.
    pub fn filter<F: Fn(&[f64]) -> bool>(&self, keep: F) -> Result<Self> {
        let flat: Vec<f64> = self.points().filter(|p| keep(p)).flat_map(|p| p.iter().copied()).collect();
        Self::new(flat, self.n, self.k)
    }
}

/// Closed Euclidean ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!("ball radius {radius} must be positive")));
        }
        Ok(Ball { center, radius })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        linalg::dist_sq(x, &self.center) <= self.radius * self.radius
    }

    /// Whether this ball lies inside `outer`.
    pub fn inside(&self, outer: &Ball) -> bool {
        dist(&self.center, &outer.center) + self.radius <= outer.radius * (1.0 + 1e-12)
    }
}

/// A set handed to [`hausdorff_distance`].
#[derive(Debug, Clone, Copy)]
pub enum Shape<'a> {
    Cloud(&'a PointCloud),
    /// Flat coordinate buffer and its dimension.
    Points(&'a [f64], usize),
    /// `plane ∩ ball`, discretised by a grid of the given spacing.
    PlanePatch {
        plane: &'a OrientedPlane,
        ball: &'a Ball,
        spacing: f64,
    },
}

impl Shape<'_> {
    fn dim(&self) -> usize {
        match self {
            Shape::Cloud(c) => c.n(),
            Shape::Points(_, n) => *n,
            Shape::PlanePatch { plane, .. } => plane.n(),
        }
    }
}

/// Grid sample of `plane ∩ ball` with the given spacing, anchored at the
/// projection of the ball centre.
pub fn plane_patch(plane: &OrientedPlane, ball: &Ball, spacing: f64) -> Vec<f64> {
    let k = plane.k();
    let foot = plane.project(&ball.center).expect("ball and plane dimensions agree");
    let off = dist(&foot, &ball.center);
    if off > ball.radius {
        return Vec::new();
    }
    let rho = (ball.radius * ball.radius - off * off).max(0.0).sqrt();
    let centred = plane.with_base(foot);
    let mut out = Vec::new();
    for u in lattice_offsets(k, spacing, rho) {
        out.extend(centred.point_at(&u));
    }
    out
}

/// Integer lattice points `spacing · i` with `|spacing · i| ≤ radius`, in
/// lexicographic order of `i`.
pub fn lattice_offsets(k: usize, spacing: f64, radius: f64) -> Vec<Vec<f64>> {
    let m = (radius / spacing).floor() as i64;
    let side = (2 * m + 1) as usize;
    let total = side.pow(k as u32);
    let r2 = radius * radius * (1.0 + 1e-12);
    let mut out = Vec::new();
    for mut idx in 0..total {
        let mut u = vec![0.0; k];
        for slot in u.iter_mut().rev() {
            *slot = spacing * ((idx % side) as i64 - m) as f64;
            idx /= side;
        }
        if dot(&u, &u) <= r2 {
            out.push(u);
        }
    }
    out
}

fn materialise(shape: &Shape<'_>) -> Option<Vec<f64>> {
    match shape {
        Shape::Cloud(_) | Shape::Points(..) => None,
        Shape::PlanePatch { plane, ball, spacing } => Some(plane_patch(plane, ball, *spacing)),
    }
}

fn one_sided(from: &[f64], n: usize, to: &KdTree) -> f64 {
    let mut sup: f64 = 0.0;
    for p in from.chunks_exact(n) {
        if to.any_within(p, sup) {
            continue;
        }
        let (_, d2) = to.nearest(p).expect("target set is nonempty");
        sup = sup.max(d2.sqrt());
    }
    sup
}

/// Symmetric Hausdorff distance: the larger of the two one-sided sup-inf
/// distances, each computed through a spatial index.
pub fn hausdorff_distance(a: Shape<'_>, b: Shape<'_>) -> Result<f64> {
    let n = a.dim();
    check_dim(n, b.dim(), "Hausdorff operands")?;
    let owned_a = materialise(&a);
    let owned_b = materialise(&b);
    let pts = |s: &Shape<'_>, owned: &Option<Vec<f64>>| -> Vec<f64> {
        match (s, owned) {
            (_, Some(v)) => v.clone(),
            (Shape::Cloud(c), None) => c.flat(),
            (Shape::Points(p, _), None) => p.to_vec(),
            _ => unreachable!(),
        }
    };
    let pa = pts(&a, &owned_a);
    let pb = pts(&b, &owned_b);
    if pa.is_empty() || pb.is_empty() {
        return Err(Error::EmptySet);
    }
    let tree_of = |s: &Shape<'_>, p: &[f64]| -> KdTree {
        match s {
            Shape::Cloud(c) => c.index().clone(),
            _ => KdTree::new(p, n),
        }
    };
    let ta = tree_of(&a, &pa);
    let tb = tree_of(&b, &pb);
    Ok(one_sided(&pa, n, &tb).max(one_sided(&pb, n, &ta)))
}

/// Operator norm of the difference of the orthogonal projections onto the
/// linear parts (the sine of the largest principal angle). Base points and
/// orientation are ignored.
pub fn grassmann_distance(p: &OrientedPlane, q: &OrientedPlane) -> Result<f64> {
    check_dim(p.n(), q.n(), "plane ambient dimension")?;
    check_dim(p.k(), q.k(), "plane dimension")?;
    Ok(grassmann_frames(p.frame(), q.frame(), p.n()))
}

/// [`grassmann_distance`] on raw orthonormal frames of equal dimension.
pub fn grassmann_frames(u: &[f64], v: &[f64], n: usize) -> f64 {
    let k = u.len() / n;
    // residual of V after projecting onto span(U)
    let mut resid = v.to_vec();
    for _pass in 0..2 {
        for j in 0..k {
            let col = &mut resid[j * n..(j + 1) * n];
            for i in 0..k {
                let e = &u[i * n..(i + 1) * n];
                let c = dot(e, col);
                linalg::axpy(-c, e, col);
            }
        }
    }
    linalg::spectral_norm_columns(&resid, n).clamp(0.0, 1.0)
}

/// Orthogonal projection onto the affine plane.
pub fn project(plane: &OrientedPlane, x: &[f64]) -> Result<Vec<f64>> {
    plane.project(x)
}

/// Objective used by [`best_fit_plane`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    /// `sup_{y ∈ S∩B} d(y, L)`: the β∞ plane.
    OneSided,
    /// `d_H(S∩B, L∩B)`: the θ plane.
    Symmetric,
}

/// Weight of the one-sided term added to the symmetric objective while
/// searching for the θ plane.
pub const TIE_WEIGHT: f64 = 0.1;

/// Number of plane-patch grid steps per ball radius for the symmetric objective.
pub fn patch_divisions(k: usize) -> usize {
    match k {
        0..=2 => 32,
        3 => 16,
        _ => 8,
    }
}

/// θ and β∞ planes for one ball, fitted together so that the one-sided
/// objective never exceeds the symmetric one.
#[derive(Debug, Clone)]
pub struct PlaneFits {
    pub theta_plane: OrientedPlane,
    /// `d_H(S∩B, L∩B)` in length units.
    pub theta_objective: f64,
    pub beta_plane: OrientedPlane,
    /// `sup d(y, L)` in length units.
    pub beta_objective: f64,
    pub points_in_ball: usize,
}

/// Plane minimising the chosen objective over `cloud ∩ ball`, with its
/// objective value in length units.
///
/// PCA at the in-ball centroid seeds a Nelder–Mead search over the plane's
/// normal offset and tilt. When `orient` is given the frame is oriented so
/// that the form evaluates nonnegatively on it.
pub fn best_fit_plane(
    cloud: &PointCloud,
    ball: &Ball,
    k: usize,
    mode: FitMode,
    orient: Option<&ConstantKForm>,
) -> Result<(OrientedPlane, f64)> {
    let problem = LocalProblem::new(cloud, ball, k)?;
    let theta = problem.minimise_symmetric_from(&[problem.zero_params()]);
    match mode {
        FitMode::Symmetric => Ok((problem.finish(&theta.0, orient), theta.1)),
        FitMode::OneSided => {
            let beta = problem.minimise_one_sided_from(&[problem.zero_params(), theta.0]);
            Ok((problem.finish(&beta.0, orient), beta.1))
        }
    }
}

/// Fits both the θ plane and the β∞ plane; see [`PlaneFits`].
pub fn fit_planes(cloud: &PointCloud, ball: &Ball, k: usize, orient: Option<&ConstantKForm>) -> Result<PlaneFits> {
    let problem = LocalProblem::new(cloud, ball, k)?;
    let theta = problem.minimise_symmetric_from(&[problem.zero_params()]);
    let beta = problem.minimise_one_sided_from(&[problem.zero_params(), theta.0.clone()]);
    Ok(PlaneFits {
        theta_plane: problem.finish(&theta.0, orient),
        theta_objective: theta.1,
        beta_plane: problem.finish(&beta.0, orient),
        beta_objective: beta.1,
        points_in_ball: problem.m,
    })
}

/// In-ball points expressed in their PCA frame. Plane candidates are graphs
/// `{(u, T u + w)}` over the leading `k` principal axes.
struct LocalProblem {
    n: usize,
    k: usize,
    m: usize,
    radius: f64,
    centroid: Vec<f64>,
    /// principal axes, vector-major, decreasing variance
    axes: Vec<f64>,
    pts: Vec<f64>,
    center: Vec<f64>,
    tree: KdTree,
    lattice: Vec<Vec<f64>>,
}

impl LocalProblem {
    fn new(cloud: &PointCloud, ball: &Ball, k: usize) -> Result<Self> {
        let n = cloud.n();
        check_dim(n, ball.center.len(), "ball centre")?;
        if k == 0 || k > n {
            return Err(Error::InvalidParameter(format!("plane dimension {k} invalid for n = {n}")));
        }
        let idx = cloud.in_ball(ball);
        let m = idx.len();
        let mut centroid = vec![0.0; n];
        if m > 0 {
            for &i in &idx {
                linalg::axpy(1.0 / m as f64, cloud.point(i), &mut centroid);
            }
        } else {
            centroid.clone_from(&ball.center);
        }
        let axes = principal_axes(cloud, &idx, &centroid);
        if m < k + 1 {
            let fallback = OrientedPlane::from_parts_unchecked(centroid, axes[..k * n].to_vec());
            return Err(Error::DegenerateFit {
                points: m,
                needed: k + 1,
                fallback: Box::new(fallback),
            });
        }
        let to_local = |p: &[f64]| -> Vec<f64> {
            let d = linalg::sub(p, &centroid);
            (0..n).map(|j| dot(&axes[j * n..(j + 1) * n], &d)).collect()
        };
        let mut pts = Vec::with_capacity(m * n);
        for &i in &idx {
            pts.extend(to_local(cloud.point(i)));
        }
        let center = to_local(&ball.center);
        let spacing = ball.radius / patch_divisions(k) as f64;
        let tree = KdTree::new(&pts, n);
        let lattice = lattice_offsets(k, spacing, ball.radius);
        Ok(LocalProblem {
            n,
            k,
            m,
            radius: ball.radius,
            centroid,
            axes,
            pts,
            center,
            tree,
            lattice,
        })
    }

    fn zero_params(&self) -> Vec<f64> {
        vec![0.0; (self.n - self.k) * (self.k + 1)]
    }

    /// Base point (local coordinates) and orthonormal frame for parameters
    /// `[w (n-k), T ((n-k) x k, column-major by tangent axis)]`.
    fn plane(&self, params: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (n, k) = (self.n, self.k);
        let c = n - k;
        let mut base = vec![0.0; n];
        base[k..].copy_from_slice(&params[..c]);
        let mut frame = vec![0.0; k * n];
        for i in 0..k {
            frame[i * n + i] = 1.0;
            for a in 0..c {
                frame[i * n + k + a] = params[c + i * c + a];
            }
        }
        gram_schmidt(&mut frame, n);
        (base, frame)
    }

    fn residual(&self, q: &[f64], frame: &[f64], t: &mut [f64]) -> f64 {
        let n = self.n;
        let mut r2 = dot(q, q);
        for (i, ti) in t.iter_mut().enumerate() {
            *ti = dot(&frame[i * n..(i + 1) * n], q);
        }
        // explicit residual for accuracy when the point is close to the plane
        let mut res = [0.0f64; 16];
        if n <= 16 {
            res[..n].copy_from_slice(q);
            for (i, &ti) in t.iter().enumerate() {
                linalg::axpy(-ti, &frame[i * n..(i + 1) * n], &mut res[..n]);
            }
            r2 = dot(&res[..n], &res[..n]);
        } else {
            for &ti in t.iter() {
                r2 -= ti * ti;
            }
        }
        r2.max(0.0).sqrt()
    }

    fn one_sided(&self, params: &[f64]) -> f64 {
        let (base, frame) = self.plane(params);
        let n = self.n;
        let mut t = vec![0.0; self.k];
        let mut q = vec![0.0; n];
        let mut sup: f64 = 0.0;
        for p in self.pts.chunks_exact(n) {
            for j in 0..n {
                q[j] = p[j] - base[j];
            }
            sup = sup.max(self.residual(&q, &frame, &mut t));
        }
        sup
    }

    /// Symmetric objective and the one-sided one for the same plane.
    fn symmetric(&self, params: &[f64], state: &mut SearchState) -> (f64, f64) {
        let (base, frame) = self.plane(params);
        let (n, k) = (self.n, self.k);
        let mut t = vec![0.0; k];
        let mut q: Vec<f64> = (0..n).map(|j| self.center[j] - base[j]).collect();
        let off = self.residual(&q, &frame, &mut t);
        if off > self.radius {
            return (f64::INFINITY, f64::INFINITY);
        }
        let rho = (self.radius * self.radius - off * off).max(0.0).sqrt();
        let tc = t.clone();

        // cloud -> disk
        let mut sup: f64 = 0.0;
        let mut one: f64 = 0.0;
        for p in self.pts.chunks_exact(n) {
            for j in 0..n {
                q[j] = p[j] - base[j];
            }
            let d_perp = self.residual(&q, &frame, &mut t);
            let radial = t.iter().zip(&tc).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let outside = (radial - rho).max(0.0);
            one = one.max(d_perp);
            sup = sup.max((d_perp * d_perp + outside * outside).sqrt());
        }

        // disk -> cloud, starting from the previous worst lattice point
        let tree = &self.tree;
        let rho2 = rho * rho * (1.0 + 1e-12);
        let count = self.lattice.len();
        let mut p = vec![0.0; n];
        if state.witness.len() != count {
            state.witness = vec![0; count];
        }
        let start = state.hint.min(count.saturating_sub(1));
        let mut worst = (start, -1.0);
        for s in 0..count {
            let li = (start + s) % count;
            let u = &self.lattice[li];
            if dot(u, u) > rho2 {
                continue;
            }
            p.copy_from_slice(&base);
            for i in 0..k {
                linalg::axpy(tc[i] + u[i], &frame[i * n..(i + 1) * n], &mut p);
            }
            // a cloud point that was close on an earlier evaluation usually still is
            if linalg::dist_sq(&p, tree.point(state.witness[li])) < sup * sup {
                continue;
            }
            let (w, d2) = tree.nearest(&p).expect("nonempty ball");
            state.witness[li] = w;
            let d = d2.sqrt();
            if d < sup {
                continue;
            }
            if d > worst.1 {
                worst = (li, d);
            }
            sup = sup.max(d);
        }
        if worst.1 >= 0.0 {
            state.hint = worst.0;
        }
        (sup, one)
    }

    fn steps(&self, f0: f64) -> Vec<f64> {
        let c = self.n - self.k;
        let scale = f0.max(1e-9 * self.radius);
        let mut steps = vec![0.5 * scale; c];
        steps.extend(core::iter::repeat_n(0.5 * scale / self.radius, c * self.k));
        steps
    }

    /// Minimises `d_H + TIE_WEIGHT · sup d(y, L)` and returns the plain `d_H`
    /// of the result. The one-sided term never exceeds `d_H`, so the result
    /// is within a factor `1 + TIE_WEIGHT` of any plane the search visited;
    /// the extra term settles the tilt where coarse samples leave `d_H` flat.
    fn minimise_symmetric_from(&self, starts: &[Vec<f64>]) -> (Vec<f64>, f64) {
        let mut state = SearchState::default();
        let mut composite = |x: &[f64]| {
            let (sym, one) = self.symmetric(x, &mut state);
            sym + TIE_WEIGHT * one
        };
        let (x0, f0) = best_start(starts, &mut composite);
        let x = if f0 == 0.0 {
            x0
        } else {
            let steps = self.steps(f0);
            let res = nelder_mead(&mut composite, &x0, &steps, NelderMeadOptions::default());
            if res.value < f0 { res.x } else { x0 }
        };
        let value = self.symmetric(&x, &mut state).0;
        (x, value)
    }

    fn minimise_one_sided_from(&self, starts: &[Vec<f64>]) -> (Vec<f64>, f64) {
        let (x0, f0) = best_start(starts, |x| self.one_sided(x));
        if f0 == 0.0 {
            return (x0, f0);
        }
        let steps = self.steps(f0);
        let res = nelder_mead(|x| self.one_sided(x), &x0, &steps, NelderMeadOptions::default());
        if res.value < f0 { (res.x, res.value) } else { (x0, f0) }
    }

    /// Global plane through the foot of the ball centre.
    fn finish(&self, params: &[f64], orient: Option<&ConstantKForm>) -> OrientedPlane {
        let (base, frame) = self.plane(params);
        let n = self.n;
        let to_global = |v: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for (j, &c) in v.iter().enumerate() {
                linalg::axpy(c, &self.axes[j * n..(j + 1) * n], &mut out);
            }
            out
        };
        let mut gframe = Vec::with_capacity(frame.len());
        for v in frame.chunks_exact(n) {
            gframe.extend(to_global(v));
        }
        gram_schmidt(&mut gframe, n);
        let mut gbase = to_global(&base);
        linalg::axpy(1.0, &self.centroid, &mut gbase);
        let plane = OrientedPlane::from_parts_unchecked(gbase, gframe);
        let centre_global = {
            let mut c = to_global(&self.center);
            linalg::axpy(1.0, &self.centroid, &mut c);
            c
        };
        let foot = plane.project(&centre_global).expect("dimensions agree");
        orient_plane(plane.with_base(foot), orient)
    }
}

/// Scratch data carried between evaluations of the symmetric objective:
/// the lattice point that was worst last time, and for every lattice point
/// the cloud point that was nearest when it was last queried.
#[derive(Default)]
struct SearchState {
    hint: usize,
    witness: Vec<usize>,
}

fn best_start<F: FnMut(&[f64]) -> f64>(starts: &[Vec<f64>], mut f: F) -> (Vec<f64>, f64) {
    let mut best = (starts[0].clone(), f64::INFINITY);
    for s in starts {
        let v = f(s);
        if v < best.1 {
            best = (s.clone(), v);
        }
    }
    best
}

/// `(sup_{y ∈ S∩B} d(y, L), d_H(S∩B, L∩B))` for a given plane, in length
/// units. The patch uses the same spacing as the fitted objective.
pub fn plane_objectives(cloud: &PointCloud, ball: &Ball, plane: &OrientedPlane) -> Result<(f64, f64)> {
    check_dim(cloud.n(), plane.n(), "plane ambient dimension")?;
    let idx = cloud.in_ball(ball);
    if idx.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut pts = Vec::with_capacity(idx.len() * cloud.n());
    for &i in &idx {
        pts.extend_from_slice(cloud.point(i));
    }
    let one = pts.chunks_exact(cloud.n()).map(|p| plane.distance(p)).fold(0.0, f64::max);
    let spacing = ball.radius / patch_divisions(plane.k()) as f64;
    let patch = plane_patch(plane, ball, spacing);
    if patch.is_empty() {
        return Ok((one, f64::INFINITY));
    }
    let sym = hausdorff_distance(Shape::Points(&pts, cloud.n()), Shape::Points(&patch, cloud.n()))?;
    Ok((one, sym))
}

/// Orients `plane` so that `form` is nonnegative on it; without a form,
/// makes its largest Plücker coordinate positive.
pub fn orient_plane(plane: OrientedPlane, form: Option<&ConstantKForm>) -> OrientedPlane {
    match form {
        Some(f) if f.n() == plane.n() && f.k() == plane.k() => {
            let v = f.evaluate_frame_unchecked(plane.frame());
            if v < 0.0 { plane.flipped() } else { plane }
        }
        _ => {
            let (n, k) = (plane.n(), plane.k());
            let mut best = (0.0f64, 0.0f64);
            for idx in crate::forms::MultiIndex::all(n, k) {
                let mut minor = vec![0.0; k * k];
                for (a, &row) in idx.as_slice().iter().enumerate() {
                    for b in 0..k {
                        minor[a * k + b] = plane.frame()[b * n + row];
                    }
                }
                let d = linalg::det(&minor, k);
                if d.abs() > best.0.abs() + 1e-12 {
                    best = (d, d);
                }
            }
            if best.1 < 0.0 { plane.flipped() } else { plane }
        }
    }
}

/// PCA axes of the indexed points about `centroid`, decreasing variance,
/// each signed so that the third moment of the projections is positive
/// (falling back to a positive largest entry).
fn principal_axes(cloud: &PointCloud, idx: &[usize], centroid: &[f64]) -> Vec<f64> {
    let n = cloud.n();
    let mut cov = vec![0.0; n * n];
    for &i in idx {
        let d = linalg::sub(cloud.point(i), centroid);
        for a in 0..n {
            for b in a..n {
                cov[a * n + b] += d[a] * d[b];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            cov[a * n + b] = cov[b * n + a];
        }
    }
    let (_, mut axes) = symmetric_eigen(&cov, n);
    for j in 0..n {
        let v = &axes[j * n..(j + 1) * n];
        let mut third = 0.0;
        let mut scale: f64 = 0.0;
        for &i in idx {
            let s = dot(v, &linalg::sub(cloud.point(i), centroid));
            third += s * s * s;
            scale = scale.max(s.abs());
        }
        let flip = if third.abs() > 1e-9 * scale.powi(3).max(1e-300) * idx.len() as f64 {
            third < 0.0
        } else {
            let (mut big, mut arg) = (0.0f64, 0usize);
            for (t, x) in v.iter().enumerate() {
                if x.abs() > big + 1e-12 {
                    big = x.abs();
                    arg = t;
                }
            }
            v[arg] < 0.0
        };
        if flip {
            for x in axes[j * n..(j + 1) * n].iter_mut() {
                *x = -*x;
            }
        }
    }
    // keep the basis right-handed so the graph chart is orientation-consistent
    if linalg::det(&axes, n) < 0.0 {
        for x in axes[(n - 1) * n..].iter_mut() {
            *x = -*x;
        }
    }
    axes
}
