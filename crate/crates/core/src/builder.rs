//! The approximating surface family `S_r`: Vitali covers, plane gluing over
//! a parameter grid, and the property checks along the family.
use crate::error::{check_dim, Error, Result};
use crate::forms::{CalibrationField, ConstantKForm, OrientedPlane};
use crate::geometry::{best_fit_plane, grassmann_frames, hausdorff_distance, Ball, FitMode, PointCloud, Shape};
use crate::kdtree::KdTree;
use crate::linalg::{self, gram_schmidt};
use crate::par;
use crate::prelude::*;
use serde::{Deserialize, Serialize};

/// Ball radius as a function of `|y|`: `r` on `B_1`, `ε` outside `B_{1+ε}`,
/// linear in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFunction {
    pub r: f64,
    pub epsilon: f64,
}

impl ScaleFunction {
    pub fn new(r: f64, epsilon: f64) -> Result<Self> {
        if !(r > 0.0) || !(epsilon > 0.0) || r > epsilon {
            return Err(Error::InvalidParameter(format!(
                "scale function needs 0 < r ≤ ε, got r = {r}, ε = {epsilon}"
            )));
        }
        Ok(ScaleFunction { r, epsilon })
    }

    pub fn at(&self, norm: f64) -> f64 {
        if norm <= 1.0 {
            self.r
        } else if norm >= 1.0 + self.epsilon {
            self.epsilon
        } else {
            self.r + (self.epsilon - self.r) * (norm - 1.0) / self.epsilon
        }
    }
}

/// One ball of a Vitali cover with its θ plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverBall {
    /// Index of the centre in the cloud.
    pub index: usize,
    pub center: Vec<f64>,
    pub radius: f64,
    pub plane: OrientedPlane,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitaliCover {
    pub scale: ScaleFunction,
    pub balls: Vec<CoverBall>,
}

impl VitaliCover {
    /// Whether the fifth-radius balls are pairwise disjoint (exhaustive).
    pub fn fifth_balls_disjoint(&self) -> bool {
        let b = &self.balls;
        for i in 0..b.len() {
            for j in i + 1..b.len() {
                if linalg::dist(&b[i].center, &b[j].center) < (b[i].radius + b[j].radius) / 5.0 {
                    return false;
                }
            }
        }
        true
    }

    /// Cloud points of `region` not contained in any full-radius ball.
    pub fn uncovered(&self, cloud: &PointCloud, region: &Ball) -> Vec<usize> {
        cloud
            .in_ball(region)
            .into_iter()
            .filter(|&i| {
                let p = cloud.point(i);
                !self.balls.iter().any(|b| linalg::dist(p, &b.center) <= b.radius)
            })
            .collect()
    }

    /// Normalised bump weights `φ_i(x)` of the balls whose blended support
    /// contains `x`, in cover order.
    pub fn partition_weights(&self, x: &[f64], blend: f64) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = self
            .balls
            .iter()
            .enumerate()
            .filter_map(|(i, b)| {
                let w = bump(linalg::dist_sq(x, &b.center), blend * b.radius);
                (w > 0.0).then_some((i, w))
            })
            .collect();
        let total: f64 = out.iter().map(|(_, w)| w).sum();
        for (_, w) in out.iter_mut() {
            *w /= total;
        }
        out
    }
}

/// `max(0, 1 − d²/R²)²`.
fn bump(d2: f64, support: f64) -> f64 {
    let t = 1.0 - d2 / (support * support);
    if t > 0.0 { t * t } else { 0.0 }
}

/// Greedy Vitali cover of `cloud ∩ B_{1+ε}(0)`: candidates in decreasing
/// radius (then index) order, accepted when their fifth-ball misses all
/// accepted fifth-balls. Each accepted ball carries its θ plane, oriented
/// nonnegatively for `orient` when given.
pub fn vitali_cover(cloud: &PointCloud, scale: &ScaleFunction, orient: Option<&ConstantKForm>) -> Result<VitaliCover> {
    let h = cloud.resolution();
    if h > scale.r / 10.0 {
        return Err(Error::ResolutionTooCoarse {
            scale: scale.r,
            floor: 10.0 * h,
            resolution: h,
        });
    }
    let n = cloud.n();
    let region = Ball::new(vec![0.0; n], 1.0 + scale.epsilon)?;
    let mut candidates: Vec<(usize, f64)> = cloud
        .in_ball(&region)
        .into_iter()
        .map(|i| (i, scale.at(linalg::norm(cloud.point(i)))))
        .collect();
    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let radius_of: Vec<f64> = {
        let mut v = vec![0.0; cloud.len()];
        for &(i, r) in &candidates {
            v[i] = r;
        }
        v
    };
    let mut blocked = vec![false; cloud.len()];
    let mut chosen: Vec<(usize, f64)> = Vec::new();
    for &(i, r) in &candidates {
        if blocked[i] {
            continue;
        }
        chosen.push((i, r));
        // later candidates have radius ≤ r, so their fifth-balls can only
        // meet this one within 2r/5
        let y = cloud.point(i);
        for j in cloud.index().within(y, 2.0 * r / 5.0) {
            if linalg::dist(cloud.point(j), y) < (r + radius_of[j]) / 5.0 {
                blocked[j] = true;
            }
        }
    }
    let fits = par::map(&chosen, |&(i, r)| {
        let ball = Ball {
            center: cloud.point(i).to_vec(),
            radius: r,
        };
        match best_fit_plane(cloud, &ball, cloud.k(), FitMode::Symmetric, orient) {
            Ok((plane, obj)) => Ok((plane, obj / r)),
            Err(Error::DegenerateFit { fallback, .. }) => Ok((*fallback, f64::INFINITY)),
            Err(e) => Err(e),
        }
    });
    let mut balls = Vec::with_capacity(chosen.len());
    for (&(i, r), fit) in chosen.iter().zip(fits) {
        let (plane, theta) = fit?;
        balls.push(CoverBall {
            index: i,
            center: cloud.point(i).to_vec(),
            radius: r,
            plane,
            theta,
        });
    }
    Ok(VitaliCover { scale: *scale, balls })
}

/// A k-dimensional regular grid on a base plane with an image point per
/// node. Nodes are indexed with the first grid axis slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSurface {
    base_plane: OrientedPlane,
    spacing: f64,
    half: usize,
    positions: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<Vec<bool>>,
}

impl ParamSurface {
    /// The flat embedding of the grid `spacing · Z^k ∩ [−extent, extent]^k`
    /// (rounded outward) around the base point of `base_plane`.
    pub fn flat(base_plane: OrientedPlane, extent: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || !(extent > 0.0) {
            return Err(Error::InvalidParameter("grid spacing and extent must be positive".into()));
        }
        let half = (extent / spacing).ceil() as usize;
        let mut s = ParamSurface {
            base_plane,
            spacing,
            half,
            positions: Vec::new(),
            mask: None,
        };
        let count = s.node_count();
        let mut pos = Vec::with_capacity(count * s.n());
        for idx in 0..count {
            pos.extend(s.base_point(idx));
        }
        s.positions = pos;
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.base_plane.n()
    }

    pub fn k(&self) -> usize {
        self.base_plane.k()
    }

    pub fn base_plane(&self) -> &OrientedPlane {
        &self.base_plane
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Nodes per axis.
    pub fn side(&self) -> usize {
        2 * self.half + 1
    }

    pub fn node_count(&self) -> usize {
        self.side().pow(self.k() as u32)
    }

    pub fn digits(&self, mut idx: usize) -> Vec<usize> {
        let side = self.side();
        let mut d = vec![0; self.k()];
        for slot in d.iter_mut().rev() {
            *slot = idx % side;
            idx /= side;
        }
        d
    }

    fn index_of(&self, digits: &[usize]) -> usize {
        digits.iter().fold(0, |acc, &d| acc * self.side() + d)
    }

    /// Grid coordinates of a node in the base plane's frame.
    pub fn param(&self, idx: usize) -> Vec<f64> {
        self.digits(idx)
            .into_iter()
            .map(|d| (d as f64 - self.half as f64) * self.spacing)
            .collect()
    }

    pub fn base_point(&self, idx: usize) -> Vec<f64> {
        self.base_plane.point_at(&self.param(idx))
    }

    pub fn position(&self, idx: usize) -> &[f64] {
        let n = self.n();
        &self.positions[idx * n..(idx + 1) * n]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn with_positions(&self, positions: Vec<f64>) -> Result<Self> {
        check_dim(self.positions.len(), positions.len(), "surface positions")?;
        Ok(ParamSurface {
            positions,
            ..self.clone()
        })
    }

    pub fn is_active(&self, idx: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[idx])
    }

    /// Deactivates every node whose image lies within `radius` of `center`.
    pub fn punch_hole(&mut self, center: &[f64], radius: f64) {
        let count = self.node_count();
        let mut mask = self.mask.take().unwrap_or_else(|| vec![true; count]);
        for (idx, m) in mask.iter_mut().enumerate() {
            if linalg::dist(self.position(idx), center) < radius {
                *m = false;
            }
        }
        self.mask = Some(mask);
    }

    /// Active node images, flat.
    pub fn active_points(&self, within: Option<&Ball>) -> Vec<f64> {
        let mut out = Vec::new();
        for idx in 0..self.node_count() {
            let p = self.position(idx);
            if self.is_active(idx) && within.is_none_or(|b| b.contains(p)) {
                out.extend_from_slice(p);
            }
        }
        out
    }

    pub fn cell_count(&self) -> usize {
        (self.side() - 1).pow(self.k() as u32)
    }

    /// Node indices of the `2^k` corners of a cell; bit `i` of the position
    /// in the returned list is the offset along grid axis `i`.
    pub fn cell_corners(&self, cell: usize) -> Vec<usize> {
        let k = self.k();
        let cells_side = self.side() - 1;
        let mut lo = vec![0; k];
        let mut c = cell;
        for slot in lo.iter_mut().rev() {
            *slot = c % cells_side;
            c /= cells_side;
        }
        (0..1usize << k)
            .map(|bits| {
                let d: Vec<usize> = (0..k).map(|i| lo[i] + ((bits >> i) & 1)).collect();
                self.index_of(&d)
            })
            .collect()
    }

    pub fn cell_active(&self, corners: &[usize]) -> bool {
        corners.iter().all(|&c| self.is_active(c))
    }

    /// Differential of the multilinear interpolant at local coordinates
    /// `s ∈ [0,1]^k`, as `k` column vectors (vector-major).
    pub fn cell_jacobian(&self, corners: &[usize], s: &[f64]) -> Vec<f64> {
        let (n, k) = (self.n(), self.k());
        let mut jac = vec![0.0; k * n];
        for (bits, &c) in corners.iter().enumerate() {
            let p = self.position(c);
            for i in 0..k {
                let mut w = if (bits >> i) & 1 == 1 { 1.0 } else { -1.0 };
                for (j, &sj) in s.iter().enumerate() {
                    if j != i {
                        w *= if (bits >> j) & 1 == 1 { sj } else { 1.0 - sj };
                    }
                }
                linalg::axpy(w / self.spacing, p, &mut jac[i * n..(i + 1) * n]);
            }
        }
        jac
    }

    /// Gauss–Legendre nodes on the unit cell with `ceil(k/2)` points per
    /// axis and weights scaled by the parameter cell volume. This integrates
    /// pullbacks of constant forms exactly.
    pub fn quadrature(&self) -> Vec<(Vec<f64>, f64)> {
        let k = self.k();
        let q = k.div_ceil(2).max(1);
        let (pts, wts): (&[f64], &[f64]) = if q == 1 {
            (&[0.5], &[1.0])
        } else {
            const A: f64 = 0.211_324_865_405_187_1; // (1 − 1/√3) / 2
            (&[A, 1.0 - A], &[0.5, 0.5])
        };
        let vol = self.spacing.powi(k as i32);
        let total = q.pow(k as u32);
        (0..total)
            .map(|mut t| {
                let mut s = vec![0.0; k];
                let mut w = vol;
                for slot in s.iter_mut() {
                    *slot = pts[t % q];
                    w *= wts[t % q];
                    t /= q;
                }
                (s, w)
            })
            .collect()
    }

    pub fn cell_center(&self, corners: &[usize]) -> Vec<f64> {
        let n = self.n();
        let mut c = vec![0.0; n];
        for &i in corners {
            linalg::axpy(1.0 / corners.len() as f64, self.position(i), &mut c);
        }
        c
    }

    /// Oriented orthonormal frame of the cell at its centre.
    pub fn cell_frame(&self, corners: &[usize]) -> Option<Vec<f64>> {
        let k = self.k();
        let mut j = self.cell_jacobian(corners, &vec![0.5; k]);
        gram_schmidt(&mut j, self.n()).then_some(j)
    }

    /// Oriented orthonormal frame at a node from central differences
    /// (one-sided on the grid boundary).
    pub fn node_frame(&self, idx: usize) -> Option<Vec<f64>> {
        let (n, k) = (self.n(), self.k());
        let d = self.digits(idx);
        let mut frame = vec![0.0; k * n];
        for i in 0..k {
            let mut lo = d.clone();
            let mut hi = d.clone();
            if d[i] > 0 {
                lo[i] -= 1;
            }
            if d[i] + 1 < self.side() {
                hi[i] += 1;
            }
            let (a, b) = (self.index_of(&lo), self.index_of(&hi));
            let col = &mut frame[i * n..(i + 1) * n];
            col.copy_from_slice(self.position(b));
            linalg::axpy(-1.0, self.position(a), col);
        }
        gram_schmidt(&mut frame, n).then_some(frame)
    }
}

/// Settings for [`build_family`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildConfig {
    pub epsilon: f64,
    /// Levels `a = 0..=levels`, with `r_a = ε · 2^{-a}`.
    pub levels: u32,
    /// Bump support as a multiple of the ball radius.
    pub blend: f64,
    /// Grid spacing as a fraction of the finest scale.
    pub grid_fraction: f64,
    /// Upper bound on grid nodes; the spacing coarsens to respect it.
    pub max_nodes: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            epsilon: 0.25,
            levels: 3,
            blend: 2.0,
            grid_fraction: 0.125,
            max_nodes: 1 << 20,
        }
    }
}

impl BuildConfig {
    pub fn scale(&self, a: u32) -> f64 {
        self.epsilon * crate::flatness::dyadic(a)
    }

    /// Grid spacing `r_final · grid_fraction`, coarsened to the node cap.
    pub fn grid_spacing(&self, k: usize) -> f64 {
        let extent = 1.0 + 2.0 * self.epsilon;
        let wanted = self.scale(self.levels) * self.grid_fraction;
        let side = (self.max_nodes as f64).powf(1.0 / k as f64).floor().max(3.0);
        let floor = 2.0 * extent / (side - 2.0);
        wanted.max(floor)
    }
}

/// Smooth cutoff on the base parameterisation: 1 on `|b| ≤ 1`, 0 on
/// `|b| ≥ 1 + ε/2`, cubic in between.
fn cutoff(norm: f64, epsilon: f64) -> f64 {
    let outer = 1.0 + epsilon / 2.0;
    if norm <= 1.0 {
        1.0
    } else if norm >= outer {
        0.0
    } else {
        let t = (norm - 1.0) / (outer - 1.0);
        1.0 - t * t * (3.0 - 2.0 * t)
    }
}

/// One gluing pass: every node moves by the partition-of-unity average of
/// its projections onto the cover planes, damped by a cutoff that vanishes
/// (bit-exactly) before `∂B_{1+ε}` on the base parameterisation.
///
/// Fails if a cover plane is farther than 1/2 in Grassmann distance from
/// the current tangent at a node inside its bump support.
pub fn glue_step(surface: &ParamSurface, cover: &VitaliCover, blend: f64) -> Result<ParamSurface> {
    let n = surface.n();
    let eps = cover.scale.epsilon;
    if cover.balls.is_empty() {
        return Ok(surface.clone());
    }
    let mut centers = Vec::with_capacity(cover.balls.len() * n);
    for b in &cover.balls {
        check_dim(n, b.center.len(), "cover centre")?;
        centers.extend_from_slice(&b.center);
    }
    let tree = KdTree::new(&centers, n);
    let reach = blend * cover.balls.iter().map(|b| b.radius).fold(0.0, f64::max);

    let moved = par::map_range(surface.node_count(), |idx| -> Result<Option<Vec<f64>>> {
        let base = surface.base_point(idx);
        let chi = cutoff(linalg::norm(&base), eps);
        if chi == 0.0 {
            return Ok(None);
        }
        let x = surface.position(idx);
        let mut weights = Vec::new();
        for i in tree.within(x, reach) {
            let b = &cover.balls[i];
            let w = bump(linalg::dist_sq(x, &b.center), blend * b.radius);
            if w > 0.0 {
                weights.push((i, w));
            }
        }
        if weights.is_empty() {
            return Ok(None);
        }
        if let Some(frame) = surface.node_frame(idx) {
            for &(i, _) in &weights {
                let d = grassmann_frames(&frame, cover.balls[i].plane.frame(), n);
                if d > 0.5 {
                    return Err(Error::GluePrecondition {
                        ball: i,
                        center: cover.balls[i].center.clone(),
                        distance: d,
                    });
                }
            }
        }
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        let mut shift = vec![0.0; n];
        for &(i, w) in &weights {
            let proj = cover.balls[i].plane.project(x)?;
            for j in 0..n {
                shift[j] += w / total * (proj[j] - x[j]);
            }
        }
        let mut out = x.to_vec();
        linalg::axpy(chi, &shift, &mut out);
        Ok(Some(out))
    });
    let mut positions = surface.positions().to_vec();
    for (idx, m) in moved.into_iter().enumerate() {
        if let Some(p) = m? {
            positions[idx * n..(idx + 1) * n].copy_from_slice(&p);
        }
    }
    surface.with_positions(positions)
}

/// A surface of the family at a dyadic level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub a: u32,
    pub r: f64,
    pub cover_balls: usize,
    pub surface: ParamSurface,
}

/// Per-level property measurements. Ratios divide by `δ` (and P3 by `r`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelReport {
    pub a: u32,
    pub r: f64,
    pub cover_balls: usize,
    /// `d_H(S_r ∩ B_1, S ∩ B_1) / r`.
    #[serde(with = "crate::serde_float::float")]
    pub hausdorff_over_r: f64,
    /// Largest Grassmann distance between a cell frame in `B_1` and a cover
    /// plane centred within `r` of the cell.
    pub grassmann_drift: f64,
    /// `sup |F_a − F_{a−1}| / (r_{a−1} − r_a)`; absent at level 0.
    pub velocity: Option<f64>,
    #[serde(with = "crate::serde_float::float")]
    pub p3_ratio: f64,
    pub p4_ratio: f64,
    pub p5_ratio: Option<f64>,
    /// Smallest `Ω₀` value on a cell frame in `B_1`.
    #[serde(with = "crate::serde_float::float")]
    pub min_omega0: f64,
    /// Fraction of cells in `B_1` with `Ω₀[frame] > ε/2`.
    pub positive_fraction: f64,
    /// Nodes whose image lies outside `B_{1+ε}` equal the base embedding.
    pub outside_exact: bool,
    /// Cells where cover planes near the same point disagree by more than
    /// `2δ` in Grassmann distance.
    pub plane_spread_flags: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyReport {
    pub epsilon: f64,
    pub delta: f64,
    pub grid_spacing: f64,
    pub grid_nodes: usize,
    pub levels: Vec<LevelReport>,
    /// Largest ratio over all levels and properties: the fitted `C`.
    #[serde(with = "crate::serde_float::float")]
    pub fitted_constant: f64,
    /// `max / min` of each property ratio over the levels where it exceeds
    /// [`RATIO_FLOOR`] (P3, P4, P5); 1 when no level does.
    #[serde(with = "crate::serde_float::floats")]
    pub ratio_spread: [f64; 3],
    pub outside_exact: bool,
    pub positivity_everywhere: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

/// Levels `0..=A` of the family plus the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub config: BuildConfig,
    pub levels: Vec<Level>,
    /// Cover planes per level (empty at level 0).
    #[serde(skip)]
    pub covers: Vec<VitaliCover>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

impl Family {
    pub fn base_plane(&self) -> &OrientedPlane {
        self.levels[0].surface.base_plane()
    }

    pub fn finest(&self) -> &Level {
        self.levels.last().expect("family has a base level")
    }

    /// Linear interpolation of positions between the bracketing levels.
    pub fn surface_at(&self, r: f64) -> Result<ParamSurface> {
        let first = &self.levels[0];
        if r >= first.r {
            return Ok(first.surface.clone());
        }
        for w in self.levels.windows(2) {
            let (hi, lo) = (&w[0], &w[1]);
            if r >= lo.r {
                let t = (hi.r - r) / (hi.r - lo.r);
                let pos: Vec<f64> = hi
                    .surface
                    .positions()
                    .iter()
                    .zip(lo.surface.positions())
                    .map(|(a, b)| a + t * (b - a))
                    .collect();
                return hi.surface.with_positions(pos);
            }
        }
        Err(Error::InvalidParameter(format!(
            "scale {r} is below the finest built level {}",
            self.finest().r
        )))
    }
}

/// Builds `S_{r_a}` for `a = 0..=A`. Level 0 is the θ plane of
/// `B_{1+ε}(0)`; each later level glues the previous one onto the planes of
/// its own Vitali cover. A failed level stops the construction and is
/// recorded in `aborted`; the levels built so far are returned.
pub fn build_family(cloud: &PointCloud, field: &CalibrationField, config: &BuildConfig) -> Result<Family> {
    let (n, k) = (cloud.n(), cloud.k());
    let form = field.constant_part();
    check_dim(n, form.n(), "calibration ambient dimension")?;
    check_dim(k, form.k(), "calibration degree")?;
    if !(config.epsilon > 0.0) || !(config.blend >= 1.0) || !(config.grid_fraction > 0.0) {
        return Err(Error::InvalidParameter(
            "build needs ε > 0, blend ≥ 1 and a positive grid fraction".into(),
        ));
    }
    let outer = Ball::new(vec![0.0; n], 1.0 + config.epsilon)?;
    let base_plane = match best_fit_plane(cloud, &outer, k, FitMode::Symmetric, Some(form)) {
        Ok((p, _)) => p,
        Err(Error::DegenerateFit { fallback, .. }) => *fallback,
        Err(e) => return Err(e),
    };
    let spacing = config.grid_spacing(k);
    let base = ParamSurface::flat(base_plane, 1.0 + 2.0 * config.epsilon, spacing)?;
    let mut family = Family {
        config: *config,
        levels: vec![Level {
            a: 0,
            r: config.scale(0),
            cover_balls: 0,
            surface: base,
        }],
        covers: vec![VitaliCover {
            scale: ScaleFunction::new(config.epsilon, config.epsilon)?,
            balls: Vec::new(),
        }],
        aborted: None,
    };
    for a in 1..=config.levels {
        let r = config.scale(a);
        let step = ScaleFunction::new(r, config.epsilon)
            .and_then(|s| vitali_cover(cloud, &s, Some(form)))
            .and_then(|cover| {
                let prev = &family.levels.last().unwrap().surface;
                glue_step(prev, &cover, config.blend).map(|s| (cover, s))
            });
        match step {
            Ok((cover, surface)) => {
                family.levels.push(Level {
                    a,
                    r,
                    cover_balls: cover.balls.len(),
                    surface,
                });
                family.covers.push(cover);
            }
            Err(e) => {
                family.aborted = Some(format!("level {a} (r = {r}): {e}"));
                break;
            }
        }
    }
    Ok(family)
}

/// Property ratios below this are treated as zero when comparing levels.
pub const RATIO_FLOOR: f64 = 1e-3;

/// Measures the closeness (P3), tangent drift (P4) and velocity (P5)
/// ratios and orientation positivity at every level.
pub fn check_properties(family: &Family, cloud: &PointCloud, field: &CalibrationField, delta: f64) -> Result<FamilyReport> {
    let n = cloud.n();
    let eps = family.config.epsilon;
    let unit = Ball::new(vec![0.0; n], 1.0)?;
    let outer = Ball::new(vec![0.0; n], 1.0 + eps)?;
    let cloud_in: Vec<f64> = {
        let mut v = Vec::new();
        for i in cloud.in_ball(&unit) {
            v.extend_from_slice(cloud.point(i));
        }
        v
    };
    let form = field.constant_part();
    let base_surface = &family.levels[0].surface;
    let mut levels = Vec::new();
    for (li, level) in family.levels.iter().enumerate() {
        let s = &level.surface;
        let pts = s.active_points(Some(&unit));
        let d_h = if pts.is_empty() || cloud_in.is_empty() {
            f64::INFINITY
        } else {
            hausdorff_distance(Shape::Points(&pts, n), Shape::Points(&cloud_in, n))?
        };

        // cell frames in B_1 against nearby cover planes
        let cover = &family.covers[li];
        let tree = (!cover.balls.is_empty()).then(|| {
            let c: Vec<f64> = cover.balls.iter().flat_map(|b| b.center.iter().copied()).collect();
            KdTree::new(&c, n)
        });
        let per_cell = par::map_range(s.cell_count(), |cell| {
            let corners = s.cell_corners(cell);
            if !s.cell_active(&corners) {
                return None;
            }
            let center = s.cell_center(&corners);
            if !unit.contains(&center) {
                return None;
            }
            let frame = s.cell_frame(&corners)?;
            let omega = form.evaluate_frame_unchecked(&frame);
            let mut drift: f64 = 0.0;
            let mut spread = false;
            match &tree {
                None => {
                    drift = grassmann_frames(&frame, base_surface.base_plane().frame(), n);
                }
                Some(t) => {
                    let mut near = t.within(&center, level.r);
                    if near.is_empty() {
                        near = t.nearest(&center).map(|(i, _)| vec![i]).unwrap_or_default();
                    }
                    let mut lo = f64::INFINITY;
                    let mut hi: f64 = 0.0;
                    for i in near {
                        let d = grassmann_frames(&frame, cover.balls[i].plane.frame(), n);
                        drift = drift.max(d);
                        lo = lo.min(d);
                        hi = hi.max(d);
                    }
                    spread = hi - lo > 2.0 * delta;
                }
            }
            Some((omega, drift, spread))
        });
        let mut min_omega = f64::INFINITY;
        let mut drift: f64 = 0.0;
        let (mut cells, mut positive, mut flags) = (0usize, 0usize, 0usize);
        for (omega, d, spread) in per_cell.into_iter().flatten() {
            cells += 1;
            min_omega = min_omega.min(omega);
            drift = drift.max(d);
            if omega > eps / 2.0 {
                positive += 1;
            }
            if spread {
                flags += 1;
            }
        }

        let velocity = (li > 0).then(|| {
            let prev = &family.levels[li - 1];
            let sup = s
                .positions()
                .chunks_exact(n)
                .zip(prev.surface.positions().chunks_exact(n))
                .map(|(a, b)| linalg::dist(a, b))
                .fold(0.0, f64::max);
            sup / (prev.r - level.r)
        });

        let outside_exact = (0..s.node_count()).all(|idx| {
            let p = s.position(idx);
            outer.contains(p) || p == base_surface.position(idx)
        });

        levels.push(LevelReport {
            a: level.a,
            r: level.r,
            cover_balls: level.cover_balls,
            hausdorff_over_r: d_h / level.r,
            grassmann_drift: drift,
            velocity,
            p3_ratio: d_h / (delta * level.r),
            p4_ratio: drift / delta,
            p5_ratio: velocity.map(|v| v / delta),
            min_omega0: min_omega,
            positive_fraction: if cells == 0 { 0.0 } else { positive as f64 / cells as f64 },
            outside_exact,
            plane_spread_flags: flags,
        });
    }
    // ratios under RATIO_FLOOR are rounding noise and would make the spread meaningless
    let spread_of = |vals: Vec<f64>| -> f64 {
        let pos: Vec<f64> = vals.into_iter().filter(|v| *v > RATIO_FLOOR && v.is_finite()).collect();
        if pos.is_empty() {
            return 1.0;
        }
        let hi = pos.iter().copied().fold(0.0, f64::max);
        let lo = pos.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    };
    let fitted = levels
        .iter()
        .flat_map(|l| [l.p3_ratio, l.p4_ratio, l.p5_ratio.unwrap_or(0.0)])
        .fold(0.0, f64::max);
    Ok(FamilyReport {
        epsilon: eps,
        delta,
        grid_spacing: base_surface.spacing(),
        grid_nodes: base_surface.node_count(),
        fitted_constant: fitted,
        ratio_spread: [
            spread_of(levels.iter().map(|l| l.p3_ratio).collect()),
            spread_of(levels.iter().map(|l| l.p4_ratio).collect()),
            spread_of(levels.iter().filter_map(|l| l.p5_ratio).collect()),
        ],
        outside_exact: levels.iter().all(|l| l.outside_exact),
        positivity_everywhere: levels.iter().all(|l| l.positive_fraction == 1.0),
        levels,
        aborted: family.aborted.clone(),
    })
}

/// Surface points closer together than `g/10` that are not grid
/// neighbours (an injectivity proxy). Quadratic in the node count within
/// each query radius; meant for diagnostics.
pub fn injectivity_violations(surface: &ParamSurface) -> usize {
    let n = surface.n();
    let pts = surface.positions();
    let tree = KdTree::new(pts, n);
    let tol = surface.spacing() / 10.0;
    let mut bad = 0;
    for idx in 0..surface.node_count() {
        if !surface.is_active(idx) {
            continue;
        }
        let di = surface.digits(idx);
        for j in tree.within(surface.position(idx), tol) {
            if j <= idx || !surface.is_active(j) {
                continue;
            }
            let dj = surface.digits(j);
            let adjacent = di.iter().zip(&dj).all(|(a, b)| a.abs_diff(*b) <= 1);
            if !adjacent {
                bad += 1;
            }
        }
    }
    bad
}

/// `sup` over nodes of `|F − base|`.
pub fn max_displacement(surface: &ParamSurface) -> f64 {
    (0..surface.node_count())
        .map(|i| linalg::dist(surface.position(i), &surface.base_point(i)))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::ConstantKForm;
    use crate::generators::{generate, GeneratorKind, GeneratorSpec, GraphFunction};

    fn graph_cloud(function: GraphFunction, h: f64, radius: f64) -> PointCloud {
        generate(&GeneratorSpec {
            kind: GeneratorKind::Graph { n: 3, k: 2, function },
            h,
            radius,
        })
        .unwrap()
        .cloud
    }

    fn volume_field() -> CalibrationField {
        CalibrationField::constant(ConstantKForm::coordinate_volume(3, 2).unwrap())
    }

    #[test]
    fn scale_function_plateaus() {
        let s = ScaleFunction::new(0.1, 0.5).unwrap();
        assert_eq!(s.at(0.3), 0.1);
        assert_eq!(s.at(1.0), 0.1);
        assert_eq!(s.at(1.5), 0.5);
        assert_eq!(s.at(7.0), 0.5);
        assert!((s.at(1.25) - 0.3).abs() < 1e-15);
        assert!(ScaleFunction::new(0.6, 0.5).is_err());
    }

    #[test]
    fn cover_of_plane_is_vitali() {
        let cloud = graph_cloud(GraphFunction::Zero, 0.035, 1.8);
        let scale = ScaleFunction::new(0.4, 0.5).unwrap();
        let cover = vitali_cover(&cloud, &scale, None).unwrap();
        assert!(cover.fifth_balls_disjoint());
        let region = Ball::new(vec![0.0; 3], 1.5).unwrap();
        assert!(cover.uncovered(&cloud, &region).is_empty());
        let x = [0.1, 0.2, 0.0];
        let w = cover.partition_weights(&x, 2.0);
        assert!((w.iter().map(|(_, w)| w).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_point_cover() {
        let cloud = PointCloud::new(vec![0.0, 0.0, 0.0], 3, 2).unwrap();
        let scale = ScaleFunction::new(0.1, 0.5).unwrap();
        let cover = vitali_cover(&cloud, &scale, None).unwrap();
        assert_eq!(cover.balls.len(), 1);
    }

    #[test]
    fn coarse_cloud_refused() {
        let cloud = graph_cloud(GraphFunction::Zero, 0.1, 1.8);
        let scale = ScaleFunction::new(0.2, 0.5).unwrap();
        assert!(matches!(vitali_cover(&cloud, &scale, None), Err(Error::ResolutionTooCoarse { .. })));
    }

    #[test]
    fn plane_family_is_static() {
        let cloud = graph_cloud(GraphFunction::Zero, 0.035, 2.0);
        let config = BuildConfig {
            epsilon: 0.8,
            levels: 1,
            max_nodes: 1 << 12,
            ..Default::default()
        };
        let family = build_family(&cloud, &volume_field(), &config).unwrap();
        assert!(family.aborted.is_none(), "{:?}", family.aborted);
        let base = &family.levels[0].surface;
        for level in &family.levels {
            for (a, b) in level.surface.positions().iter().zip(base.positions()) {
                assert!((a - b).abs() < 1e-5, "{a} vs {b}");
            }
        }
        let report = check_properties(&family, &cloud, &volume_field(), 0.05).unwrap();
        assert!(report.outside_exact);
        assert!(report.positivity_everywhere);
        assert!(report.levels.iter().all(|l| l.grassmann_drift < 1e-5), "{:?}", report.levels);
    }

    #[test]
    fn tilted_plane_single_ball() {
        // base grid on the x1x2-plane, one ball carrying a plane tilted by φ
        let phi: f64 = 0.1;
        let base = OrientedPlane::coordinate(3, &[0, 1], vec![0.0; 3]).unwrap();
        let surface = ParamSurface::flat(base, 1.4, 0.05).unwrap();
        let tilted = OrientedPlane::new(vec![0.0; 3], vec![phi.cos(), 0.0, phi.sin(), 0.0, 1.0, 0.0]).unwrap();
        let cover = VitaliCover {
            scale: ScaleFunction::new(0.8, 0.8).unwrap(),
            balls: vec![CoverBall {
                index: 0,
                center: vec![0.0; 3],
                radius: 10.0,
                plane: tilted.clone(),
                theta: 0.0,
            }],
        };
        let glued = glue_step(&surface, &cover, 2.0).unwrap();
        for idx in 0..glued.node_count() {
            let b = glued.base_point(idx);
            if linalg::norm(&b) <= 1.0 {
                let p = glued.position(idx);
                let want = tilted.project(&b).unwrap();
                // only the single ball is active, so the weight is exactly one
                assert!(linalg::dist(p, &want) < 1e-12);
                assert!(tilted.distance(p) < 1e-12);
            } else if linalg::norm(&b) >= 1.4 {
                assert_eq!(glued.position(idx), surface.position(idx));
            }
        }
    }

    #[test]
    fn quadrature_weights_sum_to_cell_volume() {
        for k in 1..=4 {
            let n = k + 1;
            let axes: Vec<usize> = (0..k).collect();
            let base = OrientedPlane::coordinate(n, &axes, vec![0.0; n]).unwrap();
            let s = ParamSurface::flat(base, 0.2, 0.1).unwrap();
            let total: f64 = s.quadrature().iter().map(|(_, w)| w).sum();
            assert!((total - 0.1f64.powi(k as i32)).abs() < 1e-15);
        }
    }
}
