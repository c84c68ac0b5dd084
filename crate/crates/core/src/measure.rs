//! Measures and calibration integrals on the surface family: k-volume,
//! pullback integrals of constant forms, the Ahlfors-type bounds, and the
//! projection covering test behind the lower bound.
use crate::builder::{build_family, BuildConfig, Family, ParamSurface};
use crate::error::{check_dim, Error, Result};
use crate::forms::{CalibrationField, ConstantKForm, OrientedPlane};
use crate::geometry::{Ball, PointCloud};
use crate::linalg::{self, det};
use crate::par;
use crate::prelude::*;
use alloc::collections::BTreeSet;
use serde::{Deserialize, Serialize};

/// Minimum number of grid cells across a ball for the quadratures.
pub const MIN_CELLS_ACROSS: usize = 8;

/// Volume of the unit k-ball, `π^{k/2} / Γ(k/2 + 1)`.
pub fn omega_k(k: usize) -> f64 {
    crate::generators::unit_ball_volume(k)
}

fn check_resolved(surface: &ParamSurface, ball: &Ball) -> Result<()> {
    check_dim(surface.n(), ball.center.len(), "ball centre")?;
    let cells = (2.0 * ball.radius / surface.spacing()).floor() as usize;
    if cells < MIN_CELLS_ACROSS {
        return Err(Error::UnderResolved {
            cells,
            needed: MIN_CELLS_ACROSS,
        });
    }
    Ok(())
}

/// `Σ_cells fraction · Σ_q w_q · density(J(q))` in cell index order. The
/// fraction is the share of the cell's vertices inside `ball`.
fn cell_integral<F>(surface: &ParamSurface, ball: &Ball, density: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    check_resolved(surface, ball)?;
    let quad = surface.quadrature();
    let parts = par::map_range(surface.cell_count(), |cell| {
        let corners = surface.cell_corners(cell);
        if !surface.cell_active(&corners) {
            return 0.0;
        }
        let inside = corners.iter().filter(|&&c| ball.contains(surface.position(c))).count();
        if inside == 0 {
            return 0.0;
        }
        let frac = inside as f64 / corners.len() as f64;
        let mut sum = 0.0;
        for (s, w) in &quad {
            sum += w * density(&surface.cell_jacobian(&corners, s));
        }
        frac * sum
    });
    Ok(parts.into_iter().sum())
}

fn gram_volume(jac: &[f64], n: usize, k: usize) -> f64 {
    let mut g = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let v = linalg::dot(&jac[i * n..(i + 1) * n], &jac[j * n..(j + 1) * n]);
            g[i * k + j] = v;
            g[j * k + i] = v;
        }
    }
    det(&g, k).max(0.0).sqrt()
}

/// k-dimensional measure of the surface inside `ball`.
pub fn hausdorff_measure(surface: &ParamSurface, ball: &Ball) -> Result<f64> {
    let (n, k) = (surface.n(), surface.k());
    cell_integral(surface, ball, |j| gram_volume(j, n, k))
}

/// `∫ form` over the surface inside `ball` (the discrete pullback).
pub fn integrate_form(surface: &ParamSurface, form: &ConstantKForm, ball: &Ball) -> Result<f64> {
    check_dim(surface.n(), form.n(), "form ambient dimension")?;
    check_dim(surface.k(), form.k(), "form degree")?;
    cell_integral(surface, ball, |j| form.evaluate_frame_unchecked(j))
}

/// The constants standing in for `C(n)` and `C(n, ε)` in the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundConstants {
    /// Lower bound `1 − c_delta · δ`; also sets the occupancy disk radius.
    pub c_delta: f64,
    /// Upper bound `(1 + c_epsilon · ε) / (α − 3ε/2)`.
    pub c_epsilon: f64,
    /// Relative tolerance on the level-to-level change of `∫ Ω₀`.
    pub integral_tolerance: f64,
    /// Relative spread allowed among the finest three measures.
    pub agreement_tolerance: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        BoundConstants {
            c_delta: 10.0,
            c_epsilon: 10.0,
            integral_tolerance: 0.02,
            agreement_tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeReport {
    pub region: Ball,
    pub measure: f64,
    /// `measure / (ω_k r^k)`.
    #[serde(with = "crate::serde_float::float")]
    pub ahlfors_ratio: f64,
    /// `∫ Ω₀` over the surface in the enlarged ball `B_{(1+ε) r}`.
    pub calibration_integral: f64,
    #[serde(with = "crate::serde_float::floats")]
    pub bounds: [f64; 2],
    pub within_bounds: bool,
    /// Smallest `c_delta` that would make the lower bound hold.
    #[serde(with = "crate::serde_float::float")]
    pub required_c_delta: f64,
    /// Smallest `c_epsilon` that would make the upper bound hold.
    #[serde(with = "crate::serde_float::float")]
    pub required_c_epsilon: f64,
}

impl VolumeReport {
    #[allow(clippy::too_many_arguments)]
    fn new(
        region: Ball,
        measure: f64,
        calibration_integral: f64,
        k: usize,
        alpha: f64,
        epsilon: f64,
        delta: f64,
        constants: &BoundConstants,
    ) -> Self {
        let ratio = measure / (omega_k(k) * region.radius.powi(k as i32));
        let denom = alpha - 1.5 * epsilon;
        let bounds = [1.0 - constants.c_delta * delta, (1.0 + constants.c_epsilon * epsilon) / denom];
        VolumeReport {
            region,
            measure,
            ahlfors_ratio: ratio,
            calibration_integral,
            bounds,
            within_bounds: bounds[0] <= ratio && ratio <= bounds[1] && denom > 0.0,
            required_c_delta: ((1.0 - ratio) / delta).max(0.0),
            required_c_epsilon: ((ratio * denom - 1.0) / epsilon).max(0.0),
        }
    }

    /// Same report for the region and measures scaled by `s` about `center`.
    fn rescaled(&self, center: &[f64], s: f64, k: usize) -> Self {
        let sk = s.powi(k as i32);
        let mut out = self.clone();
        out.region = Ball {
            center: self.region.center.iter().zip(center).map(|(c, x)| x + s * c).collect(),
            radius: self.region.radius * s,
        };
        out.measure *= sk;
        out.calibration_integral *= sk;
        out
    }
}

/// Projection of the surface to its base plane covers a disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoveringCheck {
    pub radius: f64,
    pub cell_size: f64,
    pub cells: usize,
    pub occupied: usize,
    pub occupancy: f64,
    pub covered: bool,
    /// Centres of empty cells in base-plane coordinates.
    pub missing: Vec<Vec<f64>>,
}

/// Projects the active node images inside `B_1` onto `base` and checks that
/// every grid cell (side twice the surface spacing) lying inside the
/// base-plane disk of `radius` receives a point.
pub fn projection_covering_check(surface: &ParamSurface, base: &OrientedPlane, radius: f64) -> Result<CoveringCheck> {
    let (n, k) = (surface.n(), surface.k());
    check_dim(n, base.n(), "base plane ambient dimension")?;
    check_dim(k, base.k(), "base plane dimension")?;
    let size = 2.0 * surface.spacing();
    let unit = Ball::new(vec![0.0; n], 1.0)?;
    let mut hit: BTreeSet<Vec<i64>> = BTreeSet::new();
    for idx in 0..surface.node_count() {
        let p = surface.position(idx);
        if surface.is_active(idx) && unit.contains(p) {
            let u = base.tangent_coords(p);
            hit.insert(u.iter().map(|t| (t / size).floor() as i64).collect());
        }
    }
    let m = (radius / size).ceil() as i64 + 1;
    let mut cells = 0;
    let mut occupied = 0;
    let mut missing = Vec::new();
    let mut cell = vec![-m; k];
    loop {
        // a cell counts when its farthest corner is inside the disk
        let far: f64 = cell
            .iter()
            .map(|&c| {
                let lo = c as f64 * size;
                lo.abs().max((lo + size).abs()).powi(2)
            })
            .sum();
        if far.sqrt() <= radius {
            cells += 1;
            if hit.contains(&cell) {
                occupied += 1;
            } else {
                missing.push(cell.iter().map(|&c| (c as f64 + 0.5) * size).collect());
            }
        }
        let mut i = k;
        loop {
            if i == 0 {
                let occupancy = if cells == 0 { 1.0 } else { occupied as f64 / cells as f64 };
                return Ok(CoveringCheck {
                    radius,
                    cell_size: size,
                    cells,
                    occupied,
                    occupancy,
                    covered: occupied == cells,
                    missing,
                });
            }
            i -= 1;
            if cell[i] < m - 1 {
                cell[i] += 1;
                break;
            }
            cell[i] = -m;
        }
    }
}

/// Calibration bookkeeping for one level of the family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationLevel {
    pub a: u32,
    pub r: f64,
    /// `H^k(S_r ∩ B_1)` with the Ahlfors bounds.
    pub volume: VolumeReport,
    /// `∫ Ω₀` over `S_r ∩ B_{1+ε}`.
    pub outer_integral: f64,
    /// Smallest `Ω₀` on a unit cell frame in `B_{1+ε}`.
    #[serde(with = "crate::serde_float::float")]
    pub min_omega0: f64,
    /// `min_omega0 ≥ α − 3ε/2 − tolerance`.
    pub positivity_transfer: bool,
    /// `H^k(S_r ∩ B_1) ≤ (α − 3ε/2)⁻¹ ∫_{S_r ∩ B_{1+ε}} Ω₀`.
    pub upper_bound_holds: bool,
    pub covering: CoveringCheck,
}

/// Whether the finest levels agree on a measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureAgreement {
    pub measures: Vec<f64>,
    /// `(max − min) / max` over `measures`.
    #[serde(with = "crate::serde_float::float")]
    pub relative_spread: f64,
    pub agree: bool,
    /// Reported only when three levels exist and agree.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<f64>,
}

impl MeasureAgreement {
    pub fn of(levels: &[f64], tolerance: f64) -> Self {
        let take = levels.len().min(3);
        let measures = levels[levels.len() - take..].to_vec();
        let hi = measures.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = measures.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = if take == 0 || hi <= 0.0 { f64::INFINITY } else { (hi - lo) / hi };
        let agree = take == 3 && spread <= tolerance;
        MeasureAgreement {
            measure: agree.then(|| *measures.last().unwrap()),
            measures,
            relative_spread: spread,
            agree,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationReport {
    pub alpha: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub constants: BoundConstants,
    pub levels: Vec<CalibrationLevel>,
    /// `(max − min) / max |·|` of `∫ Ω₀` over the levels.
    #[serde(with = "crate::serde_float::float")]
    pub integral_variation: f64,
    pub integral_constant: bool,
    pub agreement: MeasureAgreement,
}

impl CalibrationReport {
    pub fn all_bounds_hold(&self) -> bool {
        self.integral_constant
            && self
                .levels
                .iter()
                .all(|l| l.volume.within_bounds && l.upper_bound_holds && l.covering.covered)
    }
}

/// Pointwise positivity on cell frames below this is treated as a pass
/// (grid tolerance).
const POSITIVITY_TOLERANCE: f64 = 1e-9;

/// Checks the calibration inequalities at every level of `family`.
pub fn calibration_bounds_check(
    family: &Family,
    field: &CalibrationField,
    alpha: f64,
    epsilon: f64,
    delta: f64,
    constants: &BoundConstants,
) -> Result<CalibrationReport> {
    let form = field.constant_part();
    let first = &family.levels[0].surface;
    let (n, k) = (first.n(), first.k());
    check_dim(n, form.n(), "calibration ambient dimension")?;
    let unit = Ball::new(vec![0.0; n], 1.0)?;
    let outer = Ball::new(vec![0.0; n], 1.0 + epsilon)?;
    let floor = alpha - 1.5 * epsilon;
    let mut levels = Vec::with_capacity(family.levels.len());
    for level in &family.levels {
        let s = &level.surface;
        let measure = hausdorff_measure(s, &unit)?;
        let outer_integral = integrate_form(s, form, &outer)?;
        let min_omega0 = par::map_range(s.cell_count(), |cell| {
            let corners = s.cell_corners(cell);
            if !s.cell_active(&corners) || !outer.contains(&s.cell_center(&corners)) {
                return f64::INFINITY;
            }
            s.cell_frame(&corners)
                .map_or(f64::NEG_INFINITY, |f| form.evaluate_frame_unchecked(&f))
        })
        .into_iter()
        .fold(f64::INFINITY, f64::min);
        let volume = VolumeReport::new(unit.clone(), measure, outer_integral, k, alpha, epsilon, delta, constants);
        let covering = projection_covering_check(s, first.base_plane(), 1.0 - constants.c_delta * delta)?;
        levels.push(CalibrationLevel {
            a: level.a,
            r: level.r,
            volume,
            outer_integral,
            min_omega0,
            positivity_transfer: min_omega0 >= floor - POSITIVITY_TOLERANCE,
            upper_bound_holds: floor > 0.0 && measure <= outer_integral / floor,
            covering,
        });
    }
    let ints: Vec<f64> = levels.iter().map(|l| l.outer_integral).collect();
    let hi = ints.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ints.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = ints.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let variation = if scale > 0.0 { (hi - lo) / scale } else { 0.0 };
    let measures: Vec<f64> = levels.iter().map(|l| l.volume.measure).collect();
    Ok(CalibrationReport {
        alpha,
        epsilon,
        delta,
        constants: *constants,
        integral_variation: variation,
        integral_constant: variation < constants.integral_tolerance,
        agreement: MeasureAgreement::of(&measures, constants.agreement_tolerance),
        levels,
    })
}

/// Result of running the construction inside a smaller ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizedReport {
    /// The analysed ball `B_{2s}(x)`.
    pub ball: Ball,
    pub scale: f64,
    /// Levels of the rescaled run, measured back in original units on
    /// `B_s(x)`.
    pub volumes: Vec<VolumeReport>,
    pub agreement: MeasureAgreement,
    /// Report of the rescaled run, in unit-ball coordinates.
    pub unit: CalibrationReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

/// Moves `cloud ∩ B_{2s}(x)` to `B_2(0)` by `p ↦ (p − x)/s`, builds the
/// family there and checks the calibration bounds, then scales measures
/// back by `s^k`. Only the constant part of `field` is used.
#[allow(clippy::too_many_arguments)]
pub fn localized_certify(
    cloud: &PointCloud,
    field: &CalibrationField,
    ball: &Ball,
    domain: &Ball,
    config: &BuildConfig,
    alpha: f64,
    delta: f64,
    constants: &BoundConstants,
) -> Result<LocalizedReport> {
    let n = cloud.n();
    check_dim(n, ball.center.len(), "ball centre")?;
    if !ball.inside(domain) {
        return Err(Error::BallEscapesDomain { radius: ball.radius });
    }
    let s = ball.radius / 2.0;
    let inside = cloud.in_ball(ball);
    let mut pts = Vec::with_capacity(inside.len() * n);
    for &i in &inside {
        pts.extend(cloud.point(i).iter().zip(&ball.center).map(|(p, x)| (p - x) / s));
    }
    let local = PointCloud::new(pts, n, cloud.k())?;
    let local_field = CalibrationField::constant(field.constant_part().clone());
    let family = build_family(&local, &local_field, config)?;
    let unit = calibration_bounds_check(&family, &local_field, alpha, config.epsilon, delta, constants)?;
    let k = cloud.k();
    let volumes: Vec<VolumeReport> = unit.levels.iter().map(|l| l.volume.rescaled(&ball.center, s, k)).collect();
    let measures: Vec<f64> = volumes.iter().map(|v| v.measure).collect();
    Ok(LocalizedReport {
        ball: ball.clone(),
        scale: s,
        agreement: MeasureAgreement::of(&measures, constants.agreement_tolerance),
        volumes,
        unit,
        aborted: family.aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn disk_surface(k: usize, spacing: f64) -> ParamSurface {
        let n = k + 1;
        let axes: Vec<usize> = (0..k).collect();
        let base = OrientedPlane::coordinate(n, &axes, vec![0.0; n]).unwrap();
        ParamSurface::flat(base, 1.2, spacing).unwrap()
    }

    #[test]
    fn omega_values() {
        let pi = core::f64::consts::PI;
        assert_eq!(omega_k(1), 2.0);
        assert_relative_eq!(omega_k(2), pi, max_relative = 1e-15);
        assert_relative_eq!(omega_k(3), 4.0 * pi / 3.0, max_relative = 1e-15);
        assert_relative_eq!(omega_k(4), pi * pi / 2.0, max_relative = 1e-15);
    }

    #[test]
    fn flat_disk_area() {
        let s = disk_surface(2, 0.01);
        let unit = Ball::new(vec![0.0; 3], 1.0).unwrap();
        let area = hausdorff_measure(&s, &unit).unwrap();
        assert_relative_eq!(area, core::f64::consts::PI, max_relative = 0.01);
        let vol = ConstantKForm::coordinate_volume(3, 2).unwrap();
        assert_relative_eq!(integrate_form(&s, &vol, &unit).unwrap(), area, max_relative = 1e-12);
    }

    #[test]
    fn under_resolved_refused() {
        let s = disk_surface(2, 0.1);
        let small = Ball::new(vec![0.0; 3], 0.3).unwrap();
        assert!(matches!(hausdorff_measure(&s, &small), Err(Error::UnderResolved { .. })));
    }

    #[test]
    fn linear_graph_area() {
        // graph of x3 = 0.3 x1 + 0.2 x2 over the unit disk
        let s = disk_surface(2, 0.005);
        let moved: Vec<f64> = s
            .positions()
            .chunks_exact(3)
            .flat_map(|p| [p[0], p[1], 0.3 * p[0] + 0.2 * p[1]])
            .collect();
        let g = s.with_positions(moved).unwrap();
        // measure over the cylinder above the unit disk, via a large ball and
        // the flat parameterisation: compare on the parameter disk instead
        let big = Ball::new(vec![0.0; 3], 10.0).unwrap();
        let total = hausdorff_measure(&g, &big).unwrap();
        let flat = hausdorff_measure(&s, &big).unwrap();
        let factor = (1.0f64 + 0.09 + 0.04).sqrt();
        assert_relative_eq!(total / flat, factor, max_relative = 1e-10);
    }

    #[test]
    fn covering_flat_and_holed() {
        let s = disk_surface(2, 0.02);
        let check = projection_covering_check(&s, s.base_plane(), 0.95).unwrap();
        assert!(check.covered);
        assert_eq!(check.occupancy, 1.0);
        let mut holed = s.clone();
        holed.punch_hole(&[0.0; 3], 0.2);
        let check = projection_covering_check(&holed, s.base_plane(), 0.95).unwrap();
        assert!(!check.covered);
        assert!(check.missing.iter().all(|c| linalg::norm(c) < 0.25));
    }

    #[test]
    fn agreement_needs_three_levels() {
        assert!(!MeasureAgreement::of(&[1.0, 1.0], 0.01).agree);
        let a = MeasureAgreement::of(&[5.0, 1.0, 1.001, 1.002], 0.01);
        assert!(a.agree);
        assert_eq!(a.measure, Some(1.002));
        assert!(!MeasureAgreement::of(&[1.0, 1.14, 1.3], 0.01).agree);
    }
}
