//! Multiscale flatness (θ, β∞) and positivity profiles, and the Reifenberg
//! hypothesis certificate built from them.
use crate::error::{check_dim, Error, Result};
use crate::forms::{CalibrationField, OrientedPlane};
use crate::geometry::{best_fit_plane, fit_planes, orient_plane, plane_objectives, Ball, FitMode, PointCloud};
use crate::linalg;
use crate::par;
use crate::prelude::*;
use serde::{Deserialize, Serialize};

/// Constant-part evaluations closer to zero than this leave the orientation
/// undetermined.
pub const ORIENTATION_TIE: f64 = 1e-9;

/// Flatness data for one ball `B_r(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatnessRecord {
    pub x: Vec<f64>,
    pub r: f64,
    /// `d_H(S∩B, L∩B) / r` for the fitted plane `L`.
    pub theta: f64,
    /// `sup_{y ∈ S∩B} d(y, L') / r` for the one-sided plane `L'`.
    pub beta_inf: f64,
    /// The θ plane, oriented so the constant calibration part is nonnegative.
    pub plane: OrientedPlane,
    /// `Ω(x)[L]` for the chosen orientation; on an orientation tie, the
    /// smaller of the two signed values.
    pub omega_value: f64,
    pub points: usize,
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub orientation_ambiguous: bool,
    /// Both signed values when the orientation is ambiguous.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_both: Option<[f64; 2]>,
    /// Fewer than `k + 1` points: the values belong to the PCA fallback plane.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub degenerate: bool,
}

/// `θ(x, r)` with its plane.
pub fn theta(cloud: &PointCloud, x: &[f64], r: f64) -> Result<(f64, OrientedPlane)> {
    let ball = Ball::new(x.to_vec(), r)?;
    let (plane, obj) = best_fit_plane(cloud, &ball, cloud.k(), FitMode::Symmetric, None)?;
    Ok((obj / r, plane))
}

/// `β∞(x, r)`.
pub fn beta_inf(cloud: &PointCloud, x: &[f64], r: f64) -> Result<f64> {
    let ball = Ball::new(x.to_vec(), r)?;
    let (_, obj) = best_fit_plane(cloud, &ball, cloud.k(), FitMode::OneSided, None)?;
    Ok(obj / r)
}

/// `Ω(x)` on the θ plane, oriented so that the constant part is nonnegative.
pub fn positivity(cloud: &PointCloud, x: &[f64], r: f64, field: &CalibrationField) -> Result<f64> {
    Ok(flatness_record(cloud, x, r, field)?.omega_value)
}

/// Computes θ, β∞ and the calibration value for one ball. Degenerate balls
/// yield a record flagged `degenerate` whose values are those of the PCA
/// fallback plane.
pub fn flatness_record(cloud: &PointCloud, x: &[f64], r: f64, field: &CalibrationField) -> Result<FlatnessRecord> {
    let form = field.constant_part();
    check_dim(cloud.n(), form.n(), "calibration ambient dimension")?;
    check_dim(cloud.k(), form.k(), "calibration degree")?;
    check_dim(cloud.n(), x.len(), "ball centre")?;
    let ball = Ball::new(x.to_vec(), r)?;
    let (plane, theta_obj, beta_obj, points, degenerate) = match fit_planes(cloud, &ball, cloud.k(), Some(form)) {
        Ok(f) => (f.theta_plane, f.theta_objective, f.beta_objective, f.points_in_ball, false),
        Err(Error::DegenerateFit { points, fallback, .. }) => {
            let plane = orient_plane(*fallback, Some(form));
            let (one, sym) = plane_objectives(cloud, &ball, &plane)?;
            (plane, sym, one.min(sym), points, true)
        }
        Err(e) => return Err(e),
    };
    let constant_value = form.evaluate(&plane)?;
    let value = field.evaluate_at(x, &plane)?;
    let (omega_value, ambiguous, both) = if constant_value.abs() <= ORIENTATION_TIE {
        let other = field.evaluate_at(x, &plane.flipped())?;
        (value.min(other), true, Some([value, other]))
    } else {
        (value, false, None)
    };
    Ok(FlatnessRecord {
        x: x.to_vec(),
        r,
        theta: theta_obj / r,
        beta_inf: beta_obj / r,
        plane,
        omega_value,
        points,
        orientation_ambiguous: ambiguous,
        omega_both: both,
        degenerate,
    })
}

/// Dyadic Riemann sum of the Dini integral at one centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiniSum {
    pub value: f64,
    /// Exponents `j` that entered the sum.
    pub exponents: Vec<u32>,
    /// First exponent dropped because `2^{-j} < 4h`.
    pub truncated_at: Option<u32>,
}

/// `Σ_j θ(x, 2^{-j})² · ln 2` over `j = 0..=j_max`, stopping at the
/// resolution floor `4h`.
pub fn dini_sum(cloud: &PointCloud, x: &[f64], j_max: u32) -> Result<DiniSum> {
    dini_sum_range(cloud, x, 0, j_max)
}

pub fn dini_sum_range(cloud: &PointCloud, x: &[f64], j_min: u32, j_max: u32) -> Result<DiniSum> {
    let floor = resolution_floor(cloud);
    let mut out = DiniSum {
        value: 0.0,
        exponents: Vec::new(),
        truncated_at: None,
    };
    for j in j_min..=j_max {
        let r = dyadic(j);
        if r < floor {
            out.truncated_at = Some(j);
            break;
        }
        let (t, _) = theta(cloud, x, r)?;
        out.value += t * t * core::f64::consts::LN_2;
        out.exponents.push(j);
    }
    Ok(out)
}

/// `2^{-j}`.
pub fn dyadic(j: u32) -> f64 {
    (0..j).fold(1.0, |r, _| r * 0.5)
}

/// Smallest admissible scale, `4h`.
pub fn resolution_floor(cloud: &PointCloud) -> f64 {
    4.0 * cloud.resolution()
}

/// Dyadic scales `2^{-j}` for `j_min ≤ j ≤ j_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalePolicy {
    pub j_min: u32,
    pub j_max: u32,
}

impl Default for ScalePolicy {
    fn default() -> Self {
        ScalePolicy { j_min: 0, j_max: 4 }
    }
}

/// Where ball centres are placed.
///
/// Centres at scale `s` form a `net_factor · s` net of the cloud points
/// inside `region`; a ball is tested only if it lies inside `domain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetPolicy {
    pub domain: Ball,
    pub region: Ball,
    pub net_factor: f64,
}

impl NetPolicy {
    /// Domain `B_2(0)`, centres from `B_1(0)`, `s/2` nets.
    pub fn standard(n: usize) -> Self {
        NetPolicy {
            domain: Ball {
                center: vec![0.0; n],
                radius: 2.0,
            },
            region: Ball {
                center: vec![0.0; n],
                radius: 1.0,
            },
            net_factor: 0.5,
        }
    }
}

/// Per-scale aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSummary {
    pub j: u32,
    pub r: f64,
    pub centers: usize,
    #[serde(with = "crate::serde_float::float")]
    pub worst_theta: f64,
    #[serde(with = "crate::serde_float::float")]
    pub worst_beta: f64,
    #[serde(with = "crate::serde_float::float")]
    pub min_omega: f64,
}

/// A ball that violates the requested `(δ, α)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailingBall {
    pub x: Vec<f64>,
    pub r: f64,
    pub theta: f64,
    pub omega_value: f64,
    pub flat_fail: bool,
    pub positivity_fail: bool,
}

/// Outcome for a requested `(δ, α)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verdict {
    pub delta: f64,
    pub alpha: f64,
    pub passed: bool,
    pub failing: Vec<FailingBall>,
}

/// Multiscale evidence for the Reifenberg flatness and positivity hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReifenbergCertificate {
    pub n: usize,
    pub k: usize,
    pub resolution: f64,
    pub scale_exponents: Vec<u32>,
    pub scales: Vec<f64>,
    pub net: NetPolicy,
    /// Any ball of the theorem at a tested scale has its centre within
    /// `net_slack · r` of a tested centre; reported, not added to `delta_star`.
    pub net_slack: f64,
    #[serde(with = "crate::serde_float::float")]
    pub delta_star: f64,
    #[serde(with = "crate::serde_float::float")]
    pub alpha_star: f64,
    #[serde(with = "crate::serde_float::float")]
    pub dini_max: f64,
    pub degenerate_balls: usize,
    pub ambiguous_orientations: usize,
    pub per_scale: Vec<ScaleSummary>,
    pub records: Vec<FlatnessRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

impl ReifenbergCertificate {
    /// `delta_star < δ` and `alpha_star > α`.
    pub fn passes(&self, delta: f64, alpha: f64) -> bool {
        self.delta_star < delta && self.alpha_star > alpha
    }

    /// Evaluates and stores the verdict for `(δ, α)`, listing failing balls.
    pub fn judge(&mut self, delta: f64, alpha: f64) -> bool {
        let failing = self
            .records
            .iter()
            .filter(|r| !(r.theta < delta) || !(r.omega_value > alpha))
            .map(|r| FailingBall {
                x: r.x.clone(),
                r: r.r,
                theta: r.theta,
                omega_value: r.omega_value,
                flat_fail: !(r.theta < delta),
                positivity_fail: !(r.omega_value > alpha),
            })
            .collect();
        let passed = self.passes(delta, alpha);
        self.verdict = Some(Verdict {
            delta,
            alpha,
            passed,
            failing,
        });
        passed
    }

    /// Largest scale at which some ball fails `(δ, α)`.
    pub fn coarsest_failure(&self, delta: f64, alpha: f64) -> Option<f64> {
        self.records
            .iter()
            .filter(|r| !(r.theta < delta) || !(r.omega_value > alpha))
            .map(|r| r.r)
            .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
    }
}

/// Greedy net: points of `candidates` (in index order) are accepted unless
/// an earlier accepted point lies within `spacing`.
pub fn greedy_net(cloud: &PointCloud, candidates: &[usize], spacing: f64) -> Vec<usize> {
    let mut suppressed = vec![false; cloud.len()];
    let mut out = Vec::new();
    for &i in candidates {
        if suppressed[i] {
            continue;
        }
        out.push(i);
        for j in cloud.index().within(cloud.point(i), spacing) {
            suppressed[j] = true;
        }
    }
    out
}

/// Profiles the cloud at every dyadic scale of `scales` and aggregates the
/// worst flatness, worst positivity and the largest Dini sum over the
/// coarsest-scale centres.
///
/// Refuses when the finest scale is below `4h`.
pub fn certify(
    cloud: &PointCloud,
    k: usize,
    field: &CalibrationField,
    scales: ScalePolicy,
    net: &NetPolicy,
) -> Result<ReifenbergCertificate> {
    check_dim(cloud.k(), k, "intrinsic dimension")?;
    check_dim(cloud.n(), net.domain.center.len(), "domain centre")?;
    check_dim(cloud.n(), net.region.center.len(), "region centre")?;
    if scales.j_min > scales.j_max {
        return Err(Error::InvalidParameter(format!(
            "scale range j_min = {} exceeds j_max = {}",
            scales.j_min, scales.j_max
        )));
    }
    if !(net.net_factor > 0.0) {
        return Err(Error::InvalidParameter("net factor must be positive".into()));
    }
    let floor = resolution_floor(cloud);
    let finest = dyadic(scales.j_max);
    if finest < floor {
        return Err(Error::ResolutionTooCoarse {
            scale: finest,
            floor,
            resolution: cloud.resolution(),
        });
    }
    let region_pts = cloud.in_ball(&net.region);
    if region_pts.is_empty() {
        return Err(Error::EmptySet);
    }

    let exponents: Vec<u32> = (scales.j_min..=scales.j_max).collect();
    let mut jobs: Vec<(u32, Vec<f64>)> = Vec::new();
    let mut centers_per_scale = Vec::new();
    let mut coarse_centers: Vec<Vec<f64>> = Vec::new();
    for &j in &exponents {
        let r = dyadic(j);
        let net_idx = greedy_net(cloud, &region_pts, net.net_factor * r);
        let mut count = 0;
        for i in net_idx {
            let x = cloud.point(i);
            if linalg::dist(x, &net.domain.center) + r <= net.domain.radius {
                jobs.push((j, x.to_vec()));
                if j == scales.j_min {
                    coarse_centers.push(x.to_vec());
                }
                count += 1;
            }
        }
        centers_per_scale.push(count);
    }

    let results = par::map(&jobs, |(j, x)| flatness_record(cloud, x, dyadic(*j), field));
    let mut records = Vec::with_capacity(results.len());
    for r in results {
        records.push(r?);
    }

    let mut per_scale = Vec::new();
    let mut cursor = 0;
    for (&j, &count) in exponents.iter().zip(&centers_per_scale) {
        let slice = &records[cursor..cursor + count];
        cursor += count;
        per_scale.push(ScaleSummary {
            j,
            r: dyadic(j),
            centers: count,
            worst_theta: slice.iter().map(|r| r.theta).fold(0.0, f64::max),
            worst_beta: slice.iter().map(|r| r.beta_inf).fold(0.0, f64::max),
            min_omega: slice.iter().map(|r| r.omega_value).fold(f64::INFINITY, f64::min),
        });
    }

    // coarse balls lie in the domain, so the finer ones about the same centres do too
    let dini: Vec<Result<DiniSum>> = par::map(&coarse_centers, |x| dini_sum_range(cloud, x, scales.j_min, scales.j_max));
    let mut dini_max: f64 = 0.0;
    for d in dini {
        dini_max = dini_max.max(d?.value);
    }

    let delta_star = records.iter().map(|r| r.theta).fold(0.0, f64::max);
    let alpha_star = records.iter().map(|r| r.omega_value).fold(f64::INFINITY, f64::min);
    Ok(ReifenbergCertificate {
        n: cloud.n(),
        k,
        resolution: cloud.resolution(),
        scales: exponents.iter().map(|&j| dyadic(j)).collect(),
        scale_exponents: exponents,
        net: net.clone(),
        net_slack: net.net_factor,
        delta_star,
        alpha_star,
        dini_max,
        degenerate_balls: records.iter().filter(|r| r.degenerate).count(),
        ambiguous_orientations: records.iter().filter(|r| r.orientation_ambiguous).count(),
        per_scale,
        records,
        verdict: None,
    })
}
