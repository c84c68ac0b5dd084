//! Documents emitted by the subcommands and the verdict each one carries.
use reifcal_core::builder::FamilyReport;
use reifcal_core::flatness::{FailingBall, ReifenbergCertificate, ScaleSummary};
use reifcal_core::generators::GeneratorMetadata;
use reifcal_core::measure::CalibrationReport;
use reifcal_core::serde_float;
use reifcal_core::ConstantKForm;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// The pass/fail bit that decides the exit status.
pub trait HasVerdict {
    fn verdict(&self) -> bool;
}

impl HasVerdict for ReifenbergCertificate {
    fn verdict(&self) -> bool {
        self.verdict.as_ref().is_some_and(|v| v.passed)
    }
}

impl HasVerdict for FamilyReport {
    fn verdict(&self) -> bool {
        self.aborted.is_none()
    }
}

impl HasVerdict for GeneratorMetadata {
    fn verdict(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComassReport {
    pub form: ConstantKForm,
    pub comass: f64,
    /// Maximising frame found, vector-major.
    pub frame: Vec<f64>,
    pub samples: usize,
    pub ascent_iters: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// `comass ≤ 1 + tolerance`.
    pub at_most_one: bool,
}

impl HasVerdict for ComassReport {
    fn verdict(&self) -> bool {
        self.at_most_one
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudSummary {
    pub points: usize,
    pub n: usize,
    pub k: usize,
    pub resolution: f64,
}

/// Whether the cloud meets the theorem's assumptions at the tested scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisSection {
    pub delta: f64,
    pub alpha: f64,
    #[serde(with = "serde_float::float")]
    pub delta_star: f64,
    #[serde(with = "serde_float::float")]
    pub alpha_star: f64,
    #[serde(with = "serde_float::float")]
    pub dini_max: f64,
    pub net_slack: f64,
    pub balls_tested: usize,
    pub degenerate_balls: usize,
    pub ambiguous_orientations: usize,
    pub per_scale: Vec<ScaleSummary>,
    pub failing_total: usize,
    /// Coarsest failing balls first, at most [`MAX_LISTED_FAILURES`].
    pub failing: Vec<FailingBall>,
    pub certified: bool,
}

pub const MAX_LISTED_FAILURES: usize = 100;

impl HypothesisSection {
    /// Expects `cert` to have been judged.
    pub fn from_certificate(cert: &ReifenbergCertificate, delta: f64, alpha: f64) -> Self {
        let mut failing = cert.verdict.as_ref().map(|v| v.failing.clone()).unwrap_or_default();
        let failing_total = failing.len();
        failing.sort_by(|a, b| b.r.partial_cmp(&a.r).unwrap());
        failing.truncate(MAX_LISTED_FAILURES);
        HypothesisSection {
            delta,
            alpha,
            delta_star: cert.delta_star,
            alpha_star: cert.alpha_star,
            dini_max: cert.dini_max,
            net_slack: cert.net_slack,
            balls_tested: cert.records.len(),
            degenerate_balls: cert.degenerate_balls,
            ambiguous_orientations: cert.ambiguous_orientations,
            per_scale: cert.per_scale.clone(),
            failing_total,
            failing,
            certified: cert.verdict(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    /// The measured quantity exceeds its configured bound; reported, not
    /// fatal.
    Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub name: String,
    pub status: Status,
    #[serde(with = "serde_float::float")]
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    pub detail: String,
}

impl Entry {
    fn new(name: &str, ok: bool, value: f64, bound: Option<f64>, detail: String) -> Self {
        Entry {
            name: name.into(),
            status: if ok { Status::Pass } else { Status::Flag },
            value,
            bound,
            detail,
        }
    }
}

/// The theorem's conclusions measured on the constructed surfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConclusionSection {
    pub evaluated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    pub entries: Vec<Entry>,
    pub all_pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationReport>,
}

impl ConclusionSection {
    pub fn skipped(reason: String) -> Self {
        ConclusionSection {
            evaluated: false,
            skipped: Some(reason),
            entries: Vec::new(),
            all_pass: false,
            family: None,
            calibration: None,
        }
    }

    /// `c` is the configured constant the property ratios are held to.
    pub fn from_reports(family: FamilyReport, calibration: CalibrationReport, c: f64) -> Self {
        let mut e = Vec::new();
        e.push(Entry::new(
            "construction_complete",
            family.aborted.is_none(),
            family.levels.len() as f64,
            None,
            family.aborted.clone().unwrap_or_else(|| "all levels built".into()),
        ));
        e.push(Entry::new(
            "outside_equals_base_plane",
            family.outside_exact,
            f64::from(u8::from(family.outside_exact)),
            None,
            "node images outside B_(1+eps) equal the base embedding bit for bit".into(),
        ));
        let max_of = |f: &dyn Fn(&reifcal_core::builder::LevelReport) -> Option<f64>| {
            family.levels.iter().filter_map(f).fold(0.0, f64::max)
        };
        let p3 = max_of(&|l| Some(l.p3_ratio));
        let p4 = max_of(&|l| Some(l.p4_ratio));
        let p5 = max_of(&|l| l.p5_ratio);
        e.push(Entry::new("hausdorff_ratio", p3 <= c, p3, Some(c), "max over levels of d_H(S_r, S)/(delta r)".into()));
        e.push(Entry::new("grassmann_ratio", p4 <= c, p4, Some(c), "max over levels of tangent drift / delta".into()));
        e.push(Entry::new("velocity_ratio", p5 <= c, p5, Some(c), "max over levels of |dS_r/dr| / delta".into()));
        let spread = family.ratio_spread.iter().copied().fold(0.0, f64::max);
        e.push(Entry::new(
            "ratio_stability",
            spread <= 2.0,
            spread,
            Some(2.0),
            format!("max/min of the three ratios across levels: {:?}", family.ratio_spread),
        ));
        let min_pos = family.levels.iter().map(|l| l.positive_fraction).fold(1.0, f64::min);
        e.push(Entry::new(
            "orientation_positivity",
            family.positivity_everywhere,
            min_pos,
            Some(1.0),
            "smallest fraction of cells in B_1 with Omega_0 > eps/2".into(),
        ));
        e.push(Entry::new(
            "integral_constancy",
            calibration.integral_constant,
            calibration.integral_variation,
            Some(calibration.constants.integral_tolerance),
            "relative change of the integral of Omega_0 over S_r in B_(1+eps) across levels".into(),
        ));
        let min_omega = calibration.levels.iter().map(|l| l.min_omega0).fold(f64::INFINITY, f64::min);
        e.push(Entry::new(
            "positivity_transfer",
            calibration.levels.iter().all(|l| l.positivity_transfer),
            min_omega,
            Some(calibration.alpha - 1.5 * calibration.epsilon),
            "smallest Omega_0 on a cell frame against alpha - 3 eps/2".into(),
        ));
        let worst_upper = calibration
            .levels
            .iter()
            .map(|l| l.volume.measure * (calibration.alpha - 1.5 * calibration.epsilon) / l.outer_integral)
            .fold(0.0, f64::max);
        e.push(Entry::new(
            "upper_volume_bound",
            calibration.levels.iter().all(|l| l.upper_bound_holds),
            worst_upper,
            Some(1.0),
            "H^k(S_r in B_1) (alpha - 3 eps/2) / integral of Omega_0, worst level".into(),
        ));
        let ratios: Vec<f64> = calibration.levels.iter().map(|l| l.volume.ahlfors_ratio).collect();
        let need_d = calibration.levels.iter().map(|l| l.volume.required_c_delta).fold(0.0, f64::max);
        let need_e = calibration.levels.iter().map(|l| l.volume.required_c_epsilon).fold(0.0, f64::max);
        e.push(Entry::new(
            "ahlfors_bounds",
            calibration.levels.iter().all(|l| l.volume.within_bounds),
            ratios.iter().copied().fold(0.0, f64::max),
            calibration.levels.first().map(|l| l.volume.bounds[1]),
            format!("ratios {ratios:?}; constants needed: c_delta {need_d}, c_epsilon {need_e}"),
        ));
        let occ = calibration.levels.iter().map(|l| l.covering.occupancy).fold(1.0, f64::min);
        e.push(Entry::new(
            "projection_covering",
            calibration.levels.iter().all(|l| l.covering.covered),
            occ,
            Some(1.0),
            "occupancy of the base-plane cells on B_(1 - C delta)".into(),
        ));
        e.push(Entry::new(
            "measure_agreement",
            calibration.agreement.agree,
            calibration.agreement.relative_spread,
            Some(calibration.constants.agreement_tolerance),
            match calibration.agreement.measure {
                Some(m) => format!("finest three levels agree; measure {m}"),
                None => format!("no measure reported; finest levels {:?}", calibration.agreement.measures),
            },
        ));
        let all_pass = e.iter().all(|x| x.status == Status::Pass);
        ConclusionSection {
            evaluated: true,
            skipped: None,
            entries: e,
            all_pass,
            family: Some(family),
            calibration: Some(calibration),
        }
    }
}

/// The `certify` output. The verdict is the hypothesis certification; the
/// conclusions are measured and reported alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyDocument {
    pub config: RunConfig,
    pub cloud: CloudSummary,
    pub form: ConstantKForm,
    pub hypotheses: HypothesisSection,
    pub conclusions: ConclusionSection,
    pub verdict: bool,
}

impl HasVerdict for CertifyDocument {
    fn verdict(&self) -> bool {
        self.verdict
    }
}
