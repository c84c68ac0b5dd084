//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Tolerances are fixed constants below and are not tuned
//! to the measured values.
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reifcal_core::builder::{build_family, check_properties, BuildConfig, FamilyReport};
use reifcal_core::flatness::{certify, dini_sum_range, dyadic, resolution_floor, NetPolicy, ReifenbergCertificate, ScalePolicy};
use reifcal_core::forms::{
    comass, g2_associative, g2_coassociative, kahler_power, special_lagrangian, spin7_form,
};
use reifcal_core::generators::{generate, EtaSchedule, GeneratorKind, GeneratorSpec, GraphFunction};
use reifcal_core::geometry::{grassmann_distance, hausdorff_distance, project, Shape};
use reifcal_core::linalg::{dist, gram_schmidt};
use reifcal_core::measure::{calibration_bounds_check, BoundConstants, CalibrationReport};
use reifcal_core::{CalibrationField, ConstantKForm, MultiIndex, OrientedPlane, PointCloud};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

struct Check {
    pass: bool,
    detail: String,
}

impl Check {
    fn new(pass: bool, detail: String) -> Self {
        Check { pass, detail }
    }
}

/// Records of every certification run in the suite, for the β ≤ θ check.
#[derive(Default)]
struct Ledger {
    records: usize,
    violations: usize,
    runs: Vec<String>,
}

impl Ledger {
    fn add(&mut self, name: &str, cert: &ReifenbergCertificate) {
        self.records += cert.records.len();
        self.violations += cert.records.iter().filter(|r| r.beta_inf > r.theta).count();
        self.runs.push(format!("{name}:{}", cert.records.len()));
    }
}

// ---------------------------------------------------------------- criterion 1

fn parity(word: &[usize]) -> f64 {
    let mut inv = 0;
    for i in 0..word.len() {
        for j in i + 1..word.len() {
            assert_ne!(word[i], word[j], "repeated index in monomial");
            inv += usize::from(word[i] > word[j]);
        }
    }
    if inv % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn parse_table(table: &str) -> Vec<(f64, Vec<usize>)> {
    let mut out = Vec::new();
    let mut rest = table;
    while let Some(pos) = rest.find("e^{") {
        let sign = if rest[..pos].contains('-') { -1.0 } else { 1.0 };
        let close = pos + rest[pos..].find('}').unwrap();
        out.push((sign, rest[pos + 3..close].bytes().map(|b| (b - b'0') as usize).collect()));
        rest = &rest[close + 1..];
    }
    out
}

fn table_mismatch(form: &ConstantKForm, table: &str) -> (f64, usize) {
    let parsed = parse_table(table);
    let (n, k) = (form.n(), form.k());
    let mut worst = 0.0f64;
    let mut planes = 0;
    for idx in MultiIndex::all(n, k) {
        let axes = idx.as_slice().to_vec();
        let want: f64 = parsed
            .iter()
            .filter(|(_, w)| {
                let mut s: Vec<usize> = w.iter().map(|d| d - 1).collect();
                s.sort_unstable();
                s == axes
            })
            .map(|(s, w)| s * parity(w))
            .sum();
        let plane = OrientedPlane::coordinate(n, &axes, vec![0.0; n]).unwrap();
        worst = worst.max((form.evaluate(&plane).unwrap() - want).abs());
        planes += 1;
    }
    (worst, planes)
}

fn criterion_1(_: &mut Ledger) -> Check {
    let start = Instant::now();
    let forms = [
        ("kahler", kahler_power(3, 1).unwrap(), "e^{12}+e^{34}+e^{56}"),
        ("associative", g2_associative(), "e^{123}- e^{167}- e^{527}- e^{563} -e^{415}- e^{426}- e^{437}"),
        ("coassociative", g2_coassociative(), "e^{4567}-e^{4523}-e^{4163}-e^{4127}-e^{2637}-e^{1537}-e^{1526}"),
        (
            "spin7",
            spin7_form(),
            "e^{1256}+e^{1278}+e^{3456}+e^{3478}+e^{1357}-e^{1368}-e^{2457}\
             +e^{2468}-e^{1458}-e^{1467}-e^{2358}-e^{2367}+e^{1234}+e^{5678}",
        ),
    ];
    let mut worst = 0.0f64;
    let mut planes = 0;
    for (_, f, t) in &forms {
        let (w, p) = table_mismatch(f, t);
        worst = worst.max(w);
        planes += p;
    }
    let elapsed = start.elapsed();
    Check::new(
        worst <= 1e-12 && elapsed < Duration::from_secs(1),
        format!("{planes} coordinate planes over 4 forms, max deviation {worst:e}, {elapsed:.2?}"),
    )
}

// ---------------------------------------------------------------- criterion 2

fn random_frame(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<f64> {
    loop {
        let mut f: Vec<f64> = (0..n * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        if gram_schmidt(&mut f, n) {
            return f;
        }
    }
}

/// `(w_1, i w_1, …)` for a random Hermitian-orthonormal `w_1, …, w_k` in C^m.
fn complex_frame(rng: &mut ChaCha8Rng, m: usize, k: usize) -> Vec<f64> {
    let mut w: Vec<Vec<(f64, f64)>> = Vec::new();
    while w.len() < k {
        let mut v: Vec<(f64, f64)> = (0..m).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        for u in &w {
            let (mut re, mut im) = (0.0, 0.0);
            for (a, b) in u.iter().zip(&v) {
                re += a.0 * b.0 + a.1 * b.1;
                im += a.0 * b.1 - a.1 * b.0;
            }
            for (a, b) in u.iter().zip(v.iter_mut()) {
                b.0 -= re * a.0 - im * a.1;
                b.1 -= re * a.1 + im * a.0;
            }
        }
        let nrm = v.iter().map(|c| c.0 * c.0 + c.1 * c.1).sum::<f64>().sqrt();
        if nrm > 1e-3 {
            w.push(v.iter().map(|c| (c.0 / nrm, c.1 / nrm)).collect());
        }
    }
    w.iter()
        .flat_map(|v| {
            let re: Vec<f64> = v.iter().flat_map(|c| [c.0, c.1]).collect();
            let im: Vec<f64> = v.iter().flat_map(|c| [-c.1, c.0]).collect();
            re.into_iter().chain(im)
        })
        .collect()
}

fn criterion_2(_: &mut Ledger) -> Check {
    let start = Instant::now();
    let mut forms: Vec<(String, ConstantKForm)> = Vec::new();
    for m in 1..=3 {
        for k in 1..=m {
            forms.push((format!("kahler({m},{k})"), kahler_power(m, k).unwrap()));
        }
    }
    forms.push(("coassociative".into(), g2_coassociative()));
    forms.push(("spin7".into(), spin7_form()));
    forms.push(("special_lagrangian(2)".into(), special_lagrangian(2, 0.0).unwrap()));
    let mut worst_comass = 0.0f64;
    let mut summary = Vec::new();
    for (name, f) in &forms {
        let c = comass(f, 10_000, 200, 0);
        worst_comass = worst_comass.max((c - 1.0).abs());
        summary.push(format!("{name}={c:.6}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_complex = 0.0f64;
    let mut highest_real = f64::NEG_INFINITY;
    for m in 1..=3 {
        for k in 1..=m {
            let f = kahler_power(m, k).unwrap();
            for _ in 0..100 {
                let v = f.evaluate_frame(&complex_frame(&mut rng, m, k)).unwrap();
                worst_complex = worst_complex.max((v - 1.0).abs());
            }
        }
    }
    for (m, k) in [(2, 1), (3, 1), (3, 2)] {
        let f = kahler_power(m, k).unwrap();
        for _ in 0..1000 {
            highest_real = highest_real.max(f.evaluate_frame(&random_frame(&mut rng, 2 * m, 2 * k)).unwrap());
        }
    }
    let elapsed = start.elapsed();
    Check::new(
        worst_comass <= 1e-3 && worst_complex <= 1e-9 && highest_real < 1.0 && elapsed < Duration::from_secs(120),
        format!(
            "comass [{}] max |c-1| {worst_comass:.2e}; complex planes max |v-1| {worst_complex:.1e}; \
             random planes max {highest_real:.6}; {elapsed:.1?}",
            summary.join(", ")
        ),
    )
}

// ---------------------------------------------------------- criteria 3, 4, 5

const CONTROL_NOISE: f64 = 0.005;
const CONTROL_EPSILON: f64 = 0.25;
const CONTROL_DELTA: f64 = 0.02;
const CONSTANT_CEILING: f64 = 10.0;

fn control_alpha() -> f64 {
    1.0 / 1.01f64.sqrt() - 0.02
}

/// Graph of `x ↦ (0.1 x_1, 0)` over the disk of radius 2 in R^4 with normal
/// noise 0.005, sized for about 10^5 points.
fn control_spec() -> GeneratorSpec {
    GeneratorSpec {
        kind: GeneratorKind::Perturbed {
            base: Box::new(GeneratorSpec {
                kind: GeneratorKind::Graph {
                    n: 4,
                    k: 2,
                    function: GraphFunction::Linear {
                        matrix: vec![0.1, 0.0, 0.0, 0.0],
                    },
                },
                h: 0.0213,
                radius: 2.0,
            }),
            noise: CONTROL_NOISE,
            seed: 7,
        },
        h: 0.0213,
        radius: 2.0,
    }
}

struct Control {
    cloud: PointCloud,
    field: CalibrationField,
    family: Option<(FamilyReport, CalibrationReport, Option<String>)>,
    build_error: Option<String>,
}

fn control() -> Control {
    let g = generate(&control_spec()).expect("control cloud");
    let field = CalibrationField::constant(ConstantKForm::coordinate_volume(4, 2).unwrap());
    Control {
        cloud: g.cloud,
        field,
        family: None,
        build_error: None,
    }
}

fn criterion_3(ledger: &mut Ledger, ctl: &Control) -> Check {
    let start = Instant::now();
    let scales = ScalePolicy { j_min: 0, j_max: 6 };
    let net = NetPolicy::standard(4);
    let (alpha, h) = (control_alpha(), ctl.cloud.resolution());
    let floor = resolution_floor(&ctl.cloud);
    match certify(&ctl.cloud, 2, &ctl.field, scales, &net) {
        Ok(mut cert) => {
            ledger.add("control", &cert);
            let ok = cert.judge(CONTROL_DELTA, alpha);
            let elapsed = start.elapsed();
            Check::new(
                cert.delta_star <= CONTROL_DELTA && cert.alpha_star >= alpha && elapsed < Duration::from_secs(300),
                format!(
                    "{} points, delta* {:.4} (<= {CONTROL_DELTA}), alpha* {:.4} (>= {alpha:.4}), verdict {ok}, {elapsed:.1?}",
                    ctl.cloud.len(),
                    cert.delta_star,
                    cert.alpha_star
                ),
            )
        }
        Err(e) => {
            // evidence at the scales the cloud does resolve
            let j_ok = (0..=6u32).take_while(|&j| dyadic(j) >= floor).last().unwrap_or(0);
            let partial = certify(&ctl.cloud, 2, &ctl.field, ScalePolicy { j_min: 0, j_max: j_ok }, &net);
            let extra = match partial {
                Ok(cert) => {
                    ledger.add("control_resolved", &cert);
                    let thetas: Vec<String> = cert
                        .per_scale
                        .iter()
                        .map(|s| format!("2^-{}:{:.4}", s.j, s.worst_theta))
                        .collect();
                    format!(
                        "; on 2^0..2^-{j_ok}: delta* {:.4}, alpha* {:.4}, worst theta [{}]",
                        cert.delta_star,
                        cert.alpha_star,
                        thetas.join(" ")
                    )
                }
                Err(e2) => format!("; resolved scales also failed: {e2}"),
            };
            Check::new(
                false,
                format!(
                    "{} points, h {h:.4}, floor 4h {floor:.4} > 2^-6 = {:.4}: {e}{extra}; {:.1?}",
                    ctl.cloud.len(),
                    dyadic(6),
                    start.elapsed()
                ),
            )
        }
    }
}

fn build_control(ctl: &mut Control) {
    let config = BuildConfig {
        epsilon: CONTROL_EPSILON,
        levels: 6,
        ..BuildConfig::default()
    };
    let built = build_family(&ctl.cloud, &ctl.field, &config).and_then(|family| {
        let report = check_properties(&family, &ctl.cloud, &ctl.field, CONTROL_DELTA)?;
        let calib = calibration_bounds_check(
            &family,
            &ctl.field,
            control_alpha(),
            CONTROL_EPSILON,
            CONTROL_DELTA,
            &BoundConstants::default(),
        )?;
        Ok((report, calib, family.aborted.clone()))
    });
    match built {
        Ok(v) => ctl.family = Some(v),
        Err(e) => ctl.build_error = Some(e.to_string()),
    }
}

fn criterion_4(_: &mut Ledger, ctl: &mut Control) -> Check {
    let start = Instant::now();
    build_control(ctl);
    let Some((report, _, aborted)) = &ctl.family else {
        return Check::new(false, format!("construction failed: {}", ctl.build_error.as_deref().unwrap_or("?")));
    };
    let complete = aborted.is_none() && report.levels.len() == 7;
    let c = report.fitted_constant;
    let spread = report.ratio_spread.iter().copied().fold(0.0, f64::max);
    let levels: Vec<String> = report
        .levels
        .iter()
        .map(|l| {
            format!(
                "a{}:P3 {:.3} P4 {:.3} P5 {} pos {:.3}",
                l.a,
                l.p3_ratio,
                l.p4_ratio,
                l.p5_ratio.map_or("-".into(), |v| format!("{v:.3}")),
                l.positive_fraction
            )
        })
        .collect();
    Check::new(
        complete && c <= CONSTANT_CEILING && spread <= 2.0 && report.outside_exact && report.positivity_everywhere,
        format!(
            "levels built {}/7{}; C {c:.3}, spread {spread:.3}, outside exact {}, positivity {}; [{}]; {:.1?}",
            report.levels.len(),
            aborted.as_ref().map(|a| format!(" (aborted: {a})")).unwrap_or_default(),
            report.outside_exact,
            report.positivity_everywhere,
            levels.join("; "),
            start.elapsed()
        ),
    )
}

fn criterion_5(_: &mut Ledger, ctl: &Control) -> Check {
    let Some((report, calib, aborted)) = &ctl.family else {
        return Check::new(false, format!("no family: {}", ctl.build_error.as_deref().unwrap_or("?")));
    };
    let complete = aborted.is_none() && report.levels.len() == 7;
    let c_needed = calib
        .levels
        .iter()
        .map(|l| l.volume.required_c_delta.max(l.volume.required_c_epsilon))
        .fold(0.0, f64::max);
    let occupancy = calib.levels.iter().map(|l| l.covering.occupancy).fold(1.0, f64::min);
    let ratios: Vec<String> = calib.levels.iter().map(|l| format!("{:.4}", l.volume.ahlfors_ratio)).collect();
    let pass = complete
        && calib.integral_variation < 0.02
        && c_needed <= CONSTANT_CEILING
        && calib.levels.iter().all(|l| l.volume.within_bounds)
        && occupancy == 1.0;
    Check::new(
        pass,
        format!(
            "levels {}/7{}; integral variation {:.2e}, Ahlfors ratios [{}], constant needed {c_needed:.3}, occupancy {occupancy:.4}",
            calib.levels.len(),
            if complete { "" } else { " (construction incomplete)" },
            calib.integral_variation,
            ratios.join(", ")
        ),
    )
}

// ---------------------------------------------------------------- criterion 6

fn c_eta(eta: f64) -> f64 {
    2.0 / 3.0 + (1.0 + 4.0 * eta * eta).sqrt() / 3.0
}

/// Koch polylines of every generation on `(-radius, 0) → (radius, 0)`,
/// built independently of the generator.
fn koch_generations(radius: f64, depth: usize, eta: impl Fn(usize) -> f64) -> Vec<Vec<(f64, f64)>> {
    let mut gens = vec![vec![(-radius, 0.0), (radius, 0.0)]];
    for g in 1..=depth {
        let e = eta(g);
        let v = gens.last().unwrap();
        let mut next = Vec::with_capacity(4 * v.len());
        for w in v.windows(2) {
            let (a, b) = (w[0], w[1]);
            let d = ((b.0 - a.0) / 3.0, (b.1 - a.1) / 3.0);
            let p1 = (a.0 + d.0, a.1 + d.1);
            let p2 = (a.0 + 2.0 * d.0, a.1 + 2.0 * d.1);
            let apex = ((p1.0 + p2.0) / 2.0 - e * d.1, (p1.1 + p2.1) / 2.0 + e * d.0);
            next.extend([a, p1, apex, p2]);
        }
        next.push(*v.last().unwrap());
        gens.push(next);
    }
    gens
}

fn polyline_length(v: &[(f64, f64)]) -> f64 {
    v.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).sum()
}

fn koch_cloud(eta: EtaSchedule, depth: usize, h: f64, radius: f64) -> reifcal_core::generators::Generated {
    generate(&GeneratorSpec {
        kind: GeneratorKind::Koch { eta, depth },
        h,
        radius,
    })
    .expect("koch cloud")
}

/// Base half-length for the geometric schedule: generation-4 segments have
/// length 2, so a unit ball on one of them sees generations 5 and finer.
const WINDOW_RADIUS: f64 = 81.0;

/// Koch curve with `η_j = 2^{-j}` cropped to `B_3` around the midpoint of
/// an interior horizontal generation-4 segment and moved to the origin.
fn geometric_window(depth: usize, h: f64) -> PointCloud {
    let eta = |j: usize| 0.5f64.powi(j as i32);
    let gens = koch_generations(WINDOW_RADIUS, 4, eta);
    let center = gens[4]
        .windows(2)
        .map(|w| (w[0], w[1]))
        .find(|(a, b)| (b.1 - a.1).abs() < 1e-12 && a.0 > -WINDOW_RADIUS + 10.0)
        .map(|(a, b)| ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0))
        .expect("an interior horizontal segment");
    let g = koch_cloud(EtaSchedule::Geometric { scale: 1.0, ratio: 0.5 }, depth, h, WINDOW_RADIUS);
    g.cloud
        .filter(|p| (p[0] - center.0).hypot(p[1] - center.1) <= 3.0)
        .and_then(|c| c.map_points(|p| vec![p[0] - center.0, p[1] - center.1]))
        .expect("window cloud")
}

fn criterion_6(ledger: &mut Ledger) -> Check {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;
    let radius = 2.0;
    let h = 0.003;
    let field = CalibrationField::constant(ConstantKForm::coordinate_volume(2, 1).unwrap());
    let alpha = 0.95;

    // length against the closed form and the independent polyline
    let koch = koch_cloud(EtaSchedule::Constant { eta: 0.5 }, 8, h, radius);
    let meta = koch.metadata.koch.clone().unwrap();
    let want = c_eta(0.5).powi(8);
    let gens = koch_generations(radius, 8, |_| 0.5);
    let oracle = polyline_length(&gens[8]) / (2.0 * radius);
    let measured = meta.length / meta.base_length;
    let len_ok = (measured - want).abs() <= 1e-9 && (oracle - want).abs() <= 1e-9;
    pass &= len_ok;
    notes.push(format!("length/base {measured:.12} vs c^8 {want:.12} (oracle {oracle:.12})"));

    // brute force: the longest segment of any generation whose direction
    // gives |Ω| < α predicts failure at every dyadic r with 2r ≤ its length
    let mut predicted: Option<(usize, f64)> = None;
    for (g, v) in gens.iter().enumerate() {
        for w in v.windows(2) {
            let (dx, dy) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            let len = dx.hypot(dy);
            if (dx / len).abs() < alpha && predicted.is_none_or(|(_, l)| len > l) {
                predicted = Some((g, len));
            }
        }
    }
    let (depth_pred, seg) = predicted.unwrap();
    let floor = resolution_floor(&koch.cloud);
    let j_max = (0..=10u32).take_while(|&j| dyadic(j) >= floor).last().unwrap();
    let j_pred = (0..=j_max).find(|&j| 2.0 * dyadic(j) <= seg).unwrap();
    let r_pred = dyadic(j_pred);
    match certify(&koch.cloud, 1, &field, ScalePolicy { j_min: 0, j_max }, &NetPolicy::standard(2)) {
        Ok(mut cert) => {
            ledger.add("koch", &cert);
            let verdict = cert.judge(0.05, alpha);
            let failing = &cert.verdict.as_ref().unwrap().failing;
            let at_pred = failing.iter().filter(|f| f.r == r_pred && f.positivity_fail).count();
            let ok = !verdict && at_pred > 0;
            pass &= ok;
            notes.push(format!(
                "certify verdict {verdict}, predicted generation {depth_pred} segment {seg:.4} -> r 2^-{j_pred}, \
                 positivity failures there {at_pred}, alpha* {:.4}",
                cert.alpha_star
            ));
        }
        Err(e) => {
            pass = false;
            notes.push(format!("certify error {e}"));
        }
    }

    // measure agreement must refuse on the fractal
    let config = BuildConfig {
        epsilon: 0.25,
        levels: 3,
        ..BuildConfig::default()
    };
    let refused = match build_family(&koch.cloud, &field, &config) {
        Ok(family) => {
            let aborted = family.aborted.clone();
            match calibration_bounds_check(&family, &field, alpha, 0.25, 0.05, &BoundConstants::default()) {
                Ok(c) => {
                    notes.push(format!(
                        "koch measures {:?}{}, agree {}",
                        c.agreement.measures,
                        aborted.map(|a| format!(" (aborted: {a})")).unwrap_or_default(),
                        c.agreement.agree
                    ));
                    !c.agreement.agree && c.agreement.measure.is_none()
                }
                Err(e) => {
                    notes.push(format!("koch calibration check refused: {e}"));
                    true
                }
            }
        }
        Err(e) => {
            notes.push(format!("koch construction refused: {e}"));
            true
        }
    };
    pass &= refused;

    // summable heights: η_j = 2^-j, observed on a window where the unit ball
    // sees generations 5 and finer
    let mut dini = Vec::new();
    for depth in 4..=8 {
        let cloud = geometric_window(depth, 0.0015);
        dini.push(dini_sum_range(&cloud, &[0.0, 0.0], 0, 4).unwrap().value);
    }
    let increments: Vec<f64> = dini.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let dini_ok = *increments.last().unwrap() < 1e-3;
    pass &= dini_ok;
    notes.push(format!(
        "geometric Dini by depth 4..8 [{}], increments [{}]",
        dini.iter().map(|d| format!("{d:.6}")).collect::<Vec<_>>().join(" "),
        increments.iter().map(|d| format!("{d:.1e}")).collect::<Vec<_>>().join(" ")
    ));

    let fine = geometric_window(8, 0.0015);
    let config = BuildConfig {
        epsilon: 0.25,
        levels: 4,
        ..BuildConfig::default()
    };
    match build_family(&fine, &field, &config).and_then(|f| {
        let aborted = f.aborted.clone();
        calibration_bounds_check(&f, &field, alpha, 0.25, 0.05, &BoundConstants::default()).map(|c| (c, aborted))
    }) {
        Ok((c, aborted)) => {
            let agree = c.agreement.agree && c.agreement.relative_spread < 0.01;
            pass &= agree;
            notes.push(format!(
                "geometric measures {:?}{} spread {:.2e} agree {agree}",
                c.agreement.measures,
                aborted.map(|a| format!(" (aborted: {a})")).unwrap_or_default(),
                c.agreement.relative_spread
            ));
        }
        Err(e) => {
            pass = false;
            notes.push(format!("geometric construction failed: {e}"));
        }
    }
    notes.push(format!("{:.1?}", start.elapsed()));
    Check::new(pass, notes.join("; "))
}

// ---------------------------------------------------------------- criterion 7

fn brute_hausdorff(a: &[f64], b: &[f64], n: usize) -> f64 {
    let side = |p: &[f64], q: &[f64]| {
        p.chunks(n)
            .map(|x| q.chunks(n).map(|y| dist(x, y)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    side(a, b).max(side(b, a))
}

fn random_plane(rng: &mut ChaCha8Rng, n: usize, k: usize) -> OrientedPlane {
    let f = random_frame(rng, n, k);
    let base = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    OrientedPlane::new(base, f).unwrap()
}

fn criterion_7(ledger: &mut Ledger) -> Check {
    let start = Instant::now();
    // one more run of our own so the β ≤ θ check also covers a curved set
    let cap = generate(&GeneratorSpec {
        kind: GeneratorKind::Graph {
            n: 3,
            k: 2,
            function: GraphFunction::SphereCap { radius: 3.0 },
        },
        h: 0.04,
        radius: 2.2,
    })
    .unwrap();
    let field = CalibrationField::constant(ConstantKForm::coordinate_volume(3, 2).unwrap());
    if let Ok(cert) = certify(&cap.cloud, 2, &field, ScalePolicy { j_min: 0, j_max: 1 }, &NetPolicy::standard(3)) {
        ledger.add("sphere_cap", &cert);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut metric_fail = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..5);
        let sizes: Vec<usize> = (0..3).map(|_| rng.random_range(1..15)).collect();
        let sets: Vec<Vec<f64>> = sizes
            .iter()
            .map(|&m| (0..m * n).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let d = |a: &[f64], b: &[f64]| hausdorff_distance(Shape::Points(a, n), Shape::Points(b, n)).unwrap();
        let (a, b, c) = (&sets[0], &sets[1], &sets[2]);
        let ok = d(a, a) == 0.0
            && d(a, b) == d(b, a)
            && d(a, c) <= d(a, b) + d(b, c) + 1e-12
            && (d(a, b) - brute_hausdorff(a, b, n)).abs() <= 1e-12;
        metric_fail += usize::from(!ok);
    }
    let mut lipschitz_fail = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..8);
        let k = rng.random_range(1..n);
        let plane = random_plane(&mut rng, n, k);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (px, py) = (project(&plane, &x).unwrap(), project(&plane, &y).unwrap());
        let ok = dist(&px, &py) <= dist(&x, &y) + 1e-12 && plane.distance(&px) <= 1e-12;
        lipschitz_fail += usize::from(!ok);
    }
    let mut worst_angle = 0.0f64;
    for i in 0..100 {
        let (n, k) = [(3, 1), (4, 2), (7, 3), (8, 4)][i % 4];
        let p = random_plane(&mut rng, n, k);
        let q = random_plane(&mut rng, n, k);
        let u = DMatrix::from_column_slice(n, k, p.frame());
        let v = DMatrix::from_column_slice(n, k, q.frame());
        let cos_min = (u.transpose() * v).singular_values().iter().copied().fold(f64::INFINITY, f64::min).min(1.0);
        let oracle = (1.0 - cos_min * cos_min).max(0.0).sqrt();
        worst_angle = worst_angle.max((grassmann_distance(&p, &q).unwrap() - oracle).abs());
    }
    Check::new(
        ledger.violations == 0 && ledger.records > 0 && metric_fail == 0 && lipschitz_fail == 0 && worst_angle <= 1e-10,
        format!(
            "beta > theta on {}/{} records (runs {}); Hausdorff failures {metric_fail}/1000; \
             projection failures {lipschitz_fail}/1000; Grassmann max deviation {worst_angle:.1e}; {:.1?}",
            ledger.violations,
            ledger.records,
            ledger.runs.join(" "),
            start.elapsed()
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

fn reifcal(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_reifcal")).args(args).output().expect("binary runs")
}

fn criterion_8(_: &mut Ledger) -> Check {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let gen = reifcal(&[
        "generate",
        "--spec",
        r#"{"kind":{"type":"plane","n":3,"k":2},"h":0.02,"radius":2.2}"#,
        "-o",
        dir.to_str().unwrap(),
    ]);
    if gen.status.code() != Some(0) {
        return Check::new(false, format!("generate failed: {}", String::from_utf8_lossy(&gen.stderr)));
    }
    let cfg = dir.join("certify.json");
    let out = dir.join("out");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"input": {:?}, "output": {:?}, "k": 2, "epsilon": 0.4, "scales": {{"j_min": 0, "j_max": 1}}, "grid": {{"levels": 1}}}}"#,
            dir.join("cloud.csv").to_str().unwrap(),
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let run = || {
        let o = reifcal(&["certify", "--config", cfg.to_str().unwrap()]);
        let f = std::fs::read(out.join("verdict.json")).unwrap_or_default();
        (o, f)
    };
    let (a, fa) = run();
    let (b, fb) = run();
    let same = a.stdout == b.stdout && fa == fb && !fa.is_empty() && a.status.code() == b.status.code();
    Check::new(
        same && matches!(a.status.code(), Some(0) | Some(2)),
        format!(
            "exit codes {:?}/{:?}, {} bytes, identical {same}; {:.1?}",
            a.status.code(),
            b.status.code(),
            fa.len(),
            start.elapsed()
        ),
    )
}

// ---------------------------------------------------------------------- main

fn report(n: usize, check: std::thread::Result<Check>) -> bool {
    let check = check.unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Check::new(false, format!("panicked: {msg}"))
    });
    let verdict = if check.pass { "PASS" } else { "FAIL" };
    // straight to the stream so the line survives output capture
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {n}: {verdict}: {}", check.detail).unwrap();
    out.flush().unwrap();
    check.pass
}

/// Criterion numbers given on the command line select a subset; none runs all.
fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: usize| only.is_empty() || only.contains(&n);
    let mut ledger = Ledger::default();
    let mut all = true;
    if want(1) {
        all &= report(1, catch_unwind(AssertUnwindSafe(|| criterion_1(&mut ledger))));
    }
    if want(2) {
        all &= report(2, catch_unwind(AssertUnwindSafe(|| criterion_2(&mut ledger))));
    }
    if want(3) || want(4) || want(5) {
        let mut ctl = control();
        if want(3) {
            all &= report(3, catch_unwind(AssertUnwindSafe(|| criterion_3(&mut ledger, &ctl))));
        }
        if want(4) || want(5) {
            all &= report(4, catch_unwind(AssertUnwindSafe(|| criterion_4(&mut ledger, &mut ctl))));
            all &= report(5, catch_unwind(AssertUnwindSafe(|| criterion_5(&mut ledger, &ctl))));
        }
    }
    if want(6) {
        all &= report(6, catch_unwind(AssertUnwindSafe(|| criterion_6(&mut ledger))));
    }
    if want(7) {
        all &= report(7, catch_unwind(AssertUnwindSafe(|| criterion_7(&mut ledger))));
    }
    if want(8) {
        all &= report(8, catch_unwind(AssertUnwindSafe(|| criterion_8(&mut ledger))));
    }
    if !all {
        std::process::exit(1);
    }
}
