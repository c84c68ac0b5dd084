//! The five subcommands.
use anyhow::{anyhow, Context, Result};
use reifcal_core::builder::{build_family, check_properties};
use reifcal_core::flatness::certify as certify_hypotheses;
use reifcal_core::forms::{comass_search, ComassConfig};
use reifcal_core::generators::generate as run_generator;
use reifcal_core::measure::calibration_bounds_check;
use reifcal_core::{CalibrationField, ConstantKForm, Error as CoreError, PointCloud};
use std::fs::File;
use std::path::{Path, PathBuf};

use crate::config::{Command, FormSource, RunConfig};
use crate::io;
use crate::plot;
use crate::report::{
    CertifyDocument, CloudSummary, ComassReport, ConclusionSection, HasVerdict, HypothesisSection,
};

/// The primary document of a run and its verdict.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub document: String,
    pub verdict: bool,
}

impl Outcome {
    fn of<T: serde::Serialize + HasVerdict>(doc: &T) -> Result<Self> {
        Ok(Outcome {
            document: io::to_json(doc)?,
            verdict: doc.verdict(),
        })
    }

    pub fn exit_code(&self) -> i32 {
        if self.verdict {
            0
        } else {
            2
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.command.ok_or_else(|| anyhow!("no command given"))? {
        Command::Analyze => analyze(cfg),
        Command::Build => build(cfg),
        Command::Certify => certify(cfg),
        Command::Generate => generate(cfg),
        Command::Comass => comass(cfg),
    }
}

fn resolve_form(source: &FormSource) -> Result<ConstantKForm> {
    match source {
        FormSource::Path(p) => io::read_form(p),
        FormSource::Standard(s) => Ok(s.build()?),
        FormSource::Inline(f) => Ok(f.clone()),
    }
}

/// Reads the cloud and the calibration form, defaulting to the coordinate
/// volume form `e^{1…k}` when no form is configured.
pub fn load_inputs(cfg: &RunConfig) -> Result<(PointCloud, ConstantKForm)> {
    let input = cfg.input.as_ref().ok_or_else(|| anyhow!("an input cloud is required (--input)"))?;
    let (flat, n) = io::read_cloud_csv(input)?;
    if let Some(want) = cfg.n {
        if want != n {
            return Err(CoreError::DimensionMismatch {
                expected: want,
                found: n,
                context: "cloud ambient dimension",
            })
            .context(format!("reading {}", input.display()));
        }
    }
    let form = cfg.form.as_ref().map(resolve_form).transpose()?;
    let k = match (cfg.k, &form) {
        (Some(k), _) => k,
        (None, Some(f)) => f.k(),
        (None, None) => return Err(anyhow!("the intrinsic dimension is required (--k or a form)")),
    };
    let form = match form {
        Some(f) => f,
        None => ConstantKForm::coordinate_volume(n, k)?,
    };
    if form.n() != n {
        return Err(CoreError::DimensionMismatch {
            expected: n,
            found: form.n(),
            context: "form ambient dimension",
        }
        .into());
    }
    if form.k() != k {
        return Err(CoreError::DimensionMismatch {
            expected: k,
            found: form.k(),
            context: "form degree",
        }
        .into());
    }
    Ok((PointCloud::new(flat, n, k)?, form))
}

fn output_dir(cfg: &RunConfig) -> Result<Option<PathBuf>> {
    match &cfg.output {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            Ok(Some(dir.clone()))
        }
        None => Ok(None),
    }
}

fn create(dir: &Path, name: &str) -> Result<File> {
    let p = dir.join(name);
    File::create(&p).with_context(|| format!("creating {}", p.display()))
}

fn analyze(cfg: &RunConfig) -> Result<Outcome> {
    let (cloud, form) = load_inputs(cfg)?;
    let field = CalibrationField::constant(form);
    let mut cert = certify_hypotheses(&cloud, cloud.k(), &field, cfg.scales, &cfg.net_policy(cloud.n()))?;
    cert.judge(cfg.delta, cfg.alpha);
    if let Some(dir) = output_dir(cfg)? {
        io::write_json(&dir.join("certificate.json"), &cert)?;
        io::write_theta_profile(&cert, create(&dir, "theta_profile.csv")?)?;
        io::write_records_csv(&cert, create(&dir, "records.csv")?)?;
        std::fs::write(dir.join("profile.svg"), plot::profile_svg(&cert))?;
    }
    Outcome::of(&cert)
}

fn build(cfg: &RunConfig) -> Result<Outcome> {
    let (cloud, form) = load_inputs(cfg)?;
    let field = CalibrationField::constant(form);
    let family = build_family(&cloud, &field, &cfg.build_config())?;
    let report = check_properties(&family, &cloud, &field, cfg.delta)?;
    if let Some(dir) = output_dir(cfg)? {
        io::write_json(&dir.join("family_report.json"), &report)?;
        for level in &family.levels {
            io::write_surface_csv(&level.surface, create(&dir, &format!("surface_level{}.csv", level.a))?)?;
            if cloud.k() == 2 {
                io::write_ply(&level.surface, create(&dir, &format!("surface_level{}.ply", level.a))?)?;
            }
        }
    }
    Outcome::of(&report)
}

fn certify(cfg: &RunConfig) -> Result<Outcome> {
    let (cloud, form) = load_inputs(cfg)?;
    let field = CalibrationField::constant(form.clone());
    let mut cert = certify_hypotheses(&cloud, cloud.k(), &field, cfg.scales, &cfg.net_policy(cloud.n()))?;
    cert.judge(cfg.delta, cfg.alpha);
    let hypotheses = HypothesisSection::from_certificate(&cert, cfg.delta, cfg.alpha);
    let conclusions = match build_family(&cloud, &field, &cfg.build_config()).and_then(|family| {
        let report = check_properties(&family, &cloud, &field, cfg.delta)?;
        let calib = calibration_bounds_check(&family, &field, cfg.alpha, cfg.epsilon, cfg.delta, &cfg.constants)?;
        Ok((report, calib))
    }) {
        Ok((report, calib)) => ConclusionSection::from_reports(report, calib, cfg.constants.c_epsilon),
        Err(e) => ConclusionSection::skipped(e.to_string()),
    };
    let doc = CertifyDocument {
        config: cfg.clone(),
        cloud: CloudSummary {
            points: cloud.len(),
            n: cloud.n(),
            k: cloud.k(),
            resolution: cloud.resolution(),
        },
        form,
        verdict: hypotheses.certified,
        hypotheses,
        conclusions,
    };
    if let Some(dir) = output_dir(cfg)? {
        io::write_json(&dir.join("verdict.json"), &doc)?;
    }
    Outcome::of(&doc)
}

fn generate(cfg: &RunConfig) -> Result<Outcome> {
    let spec = cfg
        .generator
        .as_ref()
        .ok_or_else(|| anyhow!("a generator request is required (--spec or the config's generator)"))?;
    let dir = output_dir(cfg)?.ok_or_else(|| anyhow!("generate writes files; give an output directory (--output)"))?;
    let g = run_generator(spec)?;
    io::write_cloud_csv(&g.cloud, create(&dir, "cloud.csv")?)?;
    io::write_json(&dir.join("metadata.json"), &g.metadata)?;
    Outcome::of(&g.metadata)
}

fn comass(cfg: &RunConfig) -> Result<Outcome> {
    let form = resolve_form(cfg.form.as_ref().ok_or_else(|| anyhow!("a form is required (--form)"))?)?;
    let est = comass_search(
        &form,
        ComassConfig {
            samples: cfg.comass.samples,
            ascent_iters: cfg.comass.ascent_iters,
            seed: cfg.seed,
        },
    );
    let report = ComassReport {
        form,
        comass: est.value,
        frame: est.frame,
        samples: cfg.comass.samples,
        ascent_iters: cfg.comass.ascent_iters,
        seed: cfg.seed,
        tolerance: cfg.comass.tolerance,
        at_most_one: est.value <= 1.0 + cfg.comass.tolerance,
    };
    if let Some(dir) = output_dir(cfg)? {
        io::write_json(&dir.join("comass.json"), &report)?;
    }
    Outcome::of(&report)
}
