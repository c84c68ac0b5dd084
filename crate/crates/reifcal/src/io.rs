//! File formats: CSV clouds, form documents, surface exports, JSON reports.
use anyhow::{bail, Context, Result};
use reifcal_core::builder::ParamSurface;
use reifcal_core::flatness::ReifenbergCertificate;
use reifcal_core::forms::StandardForm;
use reifcal_core::{ConstantKForm, PointCloud};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

/// Parses a cloud: one point per row, `#` comment lines, the column count
/// of the first data row fixes the ambient dimension.
pub fn parse_cloud_csv<R: Read>(reader: R) -> Result<(Vec<f64>, usize)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut flat = Vec::new();
    let mut n = None;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("reading CSV record {}", row + 1))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let dim = *n.get_or_insert(rec.len());
        if rec.len() != dim {
            let line = rec.position().map_or(0, |p| p.line());
            bail!("line {line}: expected {dim} columns, found {}", rec.len());
        }
        for field in rec.iter() {
            let v: f64 = field.parse().with_context(|| {
                let line = rec.position().map_or(0, |p| p.line());
                format!("line {line}: '{field}' is not a number")
            })?;
            if !v.is_finite() {
                bail!("non-finite coordinate '{field}'");
            }
            flat.push(v);
        }
    }
    match n {
        Some(n) => Ok((flat, n)),
        None => bail!("the cloud file has no data rows"),
    }
}

pub fn read_cloud_csv(path: &Path) -> Result<(Vec<f64>, usize)> {
    let f = File::open(path).with_context(|| format!("opening cloud {}", path.display()))?;
    parse_cloud_csv(f).with_context(|| format!("parsing cloud {}", path.display()))
}

pub fn write_cloud_csv<W: Write>(cloud: &PointCloud, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "# n = {}, k = {}, points = {}", cloud.n(), cloud.k(), cloud.len())?;
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..cloud.len() {
        wtr.write_record(cloud.point(i).iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FormFile {
    Terms(ConstantKForm),
    Standard(StandardForm),
}

/// Reads a form file in either the `{n, k, terms}` layout or as a
/// catalogue entry.
pub fn parse_form(text: &str) -> Result<ConstantKForm> {
    if let Ok(f) = serde_json::from_str::<FormFile>(text) {
        return match f {
            FormFile::Terms(f) => Ok(f),
            FormFile::Standard(s) => Ok(s.build()?),
        };
    }
    // report the error of the explicit layout
    serde_json::from_str::<ConstantKForm>(text).context("form document")
}

pub fn read_form(path: &Path) -> Result<ConstantKForm> {
    let text = std::fs::read_to_string(path).with_context(|| format!("opening form {}", path.display()))?;
    parse_form(&text).with_context(|| format!("parsing form {}", path.display()))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// One row per scale: exponent, radius, centres, worst θ, worst β∞, min Ω.
pub fn write_theta_profile<W: Write>(cert: &ReifenbergCertificate, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["j", "r", "centers", "worst_theta", "worst_beta", "min_omega"])?;
    for s in &cert.per_scale {
        wtr.write_record([
            s.j.to_string(),
            s.r.to_string(),
            s.centers.to_string(),
            s.worst_theta.to_string(),
            s.worst_beta.to_string(),
            s.min_omega.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// One row per tested ball.
pub fn write_records_csv<W: Write>(cert: &ReifenbergCertificate, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=cert.n).map(|i| format!("x{i}")).collect();
    header.extend(["r", "theta", "beta_inf", "omega", "points", "degenerate"].map(String::from));
    wtr.write_record(&header)?;
    for r in &cert.records {
        let mut row: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
        row.extend([
            r.r.to_string(),
            r.theta.to_string(),
            r.beta_inf.to_string(),
            r.omega_value.to_string(),
            r.points.to_string(),
            r.degenerate.to_string(),
        ]);
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Grid coordinates `u1..uk`, image `x1..xn` and the active flag per node.
pub fn write_surface_csv<W: Write>(surface: &ParamSurface, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(BufWriter::new(w));
    let mut header: Vec<String> = (1..=surface.k()).map(|i| format!("u{i}")).collect();
    header.extend((1..=surface.n()).map(|i| format!("x{i}")));
    header.push("active".into());
    wtr.write_record(&header)?;
    for idx in 0..surface.node_count() {
        let mut row: Vec<String> = surface.param(idx).iter().map(|v| v.to_string()).collect();
        row.extend(surface.position(idx).iter().map(|v| v.to_string()));
        row.push(u8::from(surface.is_active(idx)).to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// ASCII PLY quad mesh of a two-dimensional surface. The first three
/// coordinates are `x y z`; further coordinates follow as `c4, c5, …`.
pub fn write_ply<W: Write>(surface: &ParamSurface, w: W) -> Result<()> {
    if surface.k() != 2 {
        bail!("PLY export needs a two-dimensional surface, got k = {}", surface.k());
    }
    let n = surface.n();
    let mut w = BufWriter::new(w);
    let mut ids = vec![usize::MAX; surface.node_count()];
    let mut count = 0;
    for (idx, slot) in ids.iter_mut().enumerate() {
        if surface.is_active(idx) {
            *slot = count;
            count += 1;
        }
    }
    let faces: Vec<Vec<usize>> = (0..surface.cell_count())
        .map(|c| surface.cell_corners(c))
        .filter(|c| surface.cell_active(c))
        .collect();
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {count}")?;
    let names = ["x", "y", "z"];
    for i in 0..n.max(3) {
        match names.get(i) {
            Some(name) => writeln!(w, "property double {name}")?,
            None => writeln!(w, "property double c{}", i + 1)?,
        }
    }
    writeln!(w, "element face {}\nproperty list uchar int vertex_indices\nend_header", faces.len())?;
    for (idx, &id) in ids.iter().enumerate() {
        if id == usize::MAX {
            continue;
        }
        let p = surface.position(idx);
        let mut coords: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        coords.resize(n.max(3), "0".into());
        writeln!(w, "{}", coords.join(" "))?;
    }
    for c in faces {
        // corners come in bit order (00, 10, 01, 11); walk them as a loop
        writeln!(w, "4 {} {} {} {}", ids[c[0]], ids[c[1]], ids[c[3]], ids[c[2]])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cloud_csv_parses_comments_and_dimension() {
        let text = "# header\n1, 2, 3\n\n# mid\n4,5,6\n";
        let (flat, n) = parse_cloud_csv(text.as_bytes()).unwrap();
        assert_eq!(n, 3);
        assert_eq!(flat, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn cloud_csv_errors() {
        assert!(parse_cloud_csv("1,2,3\n4,5\n".as_bytes()).is_err());
        assert!(parse_cloud_csv("1,x\n".as_bytes()).is_err());
        assert!(parse_cloud_csv("# only comments\n".as_bytes()).is_err());
        assert!(parse_cloud_csv("1,inf\n".as_bytes()).is_err());
    }

    #[test]
    fn cloud_csv_round_trip() {
        let cloud = PointCloud::new(vec![0.1, -2.5, 1e-17, 3.0, 0.3, 7.25], 3, 2).unwrap();
        let mut buf = Vec::new();
        write_cloud_csv(&cloud, &mut buf).unwrap();
        let (flat, n) = parse_cloud_csv(buf.as_slice()).unwrap();
        assert_eq!(n, 3);
        assert_eq!(flat, cloud.flat());
    }

    #[test]
    fn forms_parse_both_layouts() {
        let a = parse_form(r#"{"n": 4, "k": 2, "terms": [{"indices": [1, 2], "coeff": 1.0}, {"indices": [3, 4], "coeff": 1.0}]}"#).unwrap();
        let b = parse_form(r#"{"name": "kahler", "n_complex": 2, "k": 1}"#).unwrap();
        assert_eq!(a, b);
        assert!(parse_form(r#"{"n": 4, "k": 2, "terms": [{"indices": [2, 1], "coeff": 1.0}]}"#).is_err());
        assert!(parse_form(r#"{"n": 4, "k": 2, "terms": [], "extra": 0}"#).is_err());
    }
}
