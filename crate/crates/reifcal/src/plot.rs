//! SVG profile plot: worst θ, worst β∞ and the smallest calibration value
//! against the ball radius on a log₂ axis.
use reifcal_core::flatness::ReifenbergCertificate;
use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 56.0;

pub fn profile_svg(cert: &ReifenbergCertificate) -> String {
    let xs: Vec<f64> = cert.per_scale.iter().map(|s| s.r.log2()).collect();
    let series: [(&str, &str, Vec<f64>); 3] = [
        ("θ", "#c0392b", cert.per_scale.iter().map(|s| s.worst_theta).collect()),
        ("β∞", "#2471a3", cert.per_scale.iter().map(|s| s.worst_beta).collect()),
        ("Ω min", "#1e8449", cert.per_scale.iter().map(|s| s.min_omega).collect()),
    ];
    let finite = series.iter().flat_map(|s| s.2.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((0.0f64, 1.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (x0, x1) = match (xs.iter().copied().reduce(f64::min), xs.iter().copied().reduce(f64::max)) {
        (Some(a), Some(b)) if b > a => (a, b),
        (Some(a), _) => (a - 0.5, a + 0.5),
        _ => (-1.0, 0.0),
    };
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - lo) / (hi - lo) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (l, r, t, b) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
    let _ = writeln!(s, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" stroke="black" fill="none"/>"#);
    for (x, sc) in xs.iter().zip(&cert.per_scale) {
        let gx = px(*x);
        let _ = writeln!(s, r#"<line x1="{gx:.2}" y1="{b}" x2="{gx:.2}" y2="{:.2}" stroke="black"/>"#, b + 4.0);
        let _ = writeln!(
            s,
            r#"<text x="{gx:.2}" y="{:.2}" text-anchor="middle">2^-{}</text>"#,
            b + 18.0,
            sc.j
        );
    }
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let gy = py(v);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{gy:.2}" x2="{l}" y2="{gy:.2}" stroke="black"/>"#, l - 4.0);
        let _ = writeln!(s, r##"<line x1="{l}" y1="{gy:.2}" x2="{r}" y2="{gy:.2}" stroke="#ddd"/>"##);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#, l - 8.0, gy + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">ball radius r (log scale)</text>"#, (l + r) / 2.0, H - 12.0);
    for (i, (name, color, ys)) in series.iter().enumerate() {
        let pts: Vec<String> = xs
            .iter()
            .zip(ys)
            .filter(|(_, y)| y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(s, r#"<polyline points="{}" stroke="{color}" stroke-width="2" fill="none"/>"#, pts.join(" "));
            for p in &pts {
                let (cx, cy) = p.split_once(',').unwrap();
                let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
            }
        }
        let ly = 14.0 + 14.0 * i as f64;
        let lx = r - 90.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{name}</text>"#, lx + 24.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}
