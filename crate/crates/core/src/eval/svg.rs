//! Minimal SVG renderings of the distance-error matrix and the
//! Bland-Altman scatter.

use std::fmt::Write as _;

use super::EvalReport;
use crate::schema::Region;

fn heat(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * t.sqrt()) as u8;
    let g = (255.0 * (1.0 - (2.0 * t - 1.0).abs()) * 0.8) as u8;
    let b = (255.0 * (1.0 - t)) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heatmap of the distance-error matrix with landmark labels.
pub fn matrix_svg(report: &EvalReport) -> String {
    let m = &report.distance_matrix;
    let n = m.names.len();
    let cell = 12.0;
    let margin = 50.0;
    let size = margin + cell * n as f64 + 10.0;
    let max = m.values.iter().flatten().copied().fold(0.0, f64::max).max(1e-12);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="sans-serif" font-size="7">"#
    )
    .expect("string write");
    for (i, row) in m.values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{cell}" height="{cell}" fill="{}"><title>{}-{}: {v:.3} mm</title></rect>"#,
                margin + j as f64 * cell,
                margin + i as f64 * cell,
                heat(v / max),
                m.names[i],
                m.names[j]
            )
            .expect("string write");
        }
        let y = margin + (i as f64 + 0.8) * cell;
        writeln!(s, r#"<text x="2" y="{y:.1}">{}</text>"#, m.names[i]).expect("string write");
        writeln!(
            s,
            r#"<text transform="translate({:.1},{:.1}) rotate(-90)">{}</text>"#,
            margin + (i as f64 + 0.8) * cell,
            margin - 2.0,
            m.names[i]
        )
        .expect("string write");
    }
    writeln!(s, r#"<text x="2" y="10" font-size="9">mean {:.3} mm, max {max:.3} mm</text>"#, m.mean).expect("string write");
    s.push_str("</svg>\n");
    s
}

/// Difference-vs-mean scatter, one panel per region, with mean and limits.
pub fn bland_altman_svg(report: &EvalReport) -> String {
    let ba = &report.bland_altman;
    let (w, h, pad) = (300.0, 220.0, 30.0);
    let total_w = w * ba.groups.len().max(1) as f64;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{h}" font-family="sans-serif" font-size="9">"#
    )
    .expect("string write");
    for (gi, g) in ba.groups.iter().enumerate() {
        let pts: Vec<_> = ba.scatter.iter().filter(|p| p.region == g.region).collect();
        let (xmin, xmax) = pts
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.mean), b.max(p.mean)));
        let ylim = pts
            .iter()
            .map(|p| p.difference.abs())
            .fold(g.pooled.upper.abs().max(g.pooled.lower.abs()), f64::max)
            .max(1e-9);
        let xspan = (xmax - xmin).max(1e-9);
        let ox = gi as f64 * w;
        let px = |x: f64| ox + pad + (x - xmin) / xspan * (w - 2.0 * pad);
        let py = |y: f64| h / 2.0 - y / ylim * (h / 2.0 - pad);
        let title = match g.region {
            Region::Midline => "midline",
            Region::Right => "right",
            Region::Left => "left",
        };
        writeln!(s, r#"<text x="{:.1}" y="14">{title}</text>"#, ox + pad).expect("string write");
        for p in &pts {
            writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="1.2" fill="#4a7ab0"/>"##, px(p.mean), py(p.difference))
                .expect("string write");
        }
        for (y, color) in [(g.pooled.mean_difference, "#555"), (g.pooled.lower, "#c33"), (g.pooled.upper, "#c33")] {
            writeln!(
                s,
                r#"<line x1="{:.1}" x2="{:.1}" y1="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="4 2"/>"#,
                ox + pad,
                ox + w - pad,
                py(y),
                py(y)
            )
            .expect("string write");
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::LandmarkSet;
    use crate::eval::{evaluate, MeasurementSpec};
    use crate::geometry::Point3;
    use crate::schema::facial_names;

    #[test]
    fn renders_valid_looking_svg() {
        let names = facial_names();
        let gt = LandmarkSet::new(
            names.clone(),
            (0..50).map(|k| Point3::new(k as f64, (k * k % 17) as f64, (k % 5) as f64)).collect(),
        )
        .unwrap();
        let pred = gt
            .with_coords(gt.coords().iter().enumerate().map(|(k, p)| p + nalgebra::Vector3::new(0.1 * (k % 3) as f64, 0.0, 0.2)).collect())
            .unwrap();
        let r = evaluate(&[pred], &[gt], &MeasurementSpec::default()).unwrap();
        let m = matrix_svg(&r);
        assert!(m.starts_with("<svg") && m.trim_end().ends_with("</svg>"));
        assert_eq!(m.matches("<rect").count(), 2500);
        let b = bland_altman_svg(&r);
        assert_eq!(b.matches("<circle").count(), 150);
    }
}
