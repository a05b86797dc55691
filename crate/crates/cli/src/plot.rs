//! SVG line charts and PNG renderings of descriptor fields.

use std::path::Path;
use std::sync::Once;

use anyhow::{anyhow, Result};
use image::{Rgb, RgbImage};
use plotters::prelude::*;
use plotters::style::{register_font, FontStyle};
use vri::descriptors::{LdField, NodeStatus};
use vri::manifolds::{ManifoldKind, ManifoldSet};

static FONT: &[u8] = include_bytes!("../assets/DejaVuSans.ttf");

fn ensure_font() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        // The font is bundled, so this cannot fail at run time.
        let _ = register_font("sans-serif", FontStyle::Normal, FONT);
    });
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub color: RGBColor,
    /// Dashed line without markers (fitted curves).
    pub dashed: bool,
}

impl Series {
    pub fn data(name: &str, points: Vec<(f64, f64)>, color: RGBColor) -> Self {
        Self {
            name: name.to_string(),
            points,
            color,
            dashed: false,
        }
    }

    pub fn fit(name: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.to_string(),
            points,
            color: BLACK,
            dashed: true,
        }
    }
}

pub const RED_: RGBColor = RGBColor(200, 30, 30);
pub const GREEN_: RGBColor = RGBColor(20, 150, 60);

fn bounds(series: &[Series]) -> ((f64, f64), (f64, f64)) {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return ((0.0, 1.0), (0.0, 1.0));
    }
    let pad = |a: f64, b: f64| {
        let d = if b > a { 0.05 * (b - a) } else { 0.05 * a.abs().max(1.0) };
        (a - d, b + d)
    };
    (pad(x0, x1), pad(y0, y1))
}

/// Quantity-versus-`c` chart with markers for data and dashed fits.
pub fn line_chart(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<()> {
    ensure_font();
    let err = |e: &dyn std::fmt::Display| anyhow!("rendering {}: {e}", path.display());
    let ((x0, x1), (y0, y1)) = bounds(series);
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| err(&e))?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .draw()
        .map_err(|e| err(&e))?;
    for s in series {
        let color = s.color;
        if s.dashed {
            chart
                .draw_series(DashedLineSeries::new(
                    s.points.iter().copied(),
                    8,
                    5,
                    color.stroke_width(2),
                ))
                .map_err(|e| err(&e))?
                .label(s.name.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        } else {
            chart
                .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(1)))
                .map_err(|e| err(&e))?;
            chart
                .draw_series(s.points.iter().map(|&p| Circle::new(p, 3, color.filled())))
                .map_err(|e| err(&e))?
                .label(s.name.as_str())
                .legend(move |(x, y)| Circle::new((x + 10, y), 3, color.filled()));
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .position(SeriesLabelPosition::UpperLeft)
        .draw()
        .map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))?;
    Ok(())
}

/// Grey-scale image of the total descriptor (logarithmic, clipped to the 1st
/// and 99th percentiles) with stable curves in blue and unstable curves in
/// red. Inaccessible nodes are black; `p_y` increases upwards.
pub fn field_png(path: &Path, field: &LdField, curves: Option<&ManifoldSet>) -> Result<()> {
    let (n_p, n_y) = field.status.dim();
    let scale = 400_usize.div_ceil(n_y.min(n_p));
    let scale = scale.max(1) as u32;
    let logs: Vec<f64> = field
        .total
        .iter()
        .zip(field.status.iter())
        .filter(|(v, s)| **s != NodeStatus::Inaccessible && **v > 0.0)
        .map(|(v, _)| v.ln())
        .collect();
    let mut sorted = logs.clone();
    sorted.sort_by(f64::total_cmp);
    let q = |f: f64| {
        sorted
            .get(((sorted.len() as f64 - 1.0) * f) as usize)
            .copied()
            .unwrap_or(0.0)
    };
    let (lo, hi) = (q(0.01), q(0.99));
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut img = RgbImage::new(n_y as u32 * scale, n_p as u32 * scale);
    let paint = |i: usize, j: usize, c: Rgb<u8>, img: &mut RgbImage| {
        let row = (n_p - 1 - i) as u32 * scale;
        for a in 0..scale {
            for b in 0..scale {
                img.put_pixel(j as u32 * scale + b, row + a, c);
            }
        }
    };
    for i in 0..n_p {
        for j in 0..n_y {
            let c = if field.status[[i, j]] == NodeStatus::Inaccessible {
                Rgb([0, 0, 0])
            } else {
                let v = field.total[[i, j]];
                let t = if v > 0.0 {
                    ((v.ln() - lo) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let g = (40.0 + 215.0 * t).round() as u8;
                Rgb([g, g, g])
            };
            paint(i, j, c, &mut img);
        }
    }
    if let Some(set) = curves {
        for curve in set.all() {
            let c = match curve.kind {
                ManifoldKind::Stable => Rgb([30, 60, 230]),
                ManifoldKind::Unstable => Rgb([230, 30, 30]),
            };
            for &(i, j) in &curve.nodes {
                paint(i, j, c, &mut img);
            }
        }
    }
    img.save(path).map_err(|e| anyhow!("writing {}: {e}", path.display()))
}
