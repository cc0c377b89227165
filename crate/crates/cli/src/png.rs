//! Raster previews of charts and maps. Shapes only: no axes or labels, so
//! no font stack is needed.

use std::path::Path;

use plotters::prelude::*;
use tvl_core::geo::{LonLat, ResultTable, Value};
use tvl_core::tvl::VisType;
use tvl_core::visgen::VisSpec;

type Error = Box<dyn std::error::Error>;

const MARGIN: i32 = 30;
const PALETTE: [RGBColor; 8] = [
    RGBColor(76, 114, 176),
    RGBColor(221, 132, 82),
    RGBColor(85, 168, 104),
    RGBColor(196, 78, 82),
    RGBColor(129, 114, 179),
    RGBColor(147, 120, 96),
    RGBColor(218, 139, 195),
    RGBColor(140, 140, 140),
];

fn numeric(v: &Value) -> Option<f64> {
    match v {
        Value::Timestamp(t) => Some(t.0.and_utc().timestamp() as f64),
        v => v.as_f64(),
    }
}

fn column(table: &ResultTable, spec: &VisSpec, channel: &str) -> Result<usize, Error> {
    let field = &spec.encodings.iter().find(|c| c.channel == channel).ok_or("missing encoding")?.field;
    table.column_index(field).ok_or_else(|| format!("no column `{field}`").into())
}

/// Linear map of `v` from `[lo, hi]` onto pixels `[a, b]`.
fn scale(v: f64, lo: f64, hi: f64, a: i32, b: i32) -> i32 {
    if hi <= lo {
        return (a + b) / 2;
    }
    a + ((v - lo) / (hi - lo) * (b - a) as f64).round() as i32
}

pub fn render_png(
    spec: &VisSpec,
    table: &ResultTable,
    outline: Option<&[LonLat]>,
    path: &Path,
    size: (u32, u32),
) -> Result<(), Error> {
    let root = BitMapBackend::new(path, size).into_drawing_area();
    root.fill(&WHITE)?;
    let (w, h) = (size.0 as i32, size.1 as i32);
    let (left, right, top, bottom) = (MARGIN, w - MARGIN, MARGIN, h - MARGIN);
    match spec.kind {
        VisType::Bar => {
            column(table, spec, "x")?;
            let y = column(table, spec, "y")?;
            let vals: Vec<f64> = table.rows.iter().map(|r| numeric(&r[y]).unwrap_or(0.0)).collect();
            let lo = vals.iter().copied().fold(0.0, f64::min);
            let hi = vals.iter().copied().fold(0.0, f64::max);
            let n = vals.len().max(1) as i32;
            let slot = (right - left) / n;
            let base = scale(0.0, lo, hi, bottom, top);
            for (i, v) in vals.iter().enumerate() {
                let x0 = left + i as i32 * slot + slot / 8;
                let top_px = scale(*v, lo, hi, bottom, top);
                let color = PALETTE[i % PALETTE.len()];
                root.draw(&Rectangle::new([(x0, base.min(top_px)), (x0 + slot * 3 / 4, base.max(top_px))], color.filled()))?;
            }
            root.draw(&PathElement::new(vec![(left, base), (right, base)], BLACK))?;
        }
        VisType::Line => {
            let (x, y) = (column(table, spec, "x")?, column(table, spec, "y")?);
            let mut rows: Vec<&Vec<Value>> = table.rows.iter().filter(|r| numeric(&r[y]).is_some()).collect();
            rows.sort_by(|a, b| a[x].cmp(&b[x]));
            let xs: Vec<f64> =
                rows.iter().enumerate().map(|(i, r)| numeric(&r[x]).unwrap_or(i as f64)).collect();
            let ys: Vec<f64> = rows.iter().map(|r| numeric(&r[y]).unwrap_or(0.0)).collect();
            let (xl, xh) = bounds(&xs);
            let (yl, yh) = bounds(&ys);
            let pts: Vec<(i32, i32)> = xs
                .iter()
                .zip(&ys)
                .map(|(a, b)| (scale(*a, xl, xh, left, right), scale(*b, yl, yh, bottom, top)))
                .collect();
            root.draw(&PathElement::new(pts, PALETTE[0].stroke_width(2)))?;
        }
        VisType::Pie => {
            let theta = column(table, spec, "theta")?;
            let vals: Vec<f64> = table.rows.iter().map(|r| numeric(&r[theta]).unwrap_or(0.0).max(0.0)).collect();
            let total: f64 = vals.iter().sum();
            let (cx, cy) = (w / 2, h / 2);
            let radius = ((right - left).min(bottom - top) / 2) as f64;
            let mut start = 0.0f64;
            for (i, v) in vals.iter().enumerate() {
                if total <= 0.0 || *v == 0.0 {
                    continue;
                }
                let sweep = v / total * std::f64::consts::TAU;
                let steps = ((sweep / 0.05).ceil() as usize).max(2);
                let mut pts = vec![(cx, cy)];
                for k in 0..=steps {
                    let a = start + sweep * k as f64 / steps as f64;
                    pts.push((cx + (radius * a.sin()).round() as i32, cy - (radius * a.cos()).round() as i32));
                }
                root.draw(&Polygon::new(pts, PALETTE[i % PALETTE.len()].filled()))?;
                start += sweep;
            }
        }
        VisType::Map => {
            let mut all: Vec<LonLat> = spec.lines.iter().flat_map(|l| l.coordinates.iter().copied()).collect();
            all.extend(outline.unwrap_or(&[]).iter().copied());
            let (xl, xh) = bounds(&all.iter().map(|p| p.lon).collect::<Vec<_>>());
            let (yl, yh) = bounds(&all.iter().map(|p| p.lat).collect::<Vec<_>>());
            // Same degrees-per-pixel on both axes.
            let span = (xh - xl).max(yh - yl).max(1e-9);
            let (cx, cy) = ((xl + xh) / 2.0, (yl + yh) / 2.0);
            let px = |p: &LonLat| {
                let side = (right - left).min(bottom - top);
                (
                    w / 2 + ((p.lon - cx) / span * side as f64).round() as i32,
                    h / 2 - ((p.lat - cy) / span * side as f64).round() as i32,
                )
            };
            if let Some(ring) = outline {
                root.draw(&PathElement::new(ring.iter().map(px).collect::<Vec<_>>(), BLACK))?;
            }
            for (i, line) in spec.lines.iter().enumerate() {
                let pts: Vec<(i32, i32)> = line.coordinates.iter().map(px).collect();
                root.draw(&PathElement::new(pts, PALETTE[i % PALETTE.len()].stroke_width(2)))?;
            }
        }
    }
    root.present()?;
    Ok(())
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}
