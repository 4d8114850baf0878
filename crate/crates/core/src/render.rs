//! Choropleth SVG output: continuous value maps and categorical LISA
//! cluster maps.
//!
//! Lon/lat are projected with a plain equirectangular scaling onto the
//! viewport, which is adequate for country-scale legends. One `<path>`
//! per region carries a `data-region-id` attribute; the palette is fixed
//! so outputs can be hashed by regression tests.

use crate::autocorr::LisaLabel;
use crate::error::{Error, Result};
use crate::ingest::RegionSet;
use crate::scalar::Scalar;

/// Fixed categorical palette for LISA cluster maps.
pub mod palette {
    pub const HIGH_HIGH: &str = "#d7301f";
    pub const LOW_LOW: &str = "#08519c";
    pub const HIGH_LOW: &str = "#fc9272";
    pub const LOW_HIGH: &str = "#9ecae1";
    pub const INSIGNIFICANT: &str = "#bdbdbd";
}

/// Color of a LISA label in the fixed palette.
pub fn lisa_color(label: LisaLabel) -> &'static str {
    match label {
        LisaLabel::HighHigh => palette::HIGH_HIGH,
        LisaLabel::LowLow => palette::LOW_LOW,
        LisaLabel::HighLow => palette::HIGH_LOW,
        LisaLabel::LowHigh => palette::LOW_HIGH,
        LisaLabel::Insignificant => palette::INSIGNIFICANT,
    }
}

/// Rendering options; the defaults give an 800x600 map with a
/// light-yellow to dark-red value ramp.
#[derive(Debug, Clone)]
pub struct RenderOptions {
    pub width: f64,
    pub height: f64,
    pub ramp_low: String,
    pub ramp_high: String,
    pub title: Option<String>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            width: 800.0,
            height: 600.0,
            ramp_low: "#ffffcc".to_string(),
            ramp_high: "#800026".to_string(),
            title: None,
        }
    }
}

/// Data painted onto the map: a continuous column or LISA labels.
#[derive(Debug, Clone)]
pub enum ChoroplethData<'a, T> {
    Values(&'a [T]),
    Labels(&'a [LisaLabel]),
}

const MARGIN: f64 = 10.0;
const LEGEND_HEIGHT: f64 = 46.0;

/// Renders an SVG 1.1 choropleth. Every region must carry polygon
/// geometry; value maps reject constant columns because the color ramp
/// cannot be normalized.
pub fn render_choropleth<T: Scalar>(
    regions: &RegionSet<T>,
    data: &ChoroplethData<'_, T>,
    options: &RenderOptions,
) -> Result<String> {
    let n = regions.len();
    match data {
        ChoroplethData::Values(v) if v.len() != n => {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
            })
        }
        ChoroplethData::Labels(l) if l.len() != n => {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: l.len(),
            })
        }
        _ => {}
    }
    for region in regions.iter() {
        if region.geometry.is_none() {
            return Err(Error::NoGeometry(region.id.clone()));
        }
    }

    let fills = match data {
        ChoroplethData::Values(values) => value_fills(values, options)?,
        ChoroplethData::Labels(labels) => {
            labels.iter().map(|&l| lisa_color(l).to_string()).collect()
        }
    };

    // bounds over all ring coordinates
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for region in regions.iter() {
        for ring in &region.geometry.as_ref().unwrap().rings {
            for &(x, y) in ring {
                min_x = min_x.min(x.as_f64());
                max_x = max_x.max(x.as_f64());
                min_y = min_y.min(y.as_f64());
                max_y = max_y.max(y.as_f64());
            }
        }
    }
    let span_x = (max_x - min_x).max(f64::MIN_POSITIVE);
    let span_y = (max_y - min_y).max(f64::MIN_POSITIVE);
    let map_w = options.width - 2.0 * MARGIN;
    let map_h = options.height - 2.0 * MARGIN;
    let scale = (map_w / span_x).min(map_h / span_y);
    let offset_x = MARGIN + (map_w - span_x * scale) / 2.0;
    let offset_y = MARGIN + (map_h - span_y * scale) / 2.0;
    let project = |x: f64, y: f64| {
        (
            offset_x + (x - min_x) * scale,
            offset_y + (max_y - y) * scale,
        )
    };

    let total_height = options.height + LEGEND_HEIGHT;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
        w = options.width,
        h = total_height
    ));
    if let Some(title) = &options.title {
        svg.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
            options.width / 2.0,
            MARGIN + 6.0,
            escape_xml(title)
        ));
    }
    for (i, region) in regions.iter().enumerate() {
        let mut d = String::new();
        for ring in &region.geometry.as_ref().unwrap().rings {
            for (pos, &(x, y)) in ring.iter().enumerate() {
                let (px, py) = project(x.as_f64(), y.as_f64());
                if pos == 0 {
                    d.push_str(&format!("M {px:.2} {py:.2} "));
                } else {
                    d.push_str(&format!("L {px:.2} {py:.2} "));
                }
            }
            d.push_str("Z ");
        }
        svg.push_str(&format!(
            "  <path d=\"{}\" fill=\"{}\" stroke=\"#333333\" stroke-width=\"0.5\" \
             fill-rule=\"evenodd\" data-region-id=\"{}\"/>\n",
            d.trim_end(),
            fills[i],
            escape_xml(&region.id)
        ));
    }
    svg.push_str(&legend(data, options)?);
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn value_fills<T: Scalar>(values: &[T], options: &RenderOptions) -> Result<Vec<String>> {
    let low = parse_color(&options.ramp_low)?;
    let high = parse_color(&options.ramp_high)?;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        let v = v.as_f64();
        if !v.is_finite() {
            return Err(Error::NumericalFailure(
                "non-finite value in value map".into(),
            ));
        }
        min = min.min(v);
        max = max.max(v);
    }
    if min == max {
        return Err(Error::ZeroVariance("value column".into()));
    }
    Ok(values
        .iter()
        .map(|v| {
            let t = (v.as_f64() - min) / (max - min);
            lerp_color(low, high, t)
        })
        .collect())
}

fn legend<T: Scalar>(data: &ChoroplethData<'_, T>, options: &RenderOptions) -> Result<String> {
    let y0 = options.height + 8.0;
    let mut out = String::new();
    out.push_str("  <g font-size=\"11\">\n");
    match data {
        ChoroplethData::Values(values) => {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for v in *values {
                min = min.min(v.as_f64());
                max = max.max(v.as_f64());
            }
            out.push_str(
                "    <defs><linearGradient id=\"ramp\" x1=\"0\" y1=\"0\" x2=\"1\" y2=\"0\">\n",
            );
            out.push_str(&format!(
                "      <stop offset=\"0\" stop-color=\"{}\"/><stop offset=\"1\" stop-color=\"{}\"/>\n",
                escape_xml(&options.ramp_low),
                escape_xml(&options.ramp_high)
            ));
            out.push_str("    </linearGradient></defs>\n");
            out.push_str(&format!(
                "    <rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"200\" height=\"12\" fill=\"url(#ramp)\" stroke=\"#333333\"/>\n",
                x = MARGIN,
                y = y0
            ));
            out.push_str(&format!(
                "    <text x=\"{x:.2}\" y=\"{y:.2}\">{v}</text>\n",
                x = MARGIN,
                y = y0 + 26.0,
                v = min
            ));
            out.push_str(&format!(
                "    <text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"end\">{v}</text>\n",
                x = MARGIN + 200.0,
                y = y0 + 26.0,
                v = max
            ));
        }
        ChoroplethData::Labels(_) => {
            let entries = [
                ("HH", palette::HIGH_HIGH),
                ("LL", palette::LOW_LOW),
                ("HL", palette::HIGH_LOW),
                ("LH", palette::LOW_HIGH),
                ("Insignificant", palette::INSIGNIFICANT),
            ];
            let mut x = MARGIN;
            for (label, color) in entries {
                out.push_str(&format!(
                    "    <rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"12\" height=\"12\" fill=\"{color}\" stroke=\"#333333\"/>\n",
                    y = y0
                ));
                out.push_str(&format!(
                    "    <text x=\"{tx:.2}\" y=\"{ty:.2}\">{label}</text>\n",
                    tx = x + 16.0,
                    ty = y0 + 10.0
                ));
                x += 28.0 + 7.0 * label.len() as f64;
            }
        }
    }
    out.push_str("  </g>\n");
    Ok(out)
}

fn parse_color(s: &str) -> Result<(u8, u8, u8)> {
    let hex = s.strip_prefix('#').unwrap_or(s);
    if hex.len() != 6 {
        return Err(Error::InvalidConfig(format!("bad color `{s}`")));
    }
    let parse = |range: std::ops::Range<usize>| {
        u8::from_str_radix(&hex[range], 16)
            .map_err(|_| Error::InvalidConfig(format!("bad color `{s}`")))
    };
    Ok((parse(0..2)?, parse(2..4)?, parse(4..6)?))
}

fn lerp_color(low: (u8, u8, u8), high: (u8, u8, u8), t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(low.0, high.0),
        mix(low.1, high.1),
        mix(low.2, high.2)
    )
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
