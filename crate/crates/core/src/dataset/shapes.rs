//! Synthetic geometric shapes: 3 shapes × 3 deformations × 5 colors × 3
//! stroke thicknesses, rasterized for features and drawn as SVG for people.
//!
//! Canvas size, base radius, stretch factors, stroke widths and jitter are
//! conventions of this crate.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Item, LatentHierarchy, LatentNode, Stimulus};
use crate::Result;

/// Raster side length in pixels.
pub const CANVAS: usize = 32;
const BASE_RADIUS: f64 = 9.0;
const SUPERSAMPLE: usize = 4;
const ELLIPSE_SEGMENTS: usize = 64;
const MAX_JITTER: f64 = 1.5;
const MAX_SCALE_JITTER: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Circle,
    Rectangle,
    Triangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deformation {
    Unstretched,
    Vstretch,
    Hstretch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeColor {
    Red,
    Green,
    Blue,
    Yellow,
    Purple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Thickness {
    Thin,
    Medium,
    Thick,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [Self::Circle, Self::Rectangle, Self::Triangle];

    pub fn name(self) -> &'static str {
        match self {
            Self::Circle => "circle",
            Self::Rectangle => "rectangle",
            Self::Triangle => "triangle",
        }
    }
}

impl Deformation {
    pub const ALL: [Deformation; 3] = [Self::Unstretched, Self::Vstretch, Self::Hstretch];

    pub fn name(self) -> &'static str {
        match self {
            Self::Unstretched => "unstretched",
            Self::Vstretch => "vstretch",
            Self::Hstretch => "hstretch",
        }
    }

    /// Horizontal and vertical scale factors.
    pub fn stretch(self) -> (f64, f64) {
        match self {
            Self::Unstretched => (1.0, 1.0),
            Self::Vstretch => (0.7, 1.3),
            Self::Hstretch => (1.3, 0.7),
        }
    }
}

impl ShapeColor {
    pub const ALL: [ShapeColor; 5] = [
        Self::Red,
        Self::Green,
        Self::Blue,
        Self::Yellow,
        Self::Purple,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Red => "red",
            Self::Green => "green",
            Self::Blue => "blue",
            Self::Yellow => "yellow",
            Self::Purple => "purple",
        }
    }

    pub fn rgb(self) -> [f64; 3] {
        match self {
            Self::Red => [0.9, 0.1, 0.1],
            Self::Green => [0.1, 0.7, 0.2],
            Self::Blue => [0.1, 0.2, 0.9],
            Self::Yellow => [0.95, 0.85, 0.1],
            Self::Purple => [0.6, 0.2, 0.75],
        }
    }

    fn hex(self) -> String {
        let [r, g, b] = self.rgb().map(|c| (c * 255.0).round() as u8);
        format!("#{r:02x}{g:02x}{b:02x}")
    }
}

impl Thickness {
    pub const ALL: [Thickness; 3] = [Self::Thin, Self::Medium, Self::Thick];

    pub fn name(self) -> &'static str {
        match self {
            Self::Thin => "thin",
            Self::Medium => "medium",
            Self::Thick => "thick",
        }
    }

    /// Stroke width in canvas pixels.
    pub fn width(self) -> f64 {
        match self {
            Self::Thin => 1.0,
            Self::Medium => 2.0,
            Self::Thick => 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeStimulus {
    pub kind: ShapeKind,
    pub deformation: Deformation,
    pub color: ShapeColor,
    pub thickness: Thickness,
    /// Offset of the shape center from the canvas center, in pixels.
    #[serde(default)]
    pub offset: (f64, f64),
    /// Uniform size multiplier around 1.
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl ShapeStimulus {
    pub fn new(
        kind: ShapeKind,
        deformation: Deformation,
        color: ShapeColor,
        thickness: Thickness,
    ) -> Self {
        Self {
            kind,
            deformation,
            color,
            thickness,
            offset: (0.0, 0.0),
            scale: 1.0,
        }
    }

    /// Ground-truth label path under the shape-bias hierarchy; color is not
    /// part of it.
    pub fn label_path(&self) -> Vec<String> {
        vec![
            self.kind.name().to_string(),
            self.deformation.name().to_string(),
            self.thickness.name().to_string(),
        ]
    }

    fn center(&self) -> (f64, f64) {
        let c = CANVAS as f64 / 2.0;
        (c + self.offset.0, c + self.offset.1)
    }

    fn radii(&self) -> (f64, f64) {
        let (sx, sy) = self.deformation.stretch();
        (BASE_RADIUS * sx * self.scale, BASE_RADIUS * sy * self.scale)
    }

    /// Closed outline polygon in canvas coordinates.
    fn outline(&self) -> Vec<(f64, f64)> {
        let (cx, cy) = self.center();
        let (rx, ry) = self.radii();
        match self.kind {
            ShapeKind::Circle => (0..ELLIPSE_SEGMENTS)
                .map(|i| {
                    let t = i as f64 / ELLIPSE_SEGMENTS as f64 * std::f64::consts::TAU;
                    (cx + rx * t.cos(), cy + ry * t.sin())
                })
                .collect(),
            ShapeKind::Rectangle => vec![
                (cx - rx, cy - ry),
                (cx + rx, cy - ry),
                (cx + rx, cy + ry),
                (cx - rx, cy + ry),
            ],
            ShapeKind::Triangle => triangle_points(cx, cy, rx, ry).to_vec(),
        }
    }
}

fn triangle_points(cx: f64, cy: f64, rx: f64, ry: f64) -> [(f64, f64); 3] {
    [
        (cx, cy - ry),
        (cx + rx, cy + 0.8 * ry),
        (cx - rx, cy + 0.8 * ry),
    ]
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Renders the stroked outline onto a black `CANVAS × CANVAS` RGB raster with
/// values in `[0, 1]`, flattened row-major as (y, x, channel).
pub fn rasterize(shape: &ShapeStimulus) -> Vec<f64> {
    let outline = shape.outline();
    let half = shape.thickness.width() / 2.0;
    let rgb = shape.color.rgb();
    let samples = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    let mut out = Vec::with_capacity(CANVAS * CANVAS * 3);
    for y in 0..CANVAS {
        for x in 0..CANVAS {
            let mut hits = 0usize;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let p = (
                        x as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64,
                        y as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64,
                    );
                    let near = (0..outline.len()).any(|i| {
                        segment_distance(p, outline[i], outline[(i + 1) % outline.len()]) <= half
                    });
                    hits += near as usize;
                }
            }
            let coverage = hits as f64 / samples;
            out.extend(rgb.iter().map(|c| c * coverage));
        }
    }
    out
}

/// Generates the 135-item shape dataset and its shape-bias ground truth
/// (shape, then deformation, then thickness). The seed controls small
/// per-item position and size jitter only.
pub fn generate_shapes(seed: u64) -> Result<(Dataset, LatentHierarchy)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(135);
    for kind in ShapeKind::ALL {
        for deformation in Deformation::ALL {
            for color in ShapeColor::ALL {
                for thickness in Thickness::ALL {
                    let mut shape = ShapeStimulus::new(kind, deformation, color, thickness);
                    shape.offset = (
                        rng.random_range(-MAX_JITTER..=MAX_JITTER),
                        rng.random_range(-MAX_JITTER..=MAX_JITTER),
                    );
                    shape.scale =
                        1.0 + rng.random_range(-MAX_SCALE_JITTER..=MAX_SCALE_JITTER);
                    let id = items.len() as crate::ItemId;
                    items.push(Item {
                        id,
                        features: rasterize(&shape),
                        label_path: Some(shape.label_path()),
                        stimulus: Some(Stimulus::Shape(shape)),
                    });
                }
            }
        }
    }
    let dataset = Dataset::new(format!("shapes-{seed}"), items)?;
    Ok((dataset, shape_bias_hierarchy()))
}

/// Shape → deformation → thickness, with color ignored.
pub fn shape_bias_hierarchy() -> LatentHierarchy {
    let root = LatentNode::branch(
        "shapes",
        ShapeKind::ALL
            .iter()
            .map(|k| {
                LatentNode::branch(
                    k.name(),
                    Deformation::ALL
                        .iter()
                        .map(|d| {
                            LatentNode::branch(
                                d.name(),
                                Thickness::ALL
                                    .iter()
                                    .map(|t| LatentNode::leaf(t.name()))
                                    .collect(),
                            )
                        })
                        .collect(),
                )
            })
            .collect(),
    );
    LatentHierarchy::new(root).expect("static hierarchy is valid")
}

/// Standalone SVG document for an item. Items without a drawable stimulus get
/// a placeholder showing the item id.
pub fn render_stimulus(item: &Item) -> String {
    let size = CANVAS * 4;
    let mut svg = format!(
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {CANVAS} {CANVAS}">"##
    );
    svg.push_str(r##"<rect x="0" y="0" width="32" height="32" fill="#ffffff"/>"##);
    match &item.stimulus {
        Some(Stimulus::Shape(shape)) => {
            let (cx, cy) = shape.center();
            let (rx, ry) = shape.radii();
            let style = format!(
                r#"fill="none" stroke="{}" stroke-width="{:.3}""#,
                shape.color.hex(),
                shape.thickness.width()
            );
            match shape.kind {
                ShapeKind::Circle => {
                    let _ = write!(
                        svg,
                        r#"<ellipse cx="{cx:.3}" cy="{cy:.3}" rx="{rx:.3}" ry="{ry:.3}" {style}/>"#
                    );
                }
                ShapeKind::Rectangle => {
                    let _ = write!(
                        svg,
                        r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" {style}/>"#,
                        cx - rx,
                        cy - ry,
                        2.0 * rx,
                        2.0 * ry
                    );
                }
                ShapeKind::Triangle => {
                    let points = triangle_points(cx, cy, rx, ry)
                        .iter()
                        .map(|(x, y)| format!("{x:.3},{y:.3}"))
                        .collect::<Vec<_>>()
                        .join(" ");
                    let _ = write!(svg, r#"<polygon points="{points}" {style}/>"#);
                }
            }
        }
        Some(Stimulus::Image { href }) => {
            let href = xml_escape(href);
            let _ = write!(
                svg,
                r#"<image href="{href}" x="0" y="0" width="32" height="32"/>"#
            );
        }
        None => {
            let _ = write!(
                svg,
                r##"<text x="16" y="19" font-size="8" text-anchor="middle" fill="#333333">#{}</text>"##,
                item.id
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
