//! Scatter plots with classifier decision regions for 2-D runs.

use std::fmt::Write as _;

use gamo_core::data::Dataset;
use gamo_core::gamo::GamoModel;
use gamo_core::Tensor;

use crate::error::CliError;

pub const GRID: usize = 200;
const SIZE: f64 = 600.0;

const REGION_COLOURS: [&str; 10] = [
    "#fde0dd", "#deebf7", "#e5f5e0", "#fff7bc", "#efedf5", "#fee6ce", "#e0f3f8", "#f0f0f0", "#fcc5c0", "#c7e9c0",
];

/// Axis-aligned plotting window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Bounds {
    /// Bounding box of every point with a 10% margin.
    pub fn around(sets: &[&Tensor]) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for t in sets {
            for r in 0..t.rows() {
                let (x, y) = (t.get(r, 0), t.get(r, 1));
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
        let mx = ((x1 - x0) * 0.1).max(1e-6);
        let my = ((y1 - y0) * 0.1).max(1e-6);
        Self {
            x0: x0 - mx,
            x1: x1 + mx,
            y0: y0 - my,
            y1: y1 + my,
        }
    }

    /// Data coordinates of the centre of grid cell `(i, j)`; `j = 0` is the
    /// top row.
    pub fn cell_centre(&self, i: usize, j: usize) -> (f64, f64) {
        let x = self.x0 + (i as f64 + 0.5) * (self.x1 - self.x0) / GRID as f64;
        let y = self.y1 - (j as f64 + 0.5) * (self.y1 - self.y0) / GRID as f64;
        (x, y)
    }

    fn to_svg(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.x0) / (self.x1 - self.x0) * SIZE,
            (self.y1 - y) / (self.y1 - self.y0) * SIZE,
        )
    }
}

/// Predicted class of every grid cell, row-major from the top.
pub fn decision_grid(model: &GamoModel, bounds: &Bounds) -> Result<Vec<usize>, CliError> {
    let mut pts = Vec::with_capacity(GRID * GRID * 2);
    for j in 0..GRID {
        for i in 0..GRID {
            let (x, y) = bounds.cell_centre(i, j);
            pts.push(x);
            pts.push(y);
        }
    }
    Ok(model.predict(&Tensor::matrix(GRID * GRID, 2, pts)?)?)
}

/// SVG of the decision regions, the real points (majority grey, minority
/// coloured) and the synthetic points (crosses).
pub fn render_svg(title: &str, model: &GamoModel, train: &Dataset, synthetic: Option<&Dataset>) -> Result<String, CliError> {
    if train.dim() != 2 || model.input_dim != 2 {
        return Err(CliError::Usage(format!(
            "plots need 2-D data; this run has {}-D inputs",
            train.dim()
        )));
    }
    let mut sets = vec![train.features()];
    if let Some(s) = synthetic {
        sets.push(s.features());
    }
    let bounds = Bounds::around(&sets);
    let grid = decision_grid(model, &bounds)?;
    let cell = SIZE / GRID as f64;
    let majority = train.num_classes() - 1;

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{h}" viewBox="0 0 {SIZE} {h}" data-x0="{}" data-x1="{}" data-y0="{}" data-y1="{}" data-grid="{GRID}">"#,
        bounds.x0,
        bounds.x1,
        bounds.y0,
        bounds.y1,
        h = SIZE + 24.0
    )
    .ok();
    writeln!(svg, r#"<title>{}</title>"#, escape(title)).ok();
    writeln!(svg, r#"<g id="regions" shape-rendering="crispEdges">"#).ok();
    for j in 0..GRID {
        let row = &grid[j * GRID..(j + 1) * GRID];
        let mut start = 0;
        while start < GRID {
            let class = row[start];
            let mut end = start + 1;
            while end < GRID && row[end] == class {
                end += 1;
            }
            writeln!(
                svg,
                r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{}" data-row="{j}" data-col="{start}" data-cols="{}" data-class="{class}"/>"#,
                start as f64 * cell,
                j as f64 * cell,
                (end - start) as f64 * cell,
                cell,
                REGION_COLOURS[class % REGION_COLOURS.len()],
                end - start
            )
            .ok();
            start = end;
        }
    }
    writeln!(svg, "</g>").ok();

    writeln!(svg, r#"<g id="real">"#).ok();
    for r in 0..train.len() {
        let class = train.labels()[r];
        let (x, y) = bounds.to_svg(train.features().get(r, 0), train.features().get(r, 1));
        let (fill, radius, kind) = if class == majority {
            ("#636363", 1.8, "majority")
        } else {
            ("#d7301f", 2.6, "minority")
        };
        writeln!(
            svg,
            r#"<circle cx="{x:.3}" cy="{y:.3}" r="{radius}" fill="{fill}" data-kind="{kind}" data-class="{class}"/>"#
        )
        .ok();
    }
    writeln!(svg, "</g>").ok();

    writeln!(svg, r##"<g id="synthetic" stroke="#2171b5" stroke-width="1.2">"##).ok();
    if let Some(s) = synthetic {
        for r in 0..s.len() {
            let (px, py) = (s.features().get(r, 0), s.features().get(r, 1));
            let (x, y) = bounds.to_svg(px, py);
            writeln!(
                svg,
                r#"<path d="M{:.3} {:.3}L{:.3} {:.3}M{:.3} {:.3}L{:.3} {:.3}" data-kind="synthetic" data-class="{}" data-x="{px}" data-y="{py}"/>"#,
                x - 2.5,
                y - 2.5,
                x + 2.5,
                y + 2.5,
                x - 2.5,
                y + 2.5,
                x + 2.5,
                y - 2.5,
                s.labels()[r]
            )
            .ok();
        }
    }
    writeln!(svg, "</g>").ok();
    writeln!(
        svg,
        r#"<text x="6" y="{:.0}" font-family="sans-serif" font-size="13">{}</text>"#,
        SIZE + 17.0,
        escape(title)
    )
    .ok();
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
