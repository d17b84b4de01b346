//! Rasterized 2-D partition rendering to SVG.
//!
//! Each pixel is labeled by evaluating the partition's assignment at the
//! pixel center, so the picture agrees with the kernels by construction.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{
    integrated_clusters, lr_centers, lr_power_diagram, prototypes, train_power_lr, train_voronoi_lr, TrainOptions,
};
use crate::data::{EpisodeDraw, FeatureBank};
use crate::error::{Error, Result};
use crate::geometry::{
    assign_ccvd, assign_civd, assign_pd, assign_vd, CenterSet, Cluster, InfluenceParams, Point, WeightedCenterSet,
};
use crate::pipeline::InfluenceSpec;

/// A 2-D partition to rasterize.
#[derive(Debug, Clone)]
pub enum Partition {
    Vd(CenterSet<f64>),
    Pd(WeightedCenterSet<f64>),
    Civd(Vec<Cluster<f64>>, InfluenceParams<f64>),
    /// Every pixel is the query cluster made of `L` copies of itself.
    Ccvd(Vec<Cluster<f64>>, InfluenceParams<f64>),
}

impl Partition {
    fn sites(&self) -> Vec<&Point<f64>> {
        match self {
            Partition::Vd(c) => c.centers().iter().collect(),
            Partition::Pd(w) => w.centers().centers().iter().collect(),
            Partition::Civd(cl, _) | Partition::Ccvd(cl, _) => cl.iter().flat_map(|c| c.members()).collect(),
        }
    }

    fn dim(&self) -> usize {
        self.sites().first().map_or(0, |p| p.dim())
    }

    /// Cell index of the point `z`.
    pub fn assign(&self, z: &[f64]) -> Result<usize> {
        match self {
            Partition::Vd(c) => assign_vd(c, z),
            Partition::Pd(w) => assign_pd(w, z),
            Partition::Civd(cl, p) => assign_civd(cl, z, p),
            Partition::Ccvd(cl, p) => {
                let l = cl.first().map_or(0, Cluster::len);
                let q = Cluster::new(vec![Point::new(z.to_vec())?; l])?;
                assign_ccvd(cl, &q, p)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOptions {
    pub width: usize,
    pub height: usize,
    /// Padding added on each side, as a fraction of the sites' extent.
    pub pad: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { width: 512, height: 512, pad: 0.2 }
    }
}

/// Per-pixel cell labels over an axis-aligned window, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub width: usize,
    pub height: usize,
    pub cells: Vec<usize>,
}

impl Raster {
    /// World coordinates of the center of pixel `(col, row)`.
    pub fn pixel_center(&self, col: usize, row: usize) -> [f64; 2] {
        let dx = (self.x_range.1 - self.x_range.0) / self.width as f64;
        let dy = (self.y_range.1 - self.y_range.0) / self.height as f64;
        [self.x_range.0 + (col as f64 + 0.5) * dx, self.y_range.1 - (row as f64 + 0.5) * dy]
    }

    pub fn cell(&self, col: usize, row: usize) -> usize {
        self.cells[row * self.width + col]
    }

    /// Maps world coordinates to fractional pixel coordinates.
    fn to_pixel(&self, p: &[f64]) -> (f64, f64) {
        let fx = (p[0] - self.x_range.0) / (self.x_range.1 - self.x_range.0) * self.width as f64;
        let fy = (self.y_range.1 - p[1]) / (self.y_range.1 - self.y_range.0) * self.height as f64;
        (fx, fy)
    }
}

fn padded(lo: f64, hi: f64, pad: f64, fallback: f64) -> (f64, f64) {
    let extent = if hi > lo { hi - lo } else { fallback };
    let mid = if hi > lo { 0.0 } else { extent / 2.0 };
    (lo - mid - pad * extent, hi + mid + pad * extent)
}

/// Labels every pixel of the padded bounding box of the partition's sites.
pub fn rasterize(partition: &Partition, opts: &RenderOptions) -> Result<Raster> {
    if partition.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: partition.dim() });
    }
    if opts.width == 0 || opts.height == 0 {
        return Err(Error::param("width/height", "must be positive"));
    }
    if !(opts.pad >= 0.0 && opts.pad.is_finite()) {
        return Err(Error::param("pad", "must be finite and nonnegative"));
    }
    let sites = partition.sites();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &sites {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    // a degenerate axis borrows the other axis' extent, or 1
    let fallback = [x1 - x0, y1 - y0].into_iter().fold(0.0, f64::max);
    let fallback = if fallback > 0.0 { fallback } else { 1.0 };
    let mut raster = Raster {
        x_range: padded(x0, x1, opts.pad, fallback),
        y_range: padded(y0, y1, opts.pad, fallback),
        width: opts.width,
        height: opts.height,
        cells: Vec::new(),
    };
    let rows = (0..opts.height)
        .into_par_iter()
        .map(|row| (0..opts.width).map(|col| partition.assign(&raster.pixel_center(col, row))).collect())
        .collect::<Result<Vec<Vec<usize>>>>()?;
    raster.cells = rows.concat();
    Ok(raster)
}

const PALETTE: [&str; 10] =
    ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"];

/// Fill color of cell `k`; the first ten are fixed, later ones walk the hue circle.
pub fn cell_color(k: usize) -> String {
    match PALETTE.get(k) {
        Some(c) => (*c).to_string(),
        None => format!("hsl({},60%,60%)", (k * 137) % 360),
    }
}

/// SVG 1.1 document: run-length encoded cell rows, then support squares.
pub fn to_svg(raster: &Raster, support: &[(Point<f64>, usize)]) -> String {
    let (w, h) = (raster.width, raster.height);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" shape-rendering="crispEdges">"#
    );
    let _ = writeln!(
        s,
        r#"<desc>x in [{}, {}], y in [{}, {}]</desc>"#,
        raster.x_range.0, raster.x_range.1, raster.y_range.0, raster.y_range.1
    );
    s.push_str("<g class=\"cells\">\n");
    for row in 0..h {
        let mut col = 0;
        while col < w {
            let k = raster.cell(col, row);
            let start = col;
            while col < w && raster.cell(col, row) == k {
                col += 1;
            }
            let _ = writeln!(
                s,
                r#"<rect class="cell" data-class="{k}" x="{start}" y="{row}" width="{}" height="1" fill="{}"/>"#,
                col - start,
                cell_color(k)
            );
        }
    }
    s.push_str("</g>\n<g class=\"support\">\n");
    let side = (w.min(h) as f64 / 64.0).max(3.0);
    for (p, k) in support {
        if p.dim() != 2 {
            continue;
        }
        let (fx, fy) = raster.to_pixel(p);
        let _ = writeln!(
            s,
            r##"<rect class="support" data-class="{k}" x="{:.3}" y="{:.3}" width="{side:.3}" height="{side:.3}" fill="{}" stroke="#000000" stroke-width="1"/>"##,
            fx - side / 2.0,
            fy - side / 2.0,
            cell_color(*k)
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

/// Which partition of an episode to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    /// Nearest class prototype.
    #[default]
    Vd,
    /// Power diagram of a Power-LR head trained on the support set.
    Pd,
    /// Two-member clusters of prototype and Voronoi-LR center.
    Civd,
    /// One prototype per listed view, paired positionally.
    Ccvd,
}

/// How to turn one episode of a 2-D bank into a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeRender {
    pub partition: PartitionKind,
    /// First entry is the view drawn for VD/PD/CIVD; CCVD uses all of them.
    pub views: Vec<usize>,
    pub train: TrainOptions,
    pub influence: InfluenceSpec,
}

impl Default for EpisodeRender {
    fn default() -> Self {
        EpisodeRender {
            partition: PartitionKind::Vd,
            views: vec![0],
            train: TrainOptions::default(),
            influence: InfluenceSpec::default(),
        }
    }
}

/// Support points with their local class.
pub type LabeledPoints = Vec<(Point<f64>, usize)>;

/// Partition of the episode's raw features plus its labeled support points
/// (from the first view).
pub fn episode_partition(
    bank: &FeatureBank,
    draw: &EpisodeDraw,
    spec: &EpisodeRender,
) -> Result<(Partition, LabeledPoints)> {
    if bank.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: bank.dim() });
    }
    let &view = spec.views.first().ok_or_else(|| Error::Config("render needs at least one view".into()))?;
    let ep = draw.episode::<f64>(bank, view)?;
    let support = ep.support().to_vec();
    let partition = match spec.partition {
        PartitionKind::Vd => Partition::Vd(prototypes(&ep)),
        PartitionKind::Pd => Partition::Pd(lr_power_diagram(&train_power_lr(&ep, &spec.train)?)?),
        PartitionKind::Civd => {
            let lr = lr_centers(&train_voronoi_lr(&ep, &spec.train)?)?;
            Partition::Civd(integrated_clusters(&prototypes(&ep), &lr)?, spec.influence.params()?)
        }
        PartitionKind::Ccvd => {
            let per_view = spec
                .views
                .iter()
                .map(|&v| Ok(prototypes(&draw.episode::<f64>(bank, v)?)))
                .collect::<Result<Vec<_>>>()?;
            let clusters = (0..ep.k())
                .map(|k| Cluster::new(per_view.iter().map(|p| p.get(k).clone()).collect()))
                .collect::<Result<Vec<_>>>()?;
            Partition::Ccvd(clusters, spec.influence.params()?)
        }
    };
    Ok((partition, support))
}
