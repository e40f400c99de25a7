//! Static figure exports: reordered adjacency heatmaps and circular
//! archetype-membership plots.
//!
//! Heatmaps are binary PPM (`P6`) images with a plain-text sidecar listing
//! how many positive and negative cells fell into every lit pixel, so tests
//! and scripts never need an image decoder.

use crate::graph::{inverse_permutation, GraphError, SignedGraph};
use crate::model::NodeRepresentation;
use ndarray::Array2;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

/// Default pixel budget per side of a heatmap.
pub const DEFAULT_MAX_PIXELS: usize = 1024;

#[derive(Debug, Error)]
pub enum VizError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("pixel budget must be positive")]
    ZeroPixelBudget,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), VizError> {
    std::fs::write(path, bytes).map_err(|source| VizError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Which signs a heatmap shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Channel {
    Pos,
    Neg,
    #[default]
    Both,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Pos => "pos",
            Channel::Neg => "neg",
            Channel::Both => "both",
        })
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pos" => Ok(Channel::Pos),
            "neg" => Ok(Channel::Neg),
            "both" => Ok(Channel::Both),
            other => Err(format!("unknown channel `{other}` (expected pos, neg or both)")),
        }
    }
}

/// Membership space of a circle plot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Space {
    #[default]
    Pos,
    Neg,
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Space::Pos => "pos",
            Space::Neg => "neg",
        })
    }
}

impl FromStr for Space {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pos" => Ok(Space::Pos),
            "neg" => Ok(Space::Neg),
            other => Err(format!("unknown space `{other}` (expected pos or neg)")),
        }
    }
}

/// Per-pixel cell counts of a rendered adjacency matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heatmap {
    /// Pixels per side.
    pub size: usize,
    /// Matrix cells per pixel side.
    pub cell: usize,
    pub channel: Channel,
    /// Row-major `(positive, negative)` cell counts.
    counts: Vec<(u32, u32)>,
}

impl Heatmap {
    /// `(positive, negative)` cells under pixel `(row, col)`, after channel masking.
    pub fn counts(&self, row: usize, col: usize) -> (u32, u32) {
        self.counts[row * self.size + col]
    }

    /// RGB value of a pixel: black background, blue for any positive cell,
    /// red for any negative cell (max-pooling).
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let (p, n) = self.counts(row, col);
        [if n > 0 { 255 } else { 0 }, 0, if p > 0 { 255 } else { 0 }]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.size, self.size).into_bytes();
        out.reserve(3 * self.size * self.size);
        for r in 0..self.size {
            for c in 0..self.size {
                out.extend_from_slice(&self.pixel(r, c));
            }
        }
        out
    }

    /// `row col pos neg` for every pixel with at least one shown cell.
    pub fn sidecar(&self) -> String {
        let mut out = format!("# heatmap {} px, {} cells per px, channel {}\n# row col pos neg\n", self.size, self.cell, self.channel);
        for r in 0..self.size {
            for c in 0..self.size {
                let (p, n) = self.counts(r, c);
                if p > 0 || n > 0 {
                    let _ = writeln!(out, "{r} {c} {p} {n}");
                }
            }
        }
        out
    }
}

/// Renders the adjacency matrix with rows and columns in `order`
/// (`order[k]` is the node drawn at position `k`).
///
/// When `N > max_pixels` every pixel covers a `c x c` square of cells with
/// `c = ceil(N / max_pixels)`.
pub fn render_heatmap(g: &SignedGraph, order: &[usize], channel: Channel, max_pixels: usize) -> Result<Heatmap, VizError> {
    if max_pixels == 0 {
        return Err(VizError::ZeroPixelBudget);
    }
    let n = g.node_count();
    let position = inverse_permutation(order, n)?;
    let cell = n.div_ceil(max_pixels).max(1);
    let size = n.div_ceil(cell);
    let mut counts = vec![(0u32, 0u32); size * size];
    for e in g.edges() {
        let show = match channel {
            Channel::Pos => e.weight > 0,
            Channel::Neg => e.weight < 0,
            Channel::Both => true,
        };
        if !show {
            continue;
        }
        let (a, b) = (position[e.i] / cell, position[e.j] / cell);
        for (r, c) in [(a, b), (b, a)] {
            let slot = &mut counts[r * size + c];
            if e.weight > 0 {
                slot.0 += 1;
            } else {
                slot.1 += 1;
            }
        }
    }
    Ok(Heatmap {
        size,
        cell,
        channel,
        counts,
    })
}

/// Renders and writes the image and its sidecar.
pub fn export_adjacency_heatmap(
    g: &SignedGraph,
    order: &[usize],
    channel: Channel,
    image: &Path,
    sidecar: &Path,
) -> Result<Heatmap, VizError> {
    let map = render_heatmap(g, order, channel, DEFAULT_MAX_PIXELS)?;
    write_file(image, &map.to_ppm())?;
    write_file(sidecar, map.sidecar().as_bytes())?;
    Ok(map)
}

/// Unit-circle anchor of archetype `k` out of `k_total`.
pub fn anchor(k: usize, k_total: usize) -> [f64; 2] {
    let angle = std::f64::consts::TAU * k as f64 / k_total as f64;
    [angle.cos(), angle.sin()]
}

/// One node of a circle plot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirclePoint {
    pub x: f64,
    pub y: f64,
    /// Archetype with the largest membership (lowest index on ties).
    pub dominant: usize,
}

impl CirclePoint {
    pub fn radius(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn angle(&self) -> f64 {
        self.y.atan2(self.x)
    }
}

/// Maps each simplex row to `sum_k m_k * anchor_k`.
pub fn membership_circle(memberships: &Array2<f64>) -> Vec<CirclePoint> {
    let k_total = memberships.ncols();
    let anchors: Vec<[f64; 2]> = (0..k_total).map(|k| anchor(k, k_total)).collect();
    memberships
        .rows()
        .into_iter()
        .map(|row| {
            let (mut x, mut y) = (0.0, 0.0);
            let mut dominant = 0;
            for (k, &m) in row.iter().enumerate() {
                x += m * anchors[k][0];
                y += m * anchors[k][1];
                if m > row[dominant] {
                    dominant = k;
                }
            }
            CirclePoint { x, y, dominant }
        })
        .collect()
}

/// Tab-separated coordinate table, one node per line.
pub fn circle_table(points: &[CirclePoint]) -> String {
    let mut out = String::from("# node\tx\ty\tradius\tdominant\n");
    for (i, p) in points.iter().enumerate() {
        let _ = writeln!(out, "{i}\t{}\t{}\t{}\t{}", p.x, p.y, p.radius(), p.dominant);
    }
    out
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// SVG drawing of the table: the unit circle, the `K` anchors and one dot
/// per node coloured by its dominant archetype.
pub fn circle_svg(points: &[CirclePoint], k_total: usize) -> String {
    let (half, r) = (260.0, 240.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" viewBox=\"0 0 {0} {0}\">",
        2.0 * half
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(out, "<circle cx=\"{half}\" cy=\"{half}\" r=\"{r}\" fill=\"none\" stroke=\"#999\"/>");
    for k in 0..k_total {
        let [x, y] = anchor(k, k_total);
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"14\" text-anchor=\"middle\">A{}</text>",
            half + 1.08 * r * x,
            half - 1.08 * r * y + 5.0,
            k + 1
        );
    }
    for p in points {
        let _ = writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{}\" fill-opacity=\"0.7\"/>",
            half + r * p.x,
            half - r * p.y,
            PALETTE[p.dominant % PALETTE.len()]
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Writes the coordinate table and the drawing for one membership space.
pub fn export_membership_circle(
    rep: &NodeRepresentation,
    space: Space,
    table: &Path,
    drawing: &Path,
) -> Result<Vec<CirclePoint>, VizError> {
    let m = match space {
        Space::Pos => &rep.z,
        Space::Neg => &rep.w,
    };
    let points = membership_circle(m);
    write_file(table, circle_table(&points).as_bytes())?;
    write_file(drawing, circle_svg(&points, m.ncols()).as_bytes())?;
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn one_hot_and_uniform_rows() {
        let m = array![[0.0, 0.0, 1.0, 0.0], [0.25, 0.25, 0.25, 0.25], [1.0, 0.0, 0.0, 0.0]];
        let pts = membership_circle(&m);
        assert!((pts[0].radius() - 1.0).abs() < 1e-15);
        assert!((pts[0].angle().abs() - std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(pts[0].dominant, 2);
        assert!(pts[1].radius() < 1e-15);
        assert_eq!(pts[1].dominant, 0);
        assert_eq!((pts[2].x, pts[2].y), (1.0, 0.0));
    }

    #[test]
    fn single_edge_pixels_and_ppm_header() {
        let g = SignedGraph::new(3, [(0, 1, 1), (1, 2, -1)]).unwrap();
        let map = render_heatmap(&g, &[0, 1, 2], Channel::Both, 8).unwrap();
        assert_eq!((map.size, map.cell), (3, 1));
        assert_eq!(map.pixel(0, 1), [0, 0, 255]);
        assert_eq!(map.pixel(1, 0), [0, 0, 255]);
        assert_eq!(map.pixel(2, 1), [255, 0, 0]);
        assert_eq!(map.pixel(0, 0), [0, 0, 0]);
        let ppm = map.to_ppm();
        assert!(ppm.starts_with(b"P6\n3 3\n255\n"));
        assert_eq!(ppm.len(), "P6\n3 3\n255\n".len() + 27);
        assert_eq!(map.sidecar().lines().filter(|l| !l.starts_with('#')).count(), 4);
    }

    #[test]
    fn max_pooling_keeps_lone_negatives() {
        let g = SignedGraph::new(5, [(0, 1, 1), (0, 2, 1), (3, 4, -1)]).unwrap();
        let map = render_heatmap(&g, &[0, 1, 2, 3, 4], Channel::Both, 2).unwrap();
        assert_eq!((map.size, map.cell), (2, 3));
        assert_eq!(map.counts(0, 0), (4, 0));
        assert_eq!(map.counts(1, 1), (0, 2));
        assert_eq!(map.pixel(1, 1), [255, 0, 0]);
    }

    #[test]
    fn invalid_order_is_rejected() {
        let g = SignedGraph::new(3, [(0, 1, 1)]).unwrap();
        assert!(render_heatmap(&g, &[0, 0, 1], Channel::Both, 8).is_err());
        assert!(render_heatmap(&g, &[0, 1], Channel::Both, 8).is_err());
        assert!(matches!(render_heatmap(&g, &[0, 1, 2], Channel::Both, 0), Err(VizError::ZeroPixelBudget)));
    }

    #[test]
    fn names_round_trip() {
        for c in [Channel::Pos, Channel::Neg, Channel::Both] {
            assert_eq!(c.to_string().parse::<Channel>(), Ok(c));
        }
        for s in [Space::Pos, Space::Neg] {
            assert_eq!(s.to_string().parse::<Space>(), Ok(s));
        }
        assert!("blue".parse::<Channel>().is_err());
    }
}
