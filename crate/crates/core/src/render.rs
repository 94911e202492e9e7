//! SVG pictures of configurations.
//!
//! One-dimensional configurations are drawn as one row of intervals per scale
//! with the block tree outlined behind them; two-dimensional configurations
//! are drawn as squares. Colors depend only on the scale modulo 8.

use std::fmt::Write;

use crate::blocks::{Block, Geometry};
use crate::error::{Error, Result};
use crate::sampler::Configuration;

pub const PALETTE: [&str; 8] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#1f78b4"];

const WIDTH: f64 = 800.0;
const ROW: f64 = 36.0;
const MARGIN: f64 = 12.0;
/// Rows with more blocks than this are drawn without the tree outline.
const OUTLINE_LIMIT: u32 = 10;

pub fn color(scale: i64) -> &'static str {
    PALETTE[scale.rem_euclid(8) as usize]
}

/// Position and side of `b` in units of the window side.
fn relative(g: &Geometry, window: &Block, b: &Block) -> (Vec<f64>, f64) {
    let k = window.scale - b.scale;
    let ratio = (g.base() as f64).powi(k as i32);
    let pos = b.index.iter().zip(&window.index).map(|(&i, &w)| (i as f64 - w as f64 * ratio) / ratio).collect();
    (pos, 1.0 / ratio)
}

/// Renders a validated configuration; the first line after the XML header
/// is a version comment.
pub fn render_svg(g: &Geometry, config: &Configuration) -> Result<String> {
    config.validate(g)?;
    match g.dim() {
        1 => Ok(render_intervals(g, config)),
        2 => Ok(render_squares(g, config)),
        d => Err(Error::Domain(format!("cannot draw configurations in dimension {d}"))),
    }
}

fn header(out: &mut String, w: f64, h: f64) {
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(out, "<!-- hiercubes {} -->", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">");
    let _ = writeln!(out, "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
}

fn render_intervals(g: &Geometry, config: &Configuration) -> String {
    let window = &config.window;
    let rows = (window.scale + config.depth + 1).max(1);
    let inner = WIDTH - 2.0 * MARGIN;
    let height = 2.0 * MARGIN + rows as f64 * ROW;
    let mut out = String::new();
    header(&mut out, WIDTH, height);
    let y_of = |scale: i64| MARGIN + (window.scale - scale) as f64 * ROW;
    out.push_str("<g fill=\"none\" stroke=\"#bbbbbb\" stroke-width=\"0.5\">\n");
    let base = g.base() as f64;
    for r in 0..rows.min(OUTLINE_LIMIT as i64) {
        let count = base.powi(r as i32) as u64;
        let w = inner / count as f64;
        let y = MARGIN + r as f64 * ROW;
        for i in 0..count {
            let x = MARGIN + i as f64 * w;
            let _ = writeln!(out, "<rect x=\"{x:.3}\" y=\"{:.3}\" width=\"{w:.3}\" height=\"{:.3}\"/>", y + 4.0, ROW - 8.0);
            if r + 1 < rows.min(OUTLINE_LIMIT as i64) {
                for c in 0..g.base() {
                    let cx = MARGIN + (i as f64 * base + c as f64 + 0.5) * w / base;
                    let _ = writeln!(
                        out,
                        "<line x1=\"{:.3}\" y1=\"{:.3}\" x2=\"{cx:.3}\" y2=\"{:.3}\"/>",
                        x + 0.5 * w,
                        y + ROW - 4.0,
                        y + ROW + 4.0
                    );
                }
            }
        }
    }
    out.push_str("</g>\n<g stroke=\"black\" stroke-width=\"0.75\">\n");
    for b in &config.blocks {
        let (pos, side) = relative(g, window, b);
        let _ = writeln!(
            out,
            "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"{}\"><title>{b}</title></rect>",
            MARGIN + pos[0] * inner,
            y_of(b.scale) + 4.0,
            side * inner,
            ROW - 8.0,
            color(b.scale)
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}

fn render_squares(g: &Geometry, config: &Configuration) -> String {
    let inner = WIDTH - 2.0 * MARGIN;
    let mut out = String::new();
    header(&mut out, WIDTH, WIDTH);
    let _ = writeln!(
        out,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{inner}\" height=\"{inner}\" fill=\"none\" stroke=\"#bbbbbb\"/>"
    );
    out.push_str("<g stroke=\"black\" stroke-width=\"0.5\">\n");
    let mut blocks: Vec<&Block> = config.blocks.iter().collect();
    blocks.sort_by(|a, b| b.scale.cmp(&a.scale).then_with(|| a.cmp(b)));
    for b in blocks {
        let (pos, side) = relative(g, &config.window, b);
        let _ = writeln!(
            out,
            "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"{}\"><title>{b}</title></rect>",
            MARGIN + pos[0] * inner,
            MARGIN + (1.0 - pos[1] - side) * inner,
            side * inner,
            side * inner,
            color(b.scale)
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}

/// Drops the version comment so that renderings can be compared across releases.
pub fn strip_version(svg: &str) -> String {
    svg.lines().filter(|l| !l.starts_with("<!-- hiercubes")).collect::<Vec<_>>().join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(window: Block, depth: i64, blocks: Vec<Block>) -> Configuration {
        Configuration { window, depth, seed: 0, sample: 0, covered_by_ancestor: None, blocks }
    }

    #[test]
    fn refuses_overlapping_blocks() {
        let g = Geometry::default();
        let c = config(g.origin_block(0), 2, vec![Block::new(0, vec![0]), Block::new(-1, vec![0])]);
        assert!(render_svg(&g, &c).is_err());
    }

    #[test]
    fn empty_configuration_is_a_blank_canvas() {
        let g = Geometry::new(2, 2).unwrap();
        let svg = render_svg(&g, &config(g.origin_block(0), 2, vec![])).unwrap();
        assert!(!svg.contains("<title>"));
        assert!(svg.contains("<!-- hiercubes"));
    }

    #[test]
    fn intervals_use_the_scale_palette() {
        let g = Geometry::default();
        let c = config(g.origin_block(0), 2, vec![Block::new(-1, vec![0]), Block::new(-2, vec![3])]);
        let svg = render_svg(&g, &c).unwrap();
        assert_eq!(svg.matches("<title>").count(), 2);
        assert!(svg.contains(color(-1)) && svg.contains(color(-2)));
        assert_eq!(color(-1), color(7));
    }

    #[test]
    fn squares_are_placed_inside_the_window() {
        let g = Geometry::new(2, 2).unwrap();
        let c = config(Block::new(1, vec![1, 0]), 1, vec![Block::new(0, vec![3, 1])]);
        let svg = render_svg(&g, &c).unwrap();
        assert!(svg.contains("x=\"400.000\" y=\"12.000\" width=\"388.000\""), "{svg}");
    }
}
