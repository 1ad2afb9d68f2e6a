//! SVG depiction of per-atom scores.
//!
//! Layout starts from regular polygons for every ring and seeded jitter
//! for chain atoms, then runs a fixed number of force-directed steps
//! (bond springs, ring-shape springs, pairwise repulsion). Atoms are
//! colored on a red–white–blue scale symmetric around zero.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::molgraph::{BondOrder, MolecularGraph};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("cannot render a molecule without atoms")]
    EmptyGraph,
    #[error("{scores} scores for {atoms} atoms")]
    LengthMismatch { scores: usize, atoms: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub seed: u64,
    pub title: Option<String>,
    /// Pixels per bond length.
    pub scale: f64,
    pub iterations: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            title: None,
            scale: 40.0,
            iterations: 400,
        }
    }
}

/// Fill color for `score` on a scale spanning `[-max_abs, max_abs]`.
/// Zero (or an all-zero molecule) maps to white.
pub fn score_color(score: f64, max_abs: f64) -> String {
    let t = if max_abs > 0.0 { (score / max_abs).clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |t: f64| (255.0 * (1.0 - t.abs())).round() as u8;
    let (r, g, b) = if t >= 0.0 {
        (255, fade(t), fade(t))
    } else {
        (fade(t), fade(t), 255)
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// 2D coordinates in bond-length units.
pub fn layout(graph: &MolecularGraph, seed: u64, iterations: usize) -> Vec<(f64, f64)> {
    let n = graph.n_atoms();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<Option<(f64, f64)>> = vec![None; n];

    // spring targets: (a, b, rest length, stiffness)
    let mut springs: Vec<(usize, usize, f64, f64)> = graph.bonds().iter().map(|b| (b.a, b.b, 1.0, 1.0)).collect();
    for ring in graph.rings() {
        let m = ring.len();
        let radius = 0.5 / (PI / m as f64).sin();
        for (i, &a) in ring.iter().enumerate() {
            for (j, &b) in ring.iter().enumerate().skip(i + 2) {
                let steps = (j - i).min(m - (j - i));
                let chord = 2.0 * radius * (PI * steps as f64 / m as f64).sin();
                springs.push((a, b, chord, 0.5));
            }
        }
    }
    place_rings(graph, &mut pos);
    // chain atoms start next to a placed neighbor, breadth first
    let mut queue: std::collections::VecDeque<usize> = (0..n).filter(|&a| pos[a].is_some()).collect();
    for start in 0..n {
        if pos[start].is_none() && queue.is_empty() {
            pos[start] = Some((rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)));
            queue.push_back(start);
        }
        while let Some(a) = queue.pop_front() {
            let (x, y) = pos[a].expect("queued atoms are placed");
            for nb in graph.neighbors(a) {
                if pos[nb].is_none() {
                    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    pos[nb] = Some((x + angle.cos(), y + angle.sin()));
                    queue.push_back(nb);
                }
            }
        }
    }
    let mut p: Vec<(f64, f64)> = pos.into_iter().map(|q| q.expect("every atom placed")).collect();

    for it in 0..iterations {
        let step = 0.1 * (1.0 - it as f64 / iterations as f64) + 0.01;
        let mut force = vec![(0.0, 0.0); n];
        for i in 0..n {
            for j in i + 1..n {
                let (dx, dy) = (p[i].0 - p[j].0, p[i].1 - p[j].1);
                let d2 = (dx * dx + dy * dy).max(1e-4);
                let f = 0.2 / d2;
                let d = d2.sqrt();
                force[i].0 += f * dx / d;
                force[i].1 += f * dy / d;
                force[j].0 -= f * dx / d;
                force[j].1 -= f * dy / d;
            }
        }
        for &(a, b, rest, k) in &springs {
            let (dx, dy) = (p[b].0 - p[a].0, p[b].1 - p[a].1);
            let d = (dx * dx + dy * dy).sqrt().max(1e-6);
            let f = k * (d - rest);
            force[a].0 += f * dx / d;
            force[a].1 += f * dy / d;
            force[b].0 -= f * dx / d;
            force[b].1 -= f * dy / d;
        }
        for (q, f) in p.iter_mut().zip(&force) {
            let len = (f.0 * f.0 + f.1 * f.1).sqrt();
            let cap = if len > 1.0 { 1.0 / len } else { 1.0 };
            q.0 += step * f.0 * cap;
            q.1 += step * f.1 * cap;
        }
    }
    p
}

/// Regular-polygon templates. Rings sharing an edge with placed atoms are
/// mirrored across it, spiro rings grow away from the shared atom and
/// isolated ring systems start on their own.
fn place_rings(graph: &MolecularGraph, pos: &mut [Option<(f64, f64)>]) {
    let rings = graph.rings();
    let mut done = vec![false; rings.len()];
    let mut systems = 0;
    for _ in 0..rings.len() {
        let shared = |r: &Vec<usize>| r.iter().filter(|&&a| pos[a].is_some()).count();
        let next = (0..rings.len())
            .filter(|&k| !done[k])
            .max_by_key(|&k| (shared(&rings[k]).min(2), std::cmp::Reverse(k)))
            .expect("a ring remains");
        done[next] = true;
        let ring = &rings[next];
        let m = ring.len();
        let radius = 0.5 / (PI / m as f64).sin();
        let step = 2.0 * PI / m as f64;
        let placed: Vec<(f64, f64)> = pos.iter().flatten().copied().collect();
        let centroid = if placed.is_empty() {
            (0.0, 0.0)
        } else {
            let k = placed.len() as f64;
            (placed.iter().map(|p| p.0).sum::<f64>() / k, placed.iter().map(|p| p.1).sum::<f64>() / k)
        };
        let edge = (0..m).find(|&i| pos[ring[i]].is_some() && pos[ring[(i + 1) % m]].is_some());
        let (center, start, theta0, dir) = if let Some(i) = edge {
            let a = pos[ring[i]].expect("placed");
            let b = pos[ring[(i + 1) % m]].expect("placed");
            let mid = ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
            let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt().max(1e-9);
            let mut normal = (-(b.1 - a.1) / len, (b.0 - a.0) / len);
            if (mid.0 - centroid.0) * normal.0 + (mid.1 - centroid.1) * normal.1 < 0.0 {
                normal = (-normal.0, -normal.1);
            }
            let apothem = radius * (PI / m as f64).cos();
            let c = (mid.0 + normal.0 * apothem, mid.1 + normal.1 * apothem);
            let ta = (a.1 - c.1).atan2(a.0 - c.0);
            let tb = (b.1 - c.1).atan2(b.0 - c.0);
            let diff = (tb - ta + 3.0 * PI).rem_euclid(2.0 * PI) - PI;
            (c, i, ta, diff.signum())
        } else if let Some(i) = (0..m).find(|&i| pos[ring[i]].is_some()) {
            let a = pos[ring[i]].expect("placed");
            let (mut dx, mut dy) = (a.0 - centroid.0, a.1 - centroid.1);
            let len = (dx * dx + dy * dy).sqrt();
            if len < 1e-9 {
                (dx, dy) = (1.0, 0.0);
            } else {
                (dx, dy) = (dx / len, dy / len);
            }
            let c = (a.0 + dx * radius, a.1 + dy * radius);
            (c, i, (a.1 - c.1).atan2(a.0 - c.0), 1.0)
        } else {
            let c = (4.0 * systems as f64, 0.0);
            systems += 1;
            (c, 0, 0.0, 1.0)
        };
        for k in 0..m {
            let atom = ring[(start + k) % m];
            if pos[atom].is_none() {
                let t = theta0 + dir * step * k as f64;
                pos[atom] = Some((center.0 + radius * t.cos(), center.1 + radius * t.sin()));
            }
        }
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Standalone SVG 1.1 document with one circle per atom.
pub fn render_svg(graph: &MolecularGraph, scores: &[f64], opts: &RenderOptions) -> Result<String, RenderError> {
    let n = graph.n_atoms();
    if n == 0 {
        return Err(RenderError::EmptyGraph);
    }
    if scores.len() != n {
        return Err(RenderError::LengthMismatch {
            scores: scores.len(),
            atoms: n,
        });
    }
    let coords = layout(graph, opts.seed, opts.iterations);
    let margin = 1.0;
    let min_x = coords.iter().map(|c| c.0).fold(f64::INFINITY, f64::min) - margin;
    let min_y = coords.iter().map(|c| c.1).fold(f64::INFINITY, f64::min) - margin;
    let max_x = coords.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max) + margin;
    let max_y = coords.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max) + margin;
    let s = opts.scale;
    let title_h = if opts.title.is_some() { 24.0 } else { 0.0 };
    let width = (max_x - min_x) * s;
    let height = (max_y - min_y) * s + title_h;
    let px = |c: (f64, f64)| ((c.0 - min_x) * s, (c.1 - min_y) * s + title_h);
    let max_abs = scores.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{width:.1}" height="{height:.1}" fill="white"/>"#);
    if let Some(t) = &opts.title {
        let _ = writeln!(
            svg,
            r#"<text x="6" y="16" font-family="sans-serif" font-size="12" fill="black">{}</text>"#,
            escape(t)
        );
    }
    let _ = writeln!(svg, r#"<g stroke="black" stroke-width="2">"#);
    for b in graph.bonds() {
        let (x1, y1) = px(coords[b.a]);
        let (x2, y2) = px(coords[b.b]);
        let _ = writeln!(svg, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}"/>"#);
        let extra = match b.order {
            BondOrder::Single => 0,
            BondOrder::Double | BondOrder::Aromatic => 1,
            BondOrder::Triple => 2,
        };
        let (dx, dy) = (x2 - x1, y2 - y1);
        let len = (dx * dx + dy * dy).sqrt().max(1e-6);
        let (nx, ny) = (-dy / len * 4.0, dx / len * 4.0);
        for k in 1..=extra {
            let sign = if k == 1 { 1.0 } else { -1.0 };
            let dash = if b.order == BondOrder::Aromatic {
                r#" stroke-dasharray="4,3""#
            } else {
                ""
            };
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"{dash}/>"#,
                x1 + sign * nx,
                y1 + sign * ny,
                x2 + sign * nx,
                y2 + sign * ny
            );
        }
    }
    let _ = writeln!(svg, "</g>");
    for (i, atom) in graph.atoms().iter().enumerate() {
        let (x, y) = px(coords[i]);
        let _ = writeln!(
            svg,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{:.1}" fill="{}" stroke="black" stroke-width="1"><title>atom {i}: {:.6}</title></circle>"#,
            s * 0.3,
            score_color(scores[i], max_abs),
            scores[i]
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="{:.0}" text-anchor="middle" fill="black">{}</text>"#,
            y + s * 0.12,
            s * 0.3,
            escape(&atom.element)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
