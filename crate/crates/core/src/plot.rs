//! SVG scatter plots of 2-D embeddings.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::error::{invalid, Result};
use crate::numerics::Matrix;

const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const PAD: f64 = 40.0;
const LEGEND_W: f64 = 120.0;

/// Rendered plot and the coordinates it shows.
#[derive(Debug, Clone, PartialEq)]
pub struct Scatter {
    pub svg: String,
    /// `x,y,label` per sample.
    pub csv: String,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Plots the first two rows of `points` (`d x N`), one color per class.
pub fn scatter(points: &Matrix, labels: &[String]) -> Result<Scatter> {
    if points.nrows() < 2 {
        return Err(invalid(format!("cannot draw a {}-D embedding; fit with d >= 2", points.nrows())));
    }
    if points.ncols() != labels.len() {
        return Err(invalid(format!("{} points but {} labels", points.ncols(), labels.len())));
    }
    let (xs, ys) = (points.row(0), points.row(1));
    let range = |v: ndarray::ArrayView1<'_, f64>| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi - lo)
        } else {
            (lo - 0.5, 1.0)
        }
    };
    let ((x0, xw), (y0, yh)) = (range(xs), range(ys));
    let plot_w = WIDTH - 2.0 * PAD - LEGEND_W;
    let plot_h = HEIGHT - 2.0 * PAD;

    let classes: BTreeMap<&str, usize> = {
        let mut m = BTreeMap::new();
        for l in labels {
            m.entry(l.as_str()).or_insert(0);
        }
        m.into_keys().enumerate().map(|(i, k)| (k, i)).collect()
    };

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<rect x="{PAD}" y="{PAD}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#);
    let mut csv = String::from("x,y,label\n");
    for (j, label) in labels.iter().enumerate() {
        let px = PAD + (xs[j] - x0) / xw * plot_w;
        let py = PAD + plot_h - (ys[j] - y0) / yh * plot_h;
        let color = PALETTE[classes[label.as_str()] % PALETTE.len()];
        let _ = writeln!(svg, r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.5" fill="{color}"/>"#);
        let _ = writeln!(csv, "{},{},{}", xs[j], ys[j], label);
    }
    for (name, &i) in &classes {
        let ly = PAD + 16.0 * i as f64 + 8.0;
        let lx = WIDTH - LEGEND_W;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(svg, r#"<circle cx="{lx}" cy="{ly}" r="4" fill="{color}"/>"#);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#, lx + 10.0, ly + 4.0, escape(name));
    }
    svg.push_str("</svg>\n");
    Ok(Scatter { svg, csv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn one_color_per_class_with_legend() {
        let p = array![[0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 0.0, 1.0]];
        let s = scatter(&p, &labels(&["a", "b", "c", "a"])).unwrap();
        for c in &PALETTE[..3] {
            assert!(s.svg.contains(c));
        }
        assert!(!s.svg.contains(PALETTE[3]));
        assert_eq!(s.svg.matches("<text").count(), 3);
        assert_eq!(s, scatter(&p, &labels(&["a", "b", "c", "a"])).unwrap());
    }

    #[test]
    fn sidecar_matches_first_two_rows() {
        let p = array![[0.5, -1.25], [2.0, 3.0], [9.0, 9.0]];
        let s = scatter(&p, &labels(&["x", "y"])).unwrap();
        assert_eq!(s.csv, "x,y,label\n0.5,2,x\n-1.25,3,y\n");
    }

    #[test]
    fn one_dimensional_input_is_rejected() {
        let err = scatter(&array![[1.0, 2.0]], &labels(&["a", "b"])).unwrap_err().to_string();
        assert!(err.contains("d >= 2"));
    }
}
