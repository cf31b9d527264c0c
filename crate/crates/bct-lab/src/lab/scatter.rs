//! 2-D scatter export of an embedding, as a standalone SVG.
//!
//! Inputs wider than two dimensions are projected onto their top two
//! principal axes first (power iteration with deflation on the sample
//! covariance — the matrices here are at most embedding-width square).

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::StandardNormal;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream, tag};

/// Palette cycled over class ids; twelve hues keep neighbouring ids apart.
const PALETTE: [&str; 12] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
    "#9c755f", "#bab0ac", "#2f4b7c", "#a05195",
];

/// Largest eigenvector of `cov` by power iteration, with its eigenvalue.
/// `rng` only seeds the start vector; the iteration itself is deterministic.
fn leading_eigenpair(cov: &Array2<f64>, rng: &mut crate::rng::Stream) -> (Array1<f64>, f64) {
    let d = cov.nrows();
    let mut v = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm);
    for _ in 0..300 {
        let next = cov.dot(&v);
        let norm = next.dot(&next).sqrt();
        if norm < 1e-300 {
            // The covariance annihilates the start vector: no variance left.
            return (v, 0.0);
        }
        let next = next.mapv(|x| x / norm);
        let drift: f64 = (&next - &v).iter().map(|x| x * x).sum();
        v = next;
        if drift < 1e-24 {
            break;
        }
    }
    let lambda = v.dot(&cov.dot(&v));
    (v, lambda)
}

/// Projects `features` to two dimensions: identity when already 2-D,
/// otherwise centered PCA onto the top two principal axes.
pub fn project_to_plane(features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (n, d) = features.dim();
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("cannot project an empty feature matrix".into()));
    }
    if d == 2 {
        return Ok(features.to_owned());
    }
    if d < 2 {
        return Err(Error::InvalidArgument("scatter needs at least 2 feature dimensions".into()));
    }
    let mean = features.mean_axis(Axis(0)).expect("n > 0 was checked above");
    let centered = &features - &mean.view().insert_axis(Axis(0));
    if n == 1 {
        // A single sample has no spread; it sits at the origin of any plane.
        return Ok(Array2::zeros((1, 2)));
    }
    let mut cov = centered.t().dot(&centered) / (n as f64 - 1.0);

    let mut rng = stream(0, &[tag::SCATTER]);
    let mut axes = Vec::with_capacity(2);
    for _ in 0..2 {
        let (v, lambda) = leading_eigenpair(&cov, &mut rng);
        // Deflate so the next iteration converges to the following axis.
        let outer = {
            let vc = v.view().insert_axis(Axis(1));
            vc.dot(&v.view().insert_axis(Axis(0)))
        };
        cov = &cov - &(outer * lambda);
        axes.push(v);
    }
    let mut out = Array2::zeros((n, 2));
    for (k, axis) in axes.iter().enumerate() {
        let proj = centered.dot(axis);
        out.column_mut(k).assign(&proj);
    }
    Ok(out)
}

fn color_of(class: u32) -> &'static str {
    PALETTE[class as usize % PALETTE.len()]
}

/// Writes an SVG scatter of `features` colored by `labels`, projecting to
/// 2-D first when needed. One circle per sample, legend keyed by class id.
pub fn export_scatter(
    features: ArrayView2<'_, f64>,
    labels: &[u32],
    path: &Path,
) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("scatter needs at least one labeled sample".into()));
    }
    if labels.len() != features.nrows() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} feature rows",
            labels.len(),
            features.nrows()
        )));
    }
    let plane = project_to_plane(features)?;

    // Data extent with a small margin; degenerate extents widen to a unit
    // box so a single cluster still renders.
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for row in plane.rows() {
        min_x = min_x.min(row[0]);
        max_x = max_x.max(row[0]);
        min_y = min_y.min(row[1]);
        max_y = max_y.max(row[1]);
    }
    if !(max_x - min_x).is_finite() || max_x - min_x < 1e-12 {
        min_x -= 0.5;
        max_x += 0.5;
    }
    if !(max_y - min_y).is_finite() || max_y - min_y < 1e-12 {
        min_y -= 0.5;
        max_y += 0.5;
    }
    let pad_x = (max_x - min_x) * 0.05;
    let pad_y = (max_y - min_y) * 0.05;
    min_x -= pad_x;
    max_x += pad_x;
    min_y -= pad_y;
    max_y += pad_y;

    let plot = 560.0;
    let legend_w = 110.0;
    let width = plot + legend_w;
    let sx = |x: f64| (x - min_x) / (max_x - min_x) * plot;
    // SVG y grows downward; flip so larger values plot higher.
    let sy = |y: f64| (1.0 - (y - min_y) / (max_y - min_y)) * plot;

    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{plot}\" \
         viewBox=\"0 0 {width} {plot}\">\n"
    ));
    svg.push_str(&format!(
        "  <rect width=\"{plot}\" height=\"{plot}\" fill=\"white\" stroke=\"#cccccc\"/>\n"
    ));
    for (row, &label) in plane.rows().into_iter().zip(labels) {
        svg.push_str(&format!(
            "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.75\"/>\n",
            sx(row[0]),
            sy(row[1]),
            color_of(label)
        ));
    }
    svg.push_str(&format!("  <g font-family=\"sans-serif\" font-size=\"12\">\n"));
    for (slot, &c) in classes.iter().enumerate() {
        let y = 16.0 + slot as f64 * 18.0;
        svg.push_str(&format!(
            "    <rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n",
            plot + 12.0,
            y - 9.0,
            color_of(c)
        ));
        svg.push_str(&format!(
            "    <text x=\"{:.1}\" y=\"{y:.1}\">class {c}</text>\n",
            plot + 28.0
        ));
    }
    svg.push_str("  </g>\n</svg>\n");

    std::fs::write(path, svg)?;
    Ok(())
}
