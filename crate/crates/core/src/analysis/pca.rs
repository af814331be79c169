//! Two-dimensional PCA of probe-space entity vectors across descriptions.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::RelationalGraph;
use crate::probe::PolarProbe;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PcaPoint {
    pub sample_id: String,
    pub entity: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Centroid {
    pub entity: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PcaEdge {
    pub src: String,
    pub dst: String,
    pub relation: String,
    pub src_x: f64,
    pub src_y: f64,
    pub dst_x: f64,
    pub dst_y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaProjection {
    pub points: Vec<PcaPoint>,
    pub centroids: Vec<Centroid>,
    pub edges: Vec<PcaEdge>,
    /// Variance captured by each component.
    pub explained_variance: [f64; 2],
}

/// `samples` holds `(sample_id, n × d activations)` for descriptions of
/// `graph`. Component signs are fixed so the largest loading is positive.
pub fn pca_projection(probe: &PolarProbe, graph: &RelationalGraph, samples: &[(String, DMatrix<f64>)]) -> Result<PcaProjection> {
    let n = graph.n();
    let total = n * samples.len();
    if total < 2 {
        return Err(Error::Degenerate(format!("PCA needs at least 2 points, got {total}")));
    }
    let k = probe.k();
    let mut z = DMatrix::zeros(total, k);
    for (s, (id, h)) in samples.iter().enumerate() {
        if h.shape() != (n, probe.d()) {
            return Err(Error::DimensionMismatch {
                context: format!("activation shape of sample {id}"),
                expected: n * probe.d(),
                found: h.len(),
            });
        }
        z.rows_mut(s * n, n).copy_from(&probe.project(h));
    }
    let mean = z.row_mean();
    for mut r in z.row_iter_mut() {
        r -= &mean;
    }
    let svd = z.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut axes = DMatrix::zeros(k, 2);
    let mut explained = [0.0; 2];
    for (c, &s) in order.iter().take(2).enumerate() {
        let mut axis = v_t.row(s).transpose();
        let lead = axis.iter().cloned().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if lead < 0.0 {
            axis = -axis;
        }
        axes.set_column(c, &axis);
        explained[c] = svd.singular_values[s].powi(2) / (total as f64 - 1.0).max(1.0);
    }
    let coords = &z * &axes;
    let mut points = Vec::with_capacity(total);
    let mut sums = vec![(0.0, 0.0); n];
    for (s, (id, _)) in samples.iter().enumerate() {
        for i in 0..n {
            let (x, y) = (coords[(s * n + i, 0)], coords[(s * n + i, 1)]);
            sums[i].0 += x;
            sums[i].1 += y;
            points.push(PcaPoint {
                sample_id: id.clone(),
                entity: graph.entities()[i].clone(),
                x,
                y,
            });
        }
    }
    let m = samples.len() as f64;
    let centroids: Vec<Centroid> = (0..n)
        .map(|i| Centroid {
            entity: graph.entities()[i].clone(),
            x: sums[i].0 / m,
            y: sums[i].1 / m,
        })
        .collect();
    let edges = graph
        .edges()
        .iter()
        .map(|e| PcaEdge {
            src: graph.entities()[e.src].clone(),
            dst: graph.entities()[e.dst].clone(),
            relation: graph.relation_types()[e.rel].clone(),
            src_x: centroids[e.src].x,
            src_y: centroids[e.src].y,
            dst_x: centroids[e.dst].x,
            dst_y: centroids[e.dst].y,
        })
        .collect();
    Ok(PcaProjection {
        points,
        centroids,
        edges,
        explained_variance: explained,
    })
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

impl PcaProjection {
    pub fn points_csv(&self) -> Result<String> {
        to_csv(&self.points)
    }

    pub fn centroids_csv(&self) -> Result<String> {
        to_csv(&self.centroids)
    }

    pub fn edges_csv(&self) -> Result<String> {
        to_csv(&self.edges)
    }
}
