//! Thresholded measurement graph and GCN propagation operator.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::DistanceMatrix;

/// Adjacency `A`, augmented normalized adjacency `Â` and sparsified
/// features `A ⊙ X` for one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdedGraph {
    adjacency: Array2<f64>,
    norm_adjacency: Array2<f64>,
    features: Array2<f64>,
    threshold: f64,
}

impl ThresholdedGraph {
    pub fn build(distances: &DistanceMatrix, threshold: f64) -> Result<Self> {
        let adjacency = threshold_adjacency(distances, threshold)?;
        let norm_adjacency = augment_normalize(&adjacency.view())?;
        let features = sparse_features(&adjacency.view(), &distances.values())?;
        Ok(ThresholdedGraph {
            adjacency,
            norm_adjacency,
            features,
            threshold,
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn adjacency(&self) -> ArrayView2<'_, f64> {
        self.adjacency.view()
    }

    pub fn norm_adjacency(&self) -> ArrayView2<'_, f64> {
        self.norm_adjacency.view()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    /// Row-normalized features, the network input.
    pub fn input_features(&self, norm: RowNorm) -> Array2<f64> {
        normalize_rows(&self.features.view(), norm)
    }

    pub fn degrees(&self) -> Array1<f64> {
        degrees(&self.adjacency.view())
    }

    pub fn edge_count(&self) -> usize {
        (self.adjacency.sum() / 2.0).round() as usize
    }

    pub fn isolated_nodes(&self) -> usize {
        self.degrees().iter().filter(|&&d| d == 0.0).count()
    }
}

/// `a_ij = 1` iff `x_ij <= t_h` for `i != j`; the diagonal is always 0 so the
/// augmentation below adds exactly one self-loop per node.
pub fn threshold_adjacency(distances: &DistanceMatrix, t_h: f64) -> Result<Array2<f64>> {
    if !(t_h > 0.0) {
        return Err(Error::config(format!("threshold must be positive, got {t_h}")));
    }
    let x = distances.values();
    let n = distances.n();
    Ok(Array2::from_shape_fn((n, n), |(i, j)| {
        if i != j && x[[i, j]] <= t_h {
            1.0
        } else {
            0.0
        }
    }))
}

pub fn degrees(adjacency: &ArrayView2<'_, f64>) -> Array1<f64> {
    adjacency.sum_axis(Axis(1))
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
pub fn augment_normalize(adjacency: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (r, c) = adjacency.dim();
    Error::check_shape("augment_normalize", (r, r), (r, c))?;
    let aug_deg: Array1<f64> = degrees(adjacency).mapv(|d| d + 1.0);
    Ok(Array2::from_shape_fn((r, r), |(i, j)| {
        let a = adjacency[[i, j]] + if i == j { 1.0 } else { 0.0 };
        if a == 0.0 {
            0.0
        } else {
            a / (aug_deg[i] * aug_deg[j]).sqrt()
        }
    }))
}

/// Hadamard product `A ⊙ X`.
pub fn sparse_features(
    adjacency: &ArrayView2<'_, f64>,
    distances: &ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    Error::check_shape("sparse_features", adjacency.dim(), distances.dim())?;
    Ok(adjacency * distances)
}

/// Norm used to scale each feature row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowNorm {
    /// Rows sum to one (in absolute value).
    L1,
    /// Rows have unit Euclidean length.
    #[default]
    L2,
}

impl std::str::FromStr for RowNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(RowNorm::L1),
            "l2" => Ok(RowNorm::L2),
            other => Err(Error::config(format!("unknown row norm '{other}'"))),
        }
    }
}

/// Divide every row by its norm; zero rows pass through.
pub fn normalize_rows(features: &ArrayView2<'_, f64>, norm: RowNorm) -> Array2<f64> {
    let mut out = features.to_owned();
    for mut row in out.rows_mut() {
        let len = match norm {
            RowNorm::L1 => row.iter().map(|v| v.abs()).sum::<f64>(),
            RowNorm::L2 => row.dot(&row).sqrt(),
        };
        if len > 0.0 {
            row /= len;
        }
    }
    out
}

/// L1 row normalization.
pub fn row_normalize(features: &ArrayView2<'_, f64>) -> Array2<f64> {
    normalize_rows(features, RowNorm::L1)
}

/// `Â · H`.
pub fn propagate(norm_adj: &ArrayView2<'_, f64>, h: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = norm_adj.nrows();
    Error::check_shape("propagate operator", (n, n), norm_adj.dim())?;
    Error::check_shape("propagate input", (n, h.ncols()), h.dim())?;
    Ok(norm_adj.dot(h))
}

/// Row-wise own-information plus aggregated-neighbour form of `Â · H`:
/// `h̄_i = h_i / (d_i + 1) + Σ_j a_ij h_j / √((d_i + 1)(d_j + 1))`.
pub fn propagate_decomposed(
    adjacency: &ArrayView2<'_, f64>,
    degrees: &ArrayView1<'_, f64>,
    h: &ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    let n = adjacency.nrows();
    Error::check_shape("propagate_decomposed adjacency", (n, n), adjacency.dim())?;
    Error::check_shape("propagate_decomposed degrees", (n, 1), (degrees.len(), 1))?;
    Error::check_shape("propagate_decomposed input", (n, h.ncols()), h.dim())?;
    let mut out = Array2::zeros(h.dim());
    for i in 0..n {
        let di = degrees[i] + 1.0;
        let mut row = out.row_mut(i);
        row.scaled_add(1.0 / di, &h.row(i));
        for j in 0..n {
            let a = adjacency[[i, j]];
            if a != 0.0 {
                let dj = degrees[j] + 1.0;
                row.scaled_add(a / (di * dj).sqrt(), &h.row(j));
            }
        }
    }
    Ok(out)
}
