//! Spectral view of the propagation operator.
//!
//! The augmented normalized Laplacian `L = I − Â` has eigenvalues in
//! `[0, 2)`; they play the role of graph frequencies. Applying `Â` `K`
//! times scales the component at frequency `λ` by `(1 − λ)^K`.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::ThresholdedGraph;
use crate::scene::{true_distances, NoiseParams, Scene};

/// Eigenpairs of a symmetric matrix, eigenvalues ascending, eigenvectors as
/// orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Eigensolver {
    /// Householder tridiagonalisation followed by implicit QL.
    #[default]
    TridiagonalQl,
    /// Cyclic Jacobi rotations. Simple, slower for large matrices.
    Jacobi,
}

/// Relative residual `‖A·U − U·Λ‖_F / ‖A‖_F` above which a decomposition is
/// rejected.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;

pub fn laplacian(norm_adj: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = norm_adj.nrows();
    Error::check_shape("laplacian", (n, n), norm_adj.dim())?;
    Ok(Array2::eye(n) - norm_adj)
}

pub fn eigendecompose(matrix: &ArrayView2<'_, f64>) -> Result<SpectralDecomposition> {
    eigendecompose_with(matrix, Eigensolver::default())
}

pub fn eigendecompose_with(
    matrix: &ArrayView2<'_, f64>,
    solver: Eigensolver,
) -> Result<SpectralDecomposition> {
    let n = matrix.nrows();
    Error::check_shape("eigendecompose", (n, n), matrix.dim())?;
    if n == 0 {
        return Ok(SpectralDecomposition {
            eigenvalues: Array1::zeros(0),
            eigenvectors: Array2::zeros((0, 0)),
        });
    }
    let (values, vectors, iterations) = match solver {
        Eigensolver::TridiagonalQl => tridiagonal_ql(matrix)?,
        Eigensolver::Jacobi => cyclic_jacobi(matrix)?,
    };
    let decomp = sorted(values, vectors);
    let residual = decomp.residual(matrix);
    if !(residual <= RESIDUAL_TOLERANCE) {
        return Err(Error::Convergence {
            iterations,
            residual,
        });
    }
    Ok(decomp)
}

fn sorted(values: Array1<f64>, vectors: Array2<f64>) -> SpectralDecomposition {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let eigenvalues = order.iter().map(|&i| values[i]).collect();
    let eigenvectors = vectors.select(Axis(1), &order);
    SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `‖A·U − U·Λ‖_F / ‖A‖_F` (absolute when `A = 0`).
    pub fn residual(&self, matrix: &ArrayView2<'_, f64>) -> f64 {
        let au = matrix.dot(&self.eigenvectors);
        let ul = &self.eigenvectors * &self.eigenvalues.view().insert_axis(Axis(0));
        let num = (&au - &ul).mapv(|v| v * v).sum().sqrt();
        let den = matrix.mapv(|v| v * v).sum().sqrt();
        if den > 0.0 {
            num / den
        } else {
            num
        }
    }

    /// `U · diag(λ) · Uᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.eigenvectors * &self.eigenvalues.view().insert_axis(Axis(0));
        scaled.dot(&self.eigenvectors.t())
    }

    /// Graph Fourier transform `Uᵀ·s`, column-wise for matrix signals.
    pub fn gft(&self, signal: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Error::check_shape("gft", (self.n(), signal.ncols()), signal.dim())?;
        Ok(self.eigenvectors.t().dot(signal))
    }

    pub fn gft_vector(&self, signal: &ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        Error::check_shape("gft", (self.n(), 1), (signal.len(), 1))?;
        Ok(self.eigenvectors.t().dot(signal))
    }

    /// Inverse transform `U·c`.
    pub fn inverse_gft(&self, coeffs: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Error::check_shape("inverse_gft", (self.n(), coeffs.ncols()), coeffs.dim())?;
        Ok(self.eigenvectors.dot(coeffs))
    }

    pub fn inverse_gft_vector(&self, coeffs: &ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        Error::check_shape("inverse_gft", (self.n(), 1), (coeffs.len(), 1))?;
        Ok(self.eigenvectors.dot(coeffs))
    }
}

/// `(1 − λ)^k` for every eigenvalue.
pub fn filter_response(eigenvalues: &ArrayView1<'_, f64>, k: u32) -> Result<Array1<f64>> {
    if k < 1 {
        return Err(Error::config("filter order must be >= 1"));
    }
    Ok(eigenvalues.mapv(|l| (1.0 - l).powi(k as i32)))
}

// Householder reduction to tridiagonal form followed by the implicit QL
// algorithm with Wilkinson-style shifts (EISPACK tred2/tql2 lineage).
// Returns unsorted eigenvalues, eigenvectors as columns and the number of
// QL iterations spent.
fn tridiagonal_ql(matrix: &ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>, usize)> {
    const MAX_ITER_PER_VALUE: usize = 60;
    let n = matrix.nrows();
    // v[i][j] row-major; symmetrise defensively against rounding asymmetry
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| 0.5 * (matrix[[i, j]] + matrix[[j, i]]))
                .collect()
        })
        .collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];

    // tred2
    d.copy_from_slice(&v[n - 1]);
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in (j + 1)..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for row in v.iter_mut().take(i + 1) {
            row[i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;

    // tql2 on the transposed basis so that rotations touch contiguous rows
    let mut z: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|k| v[k][i]).collect()).collect();
    drop(v);
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    let mut total_iter = 0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                total_iter += 1;
                if iter > MAX_ITER_PER_VALUE {
                    return Err(Error::Convergence {
                        iterations: total_iter,
                        residual: e[l].abs(),
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = z.split_at_mut(i + 1);
                    let zi = &mut lo[i];
                    let zi1 = &mut hi[0];
                    for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                        let t = *b;
                        *b = s * *a + c * t;
                        *a = c * *a - s * t;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    let values = Array1::from(d);
    let vectors = Array2::from_shape_fn((n, n), |(k, i)| z[i][k]);
    Ok((values, vectors, total_iter))
}

fn cyclic_jacobi(matrix: &ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>, usize)> {
    const MAX_SWEEPS: usize = 100;
    let n = matrix.nrows();
    let mut a = matrix.to_owned();
    let mut v = Array2::<f64>::eye(n);
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    for sweep in 1..=MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if off.sqrt() <= f64::EPSILON * total.max(f64::MIN_POSITIVE) {
            return Ok((a.diag().to_owned(), v, sweep - 1));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut off = 0.0;
    for p in 0..n {
        for q in (p + 1)..n {
            off += a[[p, q]] * a[[p, q]];
        }
    }
    Err(Error::Convergence {
        iterations: MAX_SWEEPS,
        residual: off.sqrt(),
    })
}

/// Column-averaged spectrum of one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpectrum {
    pub name: String,
    /// Mean over signal columns of `|coefficient|`, one entry per eigenvalue.
    pub mean_abs_coeff: Array1<f64>,
    /// Sum over signal columns of squared coefficients, per eigenvalue.
    pub energy: Array1<f64>,
}

impl SignalSpectrum {
    pub fn from_coefficients(name: impl Into<String>, coeffs: &ArrayView2<'_, f64>) -> Self {
        SignalSpectrum {
            name: name.into(),
            mean_abs_coeff: coeffs
                .mapv(f64::abs)
                .mean_axis(Axis(1))
                .unwrap_or_else(|| Array1::zeros(coeffs.nrows())),
            energy: coeffs.mapv(|c| c * c).sum_axis(Axis(1)),
        }
    }

    pub fn total_energy(&self) -> f64 {
        self.energy.sum()
    }

    /// Energy held by the lowest `fraction` of the spectrum (by index).
    pub fn low_band_energy(&self, fraction: f64) -> f64 {
        let k = band_len(self.energy.len(), fraction);
        self.energy.iter().take(k).sum()
    }

    /// Energy held by the highest `fraction` of the spectrum (by index).
    pub fn high_band_energy(&self, fraction: f64) -> f64 {
        let k = band_len(self.energy.len(), fraction);
        self.energy.iter().rev().take(k).sum()
    }

    pub fn low_band_fraction(&self, fraction: f64) -> f64 {
        let total = self.total_energy();
        if total > 0.0 {
            self.low_band_energy(fraction) / total
        } else {
            0.0
        }
    }
}

fn band_len(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).ceil() as usize).clamp(1, n.max(1))
}

pub const SIGNAL_TRUE_DISTANCE: &str = "true_distance";
pub const SIGNAL_LOS_NOISE: &str = "los_noise";
pub const SIGNAL_TRUE_DISTANCE_FILTERED: &str = "true_distance_filtered";
pub const SIGNAL_LOS_NOISE_FILTERED: &str = "los_noise_filtered";

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub eigenvalues: Array1<f64>,
    pub filter_order: u32,
    pub series: Vec<SignalSpectrum>,
}

impl SpectralReport {
    pub fn signal(&self, name: &str) -> Option<&SignalSpectrum> {
        self.series.iter().find(|s| s.name == name)
    }

    /// `signal_name,eigenvalue,mean_abs_coeff` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["signal_name", "eigenvalue", "mean_abs_coeff"])?;
        for s in &self.series {
            for (l, c) in self.eigenvalues.iter().zip(s.mean_abs_coeff.iter()) {
                w.write_record([s.name.as_str(), &l.to_string(), &c.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Symmetric zero-diagonal matrix of pairwise LOS errors.
pub fn los_noise_matrix<R: Rng + ?Sized>(
    n: usize,
    noise: &NoiseParams,
    rng: &mut R,
) -> Result<Array2<f64>> {
    noise.validate()?;
    let dist = Normal::new(0.0, noise.sigma_sq.sqrt()).map_err(|e| Error::config(e.to_string()))?;
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = dist.sample(rng);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
    Ok(m)
}

/// Spectra of the true distance matrix and of a LOS noise matrix, before
/// and after `filter_order` applications of `Â`.
pub fn spectral_energy_report<R: Rng + ?Sized>(
    graph: &ThresholdedGraph,
    scene: &Scene,
    noise: &NoiseParams,
    filter_order: u32,
    rng: &mut R,
) -> Result<SpectralReport> {
    if filter_order < 1 {
        return Err(Error::config("filter order must be >= 1"));
    }
    let n = graph.n();
    if scene.n_nodes() != n {
        return Err(Error::config("scene and graph sizes differ"));
    }
    let norm_adj = graph.norm_adjacency();
    let decomp = eigendecompose(&laplacian(&norm_adj)?.view())?;
    let truth = true_distances(scene).into_inner();
    let los = los_noise_matrix(n, noise, rng)?;
    let filter = |s: &Array2<f64>| {
        let mut out = s.clone();
        for _ in 0..filter_order {
            out = norm_adj.dot(&out);
        }
        out
    };
    let signals = [
        (SIGNAL_TRUE_DISTANCE, truth.clone()),
        (SIGNAL_LOS_NOISE, los.clone()),
        (SIGNAL_TRUE_DISTANCE_FILTERED, filter(&truth)),
        (SIGNAL_LOS_NOISE_FILTERED, filter(&los)),
    ];
    let mut series = Vec::with_capacity(signals.len());
    for (name, s) in signals {
        series.push(SignalSpectrum::from_coefficients(name, &decomp.gft(&s.view())?.view()));
    }
    Ok(SpectralReport {
        eigenvalues: decomp.eigenvalues,
        filter_order,
        series,
    })
}
