//! FastICA blind source separation of the time x voxel matrix into the
//! T*S factorization with independent spatial maps, plus component
//! ordering by rank-1 reconstruction error and ground-truth matching.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::stats;
use crate::synth::SourceSet;

/// FastICA contrast nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nonlinearity {
    Tanh,
    Cube,
}

/// Requested whitening dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetDim {
    /// Keep eigenvalues above 1e-10 times the largest.
    Auto,
    Fixed(usize),
}

/// PCA whitening of the row samples: voxel-wise mean plus a projection
/// whose output has identity covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningModel {
    /// Per-voxel mean over time (length n).
    pub mean: DVector<f64>,
    /// k x n projection: top eigenvector rows scaled by inverse-root
    /// eigenvalues.
    pub projection: DMatrix<f64>,
    /// Covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
}

impl WhiteningModel {
    pub fn k(&self) -> usize {
        self.projection.nrows()
    }
}

fn centered(m: &DataMatrix, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.values().clone();
    for j in 0..out.ncols() {
        let mu = mean[j];
        for i in 0..out.nrows() {
            out[(i, j)] -= mu;
        }
    }
    out
}

const EIGENVALUE_CUTOFF: f64 = 1e-10;

/// Whitens `m` treating its t rows as samples of an n-dimensional vector.
///
/// Removes the per-column mean, eigendecomposes the data covariance (via
/// the t x t Gram matrix when n > t), and projects onto the top-k
/// eigenvectors scaled by inverse-root eigenvalues. Returns the model and
/// the t x k whitened data, whose covariance is the identity.
pub fn whiten(m: &DataMatrix, target: TargetDim) -> Result<(WhiteningModel, DMatrix<f64>)> {
    let t = m.t();
    let n = m.n();
    if t < 2 {
        return Err(Error::InvalidArgument(
            "whitening needs at least 2 time points".into(),
        ));
    }
    let mean = DVector::from_iterator(
        n,
        (0..n).map(|j| m.values().column(j).sum() / t as f64),
    );
    let yc = centered(m, &mean);

    // Eigen pairs of C = Yc^T Yc / t, via the smaller-side Gram matrix.
    let (mut eigenvalues, mut vectors): (Vec<f64>, Vec<DVector<f64>>) = if n <= t {
        let c = yc.transpose() * &yc / t as f64;
        let eig = c.symmetric_eigen();
        let mut pairs: Vec<(f64, DVector<f64>)> = eig
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &l)| (l, eig.eigenvectors.column(i).into_owned()))
            .collect();
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        pairs.into_iter().unzip()
    } else {
        let g = &yc * yc.transpose() / t as f64;
        let eig = g.symmetric_eigen();
        let mut pairs: Vec<(f64, DVector<f64>)> = eig
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &l)| (l, eig.eigenvectors.column(i).into_owned()))
            .collect();
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let mut values = Vec::new();
        let mut vecs = Vec::new();
        for (l, u) in pairs {
            if l <= 0.0 {
                values.push(l);
                vecs.push(DVector::zeros(n));
                continue;
            }
            let v = yc.transpose() * u / (t as f64 * l).sqrt();
            values.push(l);
            vecs.push(v);
        }
        (values, vecs)
    };

    let lmax = eigenvalues.first().copied().unwrap_or(0.0);
    if !(lmax > 0.0) {
        return Err(Error::Degenerate("data has zero variance".into()));
    }
    let available = eigenvalues
        .iter()
        .filter(|&&l| l > EIGENVALUE_CUTOFF * lmax)
        .count();
    let k = match target {
        TargetDim::Auto => available,
        TargetDim::Fixed(k) => {
            if k == 0 || k > available {
                return Err(Error::InvalidArgument(format!(
                    "requested dimension {k} outside 1..={available}"
                )));
            }
            k
        }
    };
    eigenvalues.truncate(k);
    vectors.truncate(k);

    let mut projection = DMatrix::zeros(k, n);
    for (i, v) in vectors.iter().enumerate() {
        let scale = 1.0 / eigenvalues[i].sqrt();
        for j in 0..n {
            projection[(i, j)] = scale * v[j];
        }
    }
    let whitened = &yc * projection.transpose();
    Ok((
        WhiteningModel {
            mean,
            projection,
            eigenvalues,
        },
        whitened,
    ))
}

/// The fitted factorization Y ~ T*S with bookkeeping for ordering,
/// reconstruction error and convergence.
#[derive(Debug, Clone, PartialEq)]
pub struct UnmixingModel {
    /// t x p time-course matrix.
    pub t_matrix: DMatrix<f64>,
    /// p x n spatial-map matrix, rows unit variance.
    pub s_matrix: DMatrix<f64>,
    /// Component indices (0-based) sorted by ascending rank-1 RMSE.
    pub order: Vec<usize>,
    /// RMSE of reconstructing the centered data from 0..p ordered
    /// components; entry 0 is the RMS of the centered data.
    pub rmse_curve: Vec<f64>,
    /// Orthonormal unmixing directions in whitened space (p x k').
    pub whitened_directions: DMatrix<f64>,
    pub converged: bool,
    /// Largest per-direction change at the last iteration.
    pub achieved_tol: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl UnmixingModel {
    pub fn p(&self) -> usize {
        self.t_matrix.ncols()
    }
}

const FASTICA_TOL: f64 = 1e-6;
const FASTICA_MAX_ITER: usize = 1000;
const FASTICA_RESTARTS: u64 = 5;

/// Symmetric decorrelation: W <- (W W^T)^{-1/2} W.
fn sym_decorrelate(w: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = w * w.transpose();
    let eig = gram.symmetric_eigen();
    let p = w.nrows();
    let mut inv_sqrt = DMatrix::zeros(p, p);
    for i in 0..p {
        let l = eig.eigenvalues[i].max(1e-300);
        let col = eig.eigenvectors.column(i);
        for a in 0..p {
            for b in 0..p {
                inv_sqrt[(a, b)] += col[a] * col[b] / l.sqrt();
            }
        }
    }
    inv_sqrt * w
}

fn random_orthonormal(p: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let w = DMatrix::from_fn(p, k, |_, _| StandardNormal.sample(rng));
    sym_decorrelate(&w)
}

/// One symmetric fixed-point run; returns (W, achieved tolerance,
/// iterations, converged).
fn fastica_run(
    x: &DMatrix<f64>,
    p: usize,
    nonlinearity: Nonlinearity,
    rng: &mut ChaCha8Rng,
) -> (DMatrix<f64>, f64, usize, bool) {
    let n = x.ncols() as f64;
    let mut w = random_orthonormal(p, x.nrows(), rng);
    let mut tol = f64::INFINITY;
    for it in 0..FASTICA_MAX_ITER {
        let u = &w * x; // p x n component estimates
        let (g, g_prime_mean): (DMatrix<f64>, Vec<f64>) = match nonlinearity {
            Nonlinearity::Tanh => {
                let g = u.map(|v| v.tanh());
                let gp = (0..p)
                    .map(|i| g.row(i).iter().map(|&t| 1.0 - t * t).sum::<f64>() / n)
                    .collect();
                (g, gp)
            }
            Nonlinearity::Cube => {
                let g = u.map(|v| v * v * v);
                let gp = (0..p)
                    .map(|i| u.row(i).iter().map(|&t| 3.0 * t * t).sum::<f64>() / n)
                    .collect();
                (g, gp)
            }
        };
        let mut w_new = &g * x.transpose() / n;
        for i in 0..p {
            for j in 0..x.nrows() {
                w_new[(i, j)] -= g_prime_mean[i] * w[(i, j)];
            }
        }
        let w_new = sym_decorrelate(&w_new);
        // Direction change, invariant to the sign flip of each row.
        let overlap = &w_new * w.transpose();
        tol = (0..p)
            .map(|i| (1.0 - overlap[(i, i)].abs()).abs())
            .fold(0.0f64, f64::max);
        w = w_new;
        if tol < FASTICA_TOL {
            return (w, tol, it + 1, true);
        }
    }
    (w, tol, FASTICA_MAX_ITER, false)
}

/// Spatial fastICA: factorizes the centered data as T*S where the rows of
/// S are maximally non-Gaussian spatial maps.
///
/// Whitens to the auto rank, runs the symmetric fixed-point iteration over
/// voxel samples (tolerance 1e-6, up to 1000 iterations, up to 5 seeded
/// restarts), and returns the model sorted by rank-1 reconstruction error.
/// Non-convergence is reported in the model flags, not as an error, so
/// callers can still inspect the factorization.
pub fn fastica(
    m: &DataMatrix,
    p: usize,
    nonlinearity: Nonlinearity,
    seed: u64,
) -> Result<UnmixingModel> {
    let t = m.t();
    let n = m.n();
    if p == 0 {
        return Err(Error::InvalidArgument("component count must be >= 1".into()));
    }
    if p > t {
        return Err(Error::InvalidArgument(format!(
            "p = {p} exceeds the number of time points t = {t}; ICA is limited to at most t components"
        )));
    }
    let (wmodel, _z) = whiten(m, TargetDim::Auto)?;
    let k = wmodel.k();
    if p > k {
        return Err(Error::InvalidArgument(format!(
            "p = {p} exceeds the whitened dimension {k}"
        )));
    }

    // Spatial representation: rows of sqrt(n) * V_k^T span the voxel space
    // and have identity covariance over voxels (about zero).
    // V^T = Lambda^{1/2} * projection.
    let mut xs = wmodel.projection.clone();
    for i in 0..k {
        let scale = (n as f64).sqrt() * wmodel.eigenvalues[i].sqrt();
        for j in 0..n {
            xs[(i, j)] *= scale;
        }
    }

    // Voxel-center and re-whiten for the contrast iteration; the final
    // sources are read off the uncentered rows so that T*S still spans the
    // full truncated row space.
    let row_means = DVector::from_iterator(k, (0..k).map(|i| xs.row(i).sum() / n as f64));
    let mut xc = xs.clone();
    for i in 0..k {
        for j in 0..n {
            xc[(i, j)] -= row_means[i];
        }
    }
    let cov = &xc * xc.transpose() / n as f64;
    let eig = cov.symmetric_eigen();
    let mut pairs: Vec<(f64, usize)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, i))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let lmax = pairs[0].0;
    let kept: Vec<(f64, usize)> = pairs
        .into_iter()
        .filter(|(l, _)| *l > EIGENVALUE_CUTOFF * lmax)
        .collect();
    if p > kept.len() {
        return Err(Error::InvalidArgument(format!(
            "p = {p} exceeds the voxel-centered whitened dimension {}",
            kept.len()
        )));
    }
    let mut rewhiten = DMatrix::zeros(kept.len(), k);
    for (row, (l, i)) in kept.iter().enumerate() {
        let scale = 1.0 / l.sqrt();
        for a in 0..k {
            rewhiten[(row, a)] = scale * eig.eigenvectors[(a, *i)];
        }
    }
    let x_tilde = &rewhiten * &xc;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(DMatrix<f64>, f64, usize, bool)> = None;
    for restart in 0..FASTICA_RESTARTS {
        rng.set_stream(restart);
        let run = fastica_run(&x_tilde, p, nonlinearity, &mut rng);
        let better = match &best {
            None => true,
            Some((_, best_tol, _, best_conv)) => {
                (run.3 && !best_conv) || (run.3 == *best_conv && run.1 < *best_tol)
            }
        };
        if better {
            best = Some(run);
        }
        if best.as_ref().unwrap().3 {
            break;
        }
    }
    let (w, achieved_tol, iterations, converged) = best.unwrap();

    // Sources on the uncentered spatial data: separated maps up to a
    // constant offset per row.
    let unmix = &w * &rewhiten; // p x k
    let mut s = &unmix * &xs; // p x n
    for i in 0..p {
        let row: Vec<f64> = s.row(i).iter().copied().collect();
        let mu = stats::mean(&row);
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if sd > 0.0 {
            for j in 0..n {
                s[(i, j)] /= sd;
            }
        }
    }

    // Time courses by least squares against the centered data.
    let yc = centered(m, &wmodel.mean);
    let gram = &s * s.transpose();
    let cross = &yc * s.transpose(); // t x p
    let t_matrix = gram
        .clone()
        .lu()
        .solve(&cross.transpose())
        .ok_or_else(|| Error::Degenerate("singular spatial Gram matrix".into()))?
        .transpose();

    let mut model = UnmixingModel {
        t_matrix,
        s_matrix: s,
        order: (0..p).collect(),
        rmse_curve: Vec::new(),
        whitened_directions: w,
        converged,
        achieved_tol,
        iterations,
        seed,
    };
    model = sort_components(model, m)?;
    model.rmse_curve = rmse_curve(&model, m)?;
    Ok(model)
}

fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Sorts components by ascending rank-1 reconstruction RMSE against the
/// centered data; ties keep index order.
pub fn sort_components(mut u: UnmixingModel, m: &DataMatrix) -> Result<UnmixingModel> {
    let mean = DVector::from_iterator(
        m.n(),
        (0..m.n()).map(|j| m.values().column(j).sum() / m.t() as f64),
    );
    let yc = centered(m, &mean);
    let total_sq = frobenius_sq(&yc);
    let cells = (m.t() * m.n()) as f64;

    let mut keyed: Vec<(f64, usize)> = (0..u.p())
        .map(|i| {
            let s_row = u.s_matrix.row(i).transpose();
            let s_norm_sq: f64 = s_row.dot(&s_row);
            let c = &yc * &s_row; // t-vector
            let explained = c.dot(&c) / s_norm_sq;
            let rmse = ((total_sq - explained).max(0.0) / cells).sqrt();
            (rmse, i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    u.order = keyed.into_iter().map(|(_, i)| i).collect();
    Ok(u)
}

/// RMSE of reconstructing the centered data from the first j ordered
/// components, for j = 0..p, each by a fresh least-squares fit so the
/// curve is nonincreasing by construction.
pub fn rmse_curve(u: &UnmixingModel, m: &DataMatrix) -> Result<Vec<f64>> {
    let mean = DVector::from_iterator(
        m.n(),
        (0..m.n()).map(|j| m.values().column(j).sum() / m.t() as f64),
    );
    let yc = centered(m, &mean);
    let cells = (m.t() * m.n()) as f64;
    let total_sq = frobenius_sq(&yc);
    let p = u.p();

    let mut curve = Vec::with_capacity(p + 1);
    curve.push((total_sq / cells).sqrt());
    // Gram and cross products over the ordered component subset.
    let ordered_s = DMatrix::from_fn(p, m.n(), |i, j| u.s_matrix[(u.order[i], j)]);
    let gram = &ordered_s * ordered_s.transpose();
    let cross = &yc * ordered_s.transpose(); // t x p
    for j in 1..=p {
        let gram_j = gram.view((0, 0), (j, j)).into_owned();
        let cross_j = cross.view((0, 0), (m.t(), j)).into_owned();
        let coeff = gram_j
            .lu()
            .solve(&cross_j.transpose())
            .ok_or_else(|| Error::Degenerate("singular Gram in rmse curve".into()))?;
        // residual^2 = ||Yc||^2 - <coeff, cross>
        let explained: f64 = coeff
            .transpose()
            .iter()
            .zip(cross_j.iter())
            .map(|(a, b)| a * b)
            .sum();
        curve.push(((total_sq - explained).max(0.0) / cells).sqrt());
    }
    Ok(curve)
}

/// Best-matching component for one ground-truth source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchEntry {
    pub source_id: u8,
    /// 0-based component index in the unsorted component numbering.
    pub component: usize,
    pub r: f64,
    pub p_value: f64,
    /// Error after optimal least-squares scale (sign included).
    pub rmse: f64,
}

/// Per-source matches of recovered time courses against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceMatch {
    pub entries: Vec<MatchEntry>,
}

/// Matches each true source to the component whose time course maximizes
/// the absolute Pearson correlation; sign and scale are aligned by least
/// squares before computing the residual error.
pub fn match_sources(u: &UnmixingModel, truth: &SourceSet) -> Result<SourceMatch> {
    let t = u.t_matrix.nrows();
    if truth.timecourses.iter().any(|tc| tc.len() != t) {
        return Err(Error::DimensionMismatch(format!(
            "truth time courses must have length {t}"
        )));
    }
    let entries = truth
        .specs
        .iter()
        .zip(&truth.timecourses)
        .map(|(spec, tc)| {
            let mut best = MatchEntry {
                source_id: spec.id,
                component: 0,
                r: 0.0,
                p_value: 1.0,
                rmse: f64::INFINITY,
            };
            for c in 0..u.p() {
                let comp: Vec<f64> = u.t_matrix.column(c).iter().copied().collect();
                let r = stats::pearson_r(tc, &comp);
                if r.abs() > best.r.abs() || c == 0 {
                    let dot_cc: f64 = comp.iter().map(|v| v * v).sum();
                    let dot_tc: f64 = comp.iter().zip(tc).map(|(a, b)| a * b).sum();
                    let scale = if dot_cc > 0.0 { dot_tc / dot_cc } else { 0.0 };
                    let resid_sq: f64 = comp
                        .iter()
                        .zip(tc)
                        .map(|(a, b)| (b - scale * a) * (b - scale * a))
                        .sum();
                    best = MatchEntry {
                        source_id: spec.id,
                        component: c,
                        r,
                        p_value: stats::correlation_p_value(r, t),
                        rmse: (resid_sq / t as f64).sqrt(),
                    };
                }
            }
            best
        })
        .collect();
    Ok(SourceMatch { entries })
}

#[derive(Serialize)]
struct UnmixingMeta<'a> {
    p: usize,
    t: usize,
    n: usize,
    order: &'a [usize],
    rmse_curve: &'a [f64],
    converged: bool,
    achieved_tol: f64,
    iterations: usize,
    seed: u64,
}

fn write_matrix_bin(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + m.len() * 8);
    bytes.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    bytes.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            bytes.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Exports the model: JSON metadata plus binary T and S matrices
/// (`<prefix>.json`, `<prefix>_t.bin`, `<prefix>_s.bin`).
pub fn export_unmixing(prefix: &Path, u: &UnmixingModel, n: usize) -> Result<()> {
    let meta = UnmixingMeta {
        p: u.p(),
        t: u.t_matrix.nrows(),
        n,
        order: &u.order,
        rmse_curve: &u.rmse_curve,
        converged: u.converged,
        achieved_tol: u.achieved_tol,
        iterations: u.iterations,
        seed: u.seed,
    };
    let json_path = prefix.with_extension("json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&meta).unwrap()).map_err(|e| {
        Error::Io {
            path: json_path.display().to_string(),
            source: e,
        }
    })?;
    let stem = prefix.file_stem().unwrap_or_default().to_string_lossy();
    let dir = prefix.parent().unwrap_or_else(|| Path::new("."));
    write_matrix_bin(&dir.join(format!("{stem}_t.bin")), &u.t_matrix)?;
    write_matrix_bin(&dir.join(format!("{stem}_s.bin")), &u.s_matrix)
}
