//! Correlation fractal dimension estimation: pair-count and box-count
//! log-log curves, Tukey-weighted parametric sigmoid fitting, and trimmed
//! summary statistics over dataset instances.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::stats;

/// Curve construction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PairCount,
    BoxCount,
}

/// How radii are chosen for [`estimate_fd`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RadiusPolicy {
    /// Geometric schedule between two quantiles of the observed pairwise
    /// distances (pair-count default: 24 radii between p1 and p99).
    DistanceQuantiles {
        count: usize,
        lo_percent: f64,
        hi_percent: f64,
    },
    /// Geometric schedule of `count` cell sides between the bounding-box
    /// diagonal scaled by 2^-min_exp and by 2^-max_exp (box-count default:
    /// 24 radii over exponents 1..12).
    DyadicDiagonal {
        count: usize,
        min_exp: u32,
        max_exp: u32,
    },
    /// Caller-provided radii, sorted descending.
    Explicit { r_values: Vec<f64> },
}

impl RadiusPolicy {
    pub fn default_for(method: Method) -> Self {
        match method {
            Method::PairCount => RadiusPolicy::DistanceQuantiles {
                count: 24,
                lo_percent: 1.0,
                hi_percent: 99.0,
            },
            Method::BoxCount => RadiusPolicy::DyadicDiagonal {
                count: 24,
                min_exp: 1,
                max_exp: 12,
            },
        }
    }
}

/// One sampled point of a log-log curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Radius or cell side this point came from.
    pub r: f64,
    /// log(1/r)
    pub x: f64,
    /// log of the measure (pair count, or sum of squared occupancies)
    pub y: f64,
}

/// Sampled (log(1/r), log measure) curve, strictly increasing in x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLogCurve {
    pub method: Method,
    pub points: Vec<CurvePoint>,
    /// Radii that produced an empty measure (pair count zero) and were
    /// dropped from the curve.
    pub dropped_r: Vec<f64>,
}

fn validate_radii(r_values: &[f64]) -> Result<()> {
    if r_values.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
        return Err(Error::InvalidArgument(
            "radii must be positive and finite".into(),
        ));
    }
    if r_values.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InvalidArgument(
            "radii must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// All unordered pairwise Euclidean distances between the rows of `m`.
pub fn pairwise_distances(m: &DataMatrix) -> Vec<f64> {
    let t = m.t();
    let v = m.values();
    let mut out = Vec::with_capacity(t * (t - 1) / 2);
    for i in 0..t {
        for j in (i + 1)..t {
            let mut acc = 0.0;
            for k in 0..m.n() {
                let d = v[(i, k)] - v[(j, k)];
                acc += d * d;
            }
            out.push(acc.sqrt());
        }
    }
    out
}

/// Pair-count curve: for each radius, the number of unordered row pairs at
/// Euclidean distance <= r, plotted as log PC versus log(1/r).
pub fn pair_count_curve(m: &DataMatrix, r_values: &[f64]) -> Result<LogLogCurve> {
    if m.t() < 2 {
        return Err(Error::InvalidArgument(
            "pair counting needs at least 2 rows".into(),
        ));
    }
    validate_radii(r_values)?;
    let mut dists = pairwise_distances(m);
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut points = Vec::new();
    let mut dropped = Vec::new();
    for &r in r_values {
        let pc = dists.partition_point(|&d| d <= r);
        if pc == 0 {
            dropped.push(r);
        } else {
            points.push(CurvePoint {
                r,
                x: (1.0 / r).ln(),
                y: (pc as f64).ln(),
            });
        }
    }
    if points.len() < 2 {
        return Err(Error::Degenerate(format!(
            "only {} radii produced a nonzero pair count",
            points.len()
        )));
    }
    Ok(LogLogCurve {
        method: Method::PairCount,
        points,
        dropped_r: dropped,
    })
}

/// Sum of squared cell-occupancy frequencies for a grid of side `r`
/// anchored at the per-dimension minimum corner.
fn occupancy_sum_squares(m: &DataMatrix, mins: &[f64], r: f64) -> f64 {
    let t = m.t();
    let n = m.n();
    let v = m.values();
    let mut cells: HashMap<Vec<i64>, u64> = HashMap::new();
    let mut key = vec![0i64; n];
    for i in 0..t {
        for k in 0..n {
            key[k] = ((v[(i, k)] - mins[k]) / r).floor() as i64;
        }
        *cells.entry(key.clone()).or_insert(0) += 1;
    }
    let tf = t as f64;
    cells
        .values()
        .map(|&c| {
            let f = c as f64 / tf;
            f * f
        })
        .sum()
}

/// Box-count curve: for each cell side, the log of the sum of squared
/// occupancy frequencies over a grid partition of the bounding box,
/// plotted against log(1/r).
pub fn box_count_curve(m: &DataMatrix, r_values: &[f64]) -> Result<LogLogCurve> {
    if m.t() < 2 {
        return Err(Error::InvalidArgument(
            "box counting needs at least 2 rows".into(),
        ));
    }
    validate_radii(r_values)?;
    let (mins, maxs) = bounding_box(m);
    if mins
        .iter()
        .zip(&maxs)
        .all(|(lo, hi)| hi - lo == 0.0)
    {
        return Err(Error::Degenerate(
            "all rows identical: bounding box has zero extent".into(),
        ));
    }

    let points = r_values
        .iter()
        .map(|&r| CurvePoint {
            r,
            x: (1.0 / r).ln(),
            y: occupancy_sum_squares(m, &mins, r).ln(),
        })
        .collect();
    Ok(LogLogCurve {
        method: Method::BoxCount,
        points,
        dropped_r: Vec::new(),
    })
}

/// Per-dimension (min, max) over the rows of `m`.
pub fn bounding_box(m: &DataMatrix) -> (Vec<f64>, Vec<f64>) {
    let v = m.values();
    let mut mins = vec![f64::INFINITY; m.n()];
    let mut maxs = vec![f64::NEG_INFINITY; m.n()];
    for i in 0..m.t() {
        for k in 0..m.n() {
            let x = v[(i, k)];
            mins[k] = mins[k].min(x);
            maxs[k] = maxs[k].max(x);
        }
    }
    (mins, maxs)
}

/// Symmetric discrete Tukey (tapered cosine) window of length `N`.
///
/// `q = 0` is the rectangular window, `q = 1` the Hann shape; the flat
/// central region has relative width `1 - q` with cosine tapers of
/// relative half-width `q/2` on both sides.
pub fn tukey_window(n: usize, q: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("window length must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "Tukey parameter must be in [0, 1], got {q}"
        )));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    Ok((0..n)
        .map(|i| tukey_taper(i as f64 / (n - 1) as f64, q))
        .collect())
}

/// Continuous Tukey taper at normalized position `u` in [0, 1].
pub fn tukey_taper(u: f64, q: f64) -> f64 {
    if q == 0.0 {
        return 1.0;
    }
    let d = (u - 0.5).abs();
    let flat_half = (1.0 - q) / 2.0;
    if d <= flat_half {
        1.0
    } else {
        let phase = ((d - flat_half) / (q / 2.0)).min(1.0);
        0.5 * (1.0 + (std::f64::consts::PI * phase).cos())
    }
}

/// A converged parametric sigmoid fit of a log-log curve.
///
/// The model is y = y0 + Cy / (1 + exp(-Cx (x - x0))) with Cx, Cy > 0,
/// fitted on reflected x when the curve is descending. The dimension
/// estimate is the absolute slope at the center, Cx*Cy/4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmoidFit {
    pub x0: f64,
    pub y0: f64,
    pub cx: f64,
    pub cy: f64,
    /// Absolute central slope, always Cx*Cy/4.
    pub fd: f64,
    pub weighted_rmse: f64,
    /// True when the input curve decreases in x (pair-count orientation).
    pub descending: bool,
    pub iterations: usize,
}

impl SigmoidFit {
    /// Evaluates the fitted sigmoid at `x` in the curve's original
    /// orientation.
    pub fn evaluate(&self, x: f64) -> f64 {
        let sign = if self.descending { -1.0 } else { 1.0 };
        let z = self.cx * sign * (x - self.x0);
        self.y0 + self.cy / (1.0 + (-z).exp())
    }
}

struct FitProblem<'a> {
    xs: &'a [f64],
    ys: &'a [f64],
    weights: &'a [f64],
    /// Allowed range for x0. The dimension is read as the slope at the
    /// curvature center, so the center must stay inside the sampled x-range;
    /// otherwise the optimizer can drift into a near-exponential segment fit
    /// with an arbitrarily scaled Cx*Cy product.
    x0_range: (f64, f64),
}

impl FitProblem<'_> {
    /// Weighted residual sum of squares for parameters
    /// theta = (x0, y0, ln Cx, ln Cy).
    fn cost(&self, theta: &[f64; 4]) -> f64 {
        let (x0, y0, cx, cy) = (theta[0], theta[1], theta[2].exp(), theta[3].exp());
        self.xs
            .iter()
            .zip(self.ys)
            .zip(self.weights)
            .map(|((&x, &y), &w)| {
                let s = 1.0 / (1.0 + (-cx * (x - x0)).exp());
                let r = y - (y0 + cy * s);
                w * r * r
            })
            .sum()
    }

    /// One damped Gauss-Newton (Levenberg-Marquardt) step; returns the
    /// proposed parameter update for damping `lambda`.
    fn step(&self, theta: &[f64; 4], lambda: f64) -> Option<[f64; 4]> {
        let (x0, y0, cx, cy) = (theta[0], theta[1], theta[2].exp(), theta[3].exp());
        // Normal equations J^T W J delta = J^T W r with 4 parameters.
        let mut jtj = [[0.0f64; 4]; 4];
        let mut jtr = [0.0f64; 4];
        for ((&x, &y), &w) in self.xs.iter().zip(self.ys).zip(self.weights) {
            let s = 1.0 / (1.0 + (-cx * (x - x0)).exp());
            let ds = s * (1.0 - s);
            let r = y - (y0 + cy * s);
            // Partials of the model wrt (x0, y0, ln Cx, ln Cy).
            let j = [
                -cy * ds * cx,
                1.0,
                cy * ds * (x - x0) * cx,
                cy * s,
            ];
            for a in 0..4 {
                jtr[a] += w * j[a] * r;
                for b in 0..4 {
                    jtj[a][b] += w * j[a] * j[b];
                }
            }
        }
        for a in 0..4 {
            jtj[a][a] *= 1.0 + lambda;
            jtj[a][a] += 1e-14;
        }
        solve4(&jtj, &jtr)
    }
}

/// Solves a 4x4 linear system by Gaussian elimination with partial pivoting.
fn solve4(a: &[[f64; 4]; 4], b: &[f64; 4]) -> Option<[f64; 4]> {
    let mut m = *a;
    let mut v = *b;
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        v.swap(col, piv);
        for row in (col + 1)..4 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
            v[row] -= f * v[col];
        }
    }
    let mut x = [0.0f64; 4];
    for col in (0..4).rev() {
        let mut acc = v[col];
        for k in (col + 1)..4 {
            acc -= m[col][k] * x[k];
        }
        x[col] = acc / m[col][col];
    }
    Some(x)
}

const FIT_MAX_ITERATIONS: usize = 2000;

fn run_lm(problem: &FitProblem, start: [f64; 4]) -> Option<([f64; 4], f64, usize, bool)> {
    let mut theta = start;
    let mut cost = problem.cost(&theta);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut stall_count = 0usize;
    for it in 0..FIT_MAX_ITERATIONS {
        iterations = it + 1;
        let Some(delta) = problem.step(&theta, lambda) else {
            break;
        };
        let mut candidate = theta;
        for a in 0..4 {
            candidate[a] += delta[a];
        }
        // Keep the center inside the sampled range and the log-scale
        // parameters in a numerically safe range.
        candidate[0] = candidate[0].clamp(problem.x0_range.0, problem.x0_range.1);
        candidate[2] = candidate[2].clamp(-30.0, 30.0);
        candidate[3] = candidate[3].clamp(-30.0, 30.0);
        let new_cost = problem.cost(&candidate);
        if new_cost.is_finite() && (!cost.is_finite() || new_cost < cost) {
            let step_size = delta
                .iter()
                .zip(&theta)
                .map(|(d, t)| d.abs() / (1.0 + t.abs()))
                .fold(0.0f64, f64::max);
            let rel_drop = (cost - new_cost) / cost.max(1e-300);
            theta = candidate;
            cost = new_cost;
            lambda = (lambda * 0.3).max(1e-12);
            if step_size < 1e-10 || rel_drop < 1e-13 {
                converged = true;
                break;
            }
            // A long run of accepted steps that barely improve the cost is
            // a converged fit polishing the last digits, not a failure.
            if rel_drop < 1e-9 {
                stall_count += 1;
                if stall_count >= 10 {
                    converged = true;
                    break;
                }
            } else {
                stall_count = 0;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                converged = true; // stuck at a (local) minimum
                break;
            }
        }
    }
    Some((theta, cost, iterations, converged))
}

/// Fits the parametric sigmoid to a log-log curve with Tukey error
/// weighting over the y-range (parameter `q`), via damped Gauss-Newton
/// with multi-start initialization.
pub fn fit_sigmoid(curve: &LogLogCurve, q: f64) -> Result<SigmoidFit> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "Tukey parameter must be in [0, 1], got {q}"
        )));
    }
    if curve.points.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "sigmoid fit needs at least 5 curve points, got {}",
            curve.points.len()
        )));
    }
    let ys: Vec<f64> = curve.points.iter().map(|p| p.y).collect();
    let y_min = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_max = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let y_range = y_max - y_min;
    if y_range <= 0.0 {
        return Err(Error::Degenerate("curve has zero y-range".into()));
    }

    let descending = curve.points.last().unwrap().y < curve.points[0].y;
    let sign = if descending { -1.0 } else { 1.0 };
    let xs: Vec<f64> = curve.points.iter().map(|p| sign * p.x).collect();
    let weights: Vec<f64> = ys
        .iter()
        .map(|&y| tukey_taper((y - y_min) / y_range, q))
        .collect();
    let weight_sum: f64 = weights.iter().sum();
    if weight_sum <= 0.0 {
        return Err(Error::Degenerate("all fit weights are zero".into()));
    }
    let x_lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let problem = FitProblem {
        xs: &xs,
        ys: &ys,
        weights: &weights,
        x0_range: (x_lo, x_hi),
    };

    // x0 initialized at the x whose y is closest to mid-range.
    let mid = (y_min + y_max) / 2.0;
    let x0_init = xs
        .iter()
        .zip(&ys)
        .min_by(|(_, a), (_, b)| (*a - mid).abs().partial_cmp(&(*b - mid).abs()).unwrap())
        .map(|(&x, _)| x)
        .unwrap();

    // Best run by weighted cost across all starts. A run that hit the
    // iteration cap while still polishing the last digits of a flat valley
    // routinely beats a "converged" bad local minimum, so the flag does not
    // gate selection; only an all-starts failure to reach a finite cost is
    // a fit error.
    let mut best: Option<([f64; 4], f64, usize)> = None;
    let mut total_iterations = 0;
    for cx_init in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let start = [x0_init, y_min, f64::ln(cx_init), y_range.ln()];
        if let Some((theta, cost, iters, _converged)) = run_lm(&problem, start) {
            total_iterations += iters;
            if cost.is_finite() && best.as_ref().map_or(true, |(_, c, _)| cost < *c) {
                best = Some((theta, cost, iters));
            }
        }
    }
    let Some((theta, cost, _)) = best else {
        return Err(Error::FitDidNotConverge {
            iterations: total_iterations,
            best_rmse: f64::INFINITY,
        });
    };

    let cx = theta[2].exp();
    let cy = theta[3].exp();
    Ok(SigmoidFit {
        x0: sign * theta[0],
        y0: theta[1],
        cx,
        cy,
        fd: cx * cy / 4.0,
        weighted_rmse: (cost / weight_sum).sqrt(),
        descending,
        iterations: total_iterations,
    })
}

fn percentile(sorted: &[f64], percent: f64) -> f64 {
    let idx = (percent / 100.0 * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Radii for the given policy, sorted descending.
pub fn radii_for(m: &DataMatrix, policy: &RadiusPolicy) -> Result<Vec<f64>> {
    match policy {
        RadiusPolicy::Explicit { r_values } => {
            validate_radii(r_values)?;
            Ok(r_values.clone())
        }
        RadiusPolicy::DistanceQuantiles {
            count,
            lo_percent,
            hi_percent,
        } => {
            if *count < 2 {
                return Err(Error::InvalidArgument("need at least 2 radii".into()));
            }
            let mut dists: Vec<f64> = pairwise_distances(m)
                .into_iter()
                .filter(|&d| d > 0.0)
                .collect();
            if dists.is_empty() {
                return Err(Error::Degenerate("all pairwise distances are zero".into()));
            }
            dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let lo = percentile(&dists, *lo_percent);
            let hi = percentile(&dists, *hi_percent);
            if !(hi > lo) {
                return Err(Error::Degenerate(
                    "distance quantiles give an empty radius range".into(),
                ));
            }
            let ratio = (lo / hi).powf(1.0 / (*count as f64 - 1.0));
            Ok((0..*count).map(|i| hi * ratio.powi(i as i32)).collect())
        }
        RadiusPolicy::DyadicDiagonal {
            count,
            min_exp,
            max_exp,
        } => {
            if max_exp <= min_exp {
                return Err(Error::InvalidArgument(
                    "max_exp must be > min_exp".into(),
                ));
            }
            if *count < 2 {
                return Err(Error::InvalidArgument("need at least 2 radii".into()));
            }
            let (mins, maxs) = bounding_box(m);
            let diag = mins
                .iter()
                .zip(&maxs)
                .map(|(lo, hi)| (hi - lo) * (hi - lo))
                .sum::<f64>()
                .sqrt();
            if diag == 0.0 {
                return Err(Error::Degenerate("bounding box has zero extent".into()));
            }
            let hi = diag * 0.5f64.powi(*min_exp as i32);
            let lo = diag * 0.5f64.powi(*max_exp as i32);
            let ratio = (lo / hi).powf(1.0 / (*count as f64 - 1.0));
            Ok((0..*count).map(|i| hi * ratio.powi(i as i32)).collect())
        }
    }
}

/// End-to-end dimension estimate: builds the curve for the chosen method
/// and radius policy, fits the Tukey-weighted sigmoid, and reports the
/// absolute central slope as the dimension.
pub fn estimate_fd(
    m: &DataMatrix,
    method: Method,
    q: f64,
    policy: &RadiusPolicy,
) -> Result<SigmoidFit> {
    let (_, fit) = estimate_fd_with_curve(m, method, q, policy)?;
    Ok(fit)
}

/// Like [`estimate_fd`], also returning the constructed curve for export.
pub fn estimate_fd_with_curve(
    m: &DataMatrix,
    method: Method,
    q: f64,
    policy: &RadiusPolicy,
) -> Result<(LogLogCurve, SigmoidFit)> {
    let r_values = radii_for(m, policy)?;
    if r_values.len() < 8 {
        return Err(Error::InvalidArgument(format!(
            "radius policy produced {} radii, need at least 8",
            r_values.len()
        )));
    }
    let curve = match method {
        Method::PairCount => pair_count_curve(m, &r_values)?,
        Method::BoxCount => box_count_curve(m, &r_values)?,
    };
    let fit = fit_sigmoid(&curve, q)?;
    Ok((curve, fit))
}

/// Trimmed and untrimmed summary statistics over a set of FD estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdSummary {
    pub instance_count: usize,
    pub mean_trimmed: f64,
    pub mean_untrimmed: f64,
    pub stdev_trimmed: f64,
    pub stdev_untrimmed: f64,
    /// Two-sided mean confidence half-widths at alpha = 0.05.
    pub conf_halfwidth_trimmed: f64,
    pub conf_halfwidth_untrimmed: f64,
}

fn conf_halfwidth(stdev: f64, count: usize) -> f64 {
    if count < 2 {
        return 0.0;
    }
    stats::t_quantile_two_sided(0.05, (count - 1) as f64) * stdev / (count as f64).sqrt()
}

/// Summarizes >= 3 FD values; the trimmed variant removes one minimum and
/// one maximum element from the multiset.
pub fn fd_summary(fds: &[f64]) -> Result<FdSummary> {
    if fds.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "summary needs at least 3 values, got {}",
            fds.len()
        )));
    }
    let mut sorted = fds.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let trimmed = &sorted[1..sorted.len() - 1];

    let mean_t = stats::mean(trimmed);
    let mean_u = stats::mean(&sorted);
    let sd_t = stats::sample_stdev(trimmed);
    let sd_u = stats::sample_stdev(&sorted);
    Ok(FdSummary {
        instance_count: fds.len(),
        mean_trimmed: mean_t,
        mean_untrimmed: mean_u,
        stdev_trimmed: sd_t,
        stdev_untrimmed: sd_u,
        conf_halfwidth_trimmed: conf_halfwidth(sd_t, trimmed.len()),
        conf_halfwidth_untrimmed: conf_halfwidth(sd_u, sorted.len()),
    })
}
