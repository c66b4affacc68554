//! Seeded generator for the simulated eight-source fMRI-like mixture:
//! eight 60x60 spatial maps with prescribed Gaussianity classes, each
//! driven by a 100-point time course, mixed linearly.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{linearize_slice, DataMatrix};

pub const MAP_SIDE: usize = 60;
pub const TIMECOURSE_LEN: usize = 100;
pub const SOURCE_COUNT: usize = 8;

/// Nominal sampling interval of the simulated time courses, in seconds.
pub const TR_SECONDS: f64 = 2.0;

/// Relative mixture energy of each source, S1..S8: a geometric decay with
/// ratio 0.71. The time course of source i is scaled so the Frobenius norm
/// of its rank-1 contribution is exactly `SOURCE_AMPLITUDES[i] * 10`
/// regardless of the realized map geometry, which keeps the spectral
/// profile of the mixture (and hence its correlation dimension) stable
/// across seeds.
pub const SOURCE_AMPLITUDES: [f64; SOURCE_COUNT] = [
    1.0,
    0.71,
    0.5041,
    0.357_911,
    0.254_116_81,
    0.180_422_935_1,
    0.128_100_283_921,
    0.090_951_201_583_91,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gaussianity {
    Super,
    Gaussian,
    Sub,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    TaskRelated,
    TransientlyTaskRelated,
    Artifact,
}

/// Statistical prescription of one simulated source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpec {
    /// 1-based source id.
    pub id: u8,
    pub gaussianity: Gaussianity,
    pub role: Role,
}

/// The fixed prescription for the eight sources: super-Gaussian
/// {S1, S2, S5, S6, S8}, Gaussian {S4}, sub-Gaussian {S3, S7}; S1 is
/// task-related and S2/S6 transiently task-related, the rest artifacts.
pub fn source_specs() -> [SourceSpec; SOURCE_COUNT] {
    use Gaussianity::*;
    use Role::*;
    [
        SourceSpec { id: 1, gaussianity: Super, role: TaskRelated },
        SourceSpec { id: 2, gaussianity: Super, role: TransientlyTaskRelated },
        SourceSpec { id: 3, gaussianity: Sub, role: Artifact },
        SourceSpec { id: 4, gaussianity: Gaussian, role: Artifact },
        SourceSpec { id: 5, gaussianity: Super, role: Artifact },
        SourceSpec { id: 6, gaussianity: Super, role: TransientlyTaskRelated },
        SourceSpec { id: 7, gaussianity: Sub, role: Artifact },
        SourceSpec { id: 8, gaussianity: Super, role: Artifact },
    ]
}

/// Ground truth of one simulated realization: spatial maps (unit peak
/// absolute value), time courses (unit-RMS shapes scaled to the fixed
/// [`SOURCE_AMPLITUDES`] energy profile) and the seed that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSet {
    pub seed: u64,
    pub specs: Vec<SourceSpec>,
    /// Eight 60x60 fields, indexed maps[source][row][col].
    pub maps: Vec<Vec<Vec<f64>>>,
    /// Eight 100-point series.
    pub timecourses: Vec<Vec<f64>>,
}

/// Canonical double-gamma hemodynamic response sampled on the TR grid:
/// positive lobe peaking at 6 s, undershoot at 16 s, unit peak.
pub fn canonical_hrf(len: usize) -> Vec<f64> {
    fn gamma_density(t: f64, shape: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        // Unnormalized t^(a-1) e^-t; the final curve is peak-normalized.
        ((shape - 1.0) * t.ln() - t).exp()
    }
    let mut h: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 * TR_SECONDS;
            gamma_density(t, 7.0) / gamma_density(6.0, 7.0)
                - (1.0 / 6.0) * gamma_density(t, 17.0) / gamma_density(16.0, 17.0)
        })
        .collect();
    let peak = h.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
    if peak > 0.0 {
        for v in &mut h {
            *v /= peak;
        }
    }
    h
}

fn convolve_causal(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    (0..signal.len())
        .map(|i| {
            (0..=i)
                .map(|k| kernel.get(k).copied().unwrap_or(0.0) * signal[i - k])
                .sum()
        })
        .collect()
}

/// 10-on/10-off block stimulus starting with an off block.
fn block_stimulus(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| if (i / 10) % 2 == 1 { 1.0 } else { 0.0 })
        .collect()
}

fn unit_rms(series: &mut [f64]) {
    let rms = (series.iter().map(|v| v * v).sum::<f64>() / series.len() as f64).sqrt();
    if rms > 0.0 {
        for v in series.iter_mut() {
            *v /= rms;
        }
    }
}

fn unit_peak(map: &mut [Vec<f64>]) {
    let peak = map
        .iter()
        .flatten()
        .fold(0.0f64, |a, &b| a.max(b.abs()));
    if peak > 0.0 {
        for row in map.iter_mut() {
            for v in row.iter_mut() {
                *v /= peak;
            }
        }
    }
}

/// Sparse sum of Gaussian activation blobs: a super-Gaussian field.
fn blob_map(rng: &mut ChaCha8Rng, blob_count: usize, sigma: f64) -> Vec<Vec<f64>> {
    let mut map = vec![vec![0.0f64; MAP_SIDE]; MAP_SIDE];
    for _ in 0..blob_count {
        let cx = rng.gen_range(8.0..(MAP_SIDE as f64 - 8.0));
        let cy = rng.gen_range(8.0..(MAP_SIDE as f64 - 8.0));
        let amp = rng.gen_range(0.7..1.0);
        for (r, row) in map.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                let dx = c as f64 - cx;
                let dy = r as f64 - cy;
                *v += amp * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    map
}

fn gaussian_map(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..MAP_SIDE)
        .map(|_| (0..MAP_SIDE).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

fn uniform_map(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..MAP_SIDE)
        .map(|_| (0..MAP_SIDE).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

fn white_noise(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// Per-source RNG: one fixed stream of the seeded generator per purpose,
/// so every source is reproducible independently of generation order.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates the eight-source ground truth for one seed. Same seed, same
/// bits: generation is platform-independent and order-independent.
pub fn generate_sources(seed: u64) -> SourceSet {
    let specs = source_specs();
    let hrf = canonical_hrf(TIMECOURSE_LEN);
    let blocks = block_stimulus(TIMECOURSE_LEN);
    let len = TIMECOURSE_LEN;

    let mut maps = Vec::with_capacity(SOURCE_COUNT);
    let mut timecourses = Vec::with_capacity(SOURCE_COUNT);
    for (src_idx, spec) in specs.iter().enumerate() {
        let map_stream = spec.id as u64;
        let tc_stream = 16 + spec.id as u64;
        let mut map = match spec.gaussianity {
            Gaussianity::Super => {
                let mut rng = stream_rng(seed, map_stream);
                let (count, sigma) = match spec.id {
                    1 => (3, 2.5),
                    2 => (3, 2.5),
                    5 => (4, 2.0),
                    6 => (2, 3.0),
                    _ => (3, 2.0),
                };
                blob_map(&mut rng, count, sigma)
            }
            Gaussianity::Gaussian => gaussian_map(&mut stream_rng(seed, map_stream)),
            Gaussianity::Sub => uniform_map(&mut stream_rng(seed, map_stream)),
        };
        unit_peak(&mut map);
        let map_norm = map
            .iter()
            .flatten()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        maps.push(map);

        let mut rng = stream_rng(seed, tc_stream);
        let mut tc = match spec.id {
            // Task-related: HRF-modulated block design.
            1 => convolve_causal(&blocks, &hrf),
            // Transiently task-related: the same blocks under a decaying
            // (S2) or rising (S6) envelope.
            2 => {
                let stim: Vec<f64> = blocks
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| b * (-(i as f64) / 30.0).exp())
                    .collect();
                convolve_causal(&stim, &hrf)
            }
            6 => {
                let stim: Vec<f64> = blocks
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| b * (-((len - 1 - i) as f64) / 30.0).exp())
                    .collect();
                convolve_causal(&stim, &hrf)
            }
            // Scanner drift: slow strictly monotone trend.
            3 => (0..len)
                .map(|i| {
                    let u = i as f64 / (len - 1) as f64;
                    u + 0.3 * u * u
                })
                .collect(),
            // Respiration: sinusoid plus noise.
            4 => (0..len)
                .map(|i| (2.0 * std::f64::consts::PI * i as f64 / 12.0).sin())
                .zip(white_noise(&mut rng, len))
                .map(|(s, n)| s + 0.3 * n)
                .collect(),
            // Cardiac pulsation: a distinct faster sinusoid plus noise.
            5 => (0..len)
                .map(|i| (2.0 * std::f64::consts::PI * i as f64 / 7.3 + 1.0).sin())
                .zip(white_noise(&mut rng, len))
                .map(|(s, n)| s + 0.3 * n)
                .collect(),
            // Broadband noise artifacts.
            7 => white_noise(&mut rng, len),
            _ => {
                let n = white_noise(&mut rng, len + 1);
                (0..len).map(|i| 0.5 * (n[i] + n[i + 1])).collect()
            }
        };
        unit_rms(&mut tc);
        // Fix the rank-1 contribution energy: after unit-RMS normalization
        // the time-course sum of squares is TIMECOURSE_LEN, so this scale
        // makes ||tc|| * ||map|| = amplitude * sqrt(TIMECOURSE_LEN).
        let scale = SOURCE_AMPLITUDES[src_idx] / map_norm;
        for v in tc.iter_mut() {
            *v *= scale;
        }
        timecourses.push(tc);
    }

    SourceSet {
        seed,
        specs: specs.to_vec(),
        maps,
        timecourses,
    }
}

/// Mixes the sources into the 100x3600 analysis matrix, optionally adding
/// white Gaussian noise with standard deviation `noise_level` times the RMS
/// of the noiseless mixture.
pub fn mix(s: &SourceSet, noise_level: f64, seed: u64) -> Result<DataMatrix> {
    if !(noise_level >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise level must be nonnegative, got {noise_level}"
        )));
    }
    let m = linearize_slice(&s.maps, &s.timecourses)?;
    if noise_level == 0.0 {
        return Ok(m);
    }
    let rms = (m.values().iter().map(|v| v * v).sum::<f64>()
        / (m.t() * m.n()) as f64)
        .sqrt();
    let sd = noise_level * rms;
    let mut rng = stream_rng(seed, 0x6e6f6973); // noise stream
    let mut values = m.values().clone();
    for i in 0..values.nrows() {
        for j in 0..values.ncols() {
            let n: f64 = StandardNormal.sample(&mut rng);
            values[(i, j)] += sd * n;
        }
    }
    DataMatrix::new(values, m.voxel_index().to_vec())
}

#[derive(Serialize, Deserialize)]
struct SourceExport {
    seed: u64,
    specs: Vec<SourceSpec>,
    map_side: usize,
    timecourses: Vec<Vec<f64>>,
}

/// Exports the ground truth: time courses and specs as JSON at `json_path`,
/// maps as little-endian float64 at `maps_path` (8 maps, row-major).
pub fn export_sources(s: &SourceSet, json_path: &Path, maps_path: &Path) -> Result<()> {
    let export = SourceExport {
        seed: s.seed,
        specs: s.specs.clone(),
        map_side: MAP_SIDE,
        timecourses: s.timecourses.clone(),
    };
    let json = serde_json::to_string_pretty(&export).unwrap();
    std::fs::write(json_path, json).map_err(|e| Error::Io {
        path: json_path.display().to_string(),
        source: e,
    })?;
    let mut bytes = Vec::with_capacity(SOURCE_COUNT * MAP_SIDE * MAP_SIDE * 8);
    for map in &s.maps {
        for row in map {
            for v in row {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    std::fs::write(maps_path, bytes).map_err(|e| Error::Io {
        path: maps_path.display().to_string(),
        source: e,
    })
}

/// Reads back a ground truth written by [`export_sources`].
pub fn load_sources(json_path: &Path, maps_path: &Path) -> Result<SourceSet> {
    let json = std::fs::read_to_string(json_path).map_err(|e| Error::Io {
        path: json_path.display().to_string(),
        source: e,
    })?;
    let export: SourceExport = serde_json::from_str(&json).map_err(|e| Error::Malformed {
        format: "source-set json",
        offset: 0,
        detail: e.to_string(),
    })?;
    let bytes = std::fs::read(maps_path).map_err(|e| Error::Io {
        path: maps_path.display().to_string(),
        source: e,
    })?;
    let side = export.map_side;
    let expected = export.specs.len() * side * side * 8;
    if bytes.len() != expected {
        return Err(Error::SizeMismatch {
            offset: 0,
            expected: expected as u64,
            found: bytes.len() as u64,
        });
    }
    let mut maps = Vec::with_capacity(export.specs.len());
    let mut off = 0usize;
    for _ in 0..export.specs.len() {
        let mut map = vec![vec![0.0f64; side]; side];
        for row in map.iter_mut() {
            for v in row.iter_mut() {
                *v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
                off += 8;
            }
        }
        maps.push(map);
    }
    Ok(SourceSet {
        seed: export.seed,
        specs: export.specs,
        maps,
        timecourses: export.timecourses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::excess_kurtosis;

    fn flat(map: &[Vec<f64>]) -> Vec<f64> {
        map.iter().flatten().copied().collect()
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = generate_sources(1234);
        let b = generate_sources(1234);
        assert_eq!(a, b);
        let ma = mix(&a, 0.3, 1234).unwrap();
        let mb = mix(&b, 0.3, 1234).unwrap();
        assert_eq!(ma, mb);
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_sources(1);
        let b = generate_sources(2);
        assert_ne!(a.maps, b.maps);
    }

    #[test]
    fn map_kurtosis_matches_gaussianity_class() {
        for seed in [7u64, 99, 2024] {
            let s = generate_sources(seed);
            for (spec, map) in s.specs.iter().zip(&s.maps) {
                let k = excess_kurtosis(&flat(map));
                match spec.gaussianity {
                    Gaussianity::Super => assert!(k > 1.0, "S{} kurtosis {k}", spec.id),
                    Gaussianity::Gaussian => {
                        assert!(k.abs() < 0.3, "S{} kurtosis {k}", spec.id)
                    }
                    Gaussianity::Sub => assert!(k < -0.5, "S{} kurtosis {k}", spec.id),
                }
            }
        }
    }

    #[test]
    fn maps_have_unit_peak() {
        let s = generate_sources(5);
        for map in &s.maps {
            let peak = flat(map).iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            assert!((peak - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn drift_timecourse_is_monotone() {
        let s = generate_sources(11);
        let drift = &s.timecourses[2]; // S3
        assert!(drift.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn hrf_shape() {
        let h = canonical_hrf(20);
        let peak_idx = h
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        // Peak at 6 s = sample 3 on the 2 s grid, unit height.
        assert_eq!(peak_idx, 3);
        assert!((h[peak_idx] - 1.0).abs() < 1e-12);
        // Undershoot dips below zero around 16 s.
        assert!(h[8] < 0.0);
    }

    #[test]
    fn mix_shapes_and_rank_one_case() {
        let s = generate_sources(3);
        let m = mix(&s, 0.0, 3).unwrap();
        assert_eq!((m.t(), m.n()), (100, 3600));

        // Single nonzero source: matrix is exactly timecourse x flat map.
        let mut solo = s.clone();
        for i in 1..SOURCE_COUNT {
            solo.maps[i] = vec![vec![0.0; MAP_SIDE]; MAP_SIDE];
        }
        let m1 = mix(&solo, 0.0, 3).unwrap();
        let map0 = flat(&solo.maps[0]);
        for ti in 0..m1.t() {
            for j in 0..m1.n() {
                let expected = solo.timecourses[0][ti] * map0[j];
                assert!((m1.values()[(ti, j)] - expected).abs() < 1e-12);
            }
        }
    }
}
