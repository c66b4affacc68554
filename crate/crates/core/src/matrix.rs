//! The linearized time x voxel analysis matrix and its construction.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::volume::{Volume4D, VoxelMask};

/// The t x n analysis matrix: one row per time point, one column per
/// retained voxel, with a map from columns back to grid coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    voxel_index: Vec<[usize; 3]>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, voxel_index: Vec<[usize; 3]>) -> Result<Self> {
        if voxel_index.len() != values.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "voxel index has {} entries for {} columns",
                voxel_index.len(),
                values.ncols()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::EmptyResult);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "non-finite value in data matrix".into(),
            ));
        }
        Ok(Self {
            values,
            voxel_index,
        })
    }

    /// Number of time points (rows).
    pub fn t(&self) -> usize {
        self.values.nrows()
    }

    /// Number of retained voxels (columns).
    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn voxel_index(&self) -> &[[usize; 3]] {
        &self.voxel_index
    }

    /// One row as a point in n-dimensional voxel space.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }
}

/// Temporal standard deviation of each voxel's time course.
fn temporal_stdev(v: &Volume4D, x: usize, y: usize, z: usize) -> f64 {
    let nt = v.dims().3;
    let mut mean = 0.0;
    for t in 0..nt {
        mean += v.get(x, y, z, t);
    }
    mean /= nt as f64;
    let mut var = 0.0;
    for t in 0..nt {
        let d = v.get(x, y, z, t) - mean;
        var += d * d;
    }
    (var / nt as f64).sqrt()
}

/// Linearizes a volume into a [`DataMatrix`], keeping voxels that are
/// mask-included and whose temporal standard deviation exceeds
/// `activity_threshold` times the largest temporal standard deviation over
/// the mask. Columns follow the fixed scan order x fastest, then y, then z.
pub fn apply_mask_and_threshold(
    v: &Volume4D,
    mask: &VoxelMask,
    activity_threshold: f64,
) -> Result<DataMatrix> {
    let (nx, ny, nz, nt) = v.dims();
    if mask.dims() != (nx, ny, nz) {
        return Err(Error::DimensionMismatch(format!(
            "mask dims {:?} do not match volume spatial dims {:?}",
            mask.dims(),
            (nx, ny, nz)
        )));
    }
    if !(activity_threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "activity threshold must be nonnegative, got {activity_threshold}"
        )));
    }
    if mask.count_included() == 0 {
        return Err(Error::EmptyResult);
    }

    let mut stdevs = Vec::new();
    let mut max_stdev = 0.0f64;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if mask.included(x, y, z) {
                    let s = temporal_stdev(v, x, y, z);
                    max_stdev = max_stdev.max(s);
                    stdevs.push(([x, y, z], s));
                }
            }
        }
    }

    let cutoff = activity_threshold * max_stdev;
    let retained: Vec<[usize; 3]> = stdevs
        .iter()
        .filter(|(_, s)| *s > cutoff)
        .map(|(c, _)| *c)
        .collect();
    if retained.is_empty() {
        return Err(Error::EmptyResult);
    }

    let mut values = DMatrix::zeros(nt, retained.len());
    for (j, &[x, y, z]) in retained.iter().enumerate() {
        for t in 0..nt {
            values[(t, j)] = v.get(x, y, z, t);
        }
    }
    DataMatrix::new(values, retained)
}

/// Keeps only columns whose voxel coordinates are all multiples of `stride`.
pub fn decimate(m: &DataMatrix, spatial_stride: usize) -> Result<DataMatrix> {
    if spatial_stride == 0 {
        return Err(Error::InvalidArgument("stride must be >= 1".into()));
    }
    if spatial_stride == 1 {
        return Ok(m.clone());
    }
    let keep: Vec<usize> = m
        .voxel_index()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.iter().all(|&v| v % spatial_stride == 0))
        .map(|(j, _)| j)
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyResult);
    }
    let t = m.t();
    let mut values = DMatrix::zeros(t, keep.len());
    let mut voxel_index = Vec::with_capacity(keep.len());
    for (jj, &j) in keep.iter().enumerate() {
        values.set_column(jj, &m.values().column(j));
        voxel_index.push(m.voxel_index()[j]);
    }
    DataMatrix::new(values, voxel_index)
}

/// Builds the linear mixture of 2-D spatial maps and their time courses:
/// the sum over sources of (time course column) x (row-major flattened map).
///
/// Maps are indexed `maps[source][row][col]`; flattening is row-major with
/// the column (x) index fastest. Voxel coordinates are recorded as
/// (x = col, y = row, z = 0).
pub fn linearize_slice(maps: &[Vec<Vec<f64>>], timecourses: &[Vec<f64>]) -> Result<DataMatrix> {
    if maps.is_empty() || maps.len() != timecourses.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} maps vs {} timecourses",
            maps.len(),
            timecourses.len()
        )));
    }
    let rows = maps[0].len();
    let cols = maps[0].first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return Err(Error::DimensionMismatch("empty map".into()));
    }
    for m in maps {
        if m.len() != rows || m.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch(
                "maps do not share dimensions".into(),
            ));
        }
    }
    let t = timecourses[0].len();
    if t == 0 || timecourses.iter().any(|tc| tc.len() != t) {
        return Err(Error::DimensionMismatch(
            "timecourses do not share length".into(),
        ));
    }

    let n = rows * cols;
    let mut values = DMatrix::zeros(t, n);
    for (map, tc) in maps.iter().zip(timecourses) {
        for (ti, &a) in tc.iter().enumerate() {
            for (ri, mrow) in map.iter().enumerate() {
                for (ci, &mv) in mrow.iter().enumerate() {
                    values[(ti, ri * cols + ci)] += a * mv;
                }
            }
        }
    }
    let voxel_index = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| [c, r, 0]))
        .collect();
    DataMatrix::new(values, voxel_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Volume4D;

    fn volume_from_fn(
        dims: (usize, usize, usize, usize),
        f: impl Fn(usize, usize, usize, usize) -> f64,
    ) -> Volume4D {
        let (nx, ny, nz, nt) = dims;
        let mut values = vec![0.0; nx * ny * nz * nt];
        for t in 0..nt {
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        values[((t * nz + z) * ny + y) * nx + x] = f(x, y, z, t);
                    }
                }
            }
        }
        Volume4D::new(dims, (1.0, 1.0, 1.0), values).unwrap()
    }

    #[test]
    fn all_zero_volume_gives_empty_result() {
        let v = volume_from_fn((3, 3, 3, 4), |_, _, _, _| 0.0);
        let mask = VoxelMask::all((3, 3, 3));
        assert!(matches!(
            apply_mask_and_threshold(&v, &mask, 0.01),
            Err(Error::EmptyResult)
        ));
    }

    #[test]
    fn five_active_voxels_survive() {
        // Five voxels with alternating 0/1 time courses, everything else flat.
        let active = [[0, 0, 0], [1, 1, 0], [2, 0, 1], [0, 2, 2], [1, 2, 1]];
        let v = volume_from_fn((3, 3, 3, 4), |x, y, z, t| {
            if active.contains(&[x, y, z]) {
                (t % 2) as f64
            } else {
                0.0
            }
        });
        let mask = VoxelMask::all((3, 3, 3));
        let m = apply_mask_and_threshold(&v, &mask, 0.0).unwrap();
        assert_eq!(m.n(), 5);
        assert_eq!(m.t(), 4);
        // Scan order: x fastest, then y, then z.
        assert_eq!(m.voxel_index()[0], [0, 0, 0]);
        assert_eq!(m.voxel_index()[1], [1, 1, 0]);
        assert_eq!(m.voxel_index()[2], [2, 0, 1]);
    }

    #[test]
    fn mask_excludes_voxels() {
        let v = volume_from_fn((2, 1, 1, 3), |x, _, _, t| (x + 1) as f64 * t as f64);
        let mask = VoxelMask::new((2, 1, 1), vec![true, false]).unwrap();
        let m = apply_mask_and_threshold(&v, &mask, 0.0).unwrap();
        assert_eq!(m.n(), 1);
        assert_eq!(m.voxel_index()[0], [0, 0, 0]);
    }

    #[test]
    fn decimate_stride_one_is_identity() {
        let v = volume_from_fn((4, 4, 1, 2), |x, y, _, t| (x + y + t) as f64 + 0.5);
        let m = apply_mask_and_threshold(&v, &VoxelMask::all((4, 4, 1)), 0.0).unwrap();
        let d = decimate(&m, 1).unwrap();
        assert_eq!(m, d);
    }

    #[test]
    fn decimate_full_grid_counts() {
        // 60x60 single-slice grid, stride 2 -> 30*30 survivors.
        let maps = vec![vec![vec![1.0; 60]; 60]];
        let tcs = vec![vec![1.0, 2.0]];
        let m = linearize_slice(&maps, &tcs).unwrap();
        let d = decimate(&m, 2).unwrap();
        assert_eq!(d.n(), 900);

        // 4x4x4 grid, stride 4 -> only the origin voxel survives.
        let v = volume_from_fn((4, 4, 4, 2), |x, y, z, t| ((x + y + z + 1) * (t + 1)) as f64);
        let m3 = apply_mask_and_threshold(&v, &VoxelMask::all((4, 4, 4)), 0.0).unwrap();
        let d3 = decimate(&m3, 4).unwrap();
        assert_eq!(d3.n(), 1);
        assert_eq!(d3.voxel_index()[0], [0, 0, 0]);
    }

    #[test]
    fn decimate_composition_subset_property() {
        let v = volume_from_fn((12, 6, 1, 2), |x, y, _, t| ((x * 7 + y + 1) * (t + 1)) as f64);
        let m = apply_mask_and_threshold(&v, &VoxelMask::all((12, 6, 1)), 0.0).unwrap();
        let ab = decimate(&decimate(&m, 2).unwrap(), 3).unwrap();
        let prod = decimate(&m, 6).unwrap();
        // Stride 2 then 3 keeps coordinates divisible by both, i.e. by 6.
        assert_eq!(ab.voxel_index(), prod.voxel_index());
        assert_eq!(ab.values(), prod.values());
    }

    #[test]
    fn linearize_single_map_flattens_row_major() {
        let maps = vec![vec![vec![1.0, 2.0], vec![3.0, 4.0]]];
        let tcs = vec![vec![1.0]];
        let m = linearize_slice(&maps, &tcs).unwrap();
        assert_eq!(m.t(), 1);
        assert_eq!(m.n(), 4);
        assert_eq!(m.row(0), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.voxel_index()[1], [1, 0, 0]);
        assert_eq!(m.voxel_index()[2], [0, 1, 0]);
    }

    #[test]
    fn linearize_disjoint_superposition() {
        let maps = vec![
            vec![vec![5.0, 0.0], vec![0.0, 0.0]],
            vec![vec![0.0, 0.0], vec![0.0, 7.0]],
        ];
        let tcs = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let m = linearize_slice(&maps, &tcs).unwrap();
        assert_eq!(m.row(0), vec![5.0, 0.0, 0.0, 7.0]);
        assert_eq!(m.row(1), vec![5.0, 0.0, 0.0, 7.0]);
    }

    #[test]
    fn linearize_eight_sources_shape() {
        let maps = vec![vec![vec![0.5; 60]; 60]; 8];
        let tcs = vec![vec![1.0; 100]; 8];
        let m = linearize_slice(&maps, &tcs).unwrap();
        assert_eq!((m.t(), m.n()), (100, 3600));
    }

    #[test]
    fn linearize_rejects_mismatches() {
        let maps = vec![vec![vec![1.0, 2.0]], vec![vec![1.0]]];
        let tcs = vec![vec![1.0], vec![1.0]];
        assert!(linearize_slice(&maps, &tcs).is_err());
        let maps = vec![vec![vec![1.0]]];
        let tcs = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(linearize_slice(&maps, &tcs).is_err());
    }
}
