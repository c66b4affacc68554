//! File formats: NIfTI-1 volumes, raw float32 volumes with a text sidecar,
//! and the binary/CSV exports of the analysis matrix.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::volume::Volume4D;

/// Supported volume file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VolumeFormat {
    Nifti1Uncompressed,
    RawF32_4d,
}

const NIFTI_HEADER_LEN: usize = 348;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    swap: bool,
}

impl<'a> HeaderReader<'a> {
    fn i16_at(&self, offset: usize) -> i16 {
        let raw: [u8; 2] = self.bytes[offset..offset + 2].try_into().unwrap();
        if self.swap {
            i16::from_be_bytes(raw)
        } else {
            i16::from_le_bytes(raw)
        }
    }

    fn f32_at(&self, offset: usize) -> f32 {
        let raw: [u8; 4] = self.bytes[offset..offset + 4].try_into().unwrap();
        if self.swap {
            f32::from_be_bytes(raw)
        } else {
            f32::from_le_bytes(raw)
        }
    }
}

/// Reads an uncompressed single-file NIfTI-1 volume (`.nii`).
///
/// Honors dim[0..4], datatype (int16/float32/float64), pixdim, vox_offset
/// and scl_slope/scl_inter (slope 0 treated as 1). Both byte orders are
/// accepted, detected from the sizeof_hdr field.
pub fn load_nifti1(path: &Path) -> Result<Volume4D> {
    let mut file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| io_err(path, e))?;
    if bytes.len() < NIFTI_HEADER_LEN {
        return Err(Error::Malformed {
            format: "NIfTI-1",
            offset: 0,
            detail: format!("file is {} bytes, header needs {}", bytes.len(), NIFTI_HEADER_LEN),
        });
    }

    let sizeof_hdr_le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let swap = match sizeof_hdr_le {
        348 => false,
        _ if i32::from_be_bytes(bytes[0..4].try_into().unwrap()) == 348 => true,
        other => {
            return Err(Error::Malformed {
                format: "NIfTI-1",
                offset: 0,
                detail: format!("sizeof_hdr is {other}, expected 348 in either byte order"),
            })
        }
    };
    let hdr = HeaderReader {
        bytes: &bytes,
        swap,
    };

    let magic = &bytes[344..348];
    if magic != b"n+1\0" {
        return Err(Error::Malformed {
            format: "NIfTI-1",
            offset: 344,
            detail: format!("magic is {magic:?}, expected \"n+1\\0\""),
        });
    }

    let ndim = hdr.i16_at(40);
    if !(3..=4).contains(&ndim) {
        return Err(Error::Malformed {
            format: "NIfTI-1",
            offset: 40,
            detail: format!("dim[0] is {ndim}, expected 3 or 4"),
        });
    }
    let mut dims = [1usize; 4];
    for (i, d) in dims.iter_mut().enumerate().take(ndim as usize) {
        let raw = hdr.i16_at(42 + 2 * i);
        if raw < 1 {
            return Err(Error::Malformed {
                format: "NIfTI-1",
                offset: (42 + 2 * i) as u64,
                detail: format!("dim[{}] is {raw}, must be >= 1", i + 1),
            });
        }
        *d = raw as usize;
    }

    let datatype = hdr.i16_at(70);
    let bytes_per = match datatype {
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        code => return Err(Error::UnsupportedDatatype { code }),
    };

    let mut spacing = [0.0f64; 3];
    for (i, s) in spacing.iter_mut().enumerate() {
        let p = hdr.f32_at(76 + 4 * (i + 1)) as f64;
        if !p.is_finite() || p.abs() == 0.0 {
            return Err(Error::Malformed {
                format: "NIfTI-1",
                offset: (76 + 4 * (i + 1)) as u64,
                detail: format!("pixdim[{}] is {p}, must be nonzero", i + 1),
            });
        }
        *s = p.abs();
    }

    let vox_offset = hdr.f32_at(108);
    if vox_offset < NIFTI_HEADER_LEN as f32 {
        return Err(Error::Malformed {
            format: "NIfTI-1",
            offset: 108,
            detail: format!("vox_offset {vox_offset} is before the end of the header"),
        });
    }
    let data_start = vox_offset as usize;

    let slope_raw = hdr.f32_at(112) as f64;
    let inter = hdr.f32_at(116) as f64;
    let slope = if slope_raw == 0.0 { 1.0 } else { slope_raw };

    let count = dims.iter().product::<usize>();
    let expected_len = data_start as u64 + (count * bytes_per) as u64;
    if (bytes.len() as u64) < expected_len {
        return Err(Error::SizeMismatch {
            offset: data_start as u64,
            expected: (count * bytes_per) as u64,
            found: bytes.len() as u64 - (data_start as u64).min(bytes.len() as u64),
        });
    }

    let payload = &bytes[data_start..data_start + count * bytes_per];
    let mut values = Vec::with_capacity(count);
    match datatype {
        DT_INT16 => {
            for chunk in payload.chunks_exact(2) {
                let raw: [u8; 2] = chunk.try_into().unwrap();
                let v = if swap {
                    i16::from_be_bytes(raw)
                } else {
                    i16::from_le_bytes(raw)
                };
                values.push(slope * v as f64 + inter);
            }
        }
        DT_FLOAT32 => {
            for chunk in payload.chunks_exact(4) {
                let raw: [u8; 4] = chunk.try_into().unwrap();
                let v = if swap {
                    f32::from_be_bytes(raw)
                } else {
                    f32::from_le_bytes(raw)
                };
                values.push(slope * v as f64 + inter);
            }
        }
        _ => {
            for chunk in payload.chunks_exact(8) {
                let raw: [u8; 8] = chunk.try_into().unwrap();
                let v = if swap {
                    f64::from_be_bytes(raw)
                } else {
                    f64::from_le_bytes(raw)
                };
                values.push(slope * v + inter);
            }
        }
    }

    Volume4D::new(
        (dims[0], dims[1], dims[2], dims[3]),
        (spacing[0], spacing[1], spacing[2]),
        values,
    )
}

/// Writes a volume as an uncompressed little-endian float32 NIfTI-1 file.
pub fn write_nifti1(path: &Path, v: &Volume4D) -> Result<()> {
    let (nx, ny, nz, nt) = v.dims();
    let (sx, sy, sz) = v.spacing_mm();
    let mut hdr = vec![0u8; NIFTI_HEADER_LEN];
    hdr[0..4].copy_from_slice(&348i32.to_le_bytes());
    let dims: [i16; 8] = [4, nx as i16, ny as i16, nz as i16, nt as i16, 1, 1, 1];
    for (i, d) in dims.iter().enumerate() {
        hdr[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
    }
    hdr[70..72].copy_from_slice(&DT_FLOAT32.to_le_bytes());
    hdr[72..74].copy_from_slice(&32i16.to_le_bytes()); // bitpix
    let pixdim: [f32; 8] = [1.0, sx as f32, sy as f32, sz as f32, 1.0, 1.0, 1.0, 1.0];
    for (i, p) in pixdim.iter().enumerate() {
        hdr[76 + 4 * i..80 + 4 * i].copy_from_slice(&p.to_le_bytes());
    }
    hdr[108..112].copy_from_slice(&(NIFTI_HEADER_LEN as f32).to_le_bytes()); // vox_offset
    hdr[112..116].copy_from_slice(&1.0f32.to_le_bytes()); // scl_slope
    hdr[344..348].copy_from_slice(b"n+1\0");

    let mut file = File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&hdr).map_err(|e| io_err(path, e))?;
    let mut payload = Vec::with_capacity(v.values().len() * 4);
    for &val in v.values() {
        payload.extend_from_slice(&(val as f32).to_le_bytes());
    }
    file.write_all(&payload).map_err(|e| io_err(path, e))
}

/// Sidecar descriptor for the raw float32 volume format.
#[derive(Debug, Serialize, Deserialize)]
struct RawSidecar {
    nx: usize,
    ny: usize,
    nz: usize,
    nt: usize,
    sx: f64,
    sy: f64,
    sz: f64,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Reads a raw little-endian float32 4-D volume; dims and spacing come from
/// the `<path>.json` sidecar.
pub fn load_raw_f32(path: &Path) -> Result<Volume4D> {
    let sc_path = sidecar_path(path);
    let sc_text = std::fs::read_to_string(&sc_path).map_err(|e| io_err(&sc_path, e))?;
    let sc: RawSidecar = serde_json::from_str(&sc_text).map_err(|e| Error::Malformed {
        format: "raw-f32-4d sidecar",
        offset: 0,
        detail: e.to_string(),
    })?;
    let count = sc.nx * sc.ny * sc.nz * sc.nt;
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() != count * 4 {
        return Err(Error::SizeMismatch {
            offset: 0,
            expected: (count * 4) as u64,
            found: bytes.len() as u64,
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Volume4D::new((sc.nx, sc.ny, sc.nz, sc.nt), (sc.sx, sc.sy, sc.sz), values)
}

/// Writes a raw little-endian float32 volume plus its sidecar descriptor.
pub fn write_raw_f32(path: &Path, v: &Volume4D) -> Result<()> {
    let (nx, ny, nz, nt) = v.dims();
    let (sx, sy, sz) = v.spacing_mm();
    let sc = RawSidecar {
        nx,
        ny,
        nz,
        nt,
        sx,
        sy,
        sz,
    };
    let sc_path = sidecar_path(path);
    std::fs::write(&sc_path, serde_json::to_string_pretty(&sc).unwrap())
        .map_err(|e| io_err(&sc_path, e))?;
    let mut payload = Vec::with_capacity(v.values().len() * 4);
    for &val in v.values() {
        payload.extend_from_slice(&(val as f32).to_le_bytes());
    }
    std::fs::write(path, payload).map_err(|e| io_err(path, e))
}

/// Loads a volume in the declared format.
pub fn load_volume(path: &Path, format: VolumeFormat) -> Result<Volume4D> {
    match format {
        VolumeFormat::Nifti1Uncompressed => load_nifti1(path),
        VolumeFormat::RawF32_4d => load_raw_f32(path),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixHeader {
    t: usize,
    n: usize,
    voxel_index: Vec<[usize; 3]>,
}

/// Writes a [`DataMatrix`] as a little-endian binary file: a 4-byte header
/// length, a JSON header carrying t, n and the voxel index, then the t*n
/// float64 values row by row.
pub fn write_matrix(path: &Path, m: &DataMatrix) -> Result<()> {
    let header = MatrixHeader {
        t: m.t(),
        n: m.n(),
        voxel_index: m.voxel_index().to_vec(),
    };
    let header_json = serde_json::to_vec(&header).unwrap();
    let mut out = Vec::with_capacity(4 + header_json.len() + m.t() * m.n() * 8);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    for i in 0..m.t() {
        for j in 0..m.n() {
            out.extend_from_slice(&m.values()[(i, j)].to_le_bytes());
        }
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a matrix written by [`write_matrix`].
pub fn load_matrix(path: &Path) -> Result<DataMatrix> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() < 4 {
        return Err(Error::Malformed {
            format: "matrix",
            offset: 0,
            detail: "file shorter than the header length field".into(),
        });
    }
    let header_len = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    if bytes.len() < 4 + header_len {
        return Err(Error::Malformed {
            format: "matrix",
            offset: 4,
            detail: format!("header length {header_len} exceeds file size"),
        });
    }
    let header: MatrixHeader =
        serde_json::from_slice(&bytes[4..4 + header_len]).map_err(|e| Error::Malformed {
            format: "matrix",
            offset: 4,
            detail: e.to_string(),
        })?;
    let data_start = 4 + header_len;
    let expected = header.t * header.n * 8;
    if bytes.len() - data_start != expected {
        return Err(Error::SizeMismatch {
            offset: data_start as u64,
            expected: expected as u64,
            found: (bytes.len() - data_start) as u64,
        });
    }
    let mut values = DMatrix::zeros(header.t, header.n);
    let mut off = data_start;
    for i in 0..header.t {
        for j in 0..header.n {
            values[(i, j)] = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            off += 8;
        }
    }
    DataMatrix::new(values, header.voxel_index)
}

/// Writes the matrix as CSV, one time point per row.
pub fn write_matrix_csv(path: &Path, m: &DataMatrix) -> Result<()> {
    let mut out = String::new();
    for i in 0..m.t() {
        let row: Vec<String> = (0..m.n()).map(|j| format!("{}", m.values()[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}
