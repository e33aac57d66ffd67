//! Single-file NIfTI-1 (`.nii` / `.nii.gz`) reading and writing.
//!
//! Only the subset needed by the harness is supported: 3D volumes (trailing
//! singleton dimensions are accepted), datatypes uint8/16/32, int16/32 and
//! float32/64, either byte order on input. Files are always written
//! little-endian with the sform set, plus the qform when the affine is a
//! scaled rotation whose quaternion survives f32 storage.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use nalgebra::{Matrix3, Matrix4};
use thiserror::Error;

use super::{Geometry, LabelMap, ScalarVolume, VolumeError};

const HEADER_SIZE: usize = 348;
const DATA_OFFSET: usize = 352;
const MAGIC: &[u8; 4] = b"n+1\0";
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_SCL_INTER: usize = 116;
const OFF_XYZT_UNITS: usize = 123;
const OFF_DESCRIP: usize = 148;
const OFF_QFORM_CODE: usize = 252;
const OFF_SFORM_CODE: usize = 254;
const OFF_QUATERN_B: usize = 256;
const OFF_QOFFSET_X: usize = 268;
const OFF_SROW_X: usize = 280;
const OFF_MAGIC: usize = 344;

#[derive(Debug, Error)]
pub enum NiftiError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed NIfTI at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDataType(i16),
    #[error("{0}")]
    InvalidData(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

fn parse_err(offset: usize, message: impl Into<String>) -> NiftiError {
    NiftiError::Parse {
        offset,
        message: message.into(),
    }
}

/// On-disk voxel type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    U8,
    I16,
    I32,
    F32,
    F64,
    U16,
    U32,
}

impl DataType {
    pub fn code(self) -> i16 {
        match self {
            DataType::U8 => 2,
            DataType::I16 => 4,
            DataType::I32 => 8,
            DataType::F32 => 16,
            DataType::F64 => 64,
            DataType::U16 => 512,
            DataType::U32 => 768,
        }
    }

    pub fn from_code(code: i16) -> Result<Self, NiftiError> {
        Ok(match code {
            2 => DataType::U8,
            4 => DataType::I16,
            8 => DataType::I32,
            16 => DataType::F32,
            64 => DataType::F64,
            512 => DataType::U16,
            768 => DataType::U32,
            other => return Err(NiftiError::UnsupportedDataType(other)),
        })
    }

    pub fn size(self) -> usize {
        match self {
            DataType::U8 => 1,
            DataType::I16 | DataType::U16 => 2,
            DataType::I32 | DataType::U32 | DataType::F32 => 4,
            DataType::F64 => 8,
        }
    }

    pub fn is_integer(self) -> bool {
        !matches!(self, DataType::F32 | DataType::F64)
    }

    /// Smallest unsigned type that holds `max`.
    fn for_labels(max: u32) -> Self {
        if max <= u8::MAX as u32 {
            DataType::U8
        } else if max <= u16::MAX as u32 {
            DataType::U16
        } else {
            DataType::U32
        }
    }
}

/// A volume as read from disk. Integer data without intensity scaling and
/// without negative values becomes a label map; everything else is scalar.
#[derive(Debug, Clone, PartialEq)]
pub enum NiftiVolume {
    Scalar(ScalarVolume),
    Labels(LabelMap),
}

impl NiftiVolume {
    pub fn geometry(&self) -> &Geometry {
        match self {
            NiftiVolume::Scalar(v) => v.geometry(),
            NiftiVolume::Labels(l) => l.geometry(),
        }
    }

    pub fn into_scalar(self) -> ScalarVolume {
        match self {
            NiftiVolume::Scalar(v) => v,
            NiftiVolume::Labels(l) => l.to_scalar(),
        }
    }

    /// Label map view; scalar data is accepted only when every value is a
    /// non-negative integer.
    pub fn into_labels(self) -> Result<LabelMap, NiftiError> {
        match self {
            NiftiVolume::Labels(l) => Ok(l),
            NiftiVolume::Scalar(v) => {
                let geometry = v.geometry().clone();
                let labels = v
                    .into_values()
                    .into_iter()
                    .enumerate()
                    .map(|(i, x)| {
                        if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
                            Ok(x as u32)
                        } else {
                            Err(NiftiError::InvalidData(format!(
                                "voxel {i} holds {x}, not a non-negative integer label"
                            )))
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(LabelMap::new(geometry, labels)?)
            }
        }
    }
}

/// Borrowed volume accepted by the writers.
#[derive(Debug, Clone, Copy)]
pub enum VolumeRef<'a> {
    Scalar(&'a ScalarVolume),
    Labels(&'a LabelMap),
}

impl<'a> From<&'a ScalarVolume> for VolumeRef<'a> {
    fn from(v: &'a ScalarVolume) -> Self {
        VolumeRef::Scalar(v)
    }
}

impl<'a> From<&'a LabelMap> for VolumeRef<'a> {
    fn from(v: &'a LabelMap) -> Self {
        VolumeRef::Labels(v)
    }
}

impl<'a> From<&'a NiftiVolume> for VolumeRef<'a> {
    fn from(v: &'a NiftiVolume) -> Self {
        match v {
            NiftiVolume::Scalar(s) => VolumeRef::Scalar(s),
            NiftiVolume::Labels(l) => VolumeRef::Labels(l),
        }
    }
}

impl VolumeRef<'_> {
    fn geometry(&self) -> &Geometry {
        match self {
            VolumeRef::Scalar(v) => v.geometry(),
            VolumeRef::Labels(l) => l.geometry(),
        }
    }
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<NiftiVolume, NiftiError> {
    let path = path.as_ref();
    let io_err = |source| NiftiError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(io_err)?;
    if raw.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        MultiGzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(io_err)?;
        raw = out;
    }
    parse_nifti(&raw)
}

/// Decodes an uncompressed single-file NIfTI-1 image held in memory.
pub fn parse_nifti(bytes: &[u8]) -> Result<NiftiVolume, NiftiError> {
    if bytes.len() < HEADER_SIZE {
        return Err(parse_err(
            bytes.len(),
            format!("header truncated: {} of {HEADER_SIZE} bytes", bytes.len()),
        ));
    }
    if LittleEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        parse_with::<LittleEndian>(bytes)
    } else if BigEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        parse_with::<BigEndian>(bytes)
    } else {
        Err(parse_err(0, "sizeof_hdr is not 348"))
    }
}

fn parse_with<E: ByteOrder>(bytes: &[u8]) -> Result<NiftiVolume, NiftiError> {
    let i16_at = |off: usize| E::read_i16(&bytes[off..off + 2]);
    let f32_at = |off: usize| E::read_f32(&bytes[off..off + 4]);

    if &bytes[OFF_MAGIC..OFF_MAGIC + 4] != MAGIC {
        return Err(parse_err(
            OFF_MAGIC,
            "magic is not \"n+1\\0\" (only single-file NIfTI-1 is supported)",
        ));
    }

    let ndim = i16_at(OFF_DIM);
    if !(1..=7).contains(&ndim) {
        return Err(parse_err(OFF_DIM, format!("dim[0] = {ndim} is outside 1..=7")));
    }
    let mut shape = [1usize; 3];
    for d in 1..=ndim as usize {
        let off = OFF_DIM + 2 * d;
        let n = i16_at(off);
        if n < 1 {
            return Err(parse_err(off, format!("dim[{d}] = {n} must be >= 1")));
        }
        if d <= 3 {
            shape[d - 1] = n as usize;
        } else if n != 1 {
            return Err(parse_err(off, format!("dim[{d}] = {n}: only 3D volumes are supported")));
        }
    }

    let datatype = DataType::from_code(i16_at(OFF_DATATYPE))?;
    let bitpix = i16_at(OFF_BITPIX);
    if bitpix as usize != 8 * datatype.size() {
        return Err(parse_err(
            OFF_BITPIX,
            format!("bitpix {bitpix} does not match datatype {datatype:?}"),
        ));
    }

    let qfac = if f32_at(OFF_PIXDIM) < 0.0 { -1.0 } else { 1.0 };
    let mut pixdim = [1.0f64; 3];
    for (axis, p) in pixdim.iter_mut().enumerate() {
        let off = OFF_PIXDIM + 4 * (axis + 1);
        let v = f32_at(off) as f64;
        if axis < ndim as usize {
            if !(v.is_finite() && v != 0.0) {
                return Err(parse_err(off, format!("pixdim[{}] = {v} is not a valid spacing", axis + 1)));
            }
            *p = v.abs();
        }
    }

    let vox_offset = f32_at(OFF_VOX_OFFSET);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32) {
        return Err(parse_err(OFF_VOX_OFFSET, format!("vox_offset {vox_offset} precedes end of header")));
    }
    let data_start = vox_offset as usize;

    let geometry = header_geometry::<E>(bytes, shape, pixdim, qfac)?;

    let n = geometry.len();
    let needed = n * datatype.size();
    let available = bytes.len().saturating_sub(data_start);
    if available < needed {
        return Err(parse_err(
            data_start + available,
            format!("voxel data truncated: {available} of {needed} bytes"),
        ));
    }
    let data = &bytes[data_start..data_start + needed];

    let slope = f32_at(OFF_SCL_SLOPE) as f64;
    let inter = f32_at(OFF_SCL_INTER) as f64;
    let scaled = slope.is_finite() && slope != 0.0 && !(slope == 1.0 && inter == 0.0);

    if datatype.is_integer() && !scaled {
        let ints = decode_ints::<E>(data, datatype);
        if ints.iter().all(|&v| v >= 0) {
            let labels = ints.into_iter().map(|v| v as u32).collect();
            return Ok(NiftiVolume::Labels(LabelMap::new(geometry, labels)?));
        }
        let values = ints.into_iter().map(|v| v as f64).collect();
        return Ok(NiftiVolume::Scalar(ScalarVolume::new(geometry, values)?));
    }

    let mut values = decode_reals::<E>(data, datatype);
    if scaled {
        let inter = if inter.is_finite() { inter } else { 0.0 };
        values.iter_mut().for_each(|v| *v = *v * slope + inter);
    }
    Ok(NiftiVolume::Scalar(ScalarVolume::new(geometry, values)?))
}

fn header_geometry<E: ByteOrder>(
    bytes: &[u8],
    shape: [usize; 3],
    pixdim: [f64; 3],
    qfac: f64,
) -> Result<Geometry, NiftiError> {
    let i16_at = |off: usize| E::read_i16(&bytes[off..off + 2]);
    let f32_at = |off: usize| E::read_f32(&bytes[off..off + 4]) as f64;

    if i16_at(OFF_QFORM_CODE) > 0 {
        let b = f32_at(OFF_QUATERN_B);
        let c = f32_at(OFF_QUATERN_B + 4);
        let d = f32_at(OFF_QUATERN_B + 8);
        let rotation = quaternion_to_rotation(b, c, d);
        let mut affine = Matrix4::identity();
        for col in 0..3 {
            let scale = pixdim[col] * if col == 2 { qfac } else { 1.0 };
            for row in 0..3 {
                affine[(row, col)] = rotation[(row, col)] * scale;
            }
        }
        for row in 0..3 {
            affine[(row, 3)] = f32_at(OFF_QOFFSET_X + 4 * row);
        }
        return Geometry::new(shape, pixdim, affine)
            .map_err(|e| parse_err(OFF_QUATERN_B, e.to_string()));
    }

    if i16_at(OFF_SFORM_CODE) > 0 {
        let mut affine = Matrix4::identity();
        for row in 0..3 {
            for col in 0..4 {
                affine[(row, col)] = f32_at(OFF_SROW_X + 16 * row + 4 * col);
            }
        }
        let mut spacing = [0.0; 3];
        for (col, s) in spacing.iter_mut().enumerate() {
            *s = affine.fixed_view::<3, 1>(0, col).norm();
        }
        return Geometry::new(shape, spacing, affine).map_err(|e| parse_err(OFF_SROW_X, e.to_string()));
    }

    Geometry::with_spacing(shape, pixdim).map_err(|e| parse_err(OFF_PIXDIM, e.to_string()))
}

fn quaternion_to_rotation(b: f64, c: f64, d: f64) -> Matrix3<f64> {
    let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
    Matrix3::new(
        a * a + b * b - c * c - d * d,
        2.0 * (b * c - a * d),
        2.0 * (b * d + a * c),
        2.0 * (b * c + a * d),
        a * a + c * c - b * b - d * d,
        2.0 * (c * d - a * b),
        2.0 * (b * d - a * c),
        2.0 * (c * d + a * b),
        a * a + d * d - c * c - b * b,
    )
}

/// Quaternion (b, c, d) and qfac for an orthonormal matrix.
fn rotation_to_quaternion(mut r: Matrix3<f64>) -> ([f64; 3], f64) {
    let mut qfac = 1.0;
    if r.determinant() < 0.0 {
        qfac = -1.0;
        for row in 0..3 {
            r[(row, 2)] = -r[(row, 2)];
        }
    }
    let trace = r[(0, 0)] + r[(1, 1)] + r[(2, 2)];
    let (mut b, mut c, mut d);
    if trace > 0.5 {
        let a = 0.5 * (1.0 + trace).sqrt();
        b = 0.25 * (r[(2, 1)] - r[(1, 2)]) / a;
        c = 0.25 * (r[(0, 2)] - r[(2, 0)]) / a;
        d = 0.25 * (r[(1, 0)] - r[(0, 1)]) / a;
    } else {
        let xd = 1.0 + r[(0, 0)] - (r[(1, 1)] + r[(2, 2)]);
        let yd = 1.0 + r[(1, 1)] - (r[(0, 0)] + r[(2, 2)]);
        let zd = 1.0 + r[(2, 2)] - (r[(0, 0)] + r[(1, 1)]);
        let a;
        if xd > 1.0 {
            b = 0.5 * xd.sqrt();
            c = 0.25 * (r[(0, 1)] + r[(1, 0)]) / b;
            d = 0.25 * (r[(0, 2)] + r[(2, 0)]) / b;
            a = 0.25 * (r[(2, 1)] - r[(1, 2)]) / b;
        } else if yd > 1.0 {
            c = 0.5 * yd.sqrt();
            b = 0.25 * (r[(0, 1)] + r[(1, 0)]) / c;
            d = 0.25 * (r[(1, 2)] + r[(2, 1)]) / c;
            a = 0.25 * (r[(0, 2)] - r[(2, 0)]) / c;
        } else {
            d = 0.5 * zd.sqrt();
            b = 0.25 * (r[(0, 2)] + r[(2, 0)]) / d;
            c = 0.25 * (r[(1, 2)] + r[(2, 1)]) / d;
            a = 0.25 * (r[(1, 0)] - r[(0, 1)]) / d;
        }
        if a < 0.0 {
            b = -b;
            c = -c;
            d = -d;
        }
    }
    ([b, c, d], qfac)
}

fn decode_ints<E: ByteOrder>(data: &[u8], dtype: DataType) -> Vec<i64> {
    match dtype {
        DataType::U8 => data.iter().map(|&b| b as i64).collect(),
        DataType::I16 => data.chunks_exact(2).map(|c| E::read_i16(c) as i64).collect(),
        DataType::U16 => data.chunks_exact(2).map(|c| E::read_u16(c) as i64).collect(),
        DataType::I32 => data.chunks_exact(4).map(|c| E::read_i32(c) as i64).collect(),
        DataType::U32 => data.chunks_exact(4).map(|c| E::read_u32(c) as i64).collect(),
        DataType::F32 | DataType::F64 => unreachable!("float datatype decoded as integer"),
    }
}

fn decode_reals<E: ByteOrder>(data: &[u8], dtype: DataType) -> Vec<f64> {
    match dtype {
        DataType::F32 => data.chunks_exact(4).map(|c| E::read_f32(c) as f64).collect(),
        DataType::F64 => data.chunks_exact(8).map(E::read_f64).collect(),
        int => decode_ints::<E>(data, int).into_iter().map(|v| v as f64).collect(),
    }
}

/// Writes with the default on-disk type: float64 for scalar volumes (so the
/// values roundtrip bitwise) and the narrowest unsigned type for labels.
pub fn write_nifti<'a>(volume: impl Into<VolumeRef<'a>>, path: impl AsRef<Path>) -> Result<(), NiftiError> {
    let volume = volume.into();
    let dtype = match volume {
        VolumeRef::Scalar(_) => DataType::F64,
        VolumeRef::Labels(l) => DataType::for_labels(l.labels().iter().copied().max().unwrap_or(0)),
    };
    write_nifti_as(volume, path, dtype)
}

/// Writes `volume` as `dtype`, gzip-compressed when the path ends in `.gz`.
///
/// The file is written to a temporary sibling and renamed into place, so a
/// failed write leaves nothing at `path`.
pub fn write_nifti_as<'a>(
    volume: impl Into<VolumeRef<'a>>,
    path: impl AsRef<Path>,
    dtype: DataType,
) -> Result<(), NiftiError> {
    let volume = volume.into();
    let path = path.as_ref();
    let bytes = encode(volume, dtype)?;

    let io_err = |source| NiftiError::Io {
        path: path.to_path_buf(),
        source,
    };
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".nifti-")
        .tempfile_in(parent)
        .map_err(io_err)?;
    let gz = path
        .file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.ends_with(".gz"));
    if gz {
        let mut enc = GzEncoder::new(tmp.as_file_mut(), Compression::fast());
        enc.write_all(&bytes).map_err(io_err)?;
        enc.finish().map_err(io_err)?;
    } else {
        tmp.as_file_mut().write_all(&bytes).map_err(io_err)?;
    }
    tmp.as_file_mut().flush().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

/// Serializes to an uncompressed single-file NIfTI-1 byte stream.
pub fn encode<'a>(volume: impl Into<VolumeRef<'a>>, dtype: DataType) -> Result<Vec<u8>, NiftiError> {
    let volume = volume.into();
    let geometry = volume.geometry();
    let n = geometry.len();
    let mut out = vec![0u8; DATA_OFFSET + n * dtype.size()];
    write_header(&mut out[..HEADER_SIZE], geometry, dtype)?;
    let data = &mut out[DATA_OFFSET..];
    match volume {
        VolumeRef::Scalar(v) => encode_reals(data, v.values(), dtype)?,
        VolumeRef::Labels(l) => encode_labels(data, l.labels(), dtype)?,
    }
    Ok(out)
}

fn write_header(h: &mut [u8], geometry: &Geometry, dtype: DataType) -> Result<(), NiftiError> {
    type E = LittleEndian;
    let shape = geometry.shape();
    for (axis, &n) in shape.iter().enumerate() {
        if n > i16::MAX as usize {
            return Err(NiftiError::InvalidData(format!(
                "dimension {axis} = {n} exceeds the NIfTI-1 limit of {}",
                i16::MAX
            )));
        }
    }
    E::write_i32(&mut h[0..4], HEADER_SIZE as i32);
    h[38] = b'r';
    let dims = [3, shape[0] as i16, shape[1] as i16, shape[2] as i16, 1, 1, 1, 1];
    for (i, &d) in dims.iter().enumerate() {
        E::write_i16(&mut h[OFF_DIM + 2 * i..], d);
    }
    E::write_i16(&mut h[OFF_DATATYPE..], dtype.code());
    E::write_i16(&mut h[OFF_BITPIX..], (8 * dtype.size()) as i16);

    let affine = geometry.affine();
    let spacing = geometry.spacing();
    let mut rotation = Matrix3::zeros();
    for col in 0..3 {
        for row in 0..3 {
            rotation[(row, col)] = affine[(row, col)] / spacing[col];
        }
    }
    let orthonormal = (rotation.transpose() * rotation - Matrix3::identity()).amax() < 1e-6;
    let (quat, qfac) = if orthonormal {
        rotation_to_quaternion(rotation)
    } else {
        ([0.0; 3], 1.0)
    };
    // Near half-turns the implied quaternion component a is ill-conditioned
    // after f32 storage; leave the qform unset so readers use the sform.
    let orthonormal = orthonormal && {
        let [b, c, d] = quat.map(|q| q as f32 as f64);
        let mut back = quaternion_to_rotation(b, c, d);
        if qfac < 0.0 {
            for row in 0..3 {
                back[(row, 2)] = -back[(row, 2)];
            }
        }
        (0..3).all(|col| {
            (0..3).all(|row| {
                let (want, got) = (affine[(row, col)], back[(row, col)] * spacing[col]);
                (got - want).abs() <= 5e-7 * want.abs().max(1.0)
            })
        })
    };

    E::write_f32(&mut h[OFF_PIXDIM..], qfac as f32);
    for axis in 0..3 {
        E::write_f32(&mut h[OFF_PIXDIM + 4 * (axis + 1)..], spacing[axis] as f32);
    }
    E::write_f32(&mut h[OFF_VOX_OFFSET..], DATA_OFFSET as f32);
    E::write_f32(&mut h[OFF_SCL_SLOPE..], 1.0);
    E::write_f32(&mut h[OFF_SCL_INTER..], 0.0);
    h[OFF_XYZT_UNITS] = 2; // NIFTI_UNITS_MM
    let descrip = b"abdo";
    h[OFF_DESCRIP..OFF_DESCRIP + descrip.len()].copy_from_slice(descrip);

    E::write_i16(&mut h[OFF_QFORM_CODE..], if orthonormal { 1 } else { 0 });
    E::write_i16(&mut h[OFF_SFORM_CODE..], 1);
    for (i, q) in quat.iter().enumerate() {
        E::write_f32(&mut h[OFF_QUATERN_B + 4 * i..], *q as f32);
    }
    for row in 0..3 {
        E::write_f32(&mut h[OFF_QOFFSET_X + 4 * row..], affine[(row, 3)] as f32);
        for col in 0..4 {
            E::write_f32(&mut h[OFF_SROW_X + 16 * row + 4 * col..], affine[(row, col)] as f32);
        }
    }
    h[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(MAGIC);
    Ok(())
}

fn encode_reals(out: &mut [u8], values: &[f64], dtype: DataType) -> Result<(), NiftiError> {
    type E = LittleEndian;
    match dtype {
        DataType::F64 => out.chunks_exact_mut(8).zip(values).for_each(|(c, &v)| E::write_f64(c, v)),
        DataType::F32 => out
            .chunks_exact_mut(4)
            .zip(values)
            .for_each(|(c, &v)| E::write_f32(c, v as f32)),
        int => {
            let ints = values
                .iter()
                .map(|&v| {
                    if v.fract() == 0.0 {
                        Ok(v as i64)
                    } else {
                        Err(NiftiError::InvalidData(format!("value {v} is not integral for {int:?}")))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            encode_ints(out, &ints, int)?;
        }
    }
    Ok(())
}

fn encode_labels(out: &mut [u8], labels: &[u32], dtype: DataType) -> Result<(), NiftiError> {
    type E = LittleEndian;
    match dtype {
        DataType::F32 => out
            .chunks_exact_mut(4)
            .zip(labels)
            .for_each(|(c, &v)| E::write_f32(c, v as f32)),
        DataType::F64 => out
            .chunks_exact_mut(8)
            .zip(labels)
            .for_each(|(c, &v)| E::write_f64(c, v as f64)),
        int => {
            let ints: Vec<i64> = labels.iter().map(|&v| v as i64).collect();
            encode_ints(out, &ints, int)?;
        }
    }
    Ok(())
}

fn encode_ints(out: &mut [u8], values: &[i64], dtype: DataType) -> Result<(), NiftiError> {
    type E = LittleEndian;
    let (lo, hi): (i64, i64) = match dtype {
        DataType::U8 => (0, u8::MAX as i64),
        DataType::I16 => (i16::MIN as i64, i16::MAX as i64),
        DataType::U16 => (0, u16::MAX as i64),
        DataType::I32 => (i32::MIN as i64, i32::MAX as i64),
        DataType::U32 => (0, u32::MAX as i64),
        DataType::F32 | DataType::F64 => unreachable!(),
    };
    if let Some(v) = values.iter().find(|&&v| v < lo || v > hi) {
        return Err(NiftiError::InvalidData(format!("value {v} does not fit {dtype:?}")));
    }
    let size = dtype.size();
    for (c, &v) in out.chunks_exact_mut(size).zip(values) {
        match dtype {
            DataType::U8 => c[0] = v as u8,
            DataType::I16 => E::write_i16(c, v as i16),
            DataType::U16 => E::write_u16(c, v as u16),
            DataType::I32 => E::write_i32(c, v as i32),
            DataType::U32 => E::write_u32(c, v as u32),
            DataType::F32 | DataType::F64 => unreachable!(),
        }
    }
    Ok(())
}
