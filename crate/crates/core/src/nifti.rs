//! NIfTI-1 reading and writing (`.nii` and `.nii.gz`).
//!
//! Reading honors `dim`, `pixdim`, `datatype`, `scl_slope/scl_inter` and the
//! sform (preferred) or qform affine. Writing always populates the sform and,
//! for orthogonal direction matrices, the qform as well.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::volume::{Affine, Geometry, LabelVolume, ScalarVolume, Volume, Voxel, MAX_LABEL};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;
const DT_INT8: i16 = 256;
const DT_UINT16: i16 = 512;
const DT_UINT32: i16 = 768;
const DT_INT64: i16 = 1024;
const DT_UINT64: i16 = 1280;

/// Voxel types with a NIfTI on-disk representation.
pub trait NiftiVoxel: Voxel {
    const DATATYPE: i16;

    fn from_stored(v: f64) -> Result<Self>;
    fn write_le(self, out: &mut Vec<u8>);
}

impl NiftiVoxel for f32 {
    const DATATYPE: i16 = DT_FLOAT32;

    fn from_stored(v: f64) -> Result<Self> {
        Ok(v as f32)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

impl NiftiVoxel for u16 {
    const DATATYPE: i16 = DT_UINT16;

    fn from_stored(v: f64) -> Result<Self> {
        if v.fract() != 0.0 || !(0.0..=MAX_LABEL as f64).contains(&v) {
            return Err(Error::LabelOutOfRange(v));
        }
        Ok(v as u16)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

impl NiftiVoxel for bool {
    const DATATYPE: i16 = DT_UINT8;

    fn from_stored(v: f64) -> Result<Self> {
        Ok(v != 0.0)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.push(self as u8);
    }
}

/// A volume whose element type was chosen from the file contents.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyVolume {
    Scalar(ScalarVolume),
    Labels(LabelVolume),
}

impl AnyVolume {
    pub fn geometry(&self) -> &Geometry {
        match self {
            AnyVolume::Scalar(v) => v.geometry(),
            AnyVolume::Labels(v) => v.geometry(),
        }
    }
}

struct Header {
    dims: Vec<usize>,
    datatype: i16,
    affine: Affine,
    vox_offset: usize,
    slope: f64,
    inter: f64,
    big_endian: bool,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let io_err = |source| Error::IoPath {
        path: path.to_path_buf(),
        source,
    };
    let mut raw = Vec::new();
    BufReader::new(File::open(path).map_err(io_err)?)
        .read_to_end(&mut raw)
        .map_err(io_err)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        MultiGzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(io_err)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Format(format!("file too small ({} bytes)", bytes.len())));
    }
    let big_endian = if LittleEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        false
    } else if BigEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        true
    } else {
        return Err(Error::Format("sizeof_hdr is not 348".into()));
    };
    match &bytes[344..348] {
        b"n+1\0" | b"ni1\0" => {}
        _ => return Err(Error::Format("missing NIfTI-1 magic".into())),
    }
    let i16_at = |o: usize| {
        if big_endian {
            BigEndian::read_i16(&bytes[o..o + 2])
        } else {
            LittleEndian::read_i16(&bytes[o..o + 2])
        }
    };
    let f32_at = |o: usize| -> f64 {
        (if big_endian {
            BigEndian::read_f32(&bytes[o..o + 4])
        } else {
            LittleEndian::read_f32(&bytes[o..o + 4])
        }) as f64
    };

    let ndim = i16_at(40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::Format(format!("invalid dim[0] = {ndim}")));
    }
    let mut dims = Vec::with_capacity(ndim as usize);
    for d in 0..ndim as usize {
        let n = i16_at(42 + 2 * d);
        if n < 1 {
            return Err(Error::Format(format!("invalid dim[{}] = {n}", d + 1)));
        }
        dims.push(n as usize);
    }
    let datatype = i16_at(70);
    let pixdim: Vec<f64> = (0..8).map(|d| f32_at(76 + 4 * d)).collect();
    let vox_offset = f32_at(108);
    let slope = f32_at(112);
    let inter = f32_at(116);
    let qform_code = i16_at(252);
    let sform_code = i16_at(254);

    let affine = if sform_code > 0 {
        let mut a = crate::volume::IDENTITY_AFFINE;
        for (r, row) in a.iter_mut().take(3).enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = f32_at(280 + 16 * r + 4 * c);
            }
        }
        a
    } else if qform_code > 0 {
        let quat = [f32_at(256), f32_at(260), f32_at(264)];
        let offset = [f32_at(268), f32_at(272), f32_at(276)];
        let qfac = if pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        quatern_to_affine(quat, offset, [pixdim[1], pixdim[2], pixdim[3]], qfac)
    } else {
        let mut a = crate::volume::IDENTITY_AFFINE;
        for d in 0..3 {
            a[d][d] = if pixdim[d + 1] > 0.0 { pixdim[d + 1] } else { 1.0 };
        }
        a
    };
    if affine.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteAffine);
    }

    Ok(Header {
        dims,
        datatype,
        affine,
        vox_offset: vox_offset.max(HEADER_SIZE as f64) as usize,
        slope: if slope == 0.0 || !slope.is_finite() { 1.0 } else { slope },
        inter: if inter.is_finite() { inter } else { 0.0 },
        big_endian,
    })
}

fn quatern_to_affine(q: [f64; 3], offset: [f64; 3], pix: [f64; 3], qfac: f64) -> Affine {
    let [mut b, mut c, mut d] = q;
    // same guard as the reference nifti1_io: tiny residuals mean a = 0
    let w2 = 1.0 - (b * b + c * c + d * d);
    let a = if w2 < 1e-7 {
        let norm = (b * b + c * c + d * d).sqrt();
        b /= norm;
        c /= norm;
        d /= norm;
        0.0
    } else {
        w2.sqrt()
    };
    let r = [
        [
            a * a + b * b - c * c - d * d,
            2.0 * (b * c - a * d),
            2.0 * (b * d + a * c),
        ],
        [
            2.0 * (b * c + a * d),
            a * a + c * c - b * b - d * d,
            2.0 * (c * d - a * b),
        ],
        [
            2.0 * (b * d - a * c),
            2.0 * (c * d + a * b),
            a * a + d * d - c * c - b * b,
        ],
    ];
    let scale = [pix[0], pix[1], qfac * pix[2]];
    let mut out = crate::volume::IDENTITY_AFFINE;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = r[i][j] * scale[j];
        }
        out[i][3] = offset[i];
    }
    out
}

/// Quaternion (b, c, d) and qfac of an orthogonal direction matrix, or
/// `None` when the columns are not orthogonal.
fn affine_to_quatern(affine: &Affine, spacing: [f64; 3]) -> Option<([f64; 3], f64)> {
    let mut r = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = affine[i][j] / spacing[j];
        }
    }
    for a in 0..3 {
        for b in (a + 1)..3 {
            let dot: f64 = (0..3).map(|i| r[i][a] * r[i][b]).sum();
            if dot.abs() > 1e-4 {
                return None;
            }
        }
    }
    let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
    let qfac = if det < 0.0 { -1.0 } else { 1.0 };
    if qfac < 0.0 {
        for row in r.iter_mut() {
            row[2] = -row[2];
        }
    }
    let trace = r[0][0] + r[1][1] + r[2][2] + 1.0;
    let (a, mut b, mut c, mut d);
    if trace > 0.5 {
        a = 0.5 * trace.sqrt();
        b = 0.25 * (r[2][1] - r[1][2]) / a;
        c = 0.25 * (r[0][2] - r[2][0]) / a;
        d = 0.25 * (r[1][0] - r[0][1]) / a;
    } else {
        let xd = 1.0 + r[0][0] - (r[1][1] + r[2][2]);
        let yd = 1.0 + r[1][1] - (r[0][0] + r[2][2]);
        let zd = 1.0 + r[2][2] - (r[0][0] + r[1][1]);
        if xd > 1.0 {
            b = 0.5 * xd.sqrt();
            c = 0.25 * (r[0][1] + r[1][0]) / b;
            d = 0.25 * (r[0][2] + r[2][0]) / b;
            a = 0.25 * (r[2][1] - r[1][2]) / b;
        } else if yd > 1.0 {
            c = 0.5 * yd.sqrt();
            b = 0.25 * (r[0][1] + r[1][0]) / c;
            d = 0.25 * (r[1][2] + r[2][1]) / c;
            a = 0.25 * (r[0][2] - r[2][0]) / c;
        } else {
            d = 0.5 * zd.sqrt();
            b = 0.25 * (r[0][2] + r[2][0]) / d;
            c = 0.25 * (r[1][2] + r[2][1]) / d;
            a = 0.25 * (r[1][0] - r[0][1]) / d;
        }
        if a < 0.0 {
            b = -b;
            c = -c;
            d = -d;
        }
    }
    Some(([b, c, d], qfac))
}

fn element_size(datatype: i16) -> Result<usize> {
    Ok(match datatype {
        DT_UINT8 | DT_INT8 => 1,
        DT_INT16 | DT_UINT16 => 2,
        DT_INT32 | DT_UINT32 | DT_FLOAT32 => 4,
        DT_FLOAT64 | DT_INT64 | DT_UINT64 => 8,
        other => return Err(Error::Format(format!("unsupported datatype {other}"))),
    })
}

fn is_integer_type(datatype: i16) -> bool {
    !matches!(datatype, DT_FLOAT32 | DT_FLOAT64)
}

/// Decodes `count` stored values starting at element `start`, applying scaling.
fn decode<T>(
    hdr: &Header,
    bytes: &[u8],
    start: usize,
    count: usize,
    mut convert: impl FnMut(f64) -> Result<T>,
) -> Result<Vec<T>> {
    let size = element_size(hdr.datatype)?;
    let begin = hdr.vox_offset + start * size;
    let end = begin + count * size;
    if bytes.len() < end {
        return Err(Error::Format(format!(
            "truncated data: need {end} bytes, have {}",
            bytes.len()
        )));
    }
    let raw = &bytes[begin..end];
    let scaled = hdr.slope != 1.0 || hdr.inter != 0.0;
    let mut out = Vec::with_capacity(count);
    macro_rules! run {
        ($read:expr) => {{
            for chunk in raw.chunks_exact(size) {
                let v: f64 = $read(chunk);
                let v = if scaled { v * hdr.slope + hdr.inter } else { v };
                out.push(convert(v)?);
            }
        }};
    }
    macro_rules! typed {
        ($E:ty) => {{
            match hdr.datatype {
                DT_UINT8 => run!(|c: &[u8]| c[0] as f64),
                DT_INT8 => run!(|c: &[u8]| c[0] as i8 as f64),
                DT_INT16 => run!(|c: &[u8]| <$E>::read_i16(c) as f64),
                DT_UINT16 => run!(|c: &[u8]| <$E>::read_u16(c) as f64),
                DT_INT32 => run!(|c: &[u8]| <$E>::read_i32(c) as f64),
                DT_UINT32 => run!(|c: &[u8]| <$E>::read_u32(c) as f64),
                DT_INT64 => run!(|c: &[u8]| <$E>::read_i64(c) as f64),
                DT_UINT64 => run!(|c: &[u8]| <$E>::read_u64(c) as f64),
                DT_FLOAT32 => run!(|c: &[u8]| <$E>::read_f32(c) as f64),
                DT_FLOAT64 => run!(|c: &[u8]| <$E>::read_f64(c)),
                other => return Err(Error::Format(format!("unsupported datatype {other}"))),
            }
        }};
    }
    if hdr.big_endian {
        typed!(BigEndian)
    } else {
        typed!(LittleEndian)
    }
    Ok(out)
}

/// Spatial dims plus the number of 3D frames; trailing singleton dims are dropped.
fn split_dims(dims: &[usize]) -> Result<([usize; 3], usize)> {
    let mut d = [1usize; 3];
    for (slot, &n) in d.iter_mut().zip(dims) {
        *slot = n;
    }
    let frames: usize = dims.iter().skip(3).product();
    let extra = dims.iter().skip(4).filter(|&&n| n > 1).count();
    if extra > 0 {
        return Err(Error::NotThreeD(3 + dims.iter().skip(3).filter(|&&n| n > 1).count()));
    }
    Ok((d, frames))
}

/// Reads a 3D NIfTI volume into the requested voxel type.
pub fn read_volume<T: NiftiVoxel>(path: impl AsRef<Path>) -> Result<Volume<T>> {
    let bytes = read_bytes(path.as_ref())?;
    let hdr = parse_header(&bytes)?;
    let (dims, frames) = split_dims(&hdr.dims)?;
    if frames != 1 {
        return Err(Error::NotThreeD(4));
    }
    let geom = Geometry::new(dims, hdr.affine)?;
    let data = decode(&hdr, &bytes, 0, geom.len(), T::from_stored)?;
    Volume::new(geom, data)
}

pub fn read_scalar(path: impl AsRef<Path>) -> Result<ScalarVolume> {
    read_volume(path)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVolume> {
    read_volume(path)
}

/// Reads a volume, loading it as labels when `want_labels` is set and the
/// file holds integers within the label range; otherwise as scalars.
pub fn read_any(path: impl AsRef<Path>, want_labels: bool) -> Result<AnyVolume> {
    let path = path.as_ref();
    if want_labels {
        let bytes = read_bytes(path)?;
        let hdr = parse_header(&bytes)?;
        if is_integer_type(hdr.datatype) {
            if let Ok(v) = read_labels(path) {
                return Ok(AnyVolume::Labels(v));
            }
        }
    }
    read_scalar(path).map(AnyVolume::Scalar)
}

/// Reads a 4D float volume as one frame per entry of the 4th dimension.
pub fn read_frames(path: impl AsRef<Path>) -> Result<(Geometry, Vec<Vec<f32>>)> {
    let bytes = read_bytes(path.as_ref())?;
    let hdr = parse_header(&bytes)?;
    let (dims, frames) = split_dims(&hdr.dims)?;
    let geom = Geometry::new(dims, hdr.affine)?;
    let n = geom.len();
    let data = (0..frames)
        .map(|f| decode(&hdr, &bytes, f * n, n, |v| Ok(v as f32)))
        .collect::<Result<Vec<_>>>()?;
    Ok((geom, data))
}

fn build_header(geom: &Geometry, frames: usize, datatype: i16) -> Vec<u8> {
    let mut h = vec![0u8; VOX_OFFSET];
    let put_i16 = |h: &mut [u8], o: usize, v: i16| LittleEndian::write_i16(&mut h[o..o + 2], v);
    let put_f32 = |h: &mut [u8], o: usize, v: f64| LittleEndian::write_f32(&mut h[o..o + 4], v as f32);
    LittleEndian::write_i32(&mut h[0..4], HEADER_SIZE as i32);
    h[38] = b'r'; // regular
    let dims = geom.dims();
    put_i16(&mut h, 40, if frames > 1 { 4 } else { 3 });
    for (d, &n) in dims.iter().enumerate() {
        put_i16(&mut h, 42 + 2 * d, n as i16);
    }
    put_i16(&mut h, 48, frames as i16);
    for d in 4..7 {
        put_i16(&mut h, 42 + 2 * d, 1);
    }
    let bits = match datatype {
        DT_UINT8 => 8,
        DT_UINT16 => 16,
        _ => 32,
    };
    put_i16(&mut h, 70, datatype);
    put_i16(&mut h, 72, bits);

    let spacing = geom.spacing();
    let affine = geom.affine();
    let quat = affine_to_quatern(affine, spacing);
    put_f32(&mut h, 76, quat.map(|q| q.1).unwrap_or(1.0));
    for d in 0..3 {
        put_f32(&mut h, 80 + 4 * d, spacing[d]);
    }
    put_f32(&mut h, 92, 1.0);
    put_f32(&mut h, 108, VOX_OFFSET as f64);
    put_f32(&mut h, 112, 1.0);
    put_f32(&mut h, 116, 0.0);
    h[123] = 2; // xyzt_units: mm
    let descrip = b"brainsynth";
    h[148..148 + descrip.len()].copy_from_slice(descrip);

    if let Some((q, _)) = quat {
        put_i16(&mut h, 252, 1);
        for d in 0..3 {
            put_f32(&mut h, 256 + 4 * d, q[d]);
            put_f32(&mut h, 268 + 4 * d, affine[d][3]);
        }
    }
    put_i16(&mut h, 254, 1);
    for r in 0..3 {
        for c in 0..4 {
            put_f32(&mut h, 280 + 16 * r + 4 * c, affine[r][c]);
        }
    }
    h[344..348].copy_from_slice(b"n+1\0");
    h
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| Error::IoPath {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let gz = path
        .file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.ends_with(".gz"))
        .unwrap_or(false);
    if gz {
        let mut enc = GzEncoder::new(BufWriter::new(file), Compression::fast());
        enc.write_all(bytes).map_err(io_err)?;
        enc.finish().map_err(io_err)?.flush().map_err(io_err)?;
    } else {
        let mut w = BufWriter::new(file);
        w.write_all(bytes).map_err(io_err)?;
        w.flush().map_err(io_err)?;
    }
    Ok(())
}

/// Writes a 3D volume; gzip-compressed when the path ends in `.gz`.
pub fn write_volume<T: NiftiVoxel>(vol: &Volume<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = build_header(vol.geometry(), 1, T::DATATYPE);
    bytes.reserve(vol.len() * 4);
    for &v in vol.data() {
        v.write_le(&mut bytes);
    }
    write_bytes(path.as_ref(), &bytes)
}

pub fn write_any(vol: &AnyVolume, path: impl AsRef<Path>) -> Result<()> {
    match vol {
        AnyVolume::Scalar(v) => write_volume(v, path),
        AnyVolume::Labels(v) => write_volume(v, path),
    }
}

/// Writes frames of a shared geometry as a 4D float32 volume.
pub fn write_frames(geom: &Geometry, frames: &[Vec<f32>], path: impl AsRef<Path>) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("no frames to write"));
    }
    let mut bytes = build_header(geom, frames.len(), DT_FLOAT32);
    for frame in frames {
        if frame.len() != geom.len() {
            return Err(Error::GeometryMismatch("frame length and grid"));
        }
        for &v in frame {
            v.write_le(&mut bytes);
        }
    }
    write_bytes(path.as_ref(), &bytes)
}

/// File name without `.nii` / `.nii.gz`.
pub fn case_name(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    name.trim_end_matches(".gz").trim_end_matches(".nii").to_string()
}

pub fn is_nifti_path(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.ends_with(".nii") || n.ends_with(".nii.gz"))
        .unwrap_or(false)
}
