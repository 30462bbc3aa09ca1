//! Single-file NIfTI-1 (`.nii`) subset.
//!
//! Reading accepts uint8, int16, float32 and float64 voxels in either byte
//! order, applies `scl_slope`/`scl_inter` when the slope is non-zero, and
//! honors up to three spatial dimensions. Orientation fields are ignored and
//! any extension bytes are skipped through `vox_offset`.
//!
//! Writing always produces little-endian float32 with `vox_offset = 352`
//! and an empty extension flag.

use std::fs;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};

use super::Volume;
use crate::error::{Error, Result};

pub const NIFTI1_HEADER_SIZE: usize = 348;
pub const VOX_OFFSET: usize = 352;

const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";

mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const DESCRIP: usize = 148;
    pub const MAGIC: usize = 344;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Datatype {
    UInt8,
    Int16,
    Float32,
    Float64,
}

impl Datatype {
    fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(Self::UInt8),
            4 => Ok(Self::Int16),
            16 => Ok(Self::Float32),
            64 => Ok(Self::Float64),
            other => Err(Error::UnsupportedDatatype(other)),
        }
    }

    fn size(self) -> usize {
        match self {
            Self::UInt8 => 1,
            Self::Int16 => 2,
            Self::Float32 => 4,
            Self::Float64 => 8,
        }
    }
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let bytes = fs::read(path)?;
    read_volume_bytes(&bytes)
}

pub fn read_volume_bytes(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < NIFTI1_HEADER_SIZE {
        // too short to even carry a header; decide between "not NIfTI" and
        // "cut-off NIfTI" from the first field when it is present
        if bytes.len() >= 4 && sizeof_hdr_matches(bytes) {
            return Err(Error::CorruptFile(format!("header truncated at {} bytes", bytes.len())));
        }
        return Err(Error::NotNifti(format!("{} bytes, no NIfTI-1 header", bytes.len())));
    }
    if LittleEndian::read_i32(&bytes[offsets::SIZEOF_HDR..]) == NIFTI1_HEADER_SIZE as i32 {
        parse::<LittleEndian>(bytes)
    } else if BigEndian::read_i32(&bytes[offsets::SIZEOF_HDR..]) == NIFTI1_HEADER_SIZE as i32 {
        parse::<BigEndian>(bytes)
    } else {
        Err(Error::NotNifti("sizeof_hdr is not 348 in either byte order".into()))
    }
}

fn sizeof_hdr_matches(bytes: &[u8]) -> bool {
    LittleEndian::read_i32(bytes) == NIFTI1_HEADER_SIZE as i32
        || BigEndian::read_i32(bytes) == NIFTI1_HEADER_SIZE as i32
}

fn parse<B: ByteOrder>(bytes: &[u8]) -> Result<Volume> {
    if &bytes[offsets::MAGIC..offsets::MAGIC + 4] != MAGIC_SINGLE {
        return Err(Error::NotNifti(format!(
            "magic {:?} is not \"n+1\\0\"",
            &bytes[offsets::MAGIC..offsets::MAGIC + 4]
        )));
    }

    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = B::read_i16(&bytes[offsets::DIM + 2 * i..]);
    }
    let ndim = dim[0];
    if !(1..=7).contains(&ndim) {
        return Err(Error::CorruptFile(format!("dim[0] = {ndim} out of range")));
    }
    let ndim = ndim as usize;
    if let Some(extra) = (4..=ndim).find(|&i| dim[i] > 1) {
        return Err(Error::UnsupportedDimensions(format!(
            "dim[{extra}] = {}; only 3-D volumes are supported",
            dim[extra]
        )));
    }
    let mut dims = [1usize; 3];
    for axis in 0..ndim.min(3) {
        let d = dim[axis + 1];
        if d < 1 {
            return Err(Error::CorruptFile(format!("dim[{}] = {d}", axis + 1)));
        }
        dims[axis] = d as usize;
    }

    let datatype = Datatype::from_code(B::read_i16(&bytes[offsets::DATATYPE..]))?;

    let mut spacing = [1.0f64; 3];
    for (axis, s) in spacing.iter_mut().enumerate().take(ndim.min(3)) {
        let p = B::read_f32(&bytes[offsets::PIXDIM + 4 * (axis + 1)..]) as f64;
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::CorruptFile(format!("pixdim[{}] = {p}", axis + 1)));
        }
        *s = p;
    }

    let vox_offset = B::read_f32(&bytes[offsets::VOX_OFFSET..]);
    if !(vox_offset.is_finite() && vox_offset >= NIFTI1_HEADER_SIZE as f32) {
        return Err(Error::CorruptFile(format!("vox_offset = {vox_offset}")));
    }
    let start = vox_offset as usize;

    let n: usize = dims.iter().product();
    let end = start + n * datatype.size();
    if bytes.len() < end {
        return Err(Error::CorruptFile(format!(
            "expected {end} bytes for {n} voxels, file has {}",
            bytes.len()
        )));
    }
    let body = &bytes[start..end];
    let mut data: Vec<f64> = match datatype {
        Datatype::UInt8 => body.iter().map(|&b| f64::from(b)).collect(),
        Datatype::Int16 => body.chunks_exact(2).map(|c| f64::from(B::read_i16(c))).collect(),
        Datatype::Float32 => body.chunks_exact(4).map(|c| f64::from(B::read_f32(c))).collect(),
        Datatype::Float64 => body.chunks_exact(8).map(B::read_f64).collect(),
    };

    let slope = B::read_f32(&bytes[offsets::SCL_SLOPE..]) as f64;
    let inter = B::read_f32(&bytes[offsets::SCL_INTER..]) as f64;
    if slope != 0.0 && slope.is_finite() {
        let inter = if inter.is_finite() { inter } else { 0.0 };
        for v in &mut data {
            *v = *v * slope + inter;
        }
    }

    Volume::new(dims, spacing, data)
}

/// Serializes to a little-endian float32 single-file NIfTI-1 image.
pub fn write_volume_bytes(vol: &Volume) -> Result<Vec<u8>> {
    let dims = vol.dims();
    for &d in &dims {
        if d > i16::MAX as usize {
            return Err(Error::InvalidArgument(format!(
                "dimension {d} exceeds the NIfTI-1 limit of {}",
                i16::MAX
            )));
        }
    }
    let mut out = vec![0u8; VOX_OFFSET + 4 * vol.len()];
    let hdr = &mut out[..NIFTI1_HEADER_SIZE];

    LittleEndian::write_i32(&mut hdr[offsets::SIZEOF_HDR..], NIFTI1_HEADER_SIZE as i32);
    let dim: [i16; 8] = [3, dims[0] as i16, dims[1] as i16, dims[2] as i16, 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut hdr[offsets::DIM + 2 * i..], *d);
    }
    LittleEndian::write_i16(&mut hdr[offsets::DATATYPE..], 16);
    LittleEndian::write_i16(&mut hdr[offsets::BITPIX..], 32);
    let spacing = vol.spacing();
    let pixdim: [f32; 8] = [
        1.0,
        spacing[0] as f32,
        spacing[1] as f32,
        spacing[2] as f32,
        1.0,
        1.0,
        1.0,
        1.0,
    ];
    for (i, p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut hdr[offsets::PIXDIM + 4 * i..], *p);
    }
    LittleEndian::write_f32(&mut hdr[offsets::VOX_OFFSET..], VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut hdr[offsets::SCL_SLOPE..], 1.0);
    LittleEndian::write_f32(&mut hdr[offsets::SCL_INTER..], 0.0);
    // NIFTI_UNITS_MM
    hdr[offsets::XYZT_UNITS] = 2;
    let descrip = b"gmm-augment";
    hdr[offsets::DESCRIP..offsets::DESCRIP + descrip.len()].copy_from_slice(descrip);
    hdr[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(MAGIC_SINGLE);

    // bytes 348..352 stay zero: no extensions
    for (chunk, &v) in out[VOX_OFFSET..].chunks_exact_mut(4).zip(vol.data()) {
        LittleEndian::write_f32(chunk, v as f32);
    }
    Ok(out)
}

pub fn write_volume(vol: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let bytes = write_volume_bytes(vol)?;
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-rolled header builder, independent of the writer above.
    fn header<B: ByteOrder>(dims: [i16; 3], datatype: i16, bitpix: i16, slope: f32, inter: f32) -> Vec<u8> {
        let mut h = vec![0u8; 352];
        B::write_i32(&mut h[0..4], 348);
        let dim = [3i16, dims[0], dims[1], dims[2], 1, 1, 1, 1];
        for (i, d) in dim.iter().enumerate() {
            B::write_i16(&mut h[40 + 2 * i..42 + 2 * i], *d);
        }
        B::write_i16(&mut h[70..72], datatype);
        B::write_i16(&mut h[72..74], bitpix);
        for i in 0..8 {
            B::write_f32(&mut h[76 + 4 * i..80 + 4 * i], 1.0);
        }
        B::write_f32(&mut h[108..112], 352.0);
        B::write_f32(&mut h[112..116], slope);
        B::write_f32(&mut h[116..120], inter);
        h[344..348].copy_from_slice(b"n+1\0");
        h
    }

    #[test]
    fn zero_float32_body() {
        let mut f = header::<LittleEndian>([2, 2, 2], 16, 32, 0.0, 0.0);
        f.extend(std::iter::repeat_n(0u8, 32));
        let v = read_volume_bytes(&f).unwrap();
        assert_eq!(v.dims(), [2, 2, 2]);
        assert!(v.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn slope_and_intercept_applied() {
        let mut f = header::<LittleEndian>([2, 2, 2], 16, 32, 2.0, 1.0);
        f.extend(std::iter::repeat_n(0u8, 32));
        let v = read_volume_bytes(&f).unwrap();
        assert!(v.data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn big_endian_int16_ramp() {
        let mut f = header::<BigEndian>([2, 2, 2], 4, 16, 0.0, 0.0);
        for i in 0..8i16 {
            f.extend_from_slice(&i.to_be_bytes());
        }
        let v = read_volume_bytes(&f).unwrap();
        assert_eq!(v.data(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn big_and_little_endian_twins_agree() {
        let vals = [0.25f32, -1.5, 3.0e3, 7.0, 0.0, 1.0e-3, 42.0, -0.0];
        let mut le = header::<LittleEndian>([2, 2, 2], 16, 32, 0.0, 0.0);
        let mut be = header::<BigEndian>([2, 2, 2], 16, 32, 0.0, 0.0);
        for v in vals {
            le.extend_from_slice(&v.to_le_bytes());
            be.extend_from_slice(&v.to_be_bytes());
        }
        assert_eq!(read_volume_bytes(&le).unwrap(), read_volume_bytes(&be).unwrap());
    }

    #[test]
    fn uint8_and_float64_bodies() {
        let mut f = header::<LittleEndian>([3, 1, 1], 2, 8, 0.0, 0.0);
        f.extend_from_slice(&[0, 128, 255]);
        assert_eq!(read_volume_bytes(&f).unwrap().data(), &[0.0, 128.0, 255.0]);

        let mut f = header::<LittleEndian>([2, 1, 1], 64, 64, 0.0, 0.0);
        f.extend_from_slice(&0.1f64.to_le_bytes());
        f.extend_from_slice(&(-2.5f64).to_le_bytes());
        assert_eq!(read_volume_bytes(&f).unwrap().data(), &[0.1, -2.5]);
    }

    #[test]
    fn unsupported_datatype() {
        let mut f = header::<LittleEndian>([1, 1, 1], 8, 32, 0.0, 0.0);
        f.extend_from_slice(&[0; 4]);
        assert!(matches!(read_volume_bytes(&f), Err(Error::UnsupportedDatatype(8))));
    }

    #[test]
    fn truncated_body() {
        let mut f = header::<LittleEndian>([2, 2, 2], 16, 32, 0.0, 0.0);
        f.extend(std::iter::repeat_n(0u8, 31));
        assert!(matches!(read_volume_bytes(&f), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn truncated_header() {
        let f = header::<LittleEndian>([2, 2, 2], 16, 32, 0.0, 0.0);
        assert!(matches!(read_volume_bytes(&f[..200]), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn bad_magic() {
        let mut f = header::<LittleEndian>([1, 1, 1], 16, 32, 0.0, 0.0);
        f[344..348].copy_from_slice(b"ni1\0");
        f.extend_from_slice(&[0; 4]);
        assert!(matches!(read_volume_bytes(&f), Err(Error::NotNifti(_))));
        assert!(matches!(read_volume_bytes(b"hello"), Err(Error::NotNifti(_))));
    }

    #[test]
    fn four_d_with_singleton_time_is_accepted() {
        let mut f = header::<LittleEndian>([1, 1, 2], 16, 32, 0.0, 0.0);
        LittleEndian::write_i16(&mut f[40..42], 4);
        f.extend(std::iter::repeat_n(0u8, 8));
        assert_eq!(read_volume_bytes(&f).unwrap().dims(), [1, 1, 2]);

        LittleEndian::write_i16(&mut f[48..50], 2);
        f.extend(std::iter::repeat_n(0u8, 8));
        assert!(matches!(read_volume_bytes(&f), Err(Error::UnsupportedDimensions(_))));
    }

    #[test]
    fn two_d_image_gets_unit_third_axis() {
        let mut f = header::<LittleEndian>([2, 3, 9], 2, 8, 0.0, 0.0);
        LittleEndian::write_i16(&mut f[40..42], 2);
        f.extend_from_slice(&[1; 6]);
        assert_eq!(read_volume_bytes(&f).unwrap().dims(), [2, 3, 1]);
    }

    #[test]
    fn extension_bytes_skipped_via_vox_offset() {
        let mut f = header::<LittleEndian>([2, 1, 1], 16, 32, 0.0, 0.0);
        f[348] = 1;
        LittleEndian::write_f32(&mut f[108..112], 368.0);
        f.extend_from_slice(&[0xAB; 16]);
        f.extend_from_slice(&0.5f32.to_le_bytes());
        f.extend_from_slice(&0.75f32.to_le_bytes());
        assert_eq!(read_volume_bytes(&f).unwrap().data(), &[0.5, 0.75]);
    }

    #[test]
    fn smallest_volume_file_size() {
        let v = Volume::new([1, 1, 1], [1.0; 3], vec![0.0]).unwrap();
        assert_eq!(write_volume_bytes(&v).unwrap().len(), 352 + 4);
    }

    #[test]
    fn written_dim_field() {
        let v = Volume::filled([2, 3, 4], 0.5).unwrap();
        let b = write_volume_bytes(&v).unwrap();
        let dim: Vec<i16> = (0..8).map(|i| LittleEndian::read_i16(&b[40 + 2 * i..])).collect();
        assert_eq!(dim, vec![3, 2, 3, 4, 1, 1, 1, 1]);
        assert_eq!(LittleEndian::read_i16(&b[70..]), 16);
        assert_eq!(LittleEndian::read_i16(&b[72..]), 32);
        assert_eq!(LittleEndian::read_f32(&b[108..]), 352.0);
        assert_eq!(&b[344..348], b"n+1\0");
    }
}
