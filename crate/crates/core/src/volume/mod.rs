//! Volumes, label volumes and the foreground mask.

mod nifti;

pub use nifti::{read_volume, read_volume_bytes, write_volume, write_volume_bytes, NIFTI1_HEADER_SIZE, VOX_OFFSET};

use crate::error::{Error, Result};

/// A 3-D scalar grid stored x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<f64>,
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<f64>) -> Result<Self> {
        check_geometry(dims, spacing, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::CorruptFile(format!("non-finite value at voxel {i}")));
        }
        Ok(Self { dims, spacing, data })
    }

    /// Unit-spaced volume filled with `value`.
    pub fn filled(dims: [usize; 3], value: f64) -> Result<Self> {
        Self::new(dims, [1.0; 3], vec![value; dims.iter().product()])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Flat index of voxel `(x, y, z)`.
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// New volume on the same grid with different values.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.dims, self.spacing, data)
    }

    /// Values at the voxels where `mask` is true, in voxel order.
    pub fn masked_values(&self, mask: &[bool]) -> Result<Vec<f64>> {
        if mask.len() != self.data.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.data.len()],
                found: vec![mask.len()],
            });
        }
        Ok(self
            .data
            .iter()
            .zip(mask)
            .filter_map(|(&v, &m)| m.then_some(v))
            .collect())
    }
}

/// Integer-labeled segmentation on the same kind of grid as [`Volume`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    dims: [usize; 3],
    spacing: [f64; 3],
    labels: Vec<u16>,
}

impl LabelVolume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], labels: Vec<u16>) -> Result<Self> {
        check_geometry(dims, spacing, labels.len())?;
        Ok(Self { dims, spacing, labels })
    }

    /// Converts a scalar volume whose values are non-negative integers.
    pub fn from_volume(vol: &Volume) -> Result<Self> {
        let labels = vol
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v < 0.0 || v.fract() != 0.0 || v > f64::from(u16::MAX) {
                    Err(Error::CorruptFile(format!(
                        "voxel {i} holds {v}, not a label in 0..=65535"
                    )))
                } else {
                    Ok(v as u16)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(vol.dims(), vol.spacing(), labels)
    }

    pub fn to_volume(&self) -> Volume {
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            data: self.labels.iter().map(|&l| f64::from(l)).collect(),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn check_geometry(dims: [usize; 3], spacing: [f64; 3], len: usize) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidArgument(format!("dims must be positive, got {dims:?}")));
    }
    if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "spacing must be finite and positive, got {spacing:?}"
        )));
    }
    let expected = dims.iter().product::<usize>();
    if len != expected {
        return Err(Error::ShapeMismatch {
            expected: dims.to_vec(),
            found: vec![len],
        });
    }
    Ok(())
}

/// Foreground voxels: `label > 0` in the explicit mask when one is given,
/// otherwise `intensity > 0`.
pub fn foreground_mask(vol: &Volume, explicit_mask: Option<&LabelVolume>) -> Result<Vec<bool>> {
    let mask: Vec<bool> = match explicit_mask {
        Some(m) => {
            if m.dims() != vol.dims() {
                return Err(Error::ShapeMismatch {
                    expected: vol.dims().to_vec(),
                    found: m.dims().to_vec(),
                });
            }
            m.labels().iter().map(|&l| l > 0).collect()
        }
        None => vol.data().iter().map(|&v| v > 0.0).collect(),
    };
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyMask);
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_length_mismatch() {
        let err = Volume::new([2, 2, 2], [1.0; 3], vec![0.0; 7]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn rejects_non_finite() {
        let mut data = vec![0.0; 8];
        data[3] = f64::NAN;
        assert!(Volume::new([2, 2, 2], [1.0; 3], data).is_err());
    }

    #[test]
    fn rejects_bad_spacing() {
        assert!(Volume::new([1, 1, 1], [1.0, 0.0, 1.0], vec![0.0]).is_err());
    }

    #[test]
    fn all_zero_volume_has_empty_mask() {
        let v = Volume::filled([3, 3, 3], 0.0).unwrap();
        assert!(matches!(foreground_mask(&v, None), Err(Error::EmptyMask)));
    }

    #[test]
    fn one_positive_voxel() {
        let mut data = vec![0.0; 27];
        data[13] = 0.4;
        let v = Volume::new([3, 3, 3], [1.0; 3], data).unwrap();
        let m = foreground_mask(&v, None).unwrap();
        assert_eq!(m.iter().filter(|&&b| b).count(), 1);
        assert!(m[13]);
    }

    #[test]
    fn explicit_mask_includes_negative_voxels() {
        let v = Volume::new([2, 1, 1], [1.0; 3], vec![-0.5, 0.0]).unwrap();
        let m = LabelVolume::new([2, 1, 1], [1.0; 3], vec![1, 0]).unwrap();
        assert_eq!(foreground_mask(&v, Some(&m)).unwrap(), vec![true, false]);
        // without the mask the negative voxel is background
        assert!(matches!(foreground_mask(&v, None), Err(Error::EmptyMask)));
    }

    #[test]
    fn explicit_mask_dims_must_match() {
        let v = Volume::filled([2, 2, 2], 1.0).unwrap();
        let m = LabelVolume::new([2, 2, 1], [1.0; 3], vec![1; 4]).unwrap();
        assert!(matches!(
            foreground_mask(&v, Some(&m)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn label_conversion_rejects_fractions() {
        let v = Volume::new([2, 1, 1], [1.0; 3], vec![1.0, 1.5]).unwrap();
        assert!(LabelVolume::from_volume(&v).is_err());
        let v = Volume::new([2, 1, 1], [1.0; 3], vec![1.0, 3.0]).unwrap();
        assert_eq!(LabelVolume::from_volume(&v).unwrap().labels(), &[1, 3]);
    }

    proptest! {
        #[test]
        fn mask_count_invariant_under_monotone_transform(
            values in prop::collection::vec(-1.0f64..1.0, 8),
            scale in 0.1f64..10.0,
        ) {
            prop_assume!(values.iter().any(|&v| v > 0.0));
            let a = Volume::new([2, 2, 2], [1.0; 3], values.clone()).unwrap();
            let mapped: Vec<f64> = values
                .iter()
                .map(|&v| if v > 0.0 { (scale * v).sqrt() + v.powi(3) } else { v })
                .collect();
            let b = Volume::new([2, 2, 2], [1.0; 3], mapped).unwrap();
            let ca = foreground_mask(&a, None).unwrap().iter().filter(|&&m| m).count();
            let cb = foreground_mask(&b, None).unwrap().iter().filter(|&&m| m).count();
            prop_assert_eq!(ca, cb);
        }
    }
}
