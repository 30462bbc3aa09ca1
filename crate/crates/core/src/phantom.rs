//! Synthetic three-tissue phantoms built from concentric spherical shells.
//!
//! Shell membership uses exact integer arithmetic: with the grid center at
//! `(n - 1) / 2` on every axis, a voxel belongs to shell `[r_in, r_out)` when
//! `4 r_in^2 <= sum((2 i - (n - 1))^2) < 4 r_out^2`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::volume::{LabelVolume, Volume};

/// Smallest foreground intensity. Keeps tissue voxels strictly positive
/// (also after a float32 round trip) so the implicit `> 0` mask holds.
pub const MIN_FOREGROUND: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TissueSpec {
    pub mean: f64,
    pub variance: f64,
    /// Inclusive inner radius in voxels.
    pub inner_radius: f64,
    /// Exclusive outer radius in voxels.
    pub outer_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    #[serde(default = "unit_spacing")]
    pub spacing: [f64; 3],
    /// Tissues in ascending-mean order; tissue `i` gets label `i + 1`.
    pub tissues: Vec<TissueSpec>,
    pub seed: u64,
}

fn unit_spacing() -> [f64; 3] {
    [1.0; 3]
}

impl Default for PhantomSpec {
    /// 64^3 grid; CSF/GM/WM means (0.1, 0.2, 0.3) and variances
    /// (0.002, 0.001, 0.001), shells sized for roughly 30/40/30 % of the
    /// foreground with WM innermost.
    fn default() -> Self {
        Self::scaled(64, 0)
    }
}

impl PhantomSpec {
    /// Default tissue model on an `n^3` grid, radii scaled with `n / 64`.
    pub fn scaled(n: usize, seed: u64) -> Self {
        let s = n as f64 / 64.0;
        Self {
            dims: [n; 3],
            spacing: unit_spacing(),
            tissues: vec![
                TissueSpec {
                    mean: 0.1,
                    variance: 0.002,
                    inner_radius: 25.0 * s,
                    outer_radius: 28.5 * s,
                },
                TissueSpec {
                    mean: 0.2,
                    variance: 0.001,
                    inner_radius: 18.5 * s,
                    outer_radius: 25.0 * s,
                },
                TissueSpec {
                    mean: 0.3,
                    variance: 0.001,
                    inner_radius: 0.0,
                    outer_radius: 18.5 * s,
                },
            ],
            seed,
        }
    }

    /// Same geometry with replaced tissue means and variances.
    pub fn with_tissue_model(mut self, means: &[f64], variances: &[f64]) -> Self {
        for (t, (&m, &v)) in self.tissues.iter_mut().zip(means.iter().zip(variances)) {
            t.mean = m;
            t.variance = v;
        }
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate_static(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::InvalidSpec(format!("dims {:?} must be positive", self.dims)));
        }
        if self.tissues.is_empty() {
            return Err(Error::InvalidSpec("no tissues".into()));
        }
        if self.tissues.len() > u16::MAX as usize {
            return Err(Error::InvalidSpec("too many tissues".into()));
        }
        for (i, t) in self.tissues.iter().enumerate() {
            if !(t.mean.is_finite() && t.mean > 0.0 && t.mean <= 1.0) {
                return Err(Error::InvalidSpec(format!("tissue {i} mean {} outside (0, 1]", t.mean)));
            }
            if !(t.variance.is_finite() && t.variance >= 0.0) {
                return Err(Error::InvalidSpec(format!("tissue {i} variance {}", t.variance)));
            }
            if !(t.inner_radius >= 0.0 && t.inner_radius < t.outer_radius && t.outer_radius.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "tissue {i} radii [{}, {}) are not an interval",
                    t.inner_radius, t.outer_radius
                )));
            }
        }
        if self.tissues.windows(2).any(|w| w[0].mean >= w[1].mean) {
            return Err(Error::InvalidSpec("tissue means must be strictly ascending".into()));
        }
        let mut shells: Vec<(f64, f64)> = self.tissues.iter().map(|t| (t.inner_radius, t.outer_radius)).collect();
        shells.sort_by(|a, b| a.0.total_cmp(&b.0));
        if shells.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(Error::InvalidSpec("tissue shells overlap".into()));
        }
        Ok(())
    }

    /// Ground-truth label for voxel `(x, y, z)`; 0 is background.
    pub fn label_at(&self, x: usize, y: usize, z: usize) -> u16 {
        let d2 = doubled_sq_distance(self.dims, [x, y, z]);
        self.tissues
            .iter()
            .position(|t| {
                let lo = 4.0 * t.inner_radius * t.inner_radius;
                let hi = 4.0 * t.outer_radius * t.outer_radius;
                d2 >= lo && d2 < hi
            })
            .map_or(0, |i| i as u16 + 1)
    }
}

/// `sum((2 i - (n - 1))^2)`, i.e. four times the squared distance to the grid center.
fn doubled_sq_distance(dims: [usize; 3], idx: [usize; 3]) -> f64 {
    (0..3)
        .map(|a| {
            let d = 2 * idx[a] as i64 - (dims[a] as i64 - 1);
            (d * d) as f64
        })
        .sum()
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<(Volume, LabelVolume)> {
    spec.validate_static()?;
    let [nx, ny, nz] = spec.dims;
    let mut labels = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                labels.push(spec.label_at(x, y, z));
            }
        }
    }
    for (i, _) in spec.tissues.iter().enumerate() {
        let label = i as u16 + 1;
        if !labels.contains(&label) {
            return Err(Error::InvalidSpec(format!("tissue {i} covers no voxels")));
        }
    }

    let sds: Vec<f64> = spec.tissues.iter().map(|t| t.variance.sqrt()).collect();
    let mut r = rng::stream(spec.seed);
    let data = labels
        .iter()
        .map(|&l| {
            if l == 0 {
                return 0.0;
            }
            let t = &spec.tissues[l as usize - 1];
            let z: f64 = StandardNormal.sample(&mut r);
            (t.mean + sds[l as usize - 1] * z).clamp(MIN_FOREGROUND, 1.0)
        })
        .collect();

    Ok((
        Volume::new(spec.dims, spec.spacing, data)?,
        LabelVolume::new(spec.dims, spec.spacing, labels)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::{fit_em, EmConfig};
    use crate::volume::foreground_mask;

    /// Brute-force lattice-point count of `r_in^2 <= |p - c|^2 < r_out^2`
    /// in real (half-integer) coordinates.
    fn shell_count(n: usize, r_in: f64, r_out: f64) -> usize {
        let c = (n as f64 - 1.0) / 2.0;
        let mut count = 0;
        for z in 0..n {
            for y in 0..n {
                let dyz = (y as f64 - c).powi(2) + (z as f64 - c).powi(2);
                for x in 0..n {
                    let r2 = (x as f64 - c).powi(2) + dyz;
                    if r2 >= r_in * r_in && r2 < r_out * r_out {
                        count += 1;
                    }
                }
            }
        }
        count
    }

    #[test]
    fn label_counts_match_lattice_geometry() {
        let spec = PhantomSpec::default();
        let (_, labels) = generate_phantom(&spec).unwrap();
        for (i, t) in spec.tissues.iter().enumerate() {
            let got = labels.labels().iter().filter(|&&l| l as usize == i + 1).count();
            assert_eq!(got, shell_count(64, t.inner_radius, t.outer_radius), "tissue {i}");
        }
    }

    #[test]
    fn default_spec_recovers_means() {
        let (vol, _) = generate_phantom(&PhantomSpec::default()).unwrap();
        let mask = foreground_mask(&vol, None).unwrap();
        let p = fit_em(&vol.masked_values(&mask).unwrap(), 3, &EmConfig::default()).unwrap();
        for (got, want) in p.means.iter().zip([0.1, 0.2, 0.3]) {
            assert!((got - want).abs() < 0.01, "{got} vs {want}");
        }
    }

    #[test]
    fn zero_variance_is_constant_per_tissue() {
        let spec = PhantomSpec::scaled(24, 1).with_tissue_model(&[0.1, 0.2, 0.3], &[0.0; 3]);
        let (vol, labels) = generate_phantom(&spec).unwrap();
        for (&v, &l) in vol.data().iter().zip(labels.labels()) {
            let want = [0.0, 0.1, 0.2, 0.3][l as usize];
            assert_eq!(v, want);
        }
    }

    #[test]
    fn same_seed_same_phantom() {
        let a = generate_phantom(&PhantomSpec::scaled(20, 5)).unwrap();
        let b = generate_phantom(&PhantomSpec::scaled(20, 5)).unwrap();
        let c = generate_phantom(&PhantomSpec::scaled(20, 6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
        assert_eq!(a.1, c.1);
    }

    #[test]
    fn labels_partition_the_foreground() {
        let (vol, labels) = generate_phantom(&PhantomSpec::scaled(32, 2)).unwrap();
        let mask = foreground_mask(&vol, None).unwrap();
        for (&m, &l) in mask.iter().zip(labels.labels()) {
            assert_eq!(m, l > 0);
        }
        assert!(vol.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn invalid_specs() {
        let mut s = PhantomSpec::scaled(16, 0);
        s.tissues.swap(0, 1);
        assert!(matches!(generate_phantom(&s), Err(Error::InvalidSpec(_))));

        let mut s = PhantomSpec::scaled(16, 0);
        s.tissues[1].outer_radius = s.tissues[0].inner_radius + 1.0;
        assert!(matches!(generate_phantom(&s), Err(Error::InvalidSpec(_))));

        // a shell that falls between lattice points
        let mut s = PhantomSpec::scaled(16, 0);
        s.tissues[2].outer_radius = 0.1;
        assert!(matches!(generate_phantom(&s), Err(Error::InvalidSpec(_))));

        let mut s = PhantomSpec::scaled(16, 0);
        s.tissues[0].variance = -1.0;
        assert!(matches!(generate_phantom(&s), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = PhantomSpec::scaled(16, 3);
        let json = serde_json::to_string(&spec).unwrap();
        let back: PhantomSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
    }
}
