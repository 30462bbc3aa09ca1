//! Fixed-width intensity histogram over [0, 1].

use std::io::Write;

use gmm_augment::Result;

/// `bins` equal-width bins over [0, 1]. Values outside the range are counted
/// in the nearest edge bin; 1.0 falls in the last bin.
pub fn histogram(values: &[f64], bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    for &v in values {
        let i = (v * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize;
        counts[i] += 1;
    }
    counts
}

pub fn bin_center(i: usize, bins: usize) -> f64 {
    (i as f64 + 0.5) / bins as f64
}

pub fn write_csv<W: Write>(counts: &[u64], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["bin_center", "count"])?;
    for (i, c) in counts.iter().enumerate() {
        wtr.serialize((bin_center(i, counts.len()), c))?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_and_out_of_range() {
        assert_eq!(histogram(&[0.0, 0.24, 0.25, 0.999, 1.0], 4), vec![2, 1, 0, 2]);
        assert_eq!(histogram(&[-0.5, 1.5], 2), vec![1, 1]);
    }

    #[test]
    fn one_bin_counts_everything() {
        assert_eq!(histogram(&[0.1, 0.5, 0.9], 1), vec![3]);
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&[3, 0], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "bin_center,count\n0.25,3\n0.75,0\n");
    }
}
