use crate::matrix::FeatureMatrix;
use crate::parallel;

/// Per-feature equal-frequency bin boundaries, stored as `f32` so training
/// and serving compare against identical values.
///
/// A value `x` falls in bin `j` = the first boundary with `x as f32 <= b[j]`,
/// or in the last bin when it exceeds every boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BinMapper {
    pub thresholds: Vec<Vec<f32>>,
}

impl BinMapper {
    pub fn fit(matrix: &FeatureMatrix, n_bins: usize) -> Self {
        let n_bins = n_bins.clamp(2, 255);
        let thresholds = parallel::map_range(matrix.n_cols(), |j| {
            let mut col: Vec<f32> = matrix.rows().map(|r| r[j] as f32 + 0.0).collect();
            col.sort_by(f32::total_cmp);
            boundaries(&col, n_bins)
        });
        BinMapper { thresholds }
    }

    pub fn n_features(&self) -> usize {
        self.thresholds.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.thresholds[feature].len() + 1
    }

    #[inline]
    pub fn bin(&self, feature: usize, x: f64) -> u8 {
        let v = x as f32;
        self.thresholds[feature].partition_point(|&b| b < v) as u8
    }

    /// Column-major bin indices (`[feature][row]`).
    pub fn bin_matrix(&self, matrix: &FeatureMatrix) -> Vec<Vec<u8>> {
        parallel::map_range(matrix.n_cols(), |j| matrix.rows().map(|r| self.bin(j, r[j])).collect())
    }
}

fn boundaries(sorted: &[f32], n_bins: usize) -> Vec<f32> {
    let Some(&max) = sorted.last() else {
        return Vec::new();
    };
    let mut distinct: Vec<f32> = sorted.to_vec();
    distinct.dedup();
    let mut out: Vec<f32> = if distinct.len() <= n_bins {
        distinct
    } else {
        let n = sorted.len();
        let mut b: Vec<f32> = (1..n_bins).map(|q| sorted[(q * n).div_ceil(n_bins) - 1]).collect();
        b.dedup();
        b
    };
    out.retain(|&b| b < max);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_rows(&v.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn few_distinct_values_get_one_bin_each() {
        let m = BinMapper::fit(&col(&[0.0, 1.0, 1.0, 0.0, -0.0]), 255);
        assert_eq!(m.thresholds[0], vec![0.0]);
        assert_eq!(m.bin(0, 0.0), 0);
        assert_eq!(m.bin(0, 1.0), 1);
        assert_eq!(m.bin(0, 0.5), 1);
        assert_eq!(m.bin(0, -3.0), 0);
    }

    #[test]
    fn constant_column_has_single_bin() {
        let m = BinMapper::fit(&col(&[2.0; 10]), 16);
        assert_eq!(m.n_bins(0), 1);
    }

    #[test]
    fn equal_frequency_bins() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let m = BinMapper::fit(&col(&v), 4);
        assert_eq!(m.thresholds[0], vec![249.0, 499.0, 749.0]);
        let binned = m.bin_matrix(&col(&v));
        for b in 0..4u8 {
            assert_eq!(binned[0].iter().filter(|&&x| x == b).count(), 250);
        }
    }

    #[test]
    fn bins_are_monotone_in_value() {
        let v: Vec<f64> = (0..500).map(|i| ((i * 7919) % 500) as f64 / 13.0).collect();
        let m = BinMapper::fit(&col(&v), 32);
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        let bins: Vec<u8> = sorted.iter().map(|&x| m.bin(0, x)).collect();
        assert!(bins.windows(2).all(|w| w[0] <= w[1]));
        assert!(m.n_bins(0) <= 32);
    }
}
