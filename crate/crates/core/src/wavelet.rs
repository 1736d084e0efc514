//! Haar wavelet packet decomposition of flow rate series and the derived
//! frequency-domain features (f14..f24).
//!
//! Unlike a plain DWT, the packet transform splits both the approximation
//! and the detail branch at every level, giving a full binary tree of
//! sub-bands. Leaves are reported in frequency order (Gray-code permutation
//! of the natural tree order) so the first band is lowest frequency.

use crate::error::{Error, Result};

/// Orthonormal Haar analysis pair: h = (c, c), g = (c, -c) with c = 1/sqrt(2).
const HAAR_C: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Number of leaf bands used for the frequency features.
pub const FEATURE_LEVEL: usize = 3;
pub const FEATURE_BANDS: usize = 1 << FEATURE_LEVEL;

/// Full decomposition tree. `nodes[d][p]` holds the coefficients of the
/// node at depth `d`, natural (Paley) position `p`; `nodes[0][0]` is the
/// input series.
#[derive(Debug, Clone)]
pub struct WaveletPacketTree {
    pub level: usize,
    pub nodes: Vec<Vec<Vec<f64>>>,
}

impl WaveletPacketTree {
    pub fn leaves(&self) -> &[Vec<f64>] {
        &self.nodes[self.level]
    }
}

fn split(parent: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let half = parent.len() / 2;
    let mut approx = Vec::with_capacity(half);
    let mut detail = Vec::with_capacity(half);
    for pair in parent.chunks_exact(2) {
        approx.push((pair[0] + pair[1]) * HAAR_C);
        detail.push((pair[0] - pair[1]) * HAAR_C);
    }
    (approx, detail)
}

/// Decomposes `series` down to `level`, filtering and downsampling both
/// branches at every depth.
pub fn wp_decompose(series: &[f64], level: usize) -> Result<WaveletPacketTree> {
    if level == 0 || series.len() % (1 << level) != 0 || series.len() < (1 << level) {
        return Err(Error::WaveletShape {
            len: series.len(),
            level,
        });
    }
    let mut nodes: Vec<Vec<Vec<f64>>> = vec![vec![series.to_vec()]];
    for depth in 0..level {
        let mut next = Vec::with_capacity(2 << depth);
        for parent in &nodes[depth] {
            let (approx, detail) = split(parent);
            next.push(approx);
            next.push(detail);
        }
        nodes.push(next);
    }
    Ok(WaveletPacketTree { level, nodes })
}

/// Frequency rank of the leaf at natural position `p` (Gray-to-binary
/// decode of the branch choices, MSB first). The high-pass branch mirrors
/// the spectrum, so natural order is not frequency order below level 1.
pub fn frequency_rank(p: usize, level: usize) -> usize {
    let mut rank = 0usize;
    let mut prev = 0usize;
    for k in (0..level).rev() {
        let bit = (p >> k) & 1;
        prev ^= bit;
        rank = (rank << 1) | prev;
    }
    rank
}

/// Leaf energies ordered low band to high band.
pub fn subband_energies(tree: &WaveletPacketTree) -> Vec<f64> {
    let leaves = tree.leaves();
    let mut energies = vec![0.0; leaves.len()];
    for (p, leaf) in leaves.iter().enumerate() {
        energies[frequency_rank(p, tree.level)] = leaf.iter().map(|c| c * c).sum();
    }
    energies
}

/// The 11 frequency features from 8 band energies: 8 band ratios, log total
/// energy, normalized spectral entropy, and the high-band energy ratio.
/// A zero-energy series maps to all zeros.
pub fn features_from_energies(energies: &[f64; FEATURE_BANDS]) -> [f64; 11] {
    let total: f64 = energies.iter().sum();
    let mut out = [0.0; 11];
    if total > 0.0 {
        for (i, e) in energies.iter().enumerate() {
            out[i] = e / total;
        }
        let mut entropy = 0.0;
        for i in 0..FEATURE_BANDS {
            let p = out[i];
            if p > 0.0 {
                entropy -= p * p.ln();
            }
        }
        out[9] = entropy / (FEATURE_BANDS as f64).ln();
        out[10] = out[FEATURE_BANDS / 2..FEATURE_BANDS].iter().sum();
    }
    out[8] = (1.0 + total).ln();
    out
}

/// f14..f24 for one rate series (level-3 decomposition, 8 bands).
pub fn frequency_features(series: &[f64]) -> Result<[f64; 11]> {
    let tree = wp_decompose(series, FEATURE_LEVEL)?;
    let energies = subband_energies(&tree);
    let mut arr = [0.0; FEATURE_BANDS];
    arr.copy_from_slice(&energies);
    Ok(features_from_energies(&arr))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-12;

    fn assert_close(a: f64, b: f64) {
        assert!((a - b).abs() <= EPS, "{a} != {b}");
    }

    #[test]
    fn haar_level1_hand_example() {
        let tree = wp_decompose(&[1.0, 2.0, 3.0, 4.0], 1).unwrap();
        let c = HAAR_C;
        assert_close(tree.nodes[1][0][0], 3.0 * c);
        assert_close(tree.nodes[1][0][1], 7.0 * c);
        assert_close(tree.nodes[1][1][0], -1.0 * c);
        assert_close(tree.nodes[1][1][1], -1.0 * c);
    }

    #[test]
    fn haar_level2_hand_example() {
        let tree = wp_decompose(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        let leaves = tree.leaves();
        assert_close(leaves[0][0], 5.0); // aa
        assert_close(leaves[1][0], -2.0); // ad
        assert_close(leaves[2][0], -1.0); // da
        assert_close(leaves[3][0], 0.0); // dd
    }

    #[test]
    fn level2_energies_parseval() {
        let tree = wp_decompose(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        let mut energies = subband_energies(&tree);
        let sum: f64 = energies.iter().sum();
        assert_close(sum, 30.0);
        energies.sort_by(f64::total_cmp);
        let expected = [0.0, 1.0, 4.0, 25.0];
        for (e, want) in energies.iter().zip(expected) {
            assert_close(*e, want);
        }
    }

    #[test]
    fn constant_series_has_zero_details() {
        let series = vec![2.5; 64];
        let tree = wp_decompose(&series, 3).unwrap();
        for (p, leaf) in tree.leaves().iter().enumerate() {
            for &c in leaf {
                if p == 0 {
                    assert!(c != 0.0);
                } else {
                    assert_close(c, 0.0);
                }
            }
        }
    }

    #[test]
    fn root_node_is_input() {
        let series: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let tree = wp_decompose(&series, 3).unwrap();
        assert_eq!(tree.nodes[0][0], series);
    }

    #[test]
    fn zero_series_zero_energies() {
        let tree = wp_decompose(&[0.0; 64], 3).unwrap();
        assert!(subband_energies(&tree).iter().all(|&e| e == 0.0));
    }

    #[test]
    fn impulse_energy_is_one() {
        let mut series = [0.0; 64];
        series[0] = 1.0;
        let tree = wp_decompose(&series, 3).unwrap();
        let sum: f64 = subband_energies(&tree).iter().sum();
        assert_close(sum, 1.0);
    }

    #[test]
    fn bad_shape_rejected() {
        assert!(matches!(
            wp_decompose(&[1.0, 2.0, 3.0], 1),
            Err(Error::WaveletShape { len: 3, level: 1 })
        ));
        assert!(wp_decompose(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn frequency_rank_level2_permutation() {
        let ranks: Vec<usize> = (0..4).map(|p| frequency_rank(p, 2)).collect();
        assert_eq!(ranks, vec![0, 1, 3, 2]); // aa, ad, dd, da from low to high
    }

    #[test]
    fn constant_series_features() {
        let f = frequency_features(&vec![3.0; 64]).unwrap();
        assert_close(f[0], 1.0); // f14: all energy in the lowest band
        for v in &f[1..8] {
            assert_close(*v, 0.0);
        }
        assert_close(f[9], 0.0); // f23 entropy
        assert_close(f[10], 0.0); // f24 high-band ratio
    }

    #[test]
    fn uniform_energies_features() {
        let f = features_from_energies(&[2.0; FEATURE_BANDS]);
        assert_close(f[9], 1.0);
        assert_close(f[10], 0.5);
    }

    #[test]
    fn zero_series_features_all_zero() {
        let f = frequency_features(&[0.0; 64]).unwrap();
        for v in f {
            assert_close(v, 0.0);
        }
    }
}
