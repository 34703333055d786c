//! Label smoothing for classifier output: a foreground patch missed by the
//! model usually sits surrounded by correctly classified foreground, so an
//! iterated neighbor-count rule flips those isolated background cells while
//! never touching anything already foreground.

use crate::grid::TokenLabelMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PostprocError {
    #[error("kernel center weight must be 0, got {0}")]
    NonZeroCenter(u8),
}

/// Neighborhood rule: a background cell flips to foreground when the
/// kernel-weighted count of foreground neighbors strictly exceeds
/// `threshold`. Cells beyond the grid edge count as background.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CcaConfig {
    /// 3x3 binary weights; the center must be 0 so a cell never votes for
    /// itself.
    pub kernel: [[u8; 3]; 3],
    pub threshold: u32,
    pub steps: u32,
}

impl Default for CcaConfig {
    /// Full 8-neighborhood, flip on more than 2 foreground neighbors,
    /// three passes.
    fn default() -> Self {
        Self {
            kernel: [[1, 1, 1], [1, 0, 1], [1, 1, 1]],
            threshold: 2,
            steps: 3,
        }
    }
}

impl CcaConfig {
    pub fn new(kernel: [[u8; 3]; 3], threshold: u32, steps: u32) -> Result<Self, PostprocError> {
        if kernel[1][1] != 0 {
            return Err(PostprocError::NonZeroCenter(kernel[1][1]));
        }
        Ok(Self {
            kernel,
            threshold,
            steps,
        })
    }
}

/// One smoothing pass. Reads the input grid in full, writes a fresh one —
/// a cell flipped this step never influences its neighbors until the next
/// step.
pub fn cca_step(labels: &TokenLabelMap, config: &CcaConfig) -> TokenLabelMap {
    let grid = labels.grid;
    let (rows, cols) = (grid.rows as i64, grid.cols as i64);
    let mut out = Vec::with_capacity(grid.tokens());
    for r in 0..rows {
        for c in 0..cols {
            let current = labels.get(r as usize, c as usize);
            if current == 1 {
                out.push(1);
                continue;
            }
            let mut sum = 0u32;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let w = config.kernel[(dr + 1) as usize][(dc + 1) as usize];
                    if w == 0 {
                        continue;
                    }
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nr >= rows || nc < 0 || nc >= cols {
                        continue;
                    }
                    sum += w as u32 * labels.get(nr as usize, nc as usize) as u32;
                }
            }
            out.push(u8::from(sum > config.threshold));
        }
    }
    TokenLabelMap::new(grid, out).expect("output labels fit the grid")
}

/// Iterates [`cca_step`] `config.steps` times.
pub fn cca(labels: &TokenLabelMap, config: &CcaConfig) -> TokenLabelMap {
    let mut current = labels.clone();
    for _ in 0..config.steps {
        current = cca_step(&current, config);
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PatchGrid;
    use proptest::prelude::*;

    fn map(side_tokens: u32, labels: Vec<u8>) -> TokenLabelMap {
        let grid = PatchGrid::square(side_tokens * 8, 8).unwrap();
        TokenLabelMap::new(grid, labels).unwrap()
    }

    /// Independent re-statement of the rule: explicit neighbor list, no
    /// kernel indexing.
    fn brute_force_step(labels: &TokenLabelMap, threshold: u32) -> Vec<u8> {
        let (rows, cols) = (labels.grid.rows as i64, labels.grid.cols as i64);
        let mut out = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if labels.get(r as usize, c as usize) == 1 {
                    out.push(1);
                    continue;
                }
                let neighbors = [
                    (r - 1, c - 1),
                    (r - 1, c),
                    (r - 1, c + 1),
                    (r, c - 1),
                    (r, c + 1),
                    (r + 1, c - 1),
                    (r + 1, c),
                    (r + 1, c + 1),
                ];
                let count = neighbors
                    .iter()
                    .filter(|&&(nr, nc)| {
                        nr >= 0
                            && nr < rows
                            && nc >= 0
                            && nc < cols
                            && labels.get(nr as usize, nc as usize) == 1
                    })
                    .count() as u32;
                out.push(u8::from(count > threshold));
            }
        }
        out
    }

    #[test]
    fn constant_grids_never_change() {
        let cfg = CcaConfig::default();
        let all_bg = map(5, vec![0; 25]);
        assert_eq!(cca(&all_bg, &cfg).labels(), all_bg.labels());
        let all_fg = map(5, vec![1; 25]);
        assert_eq!(cca(&all_fg, &cfg).labels(), all_fg.labels());
    }

    #[test]
    fn isolated_interior_hole_flips_in_one_step() {
        let mut labels = vec![1; 9];
        labels[4] = 0; // center of a 3x3 all-FG block
        let m = map(3, labels);
        let out = cca_step(&m, &CcaConfig::default());
        assert_eq!(out.labels(), &[1; 9]);
    }

    #[test]
    fn two_neighbors_is_not_enough() {
        // Center BG cell with exactly 2 FG neighbors: 2 > 2 is false.
        let labels = vec![
            1, 0, 0, //
            0, 0, 1, //
            0, 0, 0,
        ];
        let m = map(3, labels.clone());
        let out = cca_step(&m, &CcaConfig::default());
        assert_eq!(out.get(1, 1), 0);
        // Three neighbors crosses the strict threshold.
        let labels3 = vec![
            1, 0, 0, //
            0, 0, 1, //
            0, 1, 0,
        ];
        let m3 = map(3, labels3);
        let out3 = cca_step(&m3, &CcaConfig::default());
        assert_eq!(out3.get(1, 1), 1);
    }

    #[test]
    fn one_wide_crack_closes_in_one_step() {
        // A vertical BG seam through solid FG; every seam cell sees 6 FG
        // neighbors.
        let mut labels = vec![1; 25];
        for r in 0..5 {
            labels[r * 5 + 2] = 0;
        }
        let m = map(5, labels);
        let out = cca_step(&m, &CcaConfig::default());
        assert_eq!(out.fg_count(), 25);
    }

    #[test]
    fn zero_steps_is_identity() {
        let labels: Vec<u8> = (0..25).map(|i| (i % 3 == 0) as u8).collect();
        let m = map(5, labels.clone());
        let cfg = CcaConfig {
            steps: 0,
            ..CcaConfig::default()
        };
        assert_eq!(cca(&m, &cfg).labels(), m.labels());
    }

    #[test]
    fn three_steps_equals_composition() {
        let labels: Vec<u8> = (0..49).map(|i| (i % 5 == 0) as u8).collect();
        let m = map(7, labels);
        let cfg = CcaConfig::default();
        let composed = cca_step(&cca_step(&cca_step(&m, &cfg), &cfg), &cfg);
        assert_eq!(cca(&m, &cfg).labels(), composed.labels());
    }

    #[test]
    fn center_weight_must_be_zero() {
        let mut kernel = [[1u8; 3]; 3];
        assert_eq!(
            CcaConfig::new(kernel, 2, 3),
            Err(PostprocError::NonZeroCenter(1))
        );
        kernel[1][1] = 0;
        assert!(CcaConfig::new(kernel, 2, 3).is_ok());
    }

    proptest! {
        #[test]
        fn matches_brute_force_on_random_grids(
            side in 1u32..=32,
            bits in proptest::collection::vec(0u8..=1, 32 * 32),
            threshold in 0u32..=8,
        ) {
            let labels: Vec<u8> = bits[..(side * side) as usize].to_vec();
            let m = map(side, labels);
            let cfg = CcaConfig { threshold, ..CcaConfig::default() };
            let ours = cca_step(&m, &cfg);
            prop_assert_eq!(ours.labels(), &brute_force_step(&m, threshold)[..]);
        }

        #[test]
        fn foreground_only_grows(
            side in 1u32..=16,
            bits in proptest::collection::vec(0u8..=1, 16 * 16),
        ) {
            let labels: Vec<u8> = bits[..(side * side) as usize].to_vec();
            let mut current = map(side, labels);
            let cfg = CcaConfig::default();
            for _ in 0..4 {
                let next = cca_step(&current, &cfg);
                for (before, after) in current.labels().iter().zip(next.labels()) {
                    prop_assert!(after >= before, "an FG cell flipped back");
                }
                current = next;
            }
        }

        #[test]
        fn fixpoints_stay_fixed(
            side in 1u32..=12,
            bits in proptest::collection::vec(0u8..=1, 12 * 12),
        ) {
            // Iterate until nothing changes (FG count is bounded, growth is
            // monotone, so this terminates), then demand stability.
            let labels: Vec<u8> = bits[..(side * side) as usize].to_vec();
            let mut current = map(side, labels);
            let cfg = CcaConfig::default();
            loop {
                let next = cca_step(&current, &cfg);
                if next.labels() == current.labels() {
                    break;
                }
                current = next;
            }
            let again = cca_step(&current, &cfg);
            prop_assert_eq!(again.labels(), current.labels());
        }

        #[test]
        fn symmetric_kernel_commutes_with_rotation(
            side in 1u32..=10,
            bits in proptest::collection::vec(0u8..=1, 10 * 10),
        ) {
            let n = side as usize;
            let labels: Vec<u8> = bits[..n * n].to_vec();
            let rotate = |v: &[u8]| -> Vec<u8> {
                // 90 degrees clockwise: out(r, c) = in(n-1-c, r).
                let mut out = vec![0u8; n * n];
                for r in 0..n {
                    for c in 0..n {
                        out[r * n + c] = v[(n - 1 - c) * n + r];
                    }
                }
                out
            };
            let cfg = CcaConfig::default();
            let stepped = cca_step(&map(side, labels.clone()), &cfg);
            let rotated_then_stepped = cca_step(&map(side, rotate(&labels)), &cfg);
            prop_assert_eq!(
                rotated_then_stepped.labels(),
                &rotate(stepped.labels())[..]
            );
        }
    }
}
