//! Anti-diagonal frequency levels of a 2D DCT grid.
//!
//! Level ℓ collects every coordinate (u,v) with u+v = ℓ, running from the
//! top-left (DC) corner toward the bottom-right (highest frequency). The
//! levels partition the H×W grid and are the unit of spectral ablation.

use crate::error::{Error, Result};

/// One anti-diagonal group of DCT coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyLevel {
    pub level: usize,
    pub members: Vec<(usize, usize)>,
}

/// All H+W−1 frequency levels of an H×W grid, ascending in ℓ = u+v.
pub fn frequency_levels(height: usize, width: usize) -> Result<Vec<FrequencyLevel>> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid dimensions must be nonzero, got {height}x{width}"
        )));
    }
    let max_level = height + width - 2;
    let mut levels = Vec::with_capacity(max_level + 1);
    for level in 0..=max_level {
        let u_lo = level.saturating_sub(width - 1);
        let u_hi = level.min(height - 1);
        let members: Vec<(usize, usize)> = (u_lo..=u_hi).map(|u| (u, level - u)).collect();
        levels.push(FrequencyLevel { level, members });
    }
    Ok(levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn two_by_two() {
        let levels = frequency_levels(2, 2).unwrap();
        assert_eq!(levels.len(), 3);
        assert_eq!(levels[0].members, vec![(0, 0)]);
        assert_eq!(levels[1].members, vec![(0, 1), (1, 0)]);
        assert_eq!(levels[2].members, vec![(1, 1)]);
    }

    #[test]
    fn square_grid_member_counts() {
        let levels = frequency_levels(32, 32).unwrap();
        assert_eq!(levels.len(), 63);
        // counts run 1,2,…,32,…,2,1
        for (i, lvl) in levels.iter().enumerate() {
            let expect = if i < 32 { i + 1 } else { 63 - i };
            assert_eq!(lvl.members.len(), expect, "level {i}");
        }
    }

    #[test]
    fn levels_partition_the_grid() {
        let levels = frequency_levels(4, 6).unwrap();
        let mut seen = HashSet::new();
        for lvl in &levels {
            for &(u, v) in &lvl.members {
                assert_eq!(u + v, lvl.level);
                assert!(u < 4 && v < 6);
                assert!(seen.insert((u, v)), "duplicate coordinate ({u},{v})");
            }
        }
        assert_eq!(seen.len(), 24);
    }

    #[test]
    fn zero_dimension_is_an_error() {
        assert!(frequency_levels(0, 5).is_err());
        assert!(frequency_levels(5, 0).is_err());
    }

    #[test]
    fn dc_level_is_the_origin() {
        let levels = frequency_levels(7, 3).unwrap();
        assert_eq!(levels[0].members, vec![(0, 0)]);
    }
}
