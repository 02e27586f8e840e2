//! Synthetic block images: rectangular blobs on a square grid, vectorized
//! column by column, grouped into runs of `g` consecutive pixels of one
//! image column.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::block_model::{l2_norm, BlockSupport, GroupModel};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockImageConfig {
    /// Image side; the vector has `side²` entries.
    pub side: usize,
    /// Pixels per group; must divide `side`.
    pub g: usize,
    pub blobs: usize,
    /// Largest blob width or height in pixels.
    pub max_extent: usize,
    pub seed: u64,
}

impl Default for BlockImageConfig {
    fn default() -> Self {
        Self {
            side: 128,
            g: 8,
            blobs: 3,
            max_extent: 16,
            seed: 0,
        }
    }
}

impl BlockImageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.side == 0 || self.g == 0 || !self.side.is_multiple_of(self.g) {
            return Err(Error::Config(format!(
                "group size {} must divide the image side {}",
                self.g, self.side
            )));
        }
        if self.blobs == 0 {
            return Err(Error::Config("at least one blob is required".into()));
        }
        if self.max_extent == 0 || self.max_extent > self.side {
            return Err(Error::Config(format!(
                "max_extent = {} must lie in 1..={}",
                self.max_extent, self.side
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockImage {
    pub side: usize,
    /// Column-major pixels with `‖pixels‖₂ = 1`.
    pub pixels: Vec<f64>,
    pub model: GroupModel,
    /// Groups holding at least one nonzero pixel.
    pub support: BlockSupport,
}

impl BlockImage {
    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.pixels[col * self.side + row]
    }
}

/// Later blobs overwrite earlier ones where they overlap.
pub fn synthetic_block_image(config: &BlockImageConfig) -> Result<BlockImage> {
    config.validate()?;
    let side = config.side;
    let mut rng = seed::rng(seed::derive(config.seed, seed::stream::SIGNAL, 0));
    let mut pixels = vec![0.0; side * side];
    for _ in 0..config.blobs {
        let h = rng.gen_range(1..=config.max_extent);
        let w = rng.gen_range(1..=config.max_extent);
        let top = rng.gen_range(0..=side - h);
        let left = rng.gen_range(0..=side - w);
        let level = rng.gen_range(0.5..1.5);
        for col in left..left + w {
            pixels[col * side + top..col * side + top + h].fill(level);
        }
    }
    let norm = l2_norm(&pixels);
    pixels.iter_mut().for_each(|v| *v /= norm);

    let model = GroupModel::consecutive(side * side, config.g)?;
    let support = model.active_groups(&pixels)?;
    Ok(BlockImage {
        side,
        pixels,
        model,
        support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> BlockImageConfig {
        BlockImageConfig {
            side: 32,
            g: 4,
            blobs: 2,
            max_extent: 6,
            seed,
        }
    }

    #[test]
    fn support_matches_nonzero_groups() {
        for seed in 0..20 {
            let img = synthetic_block_image(&small(seed)).unwrap();
            assert!((l2_norm(&img.pixels) - 1.0).abs() < 1e-12);
            let on: Vec<bool> = img
                .pixels
                .chunks(4)
                .map(|c| c.iter().any(|&v| v != 0.0))
                .collect();
            for (i, &active) in on.iter().enumerate() {
                assert_eq!(img.support.contains(i), active);
            }
            // Two blobs of at most 6×6 pixels touch at most 2·6·3 groups.
            assert!(img.support.len() <= 36);
        }
    }

    #[test]
    fn groups_stay_inside_one_image_column() {
        let img = synthetic_block_image(&small(3)).unwrap();
        for grp in 0..img.model.num_groups() {
            let cols: Vec<usize> = img.model.group(grp).iter().map(|&j| j / 32).collect();
            assert!(cols.iter().all(|&c| c == cols[0]));
        }
    }

    #[test]
    fn blobs_are_rectangles() {
        let cfg = BlockImageConfig {
            blobs: 1,
            ..small(9)
        };
        let img = synthetic_block_image(&cfg).unwrap();
        let lit: Vec<(usize, usize)> = (0..32)
            .flat_map(|r| (0..32).map(move |c| (r, c)))
            .filter(|&(r, c)| img.pixel(r, c) != 0.0)
            .collect();
        let rows = lit.iter().map(|x| x.0);
        let cols = lit.iter().map(|x| x.1);
        let (r0, r1) = (rows.clone().min().unwrap(), rows.max().unwrap());
        let (c0, c1) = (cols.clone().min().unwrap(), cols.max().unwrap());
        assert_eq!(lit.len(), (r1 - r0 + 1) * (c1 - c0 + 1));
    }

    #[test]
    fn deterministic_and_validated() {
        assert_eq!(
            synthetic_block_image(&small(5)).unwrap(),
            synthetic_block_image(&small(5)).unwrap()
        );
        assert_ne!(
            synthetic_block_image(&small(5)).unwrap().pixels,
            synthetic_block_image(&small(6)).unwrap().pixels
        );
        for bad in [
            BlockImageConfig { g: 5, ..small(0) },
            BlockImageConfig {
                blobs: 0,
                ..small(0)
            },
            BlockImageConfig {
                max_extent: 33,
                ..small(0)
            },
        ] {
            assert!(synthetic_block_image(&bad).is_err());
        }
        let full = synthetic_block_image(&BlockImageConfig::default()).unwrap();
        assert_eq!(full.pixels.len(), 128 * 128);
    }
}
