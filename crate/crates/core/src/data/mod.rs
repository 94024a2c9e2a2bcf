//! Samples, synthetic generation, image I/O, augmentation and splitting.

pub mod augment;
pub mod io;
pub mod split;
pub mod synth;

pub use augment::{augment, AugmentConfig};
pub use io::{load_dataset, load_datasets, load_image, load_sample, save_sample};
pub use split::{batches, split, SplitSpec};
pub use synth::generate_synthetic;

use crate::error::{dim_err, Result};
use crate::tensor::Tensor;

/// One image `[3, H, W]` in `[0, 1]` and its binary mask `[1, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Tensor<f32>,
    pub mask: Tensor<f32>,
}

impl Sample {
    pub fn new(id: impl Into<String>, image: Tensor<f32>, mask: Tensor<f32>) -> Result<Self> {
        let [c, h, w] = image.dims3()?;
        if c != 3 || mask.shape() != [1, h, w] {
            return Err(dim_err!("image {:?} and mask {:?} do not pair", image.shape(), mask.shape()));
        }
        Ok(Self {
            id: id.into(),
            image,
            mask,
        })
    }

    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }

    pub fn foreground(&self) -> usize {
        self.mask.data().iter().filter(|&&v| v > 0.5).count()
    }
}
