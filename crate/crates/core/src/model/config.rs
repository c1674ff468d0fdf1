use crate::error::{Error, Result};
use crate::world::{Modality, ModalitySet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub patch: usize,
    /// Width of one observation.
    pub width: usize,
    /// Height of one observation; the two timesteps stack to `2 * height`.
    pub height: usize,
    pub modalities: ModalitySet,
    pub action_vocab: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            depth: 4,
            heads: 4,
            patch: 8,
            width: 32,
            height: 16,
            modalities: ModalitySet::RGBD,
            action_vocab: 3,
        }
    }
}

impl ModelConfig {
    pub fn head_hidden(&self) -> usize {
        self.dim / 2
    }

    pub fn grid(&self) -> (usize, usize) {
        (2 * self.height / self.patch, self.width / self.patch)
    }

    pub fn patches_per_modality(&self) -> usize {
        let (gh, gw) = self.grid();
        gh * gw
    }

    pub fn patch_len(&self, m: Modality) -> usize {
        self.patch * self.patch * m.channels()
    }

    /// ACT token plus the patch tokens of each available modality.
    pub fn seq_len(&self, available: ModalitySet) -> usize {
        1 + available.iter().count() * self.patches_per_modality()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.dim == 0 || self.depth == 0 || self.heads == 0 || self.patch == 0 {
            return fail("model dim, depth, heads and patch must be positive".into());
        }
        if self.dim % self.heads != 0 {
            return fail(format!("dim {} not divisible by heads {}", self.dim, self.heads));
        }
        if self.dim % 4 != 0 {
            return fail(format!("dim {} must be divisible by 4", self.dim));
        }
        if self.width % self.patch != 0 || (2 * self.height) % self.patch != 0 {
            return fail(format!(
                "image {}x{} (stacked {}x{}) not divisible by patch {}",
                self.width,
                self.height,
                self.width,
                2 * self.height,
                self.patch
            ));
        }
        if self.action_vocab != 3 {
            return fail("action vocabulary must be 3 (FWD, LEFT, RIGHT)".into());
        }
        Ok(())
    }
}
