use super::ModelConfig;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::world::{Modality, ModalitySet, Observation};

/// What a token position holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Act,
    Patch { modality: Modality, row: usize, col: usize },
}

/// Per-token description of one sample's sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenLayout {
    pub tokens: Vec<TokenKind>,
    pub grid: (usize, usize),
}

impl TokenLayout {
    pub fn new(cfg: &ModelConfig, available: ModalitySet) -> Self {
        let grid = cfg.grid();
        let mut tokens = vec![TokenKind::Act];
        for modality in available.iter() {
            for row in 0..grid.0 {
                for col in 0..grid.1 {
                    tokens.push(TokenKind::Patch { modality, row, col });
                }
            }
        }
        Self { tokens, grid }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of the first token of `m`, if present.
    pub fn modality_offset(&self, m: Modality) -> Option<usize> {
        self.tokens
            .iter()
            .position(|t| matches!(t, TokenKind::Patch { modality, .. } if *modality == m))
    }
}

/// Fixed 2D sine-cosine embedding of a `rows x cols` grid, row-major.
/// Channels `0..dim/2` encode the column, `dim/2..dim` the row; each half is
/// `[sin(pos * w_k), cos(pos * w_k)]` with `w_k = 10000^(-k / (dim/4))`.
pub fn positional_embedding(rows: usize, cols: usize, dim: usize) -> Result<Tensor> {
    if dim % 4 != 0 {
        return Err(Error::InvalidArgument(format!(
            "positional embedding width {dim} not divisible by 4"
        )));
    }
    let quarter = dim / 4;
    let mut out = vec![0.0; rows * cols * dim];
    for r in 0..rows {
        for c in 0..cols {
            let t = &mut out[(r * cols + c) * dim..][..dim];
            for (half, pos) in [(0, c as f64), (1, r as f64)] {
                for k in 0..quarter {
                    let w = 1.0 / 10000f64.powf(k as f64 / quarter as f64);
                    t[half * 2 * quarter + k] = (pos * w).sin();
                    t[half * 2 * quarter + quarter + k] = (pos * w).cos();
                }
            }
        }
    }
    Tensor::new(&[rows * cols, dim], out)
}

/// Stacks `o_t` above `o_t1`, cuts `p x p` patches row-major and flattens
/// each in `(y, x, channel)` order. Appends rows to `out`.
pub fn push_patches(
    cfg: &ModelConfig,
    o_t: &Observation,
    o_t1: &Observation,
    modality: Modality,
    out: &mut Vec<f64>,
) -> Result<()> {
    let mut imgs = [None, None];
    for (slot, obs) in imgs.iter_mut().zip([o_t, o_t1]) {
        let img = obs.get(modality).ok_or_else(|| {
            Error::InvalidArgument(format!("observation lacks {}", modality.name()))
        })?;
        if img.dims() != (cfg.width, cfg.height, modality.channels()) {
            return Err(Error::shape(
                "patchify",
                format!(
                    "{} image {:?}, model expects {:?}",
                    modality.name(),
                    img.dims(),
                    (cfg.width, cfg.height, modality.channels())
                ),
            ));
        }
        *slot = Some(img);
    }
    let [Some(top), Some(bottom)] = imgs else { unreachable!() };
    let p = cfg.patch;
    let ch = modality.channels();
    let (gh, gw) = cfg.grid();
    for gr in 0..gh {
        for gc in 0..gw {
            for py in 0..p {
                let y = gr * p + py;
                let (img, yy) = if y < cfg.height { (top, y) } else { (bottom, y - cfg.height) };
                let start = img.index(gc * p, yy, 0);
                out.extend_from_slice(&img.data[start..start + p * ch]);
            }
        }
    }
    Ok(())
}

/// Patch matrix `[k x p*p*c]` of one observation pair.
pub fn patch_matrix(
    cfg: &ModelConfig,
    o_t: &Observation,
    o_t1: &Observation,
    modality: Modality,
) -> Result<Tensor> {
    let mut data = Vec::new();
    push_patches(cfg, o_t, o_t1, modality, &mut data)?;
    Tensor::new(&[cfg.patches_per_modality(), cfg.patch_len(modality)], data)
}
