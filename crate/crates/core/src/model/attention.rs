use super::{TokenKind, TokenLayout};
use crate::autodiff::Tensor;
use crate::world::Modality;

/// Attention weights of one sample: `blocks[b][h]` is `[n x n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub blocks: Vec<Vec<Tensor>>,
}

/// A min-max normalised heat map over a patch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionPanel {
    pub modality: Modality,
    /// 0 for `o_t`, 1 for `o_t1`; `None` for the full stacked grid.
    pub timestep: Option<usize>,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

fn min_max(values: &mut [f64]) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for v in values.iter_mut() {
        *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
    }
}

/// Raw last-block ACT-row weights, max over heads, one grid per modality.
fn fused_raw(rec: &AttentionRecord, layout: &TokenLayout) -> Vec<(Modality, Vec<f64>)> {
    let Some(last) = rec.blocks.last() else {
        return Vec::new();
    };
    let (gh, gw) = layout.grid;
    let mut out: Vec<(Modality, Vec<f64>)> = Vec::new();
    for (i, tok) in layout.tokens.iter().enumerate() {
        let TokenKind::Patch { modality, row, col } = *tok else { continue };
        let w = last.iter().map(|h| h.get2(0, i)).fold(f64::NEG_INFINITY, f64::max);
        let slot = match out.iter().position(|(m, _)| *m == modality) {
            Some(s) => s,
            None => {
                out.push((modality, vec![0.0; gh * gw]));
                out.len() - 1
            }
        };
        out[slot].1[row * gw + col] = w;
    }
    out
}

/// Fuses the last block's ACT-token attention over heads with `max` and
/// normalises each modality's patch grid to `[0, 1]`.
pub fn fuse_attention(rec: &AttentionRecord, layout: &TokenLayout) -> Vec<AttentionPanel> {
    let (rows, cols) = layout.grid;
    fused_raw(rec, layout)
        .into_iter()
        .map(|(modality, mut values)| {
            min_max(&mut values);
            AttentionPanel {
                modality,
                timestep: None,
                rows,
                cols,
                values,
            }
        })
        .collect()
}

/// Splits each modality's fused grid into its `o_t` (top) and `o_t1`
/// (bottom) halves, each normalised separately.
pub fn attention_panels(rec: &AttentionRecord, layout: &TokenLayout) -> Vec<AttentionPanel> {
    let (rows, cols) = layout.grid;
    let half = rows / 2;
    let mut out = Vec::new();
    for (modality, values) in fused_raw(rec, layout) {
        for t in 0..2 {
            let mut v = values[t * half * cols..(t + 1) * half * cols].to_vec();
            min_max(&mut v);
            out.push(AttentionPanel {
                modality,
                timestep: Some(t),
                rows: half,
                cols,
                values: v,
            });
        }
    }
    out
}
