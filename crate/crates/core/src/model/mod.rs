//! The VO transformer: per-modality patch tokens with fixed 2D sin-cos
//! positions, a learned ACT token, pre-norm encoder blocks and a regression
//! head on the encoded ACT token.

mod attention;
mod config;
mod tokens;

pub use attention::{attention_panels, fuse_attention, AttentionPanel, AttentionRecord};
pub use config::ModelConfig;
pub use tokens::{patch_matrix, positional_embedding, push_patches, TokenKind, TokenLayout};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Bound, ParamId, ParameterSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::Transform2;
use crate::world::{ActionId, Modality, ModalitySet, Observation};

pub const INIT_STD: f64 = 0.02;
pub const LN_EPS: f64 = 1e-5;

/// One model input: an observation pair and the action taken between them.
#[derive(Debug, Clone, Copy)]
pub struct PairRef<'a> {
    pub o_t: &'a Observation,
    pub o_t1: &'a Observation,
    pub action: ActionId,
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gain: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    ln1: Norm,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ln2: Norm,
    fc1: Linear,
    fc2: Linear,
}

/// Tape handles produced by [`Vot::forward`].
#[derive(Debug)]
pub struct ForwardOutput {
    /// `[batch x 3]` rows of `(beta, xi_x, xi_z)`.
    pub pred: Var,
    /// Per block, the attention node (see [`Tape::attention_probs`]).
    pub attention: Vec<Var>,
    pub layout: TokenLayout,
}

#[derive(Debug, Clone)]
pub struct Vot {
    cfg: ModelConfig,
    params: ParameterSet,
    proj: [Option<Linear>; 2],
    act_table: ParamId,
    blocks: Vec<Block>,
    final_norm: Norm,
    head0: Linear,
    head1: Linear,
    pos: Tensor,
}

fn truncated_normal<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
    let normal = Normal::new(0.0, std).expect("valid std");
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v: f64 = normal.sample(rng);
            if v.abs() <= 2.0 * std {
                break v;
            }
        })
        .collect();
    Tensor::new(shape, data).expect("shape")
}

fn xavier_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-a..a)).collect();
    Tensor::new(&[fan_in, fan_out], data).expect("shape")
}

fn modality_slot(m: Modality) -> usize {
    match m {
        Modality::Rgb => 0,
        Modality::Depth => 1,
    }
}

impl Vot {
    pub fn new<R: Rng + ?Sized>(cfg: ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let mut params = ParameterSet::new();
        // Patch projections use the embedding init; transformer and head
        // layers are Xavier-uniform.
        let embed = |params: &mut ParameterSet, name: &str, i: usize, o: usize, rng: &mut R| {
            Ok::<_, Error>(Linear {
                weight: params.insert(format!("{name}.weight"), truncated_normal(&[i, o], INIT_STD, rng))?,
                bias: params.insert(format!("{name}.bias"), Tensor::zeros(&[o]))?,
            })
        };
        let linear = |params: &mut ParameterSet, name: &str, i: usize, o: usize, rng: &mut R| {
            Ok::<_, Error>(Linear {
                weight: params.insert(format!("{name}.weight"), xavier_uniform(i, o, rng))?,
                bias: params.insert(format!("{name}.bias"), Tensor::zeros(&[o]))?,
            })
        };
        let norm = |params: &mut ParameterSet, name: &str| {
            Ok::<_, Error>(Norm {
                gain: params.insert(format!("{name}.gain"), Tensor::full(&[d], 1.0))?,
                bias: params.insert(format!("{name}.bias"), Tensor::zeros(&[d]))?,
            })
        };
        let mut proj = [None, None];
        for m in cfg.modalities.iter() {
            proj[modality_slot(m)] =
                Some(embed(&mut params, &format!("proj.{}", m.name()), cfg.patch_len(m), d, rng)?);
        }
        let act_table = params.insert("act.table", truncated_normal(&[cfg.action_vocab, d], INIT_STD, rng))?;
        let mut blocks = Vec::with_capacity(cfg.depth);
        for b in 0..cfg.depth {
            let p = format!("blocks.{b}");
            blocks.push(Block {
                ln1: norm(&mut params, &format!("{p}.ln1"))?,
                q: linear(&mut params, &format!("{p}.attn.q"), d, d, rng)?,
                k: linear(&mut params, &format!("{p}.attn.k"), d, d, rng)?,
                v: linear(&mut params, &format!("{p}.attn.v"), d, d, rng)?,
                o: linear(&mut params, &format!("{p}.attn.o"), d, d, rng)?,
                ln2: norm(&mut params, &format!("{p}.ln2"))?,
                fc1: linear(&mut params, &format!("{p}.mlp.fc1"), d, 4 * d, rng)?,
                fc2: linear(&mut params, &format!("{p}.mlp.fc2"), 4 * d, d, rng)?,
            });
        }
        let final_norm = norm(&mut params, "norm")?;
        let head0 = embed(&mut params, "head.fc0", d, cfg.head_hidden(), rng)?;
        let head1 = embed(&mut params, "head.fc1", cfg.head_hidden(), 3, rng)?;
        let (gh, gw) = cfg.grid();
        Ok(Self {
            cfg,
            params,
            proj,
            act_table,
            blocks,
            final_norm,
            head0,
            head1,
            pos: positional_embedding(gh, gw, d)?,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn positional(&self) -> &Tensor {
        &self.pos
    }

    fn affine(&self, tape: &mut Tape, bound: &Bound, x: Var, l: Linear) -> Result<Var> {
        let y = tape.matmul(x, bound.var(l.weight))?;
        let rows = tape.value(y).shape()[0];
        let b = tape.expand_rows(bound.var(l.bias), rows)?;
        tape.add(y, b)
    }

    fn norm(&self, tape: &mut Tape, bound: &Bound, x: Var, n: Norm) -> Result<Var> {
        tape.layer_norm(x, bound.var(n.gain), bound.var(n.bias), LN_EPS)
    }

    /// Projected patch tokens (without positions) of `m` for each pair,
    /// stacked as `[batch * k x d]`.
    pub fn patchify(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        pairs: &[PairRef<'_>],
        m: Modality,
    ) -> Result<Var> {
        let lin = self.proj[modality_slot(m)].ok_or_else(|| {
            Error::InvalidArgument(format!("model has no {} projection", m.name()))
        })?;
        let k = self.cfg.patches_per_modality();
        let mut data = Vec::with_capacity(pairs.len() * k * self.cfg.patch_len(m));
        for p in pairs {
            push_patches(&self.cfg, p.o_t, p.o_t1, m, &mut data)?;
        }
        let x = tape.constant(Tensor::new(&[pairs.len() * k, self.cfg.patch_len(m)], data)?);
        self.affine(tape, bound, x, lin)
    }

    /// ACT token rows `[batch x d]`.
    pub fn act_tokens(&self, tape: &mut Tape, bound: &Bound, actions: &[ActionId]) -> Result<Var> {
        let mut idx = Vec::with_capacity(actions.len());
        for a in actions {
            if *a == ActionId::Stop || a.code() as usize >= self.cfg.action_vocab {
                return Err(Error::InvalidArgument(format!("no embedding for action {a}")));
            }
            idx.push(a.code() as usize);
        }
        tape.gather_rows(bound.var(self.act_table), &idx)
    }

    /// Runs the encoder over `[batch * n x d]` tokens, `n = seq_len`. With
    /// `act_only`, the last block computes queries and the MLP for the ACT
    /// rows alone and the result is `[batch x d]`; the ACT outputs are
    /// unchanged since nothing downstream reads the other rows.
    pub fn encode(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        mut x: Var,
        seq_len: usize,
        act_only: bool,
    ) -> Result<(Var, Vec<Var>)> {
        let rows = tape.value(x).shape()[0];
        let act_rows: Vec<usize> = (0..rows / seq_len).map(|i| i * seq_len).collect();
        let mut attention = Vec::with_capacity(self.blocks.len());
        for (bi, blk) in self.blocks.iter().enumerate() {
            let prune = act_only && bi + 1 == self.blocks.len();
            let h = self.norm(tape, bound, x, blk.ln1)?;
            let k = self.affine(tape, bound, h, blk.k)?;
            let v = self.affine(tape, bound, h, blk.v)?;
            let a = if prune {
                let hq = tape.gather_rows(h, &act_rows)?;
                let q = self.affine(tape, bound, hq, blk.q)?;
                x = tape.gather_rows(x, &act_rows)?;
                tape.cross_attention(q, k, v, 1, seq_len, self.cfg.heads)?
            } else {
                let q = self.affine(tape, bound, h, blk.q)?;
                tape.attention(q, k, v, seq_len, self.cfg.heads)?
            };
            attention.push(a);
            let o = self.affine(tape, bound, a, blk.o)?;
            x = tape.add(x, o)?;
            let h = self.norm(tape, bound, x, blk.ln2)?;
            let h = self.affine(tape, bound, h, blk.fc1)?;
            let h = tape.gelu(h);
            let h = self.affine(tape, bound, h, blk.fc2)?;
            x = tape.add(x, h)?;
        }
        if act_only && self.blocks.is_empty() {
            x = tape.gather_rows(x, &act_rows)?;
        }
        Ok((x, attention))
    }

    /// `GELU(v W0 + b0) W1 + b1` on `[batch x d]` rows.
    pub fn head(&self, tape: &mut Tape, bound: &Bound, v: Var) -> Result<Var> {
        let h = self.affine(tape, bound, v, self.head0)?;
        let h = tape.gelu(h);
        self.affine(tape, bound, h, self.head1)
    }

    /// Batched forward pass restricted to `available` modalities; absent
    /// modalities contribute no tokens. The last block's attention covers the
    /// ACT query row only; see [`Vot::forward_full`].
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        pairs: &[PairRef<'_>],
        available: ModalitySet,
    ) -> Result<ForwardOutput> {
        self.forward_impl(tape, bound, pairs, available, true)
    }

    /// Forward pass recording full `[n x n]` attention in every block.
    pub fn forward_full(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        pairs: &[PairRef<'_>],
        available: ModalitySet,
    ) -> Result<ForwardOutput> {
        self.forward_impl(tape, bound, pairs, available, false)
    }

    fn forward_impl(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        pairs: &[PairRef<'_>],
        available: ModalitySet,
        act_only: bool,
    ) -> Result<ForwardOutput> {
        if !available.is_subset_of(self.cfg.modalities) {
            return Err(Error::InvalidArgument(format!(
                "modalities {available} not configured (model has {})",
                self.cfg.modalities
            )));
        }
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let b = pairs.len();
        let k = self.cfg.patches_per_modality();
        let layout = TokenLayout::new(&self.cfg, available);
        let n = layout.len();
        let actions: Vec<ActionId> = pairs.iter().map(|p| p.action).collect();
        let mut parts = vec![self.act_tokens(tape, bound, &actions)?];
        if !available.is_empty() {
            let mut pos = Vec::with_capacity(b * k * self.cfg.dim);
            for _ in 0..b {
                pos.extend_from_slice(self.pos.data());
            }
            let pos = tape.constant(Tensor::new(&[b * k, self.cfg.dim], pos)?);
            for m in available.iter() {
                let t = self.patchify(tape, bound, pairs, m)?;
                parts.push(tape.add(t, pos)?);
            }
        }
        let x = if parts.len() == 1 {
            parts[0]
        } else {
            let all = tape.concat(&parts, 0)?;
            let mods = parts.len() - 1;
            let mut order = Vec::with_capacity(b * n);
            for i in 0..b {
                order.push(i);
                for m in 0..mods {
                    let start = b + m * b * k + i * k;
                    order.extend(start..start + k);
                }
            }
            tape.gather_rows(all, &order)?
        };
        let (enc, attention) = self.encode(tape, bound, x, n, act_only)?;
        let v = if act_only {
            enc
        } else {
            let act_rows: Vec<usize> = (0..b).map(|i| i * n).collect();
            tape.gather_rows(enc, &act_rows)?
        };
        let v = self.norm(tape, bound, v, self.final_norm)?;
        let pred = self.head(tape, bound, v)?;
        Ok(ForwardOutput {
            pred,
            attention,
            layout,
        })
    }

    /// Inference on a batch of pairs.
    pub fn predict(&self, pairs: &[PairRef<'_>], available: ModalitySet) -> Result<Vec<Transform2>> {
        let mut tape = Tape::new();
        let bound = self.bind_frozen(&mut tape);
        let out = self.forward(&mut tape, &bound, pairs, available)?;
        let pred = tape.value(out.pred);
        let res: Vec<Transform2> = (0..pairs.len())
            .map(|i| {
                let r = pred.row(i);
                Transform2 {
                    beta: r[0],
                    xi: crate::geometry::Vec2::new(r[1], r[2]),
                }
            })
            .collect();
        if res.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("model prediction".into()));
        }
        Ok(res)
    }

    /// Single-pair inference that also returns every block's attention.
    pub fn predict_with_attention(
        &self,
        pair: PairRef<'_>,
        available: ModalitySet,
    ) -> Result<(Transform2, AttentionRecord, TokenLayout)> {
        let mut tape = Tape::new();
        let bound = self.bind_frozen(&mut tape);
        let out = self.forward_full(&mut tape, &bound, &[pair], available)?;
        let r = tape.value(out.pred).row(0).to_vec();
        let n = out.layout.len();
        let heads = self.cfg.heads;
        let blocks = out
            .attention
            .iter()
            .map(|&a| {
                let probs = tape.attention_probs(a).expect("attention node");
                (0..heads)
                    .map(|h| Tensor::new(&[n, n], probs[h * n * n..(h + 1) * n * n].to_vec()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let pred = Transform2 {
            beta: r[0],
            xi: crate::geometry::Vec2::new(r[1], r[2]),
        };
        Ok((pred, AttentionRecord { blocks }, out.layout))
    }

    /// Binds parameters as constants (no gradient bookkeeping).
    fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        self.params.bind_constant(tape)
    }
}
