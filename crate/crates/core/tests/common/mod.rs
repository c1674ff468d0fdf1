#![allow(dead_code)]

use rand::Rng;
use vot::autodiff::{Tape, Tensor};
use vot::model::{ModelConfig, PairRef, Vot};
use vot::geometry::Transform2;
use vot::training::vo_loss;
use vot::world::{ActionId, Image, ModalitySet, Observation};

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        dim: 16,
        depth: 2,
        heads: 2,
        patch: 8,
        width: 16,
        height: 8,
        ..ModelConfig::default()
    }
}

pub fn random_image<R: Rng>(w: usize, h: usize, c: usize, rng: &mut R) -> Image {
    Image::from_vec(w, h, c, (0..w * h * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_obs<R: Rng>(w: usize, h: usize, rng: &mut R) -> Observation {
    Observation::new(Some(random_image(w, h, 3, rng)), Some(random_image(w, h, 1, rng))).unwrap()
}

pub struct Batch {
    pub obs: Vec<(Observation, Observation)>,
    pub actions: Vec<ActionId>,
    pub labels: Vec<Transform2>,
}

impl Batch {
    pub fn random(cfg: &ModelConfig, n: usize, seed: u64) -> Self {
        let mut rng = vot::rng::stream(seed, 0);
        let obs = (0..n)
            .map(|_| (random_obs(cfg.width, cfg.height, &mut rng), random_obs(cfg.width, cfg.height, &mut rng)))
            .collect();
        let actions = (0..n).map(|i| ActionId::MOVES[i % 3]).collect();
        let labels = (0..n)
            .map(|_| Transform2::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.1..0.1), rng.gen_range(-0.3..0.0)))
            .collect();
        Self { obs, actions, labels }
    }

    pub fn pairs(&self) -> Vec<PairRef<'_>> {
        self.obs
            .iter()
            .zip(&self.actions)
            .map(|((a, b), &action)| PairRef { o_t: a, o_t1: b, action })
            .collect()
    }
}

/// Training loss of `model` on `batch` with the flip term on turn samples.
pub fn loss_of(model: &Vot, batch: &Batch, available: ModalitySet) -> (Tape, vot::autodiff::Var, vot::autodiff::Bound) {
    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape);
    let mut pairs = batch.pairs();
    let turns: Vec<usize> = (0..pairs.len()).filter(|&i| batch.actions[i].is_turn()).collect();
    let flipped: Vec<(Observation, Observation)> = turns
        .iter()
        .map(|&i| (batch.obs[i].0.flip_horizontal(), batch.obs[i].1.flip_horizontal()))
        .collect();
    pairs.extend(turns.iter().zip(&flipped).map(|(&i, (a, b))| PairRef {
        o_t: a,
        o_t1: b,
        action: batch.actions[i].mirror(),
    }));
    let out = model.forward(&mut tape, &bound, &pairs, available).unwrap();
    let loss = vo_loss(&mut tape, out.pred, &batch.labels, &turns, 0.1).unwrap();
    (tape, loss.total, bound)
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Largest relative error between analytic and central-difference
/// gradients over every entry of every parameter tensor, per tensor.
pub fn model_fd_errors(model: &Vot, batch: &Batch, available: ModalitySet, h: f64) -> Vec<(String, f64)> {
    let (tape, loss, bound) = loss_of(model, batch, available);
    let grads = tape.backward(loss).unwrap();
    let analytic: Vec<Tensor> = bound.grads(&tape, &grads);
    let mut probe = model.clone();
    let ids: Vec<_> = model.params().ids().collect();
    let mut out = Vec::new();
    for (slot, id) in ids.iter().enumerate() {
        let name = model.params().name(*id).to_string();
        let mut worst: f64 = 0.0;
        for j in 0..model.params().get(*id).len() {
            let orig = model.params().get(*id).data()[j];
            probe.params_mut().get_mut(*id).data_mut()[j] = orig + h;
            let (t, l, _) = loss_of(&probe, batch, available);
            let up = t.value(l).item();
            probe.params_mut().get_mut(*id).data_mut()[j] = orig - h;
            let (t, l, _) = loss_of(&probe, batch, available);
            let down = t.value(l).item();
            probe.params_mut().get_mut(*id).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(rel_err(analytic[slot].data()[j], numeric));
        }
        out.push((name, worst));
    }
    out
}
