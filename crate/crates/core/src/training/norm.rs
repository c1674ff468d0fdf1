use crate::autodiff::{Records, Tensor};
use crate::error::{Error, Result};
use crate::world::{Modality, ModalitySet, Observation};

pub const NORM_EPS: f64 = 1e-6;

/// Streaming per-channel mean and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub count: f64,
    pub mean: Vec<f64>,
    /// Sum of squared deviations.
    pub m2: Vec<f64>,
}

impl ChannelStats {
    pub fn new(channels: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; channels],
            m2: vec![0.0; channels],
        }
    }

    pub fn variance(&self) -> Vec<f64> {
        self.m2
            .iter()
            .map(|m| if self.count > 0.0 { (m / self.count).max(0.0) } else { 1.0 })
            .collect()
    }

    /// Merges a batch given as interleaved channel values.
    pub fn update(&mut self, values: &[f64]) {
        let c = self.mean.len();
        let n = (values.len() / c) as f64;
        if n == 0.0 {
            return;
        }
        for ch in 0..c {
            let it = values.iter().skip(ch).step_by(c);
            let mean_b = it.clone().sum::<f64>() / n;
            let m2_b: f64 = it.map(|v| (v - mean_b) * (v - mean_b)).sum();
            let total = self.count + n;
            let delta = mean_b - self.mean[ch];
            self.mean[ch] += delta * n / total;
            self.m2[ch] += m2_b + delta * delta * self.count * n / total;
        }
        self.count += n;
    }
}

/// Running normalisation statistics per modality.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub rgb: ChannelStats,
    pub depth: ChannelStats,
}

impl Default for NormStats {
    fn default() -> Self {
        Self {
            rgb: ChannelStats::new(Modality::Rgb.channels()),
            depth: ChannelStats::new(Modality::Depth.channels()),
        }
    }
}

impl NormStats {
    pub fn get(&self, m: Modality) -> &ChannelStats {
        match m {
            Modality::Rgb => &self.rgb,
            Modality::Depth => &self.depth,
        }
    }

    fn get_mut(&mut self, m: Modality) -> &mut ChannelStats {
        match m {
            Modality::Rgb => &mut self.rgb,
            Modality::Depth => &mut self.depth,
        }
    }

    /// Folds the `modalities` of `observations` into the running statistics.
    pub fn update<'a>(
        &mut self,
        observations: impl IntoIterator<Item = &'a Observation>,
        modalities: ModalitySet,
    ) {
        let obs: Vec<&Observation> = observations.into_iter().collect();
        for m in modalities.iter() {
            let mut values = Vec::new();
            for o in &obs {
                if let Some(img) = o.get(m) {
                    values.extend_from_slice(&img.data);
                }
            }
            self.get_mut(m).update(&values);
        }
    }

    /// `(x - mean) / sqrt(var + eps)` per channel for `modalities`; other
    /// modalities are dropped from the result.
    pub fn normalize(&self, obs: &Observation, modalities: ModalitySet) -> Result<Observation> {
        let mut out = Observation {
            rgb: None,
            depth: None,
        };
        for m in modalities.iter() {
            let src = obs
                .get(m)
                .ok_or_else(|| Error::InvalidArgument(format!("observation lacks {}", m.name())))?;
            let stats = self.get(m);
            let scale: Vec<f64> = stats.variance().iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect();
            let mut img = src.clone();
            let c = img.channels;
            for (i, v) in img.data.iter_mut().enumerate() {
                let ch = i % c;
                *v = (*v - stats.mean[ch]) * scale[ch];
            }
            match m {
                Modality::Rgb => out.rgb = Some(img),
                Modality::Depth => out.depth = Some(img),
            }
        }
        Ok(out)
    }

    pub fn to_records(&self) -> Records {
        let mut out = Records::new();
        for m in Modality::ALL {
            let s = self.get(m);
            let c = s.mean.len();
            out.push((format!("{}.count", m.name()), Tensor::scalar(s.count)));
            out.push((format!("{}.mean", m.name()), Tensor::new(&[c], s.mean.clone()).expect("shape")));
            out.push((format!("{}.m2", m.name()), Tensor::new(&[c], s.m2.clone()).expect("shape")));
        }
        out
    }

    pub fn from_records(records: &Records) -> Result<Self> {
        let mut stats = NormStats::default();
        for m in Modality::ALL {
            let find = |suffix: &str| {
                let key = format!("{}.{suffix}", m.name());
                records
                    .iter()
                    .find(|(n, _)| *n == key)
                    .map(|(_, t)| t.data().to_vec())
                    .ok_or_else(|| Error::Format(format!("missing normalisation record {key}")))
            };
            let count = find("count")?;
            let mean = find("mean")?;
            let m2 = find("m2")?;
            let s = stats.get_mut(m);
            if count.len() != 1 || mean.len() != s.mean.len() || m2.len() != s.m2.len() {
                return Err(Error::Format(format!("malformed {} statistics", m.name())));
            }
            s.count = count[0];
            s.mean = mean;
            s.m2 = m2;
        }
        Ok(stats)
    }
}
