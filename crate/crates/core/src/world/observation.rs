use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{motion::NoiseModel, MAX_DEPTH};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Rgb,
    Depth,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::Rgb, Modality::Depth];

    pub fn channels(self) -> usize {
        match self {
            Modality::Rgb => 3,
            Modality::Depth => 1,
        }
    }

    pub fn value_range(self) -> (f64, f64) {
        match self {
            Modality::Rgb => (0.0, 1.0),
            Modality::Depth => (0.0, MAX_DEPTH),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::Depth => "depth",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Modality::Rgb => 0,
            Modality::Depth => 1,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Modality::Rgb),
            1 => Ok(Modality::Depth),
            _ => Err(Error::Format(format!("unknown modality code {c}"))),
        }
    }
}

/// A subset of the sensor suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ModalitySet {
    pub rgb: bool,
    pub depth: bool,
}

impl ModalitySet {
    pub const NONE: ModalitySet = ModalitySet {
        rgb: false,
        depth: false,
    };
    pub const RGB: ModalitySet = ModalitySet {
        rgb: true,
        depth: false,
    };
    pub const DEPTH: ModalitySet = ModalitySet {
        rgb: false,
        depth: true,
    };
    pub const RGBD: ModalitySet = ModalitySet {
        rgb: true,
        depth: true,
    };

    pub fn contains(self, m: Modality) -> bool {
        match m {
            Modality::Rgb => self.rgb,
            Modality::Depth => self.depth,
        }
    }

    /// Present modalities in canonical token order (RGB before Depth).
    pub fn iter(self) -> impl Iterator<Item = Modality> {
        Modality::ALL.into_iter().filter(move |m| self.contains(*m))
    }

    pub fn is_empty(self) -> bool {
        !self.rgb && !self.depth
    }

    pub fn is_subset_of(self, other: ModalitySet) -> bool {
        (!self.rgb || other.rgb) && (!self.depth || other.depth)
    }

    pub fn name(self) -> &'static str {
        match (self.rgb, self.depth) {
            (true, true) => "rgbd",
            (true, false) => "rgb",
            (false, true) => "depth",
            (false, false) => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rgbd" | "rgb-d" => Ok(Self::RGBD),
            "rgb" => Ok(Self::RGB),
            "depth" => Ok(Self::DEPTH),
            "none" | "blind" | "" => Ok(Self::NONE),
            other => Err(Error::InvalidArgument(format!("unknown modality set '{other}'"))),
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        s.split(',').map(Self::parse).collect()
    }
}

impl fmt::Display for ModalitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Row-major `height x width x channels` image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::InvalidArgument(format!(
                "image data length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    pub fn flip_horizontal(&self) -> Image {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                let src = self.index(self.width - 1 - x, y, 0);
                let dst = self.index(x, y, 0);
                out.data[dst..dst + self.channels]
                    .copy_from_slice(&self.data[src..src + self.channels]);
            }
        }
        out
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }
}

/// One timestep's sensor readings.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub rgb: Option<Image>,
    pub depth: Option<Image>,
}

impl Observation {
    pub fn new(rgb: Option<Image>, depth: Option<Image>) -> Result<Self> {
        if rgb.is_none() && depth.is_none() {
            return Err(Error::InvalidArgument(
                "observation needs at least one modality".into(),
            ));
        }
        if let Some(img) = &rgb {
            if img.channels != 3 {
                return Err(Error::InvalidArgument("rgb image must have 3 channels".into()));
            }
        }
        if let Some(img) = &depth {
            if img.channels != 1 {
                return Err(Error::InvalidArgument("depth image must have 1 channel".into()));
            }
        }
        Ok(Self { rgb, depth })
    }

    pub fn get(&self, m: Modality) -> Option<&Image> {
        match m {
            Modality::Rgb => self.rgb.as_ref(),
            Modality::Depth => self.depth.as_ref(),
        }
    }

    pub fn get_mut(&mut self, m: Modality) -> Option<&mut Image> {
        match m {
            Modality::Rgb => self.rgb.as_mut(),
            Modality::Depth => self.depth.as_mut(),
        }
    }

    pub fn modalities(&self) -> ModalitySet {
        ModalitySet {
            rgb: self.rgb.is_some(),
            depth: self.depth.is_some(),
        }
    }

    pub fn flip_horizontal(&self) -> Observation {
        Observation {
            rgb: self.rgb.as_ref().map(Image::flip_horizontal),
            depth: self.depth.as_ref().map(Image::flip_horizontal),
        }
    }

    /// Checks the declared value ranges element-wise.
    pub fn in_range(&self) -> bool {
        Modality::ALL.iter().all(|&m| {
            let (lo, hi) = m.value_range();
            self.get(m)
                .map_or(true, |img| img.data.iter().all(|v| (lo..=hi).contains(v)))
        })
    }
}

/// Adds independent per-pixel Gaussian noise and re-clamps to the modality range.
pub fn apply_observation_noise<R: Rng + ?Sized>(
    obs: &Observation,
    noise: &NoiseModel,
    rng: &mut R,
) -> Observation {
    let mut out = obs.clone();
    for m in Modality::ALL {
        let sigma = match m {
            Modality::Rgb => noise.rgb_sigma,
            Modality::Depth => noise.depth_sigma,
        };
        if sigma <= 0.0 {
            continue;
        }
        let (lo, hi) = m.value_range();
        let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
        if let Some(img) = out.get_mut(m) {
            for v in img.data.iter_mut() {
                *v = (*v + normal.sample(rng)).clamp(lo, hi);
            }
        }
    }
    out
}
