//! Named, flat parameter storage shared by the optimizer, gradient checks and checkpoints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::Real;

/// How a parameter block is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Init {
    /// Uniform in `±1/sqrt(fan_in)`.
    FanIn(usize),
    Ones,
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub init: Init,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Location of one parameter block inside the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    #[inline]
    pub fn get<'a, T>(&self, flat: &'a [T]) -> &'a [T] {
        &flat[self.offset..self.offset + self.len]
    }

    #[inline]
    pub fn get_mut<'a, T>(&self, flat: &'a mut [T]) -> &'a mut [T] {
        &mut flat[self.offset..self.offset + self.len]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    specs: Vec<ParamSpec>,
    len: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> Slot {
        let spec = ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            offset: self.len,
            init,
        };
        let slot = Slot {
            offset: spec.offset,
            len: spec.len(),
        };
        self.len += slot.len;
        self.specs.push(spec);
        slot
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn total_len(&self) -> usize {
        self.len
    }

    pub fn find(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    /// Draws initial values in declaration order from a seeded stream.
    ///
    /// Values are drawn in `f64` and cast, so both precisions start from the same point.
    pub fn initialize<T: Real>(&self, seed: u64) -> Vec<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(self.len);
        for spec in &self.specs {
            match spec.init {
                Init::FanIn(fan_in) => {
                    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                    out.extend((0..spec.len()).map(|_| T::c(rng.gen_range(-bound..bound))));
                }
                Init::Ones => out.extend(std::iter::repeat_n(T::one(), spec.len())),
                Init::Zeros => out.extend(std::iter::repeat_n(T::zero(), spec.len())),
            }
        }
        out
    }
}
