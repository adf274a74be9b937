use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    pub(crate) fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Identity => 1.0,
        }
    }
}

/// Layer widths `[m, h₁, …, p, …, h₁, m]` and one activation per affine layer.
///
/// The widths are mirror-symmetric with the unique narrowest layer `p` in
/// the middle. The layer that produces the bottleneck and the output layer
/// are always linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawArch")]
pub struct AeArchitecture {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
}

#[derive(Deserialize)]
struct RawArch {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
}

impl TryFrom<RawArch> for AeArchitecture {
    type Error = Error;

    fn try_from(raw: RawArch) -> Result<Self> {
        AeArchitecture::new(raw.layer_sizes, raw.activations)
    }
}

impl AeArchitecture {
    pub fn new(layer_sizes: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        let bad = |msg: String| Err(Error::Config(format!("architecture {layer_sizes:?}: {msg}")));
        let len = layer_sizes.len();
        if len < 3 || len % 2 == 0 {
            return bad("needs an odd number (>= 3) of layer sizes".into());
        }
        if layer_sizes.contains(&0) {
            return bad("layer sizes must be positive".into());
        }
        if (0..len).any(|i| layer_sizes[i] != layer_sizes[len - 1 - i]) {
            return bad("layer sizes must be mirror-symmetric".into());
        }
        let center = len / 2;
        let p = layer_sizes[center];
        if (1..len - 1).any(|i| i != center && layer_sizes[i] <= p) {
            return bad("the bottleneck must be the unique narrowest interior layer".into());
        }
        if p >= layer_sizes[0] && len > 3 {
            return bad("bottleneck must be narrower than the input".into());
        }
        if activations.len() != len - 1 {
            return bad(format!("{} activations for {} layers", activations.len(), len - 1));
        }
        if activations[center - 1] != Activation::Identity || activations[len - 2] != Activation::Identity {
            return bad("bottleneck and output layers must use identity activation".into());
        }
        Ok(AeArchitecture {
            layer_sizes,
            activations,
        })
    }

    /// `[m, hidden…, p, hidden(reversed)…, m]` with tanh on hidden layers.
    pub fn symmetric(m: usize, hidden: &[usize], p: usize) -> Result<Self> {
        Self::with_hidden_activation(m, hidden, p, Activation::Tanh)
    }

    /// Same shape as [`symmetric`](Self::symmetric) but linear everywhere.
    pub fn linear(m: usize, hidden: &[usize], p: usize) -> Result<Self> {
        Self::with_hidden_activation(m, hidden, p, Activation::Identity)
    }

    /// Two tanh hidden layers per side of width `max(16, 4p)`.
    pub fn default_for(m: usize, p: usize) -> Result<Self> {
        let w = default_hidden_width(p);
        Self::symmetric(m, &[w, w], p)
    }

    fn with_hidden_activation(m: usize, hidden: &[usize], p: usize, act: Activation) -> Result<Self> {
        let mut sizes = vec![m];
        sizes.extend_from_slice(hidden);
        sizes.push(p);
        sizes.extend(hidden.iter().rev());
        sizes.push(m);
        let layers = sizes.len() - 1;
        let center = sizes.len() / 2;
        let activations = (0..layers)
            .map(|k| {
                if k == center - 1 || k == layers - 1 {
                    Activation::Identity
                } else {
                    act
                }
            })
            .collect();
        AeArchitecture::new(sizes, activations)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn latent_dim(&self) -> usize {
        self.layer_sizes[self.layer_sizes.len() / 2]
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Number of encoder layers; layer `encoder_layers() - 1` emits the code.
    pub fn encoder_layers(&self) -> usize {
        self.layer_sizes.len() / 2
    }

    pub fn n_params(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

pub fn default_hidden_width(p: usize) -> usize {
    16.max(4 * p)
}
