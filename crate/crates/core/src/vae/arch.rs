use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of per-pixel classes fed to and produced by the network.
pub const NUM_CLASSES: usize = 4;

/// One 3x3 encoder convolution; the decoder mirrors it with a transposed
/// convolution of the same stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub channels: usize,
    pub stride: usize,
}

/// Network shape: input grid, latent width and the encoder stack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub grid: usize,
    pub latent_dim: usize,
    pub layers: Vec<ConvSpec>,
}

impl Architecture {
    /// 64x64 input, six stride-2 convolutions down to 1x1x128.
    pub fn desk() -> Self {
        Self::halving(64, 32, &[16, 32, 64, 64, 128, 128])
    }

    /// 256x256 input with ten 3x3 convolutions: eight stride-2 halvings to
    /// 1x1 followed by two stride-1 layers.
    pub fn paper() -> Self {
        let mut arch = Self::halving(256, 32, &[16, 32, 48, 64, 64, 96, 128, 128]);
        arch.layers.extend([
            ConvSpec {
                channels: 128,
                stride: 1,
            },
            ConvSpec {
                channels: 128,
                stride: 1,
            },
        ]);
        arch
    }

    /// Gradient-check configuration: 8x8 grid, two layers, latent width 4.
    pub fn tiny() -> Self {
        Self::halving(8, 4, &[3, 5])
    }

    pub fn halving(grid: usize, latent_dim: usize, channels: &[usize]) -> Self {
        Self {
            grid,
            latent_dim,
            layers: channels
                .iter()
                .map(|&channels| ConvSpec {
                    channels,
                    stride: 2,
                })
                .collect(),
        }
    }

    /// Spatial side after each encoder layer (index 0 is the input).
    pub fn spatial_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.grid];
        for l in &self.layers {
            let last = *sizes.last().unwrap();
            sizes.push(last / l.stride);
        }
        sizes
    }

    /// Channel count before each encoder layer and after the last.
    pub fn channel_sizes(&self) -> Vec<usize> {
        let mut ch = vec![NUM_CLASSES];
        ch.extend(self.layers.iter().map(|l| l.channels));
        ch
    }

    pub fn bottleneck_side(&self) -> usize {
        *self.spatial_sizes().last().unwrap()
    }

    /// Width of the flattened encoder output.
    pub fn features(&self) -> usize {
        let s = self.bottleneck_side();
        self.layers.last().map_or(NUM_CLASSES, |l| l.channels) * s * s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Architecture(msg));
        if self.layers.is_empty() {
            return bad("at least one convolution layer required".into());
        }
        if self.latent_dim == 0 {
            return bad("latent width must be positive".into());
        }
        let mut side = self.grid;
        for (i, l) in self.layers.iter().enumerate() {
            if l.channels == 0 || !(l.stride == 1 || l.stride == 2) {
                return bad(format!("layer {i}: channels > 0 and stride 1 or 2 required"));
            }
            if !side.is_multiple_of(l.stride) || side / l.stride == 0 {
                return bad(format!("layer {i}: side {side} not divisible by stride"));
            }
            side /= l.stride;
        }
        Ok(())
    }

    /// Shapes of every parameter tensor, in storage order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let ch = self.channel_sizes();
        let k = self.layers.len();
        let f = self.features();
        let l = self.latent_dim;
        let mut shapes = Vec::new();
        for i in 0..k {
            shapes.push((format!("enc{i}.weight"), vec![ch[i + 1], ch[i], 3, 3]));
            shapes.push((format!("enc{i}.bias"), vec![ch[i + 1]]));
        }
        shapes.push(("mu.weight".into(), vec![l, f]));
        shapes.push(("mu.bias".into(), vec![l]));
        shapes.push(("log_var.weight".into(), vec![l, f]));
        shapes.push(("log_var.bias".into(), vec![l]));
        shapes.push(("dec_in.weight".into(), vec![f, l]));
        shapes.push(("dec_in.bias".into(), vec![f]));
        // Decoder layer j undoes encoder layer k-1-j.
        for j in 0..k {
            let e = k - 1 - j;
            shapes.push((format!("dec{j}.weight"), vec![ch[e + 1], ch[e], 3, 3]));
            shapes.push((format!("dec{j}.bias"), vec![ch[e]]));
        }
        shapes.push(("adv.weight".into(), vec![1, l]));
        shapes.push(("adv.bias".into(), vec![1]));
        shapes
    }

    pub fn layout(&self) -> Layout {
        let mut offset = 0;
        let tensors = self
            .parameter_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let len = shape.iter().product();
                let t = TensorSlot {
                    name,
                    shape,
                    offset,
                    len,
                };
                offset += len;
                t
            })
            .collect();
        Layout {
            tensors,
            total: offset,
        }
    }
}

/// Position of one tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

impl TensorSlot {
    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len
    }

    pub fn is_bias(&self) -> bool {
        self.shape.len() == 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tensors: Vec<TensorSlot>,
    pub total: usize,
}

/// Indices into [`Layout::tensors`] for each block of the network.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Slots {
    pub layers: usize,
}

impl Slots {
    pub fn enc_w(&self, i: usize) -> usize {
        2 * i
    }
    pub fn enc_b(&self, i: usize) -> usize {
        2 * i + 1
    }
    pub fn mu_w(&self) -> usize {
        2 * self.layers
    }
    pub fn mu_b(&self) -> usize {
        2 * self.layers + 1
    }
    pub fn lv_w(&self) -> usize {
        2 * self.layers + 2
    }
    pub fn lv_b(&self) -> usize {
        2 * self.layers + 3
    }
    pub fn din_w(&self) -> usize {
        2 * self.layers + 4
    }
    pub fn din_b(&self) -> usize {
        2 * self.layers + 5
    }
    pub fn dec_w(&self, j: usize) -> usize {
        2 * self.layers + 6 + 2 * j
    }
    pub fn dec_b(&self, j: usize) -> usize {
        2 * self.layers + 7 + 2 * j
    }
    pub fn adv_w(&self) -> usize {
        4 * self.layers + 6
    }
    pub fn adv_b(&self) -> usize {
        4 * self.layers + 7
    }
}
