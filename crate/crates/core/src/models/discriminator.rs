use rand::Rng;
use serde::{Deserialize, Serialize};

use super::generator::{init_tensor, verify_params, Init};
use super::{ModelError, ParamSet};
use crate::autodiff::{ConvGeometry, Tape, Var};

const KERNEL: usize = 4;
const PADDING: usize = 1;
const NORM_EPS: f32 = 1e-5;

/// Shape of the patch discriminator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    /// Visual and thermal channels stacked.
    pub input_channels: usize,
    /// Number of stride-2 blocks before the two stride-1 blocks.
    pub n_layers: usize,
    pub base_width: usize,
    pub image_size: usize,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        Self {
            input_channels: 6,
            n_layers: 3,
            base_width: 16,
            image_size: 64,
        }
    }
}

impl DiscriminatorSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_channels == 0 || self.base_width == 0 || self.n_layers == 0 {
            return Err(ModelError::Config(
                "discriminator channels, width and layer count must be positive".into(),
            ));
        }
        self.logit_extent(self.image_size).map(|_| ())
    }

    fn width(&self, block: usize) -> usize {
        let cap = 8 * self.base_width;
        (0..block).fold(self.base_width, |w, _| (2 * w).min(cap))
    }

    fn strides(&self) -> impl Iterator<Item = usize> {
        std::iter::repeat_n(2, self.n_layers).chain([1, 1])
    }

    /// Side of the logit map for a square input of side `size`.
    pub fn logit_extent(&self, size: usize) -> Result<usize, ModelError> {
        let mut extent = size;
        for stride in self.strides() {
            extent = ConvGeometry::forward(1, extent, extent, KERNEL, stride, PADDING)
                .map_err(|_| {
                    ModelError::Config(format!(
                        "input extent {size} is too small for a {}-layer patch discriminator",
                        self.n_layers
                    ))
                })?
                .out_h;
        }
        Ok(extent)
    }

    /// Side of the input patch that one output logit sees.
    pub fn receptive_field(&self) -> usize {
        let mut field = 1;
        let strides: Vec<usize> = self.strides().collect();
        for &stride in strides.iter().rev() {
            field = (field - 1) * stride + KERNEL;
        }
        field
    }
}

#[derive(Debug, Clone)]
struct Block {
    weight: usize,
    bias: Option<usize>,
    norm: Option<(usize, usize)>,
    stride: usize,
}

type Entry = (String, Vec<usize>, Init);

fn plan(spec: &DiscriminatorSpec) -> (Vec<Entry>, Vec<Block>) {
    let mut entries: Vec<Entry> = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: Init| {
        entries.push((name, shape, init));
        entries.len() - 1
    };
    let mut blocks = Vec::new();
    let total = spec.n_layers + 2;
    let mut cin = spec.input_channels;
    for (i, stride) in spec.strides().enumerate() {
        let last = i + 1 == total;
        let cout = if last { 1 } else { spec.width(i) };
        let normed = i > 0 && !last;
        let weight = push(
            format!("block{i}.weight"),
            vec![cout, cin, KERNEL, KERNEL],
            Init::Gaussian,
        );
        let bias = (!normed).then(|| push(format!("block{i}.bias"), vec![cout], Init::Zero));
        let norm = normed.then(|| {
            (
                push(format!("block{i}.norm.gamma"), vec![cout], Init::One),
                push(format!("block{i}.norm.beta"), vec![cout], Init::Zero),
            )
        });
        blocks.push(Block {
            weight,
            bias,
            norm,
            stride,
        });
        cin = cout;
    }
    (entries, blocks)
}

/// Fully convolutional patch discriminator over (visual, thermal) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    spec: DiscriminatorSpec,
    params: ParamSet,
}

pub fn build_discriminator<R: Rng + ?Sized>(
    spec: DiscriminatorSpec,
    rng: &mut R,
) -> Result<Discriminator, ModelError> {
    spec.validate()?;
    let (entries, _) = plan(&spec);
    let mut params = ParamSet::new();
    for (name, shape, init) in entries {
        params.push(name, init_tensor(&shape, init, rng));
    }
    Ok(Discriminator { spec, params })
}

impl Discriminator {
    pub fn from_params(spec: DiscriminatorSpec, params: ParamSet) -> Result<Self, ModelError> {
        spec.validate()?;
        let (entries, _) = plan(&spec);
        verify_params(&entries, &params, "discriminator")?;
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params.bind(tape, trainable)
    }

    /// Patch logits (N×1×h×w) for the visual frame paired with a thermal candidate.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        visual: Var,
        thermal: Var,
    ) -> Result<Var, ModelError> {
        let x = tape.concat_channels(visual, thermal)?;
        let (_, c, h, w) = tape.value(x).dims4()?;
        if c != self.spec.input_channels {
            return Err(ModelError::Config(format!(
                "discriminator expects {} stacked channels, got {c}",
                self.spec.input_channels
            )));
        }
        self.spec.logit_extent(h.min(w))?;
        let (_, blocks) = plan(&self.spec);
        let last = blocks.len() - 1;
        let mut y = x;
        for (i, block) in blocks.iter().enumerate() {
            y = tape.conv2d(
                y,
                bound[block.weight],
                block.bias.map(|b| bound[b]),
                block.stride,
                PADDING,
            )?;
            if let Some((g, b)) = block.norm {
                y = tape.instance_norm(y, bound[g], bound[b], NORM_EPS)?;
            }
            if i != last {
                y = tape.leaky_relu(y);
            }
        }
        Ok(y)
    }
}
