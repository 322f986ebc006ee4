use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{init_weight, Mode, ModelError, ParamSet};
use crate::autodiff::{Tape, Tensor, Var};

const KERNEL: usize = 4;
const STRIDE: usize = 2;
const PADDING: usize = 1;
const NORM_EPS: f32 = 1e-5;

/// Shape of the U-Net translator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_width: usize,
    /// Number of stride-2 encoder stages (and mirrored decoder stages).
    pub depth: usize,
    /// Decoder stage indices (0 = innermost) that apply dropout while training.
    pub dropout_stages: Vec<usize>,
    pub dropout_p: f32,
    /// Spatial extent the model is trained on.
    pub image_size: usize,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            in_channels: 3,
            out_channels: 3,
            base_width: 16,
            depth: 6,
            dropout_stages: vec![0, 1, 2],
            dropout_p: 0.5,
            image_size: 64,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.in_channels == 0 || self.out_channels == 0 || self.base_width == 0 {
            return Err(ModelError::Config(
                "channel counts and base width must be positive".into(),
            ));
        }
        if self.depth < 2 {
            return Err(ModelError::Config(format!(
                "generator depth must be at least 2, got {}",
                self.depth
            )));
        }
        if let Some(&s) = self.dropout_stages.iter().find(|&&s| s + 1 >= self.depth) {
            return Err(ModelError::Config(format!(
                "dropout stage {s} must precede the output stage {}",
                self.depth - 1
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(ModelError::Config(format!(
                "dropout probability must lie in [0, 1), got {}",
                self.dropout_p
            )));
        }
        check_divisible(self.image_size, self.depth)
    }

    /// Encoder width at stage `i`: doubling from `base_width`, capped at eight times it.
    pub fn width(&self, stage: usize) -> usize {
        let cap = 8 * self.base_width;
        (0..stage).fold(self.base_width, |w, _| (2 * w).min(cap))
    }

    /// Names of every tappable layer, encoder first.
    pub fn layer_names(&self) -> Vec<String> {
        (0..self.depth)
            .map(|i| format!("enc{i}"))
            .chain((0..self.depth).map(|j| format!("dec{j}")))
            .collect()
    }
}

fn check_divisible(size: usize, depth: usize) -> Result<(), ModelError> {
    let factor = 1usize << depth;
    if size == 0 || !size.is_multiple_of(factor) {
        return Err(ModelError::Config(format!(
            "image extent {size} is not divisible by 2^{depth} = {factor}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct Block {
    weight: usize,
    bias: Option<usize>,
    norm: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
struct Layout {
    encoder: Vec<Block>,
    decoder: Vec<Block>,
}

/// Parameter shapes in registration order, plus the block wiring.
fn plan(spec: &GeneratorSpec) -> (Vec<(String, Vec<usize>, Init)>, Layout) {
    let mut entries = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: Init| {
        entries.push((name, shape, init));
        entries.len() - 1
    };
    let d = spec.depth;
    let mut encoder = Vec::with_capacity(d);
    for i in 0..d {
        let cin = if i == 0 {
            spec.in_channels
        } else {
            spec.width(i - 1)
        };
        let cout = spec.width(i);
        let normed = i > 0 && i + 1 < d;
        let weight = push(
            format!("enc{i}.weight"),
            vec![cout, cin, KERNEL, KERNEL],
            Init::Gaussian,
        );
        let bias = (!normed).then(|| push(format!("enc{i}.bias"), vec![cout], Init::Zero));
        let norm = normed.then(|| {
            (
                push(format!("enc{i}.norm.gamma"), vec![cout], Init::One),
                push(format!("enc{i}.norm.beta"), vec![cout], Init::Zero),
            )
        });
        encoder.push(Block { weight, bias, norm });
    }
    let mut decoder = Vec::with_capacity(d);
    for j in 0..d {
        let cin = if j == 0 {
            spec.width(d - 1)
        } else {
            2 * spec.width(d - 1 - j)
        };
        let last = j + 1 == d;
        let cout = if last {
            spec.out_channels
        } else {
            spec.width(d - 2 - j)
        };
        // Transposed-conv weights are laid out input-major.
        let weight = push(
            format!("dec{j}.weight"),
            vec![cin, cout, KERNEL, KERNEL],
            Init::Gaussian,
        );
        let bias = last.then(|| push(format!("dec{j}.bias"), vec![cout], Init::Zero));
        let norm = (!last).then(|| {
            (
                push(format!("dec{j}.norm.gamma"), vec![cout], Init::One),
                push(format!("dec{j}.norm.beta"), vec![cout], Init::Zero),
            )
        });
        decoder.push(Block { weight, bias, norm });
    }
    (entries, Layout { encoder, decoder })
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Init {
    Gaussian,
    Zero,
    One,
}

pub(crate) fn init_tensor<R: Rng + ?Sized>(shape: &[usize], init: Init, rng: &mut R) -> Tensor {
    match init {
        Init::Gaussian => init_weight(shape, rng),
        Init::Zero => Tensor::zeros(shape),
        Init::One => Tensor::ones(shape),
    }
}

pub(crate) fn verify_params(
    expected: &[(String, Vec<usize>, Init)],
    params: &ParamSet,
    model: &str,
) -> Result<(), ModelError> {
    if expected.len() != params.len() {
        return Err(ModelError::Config(format!(
            "{model} expects {} parameter tensors, found {}",
            expected.len(),
            params.len()
        )));
    }
    for ((name, shape, _), (got_name, got)) in expected.iter().zip(params.iter()) {
        if name != got_name || shape.as_slice() != got.shape() {
            return Err(ModelError::Config(format!(
                "{model} parameter mismatch: expected {name} {shape:?}, found {got_name} {:?}",
                got.shape()
            )));
        }
    }
    Ok(())
}

/// Knobs for a single generator forward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardOptions {
    /// Replace the skip connection feeding decoder stage `j + 1` with zeros.
    pub ablate_skip: Option<usize>,
}

/// U-Net generator: stride-2 encoder, mirrored transposed-conv decoder with
/// skip concatenation, `tanh` output.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    spec: GeneratorSpec,
    params: ParamSet,
}

pub fn build_generator<R: Rng + ?Sized>(
    spec: GeneratorSpec,
    rng: &mut R,
) -> Result<Generator, ModelError> {
    spec.validate()?;
    let (entries, _) = plan(&spec);
    let mut params = ParamSet::new();
    for (name, shape, init) in entries {
        params.push(name, init_tensor(&shape, init, rng));
    }
    Ok(Generator { spec, params })
}

impl Generator {
    pub fn from_params(spec: GeneratorSpec, params: ParamSet) -> Result<Self, ModelError> {
        spec.validate()?;
        let (entries, _) = plan(&spec);
        verify_params(&entries, &params, "generator")?;
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &GeneratorSpec {
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

    /// Forward pass over `input` (N×in_channels×H×W with H, W divisible by 2^depth).
    ///
    /// `tap` sees every named layer output as it is produced.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        input: Var,
        mode: &mut Mode<'_>,
        options: &ForwardOptions,
        tap: &mut dyn FnMut(&str, &Tensor),
    ) -> Result<Var, ModelError> {
        let (_, c, h, w) = tape.value(input).dims4()?;
        if c != self.spec.in_channels {
            return Err(ModelError::Config(format!(
                "generator expects {} input channels, got {c}",
                self.spec.in_channels
            )));
        }
        check_divisible(h, self.spec.depth)?;
        check_divisible(w, self.spec.depth)?;
        let (_, layout) = plan(&self.spec);
        let d = self.spec.depth;

        let mut skips = Vec::with_capacity(d);
        let mut x = input;
        for (i, block) in layout.encoder.iter().enumerate() {
            let h = if i == 0 { x } else { tape.leaky_relu(x) };
            let mut y = tape.conv2d(
                h,
                bound[block.weight],
                block.bias.map(|b| bound[b]),
                STRIDE,
                PADDING,
            )?;
            if let Some((g, b)) = block.norm {
                y = tape.instance_norm(y, bound[g], bound[b], NORM_EPS)?;
            }
            tap(&format!("enc{i}"), tape.value(y));
            skips.push(y);
            x = y;
        }

        for (j, block) in layout.decoder.iter().enumerate() {
            let h = tape.relu(x);
            let mut y = tape.conv_transpose2d(
                h,
                bound[block.weight],
                block.bias.map(|b| bound[b]),
                STRIDE,
                PADDING,
            )?;
            if j + 1 == d {
                y = tape.tanh(y);
                tap(&format!("dec{j}"), tape.value(y));
                return Ok(y);
            }
            if let Some((g, b)) = block.norm {
                y = tape.instance_norm(y, bound[g], bound[b], NORM_EPS)?;
            }
            if self.spec.dropout_stages.contains(&j) {
                if let Mode::Train(rng) = mode {
                    y = tape.dropout(y, self.spec.dropout_p, true, &mut **rng)?;
                }
            }
            tap(&format!("dec{j}"), tape.value(y));
            let mut skip = skips[d - 2 - j];
            if options.ablate_skip == Some(j) {
                skip = tape.constant(Tensor::zeros(tape.value(skip).shape()));
            }
            x = tape.concat_channels(y, skip)?;
        }
        unreachable!("decoder always ends in the output stage")
    }

    /// Evaluation-mode forward pass on a constant input, returning the output tensor.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor, ModelError> {
        self.infer_tapped(input, &mut |_, _| {})
    }

    pub fn infer_tapped(
        &self,
        input: &Tensor,
        tap: &mut dyn FnMut(&str, &Tensor),
    ) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let x = tape.constant(input.clone());
        let y = self.forward(
            &mut tape,
            &bound,
            x,
            &mut Mode::Eval,
            &ForwardOptions::default(),
            tap,
        )?;
        Ok(tape.value(y).clone())
    }
}
