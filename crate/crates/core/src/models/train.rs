use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    build_discriminator, build_generator, discriminator_loss, generator_loss, image_to_tensor,
    tensor_to_image, Checkpoint, Discriminator, DiscriminatorSpec, ForwardOptions, Generator,
    GeneratorSpec, Mode, ModelError, TrainingMeta,
};
use crate::autodiff::{adam_step, AdamConfig, AdamState, Gradients, Tape, Tensor, Var};
use crate::image::Image;
use crate::rng::stream;
use crate::sim::PairedFrame;

/// Hyperparameters of one training session. Batch size is always 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub lambda_l1: f32,
    pub seed: u64,
    pub image_size: usize,
    pub base_width: usize,
    pub depth: usize,
    pub disc_layers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            lambda_l1: 100.0,
            seed: 0,
            image_size: 64,
            base_width: 16,
            depth: 6,
            disc_layers: 3,
        }
    }
}

impl TrainConfig {
    pub fn generator_spec(&self) -> GeneratorSpec {
        GeneratorSpec {
            base_width: self.base_width,
            depth: self.depth,
            image_size: self.image_size,
            ..GeneratorSpec::default()
        }
    }

    pub fn discriminator_spec(&self) -> DiscriminatorSpec {
        DiscriminatorSpec {
            base_width: self.base_width,
            n_layers: self.disc_layers,
            image_size: self.image_size,
            ..DiscriminatorSpec::default()
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.lambda_l1 < 0.0 || !self.lambda_l1.is_finite() {
            return Err(ModelError::Config(format!(
                "lambda_l1 must be a finite non-negative number, got {}",
                self.lambda_l1
            )));
        }
        if !(self.lr > 0.0) {
            return Err(ModelError::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        self.generator_spec().validate()?;
        self.discriminator_spec().validate()
    }
}

/// Mean losses over one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_adversarial: f64,
    pub g_l1: f64,
    /// Mean L1 of the evaluation-mode generator on the held-out pairs.
    pub heldout_l1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Held-out L1 of the freshly initialised generator.
    pub initial_heldout_l1: Option<f64>,
    pub history: Vec<EpochStats>,
}

struct Sample {
    visual: Tensor,
    thermal: Tensor,
}

fn prepare(frames: &[PairedFrame], size: usize) -> Result<Vec<Sample>, ModelError> {
    frames
        .iter()
        .map(|f| {
            for img in [&f.visual, &f.thermal] {
                check_size(img, size)?;
            }
            Ok(Sample {
                visual: image_to_tensor(&f.visual),
                thermal: image_to_tensor(&f.thermal),
            })
        })
        .collect()
}

fn check_size(img: &Image, size: usize) -> Result<(), ModelError> {
    if img.width() != size || img.height() != size {
        return Err(ModelError::SizeMismatch {
            expected: size,
            found_w: img.width(),
            found_h: img.height(),
        });
    }
    Ok(())
}

fn apply_adam(
    params: &mut [Tensor],
    bound: &[Var],
    grads: &mut Gradients,
    states: &mut [AdamState],
) -> Result<(), ModelError> {
    for ((param, &var), state) in params.iter_mut().zip(bound).zip(states.iter_mut()) {
        if let Some(g) = grads.take(var) {
            adam_step(param, &g, state)?;
        }
    }
    Ok(())
}

/// Mean L1 (in normalised units) between the evaluation-mode generator output
/// and the thermal target over `frames`.
pub fn heldout_l1(generator: &Generator, frames: &[PairedFrame]) -> Result<f64, ModelError> {
    let size = generator.spec().image_size;
    let samples = prepare(frames, size)?;
    if samples.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut total = 0.0;
    for s in &samples {
        let out = generator.infer(&s.visual)?;
        total += out
            .data()
            .iter()
            .zip(s.thermal.data())
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>()
            / out.numel() as f64;
    }
    Ok(total / samples.len() as f64)
}

fn finite(value: f64, what: &'static str, epoch: usize, step: usize) -> Result<f64, ModelError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::Diverged {
            epoch,
            step,
            what,
            value,
        })
    }
}

/// Alternating discriminator/generator updates, one of each per sample.
///
/// `progress` is called after every epoch.
pub fn train(
    train_set: &[PairedFrame],
    holdout: &[PairedFrame],
    config: &TrainConfig,
    progress: &mut dyn FnMut(&EpochStats),
) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let samples = prepare(train_set, config.image_size)?;

    let mut generator = build_generator(
        config.generator_spec(),
        &mut stream(config.seed, "generator-init"),
    )?;
    let mut discriminator = build_discriminator(
        config.discriminator_spec(),
        &mut stream(config.seed, "discriminator-init"),
    )?;
    let mut dropout_rng = stream(config.seed, "dropout");
    let mut shuffle_rng = stream(config.seed, "shuffle");

    let adam = config.adam();
    let mut g_states: Vec<AdamState> = generator
        .params()
        .tensors()
        .iter()
        .map(|t| AdamState::for_param(t, adam))
        .collect();
    let mut d_states: Vec<AdamState> = discriminator
        .params()
        .tensors()
        .iter()
        .map(|t| AdamState::for_param(t, adam))
        .collect();

    let initial_heldout_l1 = if holdout.is_empty() {
        None
    } else {
        Some(heldout_l1(&generator, holdout)?)
    };

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut d_sum, mut adv_sum, mut l1_sum) = (0.0, 0.0, 0.0);
        for (step, &idx) in order.iter().enumerate() {
            let (d_loss, adv, l1) = train_step(
                &mut generator,
                &mut discriminator,
                &mut g_states,
                &mut d_states,
                &samples[idx],
                config.lambda_l1,
                &mut dropout_rng,
            )?;
            d_sum += finite(d_loss, "discriminator loss", epoch, step)?;
            adv_sum += finite(adv, "generator adversarial loss", epoch, step)?;
            l1_sum += finite(l1, "generator L1 loss", epoch, step)?;
        }
        let n = samples.len() as f64;
        let stats = EpochStats {
            epoch,
            d_loss: d_sum / n,
            g_adversarial: adv_sum / n,
            g_l1: l1_sum / n,
            heldout_l1: if holdout.is_empty() {
                None
            } else {
                Some(heldout_l1(&generator, holdout)?)
            },
        };
        progress(&stats);
        history.push(stats);
    }

    let last = history.last();
    let meta = TrainingMeta {
        epochs: config.epochs,
        seed: config.seed,
        lr: config.lr,
        beta1: config.beta1,
        lambda_l1: config.lambda_l1,
        train_pairs: samples.len(),
        final_d_loss: last.map(|s| s.d_loss),
        final_g_adversarial: last.map(|s| s.g_adversarial),
        final_g_l1: last.map(|s| s.g_l1),
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            generator,
            discriminator,
            meta,
        },
        initial_heldout_l1,
        history,
    })
}

fn train_step(
    generator: &mut Generator,
    discriminator: &mut Discriminator,
    g_states: &mut [AdamState],
    d_states: &mut [AdamState],
    sample: &Sample,
    lambda_l1: f32,
    dropout_rng: &mut crate::rng::StreamRng,
) -> Result<(f64, f64, f64), ModelError> {
    let mut g_tape = Tape::new();
    let g_bound = generator.bind(&mut g_tape, true);
    let visual = g_tape.constant(sample.visual.clone());
    let fake = generator.forward(
        &mut g_tape,
        &g_bound,
        visual,
        &mut Mode::Train(dropout_rng),
        &ForwardOptions::default(),
        &mut |_, _| {},
    )?;

    // Discriminator update on the detached fake.
    let d_loss = {
        let mut tape = Tape::new();
        let bound = discriminator.bind(&mut tape, true);
        let v = tape.constant(sample.visual.clone());
        let real = tape.constant(sample.thermal.clone());
        let fk = tape.constant(g_tape.value(fake).clone());
        let d_real = discriminator.forward(&mut tape, &bound, v, real)?;
        let d_fake = discriminator.forward(&mut tape, &bound, v, fk)?;
        let loss = discriminator_loss(&mut tape, d_real, d_fake)?;
        let mut grads = tape.backward(loss)?;
        apply_adam(
            discriminator.params_mut().tensors_mut(),
            &bound,
            &mut grads,
            d_states,
        )?;
        tape.scalar(loss)
    };

    // Generator update against the freshly updated, frozen discriminator.
    let d_bound = discriminator.bind(&mut g_tape, false);
    let real = g_tape.constant(sample.thermal.clone());
    let d_fake = discriminator.forward(&mut g_tape, &d_bound, visual, fake)?;
    let loss = generator_loss(&mut g_tape, d_fake, fake, real, lambda_l1)?;
    let mut grads = g_tape.backward(loss.total)?;
    apply_adam(
        generator.params_mut().tensors_mut(),
        &g_bound,
        &mut grads,
        g_states,
    )?;
    Ok((
        d_loss,
        g_tape.scalar(loss.adversarial),
        g_tape.scalar(loss.l1),
    ))
}

/// Translate one visual frame into a thermal-palette frame with dropout disabled.
pub fn enhance(generator: &Generator, visual: &Image) -> Result<Image, ModelError> {
    check_size(visual, generator.spec().image_size)?;
    let out = generator.infer(&image_to_tensor(visual))?;
    tensor_to_image(&out)
}
