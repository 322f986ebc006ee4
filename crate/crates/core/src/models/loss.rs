use crate::autodiff::{Tape, Var};

use super::ModelError;

/// Generator objective and its two terms, all on the tape.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorLoss {
    pub total: Var,
    pub adversarial: Var,
    pub l1: Var,
}

/// `bce(d_fake, 1) + lambda_l1 · mean|fake − real|`.
pub fn generator_loss(
    tape: &mut Tape,
    d_fake_logits: Var,
    fake: Var,
    real: Var,
    lambda_l1: f32,
) -> Result<GeneratorLoss, ModelError> {
    let adversarial = tape.bce_with_logits(d_fake_logits, 1.0);
    let l1 = tape.l1_loss(fake, real)?;
    let weighted = tape.scale(l1, lambda_l1);
    let total = tape.add(adversarial, weighted)?;
    Ok(GeneratorLoss {
        total,
        adversarial,
        l1,
    })
}

/// `0.5 · [bce(d_real, 1) + bce(d_fake, 0)]`.
pub fn discriminator_loss(
    tape: &mut Tape,
    d_real_logits: Var,
    d_fake_logits: Var,
) -> Result<Var, ModelError> {
    let real = tape.bce_with_logits(d_real_logits, 1.0);
    let fake = tape.bce_with_logits(d_fake_logits, 0.0);
    let sum = tape.add(real, fake)?;
    Ok(tape.scale(sum, 0.5))
}
