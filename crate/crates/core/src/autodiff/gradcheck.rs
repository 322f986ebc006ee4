use super::{AutodiffError, Tape, Tensor, Var};

/// Finite-difference step used by [`grad_check`].
pub const FD_STEP: f32 = 1e-3;

/// Elementwise comparison of analytic and numeric gradients.
///
/// Elements whose `±h` probes land on a different side of a relu or L1 kink
/// than the base point are flagged in `straddles_kink`; a central difference
/// there does not estimate the derivative, so they are left out of the
/// summary statistics.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub analytic: Vec<f32>,
    pub numeric: Vec<f32>,
    pub rel_errors: Vec<f32>,
    pub straddles_kink: Vec<bool>,
}

impl GradCheckReport {
    /// Relative errors of the elements that stay on one smooth piece.
    pub fn checked_errors(&self) -> Vec<f32> {
        self.rel_errors
            .iter()
            .zip(&self.straddles_kink)
            .filter(|(_, &k)| !k)
            .map(|(&e, _)| e)
            .collect()
    }

    pub fn kink_count(&self) -> usize {
        self.straddles_kink.iter().filter(|&&k| k).count()
    }

    pub fn max_rel_error(&self) -> f32 {
        self.checked_errors().into_iter().fold(0.0, f32::max)
    }

    pub fn median_rel_error(&self) -> f32 {
        let mut v = self.checked_errors();
        v.sort_by(f32::total_cmp);
        if v.is_empty() {
            return 0.0;
        }
        let mid = v.len() / 2;
        if v.len().is_multiple_of(2) {
            0.5 * (v[mid - 1] + v[mid])
        } else {
            v[mid]
        }
    }
}

pub fn relative_error(a: f32, b: f32) -> f32 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compare the tape gradient of `f` at `input` with central differences.
///
/// `f` builds a scalar on the given tape from the registered input. It must be
/// a pure function of the input value.
pub fn grad_check<F>(f: F, input: &Tensor) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, AutodiffError>,
{
    let mut tape = Tape::new();
    let x = tape.param(input.clone());
    let loss = f(&mut tape, x)?;
    let base_pattern = tape.kink_pattern();
    let mut grads = tape.backward(loss)?;
    let analytic = grads
        .take(x)
        .unwrap_or_else(|| Tensor::zeros(input.shape()))
        .into_data();

    let eval = |point: Tensor| -> Result<(f64, bool), AutodiffError> {
        let mut tape = Tape::new();
        let x = tape.constant(point);
        let loss = f(&mut tape, x)?;
        let value = tape.value(loss);
        if !value.is_scalar() {
            return Err(AutodiffError::NotScalar {
                shape: value.shape().to_vec(),
            });
        }
        Ok((tape.scalar(loss), tape.kink_pattern() != base_pattern))
    };

    let mut numeric = Vec::with_capacity(input.numel());
    let mut straddles_kink = Vec::with_capacity(input.numel());
    for i in 0..input.numel() {
        let base = input.data()[i];
        let mut plus = input.clone();
        plus.data_mut()[i] = base + FD_STEP;
        let mut minus = input.clone();
        minus.data_mut()[i] = base - FD_STEP;
        // Divide by the step actually representable in f32.
        let span = (base + FD_STEP) - (base - FD_STEP);
        let (hi, kink_hi) = eval(plus)?;
        let (lo, kink_lo) = eval(minus)?;
        numeric.push(((hi - lo) / span as f64) as f32);
        straddles_kink.push(kink_hi || kink_lo);
    }
    let rel_errors = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .collect();
    Ok(GradCheckReport {
        analytic,
        numeric,
        rel_errors,
        straddles_kink,
    })
}
