#![allow(dead_code)]

use flashover_core::analytics::Band;
use flashover_core::autodiff::{grad_check, AutodiffError, GradCheckReport, Tape, Tensor, Var};
use flashover_core::models::{
    build_discriminator, build_generator, discriminator_loss, generator_loss, DiscriminatorSpec,
    ForwardOptions, GeneratorSpec, Mode, ModelError,
};
use flashover_core::rng::stream;

pub const MAX_TOL: f32 = 1e-2;
pub const MEDIAN_TOL: f32 = 1e-3;

pub struct Check {
    pub name: String,
    pub report: GradCheckReport,
}

impl Check {
    pub fn passes(&self) -> bool {
        self.report.max_rel_error() <= MAX_TOL && self.report.median_rel_error() <= MEDIAN_TOL
    }
}

/// First element whose disagreement exceeds `1e-2` relative plus an absolute
/// floor of `floor · max|g|`, the scale of f32 rounding in the probes.
pub fn outside_noise_floor(check: &Check, floor: f32) -> Option<(usize, f32, f32)> {
    let r = &check.report;
    let gmax = r
        .analytic
        .iter()
        .chain(&r.numeric)
        .fold(0f32, |m, v| m.max(v.abs()));
    (0..r.rel_errors.len())
        .filter(|&i| !r.straddles_kink[i])
        .find(|&i| {
            let (a, n) = (r.analytic[i], r.numeric[i]);
            (a - n).abs() > MAX_TOL * a.abs().max(n.abs()) + floor * gmax
        })
        .map(|i| (i, r.analytic[i], r.numeric[i]))
}

/// Max, median, kink count and element count pooled over several checks.
///
/// Elements where both gradients are exactly zero (dead relu paths) carry no
/// information and are left out, so they cannot pull the median down.
pub fn pooled(checks: &[Check]) -> (f32, f32, usize, usize) {
    let mut all: Vec<f32> = checks
        .iter()
        .flat_map(|c| {
            let r = &c.report;
            (0..r.rel_errors.len())
                .filter(|&i| !r.straddles_kink[i] && (r.analytic[i] != 0.0 || r.numeric[i] != 0.0))
                .map(|i| r.rel_errors[i])
        })
        .collect();
    all.sort_by(f32::total_cmp);
    let max = all.last().copied().unwrap_or(0.0);
    let median = if all.is_empty() {
        0.0
    } else {
        all[all.len() / 2]
    };
    let kinks = checks.iter().map(|c| c.report.kink_count()).sum();
    (max, median, kinks, all.len())
}

fn model_err(e: ModelError) -> AutodiffError {
    match e {
        ModelError::Autodiff(a) => a,
        other => AutodiffError::Config(other.to_string()),
    }
}

fn rand(shape: &[usize], seed: u64, label: &str) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, &mut stream(seed, label))
}

/// `sum(out · r)` for a fixed random `r`, so every output element matters.
fn project(tape: &mut Tape, out: Var, seed: u64) -> Result<Var, AutodiffError> {
    let shape = tape.value(out).shape().to_vec();
    let r = tape.constant(rand(&shape, seed, "projection"));
    let p = tape.mul(out, r)?;
    Ok(tape.sum(p))
}

fn check(
    checks: &mut Vec<Check>,
    name: &str,
    input: &Tensor,
    f: impl Fn(&mut Tape, Var) -> Result<Var, AutodiffError>,
) {
    let report = grad_check(f, input).unwrap_or_else(|e| panic!("{name}: {e}"));
    checks.push(Check {
        name: name.to_string(),
        report,
    });
}

/// One check per layer type and per differentiable argument.
pub fn layer_checks(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    // Activations and weights at the scale they have inside a freshly built
    // model. Keeping layer outputs small keeps their f32 rounding, which is
    // what limits a central difference, well below the gradients.
    let x = rand(&[1, 3, 8, 8], seed, "x");
    let xs = x.map(|v| 0.1 * v);
    let w = rand(&[4, 3, 4, 4], seed, "w").map(|v| 0.05 * v);
    let b = rand(&[4], seed, "b").map(|v| 0.01 * v);
    let w3 = rand(&[4, 3, 3, 3], seed, "w3").map(|v| 0.05 * v);
    let xt = rand(&[1, 4, 4, 4], seed, "xt").map(|v| 0.1 * v);
    let wt = rand(&[4, 3, 4, 4], seed, "wt").map(|v| 0.05 * v);
    let bt = rand(&[3], seed, "bt").map(|v| 0.01 * v);

    for (stride, padding, weight, tag) in [(2, 1, &w, "k4s2"), (1, 1, &w3, "k3s1")] {
        check(&mut out, &format!("conv2d[{tag}]/input"), &xs, |t, v| {
            let (wv, bv) = (t.constant(weight.clone()), t.constant(b.clone()));
            let y = t.conv2d(v, wv, Some(bv), stride, padding)?;
            project(t, y, seed)
        });
        check(
            &mut out,
            &format!("conv2d[{tag}]/weight"),
            weight,
            |t, v| {
                let (xv, bv) = (t.constant(xs.clone()), t.constant(b.clone()));
                let y = t.conv2d(xv, v, Some(bv), stride, padding)?;
                project(t, y, seed)
            },
        );
        check(&mut out, &format!("conv2d[{tag}]/bias"), &b, |t, v| {
            let (xv, wv) = (t.constant(xs.clone()), t.constant(weight.clone()));
            let y = t.conv2d(xv, wv, Some(v), stride, padding)?;
            project(t, y, seed)
        });
    }
    check(&mut out, "conv_transpose2d/input", &xt, |t, v| {
        let (wv, bv) = (t.constant(wt.clone()), t.constant(bt.clone()));
        let y = t.conv_transpose2d(v, wv, Some(bv), 2, 1)?;
        project(t, y, seed)
    });
    check(&mut out, "conv_transpose2d/weight", &wt, |t, v| {
        let (xv, bv) = (t.constant(xt.clone()), t.constant(bt.clone()));
        let y = t.conv_transpose2d(xv, v, Some(bv), 2, 1)?;
        project(t, y, seed)
    });
    check(&mut out, "conv_transpose2d/bias", &bt, |t, v| {
        let (xv, wv) = (t.constant(xt.clone()), t.constant(wt.clone()));
        let y = t.conv_transpose2d(xv, wv, Some(v), 2, 1)?;
        project(t, y, seed)
    });

    let gamma = rand(&[3], seed, "gamma").map(|v| 1.0 + 0.5 * v);
    let beta = rand(&[3], seed, "beta");
    check(&mut out, "instance_norm/input", &xs, |t, v| {
        let (g, bb) = (t.constant(gamma.clone()), t.constant(beta.clone()));
        let y = t.instance_norm(v, g, bb, 1e-5)?;
        project(t, y, seed)
    });
    check(&mut out, "instance_norm/gamma", &gamma, |t, v| {
        let (xv, bb) = (t.constant(xs.clone()), t.constant(beta.clone()));
        let y = t.instance_norm(xv, v, bb, 1e-5)?;
        project(t, y, seed)
    });
    check(&mut out, "instance_norm/beta", &beta, |t, v| {
        let (xv, g) = (t.constant(xs.clone()), t.constant(gamma.clone()));
        let y = t.instance_norm(xv, g, v, 1e-5)?;
        project(t, y, seed)
    });

    check(&mut out, "leaky_relu", &x, |t, v| {
        let y = t.leaky_relu(v);
        project(t, y, seed)
    });
    check(&mut out, "relu", &x, |t, v| {
        let y = t.relu(v);
        project(t, y, seed)
    });
    check(&mut out, "tanh", &x, |t, v| {
        let y = t.tanh(v);
        project(t, y, seed)
    });
    check(&mut out, "sigmoid", &x, |t, v| {
        let y = t.sigmoid(v);
        project(t, y, seed)
    });

    let other = rand(&[1, 2, 8, 8], seed, "other");
    check(&mut out, "concat_channels/first", &x, |t, v| {
        let o = t.constant(other.clone());
        let y = t.concat_channels(v, o)?;
        project(t, y, seed)
    });
    check(&mut out, "concat_channels/second", &other, |t, v| {
        let xv = t.constant(x.clone());
        let y = t.concat_channels(xv, v)?;
        project(t, y, seed)
    });
    check(&mut out, "dropout", &x, |t, v| {
        let mut rng = stream(seed, "dropout-mask");
        let y = t.dropout(v, 0.5, true, &mut rng)?;
        project(t, y, seed)
    });

    let target = rand(&[1, 3, 8, 8], seed, "target");
    check(&mut out, "bce_with_logits/real", &x, |t, v| {
        Ok(t.bce_with_logits(v, 1.0))
    });
    check(&mut out, "bce_with_logits/fake", &x, |t, v| {
        Ok(t.bce_with_logits(v, 0.0))
    });
    check(&mut out, "l1_loss", &x, |t, v| {
        let r = t.constant(target.clone());
        t.l1_loss(v, r)
    });
    check(&mut out, "add", &x, |t, v| {
        let r = t.constant(target.clone());
        let y = t.add(v, r)?;
        project(t, y, seed)
    });
    check(&mut out, "mul", &x, |t, v| {
        let r = t.constant(target.clone());
        let y = t.mul(v, r)?;
        project(t, y, seed)
    });
    check(&mut out, "scale", &x, |t, v| {
        let y = t.scale(v, -2.5);
        project(t, y, seed)
    });
    check(&mut out, "mean", &x, |t, v| {
        let y = t.tanh(v);
        Ok(t.mean(y))
    });
    out
}

/// Full objectives on 8×8 frames with the production layer wiring.
///
/// Generator: total loss w.r.t. the visual input and every generator tensor.
/// Discriminator: loss w.r.t. the real thermal frame and every discriminator tensor.
pub fn full_loss_checks(seed: u64) -> Vec<Check> {
    let gspec = GeneratorSpec {
        base_width: 4,
        depth: 3,
        dropout_stages: vec![0],
        image_size: 8,
        ..GeneratorSpec::default()
    };
    let dspec = DiscriminatorSpec {
        base_width: 4,
        n_layers: 1,
        image_size: 8,
        ..DiscriminatorSpec::default()
    };
    let g = build_generator(gspec, &mut stream(seed, "g")).unwrap();
    let d = build_discriminator(dspec, &mut stream(seed, "d")).unwrap();
    let visual = rand(&[1, 3, 8, 8], seed, "visual");
    let thermal = rand(&[1, 3, 8, 8], seed, "thermal");
    let fake = rand(&[1, 3, 8, 8], seed, "fake").map(|v| 0.9 * v);

    let g_loss = |t: &mut Tape, gb: &[Var], v: Var| -> Result<Var, AutodiffError> {
        let real = t.constant(thermal.clone());
        let mut rng = stream(seed, "dropout");
        let out = g
            .forward(
                t,
                gb,
                v,
                &mut Mode::Train(&mut rng),
                &ForwardOptions::default(),
                &mut |_, _| {},
            )
            .map_err(model_err)?;
        let db = d.bind(t, false);
        let logits = d.forward(t, &db, v, out).map_err(model_err)?;
        Ok(generator_loss(t, logits, out, real, 100.0)
            .map_err(model_err)?
            .total)
    };
    let d_loss = |t: &mut Tape, db: &[Var], real: Var| -> Result<Var, AutodiffError> {
        let v = t.constant(visual.clone());
        let f = t.constant(fake.clone());
        let lr = d.forward(t, db, v, real).map_err(model_err)?;
        let lf = d.forward(t, db, v, f).map_err(model_err)?;
        discriminator_loss(t, lr, lf).map_err(model_err)
    };

    let mut out = Vec::new();
    check(&mut out, "G/input", &visual, |t, v| {
        let gb = g.bind(t, false);
        g_loss(t, &gb, v)
    });
    for k in 0..g.params().len() {
        let name = format!("G/{}", g.params().names()[k]);
        check(&mut out, &name, &g.params().tensors()[k], |t, p| {
            let mut gb = g.bind(t, false);
            gb[k] = p;
            let v = t.constant(visual.clone());
            g_loss(t, &gb, v)
        });
    }
    check(&mut out, "D/input", &thermal, |t, r| {
        let db = d.bind(t, false);
        d_loss(t, &db, r)
    });
    for k in 0..d.params().len() {
        let name = format!("D/{}", d.params().names()[k]);
        check(&mut out, &name, &d.params().tensors()[k], |t, p| {
            let mut db = d.bind(t, false);
            db[k] = p;
            let r = t.constant(thermal.clone());
            d_loss(t, &db, r)
        });
    }
    out
}

/// Minimum squared distance to the palette, ties resolved hottest first,
/// background below a brightest channel of 32.
pub fn band_oracle(rgb: [u8; 3]) -> Option<Band> {
    if rgb.iter().all(|&c| c < 32) {
        return None;
    }
    let anchors = [
        (Band::Red, [255.0, 0.0, 0.0]),
        (Band::Yellow, [255.0, 255.0, 0.0]),
        (Band::Green, [0.0, 255.0, 0.0]),
        (Band::Blue, [0.0, 0.0, 255.0]),
    ];
    let dist = |a: &[f64; 3]| -> f64 { (0..3).map(|i| (rgb[i] as f64 - a[i]).powi(2)).sum() };
    let best = anchors
        .iter()
        .map(|(_, a)| dist(a))
        .fold(f64::INFINITY, f64::min);
    anchors
        .iter()
        .find(|(_, a)| dist(a) == best)
        .map(|(b, _)| *b)
}
