//! Central finite-difference checks of the differentiable operations and
//! of whole-network parameter gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{ConvSpec, Graph, Var};
use crate::model::{ModelConfig, RrModel};
use crate::params::ParamKind;
use crate::tensor::Tensor;

/// Finite-difference step.
pub const STEP: f64 = 1e-5;

/// Relative error with a floor on the denominator so that gradients near
/// zero are compared absolutely.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor { shape: shape.to_vec(), data: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() }
}

/// Worst relative error between the analytic gradient of
/// `sum(r * f(inputs))`, for a seeded random `r`, and central differences,
/// over every input coordinate for which `skip(input, value)` is false.
pub fn check_op<F, S>(inputs: &[Tensor], f: F, seed: u64, skip: S) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
    S: Fn(usize, f64) -> bool,
{
    let run = |inputs: &[Tensor]| -> Result<(Graph, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars = inputs.iter().map(|t| g.variable(t.clone())).collect::<Result<Vec<_>>>()?;
        let out = f(&mut g, &vars)?;
        Ok((g, vars, out))
    };
    let (mut g, vars, out) = run(inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let r: Vec<f64> = (0..g.value(out).len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let objective = |inputs: &[Tensor]| -> Result<f64> {
        let (g, _, out) = run(inputs)?;
        Ok(g.value(out).data.iter().zip(&r).map(|(y, r)| y * r).sum())
    };
    g.backward_from(out, r.clone())?;
    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let analytic = g.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        for i in 0..inputs[k].len() {
            if skip(k, inputs[k].data[i]) {
                continue;
            }
            let mut plus = inputs.to_vec();
            plus[k].data[i] += STEP;
            let mut minus = inputs.to_vec();
            minus[k].data[i] -= STEP;
            let numeric = (objective(&plus)? - objective(&minus)?) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic[i], numeric));
        }
    }
    Ok(worst)
}

/// Worst relative error of the trainable-parameter gradients of the
/// SmoothL1 loss of a freshly built network on a random batch of three.
pub fn check_network(cfg: &ModelConfig, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = RrModel::build(cfg, seed)?;
    let x = random_tensor(&[3, cfg.input_channels, cfg.input_length], &mut rng);
    let targets: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
    let loss_of = |m: &RrModel| -> Result<(f64, RrModel)> {
        let mut m = m.clone();
        let mut g = Graph::new();
        let xv = g.input(x.clone())?;
        let y = m.forward(&mut g, xv, true)?;
        let l = g.smooth_l1(y, &targets)?;
        let value = g.value(l).data[0];
        g.backward(l)?;
        m.store.zero_grads();
        g.accumulate_param_grads(&mut m.store);
        Ok((value, m))
    };
    let (_, graded) = loss_of(&base)?;
    let ids: Vec<_> = base.store.iter().filter(|(_, p)| p.kind == ParamKind::Trainable).map(|(id, _)| id).collect();
    let mut worst: f64 = 0.0;
    for id in ids {
        for i in 0..base.store.get(id).value.len() {
            let mut plus = base.clone();
            plus.store.get_mut(id).value.data[i] += STEP;
            let mut minus = base.clone();
            minus.store.get_mut(id).value.data[i] -= STEP;
            let numeric = (loss_of(&plus)?.0 - loss_of(&minus)?.0) / (2.0 * STEP);
            worst = worst.max(rel_err(graded.store.get(id).grad[i], numeric));
        }
    }
    Ok(worst)
}

/// Result of one operation check at one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct OpCheck {
    pub op: String,
    pub seed: u64,
    pub worst: f64,
}

fn no_skip(_: usize, _: f64) -> bool {
    false
}

/// Every differentiable operation, plus a small whole network, at one seed.
pub fn op_suite(seed: u64) -> Result<Vec<OpCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut push = |op: String, worst: f64| out.push(OpCheck { op, seed, worst });

    for spec in [ConvSpec::new(1, 1, 1), ConvSpec::new(2, 1, 1), ConvSpec::new(1, 2, 2), ConvSpec::new(2, 3, 0)] {
        let inputs = [random_tensor(&[2, 3, 16], &mut rng), random_tensor(&[4, 3, 3], &mut rng), random_tensor(&[4], &mut rng)];
        let worst = check_op(&inputs, |g, v| g.conv1d(v[0], v[1], Some(v[2]), spec), seed, no_skip)?;
        push(format!("conv1d stride {} dilation {} padding {}", spec.stride, spec.dilation, spec.padding), worst);
    }

    let inputs = [random_tensor(&[3, 2, 7], &mut rng), random_tensor(&[2], &mut rng), random_tensor(&[2], &mut rng)];
    for train in [true, false] {
        let worst = check_op(
            &inputs,
            |g, v| {
                let (mut m, mut s) = (vec![0.1, -0.2], vec![0.5, 2.0]);
                g.batch_norm(v[0], v[1], v[2], &mut m, &mut s, train)
            },
            seed,
            no_skip,
        )?;
        push(format!("batch_norm {}", if train { "train" } else { "eval" }), worst);
    }

    // The kink at zero has no derivative; skip coordinates within reach of it.
    let x = [random_tensor(&[2, 3, 20], &mut rng)];
    push("leaky_relu".into(), check_op(&x, |g, v| g.leaky_relu(v[0], 0.2), seed, |_, x| x.abs() < 1e-3)?);

    let inputs = [random_tensor(&[4, 6], &mut rng), random_tensor(&[3, 6], &mut rng), random_tensor(&[3], &mut rng)];
    push("dense".into(), check_op(&inputs, |g, v| g.dense(v[0], v[1], v[2]), seed, no_skip)?);

    let inputs = [random_tensor(&[2, 2, 5], &mut rng), random_tensor(&[2, 3, 5], &mut rng), random_tensor(&[2, 5, 5], &mut rng)];
    let worst = check_op(
        &inputs,
        |g, v| {
            let c = g.concat(&[v[0], v[1]])?;
            let s = g.add(c, v[2])?;
            g.global_avg_pool(s)
        },
        seed,
        no_skip,
    )?;
    push("concat + add + global_avg_pool".into(), worst);

    // Residuals are kept away from the |d| = 1 switch between branches.
    let mut targets = Vec::new();
    let mut pred = Vec::new();
    while targets.len() < 8 {
        let (t, p): (f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0));
        if ((t - p).abs() - 1.0).abs() > 1e-3 {
            targets.push(t);
            pred.push(p);
        }
    }
    let pred = [Tensor { shape: vec![8, 1], data: pred }];
    push("smooth_l1".into(), check_op(&pred, |g, v| g.smooth_l1(v[0], &targets), seed, no_skip)?);

    let cfg = ModelConfig { input_length: 16, input_channels: 3, stem_filters: 2, max_filters: 4, head_hidden: 5, ..ModelConfig::default() };
    push("network parameters".into(), check_network(&cfg, seed)?);
    Ok(out)
}
