//! Finite-difference verification of the full generator and critic graphs
//! at reduced widths, 64-bit precision.
//!
//! The losses are the real training objectives: the REINFORCE weighted-NLL
//! surrogate for the generator and the Wasserstein critic loss for the
//! critic. Forward passes run in frozen mode so repeated evaluation is pure.

use dataflow::{make_windows, synth_market, SynthConfig};
use gan::layers::init_rng;
use gan::losses::{critic_loss_node, nll_node, weighted_nll_loss, LossVariant, SampledFields};
use gan::nets::{
    hist_tensor, order_feats_tensor, quotes_tensor, seeds_tensor, CriticNet, GeneratorNet,
    NetWidths,
};
use gan::Seed;
use numcore::gradcheck::{central_diff_grad, rel_err};
use numcore::graph::{Graph, Mode};
use numcore::rng::derive_rng;
use numcore::{ParamStore, Real};
use orderdomain::{Condition, Order};

const TOL: f64 = 1e-3;
const FLOOR: f64 = 1e-6;

fn fixture() -> Vec<(Condition, Order)> {
    let mut config = SynthConfig::default();
    config.n_orders = 60;
    config.seed = 21;
    let (stream, _) = synth_market(&config).unwrap();
    make_windows(&stream).unwrap()
}

fn flatten_params<F: Real>(store: &ParamStore<F>) -> Vec<F> {
    let mut out = Vec::with_capacity(store.numel());
    for (_, t) in store.iter() {
        out.extend_from_slice(t.data());
    }
    out
}

fn set_params<F: Real>(store: &mut ParamStore<F>, flat: &[F]) {
    let mut pos = 0;
    let names: Vec<String> = store.names().map(|s| s.to_string()).collect();
    for name in names {
        let t = store.get_mut(&name).unwrap();
        let n = t.len();
        t.data_mut().copy_from_slice(&flat[pos..pos + n]);
        pos += n;
    }
    assert_eq!(pos, flat.len());
}

fn grads_flat<F: Real>(
    store: &ParamStore<F>,
    named: &std::collections::BTreeMap<String, numcore::Tensor<F>>,
) -> Vec<F> {
    let mut out = Vec::with_capacity(store.numel());
    for (name, t) in store.iter() {
        match named.get(name) {
            Some(g) => out.extend_from_slice(g.data()),
            None => out.extend(std::iter::repeat(F::zero()).take(t.len())),
        }
    }
    out
}

fn report_worst(analytic: &[f64], numeric: &[f64]) -> (f64, usize) {
    let mut worst = (0.0, 0usize);
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let e = rel_err(a, n, FLOOR);
        if e > worst.0 {
            worst = (e, i);
        }
    }
    worst
}

#[test]
fn full_generator_graph_matches_finite_differences() {
    let windows = fixture();
    let conds: Vec<&Condition> = windows.iter().take(2).map(|(c, _)| c).collect();
    let mut zrng = derive_rng(31, "gc.full.z");
    let seeds: Vec<Seed<f64>> = conds.iter().map(|_| Seed::sample(&mut zrng)).collect();
    // fixed sampled fields and reward weights
    let fields: Vec<SampledFields> = vec![(1, 0, 0, 3, 7), (0, 1, 1, 12, 0)];
    let weights = [0.8, -0.6];

    let mut gen = GeneratorNet::<f64>::new(NetWidths::tiny(), "g", &mut init_rng(17, "g")).unwrap();

    let loss_of = |gen: &mut GeneratorNet<f64>| -> f64 {
        let mut g = Graph::new();
        let hist = g.constant(hist_tensor(&conds));
        let quotes = g.constant(quotes_tensor(&conds));
        let z = g.constant(seeds_tensor(&seeds));
        let fwd = gen.forward_graph(&mut g, hist, quotes, z, Mode::Frozen, false).unwrap();
        let nll = nll_node(&mut g, &fwd.heads, &fields).unwrap();
        let loss = weighted_nll_loss(&mut g, nll, &weights).unwrap();
        g.value(loss).item()
    };

    // analytic
    let analytic = {
        let mut g = Graph::new();
        let hist = g.constant(hist_tensor(&conds));
        let quotes = g.constant(quotes_tensor(&conds));
        let z = g.constant(seeds_tensor(&seeds));
        let fwd = gen.forward_graph(&mut g, hist, quotes, z, Mode::Frozen, true).unwrap();
        let nll = nll_node(&mut g, &fwd.heads, &fields).unwrap();
        let loss = weighted_nll_loss(&mut g, nll, &weights).unwrap();
        let grads = g.backward(loss).unwrap();
        let named = fwd.binds.grads_by_name(&grads);
        grads_flat(&gen.params, &named)
    };

    let x0 = flatten_params(&gen.params);
    let numeric = central_diff_grad(&x0, |point| {
        set_params(&mut gen.params, point);
        loss_of(&mut gen)
    });
    set_params(&mut gen.params, &x0);

    let a64: Vec<f64> = analytic.clone();
    let (worst, at) = report_worst(&a64, &numeric);
    assert!(
        worst < TOL,
        "generator: worst rel err {worst:.3e} at param {at} ({} params)",
        x0.len()
    );
}

#[test]
fn full_critic_graph_matches_finite_differences() {
    let windows = fixture();
    let conds: Vec<&Condition> = windows.iter().take(2).map(|(c, _)| c).collect();
    let reals: Vec<Order> = windows.iter().take(2).map(|(_, o)| *o).collect();
    let fakes: Vec<Order> = windows.iter().skip(2).take(2).map(|(_, o)| *o).collect();

    let mut critic = CriticNet::<f64>::new(NetWidths::tiny(), "c", &mut init_rng(19, "c")).unwrap();

    let loss_of = |critic: &mut CriticNet<f64>, trainable: bool| -> (f64, Option<Vec<f64>>) {
        let mut g = Graph::new();
        let hist = g.constant(hist_tensor(&conds));
        let quotes = g.constant(quotes_tensor(&conds));
        let fake_feats = g.constant(order_feats_tensor(&fakes));
        let real_feats = g.constant(order_feats_tensor(&reals));
        let bound = critic.bind(&mut g, Mode::Frozen, trainable).unwrap();
        let c_fake = critic.apply(&mut g, &bound, hist, quotes, fake_feats, Mode::Frozen).unwrap();
        let c_real = critic.apply(&mut g, &bound, hist, quotes, real_feats, Mode::Frozen).unwrap();
        let loss = critic_loss_node(&mut g, LossVariant::Plain, c_fake, c_real).unwrap();
        let value = g.value(loss).item();
        if trainable {
            let grads = g.backward(loss).unwrap();
            let named = bound.binds.grads_by_name(&grads);
            (value, Some(grads_flat(&critic.params, &named)))
        } else {
            (value, None)
        }
    };

    let (_, analytic) = loss_of(&mut critic, true);
    let analytic = analytic.unwrap();

    let x0 = flatten_params(&critic.params);
    let numeric = central_diff_grad(&x0, |point| {
        set_params(&mut critic.params, point);
        loss_of(&mut critic, false).0
    });
    set_params(&mut critic.params, &x0);

    let (worst, at) = report_worst(&analytic, &numeric);
    assert!(
        worst < TOL,
        "critic: worst rel err {worst:.3e} at param {at} ({} params)",
        x0.len()
    );
}
