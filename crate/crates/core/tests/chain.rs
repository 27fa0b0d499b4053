mod common;

use common::re_batch;
use daisy_mimo::chain_sim::{
    apply_power_save, build_chain, extend_chain, simulate_slot, Endpoint, LinkMessage,
    PowerSavePolicy, SlotConfig, TopologyConfig,
};
use daisy_mimo::detectors::{run_chain, Detector, EstimateVector, StepSize};
use daisy_mimo::signal_model::{generate_rayleigh_channel, ChannelMatrix};
use daisy_mimo::C64;

fn detectors() -> Vec<Detector> {
    vec![
        Detector::Rls,
        Detector::Sgd {
            step: StepSize::Constant(0.03),
        },
        Detector::Asgd {
            step: StepSize::Constant(0.03),
            n0: 20,
        },
    ]
}

#[test]
fn every_partition_matches_monolithic_run() {
    let (m, k) = (64, 8);
    let h = generate_rayleigh_channel(m, k, 11).unwrap();
    let (_, batch) = re_batch(&h, 5, 12.0, 3);
    let s0 = EstimateVector::random(k, 4);
    for det in detectors() {
        let reference: Vec<_> = batch
            .iter()
            .map(|y| {
                run_chain(&det, &h, &y.samples, s0.clone())
                    .unwrap()
                    .pop()
                    .unwrap()
            })
            .collect();
        for c in [1, 2, 4, 8, 16, 32, 64] {
            let mut chain = build_chain(&TopologyConfig::new(m, k, c).unwrap(), &h).unwrap();
            let out = simulate_slot(&mut chain, &det, &batch, &s0, &SlotConfig::default()).unwrap();
            assert_eq!(out.estimates, reference, "{} with C = {c}", det.name());
            assert_eq!(out.skipped_cluster_steps, 0);
            out.timeline.check_causality().unwrap();
        }
    }
}

#[test]
fn extending_the_array_matches_one_long_chain() {
    let k = 4;
    let front = generate_rayleigh_channel(32, k, 1).unwrap();
    let back = generate_rayleigh_channel(32, k, 2).unwrap();
    let whole = front.stack(&back).unwrap();
    let (_, batch) = re_batch(&whole, 4, 8.0, 9);
    let s0 = EstimateVector::zeros(k);
    for det in detectors() {
        let a = build_chain(&TopologyConfig::new(32, k, 4).unwrap(), &front).unwrap();
        let b = build_chain(&TopologyConfig::new(32, k, 2).unwrap(), &back).unwrap();
        let mut joined = extend_chain(a, b).unwrap();
        assert_eq!(joined.clusters(), 6);
        assert_eq!(joined.m_antennas(), 64);
        assert_eq!(joined.nodes()[4].first_antenna(), 32);
        let got = simulate_slot(&mut joined, &det, &batch, &s0, &SlotConfig::default()).unwrap();
        let mut single = build_chain(&TopologyConfig::new(64, k, 1).unwrap(), &whole).unwrap();
        let want = simulate_slot(&mut single, &det, &batch, &s0, &SlotConfig::default()).unwrap();
        assert_eq!(got.estimates, want.estimates, "{}", det.name());
    }
}

#[test]
fn links_carry_only_estimates_and_gamma() {
    let (m, k, c) = (16, 4, 4);
    let h = generate_rayleigh_channel(m, k, 5).unwrap();
    let (_, batch) = re_batch(&h, 3, 10.0, 6);
    let private: Vec<C64> = h
        .as_slice()
        .iter()
        .chain(batch.iter().flat_map(|y| y.samples.iter()))
        .copied()
        .collect();
    for det in detectors() {
        let mut chain = build_chain(&TopologyConfig::new(m, k, c).unwrap(), &h).unwrap();
        let cfg = SlotConfig {
            capture_messages: true,
            ..SlotConfig::default()
        };
        let out = simulate_slot(&mut chain, &det, &batch, &EstimateVector::zeros(k), &cfg).unwrap();
        let mut tokens = 0;
        let mut gammas = 0;
        for msg in &out.messages {
            match msg {
                LinkMessage::Token { from, to, token } => {
                    tokens += 1;
                    let words = if matches!(det, Detector::Asgd { .. }) {
                        2 * k
                    } else {
                        k
                    };
                    assert_eq!(token.payload_words(), words);
                    assert!(token.payload().all(|w| !private.contains(w)));
                    let expected = if *from + 1 == c {
                        Endpoint::Sink
                    } else {
                        Endpoint::Cluster(from + 1)
                    };
                    assert_eq!(*to, expected);
                }
                LinkMessage::Gamma { from, to, gamma } => {
                    gammas += 1;
                    assert_eq!(*to, from + 1);
                    assert_eq!(gamma.k(), k);
                }
            }
        }
        assert_eq!(tokens, c * batch.len());
        let want_gammas = if det.needs_precomp() { c - 1 } else { 0 };
        assert_eq!(gammas, want_gammas, "{}", det.name());
    }
}

#[test]
fn pipeline_ticks() {
    for c in [1usize, 2, 3, 8] {
        for r in [1usize, 7, 100] {
            let h = generate_rayleigh_channel(8 * c, 2, 0).unwrap();
            let (_, batch) = re_batch(&h, r, 20.0, 1);
            let mut chain = build_chain(&TopologyConfig::new(8 * c, 2, c).unwrap(), &h).unwrap();
            let det = Detector::Sgd {
                step: StepSize::Constant(0.1),
            };
            let out = simulate_slot(
                &mut chain,
                &det,
                &batch,
                &EstimateVector::zeros(2),
                &SlotConfig::default(),
            )
            .unwrap();
            let t = &out.timeline;
            assert_eq!(t.total_ticks, (c - 1 + r) as u64);
            assert_eq!(t.pipeline_delay, Some((c - 1) as u64));
            assert_eq!(t.entries.len(), c * r);
            t.check_causality().unwrap();
            for e in &t.entries {
                assert_eq!(e.start_tick, (e.cluster_id + e.re_id) as u64);
                assert_eq!(e.end_tick, e.start_tick + 1);
            }
        }
    }
}

#[test]
fn pipeline_ticks_with_cost() {
    let (c, r, cost) = (4usize, 10usize, 3u64);
    let h = generate_rayleigh_channel(16, 2, 0).unwrap();
    let (_, batch) = re_batch(&h, r, 20.0, 1);
    let mut chain = build_chain(&TopologyConfig::new(16, 2, c).unwrap(), &h).unwrap();
    let cfg = SlotConfig {
        re_cost: cost,
        ..SlotConfig::default()
    };
    let out = simulate_slot(
        &mut chain,
        &Detector::Rls,
        &batch,
        &EstimateVector::zeros(2),
        &cfg,
    )
    .unwrap();
    assert_eq!(out.timeline.total_ticks, cost * (c - 1 + r) as u64);
    assert_eq!(out.timeline.pipeline_delay, Some(cost * (c - 1) as u64));
}

/// Cluster 0 sees the identity, so SGD with unit step recovers `s` exactly
/// and every later cluster has zero error.
fn exact_first_cluster() -> (
    ChannelMatrix,
    Vec<Vec<C64>>,
    Vec<daisy_mimo::signal_model::ReceivedVector>,
) {
    let k = 2;
    let head = ChannelMatrix::identity(k).unwrap();
    let tail = generate_rayleigh_channel(6, k, 8).unwrap();
    let h = head.stack(&tail).unwrap();
    let (s, batch) = re_batch(&h, 5, f64::INFINITY, 2);
    (h, s, batch)
}

#[test]
fn freeze_skips_clusters_after_exact_recovery() {
    let (h, s, batch) = exact_first_cluster();
    let det = Detector::Sgd {
        step: StepSize::Constant(1.0),
    };
    let s0 = EstimateVector::zeros(2);
    let mut chain = build_chain(&TopologyConfig::new(8, 2, 4).unwrap(), &h).unwrap();
    let plain = simulate_slot(&mut chain, &det, &batch, &s0, &SlotConfig::default()).unwrap();
    let cfg = apply_power_save(SlotConfig::default(), PowerSavePolicy::Freeze, 1e-9).unwrap();
    let saved = simulate_slot(&mut chain, &det, &batch, &s0, &cfg).unwrap();

    assert_eq!(saved.skipped_cluster_steps, 3 * batch.len());
    for (a, b) in saved.estimates.iter().zip(&plain.estimates) {
        assert_eq!(a.values, b.values);
    }
    for (est, sym) in saved.estimates.iter().zip(&s) {
        assert_eq!(&est.values, sym);
        assert_eq!(est.antenna_index, 2);
    }
    let skipped: Vec<_> = saved
        .timeline
        .entries
        .iter()
        .filter(|e| e.skipped)
        .collect();
    assert_eq!(skipped.len(), 3 * batch.len());
    assert!(skipped.iter().all(|e| e.cluster_id > 0));
    assert_eq!(saved.timeline.total_ticks, plain.timeline.total_ticks);
}

#[test]
fn early_exit_short_circuits_the_chain() {
    let (h, s, batch) = exact_first_cluster();
    let det = Detector::Sgd {
        step: StepSize::Constant(1.0),
    };
    let mut chain = build_chain(&TopologyConfig::new(8, 2, 4).unwrap(), &h).unwrap();
    let cfg = SlotConfig {
        capture_messages: true,
        ..apply_power_save(SlotConfig::default(), PowerSavePolicy::EarlyExit, 1e-9).unwrap()
    };
    let out = simulate_slot(&mut chain, &det, &batch, &EstimateVector::zeros(2), &cfg).unwrap();
    for (est, sym) in out.estimates.iter().zip(&s) {
        assert_eq!(&est.values, sym);
    }
    assert!(out.timeline.entries.iter().all(|e| e.cluster_id <= 1));
    assert_eq!(out.timeline.pipeline_delay, None);
    let to_sink = out
        .messages
        .iter()
        .filter(|m| matches!(m, LinkMessage::Token { from: 1, to: Endpoint::Sink, token } if token.terminated))
        .count();
    assert_eq!(to_sink, batch.len());
}

#[test]
fn power_save_never_skips_the_first_cluster() {
    let h = generate_rayleigh_channel(8, 2, 1).unwrap();
    let (_, batch) = re_batch(&h, 4, 10.0, 2);
    let mut chain = build_chain(&TopologyConfig::new(8, 2, 4).unwrap(), &h).unwrap();
    let cfg = apply_power_save(
        SlotConfig::default(),
        PowerSavePolicy::Freeze,
        f64::INFINITY,
    )
    .unwrap();
    let out = simulate_slot(
        &mut chain,
        &Detector::Rls,
        &batch,
        &EstimateVector::zeros(2),
        &cfg,
    )
    .unwrap();
    assert_eq!(out.skipped_cluster_steps, 3 * batch.len());
    let reference = run_chain(
        &Detector::Rls,
        &h.sub_array(0..2).unwrap(),
        &batch[0].samples[..2],
        EstimateVector::zeros(2),
    )
    .unwrap();
    assert_eq!(&out.estimates[0], reference.last().unwrap());
}

#[test]
fn rejects_mismatched_inputs() {
    let h = generate_rayleigh_channel(8, 2, 1).unwrap();
    let (_, batch) = re_batch(&h, 2, 10.0, 2);
    let mut chain = build_chain(&TopologyConfig::new(8, 2, 2).unwrap(), &h).unwrap();
    let cfg = SlotConfig::default();
    assert!(simulate_slot(
        &mut chain,
        &Detector::Rls,
        &batch,
        &EstimateVector::zeros(3),
        &cfg
    )
    .is_err());
    let other = generate_rayleigh_channel(4, 2, 1).unwrap();
    let (_, short) = re_batch(&other, 1, 10.0, 2);
    assert!(simulate_slot(
        &mut chain,
        &Detector::Rls,
        &short,
        &EstimateVector::zeros(2),
        &cfg
    )
    .is_err());
    assert!(build_chain(&TopologyConfig::new(8, 2, 2).unwrap(), &other).is_err());
    assert!(apply_power_save(cfg, PowerSavePolicy::Freeze, -1.0).is_err());
}
