use super::results::{Curve, ResultSet, Stats};
use super::spec::{AlgorithmSpec, ExperimentKind, ExperimentSpec};
use super::{map_trials, ExecMode};
use crate::chain_sim::{self, SlotConfig, TimelineReport, TopologyConfig};
use crate::detectors::{zf_detect, Detector, PreparedChain};
use crate::interconnect::{self, RateReport};
use crate::linalg::dist_sqr;
use crate::rng::{derive_seed, random_bits, stream};
use crate::signal_model::{
    demodulate_hard, generate_rayleigh_channel, modulate, transmit, ChannelMatrix, Constellation,
    ReceivedVector, UserSymbolVector,
};
use crate::{Error, Result};

/// Trials per early-stopping batch in BER sweeps.
pub const BER_BATCH: usize = 32;

fn expect_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<()> {
    spec.validate()?;
    if spec.kind != kind {
        return Err(Error::Config(format!(
            "expected a {kind:?} experiment, got {:?}",
            spec.kind
        )));
    }
    Ok(())
}

struct Prepared<'a> {
    spec: &'a AlgorithmSpec,
    detector: Option<Detector>,
}

fn prepare_algorithms(spec: &ExperimentSpec) -> Result<Vec<Prepared<'_>>> {
    spec.algorithms
        .iter()
        .map(|a| {
            Ok(Prepared {
                spec: a,
                detector: a.detector()?,
            })
        })
        .collect()
}

/// Channel, symbols and noisy observations of one trial.
struct TrialDraw {
    h: ChannelMatrix,
    symbols: Vec<UserSymbolVector>,
}

fn draw_trial(
    spec: &ExperimentSpec,
    c: &Constellation,
    trial: usize,
    res: usize,
) -> Result<TrialDraw> {
    let t = spec.topology()?;
    let trial = trial as u64;
    let h = generate_rayleigh_channel(t.m, t.k, derive_seed(spec.seed, &[trial, stream::CHANNEL]))?;
    let symbols = (0..res as u64)
        .map(|r| {
            let bits = random_bits(
                t.k * c.bits_per_symbol(),
                derive_seed(spec.seed, &[trial, stream::BITS, r]),
            );
            modulate(&bits, c, t.k)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialDraw { h, symbols })
}

fn observe(
    spec: &ExperimentSpec,
    draw: &TrialDraw,
    trial: usize,
    re: usize,
    snr_index: usize,
) -> Result<ReceivedVector> {
    let seed = derive_seed(
        spec.seed,
        &[trial as u64, stream::NOISE, re as u64, snr_index as u64],
    );
    transmit(&draw.h, &draw.symbols[re], spec.snr_db[snr_index], seed)
}

fn snr_suffix(spec: &ExperimentSpec, snr: f64) -> String {
    if spec.snr_db.len() > 1 {
        format!("_snr{snr}")
    } else {
        String::new()
    }
}

/// MSE `‖ŝ_n − s‖² / K` against antenna index, one resource element per
/// trial. ZF contributes a single point at `x = M`.
pub fn run_mse_sweep(spec: &ExperimentSpec, mode: ExecMode) -> Result<ResultSet> {
    expect_kind(spec, ExperimentKind::MseSweep)?;
    let topo = spec.topology()?;
    let k = topo.k as f64;
    let constellation = Constellation::new(spec.constellation.get())?;
    let algorithms = prepare_algorithms(spec)?;

    // [snr][algorithm][antenna index]
    let per_trial = map_trials(mode, 0..spec.trials, |trial| {
        let draw = draw_trial(spec, &constellation, trial, 1)?;
        let s = &draw.symbols[0].symbols;
        let chains = algorithms
            .iter()
            .map(|a| {
                a.detector
                    .as_ref()
                    .map(|d| PreparedChain::new(d, &draw.h))
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        (0..spec.snr_db.len())
            .map(|si| {
                let y = observe(spec, &draw, trial, 0, si)?;
                algorithms
                    .iter()
                    .zip(&chains)
                    .map(|(a, chain)| match chain {
                        Some(chain) => {
                            let s0 = a.spec.initial_estimate(topo.k, spec.seed, trial as u64);
                            let errs = chain.error_profile(&y.samples, s0, s)?;
                            Ok(errs.into_iter().map(|e| e / k).collect())
                        }
                        None => {
                            let est = zf_detect(&draw.h, &y.samples)?;
                            Ok(vec![dist_sqr(&est.values, s) / k])
                        }
                    })
                    .collect::<Result<Vec<Vec<f64>>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut out = ResultSet::new(spec);
    for (si, &snr) in spec.snr_db.iter().enumerate() {
        for (ai, a) in algorithms.iter().enumerate() {
            let len = per_trial[0][si][ai].len();
            let mut stats = vec![Stats::default(); len];
            for trial in &per_trial {
                for (st, &v) in stats.iter_mut().zip(&trial[si][ai]) {
                    st.push(v);
                }
            }
            let points = if a.detector.is_some() {
                stats
                    .iter()
                    .enumerate()
                    .map(|(n, st)| st.point((n + 1) as f64))
                    .collect()
            } else {
                vec![stats[0].point(topo.m as f64)]
            };
            out.curves.push(Curve {
                label: format!("{}{}", a.spec.label(), snr_suffix(spec, snr)),
                points,
            });
        }
    }
    Ok(out)
}

/// Hard-decision BER against SNR. Each trial draws one channel and
/// `res_per_block` resource elements; a point stops early once every
/// algorithm has accumulated `min_errors` bit errors.
pub fn run_ber_sweep(spec: &ExperimentSpec, mode: ExecMode) -> Result<ResultSet> {
    expect_kind(spec, ExperimentKind::BerSweep)?;
    let topo = spec.topology()?;
    let constellation = Constellation::new(spec.constellation.get())?;
    let algorithms = prepare_algorithms(spec)?;
    let bits_per_trial = (spec.res_per_block * topo.k * constellation.bits_per_symbol()) as f64;

    let mut stats = vec![vec![Stats::default(); algorithms.len()]; spec.snr_db.len()];
    let mut total_errors = vec![vec![0u64; algorithms.len()]; spec.snr_db.len()];
    for si in 0..spec.snr_db.len() {
        let mut done = 0;
        while done < spec.trials {
            let end = (done + BER_BATCH).min(spec.trials);
            let batch = map_trials(mode, done..end, |trial| {
                let draw = draw_trial(spec, &constellation, trial, spec.res_per_block)?;
                let chains = algorithms
                    .iter()
                    .map(|a| {
                        a.detector
                            .as_ref()
                            .map(|d| PreparedChain::new(d, &draw.h))
                            .transpose()
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut errors = vec![0u64; algorithms.len()];
                for re in 0..spec.res_per_block {
                    let y = observe(spec, &draw, trial, re, si)?;
                    let sent = &draw.symbols[re].source_bits;
                    for (ai, (a, chain)) in algorithms.iter().zip(&chains).enumerate() {
                        let est = match chain {
                            Some(chain) => chain.detect(
                                &y.samples,
                                a.spec.initial_estimate(topo.k, spec.seed, trial as u64),
                            )?,
                            None => zf_detect(&draw.h, &y.samples)?,
                        };
                        let got = demodulate_hard(&est, &constellation);
                        errors[ai] += got.iter().zip(sent).filter(|(a, b)| a != b).count() as u64;
                    }
                }
                Ok(errors)
            })?;
            for errors in batch {
                for (ai, e) in errors.into_iter().enumerate() {
                    stats[si][ai].push(e as f64 / bits_per_trial);
                    total_errors[si][ai] += e;
                }
            }
            done = end;
            if total_errors[si].iter().all(|&e| e >= spec.min_errors) {
                break;
            }
        }
    }

    let mut out = ResultSet::new(spec);
    for (ai, a) in algorithms.iter().enumerate() {
        let label = a.spec.label();
        out.curves.push(Curve {
            label: label.clone(),
            points: spec
                .snr_db
                .iter()
                .enumerate()
                .map(|(si, &snr)| stats[si][ai].point(snr))
                .collect(),
        });
        for (si, &snr) in spec.snr_db.iter().enumerate() {
            out.summary.insert(
                format!("{label}.bit_errors_snr{snr}"),
                total_errors[si][ai] as f64,
            );
        }
    }
    Ok(out)
}

pub struct SimulationOutput {
    /// Per-RE MSE curves (`x` = RE index within the slot).
    pub results: ResultSet,
    /// Timeline of the first slot, per recursive algorithm label.
    pub timelines: Vec<(String, TimelineReport)>,
}

/// Runs `trials` slots of `res_per_block` resource elements through the
/// cluster chain, one channel per slot, at the first SNR of the grid.
pub fn run_simulation(spec: &ExperimentSpec, mode: ExecMode) -> Result<SimulationOutput> {
    expect_kind(spec, ExperimentKind::Simulate)?;
    let topo = spec.topology()?;
    let topology = TopologyConfig::new(topo.m, topo.k, topo.c)?;
    let k = topo.k as f64;
    let constellation = Constellation::new(spec.constellation.get())?;
    let algorithms = prepare_algorithms(spec)?;
    let res = spec.res_per_block;

    struct SlotResult {
        mse: Vec<Vec<f64>>,
        timelines: Vec<Option<TimelineReport>>,
        skipped: Vec<usize>,
    }

    let slots = map_trials(mode, 0..spec.trials, |trial| {
        let draw = draw_trial(spec, &constellation, trial, res)?;
        let batch = (0..res)
            .map(|re| observe(spec, &draw, trial, re, 0))
            .collect::<Result<Vec<_>>>()?;
        let mut out = SlotResult {
            mse: Vec::new(),
            timelines: Vec::new(),
            skipped: Vec::new(),
        };
        for a in &algorithms {
            match &a.detector {
                Some(det) => {
                    let mut chain = chain_sim::build_chain(&topology, &draw.h)?;
                    let mut cfg = SlotConfig {
                        re_cost: spec.timing.re_cost,
                        prep_cost: spec.timing.prep_cost,
                        ..SlotConfig::default()
                    };
                    if let Some(ps) = a.spec.power_save {
                        cfg = chain_sim::apply_power_save(cfg, ps.policy, ps.threshold)?;
                    }
                    let s0 = a.spec.initial_estimate(topo.k, spec.seed, trial as u64);
                    let slot = chain_sim::simulate_slot(&mut chain, det, &batch, &s0, &cfg)?;
                    out.mse.push(
                        slot.estimates
                            .iter()
                            .zip(&draw.symbols)
                            .map(|(e, s)| dist_sqr(&e.values, &s.symbols) / k)
                            .collect(),
                    );
                    out.timelines.push((trial == 0).then_some(slot.timeline));
                    out.skipped.push(slot.skipped_cluster_steps);
                }
                None => {
                    out.mse.push(
                        batch
                            .iter()
                            .zip(&draw.symbols)
                            .map(|(y, s)| {
                                Ok(
                                    dist_sqr(&zf_detect(&draw.h, &y.samples)?.values, &s.symbols)
                                        / k,
                                )
                            })
                            .collect::<Result<Vec<_>>>()?,
                    );
                    out.timelines.push(None);
                    out.skipped.push(0);
                }
            }
        }
        Ok(out)
    })?;

    let mut results = ResultSet::new(spec);
    let mut timelines = Vec::new();
    for (ai, a) in algorithms.iter().enumerate() {
        let label = a.spec.label();
        let mut stats = vec![Stats::default(); res];
        let mut skipped = 0usize;
        for slot in &slots {
            for (st, &v) in stats.iter_mut().zip(&slot.mse[ai]) {
                st.push(v);
            }
            skipped += slot.skipped[ai];
        }
        results.curves.push(Curve {
            label: label.clone(),
            points: stats
                .iter()
                .enumerate()
                .map(|(r, st)| st.point(r as f64))
                .collect(),
        });
        if let Some(tl) = slots[0].timelines[ai].clone() {
            if let Some(t) = tl.pipeline_delay {
                results
                    .summary
                    .insert(format!("{label}.pipeline_delay"), t as f64);
            }
            results
                .summary
                .insert(format!("{label}.total_ticks"), tl.total_ticks as f64);
            results
                .summary
                .insert(format!("{label}.skipped_cluster_steps"), skipped as f64);
            timelines.push((label, tl));
        }
    }
    Ok(SimulationOutput { results, timelines })
}

/// Rate comparison for the spec's scenarios (reference ones when empty).
pub fn run_rate_table(spec: &ExperimentSpec) -> Result<Vec<RateReport>> {
    expect_kind(spec, ExperimentKind::RateTable)?;
    interconnect::comparison_table(&spec.rate_scenarios()?)
}
