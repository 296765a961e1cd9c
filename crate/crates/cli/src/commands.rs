//! One function per command: run the engines, write artifacts, return the results for the summary.

use anyhow::{bail, ensure, Context, Result};
use pit_core::analysis::distance::{graph_distance, sup_distance, HeightTrace, StepFunction};
use pit_core::analysis::fclt::{fclt_diagnostic, FcltConfig};
use pit_core::analysis::fixation::classify_fixation;
use pit_core::analysis::heuristics::{glh_speed_for, rglh_speed_for};
use pit_core::analysis::renewal::{point_mass_speed, simulate_renewals, speed_estimate, RenewalRecord, SpeedEstimate};
use pit_core::branching::{gw_run, gw_survival_formula, GwObservation, GwOutcome, GwParams};
use pit_core::input::{contender_params, IncrementDistribution, PoissonInput};
use pit_core::moran::{moran_run, MoranRun, MoranState, MutationSchedule, RunConfig};
use pit_core::pit::{replay, Event, ImmigrationEntry, PitState, Trajectory};
use pit_core::rng::replicate_rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::output::{num, opt_num, Artifacts};
use crate::scenario::{Command, Scenario};

pub fn dispatch(s: &Scenario, out: &mut Artifacts) -> Result<Value> {
    match s.command {
        Command::PitRun => pit_run(s, out),
        Command::PitReplay => pit_replay(s, out),
        Command::MoranRun => moran(s, out),
        Command::Couple => couple(s, out),
        Command::Speed => speed(s, out),
        Command::Heuristics => heuristics(s, out),
        Command::Gw => gw(s, out),
        Command::Fclt => fclt(s, out),
    }
}

const EVENT_HEADER: [&str; 8] = [
    "replicate",
    "kind",
    "time",
    "id",
    "related",
    "slope",
    "fitness",
    "solitary",
];

/// `related` is the parent of an immigrant and the previous resident at a change.
fn event_row(replicate: u64, e: &Event) -> Vec<String> {
    let (id, related, slope, fitness) = match *e {
        Event::Immigration {
            id,
            parent,
            slope,
            fitness,
            ..
        } => (id, parent.to_string(), num(slope), num(fitness)),
        Event::ResidentChange {
            resident,
            previous,
            v_star,
            fitness,
            ..
        } => (resident, previous.to_string(), num(v_star), num(fitness)),
        Event::Extinction { id, .. } => (id, String::new(), String::new(), String::new()),
    };
    vec![
        replicate.to_string(),
        e.kind().to_string(),
        num(e.time()),
        id.to_string(),
        related,
        slope,
        fitness,
        e.is_solitary_change().to_string(),
    ]
}

#[derive(Serialize)]
struct TrajectoryLine<'a> {
    replicate: u64,
    #[serde(flatten)]
    trajectory: &'a Trajectory,
}

/// Logged PIT run with everything needed for the artifacts.
struct PitRecord {
    events: Vec<Event>,
    trajectories: Vec<Trajectory>,
    summary: Value,
}

fn record<I: Iterator<Item = ImmigrationEntry>>(state: &PitState<I>, horizon: f64) -> Result<PitRecord> {
    state.check_identities().context("identity check")?;
    state.genealogy().validate().context("genealogy check")?;
    let fixation = classify_fixation(state.events(), &state.genealogy());
    ensure!(
        fixation.lattice_holds(),
        "fixation attributes violate the solitary/ancestral/resident order"
    );
    let changes: Vec<Value> = state
        .events()
        .iter()
        .filter_map(|e| match *e {
            Event::ResidentChange {
                time,
                resident,
                fitness,
                ..
            } => Some(
                json!({ "time": time, "resident": resident, "fitness": fitness, "solitary": e.is_solitary_change() }),
            ),
            _ => None,
        })
        .collect();
    let summary = json!({
        "final_fitness": state.resident_fitness(),
        "fitness_per_time": state.resident_fitness() / horizon,
        "resident": state.resident_id(),
        "mutations": state.trajectories().len() - state.start_count(),
        "resident_changes": changes,
        "fixation": fixation.tally(),
    });
    Ok(PitRecord {
        events: state.events().to_vec(),
        trajectories: state.trajectories().to_vec(),
        summary,
    })
}

fn write_pit(out: &mut Artifacts, records: &[PitRecord]) -> Result<()> {
    out.csv(
        "events.csv",
        &EVENT_HEADER,
        records
            .iter()
            .enumerate()
            .flat_map(|(r, rec)| rec.events.iter().map(move |e| event_row(r as u64, e))),
    )?;
    out.jsonl(
        "trajectories.jsonl",
        records.iter().enumerate().flat_map(|(r, rec)| {
            rec.trajectories.iter().map(move |t| TrajectoryLine {
                replicate: r as u64,
                trajectory: t,
            })
        }),
    )
}

fn pit_run(s: &Scenario, out: &mut Artifacts) -> Result<Value> {
    let records: Vec<PitRecord> = (0..s.replicates)
        .into_par_iter()
        .map(|r| -> Result<PitRecord> {
            let input =
                PoissonInput::new(s.lambda, s.gamma.clone(), replicate_rng(s.seed, r))?.map(ImmigrationEntry::from);
            let mut state = PitState::homogeneous(input);
            state.advance(s.horizon).with_context(|| format!("replicate {r}"))?;
            record(&state, s.horizon).with_context(|| format!("replicate {r}"))
        })
        .collect::<Result<_>>()?;
    write_pit(out, &records)?;
    let mean = records
        .iter()
        .map(|r| r.summary["fitness_per_time"].as_f64().unwrap_or(f64::NAN))
        .sum::<f64>()
        / records.len() as f64;
    Ok(json!({
        "mean_fitness_per_time": mean,
        "replicates": records.into_iter().map(|r| r.summary).collect::<Vec<_>>(),
    }))
}

fn pit_replay(s: &Scenario, out: &mut Artifacts) -> Result<Value> {
    let state = replay(s.input.clone(), s.horizon)?;
    let rec = record(&state, s.horizon)?;
    let parents: Vec<Value> = state
        .trajectories()
        .iter()
        .filter(|t| t.id > 0)
        .map(|t| json!({ "id": t.id, "parent": t.parent }))
        .collect();
    let mut summary = rec.summary.clone();
    summary["parents"] = Value::from(parents);
    summary["fitness_path"] = json!(state.resident_fitness_path());
    write_pit(out, std::slice::from_ref(&rec))?;
    Ok(summary)
}

fn moran_config(s: &Scenario) -> RunConfig {
    RunConfig {
        horizon: s.horizon,
        grid_step: s.grid_step,
        stop_when_absorbed: false,
    }
}

fn write_moran(out: &mut Artifacts, runs: &[MoranRun]) -> Result<()> {
    out.csv(
        "trace.csv",
        &["replicate", "time", "type", "count", "log_frequency", "mean_fitness"],
        runs.iter().enumerate().flat_map(|(r, run)| {
            run.trace.grid.iter().flat_map(move |sample| {
                sample.counts.iter().map(move |&(id, count)| {
                    vec![
                        r.to_string(),
                        num(sample.time),
                        id.to_string(),
                        count.to_string(),
                        num(run.trace.log_frequency(sample, id)),
                        num(sample.mean_fitness),
                    ]
                })
            })
        }),
    )?;
    out.csv(
        "contenders.csv",
        &["replicate", "id", "birth_time", "eval_time", "count", "contender"],
        runs.iter().enumerate().flat_map(|(r, run)| {
            run.contenders.iter().map(move |c| {
                vec![
                    r.to_string(),
                    c.id.to_string(),
                    num(c.birth_time),
                    num(c.eval_time),
                    c.count.to_string(),
                    c.contender.to_string(),
                ]
            })
        }),
    )?;
    out.jsonl(
        "genealogy.jsonl",
        runs.iter().enumerate().flat_map(|(r, run)| {
            let st = &run.state;
            (0..st.counts().len()).map(move |id| {
                json!({
                    "replicate": r,
                    "id": id,
                    "parent": st.parent_of(id),
                    "birth": st.birth_times()[id],
                    "fitness": st.fitness()[id],
                })
            })
        }),
    )
}

fn moran_summary(run: &MoranRun) -> Value {
    json!({
        "end_time": run.end_time,
        "mean_fitness": run.state.mean_fitness(),
        "dominant": run.state.dominant(),
        "mutations": run.state.mutation_count(),
        "events": run.events,
        "contenders": run.contenders.iter().filter(|c| c.contender).count(),
    })
}

fn moran(s: &Scenario, out: &mut Artifacts) -> Result<Value> {
    let runs: Vec<MoranRun> = (0..s.replicates)
        .into_par_iter()
        .map(|r| -> Result<MoranRun> {
            let schedule = MutationSchedule::Poisson {
                lambda: s.lambda,
                gamma: s.gamma.clone(),
            };
            let state = MoranState::homogeneous(s.n)?;
            Ok(moran_run(
                state,
                moran_config(s),
                schedule,
                &mut replicate_rng(s.seed, r),
            )?)
        })
        .collect::<Result<_>>()?;
    write_moran(out, &runs)?;
    Ok(json!({ "replicates": runs.iter().map(moran_summary).collect::<Vec<_>>() }))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct Coupled {
    run: MoranRun,
    pattern: String,
    sup: f64,
    graph: f64,
}

fn couple(s: &Scenario, out: &mut Artifacts) -> Result<Value> {
    if s.input.is_empty() {
        bail!("couple needs a mutation list (`input` or `input_file`)");
    }
    let schedule = s.schedule();
    let coupled: Vec<Coupled> = (0..s.replicates)
        .into_par_iter()
        .map(|r| -> Result<Coupled> {
            let state = MoranState::homogeneous(s.n)?;
            let run = moran_run(
                state,
                moran_config(s),
                MutationSchedule::fixed(schedule.clone()),
                &mut replicate_rng(s.seed, r),
            )?;
            let flag = |i: usize| run.contender(i).is_some_and(|c| c.contender);
            let matched: Vec<ImmigrationEntry> = s
                .input
                .iter()
                .enumerate()
                .map(|(k, e)| ImmigrationEntry {
                    slope: if flag(k + 1) { e.increment } else { 0.0 },
                    ..*e
                })
                .collect();
            let pattern = (1..=s.input.len()).map(|i| if flag(i) { '1' } else { '0' }).collect();
            let pit = replay(matched, s.horizon)?;
            let heights = HeightTrace::from_moran(&run);
            let sup = sup_distance(&heights, &HeightTrace::from_pit(&pit, &heights.times))?;
            let graph = graph_distance(
                &StepFunction::from_moran(&run)?,
                &StepFunction::from_pit(&pit, run.end_time)?,
            );
            Ok(Coupled {
                run,
                pattern,
                sup,
                graph,
            })
        })
        .collect::<Result<_>>()?;
    out.csv(
        "couple.csv",
        &["replicate", "pattern", "sup_distance", "fitness_graph_distance"],
        coupled
            .iter()
            .enumerate()
            .map(|(r, c)| vec![r.to_string(), c.pattern.clone(), num(c.sup), num(c.graph)]),
    )?;
    let runs: Vec<MoranRun> = coupled.iter().map(|c| c.run.clone()).collect();
    write_moran(out, &runs)?;
    Ok(json!({
        "median_sup_distance": median(coupled.iter().map(|c| c.sup).collect()),
        "median_fitness_graph_distance": median(coupled.iter().map(|c| c.graph).collect()),
        "patterns": coupled.iter().map(|c| c.pattern.clone()).collect::<Vec<_>>(),
    }))
}

fn renewal_run(
    lambda: f64,
    gamma: &IncrementDistribution,
    cycles: u64,
    seed: u64,
    replicate: u64,
) -> Result<Vec<RenewalRecord>> {
    let input = PoissonInput::new(lambda, gamma.clone(), replicate_rng(seed, replicate))?.map(ImmigrationEntry::from);
    let mut state = PitState::homogeneous(input);
    let renewals = simulate_renewals(&mut state, cycles as usize, f64::INFINITY)?;
    Ok(renewals.records)
}

fn estimate_json(e: &SpeedEstimate) -> Value {
    let (lo, hi) = e.ci95();
    json!({
        "v_hat": e.v_hat,
        "stderr": e.stderr,
        "ci95": [lo, hi],
        "sigma2_hat": e.sigma2_hat,
        "cycles": e.n_cycles,
    })
}

fn speed(s: &Scenario, out: &mut Artifacts) -> Result<Value> {
    ensure!(s.cycles >= 2, "speed needs at least 2 cycles");
    let runs: Vec<Vec<RenewalRecord>> = (0..s.replicates)
        .into_par_iter()
        .map(|r| renewal_run(s.lambda, &s.gamma, s.cycles, s.seed, r))
        .collect::<Result<_>>()?;
    out.csv(
        "cycles.csv",
        &["replicate", "cycle", "length", "reward"],
        runs.iter().enumerate().flat_map(|(r, recs)| {
            recs.iter()
                .enumerate()
                .map(move |(k, c)| vec![r.to_string(), k.to_string(), num(c.cycle_length), num(c.cycle_reward)])
        }),
    )?;
    let estimates = runs.iter().map(|r| speed_estimate(r)).collect::<Result<Vec<_>, _>>()?;
    let exact = match s.gamma {
        IncrementDistribution::PointMass { value } => Some(point_mass_speed(s.lambda, value)),
        _ => None,
    };
    Ok(json!({
        "v_hat": estimates[0].v_hat,
        "exact_speed": exact,
        "estimates": estimates.iter().map(estimate_json).collect::<Vec<_>>(),
    }))
}

fn heuristics(s: &Scenario, out: &mut Artifacts) -> Result<Value> {
    let law = contender_params(s.lambda, &s.gamma)?;
    let v_gl = glh_speed_for(&law)?;
    let v_rgl = rglh_speed_for(&law)?;
    let simulated = if s.cycles >= 2 {
        let recs = renewal_run(s.lambda, &s.gamma, s.cycles, s.seed, 0)?;
        Some(speed_estimate(&recs)?)
    } else {
        None
    };
    out.csv(
        "heuristics.csv",
        &["lambda", "lambda_star", "v_gl", "v_rgl", "v_sim", "v_sim_stderr"],
        [vec![
            num(s.lambda),
            num(law.rate),
            num(v_gl),
            num(v_rgl),
            opt_num(simulated.map(|e| e.v_hat)),
            opt_num(simulated.map(|e| e.stderr)),
        ]],
    )?;
    Ok(json!({
        "lambda_star": law.rate,
        "v_gl": v_gl,
        "v_rgl": v_rgl,
        "simulated": simulated.as_ref().map(estimate_json),
    }))
}

fn gw(s: &Scenario, out: &mut Artifacts) -> Result<Value> {
    let params = GwParams::new(s.birth, s.death, s.initial)?;
    let paths: Vec<_> = (0..s.replicates)
        .into_par_iter()
        .map(|r| {
            gw_run(
                params,
                s.horizon,
                s.cap,
                &GwObservation::default(),
                &mut replicate_rng(s.seed, r),
            )
        })
        .collect();
    out.csv(
        "gw.csv",
        &[
            "replicate",
            "outcome",
            "extinction_time",
            "max_level",
            "final_value",
            "final_time",
        ],
        paths.iter().enumerate().map(|(r, p)| {
            let outcome = match p.outcome {
                GwOutcome::Extinct => "extinct",
                GwOutcome::Escaped => "escaped",
                GwOutcome::Alive => "alive",
            };
            vec![
                r.to_string(),
                outcome.to_string(),
                opt_num(p.extinction_time),
                p.max_level.to_string(),
                p.final_value.to_string(),
                num(p.final_time),
            ]
        }),
    )?;
    let k = paths.len() as f64;
    let freq = paths.iter().filter(|p| p.survived()).count() as f64 / k;
    let formula = gw_survival_formula(s.birth, s.death, s.initial)?;
    Ok(json!({
        "survival_frequency": freq,
        "survival_formula": formula,
        "binomial_stderr": (formula * (1.0 - formula) / k).sqrt(),
        "still_alive_below_cap": paths.iter().filter(|p| p.outcome == GwOutcome::Alive).count(),
    }))
}

fn fclt(s: &Scenario, out: &mut Artifacts) -> Result<Value> {
    let (speed, sigma2, source) = match (s.speed, s.sigma2) {
        (Some(v), Some(s2)) => (v, s2, "scenario"),
        _ => {
            ensure!(
                s.cycles >= 2,
                "fclt needs `speed` and `sigma2` or at least 2 renewal cycles to estimate them"
            );
            // a stream index past every replicate keeps the estimate independent of the runs
            let recs = renewal_run(s.lambda, &s.gamma, s.cycles, s.seed, s.replicates)?;
            let e = speed_estimate(&recs)?;
            (
                s.speed.unwrap_or(e.v_hat),
                s.sigma2.unwrap_or(e.sigma2_hat),
                "renewal estimate",
            )
        }
    };
    let report = fclt_diagnostic(&FcltConfig {
        lambda: s.lambda,
        gamma: s.gamma.clone(),
        scale: s.scale,
        times: s.times.clone(),
        runs: s.replicates as usize,
        seed: s.seed,
        speed,
        sigma2,
    })?;
    out.csv(
        "fclt.csv",
        &["replicate", "time", "standardized"],
        report.samples.iter().enumerate().flat_map(|(r, row)| {
            row.iter()
                .zip(&report.times)
                .map(move |(&x, &t)| vec![r.to_string(), num(t), num(x)])
        }),
    )?;
    Ok(json!({
        "speed": speed,
        "sigma2": sigma2,
        "centering_source": source,
        "times": report.times,
        "mean": report.mean,
        "variance": report.variance,
        "lag_correlation": report.lag_correlation,
        "low_scale": report.low_scale,
    }))
}
