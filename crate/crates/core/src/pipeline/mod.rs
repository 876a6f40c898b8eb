//! The end-to-end generation loop, its baselines, and run outputs.
//!
//! Every run uses independent random streams derived from the run seed for
//! network initialization, action selection, replay sampling and ablation
//! randomness, so switching one step never perturbs the others.

mod config;
mod report;

pub use config::{Ablation, Mode, RunConfig};
pub use report::{
    BestSet, DatasetSummary, FinalScores, ImportanceEntry, ImportanceTable, IterationRecord, Losses,
    ProvenanceEntry, Rewards, RunReport, REPORT_FORMAT,
};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agents::{Agent1Reward, CascadingAgents, Transition};
use crate::cluster::{m_cluster_traced, singletons, DescriptorGroup, DistanceKind};
use crate::dataset::{export_dataset, Dataset};
use crate::error::{Error, Result};
use crate::eval::{feature_importance, score_cv, score_holdout, score_space, EvalConfig, EvalProtocol, Score};
use crate::generation::{
    align_groups_binary, apply_binary_pairs, apply_unary, apply_unary_to, cross_groups_binary, dedup_and_merge,
    kbest_select, most_similar_pairs, Generated, UnaryTarget,
};
use crate::info::{group_relevance, set_utility, MiCache};
use crate::ops::Operation;

const STREAM_INIT: u64 = 1;
const STREAM_SELECT: u64 = 2;
const STREAM_REPLAY: u64 = 3;
const STREAM_ABLATION: u64 = 4;

/// Consecutive skipped iterations that abort a run.
pub const MAX_CONSECUTIVE_SKIPS: usize = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// A finished run: the report plus the artifacts it describes.
pub struct RunOutput {
    pub report: RunReport,
    /// The best-scoring descriptor set.
    pub best: Dataset,
    /// The descriptor set the run ended with, after size control.
    pub last: Dataset,
    /// One line per generated descriptor.
    pub trace: Vec<String>,
    /// Trained agents, for learned runs.
    pub agents: Option<CascadingAgents>,
}

struct Context {
    protocol: EvalProtocol,
    eval: EvalConfig,
    mi: MiCache,
    limit: usize,
}

fn prepare(data: &Dataset, cfg: &RunConfig) -> Result<Context> {
    cfg.validate()?;
    if data.n_descriptors() == 0 {
        return Err(Error::Empty("descriptor set"));
    }
    if !data.is_raw() {
        return Err(Error::InvalidInput(
            "a run starts from original descriptors only; the input holds composite columns".into(),
        ));
    }
    let eval = cfg.eval_config();
    let protocol = EvalProtocol::split(data.n_samples(), eval.test_fraction, cfg.holdout, cfg.seed)?;
    let mi = MiCache::with_rows(data.target(), protocol.train.clone(), &cfg.mi)?;
    Ok(Context {
        protocol,
        eval,
        mi,
        limit: cfg.generation.size_limit(data.n_descriptors()),
    })
}

/// Scores the given descriptor set exactly as a run with `cfg` would.
pub fn rescore(data: &Dataset, cfg: &RunConfig) -> Result<Score> {
    let eval = cfg.eval_config();
    let protocol = EvalProtocol::split(data.n_samples(), eval.test_fraction, cfg.holdout, cfg.seed)?;
    score_space(data, &protocol, &eval)
}

/// Forest impurity importance of `best`, descending, with the share of
/// generated descriptors among the top ten.
pub fn report_importance(best: &Dataset, protocol: &EvalProtocol, eval: &EvalConfig) -> Result<ImportanceTable> {
    let imp = feature_importance(best, protocol, &eval.forest)?;
    let mut order: Vec<usize> = (0..imp.len()).collect();
    order.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
    let entries: Vec<ImportanceEntry> = order
        .iter()
        .map(|&i| ImportanceEntry {
            name: best.columns()[i].name().to_string(),
            importance: imp[i],
            original: best.columns()[i].is_original(),
        })
        .collect();
    let top = entries.len().min(10);
    let generated = entries[..top].iter().filter(|e| !e.original).count();
    Ok(ImportanceTable {
        generated_fraction_top10: if top == 0 { 0.0 } else { generated as f64 / top as f64 },
        entries,
    })
}

fn provenance(best: &Dataset) -> Vec<ProvenanceEntry> {
    best.columns()
        .iter()
        .map(|c| ProvenanceEntry {
            name: c.name().to_string(),
            original: c.is_original(),
            depth: c.expr().depth(),
            leaves: c.expr().leaves().into_iter().map(str::to_string).collect(),
            operations: c.expr().operations().into_iter().map(|o| o.name().to_string()).collect(),
        })
        .collect()
}

fn partition(data: &Dataset, cfg: &RunConfig, mi: &MiCache) -> Result<Vec<DescriptorGroup>> {
    if cfg.ablation.no_cluster {
        return Ok(singletons(data.n_descriptors()));
    }
    let kind = if cfg.ablation.euclidean_distance {
        DistanceKind::Euclidean
    } else {
        DistanceKind::Information
    };
    Ok(m_cluster_traced(data, &cfg.clustering, mi, kind)?.groups)
}

fn names(data: &Dataset, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| data.columns()[i].name().to_string()).collect()
}

fn trace_lines(iteration: usize, generated: &[Generated], kept: &[Generated]) -> Vec<String> {
    generated
        .iter()
        .map(|g| {
            let status = if kept.iter().any(|k| k.descriptor.name() == g.descriptor.name()) {
                "kept"
            } else {
                "dropped"
            };
            format!(
                "{iteration}\t{}\t{}\t{}\t{}\t{status}",
                g.descriptor.name(),
                g.parents.join(","),
                g.operation.name(),
                g.rank_score
            )
        })
        .collect()
}

struct Step {
    record: IterationRecord,
    scored: Dataset,
    next: Dataset,
    next_groups: Vec<DescriptorGroup>,
    next_utility: f64,
    trace: Vec<String>,
}

struct Learner {
    agents: CascadingAgents,
    select: ChaCha8Rng,
    replay: ChaCha8Rng,
    ablation: ChaCha8Rng,
    learn: bool,
}

#[allow(clippy::too_many_arguments)]
fn step(
    t: usize,
    epsilon: f64,
    f: &Dataset,
    groups: &[DescriptorGroup],
    u_prev: f64,
    cfg: &RunConfig,
    ctx: &Context,
    l: &mut Learner,
) -> Result<Step> {
    let mi = &ctx.mi;
    let choice = l.agents.cascade_select(f, groups, epsilon, &mut l.select)?;
    let c1 = groups[choice.group1].members().to_vec();
    let (generated, group2, unary_group) = match choice.operation {
        Operation::Binary(op) => {
            let c2 = groups[choice.group2.expect("binary choice has a second group")].members();
            let g = if cfg.ablation.random_binary_align {
                align_groups_binary(f, &c1, c2, op, cfg.generation.center, &mut l.ablation)?
            } else {
                cross_groups_binary(f, &c1, c2, op, &cfg.generation)?
            };
            (g, Some(names(f, c2)), None)
        }
        Operation::Unary(op) => {
            if cfg.ablation.random_unary_group {
                let members = groups[l.ablation.gen_range(0..groups.len())].members();
                let rel = group_relevance(f, members, mi)?;
                (apply_unary_to(f, members, op, rel), None, Some(names(f, members)))
            } else {
                // the partner is the most relevant of the remaining groups
                let mut partner: Option<(usize, f64)> = None;
                for (i, g) in groups.iter().enumerate() {
                    if i == choice.group1 {
                        continue;
                    }
                    let r = group_relevance(f, g.members(), mi)?;
                    if partner.map_or(true, |(_, best)| r > best) {
                        partner = Some((i, r));
                    }
                }
                let partner_members = partner.map(|(i, _)| groups[i].members());
                let (target, g) = apply_unary(f, &c1, partner_members, op, mi)?;
                let chosen = match target {
                    UnaryTarget::First => c1.as_slice(),
                    UnaryTarget::Second => partner_members.expect("second group exists"),
                };
                (g, None, Some(names(f, chosen)))
            }
        }
    };
    let n_generated = generated.len();
    let (scored, kept) = dedup_and_merge(f, generated.clone(), &cfg.generation)?;
    let trace = trace_lines(t, &generated, &kept);
    if kept.is_empty() {
        log::info!("iteration {t}: none of {n_generated} generated descriptors survived de-duplication");
    }
    let score = score_space(&scored, &ctx.protocol, &ctx.eval)?;
    let u_t = set_utility(&scored, mi)?;
    let next = if scored.n_descriptors() > ctx.limit {
        kbest_select(&scored, ctx.limit, mi)?
    } else {
        scored.clone()
    };
    let next_utility = if next.n_descriptors() == scored.n_descriptors() {
        u_t
    } else {
        set_utility(&next, mi)?
    };
    let next_groups = partition(&next, cfg, mi)?;

    let r_op = u_t - u_prev;
    let r1 = match cfg.agents.agent1_reward {
        Agent1Reward::Prose => set_utility(&f.select(&c1), mi)?,
        Agent1Reward::Formula => u_prev,
    };
    let r2 = choice.group2.map(|_| r_op + score.v_a);
    let rewards = Rewards {
        group1: r1,
        operation: r_op,
        group2: r2,
    };

    let losses = if l.learn {
        let ni = l.agents.next_inputs(&next, &next_groups)?;
        let agent_cfg = l.agents.config().clone();
        l.agents.group1.remember(Transition::new(choice.input1.clone(), r1, ni.group1));
        l.agents.operation.remember(Transition::new(choice.input_op.clone(), r_op, ni.operation));
        if let (Some(input2), Some(r2)) = (choice.input2.clone(), r2) {
            l.agents.group2.remember(Transition::new(input2, r2, ni.group2));
        }
        Some(Losses {
            group1: l.agents.group1.learn(&agent_cfg, &mut l.replay)?,
            operation: l.agents.operation.learn(&agent_cfg, &mut l.replay)?,
            group2: if r2.is_some() {
                l.agents.group2.learn(&agent_cfg, &mut l.replay)?
            } else {
                None
            },
        })
    } else {
        None
    };

    let record = IterationRecord {
        iteration: t,
        skipped: None,
        epsilon: Some(epsilon),
        n_groups: Some(groups.len()),
        group1: Some(names(f, &c1)),
        operation: Some(choice.operation.name().to_string()),
        group2,
        unary_group,
        generated: kept.iter().map(|g| g.descriptor.name().to_string()).collect(),
        n_scored: Some(scored.n_descriptors()),
        n_descriptors: next.n_descriptors(),
        utility: Some(u_t),
        v_a: Some(score.v_a),
        metrics: Some(score.metrics),
        rewards: Some(rewards),
        losses,
    };
    Ok(Step {
        record,
        scored,
        next,
        next_groups,
        next_utility,
        trace,
    })
}

struct Best {
    iteration: usize,
    score: Score,
    data: Dataset,
}

fn finish(
    data: &Dataset,
    cfg: &RunConfig,
    ctx: &Context,
    iterations: Vec<IterationRecord>,
    best: Best,
    early_stopped: bool,
    mut warnings: Vec<String>,
) -> Result<(RunReport, Dataset)> {
    let importance = report_importance(&best.data, &ctx.protocol, &ctx.eval)?;
    let holdout = match (
        score_holdout(data, &ctx.protocol, &ctx.eval)?,
        score_holdout(&best.data, &ctx.protocol, &ctx.eval)?,
    ) {
        (Some(original), Some(b)) => Some(FinalScores { original, best: b }),
        _ => None,
    };
    let cross_validation = match cfg.cv_folds {
        Some(k) => Some(FinalScores {
            original: score_cv(data, k, cfg.seed, &ctx.eval)?,
            best: score_cv(&best.data, k, cfg.seed, &ctx.eval)?,
        }),
        None => None,
    };
    if iterations.len() > 1 && !cfg.holdout {
        warnings.push(
            "the best set is selected by its test-split score, so that score is optimistic; \
             use a holdout split for an unbiased estimate"
                .into(),
        );
    }
    let report = RunReport {
        format: REPORT_FORMAT.to_string(),
        config: cfg.clone(),
        config_hash: cfg.hash(),
        dataset: DatasetSummary {
            target: data.target_name().to_string(),
            n_samples: data.n_samples(),
            descriptors: data.names().into_iter().map(str::to_string).collect(),
        },
        split_hash: ctx.protocol.hash(),
        n_train: ctx.protocol.train.len(),
        n_test: ctx.protocol.test.len(),
        n_holdout: ctx.protocol.holdout.as_ref().map_or(0, Vec::len),
        size_limit: ctx.limit,
        early_stopped,
        iterations,
        best: BestSet {
            iteration: best.iteration,
            v_a: best.score.v_a,
            metrics: best.score.metrics,
            descriptors: provenance(&best.data),
        },
        importance,
        holdout,
        cross_validation,
        warnings,
    };
    Ok((report, best.data))
}

fn run_loop(data: &Dataset, cfg: &RunConfig, learn: bool) -> Result<RunOutput> {
    let ctx = prepare(data, cfg)?;
    let org = score_space(data, &ctx.protocol, &ctx.eval)?;
    let u0 = set_utility(data, &ctx.mi)?;
    let mut iterations = vec![IterationRecord::baseline(0, data.n_descriptors(), u0, &org)];
    let mut best = Best {
        iteration: 0,
        score: org,
        data: data.clone(),
    };

    let mut agent_cfg = cfg.agents.clone();
    if !learn {
        agent_cfg.epsilon_override = Some(1.0);
    }
    let agents = CascadingAgents::new(&cfg.operations, &agent_cfg, &mut stream(cfg.seed, STREAM_INIT))?;
    let mut learner = Learner {
        agents,
        select: stream(cfg.seed, STREAM_SELECT),
        replay: stream(cfg.seed, STREAM_REPLAY),
        ablation: stream(cfg.seed, STREAM_ABLATION),
        learn,
    };

    let mut f = data.clone();
    let mut u_prev = u0;
    let mut groups = partition(&f, cfg, &ctx.mi)?;
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut skips = 0;
    let mut early_stopped = false;
    for t in 1..=cfg.max_iterations {
        let epsilon = agent_cfg.epsilon(t - 1, cfg.max_iterations);
        match step(t, epsilon, &f, &groups, u_prev, cfg, &ctx, &mut learner) {
            Ok(s) => {
                skips = 0;
                let v_a = s.record.v_a.expect("completed iterations are scored");
                if v_a > best.score.v_a {
                    best = Best {
                        iteration: t,
                        score: Score {
                            v_a,
                            metrics: s.record.metrics.expect("completed iterations are scored"),
                        },
                        data: s.scored,
                    };
                }
                log::debug!("iteration {t}: V_A {v_a:.4}, {} descriptors", s.record.n_descriptors);
                iterations.push(s.record);
                trace.extend(s.trace);
                f = s.next;
                groups = s.next_groups;
                u_prev = s.next_utility;
            }
            Err(e) => {
                log::warn!("iteration {t} skipped: {e}");
                warnings.push(format!("iteration {t} skipped: {e}"));
                iterations.push(IterationRecord::skipped(t, e.to_string(), epsilon, f.n_descriptors()));
                skips += 1;
                if skips >= MAX_CONSECUTIVE_SKIPS {
                    return Err(Error::Aborted(format!(
                        "{MAX_CONSECUTIVE_SKIPS} consecutive iterations skipped; last error: {e}"
                    )));
                }
            }
        }
        if let Some(p) = cfg.early_stop_patience {
            if t - best.iteration >= p {
                early_stopped = true;
                break;
            }
        }
    }
    let (report, best) = finish(data, cfg, &ctx, iterations, best, early_stopped, warnings)?;
    Ok(RunOutput {
        report,
        best,
        last: f,
        trace,
        agents: learn.then_some(learner.agents),
    })
}

/// The learned loop: cluster, select, generate, merge, score, reward,
/// update, and size-control, for `max_iterations` rounds.
pub fn run_grfg(data: &Dataset, cfg: &RunConfig) -> Result<RunOutput> {
    if cfg.mode != Mode::Grfg {
        return Err(Error::Config(format!("run_grfg needs grfg mode, got {}", cfg.mode.name())));
    }
    run_loop(data, cfg, true)
}

fn expansion(data: &Dataset, cfg: &RunConfig, ctx: &Context) -> Result<(IterationRecord, Dataset, Vec<String>)> {
    let all: Vec<usize> = (0..data.n_descriptors()).collect();
    let mut generated = Vec::new();
    for &op in cfg.operations.unary() {
        generated.extend(apply_unary_to(data, &all, op, 0.0));
    }
    let pairs = most_similar_pairs(data, cfg.generation.top_k, cfg.generation.center);
    for &op in cfg.operations.binary() {
        generated.extend(apply_binary_pairs(data, &pairs, op));
    }
    let (merged, kept) = dedup_and_merge(data, generated.clone(), &cfg.generation)?;
    let trace = trace_lines(1, &generated, &kept);
    let selected = kbest_select(&merged, ctx.limit, &ctx.mi)?;
    let score = score_space(&selected, &ctx.protocol, &ctx.eval)?;
    let utility = set_utility(&selected, &ctx.mi)?;
    let mut record = IterationRecord::baseline(1, selected.n_descriptors(), utility, &score);
    record.generated = selected
        .columns()
        .iter()
        .filter(|c| !c.is_original())
        .map(|c| c.name().to_string())
        .collect();
    Ok((record, selected, trace))
}

/// Baselines: `org` scores the original set, `rdg` runs the loop with
/// uniformly random choices and no learning, `erg` expands every
/// descriptor once and reduces to the size limit.
pub fn run_baseline(data: &Dataset, cfg: &RunConfig) -> Result<RunOutput> {
    match cfg.mode {
        Mode::Rdg => return run_loop(data, cfg, false),
        Mode::Grfg => return Err(Error::Config("run_baseline needs rdg, erg or org mode".into())),
        Mode::Org | Mode::Erg => {}
    }
    let ctx = prepare(data, cfg)?;
    let org = score_space(data, &ctx.protocol, &ctx.eval)?;
    let u0 = set_utility(data, &ctx.mi)?;
    let mut iterations = vec![IterationRecord::baseline(0, data.n_descriptors(), u0, &org)];
    let mut best = Best {
        iteration: 0,
        score: org,
        data: data.clone(),
    };
    let mut trace = Vec::new();
    let mut last = data.clone();
    if cfg.mode == Mode::Erg {
        let (record, selected, lines) = expansion(data, cfg, &ctx)?;
        let v_a = record.v_a.expect("expansion is scored");
        if v_a > best.score.v_a {
            best = Best {
                iteration: 1,
                score: Score {
                    v_a,
                    metrics: record.metrics.expect("expansion is scored"),
                },
                data: selected.clone(),
            };
        }
        last = selected;
        iterations.push(record);
        trace = lines;
    }
    let (report, best) = finish(data, cfg, &ctx, iterations, best, false, Vec::new())?;
    Ok(RunOutput {
        report,
        best,
        last,
        trace,
        agents: None,
    })
}

/// Dispatches on the configured mode.
pub fn run(data: &Dataset, cfg: &RunConfig) -> Result<RunOutput> {
    match cfg.mode {
        Mode::Grfg => run_grfg(data, cfg),
        _ => run_baseline(data, cfg),
    }
}

/// Writes `report.json`, `best_features.csv` and `trace.log` into `dir`.
pub fn write_outputs(out: &RunOutput, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let report = dir.join("report.json");
    std::fs::write(&report, out.report.to_json() + "\n").map_err(|e| Error::io(&report, e))?;
    export_dataset(&out.best, dir.join("best_features.csv"))?;
    let trace = dir.join("trace.log");
    let mut text = String::from("iteration\tdescriptor\tparents\toperation\trank_score\tstatus\n");
    for line in &out.trace {
        text.push_str(line);
        text.push('\n');
    }
    std::fs::write(&trace, text).map_err(|e| Error::io(&trace, e))?;
    Ok(())
}
