//! Greedy structure identification of the grid partition.
//!
//! Starting from one membership function per input, each iteration spawns
//! `k` candidates (one more division on a single input), trains them with
//! hybrid learning, keeps the one with the least *training* MSE and accepts
//! it only if its *validation* MSE improves on the last accepted model.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::anfis::{lse_consequents, mse, observed_ranges, train_hybrid, GaussianMf, HybridConfig, LabeledVector, TsModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureConfig {
    /// Hybrid epochs per candidate.
    pub epochs: usize,
    pub hybrid: HybridConfig,
    pub rule_cap: usize,
    /// Relative jitter of initial centres; 0 disables it.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for StructureConfig {
    fn default() -> Self {
        StructureConfig {
            epochs: 50,
            hybrid: HybridConfig::default(),
            rule_cap: 128,
            jitter: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub input: usize,
    pub rule_count: usize,
    /// `None` when the candidate exceeded the rule cap and was skipped.
    pub train_mse: Option<f64>,
    pub val_mse: Option<f64>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureState {
    pub partition_counts: Vec<usize>,
    pub best_model: Option<TsModel>,
    /// Validation MSE of the last accepted model (∞ before the first acceptance).
    pub v: f64,
    /// Input grown by the last accepted step.
    pub s: Option<usize>,
    pub history: Vec<HistoryEntry>,
    pub input_ranges: Vec<(f64, f64)>,
    pub iteration: usize,
}

impl StructureState {
    pub fn new(input_ranges: Vec<(f64, f64)>) -> Self {
        StructureState {
            partition_counts: vec![1; input_ranges.len()],
            best_model: None,
            v: f64::INFINITY,
            s: None,
            history: Vec::new(),
            input_ranges,
            iteration: 0,
        }
    }

    /// Validation MSEs of accepted iterations, in order.
    pub fn accepted_val_mse(&self) -> Vec<f64> {
        self.history
            .iter()
            .filter(|h| h.accepted)
            .filter_map(|h| h.val_mse)
            .collect()
    }

    /// One line per candidate: iteration, input, rules, train MSE, val MSE, accepted.
    pub fn history_log(&self) -> String {
        let mut s = String::from("iteration\tinput\trules\ttrain_mse\tval_mse\taccepted\n");
        for h in &self.history {
            let f = |v: Option<f64>| v.map_or("skipped".to_string(), |x| format!("{x:.6e}"));
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                h.iteration,
                h.input,
                h.rule_count,
                f(h.train_mse),
                f(h.val_mse),
                h.accepted
            );
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub input: usize,
    pub partition_counts: Vec<usize>,
    /// `None` when the rule count would exceed the cap.
    pub model: Option<TsModel>,
}

fn jittered(model: TsModel, cfg: &StructureConfig, iteration: usize, input: usize) -> Result<TsModel> {
    if cfg.jitter <= 0.0 {
        return Ok(model);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((iteration as u64) << 32) ^ input as u64);
    let mfs: Vec<Vec<GaussianMf>> = model
        .memberships()
        .iter()
        .zip(model.input_ranges())
        .map(|(ms, &(a, b))| {
            let step = (b - a).abs() / ms.len() as f64;
            ms.iter()
                .map(|m| GaussianMf {
                    center: m.center + cfg.jitter * step * rng.gen_range(-1.0..1.0),
                    sigma: m.sigma,
                })
                .collect()
        })
        .collect();
    model.with_memberships(mfs)
}

/// One candidate per input, each with that input's division count raised by one.
/// Memberships are freshly initialised and consequents fitted by least squares.
pub fn spawn_candidates(
    state: &StructureState,
    train: &[LabeledVector],
    cfg: &StructureConfig,
) -> Result<Vec<Candidate>> {
    let k = state.partition_counts.len();
    if k == 0 {
        return Err(Error::InvalidParameter("structure search needs at least one input".into()));
    }
    let mut out = Vec::with_capacity(k);
    for m in 0..k {
        let mut counts = state.partition_counts.clone();
        counts[m] += 1;
        let rules: usize = counts.iter().product();
        let model = if rules > cfg.rule_cap {
            None
        } else {
            let init = TsModel::initialize(&counts, &state.input_ranges)?;
            let init = jittered(init, cfg, state.iteration, m)?;
            Some(lse_consequents(&init, train, cfg.hybrid.ridge)?)
        };
        out.push(Candidate {
            input: m,
            partition_counts: counts,
            model,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct StructureResult {
    pub model: TsModel,
    pub state: StructureState,
}

pub fn identify_structure(
    train: &[LabeledVector],
    val: &[LabeledVector],
    cfg: &StructureConfig,
) -> Result<StructureResult> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let ranges = observed_ranges(train)?;
    if val.iter().any(|v| v.x.len() != ranges.len()) {
        return Err(Error::DimensionMismatch {
            expected: ranges.len(),
            got: val.iter().map(|v| v.x.len()).find(|&l| l != ranges.len()).unwrap_or(0),
        });
    }
    let mut state = StructureState::new(ranges);
    loop {
        let candidates = spawn_candidates(&state, train, cfg)?;
        // Candidates are independent; train them concurrently and log in input order.
        let outcomes: Vec<Option<Result<(TsModel, f64, f64)>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = candidates
                .iter()
                .map(|c| {
                    c.model.as_ref().map(|m| {
                        scope.spawn(move || -> Result<(TsModel, f64, f64)> {
                            let (m, e) = train_hybrid(m, train, cfg.epochs, &cfg.hybrid)?;
                            let v = mse(&m, val)?;
                            Ok((m, e, v))
                        })
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.map(|h| h.join().expect("candidate training panicked")))
                .collect()
        });
        let mut trained: Vec<(usize, TsModel, f64)> = Vec::new();
        let first_entry = state.history.len();
        for (c, outcome) in candidates.iter().zip(outcomes) {
            let rule_count: usize = c.partition_counts.iter().product();
            let (train_mse, val_mse) = match outcome {
                None => (None, None),
                Some(r) => {
                    let (m, e, v) = r?;
                    trained.push((c.input, m, e));
                    (Some(e), Some(v))
                }
            };
            state.history.push(HistoryEntry {
                iteration: state.iteration,
                input: c.input,
                rule_count,
                train_mse,
                val_mse,
                accepted: false,
            });
        }
        // Least training MSE; ties within 1e-12 go to the lower input index.
        let mut best: Option<&(usize, TsModel, f64)> = None;
        for t in &trained {
            best = match best {
                Some(b) if t.2 < b.2 - 1e-12 => Some(t),
                None => Some(t),
                keep => keep,
            };
        }
        let Some((input, model, _)) = best else {
            break;
        };
        let entry = first_entry
            + state.history[first_entry..]
                .iter()
                .position(|h| h.input == *input)
                .expect("candidate logged");
        let t_val = state.history[entry].val_mse.expect("trained candidate has val MSE");
        if t_val >= state.v {
            break;
        }
        state.history[entry].accepted = true;
        state.v = t_val;
        state.s = Some(*input);
        state.partition_counts[*input] += 1;
        state.best_model = Some(model.clone());
        state.iteration += 1;
    }
    let model = match &state.best_model {
        Some(m) => m.clone(),
        None => {
            // Cap too small for any split: fall back to the single-rule model.
            let base = TsModel::initialize(&state.partition_counts, &state.input_ranges)?;
            train_hybrid(&base, train, cfg.epochs, &cfg.hybrid)?.0
        }
    };
    Ok(StructureResult { model, state })
}

/// Extra hybrid epochs on an accepted structure. Never returns a model with
/// a higher training MSE than the input.
pub fn final_polish(
    model: &TsModel,
    train: &[LabeledVector],
    epochs: usize,
    hybrid: &HybridConfig,
) -> Result<TsModel> {
    if epochs == 0 {
        return Ok(model.clone());
    }
    let before = mse(model, train)?;
    let (polished, after) = train_hybrid(model, train, epochs, hybrid)?;
    Ok(if after <= before { polished } else { model.clone() })
}
