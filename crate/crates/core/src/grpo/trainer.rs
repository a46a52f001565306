use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    compute_advantages, grpo_loss, GroupRollout, GrpoConfig, GrpoError, ResponseRollout,
    RewardClient, RewardScores,
};
use crate::losses::{grpo_total_loss, huber, LossWeights};
use crate::model::vocab::{decode_tokens, encode_prompt, SEP};
use crate::model::{
    generate, regression_srcc, sequence_logprobs, tempered_log_softmax, AdamW, DualHeadModel, PoolStrategy,
    SamplingConfig, SftSample,
};
use crate::service::schema::ScoreItem;
use crate::util::splitmix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub prompt_id: String,
    #[serde(default)]
    pub source_image: String,
    #[serde(default)]
    pub edited_image: String,
    #[serde(default)]
    pub instruction: String,
    /// Pre-tokenized prompt; when absent the text fields are encoded.
    #[serde(default)]
    pub tokens: Option<Vec<u32>>,
    #[serde(default)]
    pub mos: Option<[f64; 3]>,
}

impl PromptRecord {
    pub fn prompt_tokens(&self, model: &DualHeadModel, max_prompt_len: usize) -> Vec<u32> {
        let limit = max_prompt_len.min(model.config.max_seq_len.saturating_sub(1)).max(1);
        let mut toks = match &self.tokens {
            Some(t) => t.clone(),
            None => encode_prompt(
                &[("source", &self.source_image), ("edited", &self.edited_image), ("instruction", &self.instruction)],
                model.config.vocab_size,
                limit,
            ),
        };
        if toks.len() > limit {
            // Keep the tail so the pooled end-of-prompt position survives.
            toks.drain(..toks.len() - limit);
        }
        if toks.is_empty() {
            toks.push(SEP);
        }
        toks
    }

    fn score_item(&self, critic: String) -> ScoreItem {
        let or = |s: &str, suffix: &str| if s.trim().is_empty() { format!("{}/{suffix}", self.prompt_id) } else { s.to_string() };
        ScoreItem {
            source_image: or(&self.source_image, "source"),
            edited_image: or(&self.edited_image, "edited"),
            instruction: or(&self.instruction, "instruction"),
            critic: if critic.trim().is_empty() { "(empty)".into() } else { critic },
        }
    }
}

/// Whether draw `k` (0-based) of a `mos:pure` cycle comes from the MOS
/// stratum. Spreads the MOS draws evenly: for 7:3 every window of ten
/// consecutive draws holds exactly seven.
pub fn is_mos_slot(k: u64, mos: usize, pure: usize) -> bool {
    let (m, n) = (mos as u128, (mos + pure) as u128);
    let k = k as u128;
    (k + 1) * m / n > k * m / n
}

/// Draws prompt indices at a fixed MOS:pure ratio, cycling through each
/// stratum in a freshly shuffled order per pass.
#[derive(Debug, Clone)]
pub struct PromptMixer {
    strata: [Vec<usize>; 2],
    cursor: [usize; 2],
    pass: [u64; 2],
    ratio: (usize, usize),
    drawn: u64,
    seed: u64,
}

impl PromptMixer {
    pub fn new(prompts: &[PromptRecord], mos: usize, pure: usize, seed: u64) -> Result<Self, GrpoError> {
        if prompts.is_empty() {
            return Err(GrpoError::EmptyManifest);
        }
        let with: Vec<usize> = (0..prompts.len()).filter(|&i| prompts[i].mos.is_some()).collect();
        let without: Vec<usize> = (0..prompts.len()).filter(|&i| prompts[i].mos.is_none()).collect();
        if mos > 0 && with.is_empty() {
            return Err(GrpoError::RatioInfeasible { mos, pure, missing: "MOS-bearing" });
        }
        if pure > 0 && without.is_empty() {
            return Err(GrpoError::RatioInfeasible { mos, pure, missing: "pure" });
        }
        let mut m = PromptMixer { strata: [with, without], cursor: [0, 0], pass: [0, 0], ratio: (mos, pure), drawn: 0, seed };
        m.reshuffle(0);
        m.reshuffle(1);
        Ok(m)
    }

    fn reshuffle(&mut self, s: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(self.pass[s] * 2 + s as u64)));
        self.strata[s].sort_unstable();
        self.strata[s].shuffle(&mut rng);
        self.cursor[s] = 0;
    }

    /// Next prompt index and whether it came from the MOS stratum.
    pub fn next_prompt(&mut self) -> (usize, bool) {
        let mos = is_mos_slot(self.drawn, self.ratio.0, self.ratio.1);
        self.drawn += 1;
        let s = if mos { 0 } else { 1 };
        if self.cursor[s] == self.strata[s].len() {
            self.pass[s] += 1;
            self.reshuffle(s);
        }
        let idx = self.strata[s][self.cursor[s]];
        self.cursor[s] += 1;
        (idx, mos)
    }
}

/// Samples `group_size` responses, scores them and fills in reference
/// log-probs and advantages. Old log-probs are the sampling-time values.
pub fn collect_group(
    policy: &DualHeadModel,
    reference: &DualHeadModel,
    client: &dyn RewardClient,
    prompt: &PromptRecord,
    config: &GrpoConfig,
    seed: u64,
) -> Result<GroupRollout, GrpoError> {
    let tokens = prompt.prompt_tokens(policy, config.max_prompt_len);
    let room = policy.config.max_seq_len - tokens.len();
    let sampling = SamplingConfig {
        temperature: config.temperature,
        top_p: config.top_p,
        max_new: config.max_completion_len.min(room),
        stop_token: config.stop_token,
    };
    let mut gens = Vec::with_capacity(config.group_size);
    for i in 0..config.group_size {
        gens.push(generate(policy, &tokens, &sampling, splitmix64(seed ^ splitmix64(i as u64 + 1)))?);
    }
    let items: Vec<ScoreItem> = gens.iter().map(|g| prompt.score_item(decode_tokens(&g.tokens))).collect();
    let scored = client
        .score(&items)
        .map_err(|message| GrpoError::RewardUnavailable { prompt_id: prompt.prompt_id.clone(), message })?;
    if scored.len() != gens.len() {
        return Err(GrpoError::RewardUnavailable {
            prompt_id: prompt.prompt_id.clone(),
            message: format!("{} scores for {} responses", scored.len(), gens.len()),
        });
    }
    let scores: Vec<RewardScores> = scored
        .iter()
        .map(|s| RewardScores::new([s.s_log, s.s_acc, s.s_use], config.reward_weights))
        .collect();
    let rewards: Vec<f64> = scores.iter().map(|s| s.reward).collect();
    let advantages = compute_advantages(&rewards, config.eps_std);
    let mut responses = Vec::with_capacity(gens.len());
    for ((g, s), a) in gens.into_iter().zip(scores).zip(advantages) {
        let logprob_ref = sequence_logprobs(reference, &tokens, &g.tokens, config.temperature)?;
        responses.push(ResponseRollout {
            logprob_policy: g.logprobs.clone(),
            logprob_old: g.logprobs,
            logprob_ref,
            tokens: g.tokens,
            scores: s,
            advantage: a,
        });
    }
    Ok(GroupRollout { prompt_id: prompt.prompt_id.clone(), prompt: tokens, responses })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoTelemetry {
    pub step: usize,
    pub mean_reward: f64,
    pub kl: f64,
    pub surrogate: f64,
    pub probe_srcc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoRun {
    pub telemetry: Vec<GrpoTelemetry>,
    /// Probe SRCC before the first update.
    pub initial_probe_srcc: Option<f64>,
    /// Probe SRCC after the last update.
    pub final_probe_srcc: Option<f64>,
}

struct StepStats {
    reward: f64,
    kl: f64,
    surrogate: f64,
}

/// Loss gradient of one prompt group with respect to the policy parameters.
fn group_gradient(
    policy: &DualHeadModel,
    rollout: &mut GroupRollout,
    mos: Option<[f64; 3]>,
    config: &GrpoConfig,
    mut dropout: Option<&mut ChaCha8Rng>,
) -> Result<(Vec<f64>, f64, f64), GrpoError> {
    let v = policy.config.vocab_size;
    let plen = rollout.prompt.len();
    let mut forwards = Vec::with_capacity(rollout.responses.len());
    for (i, r) in rollout.responses.iter_mut().enumerate() {
        let mut seq = rollout.prompt.clone();
        seq.extend_from_slice(&r.tokens);
        // Only the first response carries the regression-head term.
        let rng = if i == 0 && mos.is_some() { dropout.as_deref_mut() } else { None };
        let (out, cache) = policy.forward_with(&seq, plen, PoolStrategy::Prefill, rng)?;
        let rows: Vec<Vec<f64>> = (0..r.tokens.len())
            .map(|t| tempered_log_softmax(&out.lm_logits[(plen - 1 + t) * v..(plen + t) * v], config.temperature))
            .collect();
        r.logprob_policy = r.tokens.iter().zip(&rows).map(|(&tok, row)| row[tok as usize]).collect();
        forwards.push((out.scores, cache, rows));
    }
    let rep = grpo_loss(rollout, config)?;
    let mos_loss = match mos {
        Some(target) => Some(huber(&forwards[0].0, &target, config.huber_delta)?),
        None => None,
    };
    let weights = LossWeights { grpo: config.lambda_grpo, mos: config.lambda_mos, ..LossWeights::default() };
    let total = grpo_total_loss(&rep.loss, mos_loss.as_ref(), &weights);
    let n_tok = rep.loss.grad.len();
    let dscores = if mos_loss.is_some() { [total.grad[n_tok], total.grad[n_tok + 1], total.grad[n_tok + 2]] } else { [0.0; 3] };

    let mut grad = vec![0.0; policy.num_params()];
    let mut k = 0;
    for (i, (r, (_, cache, rows))) in rollout.responses.iter().zip(&forwards).enumerate() {
        let seq_len = plen + r.tokens.len();
        let mut dlogits = vec![0.0; seq_len * v];
        for (t, (&tok, row)) in r.tokens.iter().zip(rows).enumerate() {
            let g = total.grad[k] / config.temperature;
            k += 1;
            let base = (plen - 1 + t) * v;
            for (j, lp) in row.iter().enumerate() {
                dlogits[base + j] -= g * lp.exp();
            }
            dlogits[base + tok as usize] += g;
        }
        let ds = if i == 0 { dscores } else { [0.0; 3] };
        let g = policy.backward(cache, Some(&dlogits), ds);
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((grad, rep.kl, rep.surrogate))
}

/// Runs `config.steps` GRPO updates on `policy`. `reference` stays frozen;
/// `probe` is scored every `probe_every` steps.
pub fn train_grpo(
    policy: &mut DualHeadModel,
    reference: &DualHeadModel,
    client: &dyn RewardClient,
    prompts: &[PromptRecord],
    probe: &[SftSample],
    config: &GrpoConfig,
) -> Result<GrpoRun, GrpoError> {
    config.validate()?;
    let mut mixer = PromptMixer::new(prompts, config.mix_mos, config.mix_pure, config.seed)?;
    let mut optimizer = AdamW::new(
        config.optimizer,
        policy.num_params(),
        config.steps * config.inner_epochs,
        policy.layout().regression_head_start(),
    );
    let mut dropout = ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ 0x6770));
    let probe_srcc = |m: &DualHeadModel| -> Result<Option<f64>, GrpoError> {
        Ok(if probe.len() >= 2 { Some(regression_srcc(m, probe)?) } else { None })
    };
    let initial_probe_srcc = probe_srcc(policy)?;
    let mut telemetry = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let probe_now = match step {
            0 => initial_probe_srcc,
            _ if config.probe_every > 0 && step % config.probe_every == 0 => probe_srcc(policy)?,
            _ => None,
        };
        let mut batch = Vec::with_capacity(config.prompts_per_step);
        for j in 0..config.prompts_per_step {
            let (idx, _) = mixer.next_prompt();
            let seed = splitmix64(config.seed ^ splitmix64(((step as u64) << 16) | j as u64));
            let rollout = collect_group(policy, reference, client, &prompts[idx], config, seed)?;
            batch.push((rollout, prompts[idx].mos));
        }
        let reward = batch.iter().flat_map(|(r, _)| r.responses.iter().map(|x| x.scores.reward)).sum::<f64>()
            / (batch.len() * config.group_size) as f64;
        let mut stats = StepStats { reward, kl: 0.0, surrogate: 0.0 };
        for epoch in 0..config.inner_epochs {
            let mut grad = vec![0.0; policy.num_params()];
            for (rollout, mos) in batch.iter_mut() {
                let (g, kl, surr) = group_gradient(policy, rollout, *mos, config, Some(&mut dropout))?;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
                if epoch == 0 {
                    stats.kl += kl / config.prompts_per_step as f64;
                    stats.surrogate += surr / config.prompts_per_step as f64;
                }
            }
            let scale = 1.0 / config.prompts_per_step as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            optimizer.step(&mut policy.params, &grad);
        }
        telemetry.push(GrpoTelemetry {
            step,
            mean_reward: stats.reward,
            kl: stats.kl,
            surrogate: stats.surrogate,
            probe_srcc: probe_now,
        });
    }
    Ok(GrpoRun { telemetry, initial_probe_srcc, final_probe_srcc: probe_srcc(policy)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grpo::InProcessRewardClient;
    use crate::model::{HeadVariant, ToyBackboneConfig};
    use crate::service::backend::{ConstantScorer, HashScorer};

    fn prompts(n_mos: usize, n_pure: usize) -> Vec<PromptRecord> {
        (0..n_mos + n_pure)
            .map(|i| PromptRecord {
                prompt_id: format!("p{i}"),
                source_image: String::new(),
                edited_image: String::new(),
                instruction: String::new(),
                tokens: Some(vec![1, 20 + (i % 10) as u32, 2]),
                mos: (i < n_mos).then_some([0.5, 0.5, 0.5]),
            })
            .collect()
    }

    fn policy() -> DualHeadModel {
        let cfg = ToyBackboneConfig { vocab_size: 32, hidden_size: 8, layers: 1, heads: 2, max_seq_len: 16, seed: 2 };
        DualHeadModel::new(cfg, HeadVariant::Evaluator).unwrap()
    }

    #[test]
    fn mos_slots_follow_ratio() {
        let slots: Vec<bool> = (0..10).map(|k| is_mos_slot(k, 7, 3)).collect();
        assert_eq!(slots.iter().filter(|&&b| b).count(), 7);
        for start in 0..50u64 {
            assert_eq!((start..start + 10).filter(|&k| is_mos_slot(k, 7, 3)).count(), 7);
        }
        assert!((0..20).all(|k| is_mos_slot(k, 1, 0)));
        assert!((0..20).all(|k| !is_mos_slot(k, 0, 1)));
    }

    #[test]
    fn mixer_errors_and_coverage() {
        assert!(matches!(PromptMixer::new(&[], 7, 3, 0), Err(GrpoError::EmptyManifest)));
        assert!(matches!(PromptMixer::new(&prompts(0, 3), 7, 3, 0), Err(GrpoError::RatioInfeasible { .. })));
        assert!(matches!(PromptMixer::new(&prompts(3, 0), 7, 3, 0), Err(GrpoError::RatioInfeasible { .. })));
        assert!(PromptMixer::new(&prompts(3, 0), 1, 0, 0).is_ok());
        let ps = prompts(7, 3);
        let mut m = PromptMixer::new(&ps, 7, 3, 1).unwrap();
        let mut seen = [0; 10];
        for _ in 0..100 {
            let (i, mos) = m.next_prompt();
            assert_eq!(mos, ps[i].mos.is_some());
            seen[i] += 1;
        }
        assert!(seen.iter().all(|&c| c == 10));
    }

    #[test]
    fn constant_rewards_zero_advantages() {
        let p = policy();
        let client = InProcessRewardClient { scorer: ConstantScorer([0.2, 0.9, 0.1]) };
        let cfg = GrpoConfig { max_completion_len: 5, ..Default::default() };
        let g = collect_group(&p, &p, &client, &prompts(1, 0)[0], &cfg, 3).unwrap();
        assert!(g.responses.iter().all(|r| r.advantage == 0.0));
        assert!(g.responses.iter().all(|r| (r.scores.reward - 0.45).abs() < 1e-12));
        assert_eq!(g, collect_group(&p, &p, &client, &prompts(1, 0)[0], &cfg, 3).unwrap());
    }

    #[test]
    fn group_gradient_matches_finite_differences() {
        let p = policy();
        let reference = DualHeadModel::new(ToyBackboneConfig { seed: 9, ..p.config }, HeadVariant::Evaluator).unwrap();
        let client = InProcessRewardClient { scorer: HashScorer::default() };
        let cfg = GrpoConfig { max_completion_len: 4, stop_token: None, ..Default::default() };
        let rollout = collect_group(&p, &reference, &client, &prompts(1, 0)[0], &cfg, 5).unwrap();
        let target = [0.3, 0.6, 0.9];
        let mos = Some(target);
        let loss_at = |m: &DualHeadModel| {
            let mut r = rollout.clone();
            let v = m.config.vocab_size;
            for resp in &mut r.responses {
                let mut seq = r.prompt.clone();
                seq.extend_from_slice(&resp.tokens);
                let out = m.forward(&seq, r.prompt.len()).unwrap();
                resp.logprob_policy = resp
                    .tokens
                    .iter()
                    .enumerate()
                    .map(|(t, &tok)| {
                        let row = &out.lm_logits[(r.prompt.len() - 1 + t) * v..(r.prompt.len() + t) * v];
                        tempered_log_softmax(row, cfg.temperature)[tok as usize]
                    })
                    .collect();
            }
            let rep = grpo_loss(&r, &cfg).unwrap();
            let scores = m.score(&r.prompt).unwrap();
            let h = huber(&scores, &target, 1.0).unwrap();
            cfg.lambda_grpo * rep.loss.value + cfg.lambda_mos * h.value
        };
        let mut r = rollout.clone();
        let (g, _, _) = group_gradient(&p, &mut r, mos, &cfg, None).unwrap();
        let mut probe = p.clone();
        let fd = crate::losses::fd::gradient(&p.params, 1e-5, |x| {
            probe.params.copy_from_slice(x);
            loss_at(&probe)
        });
        assert!(crate::util::relative_error(&g, &fd) < 1e-4);
    }

    #[test]
    fn constant_reward_without_kl_leaves_policy_unchanged() {
        let mut p = policy();
        let reference = DualHeadModel::new(ToyBackboneConfig { seed: 9, ..p.config }, HeadVariant::Evaluator).unwrap();
        let client = InProcessRewardClient { scorer: ConstantScorer([0.5; 3]) };
        let before = p.params.clone();
        let cfg = GrpoConfig { kl_beta: 0.0, mix_mos: 0, mix_pure: 1, steps: 3, max_completion_len: 4, probe_every: 0, ..Default::default() };
        train_grpo(&mut p, &reference, &client, &prompts(0, 2), &[], &cfg).unwrap();
        assert_eq!(p.params, before);
        let cfg = GrpoConfig { kl_beta: 0.04, ..cfg };
        train_grpo(&mut p, &reference, &client, &prompts(0, 2), &[], &cfg).unwrap();
        assert_ne!(p.params, before);
    }
}
