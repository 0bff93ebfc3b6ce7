#include "advlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "advlab/error.hpp"
#include "advlab/parallel.hpp"

namespace advlab {

namespace {

// Stream tags for derive_seed, one per independent random stream.
enum StreamTag : std::uint64_t { kPrompts = 1, kSamples = 2, kGreedy = 3, kMinibatch = 4, kEval = 5 };

void check_finite(std::span<const double> xs, const std::string& what, std::size_t step) {
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i])) {
      std::ostringstream msg;
      msg << what << " entry " << i << " is " << xs[i] << " at step " << step;
      throw Error(ErrorKind::NonFinite, msg.str());
    }
  }
}

std::vector<double> to_tokens(TokenAdvantageMode mode, double scalar, std::size_t length) {
  return mode == TokenAdvantageMode::TerminalOnly ? broadcast_terminal(scalar, length)
                                                  : broadcast_uniform(scalar, length);
}

}  // namespace

std::string to_string(TokenAdvantageMode mode) {
  switch (mode) {
    case TokenAdvantageMode::Uniform: return "uniform";
    case TokenAdvantageMode::SuffixKL: return "suffix_kl";
    case TokenAdvantageMode::TerminalOnly: return "terminal_only";
  }
  return "?";
}

TokenAdvantageMode token_advantage_from_string(const std::string& s) {
  if (s == "uniform") return TokenAdvantageMode::Uniform;
  if (s == "suffix_kl") return TokenAdvantageMode::SuffixKL;
  if (s == "terminal_only") return TokenAdvantageMode::TerminalOnly;
  throw Error(ErrorKind::Config, "unknown token_advantage mode '" + s + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Config, m); };
  if (group_size < 1) fail("group_size must be >= 1");
  if (needs_groups(estimator) && group_size < 2) fail(to_string(estimator) + " requires group_size >= 2");
  if (batch_size < 1 || batch_size % group_size != 0) fail("batch_size must be a positive multiple of group_size");
  if (minibatch_size < 1 || minibatch_size > batch_size) fail("minibatch_size must be in [1, batch_size]");
  if (inner_epochs < 1) fail("inner_epochs must be >= 1");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) fail("clip_eps must be in (0, 1)");
  if (!std::isfinite(step_size)) fail("step_size must be finite");
  if (momentum < 0.0 || momentum >= 1.0) fail("momentum must be in [0, 1)");
  if (kl_beta < 0.0 || kl_lambda < 0.0) fail("kl_beta and kl_lambda must be >= 0");
  if (reward_clip_lo > reward_clip_hi) fail("reward_clip_lo must not exceed reward_clip_hi");
  if (local_eps < 0.0 || global_eps < 0.0) fail("eps values must be >= 0");
  if (std_kind == StdKind::Sample && group_size < 2 && estimator == EstimatorKind::GRPOLocal)
    fail("sample std needs group_size >= 2");
  if (init_scale < 0.0) fail("init_scale must be >= 0");
  if (eval_n < 1 || eval_samples < 1) fail("eval_n and eval_samples must be >= 1");
  if (critic_lr <= 0.0 || critic_lr > 1.0) fail("critic_lr must be in (0, 1]");
}

double ppo_clip_objective(std::span<const double> ratios, std::span<const double> advantages, double clip_eps) {
  require(ratios.size() == advantages.size(), ErrorKind::InvalidDimension, "ratios and advantages differ in length");
  require(!ratios.empty(), ErrorKind::InvalidDimension, "empty sequence");
  double sum = 0.0;
  for (std::size_t t = 0; t < ratios.size(); ++t) {
    const double s = ratios[t];
    require(s > 0.0, ErrorKind::InvalidRatio, "probability ratio must be positive");
    const double a = advantages[t];
    sum += std::min(s * a, std::clamp(s, 1.0 - clip_eps, 1.0 + clip_eps) * a);
  }
  return sum / static_cast<double>(ratios.size());
}

double ppo_clip_objective(const std::vector<std::vector<double>>& ratios, const AdvantageVector& advantages,
                          double clip_eps) {
  require(ratios.size() == advantages.size() && !ratios.empty(), ErrorKind::InvalidDimension,
          "ratio and advantage batches differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) sum += ppo_clip_objective(ratios[i], advantages[i], clip_eps);
  return sum / static_cast<double>(ratios.size());
}

double ppo_surrogate(const PolicyParameters& params, std::span<const Trajectory> batch,
                     const AdvantageVector& advantages, double clip_eps) {
  std::vector<std::vector<double>> ratios;
  ratios.reserve(batch.size());
  for (const auto& traj : batch) {
    const auto logp = sequence_log_probs(params, traj);
    std::vector<double> s(logp.size());
    for (std::size_t t = 0; t < s.size(); ++t) s[t] = std::exp(logp[t] - traj.logp_sample[t]);
    ratios.push_back(std::move(s));
  }
  return ppo_clip_objective(ratios, advantages, clip_eps);
}

SurrogateGradient ppo_surrogate_gradient(const PolicyParameters& params, std::span<const Trajectory> batch,
                                         const AdvantageVector& advantages, double clip_eps) {
  require(batch.size() == advantages.size() && !batch.empty(), ErrorKind::InvalidDimension,
          "advantages not aligned with batch");
  SurrogateGradient out{GradAccumulator(params.shape())};
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  std::vector<double> w;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& traj = batch[i];
    const auto& adv = advantages[i];
    require(adv.size() == traj.size(), ErrorKind::InvalidDimension, "advantage row not aligned with trajectory");
    const auto logp = sequence_log_probs(params, traj);
    const double inv_len = 1.0 / static_cast<double>(traj.size());
    w.assign(traj.size(), 0.0);
    for (std::size_t t = 0; t < traj.size(); ++t) {
      const double s = std::exp(logp[t] - traj.logp_sample[t]);
      const double a = adv[t];
      const bool outside = s < 1.0 - clip_eps || s > 1.0 + clip_eps;
      out.clipped_tokens += outside;
      ++out.tokens;
      // The clipped branch is the active minimum only when it is strictly smaller.
      const bool clipped_active = (a > 0.0 && s > 1.0 + clip_eps) || (a < 0.0 && s < 1.0 - clip_eps);
      if (!clipped_active) w[t] = inv_batch * inv_len * a * s;
    }
    accumulate_score(params, traj.prompt_id, traj.tokens, w, out.grad);
  }
  return out;
}

double reward_clip_scale(double raw, double clip_lo, double clip_hi, double scale) {
  require(clip_lo <= clip_hi, ErrorKind::InvalidParameter, "reward clip bounds are inverted");
  return scale * std::min(std::max(raw, clip_lo), clip_hi);
}

CriticTable train_critic_step(const CriticTable& critic, const PolicyParameters& shape_source,
                              std::span<const Trajectory> batch, const AdvantageVector& targets) {
  require(targets.size() == batch.size(), ErrorKind::InvalidDimension, "critic targets not aligned with batch");
  require(critic.values.size() == shape_source.shape().state_count(), ErrorKind::InvalidDimension,
          "critic table does not match policy states");
  std::vector<double> target_sum(critic.values.size(), 0.0);
  std::vector<std::size_t> visits(critic.values.size(), 0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    require(targets[i].size() == batch[i].size(), ErrorKind::InvalidDimension, "critic target row misaligned");
    const auto states = visited_states(shape_source, batch[i].prompt_id, batch[i].tokens);
    for (std::size_t t = 0; t < states.size(); ++t) {
      const auto r = shape_source.row_of(states[t]);
      target_sum[r] += targets[i][t];
      ++visits[r];
    }
  }
  CriticTable out = critic;
  for (std::size_t s = 0; s < out.values.size(); ++s) {
    if (visits[s] == 0) continue;
    const double target = target_sum[s] / static_cast<double>(visits[s]);
    out.values[s] += out.lr * (target - out.values[s]);
  }
  return out;
}

std::vector<std::vector<std::size_t>> minibatch_partition(std::span<const std::size_t> batch_indices,
                                                          std::size_t minibatch_size, Rng& rng) {
  require(minibatch_size >= 1, ErrorKind::InvalidParameter, "minibatch size must be >= 1");
  std::vector<std::size_t> order(batch_indices.begin(), batch_indices.end());
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<std::vector<std::size_t>> chunks;
  for (std::size_t i = 0; i < order.size(); i += minibatch_size) {
    const auto end = std::min(order.size(), i + minibatch_size);
    chunks.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return chunks;
}

std::vector<std::size_t> select_prompts(const PromptSet& prompts, std::size_t groups, std::size_t step,
                                        std::uint64_t seed) {
  const auto train = prompts.ids(Split::Train);
  require(!train.empty(), ErrorKind::InvalidParameter, "no train prompts");
  // Walk an endless sequence of seeded permutations of the train split, so
  // every prompt is seen once before any repeats.
  std::vector<std::size_t> out;
  out.reserve(groups);
  std::size_t cached_cycle = static_cast<std::size_t>(-1);
  std::vector<std::size_t> perm;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t idx = step * groups + g;
    const std::size_t cycle = idx / train.size();
    if (cycle != cached_cycle) {
      perm = train;
      Rng rng(derive_seed(seed, {kPrompts, cycle}));
      std::shuffle(perm.begin(), perm.end(), rng.engine());
      cached_cycle = cycle;
    }
    out.push_back(perm[idx % train.size()]);
  }
  return out;
}

IterationMetrics run_iteration(TrainerState& state, const TrainConfig& config, const Environment& env,
                               std::size_t step) {
  config.validate();
  require(state.policy.prompts() == env.prompts.size(), ErrorKind::InvalidParameter,
          "policy prompt count does not match the prompt set");
  const std::size_t k = config.group_size;
  const std::size_t n = config.batch_size;
  const std::size_t groups = n / k;

  const PolicyParameters old_policy = state.policy;
  const GroupLayout layout(select_prompts(env.prompts, groups, step, config.seed), k);

  std::vector<Trajectory> batch(n);
  std::vector<double> raw(n);
  parallel_for(n, [&](std::size_t r) {
    Rng rng(derive_seed(config.seed, {kSamples, step, r}));
    batch[r] = sample_trajectory(old_policy, state.reference, layout.prompt_of(r), rng, env.stop_token);
    raw[r] = env.reward(layout.prompt_of(r), batch[r].tokens, rng);
  });
  check_finite(raw, "reward", step);

  std::vector<double> rewards(n);
  for (std::size_t r = 0; r < n; ++r)
    rewards[r] = reward_clip_scale(raw[r], config.reward_clip_lo, config.reward_clip_hi, config.reward_scale);

  // Per-token k1 of the sampling policy against the reference.
  std::vector<std::vector<double>> token_kl(n);
  double kl_sum = 0.0;
  std::size_t token_count = 0;
  for (std::size_t r = 0; r < n; ++r) {
    token_kl[r] = kl_k1(KLRecord(batch[r].logp_sample, batch[r].logp_ref));
    for (double v : token_kl[r]) kl_sum += v;
    token_count += batch[r].size();
  }

  AdvantageVector advantages(n);
  std::vector<double> pre_norm;  // entries whose statistics are reported
  AdvantageVector gae_returns;

  auto scalar_per_row = [&](const std::vector<double>& scalars) {
    check_finite(scalars, to_string(config.estimator) + " advantage", step);
    for (std::size_t r = 0; r < n; ++r) advantages[r] = to_tokens(config.token_advantage, scalars[r], batch[r].size());
  };

  switch (config.estimator) {
    case EstimatorKind::RPlusPlus: {
      if (config.token_advantage == TokenAdvantageMode::SuffixKL) {
        AdvantageVector raw_adv(n);
        for (std::size_t r = 0; r < n; ++r) {
          raw_adv[r] = adv_rpp_token(rewards[r], token_kl[r], config.kl_beta);
          pre_norm.insert(pre_norm.end(), raw_adv[r].begin(), raw_adv[r].end());
        }
        advantages = normalize_global(raw_adv, config.global_eps, config.std_kind);
        for (const auto& row : advantages) check_finite(row, "RPlusPlus advantage", step);
      } else {
        std::vector<double> scalars(n);
        for (std::size_t r = 0; r < n; ++r) scalars[r] = adv_rpp_token(rewards[r], token_kl[r], config.kl_beta).front();
        pre_norm = scalars;
        scalar_per_row(normalize_global(scalars, config.global_eps, config.std_kind));
      }
      break;
    }
    case EstimatorKind::RPlusPlusBaseline: {
      for (std::size_t g = 0; g < groups; ++g) {
        const std::span<const double> grp(rewards.data() + g * k, k);
        const double m = mean(grp);
        for (double v : grp) pre_norm.push_back(v - m);
      }
      scalar_per_row(adv_rpp_baseline(rewards, layout, config.global_eps, config.std_kind));
      break;
    }
    case EstimatorKind::GRPOLocal: {
      std::vector<double> scalars(n);
      for (std::size_t g = 0; g < groups; ++g) {
        const std::span<const double> grp(rewards.data() + g * k, k);
        const auto a = adv_grpo_local(grp, config.local_eps, config.std_kind);
        const double m = mean(grp);
        for (std::size_t i = 0; i < k; ++i) {
          scalars[g * k + i] = a[i];
          pre_norm.push_back(grp[i] - m);
        }
      }
      scalar_per_row(scalars);
      break;
    }
    case EstimatorKind::RLOO: {
      std::vector<double> scalars(n);
      for (std::size_t g = 0; g < groups; ++g) {
        const auto a = adv_rloo(std::span<const double>(rewards.data() + g * k, k));
        std::copy(a.begin(), a.end(), scalars.begin() + static_cast<std::ptrdiff_t>(g * k));
      }
      pre_norm = scalars;
      scalar_per_row(scalars);
      break;
    }
    case EstimatorKind::ReMax: {
      std::vector<double> greedy_reward(groups);
      for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t prompt = layout.prompt_of(g * k);
        const auto greedy = greedy_trajectory(old_policy, state.reference, prompt, env.stop_token);
        Rng rng(derive_seed(config.seed, {kGreedy, step, g}));
        greedy_reward[g] = reward_clip_scale(env.reward(prompt, greedy.tokens, rng), config.reward_clip_lo,
                                             config.reward_clip_hi, config.reward_scale);
      }
      std::vector<double> scalars(n);
      for (std::size_t r = 0; r < n; ++r) scalars[r] = adv_remax(rewards[r], greedy_reward[layout.group_of(r)]);
      pre_norm = scalars;
      scalar_per_row(scalars);
      break;
    }
    case EstimatorKind::GAE: {
      gae_returns.resize(n);
      for (std::size_t r = 0; r < n; ++r) {
        const auto& traj = batch[r];
        const std::size_t L = traj.size();
        std::vector<double> step_rewards(L), values(L);
        const auto states = visited_states(old_policy, traj.prompt_id, traj.tokens);
        for (std::size_t t = 0; t < L; ++t) {
          step_rewards[t] = -config.kl_beta * token_kl[r][t] + (t + 1 == L ? rewards[r] : 0.0);
          values[t] = state.critic.values[old_policy.row_of(states[t])];
        }
        advantages[r] = adv_gae(step_rewards, values, config.gamma, config.gae_lambda);
        check_finite(advantages[r], "GAE advantage", step);
        gae_returns[r].resize(L);
        for (std::size_t t = 0; t < L; ++t) gae_returns[r][t] = advantages[r][t] + values[t];
        pre_norm.insert(pre_norm.end(), advantages[r].begin(), advantages[r].end());
      }
      break;
    }
  }

  // Inner optimisation of the clipped surrogate (minus the KL loss term).
  std::vector<std::size_t> indices(n);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  std::size_t clipped = 0, seen = 0;
  const bool kl_loss = !config.uses_in_reward_kl() && config.kl_lambda > 0.0;
  for (std::size_t epoch = 0; epoch < config.inner_epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, {kMinibatch, step, epoch}));
    for (const auto& chunk : minibatch_partition(indices, config.minibatch_size, rng)) {
      std::vector<Trajectory> mb;
      AdvantageVector mb_adv;
      mb.reserve(chunk.size());
      for (auto i : chunk) {
        mb.push_back(batch[i]);
        mb_adv.push_back(advantages[i]);
      }
      auto sg = ppo_surrogate_gradient(state.policy, mb, mb_adv, config.clip_eps);
      clipped += sg.clipped_tokens;
      seen += sg.tokens;
      if (kl_loss) {
        const WeightedBatch wb{mb, {}};
        GradAccumulator kl_grad = [&] {
          switch (config.kl_estimator) {
            case KLEstimatorKind::K1: return k1_loss_gradient_probe(state.policy, wb);
            case KLEstimatorKind::K3: return k3_loss_gradient(state.policy, wb);
            case KLEstimatorKind::K2: break;
          }
          return k2_loss_gradient(state.policy, wb);
        }();
        sg.grad.add_scaled(kl_grad, -config.kl_lambda);
      }
      if (config.momentum > 0.0) {
        if (!state.velocity) state.velocity.emplace(state.policy.shape());
        state.velocity->scale(config.momentum);
        state.velocity->add_scaled(sg.grad, 1.0);
        state.policy = apply_update(state.policy, *state.velocity, config.step_size);
      } else {
        state.policy = apply_update(state.policy, sg.grad, config.step_size);
      }
    }
  }

  if (config.estimator == EstimatorKind::GAE) {
    state.critic = train_critic_step(state.critic, old_policy, batch, gae_returns);
  }

  IterationMetrics m;
  m.step = step;
  m.reward_mean = mean(raw);
  m.kl_ref = token_count ? kl_sum / static_cast<double>(token_count) : 0.0;
  m.adv_mean = mean(pre_norm);
  m.adv_std = stddev(pre_norm);
  m.clip_frac = seen ? static_cast<double>(clipped) / static_cast<double>(seen) : 0.0;
  if (config.eval_every > 0 && step % config.eval_every == 0) {
    const Split split = env.prompts.ids(Split::HeldOut).empty() ? Split::Train : Split::HeldOut;
    const std::uint64_t eval_seed = derive_seed(config.seed, {kEval, step});
    state.last_eval_reward = evaluate_mean_reward(state.policy, env, split, config.eval_samples, eval_seed);
    state.last_pass_at_n = evaluate_pass_at_n(state.policy, env, split, config.eval_n, eval_seed);
  }
  m.eval_reward = state.last_eval_reward;
  m.pass_at_n = state.last_pass_at_n;
  return m;
}

ExperimentResult run_experiment(const TrainConfig& config, const Environment& env, const PolicyParameters& initial,
                                const MetricsSink& sink) {
  config.validate();
  TrainerState state(initial, config.critic_lr);
  ExperimentResult result{{}, initial};
  result.metrics.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    result.metrics.push_back(run_iteration(state, config, env, step));
    if (sink) sink(result.metrics.back());
  }
  result.final_policy = state.policy;
  return result;
}

}  // namespace advlab
