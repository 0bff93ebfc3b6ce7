// Executable verification suites behind `advlab verify`.
#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "advlab/cli.hpp"
#include "advlab/error.hpp"
#include "advlab/klpen.hpp"
#include "advlab/trainer.hpp"

namespace advlab {

namespace {

using nlohmann::json;

ProbeRow row(std::string probe, const json& params, double estimate, double se, std::optional<double> reference,
             Verdict verdict) {
  return ProbeRow{std::move(probe), params.dump(), estimate, se, reference, verdict};
}

Verdict pass_if(bool ok) { return ok ? Verdict::Pass : Verdict::Fail; }

PolicyParameters random_policy(Rng& rng, bool allow_history) {
  PolicyShape shape;
  shape.prompts = 1 + rng.index(3);
  shape.max_len = 1 + rng.index(4);
  shape.vocab = 2 + rng.index(4);
  shape.conditioning = allow_history && rng.uniform() < 0.5 ? Conditioning::History : Conditioning::Position;
  shape.shared_table = rng.uniform() < 0.5;
  return init_policy(shape, 1.5, rng.engine()());
}

// ---------------------------------------------------------------- bias suite

void bias_suite(const ProbeConfig& probe, std::vector<ProbeRow>& out) {
  const std::size_t trials = probe.trials;
  std::uint64_t stream = 0;
  auto next_seed = [&] { return derive_seed(probe.probe_seed, {0xB1A5, stream++}); };

  // N = 2: A_1 = sign(eps_1 - eps_2), so E[A_1 | eps] = 2 Phi(eps / sigma) - 1.
  for (double eps : {0.5, 1.0, 2.0}) {
    BiasProbeConfig cfg{2, 1.0, eps, trials, next_seed()};
    const auto r = mc_conditional_advantage(cfg);
    const json params{{"N", 2}, {"sigma", 1.0}, {"eps_i", eps}, {"trials", trials}};
    out.push_back(row("cond_adv_n2_closed_form", params, r.estimate, r.stderr_mean, r.reference,
                      judge_agreement(r.estimate, r.stderr_mean, *r.reference, 0.01)));
    if (eps == 1.0) {
      out.push_back(row("cond_adv_n2_vs_unbiased", params, r.estimate, r.stderr_mean, eps,
                        judge_separation(r.estimate - eps, r.stderr_mean)));
    }
  }

  {
    BiasProbeConfig cfg{4, 1.0, 0.0, trials, next_seed()};
    const auto r = mc_conditional_advantage(cfg);
    const bool ok = std::abs(r.estimate) <= 3.0 * r.stderr_mean;
    out.push_back(row("cond_adv_symmetry", json{{"N", 4}, {"sigma", 1.0}, {"eps_i", 0.0}, {"trials", trials}},
                      r.estimate, r.stderr_mean, 0.0, pass_if(ok)));
  }

  for (std::size_t n : {2, 4, 8, 64}) {
    for (double sigma : {0.5, 1.0, 2.0}) {
      for (double eps : {0.0, 1.0, 2.0}) {
        BiasProbeConfig cfg{n, sigma, eps, trials, next_seed()};
        const auto r = cond_d2_monte_carlo(cfg, 0.01);
        out.push_back(row("cond_d2", json{{"N", n}, {"sigma", sigma}, {"eps_i", eps}, {"trials", trials}},
                          r.estimate, r.stderr_mean, r.reference, r.verdict));
      }
    }
  }

  {
    const std::vector<double> grid{0.5, 2.0};
    const auto c = unbiasedness_contradiction_check(4, 1.0, grid, trials, next_seed());
    out.push_back(row("g_nonconstant_n4", json{{"N", 4}, {"sigma", 1.0}, {"eps_grid", grid}, {"trials", trials}},
                      c.max_difference, c.combined_se, std::nullopt, c.verdict));
  }

  for (double eps : {1.0, 2.0}) {
    BiasProbeConfig cfg{1024, 1.0, eps, trials, next_seed()};
    const auto r = mc_conditional_advantage(cfg);
    out.push_back(row("convergence_n1024", json{{"N", 1024}, {"sigma", 1.0}, {"eps_i", eps}, {"trials", trials}},
                      r.estimate, r.stderr_mean, eps, judge_agreement(r.estimate, r.stderr_mean, eps, 0.01 * eps)));
  }
}

// ------------------------------------------------------------------ KL suite

void kl_suite(const ProbeConfig& probe, std::vector<ProbeRow>& out) {
  Rng rng(derive_seed(probe.probe_seed, {0x4B4C}));

  // k2 gradient and the reverse-KL practical gradient on one sampled batch.
  {
    const PolicyShape shape{2, 3, 3};
    const auto theta = init_policy(shape, 1.0, 11);
    const auto ref = init_policy(shape, 1.0, 12);
    std::vector<Trajectory> batch;
    for (std::size_t i = 0; i < 512; ++i) batch.push_back(sample_trajectory(theta, ref, i % 2, rng));
    const auto k2 = k2_loss_gradient(theta, {batch, {}});
    const auto rkl = rkl_gradient_reference(theta, {batch, {}});
    const double err = relative_error(k2, rkl);
    out.push_back(row("k2_equals_rkl_batch", json{{"samples", 512}, {"V", 3}, {"T", 3}}, err, 0.0, 0.0,
                      pass_if(k2 == rkl)));
  }

  // Enumerated k2 gradient against the symbolic reverse-KL gradient.
  {
    const PolicyShape shape{1, 2, 2};
    const auto theta = init_policy(shape, 1.0, 21);
    const auto ref = init_policy(shape, 1.0, 22);
    const auto en = enumerate_trajectories(theta, ref, 0);
    const auto k2 = k2_loss_gradient(theta, {en.trajectories, en.weights});
    const auto states = visited_states(theta, 0, en.trajectories.front().tokens);
    const auto exact = exact_rkl_gradient(theta, ref, states, 1.0 / static_cast<double>(shape.max_len));
    const double err = relative_error(k2, exact);
    out.push_back(row("k2_enumerated_vs_exact_rkl", json{{"V", 2}, {"T", 2}}, err, 0.0, 0.0, pass_if(err < 1e-6)));
  }

  // k1 as a loss never sees the reference.
  {
    const PolicyShape shape{1, 3, 3};
    const auto theta = init_policy(shape, 1.0, 31);
    const auto ref_a = init_policy(shape, 1.0, 32);
    const auto ref_b = init_policy(shape, 3.0, 33);
    std::vector<Trajectory> a, b;
    for (std::size_t i = 0; i < 256; ++i) {
      auto t = sample_trajectory(theta, ref_a, 0, rng);
      a.push_back(t);
      t.logp_ref = sequence_log_probs(ref_b, t);
      b.push_back(std::move(t));
    }
    const bool same = k1_loss_gradient_probe(theta, {a, {}}) == k1_loss_gradient_probe(theta, {b, {}});
    out.push_back(row("k1_reference_independent", json{{"samples", 256}}, same ? 0.0 : 1.0, 0.0, 0.0, pass_if(same)));
  }

  // k3 weight variance blows up as pi_theta(y*) shrinks; k2's does not.
  {
    std::vector<double> k3v, k2v;
    for (double x : {1e-1, 1e-2, 1e-3}) {
      const std::vector<double> p{x, 1.0 - x}, q{0.5, 0.5};
      const auto r = k3_variance_probe(p, q, probe.trials, derive_seed(probe.probe_seed, {0x3C, k3v.size()}));
      k3v.push_back(r.k3_weight_variance);
      k2v.push_back(r.k2_weight_variance);
      out.push_back(row("k3_weight_variance", json{{"pi_theta_y", x}, {"pi_ref_y", 0.5}, {"trials", probe.trials}},
                        r.k3_weight_variance, 0.0, r.k3_exact,
                        judge_agreement(r.k3_weight_variance, 0.0, r.k3_exact, 0.1 * r.k3_exact)));
      out.push_back(row("k2_weight_variance", json{{"pi_theta_y", x}, {"pi_ref_y", 0.5}, {"trials", probe.trials}},
                        r.k2_weight_variance, 0.0, r.k2_exact,
                        judge_agreement(r.k2_weight_variance, 0.0, r.k2_exact, 0.1 * r.k2_exact)));
    }
    const bool increasing = k3v[0] < k3v[1] && k3v[1] < k3v[2];
    const double k2_growth = k2v.back() / k2v.front();
    out.push_back(row("k3_variance_blowup", json{{"sweep", {1e-1, 1e-2, 1e-3}}}, k3v.back() / k3v.front(), 0.0,
                      std::nullopt, pass_if(increasing && k2_growth < 10.0)));
  }

  // Second-order agreement of k2 and k3 for small log-ratios.
  {
    bool ok = true;
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const double rho = rng.uniform(-1e-3, 1e-3);
      const KLRecord rec({rho - 1.0}, {-1.0});
      const double gap = std::abs(kl_k2(rec)[0] - kl_k3(rec).values[0]);
      worst = std::max(worst, gap / std::max(std::pow(std::abs(rho), 3), 1e-300));
      ok = ok && gap <= std::pow(std::abs(rho), 3);
    }
    out.push_back(row("k2_k3_second_order", json{{"max_abs_rho", 1e-3}, {"samples", 1000}}, worst, 0.0, 1.0,
                      pass_if(ok)));
  }

  // Batch mean of k1 is a consistent estimator of the sequence KL.
  {
    const PolicyShape shape{1, 2, 2};
    const auto theta = init_policy(shape, 1.0, 41);
    const auto ref = init_policy(shape, 1.0, 42);
    const auto states = visited_states(theta, 0, std::vector<Token>{0, 0});
    const double exact = exact_state_kl(theta, ref, states);
    Moments m;
    Rng sampler(derive_seed(probe.probe_seed, {0x4B31}));
    for (std::size_t i = 0; i < probe.trials; ++i) {
      const auto t = sample_trajectory(theta, ref, 0, sampler);
      double s = 0.0;
      for (double v : kl_k1(KLRecord(t.logp_sample, t.logp_ref))) s += v;
      m.add(s);
    }
    const bool ok = std::abs(m.mean() - exact) <= 3.0 * m.stderr_mean();
    out.push_back(row("k1_mean_consistent", json{{"V", 2}, {"T", 2}, {"trials", probe.trials}}, m.mean(),
                      m.stderr_mean(), exact, pass_if(ok)));
  }
}

// ----------------------------------------------------------- gradient suite

void gradient_suite(const ProbeConfig& probe, std::vector<ProbeRow>& out) {
  Rng rng(derive_seed(probe.probe_seed, {0x6AD}));
  constexpr int kInstances = 100;
  constexpr double kStep = 1e-5;

  double worst_score = 0.0;
  for (int i = 0; i < kInstances; ++i) {
    const auto params = random_policy(rng, true);
    const auto traj = sample_trajectory(params, rng.index(params.prompts()), rng);
    const auto analytic = log_prob_gradient(params, traj);
    const auto fd = finite_difference_gradient(
        [&](const PolicyParameters& p) {
          double s = 0.0;
          for (double v : sequence_log_probs(p, traj)) s += v;
          return s;
        },
        params, kStep);
    worst_score = std::max(worst_score, relative_error(analytic, fd));
  }
  out.push_back(row("log_prob_gradient_fd", json{{"instances", kInstances}, {"step", kStep}}, worst_score, 0.0,
                    0.0, pass_if(worst_score < 1e-6)));

  double worst_ppo = 0.0, worst_reinforce = 0.0;
  for (int i = 0; i < kInstances; ++i) {
    const auto params = random_policy(rng, true);
    std::vector<Trajectory> batch;
    AdvantageVector adv;
    const std::size_t b = 1 + rng.index(4);
    for (std::size_t j = 0; j < b; ++j) {
      batch.push_back(sample_trajectory(params, rng.index(params.prompts()), rng));
      std::vector<double> a(batch.back().size());
      for (double& v : a) v = rng.normal(0.0, 1.0);
      adv.push_back(std::move(a));
    }
    const auto analytic = ppo_surrogate_gradient(params, batch, adv, 0.2);
    const auto fd = finite_difference_gradient(
        [&](const PolicyParameters& p) { return ppo_surrogate(p, batch, adv, 0.2); }, params, kStep);
    worst_ppo = std::max(worst_ppo, relative_error(analytic.grad, fd));

    // With all ratios at 1 the surrogate gradient is mean_i (1/|o_i|) sum_t A_t score_t.
    GradAccumulator reinforce(params.shape());
    for (std::size_t j = 0; j < b; ++j) {
      std::vector<double> w(adv[j].size());
      for (std::size_t t = 0; t < w.size(); ++t)
        w[t] = adv[j][t] / (static_cast<double>(b) * static_cast<double>(w.size()));
      accumulate_score(params, batch[j].prompt_id, batch[j].tokens, w, reinforce);
    }
    worst_reinforce = std::max(worst_reinforce, relative_error(analytic.grad, reinforce));
  }
  out.push_back(row("ppo_first_step_fd", json{{"instances", kInstances}, {"step", kStep}}, worst_ppo, 0.0, 0.0,
                    pass_if(worst_ppo < 1e-6)));
  out.push_back(row("ppo_first_step_is_reinforce", json{{"instances", kInstances}}, worst_reinforce, 0.0, 0.0,
                    pass_if(worst_reinforce < 1e-12)));

  // Enumerated k2 loss with the sampling weights held fixed: its finite
  // differences are the k2 gradient; the finite differences of the exact KL
  // are the reverse-KL gradient.
  {
    const PolicyShape shape{1, 2, 2};
    const auto theta = init_policy(shape, 1.0, 51);
    const auto ref = init_policy(shape, 1.0, 52);
    const auto en = enumerate_trajectories(theta, ref, 0);
    const auto k2 = k2_loss_gradient(theta, {en.trajectories, en.weights});
    const auto fd_k2 = finite_difference_gradient(
        [&](const PolicyParameters& p) {
          double num = 0.0, den = 0.0;
          for (std::size_t i = 0; i < en.trajectories.size(); ++i) {
            const auto& t = en.trajectories[i];
            const auto lp = sequence_log_probs(p, t);
            for (std::size_t s = 0; s < t.size(); ++s) num += en.weights[i] * 0.5 * std::pow(lp[s] - t.logp_ref[s], 2);
            den += en.weights[i] * static_cast<double>(t.size());
          }
          return num / den;
        },
        theta, kStep);
    const double e1 = relative_error(k2, fd_k2);
    out.push_back(row("k2_enumerated_fd", json{{"V", 2}, {"T", 2}, {"step", kStep}}, e1, 0.0, 0.0, pass_if(e1 < 1e-6)));

    const auto states = visited_states(theta, 0, std::vector<Token>{0, 0});
    const auto fd_kl = finite_difference_gradient(
        [&](const PolicyParameters& p) { return exact_state_kl(p, ref, states) / 2.0; }, theta, kStep);
    const double e2 = relative_error(rkl_gradient_reference(theta, {en.trajectories, en.weights}), fd_kl);
    out.push_back(row("rkl_enumerated_fd", json{{"V", 2}, {"T", 2}, {"step", kStep}}, e2, 0.0, 0.0, pass_if(e2 < 1e-6)));
  }
}

}  // namespace

VerifySuite verify_suite_from_string(const std::string& s) {
  if (s == "bias") return VerifySuite::Bias;
  if (s == "kl") return VerifySuite::KL;
  if (s == "gradients") return VerifySuite::Gradients;
  if (s == "all") return VerifySuite::All;
  throw Error(ErrorKind::Config, "unknown verify suite '" + s + "' (bias | kl | gradients | all)");
}

std::vector<ProbeRow> run_verify_suite(VerifySuite suite, const ProbeConfig& probe) {
  std::vector<ProbeRow> rows;
  if (suite == VerifySuite::Bias || suite == VerifySuite::All) bias_suite(probe, rows);
  if (suite == VerifySuite::KL || suite == VerifySuite::All) kl_suite(probe, rows);
  if (suite == VerifySuite::Gradients || suite == VerifySuite::All) gradient_suite(probe, rows);
  return rows;
}

}  // namespace advlab
