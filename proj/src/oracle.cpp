#include "advlab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "advlab/error.hpp"
#include "advlab/parallel.hpp"
#include "advlab/random.hpp"

namespace advlab {

namespace {

constexpr std::size_t kBlock = 1 << 14;

struct BlockResult {
  Moments moments;
  std::size_t skipped = 0;
};

// Splits `trials` into fixed-size blocks with their own sub-seeds and merges
// them in block order, so the estimate is independent of the worker count.
template <typename TrialFn>
BlockResult run_blocks(std::size_t trials, std::uint64_t seed, TrialFn trial) {
  const std::size_t blocks = (trials + kBlock - 1) / kBlock;
  std::vector<BlockResult> parts(blocks);
  parallel_for(blocks, [&](std::size_t b) {
    TrialFn local = trial;  // trial functors may carry scratch buffers
    Rng rng(derive_seed(seed, {b}));
    const std::size_t begin = b * kBlock;
    const std::size_t end = std::min(trials, begin + kBlock);
    for (std::size_t i = begin; i < end; ++i) {
      if (auto x = local(rng)) {
        parts[b].moments.add(*x);
      } else {
        ++parts[b].skipped;
      }
    }
  });
  BlockResult total;
  for (const auto& p : parts) {
    total.moments.merge(p.moments);
    total.skipped += p.skipped;
  }
  return total;
}

// One draw of the group: eps_1 fixed, the rest N(0, sigma^2). Returns the
// centered value of member 1 and the population D^2.
struct GroupDraw {
  double centered;
  double d2;
};

GroupDraw draw_group(const BiasProbeConfig& cfg, Rng& rng, std::vector<double>& buf) {
  const std::size_t n = cfg.group_size;
  buf.resize(n);
  buf[0] = cfg.eps_i;
  double sum = cfg.eps_i;
  for (std::size_t j = 1; j < n; ++j) {
    buf[j] = rng.normal(0.0, cfg.sigma);
    sum += buf[j];
  }
  const double m = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : buf) ss += (v - m) * (v - m);
  return {buf[0] - m, ss / static_cast<double>(n)};
}

}  // namespace

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

void BiasProbeConfig::validate() const {
  require(group_size >= 2, ErrorKind::InvalidParameter, "bias probe needs N >= 2");
  require(sigma > 0.0, ErrorKind::InvalidParameter, "bias probe needs sigma > 0");
  require(trials >= 1, ErrorKind::InvalidParameter, "bias probe needs at least one trial");
}

Verdict judge_agreement(double estimate, double stderr_mean, double reference, double tol) {
  const double gap = std::abs(estimate - reference);
  if (gap <= tol) return 3.0 * stderr_mean <= tol ? Verdict::Pass : Verdict::Inconclusive;
  return gap > 3.0 * stderr_mean ? Verdict::Fail : Verdict::Inconclusive;
}

Verdict judge_separation(double difference, double combined_se, double n_se) {
  return std::abs(difference) > n_se * combined_se ? Verdict::Pass : Verdict::Inconclusive;
}

ProbeReport mc_conditional_advantage(const BiasProbeConfig& cfg) {
  cfg.validate();
  auto result = run_blocks(cfg.trials, cfg.seed, [&, buf = std::vector<double>()](Rng& rng) mutable -> std::optional<double> {
    const auto g = draw_group(cfg, rng, buf);
    if (!(g.d2 > 0.0)) return std::nullopt;
    return g.centered / std::sqrt(g.d2);
  });
  ProbeReport r;
  r.estimate = result.moments.mean();
  r.stderr_mean = result.moments.stderr_mean();
  r.skipped = result.skipped;
  if (cfg.group_size == 2) r.reference = 2.0 * normal_cdf(cfg.eps_i / cfg.sigma) - 1.0;
  return r;
}

double cond_d2_closed_form(std::size_t group_size, double sigma, double eps_i) {
  require(group_size >= 2 && sigma > 0.0, ErrorKind::InvalidParameter, "need N >= 2 and sigma > 0");
  const auto n = static_cast<double>(group_size);
  const double alpha = (n - 1.0) * (n - 1.0) / (n * n) * sigma * sigma;
  const double beta = (n - 1.0) / (n * n);
  return alpha + beta * eps_i * eps_i;
}

ProbeReport cond_d2_monte_carlo(const BiasProbeConfig& cfg, double rel_tol) {
  cfg.validate();
  auto result = run_blocks(cfg.trials, cfg.seed, [&, buf = std::vector<double>()](Rng& rng) mutable -> std::optional<double> {
    return draw_group(cfg, rng, buf).d2;
  });
  ProbeReport r;
  r.estimate = result.moments.mean();
  r.stderr_mean = result.moments.stderr_mean();
  r.reference = cond_d2_closed_form(cfg.group_size, cfg.sigma, cfg.eps_i);
  r.verdict = judge_agreement(r.estimate, r.stderr_mean, *r.reference, rel_tol * std::abs(*r.reference));
  return r;
}

ContradictionReport unbiasedness_contradiction_check(std::size_t group_size, double sigma,
                                                     std::span<const double> eps_grid, std::size_t trials,
                                                     std::uint64_t seed) {
  std::set<double> distinct;
  for (double e : eps_grid)
    if (e != 0.0) distinct.insert(std::abs(e));
  require(distinct.size() >= 2, ErrorKind::InvalidParameter, "grid needs at least two distinct nonzero |eps| values");

  ContradictionReport out;
  for (std::size_t gi = 0; gi < eps_grid.size(); ++gi) {
    const double e = eps_grid[gi];
    if (e == 0.0) continue;
    BiasProbeConfig cfg{group_size, sigma, e, trials, derive_seed(seed, {gi})};
    auto rep = mc_conditional_advantage(cfg);
    rep.estimate /= e;
    rep.stderr_mean /= std::abs(e);
    rep.reference.reset();
    out.eps_values.push_back(e);
    out.ratios.push_back(rep);
  }
  double ratio_sum = 0.0;
  for (const auto& r : out.ratios) ratio_sum += r.estimate;
  const double ratio_mean = ratio_sum / static_cast<double>(out.ratios.size());
  for (std::size_t a = 0; a < out.ratios.size(); ++a) {
    for (std::size_t b = a + 1; b < out.ratios.size(); ++b) {
      const double diff = std::abs(out.ratios[a].estimate - out.ratios[b].estimate);
      if (diff >= out.max_difference) {
        out.max_difference = diff;
        out.combined_se = std::hypot(out.ratios[a].stderr_mean, out.ratios[b].stderr_mean);
      }
    }
  }
  out.relative_spread = ratio_mean != 0.0 ? out.max_difference / std::abs(ratio_mean) : 0.0;
  out.verdict = judge_separation(out.max_difference, out.combined_se);
  return out;
}

GradAccumulator finite_difference_gradient(const std::function<double(const PolicyParameters&)>& objective,
                                           const PolicyParameters& params, double step) {
  require(step > 0.0, ErrorKind::InvalidParameter, "finite-difference step must be > 0");
  GradAccumulator grad(params.shape());
  PolicyParameters probe = params;
  auto g = grad.values();
  for (std::size_t j = 0; j < g.size(); ++j) {
    const double orig = probe.values()[j];
    probe.values()[j] = orig + step;
    const double up = objective(probe);
    probe.values()[j] = orig - step;
    const double down = objective(probe);
    probe.values()[j] = orig;
    g[j] = (up - down) / (2.0 * step);
  }
  return grad;
}

double relative_error(const GradAccumulator& got, const GradAccumulator& want) {
  require(got.shape() == want.shape(), ErrorKind::InvalidDimension, "gradient shapes differ");
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < got.values().size(); ++i) {
    diff = std::max(diff, std::abs(got.values()[i] - want.values()[i]));
    scale = std::max(scale, std::abs(want.values()[i]));
  }
  return scale > 0.0 ? diff / scale : diff;
}

Enumeration enumerate_trajectories(const PolicyParameters& policy, const PolicyParameters& reference,
                                   std::size_t prompt_id) {
  const std::size_t V = policy.vocab_size();
  const std::size_t T = policy.max_len();
  const double total = std::pow(static_cast<double>(V), static_cast<double>(T));
  require(total <= 1e6, ErrorKind::InvalidParameter, "sequence space too large to enumerate");
  Enumeration out;
  std::vector<Token> tokens(T, 0);
  for (std::size_t code = 0; code < static_cast<std::size_t>(total); ++code) {
    std::size_t c = code;
    for (std::size_t t = T; t-- > 0;) {
      tokens[t] = static_cast<Token>(c % V);
      c /= V;
    }
    Trajectory traj;
    traj.prompt_id = prompt_id;
    traj.tokens = tokens;
    traj.logp_sample = sequence_log_probs(policy, prompt_id, tokens);
    traj.logp_ref = sequence_log_probs(reference, prompt_id, tokens);
    double logp = 0.0;
    for (double v : traj.logp_sample) logp += v;
    out.weights.push_back(std::exp(logp));
    out.trajectories.push_back(std::move(traj));
  }
  return out;
}

GradAccumulator exact_rkl_gradient(const PolicyParameters& theta, const PolicyParameters& ref,
                                   std::span<const State> states, double scale) {
  require(theta.shape() == ref.shape(), ErrorKind::InvalidDimension, "policy shapes differ");
  GradAccumulator grad(theta.shape());
  const std::size_t V = theta.vocab_size();
  auto g = grad.values();
  for (const auto& s : states) {
    const auto lp = theta.log_probs(s);
    const auto lq = ref.log_probs(s);
    double kl = 0.0;
    for (std::size_t a = 0; a < V; ++a) kl += std::exp(lp[a]) * (lp[a] - lq[a]);
    auto add_row = [&](std::size_t r) {
      for (std::size_t a = 0; a < V; ++a) g[r * V + a] += scale * std::exp(lp[a]) * (lp[a] - lq[a] - kl);
    };
    add_row(theta.row_of(s));
    if (auto shared = theta.shared_row_of(s)) add_row(*shared);
  }
  return grad;
}

K3VarianceRow k3_variance_probe(std::span<const double> p_true, std::span<const double> p_ref, std::size_t trials,
                                std::uint64_t seed) {
  require(p_true.size() == p_ref.size() && !p_true.empty(), ErrorKind::InvalidDimension,
          "distributions must have the same non-zero size");
  auto check = [](std::span<const double> p) {
    double s = 0.0;
    for (double v : p) {
      require(v >= 0.0, ErrorKind::InvalidParameter, "negative probability");
      s += v;
    }
    require(std::abs(s - 1.0) < 1e-9, ErrorKind::InvalidParameter, "probabilities must sum to 1");
  };
  check(p_true);
  check(p_ref);
  require(trials >= 2, ErrorKind::InvalidParameter, "variance probe needs at least two trials");

  std::vector<double> cdf(p_true.size());
  std::partial_sum(p_true.begin(), p_true.end(), cdf.begin());
  auto sample = [&](Rng& rng) {
    const double u = rng.uniform() * cdf.back();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t y = static_cast<std::size_t>(it - cdf.begin());
    if (y >= cdf.size()) y = cdf.size() - 1;
    while (p_true[y] == 0.0) --y;  // cdf.back() == 1 keeps u inside the support
    return y;
  };
  auto k3 = run_blocks(trials, derive_seed(seed, {3}), [&](Rng& rng) -> std::optional<double> {
    const auto y = sample(rng);
    return p_ref[y] / p_true[y];
  });
  auto k2 = run_blocks(trials, derive_seed(seed, {3}), [&](Rng& rng) -> std::optional<double> {
    const auto y = sample(rng);
    return std::log(p_true[y] / p_ref[y]);
  });

  K3VarianceRow row;
  row.k3_weight_variance = k3.moments.variance();
  row.k2_weight_variance = k2.moments.variance();
  double m3 = 0.0, s3 = 0.0, m2 = 0.0, s2 = 0.0;
  for (std::size_t y = 0; y < p_true.size(); ++y) {
    if (p_true[y] == 0.0) continue;
    const double d = p_ref[y] / p_true[y];
    const double r = std::log(p_true[y] / p_ref[y]);
    m3 += p_true[y] * d;
    s3 += p_true[y] * d * d;
    m2 += p_true[y] * r;
    s2 += p_true[y] * r * r;
  }
  row.k3_exact = s3 - m3 * m3;
  row.k2_exact = s2 - m2 * m2;
  return row;
}

}  // namespace advlab
