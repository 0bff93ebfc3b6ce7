#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "advlab/error.hpp"
#include "advlab/parallel.hpp"
#include "advlab/random.hpp"
#include "advlab/stats.hpp"

using namespace advlab;

TEST(Stats, MeanAndPopulationStd) {
  const std::vector<double> xs{2.0, 4.0, 6.0};
  EXPECT_DOUBLE_EQ(mean(xs), 4.0);
  EXPECT_NEAR(stddev(xs), std::sqrt(8.0 / 3.0), 1e-15);
  EXPECT_NEAR(stddev(xs, StdKind::Sample), 2.0, 1e-15);
}

TEST(Stats, EmptyMeanThrows) {
  const std::vector<double> none;
  EXPECT_THROW(mean(none), Error);
}

TEST(Stats, MomentsMatchTwoPass) {
  Rng rng(5);
  std::vector<double> xs;
  Moments all, a, b;
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.normal(3.0, 2.0);
    xs.push_back(x);
    all.add(x);
    (i < 400 ? a : b).add(x);
  }
  a.merge(b);
  EXPECT_NEAR(all.mean(), mean(xs), 1e-12);
  EXPECT_NEAR(all.variance(), std::pow(stddev(xs, StdKind::Sample), 2), 1e-10);
  EXPECT_NEAR(a.mean(), all.mean(), 1e-12);
  EXPECT_NEAR(a.variance(), all.variance(), 1e-10);
  EXPECT_EQ(a.count(), 1000u);
}

TEST(Stats, NormalCdf) {
  EXPECT_NEAR(normal_cdf(0.0), 0.5, 1e-15);
  EXPECT_NEAR(normal_cdf(1.0), 0.8413447460685429, 1e-12);
}

TEST(Random, DeriveSeedIsDeterministicAndPathSensitive) {
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
  EXPECT_NE(derive_seed(1, {2}), derive_seed(2, {2}));
}

TEST(Parallel, EveryIndexRunsOnceForAnyWorkerCount) {
  for (std::size_t w : {1, 3, 8}) {
    set_worker_override(w);
    std::vector<int> hits(257, 0);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) EXPECT_EQ(h, 1);
  }
  set_worker_override(0);
}

TEST(Parallel, PropagatesExceptions) {
  set_worker_override(4);
  EXPECT_THROW(parallel_for(16, [](std::size_t i) {
                 if (i == 7) throw Error(ErrorKind::NonFinite, "boom");
               }),
               Error);
  set_worker_override(0);
}
