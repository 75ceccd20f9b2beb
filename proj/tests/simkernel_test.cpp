#include <gtest/gtest.h>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fixtures.hpp"

using namespace agemeasure;
using namespace fixtures;

namespace {

double total_hazard(const RateModel& model, const AgeMeasure& a) {
  double s = 0.0;
  for (double x : a.ages) {
    const auto h = hazards(model, a, x);
    s += h.death + h.birth;
  }
  return s;
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= v.size();
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= v.size() - 1;
  return m;
}

}  // namespace

TEST(NextEpoch, Examples) {
  const RateModel split = AgePiecewiseRates{{{{0.0, 1.0}, 0.1, 0.1}, {{1.0, 2.0, true}, 0.1, 0.1}}};
  const std::vector<double> one{0.8};
  EXPECT_DOUBLE_EQ(next_epoch(one, split, 0.0, 1.0), 0.2);
  EXPECT_EQ(next_epoch(one, constant_model(), 0.3, 1.0), 1.0);
  const RateModel two = AgePiecewiseRates{{{{0.0, 0.5}, 0.1, 0.1}, {{0.5, 1.0, true}, 0.1, 0.1}}};
  const std::vector<double> ages{0.2, 0.9};
  EXPECT_NEAR(next_epoch(ages, two, 0.0, 5.0), 0.1, 1e-15);
  EXPECT_THROW(next_epoch(ages, two, 1.0, 1.0), ContractError);
}

TEST(Replay, Examples) {
  const auto log = make_log({0.2, 0.5}, 2, 1.0, {death(0.5, 1)});
  EXPECT_EQ(replay(log, 0.0).ages, (std::vector<double>{0.2, 0.5}));
  const auto end = replay(log, 1.0).ages;
  ASSERT_EQ(end.size(), 1u);
  EXPECT_DOUBLE_EQ(end[0], 1.2);
  EXPECT_EQ(replay(log, 0.5).count(), 1u);
  EXPECT_EQ(replay(log, 0.4999).count(), 2u);
  const auto born = make_log({0.2}, 1, 1.0, {birth(0.25, 1)});
  EXPECT_EQ(replay(born, 0.25).ages.back(), 0.0);
}

TEST(Replay, RejectsCorruptLogs) {
  EXPECT_THROW(lineages(make_log({0.2}, 1, 1.0, {death(0.3, 0), death(0.4, 0)})), LogFormatError);
  EXPECT_THROW(lineages(make_log({0.2}, 1, 1.0, {birth(0.3, 5)})), LogFormatError);
  EXPECT_THROW(lineages(make_log({0.2}, 1, 1.0, {birth(0.3, 1), birth(0.3, 2)})), LogFormatError);
  EXPECT_THROW(lineages(make_log({0.2}, 1, 1.0, {birth(1.5, 1)})), LogFormatError);
}

TEST(Simulate, ZeroHazardsGiveNoEvents) {
  const std::vector<double> init{0.1, 0.4, 0.9};
  const auto log = simulate(ConstantRates{0.0, 0.0}, init, 3, 2.0, 99);
  EXPECT_TRUE(log.events.empty());
  const auto end = replay(log, 2.0);
  // (x, A_T) = (x, A_0) + T (1, A_0)
  EXPECT_DOUBLE_EQ(pair(tf::age(), end, 2.0, false), 1.4 + 2.0 * 3);
}

TEST(Simulate, RejectsBadInput) {
  const std::vector<double> init{0.5};
  EXPECT_THROW(simulate(constant_model(), init, 1, 0.0, 1), ContractError);
  EXPECT_THROW(simulate(ConstantRates{0.1, -0.2}, init, 1, 1.0, 1), ContractError);
  EXPECT_THROW(simulate(constant_model(), {}, 1, 1.0, 1), ContractError);
}

TEST(Simulate, DeterministicUnderFixedSeed) {
  for (const auto& model : {constant_model(), popdep_model(), agedep_model(), popage_model()}) {
    const auto a = uniform_path(model, 300, 1.0, 42);
    const auto b = uniform_path(model, 300, 1.0, 42);
    EXPECT_EQ(to_string(a), to_string(b));
    const auto c = uniform_path(model, 300, 1.0, 43);
    EXPECT_NE(to_string(a), to_string(c));
  }
}

TEST(Simulate, CountBookkeeping) {
  for (const auto& model : {constant_model(), popdep_model(), agedep_model(), popage_model()}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto log = uniform_path(model, 200, 2.0, seed);
      long births = 0, deaths = 0;
      for (const auto& e : log.events) (e.kind == EventKind::Birth ? births : deaths)++;
      EXPECT_EQ(static_cast<long>(replay(log, log.T).count()), 200 + births - deaths);
      EXPECT_NO_THROW(lineages(log));
    }
  }
}

TEST(Simulate, HazardsConstantBetweenEpochs) {
  for (const auto& model : {agedep_model(), popage_model(), popdep_model()}) {
    const auto log = uniform_path(model, 150, 1.5, 5);
    const auto people = lineages(log);
    // Epochs: event times plus every time a birth date plus an endpoint falls in (0, T).
    std::vector<double> epochs{0.0, log.T};
    for (const auto& e : log.events) epochs.push_back(e.time);
    for (const auto& l : people)
      for (double e : model_endpoints(model)) {
        const double t = l.birth_date() + e;
        if (t > l.entry_time && t < l.exit_time && t < log.T) epochs.push_back(t);
      }
    std::sort(epochs.begin(), epochs.end());
    int checked = 0;
    for (std::size_t i = 0; i + 1 < epochs.size(); ++i) {
      const double a = epochs[i], b = epochs[i + 1];
      if (!(b - a > 1e-9)) continue;
      const auto now = replay(log, a + 1e-10);
      AgeMeasure aged = now;
      for (auto& x : aged.ages) x += (b - 1e-10) - (a + 1e-10);
      EXPECT_NEAR(total_hazard(model, now), total_hazard(model, aged), 1e-12) << "epoch starting at " << a;
      ++checked;
    }
    EXPECT_GT(checked, 100);
  }
}

TEST(Simulate, PureDeathSurvivorsAreBinomial) {
  const int n0 = 20;
  const double c = 0.7, T = 1.0;
  const std::vector<double> init(n0, 0.5);
  boost::math::binomial_distribution<double> law(n0, std::exp(-c * T));
  std::vector<double> observed(n0 + 1, 0.0);
  const int runs = 2000;
  for (int s = 0; s < runs; ++s) {
    const auto log = simulate(ConstantRates{c, 0.0}, init, n0, T, 1000 + s);
    observed[replay(log, T).count()] += 1;
  }
  // Pool sparse tails so every expected count is at least 5.
  std::vector<double> obs, expct;
  double o = 0.0, e = 0.0;
  for (int k = 0; k <= n0; ++k) {
    o += observed[k];
    e += runs * boost::math::pdf(law, k);
    if (e >= 5.0 && (runs * boost::math::cdf(boost::math::complement(law, k))) >= 5.0) {
      obs.push_back(o);
      expct.push_back(e);
      o = e = 0.0;
    }
  }
  obs.back() += o;
  expct.back() += e;
  double chi2 = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) chi2 += (obs[i] - expct[i]) * (obs[i] - expct[i]) / expct[i];
  const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(obs.size() - 1.0), chi2));
  EXPECT_GT(p, 0.01) << "chi2=" << chi2 << " bins=" << obs.size();
}

TEST(Simulate, LinearBirthDeathMean) {
  const int K = 100, runs = 1000;
  std::vector<double> counts;
  for (int s = 0; s < runs; ++s) counts.push_back(replay(uniform_path(constant_model(), K, 1.0, 5000 + s), 1.0).count());
  const auto m = moments(counts);
  EXPECT_LT(std::abs(m.mean - K * std::exp(0.2)), 3.0 * std::sqrt(m.var / runs));
}

TEST(Simulate, MatchesBernoulliStepSimulator) {
  const double h = 0.2, b = 0.4, T = 1.0, dt = 1e-4;
  const int n0 = 10, runs = 2000;
  std::vector<double> exact, stepped;
  Rng rng(77);
  for (int s = 0; s < runs; ++s) {
    exact.push_back(replay(simulate(ConstantRates{h, b}, std::vector<double>(n0, 0.3), n0, T, 900 + s), T).count());
    long n = n0;
    for (long k = 0; k < static_cast<long>(T / dt); ++k) {
      long next = n;
      for (long i = 0; i < n; ++i) {
        const double u = rng.uniform();
        if (u < h * dt)
          --next;
        else if (u < (h + b) * dt)
          ++next;
      }
      n = next;
    }
    stepped.push_back(static_cast<double>(n));
  }
  const auto me = moments(exact), ms = moments(stepped);
  EXPECT_LT(std::abs(me.mean - ms.mean), 3.0 * std::sqrt(me.var / runs + ms.var / runs));
  // Sample variance standard error, using the fourth moment of the stepped sample.
  double m4 = 0.0;
  for (double x : stepped) m4 += std::pow(x - ms.mean, 4);
  m4 /= runs;
  const double se_var = std::sqrt((m4 - ms.var * ms.var) / runs);
  EXPECT_LT(std::abs(me.var - ms.var), 3.0 * std::sqrt(2.0) * se_var);
}

TEST(EventLogFile, RoundTripIsExact) {
  const auto log = uniform_path(popage_model(), 120, 1.0, 8);
  std::stringstream ss;
  write_event_log(ss, log);
  const auto back = read_event_log(ss);
  EXPECT_EQ(back.initial_ages, log.initial_ages);
  EXPECT_EQ(back.events, log.events);
  EXPECT_EQ(back.K, log.K);
  EXPECT_EQ(back.T, log.T);
  EXPECT_EQ(back.seed, log.seed);
  ASSERT_TRUE(back.model.has_value());
  EXPECT_EQ(model_descriptor(*back.model), model_descriptor(popage_model()));
  EXPECT_EQ(to_string(back), to_string(log));
}

TEST(EventLogFile, HeaderOnlyFormAndErrors) {
  std::istringstream plain("K=2\nT=1\nSEED=3\nINIT=0.5,0.25\n0.5 B 2\n0.75 D 0\n");
  const auto log = read_event_log(plain);
  EXPECT_EQ(log.events.size(), 2u);
  EXPECT_FALSE(log.model.has_value());
  std::istringstream missing("K=2\nT=1\n0.5 B 0\n");
  EXPECT_THROW(read_event_log(missing), LogFormatError);
  std::istringstream bad("K=2\nT=1\nINIT=0.5\n0.5 X 0\n");
  EXPECT_THROW(read_event_log(bad), LogFormatError);
  std::istringstream dead("K=2\nT=1\nINIT=0.5\n0.5 D 0\n0.6 D 0\n");
  EXPECT_THROW(read_event_log(dead), LogFormatError);
}
