#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"

using namespace agemeasure;
using namespace fixtures;

TEST(Interval, HalfOpenByDefault) {
  Interval iv{0.0, 1.0};
  EXPECT_TRUE(iv.contains(0.0));
  EXPECT_TRUE(iv.contains(0.999));
  EXPECT_FALSE(iv.contains(1.0));
  EXPECT_TRUE((Interval{1.0, 2.0, true}.contains(2.0)));
  EXPECT_FALSE((Interval{1.5, 2.0, true, false}.contains(1.5)));
}

TEST(Interval, ParseRoundTrip) {
  const auto set = parse_intervals("[0,0.5) U (1.5,2]");
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set, J2());
  EXPECT_EQ(parse_intervals(to_string(set)), set);
  EXPECT_THROW(parse_intervals("[1,0)"), ContractError);
  EXPECT_THROW(validate_disjoint({{0.0, 1.0}, {0.5, 2.0}}), ContractError);
}

TEST(Pair, Examples) {
  EXPECT_DOUBLE_EQ(pair(tf::one(), AgeMeasure{{0.3, 0.7}, 2}, 0.0, true), 1.0);
  EXPECT_DOUBLE_EQ(pair(tf::age(), AgeMeasure{{0.2, 0.5}, 2}, 0.0, true), 0.35);
  const auto f = TestFn::monomial(1, 0, 1.0, IntervalSet{{0.0, 1.0}});
  EXPECT_DOUBLE_EQ(pair(f, AgeMeasure{{0.5, 1.5}, 1}, 0.0, false), 0.5);
  EXPECT_EQ(pair(tf::age(), AgeMeasure{{}, 3}, 0.4, true), 0.0);
}

TEST(Pair, LinearAndNormalized) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    AgeMeasure a{{}, 1 + trial};
    for (int i = 0; i < 20; ++i) a.ages.push_back(u(gen));
    const double t = u(gen);
    const auto f = TestFn::monomial(2, 1, 1.0, IntervalSet{{0.0, 1.0}});
    const auto g = tf::age_times(3) + tf::indicator({{0.5, 1.5, true}});
    const double alpha = u(gen) - 1.0, beta = u(gen);
    EXPECT_NEAR(pair(alpha * f + beta * g, a, t, false), alpha * pair(f, a, t, false) + beta * pair(g, a, t, false),
                1e-12);
    EXPECT_DOUBLE_EQ(pair(f, a, t, true) * a.carrying_capacity, pair(f, a, t, false));
  }
}

TEST(TestFn, Calculus) {
  const auto f = TestFn::monomial(2, 3, 2.0);
  EXPECT_DOUBLE_EQ(f.d_age()(1.5, 2.0), 2.0 * 2 * 1.5 * 8.0);
  EXPECT_DOUBLE_EQ(f.d_time()(1.5, 2.0), 2.0 * 2.25 * 3 * 4.0);
  EXPECT_TRUE(tf::age().at_age_zero().empty());
  EXPECT_DOUBLE_EQ(tf::time_pow(2).at_age_zero()(5.0, 3.0), 9.0);
  EXPECT_DOUBLE_EQ((tf::age() * tf::age_times(1))(2.0, 3.0), 12.0);
  EXPECT_THROW(TestFn::monomial(5, 0), ContractError);
  const auto r = tf::age().restricted_to({{0.0, 1.0}}).restricted_to({{0.5, 2.0}});
  EXPECT_EQ(r(0.7, 0.0), 0.7);
  EXPECT_EQ(r(0.3, 0.0), 0.0);
  EXPECT_EQ(r(1.2, 0.0), 0.0);
}

TEST(Hazards, Examples) {
  for (double x : {0.0, 0.7, 3.0}) {
    const auto h = hazards(constant_model(), AgeMeasure{{0.1, 0.9}, 2}, x);
    EXPECT_EQ(h.death, 0.2);
    EXPECT_EQ(h.birth, 0.4);
  }
  // (1_{J2}, A/K) = 0 and (1_{J1}, A/K) = 1
  const auto p = hazards(popdep_model(), AgeMeasure{{0.6, 1.0}, 2}, 0.3);
  EXPECT_EQ(p.death, 0.0);
  EXPECT_DOUBLE_EQ(p.birth, 0.08);
  const auto a = hazards(agedep_model(), AgeMeasure{{0.5}, 1}, 2.5);
  EXPECT_EQ(a.death, 0.0);
  EXPECT_EQ(a.birth, 0.0);
}

TEST(Hazards, PopulationScalingInvariance) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    AgeMeasure a{{}, 10};
    for (int i = 0; i < 15; ++i) a.ages.push_back(u(gen));
    AgeMeasure twice{a.ages, 20};
    twice.ages.insert(twice.ages.end(), a.ages.begin(), a.ages.end());
    for (const auto& model : {popdep_model(), popage_model()}) {
      const double x = u(gen);
      const auto h1 = hazards(model, a, x);
      const auto h2 = hazards(model, twice, x);
      EXPECT_DOUBLE_EQ(h1.death, h2.death);
      EXPECT_DOUBLE_EQ(h1.birth, h2.birth);
    }
  }
}

TEST(Hazards, ConstantOnCellInteriors) {
  std::mt19937_64 gen(3);
  const AgeMeasure a{{0.1, 0.6, 1.2}, 3};
  for (const auto& model : {agedep_model(), popage_model()}) {
    for (const auto& cell : two_cells()) {
      std::uniform_real_distribution<double> u(cell.lo, cell.hi);
      const auto ref = hazards(model, a, 0.5 * (cell.lo + cell.hi));
      for (int i = 0; i < 3; ++i) {
        const auto h = hazards(model, a, u(gen));
        EXPECT_EQ(h.death, ref.death);
        EXPECT_EQ(h.birth, ref.birth);
      }
    }
  }
}

TEST(RateModel, RejectsNegativeOrOverlapping) {
  EXPECT_THROW(validate(RateModel{ConstantRates{-0.1, 0.4}}), ContractError);
  EXPECT_THROW(validate(RateModel{AgePiecewiseRates{{{{0.0, 1.0}, 0.1, 0.1}, {{0.5, 2.0}, 0.1, 0.1}}}}), ContractError);
  EXPECT_NO_THROW(validate(popage_model()));
}

TEST(RateModel, DescriptorRoundTrip) {
  for (const auto& model : {constant_model(), popdep_model(), agedep_model(), popage_model()}) {
    const auto text = model_descriptor(model);
    const auto back = parse_model_descriptor(text);
    EXPECT_EQ(model_descriptor(back), text);
    EXPECT_EQ(parameter_values(back), parameter_values(model));
    EXPECT_EQ(model_endpoints(back), model_endpoints(model));
  }
  EXPECT_EQ(parameter_names(popage_model()), (std::vector<std::string>{"alpha1", "alpha2", "gamma1", "gamma2"}));
}
