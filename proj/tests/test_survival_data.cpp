#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "helpers.hpp"

using namespace missurv;
using namespace testutil;

TEST(Validate, SortsByTime) {
  const auto ds = type1({3, 1, 2, 4}, {F, F, C, C});
  const auto o = ds.event_order();
  EXPECT_EQ(std::vector<std::size_t>(o.begin(), o.end()), (std::vector<std::size_t>{1, 2, 0, 3}));
}

TEST(Validate, TiesKeepInputOrder) {
  const auto ds = type1({2, 1, 2, 2}, {F, C, U, F});
  const auto o = ds.event_order();
  EXPECT_EQ(std::vector<std::size_t>(o.begin(), o.end()), (std::vector<std::size_t>{1, 0, 2, 3}));
  ASSERT_EQ(ds.tie_groups().size(), 2u);
  EXPECT_EQ(ds.tie_groups()[1].begin, 1u);
  EXPECT_EQ(ds.tie_groups()[1].end, 4u);
}

TEST(Validate, Errors) {
  EXPECT_EQ(error_code_of([] { Dataset::validate({}); }), ErrorCode::EmptyDataset);
  EXPECT_EQ(error_code_of([] { type1({1, 2}, {F, F}, {{1, 2}, {1, 2, 3}}); }), ErrorCode::DimensionMismatch);
  EXPECT_EQ(error_code_of([] { type1({1, NAN}, {F, F}); }), ErrorCode::NonFiniteValue);
  EXPECT_EQ(error_code_of([] { type1({1, INFINITY}, {F, F}); }), ErrorCode::NonFiniteValue);
  EXPECT_EQ(error_code_of([] { type1({1, 2}, {F, F}, {{1}, {NAN}}); }), ErrorCode::NonFiniteValue);
  EXPECT_EQ(error_code_of([] { type1({-1}, {F}); }), ErrorCode::NegativeTime);
  EXPECT_EQ(error_code_of([] {
              Dataset::validate({{1.0, FailureStatus::Failure, {}}, {2.0, Type2Status::Censored, {}}});
            }),
            ErrorCode::StatusTypeMismatch);
}

TEST(Validate, SingleRecordAtZero) {
  const auto ds = type1({0}, {C});
  EXPECT_EQ(ds.n(), 1u);
  EXPECT_EQ(ds.p(), 0u);
}

TEST(Validate, Idempotent) {
  std::mt19937_64 g(7);
  for (int k = 0; k < 20; ++k) {
    const auto ds = random_type1(g, {.n = 30, .p = 2, .rho = 0.6, .censor_rate = 0.5, .ties = true});
    const auto again = Dataset::validate(ds.records());
    EXPECT_TRUE(std::equal(ds.event_order().begin(), ds.event_order().end(), again.event_order().begin()));
  }
}

TEST(RiskSet, Counts) {
  const auto ds = type1({1, 2, 3, 4}, {F, F, C, C});
  EXPECT_EQ(risk_set_size(ds, 2.5), 2u);
  EXPECT_EQ(risk_set_size(ds, 0.0), 4u);
  EXPECT_EQ(risk_set_size(ds, 5.0), 0u);
  EXPECT_EQ(risk_set_size(ds, 2.0), 3u);
}

TEST(RiskSet, NonincreasingProperty) {
  std::mt19937_64 g(11);
  for (int k = 0; k < 50; ++k) {
    const auto ds = random_type1(g, {.n = 25, .p = 1, .rho = 0.5, .censor_rate = 1.0, .ties = k % 2 == 0});
    std::size_t prev = ds.n();
    for (double t = 0.0; t < 4.0; t += 0.05) {
      const auto r = risk_set_size(ds, t);
      EXPECT_LE(r, prev);
      std::size_t brute = 0;
      for (std::size_t i = 0; i < ds.n(); ++i) brute += ds.time(i) >= t;
      EXPECT_EQ(r, brute);
      prev = r;
    }
  }
}

TEST(CountingIncrements, Definitions) {
  const auto inc = counting_increments(type1({2, 2, 2}, {F, U, C}));
  ASSERT_EQ(inc.size(), 3u);
  EXPECT_EQ(inc[0].known_uncensored, 1);
  EXPECT_EQ(inc[0].known_censored + inc[0].unknown, 0);
  EXPECT_EQ(inc[1].unknown, 1);
  EXPECT_EQ(inc[1].known_uncensored + inc[1].known_censored, 0);
  EXPECT_EQ(inc[2].known_censored, 1);
  EXPECT_EQ(inc[2].known_uncensored + inc[2].unknown, 0);
}

TEST(CountingIncrements, CoverEveryRecordOnce) {
  std::mt19937_64 g(3);
  for (int k = 0; k < 30; ++k) {
    const auto ds = random_type1(g, {.n = 40, .p = 1, .rho = 0.6, .censor_rate = 0.8, .ties = true});
    const auto inc = counting_increments(ds);
    int total = 0;
    std::vector<int> seen(ds.n(), 0);
    for (const auto& e : inc) {
      total += e.known_uncensored + e.known_censored + e.unknown;
      ++seen[e.record];
    }
    EXPECT_EQ(total, static_cast<int>(ds.n()));
    for (int s : seen) EXPECT_EQ(s, 1);
  }
}

TEST(RhoHat, Fraction) {
  EXPECT_DOUBLE_EQ(rho_hat(type1({1, 2, 3, 4}, {F, U, C, F})), 0.75);
  EXPECT_EQ(error_code_of([] { rho_hat(type2({1}, {Type2Status::Censored})); }), ErrorCode::StatusTypeMismatch);
}
