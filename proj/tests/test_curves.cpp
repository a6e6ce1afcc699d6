#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "lmsig/curves.hpp"
#include "lmsig/error.hpp"
#include "lmsig/event_io.hpp"
#include "lmsig/rng.hpp"
#include "oracles.hpp"

using namespace lmsig;
using namespace lmsig::curves;

namespace {

EventStream lab(std::vector<std::pair<Day, double>> points) {
  std::vector<Event> events;
  for (auto [d, v] : points) events.push_back({d, v});
  return make_stream("s", "lab", VariableKind::continuous_lab, std::move(events));
}

EventStream codes(std::vector<Day> days) {
  std::vector<Event> events;
  for (Day d : days) events.push_back({d, std::nullopt});
  return make_stream("s", "code", VariableKind::categorical_event, std::move(events));
}

LongitudinalCurve raw_curve(std::vector<double> v) { return {"x", 0, std::move(v), false}; }

// Strictly ascending integer knots with random values; `monotone` makes the
// values nondecreasing.
std::pair<std::vector<Day>, std::vector<double>> random_knots(Rng& rng, bool monotone) {
  const auto n = rng.uniform_int(2, 12);
  std::vector<Day> x;
  std::vector<double> y;
  Day d = rng.uniform_int(0, 20);
  double level = rng.normal();
  for (std::int64_t k = 0; k < n; ++k) {
    x.push_back(d);
    d += rng.uniform_int(1, 40);
    if (monotone) {
      // occasional flat runs exercise the zero-secant rule
      level += rng.uniform() < 0.25 ? 0.0 : rng.uniform(0.0, 3.0);
    } else {
      level = rng.uniform() < 0.15 ? level : rng.normal(0.0, 2.0);
    }
    y.push_back(level);
  }
  return {x, y};
}

}  // namespace

TEST(Interpolation, ConstantDataGivesConstantCurve) {
  const auto c = interpolate_continuous(lab({{0, 5.0}, {10, 5.0}}), {0, 10});
  for (double v : c.values) EXPECT_EQ(v, 5.0);
}

TEST(Interpolation, TwoPointsStayInsideRangeAndAscend) {
  const auto c = interpolate_continuous(lab({{0, 1.0}, {4, 3.0}}), {0, 4});
  EXPECT_GT(c.at(2), 1.0);
  EXPECT_LT(c.at(2), 3.0);
  for (Day d = 1; d <= 4; ++d) EXPECT_GE(c.at(d), c.at(d - 1));
}

TEST(Interpolation, PlateauMatchesTangentOracle) {
  const auto c = interpolate_continuous(lab({{0, 0.0}, {1, 1.0}, {2, 1.0}, {3, 0.0}}), {0, 3});
  oracle::FritschCarlson fc({0, 1, 2, 3}, {0, 1, 1, 0});
  for (Day d = 0; d <= 3; ++d) {
    EXPECT_GE(c.at(d), 0.0);
    EXPECT_LE(c.at(d), 1.0);
    EXPECT_NEAR(c.at(d), fc(static_cast<double>(d)), 1e-12);
  }
  // Evaluate between knots too, through the class directly.
  MonotoneCubic mc({0, 1, 2, 3}, {0, 1, 1, 0});
  for (double t = -0.5; t <= 3.5; t += 0.03125) EXPECT_NEAR(mc(t), fc(t), 1e-12) << t;
}

TEST(Interpolation, MatchesOracleOnRandomInstances) {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    auto [x, y] = random_knots(rng, trial % 2 == 0);
    std::vector<double> xd(x.begin(), x.end());
    oracle::FritschCarlson fc(xd, y);
    MonotoneCubic mc(xd, y);
    const double span = xd.back() - xd.front();
    for (int k = 0; k < 50; ++k) {
      const double t = xd.front() - 5 + rng.uniform() * (span + 10);
      ASSERT_NEAR(mc(t), fc(t), 1e-12) << "trial " << trial;
    }
    std::vector<std::pair<Day, double>> pts;
    for (std::size_t i = 0; i < x.size(); ++i) pts.emplace_back(x[i], y[i]);
    const DayRange grid{0, x.back() + 5};
    const auto curve = interpolate_continuous(lab(pts), grid);
    for (Day d = grid.first; d <= grid.last; ++d) {
      ASSERT_NEAR(curve.at(d), fc(static_cast<double>(d)), 1e-12) << "trial " << trial << " day " << d;
    }
    for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(curve.at(x[i]), y[i], 1e-12);
  }
}

TEST(Interpolation, MonotoneInMonotoneOut) {
  Rng rng(12);
  for (int trial = 0; trial < 500; ++trial) {
    auto [x, y] = random_knots(rng, true);
    std::vector<std::pair<Day, double>> pts;
    for (std::size_t i = 0; i < x.size(); ++i) pts.emplace_back(x[i], y[i]);
    const auto curve = interpolate_continuous(lab(pts), {0, x.back()});
    for (std::size_t d = 1; d < curve.values.size(); ++d) {
      ASSERT_GE(curve.values[d], curve.values[d - 1] - 1e-12) << "trial " << trial;
    }
    MonotoneCubic mc(std::vector<double>(x.begin(), x.end()), y);
    double prev = mc(static_cast<double>(x.front()));
    for (double t = x.front(); t <= x.back(); t += 0.25) {
      ASSERT_GE(mc(t), prev - 1e-12);
      prev = mc(t);
    }
  }
}

TEST(Interpolation, HoldsEndpointsOutsideKnots) {
  const auto c = interpolate_continuous(lab({{5, 2.0}, {9, 4.0}}), {0, 20});
  for (Day d = 0; d <= 5; ++d) EXPECT_EQ(c.at(d), 2.0);
  for (Day d = 9; d <= 20; ++d) EXPECT_EQ(c.at(d), 4.0);
}

TEST(Interpolation, RejectsBadInput) {
  EXPECT_THROW(interpolate_continuous(lab({}), {0, 10}), DataError);
  EXPECT_THROW(interpolate_continuous(lab({{30, 1.0}}), {0, 10}), DataError);
  EXPECT_THROW(lab({{0, std::nan("")}}), DataError);
}

TEST(MakeStream, AveragesDuplicateLabDaysAndSorts) {
  const auto s = lab({{4, 1.0}, {2, 7.0}, {4, 3.0}});
  ASSERT_EQ(s.events.size(), 2u);
  EXPECT_EQ(s.events[0].day, 2);
  EXPECT_EQ(s.events[1].day, 4);
  EXPECT_EQ(*s.events[1].value, 2.0);
}

TEST(EventDensity, Examples) {
  const auto none = event_density(codes({}), {0, 30});
  for (double v : none.values) EXPECT_EQ(v, 0.0);

  const auto one = event_density(codes({10}), {0, 30});
  for (Day d = 0; d <= 30; ++d) EXPECT_EQ(one.at(d), d == 10 ? 1.0 : 0.0);

  const auto three = event_density(codes({7, 7, 7}), {0, 30});
  EXPECT_EQ(three.at(7), 3.0);
}

TEST(EventDensity, TotalMassEqualsEventCount) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Day> days;
    const auto n = rng.uniform_int(0, 60);
    for (std::int64_t i = 0; i < n; ++i) days.push_back(rng.uniform_int(0, 400));
    const auto c = event_density(codes(days), {0, 399});
    double sum = 0;
    for (double v : c.values) sum += v;
    EXPECT_EQ(sum, static_cast<double>(n));
  }
}

TEST(RollingMean, SingleEventExample) {
  const auto density = event_density(codes({10}), {0, 800});
  const auto c = rolling_mean(density);
  EXPECT_TRUE(c.smoothed);
  EXPECT_NEAR(c.at(10), 1.0 / 11.0, 1e-15);
  EXPECT_NEAR(c.at(374), 1.0 / 365.0, 1e-15);
  EXPECT_EQ(c.at(375), 0.0);
  EXPECT_EQ(c.at(9), 0.0);
}

TEST(RollingMean, RampAndConstant) {
  EXPECT_NEAR(rolling_mean(raw_curve({0, 1, 2, 3, 4, 5, 6, 7, 8, 9})).values[9], 4.5, 1e-15);
  for (double v : rolling_mean(raw_curve(std::vector<double>(900, 2.5))).values) EXPECT_NEAR(v, 2.5, 1e-13);
}

TEST(RollingMean, MatchesBruteForceOnRandomInputs) {
  Rng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, trial < 50 ? 4001 : 800));
    const int window = trial % 3 == 0 ? kMemoryWindowDays : static_cast<int>(rng.uniform_int(1, 500));
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform() < 0.7 ? 0.0 : rng.normal(0.0, 3.0);
    const auto got = rolling_mean(raw_curve(v), window).values;
    const auto want = oracle::trailing_mean(v, window);
    for (std::size_t d = 0; d < n; ++d) ASSERT_NEAR(got[d], want[d], 1e-12) << "trial " << trial << " day " << d;
  }
}

TEST(RollingMean, RejectsDoubleSmoothingAndBadWindow) {
  const auto c = rolling_mean(raw_curve({1, 2, 3}));
  EXPECT_THROW(rolling_mean(c), DataError);
  EXPECT_THROW(rolling_mean(raw_curve({1, 2, 3}), 0), DataError);
}

TEST(CurveSet, ZeroStreamsGiveZeroCurves) {
  Vocabulary vocab({{"a", VariableKind::categorical_event, 0},
                    {"b", VariableKind::categorical_event, 0},
                    {"c", VariableKind::categorical_event, 0}});
  const auto set = build_curveset({}, vocab, {0, 99});
  ASSERT_EQ(set.variable_count(), 3u);
  for (const auto& c : set.curves) {
    EXPECT_EQ(c.values.size(), 100u);
    for (double v : c.values) EXPECT_EQ(v, 0.0);
  }
}

TEST(CurveSet, LabAndCodeAlign) {
  std::vector<EventStream> streams{lab({{3, 1.0}, {50, 2.0}}), codes({5, 6, 70})};
  const auto vocab = Vocabulary::from_streams(streams);
  const auto set = build_curveset(streams, vocab, {0, 99});
  ASSERT_EQ(set.variable_count(), 2u);
  EXPECT_EQ(set.curves[0].values.size(), set.curves[1].values.size());
  EXPECT_EQ(set.cross_section(60).size(), 2u);
  EXPECT_THROW(set.cross_section(100), DataError);
}

TEST(CurveSet, MissingLabUsesDefault) {
  Vocabulary vocab({{"lab", VariableKind::continuous_lab, 4.0}});
  const auto set = build_curveset({}, vocab, {0, 9});
  for (double v : set.curves[0].values) EXPECT_EQ(v, 4.0);
}

TEST(CurveSet, DeskScaleShapeAndDeterminism) {
  Rng rng(5);
  std::vector<VariableSpec> specs;
  for (int i = 0; i < 200; ++i) {
    specs.push_back({"v" + std::to_string(1000 + i),
                     i % 2 ? VariableKind::continuous_lab : VariableKind::categorical_event, 0.0});
  }
  Vocabulary vocab(specs);
  for (int s = 0; s < 5; ++s) {
    std::vector<EventStream> streams;
    for (int i = 0; i < 200; i += 3) {
      std::vector<Event> ev;
      for (int k = 0; k < 4; ++k) {
        const Day d = rng.uniform_int(0, 1000);
        ev.push_back({d, specs[i].kind == VariableKind::continuous_lab ? std::optional(rng.normal()) : std::nullopt});
      }
      streams.push_back(make_stream("s" + std::to_string(s), specs[i].id, specs[i].kind, ev));
    }
    const auto a = build_curveset(streams, vocab, {0, 999});
    const auto b = build_curveset(streams, vocab, {0, 999});
    ASSERT_EQ(a.variable_count(), 200u);
    for (std::size_t i = 0; i < 200; ++i) {
      ASSERT_EQ(a.curves[i].values.size(), 1000u);
      ASSERT_EQ(a.curves[i].values, b.curves[i].values);
    }
  }
}

TEST(CurveSet, RejectsConflictingStreams) {
  std::vector<EventStream> twice{codes({1}), codes({2})};
  EXPECT_THROW(build_curveset(twice, Vocabulary::from_streams(twice), {0, 9}), DataError);
  Vocabulary wrong({{"code", VariableKind::continuous_lab, 0}});
  std::vector<EventStream> one{codes({1})};
  EXPECT_THROW(build_curveset(one, wrong, {0, 9}), DataError);
}

TEST(EventIo, RoundTrip) {
  std::vector<EventStream> streams{lab({{3, 1.25}, {50, -2.5}}), codes({5, 5, 70})};
  std::ostringstream out;
  io::write_events(out, streams);
  std::istringstream in(out.str());
  const auto table = io::read_events(in);
  ASSERT_EQ(table.size(), 1u);
  const auto& back = table.at("s");
  ASSERT_EQ(back.size(), 2u);
  for (const auto& s : back) {
    const auto& orig = s.variable_id == "lab" ? streams[0] : streams[1];
    ASSERT_EQ(s.events.size(), orig.events.size());
    for (std::size_t i = 0; i < s.events.size(); ++i) {
      EXPECT_EQ(s.events[i].day, orig.events[i].day);
      EXPECT_EQ(s.events[i].value, orig.events[i].value);
    }
  }
}

TEST(EventIo, RejectsMalformedLines) {
  std::istringstream bad_fields("s\tlab\tcontinuous_lab\t3\n");
  EXPECT_THROW(io::read_events(bad_fields), DataError);
  std::istringstream valued_code("s\tc\tcategorical_event\t3\t1.0\n");
  EXPECT_THROW(io::read_events(valued_code), DataError);
}
