#include "lmsig/curves.hpp"

#include <algorithm>
#include <cmath>

#include "lmsig/error.hpp"

namespace lmsig::curves {

std::string_view to_string(VariableKind kind) {
  return kind == VariableKind::categorical_event ? "categorical_event" : "continuous_lab";
}

VariableKind parse_kind(std::string_view text) {
  if (text == "categorical_event") return VariableKind::categorical_event;
  if (text == "continuous_lab") return VariableKind::continuous_lab;
  throw DataError("unknown variable kind '" + std::string(text) + "'");
}

EventStream make_stream(std::string subject_id, std::string variable_id,
                        VariableKind kind, std::vector<Event> events) {
  EventStream s{std::move(subject_id), std::move(variable_id), kind, {}};
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.day < b.day; });

  if (kind == VariableKind::categorical_event) {
    for (const auto& e : events) {
      if (e.value) {
        throw DataError("categorical event for '" + s.variable_id + "' carries a value");
      }
    }
    s.events = std::move(events);
    return s;
  }

  s.events.reserve(events.size());
  for (std::size_t i = 0; i < events.size();) {
    std::size_t j = i;
    double sum = 0.0;
    for (; j < events.size() && events[j].day == events[i].day; ++j) {
      if (!events[j].value || !std::isfinite(*events[j].value)) {
        throw DataError("invalid value for lab '" + s.variable_id + "' on day " +
                        std::to_string(events[j].day));
      }
      sum += *events[j].value;
    }
    s.events.push_back({events[i].day, sum / static_cast<double>(j - i)});
    i = j;
  }
  return s;
}

MonotoneCubic::MonotoneCubic(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)), slopes_(x_.size(), 0.0) {
  const std::size_t n = x_.size();
  if (n == 0 || y_.size() != n) throw DataError("no observations");
  if (n == 1) return;

  std::vector<double> secant(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    secant[k] = (y_[k + 1] - y_[k]) / (x_[k + 1] - x_[k]);
  }

  slopes_[0] = secant[0];
  slopes_[n - 1] = secant[n - 2];
  for (std::size_t k = 1; k + 1 < n; ++k) {
    slopes_[k] = secant[k - 1] * secant[k] <= 0.0 ? 0.0 : 0.5 * (secant[k - 1] + secant[k]);
  }

  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (secant[k] == 0.0) {
      slopes_[k] = 0.0;
      slopes_[k + 1] = 0.0;
      continue;
    }
    const double alpha = slopes_[k] / secant[k];
    const double beta = slopes_[k + 1] / secant[k];
    const double r2 = alpha * alpha + beta * beta;
    if (r2 > 9.0) {
      const double tau = 3.0 / std::sqrt(r2);
      slopes_[k] = tau * alpha * secant[k];
      slopes_[k + 1] = tau * beta * secant[k];
    }
  }
}

double MonotoneCubic::operator()(double t) const {
  if (t <= x_.front()) return y_.front();
  if (t >= x_.back()) return y_.back();

  const auto it = std::upper_bound(x_.begin(), x_.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - x_.begin()) - 1;
  const double h = x_[k + 1] - x_[k];
  const double s = (t - x_[k]) / h;
  const double s2 = s * s;
  const double s3 = s2 * s;
  const double h10 = s3 - 2.0 * s2 + s;
  const double h01 = -2.0 * s3 + 3.0 * s2;
  const double h11 = s3 - s2;
  // h00 = 1 - h01, folded in so flat segments reproduce their value exactly
  return y_[k] + h01 * (y_[k + 1] - y_[k]) + h * (h10 * slopes_[k] + h11 * slopes_[k + 1]);
}

namespace {

void require_covered(const EventStream& stream, DayRange grid) {
  if (grid.last < grid.first) throw DataError("empty day grid");
  for (const auto& e : stream.events) {
    if (!grid.contains(e.day)) {
      throw DataError("grid does not cover day " + std::to_string(e.day) + " of '" +
                      stream.variable_id + "'");
    }
  }
}

}  // namespace

LongitudinalCurve interpolate_continuous(const EventStream& stream, DayRange grid) {
  if (stream.events.empty()) throw DataError("no observations");
  require_covered(stream, grid);

  std::vector<double> x;
  std::vector<double> y;
  x.reserve(stream.events.size());
  y.reserve(stream.events.size());
  for (const auto& e : stream.events) {
    if (!e.value || !std::isfinite(*e.value)) throw DataError("invalid value");
    if (!x.empty() && static_cast<double>(e.day) <= x.back()) {
      throw DataError("lab days must ascend strictly; normalize with make_stream()");
    }
    x.push_back(static_cast<double>(e.day));
    y.push_back(*e.value);
  }
  const MonotoneCubic spline(std::move(x), std::move(y));

  LongitudinalCurve curve{stream.variable_id, grid.first, std::vector<double>(grid.size()), false};
  for (std::size_t i = 0; i < curve.values.size(); ++i) {
    curve.values[i] = spline(static_cast<double>(grid.first + static_cast<Day>(i)));
  }
  // Knots are reproduced exactly rather than through the Hermite basis.
  for (const auto& e : stream.events) {
    curve.values[static_cast<std::size_t>(e.day - grid.first)] = *e.value;
  }
  return curve;
}

LongitudinalCurve event_density(const EventStream& stream, DayRange grid) {
  require_covered(stream, grid);
  LongitudinalCurve curve{stream.variable_id, grid.first, std::vector<double>(grid.size(), 0.0),
                          false};
  for (const auto& e : stream.events) {
    curve.values[static_cast<std::size_t>(e.day - grid.first)] += 1.0;
  }
  return curve;
}

LongitudinalCurve rolling_mean(const LongitudinalCurve& curve, int window_days) {
  if (curve.smoothed) throw DataError("curve '" + curve.variable_id + "' is already smoothed");
  if (window_days < 1) throw DataError("window must be at least one day");

  const auto& in = curve.values;
  LongitudinalCurve out{curve.variable_id, curve.start_day, std::vector<double>(in.size()), true};
  const auto w = static_cast<std::size_t>(window_days);

  // Sliding sum with Neumaier compensation so long series stay within a few
  // ulps of the direct windowed sum.
  double sum = 0.0;
  double comp = 0.0;
  auto add = [&](double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  };
  for (std::size_t d = 0; d < in.size(); ++d) {
    add(in[d]);
    if (d >= w) add(-in[d - w]);
    const std::size_t count = std::min(d + 1, w);
    out.values[d] = (sum + comp) / static_cast<double>(count);
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<VariableSpec> variables) : variables_(std::move(variables)) {
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    if (!index_.emplace(variables_[i].id, i).second) {
      throw DataError("duplicate variable '" + variables_[i].id + "' in vocabulary");
    }
  }
}

Vocabulary Vocabulary::from_streams(std::span<const EventStream> streams, std::size_t min_events) {
  std::map<std::string, std::pair<VariableKind, std::size_t>> seen;
  for (const auto& s : streams) {
    auto [it, inserted] = seen.try_emplace(s.variable_id, s.kind, 0);
    if (!inserted && it->second.first != s.kind) {
      throw DataError("variable '" + s.variable_id + "' appears with two kinds");
    }
    it->second.second += s.events.size();
  }
  std::vector<VariableSpec> vars;
  for (const auto& [id, info] : seen) {
    if (info.second >= min_events) vars.push_back({id, info.first, 0.0});
  }
  return Vocabulary(std::move(vars));
}

std::optional<std::size_t> Vocabulary::index_of(std::string_view id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<double> CurveSet::cross_section(Day d) const {
  if (!grid.contains(d)) {
    throw DataError("day " + std::to_string(d) + " outside curve range of subject '" +
                    subject_id + "'");
  }
  std::vector<double> x(curves.size());
  const auto offset = static_cast<std::size_t>(d - grid.first);
  for (std::size_t i = 0; i < curves.size(); ++i) x[i] = curves[i].values[offset];
  return x;
}

CurveSet build_curveset(std::span<const EventStream> streams, const Vocabulary& vocabulary,
                        DayRange grid) {
  CurveSet set;
  set.grid = grid;
  if (!streams.empty()) set.subject_id = streams.front().subject_id;

  std::vector<const EventStream*> by_var(vocabulary.size(), nullptr);
  for (const auto& s : streams) {
    if (s.subject_id != set.subject_id) {
      throw DataError("mixed subject ids in one curve set: '" + set.subject_id + "' and '" +
                      s.subject_id + "'");
    }
    const auto idx = vocabulary.index_of(s.variable_id);
    if (!idx) continue;
    if (vocabulary[*idx].kind != s.kind) {
      throw DataError("variable '" + s.variable_id + "' has the wrong kind");
    }
    if (by_var[*idx] != nullptr) {
      throw DataError("two streams for variable '" + s.variable_id + "'");
    }
    by_var[*idx] = &s;
  }

  set.curves.reserve(vocabulary.size());
  for (std::size_t i = 0; i < vocabulary.size(); ++i) {
    const auto& spec = vocabulary[i];
    const EventStream* s = by_var[i];
    LongitudinalCurve raw;
    if (spec.kind == VariableKind::categorical_event) {
      raw = s ? event_density(*s, grid)
              : LongitudinalCurve{spec.id, grid.first, std::vector<double>(grid.size(), 0.0), false};
    } else if (s && !s->events.empty()) {
      raw = interpolate_continuous(*s, grid);
    } else {
      raw = LongitudinalCurve{spec.id, grid.first,
                              std::vector<double>(grid.size(), spec.default_value), false};
    }
    raw.variable_id = spec.id;
    set.curves.push_back(rolling_mean(raw));
  }
  return set;
}

}  // namespace lmsig::curves
