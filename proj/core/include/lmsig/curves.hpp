#pragma once

// Conversion of sparse, irregular per-variable event streams into dense
// daily longitudinal curves with a one-year trailing memory.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lmsig::curves {

using Day = std::int64_t;

/// Length of the trailing uniform window that gives curves a limited memory.
inline constexpr int kMemoryWindowDays = 365;

enum class VariableKind { categorical_event, continuous_lab };

std::string_view to_string(VariableKind kind);
VariableKind parse_kind(std::string_view text);

struct Event {
  Day day = 0;
  std::optional<double> value;  // set iff the stream is continuous_lab
};

/// One subject's raw record for one variable.
///
/// Streams built through make_stream() are normalized: events ascend by day,
/// duplicate lab days are collapsed to their mean, lab values are finite and
/// categorical events carry no value.
struct EventStream {
  std::string subject_id;
  std::string variable_id;
  VariableKind kind = VariableKind::categorical_event;
  std::vector<Event> events;
};

EventStream make_stream(std::string subject_id, std::string variable_id,
                        VariableKind kind, std::vector<Event> events);

/// Inclusive day range [first, last].
struct DayRange {
  Day first = 0;
  Day last = 0;

  std::size_t size() const { return static_cast<std::size_t>(last - first + 1); }
  bool contains(Day d) const { return d >= first && d <= last; }
};

struct LongitudinalCurve {
  std::string variable_id;
  Day start_day = 0;
  std::vector<double> values;
  bool smoothed = false;

  Day last_day() const { return start_day + static_cast<Day>(values.size()) - 1; }
  double at(Day d) const { return values.at(static_cast<std::size_t>(d - start_day)); }
};

/// Shape-preserving (Fritsch-Carlson) piecewise cubic Hermite interpolant.
///
/// Knots must ascend strictly. Outside [x.front(), x.back()] the interpolant
/// holds the nearest endpoint value.
class MonotoneCubic {
 public:
  MonotoneCubic(std::vector<double> x, std::vector<double> y);

  double operator()(double t) const;
  const std::vector<double>& tangents() const { return slopes_; }

 private:
  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> slopes_;
};

LongitudinalCurve interpolate_continuous(const EventStream& stream, DayRange grid);

/// Raw daily event counts on the grid. Days before the first event are zero.
LongitudinalCurve event_density(const EventStream& stream, DayRange grid);

/// output[d] = mean(input[max(start, d - window + 1) .. d]). The window is
/// truncated at the start of the series and the divisor is the number of days
/// actually available.
LongitudinalCurve rolling_mean(const LongitudinalCurve& curve,
                               int window_days = kMemoryWindowDays);

struct VariableSpec {
  std::string id;
  VariableKind kind = VariableKind::categorical_event;
  /// Constant used for a lab variable with no observations for a subject.
  double default_value = 0.0;
};

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<VariableSpec> variables);

  /// Variables seen in `streams` with at least `min_events` events in total,
  /// ordered by id.
  static Vocabulary from_streams(std::span<const EventStream> streams,
                                 std::size_t min_events = 0);

  std::size_t size() const { return variables_.size(); }
  const VariableSpec& operator[](std::size_t i) const { return variables_[i]; }
  const std::vector<VariableSpec>& variables() const { return variables_; }
  std::optional<std::size_t> index_of(std::string_view id) const;

 private:
  std::vector<VariableSpec> variables_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// One subject's curves, one per vocabulary entry, all on the same day grid.
struct CurveSet {
  std::string subject_id;
  DayRange grid;
  std::vector<LongitudinalCurve> curves;  // vocabulary order

  std::size_t variable_count() const { return curves.size(); }
  std::size_t day_count() const { return grid.size(); }
  /// Values of every curve at day `d` (length = variable_count()).
  std::vector<double> cross_section(Day d) const;
};

/// Builds smoothed, aligned curves for every variable in `vocabulary`.
/// Streams for variables outside the vocabulary are ignored.
CurveSet build_curveset(std::span<const EventStream> streams,
                        const Vocabulary& vocabulary, DayRange grid);

}  // namespace lmsig::curves
