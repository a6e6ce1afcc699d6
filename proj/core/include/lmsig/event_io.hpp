#pragma once

// Line-record event ingestion and binary curve-matrix export.
//
// Event line: subject_id<TAB>variable_id<TAB>kind<TAB>day<TAB>value
// with `value` empty for categorical events. Lines starting with '#' and blank
// lines are ignored.
//
// Curve matrix file (little-endian): int64 variable_count, int64 day_count,
// int64 start_day, then variable_count * day_count row-major float64.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "lmsig/curves.hpp"

namespace lmsig::io {

/// Streams grouped by subject (ordered by subject id), each normalized.
using EventTable = std::map<std::string, std::vector<curves::EventStream>>;

EventTable read_events(std::istream& in);
EventTable read_events(const std::filesystem::path& path);

void write_event_line(std::ostream& out, const curves::EventStream& stream,
                      const curves::Event& event);
void write_events(std::ostream& out, const std::vector<curves::EventStream>& streams);

struct CurveMatrix {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::int64_t start_day = 0;
  std::vector<double> data;  // row-major

  double& operator()(std::int64_t r, std::int64_t c) { return data[static_cast<std::size_t>(r * cols + c)]; }
  double operator()(std::int64_t r, std::int64_t c) const {
    return data[static_cast<std::size_t>(r * cols + c)];
  }
};

CurveMatrix to_matrix(const curves::CurveSet& set);

void write_curve_matrix(const std::filesystem::path& path, const CurveMatrix& m);
CurveMatrix read_curve_matrix(const std::filesystem::path& path);

}  // namespace lmsig::io
