#include "lmsig/event_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "lmsig/error.hpp"

namespace lmsig::io {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::int64_t parse_day(std::string_view text, std::size_t line_no) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw DataError("line " + std::to_string(line_no) + ": bad day '" + std::string(text) + "'");
  }
  return v;
}

double parse_value(std::string_view text, std::size_t line_no) {
  // std::from_chars for double is not available in every libstdc++ we target.
  std::string s(text);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
    throw DataError("line " + std::to_string(line_no) + ": invalid value '" + s + "'");
  }
  return v;
}

}  // namespace

EventTable read_events(std::istream& in) {
  using Key = std::pair<std::string, std::string>;
  std::map<Key, std::pair<curves::VariableKind, std::vector<curves::Event>>> raw;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto f = split_tabs(line);
    if (f.size() != 5) {
      throw DataError("line " + std::to_string(line_no) + ": expected 5 tab-separated fields");
    }
    const auto kind = curves::parse_kind(f[2]);
    curves::Event ev{parse_day(f[3], line_no), std::nullopt};
    if (kind == curves::VariableKind::continuous_lab) {
      ev.value = parse_value(f[4], line_no);
    } else if (!f[4].empty()) {
      throw DataError("line " + std::to_string(line_no) + ": categorical event with a value");
    }
    auto [it, inserted] = raw.try_emplace(Key{std::string(f[0]), std::string(f[1])}, kind,
                                          std::vector<curves::Event>{});
    if (!inserted && it->second.first != kind) {
      throw DataError("line " + std::to_string(line_no) + ": variable '" + std::string(f[1]) +
                      "' changes kind");
    }
    it->second.second.push_back(ev);
  }

  EventTable table;
  for (auto& [key, entry] : raw) {
    table[key.first].push_back(
        curves::make_stream(key.first, key.second, entry.first, std::move(entry.second)));
  }
  return table;
}

EventTable read_events(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open event file " + path.string());
  return read_events(in);
}

void write_event_line(std::ostream& out, const curves::EventStream& stream,
                      const curves::Event& event) {
  out << stream.subject_id << '\t' << stream.variable_id << '\t' << curves::to_string(stream.kind)
      << '\t' << event.day << '\t';
  if (event.value) {
    // 17 significant digits round-trip a double exactly.
    std::ostringstream v;
    v << std::setprecision(17) << *event.value;
    out << v.str();
  }
  out << '\n';
}

void write_events(std::ostream& out, const std::vector<curves::EventStream>& streams) {
  for (const auto& s : streams) {
    for (const auto& e : s.events) write_event_line(out, s, e);
  }
}

CurveMatrix to_matrix(const curves::CurveSet& set) {
  CurveMatrix m;
  m.rows = static_cast<std::int64_t>(set.variable_count());
  m.cols = static_cast<std::int64_t>(set.day_count());
  m.start_day = set.grid.first;
  m.data.reserve(static_cast<std::size_t>(m.rows * m.cols));
  for (const auto& c : set.curves) m.data.insert(m.data.end(), c.values.begin(), c.values.end());
  return m;
}

void write_curve_matrix(const std::filesystem::path& path, const CurveMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const std::int64_t header[3] = {m.rows, m.cols, m.start_day};
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  out.write(reinterpret_cast<const char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(double)));
  if (!out) throw DataError("failed writing " + path.string());
}

CurveMatrix read_curve_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open curve matrix " + path.string());
  std::int64_t header[3];
  in.read(reinterpret_cast<char*>(header), sizeof header);
  if (!in || header[0] < 0 || header[1] < 0) throw DataError("bad curve matrix header in " + path.string());
  CurveMatrix m{header[0], header[1], header[2], {}};
  m.data.resize(static_cast<std::size_t>(m.rows * m.cols));
  in.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(m.data.size() * sizeof(double)));
  if (!in) throw DataError("truncated curve matrix " + path.string());
  return m;
}

}  // namespace lmsig::io
