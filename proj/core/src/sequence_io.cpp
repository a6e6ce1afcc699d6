#include "lmsig/sequence_io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "lmsig/error.hpp"

namespace lmsig::encoder {

void write_sequence(std::ostream& out, const TokenSequence& seq) {
  std::ostringstream line;
  line << std::setprecision(17);
  for (std::size_t slot = 0; slot < seq.items.size(); ++slot) {
    const auto& t = seq.items[slot];
    line.str({});
    line << seq.subject_id << '\t' << slot << '\t' << to_string(t.modality) << '\t' << t.day << '\t'
         << (t.padding ? 1 : 0) << '\t';
    for (std::size_t k = 0; k < t.payload.size(); ++k) line << (k ? "," : "") << t.payload[k];
    line << '\n';
    out << line.str();
  }
}

std::vector<TokenSequence> read_sequences(std::istream& in) {
  std::vector<TokenSequence> out;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw DataError("sequence line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) f.push_back(field);
    if (f.size() == 5) f.emplace_back();  // trailing empty payload
    if (f.size() != 6) fail("expected 6 tab-separated fields");

    Token tok;
    try {
      tok.modality = parse_modality(f[2]);
      tok.day = std::stoll(f[3]);
      if (f[4] != "0" && f[4] != "1") fail("padding must be 0 or 1");
      tok.padding = f[4] == "1";
      std::stringstream ps(f[5]);
      while (std::getline(ps, field, ',')) tok.payload.push_back(std::stod(field));
    } catch (const std::logic_error&) {
      fail("unparseable number");
    }

    const auto slot = std::stoul(f[1]);
    if (slot == 0) {
      out.push_back({f[0], {}, std::nullopt});
    } else if (out.empty() || out.back().subject_id != f[0]) {
      fail("subject '" + f[0] + "' does not start at slot 0");
    }
    if (slot != out.back().items.size()) fail("slots out of order for '" + f[0] + "'");
    out.back().items.push_back(std::move(tok));
  }
  return out;
}

std::vector<TokenSequence> read_sequences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sequence file " + path.string());
  return read_sequences(in);
}

void write_labels(std::ostream& out, const std::vector<TokenSequence>& seqs) {
  for (const auto& s : seqs) {
    if (s.label) out << s.subject_id << '\t' << *s.label << '\n';
  }
}

std::map<std::string, int> read_labels(std::istream& in) {
  std::map<std::string, int> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("bad label line '" + line + "'");
    const std::string value = line.substr(tab + 1);
    if (value != "0" && value != "1") throw DataError("label must be 0 or 1 in '" + line + "'");
    labels[line.substr(0, tab)] = value == "1";
  }
  return labels;
}

void attach_labels(std::vector<TokenSequence>& seqs, const std::map<std::string, int>& labels) {
  for (auto& s : seqs) {
    const auto it = labels.find(s.subject_id);
    if (it == labels.end()) throw DataError("no label for subject '" + s.subject_id + "'");
    s.label = it->second;
  }
}

}  // namespace lmsig::encoder
