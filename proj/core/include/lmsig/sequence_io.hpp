#pragma once

// Sequence line records:
//   subject_id<TAB>slot<TAB>modality<TAB>day<TAB>padding<TAB>payload
// with `padding` 0/1 and `payload` comma-separated (empty for cls, padded
// tokens and not-yet-filled skeleton tokens). Labels travel separately as
//   subject_id<TAB>label

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "lmsig/encoder.hpp"

namespace lmsig::encoder {

void write_sequence(std::ostream& out, const TokenSequence& seq);
/// Reads sequences in file order. Slots of a subject must be contiguous.
std::vector<TokenSequence> read_sequences(std::istream& in);
std::vector<TokenSequence> read_sequences(const std::filesystem::path& path);

void write_labels(std::ostream& out, const std::vector<TokenSequence>& seqs);
std::map<std::string, int> read_labels(std::istream& in);
/// Attaches labels by subject id; throws if any sequence lacks one.
void attach_labels(std::vector<TokenSequence>& seqs, const std::map<std::string, int>& labels);

}  // namespace lmsig::encoder
