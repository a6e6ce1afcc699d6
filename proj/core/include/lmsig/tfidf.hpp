#pragma once

// TF-IDF vectors of the codes recorded in the year before a scan, the input
// of the binned-code baseline.
//
//   tf(code)  = occurrences in (scan_day - window, scan_day]
//   idf(code) = ln((1 + N) / (1 + df(code))) + 1
//
// over a training corpus of N documents, followed by L2 normalization.

#include <Eigen/Dense>
#include <span>

#include "lmsig/curves.hpp"

namespace lmsig::tfidf {

using Vector = Eigen::VectorXd;

/// Raw counts per vocabulary entry in (scan_day - window, scan_day]. Streams
/// of lab variables and of variables outside the vocabulary are ignored.
Vector term_counts(std::span<const curves::EventStream> streams, const curves::Vocabulary& vocabulary,
                   curves::Day scan_day, int window = curves::kMemoryWindowDays);

struct IdfModel {
  Vector idf;
  std::size_t documents = 0;
};

IdfModel fit_idf(std::span<const Vector> documents);

/// tf * idf, L2-normalized; an all-zero document stays the zero vector.
Vector transform(const IdfModel& model, const Vector& counts);

}  // namespace lmsig::tfidf
