#include "lmsig/tfidf.hpp"

#include <cmath>

#include "lmsig/error.hpp"

namespace lmsig::tfidf {

Vector term_counts(std::span<const curves::EventStream> streams, const curves::Vocabulary& vocabulary,
                   curves::Day scan_day, int window) {
  Vector counts = Vector::Zero(static_cast<Eigen::Index>(vocabulary.size()));
  for (const auto& s : streams) {
    if (s.kind != curves::VariableKind::categorical_event) continue;
    const auto idx = vocabulary.index_of(s.variable_id);
    if (!idx) continue;
    for (const auto& e : s.events) {
      if (e.day > scan_day - window && e.day <= scan_day) counts(static_cast<Eigen::Index>(*idx)) += 1.0;
    }
  }
  return counts;
}

IdfModel fit_idf(std::span<const Vector> documents) {
  if (documents.empty()) throw DataError("empty TF-IDF corpus");
  const auto dim = documents.front().size();
  Vector df = Vector::Zero(dim);
  for (const auto& d : documents) {
    if (d.size() != dim) throw DataError("TF-IDF documents differ in length");
    for (Eigen::Index i = 0; i < dim; ++i) {
      if (d(i) > 0.0) df(i) += 1.0;
    }
  }
  IdfModel m;
  m.documents = documents.size();
  const double n = static_cast<double>(documents.size());
  m.idf = df.unaryExpr([n](double f) { return std::log((1.0 + n) / (1.0 + f)) + 1.0; });
  return m;
}

Vector transform(const IdfModel& model, const Vector& counts) {
  if (counts.size() != model.idf.size()) throw DataError("TF-IDF vocabulary mismatch");
  Vector v = counts.cwiseProduct(model.idf);
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

}  // namespace lmsig::tfidf
