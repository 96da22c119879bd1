// SPDX-License-Identifier: Apache-2.0
#include "attmerge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

namespace attmerge {

std::string_view to_string(Label label) {
  return label == Label::bonafide ? "bonafide" : "spoof";
}

std::optional<Label> parse_label(std::string_view token) {
  if (token == "bonafide") return Label::bonafide;
  if (token == "spoof") return Label::spoof;
  return std::nullopt;
}

ScoreSet::ScoreSet(std::vector<ScoreRecord> records) {
  records_.reserve(records.size());
  for (auto &r : records) add(std::move(r));
}

void ScoreSet::add(ScoreRecord record) {
  if (!std::isfinite(record.score)) {
    throw std::invalid_argument("non-finite score for utterance " + record.utterance_id);
  }
  if (!ids_.insert(record.utterance_id).second) {
    throw std::invalid_argument("duplicate utterance id in score set: " + record.utterance_id);
  }
  records_.push_back(std::move(record));
}

std::size_t ScoreSet::count(Label label) const {
  return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(),
                                                [&](const ScoreRecord &r) { return r.label == label; }));
}

void ScoreSet::require_both_classes() const {
  if (count(Label::bonafide) == 0) throw MissingClassError("score set has no bonafide trials");
  if (count(Label::spoof) == 0) throw MissingClassError("score set has no spoof trials");
}

std::vector<DetPoint> det_points(const ScoreSet &scores) {
  scores.require_both_classes();
  std::vector<std::pair<double, Label>> sorted;
  sorted.reserve(scores.size());
  for (const auto &r : scores.records()) sorted.emplace_back(r.score, r.label);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto &a, const auto &b) { return a.first < b.first; });

  const auto n_bona = static_cast<double>(scores.count(Label::bonafide));
  const auto n_spoof_total = scores.count(Label::spoof);
  const auto n_spoof = static_cast<double>(n_spoof_total);

  std::vector<DetPoint> points;
  std::size_t bona_below = 0, spoof_below = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double threshold = sorted[i].first;
    points.push_back(DetPoint{threshold,
                              static_cast<double>(n_spoof_total - spoof_below) / n_spoof,
                              static_cast<double>(bona_below) / n_bona});
    for (; i < sorted.size() && sorted[i].first == threshold; ++i) {
      if (sorted[i].second == Label::bonafide) ++bona_below;
      else ++spoof_below;
    }
  }
  points.push_back(DetPoint{std::numeric_limits<double>::infinity(), 0.0, 1.0});
  return points;
}

double eer_from_points(std::span<const DetPoint> points) {
  for (std::size_t k = 0; k < points.size(); ++k) {
    const double diff = points[k].far - points[k].frr;
    if (diff > 0.0) continue;
    if (diff == 0.0 || k == 0) return points[k].far;
    const DetPoint &prev = points[k - 1];
    const double prev_diff = prev.far - prev.frr;
    const double alpha = prev_diff / (prev_diff - diff);
    return prev.far + alpha * (points[k].far - prev.far);
  }
  throw std::invalid_argument("eer_from_points: polyline never crosses FAR = FRR");
}

double compute_eer(const ScoreSet &scores) {
  const auto points = det_points(scores);
  return eer_from_points(points);
}

double average_eer(std::span<const double> eers) {
  if (eers.empty()) throw std::invalid_argument("average_eer: empty list");
  return std::accumulate(eers.begin(), eers.end(), 0.0) / static_cast<double>(eers.size());
}

void write_det_csv(std::ostream &out, std::span<const DetPoint> points) {
  out << "far,frr\n";
  char buf[64];
  for (const auto &p : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.far, p.frr);
    out << buf;
  }
}

void EerTable::write_csv(std::ostream &out) const {
  out << "system";
  for (auto k : layer_counts) {
    for (const auto &d : datasets) out << ',' << k << ':' << d;
    out << ',' << k << ":Avg.";
  }
  out << '\n';
  char buf[32];
  for (const auto &row : rows) {
    out << row.system;
    for (std::size_t k = 0; k < layer_counts.size(); ++k) {
      const auto &values = row.eers.at(k);
      if (values.size() != datasets.size()) {
        throw std::invalid_argument("EerTable: row " + row.system + " has " +
                                    std::to_string(values.size()) + " values for " +
                                    std::to_string(datasets.size()) + " datasets");
      }
      for (double v : values) {
        std::snprintf(buf, sizeof buf, ",%.2f", 100.0 * v);
        out << buf;
      }
      std::snprintf(buf, sizeof buf, ",%.2f", 100.0 * average_eer(values));
      out << buf;
    }
    out << '\n';
  }
}

} // namespace attmerge
