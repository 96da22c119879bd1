// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace attmerge {

enum class Label { bonafide, spoof };

std::string_view to_string(Label label);
/// "bonafide" or "spoof"; nullopt for any other token.
std::optional<Label> parse_label(std::string_view token);

struct ScoreRecord {
  std::string utterance_id;
  Label label;
  double score; // higher means more bona fide
};

class MissingClassError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Scored trials. Utterance ids are unique; EER additionally needs at least
/// one record of each class.
class ScoreSet {
public:
  ScoreSet() = default;
  explicit ScoreSet(std::vector<ScoreRecord> records);

  void add(ScoreRecord record);
  const std::vector<ScoreRecord> &records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  std::size_t count(Label label) const;

  /// Throws MissingClassError when either class is absent.
  void require_both_classes() const;

private:
  std::vector<ScoreRecord> records_;
  std::unordered_set<std::string> ids_;
};

/// One operating point. The threshold accepts scores >= threshold as bona
/// fide: FAR is the share of spoof trials accepted, FRR the share of bona fide
/// trials rejected.
struct DetPoint {
  double threshold;
  double far;
  double frr;
};

/// Operating points for every distinct score in ascending order, followed by a
/// terminal point at threshold +inf (FAR 0, FRR 1). FAR is non-increasing and
/// FRR non-decreasing along the list.
std::vector<DetPoint> det_points(const ScoreSet &scores);

/// Equal error rate in [0, 1]: the first point where FAR - FRR stops being
/// positive, linearly interpolated with the previous point when the
/// difference changes sign between them.
double compute_eer(const ScoreSet &scores);

/// Crossing of a (FAR, FRR) polyline with the diagonal, using the same
/// interpolation rule as compute_eer.
double eer_from_points(std::span<const DetPoint> points);

/// Arithmetic mean; throws std::invalid_argument on an empty list.
double average_eer(std::span<const double> eers);

void write_det_csv(std::ostream &out, std::span<const DetPoint> points);

/// Table of EERs: one row per system, and for each layer count a group of
/// per-dataset columns followed by their average.
struct EerTable {
  std::vector<std::string> datasets;
  std::vector<std::size_t> layer_counts;
  struct Row {
    std::string system;
    /// eers[k][d]: layer_counts[k], datasets[d]
    std::vector<std::vector<double>> eers;
  };
  std::vector<Row> rows;

  /// Values are written as percentages with two decimals.
  void write_csv(std::ostream &out) const;
};

} // namespace attmerge
