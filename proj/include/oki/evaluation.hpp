#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "oki/embedding.hpp"

namespace oki {

struct StsPair {
  std::size_t id = 0;  // row order, 0-based
  std::string sentence_a;
  std::string sentence_b;
  double gold_score = 0.0;
};

// rows: gold_score<TAB>sentence_a<TAB>sentence_b
std::vector<StsPair> load_sts(std::istream& in);

struct SubsetAnnotation {
  std::string dataset_id;
  std::vector<std::size_t> member_ids;
};

// sidecar: one pair id per line
SubsetAnnotation load_subset(std::istream& in, std::string dataset_id);

// average ranks (1-based; ties get the mean of their positions)
std::vector<double> average_ranks(const std::vector<double>& values);

// Pearson correlation of average-rank-transformed sequences. DomainError on
// length mismatch, fewer than two points, or a constant side.
double spearman(const std::vector<double>& predictions, const std::vector<double>& gold);

struct EvalReport {
  std::string dataset;
  double all_score = 0.0;  // raw correlation in [-1, 1]
  std::optional<double> subset_score;
  std::size_t n_all = 0;
  std::size_t n_subset = 0;
  std::vector<std::string> warnings;
};

// Cosine-similarity predictions for every pair, Spearman against gold over
// the whole set and over the subset members (same prediction vector).
EvalReport evaluate(const Encoder& encoder, const std::vector<StsPair>& dataset,
                    const SubsetAnnotation* subset, const std::string& dataset_name);

// correlation scaled x100, rounded to 2 decimals (table convention)
double display_score(double correlation);
std::string format_display_score(double correlation);

std::string eval_report_json(const EvalReport& report);

struct ScoreCell {
  std::optional<double> all;     // raw correlations
  std::optional<double> subset;
};

struct ScoreRow {
  std::string label;             // e.g. "hash256_orig"
  std::vector<ScoreCell> cells;  // one per dataset
};

// Fixed-width table: one column group per dataset with All/Dis subcolumns,
// one row per encoder variant.
std::string render_score_table(const std::vector<std::string>& datasets,
                               const std::vector<ScoreRow>& rows);

}  // namespace oki
