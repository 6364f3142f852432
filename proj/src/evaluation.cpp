#include "oki/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

namespace oki {

using nlohmann::json;

std::vector<StsPair> load_sts(std::istream& in) {
  std::vector<StsPair> pairs;
  for_each_line(in, [&](const std::string& line, std::size_t number) {
    std::vector<std::string> fields = split(line, '\t');
    if (fields.size() != 3) {
      throw ParseError("line " + std::to_string(number) + ": expected 3 tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    char* end = nullptr;
    double gold = std::strtod(fields[0].c_str(), &end);
    if (end != fields[0].c_str() + fields[0].size() || fields[0].empty() || !std::isfinite(gold)) {
      throw ParseError("line " + std::to_string(number) + ": invalid gold score '" + fields[0] + "'");
    }
    if (fields[1].empty() || fields[2].empty()) {
      throw ParseError("line " + std::to_string(number) + ": empty sentence");
    }
    pairs.push_back({pairs.size(), fields[1], fields[2], gold});
  });
  return pairs;
}

SubsetAnnotation load_subset(std::istream& in, std::string dataset_id) {
  SubsetAnnotation subset;
  subset.dataset_id = std::move(dataset_id);
  for_each_line(in, [&](const std::string& line, std::size_t number) {
    std::string t = trim(line);
    char* end = nullptr;
    unsigned long long id = std::strtoull(t.c_str(), &end, 10);
    if (end != t.c_str() + t.size() || t.empty()) {
      throw ParseError("subset line " + std::to_string(number) + ": invalid pair id '" + t + "'");
    }
    subset.member_ids.push_back(static_cast<std::size_t>(id));
  });
  std::sort(subset.member_ids.begin(), subset.member_ids.end());
  subset.member_ids.erase(std::unique(subset.member_ids.begin(), subset.member_ids.end()),
                          subset.member_ids.end());
  return subset;
}

std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(const std::vector<double>& predictions, const std::vector<double>& gold) {
  if (predictions.size() != gold.size()) {
    throw DomainError("prediction/gold length mismatch: " + std::to_string(predictions.size()) +
                      " vs " + std::to_string(gold.size()));
  }
  const std::size_t n = predictions.size();
  if (n < 2) throw DomainError("correlation needs at least two points");

  std::vector<double> rx = average_ranks(predictions);
  std::vector<double> ry = average_ranks(gold);

  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);

  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double dx = rx[i] - mx;
    double dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw DomainError("correlation undefined for constant input");
  }
  return sxy / std::sqrt(sxx * syy);
}

EvalReport evaluate(const Encoder& encoder, const std::vector<StsPair>& dataset,
                    const SubsetAnnotation* subset, const std::string& dataset_name) {
  if (dataset.empty()) throw DomainError("cannot evaluate an empty dataset");

  // each sentence encoded exactly once so subset scores reuse the same vectors
  std::map<std::string, Vec> vectors;
  for (const StsPair& p : dataset) {
    if (!vectors.count(p.sentence_a)) vectors.emplace(p.sentence_a, encoder.encode(p.sentence_a));
    if (!vectors.count(p.sentence_b)) vectors.emplace(p.sentence_b, encoder.encode(p.sentence_b));
  }

  std::vector<double> predictions(dataset.size());
  std::vector<double> gold(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    predictions[i] = cosine_similarity(vectors.at(dataset[i].sentence_a),
                                       vectors.at(dataset[i].sentence_b));
    gold[i] = dataset[i].gold_score;
  }

  EvalReport report;
  report.dataset = dataset_name;
  report.n_all = dataset.size();
  report.all_score = spearman(predictions, gold);

  if (subset) {
    std::set<std::size_t> ids;
    for (const StsPair& p : dataset) ids.insert(p.id);
    std::vector<double> sub_pred, sub_gold;
    for (std::size_t id : subset->member_ids) {
      if (!ids.count(id)) {
        throw DomainError("subset id " + std::to_string(id) + " not in dataset " + dataset_name);
      }
    }
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (std::binary_search(subset->member_ids.begin(), subset->member_ids.end(),
                             dataset[i].id)) {
        sub_pred.push_back(predictions[i]);
        sub_gold.push_back(gold[i]);
      }
    }
    report.n_subset = sub_pred.size();
    if (sub_pred.size() < 2) {
      report.warnings.push_back("subset of " + dataset_name + " has fewer than 2 pairs; score omitted");
    } else {
      report.subset_score = spearman(sub_pred, sub_gold);
    }
  }
  return report;
}

double display_score(double correlation) {
  return std::round(correlation * 10000.0) / 100.0;
}

std::string format_display_score(double correlation) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", display_score(correlation));
  return buf;
}

std::string eval_report_json(const EvalReport& report) {
  json doc;
  doc["dataset"] = report.dataset;
  doc["all"] = display_score(report.all_score);
  if (report.subset_score) {
    doc["subset"] = display_score(*report.subset_score);
  } else {
    doc["subset"] = nullptr;
  }
  doc["n_all"] = report.n_all;
  doc["n_subset"] = report.n_subset;
  if (!report.warnings.empty()) doc["warnings"] = report.warnings;
  return doc.dump();
}

std::string render_score_table(const std::vector<std::string>& datasets,
                               const std::vector<ScoreRow>& rows) {
  std::size_t label_width = std::string("Embedding").size();
  for (const ScoreRow& r : rows) label_width = std::max(label_width, r.label.size());

  std::ostringstream out;
  auto pad = [](const std::string& s, std::size_t w) {
    return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
  };

  out << pad("Embedding", label_width);
  for (const std::string& d : datasets) out << " | " << pad(d, 15);
  out << "\n";
  out << pad("", label_width);
  for (std::size_t i = 0; i < datasets.size(); ++i) out << " | " << pad("All", 7) << pad("Dis", 8);
  out << "\n";
  out << std::string(label_width + datasets.size() * 18, '-') << "\n";
  for (const ScoreRow& r : rows) {
    out << pad(r.label, label_width);
    for (std::size_t i = 0; i < datasets.size(); ++i) {
      std::string all = "--";
      std::string dis = "--";
      if (i < r.cells.size()) {
        if (r.cells[i].all) all = format_display_score(*r.cells[i].all);
        if (r.cells[i].subset) dis = format_display_score(*r.cells[i].subset);
      }
      out << " | " << pad(all, 7) << pad(dis, 8);
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace oki
