#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qdetect/rng.hpp"

namespace qdetect {

/// Utterance label scheme. Integer codes are stable and ordered
/// KQ, OQ, PQ, DQ, NQ = 0..4; serialization and tie-breaking rely on them.
enum class QuestionLabel : int { KQ = 0, OQ = 1, PQ = 2, DQ = 3, NQ = 4 };

constexpr int kNumQuestionLabels = 5;

enum class TwoWayLabel : int { Q = 0, NQ = 1 };

/// Classification task selector: question/non-question or the full
/// label scheme run as multiple binary tasks.
struct TaskMode {
  enum class Kind { TwoWay, MultiWay };
  Kind kind = Kind::TwoWay;
  int num_classes = 2;

  static TaskMode two_way() { return {Kind::TwoWay, 2}; }
  static TaskMode multi_way(int m = kNumQuestionLabels) {
    if (m < 2) throw std::invalid_argument("multi-way task needs at least 2 classes");
    return {Kind::MultiWay, m};
  }
  bool is_two_way() const { return kind == Kind::TwoWay; }
};

inline const char* label_name(QuestionLabel l) {
  static constexpr std::array<const char*, 5> names = {"KQ", "OQ", "PQ", "DQ", "NQ"};
  return names.at(static_cast<std::size_t>(l));
}

inline const char* label_name(TwoWayLabel l) {
  return l == TwoWayLabel::Q ? "Q" : "NQ";
}

inline QuestionLabel parse_label(const std::string& s) {
  for (int i = 0; i < kNumQuestionLabels; ++i) {
    if (s == label_name(static_cast<QuestionLabel>(i))) return static_cast<QuestionLabel>(i);
  }
  throw std::invalid_argument("unknown label string: \"" + s + "\"");
}

inline TwoWayLabel to_two_way(QuestionLabel l) {
  return l == QuestionLabel::NQ ? TwoWayLabel::NQ : TwoWayLabel::Q;
}

/// One transcribed utterance segment with its raw annotations and the
/// adjudicated final label (absent until aggregation has run).
struct UtteranceRecord {
  std::string id;
  std::string text;
  std::vector<QuestionLabel> annotations;
  std::optional<QuestionLabel> final_label;

  bool operator==(const UtteranceRecord&) const = default;
};

/// Majority label; ties break toward the lowest integer code so
/// aggregation stays deterministic.
inline QuestionLabel majority_vote(const std::vector<QuestionLabel>& annotations) {
  if (annotations.empty()) throw std::invalid_argument("majority_vote: no annotations");
  std::array<int, kNumQuestionLabels> counts{};
  for (QuestionLabel l : annotations) counts[static_cast<std::size_t>(l)]++;
  int best = 0;
  for (int i = 1; i < kNumQuestionLabels; ++i) {
    if (counts[i] > counts[best]) best = i;
  }
  return static_cast<QuestionLabel>(best);
}

namespace detail {

/// Cohen's kappa over integer-coded label sequences.
inline double cohen_kappa_codes(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cohen_kappa: length mismatch");
  if (a.empty()) throw std::invalid_argument("cohen_kappa: empty sequences");
  const double n = static_cast<double>(a.size());
  std::map<int, int> count_a, count_b;
  double agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    count_a[a[i]]++;
    count_b[b[i]]++;
    if (a[i] == b[i]) agree += 1.0;
  }
  const double p_o = agree / n;
  double p_e = 0;
  for (const auto& [code, ca] : count_a) {
    auto it = count_b.find(code);
    if (it != count_b.end()) p_e += (ca / n) * (it->second / n);
  }
  // p_e can only reach 1 when both raters always use the same single
  // label, which forces p_o = 1 as well.
  if (1.0 - p_e <= 0.0) return 1.0;
  return (p_o - p_e) / (1.0 - p_e);
}

template <typename Label>
std::vector<int> to_codes(const std::vector<Label>& v) {
  std::vector<int> out;
  out.reserve(v.size());
  for (Label l : v) out.push_back(static_cast<int>(l));
  return out;
}

}  // namespace detail

inline double cohen_kappa(const std::vector<QuestionLabel>& a,
                          const std::vector<QuestionLabel>& b) {
  return detail::cohen_kappa_codes(detail::to_codes(a), detail::to_codes(b));
}

inline double cohen_kappa(const std::vector<TwoWayLabel>& a,
                          const std::vector<TwoWayLabel>& b) {
  return detail::cohen_kappa_codes(detail::to_codes(a), detail::to_codes(b));
}

/// Mean Cohen's kappa over all unordered annotator pairs.
/// Rows of the matrix are annotators, columns are items.
inline double average_pairwise_kappa(const std::vector<std::vector<QuestionLabel>>& annotators) {
  if (annotators.size() < 2) {
    throw std::invalid_argument("average_pairwise_kappa: need at least 2 annotators");
  }
  const std::size_t items = annotators.front().size();
  for (const auto& row : annotators) {
    if (row.size() != items) throw std::invalid_argument("average_pairwise_kappa: ragged matrix");
  }
  double sum = 0;
  int pairs = 0;
  for (std::size_t i = 0; i < annotators.size(); ++i) {
    for (std::size_t j = i + 1; j < annotators.size(); ++j) {
      sum += cohen_kappa(annotators[i], annotators[j]);
      pairs++;
    }
  }
  return sum / pairs;
}

struct ScreeningResult {
  bool passed = false;
  double precision = 0.0;
};

/// Gold-set screening for annotator candidates: micro precision of the
/// candidate's labels against the gold final labels, pass iff it reaches
/// the threshold (inclusive).
inline ScreeningResult screen_annotator(const std::vector<UtteranceRecord>& gold,
                                        const std::vector<QuestionLabel>& candidate_labels,
                                        TaskMode task, double threshold) {
  if (gold.size() != candidate_labels.size()) {
    throw std::invalid_argument("screen_annotator: label count does not match gold set");
  }
  if (gold.empty()) throw std::invalid_argument("screen_annotator: empty gold set");
  double correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (!gold[i].final_label) {
      throw std::invalid_argument("screen_annotator: gold record \"" + gold[i].id +
                                  "\" has no final label");
    }
    const QuestionLabel g = *gold[i].final_label;
    const QuestionLabel c = candidate_labels[i];
    const bool match = task.is_two_way() ? to_two_way(g) == to_two_way(c) : g == c;
    if (match) correct += 1.0;
  }
  const double precision = correct / static_cast<double>(gold.size());
  return {precision >= threshold, precision};
}

/// Train/validation/test ratios plus the seed that fixes membership.
struct SplitSpec {
  std::array<double, 3> ratios = {0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
  bool stratified = false;
};

struct DatasetSplit {
  std::vector<UtteranceRecord> train;
  std::vector<UtteranceRecord> validation;
  std::vector<UtteranceRecord> test;
};

namespace detail {

/// Cut points chosen as floors of the cumulative ratio targets, so the
/// 39313-record corpus lands on 31450/3931/3932 at 8:1:1. The small bias
/// keeps floor() from slipping below exact-integer targets.
inline std::array<std::size_t, 2> split_bounds(std::size_t n, const std::array<double, 3>& r) {
  const double n_d = static_cast<double>(n);
  auto bound = [&](double cum) {
    double b = std::floor(n_d * cum + 1e-9);
    return static_cast<std::size_t>(std::min(b, n_d));
  };
  std::size_t b1 = bound(r[0]);
  std::size_t b2 = bound(r[0] + r[1]);
  if (b2 < b1) b2 = b1;
  return {b1, b2};
}

}  // namespace detail

inline DatasetSplit split_dataset(const std::vector<UtteranceRecord>& corpus,
                                  const SplitSpec& spec) {
  if (corpus.empty()) throw std::invalid_argument("split_dataset: empty corpus");
  const double ratio_sum = spec.ratios[0] + spec.ratios[1] + spec.ratios[2];
  if (std::abs(ratio_sum - 1.0) > 1e-9) {
    throw std::invalid_argument("split_dataset: ratios must sum to 1");
  }
  for (double r : spec.ratios) {
    if (r < 0) throw std::invalid_argument("split_dataset: negative ratio");
  }
  for (const auto& rec : corpus) {
    if (!rec.final_label) {
      throw std::invalid_argument("split_dataset: record \"" + rec.id + "\" has no final label");
    }
  }

  Rng rng(spec.seed);
  DatasetSplit out;
  auto emit_group = [&](const std::vector<std::size_t>& group) {
    auto [b1, b2] = detail::split_bounds(group.size(), spec.ratios);
    for (std::size_t i = 0; i < group.size(); ++i) {
      const UtteranceRecord& rec = corpus[group[i]];
      if (i < b1) {
        out.train.push_back(rec);
      } else if (i < b2) {
        out.validation.push_back(rec);
      } else {
        out.test.push_back(rec);
      }
    }
  };

  if (spec.stratified) {
    std::array<std::vector<std::size_t>, kNumQuestionLabels> by_label;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      by_label[static_cast<std::size_t>(*corpus[i].final_label)].push_back(i);
    }
    for (auto& group : by_label) {
      if (group.empty()) continue;
      rng.shuffle(group);
      emit_group(group);
    }
  } else {
    std::vector<std::size_t> idx(corpus.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    emit_group(idx);
  }
  return out;
}

// --- JSON-Lines corpus serialization ---------------------------------------
//
// One object per line: {"id": str, "text": str, "annotations": [label...],
// "final_label": label?}. Label strings are exactly KQ/OQ/PQ/DQ/NQ.

inline nlohmann::json record_to_json(const UtteranceRecord& rec) {
  nlohmann::json j;
  j["id"] = rec.id;
  j["text"] = rec.text;
  nlohmann::json ann = nlohmann::json::array();
  for (QuestionLabel l : rec.annotations) ann.push_back(label_name(l));
  j["annotations"] = ann;
  if (rec.final_label) j["final_label"] = label_name(*rec.final_label);
  return j;
}

inline UtteranceRecord record_from_json(const nlohmann::json& j) {
  UtteranceRecord rec;
  rec.id = j.at("id").get<std::string>();
  rec.text = j.at("text").get<std::string>();
  if (j.contains("annotations")) {
    for (const auto& a : j.at("annotations")) {
      rec.annotations.push_back(parse_label(a.get<std::string>()));
    }
  }
  if (j.contains("final_label") && !j.at("final_label").is_null()) {
    rec.final_label = parse_label(j.at("final_label").get<std::string>());
  }
  // Type invariant: an adjudicated label must be a mode of the annotations.
  if (rec.final_label && !rec.annotations.empty()) {
    std::array<int, kNumQuestionLabels> counts{};
    for (QuestionLabel l : rec.annotations) counts[static_cast<std::size_t>(l)]++;
    const int final_count = counts[static_cast<std::size_t>(*rec.final_label)];
    for (int c : counts) {
      if (c > final_count) {
        throw std::invalid_argument("record \"" + rec.id +
                                    "\": final_label is not a mode of annotations");
      }
    }
  }
  return rec;
}

inline void save_corpus(const std::vector<UtteranceRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_corpus: cannot open \"" + path + "\" for writing");
  for (const auto& rec : records) {
    out << record_to_json(rec).dump() << '\n';
  }
  if (!out) throw std::runtime_error("save_corpus: write failed for \"" + path + "\"");
}

inline std::vector<UtteranceRecord> parse_corpus(std::istream& in, const std::string& origin) {
  std::vector<UtteranceRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    line_no++;
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << origin << ":" << line_no << ": " << e.what();
      throw std::runtime_error(msg.str());
    }
  }
  return records;
}

inline std::vector<UtteranceRecord> load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_corpus: cannot open \"" + path + "\"");
  return parse_corpus(in, path);
}

}  // namespace qdetect
