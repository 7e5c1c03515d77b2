#pragma once

// Official challenge scores and auxiliary measures: F1, accuracy, 2AFC,
// RMSE, PCC, ICC(3,1), chance baselines, per-AU concatenation and
// per-view breakdowns, plus Markdown/CSV table rendering.

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "fera/core.hpp"

namespace fera {

enum class Measure { F1, ACC, AFC2, RMSE, PCC, ICC };

inline std::string measure_name(Measure m) {
  switch (m) {
    case Measure::F1: return "F1";
    case Measure::ACC: return "Accuracy";
    case Measure::AFC2: return "2AFC";
    case Measure::RMSE: return "RMSE";
    case Measure::PCC: return "PCC";
    case Measure::ICC: return "ICC";
  }
  return "?";
}

namespace detail {
inline void check_lengths(size_t a, size_t b, const char* who) {
  if (a != b) throw FeraError(std::string(who) + ": length mismatch");
}
}  // namespace detail

inline double f1(const std::vector<int>& y, const std::vector<int>& yhat) {
  detail::check_lengths(y.size(), yhat.size(), "f1");
  long tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < y.size(); ++i) {
    if (yhat[i] == 1 && y[i] == 1) ++tp;
    else if (yhat[i] == 1 && y[i] == 0) ++fp;
    else if (yhat[i] == 0 && y[i] == 1) ++fn;
  }
  if (tp == 0) return 0.0;
  double p = static_cast<double>(tp) / (tp + fp);
  double r = static_cast<double>(tp) / (tp + fn);
  return 2.0 * p * r / (p + r);
}

inline double accuracy(const std::vector<int>& y, const std::vector<int>& yhat) {
  detail::check_lengths(y.size(), yhat.size(), "accuracy");
  if (y.empty()) throw FeraError("accuracy: empty input");
  long hit = 0;
  for (size_t i = 0; i < y.size(); ++i) hit += y[i] == yhat[i];
  return static_cast<double>(hit) / y.size();
}

// Probability a random positive outscores a random negative, ties count 0.5.
// Rank-sum implementation, exactly equal to the pairwise definition.
inline std::optional<double> two_afc(const std::vector<double>& scores,
                                     const std::vector<int>& y) {
  detail::check_lengths(y.size(), scores.size(), "two_afc");
  long p = 0, n = 0;
  for (int v : y) (v == 1 ? p : n)++;
  if (p == 0 || n == 0) return std::nullopt;
  std::vector<int> order(y.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] < scores[b]; });
  // average ranks over tie groups, 1-based
  double pos_rank_sum = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t k = i; k <= j; ++k)
      if (y[order[k]] == 1) pos_rank_sum += avg_rank;
    i = j + 1;
  }
  double u = pos_rank_sum - 0.5 * p * (p + 1.0);
  return u / (static_cast<double>(n) * p);
}

inline double rmse(const std::vector<double>& y, const std::vector<double>& yhat) {
  detail::check_lengths(y.size(), yhat.size(), "rmse");
  if (y.empty()) throw FeraError("rmse: empty input");
  double s = 0;
  for (size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return std::sqrt(s / y.size());
}

inline std::optional<double> pcc(const std::vector<double>& y, const std::vector<double>& yhat) {
  detail::check_lengths(y.size(), yhat.size(), "pcc");
  size_t n = y.size();
  if (n < 2) return std::nullopt;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double mh = std::accumulate(yhat.begin(), yhat.end(), 0.0) / n;
  double sy = 0, sh = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sy += (y[i] - my) * (y[i] - my);
    sh += (yhat[i] - mh) * (yhat[i] - mh);
    sxy += (y[i] - my) * (yhat[i] - mh);
  }
  if (sy < 1e-300 || sh < 1e-300) return std::nullopt;
  return sxy / std::sqrt(sy * sh);
}

// Shrout-Fleiss ICC(3,1), two-way mixed, single measure, k = 2 raters
// (ground truth and prediction).
inline std::optional<double> icc31(const std::vector<double>& y, const std::vector<double>& yhat) {
  detail::check_lengths(y.size(), yhat.size(), "icc31");
  const int n = static_cast<int>(y.size());
  if (n < 2) return std::nullopt;
  const int k = 2;
  double grand = 0;
  for (int i = 0; i < n; ++i) grand += y[i] + yhat[i];
  grand /= n * k;
  double col_y = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double col_h = std::accumulate(yhat.begin(), yhat.end(), 0.0) / n;
  double bms = 0, sse = 0;
  for (int i = 0; i < n; ++i) {
    double row = 0.5 * (y[i] + yhat[i]);
    bms += (row - grand) * (row - grand);
    double e1 = y[i] - row - col_y + grand;
    double e2 = yhat[i] - row - col_h + grand;
    sse += e1 * e1 + e2 * e2;
  }
  bms = k * bms / (n - 1);
  double ems = sse / ((n - 1) * (k - 1));
  double denom = bms + (k - 1) * ems;
  if (std::abs(denom) < 1e-300) return std::nullopt;
  return (bms - ems) / denom;
}

// The ICC formula exactly as printed in the challenge description,
// (W - S) / (W + (k-1)W). Exposed for comparison output only; it is not
// the Shrout-Fleiss quantity and is not used for official scores.
inline std::optional<double> icc_paper_literal(const std::vector<double>& y,
                                               const std::vector<double>& yhat) {
  detail::check_lengths(y.size(), yhat.size(), "icc_paper_literal");
  const int n = static_cast<int>(y.size());
  if (n < 1) return std::nullopt;
  double w = 0, s = 0;
  for (int i = 0; i < n; ++i) {
    double row = 0.5 * (y[i] + yhat[i]);
    w += ((y[i] - row) * (y[i] - row) + (yhat[i] - row) * (yhat[i] - row)) / n;
    s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  }
  if (std::abs(2.0 * w) < 1e-300) return std::nullopt;
  return (w - s) / (2.0 * w);
}

// RMSE of the constant most-frequent-training-class predictor.
inline double chance_rmse(const std::vector<double>& y, int majority_class) {
  if (y.empty()) throw FeraError("chance_rmse: empty input");
  double s = 0;
  for (double v : y) s += (v - majority_class) * (v - majority_class);
  return std::sqrt(s / y.size());
}

struct ScoreTable {
  Measure measure = Measure::F1;
  std::map<int, std::optional<double>> per_au;
  std::optional<double> mean;  // arithmetic mean of present per-AU values
  int n_na = 0;

  static ScoreTable from_per_au(Measure m, const std::map<int, std::optional<double>>& per_au) {
    ScoreTable t;
    t.measure = m;
    t.per_au = per_au;
    double sum = 0;
    int cnt = 0;
    for (const auto& [au, v] : per_au) {
      if (v) {
        sum += *v;
        ++cnt;
      } else {
        ++t.n_na;
      }
    }
    if (cnt > 0) t.mean = sum / cnt;
    return t;
  }
};

// One scored track: ground truth and prediction for one AU of one sequence,
// with the prediction scores used by 2AFC. Label-9 frames must already be
// removed by the caller.
struct ScoredTrack {
  std::vector<int> y;
  std::vector<int> yhat;
  std::vector<double> score;
};

// Concatenate all sequences per AU, then compute the measure; mean over AUs.
inline ScoreTable challenge_score(const std::map<int, std::vector<ScoredTrack>>& per_au_tracks,
                                  Measure m, const std::vector<int>& au_set) {
  std::map<int, std::optional<double>> per_au;
  for (int au : au_set) {
    auto it = per_au_tracks.find(au);
    if (it == per_au_tracks.end())
      throw FeraError("challenge_score: missing predictions for AU" + std::to_string(au));
    std::vector<int> y, yhat;
    std::vector<double> sc;
    for (const auto& t : it->second) {
      y.insert(y.end(), t.y.begin(), t.y.end());
      yhat.insert(yhat.end(), t.yhat.begin(), t.yhat.end());
      sc.insert(sc.end(), t.score.begin(), t.score.end());
    }
    std::vector<double> yd(y.begin(), y.end()), yhd(yhat.begin(), yhat.end());
    switch (m) {
      case Measure::F1: per_au[au] = f1(y, yhat); break;
      case Measure::ACC: per_au[au] = accuracy(y, yhat); break;
      case Measure::AFC2: per_au[au] = two_afc(sc, y); break;
      case Measure::RMSE: per_au[au] = rmse(yd, yhd); break;
      case Measure::PCC: per_au[au] = pcc(yd, yhd); break;
      case Measure::ICC: per_au[au] = icc31(yd, yhd); break;
    }
  }
  return ScoreTable::from_per_au(m, per_au);
}

// ---- table rendering --------------------------------------------------------

inline std::string format_cell(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}

// Grid with AUs as rows (mean last) and arbitrary named columns.
struct ReportGrid {
  std::string title;
  std::vector<std::string> columns;
  std::vector<std::pair<std::string, std::vector<std::optional<double>>>> rows;
};

inline std::string render_markdown(const ReportGrid& g) {
  std::string out = "## " + g.title + "\n\n|  |";
  for (const auto& c : g.columns) out += " " + c + " |";
  out += "\n|---|";
  for (size_t i = 0; i < g.columns.size(); ++i) out += "---|";
  out += "\n";
  for (const auto& [name, vals] : g.rows) {
    out += "| " + name + " |";
    for (const auto& v : vals) out += " " + format_cell(v) + " |";
    out += "\n";
  }
  out += "\n";
  return out;
}

inline std::string render_csv(const ReportGrid& g) {
  std::string out;
  for (const auto& c : g.columns) out += "," + c;
  out += "\n";
  for (const auto& [name, vals] : g.rows) {
    out += name;
    for (const auto& v : vals) out += "," + format_cell(v);
    out += "\n";
  }
  return out;
}

}  // namespace fera
