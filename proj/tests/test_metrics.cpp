#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "fera/metrics.hpp"

using namespace fera;

namespace {

std::vector<double> dv(std::initializer_list<double> v) { return v; }
std::vector<int> iv(std::initializer_list<int> v) { return v; }

struct Counts {
  long tp = 0, fp = 0, fn = 0, tn = 0;
};

Counts count_pairs(const std::vector<int>& y, const std::vector<int>& yhat) {
  Counts c;
  for (size_t i = 0; i < y.size(); ++i) {
    if (yhat[i] > 0.5 && y[i] > 0.5) c.tp++;
    if (yhat[i] > 0.5 && y[i] <= 0.5) c.fp++;
    if (yhat[i] <= 0.5 && y[i] > 0.5) c.fn++;
    if (yhat[i] <= 0.5 && y[i] <= 0.5) c.tn++;
  }
  return c;
}

}  // namespace

TEST_CASE("f1 basics") {
  REQUIRE(f1(iv({0, 1, 1, 0}), iv({0, 1, 1, 0})) == 1.0);
  // TP=1 FP=1 FN=1 -> P=R=0.5 -> F1=0.5
  REQUIRE(f1(iv({1, 1, 0}), iv({1, 0, 1})) == Catch::Approx(0.5).margin(1e-15));
  // no true positives -> 0
  REQUIRE(f1(iv({1, 1}), iv({0, 0})) == 0.0);
  REQUIRE(f1(iv({0, 0}), iv({1, 1})) == 0.0);
}

TEST_CASE("f1 and accuracy match a confusion-count oracle on random input") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 + static_cast<int>(rng() % 100);
    std::vector<int> y(n), yh(n);
    for (int i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng() % 2);
      yh[i] = static_cast<int>(rng() % 2);
    }
    Counts c = count_pairs(y, yh);
    double want_f1 = c.tp == 0 ? 0.0 : 2.0 * c.tp / (2.0 * c.tp + c.fp + c.fn);
    REQUIRE(f1(y, yh) == Catch::Approx(want_f1).margin(1e-12));
    double want_acc = double(c.tp + c.tn) / n;
    REQUIRE(accuracy(y, yh) == Catch::Approx(want_acc).margin(1e-12));
  }
}

TEST_CASE("accuracy basics") {
  REQUIRE(accuracy(iv({0, 1, 0}), iv({0, 1, 0})) == 1.0);
  REQUIRE(accuracy(iv({0, 1, 0}), iv({1, 0, 1})) == 0.0);
}

TEST_CASE("two_afc basics and pairwise oracle") {
  // all positives above all negatives
  REQUIRE(*two_afc(dv({0.1, 0.2, 0.8, 0.9}), iv({0, 0, 1, 1})) == 1.0);
  // all scores tied
  REQUIRE(*two_afc(dv({0.5, 0.5, 0.5, 0.5}), iv({0, 1, 0, 1})) == 0.5);
  // degenerate classes are NA
  REQUIRE_FALSE(two_afc(dv({0.3, 0.4}), iv({1, 1})).has_value());
  REQUIRE_FALSE(two_afc(dv({0.3, 0.4}), iv({0, 0})).has_value());

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> sc(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 20;
    std::vector<int> y(n);
    std::vector<double> s(n);
    bool pos = false, neg = false;
    for (int i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng() % 2);
      s[i] = (rng() % 4) ? sc(rng) : 0.5;  // inject ties
      pos |= y[i] == 1;
      neg |= y[i] == 0;
    }
    if (!pos || !neg) continue;
    double num = 0;
    long pairs = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (y[i] != 1 || y[j] != 0) continue;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        pairs++;
      }
    REQUIRE(*two_afc(s, y) == Catch::Approx(num / pairs).margin(1e-12));
  }
}

TEST_CASE("rmse and pcc basics") {
  REQUIRE(rmse(dv({1, 2, 3}), dv({1, 2, 3})) == 0.0);
  REQUIRE(rmse(dv({1, 2, 3}), dv({2, 3, 4})) == Catch::Approx(1.0).margin(1e-15));
  REQUIRE(*pcc(dv({1, 2, 3}), dv({1, 2, 3})) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE_FALSE(pcc(dv({2, 2, 2}), dv({1, 2, 3})).has_value());
}

TEST_CASE("rmse and pcc match direct formulas on random input") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0.0, 2.0);
  for (int trial = 0; trial < 30; ++trial) {
    int n = 2 + static_cast<int>(rng() % 60);
    std::vector<double> y(n), yh(n);
    for (int i = 0; i < n; ++i) {
      y[i] = nd(rng);
      yh[i] = nd(rng);
    }
    double se = 0, my = 0, myh = 0;
    for (int i = 0; i < n; ++i) {
      se += (y[i] - yh[i]) * (y[i] - yh[i]);
      my += y[i] / n;
      myh += yh[i] / n;
    }
    REQUIRE(rmse(y, yh) == Catch::Approx(std::sqrt(se / n)).margin(1e-12));
    double num = 0, d1 = 0, d2 = 0;
    for (int i = 0; i < n; ++i) {
      num += (y[i] - my) * (yh[i] - myh);
      d1 += (y[i] - my) * (y[i] - my);
      d2 += (yh[i] - myh) * (yh[i] - myh);
    }
    REQUIRE(*pcc(y, yh) == Catch::Approx(num / std::sqrt(d1 * d2)).margin(1e-12));
  }
}

TEST_CASE("icc31 agreement properties") {
  // perfect non-constant agreement
  REQUIRE(*icc31(dv({0, 1, 2, 3}), dv({0, 1, 2, 3})) == Catch::Approx(1.0).margin(1e-12));
  // affine rescaling keeps PCC at 1 but lowers ICC
  std::vector<double> y{0, 1, 2, 3, 4, 2, 1, 0, 3, 4};
  std::vector<double> yh;
  for (double v : y) yh.push_back(2.0 * v + 1.0);
  REQUIRE(*pcc(y, yh) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(*icc31(y, yh) < 0.95);
}

TEST_CASE("icc31 matches a two-way ANOVA oracle") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    int n = 10;
    std::vector<double> y(n), yh(n);
    for (int i = 0; i < n; ++i) {
      y[i] = nd(rng);
      yh[i] = y[i] + 0.5 * nd(rng);
    }
    // ANOVA oracle: rows = targets (n), columns = raters (k=2)
    const int k = 2;
    double grand = 0;
    for (int i = 0; i < n; ++i) grand += (y[i] + yh[i]) / (n * k);
    double bms = 0;
    for (int i = 0; i < n; ++i) {
      double row = 0.5 * (y[i] + yh[i]);
      bms += (row - grand) * (row - grand);
    }
    bms *= k / double(n - 1);
    double colmean[2] = {0, 0};
    for (int i = 0; i < n; ++i) {
      colmean[0] += y[i] / n;
      colmean[1] += yh[i] / n;
    }
    double sse = 0;
    for (int i = 0; i < n; ++i) {
      double row = 0.5 * (y[i] + yh[i]);
      double r0 = y[i] - row - colmean[0] + grand;
      double r1 = yh[i] - row - colmean[1] + grand;
      sse += r0 * r0 + r1 * r1;
    }
    double ems = sse / ((n - 1) * (k - 1));
    double want = (bms - ems) / (bms + (k - 1) * ems);
    REQUIRE(*icc31(y, yh) == Catch::Approx(want).margin(1e-10));
  }
}

TEST_CASE("challenge means reproduce the published aggregation arithmetic") {
  auto table = [](std::vector<double> vals, Measure m, const std::vector<int>& aus) {
    std::map<int, std::vector<ScoredTrack>> tracks;
    // one synthetic track per AU whose score equals the published value is
    // impractical; use ScoreTable::from_per_au directly on the values.
    std::map<int, std::optional<double>> per_au;
    for (size_t i = 0; i < vals.size(); ++i) per_au[aus[i]] = vals[i];
    return ScoreTable::from_per_au(m, per_au);
  };
  auto f1t = table({0.154, 0.172, 0.564, 0.727, 0.692, 0.647, 0.622, 0.146, 0.224, 0.207},
                   Measure::F1, occurrence_aus());
  REQUIRE(*f1t.mean == Catch::Approx(0.416).margin(0.0005 + 1e-12));
  auto icct = table({0.082, 0.069, 0.429, 0.434, 0.540, 0.259, 0.005}, Measure::ICC,
                    intensity_aus());
  REQUIRE(*icct.mean == Catch::Approx(0.260).margin(0.0005 + 1e-12));
  auto rmset = table({1.006, 1.296, 1.648, 1.628, 1.345, 1.637, 1.256}, Measure::RMSE,
                     intensity_aus());
  REQUIRE(*rmset.mean == Catch::Approx(1.402).margin(0.0005 + 1e-12));
}

TEST_CASE("chance rmse arithmetic") {
  REQUIRE(chance_rmse(dv({0, 0, 0}), 0) == 0.0);
  REQUIRE(chance_rmse(dv({0, 0, 5}), 0) == Catch::Approx(std::sqrt(25.0 / 3.0)).margin(1e-12));
  std::mt19937_64 rng(13);
  std::vector<double> y;
  for (int i = 0; i < 40; ++i) y.push_back(rng() % 6);
  double s = 0;
  for (double v : y) s += (v - 2) * (v - 2);
  REQUIRE(chance_rmse(y, 2) == Catch::Approx(std::sqrt(s / y.size())).margin(1e-12));
}

TEST_CASE("challenge_score concatenates sequences before scoring") {
  // Two tracks whose per-track F1 differs from the concatenated F1.
  std::map<int, std::vector<ScoredTrack>> tracks;
  for (int au : occurrence_aus()) {
    ScoredTrack t1{{1, 1, 0}, {1, 0, 0}, {0.9, 0.2, 0.1}};
    ScoredTrack t2{{0, 1}, {1, 1}, {0.8, 0.7}};
    tracks[au] = {t1, t2};
  }
  auto st = challenge_score(tracks, Measure::F1, occurrence_aus());
  // concatenated: y=11010 yhat=10011 -> TP=2 FP=1 FN=1 -> F1 = 4/6
  for (int au : occurrence_aus())
    REQUIRE(*st.per_au.at(au) == Catch::Approx(2.0 * 2 / (2.0 * 2 + 1 + 1)).margin(1e-12));
  REQUIRE(st.n_na == 0);

  std::map<int, std::vector<ScoredTrack>> missing = tracks;
  missing.erase(23);
  REQUIRE_THROWS_AS(challenge_score(missing, Measure::F1, occurrence_aus()), FeraError);
}

TEST_CASE("NA cells render as NA and means skip them") {
  std::map<int, std::optional<double>> per_au{{1, 0.5}, {4, std::nullopt}, {6, 0.7}};
  auto t = ScoreTable::from_per_au(Measure::PCC, per_au);
  REQUIRE(t.n_na == 1);
  REQUIRE(*t.mean == Catch::Approx(0.6).margin(1e-12));
  REQUIRE(format_cell(std::nullopt) == "NA");
  REQUIRE(format_cell(0.1234) == "0.123");
}

TEST_CASE("report rendering is deterministic") {
  ReportGrid g;
  g.title = "demo";
  g.columns = {"A", "B"};
  g.rows = {{"r1", {0.25, std::nullopt}}, {"r2", {1.0, 2.0}}};
  REQUIRE(render_markdown(g) == render_markdown(g));
  std::string csv = render_csv(g);
  REQUIRE(csv.find("r1,0.250,NA") != std::string::npos);
}

TEST_CASE("paper-literal icc variant is kept verbatim for comparison only") {
  // Perfect agreement gives W = 0: undefined, reported as NA.
  std::vector<double> same{0, 1, 2, 3};
  REQUIRE_FALSE(icc_paper_literal(same, same).has_value());
  // Any disagreement: W = sum(d^2)/(2n) and S = sum(d^2), so the printed
  // formula collapses to 0.5 - n regardless of the data - evidence the
  // formula as printed is a typo and icc31 is the intended measure.
  std::vector<double> y{0, 1, 2, 3, 4};
  std::vector<double> yh{1, 1, 2, 3, 4};
  REQUIRE(*icc_paper_literal(y, yh) == Catch::Approx(0.5 - 5.0).margin(1e-12));
  REQUIRE(*icc31(y, yh) > 0.8);
}
