#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "rmtbvqa/errors.hpp"
#include "rmtbvqa/eval.hpp"
#include "unit/temp_dir.hpp"

using namespace rmtbvqa;

namespace {

// Independent oracles: O(n^2) average ranks and the textbook Pearson sum.
std::vector<double> brute_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double x : v) {
      less += x < v[i];
      equal += x == v[i];
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

double brute_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = double(a.size());
  double sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
  }
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - sa / n) * (b[i] - sb / n);
    da += (a[i] - sa / n) * (a[i] - sa / n);
    db += (b[i] - sb / n) * (b[i] - sb / n);
  }
  return num / std::sqrt(da * db);
}

double norm(const std::vector<double>& w) {
  double s = 0;
  for (double x : w) s += x * x;
  return std::sqrt(s);
}

std::vector<LabeledVideo> linear_videos(std::size_t sources, std::size_t per_source, std::size_t D, unsigned seed,
                                        double noise) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> w(D);
  for (auto& x : w) x = n(rng);
  std::vector<LabeledVideo> out;
  const char* tags[] = {"A", "B", "C"};
  for (std::size_t s = 0; s < sources; ++s) {
    for (std::size_t k = 0; k < per_source; ++k) {
      LabeledVideo v;
      v.video_id = "v" + std::to_string(s) + "_" + std::to_string(k);
      v.source_id = "s" + std::to_string(s);
      v.subset_tag = tags[k % 3];
      v.h_v.resize(D);
      for (auto& x : v.h_v) x = n(rng);
      v.mos = std::inner_product(w.begin(), w.end(), v.h_v.begin(), 0.0) + noise * n(rng);
      out.push_back(std::move(v));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("ridge closed forms") {
  Rows I{{1, 0}, {0, 1}};
  std::vector<double> y{1, 2};
  auto m = ridge_fit(I, y, 1.0, false);
  CHECK(m.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.weights[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.intercept == 0.0);
  CHECK(m.alpha == 1.0);

  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  Rows X(5, std::vector<double>(5));
  std::vector<double> t(5);
  for (auto& r : X)
    for (auto& x : r) x = u(rng);
  for (auto& v : t) v = u(rng);
  auto exact = ridge_fit(X, t, 0.0, false);
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(exact.predict(X[i]) - t[i]) < 1e-5);

  Rows dup{{1, 1}, {2, 2}, {3, 3}};
  std::vector<double> yd{1, 2, 3};
  CHECK_THROWS_AS(ridge_fit(dup, yd, 0.0, false), InvalidArgument);
  CHECK_NOTHROW(ridge_fit(dup, yd, 0.1, false));

  Rows shifted{{0}, {1}, {2}};
  std::vector<double> line{5, 7, 9};
  auto li = ridge_fit(shifted, line, 0.0, true);
  CHECK(li.weights[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(li.intercept == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("ridge shrinks monotonically with alpha") {
  for (unsigned seed = 0; seed < 10; ++seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> n(0, 1);
    Rows X(20, std::vector<double>(6));
    std::vector<double> y(20);
    for (auto& r : X)
      for (auto& x : r) x = n(rng);
    for (auto& v : y) v = n(rng);
    double prev = std::numeric_limits<double>::infinity();
    for (double a : {0.0, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e6}) {
      const double w = norm(ridge_fit(X, y, a).weights);
      CHECK(w <= prev);
      prev = w;
    }
    CHECK(prev < 1e-3);
  }
}

TEST_CASE("rank correlation examples") {
  std::vector<double> a{1, 2, 3};
  CHECK(srcc(a, std::vector<double>{10, 20, 30}) == 1.0);
  CHECK(srcc(a, std::vector<double>{3, 2, 1}) == -1.0);
  std::vector<double> tied{1, 1, 2};
  CHECK(srcc(tied, a) == doctest::Approx(brute_pearson(brute_ranks(tied), brute_ranks(a))).epsilon(1e-12));
  CHECK(fractional_ranks(std::vector<double>{5, 1, 5, 3}) == std::vector<double>{3.5, 1, 3.5, 2});
  CHECK_THROWS_AS(srcc(std::vector<double>{2, 2, 2}, a), InvalidArgument);
  CHECK_THROWS_AS(plcc(std::vector<double>{1}, std::vector<double>{1}), InvalidArgument);

  std::vector<double> x{0.5, -1, 3, 7, 2};
  std::vector<double> affine(x.size()), neg(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    affine[i] = 2 * x[i] + 1;
    neg[i] = -x[i];
  }
  CHECK(plcc(x, affine) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(plcc(x, neg) == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("rank statistics match brute-force oracles on random vectors") {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 40;
    std::vector<double> a(n), b(n);
    const bool ties = trial % 2 == 0;
    std::uniform_int_distribution<int> small(0, 5);
    std::normal_distribution<double> g(0, 1);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = ties ? small(rng) : g(rng);
      b[i] = ties ? small(rng) : g(rng);
    }
    if (std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; })) a[0] += 1;
    if (std::all_of(b.begin(), b.end(), [&](double v) { return v == b[0]; })) b[0] += 1;
    const double s = srcc(a, b), p = plcc(a, b);
    CHECK(std::abs(s - brute_pearson(brute_ranks(a), brute_ranks(b))) < 1e-12);
    CHECK(std::abs(p - brute_pearson(a, b)) < 1e-12);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    CHECK(p >= -1.0);
    CHECK(p <= 1.0);

    std::vector<double> ta(n), tb(n);
    for (std::size_t i = 0; i < n; ++i) {
      ta[i] = std::exp(a[i]) + 3.0;
      tb[i] = b[i] * b[i] * b[i] - 7.0;
    }
    CHECK(srcc(ta, tb) == s);
  }
}

TEST_CASE("source split") {
  std::vector<std::string> five{"a", "b", "c", "d", "e"};
  auto f = split_by_source(five, 5, 3);
  CHECK(std::set<std::size_t>(f.begin(), f.end()).size() == 5);
  CHECK_THROWS_AS(split_by_source({"a", "b", "a"}, 5, 0), InvalidArgument);

  std::mt19937 rng(8);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<std::string> src;
    for (int i = 0; i < 60; ++i) src.push_back("s" + std::to_string(rng() % 13));
    auto folds = split_by_source(src, 5, seed);
    REQUIRE(folds.size() == src.size());
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < src.size(); ++i) {
      CHECK(folds[i] < 5);
      auto [it, fresh] = seen.emplace(src[i], folds[i]);
      if (!fresh) CHECK(it->second == folds[i]);
    }
    CHECK(split_by_source(src, 5, seed) == folds);
  }
}

TEST_CASE("cross-validation on linear data") {
  auto videos = linear_videos(10, 6, 4, 5, 1e-3);
  CvConfig cfg;
  cfg.repeats = 1;
  cfg.seed = 4;
  auto rep = cross_validate(videos, cfg);
  std::size_t overall = 0;
  for (const auto& e : rep.entries) overall += e.scope == "overall";
  CHECK(overall == 5);
  CHECK(rep.overall_srcc() >= 0.99);
  CHECK(rep.split_seeds.size() == 1);

  cfg.repeats = 3;
  auto a = cross_validate(videos, cfg), b = cross_validate(videos, cfg);
  REQUIRE(a.entries.size() == b.entries.size());
  overall = 0;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    CHECK(a.entries[i].srcc == b.entries[i].srcc);
    CHECK(a.entries[i].plcc == b.entries[i].plcc);
    overall += a.entries[i].scope == "overall";
  }
  CHECK(overall == 15);
  std::set<std::string> scopes;
  for (const auto& e : a.entries) scopes.insert(e.scope + "/" + e.subset);
  CHECK(scopes.count("filtered/A") == 1);
  CHECK(scopes.count("local/C") == 1);

  TempDir dir;
  write_report(dir / "r.csv", a);
  auto back = read_report(dir / "r.csv");
  REQUIRE(back.entries.size() == a.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    CHECK(back.entries[i].srcc == a.entries[i].srcc);
    CHECK(back.entries[i].scope == a.entries[i].scope);
    CHECK(back.entries[i].split_seed == a.entries[i].split_seed);
  }
  CHECK(format_summary(a).find("overall") != std::string::npos);
}

TEST_CASE("cross-validation never trains on test sources") {
  auto videos = linear_videos(7, 3, 3, 9, 0.5);
  std::vector<std::string> src;
  for (const auto& v : videos) src.push_back(v.source_id);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto folds = split_by_source(src, 5, seed);
    for (std::size_t f = 0; f < 5; ++f) {
      std::set<std::string> train, test;
      for (std::size_t i = 0; i < src.size(); ++i) (folds[i] == f ? test : train).insert(src[i]);
      for (const auto& s : test) CHECK(train.count(s) == 0);
    }
  }
}

TEST_CASE("alpha selection prefers regularization on pure noise") {
  std::mt19937 rng(3);
  std::normal_distribution<double> n(0, 1);
  Rows X(40, std::vector<double>(30));
  std::vector<double> y(40);
  std::vector<std::string> src(40);
  for (std::size_t i = 0; i < 40; ++i) {
    for (auto& x : X[i]) x = n(rng);
    y[i] = n(rng);
    src[i] = "s" + std::to_string(i % 8);
  }
  CvConfig cfg;
  CHECK(select_alpha(X, y, src, cfg, 1) >= 10.0);
}
