#include <cmath>
#include <vector>

#include <doctest.h>

#include "fedtsd/divergence.hpp"
#include "helpers.hpp"

using namespace fedtsd;

namespace {

InferenceProfile profile_from_rows(const std::vector<std::vector<double>>& rows) {
  Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m.at(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
  return InferenceProfile(std::move(m));
}

}  // namespace

TEST_CASE("kl closed forms") {
  std::vector<double> p = {1.0, 0.0};
  std::vector<double> half = {0.5, 0.5};
  CHECK(kl_divergence(p, half) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(kl_divergence(half, half) == 0.0);
  std::vector<double> q = {0.9, 0.1};
  double manual = 0.9 * std::log(0.9 / 0.5) + 0.1 * std::log(0.1 / 0.5);
  CHECK(kl_divergence(q, half) == doctest::Approx(manual).epsilon(1e-12));
  // asymmetry witness
  CHECK(kl_divergence(q, half) != doctest::Approx(kl_divergence(half, q)).epsilon(1e-6));
}

TEST_CASE("kl is nonnegative and zero only at equality") {
  RngStream rng(401);
  for (int t = 0; t < 500; ++t) {
    auto p = testref::random_prob(rng, 2 + t % 5);
    auto q = testref::random_prob(rng, 2 + t % 5);
    double d = kl_divergence(p, q);
    REQUIRE(d >= 0.0);
    REQUIRE(kl_divergence(p, p) < 1e-13);
    double gap = 0;
    for (std::size_t i = 0; i < p.size(); ++i) gap = std::max(gap, std::abs(p[i] - q[i]));
    if (gap > 1e-3) REQUIRE(d > 0.0);
  }
}

TEST_CASE("kl validates its arguments") {
  std::vector<double> p = {0.5, 0.5};
  std::vector<double> bad_len = {1.0};
  std::vector<double> not_prob = {0.7, 0.7};
  std::vector<double> negative = {1.2, -0.2};
  CHECK_THROWS_AS(kl_divergence(p, bad_len), ShapeError);
  CHECK_THROWS_AS(kl_divergence(not_prob, p), ValueError);
  CHECK_THROWS_AS(kl_divergence(negative, p), ValueError);
}

TEST_CASE("js closed form, symmetry and the ln 2 bound") {
  std::vector<double> e0 = {1.0, 0.0};
  std::vector<double> e1 = {0.0, 1.0};
  CHECK(js_divergence(e0, e1) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(js_divergence(e0, e0) == 0.0);

  RngStream rng(403);
  for (int t = 0; t < 500; ++t) {
    auto p = testref::random_prob(rng, 3);
    auto q = testref::random_prob(rng, 3);
    double ab = js_divergence(p, q);
    double ba = js_divergence(q, p);
    REQUIRE(ab >= 0.0);
    REQUIRE(std::abs(ab - ba) < 1e-12);
    REQUIRE(ab <= std::log(2.0) + 1e-12);
  }
}

TEST_CASE("the as_printed variant is asymmetric and unbounded") {
  std::vector<double> e0 = {1.0, 0.0};
  std::vector<double> e1 = {0.0, 1.0};
  // 0.5*KL(p||m) + 0.5*KL(m||q): the second term hits q's epsilon floor
  double d = js_divergence(e0, e1, JsVariant::as_printed);
  CHECK(d > std::log(2.0));

  std::vector<double> p = {0.9, 0.1};
  std::vector<double> q = {0.3, 0.7};
  double pq = js_divergence(p, q, JsVariant::as_printed);
  double qp = js_divergence(q, p, JsVariant::as_printed);
  CHECK(std::abs(pq - qp) > 1e-6);

  // hand oracle for the printed form
  std::vector<double> m = {0.6, 0.4};
  double expected = 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(m, q);
  CHECK(pq == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("profile js averages the row divergences") {
  auto a = profile_from_rows({{1.0, 0.0}, {0.5, 0.5}});
  auto b = profile_from_rows({{0.0, 1.0}, {0.5, 0.5}});
  // rows: ln 2 and 0
  CHECK(profile_js(a, b) == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-9));
  CHECK(profile_js(a, a) == 0.0);
  auto c = profile_from_rows({{1.0, 0.0}});
  CHECK_THROWS_AS(profile_js(a, c), ShapeError);
}

TEST_CASE("profiles validate their rows") {
  Matrix bad(1, 2);
  bad.at(0, 0) = 0.7;
  bad.at(0, 1) = 0.7;
  CHECK_THROWS_AS(InferenceProfile{bad}, ValueError);
  Matrix neg(1, 2);
  neg.at(0, 0) = 1.5;
  neg.at(0, 1) = -0.5;
  CHECK_THROWS_AS(InferenceProfile{neg}, ValueError);
  auto ok = profile_from_rows({{0.25, 0.75}, {0.5, 0.5}});
  CHECK(ok.batch() == 2);
  CHECK(ok.classes() == 2);
  CHECK(ok.flat() == std::vector<double>{0.25, 0.75, 0.5, 0.5});
}

TEST_CASE("similarity matrix is symmetric with zero diagonal") {
  RngStream rng(407);
  std::vector<InferenceProfile> profiles;
  for (int i = 0; i < 5; ++i) {
    Matrix m(3, 4);
    for (int r = 0; r < 3; ++r) {
      auto row = testref::random_prob(rng, 4);
      for (int c = 0; c < 4; ++c) m.at(r, c) = row[c];
    }
    profiles.emplace_back(std::move(m));
  }
  auto sim = similarity_matrix(profiles);
  REQUIRE(sim.size == 5);
  CHECK(sim.kind == SimilarityKind::js);
  for (int i = 0; i < 5; ++i) {
    CHECK(sim.at(i, i) == 0.0);
    for (int j = 0; j < 5; ++j) {
      CHECK(sim.at(i, j) == sim.at(j, i));
      if (i != j)
        CHECK(sim.at(i, j) == doctest::Approx(profile_js(profiles[i], profiles[j])).epsilon(1e-12));
    }
  }
}

TEST_CASE("hopkins separates scattered from clumped point clouds") {
  HopkinsConfig cfg;
  cfg.sample_count = 10;
  int uniform_wins = 0, blob_wins = 0, paired = 0;
  double uniform_sum = 0, blob_sum = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    RngStream data_rng(500 + s);
    std::vector<std::vector<double>> scattered;
    for (int i = 0; i < 120; ++i)
      scattered.push_back({data_rng.uniform(), data_rng.uniform()});
    std::vector<std::vector<double>> blobs;
    for (int i = 0; i < 60; ++i)
      blobs.push_back({0.01 * data_rng.normal(), 0.01 * data_rng.normal()});
    for (int i = 0; i < 60; ++i)
      blobs.push_back({10.0 + 0.01 * data_rng.normal(), 10.0 + 0.01 * data_rng.normal()});

    RngStream h1(600 + s), h2(600 + s);
    double hu = hopkins_statistic(scattered, cfg, h1);
    double hb = hopkins_statistic(blobs, cfg, h2);
    uniform_sum += hu;
    blob_sum += hb;
    uniform_wins += hu > 0.4 && hu < 0.6;
    blob_wins += hb > 0.75;
    paired += hb > hu;
  }
  CHECK(std::abs(uniform_sum / seeds - 0.5) < 0.1);
  CHECK(blob_sum / seeds > 0.75);
  CHECK(paired >= seeds - 1);
  CHECK(uniform_wins >= seeds / 2);
  CHECK(blob_wins >= seeds - 2);
}

TEST_CASE("hopkins edge cases") {
  HopkinsConfig cfg;
  RngStream rng(409);
  // all points identical: degenerate geometry scores the neutral 0.5
  std::vector<std::vector<double>> same(5, {1.0, 2.0});
  CHECK(hopkins_statistic(same, cfg, rng) == 0.5);

  std::vector<std::vector<double>> two(2, {0.0});
  CHECK_THROWS_AS(hopkins_statistic(two, cfg, rng), ValueError);
  std::vector<std::vector<double>> mixed = {{0.0, 1.0}, {1.0}, {2.0, 0.0}};
  CHECK_THROWS_AS(hopkins_statistic(mixed, cfg, rng), ShapeError);

  CHECK(cfg.resolve_sample_count(8) == 2);     // auto: max(2, m/4)
  CHECK(cfg.resolve_sample_count(100) == 25);
  HopkinsConfig fixed;
  fixed.sample_count = 50;
  CHECK(fixed.resolve_sample_count(8) == 7);  // clamped below the point count
  HopkinsConfig bad;
  bad.threshold = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("weight distance matches a flat norm oracle") {
  RngStream rng(411);
  auto a = LayeredWeights::glorot_init({3, 4, 2}, 2.0, rng);
  auto b = LayeredWeights::glorot_init({3, 4, 2}, 2.0, rng);
  const double upsilon = 1e-12;
  auto fa = a.flatten(), fb = b.flatten();
  double expected = 0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    double d = fa[i] - fb[i] + upsilon;
    expected += d * d;
  }
  expected = std::sqrt(expected);
  CHECK(weight_distance(a, b, upsilon) == doctest::Approx(expected).epsilon(1e-12));

  // identical models leave only the upsilon offset, one per parameter
  double floor = upsilon * std::sqrt(static_cast<double>(fa.size()));
  CHECK(weight_distance(a, a, upsilon) == doctest::Approx(floor).epsilon(1e-9));
  CHECK(weight_distance(a, a, 0.0) == 0.0);
}

TEST_CASE("weight distance covers only the mutually shared prefix") {
  RngStream rng(413);
  auto a = LayeredWeights::glorot_init({3, 4, 4, 2}, 3.0, rng);
  auto b = a;
  b.set_split_point(1.0);  // pair depth = ceil(min(3, 1)) = 1 layer
  b.layers()[2].weight.at(0, 0) += 100.0;
  CHECK(weight_distance(a, b, 0.0) == 0.0);
  b.layers()[0].weight.at(0, 0) += 2.0;
  CHECK(weight_distance(a, b, 0.0) == doctest::Approx(2.0).epsilon(1e-12));

  // a fractional split still covers its boundary layer
  auto c = a;
  c.set_split_point(1.5);
  c.layers()[1].weight.at(0, 0) += 3.0;
  CHECK(weight_distance(a, c, 0.0) == doctest::Approx(3.0).epsilon(1e-12));

  auto zero = a;
  zero.set_split_point(0.5);  // ceil(0.5) = 1: the first layer still counts
  CHECK(weight_distance(a, zero, 0.0) == 0.0);
  CHECK_THROWS_AS(weight_distance(a, b, -1.0), ValueError);
}

TEST_CASE("weight distance matrix mirrors pairwise calls") {
  RngStream rng(417);
  std::vector<LayeredWeights> models;
  for (int i = 0; i < 4; ++i) models.push_back(LayeredWeights::glorot_init({2, 3, 2}, 2.0, rng));
  std::vector<const LayeredWeights*> ptrs;
  for (const auto& m : models) ptrs.push_back(&m);
  auto mat = weight_distance_matrix(ptrs, 1e-12);
  REQUIRE(mat.size == 4);
  CHECK(mat.kind == SimilarityKind::weight_l2);
  for (int i = 0; i < 4; ++i) {
    // self distance is the upsilon offset, far below any clustering radius
    CHECK(mat.at(i, i) == doctest::Approx(weight_distance(models[i], models[i], 1e-12))
                              .epsilon(1e-12));
    CHECK(mat.at(i, i) < 1e-10);
    for (int j = i + 1; j < 4; ++j) {
      CHECK(mat.at(i, j) == mat.at(j, i));
      CHECK(mat.at(i, j) == doctest::Approx(weight_distance(models[i], models[j], 1e-12))
                                .epsilon(1e-12));
    }
  }
}
