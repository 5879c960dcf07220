#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "pshr/eval.hpp"
#include "pshr/ops.hpp"

using namespace pshr;
using namespace pshr::eval;

namespace {

struct Instance {
  DistanceMatrix dist;
  std::vector<int> query_ids, gallery_ids;
};

// Small integer distances so ties are common.
Instance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> nq(1, 8), ng(1, 10);
  std::uniform_int_distribution<int> id(1, 4), d(0, 5);
  Instance in;
  const std::size_t q = nq(rng), g = ng(rng);
  in.dist = {q, g, std::vector<double>(q * g)};
  for (auto& v : in.dist.values) v = d(rng);
  for (std::size_t i = 0; i < q; ++i) in.query_ids.push_back(id(rng));
  for (std::size_t j = 0; j < g; ++j) in.gallery_ids.push_back(id(rng));
  in.gallery_ids[0] = in.query_ids[0];  // at least one scorable query
  return in;
}

struct OracleResult {
  std::vector<double> cmc;
  double mean_ap = 0.0;
  std::vector<std::size_t> first_hit;
};

// Builds each sorted prefix by repeated selection of the smallest
// (distance, index) pair not yet taken.
OracleResult oracle(const Instance& in) {
  const std::size_t G = in.dist.cols;
  OracleResult out;
  std::vector<std::size_t> hits_at(G + 1, 0);
  double ap_sum = 0.0;
  std::size_t evaluated = 0;
  for (std::size_t q = 0; q < in.dist.rows; ++q) {
    std::size_t matches = 0;
    for (int g : in.gallery_ids) matches += g == in.query_ids[q];
    if (matches == 0) continue;
    std::vector<bool> taken(G, false);
    std::size_t found = 0, first = 0;
    double precision_sum = 0.0;
    for (std::size_t k = 1; k <= G; ++k) {
      std::size_t best = G;
      for (std::size_t g = 0; g < G; ++g) {
        if (taken[g]) continue;
        if (best == G || in.dist.at(q, g) < in.dist.at(q, best)) best = g;
      }
      taken[best] = true;
      if (in.gallery_ids[best] != in.query_ids[q]) continue;
      ++found;
      if (first == 0) first = k;
      precision_sum += static_cast<double>(found) / static_cast<double>(k);
    }
    ++evaluated;
    ++hits_at[first];
    out.first_hit.push_back(first);
    ap_sum += precision_sum / static_cast<double>(matches);
  }
  std::size_t running = 0;
  for (std::size_t k = 1; k <= G; ++k) {
    running += hits_at[k];
    out.cmc.push_back(static_cast<double>(running) / static_cast<double>(evaluated));
  }
  out.mean_ap = ap_sum / static_cast<double>(evaluated);
  return out;
}

data::Image random_image(std::size_t h, std::size_t w, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  auto img = data::Image::blank(h, w);
  for (auto& v : img.pixels) v = u(rng);
  return img;
}

}  // namespace

TEST_CASE("correct match at sorted position two") {
  DistanceMatrix d{1, 3, {0.5, 0.1, 0.9}};
  auto r = cmc_map(d, {7}, {7, 3, 5});
  CHECK(r.cmc == std::vector<double>{0.0, 1.0, 1.0});
  CHECK(r.mean_ap == doctest::Approx(0.5));
  CHECK(r.rank(1) == 0.0);
  CHECK(r.rank(50) == 1.0);
}

TEST_CASE("ties break by gallery index") {
  DistanceMatrix d{1, 3, {1.0, 1.0, 1.0}};
  CHECK(cmc_map(d, {2}, {1, 2, 2}).first_hit == std::vector<std::size_t>{2});
  CHECK(cmc_map(d, {1}, {1, 2, 2}).first_hit == std::vector<std::size_t>{1});
}

TEST_CASE("ranking agrees exactly with the exhaustive oracle") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    auto in = random_instance(rng);
    auto got = cmc_map(in.dist, in.query_ids, in.gallery_ids);
    auto want = oracle(in);
    INFO("trial ", trial);
    CHECK(got.cmc == want.cmc);
    CHECK(got.mean_ap == want.mean_ap);
    CHECK(got.first_hit == want.first_hit);
  }
}

TEST_CASE("ranking invariants on random instances") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_instance(rng);
    auto r = cmc_map(in.dist, in.query_ids, in.gallery_ids);
    for (std::size_t k = 1; k < r.cmc.size(); ++k) CHECK(r.cmc[k] >= r.cmc[k - 1]);
    CHECK(r.cmc.back() == 1.0);
    CHECK(r.mean_ap >= 0.0);
    CHECK(r.mean_ap <= 1.0);
    CHECK(r.evaluated.size() + r.excluded_queries == in.query_ids.size());

    auto shifted = in.dist;
    for (auto& v : shifted.values) v = 3.0 * v + 11.0;
    auto s = cmc_map(shifted, in.query_ids, in.gallery_ids);
    CHECK(s.cmc == r.cmc);
    CHECK(s.mean_ap == r.mean_ap);
    CHECK(s.first_hit == r.first_hit);
  }
}

TEST_CASE("ranking errors") {
  DistanceMatrix d{1, 2, {0.0, 1.0}};
  CHECK_THROWS_AS(cmc_map(d, {9}, {1, 2}), ContractError);
  CHECK_THROWS_AS(cmc_map(d, {1, 2}, {1, 2}), ShapeError);
  DistanceMatrix bad{1, 2, {0.0, std::nan("")}};
  CHECK_THROWS_AS(cmc_map(bad, {1}, {1, 2}), ContractError);
}

TEST_CASE("euclidean distances") {
  auto q = Tensor::from({2, 2}, {0.0, 0.0, 1.0, 1.0});
  auto g = Tensor::from({1, 2}, {3.0, 4.0});
  auto d = euclidean_distances(q, g);
  CHECK(d.at(0, 0) == doctest::Approx(5.0));
  CHECK(d.at(1, 0) == doctest::Approx(std::sqrt(13.0)));
  CHECK_THROWS_AS(euclidean_distances(q, Tensor::zeros({1, 3})), ShapeError);
}

TEST_CASE("image metrics") {
  std::mt19937_64 rng(33);
  auto a = random_image(24, 16, rng);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::isinf(psnr(a, a)));

  auto flat = random_image(24, 16, rng, 0.1, 0.8);
  auto offset = flat;
  for (auto& v : offset.pixels) v += 16.0 / 255.0;
  const double analytic = 20.0 * std::log10(255.0 / 16.0);
  CHECK(std::fabs(psnr(flat, offset) - analytic) < 1e-3);

  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_image(20, 14, rng), y = random_image(20, 14, rng);
    CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-12));
  }

  // Larger noise, lower PSNR.
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> noise(a.pixels.size());
  for (auto& v : noise) v = n(rng);
  double previous = std::numeric_limits<double>::infinity();
  for (double amp : {0.01, 0.02, 0.05, 0.1}) {
    auto noisy = a;
    for (std::size_t i = 0; i < noisy.pixels.size(); ++i) noisy.pixels[i] += amp * noise[i];
    const double p = psnr(a, noisy);
    CHECK(p < previous);
    previous = p;
  }
  CHECK(mean_abs_error(flat, offset) == doctest::Approx(16.0 / 255.0).epsilon(1e-12));
  CHECK_THROWS_AS(psnr(a, random_image(10, 10, rng)), ContractError);
}

TEST_CASE("untrained restorer matches the bilinear baseline") {
  Rng rng(34);
  auto records = data::toy_dataset(2, 2, {}, 5);
  sr::VdsrCaNet restorer({.depth = 3, .width = 8, .reduction = 4}, rng);
  auto q = restoration_quality(restorer, records);
  CHECK(q.images == 12);
  CHECK(q.l1_restored == q.l1_bilinear);
  CHECK(q.l1_bilinear > 0.0);
  CHECK(q.psnr_mean > 10.0);
  CHECK(q.ssim_mean > 0.0);
  CHECK(q.ssim_mean < 1.0);
}

TEST_CASE("end-to-end evaluation on toy records") {
  Rng rng(35);
  auto records = data::toy_dataset(4, 4, {}, 6);
  data::assign_single_shot_split(records, 1, 6);
  records = data::synthesize_mlr(records, {{2}, true}, 6);
  const auto queries = data::select(records, data::Split::Query);
  const auto gallery = data::select(records, data::Split::Gallery);
  reid::ReIdNet net({}, {.num_classes = 4}, rng);
  sr::VdsrCaNet restorer({.depth = 3, .width = 8, .reduction = 4}, rng);

  auto features = extract_features(restorer, net, queries, 3);
  CHECK(features.dim(0) == queries.size());
  CHECK(features.dim(1) == reid::test_feature_dim({}, {.num_classes = 4}));

  auto ev = evaluate(restorer, net, queries, gallery);
  CHECK(ev.ranking.evaluated.size() == queries.size());
  CHECK(ev.metrics.rank1 <= ev.metrics.rank5);
  CHECK(ev.metrics.rank5 <= ev.metrics.rank10);
  CHECK(ev.metrics.rank10 == 1.0);  // gallery of four
  CHECK(ev.metrics.mean_ap > 0.0);

  const std::string csv = metrics_csv(ev.metrics);
  CHECK(csv.rfind("rank1,rank5,rank10,mAP,psnr_mean,ssim_mean\n", 0) == 0);
  CHECK_THROWS(evaluate(restorer, net, {}, gallery));
}
