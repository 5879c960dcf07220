#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "pshr/gradcheck.hpp"
#include "pshr/losses.hpp"
#include "pshr/ops.hpp"

using namespace pshr;
using namespace pshr::loss;
using pshr::reid::SequenceBundle;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

SequenceBundle random_bundle(std::size_t batch, const std::array<std::size_t, 4>& dims, std::size_t classes, Rng& rng,
                             bool requires_grad = false) {
  SequenceBundle b;
  std::vector<Tensor> parts;
  for (std::size_t n = 0; n < 4; ++n) {
    b.seq[n] = random_tensor({batch, dims[n]}, rng, -1.0, 1.0, requires_grad);
    parts.push_back(b.seq[n]);
  }
  b.seq[4] = concat(parts, 1);
  b.embedding = random_tensor({batch, 3}, rng);
  b.logits = random_tensor({batch, classes}, rng, -2.0, 2.0, requires_grad);
  return b;
}

std::vector<int> pk_labels(std::size_t p, std::size_t k, Rng& rng) {
  std::vector<int> labels;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < k; ++j) labels.push_back(static_cast<int>(3 * i + 7));
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

// Hardest pairs found by scanning every pair with explicit distances.
double triplet_oracle(const std::vector<Tensor>& seqs, const std::vector<int>& labels, double margin) {
  const std::size_t n = labels.size();
  double total = 0.0;
  for (const auto& s : seqs) {
    const std::size_t d = s.dim(1);
    auto dist = [&](std::size_t a, std::size_t b) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = s.at(a * d + k) - s.at(b * d + k);
        acc += diff * diff;
      }
      return std::sqrt(acc);
    };
    for (std::size_t a = 0; a < n; ++a) {
      double hardest_pos = 0.0, hardest_neg = INFINITY;
      for (std::size_t j = 0; j < n; ++j) {
        if (labels[j] == labels[a]) hardest_pos = std::max(hardest_pos, dist(a, j));
        else hardest_neg = std::min(hardest_neg, dist(a, j));
      }
      total += std::max(0.0, margin + hardest_pos - hardest_neg);
    }
  }
  return total;
}

double ce_oracle(const Tensor& logits, const std::vector<int>& labels, double eps) {
  const std::size_t m = logits.dim(1);
  double total = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < m; ++c) z += std::exp(logits.at(r * m + c));
    for (std::size_t c = 0; c < m; ++c) {
      const double q = c + 1 == static_cast<std::size_t>(labels[r]) ? 1.0 - (m - 1.0) * eps / m : eps / m;
      total -= q * (logits.at(r * m + c) - std::log(z));
    }
  }
  return total;
}

}  // namespace

TEST_CASE("loss weight defaults and validation") {
  LossWeights w;
  CHECK(w.margin == 0.1);
  CHECK(w.ce == 1.15);
  CHECK(w.bh == 0.2);
  CHECK(w.sr == 0.5);
  CHECK(w.ps == 0.5);
  CHECK(w.ps_combination == std::vector<std::size_t>{0, 3, 4, 5});
  CHECK_NOTHROW(w.validate());
  auto bad = w;
  bad.margin = -0.1;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = w;
  bad.smoothing = 1.0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = w;
  bad.ps = -1.0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = w;
  bad.ps_combination.clear();
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = w;
  bad.ps_combination = {6};
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("triplet on identical embeddings is P K 5 m") {
  const std::size_t P = 3, K = 4;
  SequenceBundle b;
  for (std::size_t t = 0; t < 5; ++t) b.seq[t] = Tensor::full({P * K, 6}, 0.3);
  std::vector<int> labels;
  for (std::size_t i = 0; i < P * K; ++i) labels.push_back(static_cast<int>(i / K));
  CHECK(triplet_bh(b, labels, 0.1).item() == doctest::Approx(P * K * 5 * 0.1).epsilon(1e-14));
  CHECK(triplet_bh(b, labels, 0.1, true).item() == doctest::Approx(5 * 0.1).epsilon(1e-14));
}

TEST_CASE("triplet on well separated tight clusters is zero") {
  std::vector<double> v;
  std::vector<int> labels;
  for (int id = 0; id < 3; ++id)
    for (int k = 0; k < 2; ++k) {
      v.insert(v.end(), {static_cast<double>(id) * 5.0, 1.0});
      labels.push_back(id);
    }
  CHECK(triplet_bh(std::vector<Tensor>{Tensor::from({6, 2}, v)}, labels, 0.1).item() == 0.0);
}

TEST_CASE("triplet matches the exhaustive oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t P = 2 + rng() % 2, K = 2 + rng() % 2;
    auto labels = pk_labels(P, K, rng);
    std::vector<Tensor> seqs;
    const std::size_t count = 1 + rng() % 5;
    for (std::size_t t = 0; t < count; ++t) seqs.push_back(random_tensor({P * K, 1 + rng() % 4}, rng));
    const double margin = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double got = triplet_bh(seqs, labels, margin).item();
    CHECK(std::fabs(got - triplet_oracle(seqs, labels, margin)) < 1e-12);
    CHECK(got >= 0.0);
  }
}

TEST_CASE("triplet is invariant to relabeling") {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    auto labels = pk_labels(3, 3, rng);
    std::vector<Tensor> seqs{random_tensor({9, 4}, rng), random_tensor({9, 2}, rng)};
    std::vector<int> relabeled;
    for (int l : labels) relabeled.push_back(1000 - 13 * l);
    CHECK(triplet_bh(seqs, labels, 0.2).item() == triplet_bh(seqs, relabeled, 0.2).item());
  }
}

TEST_CASE("triplet batch structure errors") {
  auto x = Tensor::zeros({4, 2});
  CHECK_THROWS_AS(triplet_bh(std::vector<Tensor>{x}, {1, 1, 1, 1}, 0.1), ContractError);
  CHECK_THROWS_AS(triplet_bh(std::vector<Tensor>{x}, {1, 2, 3, 4}, 0.1), ContractError);
  CHECK_THROWS_AS(triplet_bh(std::vector<Tensor>{x}, {1, 1, 1, 2}, 0.1), ContractError);
  CHECK_THROWS_AS(triplet_bh(std::vector<Tensor>{Tensor::zeros({3, 2})}, {1, 1, 2, 2}, 0.1), ShapeError);
  CHECK(batch_layout({5, 9, 5, 9, 5, 9}).identities == 2);
  CHECK(batch_layout({5, 9, 5, 9, 5, 9}).instances == 3);
}

TEST_CASE("smoothed targets") {
  auto q = smoothed_targets(4, 10, 0.1);
  for (std::size_t c = 0; c < 10; ++c) CHECK(q[c] == doctest::Approx(c == 3 ? 0.91 : 0.01).epsilon(1e-14));
  CHECK(std::accumulate(q.begin(), q.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(smoothed_targets(0, 10, 0.1), ContractError);
  CHECK_THROWS_AS(smoothed_targets(11, 10, 0.1), ContractError);
}

TEST_CASE("label-smoothed cross-entropy values") {
  const std::size_t M = 7;
  for (double eps : {0.0, 0.1, 0.5}) {
    auto uniform = Tensor::full({5, M}, 2.5);
    CHECK(ce_label_smooth(uniform, {1, 2, 3, 7, 4}, eps).item() == doctest::Approx(5 * std::log(7.0)).epsilon(1e-13));
  }
  std::vector<double> confident(2 * M, -500.0);
  confident[2] = 500.0;
  confident[M + 6] = 500.0;
  CHECK(ce_label_smooth(Tensor::from({2, M}, confident), {3, 7}, 0.0).item() < 1e-300);

  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto logits = random_tensor({4, M}, rng, -5.0, 5.0);
    std::vector<int> labels;
    for (int i = 0; i < 4; ++i) labels.push_back(1 + static_cast<int>(rng() % M));
    const double got = ce_label_smooth(logits, labels, 0.1).item();
    CHECK(got == doctest::Approx(ce_oracle(logits, labels, 0.1)).epsilon(1e-12));
    CHECK(got >= 0.0);
    CHECK(ce_label_smooth(logits, labels, 0.1, true).item() == doctest::Approx(got / 4).epsilon(1e-14));
    // Per-row constant shift.
    std::vector<double> shifted(logits.data().begin(), logits.data().end());
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < M; ++c) shifted[r * M + c] += 10.0 * static_cast<double>(r) - 7.0;
    CHECK(ce_label_smooth(Tensor::from({4, M}, shifted), labels, 0.1).item() == doctest::Approx(got).epsilon(1e-12));
  }
  CHECK_THROWS_AS(ce_label_smooth(Tensor::zeros({2, M}), {1, 8}, 0.1), ContractError);
  CHECK_THROWS_AS(ce_label_smooth(Tensor::zeros({2, M}), {1}, 0.1), ShapeError);
}

TEST_CASE("id loss weighting") {
  Rng rng(4);
  auto b = random_bundle(6, {3, 2, 4, 1}, 5, rng);
  const std::vector<int> labels{1, 2, 1, 2, 3, 3};
  const double c = ce_label_smooth(b.logits, labels, 0.1).item();
  const double t = triplet_bh(b, labels, 0.1).item();
  LossWeights w;
  CHECK(id_loss(b, labels, w).item() == doctest::Approx(1.15 * c + 0.2 * t).epsilon(1e-14));
  w.ce = 0.0;
  CHECK(id_loss(b, labels, w).item() == doctest::Approx(0.2 * t).epsilon(1e-14));
  w = LossWeights{};
  w.bh = 0.0;
  b.logits = Tensor::full({6, 5}, -1.0);
  CHECK(id_loss(b, labels, w).item() == doctest::Approx(1.15 * 6 * std::log(5.0)).epsilon(1e-13));
}

TEST_CASE("pseudo-siamese loss values") {
  Rng rng(5);
  auto h = random_bundle(3, {2, 3, 1, 2}, 4, rng);
  CHECK(ps_loss(h, h, {0, 3, 4, 5}).item() == 0.0);

  auto l = h;
  l.logits = add_scalar(h.logits, 1.0);
  CHECK(ps_loss(h, l, {5}).item() == doctest::Approx(3 * 4).epsilon(1e-14));
  CHECK(ps_loss(h, l, {5}, true).item() == doctest::Approx(4).epsilon(1e-14));

  for (int trial = 0; trial < 30; ++trial) {
    auto a = random_bundle(4, {2, 3, 4, 1}, 5, rng);
    auto b = random_bundle(4, {2, 3, 4, 1}, 5, rng);
    const std::vector<std::size_t> combo{0, 3, 4, 5};
    std::vector<double> fa, fb;
    for (std::size_t i : combo) {
      fa.insert(fa.end(), a.element(i).data().begin(), a.element(i).data().end());
      fb.insert(fb.end(), b.element(i).data().begin(), b.element(i).data().end());
    }
    double expect = 0.0;
    for (std::size_t k = 0; k < fa.size(); ++k) expect += std::fabs(fa[k] - fb[k]);
    const double got = ps_loss(a, b, combo).item();
    CHECK(std::fabs(got - expect) < 1e-12);
  }

  auto other = random_bundle(3, {2, 3, 1, 2}, 6, rng);
  CHECK_THROWS_AS(ps_loss(h, other, {5}), ContractError);
  CHECK_THROWS_AS(ps_loss(h, h, {}), ContractError);
}

TEST_CASE("total loss weighting") {
  LossWeights w;
  auto one = Tensor::scalar(1.0), two = Tensor::scalar(2.0), four = Tensor::scalar(4.0);
  CHECK(total_loss(one, two, four, w).item() == 4.0);
  w.sr = 0.0;
  w.ps = 0.0;
  CHECK(total_loss(one, two, four, w).item() == 1.0);
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(6);
  const std::vector<int> labels{2, 1, 2, 3, 1, 3};
  LossWeights w;
  w.margin = 0.5;

  auto b = random_bundle(6, {3, 2, 2, 1}, 3, rng, true);
  std::vector<Tensor> probes{b.seq[0], b.seq[1], b.seq[2], b.seq[3], b.logits};
  auto rebuild = [&] {
    SequenceBundle x = b;
    x.seq[4] = concat({b.seq[0], b.seq[1], b.seq[2], b.seq[3]}, 1);
    return x;
  };

  auto tri = grad_check("triplet_bh", [&] { return triplet_bh(rebuild(), labels, w.margin); }, probes);
  INFO("triplet ", tri.max_rel_error);
  CHECK(tri.pass);
  auto ce = grad_check("ce_ls", [&] { return ce_label_smooth(b.logits, labels, 0.1); }, {b.logits});
  CHECK(ce.pass);
  auto id = grad_check("id", [&] { return id_loss(rebuild(), labels, w); }, probes);
  CHECK(id.pass);

  auto other = random_bundle(6, {3, 2, 2, 1}, 3, rng);
  auto ps = grad_check("ps", [&] { return ps_loss(rebuild(), other, w.ps_combination); }, probes);
  CHECK(ps.pass);

  auto image = random_tensor({2, 3}, rng, -1.0, 1.0, true);
  auto sr_like = [&] { return sum(mul(image, image)); };
  auto total = grad_check(
      "total", [&] { return total_loss(id_loss(rebuild(), labels, w), sr_like(), ps_loss(rebuild(), other, w.ps_combination), w); },
      {b.seq[0], b.seq[3], b.logits, image});
  CHECK(total.pass);
}

TEST_CASE("total gradient is the weighted sum of component gradients") {
  Rng rng(7);
  const std::vector<int> labels{1, 1, 2, 2};
  LossWeights w;
  auto b = random_bundle(4, {2, 2, 2, 2}, 2, rng, true);
  auto other = random_bundle(4, {2, 2, 2, 2}, 2, rng);
  auto rebuild = [&] {
    SequenceBundle x = b;
    x.seq[4] = concat({b.seq[0], b.seq[1], b.seq[2], b.seq[3]}, 1);
    return x;
  };
  auto p = b.logits;
  auto grad_of = [&](const Tensor& loss) {
    p.zero_grad();
    loss.backward();
    return std::vector<double>(p.grad().begin(), p.grad().end());
  };
  auto sr = sum(abs(p));
  const auto g_id = grad_of(id_loss(rebuild(), labels, w));
  const auto g_sr = grad_of(sum(abs(p)));
  const auto g_ps = grad_of(ps_loss(rebuild(), other, w.ps_combination));
  const auto g_total = grad_of(total_loss(id_loss(rebuild(), labels, w), sr, ps_loss(rebuild(), other, w.ps_combination), w));
  for (std::size_t i = 0; i < g_total.size(); ++i)
    CHECK(g_total[i] == doctest::Approx(g_id[i] + 0.5 * g_sr[i] + 0.5 * g_ps[i]).epsilon(1e-12));
}
