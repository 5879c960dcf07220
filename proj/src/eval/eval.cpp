#include "pshr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "pshr/ops.hpp"

namespace pshr::eval {

DistanceMatrix euclidean_distances(const Tensor& queries, const Tensor& gallery) {
  if (queries.rank() != 2 || gallery.rank() != 2 || queries.dim(1) != gallery.dim(1)) {
    throw ShapeError("feature tables must be [Q, D] and [G, D], got " + to_string(queries.shape()) + " and " +
                     to_string(gallery.shape()));
  }
  const std::size_t q = queries.dim(0), g = gallery.dim(0), d = queries.dim(1);
  DistanceMatrix out{q, g, std::vector<double>(q * g)};
  const auto a = queries.data(), b = gallery.data();
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = 0; j < g; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = a[i * d + k] - b[j * d + k];
        acc += diff * diff;
      }
      out.values[i * g + j] = std::sqrt(acc);
    }
  return out;
}

double RankingResult::rank(std::size_t k) const {
  if (cmc.empty() || k == 0) throw ContractError("rank query on an empty CMC curve");
  return cmc[std::min(k, cmc.size()) - 1];
}

RankingResult cmc_map(const DistanceMatrix& dist, const std::vector<int>& query_ids,
                      const std::vector<int>& gallery_ids) {
  if (dist.rows != query_ids.size() || dist.cols != gallery_ids.size() || dist.values.size() != dist.rows * dist.cols) {
    throw ShapeError("distance matrix does not match the query and gallery id lists");
  }
  if (dist.cols == 0) throw ContractError("empty gallery");
  for (double v : dist.values)
    if (!std::isfinite(v)) throw ContractError("distance matrix must be finite");

  RankingResult out;
  std::vector<std::size_t> hits_at(dist.cols + 1, 0);
  double ap_sum = 0.0;
  std::vector<std::size_t> order(dist.cols);
  for (std::size_t q = 0; q < dist.rows; ++q) {
    if (std::find(gallery_ids.begin(), gallery_ids.end(), query_ids[q]) == gallery_ids.end()) {
      ++out.excluded_queries;
      continue;
    }
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist.at(q, a) < dist.at(q, b); });
    std::size_t hits = 0, first = 0;
    double precision_sum = 0.0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      if (gallery_ids[order[pos]] != query_ids[q]) continue;
      ++hits;
      if (first == 0) first = pos + 1;
      precision_sum += static_cast<double>(hits) / static_cast<double>(pos + 1);
    }
    out.evaluated.push_back(q);
    out.first_hit.push_back(first);
    ++hits_at[first];
    ap_sum += precision_sum / static_cast<double>(hits);
  }
  const std::size_t n = out.evaluated.size();
  if (n == 0) throw ContractError("no query identity appears in the gallery");
  out.cmc.resize(dist.cols);
  std::size_t running = 0;
  for (std::size_t k = 1; k <= dist.cols; ++k) {
    running += hits_at[k];
    out.cmc[k - 1] = static_cast<double>(running) / static_cast<double>(n);
  }
  out.mean_ap = ap_sum / static_cast<double>(n);
  return out;
}

namespace {

void require_same(const data::Image& a, const data::Image& b, const char* what) {
  if (a.height != b.height || a.width != b.width || a.pixels.size() != b.pixels.size() || a.empty()) {
    throw ContractError(std::string(what) + " needs two equally sized non-empty images");
  }
}

std::vector<double> gaussian_window() {
  constexpr int kSize = 11;
  constexpr double kSigma = 1.5;
  std::vector<double> w(kSize);
  for (int i = 0; i < kSize; ++i) {
    const double d = i - kSize / 2;
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
  }
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= s;
  return w;
}

// Separable valid-mode filtering of one plane.
std::vector<double> filter_valid(const double* src, std::size_t h, std::size_t w, const std::vector<double>& k) {
  const std::size_t n = k.size(), oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(h * ow), out(oh * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * src[y * w + x + i];
      rows[y * ow + x] = acc;
    }
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace

double psnr(const data::Image& a, const data::Image& b, double peak) {
  require_same(a, b, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.pixels.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const data::Image& a, const data::Image& b, double peak) {
  require_same(a, b, "ssim");
  static const std::vector<double> window = gaussian_window();
  if (a.height < window.size() || a.width < window.size()) {
    throw ContractError("ssim needs images of at least 11x11");
  }
  const double c1 = std::pow(0.01 * peak, 2), c2 = std::pow(0.03 * peak, 2);
  const std::size_t plane = a.height * a.width;
  double total = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    const double* x = a.pixels.data() + c * plane;
    const double* y = b.pixels.data() + c * plane;
    std::vector<double> xx(plane), yy(plane), xy(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, a.height, a.width, window);
    const auto my = filter_valid(y, a.height, a.width, window);
    const auto sxx = filter_valid(xx.data(), a.height, a.width, window);
    const auto syy = filter_valid(yy.data(), a.height, a.width, window);
    const auto sxy = filter_valid(xy.data(), a.height, a.width, window);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / 3.0;
}

double mean_abs_error(const data::Image& a, const data::Image& b) {
  require_same(a, b, "mean_abs_error");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) acc += std::fabs(a.pixels[i] - b.pixels[i]);
  return acc / static_cast<double>(a.pixels.size());
}

Tensor extract_features(const sr::VdsrCaNet& restorer, const reid::ReIdNet& net,
                        const std::vector<data::SampleRecord>& records, std::size_t batch_size) {
  if (records.empty()) throw ContractError("no records to extract features from");
  if (batch_size == 0) throw ContractError("batch size must be positive");
  NoGradGuard no_grad;
  const std::size_t H = net.backbone_config().input_h, W = net.backbone_config().input_w;
  std::vector<Tensor> rows;
  for (std::size_t start = 0; start < records.size(); start += batch_size) {
    std::vector<data::Image> inputs;
    for (std::size_t i = start; i < std::min(start + batch_size, records.size()); ++i) {
      const auto& im = records[i].image;
      if (im.empty()) throw ContractError("record " + records[i].path + " has no pixels");
      inputs.push_back(im.height == H && im.width == W ? im : data::upscale(im, H, W, restorer.config().upscale));
    }
    std::vector<const data::Image*> ptrs;
    for (const auto& im : inputs) ptrs.push_back(&im);
    rows.push_back(reid::test_feature(net.forward(restorer.forward(data::to_batch(ptrs)))));
  }
  return rows.size() == 1 ? rows[0] : concat(rows, 0);
}

QualityReport restoration_quality(const sr::VdsrCaNet& restorer, const std::vector<data::SampleRecord>& hr_records,
                                  const std::vector<std::size_t>& rates) {
  NoGradGuard no_grad;
  QualityReport q;
  for (const auto& rec : hr_records) {
    if (rec.is_lr()) throw ContractError("restoration quality needs HR references");
    for (std::size_t r : rates) {
      const auto& hr = rec.image;
      const data::Image up = data::upscale(data::decimate(hr, r), hr.height, hr.width, restorer.config().upscale);
      const data::Image restored = data::from_batch(restorer.forward(data::to_batch(up)), 0);
      q.psnr_mean += psnr(restored, hr);
      q.ssim_mean += ssim(restored, hr);
      q.l1_restored += mean_abs_error(restored, hr);
      q.l1_bilinear += mean_abs_error(up, hr);
      ++q.images;
    }
  }
  if (q.images == 0) throw ContractError("no images for restoration quality");
  const double n = static_cast<double>(q.images);
  q.psnr_mean /= n;
  q.ssim_mean /= n;
  q.l1_restored /= n;
  q.l1_bilinear /= n;
  return q;
}

std::string metrics_csv(const Metrics& m) {
  char line[256];
  std::snprintf(line, sizeof line, "rank1,rank5,rank10,mAP,psnr_mean,ssim_mean\n%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", m.rank1,
                m.rank5, m.rank10, m.mean_ap, m.psnr_mean, m.ssim_mean);
  return line;
}

Evaluation evaluate(const sr::VdsrCaNet& restorer, const reid::ReIdNet& net,
                    const std::vector<data::SampleRecord>& queries, const std::vector<data::SampleRecord>& gallery) {
  if (queries.empty()) throw ContractError("evaluation split has no query rows");
  if (gallery.empty()) throw ContractError("evaluation split has no gallery rows");
  Evaluation e;
  const auto dist = euclidean_distances(extract_features(restorer, net, queries), extract_features(restorer, net, gallery));
  std::vector<int> qid, gid;
  for (const auto& r : queries) qid.push_back(r.id);
  for (const auto& r : gallery) gid.push_back(r.id);
  e.ranking = cmc_map(dist, qid, gid);
  e.quality = restoration_quality(restorer, gallery);
  e.metrics = {e.ranking.rank(1), e.ranking.rank(5), e.ranking.rank(10), e.ranking.mean_ap, e.quality.psnr_mean,
               e.quality.ssim_mean};
  return e;
}

}  // namespace pshr::eval
