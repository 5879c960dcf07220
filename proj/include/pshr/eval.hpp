#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pshr/data.hpp"
#include "pshr/hrnet_reid.hpp"
#include "pshr/vdsr_ca.hpp"

namespace pshr::eval {

/// Row-major queries x gallery.
struct DistanceMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  double at(std::size_t q, std::size_t g) const { return values[q * cols + g]; }
};

DistanceMatrix euclidean_distances(const Tensor& queries, const Tensor& gallery);

struct RankingResult {
  std::vector<double> cmc;                 // hit rate at ranks 1..G
  double mean_ap = 0.0;
  std::vector<std::size_t> first_hit;      // 1-based, per evaluated query
  std::vector<std::size_t> evaluated;      // query indices that were scored
  std::size_t excluded_queries = 0;        // no matching gallery identity

  /// CMC at rank k, clamped to the gallery size.
  double rank(std::size_t k) const;
};

/// Ties in distance are broken by gallery index.
RankingResult cmc_map(const DistanceMatrix& distances, const std::vector<int>& query_ids,
                      const std::vector<int>& gallery_ids);

/// +infinity when the images are identical.
double psnr(const data::Image& a, const data::Image& b, double peak = 1.0);
/// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), per channel.
double ssim(const data::Image& a, const data::Image& b, double peak = 1.0);
double mean_abs_error(const data::Image& a, const data::Image& b);

/// Resizes LR records to the network geometry, restores every image with
/// the restorer and returns concat(Seq(5), l_f) rows.
Tensor extract_features(const sr::VdsrCaNet& restorer, const reid::ReIdNet& net,
                        const std::vector<data::SampleRecord>& records, std::size_t batch_size = 32);

struct QualityReport {
  double psnr_mean = 0.0;
  double ssim_mean = 0.0;
  double l1_restored = 0.0;
  double l1_bilinear = 0.0;
  std::size_t images = 0;
};

/// Decimates each HR record at every rate, restores it, and compares with
/// the HR original.
QualityReport restoration_quality(const sr::VdsrCaNet& restorer, const std::vector<data::SampleRecord>& hr_records,
                                  const std::vector<std::size_t>& rates = {2, 3, 4});

struct Metrics {
  double rank1 = 0.0, rank5 = 0.0, rank10 = 0.0, mean_ap = 0.0, psnr_mean = 0.0, ssim_mean = 0.0;
};

/// rank1,rank5,rank10,mAP,psnr_mean,ssim_mean
std::string metrics_csv(const Metrics& metrics);

struct Evaluation {
  Metrics metrics;
  RankingResult ranking;
  QualityReport quality;
};

Evaluation evaluate(const sr::VdsrCaNet& restorer, const reid::ReIdNet& net,
                    const std::vector<data::SampleRecord>& queries, const std::vector<data::SampleRecord>& gallery);

}  // namespace pshr::eval
