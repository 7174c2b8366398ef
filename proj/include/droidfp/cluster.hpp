#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

namespace droidfp {

inline constexpr int kNoise = -1;

namespace detail {

inline double sq_dist(const std::vector<double>& a,
                      const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace detail

// Classic DBSCAN on Euclidean vectors. A core point has >= min_pts
// neighbors within eps, counting itself. Clusters are grown in point-index
// order, so a border point reachable from several clusters lands in the
// lowest cluster id.
inline std::vector<int> dbscan(const std::vector<std::vector<double>>& points,
                               double eps, std::size_t min_pts) {
  if (points.empty()) throw std::invalid_argument("dbscan: empty input");
  if (!(eps > 0.0)) throw std::invalid_argument("dbscan: eps must be > 0");
  if (min_pts < 1) throw std::invalid_argument("dbscan: min_pts must be >= 1");
  const std::size_t n = points.size();
  const double eps2 = eps * eps;

  std::vector<std::vector<std::size_t>> neighbors(n);
  for (std::size_t i = 0; i < n; ++i) {
    neighbors[i].push_back(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      if (detail::sq_dist(points[i], points[j]) <= eps2) {
        neighbors[i].push_back(j);
        neighbors[j].push_back(i);
      }
    }
  }
  std::vector<bool> core(n);
  for (std::size_t i = 0; i < n; ++i) core[i] = neighbors[i].size() >= min_pts;

  std::vector<int> label(n, kNoise);
  int next_cluster = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i] || label[i] != kNoise) continue;
    const int cid = next_cluster++;
    std::queue<std::size_t> frontier;
    label[i] = cid;
    frontier.push(i);
    while (!frontier.empty()) {
      const std::size_t p = frontier.front();
      frontier.pop();
      for (std::size_t q : neighbors[p]) {
        if (label[q] != kNoise) continue;
        label[q] = cid;
        if (core[q]) frontier.push(q);
      }
    }
  }
  return label;
}

// k-distance knee heuristic: eps = the sorted min_pts-th nearest-neighbor
// distance at the point of maximum second difference.
inline double choose_eps(const std::vector<std::vector<double>>& points,
                         std::size_t min_pts) {
  if (points.size() < min_pts + 1)
    throw std::invalid_argument("choose_eps: need more than min_pts points");
  const std::size_t n = points.size();
  std::vector<double> kdist(n);
  std::vector<double> d;
  for (std::size_t i = 0; i < n; ++i) {
    d.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) d.push_back(std::sqrt(detail::sq_dist(points[i], points[j])));
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(min_pts - 1),
                     d.end());
    kdist[i] = d[min_pts - 1];
  }
  std::sort(kdist.begin(), kdist.end());
  std::size_t knee = 1;
  double best = -1.0;
  for (std::size_t i = 1; i + 1 < kdist.size(); ++i) {
    const double second_diff = kdist[i + 1] - 2.0 * kdist[i] + kdist[i - 1];
    if (second_diff > best) {
      best = second_diff;
      knee = i;
    }
  }
  double eps = kdist[knee];
  if (eps <= 0.0) {
    // degenerate stacks of identical points: fall back to the smallest
    // positive k-distance
    for (double v : kdist)
      if (v > 0.0) return v;
    throw std::invalid_argument("choose_eps: all points identical");
  }
  return eps;
}

// h = 1 - H(family | cluster) / H(family), over clustered points only;
// 1 by convention when H(family) = 0.
inline double homogeneity(const std::vector<int>& assignments,
                          const std::vector<std::string>& families) {
  if (assignments.size() != families.size())
    throw std::invalid_argument("homogeneity: size mismatch");
  std::map<std::string, std::size_t> fam_count;
  std::map<int, std::map<std::string, std::size_t>> cluster_fam;
  std::size_t total = 0;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == kNoise) continue;
    ++total;
    ++fam_count[families[i]];
    ++cluster_fam[assignments[i]][families[i]];
  }
  if (total == 0) return 1.0;
  const double nt = static_cast<double>(total);
  double h_fam = 0.0;
  for (const auto& [fam, c] : fam_count) {
    (void)fam;
    const double p = static_cast<double>(c) / nt;
    h_fam -= p * std::log(p);
  }
  if (h_fam == 0.0) return 1.0;
  double h_cond = 0.0;
  for (const auto& [cid, fams] : cluster_fam) {
    (void)cid;
    std::size_t cluster_total = 0;
    for (const auto& [fam, c] : fams) cluster_total += c;
    for (const auto& [fam, c] : fams) {
      (void)fam;
      const double joint = static_cast<double>(c) / nt;
      const double cond = static_cast<double>(c) /
                          static_cast<double>(cluster_total);
      h_cond -= joint * std::log(cond);
    }
  }
  return 1.0 - h_cond / h_fam;
}

// Assigns each noise point to the cluster with the nearest centroid (mean
// digest); ties break toward the lowest cluster id. No new clusters.
inline std::vector<int> family_match(
    const std::vector<int>& assignments,
    const std::vector<std::vector<double>>& points) {
  if (assignments.size() != points.size())
    throw std::invalid_argument("family_match: size mismatch");
  int max_cluster = -1;
  for (int a : assignments) max_cluster = std::max(max_cluster, a);
  if (max_cluster < 0) return assignments;  // nothing to match against

  const std::size_t dim = points.empty() ? 0 : points.front().size();
  std::vector<std::vector<double>> centroid(
      static_cast<std::size_t>(max_cluster) + 1,
      std::vector<double>(dim, 0.0));
  std::vector<std::size_t> count(static_cast<std::size_t>(max_cluster) + 1, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (assignments[i] == kNoise) continue;
    auto& c = centroid[static_cast<std::size_t>(assignments[i])];
    for (std::size_t j = 0; j < dim; ++j) c[j] += points[i][j];
    ++count[static_cast<std::size_t>(assignments[i])];
  }
  for (std::size_t cid = 0; cid < centroid.size(); ++cid)
    if (count[cid] > 0)
      for (auto& v : centroid[cid]) v /= static_cast<double>(count[cid]);

  std::vector<int> out = assignments;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (out[i] != kNoise) continue;
    int best = 0;
    double best_d = detail::sq_dist(points[i], centroid[0]);
    for (std::size_t cid = 1; cid < centroid.size(); ++cid) {
      const double d = detail::sq_dist(points[i], centroid[cid]);
      if (d < best_d) {  // strict: ties keep the lower cluster id
        best_d = d;
        best = static_cast<int>(cid);
      }
    }
    out[i] = best;
  }
  return out;
}

struct ClusterReport {
  std::vector<std::string> ids;
  std::vector<int> assignments;       // pre-matching, NOISE = -1
  std::vector<int> matched;           // after family matching
  double eps = 0.0;
  std::size_t min_pts = 0;
  double coverage = 0.0;              // clustered / total, pre-matching
  double homogeneity_pre = 0.0;       // over clustered points, pre-matching
  double homogeneity_post = 0.0;      // after family matching (coverage 1)
  double homogeneity_pre_no_singletons = 0.0;
};

}  // namespace droidfp
