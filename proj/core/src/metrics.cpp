#include "umate/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

namespace umate::metrics {

using geom::operator+;
using geom::operator-;
using geom::operator*;

using geom::Vec3;

double f_sym(const std::vector<Vec3>& coords) {
  if (coords.empty()) throw ContractError("f_sym: empty coordinate set");
  const Vec3 c = geom::centroid(coords);
  double total = 0.0;
  for (const auto& xi : coords) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& xj : coords) {
      const Vec3 mid = 0.5 * (xi + xj);
      best = std::min(best, geom::norm(mid - c));
    }
    total += best;
  }
  return total / static_cast<double>(coords.size());
}

double f_per(const std::vector<Vec3>& coords) {
  const auto cp = geom::pair_corners(coords, geom::find_corners(coords));
  const auto axes = geom::lattice_axes(coords, cp);
  auto at = [&](int i) { return coords[static_cast<std::size_t>(i)]; };
  const Vec3 x1 = at(cp.anchor), x1p = at(cp.anchor_antipode);
  const Vec3 x2 = at(cp.positive[0]), x2p = at(cp.negative[0]);
  const Vec3 x3 = at(cp.positive[1]), x3p = at(cp.negative[1]);
  const Vec3 x4 = at(cp.positive[2]), x4p = at(cp.negative[2]);
  const Vec3& l1 = axes[0];
  const Vec3& l2 = axes[1];
  const Vec3& l3 = axes[2];
  double s = 0.0;
  s += geom::norm((x2 - x1) - l1);
  s += geom::norm((x4p - x3) - l1);
  s += geom::norm((x3p - x4) - l1);
  s += geom::norm((x1p - x2p) - l1);
  s += geom::norm((x3 - x1) - l2);
  s += geom::norm((x4p - x2) - l2);
  s += geom::norm((x2p - x4) - l2);
  s += geom::norm((x1p - x3p) - l2);
  s += geom::norm((x4 - x1) - l3);
  s += geom::norm((x2p - x3) - l3);
  s += geom::norm((x3p - x2) - l3);
  s += geom::norm((x1p - x4p) - l3);
  return s / 12.0;
}

double f_qua(double sym, double per) {
  if (sym < 0.0 || per < 0.0) throw ContractError("f_qua: inputs must be nonnegative");
  if (sym + per == 0.0) return 0.0;
  return 2.0 * sym * per / (sym + per);
}

double f_cond(const std::vector<Vec3>& coords,
              const std::vector<Vec3>& ground_truth) {
  if (coords.empty() || ground_truth.empty())
    throw ContractError("f_cond: empty coordinate set");
  double total = 0.0;
  for (const auto& x : coords) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& g : ground_truth) best = std::min(best, geom::norm(x - g));
    total += best;
  }
  return total / static_cast<double>(coords.size());
}

double nrmse(const std::vector<std::vector<double>>& pred,
             const std::vector<std::vector<double>>& gt, NrmseMode) {
  if (pred.size() != gt.size() || pred.empty())
    throw ContractError("nrmse: series lengths must match and be nonempty");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  double sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != gt[i].size())
      throw ContractError("nrmse: component counts differ");
    double e2 = 0.0;
    for (std::size_t j = 0; j < pred[i].size(); ++j) {
      const double d = pred[i][j] - gt[i][j];
      e2 += d * d;
      lo = std::min(lo, gt[i][j]);
      hi = std::max(hi, gt[i][j]);
    }
    sq += e2;
  }
  const double range = hi - lo;
  if (range <= 0.0) throw ContractError("nrmse: ground-truth range is zero");
  return std::sqrt(sq / static_cast<double>(pred.size())) / range;
}

double nrmse_scalar(const std::vector<double>& pred, const std::vector<double>& gt) {
  std::vector<std::vector<double>> p, g;
  for (double v : pred) p.push_back({v});
  for (double v : gt) g.push_back({v});
  return nrmse(p, g, NrmseMode::ConditionConfirmation);
}

namespace {
double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}
}  // namespace

void EvalReport::finalize() {
  mean_f_sym = mean_of(per_sample_f_sym);
  mean_f_per = mean_of(per_sample_f_per);
  mean_f_qua = mean_of(per_sample_f_qua);
  mean_f_cond = mean_of(per_sample_f_cond);
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["per_sample"] = {{"f_sym", per_sample_f_sym},
                     {"f_per", per_sample_f_per},
                     {"f_qua", per_sample_f_qua},
                     {"f_cond", per_sample_f_cond}};
  j["aggregate"] = {{"f_sym", mean_f_sym},
                    {"f_per", mean_f_per},
                    {"f_qua", mean_f_qua},
                    {"f_cond", mean_f_cond},
                    {"nrmse_pp", nrmse_pp},
                    {"nrmse_cc", nrmse_cc}};
  j["inapplicable_count"] = inapplicable_count;
  j["notes"] = notes;
  return j.dump(2);
}

}  // namespace umate::metrics
