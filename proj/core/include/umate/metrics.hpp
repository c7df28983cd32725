#pragma once

#include <optional>
#include <string>
#include <vector>

#include "umate/geometry.hpp"

namespace umate::metrics {

// Central-symmetry error: mean over vertices of the distance from the
// nearest midpoint (x_i + x_j)/2 to the centroid; j ranges over all nodes
// including i.
double f_sym(const std::vector<geom::Vec3>& coords);

// Periodicity error: mean of the 12 deviations between the frame edge
// vectors and their average axis. Needs at least 8 vertices.
double f_per(const std::vector<geom::Vec3>& coords);

// Harmonic combination 2ab/(a+b); 0 when either input is 0.
double f_qua(double sym, double per);

// One-sided chamfer distance, generated -> ground truth.
double f_cond(const std::vector<geom::Vec3>& coords,
              const std::vector<geom::Vec3>& ground_truth);

enum class NrmseMode { PropertyPrediction, ConditionConfirmation };

// RMSE over samples divided by the ground-truth value range. For property
// prediction each sample contributes a vector L2 error and the range is
// taken over all components.
double nrmse(const std::vector<std::vector<double>>& pred,
             const std::vector<std::vector<double>>& gt, NrmseMode mode);
double nrmse_scalar(const std::vector<double>& pred,
                    const std::vector<double>& gt);

struct EvalReport {
  std::vector<double> per_sample_f_sym;
  std::vector<double> per_sample_f_per;
  std::vector<double> per_sample_f_qua;
  std::vector<double> per_sample_f_cond;
  double mean_f_sym = 0.0;
  double mean_f_per = 0.0;
  double mean_f_qua = 0.0;
  double mean_f_cond = 0.0;
  double nrmse_pp = 0.0;
  double nrmse_cc = 0.0;
  int inapplicable_count = 0;  // samples where f_per could not be evaluated
  std::string notes;

  void finalize();  // recomputes the aggregate means
  std::string to_json() const;
};

}  // namespace umate::metrics
