// SPDX-License-Identifier: Apache-2.0
//
// Test-set metrics: pointwise errors, system-wise MAE with boxplot
// statistics, and the miscibility detection rate on LLE points.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gibbsnet/cem.hpp"
#include "gibbsnet/dataset.hpp"
#include "gibbsnet/hanna.hpp"
#include "gibbsnet/world.hpp"

namespace gibbsnet::eval {

/// Anything that predicts ln gamma and binary mixing curves for components
/// named by id.
class GammaModel {
 public:
  virtual ~GammaModel() = default;
  virtual std::vector<double> ln_gamma(const std::vector<thermo::ComponentId>& comps, const std::vector<double>& x,
                                       double T) const = 0;
  virtual thermo::DGmixCurve dgmix(const thermo::ComponentId& c1, const thermo::ComponentId& c2, double T) const = 0;
  /// Curvature of dg_mix/RT on the 99 interior grid points.
  virtual std::vector<double> curvature(const thermo::ComponentId& c1, const thermo::ComponentId& c2,
                                        double T) const = 0;
  virtual cem::BinaryModel binary(const thermo::ComponentId& c1, const thermo::ComponentId& c2) const = 0;
};

/// Mean over HANNA members; curves and curvatures average linearly.
class EnsembleModel final : public GammaModel {
 public:
  EnsembleModel(std::vector<hanna::ModelParams> members, EmbeddingTable embeddings);
  std::vector<double> ln_gamma(const std::vector<thermo::ComponentId>& comps, const std::vector<double>& x,
                               double T) const override;
  thermo::DGmixCurve dgmix(const thermo::ComponentId& c1, const thermo::ComponentId& c2, double T) const override;
  std::vector<double> curvature(const thermo::ComponentId& c1, const thermo::ComponentId& c2, double T) const override;
  cem::BinaryModel binary(const thermo::ComponentId& c1, const thermo::ComponentId& c2) const override;

 private:
  ad::Matrix rows(const std::vector<thermo::ComponentId>& comps) const;
  std::vector<hanna::ModelParams> members_;
  EmbeddingTable embeddings_;
};

/// ln gamma = 0: the ideal-solution baseline.
class IdealModel final : public GammaModel {
 public:
  std::vector<double> ln_gamma(const std::vector<thermo::ComponentId>& comps, const std::vector<double>& x,
                               double T) const override;
  thermo::DGmixCurve dgmix(const thermo::ComponentId& c1, const thermo::ComponentId& c2, double T) const override;
  std::vector<double> curvature(const thermo::ComponentId& c1, const thermo::ComponentId& c2, double T) const override;
  cem::BinaryModel binary(const thermo::ComponentId& c1, const thermo::ComponentId& c2) const override;
};

/// The synthetic world's NRTL ground truth.
class OracleModel final : public GammaModel {
 public:
  explicit OracleModel(const world::World& world) : world_(&world) {}
  std::vector<double> ln_gamma(const std::vector<thermo::ComponentId>& comps, const std::vector<double>& x,
                               double T) const override;
  thermo::DGmixCurve dgmix(const thermo::ComponentId& c1, const thermo::ComponentId& c2, double T) const override;
  std::vector<double> curvature(const thermo::ComponentId& c1, const thermo::ComponentId& c2, double T) const override;
  cem::BinaryModel binary(const thermo::ComponentId& c1, const thermo::ComponentId& c2) const override;

 private:
  const world::World* world_;
};

/// VLE: mean |d ln gamma_i|; ACI: |d ln gamma_inf|; LLE (binary, pred and exp
/// are {x1', x1''}): mean over both phases and both components, which for a
/// binary is (|d x1'| + |d x1''|) / 2. Throws DataError on a size mismatch.
double pointwise_error(data::Kind kind, std::span<const double> pred, std::span<const double> exp);

struct PointRecord {
  data::Kind kind = data::Kind::VLE;
  std::string system_id;
  double T = 0.0;
  std::vector<double> predicted;
  std::vector<double> expected;
  double error = 0.0;          ///< NaN for LLE points without a predicted gap
  bool gap_predicted = false;  ///< LLE only: min S < 0
  double min_S = 0.0;          ///< LLE only
};

/// Prediction and error for every point. LLE points use the outermost grid
/// gap of the model's curve refined with the model's own ln gamma (the grid
/// answer if refinement fails).
std::vector<PointRecord> evaluate_points(const GammaModel& model, std::span<const data::DataPoint> points,
                                         const data::AntoineTable& antoine);

struct SystemError {
  std::string system_id;
  std::size_t n_points = 0;
  double mae = 0.0;
};

/// Quartiles by linear interpolation; whiskers at the most extreme values
/// within 1.5 IQR of the box.
struct BoxStats {
  std::size_t n = 0;
  double median = 0.0;
  double mean = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_lo = 0.0;
  double whisker_hi = 0.0;
};

BoxStats box_stats(std::vector<double> values);

/// Per-system mean of the finite errors of one kind, sorted by system id.
std::vector<SystemError> mae_sys(std::span<const PointRecord> records, data::Kind kind);

struct KindSummary {
  std::size_t n_points = 0;
  std::vector<SystemError> systems;
  BoxStats box;  ///< over systems
};

struct Detection {
  std::string system_id;
  std::size_t n_points = 0;
  std::size_t detected = 0;
};

struct Report {
  KindSummary vle;
  KindSummary aci;
  KindSummary lle;  ///< over points with a predicted gap
  std::size_t lle_points = 0;
  double detection_rate = 0.0;  ///< NaN without LLE points
  std::vector<Detection> detection;

  const KindSummary& summary(data::Kind kind) const;
};

Report summarize(std::span<const PointRecord> records);

/// Header "kind,system_id,T,epsilon,gap_predicted,min_S,predicted,expected";
/// vector columns are ';'-joined, doubles printed round-trip exact.
void write_points_csv(std::span<const PointRecord> records, std::ostream& out);
/// Summary per kind (boxplot statistics, per-system MAE) and the detection
/// breakdown. `baseline` adds the ideal-solution boxplot statistics.
void write_report_json(const Report& report, const Report* baseline, std::ostream& out);
void write_points_csv(std::span<const PointRecord> records, const std::filesystem::path& path);
void write_report_json(const Report& report, const Report* baseline, const std::filesystem::path& path);

}  // namespace gibbsnet::eval
