#include "mgtr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "mgtr/errors.hpp"

namespace mgtr {

Index MetricsConfig::horizon_step(std::size_t h) const {
  if (h >= horizons_s.size()) throw ContractError("metrics: horizon index out of range");
  return static_cast<Index>(std::llround(horizons_s[h] / dt));
}

namespace {

bool gt_valid_through(const std::vector<std::uint8_t>& valid, Index horizon_step) {
  if (static_cast<Index>(valid.size()) < horizon_step) return false;
  for (Index t = 0; t < horizon_step; ++t)
    if (!valid[static_cast<std::size_t>(t)]) return false;
  return true;
}

double endpoint_error(const GmmModeSet& modes, Index mode, const Mat& gt_xy, Index horizon_step) {
  const Index t = horizon_step - 1;
  return (modes.mean(mode, t) - Vec2(gt_xy(t, 0), gt_xy(t, 1))).norm();
}

}  // namespace

double min_ade(const GmmModeSet& modes, const Mat& gt_xy, Index horizon_step) {
  if (modes.modes() < 1) throw ContractError("min_ade: no modes");
  if (horizon_step < 1 || horizon_step > modes.steps || gt_xy.rows() < horizon_step)
    throw ContractError("min_ade: bad horizon");
  double best = std::numeric_limits<double>::infinity();
  for (Index m = 0; m < modes.modes(); ++m) {
    double sum = 0;
    for (Index t = 0; t < horizon_step; ++t)
      sum += (modes.mean(m, t) - Vec2(gt_xy(t, 0), gt_xy(t, 1))).norm();
    best = std::min(best, sum / static_cast<double>(horizon_step));
  }
  return best;
}

double min_fde(const GmmModeSet& modes, const Mat& gt_xy, Index horizon_step) {
  if (modes.modes() < 1) throw ContractError("min_fde: no modes");
  if (horizon_step < 1 || horizon_step > modes.steps || gt_xy.rows() < horizon_step)
    throw ContractError("min_fde: bad horizon");
  double best = std::numeric_limits<double>::infinity();
  for (Index m = 0; m < modes.modes(); ++m)
    best = std::min(best, endpoint_error(modes, m, gt_xy, horizon_step));
  return best;
}

double miss_rate(const std::vector<PredictionRecord>& records, Index horizon_step,
                 double threshold) {
  if (records.empty()) throw ContractError("miss_rate: empty batch");
  int misses = 0, counted = 0;
  for (const auto& r : records) {
    if (!gt_valid_through(r.gt_valid, horizon_step)) continue;
    ++counted;
    bool hit = false;
    for (Index m = 0; m < r.modes.modes(); ++m)
      hit = hit || endpoint_error(r.modes, m, r.gt_xy, horizon_step) <= threshold;
    if (!hit) ++misses;
  }
  if (counted == 0) throw ContractError("miss_rate: no valid records at this horizon");
  return static_cast<double>(misses) / static_cast<double>(counted);
}

double average_precision(const std::vector<PredictionRecord>& records, Index horizon_step,
                         double threshold) {
  if (records.empty()) throw ContractError("average_precision: empty batch");

  struct Ranked {
    double prob;
    std::size_t record;
    Index mode;
  };
  std::vector<Ranked> ranked;
  int total_targets = 0;
  for (std::size_t r = 0; r < records.size(); ++r) {
    if (!gt_valid_through(records[r].gt_valid, horizon_step)) continue;
    ++total_targets;
    for (Index m = 0; m < records[r].modes.modes(); ++m)
      ranked.push_back({records[r].modes.probabilities(m), r, m});
  }
  if (total_targets == 0) throw ContractError("average_precision: no valid records");
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.prob != b.prob) return a.prob > b.prob;
    if (a.record != b.record) return a.record < b.record;
    return a.mode < b.mode;
  });

  std::vector<char> matched(records.size(), 0);
  std::vector<double> precision, recall;
  int tp = 0, seen = 0;
  for (const auto& rk : ranked) {
    ++seen;
    const PredictionRecord& rec = records[rk.record];
    const bool hit = !matched[rk.record] &&
                     endpoint_error(rec.modes, rk.mode, rec.gt_xy, horizon_step) <= threshold;
    if (hit) {
      matched[rk.record] = 1;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(seen));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_targets));
  }

  // precision envelope integrated over recall
  std::vector<double> envelope(precision.size());
  double run = 0;
  for (std::size_t i = precision.size(); i-- > 0;) {
    run = std::max(run, precision[i]);
    envelope[i] = run;
  }
  double ap = 0, prev_recall = 0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * envelope[i];
    prev_recall = recall[i];
  }
  return ap;
}

namespace {

MetricCell mean_cells(const std::vector<const MetricCell*>& cells) {
  MetricCell out;
  int n = 0;
  for (const MetricCell* c : cells) {
    if (c->count == 0) continue;
    out.minADE += c->minADE;
    out.minFDE += c->minFDE;
    out.MR += c->MR;
    out.mAP += c->mAP;
    out.count += c->count;
    ++n;
  }
  if (n > 0) {
    out.minADE /= n;
    out.minFDE /= n;
    out.MR /= n;
    out.mAP /= n;
  }
  return out;
}

}  // namespace

EvalReport evaluate_predictions(const std::vector<PredictionRecord>& records,
                                const MetricsConfig& cfg) {
  if (records.empty()) throw ContractError("evaluate_predictions: empty batch");
  if (cfg.horizons_s.size() != 3 || cfg.miss_thresholds.size() != 3)
    throw ContractError("evaluate_predictions: expected three horizons");

  EvalReport report;
  report.config = cfg;
  for (int ty = 0; ty < kNumAgentTypes; ++ty) {
    std::vector<PredictionRecord> of_type;
    for (const auto& r : records)
      if (static_cast<int>(r.type) == ty) of_type.push_back(r);
    for (std::size_t h = 0; h < 3; ++h) {
      const Index hs = cfg.horizon_step(h);
      MetricCell& cell = report.cells[ty][h];
      double ade = 0, fde = 0;
      int n = 0;
      for (const auto& r : of_type) {
        if (!gt_valid_through(r.gt_valid, hs)) continue;
        ade += min_ade(r.modes, r.gt_xy, hs);
        fde += min_fde(r.modes, r.gt_xy, hs);
        ++n;
      }
      if (n == 0) continue;
      cell.count = n;
      cell.minADE = ade / n;
      cell.minFDE = fde / n;
      cell.MR = miss_rate(of_type, hs, cfg.miss_thresholds[h]);
      cell.mAP = average_precision(of_type, hs, cfg.miss_thresholds[h]);
    }
  }
  for (int ty = 0; ty < kNumAgentTypes; ++ty)
    report.per_type[ty] =
        mean_cells({&report.cells[ty][0], &report.cells[ty][1], &report.cells[ty][2]});
  for (std::size_t h = 0; h < 3; ++h)
    report.per_horizon[h] =
        mean_cells({&report.cells[0][h], &report.cells[1][h], &report.cells[2][h]});
  report.overall = mean_cells({&report.per_type[0], &report.per_type[1], &report.per_type[2]});
  return report;
}

namespace {

nlohmann::json cell_json(const MetricCell& c) {
  return {{"minADE", c.minADE}, {"minFDE", c.minFDE}, {"MR", c.MR}, {"mAP", c.mAP},
          {"count", c.count}};
}

std::string horizon_name(double s) {
  std::ostringstream os;
  os << s << "s";
  return os.str();
}

}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  for (int ty = 0; ty < kNumAgentTypes; ++ty) {
    nlohmann::json tj;
    for (std::size_t h = 0; h < 3; ++h)
      tj["horizons"][horizon_name(config.horizons_s[h])] = cell_json(cells[ty][h]);
    tj["avg"] = cell_json(per_type[ty]);
    j["types"][to_string(static_cast<AgentType>(ty))] = std::move(tj);
  }
  for (std::size_t h = 0; h < 3; ++h)
    j["avg"]["horizons"][horizon_name(config.horizons_s[h])] = cell_json(per_horizon[h]);
  j["avg"]["avg"] = cell_json(overall);
  return j.dump(2);
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os << "type        horizon   minADE    minFDE    MR        mAP       n\n";
  auto row = [&os](const std::string& ty, const std::string& hz, const MetricCell& c) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-11s %-9s %-9.4f %-9.4f %-9.4f %-9.4f %d\n", ty.c_str(),
                  hz.c_str(), c.minADE, c.minFDE, c.MR, c.mAP, c.count);
    os << buf;
  };
  for (int ty = 0; ty < kNumAgentTypes; ++ty) {
    for (std::size_t h = 0; h < 3; ++h)
      row(to_string(static_cast<AgentType>(ty)), horizon_name(config.horizons_s[h]), cells[ty][h]);
    row(to_string(static_cast<AgentType>(ty)), "avg", per_type[ty]);
  }
  row("Average", "avg", overall);
  return os.str();
}

}  // namespace mgtr
