#include "spam/report.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "spam/error.hpp"

namespace spam {

const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols = {
      "seed", "training", "criterion", "sparsity", "realized_sparsity", "accuracy", "nll",
      "ece",  "brier",    "params_total", "params_nonzero", "flops", "bytes", "wall_time_s"};
  return cols;
}

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "null";
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ResourceError("cannot write " + path.string());
  out << text;
  if (!out) throw ResourceError("write failed for " + path.string());
}

}  // namespace

std::string PruneReport::to_csv() const {
  std::ostringstream out;
  const auto& cols = report_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : rows) {
    out << r.seed << ',' << r.training << ',' << r.criterion << ',' << fmt(r.sparsity) << ','
        << fmt(r.realized_sparsity) << ',' << fmt(r.eval.accuracy) << ',' << fmt(r.eval.nll) << ','
        << fmt(r.eval.ece) << ',' << fmt(r.eval.brier) << ',' << r.cost.params_total << ','
        << r.cost.params_nonzero << ',' << r.cost.flops << ',' << r.cost.bytes << ',' << fmt(r.wall_time_s)
        << '\n';
  }
  return out.str();
}

std::string PruneReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"seed", r.seed},
                   {"training", r.training},
                   {"criterion", r.criterion},
                   {"sparsity", r.sparsity},
                   {"realized_sparsity", r.realized_sparsity},
                   {"accuracy", num(r.eval.accuracy)},
                   {"nll", num(r.eval.nll)},
                   {"ece", num(r.eval.ece)},
                   {"brier", num(r.eval.brier)},
                   {"n", r.eval.n},
                   {"params_total", r.cost.params_total},
                   {"params_nonzero", r.cost.params_nonzero},
                   {"flops", r.cost.flops},
                   {"bytes", r.cost.bytes},
                   {"wall_time_s", r.wall_time_s}});
  }
  return nlohmann::json{{"columns", report_columns()}, {"rows", arr}}.dump(2);
}

void PruneReport::write(const std::filesystem::path& csv, const std::filesystem::path& json) const {
  write_text(csv, to_csv());
  write_text(json, to_json());
}

namespace {

struct Moments {
  std::vector<double> v;
  std::size_t n = 0;
  void add(double x) {
    if (!std::isfinite(x)) return;
    v.push_back(x);
    ++n;
  }
  double mean() const {
    if (n == 0) return std::nan("");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(n);
  }
  // Sample standard deviation over sqrt(n); zero for a single value.
  double stderr_() const {
    if (n == 0) return std::nan("");
    if (n == 1) return 0.0;
    const double m = mean();
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
  }
};

}  // namespace

std::vector<AggregateRow> aggregate(const PruneReport& report) {
  // The grid is trainings x (criterion, sparsity) pairs seen for any training.
  std::set<std::string> trainings;
  std::set<std::pair<std::string, double>> columns;
  using Key = std::tuple<std::string, std::string, double>;
  std::map<Key, std::vector<const PruneRecord*>> cells;
  for (const auto& r : report.rows) {
    trainings.insert(r.training);
    columns.insert({r.criterion, r.sparsity});
    cells[{r.training, r.criterion, r.sparsity}].push_back(&r);
  }
  std::vector<AggregateRow> out;
  for (const auto& t : trainings)
    for (const auto& [c, s] : columns) {
        AggregateRow a;
        a.training = t;
        a.criterion = c;
        a.sparsity = s;
        Moments acc, nll, ece, brier, flops, real;
        if (auto it = cells.find({t, c, s}); it != cells.end())
          for (const auto* r : it->second) {
            acc.add(r->eval.accuracy);
            nll.add(r->eval.nll);
            ece.add(r->eval.ece);
            brier.add(r->eval.brier);
            flops.add(static_cast<double>(r->cost.flops));
            real.add(r->realized_sparsity);
          }
        a.seeds = real.n;
        a.accuracy_mean = acc.mean();
        a.accuracy_stderr = acc.stderr_();
        a.nll_mean = nll.mean();
        a.nll_stderr = nll.stderr_();
        a.ece_mean = ece.mean();
        a.ece_stderr = ece.stderr_();
        a.brier_mean = brier.mean();
        a.brier_stderr = brier.stderr_();
        a.flops_mean = flops.mean();
        a.realized_sparsity_mean = real.mean();
        out.push_back(a);
    }
  return out;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream out;
  out << "training,criterion,sparsity,seeds,accuracy_mean,accuracy_stderr,nll_mean,nll_stderr,ece_mean,ece_stderr,"
         "brier_mean,brier_stderr,flops_mean,realized_sparsity_mean\n";
  for (const auto& a : rows) {
    out << a.training << ',' << a.criterion << ',' << fmt(a.sparsity) << ',' << a.seeds << ','
        << fmt(a.accuracy_mean) << ',' << fmt(a.accuracy_stderr) << ',' << fmt(a.nll_mean) << ','
        << fmt(a.nll_stderr) << ',' << fmt(a.ece_mean) << ',' << fmt(a.ece_stderr) << ',' << fmt(a.brier_mean)
        << ',' << fmt(a.brier_stderr) << ',' << fmt(a.flops_mean) << ',' << fmt(a.realized_sparsity_mean) << '\n';
  }
  return out.str();
}

}  // namespace spam
