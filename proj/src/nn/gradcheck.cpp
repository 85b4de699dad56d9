#include "rap/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace rap::nn {

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace {

void record(GradCheckReport& report, double analytic, double numeric, const std::string& where) {
  const double rel = relative_error(analytic, numeric);
  report.max_absolute_error = std::max(report.max_absolute_error, std::abs(analytic - numeric));
  if (rel > report.max_relative_error || report.checked == 0) {
    report.max_relative_error = rel;
    report.worst_coordinate = where;
  }
  ++report.checked;
}

}  // namespace

GradCheckReport finite_diff_check(const Objective& f, const Vector& x, double h, double tolerance) {
  Vector analytic(x.size());
  f(x, &analytic);
  GradCheckReport report;
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + h;
    const double up = f(probe, nullptr);
    probe(i) = x(i) - h;
    const double down = f(probe, nullptr);
    probe(i) = x(i);
    record(report, analytic(i), (up - down) / (2.0 * h), "x[" + std::to_string(i) + "]");
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

GradCheckReport finite_diff_check(ParameterStore& store, const std::function<double(bool)>& loss, double h,
                                  double tolerance, Eigen::Index stride) {
  store.zero_grad();
  loss(true);
  std::vector<Matrix> analytic;
  for (const auto& p : store) analytic.push_back(p.grad);

  GradCheckReport report;
  std::size_t k = 0;
  for (auto& p : store) {
    const auto& g = analytic[k++];
    for (Eigen::Index i = 0; i < p.value.size(); i += std::max<Eigen::Index>(1, stride)) {
      double& slot = p.value.reshaped()(i);
      const double saved = slot;
      slot = saved + h;
      const double up = loss(false);
      slot = saved - h;
      const double down = loss(false);
      slot = saved;
      record(report, g.reshaped()(i), (up - down) / (2.0 * h), p.name + "[" + std::to_string(i) + "]");
    }
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

}  // namespace rap::nn
