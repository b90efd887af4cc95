#include "paml/eval/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "paml/eval/metrics.hpp"

namespace paml::eval {
namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

PopulationStats population(const std::vector<std::vector<double>>& per_trial) {
  PopulationStats s;
  std::vector<double> means;
  for (const auto& vals : per_trial) {
    s.samples += vals.size();
    if (!vals.empty()) means.push_back(mean(vals));
  }
  if (means.empty()) return s;
  s.present = true;
  s.mean = mean(means);
  s.sd = stddev(means);
  return s;
}

}  // namespace

MetricsReport build_report(std::string label, std::vector<MetricSample> samples, std::size_t n_trials) {
  if (n_trials == 0) throw InputError("build_report: no trials");
  MetricsReport r;
  r.label = std::move(label);
  r.trials = n_trials;
  std::vector<std::string> order;
  for (const MetricSample& s : samples) {
    if (s.trial >= n_trials) throw InputError("build_report: sample from trial " + std::to_string(s.trial));
    if (std::find(order.begin(), order.end(), s.metric) == order.end()) order.push_back(s.metric);
  }
  for (const std::string& metric : order) {
    std::vector<std::vector<double>> all(n_trials), major(n_trials), minor(n_trials);
    std::vector<double> pooled_major, pooled_minor;
    for (const MetricSample& s : samples) {
      if (s.metric != metric) continue;
      all[s.trial].push_back(s.value);
      if (s.group == tasks::UserGroup::Major) {
        major[s.trial].push_back(s.value);
        pooled_major.push_back(s.value);
      } else {
        minor[s.trial].push_back(s.value);
        pooled_minor.push_back(s.value);
      }
    }
    MetricSummary m;
    m.metric = metric;
    m.all = population(all);
    m.major = population(major);
    m.minor = population(minor);
    if (!m.major.present) r.warnings.push_back(metric + ": no major users; major fields omitted");
    if (!m.minor.present) r.warnings.push_back(metric + ": no minor users; minor fields omitted");
    if (pooled_major.size() >= 2 && pooled_minor.size() >= 2) {
      try {
        const TTest t = t_test_two_sample(pooled_minor, pooled_major);
        m.t = t.t;
        m.p_value = t.p;
      } catch (const NumericError& e) {
        r.warnings.push_back(metric + ": " + e.what());
      }
    }
    r.summaries.push_back(std::move(m));
  }
  for (const std::string& w : r.warnings) std::cerr << "warning: " << r.label << ": " << w << '\n';
  r.samples = std::move(samples);
  return r;
}

void write_report_tsv(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "label\ttrial\tuser\tgroup\tmetric\tvalue\n";
  for (const MetricSample& s : report.samples)
    out << report.label << '\t' << s.trial << '\t' << s.user_id << '\t' << tasks::to_string(s.group)
        << '\t' << s.metric << '\t' << num(s.value) << '\n';
  out << "\n# aggregate\n";
  out << "label\tmetric\tpopulation\tmean\tsd\tsamples\tt\tp_value\n";
  for (const MetricSummary& m : report.summaries) {
    const std::pair<const char*, const PopulationStats*> pops[] = {{"all", &m.all}, {"major", &m.major}, {"minor", &m.minor}};
    for (const auto& [name, p] : pops) {
      if (!p->present) continue;
      out << report.label << '\t' << m.metric << '\t' << name << '\t' << num(p->mean) << '\t' << num(p->sd) << '\t'
          << p->samples << '\t' << (m.t ? num(*m.t) : "") << '\t' << (m.p_value ? num(*m.p_value) : "") << '\n';
    }
  }
  if (!out) throw DataError("failed writing " + path.string());
}

std::string format_table(const std::vector<MetricsReport>& reports) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %-8s %-22s %-22s %-22s %-10s\n", "method", "metric", "all", "major",
                "minor", "p-value");
  os << line;
  auto cell = [](const PopulationStats& p) {
    if (!p.present) return std::string("-");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f +- %.4f", p.mean, p.sd);
    return std::string(buf);
  };
  for (const MetricsReport& r : reports)
    for (const MetricSummary& m : r.summaries) {
      char p[32] = "-";
      if (m.p_value) std::snprintf(p, sizeof p, "%.3g", *m.p_value);
      std::snprintf(line, sizeof line, "%-12s %-8s %-22s %-22s %-22s %-10s\n", r.label.c_str(), m.metric.c_str(),
                    cell(m.all).c_str(), cell(m.major).c_str(), cell(m.minor).c_str(), p);
      os << line;
    }
  return os.str();
}

}  // namespace paml::eval
