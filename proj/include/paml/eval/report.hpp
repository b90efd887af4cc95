#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "paml/tasks/types.hpp"

namespace paml::eval {

struct MetricSample {
  std::size_t trial = 0;
  int user_id = 0;
  tasks::UserGroup group = tasks::UserGroup::Major;
  std::string metric;
  double value = 0;
};

/// Mean and sd over trials of the per-trial population means.
struct PopulationStats {
  bool present = false;
  double mean = 0;
  double sd = 0;
  std::size_t samples = 0;  // (trial, user) values pooled over trials
};

struct MetricSummary {
  std::string metric;
  PopulationStats all, major, minor;
  std::optional<double> t;
  std::optional<double> p_value;  // minor vs major, pooled (trial, user) samples
};

struct MetricsReport {
  std::string label;
  std::size_t trials = 0;
  std::vector<MetricSample> samples;
  std::vector<MetricSummary> summaries;  // metrics in first-seen order
  std::vector<std::string> warnings;
};

/// Aggregates per-user values; empty sub-populations are omitted with a warning.
MetricsReport build_report(std::string label, std::vector<MetricSample> samples, std::size_t n_trials);

/// Delimited text: one row per (trial, user, metric), then an aggregate block.
void write_report_tsv(const MetricsReport& report, const std::filesystem::path& path);

/// Fixed-width table of the aggregates of several reports.
std::string format_table(const std::vector<MetricsReport>& reports);

}  // namespace paml::eval
