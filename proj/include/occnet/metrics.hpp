#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "occnet/data.hpp"

namespace occnet::metrics {

struct ConfusionCounts {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::uint64_t total() const { return tp + tn + fp + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

using ClassCounts = std::array<ConfusionCounts, kOcclusionClassCount>;

// One-vs-rest counts for every class.
ClassCounts tally(std::span<const OcclusionClass> predictions, std::span<const OcclusionClass> truths);
ClassCounts merge(const ClassCounts& a, const ClassCounts& b);

// Each metric is empty when its denominator is zero.
struct MetricReport {
  std::uint64_t samples = 0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> accuracy;
  std::optional<double> jsi_literal;     // TP / (TP + FP + TN + FN)
  std::optional<double> jsi_standard;  // TP / (TP + FP + FN)
  std::optional<double> mcc_literal;     // (TP+FP) repeated in the denominator
  std::optional<double> mcc_standard;
};

MetricReport metrics(const ConfusionCounts& c);
// Mean of each metric over the classes where it is defined.
MetricReport macro_average(std::span<const MetricReport> rows);

enum class ReportFormat { text, csv };
enum class Variant { standard, literal };

// "Occlusion type | Accuracy | JSI | MCC" with percentages to two decimals.
std::string report_table(std::span<const MetricReport> per_class, ReportFormat format,
                         Variant variant = Variant::standard);

// Full per-class breakdown including sensitivity and specificity.
std::string detailed_report(std::span<const MetricReport> per_class, ReportFormat format);

}  // namespace occnet::metrics
