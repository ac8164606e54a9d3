#include "occnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace occnet::metrics {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  tn += o.tn;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

ClassCounts tally(std::span<const OcclusionClass> predictions, std::span<const OcclusionClass> truths) {
  if (predictions.size() != truths.size()) {
    throw ShapeError("tally length mismatch: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(truths.size()) + " truths");
  }
  if (predictions.empty()) throw ValueError("tally needs at least one sample");
  ClassCounts counts{};
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto p = static_cast<std::size_t>(class_code(predictions[i]));
    const auto t = static_cast<std::size_t>(class_code(truths[i]));
    for (std::size_t c = 0; c < kOcclusionClassCount; ++c) {
      auto& k = counts[c];
      if (p == c && t == c) ++k.tp;
      else if (p == c) ++k.fp;
      else if (t == c) ++k.fn;
      else ++k.tn;
    }
  }
  return counts;
}

ClassCounts merge(const ClassCounts& a, const ClassCounts& b) {
  ClassCounts out = a;
  for (std::size_t c = 0; c < out.size(); ++c) out[c] += b[c];
  return out;
}

namespace {

std::optional<double> ratio(double num, double den) {
  if (den == 0.0) return std::nullopt;
  return num / den;
}

}  // namespace

MetricReport metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw ValueError("metrics need at least one counted sample");
  const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
  const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  MetricReport r;
  r.samples = c.total();
  r.sensitivity = ratio(tp, tp + fn);
  r.specificity = ratio(tn, fp + tn);
  r.accuracy = ratio(tp + tn, tp + fp + tn + fn);
  r.jsi_literal = ratio(tp, tp + fp + tn + fn);
  r.jsi_standard = ratio(tp, tp + fp + fn);
  const double num = tp * tn - fp * fn;
  r.mcc_literal = ratio(num, std::sqrt((tp + fp) * (tp + fp) * (tn + fp) * (tn + fn)));
  r.mcc_standard = ratio(num, std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)));
  return r;
}

MetricReport macro_average(std::span<const MetricReport> rows) {
  MetricReport out;
  auto mean = [&](std::optional<double> MetricReport::*field) -> std::optional<double> {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r.*field) {
        sum += *(r.*field);
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  };
  for (const auto& r : rows) out.samples = std::max(out.samples, r.samples);
  out.sensitivity = mean(&MetricReport::sensitivity);
  out.specificity = mean(&MetricReport::specificity);
  out.accuracy = mean(&MetricReport::accuracy);
  out.jsi_literal = mean(&MetricReport::jsi_literal);
  out.jsi_standard = mean(&MetricReport::jsi_standard);
  out.mcc_literal = mean(&MetricReport::mcc_literal);
  out.mcc_standard = mean(&MetricReport::mcc_standard);
  return out;
}

namespace {

constexpr const char* kUndefined = "—";

std::string percent(const std::optional<double>& v) {
  if (!v) return kUndefined;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *v * 100.0);
  return buf;
}

// Pads by display width; the undefined marker is one column wide but three bytes.
std::string pad(const std::string& s, std::size_t width) {
  std::size_t shown = 0;
  for (unsigned char ch : s) shown += (ch & 0xC0) != 0x80;
  return shown >= width ? s : s + std::string(width - shown, ' ');
}

std::string render(const std::vector<std::vector<std::string>>& rows, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::csv) {
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
      out << "\n";
    }
    return out.str();
  }
  std::vector<std::size_t> widths(rows.front().size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::size_t shown = 0;
      for (unsigned char ch : row[i]) shown += (ch & 0xC0) != 0x80;
      widths[i] = std::max(widths[i], shown);
    }
  }
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      line += i + 1 == row.size() ? row[i] : pad(row[i], widths[i] + 2);
    }
    out << line << "\n";
  }
  return out.str();
}

void check_rows(std::span<const MetricReport> per_class) {
  if (per_class.size() != kOcclusionClassCount) {
    throw ShapeError("report needs " + std::to_string(kOcclusionClassCount) + " class rows, got " +
                     std::to_string(per_class.size()));
  }
}

}  // namespace

std::string report_table(std::span<const MetricReport> per_class, ReportFormat format, Variant variant) {
  check_rows(per_class);
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Occlusion type", "Accuracy", "JSI", "MCC"});
  for (std::size_t c = 0; c < kOcclusionClassCount; ++c) {
    const auto& r = per_class[c];
    const bool literal = variant == Variant::literal;
    rows.push_back({std::string(display_name(kAllOcclusionClasses[c])), percent(r.accuracy),
                    percent(literal ? r.jsi_literal : r.jsi_standard), percent(literal ? r.mcc_literal : r.mcc_standard)});
  }
  return render(rows, format);
}

std::string detailed_report(std::span<const MetricReport> per_class, ReportFormat format) {
  check_rows(per_class);
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Occlusion type", "Sensitivity", "Specificity", "Accuracy", "JSI", "JSI (literal)", "MCC",
                  "MCC (literal)"});
  auto add = [&](const std::string& name, const MetricReport& r) {
    rows.push_back({name, percent(r.sensitivity), percent(r.specificity), percent(r.accuracy),
                    percent(r.jsi_standard), percent(r.jsi_literal), percent(r.mcc_standard), percent(r.mcc_literal)});
  };
  for (std::size_t c = 0; c < kOcclusionClassCount; ++c) add(std::string(display_name(kAllOcclusionClasses[c])), per_class[c]);
  add("Macro average", macro_average(per_class));
  return render(rows, format);
}

}  // namespace occnet::metrics
