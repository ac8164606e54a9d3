#include "occnet/reid.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <future>
#include <sstream>

#include "occnet/error.hpp"

namespace occnet::reid {
namespace fs = std::filesystem;

namespace {

constexpr std::array<const char*, 12> kMonths = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                                 "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};

std::string timestamp_text(const LocalTime& t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d %02d:%02d", t.year, t.month, t.day, t.hour, t.minute);
  return buf;
}

void check_person_name(const std::string& person) {
  if (person.empty()) throw ValueError("person name must not be empty");
  if (person.find_first_of("\t\n\r,") != std::string::npos) {
    throw ValueError("person name '" + person + "' contains a tab, comma or newline");
  }
}

}  // namespace

Clock system_clock() {
  return [] {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    return LocalTime{tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min};
  };
}

Clock fixed_clock(LocalTime t) {
  return [t] { return t; };
}

LocalTime parse_local_time(const std::string& text) {
  LocalTime t;
  char dash1 = 0, dash2 = 0, colon = 0;
  std::istringstream in(text);
  if (!(in >> t.year >> dash1 >> t.month >> dash2 >> t.day >> t.hour >> colon >> t.minute) || dash1 != '-' ||
      dash2 != '-' || colon != ':' || t.month < 1 || t.month > 12 || t.day < 1 || t.day > 31 || t.hour < 0 ||
      t.hour > 23 || t.minute < 0 || t.minute > 59) {
    throw ValueError("time '" + text + "' is not YYYY-MM-DD HH:MM");
  }
  return t;
}

Tensor ClassPrototype::direction() const {
  const double norm = l2_norm(mean.values());
  if (!(norm > 0.0)) throw ValueError("gallery prototype has zero norm");
  Tensor d = mean;
  scale_into(d, 1.0 / norm);
  return d;
}

const GalleryEntry* Gallery::find(const std::string& person) const {
  const auto it = entries_.find(person);
  return it == entries_.end() ? nullptr : &it->second;
}

void Gallery::add_embedding(const std::string& person, OcclusionClass occlusion, const Tensor& embedding,
                            const std::string& timestamp) {
  check_person_name(person);
  if (embedding.rank() != 1 || embedding.empty()) throw ShapeError("embedding must be a non-empty vector");
  for (const auto& [name, entry] : entries_) {
    for (const auto& slot : entry.classes) {
      if (slot && slot->mean.shape() != embedding.shape()) {
        throw ShapeError("embedding length " + std::to_string(embedding.size()) + " differs from the gallery's " +
                         std::to_string(slot->mean.size()));
      }
    }
  }
  auto& entry = entries_[person];
  if (entry.person.empty()) {
    entry.person = person;
    entry.enrolled_at = timestamp;
  }
  auto& slot = entry.classes[static_cast<std::size_t>(class_code(occlusion))];
  if (!slot) slot = ClassPrototype{Tensor(embedding.shape()), 0};
  ++slot->count;
  const double inv = 1.0 / static_cast<double>(slot->count);
  for (std::size_t i = 0; i < embedding.size(); ++i) slot->mean[i] += (embedding[i] - slot->mean[i]) * inv;
}

void Gallery::save(const std::string& path) const {
  std::ostringstream out(std::ios::binary);
  std::vector<std::pair<const GalleryEntry*, std::size_t>> rows;
  std::size_t dim = 0;
  for (const auto& [name, entry] : entries_) {
    for (std::size_t c = 0; c < kOcclusionClassCount; ++c) {
      if (entry.classes[c]) {
        rows.emplace_back(&entry, c);
        dim = entry.classes[c]->mean.size();
      }
    }
  }
  out << "OCCGAL1\n" << "entries " << rows.size() << "\n";
  Tensor means({rows.size(), dim});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& [entry, c] = rows[i];
    const auto& slot = *entry->classes[c];
    out << entry->person << "\t" << c << "\t" << slot.count << "\t" << entry->enrolled_at << "\n";
    std::copy(slot.mean.values().begin(), slot.mean.values().end(), means.data() + i * dim);
  }
  write_tensor(out, means);
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open gallery " + path + " for writing");
  const std::string bytes = out.str();
  file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!file) throw IoError("failed writing gallery " + path);
}

Gallery Gallery::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open gallery " + path);
  std::string line;
  if (!std::getline(in, line) || line != "OCCGAL1") throw IoError("gallery " + path + ": bad magic");
  if (!std::getline(in, line) || line.rfind("entries ", 0) != 0) throw IoError("gallery " + path + ": missing entry count");
  const std::size_t count = std::stoul(line.substr(8));
  struct Row {
    std::string person, stamp;
    std::size_t cls;
    std::uint64_t n;
  };
  std::vector<Row> rows;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw IoError("gallery " + path + ": truncated index");
    std::istringstream fields(line);
    Row r;
    std::string cls, n;
    if (!std::getline(fields, r.person, '\t') || !std::getline(fields, cls, '\t') || !std::getline(fields, n, '\t')) {
      throw IoError("gallery " + path + ": malformed index line " + std::to_string(i + 1));
    }
    std::getline(fields, r.stamp);
    r.cls = std::stoul(cls);
    r.n = std::stoull(n);
    rows.push_back(std::move(r));
  }
  const Tensor means = read_tensor(in);
  if (means.rank() != 2 || means.dim(0) != rows.size()) throw IoError("gallery " + path + ": prototype table mismatch");
  Gallery g;
  const std::size_t dim = means.dim(1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& entry = g.entries_[rows[i].person];
    entry.person = rows[i].person;
    entry.enrolled_at = rows[i].stamp;
    ClassPrototype proto{Tensor({dim}), rows[i].n};
    std::copy(means.data() + i * dim, means.data() + (i + 1) * dim, proto.mean.data());
    entry.classes.at(rows[i].cls) = std::move(proto);
  }
  return g;
}

void enroll(Gallery& gallery, const std::string& person, const std::vector<data::LabeledImage>& images,
            const Model& model, const Clock& clock) {
  if (images.empty()) throw ValueError("cannot enroll '" + person + "' with zero images");
  for (const auto& img : images) {
    if (img.person != person) {
      throw ValueError("image " + img.source.string() + " belongs to '" + img.person + "', not '" + person + "'");
    }
  }
  const std::string stamp = timestamp_text(clock());
  for (const auto& img : images) gallery.add_embedding(person, img.occlusion, embed(model, img.pixels), stamp);
}

double matching_score(const Tensor& a, const Tensor& b) {
  const double na = l2_norm(a.values()), nb = l2_norm(b.values());
  if (!(na > 0.0 && nb > 0.0)) throw ValueError("matching score needs non-zero embeddings");
  const double cosine = std::clamp(dot(a.values(), b.values()) / (na * nb), -1.0, 1.0);
  return 50.0 * (1.0 + cosine);
}

namespace {

std::optional<Identification> best_match(const Gallery& gallery, const Tensor& probe,
                                         std::optional<OcclusionClass> only) {
  std::optional<Identification> best;
  // std::map iterates names in lexicographic order; a later name must score strictly higher.
  for (const auto& [name, entry] : gallery.entries()) {
    for (std::size_t c = 0; c < kOcclusionClassCount; ++c) {
      if (!entry.classes[c]) continue;
      if (only && static_cast<std::size_t>(class_code(*only)) != c) continue;
      const double score = matching_score(probe, entry.classes[c]->mean);
      if (!best || score > best->score) best = Identification{name, score, kAllOcclusionClasses[c]};
    }
  }
  return best;
}

}  // namespace

Identification identify(const Gallery& gallery, const Tensor& probe_embedding) {
  if (gallery.empty()) throw ValueError("cannot identify against an empty gallery");
  return *best_match(gallery, probe_embedding, std::nullopt);
}

Identification identify(const Gallery& gallery, const Tensor& image, const Model& model) {
  if (gallery.empty()) throw ValueError("cannot identify against an empty gallery");
  return identify(gallery, embed(model, image));
}

std::optional<Identification> identify_within_class(const Gallery& gallery, const Tensor& probe_embedding,
                                                    OcclusionClass occlusion) {
  return best_match(gallery, probe_embedding, occlusion);
}

StageOne classify_stage(const Gallery& gallery, const Tensor& image, const Model& model) {
  const auto pred = classify(model, image);
  StageOne s;
  s.occlusion = pred.occlusion;
  if (auto match = identify_within_class(gallery, pred.embedding, pred.occlusion)) s.person = match->person;
  return s;
}

MatchResult fuse_and_gate(const StageOne& stage1, const Identification& stage2, double threshold) {
  MatchResult r;
  r.classifier_person = stage1.person;
  r.occlusion = stage1.occlusion;
  r.identifier_person = stage2.person;
  r.score = stage2.score;
  r.gate = stage2.score > threshold && !stage1.person.empty() && stage1.person == stage2.person;
  return r;
}

std::string format_date(const LocalTime& t) {
  if (t.month < 1 || t.month > 12) throw ValueError("month out of range");
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%02d-%s-%02d", t.day, kMonths[static_cast<std::size_t>(t.month - 1)],
                t.year % 100);
  return buf;
}

std::string format_time(const LocalTime& t) {
  const int h12 = t.hour % 12 == 0 ? 12 : t.hour % 12;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%d:%02d %s", h12, t.minute, t.hour < 12 ? "AM" : "PM");
  return buf;
}

std::string occlusion_log_type(OcclusionClass c) {
  switch (c) {
    case OcclusionClass::Face: return "NA";
    case OcclusionClass::MedicalMask: return "Medical";
    case OcclusionClass::Scarf: return "scarf";
    case OcclusionClass::Hand: return "hand";
    case OcclusionClass::Object: return "object";
  }
  return "NA";
}

LogRecord make_record(const MatchResult& result, const LocalTime& when) {
  const std::string& person = result.identifier_person;
  check_person_name(person);
  const bool occluded = result.occlusion != OcclusionClass::Face;
  return {format_date(when), format_time(when), person, occluded ? "Yes" : "No", occlusion_log_type(result.occlusion)};
}

std::string to_csv_line(const LogRecord& r) {
  return r.date + "," + r.time + "," + r.person + "," + r.occluded + "," + r.type;
}

LogRecord parse_log_line(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream in(line);
  std::string f;
  while (std::getline(in, f, ',')) fields.push_back(f);
  if (fields.size() != 5) throw ValueError("log line '" + line + "' does not have 5 fields");
  LogRecord r{fields[0], fields[1], fields[2], fields[3], fields[4]};
  if ((r.occluded == "No") != (r.type == "NA") || (r.occluded != "Yes" && r.occluded != "No")) {
    throw ValueError("log line '" + line + "' has inconsistent occlusion fields");
  }
  return r;
}

LogRecord AuditLog::append(const MatchResult& result, const Clock& clock) {
  if (!result.gate) throw ValueError("only gate-passing matches are logged");
  const LogRecord record = make_record(result, clock());
  std::lock_guard lock(mutex_);
  std::error_code ec;
  const bool fresh = !fs::exists(path_, ec) || fs::file_size(path_, ec) == 0;
  std::string chunk = fresh ? std::string(kLogHeader) + "\n" : std::string();
  chunk += to_csv_line(record) + "\n";
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot open log " + path_.string() + " for appending");
  out.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
  out.flush();
  if (!out) throw IoError("failed appending to log " + path_.string());
  return record;
}

LogRecord append_log(const fs::path& path, const MatchResult& result, const Clock& clock) {
  AuditLog log(path);
  return log.append(result, clock);
}

std::vector<Roi> WholeFrameDetector::detect(const Tensor& frame) const {
  if (frame.rank() != 3) throw ShapeError("detector expects an [H,W,C] frame");
  return {Roi{0, 0, frame.dim(0), frame.dim(1)}};
}

Tensor crop_roi(const Tensor& frame, const Roi& roi) {
  if (frame.rank() != 3 || roi.height == 0 || roi.width == 0 || roi.top + roi.height > frame.dim(0) ||
      roi.left + roi.width > frame.dim(1)) {
    throw ShapeError("region of interest lies outside the frame");
  }
  if (roi.top == 0 && roi.left == 0 && roi.height == frame.dim(0) && roi.width == frame.dim(1)) return frame;
  const std::size_t c = frame.dim(2);
  Tensor out({roi.height, roi.width, c});
  for (std::size_t y = 0; y < roi.height; ++y)
    for (std::size_t x = 0; x < roi.width; ++x)
      for (std::size_t k = 0; k < c; ++k) out.at(y, x, k) = frame.at(roi.top + y, roi.left + x, k);
  return out;
}

BatchSummary run_batch(const Model& model, const Gallery& gallery, const fs::path& input_dir,
                       const fs::path& log_path, const BatchOptions& options) {
  if (!fs::is_directory(input_dir)) throw IoError("input directory " + input_dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(input_dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  AuditLog log(log_path);
  BatchSummary summary;
  for (const auto& file : files) {
    std::vector<Tensor> rois;
    try {
      const Tensor frame = data::read_ppm(file);
      for (const auto& roi : options.detector->detect(frame)) rois.push_back(crop_roi(frame, roi));
    } catch (const Error& e) {
      ++summary.processed;
      ++summary.errored;
      summary.items.push_back({file, std::nullopt, e.what()});
      continue;
    }
    for (const auto& roi : rois) {
      ++summary.processed;
      BatchItem item{file, std::nullopt, {}};
      try {
        if (gallery.empty()) throw ValueError("gallery is empty");
        StageOne s1;
        Identification s2;
        if (options.concurrent_stages) {
          auto second = std::async(std::launch::async, [&] { return identify(gallery, roi, model); });
          s1 = classify_stage(gallery, roi, model);
          s2 = second.get();
        } else {
          s1 = classify_stage(gallery, roi, model);
          s2 = identify(gallery, roi, model);
        }
        auto result = fuse_and_gate(s1, s2, options.threshold);
        if (result.gate) {
          log.append(result, options.clock);
          ++summary.passed;
        } else {
          ++summary.failed_gate;
        }
        item.result = std::move(result);
      } catch (const Error& e) {
        ++summary.errored;
        item.error = e.what();
      }
      summary.items.push_back(std::move(item));
    }
  }
  return summary;
}

}  // namespace occnet::reid
