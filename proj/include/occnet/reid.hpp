#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "occnet/data.hpp"
#include "occnet/network.hpp"

namespace occnet::reid {

inline constexpr double kDefaultThreshold = 90.0;

struct LocalTime {
  int year = 2021;
  int month = 1;  // 1..12
  int day = 1;
  int hour = 0;   // 0..23
  int minute = 0;
};

using Clock = std::function<LocalTime()>;
Clock system_clock();
Clock fixed_clock(LocalTime t);
// "YYYY-MM-DD HH:MM"
LocalTime parse_local_time(const std::string& text);

// Running mean of the embeddings enrolled for one (person, occlusion) pair.
struct ClassPrototype {
  Tensor mean;  // unnormalised running mean
  std::uint64_t count = 0;

  Tensor direction() const;  // mean / |mean|
};

struct GalleryEntry {
  std::string person;
  std::array<std::optional<ClassPrototype>, kOcclusionClassCount> classes;
  std::string enrolled_at;
};

class Gallery {
 public:
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, GalleryEntry>& entries() const { return entries_; }
  const GalleryEntry* find(const std::string& person) const;

  void add_embedding(const std::string& person, OcclusionClass occlusion, const Tensor& embedding,
                     const std::string& timestamp);

  void save(const std::string& path) const;
  static Gallery load(const std::string& path);

 private:
  std::map<std::string, GalleryEntry> entries_;
};

// Embeds each image and folds it into the person's per-class running means.
void enroll(Gallery& gallery, const std::string& person, const std::vector<data::LabeledImage>& images,
            const Model& model, const Clock& clock = system_clock());

struct Identification {
  std::string person;
  double score = 0.0;  // 50 * (1 + cosine), in [0, 100]
  OcclusionClass matched_class = OcclusionClass::Face;
};

double matching_score(const Tensor& a, const Tensor& b);

// Best match over every person and class; ties go to the lexicographically first name.
Identification identify(const Gallery& gallery, const Tensor& probe_embedding);
Identification identify(const Gallery& gallery, const Tensor& image, const Model& model);
// Best match among prototypes of one occlusion class; empty when nobody has that class.
std::optional<Identification> identify_within_class(const Gallery& gallery, const Tensor& probe_embedding,
                                                    OcclusionClass occlusion);

struct StageOne {
  OcclusionClass occlusion = OcclusionClass::Face;
  std::string person;  // class-restricted nearest prototype, empty if none
};

StageOne classify_stage(const Gallery& gallery, const Tensor& image, const Model& model);

struct MatchResult {
  std::string classifier_person;
  OcclusionClass occlusion = OcclusionClass::Face;
  std::string identifier_person;
  double score = 0.0;
  bool gate = false;
};

// Passes iff score > threshold and both stages name the same person.
MatchResult fuse_and_gate(const StageOne& stage1, const Identification& stage2, double threshold = kDefaultThreshold);

struct LogRecord {
  std::string date;    // 25-Jun-21
  std::string time;    // 10:30 AM
  std::string person;
  std::string occluded;  // Yes | No
  std::string type;      // Medical | scarf | object | hand | NA

  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

inline constexpr const char* kLogHeader = "Date,Time,Person,occlusion,type";

std::string format_date(const LocalTime& t);
std::string format_time(const LocalTime& t);
std::string occlusion_log_type(OcclusionClass c);
LogRecord make_record(const MatchResult& result, const LocalTime& when);
std::string to_csv_line(const LogRecord& r);
LogRecord parse_log_line(const std::string& line);

// Append-only CSV writer; one whole line per call, header on a new file.
class AuditLog {
 public:
  explicit AuditLog(std::filesystem::path path) : path_(std::move(path)) {}
  LogRecord append(const MatchResult& result, const Clock& clock);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
};

LogRecord append_log(const std::filesystem::path& path, const MatchResult& result, const Clock& clock);

struct Roi {
  std::size_t top = 0, left = 0, height = 0, width = 0;
};

// Face localisation is pluggable; inputs are assumed to be pre-cropped by default.
class FaceDetector {
 public:
  virtual ~FaceDetector() = default;
  virtual std::vector<Roi> detect(const Tensor& frame) const = 0;
};

class WholeFrameDetector : public FaceDetector {
 public:
  std::vector<Roi> detect(const Tensor& frame) const override;
};

Tensor crop_roi(const Tensor& frame, const Roi& roi);

struct BatchOptions {
  double threshold = kDefaultThreshold;
  Clock clock = system_clock();
  std::shared_ptr<const FaceDetector> detector = std::make_shared<WholeFrameDetector>();
  bool concurrent_stages = true;
};

struct BatchItem {
  std::filesystem::path source;
  std::optional<MatchResult> result;
  std::string error;
};

struct BatchSummary {
  std::size_t processed = 0;
  std::size_t passed = 0;
  std::size_t failed_gate = 0;
  std::size_t errored = 0;
  std::vector<BatchItem> items;
};

// Runs both stages on every ROI of every PPM in `input_dir`, gating and logging passes.
BatchSummary run_batch(const Model& model, const Gallery& gallery, const std::filesystem::path& input_dir,
                       const std::filesystem::path& log_path, const BatchOptions& options = {});

}  // namespace occnet::reid
