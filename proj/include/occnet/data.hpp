#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "occnet/error.hpp"
#include "occnet/tensor.hpp"

namespace occnet {

enum class OcclusionClass : int { Face = 0, MedicalMask = 1, Scarf = 2, Hand = 3, Object = 4 };

inline constexpr std::size_t kOcclusionClassCount = 5;
inline constexpr std::array<OcclusionClass, kOcclusionClassCount> kAllOcclusionClasses = {
    OcclusionClass::Face, OcclusionClass::MedicalMask, OcclusionClass::Scarf, OcclusionClass::Hand,
    OcclusionClass::Object};

inline int class_code(OcclusionClass c) { return static_cast<int>(c); }
OcclusionClass class_from_code(int code);
// Human-readable name, e.g. "Medical Mask".
std::string_view display_name(OcclusionClass c);
// Dataset folder name: Face, Medicalmask, scarf, Handocclusion, Objectocclusion.
std::string_view folder_name(OcclusionClass c);
// Case-insensitive folder lookup.
std::optional<OcclusionClass> class_from_folder(std::string_view folder);

}  // namespace occnet

namespace occnet::data {

inline constexpr std::size_t kImageSide = 224;

enum class ImageErrorKind { malformed_header, unsupported_format, unsupported_depth, truncated_payload };

class ImageFormatError : public Error {
 public:
  ImageFormatError(ImageErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
  ImageErrorKind kind() const { return kind_; }

 private:
  ImageErrorKind kind_;
};

// Decodes a binary P6 PPM with maxval <= 255 into [H, W, 3] values in [0, 1].
Tensor decode_ppm(std::string_view bytes);
std::string encode_ppm(const Tensor& image);
void write_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor read_ppm(const std::filesystem::path& path);

// Bilinear resize with corner-aligned sampling, so corner pixels are preserved.
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

Tensor decode_resize(std::string_view bytes, std::size_t side = kImageSide);

struct LabeledImage {
  Tensor pixels;  // [H, W, 3] in [0, 1]
  OcclusionClass occlusion = OcclusionClass::Face;
  std::string person;
  std::filesystem::path source;
};

void validate_image(const LabeledImage& img, std::size_t side = kImageSide);

struct LoadReport {
  std::map<std::string, std::array<std::size_t, kOcclusionClassCount>> counts;
  std::vector<std::string> skipped;
};

// Reads <root>/<Person>/<ClassFolder>/*.ppm in lexicographic path order.
std::vector<LabeledImage> load_dataset(const std::filesystem::path& root, LoadReport* report = nullptr,
                                       std::size_t side = kImageSide);

enum class FillMode { zero, edge };

struct AugmentSpec {
  double rotation_degrees = 15.0;  // angle drawn from [-r, r]
  double shear_degrees = 10.0;     // shear angle drawn from [-s, s]
  double zoom = 0.1;               // scale drawn from [1 - z, 1 + z]
  double crop_fraction = 0.9;      // crop window side relative to the image, in (0, 1]
  double flip_probability = 0.5;
  FillMode fill = FillMode::zero;
  std::uint64_t seed = 0;

  static AugmentSpec identity();
  void validate() const;
};

// rotate -> shear -> zoom -> crop -> resize back -> maybe flip. Fully determined by (seed, draw).
LabeledImage augment(const LabeledImage& img, const AugmentSpec& spec, std::uint64_t draw);

Tensor flip_horizontal(const Tensor& image);

// Each original followed by `count` variants with draw indices 0 .. count-1.
std::vector<LabeledImage> expand_dataset(const std::vector<LabeledImage>& images, const AugmentSpec& spec,
                                         std::size_t count);

}  // namespace occnet::data
