#include "occnet/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "occnet/rng.hpp"

namespace occnet {

OcclusionClass class_from_code(int code) {
  if (code < 0 || code >= static_cast<int>(kOcclusionClassCount)) {
    throw ValueError("occlusion class code out of range: " + std::to_string(code));
  }
  return static_cast<OcclusionClass>(code);
}

std::string_view display_name(OcclusionClass c) {
  switch (c) {
    case OcclusionClass::Face: return "Face";
    case OcclusionClass::MedicalMask: return "Medical Mask";
    case OcclusionClass::Scarf: return "Scarf";
    case OcclusionClass::Hand: return "Hand";
    case OcclusionClass::Object: return "Object";
  }
  return "?";
}

std::string_view folder_name(OcclusionClass c) {
  switch (c) {
    case OcclusionClass::Face: return "Face";
    case OcclusionClass::MedicalMask: return "Medicalmask";
    case OcclusionClass::Scarf: return "scarf";
    case OcclusionClass::Hand: return "Handocclusion";
    case OcclusionClass::Object: return "Objectocclusion";
  }
  return "?";
}

std::optional<OcclusionClass> class_from_folder(std::string_view folder) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return out;
  };
  const std::string key = lower(folder);
  for (auto c : kAllOcclusionClasses) {
    if (lower(folder_name(c)) == key) return c;
  }
  return std::nullopt;
}

}  // namespace occnet

namespace occnet::data {
namespace {

namespace fs = std::filesystem;

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::optional<std::string> header_token(std::string_view bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    const char ch = bytes[pos];
    if (ch == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(ch))) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])) && bytes[pos] != '#') ++pos;
  if (start == pos) return std::nullopt;
  return std::string(bytes.substr(start, pos - start));
}

std::size_t header_number(std::string_view bytes, std::size_t& pos, const char* field) {
  auto tok = header_token(bytes, pos);
  if (!tok || tok->empty() || !std::all_of(tok->begin(), tok->end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw ImageFormatError(ImageErrorKind::malformed_header, std::string("PPM header: bad ") + field);
  }
  if (tok->size() > 9) throw ImageFormatError(ImageErrorKind::malformed_header, std::string("PPM header: ") + field + " too large");
  return std::stoul(*tok);
}

double sample(const Tensor& img, double y, double x, std::size_t c, FillMode fill) {
  const std::size_t h = img.dim(0), w = img.dim(1), ch = img.dim(2);
  const double fy = std::floor(y), fx = std::floor(x);
  const double wy = y - fy, wx = x - fx;
  const auto y0 = static_cast<std::ptrdiff_t>(fy), x0 = static_cast<std::ptrdiff_t>(fx);
  auto tap = [&](std::ptrdiff_t yy, std::ptrdiff_t xx) -> double {
    if (fill == FillMode::edge) {
      yy = std::clamp<std::ptrdiff_t>(yy, 0, static_cast<std::ptrdiff_t>(h) - 1);
      xx = std::clamp<std::ptrdiff_t>(xx, 0, static_cast<std::ptrdiff_t>(w) - 1);
    } else if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h) || xx >= static_cast<std::ptrdiff_t>(w)) {
      return 0.0;
    }
    return img[(static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)) * ch + c];
  };
  const double top = tap(y0, x0) * (1.0 - wx) + (wx > 0.0 ? tap(y0, x0 + 1) * wx : 0.0);
  if (wy == 0.0) return top;
  const double bottom = tap(y0 + 1, x0) * (1.0 - wx) + (wx > 0.0 ? tap(y0 + 1, x0 + 1) * wx : 0.0);
  return top * (1.0 - wy) + bottom * wy;
}

Tensor crop(const Tensor& img, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
  const std::size_t w = img.dim(1), ch = img.dim(2);
  Tensor out({height, width, ch});
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < ch; ++c) out.at(y, x, c) = img[((top + y) * w + left + x) * ch + c];
  return out;
}

bool is_ppm(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".ppm";
}

std::vector<fs::path> sorted_entries(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

Tensor decode_ppm(std::string_view bytes) {
  std::size_t pos = 0;
  auto magic = header_token(bytes, pos);
  if (!magic || magic->size() != 2 || (*magic)[0] != 'P') {
    throw ImageFormatError(ImageErrorKind::malformed_header, "PPM header: missing magic number");
  }
  if (*magic != "P6") {
    throw ImageFormatError(ImageErrorKind::unsupported_format, "unsupported PNM format " + *magic + " (need P6)");
  }
  const std::size_t width = header_number(bytes, pos, "width");
  const std::size_t height = header_number(bytes, pos, "height");
  const std::size_t maxval = header_number(bytes, pos, "maxval");
  if (width == 0 || height == 0) throw ImageFormatError(ImageErrorKind::malformed_header, "PPM header: zero extent");
  if (maxval == 0) throw ImageFormatError(ImageErrorKind::malformed_header, "PPM header: zero maxval");
  if (maxval > 255) {
    throw ImageFormatError(ImageErrorKind::unsupported_depth,
                           "PPM maxval " + std::to_string(maxval) + " exceeds 8-bit depth");
  }
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw ImageFormatError(ImageErrorKind::malformed_header, "PPM header: missing separator before payload");
  }
  ++pos;
  const std::size_t count = width * height * 3;
  if (bytes.size() - pos < count) {
    throw ImageFormatError(ImageErrorKind::truncated_payload, "PPM payload truncated: expected " +
                                                                  std::to_string(count) + " bytes, found " +
                                                                  std::to_string(bytes.size() - pos));
  }
  Tensor img({height, width, 3});
  const double scale = 1.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < count; ++i) {
    img[i] = std::min(1.0, static_cast<unsigned char>(bytes[pos + i]) * scale);
  }
  return img;
}

std::string encode_ppm(const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw ShapeError("PPM encoding needs [H,W,3], got " + shape_to_string(image.shape()));
  }
  std::string out = "P6\n" + std::to_string(image.dim(1)) + " " + std::to_string(image.dim(0)) + "\n255\n";
  out.reserve(out.size() + image.size());
  for (double v : image.values()) {
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
  return out;
}

void write_ppm(const fs::path& path, const Tensor& image) {
  const std::string bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_ppm(bytes);
}

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
  if (image.rank() != 3 || image.dim(0) == 0 || image.dim(1) == 0) {
    throw ShapeError("resize needs a non-empty [H,W,C] image, got " + shape_to_string(image.shape()));
  }
  if (height == 0 || width == 0) throw ValueError("resize target must be non-empty");
  const std::size_t h = image.dim(0), w = image.dim(1), ch = image.dim(2);
  if (h == height && w == width) return image;
  const double sy = height > 1 ? static_cast<double>(h - 1) / static_cast<double>(height - 1) : 0.0;
  const double sx = width > 1 ? static_cast<double>(w - 1) / static_cast<double>(width - 1) : 0.0;
  Tensor out({height, width, ch});
  for (std::size_t y = 0; y < height; ++y) {
    const double src_y = std::min(static_cast<double>(h - 1), y * sy);
    for (std::size_t x = 0; x < width; ++x) {
      const double src_x = std::min(static_cast<double>(w - 1), x * sx);
      for (std::size_t c = 0; c < ch; ++c) out.at(y, x, c) = sample(image, src_y, src_x, c, FillMode::edge);
    }
  }
  return out;
}

Tensor decode_resize(std::string_view bytes, std::size_t side) {
  return resize_bilinear(decode_ppm(bytes), side, side);
}

void validate_image(const LabeledImage& img, std::size_t side) {
  if (img.pixels.shape() != Shape{side, side, 3}) {
    throw ShapeError("image " + img.source.string() + " has shape " + shape_to_string(img.pixels.shape()) +
                     ", expected " + shape_to_string({side, side, 3}));
  }
  for (double v : img.pixels.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValueError("image " + img.source.string() + " has pixels outside [0,1]");
  }
}

std::vector<LabeledImage> load_dataset(const fs::path& root, LoadReport* report, std::size_t side) {
  if (!fs::is_directory(root)) throw IoError("dataset root " + root.string() + " is not a directory");
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  std::vector<LabeledImage> images;
  for (const auto& person_dir : sorted_entries(root)) {
    if (!fs::is_directory(person_dir)) continue;
    const std::string person = person_dir.filename().string();
    auto& counts = rep.counts[person];
    counts.fill(0);
    for (const auto& class_dir : sorted_entries(person_dir)) {
      if (!fs::is_directory(class_dir)) continue;
      const auto occlusion = class_from_folder(class_dir.filename().string());
      if (!occlusion) {
        throw ValueError("unknown occlusion class folder '" + class_dir.filename().string() + "' under " +
                         person_dir.string());
      }
      for (const auto& file : sorted_entries(class_dir)) {
        if (!fs::is_regular_file(file) || !is_ppm(file)) continue;
        try {
          std::ifstream in(file, std::ios::binary);
          if (!in) throw IoError("unreadable");
          const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
          images.push_back({decode_resize(bytes, side), *occlusion, person, file});
          ++counts[static_cast<std::size_t>(class_code(*occlusion))];
        } catch (const Error& e) {
          std::cerr << "warning: skipping " << file.string() << ": " << e.what() << "\n";
          rep.skipped.push_back(file.string());
        }
      }
    }
  }
  if (images.empty()) throw ValueError("empty dataset: no readable images under " + root.string());
  return images;
}

AugmentSpec AugmentSpec::identity() {
  AugmentSpec s;
  s.rotation_degrees = 0.0;
  s.shear_degrees = 0.0;
  s.zoom = 0.0;
  s.crop_fraction = 1.0;
  s.flip_probability = 0.0;
  return s;
}

void AugmentSpec::validate() const {
  if (rotation_degrees < 0 || shear_degrees < 0 || zoom < 0) throw ValueError("augment ranges must be non-negative");
  if (zoom >= 1.0) throw ValueError("augment zoom range must be below 1");
  if (shear_degrees >= 90.0) throw ValueError("augment shear must be below 90 degrees");
  if (!(crop_fraction > 0.0 && crop_fraction <= 1.0)) throw ValueError("crop fraction must be in (0, 1]");
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) throw ValueError("flip probability must be in [0, 1]");
}

Tensor flip_horizontal(const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("flip needs [H,W,C]");
  const std::size_t h = image.dim(0), w = image.dim(1), ch = image.dim(2);
  Tensor out(image.shape());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < ch; ++c) out.at(y, w - 1 - x, c) = image.at(y, x, c);
  return out;
}

LabeledImage augment(const LabeledImage& img, const AugmentSpec& spec, std::uint64_t draw) {
  spec.validate();
  if (img.pixels.rank() != 3) throw ShapeError("augment needs [H,W,C]");
  const std::size_t h = img.pixels.dim(0), w = img.pixels.dim(1), ch = img.pixels.dim(2);

  // Every draw happens regardless of the spec so the stream layout is fixed.
  Rng rng(spec.seed, draw);
  const double angle = rng.uniform(-1.0, 1.0) * spec.rotation_degrees * std::numbers::pi / 180.0;
  const double shear = rng.uniform(-1.0, 1.0) * spec.shear_degrees * std::numbers::pi / 180.0;
  const double scale = 1.0 + rng.uniform(-1.0, 1.0) * spec.zoom;
  const double crop_u = rng.uniform(), crop_v = rng.uniform();
  const bool flip = rng.bernoulli(spec.flip_probability);

  LabeledImage out = img;
  Tensor& px = out.pixels;

  if (angle != 0.0 || shear != 0.0 || scale != 1.0) {
    // Forward map: zoom * shear * rotate about the image centre; sample through its inverse.
    const double ca = std::cos(angle), sa = std::sin(angle), sh = std::tan(shear);
    // rotate R = [[c,-s],[s,c]], shear S = [[1,sh],[0,1]], zoom Z = scale * I
    const double m00 = scale * (ca + sh * sa), m01 = scale * (-sa + sh * ca);
    const double m10 = scale * sa, m11 = scale * ca;
    const double det = m00 * m11 - m01 * m10;
    const double i00 = m11 / det, i01 = -m01 / det, i10 = -m10 / det, i11 = m00 / det;
    const double cy = (static_cast<double>(h) - 1.0) / 2.0, cx = (static_cast<double>(w) - 1.0) / 2.0;
    Tensor warped(px.shape());
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        const double sx = i00 * dx + i01 * dy + cx;
        const double sy = i10 * dx + i11 * dy + cy;
        for (std::size_t c = 0; c < ch; ++c) warped.at(y, x, c) = sample(px, sy, sx, c, spec.fill);
      }
    }
    px = std::move(warped);
  }

  const auto crop_h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(spec.crop_fraction * h)));
  const auto crop_w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(spec.crop_fraction * w)));
  if (crop_h < h || crop_w < w) {
    const auto top = std::min(h - crop_h, static_cast<std::size_t>(crop_u * static_cast<double>(h - crop_h + 1)));
    const auto left = std::min(w - crop_w, static_cast<std::size_t>(crop_v * static_cast<double>(w - crop_w + 1)));
    px = resize_bilinear(crop(px, top, left, crop_h, crop_w), h, w);
  }

  if (flip) px = flip_horizontal(px);
  for (auto& v : px.values()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

std::vector<LabeledImage> expand_dataset(const std::vector<LabeledImage>& images, const AugmentSpec& spec,
                                         std::size_t count) {
  std::vector<LabeledImage> out;
  out.reserve(images.size() * (count + 1));
  for (const auto& img : images) {
    out.push_back(img);
    for (std::size_t d = 0; d < count; ++d) out.push_back(augment(img, spec, d));
  }
  return out;
}

}  // namespace occnet::data
