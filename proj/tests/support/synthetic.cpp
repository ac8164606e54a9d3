#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "occnet/rng.hpp"

namespace occnet::synthetic {
namespace fs = std::filesystem;

const std::vector<Persona>& enrolled_personas() {
  static const std::vector<Persona> people = {
      {"Alice", {0.15, 0.35, 0.75}, {0.95, 0.80, 0.70}, {0.90, 0.75, 0.20}},
      {"Bilal", {0.20, 0.65, 0.25}, {0.55, 0.38, 0.25}, {0.05, 0.05, 0.05}},
      {"Chen", {0.80, 0.75, 0.20}, {0.90, 0.72, 0.55}, {0.30, 0.15, 0.45}},
      {"Dara", {0.60, 0.20, 0.55}, {0.75, 0.55, 0.40}, {0.70, 0.25, 0.10}},
  };
  return people;
}

const std::vector<Persona>& impostor_personas() {
  static const std::vector<Persona> people = {
      {"Emeka", {0.10, 0.70, 0.70}, {0.40, 0.28, 0.18}, {0.85, 0.85, 0.85}},
      {"Farah", {0.90, 0.45, 0.15}, {0.85, 0.65, 0.55}, {0.10, 0.30, 0.60}},
  };
  return people;
}

namespace {

using Rgb = std::array<double, 3>;

struct Canvas {
  Tensor img;
  std::size_t side;

  void put(double y, double x, const Rgb& c) {
    if (y < 0 || x < 0) return;
    const auto yi = static_cast<std::size_t>(y), xi = static_cast<std::size_t>(x);
    if (yi >= side || xi >= side) return;
    for (std::size_t k = 0; k < 3; ++k) img.at(yi, xi, k) = c[k];
  }

  template <typename Inside>
  void paint(const Inside& inside, const Rgb& c) {
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x)
        if (inside(static_cast<double>(y) + 0.5, static_cast<double>(x) + 0.5)) put(static_cast<double>(y), static_cast<double>(x), c);
  }
};

std::uint64_t name_key(const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : name) h = (h ^ ch) * 1099511628211ULL;
  return h;
}

}  // namespace

Tensor render(const Persona& who, OcclusionClass occlusion, std::uint64_t variant, std::size_t side) {
  Rng rng(Rng::mix(0x5eedf00dULL, name_key(who.name)), variant);
  const double s = static_cast<double>(side) / 32.0;
  const double dy = rng.uniform(-1.5, 1.5) * s, dx = rng.uniform(-1.5, 1.5) * s;
  const double light = rng.uniform(-0.06, 0.06);
  const double cy = 16.0 * s + dy, cx = 16.0 * s + dx;
  const double ry = 11.0 * s, rx = 8.5 * s;

  Canvas cv{Tensor({side, side, 3}), side};
  cv.paint([](double, double) { return true; }, who.background);
  auto face = [&](double y, double x) {
    const double u = (y - cy) / ry, v = (x - cx) / rx;
    return u * u + v * v <= 1.0;
  };
  cv.paint(face, who.skin);
  cv.paint([&](double y, double x) { return face(y, x) && y < cy - 0.55 * ry; }, who.hair);
  const Rgb eye = {0.05, 0.05, 0.08};
  for (double side_x : {-3.5, 3.5}) {
    cv.paint([&](double y, double x) { return std::hypot(y - (cy - 2.5 * s), x - (cx + side_x * s)) < 1.3 * s; }, eye);
  }

  switch (occlusion) {
    case OcclusionClass::Face:
      cv.paint([&](double y, double x) { return std::abs(y - (cy + 5.5 * s)) < 0.8 * s && std::abs(x - cx) < 3.5 * s; },
               {0.70, 0.15, 0.20});
      break;
    case OcclusionClass::MedicalMask: {
      const Rgb mask = {0.70, 0.88, 0.95};
      cv.paint([&](double y, double x) { return y > cy + 0.5 * s && y < cy + 9.0 * s && std::abs(x - cx) < 7.5 * s; }, mask);
      cv.paint([&](double y, double x) { return std::abs(y - (cy + 1.5 * s)) < 0.5 * s && std::abs(x - cx) < 10.0 * s; },
               {0.95, 0.95, 0.95});
      break;
    }
    case OcclusionClass::Scarf: {
      const Rgb a = {0.75, 0.10, 0.10}, b = {0.95, 0.85, 0.30};
      cv.paint([&](double y, double x) {
        return y > cy + 3.0 * s && static_cast<int>(std::floor((x - cx + y) / (3.0 * s))) % 2 == 0;
      }, a);
      cv.paint([&](double y, double x) {
        return y > cy + 3.0 * s && static_cast<int>(std::floor((x - cx + y) / (3.0 * s))) % 2 != 0;
      }, b);
      break;
    }
    case OcclusionClass::Hand: {
      const Rgb palm = {0.93, 0.70, 0.55}, crease = {0.60, 0.40, 0.30};
      auto hand = [&](double y, double x) {
        const double u = (y - (cy + 5.0 * s)) / (5.0 * s), v = (x - (cx + 1.0 * s)) / (8.0 * s);
        return u * u + v * v <= 1.0;
      };
      cv.paint(hand, palm);
      for (double off : {-3.0, 0.0, 3.0}) {
        cv.paint([&](double y, double x) { return hand(y, x) && std::abs(x - (cx + (off + 1.0) * s)) < 0.45 * s; }, crease);
      }
      break;
    }
    case OcclusionClass::Object:
      cv.paint([&](double y, double x) {
        return y > cy - 4.0 * s && y < cy + 10.0 * s && x > cx + 1.0 * s && x < cx + 9.0 * s;
      }, {0.12, 0.12, 0.14});
      cv.paint([&](double y, double x) {
        return y > cy - 3.0 * s && y < cy + 8.0 * s && x > cx + 2.0 * s && x < cx + 8.0 * s;
      }, {0.35, 0.45, 0.60});
      break;
  }

  for (auto& v : cv.img.values()) {
    const double noisy = v + light + rng.uniform(-0.03, 0.03);
    v = std::round(std::clamp(noisy, 0.0, 1.0) * 255.0) / 255.0;
  }
  return cv.img;
}

std::size_t write_tree(const fs::path& root, const TreeSpec& spec) {
  std::size_t written = 0;
  for (const auto& who : spec.personas) {
    for (auto c : kAllOcclusionClasses) {
      const fs::path dir = root / who.name / std::string(folder_name(c));
      fs::create_directories(dir);
      for (std::size_t i = 0; i < spec.per_class; ++i) {
        const std::uint64_t variant = spec.first_variant + 100 * static_cast<std::uint64_t>(class_code(c)) + i;
        char name[32];
        std::snprintf(name, sizeof(name), "img_%02zu.ppm", i);
        data::write_ppm(dir / name, render(who, c, variant, spec.side));
        ++written;
      }
    }
  }
  return written;
}

TreeSpec train_spec() { return {enrolled_personas(), 5, 0, 32}; }
TreeSpec probe_spec() { return {enrolled_personas(), 2, 1000, 32}; }
TreeSpec impostor_spec() { return {impostor_personas(), 2, 0, 32}; }

void write_fixture(const fs::path& root) {
  write_tree(root / "train", train_spec());
  write_tree(root / "probe", probe_spec());
  write_tree(root / "impostor", impostor_spec());
}

fs::path fixture_root() { return fs::path(OCCNET_FIXTURE_DIR); }

}  // namespace occnet::synthetic
