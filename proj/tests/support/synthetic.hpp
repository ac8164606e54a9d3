#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "occnet/data.hpp"

namespace occnet::synthetic {

struct Persona {
  std::string name;
  std::array<double, 3> background;
  std::array<double, 3> skin;
  std::array<double, 3> hair;
};

// Enrolled people occupy the training tree; impostors never appear in it.
const std::vector<Persona>& enrolled_personas();
const std::vector<Persona>& impostor_personas();

// Procedural face of one persona with one occluder, jittered by `variant`.
Tensor render(const Persona& who, OcclusionClass occlusion, std::uint64_t variant, std::size_t side = 32);

struct TreeSpec {
  std::vector<Persona> personas;
  std::size_t per_class = 5;
  std::uint64_t first_variant = 0;
  std::size_t side = 32;
};

// Writes <root>/<Person>/<ClassFolder>/img_NN.ppm and returns the file count.
std::size_t write_tree(const std::filesystem::path& root, const TreeSpec& spec);

// Committed layout: train/ (4 people x 5 classes x 5), probe/ (held-out enrolled), impostor/.
TreeSpec train_spec();
TreeSpec probe_spec();
TreeSpec impostor_spec();
void write_fixture(const std::filesystem::path& root);

std::filesystem::path fixture_root();

}  // namespace occnet::synthetic
