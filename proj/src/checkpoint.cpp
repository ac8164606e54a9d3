#include "occnet/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace occnet {
namespace {

constexpr char kMagic[] = "OCCKPT\n";

std::string read_header_line(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line) || in.eof()) {
    throw CheckpointError(CheckpointErrorKind::truncated, std::string("checkpoint truncated: missing ") + what);
  }
  return line;
}

std::size_t header_value(const std::string& line, const std::string& key) {
  const std::string prefix = key + " ";
  if (line.rfind(prefix, 0) != 0) {
    throw CheckpointError(CheckpointErrorKind::malformed, "checkpoint: expected '" + key + "' line, got '" + line + "'");
  }
  try {
    return std::stoull(line.substr(prefix.size()));
  } catch (const std::exception&) {
    throw CheckpointError(CheckpointErrorKind::malformed, "checkpoint: bad value on '" + key + "' line");
  }
}

std::string read_block(std::istream& in, std::size_t n, const char* what) {
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw CheckpointError(CheckpointErrorKind::truncated, std::string("checkpoint truncated inside ") + what);
  }
  const int end = in.get();
  if (end == std::char_traits<char>::eof()) {
    throw CheckpointError(CheckpointErrorKind::truncated, std::string("checkpoint truncated inside ") + what);
  }
  if (end != '\n') throw CheckpointError(CheckpointErrorKind::malformed, std::string("checkpoint: bad ") + what + " terminator");
  return s;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  std::ostringstream out(std::ios::binary);
  const std::string cfg = model.config.to_text();
  out << kMagic << "version " << kCheckpointVersion << "\n";
  out << "config " << cfg.size() << "\n" << cfg << "\n";
  out << "step " << model.step << "\n";
  out << "rng " << model.rng_state.size() << "\n" << model.rng_state << "\n";
  std::size_t count = 0;
  model.for_each([&](const std::string&, const Tensor&, ParamRole) { ++count; });
  out << "tensors " << count << "\n";
  model.for_each([&](const std::string& name, const Tensor& t, ParamRole) {
    out << name << "\n";
    write_tensor(out, t);
  });

  // Write to a sibling file first so a failed save never clobbers a good checkpoint.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot open " + tmp + " for writing");
    const std::string bytes = out.str();
    file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!file) throw IoError("failed writing checkpoint " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot move checkpoint into place at " + path);
}

Model load_checkpoint(const std::string& path, const std::optional<NetworkConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);

  char magic[sizeof(kMagic) - 1] = {};
  in.read(magic, sizeof(magic));
  if (static_cast<std::size_t>(in.gcount()) != sizeof(magic)) {
    if (in.gcount() > 0 && std::memcmp(magic, kMagic, static_cast<std::size_t>(in.gcount())) != 0) {
      throw CheckpointError(CheckpointErrorKind::bad_magic, "bad magic: " + path + " is not a checkpoint");
    }
    throw CheckpointError(CheckpointErrorKind::truncated, "checkpoint truncated: missing magic");
  }
  if (std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw CheckpointError(CheckpointErrorKind::bad_magic, "bad magic: " + path + " is not a checkpoint");
  }
  const auto version = header_value(read_header_line(in, "version"), "version");
  if (version != static_cast<std::size_t>(kCheckpointVersion)) {
    throw CheckpointError(CheckpointErrorKind::version_mismatch,
                          "checkpoint version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  }
  const auto cfg_len = header_value(read_header_line(in, "config"), "config");
  NetworkConfig cfg;
  try {
    cfg = NetworkConfig::from_text(read_block(in, cfg_len, "config"));
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(CheckpointErrorKind::malformed, std::string("checkpoint config: ") + e.what());
  }

  Model model = build_network(cfg, 0);
  model.step = header_value(read_header_line(in, "step"), "step");
  const auto rng_len = header_value(read_header_line(in, "rng"), "rng");
  model.rng_state = read_block(in, rng_len, "rng");

  std::vector<std::pair<std::string, Shape>> reference;
  if (expected) {
    build_network(*expected, 0).for_each(
        [&](const std::string& name, const Tensor& t, ParamRole) { reference.emplace_back(name, t.shape()); });
  }

  const auto count = header_value(read_header_line(in, "tensors"), "tensors");
  std::vector<std::pair<std::string, Tensor*>> slots;
  model.for_each([&](const std::string& name, Tensor& t, ParamRole) { slots.emplace_back(name, &t); });
  if (count != slots.size() && reference.empty()) {
    throw CheckpointError(CheckpointErrorKind::malformed, "checkpoint holds " + std::to_string(count) +
                                                              " tensors but its config needs " +
                                                              std::to_string(slots.size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = read_header_line(in, "tensor name");
    Tensor t;
    try {
      t = read_tensor(in);
    } catch (const IoError& e) {
      const bool truncated = std::string(e.what()).find("truncated") != std::string::npos;
      throw CheckpointError(truncated ? CheckpointErrorKind::truncated : CheckpointErrorKind::malformed,
                            "checkpoint tensor " + name + ": " + e.what(), name);
    }
    if (!reference.empty()) {
      if (i >= reference.size() || reference[i].first != name || reference[i].second != t.shape()) {
        const std::string want = i < reference.size() ? reference[i].first + " " + shape_to_string(reference[i].second)
                                                      : std::string("nothing");
        throw CheckpointError(CheckpointErrorKind::shape_mismatch,
                              "shape mismatch at tensor " + name + ": checkpoint has " + shape_to_string(t.shape()) +
                                  ", expected " + want,
                              name);
      }
    }
    if (i >= slots.size() || slots[i].first != name || slots[i].second->shape() != t.shape()) {
      throw CheckpointError(CheckpointErrorKind::shape_mismatch,
                            "shape mismatch at tensor " + name + ": " + shape_to_string(t.shape()) +
                                " does not fit the stored config",
                            name);
    }
    *slots[i].second = std::move(t);
  }
  if (!reference.empty() && count != reference.size()) {
    throw CheckpointError(CheckpointErrorKind::shape_mismatch, "checkpoint tensor count differs from expected config");
  }
  return model;
}

}  // namespace occnet
