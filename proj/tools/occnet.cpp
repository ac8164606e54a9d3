#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "occnet/checkpoint.hpp"
#include "occnet/data.hpp"
#include "occnet/gru.hpp"
#include "occnet/kernels.hpp"
#include "occnet/metrics.hpp"
#include "occnet/network.hpp"
#include "occnet/reid.hpp"
#include "occnet/rng.hpp"
#include "occnet/training.hpp"

namespace fs = std::filesystem;
using namespace occnet;

namespace {

constexpr int kDomainError = 1;
constexpr int kUsageError = 2;

struct Options {
  std::string data, config, model, gallery, image, in, log, clock, profile = "toy", report = "text";
  std::string person, variant = "standard";
  std::uint64_t seed = 0;
  double threshold = reid::kDefaultThreshold;
  std::size_t count = 1;
  std::uint64_t h = 224, w = 224, din = 3, dout = 32, k = 3;
  std::size_t cells = 1;
};

reid::Clock pick_clock(const Options& o) {
  return o.clock.empty() ? reid::system_clock() : reid::fixed_clock(reid::parse_local_time(o.clock));
}

std::size_t input_side(const Model& m) { return m.config.input_height; }

int cmd_train(const Options& o) {
  TrainConfig tc = o.config.empty() ? TrainConfig{} : TrainConfig::load(o.config);
  tc.seed = o.seed;
  tc.validate();
  const auto cfg = NetworkConfig::from_profile(o.profile);
  data::LoadReport report;
  const auto images = data::load_dataset(o.data, &report, cfg.input_height);
  std::cerr << "loaded " << images.size() << " images from " << report.counts.size() << " people";
  if (!report.skipped.empty()) std::cerr << " (" << report.skipped.size() << " skipped)";
  std::cerr << "\n";

  Model model = build_network(cfg, o.seed);
  const auto examples = make_examples(cfg, images);
  std::printf("epoch,learning_rate,batch_loss,train_loss,train_accuracy\n");
  train(model, examples, tc, {}, [](const EpochStats& s) {
    std::printf("%zu,%.6g,%.6f,%.6f,%.4f\n", s.epoch, s.learning_rate, s.batch_loss, s.train_loss, s.train_accuracy);
    std::fflush(stdout);
  });
  save_checkpoint(model, o.model);
  std::cerr << "saved " << o.model << "\n";
  return 0;
}

int cmd_eval(const Options& o) {
  const Model model = load_checkpoint(o.model);
  const auto images = data::load_dataset(o.data, nullptr, input_side(model));
  const auto examples = make_examples(model.config, images);
  const auto result = evaluate(model, examples);
  std::vector<OcclusionClass> preds, truths;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    preds.push_back(class_from_code(result.predictions[i]));
    truths.push_back(class_from_code(examples[i].label));
  }
  const auto counts = metrics::tally(preds, truths);
  std::vector<metrics::MetricReport> rows;
  for (const auto& c : counts) rows.push_back(metrics::metrics(c));
  const auto format = o.report == "csv" ? metrics::ReportFormat::csv : metrics::ReportFormat::text;
  if (o.variant == "detailed") {
    std::cout << metrics::detailed_report(rows, format);
  } else {
    std::cout << metrics::report_table(rows, format,
                                       o.variant == "literal" ? metrics::Variant::literal : metrics::Variant::standard);
  }
  std::cerr << "overall accuracy " << result.accuracy << " on " << examples.size() << " images\n";
  return 0;
}

int cmd_classify(const Options& o) {
  const Model model = load_checkpoint(o.model);
  const auto pred = classify(model, data::read_ppm(o.image));
  std::printf("class=%s\n", std::string(display_name(pred.occlusion)).c_str());
  for (auto c : kAllOcclusionClasses) {
    std::printf("p[%s]=%.6f\n", std::string(display_name(c)).c_str(),
                pred.probabilities[static_cast<std::size_t>(class_code(c))]);
  }
  return 0;
}

int cmd_enroll(const Options& o) {
  const Model model = load_checkpoint(o.model);
  reid::Gallery gallery = fs::exists(o.gallery) ? reid::Gallery::load(o.gallery) : reid::Gallery{};
  const auto images = data::load_dataset(o.data, nullptr, input_side(model));
  std::map<std::string, std::vector<data::LabeledImage>> by_person;
  for (const auto& img : images) {
    if (o.person.empty() || img.person == o.person) by_person[img.person].push_back(img);
  }
  if (by_person.empty()) throw ValueError("--person " + o.person + " has no images under " + o.data);
  const auto clock = pick_clock(o);
  for (const auto& [person, imgs] : by_person) {
    reid::enroll(gallery, person, imgs, model, clock);
    std::printf("enrolled %s images=%zu\n", person.c_str(), imgs.size());
  }
  gallery.save(o.gallery);
  return 0;
}

int cmd_identify(const Options& o) {
  const Model model = load_checkpoint(o.model);
  const auto gallery = reid::Gallery::load(o.gallery);
  const Tensor image = data::read_ppm(o.image);
  const auto s1 = reid::classify_stage(gallery, image, model);
  const auto s2 = reid::identify(gallery, image, model);
  const auto result = reid::fuse_and_gate(s1, s2, o.threshold);
  std::printf("person=%s score=%.4f class=%s stage1=%s gate=%s\n", s2.person.c_str(), s2.score,
              std::string(display_name(result.occlusion)).c_str(), s1.person.c_str(), result.gate ? "pass" : "fail");
  if (result.gate && !o.log.empty()) {
    const auto record = reid::append_log(o.log, result, pick_clock(o));
    std::printf("logged %s\n", reid::to_csv_line(record).c_str());
  }
  return 0;
}

int cmd_watch(const Options& o) {
  const Model model = load_checkpoint(o.model);
  const auto gallery = reid::Gallery::load(o.gallery);
  reid::BatchOptions opts;
  opts.threshold = o.threshold;
  opts.clock = pick_clock(o);
  const auto summary = reid::run_batch(model, gallery, o.in, o.log, opts);
  for (const auto& item : summary.items) {
    if (item.result) {
      std::printf("%s person=%s score=%.4f class=%s gate=%s\n", item.source.filename().string().c_str(),
                  item.result->identifier_person.c_str(), item.result->score,
                  std::string(display_name(item.result->occlusion)).c_str(), item.result->gate ? "pass" : "fail");
    } else {
      std::printf("%s error=%s\n", item.source.filename().string().c_str(), item.error.c_str());
    }
  }
  std::printf("processed=%zu passed=%zu failed_gate=%zu errored=%zu\n", summary.processed, summary.passed,
              summary.failed_gate, summary.errored);
  return 0;
}

int cmd_augment(const Options& o) {
  if (!fs::is_directory(o.data)) throw IoError("--data " + o.data + " is not a directory");
  std::vector<fs::path> sources;
  for (const auto& e : fs::recursive_directory_iterator(o.data)) {
    if (!e.is_regular_file() || e.path().extension() != ".ppm") continue;
    if (e.path().stem().string().find("_aug") != std::string::npos) continue;
    sources.push_back(e.path());
  }
  std::sort(sources.begin(), sources.end());
  data::AugmentSpec spec;
  spec.seed = o.seed;
  std::size_t written = 0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    data::LabeledImage img{data::read_ppm(sources[i]), OcclusionClass::Face, {}, sources[i]};
    for (std::size_t d = 0; d < o.count; ++d) {
      // Draw indices are unique per (file, variant) so no two outputs share a stream.
      const auto out = data::augment(img, spec, i * o.count + d);
      const fs::path dst = sources[i].parent_path() / (sources[i].stem().string() + "_aug" + std::to_string(d) + ".ppm");
      data::write_ppm(dst, out.pixels);
      ++written;
    }
  }
  std::printf("sources=%zu written=%zu\n", sources.size(), written);
  return 0;
}

int cmd_cost(const Options& o) {
  const kernels::ConvCostInput in{o.h, o.w, o.din, o.dout, o.k};
  std::printf("cost=%llu\n", static_cast<unsigned long long>(kernels::conv_cost(in)));
  std::printf("D=%.6f\n", kernels::depletion_ratio(in));
  return 0;
}

// Central differences against gru_backward on random cells.
int cmd_gradcheck(const Options& o) {
  constexpr double kStep = 1e-5, kTolerance = 1e-5;
  // Below this magnitude the error is measured in absolute terms.
  constexpr double kScaleFloor = 1e-4;
  Rng rng(o.seed, 0);
  std::map<std::string, double> worst;
  std::vector<std::string> order;
  for (std::size_t cell = 0; cell < o.cells; ++cell) {
    const std::size_t nx = 1 + rng.below(4), nh = 1 + rng.below(8), ny = 2 + rng.below(4), steps = 1 + rng.below(5);
    auto params = gru::GruCellParams::initialize(nx, nh, ny, rng);
    Tensor h0({nh});
    for (auto& v : h0.values()) v = rng.uniform(-0.5, 0.5);
    std::vector<Tensor> xs, targets;
    for (std::size_t t = 0; t < steps; ++t) {
      Tensor x({nx});
      for (auto& v : x.values()) v = rng.uniform(-1.0, 1.0);
      xs.push_back(x);
      Tensor y({ny});
      y[rng.below(ny)] = 1.0;
      targets.push_back(y);
    }
    const auto fwd = gru::gru_forward(params, h0, xs);
    auto grads = gru::gru_backward(params, fwd.trace, targets);

    std::vector<std::pair<std::string, Tensor*>> analytic;
    grads.params.for_each([&](std::string_view name, Tensor& t) { analytic.emplace_back(std::string(name), &t); });
    std::size_t idx = 0;
    params.for_each([&](std::string_view name_view, Tensor& p) {
      const std::string name(name_view);
      if (!worst.count(name)) order.push_back(name);
      double& w = worst[name];
      const Tensor& a = *analytic[idx++].second;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double saved = p[i];
        p[i] = saved + kStep;
        const double up = gru::sequence_loss(gru::gru_forward(params, h0, xs).trace, targets);
        p[i] = saved - kStep;
        const double down = gru::sequence_loss(gru::gru_forward(params, h0, xs).trace, targets);
        p[i] = saved;
        const double numeric = (up - down) / (2.0 * kStep);
        const double scale = std::max({std::abs(a[i]), std::abs(numeric), kScaleFloor});
        w = std::max(w, std::abs(a[i] - numeric) / scale);
      }
    });
  }
  double overall = 0.0;
  for (const auto& name : order) {
    std::printf("%-4s max_rel_err=%.3e\n", name.c_str(), worst[name]);
    overall = std::max(overall, worst[name]);
  }
  const bool pass = overall <= kTolerance;
  std::printf("%s max_rel_err=%.3e threshold=%.0e\n", pass ? "PASS" : "FAIL", overall, kTolerance);
  return pass ? 0 : kDomainError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Occlusion-aware face classification and re-identification"};
  app.require_subcommand(1);
  Options o;

  auto add_profile = [&](CLI::App* c) { c->add_option("--profile", o.profile, "Network profile")->check(CLI::IsMember({"full", "toy"})); };
  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Random seed"); };
  auto add_clock = [&](CLI::App* c) { c->add_option("--clock", o.clock, "Fixed local time 'YYYY-MM-DD HH:MM' for log stamps"); };

  auto* train = app.add_subcommand("train", "Train a classifier on a dataset tree and save a checkpoint");
  train->add_option("--data", o.data, "Dataset root <Person>/<ClassFolder>/*.ppm")->required();
  train->add_option("--config", o.config, "Training config file (key = value)");
  train->add_option("--model", o.model, "Output checkpoint path")->required();
  add_profile(train);
  add_seed(train);

  auto* eval = app.add_subcommand("eval", "Per-class accuracy, JSI and MCC on a dataset tree");
  eval->add_option("--data", o.data, "Dataset root")->required();
  eval->add_option("--model", o.model, "Checkpoint")->required();
  eval->add_option("--report", o.report, "Report format")->check(CLI::IsMember({"text", "csv"}));
  eval->add_option("--variant", o.variant, "JSI/MCC formulas")->check(CLI::IsMember({"standard", "literal", "detailed"}));

  auto* cls = app.add_subcommand("classify", "Occlusion class probabilities for one image");
  cls->add_option("--model", o.model, "Checkpoint")->required();
  cls->add_option("--image", o.image, "PPM image")->required();

  auto* enroll = app.add_subcommand("enroll", "Add people from a dataset tree to a gallery");
  enroll->add_option("--model", o.model, "Checkpoint")->required();
  enroll->add_option("--gallery", o.gallery, "Gallery file, created if missing")->required();
  enroll->add_option("--data", o.data, "Dataset root")->required();
  enroll->add_option("--person", o.person, "Only enroll this person");
  add_clock(enroll);

  auto* ident = app.add_subcommand("identify", "Run both stages on one image and apply the gate");
  ident->add_option("--model", o.model, "Checkpoint")->required();
  ident->add_option("--gallery", o.gallery, "Gallery file")->required();
  ident->add_option("--image", o.image, "PPM image")->required();
  ident->add_option("--threshold", o.threshold, "Gate threshold on the 0..100 score");
  ident->add_option("--log", o.log, "Append a record here when the gate passes");
  add_clock(ident);

  auto* watch = app.add_subcommand("watch", "Batch mode over a directory of face crops");
  watch->add_option("--model", o.model, "Checkpoint")->required();
  watch->add_option("--gallery", o.gallery, "Gallery file")->required();
  watch->add_option("--in", o.in, "Directory of PPM crops")->required();
  watch->add_option("--log", o.log, "Audit log CSV")->required();
  watch->add_option("--threshold", o.threshold, "Gate threshold on the 0..100 score");
  add_clock(watch);

  auto* aug = app.add_subcommand("augment", "Write augmented variants next to every PPM under --data");
  aug->add_option("--data", o.data, "Directory to augment in place")->required();
  aug->add_option("--count", o.count, "Variants per image");
  add_seed(aug);

  auto* cost = app.add_subcommand("cost", "Depthwise separable cost and depletion ratio");
  cost->set_help_flag("--help", "Print this help message and exit");
  cost->add_option("--h", o.h, "Input height")->required();
  cost->add_option("--w", o.w, "Input width")->required();
  cost->add_option("--din", o.din, "Input channels")->required();
  cost->add_option("--dout", o.dout, "Output channels")->required();
  cost->add_option("--k", o.k, "Kernel side")->required();

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of GRU backpropagation through time");
  grad->add_option("--cells", o.cells, "Random cells to check");
  add_seed(grad);

  if (argc < 2) {
    std::cerr << app.help();
    return kUsageError;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*cls) return cmd_classify(o);
    if (*enroll) return cmd_enroll(o);
    if (*ident) return cmd_identify(o);
    if (*watch) return cmd_watch(o);
    if (*aug) return cmd_augment(o);
    if (*cost) return cmd_cost(o);
    if (*grad) return cmd_gradcheck(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainError;
  }
  return kUsageError;
}
