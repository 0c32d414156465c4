// bapose: inference, training, evaluation and self-checks from the command
// line. Exit codes: 0 success, 1 usage error, 2 data error, 3 check failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bapose/checks/criteria.h"
#include "bapose/checks/gradcheck.h"
#include "bapose/config.h"
#include "bapose/dataio.h"
#include "bapose/decode.h"
#include "bapose/error.h"
#include "bapose/metrics.h"
#include "bapose/synthetic.h"
#include "bapose/train.h"

namespace fs = std::filesystem;
using namespace bapose;

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kCheck = 3;

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

// ---- infer ----------------------------------------------------------------

struct InferArgs {
  std::string config, checkpoint, image, out_poses, out_overlay;
  int image_id = 1;
  double overlay_min_score = 0.0;
};

int run_infer(const InferArgs& a) {
  const RunConfig cfg = load_run_config(a.config);
  cfg.require_oks();
  const Checkpoint ck = load_checkpoint(read_file(a.checkpoint), cfg.model);
  const Tensor image = read_image_ppm(read_file(a.image));
  const Tensor input = pad_image(image, cfg.model.pyramid.input_multiple());
  const DWaspOutput<float> out = model_forward(input, ck.model, cfg.model);
  std::vector<ImageResult> results;
  std::vector<PoseInstance> poses;
  for (const auto& p : decode_poses(out, cfg.decode, cfg.eval.oks,
                                    cfg.model.dwasp.offset_mode)) {
    poses.push_back(instance_to_image(p, cfg.model.pyramid.base_stride));
    results.push_back({a.image_id, poses.back()});
  }
  write_file(a.out_poses, serialize_results(results));
  if (!a.out_overlay.empty()) {
    write_file(a.out_overlay,
               write_image_ppm(draw_overlay(image, poses, cfg.skeleton,
                                            a.overlay_min_score)));
  }
  std::printf("%zu instances written to %s\n", results.size(),
              a.out_poses.c_str());
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config, dataset, images, out, resume;
  int epochs = 0;  // 0 keeps train.epochs from the config
};

int run_train(const TrainArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  if (a.epochs > 0) cfg.train.epochs = a.epochs;
  const Dataset d = parse_annotations(read_file(a.dataset));
  if (d.keypoints() != cfg.model.dwasp.keypoints) {
    throw ConfigError("dataset has " + std::to_string(d.keypoints()) +
                      " keypoints but the config expects " +
                      std::to_string(cfg.model.dwasp.keypoints));
  }
  const auto data =
      load_training_set(d, a.images, cfg.model.pyramid.input_multiple());
  fs::create_directories(a.out);

  TrainState state;
  if (a.resume.empty()) {
    state.model = init_model<float>(cfg.model, cfg.train.seed);
  } else {
    Checkpoint ck = load_checkpoint(read_file(a.resume), cfg.model);
    state = {std::move(ck.model), std::move(ck.optim), ck.epoch};
  }
  const fs::path log_path = fs::path(a.out) / "train.log";
  std::ofstream log(log_path, a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw FormatError("cannot write " + log_path.string());

  auto save = [&](const TrainState& st, const std::string& name) {
    write_file((fs::path(a.out) / name).string(),
               save_checkpoint({st.model, st.optim, st.epoch}, cfg.model));
  };
  const int every = cfg.train.checkpoint_every;
  train_loop(data, state, cfg.model, cfg.train,
             [&](const EpochLog& e, const TrainState& st) {
               const std::string line = format_epoch_log(e);
               std::printf("%s\n", line.c_str());
               std::fflush(stdout);
               log << line << "\n" << std::flush;
               if (every > 0 && e.epoch % every == 0) {
                 char name[32];
                 std::snprintf(name, sizeof name, "epoch_%04d.ckpt", e.epoch);
                 save(st, name);
               }
             });
  save(state, "final.ckpt");
  return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string config, dataset, results;
};

int run_eval(const EvalArgs& a) {
  const RunConfig cfg = load_run_config(a.config);
  cfg.require_oks();
  const Dataset d = parse_annotations(read_file(a.dataset));
  if (cfg.eval.oks.falloff.size() != static_cast<std::size_t>(d.keypoints())) {
    throw ConfigError("oks.falloff has " +
                      std::to_string(cfg.eval.oks.falloff.size()) +
                      " constants but the dataset has " +
                      std::to_string(d.keypoints()) + " keypoints");
  }
  const auto results = parse_results(read_file(a.results), d.keypoints());
  const EvalResult r = evaluate(join_results(d, results), cfg.eval);
  std::printf("%s", format_eval_table(r, cfg.eval.style).c_str());
  std::printf("%d ground truths, %d detections (%s style)\n", r.gt_count,
              r.pred_count, to_string(cfg.eval.style).c_str());
  return 0;
}

// ---- gradcheck ------------------------------------------------------------

struct GradArgs {
  std::string config;
  bool skip_model = false;
  std::uint64_t seed = 1;
};

int run_gradcheck(const GradArgs& a) {
  const RunConfig cfg = config_or_default(a.config);
  check::GradCheckOptions opts;
  opts.seed = a.seed;
  auto checks = check::layer_gradient_checks(opts);
  if (!a.skip_model) {
    // Toy widths, keypoint count and offset layout from the config.
    ModelConfig mc = check::gradcheck_model_config(
        a.config.empty() ? 3 : std::min(cfg.model.dwasp.keypoints, 6));
    mc.dwasp.offset_mode = cfg.model.dwasp.offset_mode;
    mc.dwasp.center_map = cfg.model.dwasp.center_map;
    const auto m = check::model_gradient_checks(mc, opts);
    checks.insert(checks.end(), m.begin(), m.end());
  }
  int failed = 0;
  for (const auto& c : checks) {
    failed += !c.passed;
    std::printf("%s %-48s rel err %.3g  kinks %zu/%zu\n",
                c.passed ? "PASS" : "FAIL", c.name.c_str(), c.error, c.kinks,
                c.coords);
  }
  std::printf("%zu checks, %d failed (tolerance %g, step %g)\n", checks.size(),
              failed, opts.tolerance, opts.step);
  return failed ? kCheck : 0;
}

// ---- selftest -------------------------------------------------------------

int run_selftest(const std::string& config) {
  check::ToyProblem toy = check::toy_problem();
  if (!config.empty()) {
    const RunConfig cfg = load_run_config(config);
    toy.config.model = cfg.model;
    toy.config.train = cfg.train;
    toy.people.keypoints = cfg.model.dwasp.keypoints;
    toy.config.eval.oks.falloff.assign(toy.people.keypoints, 0.1);
  }
  toy.images = 2;
  const std::vector<check::CriterionResult> results = {
      check::conv_oracle(),
      check::adaptive_degeneracy(),
      check::render_decode_round_trip(),
      check::oks_closed_forms(),
      check::evaluator_equivalence(),
      check::lr_schedule(),
      check::augmentation(10000),
      check::determinism(toy, 1),
      check::format_round_trips(),
  };
  int failed = 0;
  for (const auto& r : results) {
    failed += !r.passed;
    std::printf("%s\n", check::format_result(r).c_str());
  }
  return failed ? kCheck : 0;
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  int count = 8;
  std::uint64_t seed = 1;
  PeopleParams people;
};

int run_synth(const SynthArgs& a) {
  fs::create_directories(a.out);
  Rng rng(a.seed);
  const auto samples = synthetic_dataset(rng, a.count, a.people);
  Dataset d;
  for (int k = 0; k < a.people.keypoints; ++k) {
    d.keypoint_names.push_back("joint" + std::to_string(k));
  }
  d.skeleton = synthetic_skeleton(a.people.keypoints);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "image_%04zu.ppm", i + 1);
    d.images.push_back({static_cast<int>(i) + 1, name, a.people.height,
                        a.people.width, {}});
    for (const auto& p : samples[i].people) d.annotations.push_back(p);
    write_file((fs::path(a.out) / name).string(),
               write_image_ppm(samples[i].image));
  }
  write_file((fs::path(a.out) / "annotations.json").string(),
             serialize_annotations(d));
  std::printf("%d images, %zu people written to %s\n", a.count,
              d.annotations.size(), a.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bottom-up multi-person pose estimation with a waterfall "
               "atrous module"};
  app.require_subcommand(1);

  InferArgs infer;
  auto* ci = app.add_subcommand("infer", "Detect poses in one image");
  ci->add_option("--config", infer.config, "Run configuration")->required();
  ci->add_option("--checkpoint", infer.checkpoint, "Trained weights")->required();
  ci->add_option("--image", infer.image, "Input image (binary PPM)")->required();
  ci->add_option("--out-poses", infer.out_poses, "Results file to write")->required();
  ci->add_option("--out-overlay", infer.out_overlay, "Overlay image to write (PPM)");
  ci->add_option("--image-id", infer.image_id, "image_id stored in the results");
  ci->add_option("--overlay-min-score", infer.overlay_min_score,
                 "Only draw instances scoring at least this");

  TrainArgs train;
  auto* ct = app.add_subcommand("train", "Train a model on an annotated image set");
  ct->add_option("--config", train.config, "Run configuration")->required();
  ct->add_option("--dataset", train.dataset, "Annotation file")->required();
  ct->add_option("--images", train.images, "Directory holding the images")->required();
  ct->add_option("--out", train.out, "Output directory for logs and checkpoints")
      ->required();
  ct->add_option("--resume", train.resume, "Continue from this checkpoint");
  ct->add_option("--epochs", train.epochs, "Override train.epochs")
      ->check(CLI::PositiveNumber);

  EvalArgs ev;
  auto* ce = app.add_subcommand("eval", "Score a results file against annotations");
  ce->add_option("--config", ev.config, "Run configuration")->required();
  ce->add_option("--dataset", ev.dataset, "Annotation file")->required();
  ce->add_option("--results", ev.results, "Results file")->required();

  GradArgs grad;
  auto* cg = app.add_subcommand("gradcheck",
                                "Compare every analytic gradient with central "
                                "differences (64-bit, toy widths)");
  cg->add_option("--config", grad.config,
                 "Offset layout, centre-map flag and keypoint count (at most "
                 "6) for the full-model check");
  cg->add_flag("--skip-model", grad.skip_model, "Layer suites only");
  cg->add_option("--seed", grad.seed, "Seed for the random inputs");

  std::string self_config;
  auto* cs = app.add_subcommand("selftest",
                                "Run the oracle and property suites of every module");
  cs->add_option("--config", self_config,
                 "Model and training settings for the determinism check");

  SynthArgs synth;
  auto* cy = app.add_subcommand("synth", "Write a synthetic annotated image set");
  cy->add_option("--out", synth.out, "Output directory")->required();
  cy->add_option("--count", synth.count, "Number of images")->check(CLI::PositiveNumber);
  cy->add_option("--seed", synth.seed, "Generator seed");
  cy->add_option("--keypoints", synth.people.keypoints, "Joints per person")
      ->check(CLI::Range(1, 64));
  cy->add_option("--min-people", synth.people.min_people)->check(CLI::Range(0, 16));
  cy->add_option("--max-people", synth.people.max_people)->check(CLI::Range(0, 16));
  cy->add_option("--size", synth.people.width, "Canvas width and height")
      ->check(CLI::Range(16, 4096));
  cy->add_option("--min-radius", synth.people.min_radius);
  cy->add_option("--max-radius", synth.people.max_radius);
  cy->add_option("--min-center-distance", synth.people.min_center_distance);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*ci) return run_infer(infer);
    if (*ct) return run_train(train);
    if (*ce) return run_eval(ev);
    if (*cg) return run_gradcheck(grad);
    if (*cs) return run_selftest(self_config);
    if (*cy) {
      synth.people.height = synth.people.width;
      if (synth.people.min_people > synth.people.max_people) {
        std::fprintf(stderr, "error: --min-people exceeds --max-people\n");
        return kUsage;
      }
      return run_synth(synth);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
  return kUsage;
}
