// Command-line front end: synthetic data, tracker pretraining, perturbation
// training, attack runs, evaluation, reports and visual inspection.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "siamuap/attack.hpp"
#include "siamuap/eval.hpp"
#include "siamuap/io/artifact_io.hpp"
#include "siamuap/io/config.hpp"
#include "siamuap/io/report_io.hpp"
#include "siamuap/io/sequence_io.hpp"
#include "siamuap/pretrain.hpp"
#include "siamuap/train.hpp"

namespace fs = std::filesystem;
using namespace siamuap;
using io::json;

namespace {

// A failure the user can fix; reported without a stack of context.
struct UsageFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::string> color_mode;
  std::optional<int> patch_size;
  std::optional<std::string> fake_traj;
  std::optional<std::string> baseline;
  std::optional<std::string> ablate;
};

struct Paths {
  std::string data;
  std::string model;
  std::string perturbation;
  std::string pred;
  std::string fake_traj_file;
  std::string label;
  std::vector<std::string> runs;
};

struct Overrides {
  std::optional<int> sequences, frames, steps, batch;
  std::optional<long> iterations;
  bool reinit = false;
};

io::RunConfig resolve(const CommonFlags& f, const Overrides& o, const Paths& p) {
  io::RunConfig c = f.config.empty() ? io::RunConfig{} : io::load_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.color_mode) c.color_mode = *f.color_mode;
  if (f.patch_size) c.patch_size = *f.patch_size;
  if (f.fake_traj) c.fake_traj = *f.fake_traj;
  if (f.baseline) c.baseline = *f.baseline;
  if (f.ablate) c.ablate = *f.ablate;
  if (o.sequences) c.sequences = *o.sequences;
  if (o.frames) c.frames = *o.frames;
  if (o.steps) c.pretrain_steps = *o.steps;
  if (o.batch) {
    c.batch = *o.batch;
    c.pretrain_batch = *o.batch;
  }
  if (o.iterations) c.iterations = *o.iterations;
  if (o.reinit) c.reinit = true;
  if (!p.fake_traj_file.empty()) c.fake_traj_file = p.fake_traj_file;
  return c;
}

void write_manifest(const std::string& command, const io::RunConfig& c, const Paths& p, const fs::path& out) {
  fs::create_directories(out);
  json j;
  j["command"] = command;
  j["config"] = io::to_json(c);
  json inputs = json::object();
  if (!p.data.empty()) inputs["data"] = p.data;
  if (!p.model.empty()) inputs["model"] = p.model;
  if (!p.perturbation.empty()) inputs["perturbation"] = p.perturbation;
  if (!p.pred.empty()) inputs["pred"] = p.pred;
  if (!p.runs.empty()) inputs["runs"] = p.runs;
  j["inputs"] = inputs;
  io::write_json(j, out / "config.json");
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageFailure(std::string("missing required flag ") + flag);
}

int cmd_make_synthetic(const io::RunConfig& c, const fs::path& out) {
  io::write_synthetic_dataset(out, c.seed, c.sequences, io::synthetic_config(c));
  std::printf("wrote %d sequences to %s\n", c.sequences, out.string().c_str());
  return 0;
}

int cmd_pretrain(const io::RunConfig& c, const Paths& p, const fs::path& out) {
  require(p.data, "--data");
  const Dataset data = io::load_dataset(p.data);
  TinyTracker<float> model = build_reference_tracker<float>(c.seed);
  PretrainConfig pc = io::pretrain_config(c);
  std::ofstream log(out / "pretrain_log.csv");
  log << "step,loss\n";
  pc.log_every = 10;
  pc.on_log = [&](int step, double loss) {
    log << step << ',' << io::format_number(loss) << '\n';
    if (step % 100 == 0) std::printf("step %d loss %.4f\n", step, loss);
  };
  pretrain_reference_tracker(model, data, pc);
  io::save_model(model, out / "model", json{{"seed", c.seed}, {"steps", c.pretrain_steps}});
  std::printf("model %s saved to %s\n", io::tracker_fingerprint(model).c_str(), (out / "model").string().c_str());
  return 0;
}

std::string checkpoint_name(long iter) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "iter_%06ld", iter);
  return buf;
}

int cmd_train_attack(const io::RunConfig& c, const Paths& p, const fs::path& out) {
  require(p.data, "--data");
  require(p.model, "--model");
  const TrainConfig tc = io::train_config(c);
  const Dataset data = io::load_dataset(p.data);
  const TinyTracker<float> model = io::load_model<float>(p.model);
  const io::PerturbationMeta meta{io::tracker_fingerprint(model), c.seed};
  std::ofstream log(out / "train_log.csv");
  log << kTrainLogHeader << '\n';
  TrainHooks<float> hooks;
  hooks.keep_checkpoints = false;
  hooks.on_log = [&](const TrainLogRow& r) {
    log << to_csv(r) << '\n';
    if (r.iter == 1 || r.iter % 64 == 0) std::printf("iter %ld loss %.4f\n", r.iter, r.loss);
  };
  hooks.on_checkpoint = [&](const PerturbationPair<float>& pair) {
    io::save_perturbation(pair, out / "checkpoints" / checkpoint_name(pair.iteration), meta);
  };
  const auto result = train_perturbation(tc, model, data, hooks);
  io::save_perturbation(result.perturbation, out / "perturbation", meta);
  std::printf("perturbation saved to %s\n", (out / "perturbation").string().c_str());
  return 0;
}

FakeTrajectory make_fake(const io::RunConfig& c, const Sequence& seq) {
  if (c.fake_traj == "offset") {
    return gen_fake_traj_offset(seq.boxes, c.offset_gap, parse_offset_side(c.offset_side));
  }
  if (c.fake_traj == "direction") {
    // Starts beside the target and drifts away from it.
    const FakeTrajectory start = gen_fake_traj_offset({seq.boxes.front()}, c.offset_gap, parse_offset_side(c.offset_side));
    return gen_fake_traj_direction(start.boxes.front(), static_cast<int>(seq.length()),
                                   {c.direction_dx, c.direction_dy});
  }
  if (c.fake_traj == "file") {
    if (c.fake_traj_file.empty()) throw UsageFailure("--fake-traj file needs --fake-traj-file");
    fs::path path = c.fake_traj_file;
    if (fs::is_directory(path)) path /= seq.name + ".txt";
    FakeTrajectory f;
    f.mode = "file";
    f.parameters = path.string();
    f.boxes = io::read_trajectory(path);
    return f;
  }
  throw UsageFailure("unknown fake trajectory mode '" + c.fake_traj + "'");
}

int cmd_attack(const io::RunConfig& c, const Paths& p, const fs::path& out) {
  require(p.data, "--data");
  require(p.model, "--model");
  const Dataset data = io::load_dataset(p.data);
  const TinyTracker<float> model = io::load_model<float>(p.model);
  std::optional<PerturbationPair<float>> pair;
  if (!p.perturbation.empty()) {
    io::PerturbationMeta meta;
    pair = io::load_perturbation<float>(p.perturbation, &meta);
    if (!meta.tracker_fingerprint.empty() && meta.tracker_fingerprint != io::tracker_fingerprint(model)) {
      std::fprintf(stderr, "warning: perturbation was trained against tracker %s\n",
                   meta.tracker_fingerprint.c_str());
    }
  }
  fs::create_directories(out / "trajectories");
  fs::create_directories(out / "fake");
  fs::create_directories(out / "metrics");
  std::ofstream events(out / "events.log");
  AttackOptions opt;
  opt.track.window_weight = c.window_weight;
  for (const Sequence& seq : data) {
    const FakeTrajectory fake = make_fake(c, seq);
    detail::check_lengths(seq.length(), fake.boxes.size(), ("fake trajectory for " + seq.name).c_str());
    json extra = json::object();
    double ssim_sum = 0.0;
    int ssim_n = 0;
    opt.on_event = [&](const std::string& e) { events << seq.name << ": " << e << '\n'; };
    opt.on_patch = [&](std::size_t, const Image<float>& clean, const Image<float>& patched, const Box& fb) {
      const Box r{std::max(0.0, fb.x0), std::max(0.0, fb.y0), std::min<double>(clean.width(), fb.x1),
                  std::min<double>(clean.height(), fb.y1)};
      const PixelRect pr = pixel_rect(r);
      if (pr.x1 - pr.x0 < 11 || pr.y1 - pr.y0 < 11) return;
      ssim_sum += ssim(clean, patched, r);
      ++ssim_n;
    };
    std::vector<Box> boxes;
    if (pair) {
      const AttackRun run = run_attack(model, seq.frames, seq.boxes.front(), *pair, fake, opt);
      boxes = run.boxes;
      const Image<float> z = template_crop(model, seq.frames.front(), seq.boxes.front());
      if (pair->use_template && !pair->delta.empty()) {
        extra["ssim_template"] = ssim(z, apply_template_perturbation(*pair, z));
      }
      if (ssim_n > 0) extra["ssim_patch_region"] = ssim_sum / ssim_n;
      extra["unpatched_frames"] = run.unpatched_frames.size();
    } else {
      boxes = track_sequence(model, seq.frames, seq.boxes.front(), opt.track);
    }
    if (c.reinit) {
      ReinitOptions ro;
      ro.attack = opt;
      ro.attack.on_patch = nullptr;
      ro.skip_frames = c.reinit_skip;
      const ReinitRun rr =
          run_with_reinit(model, seq.frames, seq.boxes, pair ? &*pair : nullptr, &fake, ro);
      extra["robustness_failures"] = rr.failures;
      extra["robustness_frames"] = rr.status.size();
      extra["accuracy"] = accuracy(rr);
    }
    io::write_trajectory(boxes, out / "trajectories" / (seq.name + ".txt"));
    io::write_trajectory(fake.boxes, out / "fake" / (seq.name + ".txt"));
    io::write_json(extra, out / "metrics" / (seq.name + ".json"));
    std::printf("%s: AO real %.3f fake %.3f\n", seq.name.c_str(), ao(boxes, seq.boxes), ao(boxes, fake.boxes));
  }
  json info = json::object();
  if (pair) {
    info["iteration"] = pair->iteration;
    info["patch_size"] = pair->patch_size();
    info["kind"] = to_string(pair->kind);
    info["color_mode"] = to_string(pair->color_mode);
  }
  io::write_json(info, out / "attack.json");
  return 0;
}

int cmd_eval(const io::RunConfig& c, const Paths& p, const fs::path& out) {
  require(p.data, "--data");
  require(p.pred, "--pred");
  const fs::path pred = p.pred;
  RunRecord run;
  run.label = p.label.empty() ? pred.filename().string() : p.label;
  if (fs::exists(pred / "attack.json")) {
    const json info = io::read_json(pred / "attack.json");
    if (info.contains("iteration")) run.iteration = info.at("iteration").get<int>();
    if (info.contains("patch_size") && info.at("patch_size").get<int>() > 0) {
      run.patch_size = info.at("patch_size").get<int>();
    }
    for (const char* k : {"kind", "color_mode"}) {
      if (info.contains(k)) run.metadata[k] = info.at(k).get<std::string>();
    }
  }
  const fs::path data_root = p.data;
  std::vector<fs::path> dirs;
  if (io::is_sequence_dir(data_root)) {
    dirs.push_back(data_root);
  } else {
    for (const auto& e : fs::directory_iterator(data_root)) {
      if (e.is_directory() && io::is_sequence_dir(e.path())) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
  }
  for (const auto& d : dirs) {
    const std::string name = d.filename().string();
    const std::vector<Box> gt = io::read_trajectory(d / io::kGroundTruthFile);
    const std::vector<Box> boxes = io::read_trajectory(pred / "trajectories" / (name + ".txt"));
    std::optional<std::vector<Box>> fake;
    const bool attacked = run.iteration.has_value();
    if (attacked && fs::exists(pred / "fake" / (name + ".txt"))) {
      fake = io::read_trajectory(pred / "fake" / (name + ".txt"));
    }
    SequenceMetrics m = evaluate_sequence(name, boxes, gt, fake ? &*fake : nullptr, c.sr_threshold);
    const fs::path mp = pred / "metrics" / (name + ".json");
    if (fs::exists(mp)) {
      const json j = io::read_json(mp);
      if (j.contains("robustness_failures")) m.robustness_failures = j.at("robustness_failures").get<int>();
      if (j.contains("robustness_frames")) m.robustness_frames = j.at("robustness_frames").get<int>();
      if (j.contains("accuracy")) m.accuracy = j.at("accuracy").get<double>();
      if (j.contains("ssim_template")) m.ssim_template = j.at("ssim_template").get<double>();
      if (j.contains("ssim_patch_region")) m.ssim_patch_region = j.at("ssim_patch_region").get<double>();
    }
    run.sequences.push_back(m);
  }
  const EvalReport report = summarize(run);
  io::write_json(io::to_json(report), out / "eval.json");
  const std::string text = io::render_text({report});
  std::ofstream(out / "eval.txt") << text;
  std::fputs(text.c_str(), stdout);
  return 0;
}

int cmd_report(const Paths& p, const fs::path& out) {
  std::vector<RunRecord> runs;
  for (const auto& r : p.runs) runs.push_back(io::load_run_record(r));
  const io::ReportFiles files = io::write_report(runs, out);
  std::printf("report written to %s\n", files.text_path.string().c_str());
  return 0;
}

// Maps offsets in [-m, m] to [0, 255] around mid-gray.
Frame visualize_offsets(const Image<float>& v) {
  float m = 1e-6f;
  for (float x : v.data()) m = std::max(m, std::abs(x));
  Image<float> shown(v.height(), v.width(), v.channels() == 2 ? 3 : v.channels());
  for (int y = 0; y < v.height(); ++y) {
    for (int x = 0; x < v.width(); ++x) {
      for (int ch = 0; ch < shown.channels(); ++ch) {
        const float o = ch < v.channels() ? v(y, x, ch) : 0.0f;
        shown(y, x, ch) = 127.5f + 127.5f * o / m;
      }
    }
  }
  return to_frame(shown);
}

int cmd_inspect(const io::RunConfig& c, const Paths& p, const fs::path& out) {
  require(p.perturbation, "--perturbation");
  const auto pair = io::load_perturbation<float>(p.perturbation);
  if (!pair.delta.empty()) io::write_frame(visualize_offsets(pair.delta), out / "delta.png");
  if (!pair.patch.empty()) {
    const bool opaque = pair.kind == AttackKind::baseline_paste;
    io::write_frame(opaque ? to_frame(pair.patch) : visualize_offsets(pair.patch), out / "patch.png");
  }
  if (!pair.search.empty()) io::write_frame(visualize_offsets(pair.search), out / "search.png");
  if (!p.data.empty()) {
    const Dataset data = io::load_dataset(p.data);
    const TinyTracker<float> model =
        p.model.empty() ? build_reference_tracker<float>(c.seed) : io::load_model<float>(p.model);
    const Sequence& seq = data.front();
    const std::size_t i = std::min<std::size_t>(1, seq.length() - 1);
    const Image<float> z = template_crop(model, seq.frames.front(), seq.boxes.front());
    io::write_frame(to_frame(z), out / "template_clean.png");
    io::write_frame(to_frame(apply_template_perturbation(pair, z)), out / "template_perturbed.png");
    auto [x, spec] = search_crop(model, seq.frames[i], seq.boxes[i]);
    const FakeTrajectory fake = make_fake(c, seq);
    const Box fc = project_box(fake.boxes[i], spec, ProjectDirection::frame_to_crop);
    io::write_frame(to_frame(x), out / "search_clean.png");
    if (!search_needs_fake(pair) || center_inside(fc, x.width(), x.height())) {
      io::write_frame(to_frame(apply_search_perturbation(pair, x, fc)), out / "search_perturbed.png");
    }
  }
  std::printf("images written to %s\n", out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Universal perturbation attacks on a Siamese tracker"};
  app.require_subcommand(0, 1);
  app.fallthrough();
  CommonFlags f;
  Paths paths;
  Overrides o;
  app.add_option("--config", f.config, "flat JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "random seed");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--color-mode", f.color_mode, "rgb|ycbcr")->check(CLI::IsMember({"rgb", "ycbcr"}));
  app.add_option("--patch-size", f.patch_size, "16|32|64")->check(CLI::IsMember({16, 32, 64}));
  app.add_option("--fake-traj", f.fake_traj, "offset|direction|file")
      ->check(CLI::IsMember({"offset", "direction", "file"}));
  app.add_option("--baseline", f.baseline, "none|uap|paste")->check(CLI::IsMember({"none", "uap", "paste"}));
  app.add_option("--ablate", f.ablate, "template-only|search-only|loss:<cls|quality|reg>")
      ->check(CLI::IsMember({"none", "template-only", "search-only", "loss:cls", "loss:quality", "loss:reg"}));

  auto* make_synth = app.add_subcommand("make-synthetic", "write a synthetic tracking dataset");
  make_synth->add_option("--sequences", o.sequences, "number of sequences");
  make_synth->add_option("--frames", o.frames, "frames per sequence");

  auto* pretrain = app.add_subcommand("pretrain-tracker", "fit the tiny tracker on a dataset");
  pretrain->add_option("--data", paths.data, "dataset directory");
  pretrain->add_option("--steps", o.steps, "optimizer steps");
  pretrain->add_option("--batch", o.batch, "samples per step");

  auto* train = app.add_subcommand("train-attack", "train a universal perturbation");
  train->add_option("--data", paths.data, "dataset directory");
  train->add_option("--model", paths.model, "model directory");
  train->add_option("--iterations", o.iterations, "training iterations");
  train->add_option("--batch", o.batch, "samples per iteration");

  auto* attack = app.add_subcommand("attack", "track with a perturbation applied");
  attack->add_option("--data", paths.data, "dataset or sequence directory");
  attack->add_option("--model", paths.model, "model directory");
  attack->add_option("--perturbation", paths.perturbation, "perturbation directory (omit for a clean run)");
  attack->add_option("--fake-traj-file", paths.fake_traj_file, "trajectory file, or directory of <sequence>.txt");
  attack->add_flag("--reinit", o.reinit, "also run the reinitialization protocol");

  auto* eval = app.add_subcommand("eval", "score attack outputs");
  eval->add_option("--data", paths.data, "dataset directory with ground truth");
  eval->add_option("--pred", paths.pred, "output directory of an attack run");
  eval->add_option("--label", paths.label, "run label");

  auto* report = app.add_subcommand("report", "aggregate evaluations into tables and plots");
  report->add_option("--runs", paths.runs, "eval.json files")->required();

  auto* inspect = app.add_subcommand("inspect", "render perturbations as images");
  inspect->add_option("--perturbation", paths.perturbation, "perturbation directory");
  inspect->add_option("--data", paths.data, "dataset for example crops");
  inspect->add_option("--model", paths.model, "model directory");
  inspect->add_option("--fake-traj-file", paths.fake_traj_file, "trajectory file");

  if (argc <= 1) {
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 2;
  }
  CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  try {
    if (f.out.empty()) throw UsageFailure("missing required flag --out");
    const io::RunConfig cfg = resolve(f, o, paths);
    const fs::path out = f.out;
    write_manifest(name, cfg, paths, out);
    if (cmd == make_synth) return cmd_make_synthetic(cfg, out);
    if (cmd == pretrain) return cmd_pretrain(cfg, paths, out);
    if (cmd == train) return cmd_train_attack(cfg, paths, out);
    if (cmd == attack) return cmd_attack(cfg, paths, out);
    if (cmd == eval) return cmd_eval(cfg, paths, out);
    if (cmd == report) return cmd_report(paths, out);
    if (cmd == inspect) return cmd_inspect(cfg, paths, out);
  } catch (const UsageFailure& e) {
    std::cerr << name << ": " << e.what() << "\n\n" << cmd->help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << name << ": " << e.what() << '\n';
    return 1;
  }
  return 1;
}
