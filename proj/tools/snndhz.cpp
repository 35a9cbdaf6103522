// Batch front end: train, infer, energy, eval, params, convert.
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <thread>

#include "CLI11.hpp"
#include "snndhz/snndhz.hpp"

namespace fs = std::filesystem;
using namespace snndhz;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_exists(const std::string& path, const char* what) {
  if (!fs::exists(path))
    throw UsageError(std::string(what) + " does not exist: " + path);
}

int thread_budget() {
  const char* env = std::getenv("SNNDHZ_THREADS");
  if (!env) return 1;
  int n = std::atoi(env);
  return n < 1 ? 1 : n;
}

RunConfig resolve_config(const std::string& config_path) {
  if (config_path.empty()) return parse_run_config(default_config_text());
  require_exists(config_path, "config file");
  return load_run_config(config_path);
}

std::unique_ptr<DehazeModel> model_from_checkpoint(const std::string& ckpt_path, Checkpoint* out_ck) {
  require_exists(ckpt_path, "checkpoint");
  Checkpoint ck = read_checkpoint(ckpt_path);
  auto model = std::make_unique<DehazeModel>(checkpoint_model_config(ck));
  restore_model(*model, ck);
  if (out_ck) *out_ck = std::move(ck);
  return model;
}

void check_dims(const Tensor& img, const std::string& name) {
  int h = img.dim(1), w = img.dim(2);
  if (h % 8 != 0 || w % 8 != 0)
    throw UsageError("input " + name + " is " + std::to_string(w) + "x" + std::to_string(h) +
                     "; dims must be multiples of 8 - resize it (e.g. to " +
                     std::to_string(w / 8 * 8) + "x" + std::to_string(h / 8 * 8) + ") and retry");
}

std::vector<fs::path> collect_inputs(const std::string& input) {
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input))
      if (e.is_regular_file() && dataset_detail::is_image_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw UsageError("no image files in directory: " + input);
  } else {
    files.emplace_back(input);
  }
  return files;
}

std::string epoch_row(const EpochLog& log) {
  char buf[160];
  if (log.has_val)
    std::snprintf(buf, sizeof(buf), "epoch %d steps %d train_loss %.6f val_loss %.6f", log.epoch,
                  log.steps, log.train_loss, log.val_loss);
  else
    std::snprintf(buf, sizeof(buf), "epoch %d steps %d train_loss %.6f val_loss -", log.epoch,
                  log.steps, log.train_loss);
  return buf;
}

int cmd_train(const std::string& config_path, const std::string& hazy_dir,
              const std::string& ref_dir, const std::string& val_hazy, const std::string& val_ref,
              const std::string& out_dir, const std::string& resume, int64_t seed_override,
              int epochs_override) {
  require_exists(hazy_dir, "hazy data directory");
  require_exists(ref_dir, "reference data directory");
  RunConfig rc = resolve_config(config_path);
  if (seed_override >= 0) {
    rc.train.seed = static_cast<uint64_t>(seed_override);
    rc.model.seed = rc.train.seed;
  }
  if (epochs_override > 0) rc.train.epochs = epochs_override;
  rc.train.validate();

  fs::create_directories(out_dir);
  Dataset train_set = load_dataset(hazy_dir, ref_dir, rc.train.resolution);
  Dataset val_set;
  if (!val_hazy.empty() || !val_ref.empty()) {
    if (val_hazy.empty() || val_ref.empty())
      throw UsageError("--val-hazy and --val-ref must be given together");
    require_exists(val_hazy, "validation hazy directory");
    require_exists(val_ref, "validation reference directory");
    val_set = load_dataset(val_hazy, val_ref, rc.train.resolution);
  } else {
    val_set = train_set;
  }

  std::unique_ptr<DehazeModel> model;
  Adam opt;
  opt.config().lr = rc.train.lr;
  int start_epoch = 0;
  if (!resume.empty()) {
    Checkpoint ck;
    model = model_from_checkpoint(resume, &ck);
    opt.set_step_count(checkpoint_adam_step(ck));
    start_epoch = checkpoint_epoch(ck);
    if (start_epoch >= rc.train.epochs)
      throw UsageError("checkpoint is already at epoch " + std::to_string(start_epoch) +
                       "; raise epochs to continue");
  } else {
    model = std::make_unique<DehazeModel>(rc.model);
  }

  std::FILE* logf = std::fopen((fs::path(out_dir) / "train_log.txt").string().c_str(),
                               resume.empty() ? "w" : "a");
  if (!logf) throw IoError("cannot open training log under " + out_dir);
  auto on_epoch = [&](const EpochLog& log) {
    std::string row = epoch_row(log);
    std::fprintf(logf, "%s\n", row.c_str());
    std::fflush(logf);
    std::printf("%s\n", row.c_str());
    std::fflush(stdout);
  };
  FitResult fr;
  try {
    fr = fit(*model, train_set, val_set, rc.train, opt, start_epoch, on_epoch);
  } catch (...) {
    std::fclose(logf);
    throw;
  }
  std::fclose(logf);

  write_checkpoint(fr.best, (fs::path(out_dir) / "best.ckpt").string());
  write_checkpoint(fr.last, (fs::path(out_dir) / "last.ckpt").string());
  std::printf("best epoch %d (val_loss %.6f); wrote best.ckpt and last.ckpt under %s\n",
              fr.best_epoch, fr.best_val_loss, out_dir.c_str());
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& input, const std::string& out_dir,
              int timesteps) {
  require_exists(input, "input path");
  auto model = model_from_checkpoint(ckpt, nullptr);
  std::vector<fs::path> files = collect_inputs(input);
  fs::create_directories(out_dir);

  std::vector<Tensor> images(files.size());
  for (size_t i = 0; i < files.size(); ++i) {
    images[i] = load_image(files[i].string());
    check_dims(images[i], files[i].filename().string());
  }

  int workers = std::min<int>(thread_budget(), static_cast<int>(files.size()));
  std::atomic<size_t> next{0};
  std::vector<std::string> errors(files.size());
  auto worker = [&]() {
    for (size_t i = next.fetch_add(1); i < files.size(); i = next.fetch_add(1)) {
      try {
        Ctx ctx;
        ForwardResult fr = model->forward(ctx, images[i], timesteps);
        fs::path out = fs::path(out_dir) / (files[i].stem().string() + ".png");
        save_image_png(clamp01(*fr.y_hat.t), out.string());
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (size_t i = 0; i < files.size(); ++i)
    if (!errors[i].empty()) throw IoError(files[i].filename().string() + ": " + errors[i]);
  std::printf("wrote %zu dehazed image(s) under %s\n", files.size(), out_dir.c_str());
  return 0;
}

int cmd_energy(const std::string& ckpt, const std::string& input, const std::string& out_dir,
               const std::string& mode_str, int timesteps) {
  require_exists(input, "input path");
  EnergyMode mode = parse_energy_mode(mode_str);
  auto model = model_from_checkpoint(ckpt, nullptr);
  Tensor img = load_image(input);
  check_dims(img, fs::path(input).filename().string());

  Ctx ctx;
  TraceCollector tc;
  ctx.trace = &tc;
  model->forward(ctx, img, timesteps);
  EnergyReport rep = build_energy_report(tc, mode);
  std::string text = energy_report_text(rep);
  std::fputs(text.c_str(), stdout);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    auto dump = [&](const char* name, const std::string& body) {
      std::ofstream f(fs::path(out_dir) / name);
      if (!f) throw IoError(std::string("cannot write ") + name + " under " + out_dir);
      f << body;
    };
    dump("energy.txt", text);
    dump("energy.kv", energy_report_kv(rep));
  }
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& hazy_dir, const std::string& ref_dir,
             const std::string& out_dir, int timesteps, int resolution) {
  require_exists(hazy_dir, "hazy data directory");
  require_exists(ref_dir, "reference data directory");
  auto model = model_from_checkpoint(ckpt, nullptr);
  Dataset ds = load_dataset(hazy_dir, ref_dir, resolution);
  if (ds.empty()) throw UsageError("no paired images under " + hazy_dir);
  EvalReport rep = evaluate(*model, ds, timesteps);
  std::string text = eval_report_text(rep);
  std::fputs(text.c_str(), stdout);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream t(fs::path(out_dir) / "eval.txt");
    t << text;
    std::ofstream k(fs::path(out_dir) / "eval.kv");
    k << eval_report_kv(rep);
    if (!t || !k) throw IoError("cannot write eval report under " + out_dir);
  }
  return 0;
}

int cmd_params(const std::string& config_path, bool rgb_only) {
  RunConfig rc = resolve_config(config_path);
  if (rgb_only) rc.model.rgb_only = true;
  DehazeModel model(rc.model);
  const ParamStore& ps = model.params();
  auto row = [&](const char* label, const std::string& prefix) {
    long n = ps.count(prefix);
    if (n > 0) std::printf("%-24s %10ld\n", label, n);
    return n;
  };
  long sum = 0;
  sum += row("spike coder (rgb)", "coder.rgb");
  sum += row("spike coder (lab)", "coder.lab");
  sum += row("bl estimator", "bl.");
  sum += row("k estimator (rgb)", "k_est.rgb");
  sum += row("k estimator (lab)", "k_est.lab");
  sum += row("k estimator (decoder)", "k_est.dec");
  long total = model.param_count();
  std::printf("%-24s %10ld\n", "total", total);
  std::printf("%-24s %10ld\n", "learnable", ps.count_learnable());
  std::printf("total_m %.4f\n", static_cast<double>(total) / 1e6);
  if (sum != total) throw NumericError("parameter breakdown does not sum to total");
  return 0;
}

int cmd_convert(const std::string& input, const std::string& out_dir) {
  require_exists(input, "input path");
  Tensor rgb = load_image(input);
  Tensor lab = rgb_frame_to_lab(rgb);
  fs::create_directories(out_dir);
  int h = lab.dim(1), w = lab.dim(2);
  long hw = static_cast<long>(h) * w;
  const char* names[3] = {"_L.png", "_A.png", "_B.png"};
  std::string stem = fs::path(input).stem().string();
  for (int c = 0; c < 3; ++c) {
    Tensor plane = Tensor::zeros({3, h, w});
    float off = c == 0 ? 0.0f : 0.5f;  // chroma planes are zero-centered
    for (long i = 0; i < hw; ++i) {
      float v = lab.data[static_cast<size_t>(c * hw + i)] + off;
      plane.data[static_cast<size_t>(i)] = v;
      plane.data[static_cast<size_t>(hw + i)] = v;
      plane.data[static_cast<size_t>(2 * hw + i)] = v;
    }
    save_image_png(plane, (fs::path(out_dir) / (stem + names[c])).string());
  }
  std::printf("wrote L/A/B planes for %s under %s\n", input.c_str(), out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spiking underwater image dehazing engine"};
  app.require_subcommand(1);

  std::string config_path, hazy_dir, ref_dir, val_hazy, val_ref, out_dir, ckpt, input, mode = "mac-first";
  std::string resume;
  int timesteps = 10, resolution = 512, epochs_override = 0;
  int64_t seed_override = -1;
  bool rgb_only = false;

  CLI::App* train = app.add_subcommand("train", "train a model on a paired hazy/reference set");
  train->add_option("--config", config_path, "run config file (defaults used when omitted)");
  train->add_option("--data-hazy", hazy_dir, "directory of hazy inputs")->required();
  train->add_option("--data-ref", ref_dir, "directory of reference images")->required();
  train->add_option("--val-hazy", val_hazy, "validation hazy directory (default: training set)");
  train->add_option("--val-ref", val_ref, "validation reference directory");
  train->add_option("--out", out_dir, "output directory for checkpoints and log")->required();
  train->add_option("--resume", resume, "checkpoint to continue from");
  train->add_option("--seed", seed_override, "override config seed");
  train->add_option("--epochs", epochs_override, "override config epoch count");

  CLI::App* infer = app.add_subcommand("infer", "dehaze one image or a directory of images");
  infer->add_option("--ckpt", ckpt, "model checkpoint")->required();
  infer->add_option("--input", input, "input image file or directory")->required();
  infer->add_option("--out", out_dir, "output directory")->required();
  infer->add_option("--timesteps", timesteps, "presentation length T");

  CLI::App* energy = app.add_subcommand("energy", "per-layer synaptic-operation energy ledger");
  energy->add_option("--ckpt", ckpt, "model checkpoint")->required();
  energy->add_option("--input", input, "input image file")->required();
  energy->add_option("--out", out_dir, "directory for energy.txt / energy.kv");
  energy->add_option("--mode", mode, "strict | mac-first (default mac-first)");
  energy->add_option("--timesteps", timesteps, "presentation length T");

  CLI::App* eval = app.add_subcommand("eval", "PSNR/SSIM over a paired dataset");
  eval->add_option("--ckpt", ckpt, "model checkpoint")->required();
  eval->add_option("--data-hazy", hazy_dir, "directory of hazy inputs")->required();
  eval->add_option("--data-ref", ref_dir, "directory of reference images")->required();
  eval->add_option("--out", out_dir, "directory for eval.txt / eval.kv");
  eval->add_option("--timesteps", timesteps, "presentation length T");
  eval->add_option("--resolution", resolution, "evaluation resolution (multiple of 8)");

  CLI::App* params = app.add_subcommand("params", "parameter-count breakdown");
  params->add_option("--config", config_path, "run config file (defaults used when omitted)");
  params->add_flag("--rgb-only", rgb_only, "count the RGB-only ablation");

  CLI::App* convert = app.add_subcommand("convert", "split an RGB image into normalized LAB planes");
  convert->add_option("--input", input, "input image file")->required();
  convert->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed())
      return cmd_train(config_path, hazy_dir, ref_dir, val_hazy, val_ref, out_dir, resume,
                       seed_override, epochs_override);
    if (infer->parsed()) return cmd_infer(ckpt, input, out_dir, timesteps);
    if (energy->parsed()) return cmd_energy(ckpt, input, out_dir, mode, timesteps);
    if (eval->parsed()) return cmd_eval(ckpt, hazy_dir, ref_dir, out_dir, timesteps, resolution);
    if (params->parsed()) return cmd_params(config_path, rgb_only);
    if (convert->parsed()) return cmd_convert(input, out_dir);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "snndhz: %s\n", e.what());
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "snndhz: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "snndhz: %s\n", e.what());
    return 1;
  }
  return 2;
}
