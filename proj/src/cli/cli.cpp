#include "unipaint/cli/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "unipaint/cli/sweep.hpp"
#include "unipaint/image_io.hpp"

namespace unipaint::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ImageBuffer read_rgb(const std::string& path, const char* field) {
  try {
    return read_png(path, PixelFormat::Rgb);
  } catch (const Error& e) {
    throw Error(ErrorKind::Validation, e.what(), field);
  }
}

RegionMask read_mask(const std::string& path) {
  try {
    return read_mask_png(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::Validation, e.what(), "mask");
  }
}

void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path.string(), text); }

}  // namespace

json finetune_command(const FinetuneOptions& options) {
  options.config.validate();
  const ImageBuffer image = read_rgb(options.image, "image");
  const RegionMask mask = read_mask(options.mask);
  std::optional<ImageBuffer> exemplar;
  if (options.exemplar) exemplar = read_rgb(*options.exemplar, "exemplar");

  ParameterSet base;
  std::string preset = options.preset;
  if (options.base) {
    base = load_checkpoint(*options.base);
    preset = preset_from_tag(base.tag());
  }
  const ToyUNet net(backbone_preset(preset));
  if (!options.base) base = net.init_parameters(options.init_seed);

  std::optional<int> token = options.exemplar_token;
  if (exemplar && !token) token = resolve_subject_token(*exemplar);

  std::ostringstream log;
  log << "iteration\tbg_loss\tref_loss\ttotal_loss\n" << std::setprecision(17);
  const NoiseSchedule sched = make_schedule<double>(kDefaultTrainTimesteps);
  const ParameterSet params =
      finetune_on_image(net, std::move(base), image, mask, exemplar, token, options.config, sched,
                        [&](const FinetuneTelemetry& t) {
                          log << t.iteration << '\t' << t.bg_loss << '\t' << t.ref_loss << '\t' << t.total_loss << '\n';
                        });

  const fs::path out(options.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_checkpoint(params, out);
  const std::string loss_log = options.out + ".loss.tsv";
  write_text(loss_log, log.str());

  return json{{"command", "finetune"},
              {"checkpoint", fs::absolute(out).string()},
              {"loss_log", fs::absolute(loss_log).string()},
              {"preset", preset},
              {"iterations", options.config.total_iters},
              {"total_iterations", params.finetune_iterations()},
              {"learning_rate", options.config.learning_rate},
              {"seed", options.config.seed},
              {"subject_token", token ? json(*token) : json()}};
}

json inpaint_command(const InpaintOptions& options) {
  const ParameterSet params = load_checkpoint(options.checkpoint);
  const ToyUNet net(backbone_preset(preset_from_tag(params.tag())));
  const ImageBuffer image = read_rgb(options.image, "image");
  const RegionMask mask = read_mask(options.mask);

  GuidanceSpec spec;
  if (options.text) spec.prompt = *options.text;
  spec.subject_token = options.exemplar_token;
  if (options.stroke) {
    try {
      spec.stroke = make_stroke_map(read_png(*options.stroke, PixelFormat::Rgba), net.config().codec_factor);
    } catch (const Error& e) {
      throw Error(ErrorKind::Validation, e.what(), "stroke");
    }
  }
  spec.tau = options.tau;
  spec.scale = options.scale;
  spec.steps = options.steps;
  spec.seed = options.seed;
  spec.num_outputs = options.n;
  SamplerConfig sampler;
  sampler.attn_mask_enabled = options.attn_mask;

  const NoiseSchedule sched = make_schedule<double>(kDefaultTrainTimesteps);
  const InpaintResult result = inpaint_image(net, params, image, mask, spec, sampler, sched);

  const fs::path outdir(options.outdir);
  fs::create_directories(outdir);
  json outputs = json::array();
  for (std::size_t i = 0; i < result.images.size(); ++i) {
    const fs::path p = outdir / ("output_" + std::to_string(i) + ".png");
    write_png(p.string(), result.images[i]);
    outputs.push_back(fs::absolute(p).string());
  }
  std::string lines = result.known_error.to_lines();
  json metrics{{"known_region_error", json::parse(result.known_error.to_json())}};
  if (result.stroke_rmse) {
    lines += result.stroke_rmse->to_lines();
    metrics["stroke_rmse"] = json::parse(result.stroke_rmse->to_json());
  }
  write_text(outdir / "metrics.txt", lines);
  write_text(outdir / "metrics.json", metrics.dump(2) + "\n");

  const double tau = spec.stroke ? spec.tau.value_or(kDefaultStrokeTau) : 0.0;
  json manifest{{"command", "inpaint"},
                {"checkpoint", fs::absolute(options.checkpoint).string()},
                {"mode", guidance_mode(spec)},
                {"outputs", outputs},
                {"metrics_txt", fs::absolute(outdir / "metrics.txt").string()},
                {"metrics_json", fs::absolute(outdir / "metrics.json").string()},
                {"manifest", fs::absolute(outdir / "manifest.json").string()},
                {"settings",
                 {{"steps", options.steps},
                  {"scale", options.scale},
                  {"tau", spec.stroke ? json(tau) : json()},
                  {"seed", options.seed},
                  {"n", options.n},
                  {"attn_mask", options.attn_mask},
                  {"text", options.text ? json(*options.text) : json()},
                  {"exemplar_token", options.exemplar_token ? json(*options.exemplar_token) : json()}}},
                {"metrics", metrics}};
  write_text(outdir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::InvalidInput:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::OutOfRange:
    case ErrorKind::Validation: return kExitUsage;
    default: return kExitFailure;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Single-image diffusion inpainting with text, exemplar and stroke guidance", "unipaint"};
  app.require_subcommand(1);

  FinetuneOptions ft;
  auto* finetune = app.add_subcommand("finetune", "Masked finetuning of the denoiser on one image");
  finetune->add_option("--image", ft.image, "Input RGB PNG")->required()->check(CLI::ExistingFile);
  finetune->add_option("--mask", ft.mask, "Mask PNG (white = known)")->required()->check(CLI::ExistingFile);
  finetune->add_option("--exemplar", ft.exemplar, "Exemplar RGB PNG")->check(CLI::ExistingFile);
  finetune->add_option("--exemplar-token", ft.exemplar_token, "Subject token id (default: retrieved)");
  finetune->add_option("--iters", ft.config.total_iters, "Finetune iterations")->capture_default_str();
  finetune->add_option("--lr", ft.config.learning_rate, "Adam learning rate")->capture_default_str();
  finetune->add_option("--seed", ft.config.seed, "Finetune RNG seed")->capture_default_str();
  finetune->add_option("--base", ft.base, "Start from this checkpoint")->check(CLI::ExistingFile);
  finetune->add_option("--preset", ft.preset, "Backbone preset (small, tiny)")->capture_default_str();
  finetune->add_option("--init-seed", ft.init_seed, "Initialization seed without --base")->capture_default_str();
  finetune->add_option("--out", ft.out, "Checkpoint path")->required();

  InpaintOptions ip;
  std::string attn = "on";
  auto* inpaint = app.add_subcommand("inpaint", "Guided inpainting with a finetuned checkpoint");
  inpaint->add_option("--checkpoint", ip.checkpoint, "Finetuned checkpoint")->required()->check(CLI::ExistingFile);
  inpaint->add_option("--image", ip.image, "Input RGB PNG")->required()->check(CLI::ExistingFile);
  inpaint->add_option("--mask", ip.mask, "Mask PNG (white = known)")->required()->check(CLI::ExistingFile);
  inpaint->add_option("--text", ip.text, "Text prompt");
  inpaint->add_option("--exemplar-token", ip.exemplar_token, "Subject token id");
  inpaint->add_option("--stroke", ip.stroke, "Stroke RGBA PNG")->check(CLI::ExistingFile);
  inpaint->add_option("--tau", ip.tau, "Stroke injection point in [0,1] (default 0.55)");
  inpaint->add_option("--scale", ip.scale, "Guidance scale")->capture_default_str();
  inpaint->add_option("--steps", ip.steps, "DDIM steps")->capture_default_str();
  inpaint->add_option("--seed", ip.seed, "Sampling seed")->capture_default_str();
  inpaint->add_option("--n", ip.n, "Number of outputs")->capture_default_str();
  inpaint->add_option("--attn-mask", attn, "Masked attention control")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  inpaint->add_option("--outdir", ip.outdir, "Output directory")->required();

  std::string sweep_path;
  int sweep_jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "Cartesian ablation sweep from a JSON file");
  sweep->add_option("config", sweep_path, "Sweep JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--jobs", sweep_jobs, "Parallel cells")->capture_default_str()->check(CLI::PositiveNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    json manifest;
    if (*finetune) {
      manifest = finetune_command(ft);
    } else if (*inpaint) {
      ip.attn_mask = attn == "on";
      manifest = inpaint_command(ip);
    } else {
      const std::string text = [&] {
        const auto bytes = read_file(sweep_path);
        return std::string(bytes.begin(), bytes.end());
      }();
      const SweepConfig config = parse_sweep_config(text, fs::absolute(sweep_path).parent_path().string());
      manifest = run_sweep(config, sweep_jobs, err);
    }
    out << manifest.dump(2) << '\n';
    return kExitOk;
  } catch (const Error& e) {
    err << "error";
    if (!e.field().empty()) err << " [" << e.field() << "]";
    err << ": " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace unipaint::cli
