#pragma once

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "unipaint/pipeline.hpp"

namespace unipaint::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct FinetuneOptions {
  std::string image;
  std::string mask;
  std::optional<std::string> exemplar;
  std::optional<int> exemplar_token;
  std::optional<std::string> base;
  std::string preset = "small";
  std::uint64_t init_seed = 0;
  FinetuneConfig config;
  std::string out;
};

struct InpaintOptions {
  std::string checkpoint;
  std::string image;
  std::string mask;
  std::optional<std::string> text;
  std::optional<int> exemplar_token;
  std::optional<std::string> stroke;
  std::optional<double> tau;
  double scale = kDefaultGuidanceScale;
  int steps = kDefaultSamplingSteps;
  std::uint64_t seed = 0;
  int n = 1;
  bool attn_mask = true;
  std::string outdir;
};

/// Runs one finetune and returns its manifest (paths and resolved settings).
nlohmann::json finetune_command(const FinetuneOptions& options);

/// Runs one inpainting and returns its manifest. Writes output_<i>.png,
/// metrics.txt, metrics.json and manifest.json under `outdir`.
nlohmann::json inpaint_command(const InpaintOptions& options);

/// Exit code mapping: validation and input errors are usage errors.
int exit_code_for(const Error& e);

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace unipaint::cli
