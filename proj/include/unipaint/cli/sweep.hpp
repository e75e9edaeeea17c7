#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "unipaint/cli/cli.hpp"

namespace unipaint::cli {

/// Axis names in expansion order (first varies slowest).
const std::vector<std::string>& sweep_axis_names();

/// Sweep file:
///   {"image", "mask", ["stroke"], ["checkpoint"], ["preset"], ["outdir"],
///    "base": {text, exemplar_token, tau, scale, steps, seed, n, attn_mask, iters, lr, finetune_seed},
///    "axes": {<axis>: [values...]}}
/// Relative paths resolve against `base_dir`.
struct SweepConfig {
  InpaintOptions base_inpaint;
  FinetuneOptions base_finetune;
  std::optional<std::string> checkpoint;
  std::map<std::string, std::vector<nlohmann::json>> axes;
  std::string outdir;
};

SweepConfig parse_sweep_config(const std::string& json_text, const std::string& base_dir);

struct SweepCell {
  std::string name;  // "cell_0003"
  std::map<std::string, nlohmann::json> values;
  InpaintOptions inpaint;
  int iters = 0;
};

/// Cartesian product of the declared axes; no axes gives one cell.
std::vector<SweepCell> expand_sweep(const SweepConfig& config);

/// Runs every cell without a done marker, then writes summary.tsv and
/// summary.json. Returns the summary document.
nlohmann::json run_sweep(const SweepConfig& config, int jobs, std::ostream& log);

}  // namespace unipaint::cli
