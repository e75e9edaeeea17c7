#include "unipaint/cli/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "unipaint/image_io.hpp"

namespace unipaint::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& message) {
  throw Error(ErrorKind::Validation, "sweep config: " + message, field);
}

template <typename T>
T get_as(const json& value, const std::string& field) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    config_error(field, field + " has the wrong type");
  }
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() ? p.string() : (fs::path(base_dir) / p).lexically_normal().string();
}

bool parse_attn(const json& v, const std::string& field) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string() && (v == "on" || v == "off")) return v == "on";
  config_error(field, field + " must be true/false or \"on\"/\"off\"");
}

/// Applies one (axis, value) pair to the inpaint options or iteration count.
void apply_axis(const std::string& axis, const json& v, InpaintOptions& ip, int& iters) {
  if (axis == "iters") {
    iters = get_as<int>(v, axis);
    if (iters < 0) config_error(axis, "iters must be >= 0");
  } else if (axis == "text") {
    if (v.is_null()) ip.text.reset();
    else ip.text = get_as<std::string>(v, axis);
  } else if (axis == "attn_mask") {
    ip.attn_mask = parse_attn(v, axis);
  } else if (axis == "steps") {
    ip.steps = get_as<int>(v, axis);
  } else if (axis == "scale") {
    ip.scale = get_as<double>(v, axis);
  } else if (axis == "tau") {
    ip.tau = get_as<double>(v, axis);
  } else if (axis == "seed") {
    ip.seed = get_as<std::uint64_t>(v, axis);
  } else {
    config_error(axis, "unknown axis '" + axis + "'");
  }
}

std::string checkpoint_for(const fs::path& outdir, int iters) {
  return (outdir / "checkpoints" / ("iters_" + std::to_string(iters) + ".ckpt")).string();
}

std::string tsv_cell(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "-";
  return v.dump();
}

}  // namespace

const std::vector<std::string>& sweep_axis_names() {
  static const std::vector<std::string> names{"iters", "text", "attn_mask", "steps", "scale", "tau", "seed"};
  return names;
}

SweepConfig parse_sweep_config(const std::string& json_text, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("sweep config is not valid JSON: ") + e.what(), "config");
  }
  if (!doc.is_object()) config_error("config", "top level must be an object");

  SweepConfig config;
  for (const auto& [key, value] : doc.items()) {
    if (key == "image") {
      config.base_inpaint.image = config.base_finetune.image = resolve(base_dir, get_as<std::string>(value, key));
    } else if (key == "mask") {
      config.base_inpaint.mask = config.base_finetune.mask = resolve(base_dir, get_as<std::string>(value, key));
    } else if (key == "stroke") {
      config.base_inpaint.stroke = resolve(base_dir, get_as<std::string>(value, key));
    } else if (key == "exemplar") {
      config.base_finetune.exemplar = resolve(base_dir, get_as<std::string>(value, key));
    } else if (key == "checkpoint") {
      config.checkpoint = resolve(base_dir, get_as<std::string>(value, key));
    } else if (key == "preset") {
      config.base_finetune.preset = get_as<std::string>(value, key);
    } else if (key == "outdir") {
      config.outdir = resolve(base_dir, get_as<std::string>(value, key));
    } else if (key == "base") {
      if (!value.is_object()) config_error("base", "base must be an object");
      for (const auto& [bk, bv] : value.items()) {
        const std::string field = "base." + bk;
        if (bk == "n") config.base_inpaint.n = get_as<int>(bv, field);
        else if (bk == "exemplar_token") {
          config.base_inpaint.exemplar_token = get_as<int>(bv, field);
          config.base_finetune.exemplar_token = config.base_inpaint.exemplar_token;
        } else if (bk == "lr") config.base_finetune.config.learning_rate = get_as<double>(bv, field);
        else if (bk == "finetune_seed") config.base_finetune.config.seed = get_as<std::uint64_t>(bv, field);
        else if (bk == "init_seed") config.base_finetune.init_seed = get_as<std::uint64_t>(bv, field);
        else if (std::find(sweep_axis_names().begin(), sweep_axis_names().end(), bk) != sweep_axis_names().end()) {
          apply_axis(bk, bv, config.base_inpaint, config.base_finetune.config.total_iters);
        } else {
          config_error(field, "unknown base key '" + bk + "'");
        }
      }
    } else if (key == "axes") {
      if (!value.is_object()) config_error("axes", "axes must be an object");
      for (const auto& [axis, values] : value.items()) {
        const std::string field = "axes." + axis;
        if (std::find(sweep_axis_names().begin(), sweep_axis_names().end(), axis) == sweep_axis_names().end()) {
          config_error(field, "unknown axis '" + axis + "'");
        }
        if (!values.is_array() || values.empty()) config_error(field, "axis values must be a non-empty array");
        InpaintOptions probe;
        int probe_iters = 0;
        for (const auto& v : values) apply_axis(axis, v, probe, probe_iters);
        config.axes[axis] = values.get<std::vector<json>>();
      }
    } else {
      config_error(key, "unknown key '" + key + "'");
    }
  }
  if (config.base_inpaint.image.empty()) config_error("image", "image is required");
  if (config.base_inpaint.mask.empty()) config_error("mask", "mask is required");
  if (config.outdir.empty()) config.outdir = resolve(base_dir, "sweep_out");
  return config;
}

std::vector<SweepCell> expand_sweep(const SweepConfig& config) {
  std::vector<std::string> axes;
  for (const auto& name : sweep_axis_names()) {
    if (config.axes.count(name)) axes.push_back(name);
  }
  std::size_t total = 1;
  for (const auto& a : axes) total *= config.axes.at(a).size();

  std::vector<SweepCell> cells;
  cells.reserve(total);
  for (std::size_t index = 0; index < total; ++index) {
    SweepCell cell;
    char name[32];
    std::snprintf(name, sizeof name, "cell_%04zu", index);
    cell.name = name;
    cell.inpaint = config.base_inpaint;
    cell.iters = config.base_finetune.config.total_iters;
    std::size_t rest = index;
    std::vector<std::size_t> digits(axes.size());
    for (std::size_t k = axes.size(); k-- > 0;) {
      const std::size_t n = config.axes.at(axes[k]).size();
      digits[k] = rest % n;
      rest /= n;
    }
    for (std::size_t k = 0; k < axes.size(); ++k) {
      const json& v = config.axes.at(axes[k])[digits[k]];
      cell.values[axes[k]] = v;
      apply_axis(axes[k], v, cell.inpaint, cell.iters);
    }
    cell.inpaint.outdir = (fs::path(config.outdir) / "cells" / cell.name).string();
    cells.push_back(std::move(cell));
  }
  return cells;
}

json run_sweep(const SweepConfig& config, int jobs, std::ostream& log) {
  if (jobs < 1) throw Error(ErrorKind::Validation, "jobs must be >= 1", "jobs");
  const fs::path outdir(config.outdir);
  fs::create_directories(outdir / "cells");
  std::vector<SweepCell> cells = expand_sweep(config);

  // Checkpoints: one per distinct iteration count unless a fixed one is given
  // and iterations are not swept.
  const bool sweep_iters = config.axes.count("iters") != 0;
  if (config.checkpoint && !sweep_iters) {
    for (auto& c : cells) c.inpaint.checkpoint = *config.checkpoint;
  } else {
    std::set<int> counts;
    for (const auto& c : cells) counts.insert(c.iters);
    for (int iters : counts) {
      const std::string path = checkpoint_for(outdir, iters);
      if (!fs::exists(path)) {
        FinetuneOptions ft = config.base_finetune;
        ft.config.total_iters = iters;
        if (config.checkpoint) ft.base = config.checkpoint;
        ft.out = path;
        log << "finetune iters=" << iters << " -> " << path << '\n';
        finetune_command(ft);
      }
    }
    for (auto& c : cells) c.inpaint.checkpoint = checkpoint_for(outdir, c.iters);
  }

  std::vector<json> rows(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const SweepCell& cell = cells[i];
      const fs::path done = fs::path(cell.inpaint.outdir) / "done.json";
      json values(cell.values);
      if (fs::exists(done)) {
        const auto bytes = read_file(done.string());
        json row = json::parse(std::string(bytes.begin(), bytes.end()), nullptr, false);
        if (!row.is_discarded() && row.value("values", json()) == values) {
          rows[i] = std::move(row);
          std::lock_guard lock(log_mutex);
          log << cell.name << " done (skipped)\n";
          continue;
        }
      }
      try {
        const json manifest = inpaint_command(cell.inpaint);
        json row{{"cell", cell.name}, {"values", values}, {"outputs", manifest["outputs"]}};
        const json& m = manifest["metrics"];
        row["known_region_error_max"] = *std::max_element(m["known_region_error"]["values"].begin(),
                                                          m["known_region_error"]["values"].end());
        if (m.contains("stroke_rmse")) {
          row["stroke_rmse_mean"] = m["stroke_rmse"]["mean"];
          row["stroke_rmse_std"] = m["stroke_rmse"]["stddev"];
        } else {
          row["stroke_rmse_mean"] = nullptr;
          row["stroke_rmse_std"] = nullptr;
        }
        write_file_atomic(done.string(), row.dump(2) + "\n");
        rows[i] = std::move(row);
        std::lock_guard lock(log_mutex);
        log << cell.name << " done\n";
      } catch (...) {
        std::lock_guard lock(log_mutex);
        if (!failure) failure = std::current_exception();
        next = cells.size();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = std::min<int>(jobs, static_cast<int>(cells.size()));
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<std::string> axes;
  for (const auto& name : sweep_axis_names()) {
    if (config.axes.count(name)) axes.push_back(name);
  }
  std::ostringstream tsv;
  tsv << "cell";
  for (const auto& a : axes) tsv << '\t' << a;
  tsv << "\tstroke_rmse_mean\tstroke_rmse_std\tknown_region_error_max\toutputs\n";
  for (const auto& row : rows) {
    tsv << row["cell"].get<std::string>();
    for (const auto& a : axes) tsv << '\t' << tsv_cell(row["values"][a]);
    tsv << '\t' << tsv_cell(row["stroke_rmse_mean"]) << '\t' << tsv_cell(row["stroke_rmse_std"]) << '\t'
        << tsv_cell(row["known_region_error_max"]) << '\t';
    bool first = true;
    for (const auto& o : row["outputs"]) {
      tsv << (first ? "" : ",") << o.get<std::string>();
      first = false;
    }
    tsv << '\n';
  }
  write_file_atomic((outdir / "summary.tsv").string(), tsv.str());
  json summary{{"command", "sweep"},
               {"outdir", fs::absolute(outdir).string()},
               {"axes", axes},
               {"cells", rows},
               {"summary_tsv", fs::absolute(outdir / "summary.tsv").string()},
               {"summary_json", fs::absolute(outdir / "summary.json").string()}};
  write_file_atomic((outdir / "summary.json").string(), summary.dump(2) + "\n");
  return summary;
}

}  // namespace unipaint::cli
