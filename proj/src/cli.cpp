#include "sardd/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "sardd/checkpoint.hpp"
#include "sardd/cyclespin.hpp"
#include "sardd/errors.hpp"
#include "sardd/metrics.hpp"
#include "sardd/speckle.hpp"
#include "sardd/textures.hpp"
#include "sardd/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sardd {

namespace {

enum class Kind { Int, Uint, Real, Text, Flag, List, Object };

struct OptionSpec {
  std::string key;
  Kind kind;
  json fallback;
  std::string help;
  bool positional = false;
};

const std::map<std::string, std::vector<OptionSpec>>& command_table() {
  static const std::map<std::string, std::vector<OptionSpec>> table = [] {
    const std::vector<OptionSpec> common{
        {"seed", Kind::Uint, 0, "master seed"},
        {"out", Kind::Text, "out", "output directory"},
    };
    std::map<std::string, std::vector<OptionSpec>> t;
    t["simulate"] = {
        {"looks", Kind::Real, 1.0, "number of looks L"},
        {"patch", Kind::Int, 32, "patch size in pixels"},
        {"count", Kind::Int, 100, "number of pairs"},
        {"sources", Kind::List, json::array(), "clean source images or directories"},
        {"textures", Kind::Int, 24, "synthetic sources to generate when no --sources"},
        {"texture_size", Kind::Int, 96, "side of each synthetic source"},
    };
    t["train"] = {
        {"data", Kind::Text, "", "directory written by simulate"},
        {"steps", Kind::Int, 3000, "optimizer iterations"},
        {"batch", Kind::Int, 4, "pairs per iteration"},
        {"lr", Kind::Real, 5e-4, "learning rate"},
        {"T", Kind::Int, 100, "diffusion length"},
        {"beta_start", Kind::Real, nullptr, "first beta (default scales with T)"},
        {"beta_end", Kind::Real, nullptr, "last beta (default scales with T)"},
        {"log_interval", Kind::Int, 10, "iterations per loss record"},
        {"checkpoint_interval", Kind::Int, 1000, "iterations between checkpoints"},
        {"predictor", Kind::Object, to_json(desk_config()), ""},
    };
    t["despeckle"] = {
        {"checkpoint", Kind::Text, "", "trained checkpoint"},
        {"shifts", Kind::Text, CycleSpinPlan::standard().to_string(), "cyclic shifts u1,v1;u2,v2;..."},
        {"resize", Kind::Flag, false, "resample inputs to the predictor size and back"},
        {"no_clip", Kind::Flag, false, "plain reverse steps without clipping the x0 estimate"},
        {"inputs", Kind::List, json::array(), "speckled images or directories", true},
    };
    t["eval"] = {
        {"reference", Kind::List, json::array(), "clean images or directories"},
        {"test", Kind::List, json::array(), "images to score, paired with --reference"},
        {"regions", Kind::List, json::array(), "ENL regions name=top,left,height,width"},
    };
    for (auto& [name, specs] : t) specs.insert(specs.begin(), common.begin(), common.end());
    return t;
  }();
  return table;
}

std::string flag_name(const std::string& key) {
  std::string f = key;
  std::replace(f.begin(), f.end(), '_', '-');
  return "--" + f;
}

json convert(const OptionSpec& spec, const std::string& text) {
  try {
    std::size_t used = 0;
    switch (spec.kind) {
      case Kind::Int: {
        const long long v = std::stoll(text, &used);
        if (used == text.size()) return v;
        break;
      }
      case Kind::Uint: {
        if (!text.empty() && text[0] == '-') break;
        const unsigned long long v = std::stoull(text, &used);
        if (used == text.size()) return v;
        break;
      }
      case Kind::Real: {
        const double v = std::stod(text, &used);
        if (used == text.size()) return v;
        break;
      }
      default:
        return text;
    }
  } catch (const std::exception&) {
  }
  throw UsageError(flag_name(spec.key) + ": invalid value '" + text + "'");
}

bool kind_matches(Kind kind, const json& v) {
  switch (kind) {
    case Kind::Int: return v.is_number_integer();
    case Kind::Uint: return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    case Kind::Real: return v.is_number() || v.is_null();
    case Kind::Text: return v.is_string();
    case Kind::Flag: return v.is_boolean();
    case Kind::List: return v.is_array() || v.is_string();
    case Kind::Object: return v.is_object();
  }
  return false;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("no such file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void write_settings(const json& settings) {
  write_text(fs::path(settings.at("out").get<std::string>()) / "config.json",
             settings.dump(2) + "\n");
}

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".pgm";
}

// Files as listed; directories contribute their image files in name order.
std::string command_summary(const std::string& name) {
  if (name == "simulate") return "write clean/speckled training pairs";
  if (name == "train") return "fit the noise predictor on simulated pairs";
  if (name == "despeckle") return "restore speckled images with a trained checkpoint";
  return "score restored images against references";
}

const char* type_label(Kind kind) {
  switch (kind) {
    case Kind::Int: return "INT";
    case Kind::Uint: return "UINT";
    case Kind::Real: return "REAL";
    case Kind::List: return "TEXT ...";
    default: return "TEXT";
  }
}

std::vector<fs::path> expand_inputs(const json& list) {
  std::vector<fs::path> out;
  for (const auto& item : list) {
    const fs::path p = item.get<std::string>();
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::directory_iterator(p)) {
        if (entry.is_regular_file() && is_image_file(entry.path())) found.push_back(entry.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      if (!fs::exists(p)) throw IoError("no such file: " + p.string());
      out.push_back(p);
    }
  }
  return out;
}

std::string pair_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pair_%05d.png", index);
  return buf;
}

Image resize_bilinear(const Image& img, int height, int width) {
  if (img.height == height && img.width == width) return img;
  Image out(height, width);
  const double sy = static_cast<double>(img.height) / height;
  const double sx = static_cast<double>(img.width) / width;
  for (int r = 0; r < height; ++r) {
    const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(y);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fy = y - y0;
    for (int c = 0; c < width; ++c) {
      const double x = std::clamp((c + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(x);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double fx = x - x0;
      const double top = img.at(y0, x0) * (1 - fx) + img.at(y0, x1) * fx;
      const double bottom = img.at(y1, x0) * (1 - fx) + img.at(y1, x1) * fx;
      out.at(r, c) = static_cast<float>(top * (1 - fy) + bottom * fy);
    }
  }
  return out;
}

std::pair<std::string, RegionSpec> parse_region(const std::string& text) {
  const auto eq = text.find('=');
  const std::string name = eq == std::string::npos ? "region" : text.substr(0, eq);
  const std::string body = eq == std::string::npos ? text : text.substr(eq + 1);
  int v[4];
  char tail = 0;
  if (std::sscanf(body.c_str(), "%d,%d,%d,%d%c", &v[0], &v[1], &v[2], &v[3], &tail) != 4) {
    throw UsageError("--regions: expected name=top,left,height,width, got '" + text + "'");
  }
  return {name, RegionSpec{v[0], v[1], v[2], v[3]}};
}

void run_simulate(const json& s) {
  const fs::path out = s.at("out").get<std::string>();
  const std::uint64_t seed = s.at("seed").get<std::uint64_t>();
  const SpeckleParams params{s.at("looks").get<double>(), seed};
  params.validate();
  const int patch = s.at("patch").get<int>();
  const int count = s.at("count").get<int>();
  if (patch < 1 || count < 1) throw ParameterError("simulate: --patch and --count must be >= 1");

  std::vector<Image> sources;
  std::vector<std::string> source_names;
  for (const auto& p : expand_inputs(s.at("sources"))) {
    sources.push_back(load_image(p));
    source_names.push_back(p.string());
  }
  if (sources.empty()) {
    const int n = s.at("textures").get<int>();
    const int size = s.at("texture_size").get<int>();
    if (n < 1) throw ParameterError("simulate: --textures must be >= 1");
    sources = synthetic_textures(n, size, size, derive_seed(seed, 0));
    for (int i = 0; i < n; ++i) source_names.push_back("synthetic:" + std::to_string(i));
  }
  const auto pairs = make_dataset(sources, params, patch, count, derive_seed(seed, 1));

  fs::create_directories(out / "clean");
  fs::create_directories(out / "speckled");
  json entries = json::array();
  for (int i = 0; i < count; ++i) {
    const ImagePair& pair = pairs[static_cast<std::size_t>(i)];
    const std::string name = pair_name(i);
    save_image(pair.clean, out / "clean" / name);
    save_image(pair.speckled, out / "speckled" / name);
    entries.push_back({{"clean", "clean/" + name},
                       {"speckled", "speckled/" + name},
                       {"source", source_names[static_cast<std::size_t>(pair.source)]},
                       {"top", pair.top},
                       {"left", pair.left},
                       {"seed", pair.seed}});
  }
  const json manifest{{"looks", params.looks}, {"patch", patch}, {"count", count},
                      {"seed", seed},          {"pairs", entries}};
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
}

void run_train(json& s) {
  const fs::path out = s.at("out").get<std::string>();
  const fs::path data = s.at("data").get<std::string>();
  if (data.empty()) throw UsageError("train: --data is required");
  const json manifest = read_json_file(data / "manifest.json");
  std::vector<ImagePair> dataset;
  try {
    for (const auto& entry : manifest.at("pairs")) {
      ImagePair pair;
      pair.clean = load_image(data / entry.at("clean").get<std::string>());
      pair.speckled = load_image(data / entry.at("speckled").get<std::string>());
      dataset.push_back(std::move(pair));
    }
  } catch (const json::exception& e) {
    throw FormatError("dataset manifest " + (data / "manifest.json").string() + ": " + e.what());
  }

  TrainConfig cfg;
  const std::uint64_t seed = s.at("seed").get<std::uint64_t>();
  cfg.iterations = s.at("steps").get<int>();
  cfg.batch_size = s.at("batch").get<int>();
  cfg.learning_rate = s.at("lr").get<double>();
  cfg.steps = s.at("T").get<int>();
  if (cfg.steps < 1) throw ParameterError("train: --T must be >= 1");
  if (s.at("beta_start").is_null()) s["beta_start"] = default_beta_start(cfg.steps);
  if (s.at("beta_end").is_null()) s["beta_end"] = default_beta_end(cfg.steps);
  cfg.beta_start = s.at("beta_start").get<double>();
  cfg.beta_end = s.at("beta_end").get<double>();
  cfg.seed = derive_seed(seed, 1);
  cfg.log_interval = s.at("log_interval").get<int>();
  cfg.checkpoint_interval = s.at("checkpoint_interval").get<int>();
  cfg.validate();
  make_schedule(cfg.steps, cfg.beta_start, cfg.beta_end);

  Checkpoint ckpt;
  ckpt.config = predictor_config_from_json(s.at("predictor"));
  s["predictor"] = to_json(ckpt.config);
  ckpt.steps = cfg.steps;
  ckpt.beta_start = cfg.beta_start;
  ckpt.beta_end = cfg.beta_end;
  ckpt.params = init_params<float>(ckpt.config, derive_seed(seed, 0));

  fs::create_directories(out);
  write_settings(s);
  std::ofstream log(out / "loss.jsonl", std::ios::binary);
  if (!log) throw IoError("cannot write " + (out / "loss.jsonl").string());
  AdamState<float> state;
  train(dataset, ckpt.params, ckpt.config, state, cfg, &log, [&](const TrainProgress& p) {
    ckpt.iteration = p.iteration;
    save_checkpoint(ckpt, out / "checkpoint.bin");
  });
}

void run_despeckle(const json& s) {
  const fs::path out = s.at("out").get<std::string>();
  const std::string checkpoint = s.at("checkpoint").get<std::string>();
  if (checkpoint.empty()) throw UsageError("despeckle: --checkpoint is required");
  const CycleSpinPlan plan = CycleSpinPlan::parse(s.at("shifts").get<std::string>());
  const auto inputs = expand_inputs(s.at("inputs"));
  if (inputs.empty()) throw UsageError("despeckle: no input images");
  const bool resize = s.at("resize").get<bool>();
  const std::uint64_t seed = s.at("seed").get<std::uint64_t>();

  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const DiffusionSchedule sched = make_schedule(ckpt.steps, ckpt.beta_start, ckpt.beta_end);
  const NoisePredictor predictor = network_predictor(ckpt.params, ckpt.config);
  const int size = ckpt.config.image_size;

  std::vector<Image> images;
  for (const auto& p : inputs) {
    Image img = load_image(p);
    if (!resize && (img.height != size || img.width != size)) {
      throw DimensionError("despeckle: " + p.string() + " is " + std::to_string(img.height) +
                           "x" + std::to_string(img.width) + " but the predictor expects " +
                           std::to_string(size) + "x" + std::to_string(size) +
                           " (see --resize)");
    }
    images.push_back(std::move(img));
  }
  fs::create_directories(out);
  write_settings(s);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Image& img = images[i];
    Image result = despeckle_cs(resize_bilinear(img, size, size), plan, predictor, sched,
                                derive_seed(seed, i), !s.at("no_clip").get<bool>());
    result = resize_bilinear(result, img.height, img.width);
    save_image(result, out / (inputs[i].stem().string() + ".png"));
  }
}

void run_eval(const json& s) {
  const fs::path out = s.at("out").get<std::string>();
  const auto refs = expand_inputs(s.at("reference"));
  const auto tests = expand_inputs(s.at("test"));
  if (refs.empty()) throw UsageError("eval: --reference is required");
  if (refs.size() != tests.size()) {
    throw UsageError("eval: " + std::to_string(refs.size()) + " reference images but " +
                     std::to_string(tests.size()) + " test images");
  }
  std::vector<std::pair<std::string, RegionSpec>> regions;
  for (const auto& r : s.at("regions")) regions.push_back(parse_region(r.get<std::string>()));

  fs::create_directories(out);
  write_settings(s);
  std::ofstream report(out / "report.jsonl", std::ios::binary);
  if (!report) throw IoError("cannot write " + (out / "report.jsonl").string());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const Image ref = quantize_8bit(load_image(refs[i]));
    const Image test = quantize_8bit(load_image(tests[i]));
    const double p = psnr(ref, test);
    json record{{"image", tests[i].string()},
                {"reference", refs[i].string()},
                {"psnr_db", std::isinf(p) ? json("inf") : json(p)},
                {"ssim", ssim(ref, test)}};
    json enl_values = json::object();
    for (const auto& [name, region] : regions) {
      try {
        enl_values[name] = enl(test, region);
      } catch (const DegenerateRegionError&) {
        enl_values[name] = "inf";
      }
    }
    if (!regions.empty()) record["enl"] = enl_values;
    report << record.dump() << '\n';
  }
}

}  // namespace

json resolve_settings(const std::vector<std::string>& args) {
  const auto& table = command_table();
  CLI::App app{"Diffusion-based SAR despeckling", "sardd"};
  app.require_subcommand(1);

  std::string config_path;
  std::map<std::string, std::map<std::string, std::vector<std::string>>> values;
  std::map<std::string, std::map<std::string, bool>> flags;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, specs] : table) {
    CLI::App* sub = app.add_subcommand(name, command_summary(name));
    sub->add_option("--config", config_path, "JSON settings file; flags override it");
    for (const auto& spec : specs) {
      if (spec.kind == Kind::Object) continue;
      if (spec.kind == Kind::Flag) {
        sub->add_flag(flag_name(spec.key), flags[name][spec.key], spec.help);
      } else if (spec.positional) {
        sub->add_option(spec.key, values[name][spec.key], spec.help);
      } else {
        auto* opt = sub->add_option(flag_name(spec.key), values[name][spec.key], spec.help);
        opt->type_name(type_label(spec.kind));
        if (spec.kind != Kind::List) opt->expected(1)->allow_extra_args(false);
      }
    }
    subs[name] = sub;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto chosen = app.get_subcommands();
    throw HelpRequested(chosen.empty() ? app.help() : chosen.front()->help());
  } catch (const CLI::ParseError& e) {
    throw UsageError(std::string(e.what()) + "\n" + app.help());
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const auto& specs = table.at(command);
  CLI::App* sub = subs.at(command);

  json settings{{"command", command}};
  for (const auto& spec : specs) settings[spec.key] = spec.fallback;
  if (!config_path.empty()) {
    const json file = read_json_file(config_path);
    if (!file.is_object()) throw UsageError("config " + config_path + " is not a JSON object");
    for (const auto& [key, value] : file.items()) {
      if (key == "command") {
        if (value != command) {
          throw UsageError("config " + config_path + " is for '" + value.dump() +
                           "', not '" + command + "'");
        }
        continue;
      }
      auto it = std::find_if(specs.begin(), specs.end(),
                             [&](const OptionSpec& sp) { return sp.key == key; });
      if (it == specs.end()) throw UsageError("config " + config_path + ": unknown key '" + key + "'");
      if (!kind_matches(it->kind, value)) {
        throw UsageError("config " + config_path + ": bad value for '" + key + "'");
      }
      settings[key] = (it->kind == Kind::List && value.is_string()) ? json::array({value}) : value;
    }
  }
  for (const auto& spec : specs) {
    if (spec.kind == Kind::Object) continue;
    const std::string opt_name = spec.positional ? spec.key : flag_name(spec.key);
    if (sub->get_option(opt_name)->count() == 0) continue;
    if (spec.kind == Kind::Flag) {
      settings[spec.key] = flags[command][spec.key];
    } else if (spec.kind == Kind::List) {
      settings[spec.key] = values[command][spec.key];
    } else {
      settings[spec.key] = convert(spec, values[command][spec.key].back());
    }
  }
  for (const char* key : {"out"}) {
    settings[key] = fs::absolute(settings[key].get<std::string>()).lexically_normal().string();
  }
  for (const auto& spec : specs) {
    if (spec.kind == Kind::List && spec.key != "regions") {
      json abs = json::array();
      for (const auto& p : settings[spec.key]) {
        abs.push_back(fs::absolute(p.get<std::string>()).lexically_normal().string());
      }
      settings[spec.key] = abs;
    } else if ((spec.key == "data" || spec.key == "checkpoint") &&
               !settings[spec.key].get<std::string>().empty()) {
      settings[spec.key] =
          fs::absolute(settings[spec.key].get<std::string>()).lexically_normal().string();
    }
  }
  return settings;
}

int run_command(const std::vector<std::string>& args) {
  try {
    json settings = resolve_settings(args);
    const std::string command = settings.at("command");
    if (command == "simulate") {
      fs::create_directories(settings.at("out").get<std::string>());
      write_settings(settings);
      run_simulate(settings);
    } else if (command == "train") {
      run_train(settings);
    } else if (command == "despeckle") {
      run_despeckle(settings);
    } else {
      run_eval(settings);
    }
    return 0;
  } catch (const HelpRequested& h) {
    std::cout << h.what();
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int run_command(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_command(args);
}

}  // namespace sardd
