#pragma once

// Run configuration shared by every CLI subcommand: a flat key=value file,
// flag overrides on top, and an echo of the fully resolved values next to
// each run's outputs so results stay reproducible.

#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "setforge/common.hpp"
#include "setforge/dataset.hpp"
#include "setforge/transformer.hpp"

namespace setforge {

struct RunConfig {
    std::uint64_t seed = 42;
    int threads = 1;
    bool verbose = false;

    int image_resolution = 32;
    double range_l = 0.1;
    double range_m = 1.0;
    double range_h = 7.0;

    int n_min = 0;
    int n_max = 4;
    std::vector<int> attempts_per_count{200, 600, 250, 900, 10000};
    double train_prob = 0.8;

    ModelConfig model;

    long train_steps = 8000;
    int train_batch = 64;
    double train_lr = 3e-4;
    int train_warmup = 500;
    double train_noise = 0.01;
    long train_log_every = 200;

    int beam = 10;
    double alpha = -0.9;
    int nn_topk = 10;

    void validate() const {
        if (!(range_l < range_m && range_m < range_h)) {
            throw ConfigError("ranges must satisfy L < M < H");
        }
        if (image_resolution < 8) {
            throw ConfigError("image resolution must be at least 8");
        }
        if (threads < 1) {
            throw ConfigError("threads must be at least 1");
        }
        model_config().validate();
    }

    ImageRanges ranges() const { return ImageRanges{range_l, range_m, range_h}; }

    RenderConfig render_config(bool noisy = false) const {
        return RenderConfig{image_resolution, noisy, ranges()};
    }

    /// The model config with image dimensions synced to the imaging settings.
    ModelConfig model_config() const {
        ModelConfig m = model;
        m.image_h = m.image_w = image_resolution;
        m.image_c = 4;
        return m;
    }

    GenerateConfig generate_config() const {
        GenerateConfig cfg;
        cfg.n_min = n_min;
        cfg.n_max = n_max;
        cfg.attempts_per_count = attempts_per_count;
        cfg.train_prob = train_prob;
        cfg.seed = seed;
        cfg.resolution = image_resolution;
        cfg.ranges = ranges();
        return cfg;
    }

    TrainConfig train_config() const {
        TrainConfig cfg;
        cfg.steps = train_steps;
        cfg.batch = train_batch;
        cfg.lr = train_lr;
        cfg.warmup = train_warmup;
        cfg.loader_noise = train_noise;
        cfg.seed = seed;
        cfg.log_every = train_log_every;
        return cfg;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) {
        return "";
    }
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

inline std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) {
            throw ConfigError("empty entry in integer list: " + text);
        }
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ConfigError("bad integer in list: " + item);
        }
    }
    if (out.empty()) {
        throw ConfigError("empty integer list");
    }
    return out;
}

inline std::string format_int_list(const std::vector<int>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i > 0) {
            out += ',';
        }
        out += std::to_string(values[i]);
    }
    return out;
}

}  // namespace detail

/// Applies one key=value assignment; unknown keys are configuration errors.
inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
    const auto as_int = [&](int lo = std::numeric_limits<int>::min()) {
        try {
            const int v = std::stoi(value);
            if (v < lo) {
                throw ConfigError("value for " + key + " must be >= " + std::to_string(lo));
            }
            return v;
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("bad integer for " + key + ": " + value);
        }
    };
    const auto as_long = [&]() {
        try {
            return std::stol(value);
        } catch (const std::exception&) {
            throw ConfigError("bad integer for " + key + ": " + value);
        }
    };
    const auto as_double = [&]() {
        try {
            return std::stod(value);
        } catch (const std::exception&) {
            throw ConfigError("bad number for " + key + ": " + value);
        }
    };

    if (key == "seed") {
        cfg.seed = static_cast<std::uint64_t>(as_long());
    } else if (key == "threads") {
        cfg.threads = as_int(1);
    } else if (key == "verbose") {
        cfg.verbose = value == "1" || value == "true";
    } else if (key == "image.resolution") {
        cfg.image_resolution = as_int(1);
    } else if (key == "image.range_l") {
        cfg.range_l = as_double();
    } else if (key == "image.range_m") {
        cfg.range_m = as_double();
    } else if (key == "image.range_h") {
        cfg.range_h = as_double();
    } else if (key == "data.n_min") {
        cfg.n_min = as_int(0);
    } else if (key == "data.n_max") {
        cfg.n_max = as_int(0);
    } else if (key == "data.attempts") {
        cfg.attempts_per_count = detail::parse_int_list(value);
    } else if (key == "data.train_prob") {
        cfg.train_prob = as_double();
    } else if (key == "model.patch") {
        cfg.model.patch = as_int(1);
    } else if (key == "model.dim") {
        cfg.model.dim = as_int(1);
    } else if (key == "model.heads") {
        cfg.model.heads = as_int(1);
    } else if (key == "model.enc_blocks") {
        cfg.model.enc_blocks = as_int(1);
    } else if (key == "model.dec_blocks") {
        cfg.model.dec_blocks = as_int(1);
    } else if (key == "model.ffn") {
        cfg.model.ffn_dim = as_int(1);
    } else if (key == "model.dropout") {
        cfg.model.dropout = as_double();
    } else if (key == "model.max_len") {
        cfg.model.max_len = as_int(1);
    } else if (key == "train.steps") {
        cfg.train_steps = as_long();
    } else if (key == "train.batch") {
        cfg.train_batch = as_int(1);
    } else if (key == "train.lr") {
        cfg.train_lr = as_double();
    } else if (key == "train.warmup") {
        cfg.train_warmup = as_int(0);
    } else if (key == "train.noise") {
        cfg.train_noise = as_double();
    } else if (key == "train.log_every") {
        cfg.train_log_every = as_long();
    } else if (key == "decode.beam") {
        cfg.beam = as_int(1);
    } else if (key == "decode.alpha") {
        cfg.alpha = as_double();
    } else if (key == "nn.topk") {
        cfg.nn_topk = as_int(1);
    } else {
        throw ConfigError("unknown config key: " + key);
    }
}

/// Loads `key=value` lines; '#' starts a comment, blank lines are skipped.
inline void load_config_file(RunConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path.string());
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = detail::trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                              ": expected key=value");
        }
        apply_config_entry(cfg, detail::trim(line.substr(0, eq)),
                           detail::trim(line.substr(eq + 1)));
    }
}

/// All settings as ordered key=value pairs; the echo file and --help defaults
/// both come from here.
inline std::map<std::string, std::string> config_entries(const RunConfig& cfg) {
    std::map<std::string, std::string> out;
    const auto num = [](double v) {
        std::ostringstream s;
        s << v;
        return s.str();
    };
    out["seed"] = std::to_string(cfg.seed);
    out["threads"] = std::to_string(cfg.threads);
    out["verbose"] = cfg.verbose ? "1" : "0";
    out["image.resolution"] = std::to_string(cfg.image_resolution);
    out["image.range_l"] = num(cfg.range_l);
    out["image.range_m"] = num(cfg.range_m);
    out["image.range_h"] = num(cfg.range_h);
    out["data.n_min"] = std::to_string(cfg.n_min);
    out["data.n_max"] = std::to_string(cfg.n_max);
    out["data.attempts"] = detail::format_int_list(cfg.attempts_per_count);
    out["data.train_prob"] = num(cfg.train_prob);
    out["model.patch"] = std::to_string(cfg.model.patch);
    out["model.dim"] = std::to_string(cfg.model.dim);
    out["model.heads"] = std::to_string(cfg.model.heads);
    out["model.enc_blocks"] = std::to_string(cfg.model.enc_blocks);
    out["model.dec_blocks"] = std::to_string(cfg.model.dec_blocks);
    out["model.ffn"] = std::to_string(cfg.model.ffn_dim);
    out["model.dropout"] = num(cfg.model.dropout);
    out["model.max_len"] = std::to_string(cfg.model.max_len);
    out["train.steps"] = std::to_string(cfg.train_steps);
    out["train.batch"] = std::to_string(cfg.train_batch);
    out["train.lr"] = num(cfg.train_lr);
    out["train.warmup"] = std::to_string(cfg.train_warmup);
    out["train.noise"] = num(cfg.train_noise);
    out["train.log_every"] = std::to_string(cfg.train_log_every);
    out["decode.beam"] = std::to_string(cfg.beam);
    out["decode.alpha"] = num(cfg.alpha);
    out["nn.topk"] = std::to_string(cfg.nn_topk);
    return out;
}

/// Writes the fully resolved configuration next to a run's outputs.
inline void write_config_echo(const RunConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write config echo: " + path.string());
    }
    for (const auto& [key, value] : config_entries(cfg)) {
        out << key << "=" << value << "\n";
    }
}

}  // namespace setforge
