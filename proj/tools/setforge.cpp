// setforge: end-to-end pipeline driver. Subcommands cover dataset generation,
// training, beam-search prediction, image-space evaluation, the
// nearest-neighbor baseline, single-expression rendering and side-by-side
// visualization.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "setforge/setforge.hpp"

namespace fs = std::filesystem;
using namespace setforge;

namespace {

// ----------------------------------------------------------------------------
// Caption font: 5x7 glyphs for the characters the plot captions need.
// ----------------------------------------------------------------------------

struct Glyph {
    char ch;
    std::array<std::uint8_t, 7> rows;  // low 5 bits per row
};

constexpr std::array<Glyph, 18> caption_font{{
    {'0', {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110}},
    {'1', {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110}},
    {'2', {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111}},
    {'3', {0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110}},
    {'4', {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010}},
    {'5', {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110}},
    {'6', {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110}},
    {'7', {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000}},
    {'8', {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110}},
    {'9', {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100}},
    {'.', {0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b00110, 0b00110}},
    {'=', {0b00000, 0b00000, 0b11111, 0b00000, 0b11111, 0b00000, 0b00000}},
    {'-', {0b00000, 0b00000, 0b00000, 0b11111, 0b00000, 0b00000, 0b00000}},
    {'R', {0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001}},
    {'M', {0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001}},
    {'S', {0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110}},
    {'E', {0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111}},
    {' ', {0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b00000}},
}};

void draw_text(RgbImage& canvas, int x, int y, const std::string& text, int scale) {
    int cursor = x;
    for (char ch : text) {
        const Glyph* glyph = nullptr;
        for (const Glyph& g : caption_font) {
            if (g.ch == ch) {
                glyph = &g;
                break;
            }
        }
        if (glyph != nullptr) {
            for (int r = 0; r < 7; ++r) {
                for (int c = 0; c < 5; ++c) {
                    if ((glyph->rows[static_cast<std::size_t>(r)] >> (4 - c)) & 1) {
                        for (int sy = 0; sy < scale; ++sy) {
                            for (int sx = 0; sx < scale; ++sx) {
                                const int py = y + r * scale + sy;
                                const int px = cursor + c * scale + sx;
                                if (py >= 0 && py < canvas.height && px >= 0 &&
                                    px < canvas.width) {
                                    std::uint8_t* p = canvas.pixel(py, px);
                                    p[0] = p[1] = p[2] = 255;
                                }
                            }
                        }
                    }
                }
            }
        }
        cursor += 6 * scale;
    }
}

void blit_scaled(RgbImage& canvas, const RgbImage& src, int x, int y, int scale) {
    for (int i = 0; i < src.height; ++i) {
        for (int j = 0; j < src.width; ++j) {
            const std::uint8_t* from =
                src.rgb.data() + (static_cast<std::size_t>(i) * src.width + j) * 3;
            for (int sy = 0; sy < scale; ++sy) {
                for (int sx = 0; sx < scale; ++sx) {
                    std::uint8_t* to = canvas.pixel(y + i * scale + sy, x + j * scale + sx);
                    to[0] = from[0];
                    to[1] = from[1];
                    to[2] = from[2];
                }
            }
        }
    }
}

// ----------------------------------------------------------------------------
// Shared helpers
// ----------------------------------------------------------------------------

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void print_summary(const MetricsReport& report) {
    std::printf("RMSE=%s SSIM=%s Rsucc=%.2f%%\n", format_double(report.mean_rmse).c_str(),
                format_double(report.mean_ssim).c_str(), report.success_ratio_pct);
}

Expr parse_expression_text(const std::string& text) {
    const TokenSeq tokens = parse_tokens(text);
    return parse_preorder(tokens);
}

RenderConfig dataset_render_config(const RunConfig& cfg, const Dataset& data) {
    RenderConfig rc = cfg.render_config();
    if (!data.test.empty()) {
        rc.resolution = data.test.front().noisy.height;
    } else if (!data.train.empty()) {
        rc.resolution = data.train.front().noisy.height;
    }
    return rc;
}

std::vector<std::vector<TokenSeq>> beam_candidates_for(SetTransformer<float>& model,
                                                       const std::vector<DatasetRecord>& test,
                                                       int beam, double alpha, bool verbose) {
    std::vector<std::vector<TokenSeq>> candidates;
    candidates.reserve(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        const BeamResult result = beam_search(model, test[i].noisy, beam, alpha);
        std::vector<TokenSeq> row;
        row.reserve(result.candidates.size());
        for (const BeamCandidate& c : result.candidates) {
            row.push_back(c.tokens);
        }
        candidates.push_back(std::move(row));
        if (verbose && ((i + 1) % 25 == 0 || i + 1 == test.size())) {
            std::fprintf(stderr, "decoded %zu/%zu test samples\n", i + 1, test.size());
        }
    }
    return candidates;
}

// ----------------------------------------------------------------------------
// Subcommands
// ----------------------------------------------------------------------------

int run_generate(const RunConfig& cfg, const std::string& out_dir) {
    GenerateResult result = generate_dataset(cfg.generate_config(), cfg.threads);
    apply_split_policy(result);
    write_dataset(result.train, result.test, out_dir);
    write_config_echo(cfg, fs::path(out_dir) / "resolved.cfg");

    std::printf("wrote %zu train / %zu test records to %s\n", result.train.size(),
                result.test.size(), out_dir.c_str());
    if (cfg.verbose) {
        for (const auto& [n, st] : result.stats.per_count) {
            std::printf("  n=%d attempts=%d dup_seq=%d domain_err=%d dup_img=%d train=%d test=%d\n",
                        n, st.attempts, st.duplicate_sequence, st.domain_error, st.duplicate_image,
                        st.accepted_train, st.accepted_test);
        }
    }
    return 0;
}

int run_train(RunConfig cfg, const std::string& data_dir, const std::string& out_path,
              const std::string& init_path) {
    const Dataset data = read_dataset(data_dir);
    if (data.train.empty()) {
        throw EmptyTrainSet("dataset has no training records: " + data_dir);
    }
    cfg.image_resolution = data.train.front().noisy.height;

    SetTransformer<float> model =
        init_path.empty() ? SetTransformer<float>(cfg.model_config(), cfg.seed)
                          : load_checkpoint<float>(init_path);

    TrainConfig tc = cfg.train_config();
    tc.log = cfg.verbose ? &std::cerr : nullptr;
    const std::vector<double> history = train_model(model, data.train, tc);
    save_checkpoint(model, out_path);

    std::ofstream loss_log(out_path + ".loss.tsv");
    loss_log << "step\tloss\n";
    for (std::size_t i = 0; i < history.size(); ++i) {
        loss_log << i << '\t' << history[i] << '\n';
    }
    write_config_echo(cfg, out_path + ".cfg");
    std::printf("trained %zu steps on %zu records; checkpoint at %s\n", history.size(),
                data.train.size(), out_path.c_str());
    if (!history.empty()) {
        std::printf("final loss %s\n", format_double(history.back()).c_str());
    }
    return 0;
}

int run_predict(const RunConfig& cfg, const std::string& ckpt_path,
                const std::string& image_path) {
    SetTransformer<float> model = load_checkpoint<float>(ckpt_path);
    const FunctionImage img = load_image(image_path);
    const BeamResult result = beam_search(model, img, cfg.beam, cfg.alpha);
    for (std::size_t i = 0; i < result.candidates.size(); ++i) {
        const BeamCandidate& c = result.candidates[i];
        std::printf("%zu\t%s\t%s\t%s\n", i + 1, format_double(c.score).c_str(),
                    c.valid ? "valid" : "invalid", to_string(c.tokens).c_str());
    }
    if (result.decode_error) {
        throw NonFiniteLoss("beam search produced no finished hypothesis");
    }
    return 0;
}

int run_evaluate(const RunConfig& cfg, const std::string& ckpt_path, const std::string& data_dir,
                 const std::string& report_path) {
    SetTransformer<float> model = load_checkpoint<float>(ckpt_path);
    const Dataset data = read_dataset(data_dir);
    const RenderConfig rc = dataset_render_config(cfg, data);
    const auto candidates =
        beam_candidates_for(model, data.test, cfg.beam, cfg.alpha, cfg.verbose);
    const MetricsReport report = evaluate_predictions(data.test, candidates, rc);
    if (!report_path.empty()) {
        write_report_tsv(report, report_path);
        write_config_echo(cfg, report_path + ".cfg");
    }
    print_summary(report);
    return 0;
}

int run_nn_baseline(const RunConfig& cfg, const std::string& data_dir,
                    const std::string& report_path) {
    const Dataset data = read_dataset(data_dir);
    const RenderConfig rc = dataset_render_config(cfg, data);
    const MetricsReport report = nn_baseline(data.test, data.train, cfg.nn_topk, rc);
    if (!report_path.empty()) {
        write_report_tsv(report, report_path);
        write_config_echo(cfg, report_path + ".cfg");
    }
    print_summary(report);
    return 0;
}

int run_render(const RunConfig& cfg, const std::string& expr_text, const std::string& out_path,
               const std::string& ppm_path, bool noisy) {
    const Expr tree = parse_expression_text(expr_text);
    const RenderConfig rc = cfg.render_config(noisy);
    const auto img = render(tree, rc, cfg.seed);
    if (!img) {
        throw NonFiniteLoss("expression hits a domain error on the sampling boxes: " + expr_text);
    }
    save_image(*img, out_path);
    if (!ppm_path.empty()) {
        save_ppm(to_rgb(*img), ppm_path);
    }
    write_config_echo(cfg, out_path + ".cfg");
    std::printf("rendered %s -> %s\n", expr_text.c_str(), out_path.c_str());
    return 0;
}

int run_plot(const RunConfig& cfg, const std::string& pairs_path, const std::string& out_path,
             int scale) {
    std::ifstream in(pairs_path);
    if (!in) {
        throw IoError("cannot open pairs file: " + pairs_path);
    }
    struct PlotPair {
        RgbImage reference;
        RgbImage prediction;
        double rmse;
    };
    std::vector<PlotPair> pairs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw FormatError("pairs line needs <reference>\\t<prediction>: " + line);
        }
        const Expr ref_tree = parse_expression_text(line.substr(0, tab));
        const Expr pred_tree = parse_expression_text(line.substr(tab + 1));
        const auto ref_img = render(ref_tree, cfg.render_config());
        const auto pred_img = render(pred_tree, cfg.render_config());
        if (!ref_img || !pred_img) {
            throw NonFiniteLoss("pair does not render cleanly: " + line);
        }
        pairs.push_back({to_rgb(*ref_img), to_rgb(*pred_img), image_rmse(*ref_img, *pred_img)});
    }
    if (pairs.empty()) {
        throw FormatError("pairs file is empty: " + pairs_path);
    }

    // Layout mirrors the paper's visualization: references on the first row,
    // predictions below, per-pair RMSE along the bottom strip.
    const int cell = cfg.image_resolution * scale;
    const int margin = 2 * scale;
    const int caption_height = 7 * 2 + 6;
    const int width = static_cast<int>(pairs.size()) * (cell + margin) + margin;
    const int height = margin + cell + margin + cell + margin + caption_height;
    RgbImage canvas(height, width);

    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const int x = margin + static_cast<int>(i) * (cell + margin);
        blit_scaled(canvas, pairs[i].reference, x, margin, scale);
        blit_scaled(canvas, pairs[i].prediction, x, margin + cell + margin, scale);
        char caption[32];
        std::snprintf(caption, sizeof(caption), "RMSE=%.2f", pairs[i].rmse);
        draw_text(canvas, x, margin + 2 * (cell + margin), caption, 2);
    }
    save_ppm(canvas, out_path);
    std::printf("plotted %zu pairs -> %s\n", pairs.size(), out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"setforge: symbolic expression images, transformer training and evaluation"};
    app.require_subcommand(1);

    // Options that mirror config keys are collected as text and applied on
    // top of the config file, so explicit flags always win.
    std::vector<std::pair<CLI::Option*, std::pair<std::string, std::string*>>> overrides;
    std::vector<std::unique_ptr<std::string>> storage;
    const auto add_override = [&](CLI::App* cmd, const std::string& flag, const std::string& key,
                                  const std::string& help) {
        storage.push_back(std::make_unique<std::string>());
        std::string* slot = storage.back().get();
        CLI::Option* opt = cmd->add_option(flag, *slot, help);
        overrides.push_back({opt, {key, slot}});
    };

    std::string config_path;
    app.add_option("--config", config_path, "key=value configuration file")
        ->check(CLI::ExistingFile);
    add_override(&app, "--seed", "seed", "global random seed");
    add_override(&app, "--threads", "threads", "worker thread cap");
    bool verbose = false;
    app.add_flag("--verbose", verbose, "chatty progress output");

    auto* generate = app.add_subcommand("generate", "sample a deduplicated dataset");
    std::string out_dir;
    generate->add_option("--out", out_dir, "output dataset directory")->required();
    add_override(generate, "--n-min", "data.n_min", "smallest operator count");
    add_override(generate, "--n-max", "data.n_max", "largest operator count");
    add_override(generate, "--attempts-per-count", "data.attempts",
                 "attempt budget, one value or a comma list per count");
    add_override(generate, "--train-prob", "data.train_prob", "train assignment probability");
    add_override(generate, "--resolution", "image.resolution", "grid points per axis");

    auto* train = app.add_subcommand("train", "train the image-to-sequence model");
    std::string data_dir, ckpt_out, init_ckpt;
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--out", ckpt_out, "checkpoint output path")->required();
    train->add_option("--init", init_ckpt, "checkpoint to continue from");
    add_override(train, "--steps", "train.steps", "optimizer steps");
    add_override(train, "--batch", "train.batch", "batch size");
    add_override(train, "--lr", "train.lr", "learning rate");
    add_override(train, "--noise", "train.noise", "loader pixel noise std");
    add_override(train, "--dim", "model.dim", "embedding dimension");
    add_override(train, "--enc-blocks", "model.enc_blocks", "encoder attention blocks");
    add_override(train, "--dec-blocks", "model.dec_blocks", "decoder attention blocks");
    add_override(train, "--heads", "model.heads", "attention heads");
    add_override(train, "--ffn", "model.ffn", "feed-forward width");
    add_override(train, "--dropout", "model.dropout", "dropout rate");

    auto* predict = app.add_subcommand("predict", "beam-decode one image file");
    std::string ckpt_path, image_path;
    predict->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
    predict->add_option("--image", image_path, "binary image file")->required();
    add_override(predict, "--beam", "decode.beam", "beam size");
    add_override(predict, "--alpha", "decode.alpha", "length penalty exponent");

    auto* evaluate = app.add_subcommand("evaluate", "score beam predictions in image space");
    std::string eval_ckpt, eval_data, report_path;
    evaluate->add_option("--ckpt", eval_ckpt, "model checkpoint")->required();
    evaluate->add_option("--data", eval_data, "dataset directory")->required();
    evaluate->add_option("--report", report_path, "per-sample TSV output");
    add_override(evaluate, "--beam", "decode.beam", "beam size");
    add_override(evaluate, "--alpha", "decode.alpha", "length penalty exponent");

    auto* nn = app.add_subcommand("nn-baseline", "nearest-neighbor retrieval baseline");
    std::string nn_data, nn_report;
    nn->add_option("--data", nn_data, "dataset directory")->required();
    nn->add_option("--report", nn_report, "per-sample TSV output");
    add_override(nn, "--topk", "nn.topk", "retrieved neighbors per sample");

    auto* render_cmd = app.add_subcommand("render", "render a token string to an image file");
    std::string expr_text, render_out, ppm_out;
    bool render_noisy = false;
    render_cmd->add_option("--expr", expr_text, "space-separated pre-order tokens")->required();
    render_cmd->add_option("--out", render_out, "binary image output path")->required();
    render_cmd->add_option("--ppm", ppm_out, "also export the first three channels as RGB");
    render_cmd->add_flag("--noisy", render_noisy, "apply relative noise before digitizing");
    add_override(render_cmd, "--resolution", "image.resolution", "grid points per axis");

    auto* plot = app.add_subcommand("plot", "side-by-side reference/prediction sheet");
    std::string pairs_path, plot_out;
    int plot_scale = 4;
    plot->add_option("--pairs", pairs_path, "TSV file: reference tokens, prediction tokens")
        ->required();
    plot->add_option("--out", plot_out, "PPM output path")->required();
    plot->add_option("--scale", plot_scale, "integer upscale factor");

    for (auto* sub : app.get_subcommands({})) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) {
            load_config_file(cfg, config_path);
        }
        for (const auto& [opt, entry] : overrides) {
            if (opt->count() > 0) {
                apply_config_entry(cfg, entry.first, *entry.second);
            }
        }
        cfg.verbose = cfg.verbose || verbose;
        cfg.validate();

        if (generate->parsed()) {
            return run_generate(cfg, out_dir);
        }
        if (train->parsed()) {
            return run_train(cfg, data_dir, ckpt_out, init_ckpt);
        }
        if (predict->parsed()) {
            return run_predict(cfg, ckpt_path, image_path);
        }
        if (evaluate->parsed()) {
            return run_evaluate(cfg, eval_ckpt, eval_data, report_path);
        }
        if (nn->parsed()) {
            return run_nn_baseline(cfg, nn_data, nn_report);
        }
        if (render_cmd->parsed()) {
            return run_render(cfg, expr_text, render_out, ppm_out, render_noisy);
        }
        if (plot->parsed()) {
            return run_plot(cfg, pairs_path, plot_out, plot_scale);
        }
        std::fprintf(stderr, "error: config: no subcommand selected\n");
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: config: %s\n", e.what());
        return 2;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "error: data: %s\n", e.what());
        return 3;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: data: %s\n", e.what());
        return 3;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: data: %s\n", e.what());
        return 3;
    } catch (const ChecksumError& e) {
        std::fprintf(stderr, "error: data: %s\n", e.what());
        return 3;
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "error: data: %s\n", e.what());
        return 3;
    } catch (const EmptyTestSet& e) {
        std::fprintf(stderr, "error: data: %s\n", e.what());
        return 3;
    } catch (const EmptyTrainSet& e) {
        std::fprintf(stderr, "error: data: %s\n", e.what());
        return 3;
    } catch (const LengthExceeded& e) {
        std::fprintf(stderr, "error: numeric: %s\n", e.what());
        return 4;
    } catch (const NonFiniteLoss& e) {
        std::fprintf(stderr, "error: numeric: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: numeric: %s\n", e.what());
        return 4;
    }
}
