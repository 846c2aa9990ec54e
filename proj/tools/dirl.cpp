// Command-line driver: dataset generation, training, evaluation, prediction,
// the ablation matrix, and attention-map export.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "dirl/dirl.hpp"

namespace fs = std::filesystem;
using Scalar = float;

namespace {

struct ModelFlags {
    std::int64_t base_width = 8;
    std::int64_t size = 0;  // 0: infer from data
    std::string fusion = "bfi";
    std::string attention = "mda";
    std::string decoder = "ggd";
    std::string config_path;

    void attach(CLI::App* cmd) {
        cmd->add_option("--base-width", base_width, "channel width of the first stage");
        cmd->add_option("--size", size, "model input size (default: taken from the dataset)");
        cmd->add_option("--fusion", fusion, "transition stage: none|aim|bfi|bfi_up|bfi_down");
        cmd->add_option("--attention", attention, "refinement stage: none|da|mda");
        cmd->add_option("--decoder", decoder, "decoding stage: reg|ggd_sim|ggd");
        cmd->add_option("--config", config_path, "flat key=value config file (flags override it)");
    }

    dirl::ModelConfig build(CLI::App* cmd, std::int64_t data_h, std::int64_t data_w,
                            dirl::TrainConfig* train_out) const {
        dirl::ModelConfig m;
        dirl::TrainConfig t;
        if (!config_path.empty()) {
            std::ifstream is(config_path);
            if (!is) throw dirl::IoError("cannot open: " + config_path);
            std::stringstream ss;
            ss << is.rdbuf();
            dirl::parse_config(ss.str(), m, t);
        }
        if (cmd->count("--base-width") || config_path.empty()) {
            m.base_width = base_width;
            m.channels = dirl::channels_from_base_width(base_width);
        }
        if (cmd->count("--fusion") || config_path.empty()) m.fusion_variant = dirl::fusion_variant_from(fusion);
        if (cmd->count("--attention") || config_path.empty())
            m.attention_variant = dirl::attention_variant_from(attention);
        if (cmd->count("--decoder") || config_path.empty()) m.decoder_variant = dirl::decoder_variant_from(decoder);
        if (cmd->count("--size")) {
            m.input_h = m.input_w = size;
        } else if (config_path.empty() && data_h > 0) {
            m.input_h = data_h;
            m.input_w = data_w;
        }
        if (train_out) *train_out = t;
        return m;
    }
};

struct TrainFlags {
    dirl::TrainConfig defaults;
    std::int64_t epochs = 200;
    std::int64_t batch = 4;
    double lr = 1e-4;
    std::uint64_t seed = 1;
    double lambda_aux = 0.1;
    double weight_decay = 1e-4;
    std::int64_t decay_epoch = 30;
    double decay_factor = 0.5;

    void attach(CLI::App* cmd) {
        cmd->add_option("--epochs", epochs, "training epochs");
        cmd->add_option("--batch", batch, "batch size");
        cmd->add_option("--lr", lr, "initial learning rate");
        cmd->add_option("--seed", seed, "seed for init and batch order");
        cmd->add_option("--lambda-aux", lambda_aux, "weight of the attention supervision loss");
        cmd->add_option("--weight-decay", weight_decay, "L2 weight decay");
        cmd->add_option("--decay-epoch", decay_epoch, "epochs between learning-rate halvings");
        cmd->add_option("--decay-factor", decay_factor, "learning-rate decay factor");
    }

    dirl::TrainConfig build(CLI::App* cmd, dirl::TrainConfig base) const {
        auto set = [&](const char* flag, auto member, auto value) {
            if (cmd->count(flag)) base.*member = value;
        };
        set("--epochs", &dirl::TrainConfig::epochs, epochs);
        set("--batch", &dirl::TrainConfig::batch_size, batch);
        set("--lr", &dirl::TrainConfig::lr, lr);
        set("--seed", &dirl::TrainConfig::seed, seed);
        set("--lambda-aux", &dirl::TrainConfig::lambda_aux, lambda_aux);
        set("--weight-decay", &dirl::TrainConfig::weight_decay, weight_decay);
        set("--decay-epoch", &dirl::TrainConfig::decay_epoch, decay_epoch);
        set("--decay-factor", &dirl::TrainConfig::decay_factor, decay_factor);
        return base;
    }
};

dirl::DirlNet<Scalar> load_net(const std::string& ckpt) {
    auto [model_cfg, train_cfg] = dirl::read_checkpoint_config(ckpt);
    dirl::DirlNet<Scalar> net(model_cfg, 0);
    auto reg = net.registry();
    dirl::load_checkpoint_into(ckpt, reg);
    return net;
}

std::string sample_id(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%04zu", i);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DIRL inharmonious-region localization toolkit"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic composite dataset");
    std::uint64_t gen_seed = 7;
    std::int64_t gen_count = 16, gen_size = 64;
    std::string gen_out;
    double area_min = 0.02, area_max = 0.5;
    gen->add_option("--seed", gen_seed, "dataset seed");
    gen->add_option("--count", gen_count, "number of samples")->required();
    gen->add_option("--size", gen_size, "square image size");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--area-min", area_min, "minimum foreground area fraction");
    gen->add_option("--area-max", area_max, "maximum foreground area fraction");

    // train
    auto* tr = app.add_subcommand("train", "train a model on a generated manifest");
    std::string tr_data, tr_out, tr_log;
    bool tr_verbose = false;
    ModelFlags tr_model;
    TrainFlags tr_train;
    tr->add_option("--data", tr_data, "manifest path")->required();
    tr->add_option("--out", tr_out, "checkpoint output path")->required();
    tr->add_option("--log", tr_log, "training log CSV path");
    tr->add_flag("--verbose", tr_verbose, "print per-epoch progress");
    tr_model.attach(tr);
    tr_train.attach(tr);

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    std::string ev_ckpt, ev_data, ev_out;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
    ev->add_option("--data", ev_data, "manifest path")->required();
    ev->add_option("--out", ev_out, "metrics CSV path")->required();

    // predict
    auto* pr = app.add_subcommand("predict", "write predicted masks for a manifest");
    std::string pr_ckpt, pr_data, pr_out;
    pr->add_option("--ckpt", pr_ckpt, "checkpoint path")->required();
    pr->add_option("--data", pr_data, "manifest path")->required();
    pr->add_option("--out", pr_out, "output directory")->required();

    // ablate
    auto* ab = app.add_subcommand("ablate", "train and evaluate ablation rows");
    std::string ab_rows = "1,2,3,4,5,6,7,8,9,10";
    std::string ab_data, ab_eval_data, ab_out;
    int ab_threads = 1;
    bool ab_verbose = false;
    ModelFlags ab_model;
    TrainFlags ab_train;
    ab->add_option("--rows", ab_rows, "comma-separated row ids (1..10)");
    ab->add_option("--data", ab_data, "training manifest")->required();
    ab->add_option("--eval-data", ab_eval_data, "held-out manifest (default: training data)");
    ab->add_option("--out", ab_out, "directory for summary CSV");
    ab->add_option("--threads", ab_threads, "rows trained in parallel");
    ab->add_flag("--verbose", ab_verbose, "print per-epoch progress");
    ab_model.attach(ab);
    ab_train.attach(ab);

    // export-attn
    auto* ex = app.add_subcommand("export-attn", "dump spatial attention maps as grayscale rasters");
    std::string ex_ckpt, ex_data, ex_out;
    ex->add_option("--ckpt", ex_ckpt, "checkpoint path")->required();
    ex->add_option("--data", ex_data, "manifest path")->required();
    ex->add_option("--out", ex_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) {
            dirl::DatagenOptions opt;
            opt.area_min = area_min;
            opt.area_max = area_max;
            auto samples = dirl::generate<Scalar>(gen_seed, gen_count, gen_size, gen_size, opt);
            const std::string manifest = dirl::write_manifest(samples, gen_out);
            std::cout << "wrote " << samples.size() << " samples, manifest " << manifest << "\n";
        } else if (tr->parsed()) {
            auto data = dirl::load_manifest<Scalar>(tr_data);
            dirl::TrainConfig cfg_from_file;
            const auto& s0 = data.front().image.shape();
            dirl::ModelConfig model_cfg = tr_model.build(tr, s0.h, s0.w, &cfg_from_file);
            dirl::TrainConfig train_cfg = tr_train.build(tr, cfg_from_file);
            auto result = dirl::train(model_cfg, train_cfg, data, tr_verbose);
            auto reg = result.net.registry();
            dirl::save_checkpoint(tr_out, model_cfg, train_cfg, reg);
            if (!tr_log.empty()) dirl::write_training_log(result.log, tr_log);
            std::cout << "trained " << train_cfg.epochs << " epochs, final total loss " << result.final_total
                      << ", checkpoint " << tr_out << "\n";
        } else if (ev->parsed()) {
            auto net = load_net(ev_ckpt);
            auto data = dirl::load_manifest<Scalar>(ev_data);
            auto report = dirl::evaluate(net, data);
            dirl::write_metrics_csv(report, ev_out);
            std::cout << "AP " << report.ap << "  F1 " << report.f1 << "  IoU " << report.iou << "  (" << ev_out
                      << ")\n";
        } else if (pr->parsed()) {
            auto net = load_net(pr_ckpt);
            auto data = dirl::load_manifest<Scalar>(pr_data);
            fs::create_directories(pr_out);
            for (std::size_t i = 0; i < data.size(); ++i) {
                dirl::Tensor<Scalar> pred = dirl::predict(net, data[i].image);
                dirl::write_pgm(pred, (fs::path(pr_out) / (sample_id(i) + "_pred.pgm")).string());
            }
            std::cout << "wrote " << data.size() << " masks to " << pr_out << "\n";
        } else if (ab->parsed()) {
            auto data = dirl::load_manifest<Scalar>(ab_data);
            std::vector<dirl::CompositeSample<Scalar>> eval_data;
            if (!ab_eval_data.empty()) eval_data = dirl::load_manifest<Scalar>(ab_eval_data);
            dirl::TrainConfig cfg_from_file;
            const auto& s0 = data.front().image.shape();
            dirl::ModelConfig base_cfg = ab_model.build(ab, s0.h, s0.w, &cfg_from_file);
            dirl::TrainConfig train_cfg = ab_train.build(ab, cfg_from_file);
            std::vector<dirl::AblationRow> rows;
            const auto table = dirl::ablation_table();
            std::stringstream ss(ab_rows);
            std::string item;
            while (std::getline(ss, item, ',')) {
                const int id = std::stoi(item);
                if (id < 1 || id > 10) throw dirl::ConfigError("ablation rows are 1..10, got " + item);
                rows.push_back(table[static_cast<std::size_t>(id - 1)]);
            }
            auto entries = dirl::run_ablation(rows, base_cfg, train_cfg, data, eval_data, ab_threads, ab_verbose);
            std::cout << dirl::ablation_text_table(entries);
            if (!ab_out.empty()) {
                fs::create_directories(ab_out);
                const std::string csv_path = (fs::path(ab_out) / "ablation_summary.csv").string();
                std::ofstream os(csv_path, std::ios::binary);
                if (!os) throw dirl::IoError("cannot open for write: " + csv_path);
                os << dirl::ablation_csv(entries);
                std::cout << "summary " << csv_path << "\n";
            }
        } else if (ex->parsed()) {
            auto net = load_net(ex_ckpt);
            if (net.cfg.attention_variant == dirl::AttentionVariant::NONE)
                throw dirl::ConfigError("checkpoint has no attention stage to export");
            auto data = dirl::load_manifest<Scalar>(ex_data);
            fs::create_directories(ex_out);
            for (std::size_t i = 0; i < data.size(); ++i) {
                auto maps = dirl::predict_attention(net, data[i].image);
                for (std::size_t k = 0; k < maps.size(); ++k)
                    dirl::write_pgm(maps[k],
                                    (fs::path(ex_out) / (sample_id(i) + "_attn" + std::to_string(k + 1) + ".pgm")).string());
            }
            std::cout << "wrote attention maps for " << data.size() << " images to " << ex_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
