// sduda: batch CLI for the synthetic two-domain adaptation benchmark.
// Subcommands: gen-data, train, eval, plot.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sduda/checkpoint.hpp"
#include "sduda/config.hpp"
#include "sduda/dataset.hpp"
#include "sduda/pipeline.hpp"

namespace fs = std::filesystem;
using Real = float;  // training precision

namespace {

int cmd_gen_data(const std::string& out_dir, int classes, int per_class, int per_class_test,
                 int points, const std::string& domain, std::uint64_t seed, bool force) {
    if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force) {
        std::cerr << "error: output directory " << out_dir
                  << " is not empty (use --force to overwrite)\n";
        return 1;
    }
    sduda::DomainSpec spec = domain == "source" ? sduda::DomainSpec::source_default()
                                                : sduda::DomainSpec::target_default();
    sduda::Rng root(seed, domain == "source" ? 10 : 11);
    auto train = sduda::make_dataset(classes, per_class, points, spec, root, 0);
    auto test = sduda::make_dataset(classes, per_class_test, points, spec, root, 1);
    sduda::write_dataset((fs::path(out_dir) / "train").string(), train, domain);
    sduda::write_dataset((fs::path(out_dir) / "test").string(), test, domain);
    std::cout << "wrote " << train.size() << " train + " << test.size() << " test samples to "
              << out_dir << "\n";
    return 0;
}

int cmd_train(const sduda::RunConfig& cfg, const std::string& src_dir, const std::string& tgt_dir,
              const std::string& tgt_test_dir, const std::string& out_dir) {
    auto src = sduda::read_dataset(src_dir, cfg.classes);
    auto tgt = sduda::read_dataset(tgt_dir, cfg.classes);
    auto tgt_test = sduda::read_dataset(tgt_test_dir, cfg.classes);

    fs::create_directories(out_dir);
    {
        std::ofstream os(fs::path(out_dir) / "config_resolved.txt");
        os << cfg.resolved();
        std::ofstream seed_os(fs::path(out_dir) / "seed.txt");
        seed_os << cfg.pipeline.seed << "\n";
    }

    auto result = sduda::run_full<Real>(cfg.pipeline, src.samples, tgt.samples, tgt_test.samples,
                                        /*benchmark_mode=*/true);
    result.metrics.write_csv((fs::path(out_dir) / "metrics.csv").string());
    auto exported = sduda::export_inference_params(result.dual);
    sduda::save_checkpoint(exported, (fs::path(out_dir) / "checkpoint.sdua").string());
    std::cout << "final target-test accuracy: " << result.final_target_accuracy << "\n";
    std::cout << "wrote " << out_dir << "/{config_resolved.txt,metrics.csv,checkpoint.sdua}\n";
    return 0;
}

sduda::EncoderConfig infer_encoder_config(const sduda::ParameterStore<Real>& store) {
    sduda::EncoderConfig cfg;
    cfg.point_mlp_widths.clear();
    cfg.head_widths.clear();
    for (std::size_t l = 0;; ++l) {
        auto it = store.params.find(sduda::layer_name("student", "enc", l, "W"));
        if (it == store.params.end()) break;
        if (cfg.point_mlp_widths.empty()) cfg.point_mlp_widths.push_back(it->second.rows());
        cfg.point_mlp_widths.push_back(it->second.cols());
    }
    for (std::size_t l = 0;; ++l) {
        auto it = store.params.find(sduda::layer_name("student", "head", l, "W"));
        if (it == store.params.end()) break;
        if (cfg.head_widths.empty()) cfg.head_widths.push_back(it->second.rows());
        cfg.head_widths.push_back(it->second.cols());
    }
    if (cfg.point_mlp_widths.size() < 2 || cfg.head_widths.size() < 2)
        throw sduda::format_error("checkpoint does not contain a student encoder and head");
    return cfg;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& report_path) {
    auto full = sduda::load_checkpoint<Real>(ckpt_path);
    sduda::DualEncoder<Real> dual;
    std::vector<std::string> ignored;
    for (const auto& [name, t] : full.params) {
        if (name.rfind("student/", 0) == 0)
            dual.params.add(name, t);
        else
            ignored.push_back(name);
    }
    if (!ignored.empty()) {
        std::cerr << "warning: ignoring " << ignored.size()
                  << " non-inference parameter(s) in checkpoint:\n";
        for (const auto& n : ignored) std::cerr << "  " << n << "\n";
    }
    dual.cfg = infer_encoder_config(dual.params);
    const int k = dual.cfg.num_classes();
    auto data = sduda::read_dataset(data_dir, k);

    std::vector<std::size_t> per_class_total(k, 0), per_class_correct(k, 0);
    for (const auto& s : data.samples) {
        const auto g = sduda::encode(dual.params, "student", dual.cfg, s.pc);
        const int pred = sduda::predict_label(sduda::classify(dual.params, dual.cfg, g));
        ++per_class_total[s.label];
        if (pred == s.label) ++per_class_correct[s.label];
    }
    std::ostringstream report;
    std::size_t total = 0, correct = 0;
    for (int c = 0; c < k; ++c) {
        total += per_class_total[c];
        correct += per_class_correct[c];
        const double acc = per_class_total[c]
                               ? static_cast<double>(per_class_correct[c]) / per_class_total[c]
                               : 0.0;
        report << "class " << c << " accuracy " << acc << " (" << per_class_correct[c] << "/"
               << per_class_total[c] << ")\n";
    }
    report << "overall accuracy " << (total ? static_cast<double>(correct) / total : 0.0) << " ("
           << correct << "/" << total << ")\n";
    std::cout << report.str();
    if (!report_path.empty()) {
        std::ofstream os(report_path);
        os << report.str();
    }
    return 0;
}

int cmd_plot(const std::vector<std::string>& metrics_files, const std::string& out_path) {
    std::vector<std::vector<double>> series;
    std::vector<std::string> names;
    for (const auto& path : metrics_files) {
        std::ifstream is(path);
        if (!is) throw sduda::format_error("cannot open metrics file: " + path);
        std::string line;
        if (!std::getline(is, line) || line != "round,epoch,split,metric,value")
            throw sduda::format_error("bad metrics header in " + path);
        std::vector<double> acc;
        while (std::getline(is, line)) {
            std::istringstream ss(line);
            std::string round, epoch, split, metric, value;
            std::getline(ss, round, ',');
            std::getline(ss, epoch, ',');
            std::getline(ss, split, ',');
            std::getline(ss, metric, ',');
            std::getline(ss, value, ',');
            if (split == "target_test" && metric == "accuracy")
                acc.push_back(std::stod(value));
        }
        if (acc.empty())
            throw sduda::format_error("no target_test accuracy rows in " + path);
        series.push_back(std::move(acc));
        names.push_back(fs::path(path).parent_path().filename().string().empty()
                            ? fs::path(path).stem().string()
                            : fs::path(path).parent_path().filename().string());
    }
    std::size_t min_len = series[0].size(), max_len = series[0].size();
    for (const auto& s : series) {
        min_len = std::min(min_len, s.size());
        max_len = std::max(max_len, s.size());
    }
    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        os = &file;
    }
    if (min_len != max_len)
        *os << "# note: epoch grids differ across runs; truncated to the shortest (" << min_len
            << " epochs)\n";
    *os << "epoch";
    for (const auto& n : names) *os << "," << n;
    *os << "\n";
    for (std::size_t e = 0; e < min_len; ++e) {
        *os << e;
        for (const auto& s : series) *os << "," << s[e];
        *os << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-distillation + GCN-refined self-training for point-cloud UDA"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset directory");
    std::string gen_out, gen_domain = "source";
    int gen_classes = 4, gen_per_class = 400, gen_per_class_test = 100, gen_points = 256;
    std::uint64_t gen_seed = 1;
    bool gen_force = false;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--classes", gen_classes, "number of shape classes (1-4)");
    gen->add_option("--per-class", gen_per_class, "training samples per class");
    gen->add_option("--per-class-test", gen_per_class_test, "test samples per class");
    gen->add_option("--points", gen_points, "points per cloud");
    gen->add_option("--domain", gen_domain, "source|target")
        ->check(CLI::IsMember({"source", "target"}));
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_flag("--force", gen_force, "overwrite a non-empty output directory");

    // train
    auto* train = app.add_subcommand("train", "run the full two-step pipeline");
    std::string tr_src, tr_tgt, tr_tgt_test, tr_out, tr_config, tr_loss_space;
    std::vector<std::string> tr_sets;
    bool no_sd = false, no_ref = false, no_st = false;
    train->add_option("--source", tr_src, "labeled source train dataset dir")->required();
    train->add_option("--target", tr_tgt, "unlabeled target train dataset dir")->required();
    train->add_option("--target-test", tr_tgt_test, "labeled target test dataset dir")->required();
    train->add_option("--out", tr_out, "run output directory")->required();
    train->add_option("--config", tr_config, "flat key=value config file");
    train->add_option("--set", tr_sets, "config override key=value (repeatable)");
    train->add_flag("--no-sd", no_sd, "disable self-distillation");
    train->add_flag("--no-ref", no_ref, "disable GCN refinement");
    train->add_flag("--no-st", no_st, "disable step-2 self-training");
    train->add_option("--loss-space", tr_loss_space, "feature|output")
        ->check(CLI::IsMember({"feature", "output"}));

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate an inference checkpoint");
    std::string ev_ckpt, ev_data, ev_report;
    eval->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    eval->add_option("--data", ev_data, "labeled dataset dir")->required();
    eval->add_option("--report", ev_report, "also write the report to this file");

    // plot
    auto* plot = app.add_subcommand("plot", "export aligned target-accuracy series as CSV");
    std::vector<std::string> pl_metrics;
    std::string pl_out;
    plot->add_option("--metrics", pl_metrics, "metrics.csv files (one per run)")->required();
    plot->add_option("--out", pl_out, "output CSV (stdout if omitted)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            if (gen_classes < 1) {
                std::cerr << "error: --classes must be >= 1\n";
                return 1;
            }
            return cmd_gen_data(gen_out, gen_classes, gen_per_class, gen_per_class_test,
                                gen_points, gen_domain, gen_seed, gen_force);
        }
        if (train->parsed()) {
            sduda::RunConfig cfg = sduda::RunConfig::defaults();
            if (!tr_config.empty()) cfg.load_file(tr_config);
            for (const auto& kv : tr_sets) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) {
                    std::cerr << "error: --set expects key=value, got " << kv << "\n";
                    return 1;
                }
                cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
            }
            if (no_sd) cfg.pipeline.enable_sd = false;
            if (no_ref) cfg.pipeline.enable_ref = false;
            if (no_st) cfg.pipeline.enable_st = false;
            if (!tr_loss_space.empty()) cfg.set("loss_space", tr_loss_space);
            if (const char* env_seed = std::getenv("SDUDA_SEED"))
                cfg.set("seed", env_seed);
            return cmd_train(cfg, tr_src, tr_tgt, tr_tgt_test, tr_out);
        }
        if (eval->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_report);
        if (plot->parsed()) return cmd_plot(pl_metrics, pl_out);
    } catch (const sduda::parameter_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const sduda::numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const sduda::format_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
