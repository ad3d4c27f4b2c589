#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "sduda/pipeline.hpp"

namespace sduda {

// Flat `key = value` run configuration with `#` comments. Unknown keys are
// rejected; the fully resolved set is logged verbatim with every run.
struct RunConfig {
    PipelineConfig pipeline;
    int classes = 4;
    int points = 256;

    static RunConfig defaults() { return RunConfig{}; }

    void set(const std::string& key, const std::string& value) {
        auto as_double = [&]() {
            char* end = nullptr;
            double v = std::strtod(value.c_str(), &end);
            if (end == value.c_str() || *end != '\0')
                throw parameter_error("config: bad numeric value for " + key + ": " + value);
            return v;
        };
        auto as_int = [&]() { return static_cast<int>(as_double()); };
        auto as_bool = [&]() {
            if (value == "true" || value == "1") return true;
            if (value == "false" || value == "0") return false;
            throw parameter_error("config: bad boolean for " + key + ": " + value);
        };

        if (key == "seed") pipeline.seed = static_cast<std::uint64_t>(as_double());
        else if (key == "classes") { classes = as_int(); sync_classes(); }
        else if (key == "points") points = as_int();
        else if (key == "descriptor_dim") { set_descriptor_dim(as_int()); }
        else if (key == "tau_student") pipeline.distill.tau_student = as_double();
        else if (key == "tau_teacher") pipeline.distill.tau_teacher = as_double();
        else if (key == "loss_space") {
            if (value == "feature") pipeline.distill.loss_space = LossSpace::feature;
            else if (value == "output") pipeline.distill.loss_space = LossSpace::output;
            else throw parameter_error("config: loss_space must be feature or output");
        }
        else if (key == "ema_momentum") pipeline.ema_momentum = as_double();
        else if (key == "step1_epochs") pipeline.schedule.step1_epochs = as_int();
        else if (key == "rounds") pipeline.schedule.rounds = as_int();
        else if (key == "epochs_per_round") pipeline.schedule.epochs_per_round = as_int();
        else if (key == "theta_start") pipeline.schedule.theta_start = as_double();
        else if (key == "theta_end") pipeline.schedule.theta_end = as_double();
        else if (key == "lambda_nonconfident") pipeline.schedule.lambda_nonconfident = as_double();
        else if (key == "batch_per_domain") pipeline.batch_per_domain = as_int();
        else if (key == "lr") pipeline.adam.lr = as_double();
        else if (key == "adam_beta1") pipeline.adam.beta1 = as_double();
        else if (key == "adam_beta2") pipeline.adam.beta2 = as_double();
        else if (key == "adam_eps") pipeline.adam.eps = as_double();
        else if (key == "eps_mode") {
            if (value == "fixed") pipeline.epsilon_calibrated = false;
            else if (value == "calibrated") pipeline.epsilon_calibrated = true;
            else throw parameter_error("config: eps_mode must be fixed or calibrated");
        }
        else if (key == "eps_value") pipeline.epsilon = as_double();
        else if (key == "target_degree") pipeline.target_degree = as_double();
        else if (key == "gcn_hidden1") pipeline.gcn.hidden1 = as_int();
        else if (key == "gcn_hidden2") pipeline.gcn.hidden2 = as_int();
        else if (key == "gcn_epochs") pipeline.gcn.epochs = as_int();
        else if (key == "gcn_lr") pipeline.gcn.lr = as_double();
        else if (key == "jitter_sigma") pipeline.aug.jitter_sigma = as_double();
        else if (key == "jitter_clip") pipeline.aug.jitter_clip = as_double();
        else if (key == "scale_low") pipeline.aug.scale_low = as_double();
        else if (key == "scale_high") pipeline.aug.scale_high = as_double();
        else if (key == "elastic_grid") pipeline.aug.elastic_grid = as_int();
        else if (key == "elastic_mag") pipeline.aug.elastic_mag = as_double();
        else if (key == "removal_frac_low") pipeline.aug.removal_frac_low = as_double();
        else if (key == "removal_frac_high") pipeline.aug.removal_frac_high = as_double();
        else if (key == "enable_removal") pipeline.aug.enable_removal = as_bool();
        else if (key == "enable_sd") pipeline.enable_sd = as_bool();
        else if (key == "enable_ref") pipeline.enable_ref = as_bool();
        else if (key == "enable_st") pipeline.enable_st = as_bool();
        else throw parameter_error("config: unknown key: " + key);
    }

    void load_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw format_error("cannot open config file: " + path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw format_error("config line " + std::to_string(lineno) +
                                   ": expected key = value");
            set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }

    // Every key, resolved, in a re-loadable form.
    std::string resolved() const {
        std::ostringstream os;
        os.precision(17);
        os << "seed = " << pipeline.seed << "\n";
        os << "classes = " << classes << "\n";
        os << "points = " << points << "\n";
        os << "descriptor_dim = " << pipeline.encoder.descriptor_dim() << "\n";
        os << "tau_student = " << pipeline.distill.tau_student << "\n";
        os << "tau_teacher = " << pipeline.distill.tau_teacher << "\n";
        os << "loss_space = "
           << (pipeline.distill.loss_space == LossSpace::feature ? "feature" : "output") << "\n";
        os << "ema_momentum = " << pipeline.ema_momentum << "\n";
        os << "step1_epochs = " << pipeline.schedule.step1_epochs << "\n";
        os << "rounds = " << pipeline.schedule.rounds << "\n";
        os << "epochs_per_round = " << pipeline.schedule.epochs_per_round << "\n";
        os << "theta_start = " << pipeline.schedule.theta_start << "\n";
        os << "theta_end = " << pipeline.schedule.theta_end << "\n";
        os << "lambda_nonconfident = " << pipeline.schedule.lambda_nonconfident << "\n";
        os << "batch_per_domain = " << pipeline.batch_per_domain << "\n";
        os << "lr = " << pipeline.adam.lr << "\n";
        os << "adam_beta1 = " << pipeline.adam.beta1 << "\n";
        os << "adam_beta2 = " << pipeline.adam.beta2 << "\n";
        os << "adam_eps = " << pipeline.adam.eps << "\n";
        os << "eps_mode = " << (pipeline.epsilon_calibrated ? "calibrated" : "fixed") << "\n";
        os << "eps_value = " << pipeline.epsilon << "\n";
        os << "target_degree = " << pipeline.target_degree << "\n";
        os << "gcn_hidden1 = " << pipeline.gcn.hidden1 << "\n";
        os << "gcn_hidden2 = " << pipeline.gcn.hidden2 << "\n";
        os << "gcn_epochs = " << pipeline.gcn.epochs << "\n";
        os << "gcn_lr = " << pipeline.gcn.lr << "\n";
        os << "jitter_sigma = " << pipeline.aug.jitter_sigma << "\n";
        os << "jitter_clip = " << pipeline.aug.jitter_clip << "\n";
        os << "scale_low = " << pipeline.aug.scale_low << "\n";
        os << "scale_high = " << pipeline.aug.scale_high << "\n";
        os << "elastic_grid = " << pipeline.aug.elastic_grid << "\n";
        os << "elastic_mag = " << pipeline.aug.elastic_mag << "\n";
        os << "removal_frac_low = " << pipeline.aug.removal_frac_low << "\n";
        os << "removal_frac_high = " << pipeline.aug.removal_frac_high << "\n";
        os << "enable_removal = " << (pipeline.aug.enable_removal ? "true" : "false") << "\n";
        os << "enable_sd = " << (pipeline.enable_sd ? "true" : "false") << "\n";
        os << "enable_ref = " << (pipeline.enable_ref ? "true" : "false") << "\n";
        os << "enable_st = " << (pipeline.enable_st ? "true" : "false") << "\n";
        return os.str();
    }

private:
    static std::string trim(std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }

    void sync_classes() { pipeline.encoder.head_widths.back() = classes; }

    void set_descriptor_dim(int d) {
        pipeline.encoder.point_mlp_widths.back() = d;
        pipeline.encoder.head_widths.front() = d;
    }
};

}  // namespace sduda
