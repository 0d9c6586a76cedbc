// SPDX-License-Identifier: Apache-2.0
#include "nbfusion/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "nbfusion/errors.hpp"

namespace nbf {

void AblationFlags::validate() const {
    if (disable_text_branch && disable_visual_branch) {
        throw ConfigError("config: at most one of disable_text_branch / disable_visual_branch");
    }
    if (!(precorrupt_text_level >= 0.0 && precorrupt_text_level <= 1.0)) {
        throw ConfigError("config: precorrupt_text_level outside [0,1]");
    }
}

CurriculumSchedule RunConfig::resolved_schedule() const {
    CurriculumSchedule s = CurriculumSchedule::defaults(train.epochs);
    s.lambda_start = lambda_start;
    s.lambda_end = lambda_end;
    if (p1_end != 0) s.p1_end = p1_end;
    if (p2_end != 0) s.p2_end = p2_end;
    s.validate();
    return s;
}

void RunConfig::validate() const {
    train.validate();
    synth.validate();
    ablation.validate();
    resolved_schedule();
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: bad numeric value '" + value + "' for key '" + key + "'");
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer value '" + value + "' for key '" + key + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("config: bad boolean value '" + value + "' for key '" + key + "'");
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    using Setter = std::function<void(const std::string&, const std::string&)>;
    const std::map<std::string, Setter> setters = {
        {"batch_size", [&](auto& k, auto& v) { cfg.train.batch_size = parse_uint(k, v); }},
        {"learning_rate", [&](auto& k, auto& v) { cfg.train.learning_rate = parse_double(k, v); }},
        {"beta1", [&](auto& k, auto& v) { cfg.train.beta1 = parse_double(k, v); }},
        {"beta2", [&](auto& k, auto& v) { cfg.train.beta2 = parse_double(k, v); }},
        {"adam_epsilon", [&](auto& k, auto& v) { cfg.train.adam_epsilon = parse_double(k, v); }},
        {"epochs", [&](auto& k, auto& v) { cfg.train.epochs = parse_uint(k, v); }},
        {"seed", [&](auto& k, auto& v) { cfg.train.seed = parse_uint(k, v); }},
        {"lambda_start", [&](auto& k, auto& v) { cfg.lambda_start = parse_double(k, v); }},
        {"lambda_end", [&](auto& k, auto& v) { cfg.lambda_end = parse_double(k, v); }},
        {"p1_end", [&](auto& k, auto& v) { cfg.p1_end = parse_uint(k, v); }},
        {"p2_end", [&](auto& k, auto& v) { cfg.p2_end = parse_uint(k, v); }},
        {"samples_per_class", [&](auto& k, auto& v) { cfg.synth.samples_per_class = parse_uint(k, v); }},
        {"d_i", [&](auto& k, auto& v) { cfg.synth.d_i = parse_uint(k, v); }},
        {"d_t", [&](auto& k, auto& v) { cfg.synth.d_t = parse_uint(k, v); }},
        {"delta_img", [&](auto& k, auto& v) { cfg.synth.delta_img = parse_double(k, v); }},
        {"pd_d_gap", [&](auto& k, auto& v) { cfg.synth.pd_d_gap = parse_double(k, v); }},
        {"delta_txt", [&](auto& k, auto& v) { cfg.synth.delta_txt = parse_double(k, v); }},
        {"text_offset", [&](auto& k, auto& v) { cfg.synth.text_offset = parse_double(k, v); }},
        {"sigma", [&](auto& k, auto& v) { cfg.synth.sigma = parse_double(k, v); }},
        {"noise_rate", [&](auto& k, auto& v) { cfg.synth.noise_rate = parse_double(k, v); }},
        {"noise_level", [&](auto& k, auto& v) { cfg.synth.noise_level = parse_double(k, v); }},
        {"train_fraction", [&](auto& k, auto& v) { cfg.synth.train_fraction = parse_double(k, v); }},
        {"synth_seed", [&](auto& k, auto& v) { cfg.synth.seed = parse_uint(k, v); }},
        {"disable_text_branch",
         [&](auto& k, auto& v) { cfg.ablation.disable_text_branch = parse_bool(k, v); }},
        {"disable_visual_branch",
         [&](auto& k, auto& v) { cfg.ablation.disable_visual_branch = parse_bool(k, v); }},
        {"disable_prmf", [&](auto& k, auto& v) { cfg.ablation.disable_prmf = parse_bool(k, v); }},
        {"disable_curriculum",
         [&](auto& k, auto& v) { cfg.ablation.disable_curriculum = parse_bool(k, v); }},
        {"disable_confidence",
         [&](auto& k, auto& v) { cfg.ablation.disable_confidence = parse_bool(k, v); }},
        {"precorrupt_text_level",
         [&](auto& k, auto& v) { cfg.ablation.precorrupt_text_level = parse_double(k, v); }},
        {"separate_image_head",
         [&](auto& k, auto& v) { cfg.separate_image_head = parse_bool(k, v); }},
        {"data_dir", [&](auto&, auto& v) { cfg.data_dir = v; }},
        {"out_dir", [&](auto&, auto& v) { cfg.out_dir = v; }},
    };

    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = setters.find(key);
        if (it == setters.end()) {
            throw ConfigError("config: unknown key '" + key + "' on line " + std::to_string(lineno));
        }
        it->second(key, value);
    }
    cfg.validate();
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::string render_config(const RunConfig& c) {
    const CurriculumSchedule s = c.resolved_schedule();
    std::ostringstream out;
    char buf[128];
    const auto put_u = [&](const char* key, unsigned long long v) {
        std::snprintf(buf, sizeof(buf), "%s = %llu\n", key, v);
        out << buf;
    };
    const auto put_d = [&](const char* key, double v) {
        std::snprintf(buf, sizeof(buf), "%s = %.10g\n", key, v);
        out << buf;
    };
    const auto put_b = [&](const char* key, bool v) { out << key << " = " << (v ? "true" : "false") << "\n"; };

    put_u("batch_size", c.train.batch_size);
    put_d("learning_rate", c.train.learning_rate);
    put_d("beta1", c.train.beta1);
    put_d("beta2", c.train.beta2);
    put_d("adam_epsilon", c.train.adam_epsilon);
    put_u("epochs", c.train.epochs);
    put_u("seed", c.train.seed);
    put_d("lambda_start", s.lambda_start);
    put_d("lambda_end", s.lambda_end);
    put_u("p1_end", s.p1_end);
    put_u("p2_end", s.p2_end);
    put_u("samples_per_class", c.synth.samples_per_class);
    put_u("d_i", c.synth.d_i);
    put_u("d_t", c.synth.d_t);
    put_d("delta_img", c.synth.delta_img);
    put_d("pd_d_gap", c.synth.pd_d_gap);
    put_d("delta_txt", c.synth.delta_txt);
    put_d("text_offset", c.synth.text_offset);
    put_d("sigma", c.synth.sigma);
    put_d("noise_rate", c.synth.noise_rate);
    put_d("noise_level", c.synth.noise_level);
    put_d("train_fraction", c.synth.train_fraction);
    put_u("synth_seed", c.synth.seed);
    put_b("disable_text_branch", c.ablation.disable_text_branch);
    put_b("disable_visual_branch", c.ablation.disable_visual_branch);
    put_b("disable_prmf", c.ablation.disable_prmf);
    put_b("disable_curriculum", c.ablation.disable_curriculum);
    put_b("disable_confidence", c.ablation.disable_confidence);
    put_d("precorrupt_text_level", c.ablation.precorrupt_text_level);
    put_b("separate_image_head", c.separate_image_head);
    if (!c.data_dir.empty()) out << "data_dir = " << c.data_dir << "\n";
    if (!c.out_dir.empty()) out << "out_dir = " << c.out_dir << "\n";
    return out.str();
}

}  // namespace nbf
