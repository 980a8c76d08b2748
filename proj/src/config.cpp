#include "livegraph/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <variant>

namespace livegraph {

namespace {

using Binding = std::variant<int RunConfig::*, double RunConfig::*, bool RunConfig::*,
                             std::uint64_t RunConfig::*, std::string RunConfig::*,
                             int WorldConfig::*, double WorldConfig::*>;

const std::map<std::string, Binding>& bindings() {
    static const std::map<std::string, Binding> table = {
        {"world.num_concepts", &WorldConfig::num_concepts},
        {"world.clusters", &WorldConfig::clusters},
        {"world.num_exercises", &WorldConfig::num_exercises},
        {"world.num_students", &WorldConfig::num_students},
        {"world.concepts_min", &WorldConfig::concepts_min},
        {"world.concepts_max", &WorldConfig::concepts_max},
        {"world.bridge_fraction", &WorldConfig::bridge_fraction},
        {"world.bridge_pick_prob", &WorldConfig::bridge_pick_prob},
        {"world.pareto_alpha", &WorldConfig::pareto_alpha},
        {"world.min_history", &WorldConfig::min_history},
        {"world.max_history", &WorldConfig::max_history},
        {"world.steps_per_cluster", &WorldConfig::steps_per_cluster},
        {"world.difficulty_sigma", &WorldConfig::difficulty_sigma},
        {"world.within_s", &WorldConfig::within_s},
        {"world.adjacent_s", &WorldConfig::adjacent_s},
        {"model.dim", &RunConfig::dim},
        {"model.prior_dim", &RunConfig::prior_dim},
        {"kernel.eta", &RunConfig::eta},
        {"kernel.lambda1", &RunConfig::lambda1},
        {"kernel.lambda2", &RunConfig::lambda2},
        {"vae.beta", &RunConfig::beta},
        {"train.steps", &RunConfig::train_steps},
        {"train.batch_rank", &RunConfig::batch_rank},
        {"train.list_size", &RunConfig::list_size},
        {"train.batch_probe", &RunConfig::batch_probe},
        {"train.meta_batch", &RunConfig::meta_batch},
        {"train.meta_support", &RunConfig::meta_support},
        {"train.meta_query", &RunConfig::meta_query},
        {"train.inner_steps", &RunConfig::inner_steps},
        {"train.inner_alpha", &RunConfig::inner_alpha},
        {"train.beta_meta", &RunConfig::beta_meta},
        {"train.lr", &RunConfig::lr},
        {"train.clip", &RunConfig::clip},
        {"train.lambda_vae", &RunConfig::lambda_vae},
        {"train.lambda_ker", &RunConfig::lambda_ker},
        {"train.lambda_meta", &RunConfig::lambda_meta},
        {"train.omega_in_kernel_loss", &RunConfig::omega_in_kernel_loss},
        {"train.std_stop_grad", &RunConfig::std_stop_grad},
        {"reward.gamma1", &RunConfig::gamma1},
        {"reward.gamma2", &RunConfig::gamma2},
        {"reward.gamma3", &RunConfig::gamma3},
        {"serve.top_k", &RunConfig::top_k},
        {"serve.candidates", &RunConfig::candidates},
        {"serve.p_min", &RunConfig::p_min},
        {"serve.p_max", &RunConfig::p_max},
        {"probe.gate", &RunConfig::probe_gate},
        {"probe.budget", &RunConfig::probe_budget},
        {"probe.marginal_refresh", &RunConfig::marginal_refresh},
        {"probe.marginal_pretrain", &RunConfig::marginal_pretrain},
        {"eval.holdout", &RunConfig::holdout},
        {"eval.online_cycles", &RunConfig::online_cycles},
        {"seed", &RunConfig::seed},
        {"variant", &RunConfig::variant},
        {"dataset", &RunConfig::dataset_path},
    };
    return table;
}

template <typename T>
T parse_scalar(const std::string& key, const std::string& value);

template <>
int parse_scalar<int>(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": expected integer, got '" + value + "'");
    }
}

template <>
std::uint64_t parse_scalar<std::uint64_t>(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": expected unsigned integer, got '" + value +
                          "'");
    }
}

template <>
double parse_scalar<double>(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": expected number, got '" + value + "'");
    }
}

template <>
bool parse_scalar<bool>(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true") return true;
    if (value == "0" || value == "false") return false;
    throw ConfigError("config key " + key + ": expected boolean, got '" + value + "'");
}

std::string format_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto it = bindings().find(key);
    if (it == bindings().end()) throw ConfigError("unknown config key: " + key);
    RunConfig& cfg = *this;
    std::visit(
        [&](auto member) {
            using M = std::decay_t<decltype(member)>;
            if constexpr (std::is_same_v<M, int RunConfig::*>)
                cfg.*member = parse_scalar<int>(key, value);
            else if constexpr (std::is_same_v<M, double RunConfig::*>)
                cfg.*member = parse_scalar<double>(key, value);
            else if constexpr (std::is_same_v<M, bool RunConfig::*>)
                cfg.*member = parse_scalar<bool>(key, value);
            else if constexpr (std::is_same_v<M, std::uint64_t RunConfig::*>)
                cfg.*member = parse_scalar<std::uint64_t>(key, value);
            else if constexpr (std::is_same_v<M, std::string RunConfig::*>)
                cfg.*member = value;
            else if constexpr (std::is_same_v<M, int WorldConfig::*>)
                cfg.world.*member = parse_scalar<int>(key, value);
            else if constexpr (std::is_same_v<M, double WorldConfig::*>)
                cfg.world.*member = parse_scalar<double>(key, value);
        },
        it->second);
}

std::string RunConfig::serialize() const {
    const RunConfig& cfg = *this;
    std::ostringstream out;
    for (const auto& [key, binding] : bindings()) {
        out << key << '=';
        std::visit(
            [&](auto member) {
                using M = std::decay_t<decltype(member)>;
                if constexpr (std::is_same_v<M, int RunConfig::*>)
                    out << cfg.*member;
                else if constexpr (std::is_same_v<M, double RunConfig::*>)
                    out << format_double(cfg.*member);
                else if constexpr (std::is_same_v<M, bool RunConfig::*>)
                    out << (cfg.*member ? 1 : 0);
                else if constexpr (std::is_same_v<M, std::uint64_t RunConfig::*>)
                    out << cfg.*member;
                else if constexpr (std::is_same_v<M, std::string RunConfig::*>)
                    out << cfg.*member;
                else if constexpr (std::is_same_v<M, int WorldConfig::*>)
                    out << cfg.world.*member;
                else if constexpr (std::is_same_v<M, double WorldConfig::*>)
                    out << format_double(cfg.world.*member);
            },
            binding);
        out << '\n';
    }
    return out.str();
}

std::uint64_t RunConfig::hash() const {
    const std::string text = serialize();
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        if (line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
        cfg.set(line.substr(first, eq - first), line.substr(eq + 1));
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& [key, binding] : bindings()) out.push_back(key);
    return out;
}

}  // namespace livegraph
