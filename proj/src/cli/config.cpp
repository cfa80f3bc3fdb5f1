#include "optflow/cli/config.hpp"

#include "json.hpp"

#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

namespace optflow::cli {

namespace {

using nlohmann::json;

[[noreturn]] void bad_key(const std::string& key, const std::string& what) {
    throw Error(ErrorCode::InvalidConfig, "config key '" + key + "': " + what);
}

int as_int(const std::string& key, const json& v) {
    if (!v.is_number_integer()) bad_key(key, "expected an integer");
    const auto wide = v.get<long long>();
    if (wide < std::numeric_limits<int>::min() || wide > std::numeric_limits<int>::max()) {
        bad_key(key, "integer out of range");
    }
    return static_cast<int>(wide);
}

double as_double(const std::string& key, const json& v) {
    if (!v.is_number()) bad_key(key, "expected a number");
    return v.get<double>();
}

bool as_bool(const std::string& key, const json& v) {
    if (!v.is_boolean()) bad_key(key, "expected true or false");
    return v.get<bool>();
}

using Setter = std::function<void(Hyperparams&, const std::string&, const json&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"k_local", [](Hyperparams& h, const std::string& k, const json& v) { h.k_local = as_int(k, v); }},
        {"k_rigid", [](Hyperparams& h, const std::string& k, const json& v) { h.k_rigid = as_int(k, v); }},
        {"epsilon", [](Hyperparams& h, const std::string& k, const json& v) { h.epsilon = as_double(k, v); }},
        {"alpha_rigid", [](Hyperparams& h, const std::string& k, const json& v) { h.alpha_rigid = as_double(k, v); }},
        {"d_init", [](Hyperparams& h, const std::string& k, const json& v) { h.d_init = as_double(k, v); }},
        {"d_floor", [](Hyperparams& h, const std::string& k, const json& v) { h.d_floor = as_double(k, v); }},
        {"halving_interval",
         [](Hyperparams& h, const std::string& k, const json& v) { h.halving_interval = as_int(k, v); }},
        {"learning_rate",
         [](Hyperparams& h, const std::string& k, const json& v) { h.learning_rate = as_double(k, v); }},
        {"max_iters", [](Hyperparams& h, const std::string& k, const json& v) { h.max_iters = as_int(k, v); }},
        {"early_stop_patience",
         [](Hyperparams& h, const std::string& k, const json& v) { h.early_stop_patience = as_int(k, v); }},
        {"early_stop_rel_tol",
         [](Hyperparams& h, const std::string& k, const json& v) { h.early_stop_rel_tol = as_double(k, v); }},
        {"bidirectional",
         [](Hyperparams& h, const std::string& k, const json& v) { h.bidirectional = as_bool(k, v); }},
        {"seed",
         [](Hyperparams& h, const std::string& k, const json& v) {
             if (!v.is_number_unsigned()) bad_key(k, "expected a nonnegative integer");
             h.seed = v.get<std::uint64_t>();
         }},
        {"fit_combine",
         [](Hyperparams& h, const std::string& k, const json& v) {
             if (v == "sum") {
                 h.fit_combine = FitCombine::Sum;
             } else if (v == "mean") {
                 h.fit_combine = FitCombine::Mean;
             } else {
                 bad_key(k, "expected \"sum\" or \"mean\"");
             }
         }},
        {"weight_decay", [](Hyperparams& h, const std::string& k, const json& v) { h.weight_decay = as_double(k, v); }},
        {"ego_motion", [](Hyperparams& h, const std::string& k, const json& v) { h.ego_motion = as_bool(k, v); }},
        {"icp_max_iters", [](Hyperparams& h, const std::string& k, const json& v) { h.icp_max_iters = as_int(k, v); }},
        {"icp_rejection_dist",
         [](Hyperparams& h, const std::string& k, const json& v) { h.icp_rejection_dist = as_double(k, v); }},
    };
    return table;
}

}  // namespace

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, path + ": cannot open for reading");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

Hyperparams resolve_hyperparams(const std::optional<std::string>& config_text,
                                const std::optional<std::string>& profile_flag,
                                const std::optional<std::uint64_t>& seed_flag) {
    json doc = json::object();
    if (config_text) {
        try {
            doc = json::parse(*config_text);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
        }
        if (!doc.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
    }

    std::optional<std::string> profile = profile_flag;
    if (!profile && doc.contains("profile")) {
        if (!doc["profile"].is_string()) bad_key("profile", "expected a string");
        profile = doc["profile"].get<std::string>();
    }
    Hyperparams hp = profile ? profile_hyperparams(*profile) : Hyperparams{};

    const auto& table = setters();
    for (const auto& [key, value] : doc.items()) {
        if (key == "profile") continue;
        const auto it = table.find(key);
        if (it == table.end()) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
        it->second(hp, key, value);
    }

    if (seed_flag) hp.seed = *seed_flag;
    validate_hyperparams(hp);
    return hp;
}

}  // namespace optflow::cli
