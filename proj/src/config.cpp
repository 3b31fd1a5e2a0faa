#include "taskforge/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "taskforge/hash.hpp"
#include "taskforge/strings.hpp"

namespace taskforge {

namespace {

std::string interpolate_env(const std::string& value) {
    std::string out;
    size_t i = 0;
    while (i < value.size()) {
        if (value[i] == '$' && i + 1 < value.size() && value[i + 1] == '{') {
            size_t close = value.find('}', i + 2);
            if (close == std::string::npos) throw ConfigError("unterminated ${ in: " + value);
            std::string name = value.substr(i + 2, close - i - 2);
            const char* env = std::getenv(name.c_str());
            out += env ? env : "";
            i = close + 1;
        } else {
            out += value[i++];
        }
    }
    return out;
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": " + v);
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        return std::stod(v);
    } catch (const std::exception&) {
        throw ConfigError("bad number for " + key + ": " + v);
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    std::string t = strings::lower(v);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError("bad boolean for " + key + ": " + v);
}

}  // namespace

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_text(ss.str());
}

RunConfig RunConfig::parse_text(const std::string& text) {
    RunConfig cfg;
    std::map<std::string, std::string> entries;
    for (const auto& raw : strings::split_lines(text)) {
        std::string line = strings::trim(raw);
        if (line.empty() || line[0] == '#') continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key = value: " + line);
        std::string key = strings::trim(line.substr(0, eq));
        std::string value = interpolate_env(strings::trim(line.substr(eq + 1)));
        entries[key] = value;
    }
    cfg.raw_entries_ = entries;

    auto get = [&](const std::string& key) -> const std::string* {
        auto it = entries.find(key);
        return it == entries.end() ? nullptr : &it->second;
    };

    if (auto* v = get("workdir")) cfg.workdir = *v;
    if (auto* v = get("out_dir")) cfg.out_dir = *v;
    if (auto* v = get("image_manifest")) cfg.image_manifest = *v;
    if (auto* v = get("seed_taxonomy")) cfg.seed_taxonomy = *v;
    if (auto* v = get("prompt_dir")) cfg.prompt_dir = *v;
    if (auto* v = get("chat_backend")) cfg.chat_backend = *v;
    if (auto* v = get("embedding_backend")) cfg.embedding_backend = *v;
    if (auto* v = get("referee_backends")) {
        cfg.referee_backends.clear();
        for (auto& part : strings::split(*v, ','))
            cfg.referee_backends.push_back(strings::trim(part));
    }
    if (auto* v = get("k")) cfg.k = static_cast<int>(parse_u64("k", *v));
    if (auto* v = get("max_per_task"))
        cfg.max_per_task = static_cast<int>(parse_u64("max_per_task", *v));
    if (auto* v = get("allow_cap_override"))
        cfg.allow_cap_override = parse_bool("allow_cap_override", *v);
    if (auto* v = get("random_cap_per_task"))
        cfg.random_cap_per_task = parse_bool("random_cap_per_task", *v);
    if (auto* v = get("seed")) cfg.seed = parse_u64("seed", *v);
    if (auto* v = get("max_in_flight"))
        cfg.max_in_flight = static_cast<int>(parse_u64("max_in_flight", *v));
    if (auto* v = get("max_retries"))
        cfg.max_retries = static_cast<int>(parse_u64("max_retries", *v));
    if (auto* v = get("requests_per_minute"))
        cfg.requests_per_minute = parse_double("requests_per_minute", *v);
    if (auto* v = get("failure_ceiling")) cfg.failure_ceiling = parse_double("failure_ceiling", *v);
    if (auto* v = get("cot_enabled")) cfg.cot_enabled = parse_bool("cot_enabled", *v);
    if (auto* v = get("expansion_rounds"))
        cfg.expansion_rounds = static_cast<int>(parse_u64("expansion_rounds", *v));
    if (auto* v = get("expansion_max_level"))
        cfg.expansion_max_level = static_cast<int>(parse_u64("expansion_max_level", *v));
    if (auto* v = get("min_similarity")) cfg.min_similarity = parse_double("min_similarity", *v);
    if (auto* v = get("mock_referee_yes_percent"))
        cfg.mock_referee_yes_percent =
            static_cast<int>(parse_u64("mock_referee_yes_percent", *v));
    if (auto* v = get("mock_call_log")) cfg.mock_call_log = *v;

    // backend blocks: backend.<id>.<field> = value
    for (const auto& [key, value] : entries) {
        if (!strings::starts_with(key, "backend.")) continue;
        auto parts = strings::split(key, '.');
        if (parts.size() != 3) throw ConfigError("bad backend key: " + key);
        BackendSpec& spec = cfg.backends[parts[1]];
        spec.id = parts[1];
        if (parts[2] == "type") spec.type = value;
        else if (parts[2] == "base_url") spec.base_url = value;
        else if (parts[2] == "api_key") spec.api_key = value;
        else if (parts[2] == "model") spec.model = value;
        else if (parts[2] == "embedding_dim")
            spec.embedding_dim = parse_u64(key, value);
        else throw ConfigError("unknown backend field: " + key);
    }

    cfg.validate();
    return cfg;
}

void RunConfig::validate() const {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (max_per_task < 1) throw ConfigError("max_per_task must be >= 1");
    if (max_per_task > 55 && !allow_cap_override)
        throw ConfigError("max_per_task above 55 requires allow_cap_override");
    if (referee_backends.size() != 3)
        throw ConfigError("referee panel must have exactly 3 backends, got " +
                          std::to_string(referee_backends.size()));
    if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
    if (failure_ceiling < 0 || failure_ceiling > 1)
        throw ConfigError("failure_ceiling must be in [0,1]");
    if (expansion_rounds < 0) throw ConfigError("expansion_rounds must be >= 0");
    if (expansion_max_level < 1 || expansion_max_level > 3)
        throw ConfigError("expansion_max_level must be 1..3");
    for (const auto& [id, spec] : backends) {
        if (spec.type != "mock" && spec.type != "http")
            throw ConfigError("backend " + id + " has unknown type " + spec.type);
        if (spec.type == "http" && spec.base_url.empty())
            throw ConfigError("http backend " + id + " needs base_url");
    }
}

std::string RunConfig::config_hash() const {
    std::string canonical;
    for (const auto& [key, value] : raw_entries_) {
        // paths do not change run semantics; keep them out of the hash so a
        // relocated checkout can resume its ledger
        if (key == "workdir" || key == "out_dir" || key == "mock_call_log") continue;
        canonical += key + "=" + value + "\n";
    }
    return hash::sha256_hex(canonical).substr(0, 16);
}

}  // namespace taskforge
