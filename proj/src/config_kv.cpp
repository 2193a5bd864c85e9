#include "wr/config_kv.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "wr/errors.hpp"

namespace wr::cfg {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

KvMap parse_kv_text(const std::string& text) {
    KvMap kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw FormatError("config line " + std::to_string(lineno) +
                              ": expected key=value, got '" + t + "'");
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        if (key.empty())
            throw FormatError("config line " + std::to_string(lineno) + ": empty key");
        if (kv.count(key))
            throw ConfigError("duplicate config key '" + key + "'");
        kv[key] = val;
    }
    return kv;
}

bool take_bool(KvMap& kv, const std::string& key, bool def) {
    const auto it = kv.find(key);
    if (it == kv.end()) return def;
    const std::string v = it->second;
    kv.erase(it);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

std::int64_t take_int(KvMap& kv, const std::string& key, std::int64_t def) {
    const auto it = kv.find(key);
    if (it == kv.end()) return def;
    const std::string v = it->second;
    kv.erase(it);
    errno = 0;
    char* end = nullptr;
    const long long r = std::strtoll(v.c_str(), &end, 10);
    if (errno != 0 || end == v.c_str() || *end != '\0')
        throw ConfigError("key '" + key + "': expected integer, got '" + v + "'");
    return static_cast<std::int64_t>(r);
}

double take_double(KvMap& kv, const std::string& key, double def) {
    const auto it = kv.find(key);
    if (it == kv.end()) return def;
    const std::string v = it->second;
    kv.erase(it);
    errno = 0;
    char* end = nullptr;
    const double r = std::strtod(v.c_str(), &end);
    if (errno != 0 || end == v.c_str() || *end != '\0')
        throw ConfigError("key '" + key + "': expected number, got '" + v + "'");
    return r;
}

std::string take_string(KvMap& kv, const std::string& key, const std::string& def) {
    const auto it = kv.find(key);
    if (it == kv.end()) return def;
    const std::string v = it->second;
    kv.erase(it);
    return v;
}

std::vector<std::int64_t> take_int_list(KvMap& kv, const std::string& key,
                                        const std::vector<std::int64_t>& def) {
    const auto it = kv.find(key);
    if (it == kv.end()) return def;
    const std::string v = it->second;
    kv.erase(it);
    std::vector<std::int64_t> out;
    std::size_t start = 0;
    while (start <= v.size()) {
        const auto comma = v.find(',', start);
        const std::string tok = v.substr(start, comma == std::string::npos ? std::string::npos
                                                                           : comma - start);
        errno = 0;
        char* end = nullptr;
        const long long r = std::strtoll(tok.c_str(), &end, 10);
        if (errno != 0 || end == tok.c_str() || *end != '\0')
            throw ConfigError("key '" + key + "': bad integer list element '" + tok + "'");
        out.push_back(static_cast<std::int64_t>(r));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw ConfigError("key '" + key + "': empty list");
    return out;
}

void reject_unknown(const KvMap& kv, const std::string& context) {
    if (kv.empty()) return;
    std::string keys;
    for (const auto& [k, v] : kv) {
        if (!keys.empty()) keys += ", ";
        keys += k;
    }
    throw ConfigError(context + ": unknown key(s): " + keys);
}

std::string format_double(double v) {
    // Shortest decimal that parses back to the same double.
    for (int prec = 1; prec <= 17; ++prec) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) return buf;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string format_int_list(const std::vector<std::int64_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace wr::cfg
