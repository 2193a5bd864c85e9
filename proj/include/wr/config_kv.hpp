#pragma once

// Flat key=value configuration text: one pair per line, '#' comments, no
// sections. Parsers consume the keys they own from the map; whatever remains
// unclaimed at the end is a configuration error surfaced to the user.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace wr::cfg {

using KvMap = std::map<std::string, std::string>;

// Throws FormatError on malformed lines, ConfigError on duplicate keys.
KvMap parse_kv_text(const std::string& text);

// Typed extraction; each consumes (erases) the key when present and leaves the
// supplied default otherwise. Conversion failures throw ConfigError.
bool take_bool(KvMap& kv, const std::string& key, bool def);
std::int64_t take_int(KvMap& kv, const std::string& key, std::int64_t def);
double take_double(KvMap& kv, const std::string& key, double def);
std::string take_string(KvMap& kv, const std::string& key, const std::string& def);
std::vector<std::int64_t> take_int_list(KvMap& kv, const std::string& key,
                                        const std::vector<std::int64_t>& def);

// Throws ConfigError naming every leftover key; no-op on an empty map.
void reject_unknown(const KvMap& kv, const std::string& context);

// Formatting helpers shared by canonical serializers.
std::string format_double(double v);  // shortest round-trip decimal
std::string format_int_list(const std::vector<std::int64_t>& v);

}  // namespace wr::cfg
