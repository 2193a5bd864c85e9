#include "wr/train.hpp"

#include <sstream>

namespace wr::train {

std::vector<ScheduleSegment> parse_schedule(const std::string& text) {
    std::vector<ScheduleSegment> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        ScheduleSegment seg;
        long long start = 0, batch = 0, crop = 0;
        char c1 = 0, c2 = 0, trail = 0;
        std::stringstream ps(part);
        if (!(ps >> start >> c1 >> batch >> c2 >> crop) || c1 != ':' || c2 != ':' ||
            (ps >> trail))
            throw ConfigError("schedule: expected start:batch:crop, got '" + part + "'");
        seg.start_iteration = start;
        seg.batch = batch;
        seg.crop = crop;
        if (seg.batch < 1) throw ConfigError("schedule: batch must be >= 1");
        if (seg.crop < 8 || seg.crop % 8 != 0)
            throw ConfigError("schedule: crop must be a positive multiple of 8");
        out.push_back(seg);
    }
    if (out.empty()) throw ConfigError("schedule: empty");
    if (out.front().start_iteration != 0)
        throw ConfigError("schedule: first segment must start at 0");
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i].start_iteration <= out[i - 1].start_iteration)
            throw ConfigError("schedule: starts must strictly increase");
    return out;
}

std::string format_schedule(const std::vector<ScheduleSegment>& segments) {
    std::string out;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(segments[i].start_iteration) + ':' +
               std::to_string(segments[i].batch) + ':' +
               std::to_string(segments[i].crop);
    }
    return out;
}

}  // namespace wr::train
