#include "wr/dataset.hpp"

#include <filesystem>

namespace wr::data {

namespace fs = std::filesystem;

namespace {

bool is_image_name(const fs::path& p) {
    const std::string ext = p.extension().string();
    return ext == ".ppm" || ext == ".png";
}

}  // namespace

std::vector<DatasetEntry> scan_dataset(const std::string& dir) {
    const fs::path clean_dir = fs::path(dir) / "clean";
    if (!fs::is_directory(clean_dir))
        throw ArgumentError("dataset: missing directory " + clean_dir.string());
    std::vector<fs::path> names;
    for (const auto& e : fs::directory_iterator(clean_dir))
        if (e.is_regular_file() && is_image_name(e.path()))
            names.push_back(e.path().filename());
    if (names.empty())
        throw ArgumentError("dataset: no .ppm/.png images in " + clean_dir.string());
    std::sort(names.begin(), names.end());

    const fs::path degraded_dir = fs::path(dir) / "degraded";
    std::vector<DatasetEntry> out;
    out.reserve(names.size());
    for (const auto& name : names) {
        DatasetEntry e;
        e.clean_path = (clean_dir / name).string();
        const fs::path candidate = degraded_dir / name;
        if (fs::is_regular_file(candidate)) e.degraded_path = candidate.string();
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace wr::data
