#include "wr/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace wr::ckpt {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

constexpr char kMagic[4] = {'W', 'R', 'M', 'V'};

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    const std::string& path;
    std::size_t pos = 0;
    std::size_t limit;  // records must not read into the checksum trailer

    Reader(const std::vector<std::uint8_t>& b, const std::string& p)
        : bytes(b), path(p), limit(b.size()) {}

    void need(std::size_t n, const char* what) const {
        if (limit - pos < n) throw FormatError(path + ": truncated " + what, pos);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return bytes[pos++];
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v;
        std::memcpy(&v, bytes.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v;
        std::memcpy(&v, bytes.data() + pos, 8);
        pos += 8;
        return v;
    }
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    const std::size_t at = out.size();
    out.resize(at + 4);
    std::memcpy(out.data() + at, &v, 4);
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    const std::size_t at = out.size();
    out.resize(at + 8);
    std::memcpy(out.data() + at, &v, 8);
}

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
    uLong crc = crc32(0L, Z_NULL, 0);
    while (n > 0) {
        const std::size_t chunk = std::min<std::size_t>(n, 1u << 30);
        crc = crc32(crc, data, static_cast<uInt>(chunk));
        data += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace

Archive read_archive(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open checkpoint: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    if (f.bad()) throw Error("read failed: " + path);

    Reader r{bytes, path};
    r.need(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FormatError(path + ": bad magic", 0);
    r.pos = 4;
    const std::uint32_t version = r.u32("version");
    if (version != kVersion)
        throw FormatError(path + ": unsupported version " + std::to_string(version), 4);

    if (bytes.size() < r.pos + 4)
        throw FormatError(path + ": truncated checksum trailer", bytes.size());
    const std::size_t body = bytes.size() - 4;
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + body, 4);
    if (stored != crc_of(bytes.data(), body))
        throw FormatError(path + ": checksum mismatch, file is corrupted", body);
    r.limit = body;

    Archive a;
    const std::uint64_t cfg_len = r.u64("config length");
    if (cfg_len > r.limit - r.pos)
        throw FormatError(path + ": config length exceeds file size", r.pos - 8);
    a.config.assign(reinterpret_cast<const char*>(bytes.data() + r.pos),
                    static_cast<std::size_t>(cfg_len));
    r.pos += static_cast<std::size_t>(cfg_len);

    while (r.pos < r.limit) {
        const std::size_t rec_start = r.pos;
        const std::uint32_t name_len = r.u32("tensor name length");
        if (name_len == 0 || name_len > 4096)
            throw FormatError(path + ": implausible tensor name length", rec_start);
        r.need(name_len, "tensor name");
        std::string name(reinterpret_cast<const char*>(bytes.data() + r.pos), name_len);
        r.pos += name_len;

        TensorRecord rec;
        rec.dtype = r.u8("dtype tag");
        if (rec.dtype > 1)
            throw FormatError(path + ": unknown dtype tag " + std::to_string(rec.dtype),
                              r.pos - 1);
        std::int64_t dims[4];
        for (auto& d : dims) {
            d = r.u32("shape");
            if (d <= 0) throw FormatError(path + ": non-positive shape extent", r.pos - 4);
        }
        rec.shape = Shape4{dims[0], dims[1], dims[2], dims[3]};
        const std::size_t payload =
            static_cast<std::size_t>(rec.shape.numel()) * (rec.dtype == 0 ? 4 : 8);
        r.need(payload, "tensor payload");
        rec.raw.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos),
                       bytes.begin() + static_cast<std::ptrdiff_t>(r.pos + payload));
        r.pos += payload;
        a.tensors.emplace_back(std::move(name), std::move(rec));
    }
    return a;
}

void write_archive(const std::string& path, const Archive& archive) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kVersion);
    put_u64(out, archive.config.size());
    out.insert(out.end(), archive.config.begin(), archive.config.end());
    for (const auto& [name, rec] : archive.tensors) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        out.push_back(rec.dtype);
        put_u32(out, static_cast<std::uint32_t>(rec.shape.b));
        put_u32(out, static_cast<std::uint32_t>(rec.shape.c));
        put_u32(out, static_cast<std::uint32_t>(rec.shape.h));
        put_u32(out, static_cast<std::uint32_t>(rec.shape.w));
        out.insert(out.end(), rec.raw.begin(), rec.raw.end());
    }
    put_u32(out, crc_of(out.data(), out.size()));

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot open for writing: " + tmp);
        f.write(reinterpret_cast<const char*>(out.data()),
                static_cast<std::streamsize>(out.size()));
        if (!f) throw Error("write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error("rename " + tmp + " -> " + path + " failed: " + ec.message());
}

}  // namespace wr::ckpt
