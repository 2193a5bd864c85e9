#include "wr/image.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

namespace wr::img {

namespace {

// ---------------------------------------------------------------------------
// PPM (P6)
// ---------------------------------------------------------------------------

struct ByteCursor {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    bool eof() const { return pos >= bytes.size(); }
    std::uint8_t peek() const {
        if (eof()) throw FormatError("ppm: unexpected end of data", pos);
        return bytes[pos];
    }
    std::uint8_t take() {
        const std::uint8_t b = peek();
        ++pos;
        return b;
    }
};

bool is_ppm_space(std::uint8_t b) {
    return b == ' ' || b == '\t' || b == '\r' || b == '\n' || b == '\f' || b == '\v';
}

// Skips whitespace and '#' comments (comment runs to end of line).
void skip_ppm_separators(ByteCursor& cur) {
    for (;;) {
        while (!cur.eof() && is_ppm_space(cur.peek())) cur.take();
        if (!cur.eof() && cur.peek() == '#') {
            while (!cur.eof() && cur.take() != '\n') {
            }
            continue;
        }
        return;
    }
}

std::int64_t read_ppm_int(ByteCursor& cur, const char* what) {
    skip_ppm_separators(cur);
    if (cur.eof() || cur.peek() < '0' || cur.peek() > '9')
        throw FormatError(std::string("ppm: expected ") + what, cur.pos);
    std::int64_t v = 0;
    while (!cur.eof() && cur.peek() >= '0' && cur.peek() <= '9') {
        v = v * 10 + (cur.take() - '0');
        if (v > (std::int64_t{1} << 31))
            throw FormatError(std::string("ppm: ") + what + " out of range", cur.pos);
    }
    return v;
}

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

std::uint32_t read_u32be(const std::vector<std::uint8_t>& b, std::size_t pos) {
    return (std::uint32_t(b[pos]) << 24) | (std::uint32_t(b[pos + 1]) << 16) |
           (std::uint32_t(b[pos + 2]) << 8) | std::uint32_t(b[pos + 3]);
}

void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& payload) {
    put_u32be(out, static_cast<std::uint32_t>(payload.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uLong crc = crc32(crc32(0L, Z_NULL, 0), out.data() + crc_start,
                            static_cast<uInt>(out.size() - crc_start));
    put_u32be(out, static_cast<std::uint32_t>(crc));
}

int paeth_predict(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

// In-place defilter of one scanline given the previous (already defiltered) one.
void defilter_row(std::uint8_t filter, std::uint8_t* row, const std::uint8_t* prev,
                  std::int64_t len, std::int64_t bpp, std::size_t row_offset) {
    switch (filter) {
        case 0:
            break;
        case 1:  // Sub
            for (std::int64_t i = bpp; i < len; ++i)
                row[i] = static_cast<std::uint8_t>(row[i] + row[i - bpp]);
            break;
        case 2:  // Up
            if (prev)
                for (std::int64_t i = 0; i < len; ++i)
                    row[i] = static_cast<std::uint8_t>(row[i] + prev[i]);
            break;
        case 3:  // Average
            for (std::int64_t i = 0; i < len; ++i) {
                const int left = i >= bpp ? row[i - bpp] : 0;
                const int up = prev ? prev[i] : 0;
                row[i] = static_cast<std::uint8_t>(row[i] + ((left + up) >> 1));
            }
            break;
        case 4:  // Paeth
            for (std::int64_t i = 0; i < len; ++i) {
                const int left = i >= bpp ? row[i - bpp] : 0;
                const int up = prev ? prev[i] : 0;
                const int ul = (prev && i >= bpp) ? prev[i - bpp] : 0;
                row[i] = static_cast<std::uint8_t>(row[i] + paeth_predict(left, up, ul));
            }
            break;
        default:
            throw FormatError("png: unknown scanline filter " + std::to_string(filter),
                              row_offset);
    }
}

}  // namespace

ImageU8 decode_ppm(const std::vector<std::uint8_t>& bytes) {
    ByteCursor cur{bytes};
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
        throw FormatError("ppm: missing P6 magic", 0);
    cur.pos = 2;
    const std::int64_t w = read_ppm_int(cur, "width");
    const std::int64_t h = read_ppm_int(cur, "height");
    const std::int64_t maxval = read_ppm_int(cur, "maxval");
    if (w <= 0 || h <= 0) throw FormatError("ppm: non-positive dimensions", cur.pos);
    if (maxval <= 0 || maxval > 255)
        throw FormatError("ppm: unsupported maxval " + std::to_string(maxval), cur.pos);
    if (cur.eof() || !is_ppm_space(cur.peek()))
        throw FormatError("ppm: expected single whitespace before pixel data", cur.pos);
    cur.take();
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
    if (bytes.size() - cur.pos < need)
        throw FormatError("ppm: truncated pixel data", bytes.size());
    ImageU8 img;
    img.h = h;
    img.w = w;
    img.c = 3;
    img.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(cur.pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(cur.pos + need));
    if (maxval != 255)
        for (auto& v : img.data)
            v = static_cast<std::uint8_t>((v * 255 + maxval / 2) / maxval);
    return img;
}

std::vector<std::uint8_t> encode_ppm(const ImageU8& img) {
    if (img.c != 3) throw ArgumentError("encode_ppm: requires 3-channel image");
    if (img.h <= 0 || img.w <= 0) throw ArgumentError("encode_ppm: empty image");
    const std::string header =
        "P6\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.data.begin(), img.data.end());
    return out;
}

ImageU8 decode_png(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0)
        throw FormatError("png: missing signature", 0);

    std::size_t pos = 8;
    bool saw_ihdr = false, saw_iend = false;
    std::int64_t w = 0, h = 0, bpp = 0;
    std::vector<std::uint8_t> idat;

    while (!saw_iend) {
        if (bytes.size() - pos < 12) throw FormatError("png: truncated chunk", pos);
        const std::uint32_t len = read_u32be(bytes, pos);
        if (bytes.size() - pos < 12 + static_cast<std::size_t>(len))
            throw FormatError("png: chunk length exceeds data", pos);
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const uLong crc_calc = crc32(crc32(0L, Z_NULL, 0), bytes.data() + pos + 4, len + 4);
        const std::uint32_t crc_stored = read_u32be(bytes, pos + 8 + len);
        if (static_cast<std::uint32_t>(crc_calc) != crc_stored)
            throw FormatError("png: chunk CRC mismatch", pos + 8 + len);
        const std::uint8_t* payload = bytes.data() + pos + 8;

        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw FormatError("png: bad IHDR length", pos);
            w = read_u32be(bytes, pos + 8);
            h = read_u32be(bytes, pos + 12);
            const std::uint8_t depth = payload[8], color = payload[9], comp = payload[10],
                               filt = payload[11], inter = payload[12];
            if (w <= 0 || h <= 0) throw FormatError("png: non-positive dimensions", pos + 8);
            if (depth != 8)
                throw FormatError("png: unsupported bit depth " + std::to_string(depth),
                                  pos + 16);
            if (color != 2 && color != 6)
                throw FormatError("png: unsupported color type " + std::to_string(color),
                                  pos + 17);
            if (comp != 0 || filt != 0)
                throw FormatError("png: unsupported compression/filter method", pos + 18);
            if (inter != 0) throw FormatError("png: interlaced images not supported", pos + 20);
            bpp = color == 2 ? 3 : 4;
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            if (!saw_ihdr) throw FormatError("png: IDAT before IHDR", pos);
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
        }
        // Ancillary chunks pass through unexamined once their CRC checks out.
        pos += 12 + len;
    }
    if (!saw_ihdr) throw FormatError("png: missing IHDR", 8);
    if (idat.empty()) throw FormatError("png: missing IDAT", pos);

    const std::int64_t stride = w * bpp;
    const std::size_t raw_size = static_cast<std::size_t>(h) * (1 + stride);
    std::vector<std::uint8_t> raw(raw_size);
    uLongf dest_len = static_cast<uLongf>(raw_size);
    const int zret = uncompress(raw.data(), &dest_len, idat.data(),
                                static_cast<uLong>(idat.size()));
    if (zret != Z_OK || dest_len != raw_size)
        throw FormatError("png: IDAT inflate failed (zlib " + std::to_string(zret) + ")", pos);

    ImageU8 img;
    img.h = h;
    img.w = w;
    img.c = bpp;
    img.data.resize(static_cast<std::size_t>(h) * stride);
    const std::uint8_t* prev = nullptr;
    for (std::int64_t y = 0; y < h; ++y) {
        const std::uint8_t filter = raw[static_cast<std::size_t>(y) * (1 + stride)];
        std::uint8_t* row = img.data.data() + y * stride;
        std::memcpy(row, raw.data() + static_cast<std::size_t>(y) * (1 + stride) + 1,
                    static_cast<std::size_t>(stride));
        defilter_row(filter, row, prev, stride, bpp,
                     static_cast<std::size_t>(y) * (1 + stride));
        prev = row;
    }
    return img;
}

std::vector<std::uint8_t> encode_png(const ImageU8& img) {
    if (img.c != 3 && img.c != 4) throw ArgumentError("encode_png: requires RGB or RGBA");
    if (img.h <= 0 || img.w <= 0) throw ArgumentError("encode_png: empty image");
    const std::int64_t stride = img.w * img.c;

    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(img.h) * (1 + stride));
    for (std::int64_t y = 0; y < img.h; ++y) {
        raw.push_back(0);  // filter: none
        raw.insert(raw.end(), img.data.begin() + y * stride,
                   img.data.begin() + (y + 1) * stride);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                  Z_DEFAULT_COMPRESSION) != Z_OK)
        throw Error("encode_png: deflate failed");
    compressed.resize(bound);

    std::vector<std::uint8_t> ihdr;
    put_u32be(ihdr, static_cast<std::uint32_t>(img.w));
    put_u32be(ihdr, static_cast<std::uint32_t>(img.h));
    ihdr.push_back(8);                                      // bit depth
    ihdr.push_back(img.c == 3 ? std::uint8_t{2} : std::uint8_t{6});  // color type
    ihdr.push_back(0);                                      // compression
    ihdr.push_back(0);                                      // filter
    ihdr.push_back(0);                                      // interlace

    std::vector<std::uint8_t> out(kPngSig, kPngSig + 8);
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", compressed);
    append_chunk(out, "IEND", {});
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    if (f.bad()) throw Error("read failed: " + path);
    return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open file for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("write failed: " + path);
}

ImageU8 read_image(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0)
        return decode_png(bytes);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
    throw FormatError(path + ": not a PPM (P6) or PNG file", 0);
}

void write_image(const std::string& path, const ImageU8& img) {
    const auto dot = path.find_last_of('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    if (ext == ".ppm")
        write_file_bytes(path, encode_ppm(img));
    else if (ext == ".png")
        write_file_bytes(path, encode_png(img));
    else
        throw ArgumentError("write_image: unsupported extension '" + ext +
                            "' (use .ppm or .png)");
}

}  // namespace wr::img
