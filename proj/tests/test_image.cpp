#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "wr/image.hpp"
#include "wr/rng.hpp"

using wr::img::ImageU8;

namespace {

ImageU8 noise_image(std::int64_t h, std::int64_t w, std::int64_t c, std::uint64_t seed) {
    wr::Rng rng(seed);
    ImageU8 img;
    img.h = h;
    img.w = w;
    img.c = c;
    img.data.resize(static_cast<std::size_t>(img.numel()));
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    return img;
}

bool same_pixels(const ImageU8& a, const ImageU8& b) {
    return a.h == b.h && a.w == b.w && a.c == b.c && a.data == b.data;
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
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uLong crc = crc32(crc32(0L, Z_NULL, 0), out.data() + start,
                            static_cast<uInt>(out.size() - start));
    put_u32be(out, static_cast<std::uint32_t>(crc));
}

// Minimal hand-built PNG whose IHDR fields the caller controls.
std::vector<std::uint8_t> craft_png(std::uint8_t depth, std::uint8_t color,
                                    std::uint8_t interlace) {
    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<std::uint8_t> ihdr;
    put_u32be(ihdr, 1);
    put_u32be(ihdr, 1);
    ihdr.push_back(depth);
    ihdr.push_back(color);
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(interlace);

    std::vector<std::uint8_t> raw = {0, 1, 2, 3};  // filter byte + one RGB pixel
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> idat(bound);
    REQUIRE(compress2(idat.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                      Z_DEFAULT_COMPRESSION) == Z_OK);
    idat.resize(bound);

    std::vector<std::uint8_t> out(sig, sig + 8);
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", idat);
    append_chunk(out, "IEND", {});
    return out;
}

}  // namespace

TEST_CASE("ppm round trip is exact") {
    const auto img = noise_image(7, 5, 3, 1);
    const auto bytes = wr::img::encode_ppm(img);
    const auto back = wr::img::decode_ppm(bytes);
    CHECK(same_pixels(img, back));
}

TEST_CASE("ppm header parsing") {
    const std::string text = "P6 # trailing comment\n# full line comment\n 2\t1 \n255\n";
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    const std::uint8_t px[6] = {1, 2, 3, 4, 5, 6};
    bytes.insert(bytes.end(), px, px + 6);
    const auto img = wr::img::decode_ppm(bytes);
    CHECK(img.w == 2);
    CHECK(img.h == 1);
    CHECK(img.data[0] == 1);
    CHECK(img.data[5] == 6);
}

TEST_CASE("ppm maxval below 255 rescales") {
    const std::string text = "P6\n1 1\n100\n";
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    bytes.push_back(100);  // full scale
    bytes.push_back(50);   // half scale
    bytes.push_back(0);
    const auto img = wr::img::decode_ppm(bytes);
    CHECK(img.data[0] == 255);
    CHECK(img.data[1] == 128);  // round(50*255/100)
    CHECK(img.data[2] == 0);
}

TEST_CASE("ppm format errors carry byte offsets") {
    std::vector<std::uint8_t> bad = {'P', '5', '\n'};
    CHECK_THROWS_AS(wr::img::decode_ppm(bad), wr::FormatError);

    const std::string big = "P6\n2 2\n65535\n";
    std::vector<std::uint8_t> bytes(big.begin(), big.end());
    CHECK_THROWS_AS(wr::img::decode_ppm(bytes), wr::FormatError);

    const std::string trunc = "P6\n4 4\n255\nxy";
    std::vector<std::uint8_t> tb(trunc.begin(), trunc.end());
    try {
        wr::img::decode_ppm(tb);
        FAIL("expected FormatError");
    } catch (const wr::FormatError& e) {
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
}

TEST_CASE("png round trip rgb and rgba") {
    for (std::int64_t c : {3, 4}) {
        const auto img = noise_image(9, 4, c, 2 + static_cast<std::uint64_t>(c));
        const auto bytes = wr::img::encode_png(img);
        const auto back = wr::img::decode_png(bytes);
        CHECK(same_pixels(img, back));
    }
}

TEST_CASE("png decoder handles all scanline filters") {
    // Exercise Sub/Up/Average/Paeth by crafting rows with each filter applied
    // to a known gradient image.
    const std::int64_t w = 4, h = 5, bpp = 3;
    ImageU8 img;
    img.h = h;
    img.w = w;
    img.c = bpp;
    img.data.resize(static_cast<std::size_t>(h * w * bpp));
    for (std::int64_t i = 0; i < h * w * bpp; ++i)
        img.data[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>((i * 7) & 0xff);

    auto paeth = [](int a, int b, int c) {
        const int p = a + b - c;
        const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
        if (pa <= pb && pa <= pc) return a;
        if (pb <= pc) return b;
        return c;
    };

    std::vector<std::uint8_t> raw;
    const std::int64_t stride = w * bpp;
    for (std::int64_t y = 0; y < h; ++y) {
        const std::uint8_t filter = static_cast<std::uint8_t>(y % 5);
        raw.push_back(filter);
        const std::uint8_t* row = img.data.data() + y * stride;
        const std::uint8_t* prev = y > 0 ? img.data.data() + (y - 1) * stride : nullptr;
        for (std::int64_t i = 0; i < stride; ++i) {
            const int left = i >= bpp ? row[i - bpp] : 0;
            const int up = prev ? prev[i] : 0;
            const int ul = (prev && i >= bpp) ? prev[i - bpp] : 0;
            int pred = 0;
            switch (filter) {
                case 1: pred = left; break;
                case 2: pred = up; break;
                case 3: pred = (left + up) >> 1; break;
                case 4: pred = paeth(left, up, ul); break;
                default: break;
            }
            raw.push_back(static_cast<std::uint8_t>(row[i] - pred));
        }
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> idat(bound);
    REQUIRE(compress2(idat.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                      Z_DEFAULT_COMPRESSION) == Z_OK);
    idat.resize(bound);

    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<std::uint8_t> ihdr;
    put_u32be(ihdr, static_cast<std::uint32_t>(w));
    put_u32be(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);
    ihdr.push_back(2);
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    std::vector<std::uint8_t> bytes(sig, sig + 8);
    append_chunk(bytes, "IHDR", ihdr);
    append_chunk(bytes, "IDAT", idat);
    append_chunk(bytes, "IEND", {});

    const auto back = wr::img::decode_png(bytes);
    CHECK(same_pixels(img, back));
}

TEST_CASE("png rejects corruption and unsupported variants") {
    auto bytes = wr::img::encode_png(noise_image(4, 4, 3, 5));

    auto corrupted = bytes;
    corrupted[bytes.size() / 2] ^= 0x40;  // flip a bit inside a chunk payload
    CHECK_THROWS_AS(wr::img::decode_png(corrupted), wr::FormatError);

    auto truncated = bytes;
    truncated.resize(truncated.size() - 6);
    CHECK_THROWS_AS(wr::img::decode_png(truncated), wr::FormatError);

    std::vector<std::uint8_t> nosig = {1, 2, 3};
    CHECK_THROWS_AS(wr::img::decode_png(nosig), wr::FormatError);

    CHECK_THROWS_AS(wr::img::decode_png(craft_png(16, 2, 0)), wr::FormatError);  // 16-bit
    CHECK_THROWS_AS(wr::img::decode_png(craft_png(8, 3, 0)), wr::FormatError);   // palette
    CHECK_THROWS_AS(wr::img::decode_png(craft_png(8, 0, 0)), wr::FormatError);   // grayscale
    CHECK_THROWS_AS(wr::img::decode_png(craft_png(8, 2, 1)), wr::FormatError);   // interlaced
}

TEST_CASE("tensor conversion round trips u8 exactly") {
    const auto img = noise_image(6, 3, 3, 6);
    const auto t = wr::img::to_tensor<double>(img);
    REQUIRE(t.shape() == wr::Shape4{1, 3, 6, 3});
    CHECK(t.data()[0] == doctest::Approx(img.data[0] / 255.0));
    const auto back = wr::img::from_tensor<double>(t);
    CHECK(same_pixels(img, back));

    // alpha is dropped on conversion
    const auto rgba = noise_image(2, 2, 4, 7);
    const auto t4 = wr::img::to_tensor<float>(rgba);
    CHECK(t4.shape().c == 3);
    CHECK(t4.at(0, 0, 1, 1) == doctest::Approx(rgba.data[3 * 4 + 0] / 255.0f));

    // out-of-range values clamp
    wr::Tensor4<double> hot(wr::Shape4{1, 3, 1, 1}, {2.0, -1.0, 0.5});
    const auto cl = wr::img::from_tensor<double>(hot);
    CHECK(cl.data[0] == 255);
    CHECK(cl.data[1] == 0);
    CHECK(cl.data[2] == 128);
}

TEST_CASE("file io dispatches by extension and sniffs by magic") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "wr_image_test";
    fs::create_directories(dir);
    const auto img = noise_image(5, 8, 3, 8);

    const auto ppm_path = (dir / "a.ppm").string();
    const auto png_path = (dir / "a.png").string();
    wr::img::write_image(ppm_path, img);
    wr::img::write_image(png_path, img);
    CHECK(same_pixels(wr::img::read_image(ppm_path), img));
    CHECK(same_pixels(wr::img::read_image(png_path), img));

    // magic sniffing, not extension: a PNG stored with a .ppm name still reads
    const auto sneaky = (dir / "sneaky.ppm").string();
    wr::img::write_file_bytes(sneaky, wr::img::encode_png(img));
    CHECK(same_pixels(wr::img::read_image(sneaky), img));

    CHECK_THROWS_AS(wr::img::write_image((dir / "a.bmp").string(), img), wr::ArgumentError);
    CHECK_THROWS_AS(wr::img::read_image((dir / "missing.ppm").string()), wr::Error);

    const auto garbage = (dir / "garbage.bin").string();
    wr::img::write_file_bytes(garbage, {0, 1, 2, 3, 4, 5, 6, 7, 8});
    CHECK_THROWS_AS(wr::img::read_image(garbage), wr::FormatError);

    fs::remove_all(dir);
}
